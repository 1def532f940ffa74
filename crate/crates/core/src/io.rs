//! File formats.
//!
//! * Clustering: UTF-8 text, one `point_id<TAB>cluster_id` line per point.
//!   Point ids must cover `0..n` exactly once; order is free.
//! * Similarity matrix, binary: magic `SIMMAT01`, `n` as little-endian
//!   `u64`, then `n * n` little-endian `f64` values row-major.
//! * Similarity matrix, CSV: first row holds `n`, then `n` rows of `n`
//!   comma-separated values.
//! * Error report: `key=value` lines with the six field names.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::ErrorReport;
use crate::types::{Clustering, SimilarityMatrix};

pub const MATRIX_MAGIC: &[u8; 8] = b"SIMMAT01";

pub fn read_clustering(reader: impl Read) -> Result<Clustering> {
    let mut labels: Vec<Option<u64>> = Vec::new();
    for (lineno, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let lineno = lineno + 1;
        let mut fields = line.split('\t');
        let (Some(p), Some(c), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(Error::parse(lineno, "expected `point_id<TAB>cluster_id`"));
        };
        let p: usize = p.trim().parse().map_err(|_| Error::parse(lineno, format!("bad point id `{p}`")))?;
        let c: u64 = c.trim().parse().map_err(|_| Error::parse(lineno, format!("bad cluster id `{c}`")))?;
        if p >= labels.len() {
            labels.resize(p + 1, None);
        }
        if labels[p].replace(c).is_some() {
            return Err(Error::parse(lineno, format!("point {p} listed twice")));
        }
    }
    let labels = labels
        .into_iter()
        .enumerate()
        .map(|(p, l)| l.ok_or_else(|| Error::domain(format!("point ids are not dense: {p} is missing"))))
        .collect::<Result<Vec<_>>>()?;
    Ok(Clustering::from_labels(&labels))
}

pub fn write_clustering(c: &Clustering, mut w: impl Write) -> Result<()> {
    for (p, id) in c.assignment().iter().enumerate() {
        writeln!(w, "{p}\t{id}")?;
    }
    Ok(())
}

pub fn load_clustering(path: impl AsRef<Path>) -> Result<Clustering> {
    read_clustering(std::fs::File::open(path)?)
}

pub fn save_clustering(c: &Clustering, path: impl AsRef<Path>) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_clustering(c, &mut f)?;
    f.flush()?;
    Ok(())
}

/// Parses either matrix format, picking binary when the magic is present.
pub fn parse_matrix(bytes: &[u8]) -> Result<SimilarityMatrix> {
    if bytes.starts_with(MATRIX_MAGIC) {
        parse_matrix_binary(bytes)
    } else {
        let text = std::str::from_utf8(bytes).map_err(|_| Error::parse(1, "matrix is neither SIMMAT01 nor UTF-8 CSV"))?;
        parse_matrix_csv(text)
    }
}

fn parse_matrix_binary(bytes: &[u8]) -> Result<SimilarityMatrix> {
    let header = bytes.get(8..16).ok_or_else(|| Error::parse(1, "truncated SIMMAT01 header"))?;
    let n = u64::from_le_bytes(header.try_into().expect("8 bytes")) as usize;
    let body = &bytes[16..];
    let expected = n.checked_mul(n).and_then(|x| x.checked_mul(8)).ok_or_else(|| Error::parse(1, "matrix size overflows"))?;
    if body.len() != expected {
        return Err(Error::parse(1, format!("expected {expected} payload bytes for n={n}, got {}", body.len())));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    SimilarityMatrix::from_dense(n, values)
}

fn parse_matrix_csv(text: &str) -> Result<SimilarityMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = rdr.records();
    let header = records.next().ok_or_else(|| Error::parse(1, "empty matrix file"))?.map_err(|e| Error::parse(1, e.to_string()))?;
    let n: usize = header
        .get(0)
        .and_then(|f| f.parse().ok())
        .filter(|_| header.len() == 1)
        .ok_or_else(|| Error::parse(1, "first row must hold the point count `n`"))?;
    let mut values = Vec::with_capacity(n * n);
    for (row, rec) in records.enumerate() {
        let line = row + 2;
        let rec = rec.map_err(|e| Error::parse(line, e.to_string()))?;
        if rec.len() != n {
            return Err(Error::parse(line, format!("expected {n} values, got {}", rec.len())));
        }
        for f in rec.iter() {
            values.push(f.parse::<f64>().map_err(|_| Error::parse(line, format!("bad value `{f}`")))?);
        }
    }
    if values.len() != n * n {
        return Err(Error::parse(n + 1, format!("expected {n} rows, got {}", values.len() / n.max(1))));
    }
    SimilarityMatrix::from_dense(n, values)
}

pub fn write_matrix_binary(s: &SimilarityMatrix, mut w: impl Write) -> Result<()> {
    w.write_all(MATRIX_MAGIC)?;
    w.write_all(&(s.n() as u64).to_le_bytes())?;
    for v in s.as_slice() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_matrix_csv(s: &SimilarityMatrix, mut w: impl Write) -> Result<()> {
    writeln!(w, "{}", s.n())?;
    for i in 0..s.n() {
        let row: Vec<String> = s.row(i).iter().map(|v| format!("{v:?}")).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<SimilarityMatrix> {
    parse_matrix(&std::fs::read(path)?)
}

/// Writes binary unless the path ends in `.csv`.
pub fn save_matrix(s: &SimilarityMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        write_matrix_csv(s, &mut f)?;
    } else {
        write_matrix_binary(s, &mut f)?;
    }
    f.flush()?;
    Ok(())
}

pub fn format_error_report(r: &ErrorReport) -> String {
    format!(
        "delta_u={}\ndelta_o={}\ndelta={}\ndelta_cco={}\ndelta_ccu={}\ndelta_cc={}\n",
        r.delta_u, r.delta_o, r.delta, r.delta_cco, r.delta_ccu, r.delta_cc
    )
}

pub fn parse_error_report(text: &str) -> Result<ErrorReport> {
    let mut r = ErrorReport::default();
    let mut seen = 0u8;
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let (k, v) = line.split_once('=').ok_or_else(|| Error::parse(i + 1, "expected key=value"))?;
        let v: u64 = v.trim().parse().map_err(|_| Error::parse(i + 1, format!("bad count `{v}`")))?;
        let (slot, bit) = match k.trim() {
            "delta_u" => (&mut r.delta_u, 0),
            "delta_o" => (&mut r.delta_o, 1),
            "delta" => (&mut r.delta, 2),
            "delta_cco" => (&mut r.delta_cco, 3),
            "delta_ccu" => (&mut r.delta_ccu, 4),
            "delta_cc" => (&mut r.delta_cc, 5),
            other => return Err(Error::parse(i + 1, format!("unknown key `{other}`"))),
        };
        *slot = v;
        seen |= 1 << bit;
    }
    if seen != 0b11_1111 {
        return Err(Error::parse(0, "error report is missing fields"));
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn clustering_text_format() {
        let c = read_clustering("0\t7\n2\t3\n1\t7\n\n".as_bytes()).unwrap();
        assert_eq!(c.n(), 3);
        assert_eq!(c.canonical(), vec![vec![0, 1], vec![2]]);
        let mut out = Vec::new();
        write_clustering(&c, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "0\t7\n1\t7\n2\t3\n");
    }

    #[test]
    fn clustering_errors() {
        assert!(matches!(read_clustering("0 1\n".as_bytes()), Err(Error::Parse { line: 1, .. })));
        assert!(read_clustering("0\t1\n0\t2\n".as_bytes()).is_err());
        assert!(read_clustering("0\t1\n2\t1\n".as_bytes()).is_err());
        assert!(read_clustering("x\t1\n".as_bytes()).is_err());
    }

    #[test]
    fn matrix_csv_header_and_shape() {
        let m = parse_matrix(b"2\n1,0.25\n0.25,1\n").unwrap();
        assert_eq!(m.get(0, 1), 0.25);
        assert!(parse_matrix(b"2\n1,0.25\n").is_err());
        assert!(parse_matrix(b"2\n1,0.25,3\n0.25,1\n").is_err());
        assert!(parse_matrix(b"2,2\n1,0.25\n0.25,1\n").is_err());
        assert!(parse_matrix(b"SIMMAT01\x02\x00").is_err());
    }

    #[test]
    fn error_report_record() {
        let r = ErrorReport { delta_u: 3, delta_o: 1, delta: 4, delta_cco: 2, delta_ccu: 10, delta_cc: 12 };
        let text = format_error_report(&r);
        assert!(text.contains("delta_ccu=10"));
        assert_eq!(parse_error_report(&text).unwrap(), r);
        assert!(parse_error_report("delta_u=1\n").is_err());
    }

    proptest! {
        #[test]
        fn matrices_round_trip(n in 0usize..7, seed in any::<u64>()) {
            let s = SimilarityMatrix::from_fn(n, |i, j| ((seed.wrapping_mul(i as u64 + 1) ^ (j as u64 * 2654435761)) % 1000) as f64 / 997.0).unwrap();
            let mut bin = Vec::new();
            write_matrix_binary(&s, &mut bin).unwrap();
            prop_assert_eq!(&parse_matrix(&bin).unwrap(), &s);
            let mut csv = Vec::new();
            write_matrix_csv(&s, &mut csv).unwrap();
            prop_assert_eq!(&parse_matrix(&csv).unwrap(), &s);
        }

        #[test]
        fn clusterings_round_trip(labels in proptest::collection::vec(0u64..5, 1..30)) {
            let c = Clustering::from_labels(&labels);
            let mut out = Vec::new();
            write_clustering(&c, &mut out).unwrap();
            prop_assert_eq!(read_clustering(out.as_slice()).unwrap(), c);
        }
    }
}
