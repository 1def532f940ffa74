//! Experiment inputs: planted instances, perturbed starting clusterings,
//! outlier pruning and tf-idf document similarities.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Read};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{session_rng, STREAM_PERTURB, STREAM_PLANT};
use crate::types::{Clustering, PointId, SimilarityMatrix};

/// Parameters of a planted instance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantSpec {
    pub n: usize,
    pub k: usize,
    pub within: f64,
    pub across: f64,
    pub jitter: f64,
}

impl PlantSpec {
    pub fn new(n: usize, k: usize, within: f64, across: f64, jitter: f64) -> Self {
        PlantSpec { n, k, within, across, jitter }
    }
}

/// Random instance with `k` target clusters of at least two points each.
///
/// Cluster sizes start as even as possible (remainder to random clusters);
/// then each cluster hands a quarter of its points above two, one at a
/// time, to uniformly chosen other clusters. Labels are shuffled over the
/// points. Within-cluster similarities are uniform in
/// `within ± jitter`, cross-cluster ones in `across ± jitter`, so any
/// threshold in the gap separates the target.
pub fn plant_instance(spec: PlantSpec, seed: u64) -> Result<(SimilarityMatrix, Clustering)> {
    let PlantSpec { n, k, within, across, jitter } = spec;
    if !(jitter >= 0.0 && across - jitter >= 0.0 && within - jitter > across + jitter) {
        return Err(Error::domain(format!(
            "need within - jitter > across + jitter >= 0, got within={within} across={across} jitter={jitter}"
        )));
    }
    if k == 0 || n < 2 * k {
        return Err(Error::domain(format!("need k >= 1 and n >= 2k, got n={n} k={k}")));
    }
    let mut rng = session_rng(seed, STREAM_PLANT);
    let mut sizes = vec![n / k; k];
    let mut order: Vec<usize> = (0..k).collect();
    order.shuffle(&mut rng);
    for &i in &order[..n % k] {
        sizes[i] += 1;
    }
    if k > 1 {
        for i in 0..k {
            for _ in 0..(sizes[i] - 2) / 4 {
                let j = (i + rng.random_range(1..k)) % k;
                sizes[i] -= 1;
                sizes[j] += 1;
            }
        }
    }
    let mut labels: Vec<u64> = sizes.iter().enumerate().flat_map(|(l, &s)| std::iter::repeat_n(l as u64, s)).collect();
    labels.shuffle(&mut rng);
    let mut draw = |centre: f64| {
        if jitter > 0.0 {
            rng.random_range(centre - jitter..=centre + jitter)
        } else {
            centre
        }
    };
    let s = SimilarityMatrix::from_fn(n, |i, j| draw(if labels[i] == labels[j] { within } else { across }))?;
    Ok((s, Clustering::from_labels(&labels)))
}

/// Keeps each point's target label with probability `p_keep`, otherwise
/// moves it to one of the other target labels uniformly. Label groups
/// become the initial clusters, all impure; groups that end up empty vanish.
pub fn perturb(target: &Clustering, p_keep: f64, seed: u64) -> Result<Clustering> {
    if !(0.0..=1.0).contains(&p_keep) {
        return Err(Error::domain(format!("p_keep must lie in [0, 1], got {p_keep}")));
    }
    let labels: Vec<u64> = target.ids().map(|id| id.0).collect();
    if labels.len() < 2 && p_keep < 1.0 {
        return Err(Error::domain("perturbation needs at least two target clusters"));
    }
    let mut rng = session_rng(seed, STREAM_PERTURB);
    let out: Vec<u64> = target
        .assignment()
        .iter()
        .map(|own| {
            if rng.random_bool(p_keep) {
                own.0
            } else {
                let others: Vec<u64> = labels.iter().copied().filter(|&l| l != own.0).collect();
                others[rng.random_range(0..others.len())]
            }
        })
        .collect();
    Ok(Clustering::from_labels(&out))
}

/// Output of [`prune_outliers`].
#[derive(Clone, Debug)]
pub struct Pruned {
    pub s: SimilarityMatrix,
    pub target: Clustering,
    /// `kept[new_id]` is the point's id before pruning.
    pub kept: Vec<PointId>,
}

/// Removes `per_cluster` outliers from every target cluster, one at a time:
/// the point with the smallest sum of similarities to the rest of its
/// cluster (smallest id on ties), recomputing sums after each removal.
/// Survivors are renumbered densely in their original order.
pub fn prune_outliers(s: &SimilarityMatrix, target: &Clustering, per_cluster: usize) -> Result<Pruned> {
    if s.n() != target.n() {
        return Err(Error::domain(format!("matrix has {} points, target {}", s.n(), target.n())));
    }
    let mut removed = vec![false; s.n()];
    for cluster in target.clusters() {
        if cluster.len() <= per_cluster {
            return Err(Error::domain(format!(
                "target cluster {} has {} points; pruning {per_cluster} would empty it",
                cluster.id,
                cluster.len()
            )));
        }
        let mut alive = cluster.members().to_vec();
        let mut sums: Vec<f64> = alive.iter().map(|&x| alive.iter().filter(|&&y| y != x).map(|&y| s.get(x, y)).sum()).collect();
        for _ in 0..per_cluster {
            let idx = (0..alive.len())
                .min_by(|&a, &b| sums[a].total_cmp(&sums[b]).then(alive[a].cmp(&alive[b])))
                .expect("cluster is non-empty");
            let gone = alive.remove(idx);
            sums.remove(idx);
            for (x, sum) in alive.iter().zip(sums.iter_mut()) {
                *sum -= s.get(*x, gone);
            }
            removed[gone] = true;
        }
    }
    let kept: Vec<PointId> = (0..s.n()).filter(|&p| !removed[p]).collect();
    let labels: Vec<u64> = kept.iter().map(|&p| target.cluster_of(p).0).collect();
    Ok(Pruned {
        s: s.restrict(&kept),
        target: Clustering::from_labels(&labels),
        kept,
    })
}

/// Lowercases and splits on every non-alphanumeric character.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Cosine similarities of tf-idf vectors.
#[derive(Clone, Debug)]
pub struct Ingested {
    pub s: SimilarityMatrix,
    /// Documents whose vector is zero (no tokens, or only tokens present in
    /// every document); they have similarity 0 to all other documents.
    pub zero_documents: Vec<usize>,
}

/// Raw term counts times `ln(n_docs / doc_freq)`, L2-normalised; the
/// similarity is the dot product.
pub fn ingest_documents<S: AsRef<str>>(docs: &[Vec<S>]) -> Result<Ingested> {
    if docs.is_empty() {
        return Err(Error::domain("corpus is empty"));
    }
    let n = docs.len();
    let mut vocab: HashMap<&str, usize> = HashMap::new();
    let mut counts: Vec<BTreeMap<usize, f64>> = Vec::with_capacity(n);
    for doc in docs {
        let mut tf = BTreeMap::new();
        for tok in doc {
            let next = vocab.len();
            let t = *vocab.entry(tok.as_ref()).or_insert(next);
            *tf.entry(t).or_insert(0.0) += 1.0;
        }
        counts.push(tf);
    }
    let mut df = vec![0usize; vocab.len()];
    for tf in &counts {
        for &t in tf.keys() {
            df[t] += 1;
        }
    }
    let mut zero_documents = Vec::new();
    let vectors: Vec<Vec<(usize, f64)>> = counts
        .iter()
        .enumerate()
        .map(|(d, tf)| {
            let mut v: Vec<(usize, f64)> = tf
                .iter()
                .map(|(&t, &c)| (t, c * (n as f64 / df[t] as f64).ln()))
                .filter(|&(_, w)| w != 0.0)
                .collect();
            let norm = v.iter().map(|&(_, w)| w * w).sum::<f64>().sqrt();
            if norm == 0.0 {
                zero_documents.push(d);
                v.clear();
            }
            for (_, w) in &mut v {
                *w /= norm;
            }
            v
        })
        .collect();
    let dot = |a: &[(usize, f64)], b: &[(usize, f64)]| {
        let (mut i, mut j, mut sum) = (0, 0, 0.0);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    sum += a[i].1 * b[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        sum.clamp(0.0, 1.0)
    };
    let s = SimilarityMatrix::from_fn(n, |i, j| dot(&vectors[i], &vectors[j]))?;
    Ok(Ingested { s, zero_documents })
}

/// One corpus line: `{"id": ..., "label": ..., "text": ...}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: serde_json::Value,
    pub label: String,
    pub text: String,
}

pub fn read_corpus(reader: impl Read) -> Result<Vec<Document>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::parse(i + 1, e.to_string()))?);
    }
    Ok(out)
}

/// Tf-idf similarities plus the target given by the documents' labels
/// (label ids in order of first appearance).
pub fn ingest_corpus(docs: &[Document]) -> Result<(Ingested, Clustering)> {
    let tokens: Vec<Vec<String>> = docs.iter().map(|d| tokenize(&d.text)).collect();
    let ingested = ingest_documents(&tokens)?;
    let mut ids: HashMap<&str, u64> = HashMap::new();
    let labels: Vec<u64> = docs
        .iter()
        .map(|d| {
            let next = ids.len() as u64;
            *ids.entry(d.label.as_str()).or_insert(next)
        })
        .collect();
    Ok((ingested, Clustering::from_labels(&labels)))
}
