//! Simulation loop, bound audits, sweeps and curve export.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::datagen::{perturb, plant_instance, prune_outliers, PlantSpec};
use crate::edits::{apply, build_global_tree, EditContext, EditResult};
use crate::error::{Error, Result};
use crate::metrics::{error_report, ErrorReport};
use crate::model::{EditRequest, Model, ModelConfig, ModelWarning, TreeMode};
use crate::oracle::{next_request, session_rng, Interleave, STREAM_ORACLE};
use crate::types::{Clustering, SimilarityMatrix};

pub const DEFAULT_CAP: usize = 20_000;
/// Failure probability used when auditing the unrestricted-merge count.
pub const AUDIT_EPSILON: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub interleave: Interleave,
    pub cap: usize,
}

impl RunConfig {
    pub fn new(model: ModelConfig) -> Self {
        RunConfig { model, interleave: Interleave::Uniform, cap: DEFAULT_CAP }
    }
}

/// Where a run's inputs came from, for sweeps and curve export.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub model: Model,
    pub eta: f64,
    pub p_keep: f64,
    pub prune: usize,
    pub tree_mode: TreeMode,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub iteration: usize,
    pub request: EditRequest,
    pub result: EditResult,
    pub errors: ErrorReport,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Termination {
    Converged { iterations: usize },
    Capped { iterations: usize },
}

impl Termination {
    pub fn is_converged(self) -> bool {
        matches!(self, Termination::Converged { .. })
    }

    pub fn iterations(self) -> usize {
        match self {
            Termination::Converged { iterations } | Termination::Capped { iterations } => iterations,
        }
    }
}

/// One guarantee checked against a finished run. Audits report a ratio and
/// are not expected to hold exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub id: String,
    pub bound: f64,
    pub observed: f64,
    pub ok: bool,
    #[serde(default)]
    pub audit: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: RunConfig,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<Scenario>,
    pub n: usize,
    pub k: usize,
    pub warnings: Vec<ModelWarning>,
    pub initial: ErrorReport,
    pub steps: Vec<Step>,
    pub termination: Termination,
    pub bound_checks: Vec<BoundCheck>,
}

impl RunRecord {
    pub fn splits(&self) -> usize {
        self.steps.iter().filter(|s| s.request.is_split()).count()
    }

    pub fn merges(&self) -> usize {
        self.steps.len() - self.splits()
    }

    pub fn root_fallbacks(&self) -> usize {
        self.steps.iter().filter(|s| s.result.root_fallback).count()
    }

    /// Error reports from the initial clustering through every step.
    pub fn curve(&self) -> Vec<ErrorReport> {
        std::iter::once(self.initial).chain(self.steps.iter().map(|s| s.errors)).collect()
    }

    pub fn check(&self, id: &str) -> Option<&BoundCheck> {
        self.bound_checks.iter().find(|b| b.id == id)
    }
}

/// `log_{1/(1-eta)} n`, at least 1 (eta = 1 merges whole clusters).
fn log_base(eta: f64, n: usize) -> f64 {
    let base = 1.0 / (1.0 - eta);
    if base.is_finite() {
        ((n as f64).ln() / base.ln()).max(1.0)
    } else {
        1.0
    }
}

/// Whether both clusters of a merge lie inside one target cluster.
fn pure_merge(c: &Clustering, target: &Clustering, req: &EditRequest) -> Result<bool> {
    let EditRequest::Merge { first, second } = *req else {
        return Ok(false);
    };
    let label = target.cluster_of(c.get(first)?.members()[0]);
    Ok([first, second]
        .iter()
        .map(|&id| c.get(id))
        .collect::<Result<Vec<_>>>()?
        .iter()
        .all(|cl| cl.members().iter().all(|&p| target.cluster_of(p) == label)))
}

/// Clusters flagged pure that straddle target clusters.
fn unsound_pure(c: &Clustering, target: &Clustering) -> usize {
    c.clusters()
        .filter(|cl| cl.purity.is_pure())
        .filter(|cl| {
            let l = target.cluster_of(cl.members()[0]);
            cl.members().iter().any(|&p| target.cluster_of(p) != l)
        })
        .count()
}

/// Runs oracle requests against `initial` until it equals `target` or
/// `cfg.cap` edits have been applied, then audits the run.
pub fn run_session(
    s: &SimilarityMatrix,
    target: &Clustering,
    initial: &Clustering,
    cfg: &RunConfig,
    seed: u64,
) -> Result<RunRecord> {
    cfg.model.validate()?;
    initial.check_universe(target)?;
    if s.n() != target.n() {
        return Err(Error::domain(format!("matrix has {} points, target {}", s.n(), target.n())));
    }
    let tree = build_global_tree(s, &cfg.model)?;
    let ctx = EditContext { s, tree: tree.as_ref() };
    let mut rng = session_rng(seed, STREAM_ORACLE);
    let mut c = initial.clone();
    let init = error_report(&c, target)?;
    let mut steps = Vec::new();
    let mut tallies = Tallies::default();
    let mut prev = init;
    let termination = loop {
        if c.same_partition(target) {
            break Termination::Converged { iterations: steps.len() };
        }
        if steps.len() >= cfg.cap {
            break Termination::Capped { iterations: steps.len() };
        }
        let Some(request) = next_request(&c, target, &cfg.model, cfg.interleave, &mut rng)? else {
            return Err(Error::domain("no feasible edit although the clustering differs from the target"));
        };
        let pure = pure_merge(&c, target, &request)?;
        let result = apply(&mut c, &request, &cfg.model, ctx)?;
        let errors = error_report(&c, target)?;
        tallies.observe(&request, pure, &prev, &errors);
        tallies.unsound_pure += unsound_pure(&c, target);
        prev = errors;
        steps.push(Step { iteration: steps.len() + 1, request, result, errors });
    };
    let mut record = RunRecord {
        config: *cfg,
        seed,
        scenario: None,
        n: target.n(),
        k: target.len(),
        warnings: cfg.model.warnings(),
        initial: init,
        steps,
        termination,
        bound_checks: Vec::new(),
    };
    record.bound_checks = bound_checks(&record, &tallies);
    Ok(record)
}

#[derive(Default)]
struct Tallies {
    delta_o_increases: usize,
    impure_merges_without_progress: usize,
    cc_non_decreasing: usize,
    unsound_pure: usize,
}

impl Tallies {
    fn observe(&mut self, req: &EditRequest, pure: bool, before: &ErrorReport, after: &ErrorReport) {
        if after.delta_o > before.delta_o {
            self.delta_o_increases += 1;
        }
        if !req.is_split() && !pure && after.delta_u >= before.delta_u {
            self.impure_merges_without_progress += 1;
        }
        if after.delta_cc >= before.delta_cc {
            self.cc_non_decreasing += 1;
        }
    }
}

fn bound_checks(r: &RunRecord, t: &Tallies) -> Vec<BoundCheck> {
    let cfg = r.config.model;
    let (splits, merges) = (r.splits() as f64, r.merges() as f64);
    let delta_o = r.initial.delta_o as f64;
    let exact = |id: &str, bound: f64, observed: f64, ok: bool| BoundCheck {
        id: id.to_string(),
        bound,
        observed,
        ok,
        audit: false,
    };
    let mut out = vec![exact("splits", delta_o, splits, splits <= delta_o)];
    out.push(exact("pure_flags_sound", 0.0, t.unsound_pure as f64, t.unsound_pure == 0));
    match cfg.model {
        Model::EtaMerge => {
            let bound = 2.0 * (r.initial.delta_u as f64 + r.k as f64) * log_base(cfg.eta, r.n);
            out.push(exact("merges", bound, merges, merges <= bound));
        }
        Model::EtaMergeCc => {
            let bound = r.initial.delta_cc as f64;
            let edits = r.steps.len() as f64;
            out.push(exact("edits_vs_cc_error", bound, edits, edits <= bound));
            out.push(exact("cc_strictly_decreasing", 0.0, t.cc_non_decreasing as f64, t.cc_non_decreasing == 0));
        }
        Model::UnrestrictedMerge => {
            out.push(exact("delta_o_non_increasing", 0.0, t.delta_o_increases as f64, t.delta_o_increases == 0));
            out.push(exact(
                "impure_merges_reduce_delta_u",
                0.0,
                t.impure_merges_without_progress as f64,
                t.impure_merges_without_progress == 0,
            ));
            let du = r.initial.delta_u as f64;
            let scale = du * du * (r.k as f64 / AUDIT_EPSILON).ln();
            let constant = merges / scale.max(1.0);
            out.push(BoundCheck {
                id: "merge_constant".to_string(),
                bound: 1.0,
                observed: constant,
                ok: constant <= 1.0,
                audit: true,
            });
        }
    }
    out
}

/// Re-applies a run's requests to `initial` and returns the final
/// clustering. Fails if any step produces a different edit.
pub fn replay(s: &SimilarityMatrix, initial: &Clustering, record: &RunRecord) -> Result<Clustering> {
    let tree = build_global_tree(s, &record.config.model)?;
    let ctx = EditContext { s, tree: tree.as_ref() };
    let mut c = initial.clone();
    for step in &record.steps {
        let result = apply(&mut c, &step.request, &record.config.model, ctx)?;
        if result != step.result {
            return Err(Error::domain(format!("step {} replays differently", step.iteration)));
        }
    }
    Ok(c)
}

/// Cross product of experiment settings; every seed gets its own planted
/// instance and perturbation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub plant: PlantSpec,
    pub models: Vec<Model>,
    pub etas: Vec<f64>,
    pub p_keeps: Vec<f64>,
    pub prunes: Vec<usize>,
    pub tree_modes: Vec<TreeMode>,
    pub seeds: Vec<u64>,
    pub cap: usize,
}

impl SweepGrid {
    pub fn scenarios(&self) -> Vec<Scenario> {
        let mut out = Vec::new();
        for &model in &self.models {
            for &eta in &self.etas {
                for &p_keep in &self.p_keeps {
                    for &prune in &self.prunes {
                        for &tree_mode in &self.tree_modes {
                            for &seed in &self.seeds {
                                out.push(Scenario { model, eta, p_keep, prune, tree_mode, seed });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// Builds the scenario's instance (plant, prune, perturb) and runs it.
pub fn run_scenario(plant: PlantSpec, sc: &Scenario, cap: usize) -> Result<RunRecord> {
    let (s, target) = plant_instance(plant, sc.seed)?;
    let pruned = prune_outliers(&s, &target, sc.prune)?;
    let initial = perturb(&pruned.target, sc.p_keep, sc.seed)?;
    let mut cfg = RunConfig::new(ModelConfig::new(sc.model, sc.eta, sc.tree_mode));
    cfg.cap = cap;
    let mut record = run_session(&pruned.s, &pruned.target, &initial, &cfg, sc.seed)?;
    record.scenario = Some(*sc);
    Ok(record)
}

/// Runs every scenario of the grid, in parallel across scenarios; results
/// keep the grid order.
pub fn sweep(grid: &SweepGrid) -> Result<Vec<RunRecord>> {
    let scenarios = grid.scenarios();
    parallel_map(&scenarios, |sc| run_scenario(grid.plant, sc, grid.cap)).into_iter().collect()
}

/// Applies `f` to every item on scoped worker threads, preserving order.
pub fn parallel_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(items.len().max(1));
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut slots: Vec<Option<R>> = (0..items.len()).map(|_| None).collect();
    let results = std::sync::Mutex::new(&mut slots);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                results.lock().expect("no worker panicked")[i] = Some(r);
            });
        }
    });
    slots.into_iter().map(|r| r.expect("every item processed")).collect()
}

/// One line of a run log.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum RunLine {
    Run {
        config: RunConfig,
        seed: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scenario: Option<Scenario>,
        n: usize,
        k: usize,
        warnings: Vec<ModelWarning>,
        initial: ErrorReport,
    },
    Step(Step),
    End {
        termination: Termination,
        bound_checks: Vec<BoundCheck>,
    },
}

/// Writes runs as JSON lines: a `run` header, one `step` per edit, an `end` footer.
pub fn write_runs(records: &[RunRecord], mut w: impl Write) -> Result<()> {
    for r in records {
        let header = RunLine::Run {
            config: r.config,
            seed: r.seed,
            scenario: r.scenario,
            n: r.n,
            k: r.k,
            warnings: r.warnings.clone(),
            initial: r.initial,
        };
        serde_json::to_writer(&mut w, &header)?;
        writeln!(w)?;
        for s in &r.steps {
            serde_json::to_writer(&mut w, &RunLine::Step(s.clone()))?;
            writeln!(w)?;
        }
        let footer = RunLine::End { termination: r.termination, bound_checks: r.bound_checks.clone() };
        serde_json::to_writer(&mut w, &footer)?;
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_runs(r: impl Read) -> Result<Vec<RunRecord>> {
    let mut out = Vec::new();
    let mut open: Option<RunRecord> = None;
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: RunLine = serde_json::from_str(&line).map_err(|e| Error::parse(i + 1, e.to_string()))?;
        match (parsed, open.as_mut()) {
            (RunLine::Run { config, seed, scenario, n, k, warnings, initial }, None) => {
                open = Some(RunRecord {
                    config,
                    seed,
                    scenario,
                    n,
                    k,
                    warnings,
                    initial,
                    steps: Vec::new(),
                    termination: Termination::Capped { iterations: 0 },
                    bound_checks: Vec::new(),
                });
            }
            (RunLine::Step(step), Some(rec)) => rec.steps.push(step),
            (RunLine::End { termination, bound_checks }, Some(_)) => {
                let mut rec = open.take().expect("open run");
                rec.termination = termination;
                rec.bound_checks = bound_checks;
                out.push(rec);
            }
            _ => return Err(Error::parse(i + 1, "run log lines out of order")),
        }
    }
    if open.is_some() {
        return Err(Error::parse(0, "run log ends inside a run"));
    }
    Ok(out)
}

/// Long-format curves: one row per run and iteration (0 is the initial
/// clustering) with the scenario, iterations to converge (empty when
/// capped), `delta` and `delta_cc`, plus their mean over all runs sharing
/// the scenario apart from the seed. Finished runs carry their last value
/// forward in the means.
pub fn export_curves(records: &[RunRecord], w: impl Write) -> Result<()> {
    let key = |r: &RunRecord| {
        let sc = r.scenario;
        (
            r.config.model.model.to_string(),
            format!("{}", r.config.model.eta),
            sc.map_or(String::new(), |s| format!("{}", s.p_keep)),
            sc.map_or(String::new(), |s| s.prune.to_string()),
            r.config.model.tree_mode.to_string(),
        )
    };
    let mut groups: BTreeMap<_, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        groups.entry(key(r)).or_default().push(i);
    }
    let curves: Vec<Vec<ErrorReport>> = records.iter().map(RunRecord::curve).collect();
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record([
        "model",
        "eta",
        "p_keep",
        "prune",
        "tree_mode",
        "seed",
        "iterations_to_converge",
        "iteration",
        "delta",
        "delta_cc",
        "mean_delta",
        "mean_delta_cc",
    ])
    .map_err(csv_error)?;
    for (i, r) in records.iter().enumerate() {
        let k = key(r);
        let members = &groups[&k];
        let to_converge = match r.termination {
            Termination::Converged { iterations } => iterations.to_string(),
            Termination::Capped { .. } => String::new(),
        };
        for (it, e) in curves[i].iter().enumerate() {
            let at = |j: usize| curves[j][it.min(curves[j].len() - 1)];
            let mean = |f: fn(&ErrorReport) -> u64| members.iter().map(|&j| f(&at(j)) as f64).sum::<f64>() / members.len() as f64;
            csv.write_record([
                k.0.as_str(),
                k.1.as_str(),
                k.2.as_str(),
                k.3.as_str(),
                k.4.as_str(),
                &r.seed.to_string(),
                &to_converge,
                &it.to_string(),
                &e.delta.to_string(),
                &e.delta_cc.to_string(),
                &mean(|e| e.delta).to_string(),
                &mean(|e| e.delta_cc).to_string(),
            ])
            .map_err(csv_error)?;
        }
    }
    csv.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::domain(format!("csv: {other:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn planted(n: usize, k: usize, seed: u64) -> (SimilarityMatrix, Clustering) {
        plant_instance(PlantSpec::new(n, k, 0.9, 0.1, 0.05), seed).unwrap()
    }

    #[test]
    fn target_start_converges_immediately() {
        let (s, t) = planted(30, 3, 1);
        let cfg = RunConfig::new(ModelConfig::new(Model::EtaMerge, 0.7, TreeMode::Global));
        let r = run_session(&s, &t, &t, &cfg, 1).unwrap();
        assert_eq!(r.termination, Termination::Converged { iterations: 0 });
        assert!(r.bound_checks.iter().all(|b| b.ok));
    }

    #[test]
    fn tightness_family_needs_exactly_the_splits() {
        let n = 20;
        let target = Clustering::from_labels(&(0..n as u64).collect::<Vec<_>>());
        let initial = Clustering::from_labels(&(0..n as u64).map(|p| p / 2).collect::<Vec<_>>());
        let s = SimilarityMatrix::from_fn(n, |i, j| if i / 2 == j / 2 { 0.5 } else { 0.1 }).unwrap();
        let cfg = RunConfig::new(ModelConfig::new(Model::EtaMergeCc, 0.75, TreeMode::Global));
        let r = run_session(&s, &target, &initial, &cfg, 3).unwrap();
        assert_eq!(r.initial.delta_cc, 20);
        assert_eq!(r.termination, Termination::Converged { iterations: 10 });
        assert_eq!((r.splits(), r.merges()), (10, 0));
    }

    #[test]
    fn eta_run_converges_within_bounds() {
        let (s, t) = planted(60, 5, 4);
        let initial = perturb(&t, 0.5, 4).unwrap();
        let cfg = RunConfig::new(ModelConfig::new(Model::EtaMerge, 0.7, TreeMode::Global));
        let r = run_session(&s, &t, &initial, &cfg, 4).unwrap();
        assert!(r.termination.is_converged());
        assert!(r.bound_checks.iter().all(|b| b.ok), "{:?}", r.bound_checks);
        assert_eq!(r.curve().last().unwrap().delta, 0);
        assert!(r.splits() as u64 <= r.initial.delta_o);
    }

    #[test]
    fn capped_runs_stop_at_the_cap() {
        let (s, t) = planted(60, 5, 5);
        let initial = perturb(&t, 0.5, 5).unwrap();
        let mut cfg = RunConfig::new(ModelConfig::new(Model::EtaMerge, 0.7, TreeMode::Global));
        cfg.cap = 3;
        let r = run_session(&s, &t, &initial, &cfg, 5).unwrap();
        assert_eq!(r.termination, Termination::Capped { iterations: 3 });
        assert_ne!(r.curve().last().unwrap().delta, 0);
    }

    #[test]
    fn runs_replay_and_repeat() {
        let (s, t) = planted(40, 4, 6);
        let initial = perturb(&t, 0.5, 6).unwrap();
        let cfg = RunConfig::new(ModelConfig::new(Model::UnrestrictedMerge, 1.0, TreeMode::Global));
        let a = run_session(&s, &t, &initial, &cfg, 6).unwrap();
        let b = run_session(&s, &t, &initial, &cfg, 6).unwrap();
        assert_eq!(a, b);
        assert!(replay(&s, &initial, &a).unwrap().same_partition(&t));
    }

    #[test]
    fn run_logs_round_trip() {
        let grid = SweepGrid {
            plant: PlantSpec::new(30, 3, 0.9, 0.1, 0.05),
            models: vec![Model::EtaMerge, Model::EtaMergeCc],
            etas: vec![0.8],
            p_keeps: vec![0.5],
            prunes: vec![0, 2],
            tree_modes: vec![TreeMode::Global],
            seeds: vec![1, 2],
            cap: 500,
        };
        let records = sweep(&grid).unwrap();
        assert_eq!(records.len(), 8);
        let mut buf = Vec::new();
        write_runs(&records, &mut buf).unwrap();
        assert_eq!(read_runs(buf.as_slice()).unwrap(), records);
        assert!(read_runs("{\"type\":\"end\"}\n".as_bytes()).is_err());
    }

    #[test]
    fn empty_and_single_grids() {
        let mut grid = SweepGrid {
            plant: PlantSpec::new(20, 2, 0.9, 0.1, 0.0),
            models: vec![],
            etas: vec![0.7],
            p_keeps: vec![0.5],
            prunes: vec![0],
            tree_modes: vec![TreeMode::Local],
            seeds: vec![9],
            cap: 100,
        };
        assert!(sweep(&grid).unwrap().is_empty());
        grid.models = vec![Model::EtaMerge];
        let records = sweep(&grid).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].scenario.unwrap().seed, 9);
    }

    #[test]
    fn curve_csv_schema_and_means() {
        let grid = SweepGrid {
            plant: PlantSpec::new(30, 3, 0.9, 0.1, 0.05),
            models: vec![Model::EtaMerge],
            etas: vec![0.7],
            p_keeps: vec![0.5],
            prunes: vec![0],
            tree_modes: vec![TreeMode::Global],
            seeds: vec![1, 2, 3],
            cap: 1000,
        };
        let records = sweep(&grid).unwrap();
        let mut buf = Vec::new();
        export_curves(&records, &mut buf).unwrap();
        let mut rdr = csv::Reader::from_reader(buf.as_slice());
        let headers = rdr.headers().unwrap().clone();
        assert_eq!(headers.len(), 12);
        assert_eq!(&headers[11], "mean_delta_cc");
        let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
        let expected_rows: usize = records.iter().map(|r| r.steps.len() + 1).sum();
        assert_eq!(rows.len(), expected_rows);
        // At iteration 0 the mean is the average initial error of the three seeds.
        let mean0: f64 = records.iter().map(|r| r.initial.delta as f64).sum::<f64>() / 3.0;
        let row0 = rows.iter().find(|r| &r[7] == "0").unwrap();
        assert!((row0[10].parse::<f64>().unwrap() - mean0).abs() < 1e-9);
    }
}
