use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use interclust::baselines::{apply_split, evaluate_split, split_2median, split_spectral, SpectralMode};
use interclust::datagen::{ingest_corpus, perturb, plant_instance, prune_outliers, read_corpus, PlantSpec};
use interclust::edits::{split_global, split_local};
use interclust::harness::{export_curves, read_runs, run_session, write_runs, RunConfig, Scenario};
use interclust::io::{load_clustering, load_matrix, save_clustering, save_matrix};
use interclust::linkage::build_average_linkage;
use interclust::model::{Model, ModelConfig, TreeMode};
use interclust::oracle::Interleave;
use interclust::types::{ClusterId, Clustering, PointId, SimilarityMatrix};

#[derive(Parser)]
#[command(name = "interclust", version, about = "Interactive clustering by local split and merge edits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Eta,
    Cc,
    Unrestricted,
}

impl From<ModelArg> for Model {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Eta => Model::EtaMerge,
            ModelArg::Cc => Model::EtaMergeCc,
            ModelArg::Unrestricted => Model::UnrestrictedMerge,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TreeArg {
    Global,
    Local,
    Robust,
    Threshold,
}

impl From<TreeArg> for TreeMode {
    fn from(t: TreeArg) -> Self {
        match t {
            TreeArg::Global => TreeMode::Global,
            TreeArg::Local => TreeMode::Local,
            TreeArg::Robust => TreeMode::RobustGlobal,
            TreeArg::Threshold => TreeMode::ThresholdGraph,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum InterleaveArg {
    Uniform,
    SplitsFirst,
    Balanced,
}

impl From<InterleaveArg> for Interleave {
    fn from(i: InterleaveArg) -> Self {
        match i {
            InterleaveArg::Uniform => Interleave::Uniform,
            InterleaveArg::SplitsFirst => Interleave::SplitsFirst,
            InterleaveArg::Balanced => Interleave::Balanced,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    /// Top split of the average-linkage tree over the cluster.
    Clean,
    /// Top split of the global average-linkage tree restricted to the cluster.
    CleanGlobal,
    #[value(name = "2median")]
    TwoMedian,
    SpectralBalanced,
    SpectralGap,
}

#[derive(clap::Args)]
struct PlantArgs {
    #[arg(long, default_value_t = 150)]
    n: usize,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 0.9)]
    within: f64,
    #[arg(long, default_value_t = 0.1)]
    across: f64,
    #[arg(long, default_value_t = 0.05)]
    jitter: f64,
}

impl PlantArgs {
    fn spec(&self) -> PlantSpec {
        PlantSpec::new(self.n, self.k, self.within, self.across, self.jitter)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run oracle sessions and write them as a JSON-lines run log.
    Simulate {
        #[arg(long, value_enum, default_value = "eta")]
        model: ModelArg,
        #[arg(long, default_value_t = 0.7)]
        eta: f64,
        #[arg(long, default_value_t = 0.5)]
        p_keep: f64,
        /// Outliers removed per target cluster before the run.
        #[arg(long, default_value_t = 0)]
        prune: usize,
        #[arg(long, value_enum, default_value = "global")]
        tree: TreeArg,
        #[arg(long, value_enum, default_value = "uniform")]
        interleave: InterleaveArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of consecutive seeds to run, starting at --seed.
        #[arg(long, default_value_t = 1)]
        runs: u64,
        #[arg(long, default_value_t = interclust::harness::DEFAULT_CAP)]
        cap: usize,
        /// Similarity matrix to use instead of a planted instance.
        #[arg(long, requires = "target")]
        matrix: Option<PathBuf>,
        /// Target clustering for --matrix.
        #[arg(long, requires = "matrix")]
        target: Option<PathBuf>,
        #[command(flatten)]
        plant: PlantArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert a run log into a CSV of error curves.
    ExportCurves {
        runs: PathBuf,
        #[arg(long)]
        csv: PathBuf,
    },
    /// Split one cluster with a baseline or the tree split and evaluate it.
    BaselineSplit {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        clustering: PathBuf,
        #[arg(long)]
        cluster: u64,
        #[arg(long, value_enum)]
        method: Method,
        /// Target clustering; prints whether the split is clean.
        #[arg(long)]
        target: Option<PathBuf>,
        /// Writes the clustering after the split.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a planted instance (and optionally a perturbed start).
    Plant {
        #[command(flatten)]
        plant: PlantArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// `.csv` for CSV, binary otherwise.
        #[arg(long)]
        matrix_out: PathBuf,
        #[arg(long)]
        target_out: PathBuf,
        #[arg(long)]
        initial_out: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        p_keep: f64,
    },
    /// Build tf-idf similarities and the label clustering from a JSON-lines corpus.
    Ingest {
        corpus: PathBuf,
        #[arg(long)]
        matrix_out: PathBuf,
        #[arg(long)]
        target_out: PathBuf,
    },
    /// Serve the HTTP session API.
    #[cfg(feature = "service")]
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: std::net::SocketAddr,
        /// Directory for artifacts and session logs; in-memory when omitted.
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
}

fn create(path: &PathBuf) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    model: Model,
    eta: f64,
    p_keep: f64,
    prune: usize,
    tree_mode: TreeMode,
    interleave: Interleave,
    seeds: std::ops::Range<u64>,
    cap: usize,
    data: Option<(SimilarityMatrix, Clustering)>,
    plant: PlantSpec,
) -> Result<Vec<interclust::harness::RunRecord>> {
    let mut cfg = RunConfig::new(ModelConfig::new(model, eta, tree_mode));
    cfg.cap = cap;
    cfg.interleave = interleave;
    let seeds: Vec<u64> = seeds.collect();
    interclust::harness::parallel_map(&seeds, |&seed| -> Result<_> {
        let (s, t) = match &data {
            Some((s, t)) => (s.clone(), t.clone()),
            None => plant_instance(plant, seed)?,
        };
        let pruned = prune_outliers(&s, &t, prune)?;
        let initial = perturb(&pruned.target, p_keep, seed)?;
        let mut record = run_session(&pruned.s, &pruned.target, &initial, &cfg, seed)?;
        record.scenario = Some(Scenario { model, eta, p_keep, prune, tree_mode, seed });
        Ok(record)
    })
    .into_iter()
    .collect()
}

fn baseline_split(
    s: &SimilarityMatrix,
    c: &Clustering,
    id: ClusterId,
    method: Method,
) -> Result<Clustering> {
    let members: Vec<PointId> = c.get(id)?.members().to_vec();
    let (left, right) = match method {
        Method::Clean => {
            let mut out = c.clone();
            split_local(&mut out, id, s)?;
            return Ok(out);
        }
        Method::CleanGlobal => {
            let all: Vec<PointId> = (0..s.n()).collect();
            let tree = build_average_linkage(s, &all)?;
            let mut out = c.clone();
            split_global(&mut out, id, &tree)?;
            return Ok(out);
        }
        Method::TwoMedian => split_2median(s, &members)?,
        Method::SpectralBalanced => split_spectral(s, &members, SpectralMode::Balanced)?,
        Method::SpectralGap => split_spectral(s, &members, SpectralMode::Gap)?,
    };
    Ok(apply_split(c, id, &left, &right)?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { model, eta, p_keep, prune, tree, interleave, seed, runs, cap, matrix, target, plant, out } => {
            let data = match (matrix, target) {
                (Some(m), Some(t)) => Some((load_matrix(&m)?, load_clustering(&t)?)),
                _ => None,
            };
            let records = simulate(
                model.into(),
                eta,
                p_keep,
                prune,
                tree.into(),
                interleave.into(),
                seed..seed + runs,
                cap,
                data,
                plant.spec(),
            )?;
            let mut w = create(&out)?;
            write_runs(&records, &mut w)?;
            w.flush()?;
            for r in &records {
                let failed: Vec<&str> = r.bound_checks.iter().filter(|b| !b.ok && !b.audit).map(|b| b.id.as_str()).collect();
                println!(
                    "seed {}: {:?} after {} edits ({} splits, {} merges); initial delta {}{}",
                    r.seed,
                    r.termination,
                    r.steps.len(),
                    r.splits(),
                    r.merges(),
                    r.initial.delta,
                    if failed.is_empty() { String::new() } else { format!("; bound checks failed: {}", failed.join(", ")) }
                );
                for w in &r.warnings {
                    eprintln!("warning: {}", w.message);
                }
            }
        }
        Command::ExportCurves { runs, csv } => {
            let records = read_runs(File::open(&runs).with_context(|| format!("opening {}", runs.display()))?)?;
            let mut w = create(&csv)?;
            export_curves(&records, &mut w)?;
            w.flush()?;
        }
        Command::BaselineSplit { matrix, clustering, cluster, method, target, out } => {
            let s = load_matrix(&matrix)?;
            let c = load_clustering(&clustering)?;
            if s.n() != c.n() {
                bail!("matrix has {} points, clustering {}", s.n(), c.n());
            }
            let after = baseline_split(&s, &c, ClusterId(cluster), method)?;
            let before: Vec<Vec<PointId>> = c.canonical();
            for side in after.canonical().iter().filter(|x| before.binary_search(x).is_err()) {
                println!("{}", side.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(" "));
            }
            if let Some(t) = target {
                let e = evaluate_split(&c, &after, &load_clustering(&t)?)?;
                println!("clean={} cc_delta={}", e.is_clean, e.cc_delta);
            }
            if let Some(o) = out {
                save_clustering(&after, &o)?;
            }
        }
        Command::Plant { plant, seed, matrix_out, target_out, initial_out, p_keep } => {
            let (s, t) = plant_instance(plant.spec(), seed)?;
            save_matrix(&s, &matrix_out)?;
            save_clustering(&t, &target_out)?;
            if let Some(p) = initial_out {
                save_clustering(&perturb(&t, p_keep, seed)?, &p)?;
            }
        }
        Command::Ingest { corpus, matrix_out, target_out } => {
            let docs = read_corpus(File::open(&corpus).with_context(|| format!("opening {}", corpus.display()))?)?;
            let (ingested, target) = ingest_corpus(&docs)?;
            if !ingested.zero_documents.is_empty() {
                eprintln!("warning: {} documents have no informative tokens", ingested.zero_documents.len());
            }
            save_matrix(&ingested.s, &matrix_out)?;
            save_clustering(&target, &target_out)?;
        }
        #[cfg(feature = "service")]
        Command::Serve { addr, data_dir } => {
            let state = match data_dir {
                Some(d) => interclust::service::AppState::open(d)?,
                None => interclust::service::AppState::in_memory(),
            };
            let rt = tokio::runtime::Runtime::new()?;
            eprintln!("listening on {addr}");
            rt.block_on(interclust::service::serve(addr, state))?;
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
