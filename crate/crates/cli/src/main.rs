//! Command-line front end.
//!
//! Settings are resolved in this order, later sources winning: built-in
//! defaults, the `--config` file, `--set key=value` pairs, then the
//! dedicated flags of each subcommand.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use castle::analysis::{measure_bound_inputs, BoundVariant};
use castle::dataset::{load_csv, Dataset};
use castle::harness::{
    analyze_to_dir, benchmark_to_dir, bound_to_dir, candidates, default_names, sweep_to_dir, synth_datasets,
    train_to_dir, write_synth, ExperimentConfig, ExperimentData, Standardizer, SweepParam, Truth,
};
use castle::network::{load_checkpoint, CHECKPOINT_VERSION};
use castle::regularizers::RegKind;
use clap::{Args, Parser, Subcommand};

fn version() -> &'static str {
    Box::leak(
        format!(
            "{} (library castle-core {}, checkpoint format {})",
            env!("CARGO_PKG_VERSION"),
            castle::VERSION,
            CHECKPOINT_VERSION
        )
        .into_boxed_str(),
    )
}

#[derive(Parser, Debug)]
#[command(name = "castle", version = version(), about = "Causal-structure regularised networks")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Master seed; fully determines every output.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for benchmark and sweep (0 = all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// `key = value` settings file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, created if absent.
    #[arg(long, global = true, env = "CASTLE_OUT_DIR", default_value = "castle-out")]
    out: PathBuf,
    /// Extra `key=value` setting; may be repeated.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate synthetic datasets and their ground-truth edges.
    Synth(SynthArgs),
    /// Train one model and write its checkpoint and history.
    Train(TrainArgs),
    /// Cross-validate every configured regulariser and write metrics and ranks.
    Benchmark(DataArgs),
    /// Write the learned adjacency, edges and role weights of a checkpoint.
    Analyze(AnalyzeArgs),
    /// Evaluate the generalisation bound of a checkpoint.
    Bound(BoundArgs),
    /// Benchmark over a range of lambda or beta values.
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// `random` or `toy`.
    #[arg(long)]
    graph: Option<String>,
    #[arg(long)]
    nodes: Option<usize>,
    /// Largest branching factor.
    #[arg(long)]
    branching: Option<usize>,
    /// Rows per dataset.
    #[arg(long)]
    n: Option<usize>,
    /// Rows of each separate test set.
    #[arg(long)]
    test_n: Option<usize>,
    #[arg(long)]
    datasets: Option<usize>,
    #[arg(long)]
    noise_vars: Option<usize>,
    /// `sigmoid` or `identity`.
    #[arg(long)]
    link: Option<String>,
    /// Noise standard deviation, or `uniform`.
    #[arg(long)]
    sigma: Option<String>,
    /// `with-parents` or `orphan`.
    #[arg(long)]
    target_mode: Option<String>,
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Training CSV; may be repeated. Synthetic data from the settings when absent.
    #[arg(long)]
    data: Vec<PathBuf>,
    /// Separate test CSV (only with a single `--data`).
    #[arg(long)]
    test: Option<PathBuf>,
    /// Name of the target column.
    #[arg(long, default_value = "y")]
    target: String,
    /// `regression` or `binary`.
    #[arg(long)]
    task: Option<String>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "castle")]
    regularizer: String,
    /// Regulariser strength (lambda for castle); first grid value when absent.
    #[arg(long)]
    strength: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// CSV supplying column names and noise flags.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value = "y")]
    target: String,
    /// Ground-truth `u -> v weight` edges; enables roles.csv.
    #[arg(long)]
    edges: Option<PathBuf>,
    /// Edge threshold; the configured one when absent.
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Args, Debug)]
struct BoundArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// The model's training data.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "y")]
    target: String,
    #[arg(long)]
    task: Option<String>,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    #[arg(long, default_value_t = 1.0)]
    s: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Largest sample norm; measured when absent.
    #[arg(long)]
    b: Option<f64>,
    /// Largest spectral norm; measured when absent.
    #[arg(long)]
    kappa: Option<f64>,
    /// `main` (1/N) or `proof` (2/N).
    #[arg(long, default_value = "main")]
    variant: String,
    /// Standardize the data with its own column statistics first.
    #[arg(long)]
    standardize: bool,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    /// `lambda` or `beta`.
    #[arg(long)]
    param: String,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
}

fn build_config(g: &Global, extra: &[(&str, String)]) -> castle::Result<ExperimentConfig> {
    let mut cfg = match &g.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    for s in &g.sets {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| castle::Error::Config(format!("--set expects key=value, got '{s}'")))?;
        cfg.set(k.trim(), v)?;
    }
    for (k, v) in extra {
        cfg.set(k, v)?;
    }
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if let Some(jobs) = g.jobs {
        cfg.jobs = jobs;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn push<T: ToString>(extra: &mut Vec<(&'static str, String)>, key: &'static str, v: &Option<T>) {
    if let Some(v) = v {
        extra.push((key, v.to_string()));
    }
}

fn load(path: &Path, target: &str, cfg: &ExperimentConfig) -> castle::Result<Dataset> {
    let l = load_csv(path, target, cfg.train.task)?;
    if l.dropped > 0 {
        eprintln!("{}: dropped {} rows with missing values", path.display(), l.dropped);
    }
    Ok(l.dataset)
}

fn experiment_data(args: &DataArgs, cfg: &ExperimentConfig) -> castle::Result<Vec<ExperimentData>> {
    if args.data.is_empty() {
        if args.test.is_some() {
            return Err(castle::Error::Argument("--test needs --data".into()));
        }
        return synth_datasets(cfg);
    }
    if args.test.is_some() && args.data.len() != 1 {
        return Err(castle::Error::Argument("--test applies to a single --data file".into()));
    }
    args.data
        .iter()
        .map(|p| {
            let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "data".into());
            let test = match &args.test {
                Some(t) => Some(load(t, &args.target, cfg)?),
                None => None,
            };
            Ok(ExperimentData { name, pool: load(p, &args.target, cfg)?, test })
        })
        .collect()
}

fn data_config(g: &Global, args: &DataArgs) -> castle::Result<ExperimentConfig> {
    let mut extra = Vec::new();
    push(&mut extra, "task", &args.task);
    build_config(g, &extra)
}

fn run(cli: Cli) -> castle::Result<()> {
    let g = &cli.global;
    let out = &g.out;
    match &cli.command {
        Command::Synth(a) => {
            let mut extra = Vec::new();
            push(&mut extra, "synth_graph", &a.graph);
            push(&mut extra, "synth_nodes", &a.nodes);
            push(&mut extra, "synth_max_branching", &a.branching);
            push(&mut extra, "synth_samples", &a.n);
            push(&mut extra, "synth_test_samples", &a.test_n);
            push(&mut extra, "synth_datasets", &a.datasets);
            push(&mut extra, "synth_noise_vars", &a.noise_vars);
            push(&mut extra, "synth_link", &a.link);
            push(&mut extra, "synth_sigma", &a.sigma);
            push(&mut extra, "synth_target", &a.target_mode);
            let cfg = build_config(g, &extra)?;
            for p in write_synth(&cfg, out)? {
                println!("{}", p.display());
            }
        }
        Command::Train(a) => {
            let cfg = data_config(g, &a.data)?;
            let data = experiment_data(&a.data, &cfg)?;
            let first = data.into_iter().next().ok_or_else(|| castle::Error::Argument("no dataset".into()))?;
            if a.data.data.len() > 1 {
                return Err(castle::Error::Argument("train takes a single --data file".into()));
            }
            let kind: RegKind = a.regularizer.parse()?;
            let mut reg = candidates(&cfg, kind)[0];
            if let Some(s) = a.strength {
                reg.strength = s;
            }
            if let Some(b) = a.beta {
                reg.beta = b;
            }
            let t = train_to_dir(&cfg, &first.pool, &reg, out)?;
            println!("best epoch {} validation loss {:.6}", t.best_epoch, t.best_val);
        }
        Command::Benchmark(a) => {
            let cfg = data_config(g, a)?;
            let data = experiment_data(a, &cfg)?;
            let result = benchmark_to_dir(&cfg, &data, out)?;
            for r in &result.ranks {
                println!("{:<12} rank {:.3} ± {:.3}", r.regularizer, r.mean, r.std);
            }
        }
        Command::Analyze(a) => {
            let cfg = build_config(g, &[])?;
            let params = load_checkpoint(&a.checkpoint)?;
            let vars = params.shape.vars();
            let (names, noise) = match &a.data {
                Some(p) => {
                    let ds = load(p, &a.target, &cfg)?;
                    (ds.names, ds.noise)
                }
                None => (default_names(vars), vec![false; vars]),
            };
            let edges = match &a.edges {
                Some(p) => Some(castle::dataset::parse_edges(&std::fs::read_to_string(p)?, &names)?),
                None => None,
            };
            let truth = edges.as_deref().map(|e| Truth { edges: e, noise: &noise });
            let threshold = a.threshold.unwrap_or(cfg.edge_threshold);
            analyze_to_dir(&params, &names, truth, threshold, out)?;
            println!("{}", out.join("edges.txt").display());
        }
        Command::Bound(a) => {
            let mut extra = Vec::new();
            push(&mut extra, "task", &a.task);
            let cfg = build_config(g, &extra)?;
            let variant = match a.variant.as_str() {
                "main" => BoundVariant::Main,
                "proof" => BoundVariant::Proof,
                v => return Err(castle::Error::Argument(format!("unknown bound variant '{v}' (main or proof)"))),
            };
            let params = load_checkpoint(&a.checkpoint)?;
            let ds = load(&a.data, &a.target, &cfg)?;
            let xt = if a.standardize { Standardizer::fit(&ds.xt, ds.task)?.apply(&ds.xt)? } else { ds.xt };
            let inputs = measure_bound_inputs(&params, &xt, a.s, a.gamma, a.delta, a.b, a.kappa)?;
            let report = bound_to_dir(&params, &xt, &inputs, variant, out)?;
            println!("bound {:?}", report.value);
        }
        Command::Sweep(a) => {
            let cfg = data_config(g, &a.data)?;
            let param: SweepParam = a.param.parse()?;
            let data = experiment_data(&a.data, &cfg)?;
            sweep_to_dir(&cfg, &data, param, &a.values, out)?;
            println!("{}", out.join("sweep.csv").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("castle: {e}");
            ExitCode::from(1)
        }
    }
}
