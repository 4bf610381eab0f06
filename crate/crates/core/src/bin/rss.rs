//! Command-line front end. Every verb accepts `--config <json>`; explicit
//! flags override fields from the file. Output goes to `--out`, else
//! `$RSS_OUTPUT_DIR`, else `./rss-output`.
//!
//! Exit codes: 0 success, 1 some scenario cells failed, 2 bad input or I/O.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use robust_selftrain::bounds::{emit_bound_sweep, BoundGrid};
use robust_selftrain::experiments::{default_output_dir, ingest_embeddings, run_scenario, simulate, Scenario, SimulateConfig};
use robust_selftrain::trainer::{train_erm_with, train_rss_with, TrainOptions};
use robust_selftrain::{LabelSchema, LabeledSet, Result, TrainConfig, UnlabeledSet};

#[derive(Parser)]
#[command(name = "rss", version, about = "Robust self-supervised training toolkit")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Draw labeled, unlabeled and test sets from a Gaussian mixture.
    Simulate(SimulateArgs),
    /// Train one model (RSS when unlabeled data is given, else ERM).
    Train(TrainArgs),
    /// Run a scenario: random search for ERM and RSS over seeds and sizes.
    Search(SearchArgs),
    /// Evaluate the generalization bounds over a grid.
    Bounds(BoundsArgs),
    /// Validate and normalize embedding CSVs.
    Ingest(IngestArgs),
}

#[derive(Args)]
struct Common {
    /// JSON file with defaults for this verb.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, env = "RSS_OUTPUT_DIR")]
    out: Option<PathBuf>,
}

impl Common {
    fn load<T: DeserializeOwned + Default>(&self) -> Result<T> {
        match &self.config {
            Some(p) => Ok(serde_json::from_str(&std::fs::read_to_string(p)?)?),
            None => Ok(T::default()),
        }
    }

    fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(default_output_dir)
    }
}

macro_rules! set {
    ($($target:expr => $flag:expr),* $(,)?) => {
        $(if let Some(v) = $flag.clone() { $target = v; })*
    };
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    mu0_norm: Option<f64>,
    #[arg(long)]
    sigma0: Option<f64>,
    /// Comma-separated covariance spectrum (general mixture).
    #[arg(long, value_delimiter = ',')]
    eigenvalues: Option<Vec<f64>>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    test_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

fn cmd_simulate(a: &SimulateArgs) -> Result<ExitCode> {
    let mut cfg: SimulateConfig = a.common.load()?;
    set!(cfg.d => a.d, cfg.mu0_norm => a.mu0_norm, cfg.sigma0 => a.sigma0, cfg.alpha => a.alpha,
         cfg.m => a.m, cfg.n => a.n, cfg.test_size => a.test_size, cfg.seed => a.seed);
    if a.eigenvalues.is_some() {
        cfg.eigenvalues = a.eigenvalues.clone();
    }
    let (labeled, unlabeled, test) = simulate(&cfg)?;
    let dir = a.common.out_dir();
    std::fs::create_dir_all(&dir)?;
    labeled.save_csv(dir.join("labeled.csv"))?;
    unlabeled.save_csv(dir.join("unlabeled.csv"))?;
    test.save_csv(dir.join("test.csv"))?;
    std::fs::write(dir.join("simulate.json"), serde_json::to_string_pretty(&cfg)?)?;
    println!("wrote {} labeled, {} unlabeled, {} test rows to {}", labeled.len(), unlabeled.len(), test.len(), dir.display());
    Ok(ExitCode::SUCCESS)
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    labeled: PathBuf,
    #[arg(long)]
    unlabeled: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    /// JSON label schema, e.g. {"classes": {"tumor": 1, "normal": -1}}.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Checkpoint to warm-start from.
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    gamma_prime: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

fn load_schema(path: Option<&Path>) -> Result<LabelSchema> {
    match path {
        Some(p) => Ok(serde_json::from_str(&std::fs::read_to_string(p)?)?),
        None => Ok(LabelSchema::default()),
    }
}

fn cmd_train(a: &TrainArgs) -> Result<ExitCode> {
    let mut cfg: TrainConfig = a.common.load()?;
    set!(cfg.epochs => a.epochs, cfg.learning_rate => a.learning_rate, cfg.weight_decay => a.weight_decay,
         cfg.robust.lambda => a.lambda, cfg.robust.gamma => a.gamma, cfg.robust.gamma_prime => a.gamma_prime,
         cfg.seed => a.seed);
    let schema = load_schema(a.schema.as_deref())?;
    let labeled = LabeledSet::load_csv(&a.labeled, &schema)?;
    let test = a.test.as_ref().map(|p| LabeledSet::load_csv(p, &schema)).transpose()?;
    let init = a.init.as_ref().map(robust_selftrain::Model::load_checkpoint).transpose()?;
    let opts = TrainOptions {
        initial: init.as_ref(),
        test: test.as_ref(),
        cache: None,
    };
    let (report, stem) = match &a.unlabeled {
        Some(p) => {
            let unlabeled = UnlabeledSet::load_csv(p)?;
            (train_rss_with(&labeled, &unlabeled, &cfg, opts)?, "rss")
        }
        None => (train_erm_with(&labeled, &cfg, opts)?, "erm"),
    };
    let dir = a.common.out_dir();
    report.save(&dir, stem)?;
    report.model.save_checkpoint(dir.join(format!("{stem}.ckpt")))?;
    std::fs::write(dir.join(format!("{stem}_config.json")), serde_json::to_string_pretty(&cfg)?)?;
    if let Some(last) = report.epochs.last() {
        println!("final objective {:.6}", last.total);
    }
    if let Some(acc) = report.test_accuracy {
        println!("test accuracy {acc:.4}");
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Args)]
struct SearchArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',')]
    labeled_sizes: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    unlabeled_sizes: Option<Vec<usize>>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    d: Option<usize>,
}

fn cmd_search(a: &SearchArgs) -> Result<ExitCode> {
    let mut cfg: Scenario = a.common.load()?;
    set!(cfg.trials => a.trials, cfg.seeds => a.seeds, cfg.labeled_sizes => a.labeled_sizes,
         cfg.unlabeled_sizes => a.unlabeled_sizes, cfg.epochs => a.epochs, cfg.alpha => a.alpha, cfg.d => a.d);
    if a.common.out.is_some() || cfg.output_dir.is_none() {
        cfg.output_dir = Some(a.common.out_dir());
    }
    let outcome = run_scenario(&cfg)?;
    println!("{:>8} {:>8} {:>6} {:>8} {:>8}", "m", "n", "method", "median", "mean");
    for r in &outcome.rows {
        println!("{:>8} {:>8} {:>6} {:>8.4} {:>8.4}", r.m, r.n, r.method.as_str(), r.median, r.mean);
    }
    for f in &outcome.failures {
        eprintln!("cell failed: seed {} m {} n {} {}: {}", f.seed, f.m, f.n, f.method.as_str(), f.message);
    }
    Ok(if outcome.all_succeeded() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

#[derive(Args)]
struct BoundsArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_delimiter = ',')]
    m: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    d: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    alpha: Option<Vec<f64>>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
}

fn cmd_bounds(a: &BoundsArgs) -> Result<ExitCode> {
    let mut grid: BoundGrid = a.common.load()?;
    set!(grid.m => a.m, grid.n => a.n, grid.d => a.d, grid.alpha => a.alpha, grid.delta => a.delta, grid.gamma => a.gamma);
    let dir = a.common.out_dir();
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("bounds.csv");
    let rows = emit_bound_sweep(&grid, &path)?;
    println!("wrote {rows} rows to {}", path.display());
    Ok(ExitCode::SUCCESS)
}

#[derive(Args)]
struct IngestArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    labeled: PathBuf,
    #[arg(long)]
    unlabeled: PathBuf,
    #[arg(long)]
    schema: Option<PathBuf>,
}

fn cmd_ingest(a: &IngestArgs) -> Result<ExitCode> {
    let schema = load_schema(a.schema.as_deref().or(a.common.config.as_deref()))?;
    let (labeled, unlabeled) = ingest_embeddings(&a.labeled, &a.unlabeled, &schema)?;
    let dir = a.common.out_dir();
    std::fs::create_dir_all(&dir)?;
    labeled.save_csv(dir.join("labeled.csv"))?;
    unlabeled.save_csv(dir.join("unlabeled.csv"))?;
    println!("ingested {} labeled and {} unlabeled rows of width {}", labeled.len(), unlabeled.len(), labeled.dim());
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.verb {
        Verb::Simulate(a) => cmd_simulate(a),
        Verb::Train(a) => cmd_train(a),
        Verb::Search(a) => cmd_search(a),
        Verb::Bounds(a) => cmd_bounds(a),
        Verb::Ingest(a) => cmd_ingest(a),
    };
    res.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::from(2)
    })
}
