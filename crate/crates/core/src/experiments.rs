//! Seeded end-to-end runs: data generation or ingestion, ERM and RSS random
//! searches on a validation split, test evaluation and CSV emission.
//!
//! Output layout under `output_dir`:
//! - `results.csv`   aggregated accuracy per (m, n, method)
//! - `runs.csv`      one row per seed with the chosen exponents
//! - `timing.csv`    wall-clock per run (kept apart so the rest is byte-stable)
//! - `failures.csv`  cells that errored
//! - `trials/`       search logs, `reports/` final training reports

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{LabelSchema, LabeledSet, UnlabeledSet};
use crate::derive_seed;
use crate::error::{Error, Result};
use crate::gmm::{self, GmmSpec};
use crate::hyperparams::{random_search, Exponents, Hyper, SearchSpace};
use crate::inner::InnerSolverConfig;
use crate::losses::{RobustConfig, Surrogate};
use crate::models::{Model, ModelSpec};
use crate::optim::OptimizerKind;
use crate::trainer::{train_erm_with, train_rss_with, TrainConfig, TrainOptions, TrainReport, UnlabeledCache};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "RSS_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioMode {
    SimulatedIso,
    SimulatedGeneral,
    Embeddings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingFiles {
    pub labeled: PathBuf,
    pub unlabeled: PathBuf,
    /// Optional separate test file; otherwise labeled rows beyond the largest
    /// labeled size serve as the test set.
    #[serde(default)]
    pub test: Option<PathBuf>,
    #[serde(default)]
    pub schema: LabelSchema,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub id: String,
    pub mode: ScenarioMode,
    pub d: usize,
    pub mu0_norm: f64,
    pub sigma0: f64,
    /// Covariance spectrum for the general mode.
    pub eigenvalues: Option<Vec<f64>>,
    /// Absolute mean shift of the unlabeled distribution.
    pub alpha: f64,
    pub embeddings: Option<EmbeddingFiles>,
    pub labeled_sizes: Vec<usize>,
    pub unlabeled_sizes: Vec<usize>,
    pub test_size: usize,
    pub trials: usize,
    pub seeds: Vec<u64>,
    pub output_dir: Option<PathBuf>,
    pub epochs: usize,
    pub batches: usize,
    pub optimizer: OptimizerKind,
    pub model: ModelSpec,
    pub surrogate: Surrogate,
    pub inner: InnerSolverConfig,
    pub search_space: SearchSpace,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            id: "scenario".into(),
            mode: ScenarioMode::SimulatedIso,
            d: 200,
            mu0_norm: 1.0,
            sigma0: 1.0,
            eigenvalues: None,
            alpha: 0.0,
            embeddings: None,
            labeled_sizes: vec![10],
            unlabeled_sizes: vec![10, 100, 1000, 10_000],
            test_size: 10_000,
            trials: 50,
            seeds: vec![0],
            output_dir: None,
            epochs: 50,
            batches: 2,
            optimizer: OptimizerKind::Adam,
            model: ModelSpec::default(),
            surrogate: Surrogate::ClosedForm,
            inner: InnerSolverConfig::default(),
            search_space: SearchSpace::default(),
        }
    }
}

impl Scenario {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds list is empty".into()));
        }
        if self.labeled_sizes.is_empty() || self.labeled_sizes.contains(&0) {
            return Err(Error::Config("labeled sizes must be nonempty and positive".into()));
        }
        if self.unlabeled_sizes.contains(&0) {
            return Err(Error::Config("unlabeled sizes must be positive".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.epochs == 0 || self.batches == 0 {
            return Err(Error::Config("epochs and batches must be at least 1".into()));
        }
        match self.mode {
            ScenarioMode::SimulatedIso | ScenarioMode::SimulatedGeneral => {
                if self.d == 0 || self.test_size == 0 {
                    return Err(Error::Config("d and test_size must be positive".into()));
                }
                if self.mode == ScenarioMode::SimulatedGeneral {
                    match &self.eigenvalues {
                        Some(ev) if ev.len() == self.d => {}
                        _ => return Err(Error::Config("general mode needs `eigenvalues` of length d".into())),
                    }
                }
            }
            ScenarioMode::Embeddings => {
                let files = self
                    .embeddings
                    .as_ref()
                    .ok_or_else(|| Error::Config("embeddings mode needs `embeddings` file paths".into()))?;
                for p in [Some(&files.labeled), Some(&files.unlabeled), files.test.as_ref()]
                    .into_iter()
                    .flatten()
                {
                    if !p.exists() {
                        return Err(Error::Config(format!("file not found: {}", p.display())));
                    }
                }
            }
        }
        Ok(())
    }

    /// Training config for one hyperparameter draw.
    pub fn train_config(&self, h: &Hyper, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batches: self.batches,
            learning_rate: h.learning_rate,
            weight_decay: h.weight_decay,
            optimizer: self.optimizer,
            robust: RobustConfig {
                gamma: h.gamma,
                gamma_prime: h.gamma_prime,
                lambda: h.lambda,
                inner: InnerSolverConfig {
                    alpha: h.alpha,
                    ..self.inner
                },
                surrogate: self.surrogate,
                ..RobustConfig::default()
            },
            model: self.model.clone(),
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "ERM")]
    Erm,
    #[serde(rename = "RSS")]
    Rss,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Erm => "ERM",
            Method::Rss => "RSS",
        }
    }
}

/// One trained-and-evaluated run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub seed: u64,
    pub m: usize,
    /// 0 for the labeled-only baseline.
    pub n: usize,
    pub method: Method,
    pub test_accuracy: f64,
    pub validation_accuracy: f64,
    pub exponents: Exponents,
    pub wall_clock_secs: f64,
}

/// Aggregate over seeds for one (m, n, method).
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scenario: String,
    pub m: usize,
    pub n: usize,
    pub method: Method,
    pub mean: f64,
    pub std: f64,
    pub median: f64,
    pub seeds: usize,
    /// Chosen exponents per seed, `seed:(lr,wd,lambda,alpha,gamma,gamma')`.
    pub hyperparameters: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellFailure {
    pub seed: u64,
    pub m: usize,
    pub n: usize,
    pub method: Method,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScenarioOutcome {
    pub rows: Vec<ResultRow>,
    pub runs: Vec<RunRecord>,
    pub failures: Vec<CellFailure>,
}

impl ScenarioOutcome {
    pub fn all_succeeded(&self) -> bool {
        self.failures.is_empty()
    }

    /// Row for a given cell, if present.
    pub fn row(&self, m: usize, n: usize, method: Method) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.m == m && r.n == n && r.method == method)
    }
}

struct SeedData {
    labeled: LabeledSet,
    unlabeled: UnlabeledSet,
    test: LabeledSet,
}

const SPEC_STREAM: u64 = 10;
const SHIFT_STREAM: u64 = 11;
const LABELED_STREAM: u64 = 12;
const UNLABELED_STREAM: u64 = 13;
const TEST_STREAM: u64 = 14;
const SEARCH_STREAM: u64 = 15;
const TRAIN_STREAM: u64 = 16;
const FOLD_STREAM: u64 = 17;

/// The mixture used by a simulated scenario for a given seed.
pub fn scenario_spec(cfg: &Scenario, seed: u64) -> Result<(GmmSpec, GmmSpec)> {
    let base = match cfg.mode {
        ScenarioMode::SimulatedIso => {
            GmmSpec::isotropic_random_mean(cfg.d, cfg.mu0_norm, cfg.sigma0, derive_seed(seed, SPEC_STREAM))?
        }
        ScenarioMode::SimulatedGeneral => {
            let v = gmm::random_unit_vector(cfg.d, derive_seed(seed, SPEC_STREAM))?;
            let mu0 = v.iter().map(|x| x * cfg.mu0_norm).collect();
            let ev = cfg.eigenvalues.as_deref().unwrap_or_default();
            GmmSpec::general_from_eigenvalues(mu0, ev, derive_seed(seed, SPEC_STREAM + 100))?
        }
        ScenarioMode::Embeddings => return Err(Error::Config("embedding scenarios have no mixture".into())),
    };
    let shifted = gmm::make_shifted_spec(&base, cfg.alpha, derive_seed(seed, SHIFT_STREAM))?;
    Ok((base, shifted))
}

fn seed_data(cfg: &Scenario, seed: u64) -> Result<SeedData> {
    let max_m = *cfg.labeled_sizes.iter().max().expect("validated");
    let max_n = cfg.unlabeled_sizes.iter().copied().max().unwrap_or(1);
    match cfg.mode {
        ScenarioMode::SimulatedIso | ScenarioMode::SimulatedGeneral => {
            let (spec, shifted) = scenario_spec(cfg, seed)?;
            Ok(SeedData {
                labeled: gmm::sample_labeled(&spec, max_m, derive_seed(seed, LABELED_STREAM))?,
                unlabeled: gmm::sample_unlabeled(&shifted, max_n, derive_seed(seed, UNLABELED_STREAM))?,
                test: gmm::sample_labeled_balanced(&spec, cfg.test_size, derive_seed(seed, TEST_STREAM))?,
            })
        }
        ScenarioMode::Embeddings => {
            let files = cfg.embeddings.as_ref().expect("validated");
            let (labeled, unlabeled) = ingest_embeddings(&files.labeled, &files.unlabeled, &files.schema)?;
            let mut li: Vec<usize> = (0..labeled.len()).collect();
            li.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, LABELED_STREAM)));
            let mut ui: Vec<usize> = (0..unlabeled.len()).collect();
            ui.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, UNLABELED_STREAM)));
            if max_n > unlabeled.len() {
                return Err(Error::Config(format!(
                    "unlabeled size {max_n} exceeds the {} available rows",
                    unlabeled.len()
                )));
            }
            let test = match &files.test {
                Some(p) => LabeledSet::load_csv(p, &files.schema)?,
                None => {
                    if labeled.len() <= max_m {
                        return Err(Error::Config("no rows left for a test set; supply `test`".into()));
                    }
                    labeled.select(&li[max_m..])
                }
            };
            if max_m > labeled.len() {
                return Err(Error::Config(format!(
                    "labeled size {max_m} exceeds the {} available rows",
                    labeled.len()
                )));
            }
            Ok(SeedData {
                labeled: labeled.select(&li[..max_m]),
                unlabeled: unlabeled.select(&ui[..max_n]),
                test,
            })
        }
    }
}

/// Settings for a one-off simulated draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub d: usize,
    pub mu0_norm: f64,
    pub sigma0: f64,
    /// Covariance spectrum; switches to the general mixture when set.
    pub eigenvalues: Option<Vec<f64>>,
    pub alpha: f64,
    pub m: usize,
    pub n: usize,
    pub test_size: usize,
    pub seed: u64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            d: 200,
            mu0_norm: 1.0,
            sigma0: 1.0,
            eigenvalues: None,
            alpha: 0.0,
            m: 10,
            n: 10_000,
            test_size: 10_000,
            seed: 0,
        }
    }
}

/// Labeled, unlabeled (shifted by `alpha`) and balanced test sets drawn with
/// the same streams a scenario uses for `seed`.
pub fn simulate(cfg: &SimulateConfig) -> Result<(LabeledSet, UnlabeledSet, LabeledSet)> {
    let scenario = Scenario {
        mode: if cfg.eigenvalues.is_some() {
            ScenarioMode::SimulatedGeneral
        } else {
            ScenarioMode::SimulatedIso
        },
        d: cfg.d,
        mu0_norm: cfg.mu0_norm,
        sigma0: cfg.sigma0,
        eigenvalues: cfg.eigenvalues.clone(),
        alpha: cfg.alpha,
        labeled_sizes: vec![cfg.m.max(1)],
        unlabeled_sizes: vec![cfg.n.max(1)],
        test_size: cfg.test_size.max(1),
        ..Default::default()
    };
    scenario.validate()?;
    let data = seed_data(&scenario, cfg.seed)?;
    Ok((data.labeled.take(cfg.m), data.unlabeled.take(cfg.n), data.test.take(cfg.test_size)))
}

/// Reads a labeled and an unlabeled embedding table and checks that their
/// widths agree.
pub fn ingest_embeddings(
    labeled_csv: impl AsRef<Path>,
    unlabeled_csv: impl AsRef<Path>,
    schema: &LabelSchema,
) -> Result<(LabeledSet, UnlabeledSet)> {
    let labeled = LabeledSet::load_csv(labeled_csv, schema)?;
    let unlabeled = UnlabeledSet::load_csv(unlabeled_csv)?;
    if labeled.dim() != unlabeled.dim() {
        return Err(Error::DimensionMismatch {
            expected: labeled.dim(),
            found: unlabeled.dim(),
        });
    }
    Ok((labeled, unlabeled))
}

/// Validation folds over `m` labeled rows: a seeded 20% holdout when
/// `m >= 20`, leave-one-out otherwise.
pub fn validation_folds(m: usize, seed: u64) -> Vec<(Vec<usize>, Vec<usize>)> {
    if m >= 20 {
        let mut idx: Vec<usize> = (0..m).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let k = m.div_ceil(5);
        vec![(idx[k..].to_vec(), idx[..k].to_vec())]
    } else if m == 1 {
        vec![(vec![0], vec![0])]
    } else {
        (0..m)
            .map(|i| ((0..m).filter(|&j| j != i).collect(), vec![i]))
            .collect()
    }
}

/// Held-out tallies for one fold: correct predictions and summed margin.
#[derive(Default, Clone, Copy)]
struct Tally {
    correct: usize,
    margin: f64,
}

impl Tally {
    fn add(&mut self, model: &Model, set: &LabeledSet, val: &[usize]) -> Result<()> {
        for &i in val {
            let (x, y) = set.sample(i);
            if model.predict(x)? == y {
                self.correct += 1;
            }
            self.margin += y * model.margin(x)?;
        }
        Ok(())
    }

    /// Accuracy, with ties broken by the mean held-out margin. The tie-break
    /// is below 1e-6 so it never reorders distinct accuracies.
    fn score(&self, total: usize) -> f64 {
        let t = total as f64;
        self.correct as f64 / t + 1e-6 * (self.margin / t).tanh()
    }
}

/// Strips the margin tie-break from a validation score.
fn accuracy_of_score(score: f64, total: usize) -> f64 {
    (score * total as f64).round() / total as f64
}

struct CellContext<'a> {
    cfg: &'a Scenario,
    seed: u64,
    labeled: LabeledSet,
    folds: Vec<(Vec<usize>, Vec<usize>)>,
    fold_sets: Vec<LabeledSet>,
}

impl CellContext<'_> {
    fn total_val(&self) -> usize {
        self.folds.iter().map(|(_, v)| v.len()).sum()
    }

    fn erm_score(&self, h: &Hyper, train_seed: u64) -> Result<f64> {
        let tc = self.cfg.train_config(h, train_seed);
        let mut tally = Tally::default();
        for ((_, val), train) in self.folds.iter().zip(&self.fold_sets) {
            let r = train_erm_with(train, &tc, TrainOptions::default())?;
            tally.add(&r.model, &self.labeled, val)?;
        }
        Ok(tally.score(self.total_val()))
    }

    /// ERM fits per fold, used to warm-start every RSS trial.
    fn warm_starts(&self, erm: &Hyper, train_seed: u64) -> Result<Vec<Model>> {
        let tc = self.cfg.train_config(erm, train_seed);
        self.fold_sets
            .iter()
            .map(|train| Ok(train_erm_with(train, &tc, TrainOptions::default())?.model))
            .collect()
    }

    fn rss_score(&self, h: &Hyper, warm: &[Model], unlabeled: &UnlabeledSet, cache: Option<&UnlabeledCache>, train_seed: u64) -> Result<f64> {
        let tc = self.cfg.train_config(h, train_seed);
        let mut tally = Tally::default();
        for (((_, val), train), init) in self.folds.iter().zip(&self.fold_sets).zip(warm) {
            let r = train_rss_with(
                train,
                unlabeled,
                &tc,
                TrainOptions {
                    initial: Some(init),
                    cache,
                    ..Default::default()
                },
            )?;
            tally.add(&r.model, &self.labeled, val)?;
        }
        Ok(tally.score(self.total_val()))
    }
}

fn cell_stem(seed: u64, m: usize, n: usize, method: Method) -> String {
    format!("seed{seed}_m{m}_n{n}_{}", method.as_str())
}

fn save_artifacts(dir: Option<&Path>, stem: &str, search: &crate::hyperparams::SearchResult, report: &TrainReport) -> Result<()> {
    if let Some(dir) = dir {
        let trials = dir.join("trials");
        std::fs::create_dir_all(&trials)?;
        search.write_log(std::fs::File::create(trials.join(format!("{stem}.csv")))?)?;
        report.save(dir.join("reports"), stem)?;
    }
    Ok(())
}

fn uses_cache(cfg: &Scenario) -> bool {
    cfg.surrogate == Surrogate::ClosedForm && matches!(cfg.model, ModelSpec::Linear { normalize: true, bias: false })
}

/// Training seeds of a cell's final fits: `(erm, rss)`.
pub fn cell_train_seeds(seed: u64, m: usize, n: usize) -> (u64, u64) {
    let erm = derive_seed(seed, TRAIN_STREAM ^ ((m as u64) << 32));
    (erm, derive_seed(erm, n as u64))
}

/// Retrains a logged run from its exponents alone and returns its test
/// accuracy. `rss` is `(n, exponents)` for an RSS row; the ERM exponents of
/// the same seed and `m` are always needed for the warm start.
pub fn replay(cfg: &Scenario, seed: u64, m: usize, erm: &Exponents, rss: Option<(usize, &Exponents)>) -> Result<f64> {
    cfg.validate()?;
    let data = seed_data(cfg, seed)?;
    let labeled = data.labeled.take(m);
    let (erm_seed, _) = cell_train_seeds(seed, m, 0);
    let base = train_erm_with(
        &labeled,
        &cfg.train_config(&erm.values(), erm_seed),
        TrainOptions {
            test: Some(&data.test),
            ..Default::default()
        },
    )?;
    let report = match rss {
        None => base,
        Some((n, exps)) => {
            let unlabeled = data.unlabeled.take(n);
            let rss_seed = cell_train_seeds(seed, m, n).1;
            let cache = uses_cache(cfg).then(|| UnlabeledCache::build(&unlabeled, cfg.batches, rss_seed));
            train_rss_with(
                &labeled,
                &unlabeled,
                &cfg.train_config(&exps.values(), rss_seed),
                TrainOptions {
                    initial: Some(&base.model),
                    test: Some(&data.test),
                    cache: cache.as_ref(),
                },
            )?
        }
    };
    Ok(report.test_accuracy.unwrap_or(f64::NAN))
}

/// Runs every (m, n) cell for one seed.
fn run_seed(cfg: &Scenario, seed: u64) -> (Vec<RunRecord>, Vec<CellFailure>) {
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    let fail_all = |e: &Error, failures: &mut Vec<CellFailure>| {
        for &m in &cfg.labeled_sizes {
            failures.push(CellFailure {
                seed,
                m,
                n: 0,
                method: Method::Erm,
                message: e.to_string(),
            });
        }
    };
    let data = match seed_data(cfg, seed) {
        Ok(d) => d,
        Err(e) => {
            fail_all(&e, &mut failures);
            return (runs, failures);
        }
    };
    let out_dir = cfg.output_dir.as_deref();

    for &m in &cfg.labeled_sizes {
        let labeled = data.labeled.take(m);
        let folds = validation_folds(m, derive_seed(seed, FOLD_STREAM ^ m as u64));
        let fold_sets = folds.iter().map(|(t, _)| labeled.select(t)).collect();
        let ctx = CellContext {
            cfg,
            seed,
            labeled,
            folds,
            fold_sets,
        };
        let train_seed = cell_train_seeds(seed, m, 0).0;
        let search_seed = derive_seed(ctx.seed, SEARCH_STREAM ^ m as u64);

        // labeled-only baseline
        let erm = (|| -> Result<(Exponents, f64, TrainReport)> {
            let search = random_search(
                &cfg.search_space,
                cfg.trials,
                |h| ctx.erm_score(h, train_seed).map_err(|e| e.to_string()),
                search_seed,
            )?;
            let (_, exps, val) = search
                .best
                .ok_or_else(|| Error::Config("every ERM trial failed".into()))?;
            let tc = cfg.train_config(&exps.values(), train_seed);
            let report = train_erm_with(
                &ctx.labeled,
                &tc,
                TrainOptions {
                    test: Some(&data.test),
                    ..Default::default()
                },
            )?;
            save_artifacts(out_dir, &cell_stem(seed, m, 0, Method::Erm), &search, &report)?;
            Ok((exps, val, report))
        })();
        let (erm_exps, erm_report) = match erm {
            Ok((exps, val, report)) => {
                runs.push(RunRecord {
                    seed,
                    m,
                    n: 0,
                    method: Method::Erm,
                    test_accuracy: report.test_accuracy.unwrap_or(f64::NAN),
                    validation_accuracy: accuracy_of_score(val, ctx.total_val()),
                    exponents: exps,
                    wall_clock_secs: report.wall_clock_secs,
                });
                (exps, report)
            }
            Err(e) => {
                failures.push(CellFailure {
                    seed,
                    m,
                    n: 0,
                    method: Method::Erm,
                    message: e.to_string(),
                });
                continue;
            }
        };

        for &n in &cfg.unlabeled_sizes {
            let rss = (|| -> Result<(Exponents, f64, TrainReport)> {
                let unlabeled = data.unlabeled.take(n);
                let rss_seed = cell_train_seeds(seed, m, n).1;
                let cache = uses_cache(cfg).then(|| UnlabeledCache::build(&unlabeled, cfg.batches, rss_seed));
                let warm = ctx.warm_starts(&erm_exps.values(), train_seed)?;
                let search = random_search(
                    &cfg.search_space,
                    cfg.trials,
                    |h| {
                        ctx.rss_score(h, &warm, &unlabeled, cache.as_ref(), rss_seed)
                            .map_err(|e| e.to_string())
                    },
                    derive_seed(search_seed, n as u64),
                )?;
                let (_, exps, val) = search
                    .best
                    .ok_or_else(|| Error::Config("every RSS trial failed".into()))?;
                let tc = cfg.train_config(&exps.values(), rss_seed);
                let report = train_rss_with(
                    &ctx.labeled,
                    &unlabeled,
                    &tc,
                    TrainOptions {
                        initial: Some(&erm_report.model),
                        test: Some(&data.test),
                        cache: cache.as_ref(),
                    },
                )?;
                save_artifacts(out_dir, &cell_stem(seed, m, n, Method::Rss), &search, &report)?;
                Ok((exps, val, report))
            })();
            match rss {
                Ok((exps, val, report)) => runs.push(RunRecord {
                    seed,
                    m,
                    n,
                    method: Method::Rss,
                    test_accuracy: report.test_accuracy.unwrap_or(f64::NAN),
                    validation_accuracy: accuracy_of_score(val, ctx.total_val()),
                    exponents: exps,
                    wall_clock_secs: report.wall_clock_secs,
                }),
                Err(e) => failures.push(CellFailure {
                    seed,
                    m,
                    n,
                    method: Method::Rss,
                    message: e.to_string(),
                }),
            }
        }
    }
    (runs, failures)
}

fn exps_tuple(e: &Exponents) -> String {
    format!(
        "({},{},{},{},{},{})",
        e.learning_rate, e.weight_decay, e.lambda, e.alpha, e.gamma, e.gamma_prime
    )
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let k = values.len();
    if k == 0 {
        f64::NAN
    } else if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    }
}

fn aggregate(cfg: &Scenario, runs: &[RunRecord]) -> Vec<ResultRow> {
    let mut cells: Vec<(usize, usize, Method)> = Vec::new();
    for &m in &cfg.labeled_sizes {
        cells.push((m, 0, Method::Erm));
        for &n in &cfg.unlabeled_sizes {
            cells.push((m, n, Method::Rss));
        }
    }
    cells
        .into_iter()
        .filter_map(|(m, n, method)| {
            let sel: Vec<&RunRecord> = runs
                .iter()
                .filter(|r| r.m == m && r.n == n && r.method == method)
                .collect();
            if sel.is_empty() {
                return None;
            }
            let mut acc: Vec<f64> = sel.iter().map(|r| r.test_accuracy).collect();
            let k = acc.len() as f64;
            let mean = acc.iter().sum::<f64>() / k;
            let std = if acc.len() > 1 {
                (acc.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (k - 1.0)).sqrt()
            } else {
                0.0
            };
            let hyperparameters = sel
                .iter()
                .map(|r| format!("{}:{}", r.seed, exps_tuple(&r.exponents)))
                .collect::<Vec<_>>()
                .join(";");
            Some(ResultRow {
                scenario: cfg.id.clone(),
                m,
                n,
                method,
                mean,
                std,
                median: median(&mut acc),
                seeds: sel.len(),
                hyperparameters,
            })
        })
        .collect()
}

/// Runs the scenario; seeds are processed in parallel and merged in order.
/// Files are written when `output_dir` is set.
pub fn run_scenario(cfg: &Scenario) -> Result<ScenarioOutcome> {
    cfg.validate()?;
    if let Some(dir) = &cfg.output_dir {
        std::fs::create_dir_all(dir)?;
    }
    let per_seed: Vec<(Vec<RunRecord>, Vec<CellFailure>)> = cfg.seeds.par_iter().map(|&s| run_seed(cfg, s)).collect();
    let mut outcome = ScenarioOutcome::default();
    for (runs, failures) in per_seed {
        outcome.runs.extend(runs);
        outcome.failures.extend(failures);
    }
    outcome.rows = aggregate(cfg, &outcome.runs);
    if let Some(dir) = &cfg.output_dir {
        write_outcome(&outcome, dir)?;
    }
    Ok(outcome)
}

pub fn write_outcome(outcome: &ScenarioOutcome, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("results.csv"))?;
    w.write_record(["scenario", "labeled_size", "unlabeled_size", "method", "mean_accuracy", "std_accuracy", "median_accuracy", "seeds", "hyperparameters"])?;
    for r in &outcome.rows {
        w.write_record([
            r.scenario.clone(),
            r.m.to_string(),
            r.n.to_string(),
            r.method.as_str().to_string(),
            format!("{:.6}", r.mean),
            format!("{:.6}", r.std),
            format!("{:.6}", r.median),
            r.seeds.to_string(),
            r.hyperparameters.clone(),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("runs.csv"))?;
    w.write_record([
        "seed",
        "labeled_size",
        "unlabeled_size",
        "method",
        "test_accuracy",
        "validation_accuracy",
        "learning_rate_exp",
        "weight_decay_exp",
        "lambda_exp",
        "alpha_exp",
        "gamma_exp",
        "gamma_prime_exp",
    ])?;
    for r in &outcome.runs {
        let e = r.exponents;
        w.write_record([
            r.seed.to_string(),
            r.m.to_string(),
            r.n.to_string(),
            r.method.as_str().to_string(),
            format!("{:?}", r.test_accuracy),
            format!("{:?}", r.validation_accuracy),
            e.learning_rate.to_string(),
            e.weight_decay.to_string(),
            e.lambda.to_string(),
            e.alpha.to_string(),
            e.gamma.to_string(),
            e.gamma_prime.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("timing.csv"))?;
    w.write_record(["seed", "labeled_size", "unlabeled_size", "method", "wall_clock_secs"])?;
    for r in &outcome.runs {
        w.write_record([
            r.seed.to_string(),
            r.m.to_string(),
            r.n.to_string(),
            r.method.as_str().to_string(),
            format!("{:.6}", r.wall_clock_secs),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("failures.csv"))?;
    w.write_record(["seed", "labeled_size", "unlabeled_size", "method", "message"])?;
    for f in &outcome.failures {
        w.write_record([
            f.seed.to_string(),
            f.m.to_string(),
            f.n.to_string(),
            f.method.as_str().to_string(),
            f.message.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Default output directory: `$RSS_OUTPUT_DIR`, else `./rss-output`.
pub fn default_output_dir() -> PathBuf {
    std::env::var_os(OUTPUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("rss-output"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_follow_size_rule() {
        let loo = validation_folds(5, 0);
        assert_eq!(loo.len(), 5);
        assert!(loo.iter().all(|(t, v)| t.len() == 4 && v.len() == 1));
        let hold = validation_folds(50, 0);
        assert_eq!(hold.len(), 1);
        assert_eq!(hold[0].1.len(), 10);
        assert_eq!(hold[0].0.len(), 40);
    }

    #[test]
    fn empty_seeds_rejected() {
        let cfg = Scenario {
            seeds: vec![],
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn tiny_scenario_runs() {
        let cfg = Scenario {
            d: 5,
            mu0_norm: 2.0,
            labeled_sizes: vec![6],
            unlabeled_sizes: vec![30],
            test_size: 200,
            trials: 2,
            epochs: 3,
            seeds: vec![1],
            ..Default::default()
        };
        let out = run_scenario(&cfg).unwrap();
        assert!(out.all_succeeded(), "{:?}", out.failures);
        assert_eq!(out.rows.len(), 2);
        assert!(out.row(6, 30, Method::Rss).is_some());
    }
}
