//! Mini-batch minimization of
//! `(1/m) sum phi_gamma(x_i, y_i) + (lambda/n) sum phi_gamma'(x'_j, h(x'_j))`
//! plus the labeled-only baselines.
//!
//! Batches are formed once per run: both sets are shuffled with the run seed
//! and split into `batches` parts, and each epoch walks the paired parts,
//! cycling the shorter list. Self-labels are frozen at the start of each batch.
//! Gradients are taken at the maximizing perturbed points (envelope theorem).

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{LabeledSet, UnlabeledSet};
use crate::derive_seed;
use crate::error::{Error, Result};
use crate::inner::{adversarial_perturb, ModelLoss};
use crate::linalg::{self, Matrix};
use crate::losses::{RobustConfig, Surrogate};
use crate::models::{LossKind, Model, ModelSpec};
use crate::optim::{Optimizer, OptimizerKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Number of parts each set is split into (2 in the reference loop).
    pub batches: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub optimizer: OptimizerKind,
    pub robust: RobustConfig,
    pub model: ModelSpec,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batches: 2,
            learning_rate: 1e-2,
            weight_decay: 0.0,
            optimizer: OptimizerKind::Adam,
            robust: RobustConfig::default(),
            model: ModelSpec::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batches == 0 {
            return Err(Error::Config("batches must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::Config(format!("weight decay must be nonnegative, got {}", self.weight_decay)));
        }
        self.robust.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub labeled: f64,
    pub unlabeled: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub model: Model,
    pub epochs: Vec<EpochRecord>,
    pub wall_clock_secs: f64,
    pub test_accuracy: Option<f64>,
}

impl TrainReport {
    pub fn to_json(&self) -> serde_json::Value {
        let kind = match &self.model {
            Model::Linear(_) => "linear",
            Model::Mlp(_) => "mlp",
        };
        serde_json::json!({
            "model": { "kind": kind, "params": self.model.params() },
            "epochs": self.epochs,
            "wall_clock_secs": self.wall_clock_secs,
            "test_accuracy": self.test_accuracy,
        })
    }

    pub fn write_epochs_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "labeled", "unlabeled", "total"])?;
        for e in &self.epochs {
            w.write_record([
                e.epoch.to_string(),
                format!("{:?}", e.labeled),
                format!("{:?}", e.unlabeled),
                format!("{:?}", e.total),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `<stem>.json` and `<stem>_epochs.csv` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let json = serde_json::to_string_pretty(&self.to_json())?;
        std::fs::write(dir.join(format!("{stem}.json")), json)?;
        self.write_epochs_csv(std::fs::File::create(dir.join(format!("{stem}_epochs.csv")))?)
    }
}

/// Objective value split into its two terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    pub total: f64,
    pub labeled: f64,
    pub unlabeled: f64,
}

/// Optional inputs to a training run.
#[derive(Default, Clone, Copy)]
pub struct TrainOptions<'a> {
    /// Starting model (e.g. an ERM solution); built from the config otherwise.
    pub initial: Option<&'a Model>,
    /// Evaluated after training to fill `test_accuracy`.
    pub test: Option<&'a LabeledSet>,
    /// Precomputed per-batch second moments of the unlabeled set.
    pub cache: Option<&'a UnlabeledCache>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Rss,
    RobustErm,
    Erm,
}

fn partition(len: usize, parts: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..len).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let parts = parts.min(len).max(1);
    let base = len / parts;
    let extra = len % parts;
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for p in 0..parts {
        let size = base + usize::from(p < extra);
        out.push(idx[start..start + size].to_vec());
        start += size;
    }
    out.retain(|b| !b.is_empty());
    out
}

const LABELED_STREAM: u64 = 1;
const UNLABELED_STREAM: u64 = 2;
const INIT_STREAM: u64 = 3;

/// Second moments of each fixed unlabeled batch. With a unit-norm linear
/// model and `gamma' * max |x|^2 < 1` every point sits inside the quadratic
/// branch of the closed form, so the batch mean of `1 - gamma' <theta, x>^2`
/// and its gradient only need `theta^T M theta` and `M theta`.
#[derive(Debug, Clone)]
pub struct UnlabeledCache {
    seed: u64,
    batches: usize,
    n: usize,
    parts: Vec<(DMatrix<f64>, f64)>,
}

impl UnlabeledCache {
    pub fn build(unlabeled: &UnlabeledSet, batches: usize, seed: u64) -> Self {
        let parts = partition(unlabeled.len(), batches, derive_seed(seed, UNLABELED_STREAM))
            .into_iter()
            .map(|idx| {
                let rows = unlabeled.features().select_rows(&idx);
                let max_sq = rows.iter_rows().map(|r| linalg::dot(r, r)).fold(0.0, f64::max);
                (rows.second_moment(), max_sq)
            })
            .collect();
        Self {
            seed,
            batches,
            n: unlabeled.len(),
            parts,
        }
    }

    fn matches(&self, unlabeled: &UnlabeledSet, cfg: &TrainConfig) -> bool {
        self.seed == cfg.seed && self.batches == cfg.batches && self.n == unlabeled.len()
    }

    fn usable(&self, gamma_prime: f64) -> bool {
        self.parts.iter().all(|(_, max_sq)| gamma_prime * max_sq < 1.0)
    }
}

pub fn train_rss(labeled: &LabeledSet, unlabeled: &UnlabeledSet, cfg: &TrainConfig) -> Result<TrainReport> {
    train_rss_with(labeled, unlabeled, cfg, TrainOptions::default())
}

pub fn train_rss_with(
    labeled: &LabeledSet,
    unlabeled: &UnlabeledSet,
    cfg: &TrainConfig,
    opts: TrainOptions<'_>,
) -> Result<TrainReport> {
    run(labeled, Some(unlabeled), cfg, opts, Mode::Rss)
}

/// Plain-loss baseline: `lambda = 0` and no perturbation. In closed-form mode
/// the plain loss is the ramp `min(1, max(0, 1 - gamma y f))`, the only
/// trainable choice for the 0-1 family.
pub fn train_erm(labeled: &LabeledSet, cfg: &TrainConfig) -> Result<TrainReport> {
    train_erm_with(labeled, cfg, TrainOptions::default())
}

pub fn train_erm_with(labeled: &LabeledSet, cfg: &TrainConfig, opts: TrainOptions<'_>) -> Result<TrainReport> {
    run(labeled, None, cfg, opts, Mode::Erm)
}

/// Labeled robust term only (`lambda = 0`).
pub fn train_robust_erm(labeled: &LabeledSet, cfg: &TrainConfig, opts: TrainOptions<'_>) -> Result<TrainReport> {
    run(labeled, None, cfg, opts, Mode::RobustErm)
}

fn check_dims(model: &Model, labeled: &LabeledSet, unlabeled: Option<&UnlabeledSet>) -> Result<()> {
    let d = model.dim();
    if labeled.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: labeled.dim(),
        });
    }
    if let Some(u) = unlabeled {
        if !u.is_empty() && u.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, found: u.dim() });
        }
    }
    Ok(())
}

fn check_surrogate(model: &Model, robust: &RobustConfig) -> Result<()> {
    if robust.surrogate == Surrogate::ClosedForm && model.as_linear().is_none() {
        return Err(Error::Config("closed-form surrogates apply to linear models only".into()));
    }
    Ok(())
}

/// Per-sample term: value and parameter gradient.
struct Term<'a> {
    model: &'a Model,
    robust: &'a RobustConfig,
}

impl Term<'_> {
    /// Mean value over `rows` with labels `ys`; `scale * mean gradient` is
    /// added into `grad`.
    fn labeled_batch(&self, x: &Matrix, idx: &[usize], ys: &[f64], robust: bool, scale: f64, grad: &mut [f64]) -> Result<f64> {
        match self.robust.surrogate {
            Surrogate::ClosedForm => {
                self.plain_batch(x, idx, ys, self.robust.labeled_closed_kind(), scale, grad)
            }
            Surrogate::Numeric { base } if !robust => self.plain_batch(x, idx, ys, base, scale, grad),
            Surrogate::Numeric { base } => self.perturbed_batch(
                x,
                idx,
                ys,
                base,
                self.robust.gamma,
                self.robust.labeled_cost,
                scale,
                grad,
            ),
        }
    }

    fn unlabeled_batch(&self, x: &Matrix, idx: &[usize], ys: &[f64], scale: f64, grad: &mut [f64]) -> Result<f64> {
        match self.robust.surrogate {
            Surrogate::ClosedForm => self.plain_batch(x, idx, ys, self.robust.unlabeled_closed_kind(), scale, grad),
            Surrogate::Numeric { base } => self.perturbed_batch(
                x,
                idx,
                ys,
                base,
                self.robust.gamma_prime,
                self.robust.unlabeled_cost,
                scale,
                grad,
            ),
        }
    }

    fn plain_batch(&self, x: &Matrix, idx: &[usize], ys: &[f64], kind: LossKind, scale: f64, grad: &mut [f64]) -> Result<f64> {
        let w = scale / idx.len() as f64;
        let mut sum = 0.0;
        for (&i, &y) in idx.iter().zip(ys) {
            sum += self.model.accumulate_param_grad(x.row(i), y, kind, w, grad)?;
        }
        Ok(sum / idx.len() as f64)
    }

    #[allow(clippy::too_many_arguments)]
    fn perturbed_batch(
        &self,
        x: &Matrix,
        idx: &[usize],
        ys: &[f64],
        base: LossKind,
        gamma: f64,
        cost: crate::losses::CostKind,
        scale: f64,
        grad: &mut [f64],
    ) -> Result<f64> {
        let loss = ModelLoss {
            model: self.model,
            kind: base,
        };
        let p = self.model.params().len();
        let per_sample: Vec<(f64, Vec<f64>)> = idx
            .par_iter()
            .zip(ys.par_iter())
            .map(|(&i, &y)| {
                let xi = x.row(i);
                let pert = adversarial_perturb(&loss, xi, y, gamma, cost, &self.robust.inner)?;
                let mut g = vec![0.0; p];
                self.model.accumulate_param_grad(&pert.z, y, base, 1.0, &mut g)?;
                Ok((pert.objective, g))
            })
            .collect::<Result<_>>()?;
        let w = scale / idx.len() as f64;
        let mut sum = 0.0;
        for (v, g) in &per_sample {
            sum += v;
            linalg::axpy(w, g, grad);
        }
        Ok(sum / idx.len() as f64)
    }
}

fn run(
    labeled: &LabeledSet,
    unlabeled: Option<&UnlabeledSet>,
    cfg: &TrainConfig,
    opts: TrainOptions<'_>,
    mode: Mode,
) -> Result<TrainReport> {
    run_inner(labeled, unlabeled, cfg, opts, mode, true)
}

fn run_inner(
    labeled: &LabeledSet,
    unlabeled: Option<&UnlabeledSet>,
    cfg: &TrainConfig,
    opts: TrainOptions<'_>,
    mode: Mode,
    allow_cache: bool,
) -> Result<TrainReport> {
    let start = Instant::now();
    cfg.validate()?;
    if labeled.is_empty() {
        return Err(Error::InvalidInput("labeled set is empty".into()));
    }
    let lambda = if mode == Mode::Rss { cfg.robust.lambda } else { 0.0 };
    let unlabeled = match unlabeled {
        Some(u) if lambda > 0.0 => {
            if u.is_empty() {
                return Err(Error::InvalidInput("unlabeled set is empty but lambda > 0".into()));
            }
            Some(u)
        }
        _ => None,
    };

    let mut model = match opts.initial {
        Some(m) => m.clone(),
        None => cfg.model.build(labeled.dim(), derive_seed(cfg.seed, INIT_STREAM))?,
    };
    check_dims(&model, labeled, unlabeled)?;
    check_surrogate(&model, &cfg.robust)?;
    if model.is_normalized() {
        model.project()?;
    }

    let lab_parts = partition(labeled.len(), cfg.batches, derive_seed(cfg.seed, LABELED_STREAM));
    let unl_parts = unlabeled
        .map(|u| partition(u.len(), cfg.batches, derive_seed(cfg.seed, UNLABELED_STREAM)))
        .unwrap_or_default();
    let steps_per_epoch = lab_parts.len().max(unl_parts.len());
    let lab_labels: Vec<Vec<f64>> = lab_parts
        .iter()
        .map(|b| b.iter().map(|&i| labeled.labels()[i]).collect())
        .collect();

    // closed-form fast path for the unlabeled term
    let fast_ok = allow_cache
        && cfg.robust.surrogate == Surrogate::ClosedForm
        && matches!(model.as_linear(), Some(p) if p.normalize && p.bias().is_none());
    let local_cache;
    let cache: Option<&UnlabeledCache> = match (unlabeled, fast_ok) {
        (Some(u), true) => match opts.cache {
            Some(c) if c.matches(u, cfg) => Some(c).filter(|c| c.usable(cfg.robust.gamma_prime)),
            _ => {
                let updates = cfg.epochs * steps_per_epoch;
                let max_sq = u.features().iter_rows().map(|r| linalg::dot(r, r)).fold(0.0, f64::max);
                if cfg.robust.gamma_prime * max_sq < 1.0 && 4 * updates >= u.dim() {
                    local_cache = Some(UnlabeledCache::build(u, cfg.batches, cfg.seed));
                    local_cache.as_ref()
                } else {
                    None
                }
            }
        },
        _ => None,
    };

    let mut opt = Optimizer::new(cfg.optimizer, model.params().len(), cfg.learning_rate, cfg.weight_decay);
    let mut grad = vec![0.0; model.params().len()];
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let robust_labeled = mode != Mode::Erm;

    for epoch in 0..cfg.epochs {
        let (mut lab_acc, mut unl_acc) = (0.0, 0.0);
        for b in 0..steps_per_epoch {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let term = Term {
                model: &model,
                robust: &cfg.robust,
            };
            let li = b % lab_parts.len();
            let lab_val = term.labeled_batch(
                labeled.features(),
                &lab_parts[li],
                &lab_labels[li],
                robust_labeled,
                1.0,
                &mut grad,
            )?;
            let unl_val = match unlabeled {
                Some(u) => {
                    let ui = b % unl_parts.len();
                    match cache {
                        Some(c) => cached_unlabeled(&model, &c.parts[ui].0, cfg.robust.gamma_prime, lambda, &mut grad),
                        None => {
                            let idx = &unl_parts[ui];
                            let self_labels = idx
                                .iter()
                                .map(|&i| model.predict(u.row(i)))
                                .collect::<Result<Vec<f64>>>()?;
                            term.unlabeled_batch(u.features(), idx, &self_labels, lambda, &mut grad)?
                        }
                    }
                }
                None => 0.0,
            };
            if !(lab_val.is_finite() && unl_val.is_finite()) {
                return Err(Error::TrainingDiverged { epoch, batch: b });
            }
            lab_acc += lab_val;
            unl_acc += unl_val;

            opt.apply_weight_decay(model.params(), &mut grad);
            if let Model::Linear(p) = &model {
                if p.normalize {
                    // keep the step on the sphere's tangent space
                    let d = p.dim();
                    let radial = linalg::dot(&grad[..d], p.w());
                    let w = p.w().to_vec();
                    linalg::axpy(-radial, &w, &mut grad[..d]);
                }
            }
            opt.step(model.params_mut(), &grad);
            if model.params().iter().any(|v| !v.is_finite()) || model.project().is_err() {
                return Err(Error::TrainingDiverged { epoch, batch: b });
            }
        }
        let labeled_mean = lab_acc / steps_per_epoch as f64;
        let unlabeled_mean = unl_acc / steps_per_epoch as f64;
        epochs.push(EpochRecord {
            epoch: epoch + 1,
            labeled: labeled_mean,
            unlabeled: unlabeled_mean,
            total: labeled_mean + lambda * unlabeled_mean,
        });
    }

    let test_accuracy = opts.test.map(|t| model.accuracy(t)).transpose()?;
    Ok(TrainReport {
        model,
        epochs,
        wall_clock_secs: start.elapsed().as_secs_f64(),
        test_accuracy,
    })
}

/// Batch mean `1 - gamma' theta^T M theta`; adds `-2 lambda gamma' M theta`.
fn cached_unlabeled(model: &Model, moment: &DMatrix<f64>, gamma_prime: f64, lambda: f64, grad: &mut [f64]) -> f64 {
    let w = model.as_linear().expect("fast path is linear-only").w();
    let theta = DVector::from_column_slice(w);
    let mt = moment * &theta;
    let q = theta.dot(&mt);
    linalg::axpy(-2.0 * lambda * gamma_prime, mt.as_slice(), &mut grad[..w.len()]);
    1.0 - gamma_prime * q
}

/// Evaluates the full objective, recomputing self-labels from `model`.
pub fn rss_objective(model: &Model, labeled: &LabeledSet, unlabeled: &UnlabeledSet, cfg: &RobustConfig) -> Result<Objective> {
    cfg.validate()?;
    if labeled.is_empty() {
        return Err(Error::InvalidInput("labeled set is empty".into()));
    }
    if unlabeled.is_empty() && cfg.lambda > 0.0 {
        return Err(Error::InvalidInput("unlabeled set is empty but lambda > 0".into()));
    }
    check_dims(model, labeled, Some(unlabeled))?;
    check_surrogate(model, cfg)?;
    let term = Term { model, robust: cfg };
    let mut scratch = vec![0.0; model.params().len()];
    let all_l: Vec<usize> = (0..labeled.len()).collect();
    let lab = term.labeled_batch(labeled.features(), &all_l, labeled.labels(), true, 0.0, &mut scratch)?;
    let unl = if unlabeled.is_empty() {
        0.0
    } else {
        let all_u: Vec<usize> = (0..unlabeled.len()).collect();
        let ys = all_u
            .iter()
            .map(|&i| model.predict(unlabeled.row(i)))
            .collect::<Result<Vec<f64>>>()?;
        term.unlabeled_batch(unlabeled.features(), &all_u, &ys, 0.0, &mut scratch)?
    };
    Ok(Objective {
        total: lab + cfg.lambda * unl,
        labeled: lab,
        unlabeled: unl,
    })
}

/// `(1/n) sum max(0, 1 - gamma' <theta, x'>^2) <= s` for a unit-norm linear model.
pub fn constrained_view_check(model: &Model, unlabeled: &UnlabeledSet, gamma_prime: f64, s: f64) -> Result<bool> {
    if !(s >= 0.0) {
        return Err(Error::InvalidInput(format!("s must be nonnegative, got {s}")));
    }
    let theta = model
        .as_linear()
        .ok_or_else(|| Error::InvalidInput("constrained view needs a linear model".into()))?
        .w();
    Ok(unlabeled_penalty(theta, unlabeled, gamma_prime)? <= s)
}

/// `(1/n) sum max(0, 1 - gamma' <theta, x'>^2)` for unit `theta`.
pub fn unlabeled_penalty(theta: &[f64], unlabeled: &UnlabeledSet, gamma_prime: f64) -> Result<f64> {
    if unlabeled.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for x in unlabeled.features().iter_rows() {
        sum += crate::losses::phi_unlabeled_closed(theta, x, gamma_prime)?;
    }
    Ok(sum / unlabeled.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmm::{sample_labeled, sample_unlabeled, GmmSpec};
    use crate::models::LinearParams;

    fn toy() -> (LabeledSet, UnlabeledSet) {
        let spec = GmmSpec::isotropic_random_mean(5, 2.0, 1.0, 0).unwrap();
        (sample_labeled(&spec, 40, 1).unwrap(), sample_unlabeled(&spec, 200, 2).unwrap())
    }

    #[test]
    fn partition_covers_everything_once() {
        let p = partition(11, 2, 5);
        assert_eq!(p.len(), 2);
        let mut all: Vec<usize> = p.concat();
        all.sort_unstable();
        assert_eq!(all, (0..11).collect::<Vec<_>>());
        assert_eq!(partition(1, 2, 0).len(), 1);
    }

    #[test]
    fn deterministic_under_seed() {
        let (l, u) = toy();
        let cfg = TrainConfig {
            epochs: 5,
            ..Default::default()
        };
        let a = train_rss(&l, &u, &cfg).unwrap();
        let b = train_rss(&l, &u, &cfg).unwrap();
        assert_eq!(a.epochs, b.epochs);
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn cached_path_matches_direct_path() {
        let (l, u) = toy();
        let mut cfg = TrainConfig {
            epochs: 3,
            ..Default::default()
        };
        cfg.robust.gamma_prime = 1e-3;
        let cache = UnlabeledCache::build(&u, cfg.batches, cfg.seed);
        let fast = train_rss_with(
            &l,
            &u,
            &cfg,
            TrainOptions {
                cache: Some(&cache),
                ..Default::default()
            },
        )
        .unwrap();
        let direct = run_inner(&l, Some(&u), &cfg, TrainOptions::default(), Mode::Rss, false).unwrap();
        for (a, b) in fast.model.params().iter().zip(direct.model.params()) {
            assert!((a - b).abs() < 1e-10);
        }
        for (a, b) in fast.epochs.iter().zip(&direct.epochs) {
            assert!((a.total - b.total).abs() < 1e-10);
        }
        let stale = UnlabeledCache::build(&u, cfg.batches, cfg.seed + 1);
        assert!(!stale.matches(&u, &cfg));
    }

    #[test]
    fn lambda_zero_objective_is_labeled_term() {
        let (l, u) = toy();
        let m = Model::Linear(LinearParams::new(vec![1.0, 0.5, 0.0, 0.0, 0.2], None, true).unwrap());
        let mut rc = RobustConfig {
            lambda: 0.0,
            ..Default::default()
        };
        let o = rss_objective(&m, &l, &u, &rc).unwrap();
        assert_eq!(o.total, o.labeled);
        rc.lambda = 2.0;
        let o2 = rss_objective(&m, &l, &u, &rc).unwrap();
        assert_eq!(o2.labeled, o.labeled);
        assert!((o2.total - (o2.labeled + 2.0 * o2.unlabeled)).abs() < 1e-15);
    }

    #[test]
    fn boundary_point_gets_full_penalty() {
        let m = Model::Linear(LinearParams::new(vec![1.0, 0.0], None, true).unwrap());
        let l = LabeledSet::new(Matrix::from_rows(&[vec![5.0, 0.0]]).unwrap(), vec![1.0]).unwrap();
        let u = UnlabeledSet::new(Matrix::from_rows(&[vec![0.0, 3.0]]).unwrap()).unwrap();
        let rc = RobustConfig {
            lambda: 0.7,
            ..Default::default()
        };
        let o = rss_objective(&m, &l, &u, &rc).unwrap();
        assert_eq!(o.unlabeled, 1.0);
        assert!((o.total - o.labeled - 0.7).abs() < 1e-15);
    }

    #[test]
    fn empty_sets() {
        let (l, _) = toy();
        let empty = UnlabeledSet::new(Matrix::zeros(0, 5)).unwrap();
        let m = ModelSpec::default().build(5, 0).unwrap();
        let rc = RobustConfig::default();
        assert!(rss_objective(&m, &l, &empty, &rc).is_err());
        let rc0 = RobustConfig { lambda: 0.0, ..rc };
        assert!(rss_objective(&m, &l, &empty, &rc0).is_ok());
    }

    #[test]
    fn constrained_view_edges() {
        let (_, u) = toy();
        let m = ModelSpec::default().build(5, 0).unwrap();
        assert!(constrained_view_check(&m, &u, 0.5, 1.0).unwrap());
        let near = UnlabeledSet::new(Matrix::from_rows(&[vec![0.1, 0.0, 0.0, 0.0, 0.0]]).unwrap()).unwrap();
        assert!(!constrained_view_check(&m, &near, 1.0, 0.0).unwrap());
    }

    #[test]
    fn separable_toy_reaches_full_training_accuracy() {
        let x = Matrix::from_rows(&[vec![2.0, 0.3], vec![1.5, -0.4], vec![-1.8, 0.2], vec![-2.2, -0.1]]).unwrap();
        let l = LabeledSet::new(x, vec![1.0, 1.0, -1.0, -1.0]).unwrap();
        let mut cfg = TrainConfig {
            epochs: 100,
            learning_rate: 0.05,
            model: ModelSpec::Linear {
                bias: false,
                normalize: true,
            },
            ..Default::default()
        };
        cfg.robust.lambda = 0.0;
        cfg.robust.gamma = 1.0;
        let init = Model::Linear(LinearParams::new(vec![0.0, 1.0], None, true).unwrap());
        let r = train_erm_with(
            &l,
            &cfg,
            TrainOptions {
                initial: Some(&init),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(r.model.accuracy(&l).unwrap(), 1.0);
    }
}
