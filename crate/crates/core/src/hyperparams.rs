//! Plug-in hyperparameters and the random search harness.
//!
//! Every asymptotic term in the plug-in formulas is evaluated with constant 1
//! (`O(d/n) := d/n`); absolute values are convention-dependent, trends are not.

use std::io::Write;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::SpectralConstants;
use crate::dataset::UnlabeledSet;
use crate::error::{Error, Result};
use crate::linalg;

/// Split identifier for estimates computed on the training set itself.
pub const FULL_SPLIT: &str = "full";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralEstimate {
    pub lambda_max_hat: f64,
    pub trace_hat: f64,
    pub n_used: usize,
    pub split_id: String,
}

/// Seeded half/half split of an unlabeled set.
#[derive(Debug, Clone)]
pub struct UnlabeledSplit {
    pub id: String,
    pub train: UnlabeledSet,
    pub held_out: UnlabeledSet,
}

pub fn split_unlabeled(unlabeled: &UnlabeledSet, seed: u64) -> Result<UnlabeledSplit> {
    if unlabeled.len() < 2 {
        return Err(Error::InvalidInput("need at least 2 unlabeled rows to split".into()));
    }
    let mut idx: Vec<usize> = (0..unlabeled.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let half = unlabeled.len() / 2;
    Ok(UnlabeledSplit {
        id: format!("heldout-{seed}"),
        train: unlabeled.select(&idx[half..]),
        held_out: unlabeled.select(&idx[..half]),
    })
}

const POWER_TOL: f64 = 1e-8;
const POWER_SEED: u64 = 0x5eed;

/// Top eigenvalue of the uncentered second moment `(1/n) sum x x^T` by power
/// iteration (relative tolerance 1e-8 or the iteration cap) and its exact trace.
pub fn estimate_spectrum(unlabeled: &UnlabeledSet, iterations: usize) -> Result<SpectralEstimate> {
    estimate_spectrum_tagged(unlabeled, iterations, FULL_SPLIT)
}

/// Estimate on the held-out half of a split, tagged with the split id.
pub fn estimate_spectrum_split(split: &UnlabeledSplit, iterations: usize) -> Result<SpectralEstimate> {
    estimate_spectrum_tagged(&split.held_out, iterations, &split.id)
}

fn estimate_spectrum_tagged(unlabeled: &UnlabeledSet, iterations: usize, split_id: &str) -> Result<SpectralEstimate> {
    let n = unlabeled.len();
    if n < 2 {
        return Err(Error::InvalidInput("spectral estimate needs n >= 2".into()));
    }
    let x = unlabeled.features();
    let d = x.cols();
    let trace = x.as_slice().iter().map(|v| v * v).sum::<f64>() / n as f64;
    if trace == 0.0 {
        return Err(Error::DegenerateSpectrum);
    }
    // explicit d x d moment when cheap, matrix-free products otherwise
    let moment: Option<DMatrix<f64>> = (d <= 256).then(|| x.second_moment());
    let apply = |v: &[f64]| -> Vec<f64> {
        match &moment {
            Some(m) => (m * nalgebra::DVector::from_column_slice(v)).as_slice().to_vec(),
            None => {
                let mut out = vec![0.0; d];
                for r in x.iter_rows() {
                    linalg::axpy(linalg::dot(r, v), r, &mut out);
                }
                out.iter_mut().for_each(|o| *o /= n as f64);
                out
            }
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(POWER_SEED);
    let start: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut v = linalg::normalized(&start)?;
    let mut lambda = 0.0;
    for _ in 0..iterations.max(1) {
        let w = apply(&v);
        let next = linalg::dot(&v, &w);
        let norm = linalg::norm(&w);
        if norm == 0.0 {
            break;
        }
        v = w.iter().map(|x| x / norm).collect();
        let done = (next - lambda).abs() <= POWER_TOL * next.abs();
        lambda = next;
        if done {
            break;
        }
    }
    Ok(SpectralEstimate {
        lambda_max_hat: lambda.min(trace),
        trace_hat: trace,
        n_used: n,
        split_id: split_id.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IsotropicPrescription {
    pub gamma: f64,
    pub gamma_prime: f64,
    pub s: f64,
    pub feasible: bool,
    pub warning: Option<String>,
    /// λ has no closed prescription; it is left to the search.
    pub lambda_note: &'static str,
}

const LAMBDA_NOTE: &str = "lambda is obtained by random search; (gamma', s) is its constrained-form surrogate";

fn log_inv_delta(delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidInput(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok((1.0 / delta).ln())
}

/// Isotropic plug-ins:
/// `gamma' = 1 / (l ln n + d/n)`, `s = 1 - gamma' (l (1 - alpha) - 3 sqrt(d/n))`,
/// and `gamma = e^{-l/(4 s0^2)} / sqrt(2 s0 sqrt(2 pi)) * (sqrt((2d/m)(alpha l + sqrt((2d + 2L)/(2n+m)))) + sqrt(2L/m))^{-1/4}`
/// with `l` the estimated top eigenvalue, `s0` the labeled scale and `L = ln(1/delta)`.
pub fn prescribe_isotropic(
    est: &SpectralEstimate,
    m: usize,
    n: usize,
    d: usize,
    delta: f64,
    alpha: f64,
    sigma0_hat: f64,
) -> Result<IsotropicPrescription> {
    if n < 2 || m == 0 || d == 0 {
        return Err(Error::InvalidInput("need n >= 2, m >= 1, d >= 1".into()));
    }
    let l = est.lambda_max_hat;
    if !(l > 0.0 && sigma0_hat > 0.0 && alpha >= 0.0) {
        return Err(Error::InvalidInput("lambda_max, sigma0 must be positive and alpha nonnegative".into()));
    }
    let big_l = log_inv_delta(delta)?;
    let (m_f, n_f, d_f) = (m as f64, n as f64, d as f64);
    let gamma_prime = 1.0 / (l * n_f.ln() + d_f / n_f);
    let s = 1.0 - gamma_prime * (l * (1.0 - alpha) - 3.0 * (d_f / n_f).sqrt());
    let rate = ((2.0 * d_f / m_f) * (alpha * l + ((2.0 * d_f + 2.0 * big_l) / (2.0 * n_f + m_f)).sqrt())).sqrt()
        + (2.0 * big_l / m_f).sqrt();
    let pre = (-l / (4.0 * sigma0_hat * sigma0_hat)).exp() / (2.0 * sigma0_hat * (2.0 * std::f64::consts::PI).sqrt()).sqrt();
    let gamma = pre * rate.powf(-0.25);
    let feasible = (0.0..=1.0).contains(&s);
    Ok(IsotropicPrescription {
        gamma,
        gamma_prime,
        s,
        feasible,
        warning: (!feasible).then(|| format!("s = {s} lies outside [0, 1]; fall back to search")),
        lambda_note: LAMBDA_NOTE,
    })
}

/// Distribution constants needed by the general plug-ins.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneralInputs {
    pub spectral: SpectralConstants,
    /// `mu1^T Sigma1^{-1} mu1`
    pub mu1_inv_quad: f64,
    pub trace_sigma1: f64,
    pub mu1_norm_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneralPrescription {
    pub gamma_prime: f64,
    pub s: f64,
    pub t_prime: f64,
    pub gamma: f64,
}

/// General-covariance plug-ins:
/// `gamma' = 2 exp(-(beta/2) sqrt(l))`,
/// `s = inf + 12 gamma' Tr / sqrt(n) + 2 sqrt(L/n) + 16 sqrt(d/n) + alpha`,
/// `gamma = sqrt(sqrt(m) / (2 t' lambda_max))` with `t'` as in the proof.
/// The estimate must come from a held-out split.
#[allow(clippy::too_many_arguments)]
pub fn prescribe_general(
    est: &SpectralEstimate,
    inf_empirical_term: f64,
    alpha: f64,
    beta: f64,
    m: usize,
    n: usize,
    d: usize,
    delta: f64,
    inputs: &GeneralInputs,
) -> Result<GeneralPrescription> {
    if est.split_id == FULL_SPLIT {
        return Err(Error::InvalidInput(
            "general plug-ins need an estimate from an independent split".into(),
        ));
    }
    if n == 0 || m == 0 || d == 0 {
        return Err(Error::InvalidInput("counts must be positive".into()));
    }
    if inputs.spectral.gap <= 0.0 {
        return Err(Error::DegenerateGap);
    }
    let big_l = log_inv_delta(delta)?;
    let (m_f, n_f, d_f) = (m as f64, n as f64, d as f64);
    let gamma_prime = 2.0 * (-(beta / 2.0) * est.lambda_max_hat.sqrt()).exp();
    let s = inf_empirical_term
        + 12.0 * gamma_prime * est.trace_hat / n_f.sqrt()
        + 2.0 * (big_l / n_f).sqrt()
        + 16.0 * (d_f / n_f).sqrt()
        + alpha;
    let sc = &inputs.spectral;
    let bracket = 18.0 * gamma_prime * gamma_prime * (inputs.trace_sigma1 + inputs.mu1_norm_sq)
        + 5.0 * gamma_prime * big_l.sqrt()
        + 24.0 * d_f.sqrt()
        + 4.0 * alpha * (n_f * gamma_prime).sqrt();
    let t_prime = ((d_f * sc.kappa1 * sc.kappa1_prime / sc.gap) * (inputs.mu1_inv_quad / 2.0).exp() * bracket
        / (2.0 * n_f.sqrt()))
    .sqrt();
    let gamma = (m_f.sqrt() / (2.0 * t_prime * sc.lambda_max)).sqrt();
    Ok(GeneralPrescription {
        gamma_prime,
        s,
        t_prime,
        gamma,
    })
}

/// Approximates `inf over unit theta of (1/n) sum max(0, 1 - gamma' <theta, x>^2)`
/// by projected gradient descent started from the top eigenvector of the
/// second moment (the minimizer whenever no point is clipped).
pub fn inf_unlabeled_term(unlabeled: &UnlabeledSet, gamma_prime: f64, iterations: usize) -> Result<f64> {
    let n = unlabeled.len();
    if n == 0 {
        return Err(Error::InvalidInput("unlabeled set is empty".into()));
    }
    let x = unlabeled.features();
    let d = x.cols();
    let moment = x.second_moment();
    let eig = moment.symmetric_eigen();
    let top = eig.eigenvalues.imax();
    let mut theta: Vec<f64> = eig.eigenvectors.column(top).iter().copied().collect();
    let value = |t: &[f64]| -> f64 {
        x.iter_rows()
            .map(|r| {
                let f = linalg::dot(t, r);
                (1.0 - gamma_prime * f * f).max(0.0)
            })
            .sum::<f64>()
            / n as f64
    };
    let mut best = value(&theta);
    for k in 0..iterations {
        let mut g = vec![0.0; d];
        for r in x.iter_rows() {
            let f = linalg::dot(&theta, r);
            if gamma_prime * f * f < 1.0 {
                linalg::axpy(-2.0 * gamma_prime * f / n as f64, r, &mut g);
            }
        }
        let radial = linalg::dot(&g, &theta);
        linalg::axpy(-radial, &theta.clone(), &mut g);
        let gn = linalg::norm(&g);
        if gn < 1e-12 {
            break;
        }
        let step = 0.5 / (1.0 + k as f64).sqrt();
        let cand: Vec<f64> = theta.iter().zip(&g).map(|(t, gi)| t - step * gi / gn).collect();
        theta = linalg::normalized(&cand)?;
        best = best.min(value(&theta));
    }
    Ok(best)
}

/// Inclusive integer exponent range `[lo, hi]`; values are `10^e`.
pub type ExponentRange = (i32, i32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub learning_rate: ExponentRange,
    pub weight_decay: ExponentRange,
    pub lambda: ExponentRange,
    pub alpha: ExponentRange,
    pub gamma: ExponentRange,
    pub gamma_prime: ExponentRange,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            learning_rate: (-5, -1),
            weight_decay: (-7, -2),
            lambda: (-5, 2),
            alpha: (-5, 1),
            gamma: (-7, 2),
            gamma_prime: (-7, 2),
        }
    }
}

impl SearchSpace {
    fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in self.ranges() {
            if lo > hi {
                return Err(Error::Config(format!("empty exponent range for {name}: [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    fn ranges(&self) -> [(&'static str, ExponentRange); 6] {
        [
            ("learning_rate", self.learning_rate),
            ("weight_decay", self.weight_decay),
            ("lambda", self.lambda),
            ("alpha", self.alpha),
            ("gamma", self.gamma),
            ("gamma_prime", self.gamma_prime),
        ]
    }

    /// Draws one exponent per hyperparameter, in a fixed order.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Exponents {
        let mut draw = |(lo, hi): ExponentRange| rng.random_range(lo..=hi);
        Exponents {
            learning_rate: draw(self.learning_rate),
            weight_decay: draw(self.weight_decay),
            lambda: draw(self.lambda),
            alpha: draw(self.alpha),
            gamma: draw(self.gamma),
            gamma_prime: draw(self.gamma_prime),
        }
    }
}

/// Base-10 exponents of one configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exponents {
    pub learning_rate: i32,
    pub weight_decay: i32,
    pub lambda: i32,
    pub alpha: i32,
    pub gamma: i32,
    pub gamma_prime: i32,
}

impl Exponents {
    pub fn values(&self) -> Hyper {
        let p = |e: i32| 10f64.powi(e);
        Hyper {
            learning_rate: p(self.learning_rate),
            weight_decay: p(self.weight_decay),
            lambda: p(self.lambda),
            alpha: p(self.alpha),
            gamma: p(self.gamma),
            gamma_prime: p(self.gamma_prime),
        }
    }
}

/// Hyperparameter values handed to the objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub gamma_prime: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial: usize,
    pub exponents: Exponents,
    /// Validation accuracy, or the failure message.
    pub outcome: std::result::Result<f64, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub best: Option<(usize, Exponents, f64)>,
    pub log: Vec<TrialRecord>,
}

impl SearchResult {
    pub fn write_log<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "trial",
            "learning_rate_exp",
            "weight_decay_exp",
            "lambda_exp",
            "alpha_exp",
            "gamma_exp",
            "gamma_prime_exp",
            "validation_accuracy",
            "status",
        ])?;
        for r in &self.log {
            let e = r.exponents;
            let (acc, status) = match &r.outcome {
                Ok(a) => (format!("{a:?}"), "ok".to_string()),
                Err(msg) => (String::new(), format!("failed: {msg}")),
            };
            w.write_record([
                r.trial.to_string(),
                e.learning_rate.to_string(),
                e.weight_decay.to_string(),
                e.lambda.to_string(),
                e.alpha.to_string(),
                e.gamma.to_string(),
                e.gamma_prime.to_string(),
                acc,
                status,
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Samples `trials` configurations up front, evaluates them (in parallel),
/// and returns the first configuration reaching the highest score. Failed
/// trials are logged and skipped.
pub fn random_search<F>(space: &SearchSpace, trials: usize, objective: F, seed: u64) -> Result<SearchResult>
where
    F: Fn(&Hyper) -> std::result::Result<f64, String> + Sync,
{
    if trials == 0 {
        return Err(Error::Config("random search needs at least one trial".into()));
    }
    space.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let configs: Vec<Exponents> = (0..trials).map(|_| space.sample(&mut rng)).collect();
    let log: Vec<TrialRecord> = configs
        .par_iter()
        .enumerate()
        .map(|(trial, e)| TrialRecord {
            trial,
            exponents: *e,
            outcome: objective(&e.values()).and_then(|v| {
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(format!("non-finite score {v}"))
                }
            }),
        })
        .collect();
    let mut best: Option<(usize, Exponents, f64)> = None;
    for r in &log {
        if let Ok(score) = r.outcome {
            if best.is_none_or(|(_, _, b)| score > b) {
                best = Some((r.trial, r.exponents, score));
            }
        }
    }
    Ok(SearchResult { best, log })
}
