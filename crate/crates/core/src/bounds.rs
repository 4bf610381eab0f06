//! Generalization-bound residuals, regime conditions, and the analytic gap
//! between the robust surrogate and the 0-1 risk.
//!
//! Every `O(.)` is evaluated with constant 1. The resulting numbers depend on
//! that convention; only their monotonicity and relative comparisons carry
//! meaning. Each report carries the flag.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::{Covariance, GmmSpec};
use crate::linalg;

/// Relative tolerance under which two eigenvalues count as equal.
pub const EIGEN_GAP_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct BoundInputs {
    pub m: usize,
    pub n: usize,
    pub d: usize,
    pub alpha: f64,
    pub delta: f64,
    pub gamma: f64,
    /// `|mu1| >= beta lambda_max(Sigma1)` constant.
    pub beta: f64,
    pub mu0: Vec<f64>,
    pub mu1: Vec<f64>,
    pub cov0: Covariance,
    pub cov1: Covariance,
}

impl BoundInputs {
    /// Isotropic inputs built from norms only; means lie along `e_1`.
    #[allow(clippy::too_many_arguments)]
    pub fn isotropic(
        m: usize,
        n: usize,
        d: usize,
        alpha: f64,
        delta: f64,
        gamma: f64,
        mu0_norm: f64,
        sigma0: f64,
        mu1_norm: f64,
        sigma1: f64,
    ) -> Self {
        let axis = |s: f64| {
            let mut v = vec![0.0; d.max(1)];
            v[0] = s;
            v
        };
        Self {
            m,
            n,
            d,
            alpha,
            delta,
            gamma,
            beta: 1.0,
            mu0: axis(mu0_norm),
            mu1: axis(mu1_norm),
            cov0: Covariance::isotropic(sigma0),
            cov1: Covariance::isotropic(sigma1),
        }
    }

    pub fn from_spec(spec: &GmmSpec, m: usize, n: usize, delta: f64, gamma: f64) -> Self {
        Self {
            m,
            n,
            d: spec.dim(),
            alpha: spec.alpha(),
            delta,
            gamma,
            beta: 1.0,
            mu0: spec.mu0().to_vec(),
            mu1: spec.mu1().to_vec(),
            cov0: spec.cov0().clone(),
            cov1: spec.cov1().clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 || self.d == 0 {
            return Err(Error::InvalidInput("m, n, d must be at least 1".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidInput(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidInput(format!("alpha must be nonnegative, got {}", self.alpha)));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::InvalidInput(format!("gamma must be positive, got {}", self.gamma)));
        }
        if self.mu0.len() != self.mu1.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mu0.len(),
                found: self.mu1.len(),
            });
        }
        Ok(())
    }

    fn log_inv_delta(&self) -> f64 {
        (1.0 / self.delta).ln()
    }

    /// Scalar variance proxy: `sigma^2` for isotropic, `lambda_max` otherwise.
    fn variance(cov: &Covariance, d: usize) -> f64 {
        match cov {
            Covariance::Isotropic { sigma } => sigma * sigma,
            Covariance::Full(_) => *cov.eigenvalues(d).last().unwrap_or(&0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub theorem: &'static str,
    pub residual: f64,
    /// Named factors and terms, in evaluation order.
    pub breakdown: Vec<(String, f64)>,
    /// Always true: asymptotic constants are set to 1.
    pub constant_one: bool,
    pub flags: Vec<(String, bool)>,
}

impl BoundReport {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.breakdown.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }
}

fn report(theorem: &'static str, residual: f64, breakdown: Vec<(&str, f64)>) -> BoundReport {
    BoundReport {
        theorem,
        residual,
        breakdown: breakdown.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        constant_one: true,
        flags: Vec::new(),
    }
}

/// `gamma sqrt((2d/m)(alpha(|mu0|^2 + s0^2) + sqrt(2d/(2n+m)) + sqrt(2L/(2n+m)))) + sqrt(2L/m)`
pub fn thm1_residual(inp: &BoundInputs) -> Result<BoundReport> {
    inp.validate()?;
    let (m, n, d) = (inp.m as f64, inp.n as f64, inp.d as f64);
    let l = inp.log_inv_delta();
    let s0 = BoundInputs::variance(&inp.cov0, inp.d);
    let alpha_term = inp.alpha * (linalg::dot(&inp.mu0, &inp.mu0) + s0);
    let n_term = (2.0 * d / (2.0 * n + m)).sqrt() + (2.0 * l / (2.0 * n + m)).sqrt();
    let robust_term = inp.gamma * ((2.0 * d / m) * (alpha_term + n_term)).sqrt();
    let m_term = (2.0 * l / m).sqrt();
    Ok(report(
        "thm1",
        robust_term + m_term,
        vec![
            ("alpha_term", alpha_term),
            ("n_term", n_term),
            ("robust_term", robust_term),
            ("m_term", m_term),
        ],
    ))
}

/// `e^{-|mu0|^2/(4 s0^2)} / sqrt(2 s0 sqrt(2 pi)) * ((|mu1|^2 + s1^2) 2 d alpha / m +
/// (4d/m) sqrt((2d + 2L)/(2n+m)))^{1/4} + sqrt(2L/m)`, with `s0`, `s1` the
/// component standard deviations.
pub fn thm2_residual(inp: &BoundInputs) -> Result<BoundReport> {
    inp.validate()?;
    let (m, n, d) = (inp.m as f64, inp.n as f64, inp.d as f64);
    let l = inp.log_inv_delta();
    let s0 = BoundInputs::variance(&inp.cov0, inp.d).sqrt();
    let s1_sq = BoundInputs::variance(&inp.cov1, inp.d);
    let mu0_sq = linalg::dot(&inp.mu0, &inp.mu0);
    let mu1_sq = linalg::dot(&inp.mu1, &inp.mu1);
    let prefactor = (-mu0_sq / (4.0 * s0 * s0)).exp() / (2.0 * s0 * (2.0 * std::f64::consts::PI).sqrt()).sqrt();
    let alpha_term = (mu1_sq + s1_sq) * 2.0 * d * inp.alpha / m;
    let n_term = (4.0 * d / m) * ((2.0 * d + 2.0 * l) / (2.0 * n + m)).sqrt();
    let m_term = (2.0 * l / m).sqrt();
    let main = prefactor * (alpha_term + n_term).powf(0.25);
    Ok(report(
        "thm2",
        main + m_term,
        vec![
            ("prefactor", prefactor),
            ("alpha_term", alpha_term),
            ("n_term", n_term),
            ("main_term", main),
            ("m_term", m_term),
        ],
    ))
}

/// Eigen-structure constants of a covariance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralConstants {
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Smallest gap between distinct eigenvalues.
    pub gap: f64,
    pub kappa1: f64,
    pub kappa1_prime: f64,
}

/// `kappa1 = lmax/lmin`, `kappa1' = lmax/gap`, where `gap` is the smallest
/// difference between eigenvalues further apart than `1e-8 lmax`.
pub fn spectral_constants(cov: &Covariance, d: usize) -> Result<SpectralConstants> {
    spectral_constants_from_eigenvalues(&cov.eigenvalues(d))
}

pub fn spectral_constants_from_eigenvalues(eigenvalues: &[f64]) -> Result<SpectralConstants> {
    let mut ev = eigenvalues.to_vec();
    ev.sort_by(f64::total_cmp);
    let (lmin, lmax) = match (ev.first(), ev.last()) {
        (Some(&a), Some(&b)) if a > 0.0 => (a, b),
        _ => return Err(Error::InvalidInput("eigenvalues must be positive".into())),
    };
    let tol = EIGEN_GAP_TOL * lmax;
    let gap = ev
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|&g| g > tol)
        .fold(f64::INFINITY, f64::min);
    if !gap.is_finite() {
        return Err(Error::DegenerateGap);
    }
    Ok(SpectralConstants {
        lambda_min: lmin,
        lambda_max: lmax,
        gap,
        kappa1: lmax / lmin,
        kappa1_prime: lmax / gap,
    })
}

/// `e^{theta^2} (sqrt((|mu1|^2 + Tr S1)/m) (C alpha + sqrt(L/(2n+m))) d k1 k1' / gap)^{1/2} + sqrt(L/m)`
/// with `theta = |mu1 S1^-1 mu1 - mu0 S0^-1 mu0|` and
/// `C = (|mu0|^2 + lmin |mu0|) / lmin^2`; the whole bracket is raised to 1/2.
pub fn thm3_residual(inp: &BoundInputs) -> Result<BoundReport> {
    inp.validate()?;
    let (m, n, d) = (inp.m as f64, inp.n as f64, inp.d as f64);
    let l = inp.log_inv_delta();
    let sc = spectral_constants(&inp.cov1, inp.d)?;
    let vartheta = (inp.cov1.inv_quad_form(&inp.mu1) - inp.cov0.inv_quad_form(&inp.mu0)).abs();
    let mu0_norm = linalg::norm(&inp.mu0);
    let c = (mu0_norm * mu0_norm + sc.lambda_min * mu0_norm) / (sc.lambda_min * sc.lambda_min);
    let scale = ((linalg::dot(&inp.mu1, &inp.mu1) + inp.cov1.trace(inp.d)) / m).sqrt();
    let shift = c * inp.alpha + (l / (2.0 * n + m)).sqrt();
    let spectral = d * sc.kappa1 * sc.kappa1_prime / sc.gap;
    let main = (vartheta * vartheta).exp() * (scale * shift * spectral).sqrt();
    let m_term = (l / m).sqrt();
    Ok(report(
        "thm3",
        main + m_term,
        vec![
            ("vartheta", vartheta),
            ("C", c),
            ("kappa1", sc.kappa1),
            ("kappa1_prime", sc.kappa1_prime),
            ("gap", sc.gap),
            ("scale", scale),
            ("shift", shift),
            ("main_term", main),
            ("m_term", m_term),
        ],
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SampleRegime {
    /// `alpha <= d/m` and `n >= m^2/d`.
    pub advantage: bool,
    /// `alpha <= 1/d` and `n >= d^3`.
    pub dim_free: bool,
}

/// Regime conditions; count comparisons are done in exact integer arithmetic.
pub fn sample_regime(m: u64, n: u64, d: u64, alpha: f64) -> SampleRegime {
    let (m128, n128, d128) = (m as u128, n as u128, d as u128);
    SampleRegime {
        advantage: alpha * m as f64 <= d as f64 && n128 * d128 >= m128 * m128,
        dim_free: alpha * d as f64 <= 1.0 && n128 >= d128 * d128 * d128,
    }
}

/// Upper bound on `E[phi_gamma] - E[l]` for unit `theta`:
/// `e^{-<theta,mu>^2/(2 s^2)} / (2 gamma s sqrt(2 pi))` in the isotropic case
/// and `e^{-<theta,mu0>^2/(2 theta^T S0 theta)} / (2 gamma)` otherwise.
pub fn robust_gap_bound(theta: &[f64], gamma: f64, spec: &GmmSpec) -> Result<f64> {
    if theta.len() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            found: theta.len(),
        });
    }
    linalg::require_unit(theta)?;
    if !(gamma > 0.0) {
        return Err(Error::InvalidInput(format!("gamma must be positive, got {gamma}")));
    }
    let a = linalg::dot(theta, spec.mu0());
    Ok(match spec.cov0() {
        Covariance::Isotropic { sigma } => {
            (-a * a / (2.0 * sigma * sigma)).exp() / (2.0 * gamma * sigma * (2.0 * std::f64::consts::PI).sqrt())
        }
        cov @ Covariance::Full(_) => (-a * a / (2.0 * cov.quad_form(theta))).exp() / (2.0 * gamma),
    })
}

/// Isotropic bound sweep over a cartesian grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundGrid {
    pub m: Vec<usize>,
    pub n: Vec<usize>,
    pub d: Vec<usize>,
    pub alpha: Vec<f64>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "one")]
    pub gamma: f64,
    #[serde(default = "one")]
    pub mu0_norm: f64,
    #[serde(default = "one")]
    pub sigma0: f64,
    #[serde(default = "one")]
    pub mu1_norm: f64,
    #[serde(default = "one")]
    pub sigma1: f64,
    /// When set, the third theorem is also evaluated with
    /// `Sigma0 = Sigma1 = diag(eigenvalues)` (length must equal each `d`).
    #[serde(default)]
    pub eigenvalues: Option<Vec<f64>>,
}

impl Default for BoundGrid {
    fn default() -> Self {
        Self {
            m: vec![10, 100, 1000],
            n: vec![10, 100, 1000, 10_000],
            d: vec![200],
            alpha: vec![0.0, 0.5],
            delta: default_delta(),
            gamma: 1.0,
            mu0_norm: 1.0,
            sigma0: 1.0,
            mu1_norm: 1.0,
            sigma1: 1.0,
            eigenvalues: None,
        }
    }
}

fn default_delta() -> f64 {
    0.05
}

fn one() -> f64 {
    1.0
}

/// Column order of the sweep CSV.
pub const SWEEP_COLUMNS: [&str; 17] = [
    "m",
    "n",
    "d",
    "alpha",
    "delta",
    "gamma",
    "thm1_residual",
    "thm1_alpha_term",
    "thm1_n_term",
    "thm1_m_term",
    "thm2_residual",
    "thm2_prefactor",
    "thm2_main_term",
    "thm2_m_term",
    "thm3_residual",
    "cor1_advantage",
    "cor1_dim_free",
];

/// Writes one row per grid cell (m outermost, alpha innermost).
pub fn write_bound_sweep<W: Write>(grid: &BoundGrid, out: W) -> Result<usize> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_COLUMNS)?;
    let mut rows = 0;
    for &m in &grid.m {
        for &n in &grid.n {
            for &d in &grid.d {
                for &alpha in &grid.alpha {
                    let inp = BoundInputs::isotropic(
                        m,
                        n,
                        d,
                        alpha,
                        grid.delta,
                        grid.gamma,
                        grid.mu0_norm,
                        grid.sigma0,
                        grid.mu1_norm,
                        grid.sigma1,
                    );
                    let t1 = thm1_residual(&inp)?;
                    let t2 = thm2_residual(&inp)?;
                    let t3 = match &grid.eigenvalues {
                        Some(ev) => {
                            let cov = Covariance::Full(crate::gmm::FullCovariance::from_diagonal(ev)?);
                            if ev.len() != d {
                                return Err(Error::DimensionMismatch { expected: d, found: ev.len() });
                            }
                            let general = BoundInputs {
                                cov0: cov.clone(),
                                cov1: cov,
                                ..inp.clone()
                            };
                            format!("{:?}", thm3_residual(&general)?.residual)
                        }
                        None => String::new(),
                    };
                    let c = sample_regime(m as u64, n as u64, d as u64, alpha);
                    let f = |v: Option<f64>| format!("{:?}", v.unwrap_or(f64::NAN));
                    w.write_record([
                        m.to_string(),
                        n.to_string(),
                        d.to_string(),
                        format!("{alpha:?}"),
                        format!("{:?}", grid.delta),
                        format!("{:?}", grid.gamma),
                        format!("{:?}", t1.residual),
                        f(t1.get("alpha_term")),
                        f(t1.get("n_term")),
                        f(t1.get("m_term")),
                        format!("{:?}", t2.residual),
                        f(t2.get("prefactor")),
                        f(t2.get("main_term")),
                        f(t2.get("m_term")),
                        t3,
                        c.advantage.to_string(),
                        c.dim_free.to_string(),
                    ])?;
                    rows += 1;
                }
            }
        }
    }
    w.flush()?;
    Ok(rows)
}

pub fn emit_bound_sweep(grid: &BoundGrid, path: impl AsRef<Path>) -> Result<usize> {
    if let Some(parent) = path.as_ref().parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    write_bound_sweep(grid, std::fs::File::create(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn thm1_limit_in_n() {
        let inp = BoundInputs::isotropic(100, usize::MAX / 4, 200, 0.0, 0.05, 1.0, 1.0, 1.0, 1.0, 1.0);
        let r = thm1_residual(&inp).unwrap();
        // the robust term decays like n^{-1/4}
        assert_abs_diff_eq!(r.get("m_term").unwrap(), (2.0 * 20f64.ln() / 100.0).sqrt(), epsilon = 1e-12);
        assert!(r.get("robust_term").unwrap() < 5e-4);
        assert!(r.constant_one);
    }

    #[test]
    fn corollary_examples() {
        assert!(sample_regime(100, 10_000, 200, 0.0).advantage);
        assert!(sample_regime(100, 50, 200, 0.0).advantage);
        assert!(!sample_regime(100, 49, 200, 0.0).advantage);
        assert!(!sample_regime(1, 999, 10, 0.0).dim_free);
        assert!(sample_regime(1, 1000, 10, 0.1).dim_free);
    }

    #[test]
    fn gap_bound_orthogonal() {
        let spec = GmmSpec::isotropic(vec![1.0, 0.0], 1.0).unwrap();
        let b = robust_gap_bound(&[0.0, 1.0], 1.0, &spec).unwrap();
        assert_abs_diff_eq!(b, 0.199_471_140_200_716_35, epsilon = 1e-12);
        assert!(robust_gap_bound(&[0.0, 1.0], 1e12, &spec).unwrap() < 1e-12);
    }

    #[test]
    fn diag_constants() {
        let sc = spectral_constants_from_eigenvalues(&[1.0, 2.0]).unwrap();
        assert_eq!((sc.kappa1, sc.gap, sc.kappa1_prime), (2.0, 1.0, 2.0));
        assert!(matches!(spectral_constants(&Covariance::isotropic(1.0), 3), Err(Error::DegenerateGap)));
        // repeated values are skipped, not treated as a zero gap
        let sc = spectral_constants_from_eigenvalues(&[1.0, 1.0, 3.0]).unwrap();
        assert_eq!(sc.gap, 2.0);
    }

    #[test]
    fn thm3_trivial_shift() {
        let spec = GmmSpec::general_from_eigenvalues(vec![1.0, 0.0], &[1.0, 2.0], 3).unwrap();
        let inp = BoundInputs::from_spec(&spec, 100, 1000, 0.05, 1.0);
        let r = thm3_residual(&inp).unwrap();
        assert_abs_diff_eq!(r.get("vartheta").unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn sweep_single_cell() {
        let grid = BoundGrid {
            m: vec![10],
            n: vec![100],
            d: vec![2],
            alpha: vec![0.0],
            delta: 0.05,
            gamma: 1.0,
            mu0_norm: 1.0,
            sigma0: 1.0,
            mu1_norm: 1.0,
            sigma1: 1.0,
            eigenvalues: Some(vec![1.0, 2.0]),
        };
        let mut buf = Vec::new();
        assert_eq!(write_bound_sweep(&grid, &mut buf).unwrap(), 1);
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with("m,n,d,alpha"));
    }
}
