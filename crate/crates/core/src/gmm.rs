//! Two-component Gaussian mixtures: the labeled distribution `P0`
//! (`y` uniform on ±1, `X | y ~ N(y mu0, Sigma0)`) and the shifted unlabeled
//! marginal `P1` (`1/2 N(mu1, Sigma1) + 1/2 N(-mu1, Sigma1)`).
//!
//! Misclassification is counted as `y <theta, x> <= 0`, so a point exactly on
//! the decision boundary is an error for risk purposes.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::{LabeledSet, UnlabeledSet};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

/// Shift constant: `|mu0 - mu1| <= K alpha` and likewise for the scale.
pub const SHIFT_CONSTANT: f64 = 1.0;

/// Covariance of one mixture component.
#[derive(Debug, Clone, PartialEq)]
pub enum Covariance {
    Isotropic { sigma: f64 },
    Full(FullCovariance),
}

/// An SPD matrix with its Cholesky factor and sorted spectrum cached.
#[derive(Debug, Clone, PartialEq)]
pub struct FullCovariance {
    matrix: DMatrix<f64>,
    chol: DMatrix<f64>,
    eigenvalues: Vec<f64>,
}

impl FullCovariance {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::InvalidSpec(format!(
                "covariance must be square and non-empty, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec("covariance has non-finite entries".into()));
        }
        let scale = matrix.amax().max(1.0);
        let asym = (&matrix - matrix.transpose()).amax();
        if asym > 1e-10 * scale {
            return Err(Error::InvalidSpec(format!(
                "covariance is not symmetric (max asymmetry {asym:e})"
            )));
        }
        let sym = (&matrix + matrix.transpose()) * 0.5;
        let mut eigenvalues: Vec<f64> = sym.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
        eigenvalues.sort_by(f64::total_cmp);
        if eigenvalues[0] <= 0.0 {
            return Err(Error::InvalidSpec(format!(
                "covariance is not positive definite (smallest eigenvalue {:e})",
                eigenvalues[0]
            )));
        }
        let chol = sym
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidSpec("Cholesky factorization failed".into()))?
            .l();
        Ok(Self {
            matrix: sym,
            chol,
            eigenvalues,
        })
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

impl Covariance {
    pub fn isotropic(sigma: f64) -> Self {
        Covariance::Isotropic { sigma }
    }

    pub fn full(matrix: DMatrix<f64>) -> Result<Self> {
        Ok(Covariance::Full(FullCovariance::new(matrix)?))
    }

    pub fn is_isotropic(&self) -> bool {
        matches!(self, Covariance::Isotropic { .. })
    }

    /// Dense `d x d` form.
    pub fn to_matrix(&self, d: usize) -> DMatrix<f64> {
        match self {
            Covariance::Isotropic { sigma } => DMatrix::identity(d, d) * (sigma * sigma),
            Covariance::Full(f) => f.matrix.clone(),
        }
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self, d: usize) -> Vec<f64> {
        match self {
            Covariance::Isotropic { sigma } => vec![sigma * sigma; d],
            Covariance::Full(f) => f.eigenvalues.clone(),
        }
    }

    pub fn trace(&self, d: usize) -> f64 {
        match self {
            Covariance::Isotropic { sigma } => d as f64 * sigma * sigma,
            Covariance::Full(f) => f.matrix.trace(),
        }
    }

    /// `v^T Sigma v`
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        match self {
            Covariance::Isotropic { sigma } => sigma * sigma * linalg::dot(v, v),
            Covariance::Full(f) => {
                let v = DVector::from_column_slice(v);
                v.dot(&(&f.matrix * &v))
            }
        }
    }

    /// `v^T Sigma^{-1} v`
    pub fn inv_quad_form(&self, v: &[f64]) -> f64 {
        match self {
            Covariance::Isotropic { sigma } => linalg::dot(v, v) / (sigma * sigma),
            Covariance::Full(f) => {
                let b = DVector::from_column_slice(v);
                let y = f
                    .chol
                    .solve_lower_triangular(&b)
                    .expect("Cholesky factor is non-singular");
                y.norm_squared()
            }
        }
    }

    fn validate(&self, d: usize, which: &str) -> Result<()> {
        match self {
            Covariance::Isotropic { sigma } => {
                if !(sigma.is_finite() && *sigma > 0.0) {
                    return Err(Error::InvalidSpec(format!("{which}: sigma must be positive, got {sigma}")));
                }
            }
            Covariance::Full(f) => {
                if f.dim() != d {
                    return Err(Error::InvalidSpec(format!(
                        "{which}: covariance is {}x{} but d = {d}",
                        f.dim(),
                        f.dim()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Adds one draw of `N(0, Sigma)` to `out`.
    fn add_noise<R: Rng>(&self, rng: &mut R, scratch: &mut [f64], out: &mut [f64]) {
        match self {
            Covariance::Isotropic { sigma } => {
                for o in out.iter_mut() {
                    let g: f64 = StandardNormal.sample(rng);
                    *o += sigma * g;
                }
            }
            Covariance::Full(f) => {
                for s in scratch.iter_mut() {
                    *s = StandardNormal.sample(rng);
                }
                let d = out.len();
                // L is lower triangular
                for i in 0..d {
                    let mut acc = 0.0;
                    for j in 0..=i {
                        acc += f.chol[(i, j)] * scratch[j];
                    }
                    out[i] += acc;
                }
            }
        }
    }
}

/// Labeled distribution `P0` and unlabeled distribution `P1`.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmSpec {
    mu0: Vec<f64>,
    cov0: Covariance,
    mu1: Vec<f64>,
    cov1: Covariance,
    alpha: f64,
}

impl GmmSpec {
    pub fn new(mu0: Vec<f64>, cov0: Covariance, mu1: Vec<f64>, cov1: Covariance, alpha: f64) -> Result<Self> {
        let d = mu0.len();
        if d == 0 {
            return Err(Error::InvalidSpec("dimension must be positive".into()));
        }
        if mu1.len() != d {
            return Err(Error::InvalidSpec(format!("mu1 has length {} but mu0 has {d}", mu1.len())));
        }
        if mu0.iter().chain(&mu1).any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec("means must be finite".into()));
        }
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::InvalidSpec(format!("alpha must be nonnegative, got {alpha}")));
        }
        cov0.validate(d, "cov0")?;
        cov1.validate(d, "cov1")?;

        let budget = SHIFT_CONSTANT * alpha;
        let slack = 1e-9 * (1.0 + budget);
        let mean_shift = linalg::distance(&mu0, &mu1);
        if mean_shift > budget + slack {
            return Err(Error::InvalidSpec(format!(
                "|mu0 - mu1| = {mean_shift} exceeds shift budget {budget}"
            )));
        }
        let scale_shift = match (&cov0, &cov1) {
            (Covariance::Isotropic { sigma: s0 }, Covariance::Isotropic { sigma: s1 }) => (s0 - s1).abs(),
            _ => {
                let diff = cov1.to_matrix(d) - cov0.to_matrix(d);
                diff.symmetric_eigen().eigenvalues.amax()
            }
        };
        if scale_shift > budget + slack {
            return Err(Error::InvalidSpec(format!(
                "covariance shift {scale_shift} exceeds shift budget {budget}"
            )));
        }
        Ok(Self {
            mu0,
            cov0,
            mu1,
            cov1,
            alpha,
        })
    }

    /// In-domain isotropic spec: `P1` has the same marginal as `P0`.
    pub fn isotropic(mu0: Vec<f64>, sigma: f64) -> Result<Self> {
        Self::new(mu0.clone(), Covariance::isotropic(sigma), mu0, Covariance::isotropic(sigma), 0.0)
    }

    /// Isotropic spec whose mean has the given norm along a seeded random direction.
    pub fn isotropic_random_mean(d: usize, mean_norm: f64, sigma: f64, seed: u64) -> Result<Self> {
        let v = random_unit_vector(d, seed)?;
        Self::isotropic(v.iter().map(|x| x * mean_norm).collect(), sigma)
    }

    /// In-domain spec with covariance `Q diag(eigenvalues) Q^T` for a seeded
    /// Haar-random orthogonal `Q`.
    pub fn general_from_eigenvalues(mu0: Vec<f64>, eigenvalues: &[f64], basis_seed: u64) -> Result<Self> {
        let d = mu0.len();
        if eigenvalues.len() != d {
            return Err(Error::InvalidSpec(format!(
                "{} eigenvalues given for d = {d}",
                eigenvalues.len()
            )));
        }
        if let Some(bad) = eigenvalues.iter().find(|&&l| !(l.is_finite() && l > 0.0)) {
            return Err(Error::InvalidSpec(format!("eigenvalue {bad} is not positive")));
        }
        let q = random_orthogonal(d, basis_seed);
        let diag = DMatrix::from_diagonal(&DVector::from_column_slice(eigenvalues));
        let m = &q * diag * q.transpose();
        let cov = Covariance::full((&m + m.transpose()) * 0.5)?;
        Self::new(mu0.clone(), cov.clone(), mu0, cov, 0.0)
    }

    pub fn dim(&self) -> usize {
        self.mu0.len()
    }

    pub fn mu0(&self) -> &[f64] {
        &self.mu0
    }

    pub fn mu1(&self) -> &[f64] {
        &self.mu1
    }

    pub fn cov0(&self) -> &Covariance {
        &self.cov0
    }

    pub fn cov1(&self) -> &Covariance {
        &self.cov1
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn is_isotropic(&self) -> bool {
        self.cov0.is_isotropic() && self.cov1.is_isotropic()
    }

    /// Bayes-optimal direction `Sigma0^{-1} mu0`, normalized. For isotropic
    /// specs this is `mu0 / |mu0|`.
    pub fn bayes_direction(&self) -> Result<Vec<f64>> {
        match &self.cov0 {
            Covariance::Isotropic { .. } => linalg::normalized(&self.mu0),
            Covariance::Full(f) => {
                let b = DVector::from_column_slice(&self.mu0);
                let w = f
                    .matrix
                    .clone()
                    .cholesky()
                    .expect("validated SPD")
                    .solve(&b);
                linalg::normalized(w.as_slice())
            }
        }
    }
}

fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniformly random unit vector in `R^d`.
pub fn random_unit_vector(d: usize, seed: u64) -> Result<Vec<f64>> {
    if d == 0 {
        return Err(Error::InvalidInput("dimension must be positive".into()));
    }
    let mut rng = rng_from(seed);
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        if linalg::norm(&v) > 1e-12 {
            return linalg::normalized(&v);
        }
    }
}

/// Haar-distributed orthogonal matrix via sign-corrected QR.
pub fn random_orthogonal(d: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = rng_from(seed);
    let g = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

fn check_count(k: usize, what: &str) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidInput(format!("{what} must be at least 1")));
    }
    Ok(())
}

/// `m` i.i.d. draws from `P0`.
pub fn sample_labeled(spec: &GmmSpec, m: usize, seed: u64) -> Result<LabeledSet> {
    check_count(m, "m")?;
    let mut rng = rng_from(seed);
    let labels: Vec<f64> = (0..m).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
    let features = draw_rows(spec.dim(), &labels, &spec.mu0, &spec.cov0, &mut rng);
    LabeledSet::new(features, labels)
}

/// Draws from `P0` with exactly balanced classes (the extra sample, if `m` is
/// odd, is positive). Used for test sets.
pub fn sample_labeled_balanced(spec: &GmmSpec, m: usize, seed: u64) -> Result<LabeledSet> {
    check_count(m, "m")?;
    let mut rng = rng_from(seed);
    let labels: Vec<f64> = (0..m).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let features = draw_rows(spec.dim(), &labels, &spec.mu0, &spec.cov0, &mut rng);
    LabeledSet::new(features, labels)
}

/// `n` i.i.d. draws from the `P1` marginal.
pub fn sample_unlabeled(spec: &GmmSpec, n: usize, seed: u64) -> Result<UnlabeledSet> {
    check_count(n, "n")?;
    let mut rng = rng_from(seed);
    let signs: Vec<f64> = (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
    let features = draw_rows(spec.dim(), &signs, &spec.mu1, &spec.cov1, &mut rng);
    UnlabeledSet::new(features)
}

fn draw_rows(d: usize, signs: &[f64], mu: &[f64], cov: &Covariance, rng: &mut ChaCha8Rng) -> Matrix {
    let mut features = Matrix::zeros(signs.len(), d);
    let mut scratch = vec![0.0; d];
    for (i, &y) in signs.iter().enumerate() {
        let row = features.row_mut(i);
        for (r, m) in row.iter_mut().zip(mu) {
            *r = y * m;
        }
        cov.add_noise(rng, &mut scratch, row);
    }
    features
}

/// Returns `base` with `mu1 = mu0 + alpha v` for a seeded uniformly random
/// unit `v`; the unlabeled covariance is set equal to the labeled one.
pub fn make_shifted_spec(base: &GmmSpec, alpha: f64, direction_seed: u64) -> Result<GmmSpec> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::InvalidInput(format!("alpha must be nonnegative, got {alpha}")));
    }
    let mu1 = if alpha == 0.0 {
        base.mu0.clone()
    } else {
        let v = random_unit_vector(base.dim(), direction_seed)?;
        base.mu0.iter().zip(&v).map(|(m, vi)| m + alpha * vi).collect()
    };
    GmmSpec::new(base.mu0.clone(), base.cov0.clone(), mu1, base.cov0.clone(), alpha)
}

/// Standard normal upper tail `Q(x) = P(Z > x)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    q_function(-x)
}

/// Exact 0-1 risk of `sign(<theta, .>)` under `P0`:
/// `Q(<theta, mu0> / sqrt(theta^T Sigma0 theta))`.
pub fn analytic_risk(theta: &[f64], spec: &GmmSpec) -> Result<f64> {
    if theta.len() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            found: theta.len(),
        });
    }
    linalg::require_unit(theta)?;
    let a = linalg::dot(theta, &spec.mu0);
    let s = spec.cov0.quad_form(theta).sqrt();
    Ok(q_function(a / s))
}

/// Fraction of rows with `y <theta, x> <= 0`.
pub fn empirical_risk(theta: &[f64], set: &LabeledSet) -> f64 {
    let errors = (0..set.len())
        .filter(|&i| {
            let (x, y) = set.sample(i);
            y * linalg::dot(theta, x) <= 0.0
        })
        .count();
    errors as f64 / set.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn q_function_values() {
        assert_abs_diff_eq!(q_function(0.0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(q_function(1.0), 0.158_655_253_931_457_05, epsilon = 1e-12);
        assert_abs_diff_eq!(normal_cdf(1.0), 0.841_344_746_068_542_9, epsilon = 1e-12);
    }

    #[test]
    fn analytic_risk_examples() {
        let spec = GmmSpec::isotropic(vec![1.0, 0.0], 1.0).unwrap();
        assert_abs_diff_eq!(analytic_risk(&[0.0, 1.0], &spec).unwrap(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(analytic_risk(&[1.0, 0.0], &spec).unwrap(), q_function(1.0), epsilon = 1e-15);
        assert!(matches!(analytic_risk(&[0.0, 0.0], &spec), Err(Error::ZeroTheta)));

        let cov = Covariance::full(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0]))).unwrap();
        let spec = GmmSpec::new(vec![1.0, 1.0], cov.clone(), vec![1.0, 1.0], cov, 0.0).unwrap();
        assert_abs_diff_eq!(analytic_risk(&[1.0, 0.0], &spec).unwrap(), q_function(1.0), epsilon = 1e-15);
    }

    #[test]
    fn seeded_sampling_is_deterministic() {
        let spec = GmmSpec::isotropic_random_mean(5, 1.0, 1.0, 3).unwrap();
        let a = sample_labeled(&spec, 50, 9).unwrap();
        let b = sample_labeled(&spec, 50, 9).unwrap();
        assert_eq!(a, b);
        let c = sample_labeled(&spec, 50, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn shifted_spec_moves_mean_by_alpha() {
        let base = GmmSpec::isotropic_random_mean(20, 1.0, 1.0, 1).unwrap();
        let same = make_shifted_spec(&base, 0.0, 5).unwrap();
        assert_eq!(same.mu1(), base.mu0());
        let s1 = make_shifted_spec(&base, 0.5, 5).unwrap();
        let s2 = make_shifted_spec(&base, 0.5, 6).unwrap();
        assert_abs_diff_eq!(linalg::distance(s1.mu1(), s1.mu0()), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(linalg::distance(s2.mu1(), s2.mu0()), 0.5, epsilon = 1e-12);
        assert_ne!(s1.mu1(), s2.mu1());
        assert_eq!(s1.cov1(), base.cov0());
        assert!(make_shifted_spec(&base, -1.0, 0).is_err());
    }

    #[test]
    fn invalid_specs_rejected() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(Covariance::full(bad), Err(Error::InvalidSpec(_))));
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(Covariance::full(asym).is_err());
        // mean shift larger than alpha
        let r = GmmSpec::new(
            vec![0.0],
            Covariance::isotropic(1.0),
            vec![1.0],
            Covariance::isotropic(1.0),
            0.5,
        );
        assert!(r.is_err());
        assert!(GmmSpec::isotropic(vec![1.0], 0.0).is_err());
    }

    #[test]
    fn general_spec_has_requested_spectrum() {
        let spec = GmmSpec::general_from_eigenvalues(vec![1.0, 0.0, 0.0], &[1.0, 2.0, 4.0], 7).unwrap();
        let ev = spec.cov0().eigenvalues(3);
        assert_abs_diff_eq!(ev[0], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(ev[1], 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(ev[2], 4.0, epsilon = 1e-10);
        let q = random_orthogonal(4, 2);
        let eye = &q * q.transpose();
        assert!((eye - DMatrix::identity(4, 4)).amax() < 1e-12);
    }

    #[test]
    fn inverse_quadratic_form() {
        let cov = Covariance::full(DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 4.0]))).unwrap();
        assert_abs_diff_eq!(cov.inv_quad_form(&[2.0, 2.0]), 2.0 + 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(Covariance::isotropic(2.0).inv_quad_form(&[2.0, 0.0]), 1.0, epsilon = 1e-15);
    }
}
