//! Robust surrogate `phi_gamma(x, y; theta) = sup_z l(z, y; theta) - gamma c(z, x)`.
//!
//! For a unit-norm linear classifier and the 0-1 loss the supremum has closed
//! forms: with `c = |.|_2` on labeled points it is the ramp
//! `min(1, max(0, 1 - gamma y <theta, x>))`, and with `c = |.|_2^2` on
//! self-labeled points it is `max(0, 1 - gamma' <theta, x>^2)`. Everything
//! else goes through the inner solver. The Wasserstein-radius term
//! `gamma * eps` of the dual is constant in `theta` and omitted.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inner::{adversarial_perturb, grid_oracle, InnerSolverConfig, InputLoss};
use crate::linalg;
use crate::models::LossKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostKind {
    /// `|x - z|_2`
    L2,
    /// `|x - z|_2^2`
    L2Squared,
}

impl CostKind {
    pub fn value(self, z: &[f64], x: &[f64]) -> f64 {
        let d2: f64 = z.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
        match self {
            CostKind::L2 => d2.sqrt(),
            CostKind::L2Squared => d2,
        }
    }

    /// Gradient in `z`; the `L2` cost uses 0 at `z = x`.
    pub fn grad_z(self, z: &[f64], x: &[f64]) -> Vec<f64> {
        let diff = linalg::sub(z, x);
        match self {
            CostKind::L2 => {
                let n = linalg::norm(&diff);
                if n == 0.0 {
                    vec![0.0; diff.len()]
                } else {
                    diff.into_iter().map(|v| v / n).collect()
                }
            }
            CostKind::L2Squared => diff.into_iter().map(|v| 2.0 * v).collect(),
        }
    }
}

/// How the per-sample surrogate is evaluated during training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Surrogate {
    /// Closed forms; linear unit-norm models only.
    ClosedForm,
    /// Inner gradient ascent on the given base loss, self-labels for the
    /// unlabeled term.
    Numeric { base: LossKind },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RobustConfig {
    pub gamma: f64,
    pub gamma_prime: f64,
    pub lambda: f64,
    pub labeled_cost: CostKind,
    pub unlabeled_cost: CostKind,
    pub inner: InnerSolverConfig,
    pub surrogate: Surrogate,
}

impl Default for RobustConfig {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            gamma_prime: 1.0,
            lambda: 1.0,
            labeled_cost: CostKind::L2,
            unlabeled_cost: CostKind::L2Squared,
            inner: InnerSolverConfig::default(),
            surrogate: Surrogate::ClosedForm,
        }
    }
}

impl RobustConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::Config(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(self.gamma_prime.is_finite() && self.gamma_prime > 0.0) {
            return Err(Error::Config(format!("gamma' must be positive, got {}", self.gamma_prime)));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::Config(format!("lambda must be nonnegative, got {}", self.lambda)));
        }
        if self.surrogate == Surrogate::ClosedForm
            && (self.labeled_cost != CostKind::L2 || self.unlabeled_cost != CostKind::L2Squared)
        {
            return Err(Error::Config(
                "closed forms need the L2 cost on labeled and squared L2 on unlabeled points".into(),
            ));
        }
        self.inner.validate()
    }

    /// Loss used for labeled points in closed-form mode.
    pub fn labeled_closed_kind(&self) -> LossKind {
        LossKind::Hinge01 { gamma: self.gamma }
    }

    /// Loss used for self-labeled points in closed-form mode.
    pub fn unlabeled_closed_kind(&self) -> LossKind {
        LossKind::SquaredMargin { gamma: self.gamma_prime }
    }
}

fn check_pair(theta: &[f64], x: &[f64]) -> Result<()> {
    if theta.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: theta.len(),
            found: x.len(),
        });
    }
    linalg::require_unit(theta)
}

/// `min(1, max(0, 1 - gamma y <theta, x>))` for unit `theta`.
pub fn phi_labeled_closed(theta: &[f64], x: &[f64], y: f64, gamma: f64) -> Result<f64> {
    check_pair(theta, x)?;
    Ok((1.0 - gamma * y * linalg::dot(theta, x)).clamp(0.0, 1.0))
}

/// `max(0, 1 - gamma' <theta, x>^2)` for unit `theta`.
pub fn phi_unlabeled_closed(theta: &[f64], x: &[f64], gamma_prime: f64) -> Result<f64> {
    check_pair(theta, x)?;
    let f = linalg::dot(theta, x);
    Ok((1.0 - gamma_prime * f * f).max(0.0))
}

/// Numeric surrogate and the maximizing point. Differentiable losses use
/// gradient ascent; others fall back to the grid oracle along the loss's
/// search direction with the config's grid settings.
pub fn phi_numeric(
    loss: &dyn InputLoss,
    x: &[f64],
    y: f64,
    gamma: f64,
    cost: CostKind,
    inner: &InnerSolverConfig,
) -> Result<(f64, Vec<f64>)> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidInput(format!("gamma must be positive, got {gamma}")));
    }
    if loss.value_and_grad(x, y)?.is_some() {
        let p = adversarial_perturb(loss, x, y, gamma, cost, inner)?;
        Ok((p.objective, p.z))
    } else {
        inner.validate()?;
        grid_oracle(loss, x, y, gamma, cost, inner.grid_range, inner.grid_step)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inner::{FnLoss, ModelLoss, ZeroOneLoss};
    use crate::models::{LinearParams, Model};
    use approx::assert_abs_diff_eq;

    #[test]
    fn labeled_closed_examples() {
        let th = [1.0, 0.0];
        assert_eq!(phi_labeled_closed(&th, &[2.0, 1.0], 1.0, 1.0).unwrap(), 0.0);
        assert_eq!(phi_labeled_closed(&th, &[-5.0, 1.0], 1.0, 0.3).unwrap(), 1.0);
        assert_abs_diff_eq!(phi_labeled_closed(&th, &[0.5, 1.0], 1.0, 1.0).unwrap(), 0.5);
        assert!(matches!(
            phi_labeled_closed(&[2.0, 0.0], &[0.5, 1.0], 1.0, 1.0),
            Err(Error::NonUnitTheta { .. })
        ));
    }

    #[test]
    fn unlabeled_closed_examples() {
        let th = [0.0, 1.0];
        assert_eq!(phi_unlabeled_closed(&th, &[3.0, 0.5], 4.0).unwrap(), 0.0);
        assert_eq!(phi_unlabeled_closed(&th, &[0.0, 0.0], 4.0).unwrap(), 1.0);
        assert_abs_diff_eq!(phi_unlabeled_closed(&th, &[0.0, 0.6], 1.0).unwrap(), 0.64, epsilon = 1e-15);
    }

    #[test]
    fn numeric_uses_grid_for_zero_one() {
        let loss = ZeroOneLoss { theta: vec![1.0, 0.0] };
        let inner = InnerSolverConfig {
            grid_range: 2.0,
            ..Default::default()
        };
        let (v, _) = phi_numeric(&loss, &[0.5, 0.0], 1.0, 1.0, CostKind::L2, &inner).unwrap();
        assert!((v - 0.5).abs() < 1e-3);
    }

    #[test]
    fn huge_gamma_pins_the_point() {
        let m = Model::Linear(LinearParams::new(vec![0.6, 0.8], None, true).unwrap());
        let loss = ModelLoss {
            model: &m,
            kind: LossKind::CrossEntropy,
        };
        let x = [0.3, -0.1];
        let inner = InnerSolverConfig {
            alpha: 1e-7,
            ..Default::default()
        };
        let (v, z) = phi_numeric(&loss, &x, 1.0, 1e6, CostKind::L2Squared, &inner).unwrap();
        let plain = m.loss(&x, 1.0, LossKind::CrossEntropy).unwrap();
        assert!((v - plain).abs() < 1e-6);
        assert!(linalg::distance(&z, &x) < 1e-6);
    }

    #[test]
    fn quadratic_toy() {
        let quad = FnLoss {
            dim: 2,
            value: |z: &[f64], _y: f64| linalg::dot(z, z),
            grad: |z: &[f64], _y: f64| z.iter().map(|v| 2.0 * v).collect(),
            direction: None,
        };
        let inner = InnerSolverConfig {
            steps: 300,
            alpha: 0.2,
            step_decay: crate::inner::StepDecay::Constant,
            ..Default::default()
        };
        let (v, z) = phi_numeric(&quad, &[1.0, 0.0], 0.0, 2.0, CostKind::L2Squared, &inner).unwrap();
        assert_abs_diff_eq!(v, 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(z[0], 2.0, epsilon = 1e-6);
    }

    #[test]
    fn closed_form_config_checks_costs() {
        let mut cfg = RobustConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.labeled_cost = CostKind::L2Squared;
        assert!(cfg.validate().is_err());
        cfg.surrogate = Surrogate::Numeric {
            base: LossKind::CrossEntropy,
        };
        assert!(cfg.validate().is_ok());
        cfg.gamma = 0.0;
        assert!(cfg.validate().is_err());
    }
}
