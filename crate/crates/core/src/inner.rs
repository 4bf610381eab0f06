//! Inner maximization `z -> l(z, y) - gamma c(z, x)` by gradient ascent, and a
//! brute-force line search used as a verification oracle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::losses::CostKind;
use crate::models::{LossKind, Model};

/// A loss seen as a function of the input point.
pub trait InputLoss: Sync {
    fn dim(&self) -> usize;

    fn value(&self, z: &[f64], y: f64) -> Result<f64>;

    /// `None` when the loss has no usable gradient in `z` (e.g. the 0-1 loss).
    fn value_and_grad(&self, z: &[f64], y: f64) -> Result<Option<(f64, Vec<f64>)>>;

    /// Unit direction along which the loss varies, if it depends on `z` only
    /// through one projection. The grid oracle searches this line.
    fn search_direction(&self) -> Option<Vec<f64>> {
        None
    }
}

/// A model's loss as a function of its input.
pub struct ModelLoss<'a> {
    pub model: &'a Model,
    pub kind: LossKind,
}

impl InputLoss for ModelLoss<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn value(&self, z: &[f64], y: f64) -> Result<f64> {
        self.model.loss(z, y, self.kind)
    }

    fn value_and_grad(&self, z: &[f64], y: f64) -> Result<Option<(f64, Vec<f64>)>> {
        self.model.loss_and_input_grad(z, y, self.kind).map(Some)
    }

    fn search_direction(&self) -> Option<Vec<f64>> {
        self.model.as_linear().and_then(|p| linalg::normalized(p.w()).ok())
    }
}

/// `1(y <theta, z> <= 0)`.
pub struct ZeroOneLoss {
    pub theta: Vec<f64>,
}

impl InputLoss for ZeroOneLoss {
    fn dim(&self) -> usize {
        self.theta.len()
    }

    fn value(&self, z: &[f64], y: f64) -> Result<f64> {
        Ok(if y * linalg::dot(&self.theta, z) <= 0.0 { 1.0 } else { 0.0 })
    }

    fn value_and_grad(&self, _z: &[f64], _y: f64) -> Result<Option<(f64, Vec<f64>)>> {
        Ok(None)
    }

    fn search_direction(&self) -> Option<Vec<f64>> {
        linalg::normalized(&self.theta).ok()
    }
}

/// Closure-backed loss, handy for toy objectives.
pub struct FnLoss<F, G> {
    pub dim: usize,
    pub value: F,
    pub grad: G,
    pub direction: Option<Vec<f64>>,
}

impl<F, G> InputLoss for FnLoss<F, G>
where
    F: Fn(&[f64], f64) -> f64 + Sync,
    G: Fn(&[f64], f64) -> Vec<f64> + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, z: &[f64], y: f64) -> Result<f64> {
        Ok((self.value)(z, y))
    }

    fn value_and_grad(&self, z: &[f64], y: f64) -> Result<Option<(f64, Vec<f64>)>> {
        Ok(Some(((self.value)(z, y), (self.grad)(z, y))))
    }

    fn search_direction(&self) -> Option<Vec<f64>> {
        self.direction.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepDecay {
    Constant,
    /// `alpha_t = alpha / t`, applied before the `t`-th update.
    DivideByStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum RadiusCap {
    Absolute(f64),
    /// `k * max(|x|, 1)`
    Relative(f64),
}

impl RadiusCap {
    pub fn resolve(self, x: &[f64]) -> f64 {
        match self {
            RadiusCap::Absolute(r) => r,
            RadiusCap::Relative(k) => k * linalg::norm(x).max(1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InnerSolverConfig {
    pub steps: usize,
    pub alpha: f64,
    pub step_decay: StepDecay,
    pub radius_cap: RadiusCap,
    /// Half-width of the grid used when the loss is not differentiable.
    pub grid_range: f64,
    pub grid_step: f64,
}

impl Default for InnerSolverConfig {
    fn default() -> Self {
        Self {
            steps: 15,
            alpha: 0.1,
            step_decay: StepDecay::DivideByStep,
            radius_cap: RadiusCap::Relative(100.0),
            grid_range: 10.0,
            grid_step: 1e-4,
        }
    }
}

impl InnerSolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("inner solver needs at least one step".into()));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::Config(format!("inner step size must be >= 0, got {}", self.alpha)));
        }
        let cap = match self.radius_cap {
            RadiusCap::Absolute(r) | RadiusCap::Relative(r) => r,
        };
        if !(cap > 0.0) {
            return Err(Error::Config("radius cap must be positive".into()));
        }
        if !(self.grid_step > 0.0 && self.grid_range >= 0.0) {
            return Err(Error::Config("grid step must be positive and range nonnegative".into()));
        }
        Ok(())
    }
}

/// Result of the inner maximization.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    pub z: Vec<f64>,
    /// `l(z) - gamma c(z, x)` at the returned point.
    pub objective: f64,
    /// `l(z)` at the returned point.
    pub loss: f64,
}

/// Gradient ascent from `z0 = x`. Returns the best iterate seen, so the
/// objective never ends below its starting value.
pub fn adversarial_perturb(
    loss: &dyn InputLoss,
    x: &[f64],
    y: f64,
    gamma: f64,
    cost: CostKind,
    cfg: &InnerSolverConfig,
) -> Result<Perturbation> {
    ascend(loss, x, y, gamma, cost, cfg, None)
}

/// Same as [`adversarial_perturb`], also returning the objective at every
/// iterate `z_0, ..., z_T`.
pub fn adversarial_perturb_traced(
    loss: &dyn InputLoss,
    x: &[f64],
    y: f64,
    gamma: f64,
    cost: CostKind,
    cfg: &InnerSolverConfig,
) -> Result<(Perturbation, Vec<f64>)> {
    let mut trace = Vec::with_capacity(cfg.steps + 1);
    let p = ascend(loss, x, y, gamma, cost, cfg, Some(&mut trace))?;
    Ok((p, trace))
}

fn ascend(
    loss: &dyn InputLoss,
    x: &[f64],
    y: f64,
    gamma: f64,
    cost: CostKind,
    cfg: &InnerSolverConfig,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<Perturbation> {
    cfg.validate()?;
    if x.len() != loss.dim() {
        return Err(Error::DimensionMismatch {
            expected: loss.dim(),
            found: x.len(),
        });
    }
    let cap = cfg.radius_cap.resolve(x);
    let mut z = x.to_vec();
    let mut best: Option<Perturbation> = None;
    for t in 0..=cfg.steps {
        let (value, grad) = loss.value_and_grad(&z, y)?.ok_or(Error::NotDifferentiable)?;
        let objective = value - gamma * cost.value(&z, x);
        if !objective.is_finite() {
            return Err(Error::NonFinite {
                context: "inner objective at step",
                index: t,
            });
        }
        if let Some(tr) = trace.as_deref_mut() {
            tr.push(objective);
        }
        if best.as_ref().is_none_or(|b| objective > b.objective) {
            best = Some(Perturbation {
                z: z.clone(),
                objective,
                loss: value,
            });
        }
        if t == cfg.steps {
            break;
        }
        let step = t + 1;
        let rate = match cfg.step_decay {
            StepDecay::Constant => cfg.alpha,
            StepDecay::DivideByStep => cfg.alpha / step as f64,
        };
        if rate == 0.0 {
            continue;
        }
        let cg = cost.grad_z(&z, x);
        for ((zi, gi), ci) in z.iter_mut().zip(&grad).zip(&cg) {
            let g = gi - gamma * ci;
            if !g.is_finite() {
                return Err(Error::NonFinite {
                    context: "inner gradient at step",
                    index: step,
                });
            }
            *zi += rate * g;
        }
        let distance = linalg::distance(&z, x);
        if distance > cap {
            return Err(Error::InnerDivergence { step, distance, cap });
        }
    }
    Ok(best.expect("at least one iterate"))
}

/// Exhaustive search over `z = x + t u`, `t = i h` for integer `i` with
/// `|t| <= grid_range`, where `u` is the loss's search direction. Ties keep
/// the smallest `t`.
pub fn grid_oracle(
    loss: &dyn InputLoss,
    x: &[f64],
    y: f64,
    gamma: f64,
    cost: CostKind,
    grid_range: f64,
    grid_step: f64,
) -> Result<(f64, Vec<f64>)> {
    let u = loss.search_direction().ok_or(Error::NotDifferentiable)?;
    if u.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            found: x.len(),
        });
    }
    if !(grid_step > 0.0) {
        return Err(Error::InvalidInput("grid step must be positive".into()));
    }
    let k = (grid_range / grid_step).floor() as i64;
    let mut z = x.to_vec();
    let mut best = (f64::NEG_INFINITY, 0.0);
    for i in -k..=k {
        let t = i as f64 * grid_step;
        for ((zi, xi), ui) in z.iter_mut().zip(x).zip(&u) {
            *zi = xi + t * ui;
        }
        let c = match cost {
            CostKind::L2 => t.abs(),
            CostKind::L2Squared => t * t,
        };
        let v = loss.value(&z, y)? - gamma * c;
        if v > best.0 {
            best = (v, t);
        }
    }
    let z: Vec<f64> = x.iter().zip(&u).map(|(xi, ui)| xi + best.1 * ui).collect();
    Ok((best.0, z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::LinearParams;
    use approx::assert_abs_diff_eq;

    fn linear(w: &[f64]) -> Model {
        Model::Linear(LinearParams::new(w.to_vec(), None, false).unwrap())
    }

    #[test]
    fn zero_step_size_returns_input() {
        let m = linear(&[1.0, 0.0]);
        let loss = ModelLoss {
            model: &m,
            kind: LossKind::CrossEntropy,
        };
        let cfg = InnerSolverConfig {
            steps: 1,
            alpha: 0.0,
            ..Default::default()
        };
        let p = adversarial_perturb(&loss, &[0.3, -0.2], 1.0, 1.0, CostKind::L2Squared, &cfg).unwrap();
        assert_eq!(p.z, vec![0.3, -0.2]);
        let bad = InnerSolverConfig { steps: 0, ..cfg };
        assert!(adversarial_perturb(&loss, &[0.3, -0.2], 1.0, 1.0, CostKind::L2Squared, &bad).is_err());
    }

    #[test]
    fn strongly_concave_hinge_reaches_stationary_point() {
        // objective 1 - g y <w,z> - gamma |z - x|^2, maximized at x - g y w / (2 gamma)
        let w = [0.6, 0.8];
        let m = linear(&w);
        let kind = LossKind::Hinge01 { gamma: 0.5 };
        let loss = ModelLoss { model: &m, kind };
        let x = [0.2, 0.1];
        let gamma = 50.0;
        let cfg = InnerSolverConfig {
            steps: 15,
            alpha: 1.0 / (2.0 * gamma),
            ..Default::default()
        };
        let p = adversarial_perturb(&loss, &x, 1.0, gamma, CostKind::L2Squared, &cfg).unwrap();
        for i in 0..2 {
            let expect = x[i] - 0.5 * w[i] / (2.0 * gamma);
            assert!((p.z[i] - expect).abs() < 1e-5);
        }
    }

    #[test]
    fn unbounded_objective_trips_divergence_guard() {
        let m = linear(&[1.0, 0.0]);
        let loss = ModelLoss {
            model: &m,
            kind: LossKind::CrossEntropy,
        };
        let cfg = InnerSolverConfig {
            steps: 15,
            alpha: 10.0,
            step_decay: StepDecay::Constant,
            radius_cap: RadiusCap::Absolute(1e3),
            ..Default::default()
        };
        // a quadratic loss grows faster than a tiny L2 penalty can hold back
        let quad = FnLoss {
            dim: 2,
            value: |z: &[f64], _y: f64| linalg::dot(z, z),
            grad: |z: &[f64], _y: f64| z.iter().map(|v| 2.0 * v).collect(),
            direction: None,
        };
        let err = adversarial_perturb(&quad, &[1.0, 1.0], 1.0, 1e-7, CostKind::L2, &cfg).unwrap_err();
        assert!(matches!(err, Error::InnerDivergence { .. }));
        // bounded loss with the same settings stays finite
        assert!(adversarial_perturb(&loss, &[1.0, 1.0], 1.0, 1e-7, CostKind::L2, &InnerSolverConfig::default()).is_ok());
    }

    #[test]
    fn quadratic_toy_matches_stationarity() {
        let quad = FnLoss {
            dim: 2,
            value: |z: &[f64], _y: f64| linalg::dot(z, z),
            grad: |z: &[f64], _y: f64| z.iter().map(|v| 2.0 * v).collect(),
            direction: Some(vec![1.0, 0.0]),
        };
        let cfg = InnerSolverConfig {
            steps: 200,
            alpha: 0.2,
            step_decay: StepDecay::Constant,
            ..Default::default()
        };
        let p = adversarial_perturb(&quad, &[1.0, 0.0], 0.0, 2.0, CostKind::L2Squared, &cfg).unwrap();
        assert_abs_diff_eq!(p.z[0], 2.0, epsilon = 1e-6);
        assert_abs_diff_eq!(p.objective, 2.0, epsilon = 1e-9);
    }

    #[test]
    fn grid_oracle_zero_one() {
        let loss = ZeroOneLoss { theta: vec![1.0, 0.0] };
        let (v, z) = grid_oracle(&loss, &[0.5, 0.3], 1.0, 1.0, CostKind::L2, 2.0, 1e-4).unwrap();
        assert!((v - 0.5).abs() < 1e-3);
        assert!(z[0] <= 0.0);
        let (v, z) = grid_oracle(&loss, &[0.5, 0.3], 1.0, 1e6, CostKind::L2, 2.0, 1e-4).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(z, vec![0.5, 0.3]);
    }

    #[test]
    fn zero_one_is_not_ascended() {
        let loss = ZeroOneLoss { theta: vec![1.0] };
        let err = adversarial_perturb(&loss, &[1.0], 1.0, 1.0, CostKind::L2, &InnerSolverConfig::default());
        assert!(matches!(err, Err(Error::NotDifferentiable)));
    }
}
