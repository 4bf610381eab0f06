//! Linear classifier and a small leaky-ReLU perceptron with hand-written
//! backpropagation.
//!
//! Every loss is a function of the scalar margin `f(x)`: `<w, x> (+ b)` for the
//! linear model and `s1 - s0` for the two-score network, so cross-entropy on
//! the two scores equals the logistic loss on the margin.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledSet;
use crate::error::{Error, Result};
use crate::linalg;

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;
pub const DEFAULT_HIDDEN: [usize; 2] = [64, 64];

/// Per-sample loss as a function of the margin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossKind {
    /// Ramp `min(1, max(0, 1 - gamma y f))`.
    Hinge01 { gamma: f64 },
    /// Label-free `max(0, 1 - gamma f^2)`.
    SquaredMargin { gamma: f64 },
    /// Two-class cross-entropy, `ln(1 + exp(-y f))`.
    CrossEntropy,
}

impl LossKind {
    /// Value and derivative with respect to the margin. Kinks get slope 0.
    pub fn eval(self, f: f64, y: f64) -> (f64, f64) {
        match self {
            LossKind::Hinge01 { gamma } => {
                let u = 1.0 - gamma * y * f;
                if u >= 1.0 {
                    (1.0, 0.0)
                } else if u <= 0.0 {
                    (0.0, 0.0)
                } else {
                    (u, -gamma * y)
                }
            }
            LossKind::SquaredMargin { gamma } => {
                let u = 1.0 - gamma * f * f;
                if u <= 0.0 {
                    (0.0, 0.0)
                } else {
                    (u, -2.0 * gamma * f)
                }
            }
            LossKind::CrossEntropy => {
                let t = -y * f;
                // softplus(t) and its derivative, both overflow-safe
                let value = if t > 0.0 { t + (-t).exp().ln_1p() } else { t.exp().ln_1p() };
                let sig = if t >= 0.0 { 1.0 / (1.0 + (-t).exp()) } else { t.exp() / (1.0 + t.exp()) };
                (value, -y * sig)
            }
        }
    }
}

/// Loss value with both gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub value: f64,
    pub param_grad: Vec<f64>,
    pub input_grad: Vec<f64>,
}

/// `f(x) = <w, x> + b`, parameters stored as `[w..., b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearParams {
    params: Vec<f64>,
    dim: usize,
    bias: bool,
    pub normalize: bool,
}

impl LinearParams {
    pub fn new(w: Vec<f64>, bias: Option<f64>, normalize: bool) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::InvalidInput("weight vector is empty".into()));
        }
        let dim = w.len();
        let mut params = w;
        if let Some(b) = bias {
            params.push(b);
        }
        let mut out = Self {
            params,
            dim,
            bias: bias.is_some(),
            normalize,
        };
        if normalize {
            out.project()?;
        }
        Ok(out)
    }

    /// `e_1` direction; a neutral starting point when no warm start is given.
    pub fn unit_first_axis(dim: usize, normalize: bool) -> Result<Self> {
        let mut w = vec![0.0; dim];
        if let Some(w0) = w.first_mut() {
            *w0 = 1.0;
        }
        Self::new(w, None, normalize)
    }

    pub fn w(&self) -> &[f64] {
        &self.params[..self.dim]
    }

    pub fn bias(&self) -> Option<f64> {
        self.bias.then(|| self.params[self.dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Rescales `w` to unit norm when the normalize flag is set.
    pub fn project(&mut self) -> Result<()> {
        if self.normalize {
            let n = linalg::norm(self.w());
            if n == 0.0 || !n.is_finite() {
                return Err(Error::ZeroTheta);
            }
            for v in &mut self.params[..self.dim] {
                *v /= n;
            }
        }
        Ok(())
    }

    fn margin(&self, x: &[f64]) -> f64 {
        linalg::dot(self.w(), x) + self.bias().unwrap_or(0.0)
    }
}

/// Fully connected network `d -> hidden... -> 2` with leaky-ReLU hidden units.
/// Parameters are laid out per layer as a row-major weight block followed by
/// the bias vector.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    sizes: Vec<usize>,
    params: Vec<f64>,
    pub leaky_slope: f64,
}

struct Forward {
    // pre-activations per layer
    pre: Vec<Vec<f64>>,
    // activations; acts[0] is the input
    acts: Vec<Vec<f64>>,
}

impl MlpParams {
    fn param_count(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    fn check_sizes(sizes: &[usize]) -> Result<()> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidInput(format!("invalid layer sizes {sizes:?}")));
        }
        if *sizes.last().unwrap() != 2 {
            return Err(Error::InvalidInput("binary network must end in 2 scores".into()));
        }
        Ok(())
    }

    pub fn zeros(sizes: Vec<usize>, leaky_slope: f64) -> Result<Self> {
        Self::check_sizes(&sizes)?;
        let params = vec![0.0; Self::param_count(&sizes)];
        Ok(Self {
            sizes,
            params,
            leaky_slope,
        })
    }

    /// He-normal weights, zero biases.
    pub fn init(sizes: Vec<usize>, leaky_slope: f64, seed: u64) -> Result<Self> {
        let mut out = Self::zeros(sizes, leaky_slope)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut offset = 0;
        for l in 0..out.sizes.len() - 1 {
            let (fan_in, fan_out) = (out.sizes[l], out.sizes[l + 1]);
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            for v in &mut out.params[offset..offset + fan_in * fan_out] {
                *v = normal.sample(&mut rng);
            }
            offset += fan_in * fan_out + fan_out;
        }
        Ok(out)
    }

    pub fn from_flat(sizes: Vec<usize>, params: Vec<f64>, leaky_slope: f64) -> Result<Self> {
        Self::check_sizes(&sizes)?;
        let expected = Self::param_count(&sizes);
        if params.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: params.len(),
            });
        }
        Ok(Self {
            sizes,
            params,
            leaky_slope,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn dim(&self) -> usize {
        self.sizes[0]
    }

    fn layer_offsets(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        // (offset, fan_in, fan_out)
        let mut offset = 0;
        self.sizes.windows(2).map(move |w| {
            let o = offset;
            offset += w[0] * w[1] + w[1];
            (o, w[0], w[1])
        })
    }

    fn forward(&self, x: &[f64]) -> Result<Forward> {
        let layers = self.sizes.len() - 1;
        let mut pre = Vec::with_capacity(layers);
        let mut acts = Vec::with_capacity(layers + 1);
        acts.push(x.to_vec());
        for (l, (off, fan_in, fan_out)) in self.layer_offsets().enumerate() {
            let weights = &self.params[off..off + fan_in * fan_out];
            let bias = &self.params[off + fan_in * fan_out..off + fan_in * fan_out + fan_out];
            let input = &acts[l];
            let z: Vec<f64> = (0..fan_out)
                .map(|o| linalg::dot(&weights[o * fan_in..(o + 1) * fan_in], input) + bias[o])
                .collect();
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    context: "network layer",
                    index: l,
                });
            }
            let a = if l + 1 < layers {
                z.iter().map(|&v| if v > 0.0 { v } else { self.leaky_slope * v }).collect()
            } else {
                z.clone()
            };
            pre.push(z);
            acts.push(a);
        }
        Ok(Forward { pre, acts })
    }

    /// Output scores `[s0, s1]`.
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x)?;
        Ok(self.forward(x)?.acts.pop().unwrap_or_default())
    }

    /// Backpropagates `d loss / d scores` from a forward pass. Accumulates
    /// `scale * grad` into `param_grad` when given and returns the input
    /// gradient when requested.
    fn backward(
        &self,
        fw: &Forward,
        dscores: Vec<f64>,
        mut param_grad: Option<(&mut [f64], f64)>,
        want_input: bool,
    ) -> Result<Option<Vec<f64>>> {
        let layers: Vec<_> = self.layer_offsets().collect();
        let mut g = dscores;
        for l in (0..layers.len()).rev() {
            let (off, fan_in, fan_out) = layers[l];
            if l + 1 < layers.len() {
                for (gi, &z) in g.iter_mut().zip(&fw.pre[l]) {
                    if z <= 0.0 {
                        *gi *= self.leaky_slope;
                    }
                }
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    context: "network gradient at layer",
                    index: l,
                });
            }
            let input = &fw.acts[l];
            if let Some((grad, scale)) = param_grad.as_mut() {
                let (wg, rest) = grad[off..off + fan_in * fan_out + fan_out].split_at_mut(fan_in * fan_out);
                for o in 0..fan_out {
                    let go = *scale * g[o];
                    if go != 0.0 {
                        linalg::axpy(go, input, &mut wg[o * fan_in..(o + 1) * fan_in]);
                        rest[o] += go;
                    }
                }
            }
            if l == 0 && !want_input {
                break;
            }
            let weights = &self.params[off..off + fan_in * fan_out];
            let mut prev = vec![0.0; fan_in];
            for o in 0..fan_out {
                if g[o] != 0.0 {
                    linalg::axpy(g[o], &weights[o * fan_in..(o + 1) * fan_in], &mut prev);
                }
            }
            g = prev;
        }
        Ok(want_input.then_some(g))
    }
}

fn check_dim(expected: usize, x: &[f64]) -> Result<()> {
    if x.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            found: x.len(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Linear(LinearParams),
    Mlp(MlpParams),
}

impl Model {
    pub fn dim(&self) -> usize {
        match self {
            Model::Linear(p) => p.dim(),
            Model::Mlp(p) => p.dim(),
        }
    }

    pub fn params(&self) -> &[f64] {
        match self {
            Model::Linear(p) => &p.params,
            Model::Mlp(p) => &p.params,
        }
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        match self {
            Model::Linear(p) => &mut p.params,
            Model::Mlp(p) => &mut p.params,
        }
    }

    pub fn as_linear(&self) -> Option<&LinearParams> {
        match self {
            Model::Linear(p) => Some(p),
            Model::Mlp(_) => None,
        }
    }

    /// Whether updates are followed by projection onto the unit sphere.
    pub fn is_normalized(&self) -> bool {
        matches!(self, Model::Linear(p) if p.normalize)
    }

    /// Post-update projection; a no-op unless the model is a normalized linear one.
    pub fn project(&mut self) -> Result<()> {
        match self {
            Model::Linear(p) => p.project(),
            Model::Mlp(_) => Ok(()),
        }
    }

    pub fn margin(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x)?;
        match self {
            Model::Linear(p) => Ok(p.margin(x)),
            Model::Mlp(p) => {
                let s = p.scores(x)?;
                Ok(s[1] - s[0])
            }
        }
    }

    /// Hard label, `sign(f(x))` with `sign(0) = +1`.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(if self.margin(x)? >= 0.0 { 1.0 } else { -1.0 })
    }

    pub fn loss(&self, x: &[f64], y: f64, kind: LossKind) -> Result<f64> {
        Ok(kind.eval(self.margin(x)?, y).0)
    }

    pub fn loss_and_grad(&self, x: &[f64], y: f64, kind: LossKind) -> Result<LossGrad> {
        let mut param_grad = vec![0.0; self.params().len()];
        let (value, input_grad) = self.eval(x, y, kind, Some((&mut param_grad, 1.0)), true)?;
        Ok(LossGrad {
            value,
            param_grad,
            input_grad: input_grad.unwrap_or_default(),
        })
    }

    /// Value and gradient with respect to the input only.
    pub fn loss_and_input_grad(&self, x: &[f64], y: f64, kind: LossKind) -> Result<(f64, Vec<f64>)> {
        let (v, g) = self.eval(x, y, kind, None, true)?;
        Ok((v, g.unwrap_or_default()))
    }

    /// Adds `scale * d loss / d params` into `grad` and returns the loss value.
    pub fn accumulate_param_grad(&self, x: &[f64], y: f64, kind: LossKind, scale: f64, grad: &mut [f64]) -> Result<f64> {
        Ok(self.eval(x, y, kind, Some((grad, scale)), false)?.0)
    }

    fn eval(
        &self,
        x: &[f64],
        y: f64,
        kind: LossKind,
        param_grad: Option<(&mut [f64], f64)>,
        want_input: bool,
    ) -> Result<(f64, Option<Vec<f64>>)> {
        check_dim(self.dim(), x)?;
        match self {
            Model::Linear(p) => {
                let (value, df) = kind.eval(p.margin(x), y);
                if !value.is_finite() {
                    return Err(Error::NonFinite {
                        context: "linear layer",
                        index: 0,
                    });
                }
                if let Some((grad, scale)) = param_grad {
                    if df != 0.0 {
                        linalg::axpy(scale * df, x, &mut grad[..p.dim]);
                        if p.bias {
                            grad[p.dim] += scale * df;
                        }
                    }
                }
                let input = want_input.then(|| p.w().iter().map(|w| df * w).collect());
                Ok((value, input))
            }
            Model::Mlp(p) => {
                let fw = p.forward(x)?;
                let s = fw.acts.last().expect("output layer");
                let (value, df) = kind.eval(s[1] - s[0], y);
                if !value.is_finite() {
                    return Err(Error::NonFinite {
                        context: "network output",
                        index: p.sizes.len() - 1,
                    });
                }
                if df == 0.0 && !want_input {
                    return Ok((value, None));
                }
                let input = p.backward(&fw, vec![-df, df], param_grad, want_input)?;
                Ok((value, input))
            }
        }
    }

    /// Fraction of correctly classified rows.
    pub fn accuracy(&self, set: &LabeledSet) -> Result<f64> {
        let mut correct = 0usize;
        for i in 0..set.len() {
            let (x, y) = set.sample(i);
            if self.predict(x)? == y {
                correct += 1;
            }
        }
        Ok(correct as f64 / set.len().max(1) as f64)
    }

    pub fn write_checkpoint<W: Write>(&self, mut out: W) -> Result<()> {
        let header = match self {
            Model::Linear(p) => CheckpointHeader {
                kind: "linear".into(),
                sizes: vec![p.dim],
                normalize: p.normalize,
                bias: p.bias,
                leaky_slope: None,
            },
            Model::Mlp(p) => CheckpointHeader {
                kind: "mlp".into(),
                sizes: p.sizes.clone(),
                normalize: false,
                bias: true,
                leaky_slope: Some(p.leaky_slope),
            },
        };
        writeln!(out, "{}", serde_json::to_string(&header)?)?;
        let line: Vec<String> = self.params().iter().map(|v| format!("{v:?}")).collect();
        writeln!(out, "{}", line.join(","))?;
        Ok(())
    }

    pub fn save_checkpoint(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_checkpoint(std::fs::File::create(path)?)
    }

    pub fn read_checkpoint<R: std::io::Read>(input: R) -> Result<Self> {
        let mut lines = BufReader::new(input).lines();
        let header: CheckpointHeader = match lines.next() {
            Some(line) => serde_json::from_str(&line?)?,
            None => return Err(Error::Config("empty checkpoint".into())),
        };
        let body = lines.next().transpose()?.unwrap_or_default();
        let params = body
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .enumerate()
            .map(|(i, s)| {
                s.trim().parse::<f64>().map_err(|_| Error::Csv {
                    row: 2,
                    message: format!("parameter {i}: cannot parse `{s}`"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        match header.kind.as_str() {
            "linear" => {
                let d = *header.sizes.first().ok_or_else(|| Error::Config("missing dim".into()))?;
                let expected = d + usize::from(header.bias);
                if params.len() != expected {
                    return Err(Error::DimensionMismatch {
                        expected,
                        found: params.len(),
                    });
                }
                Ok(Model::Linear(LinearParams {
                    params,
                    dim: d,
                    bias: header.bias,
                    normalize: header.normalize,
                }))
            }
            "mlp" => Ok(Model::Mlp(MlpParams::from_flat(
                header.sizes,
                params,
                header.leaky_slope.unwrap_or(DEFAULT_LEAKY_SLOPE),
            )?)),
            other => Err(Error::Config(format!("unknown model kind `{other}`"))),
        }
    }

    pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_checkpoint(std::fs::File::open(path)?)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    kind: String,
    sizes: Vec<usize>,
    normalize: bool,
    bias: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    leaky_slope: Option<f64>,
}

/// Architecture selector used by configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelSpec {
    Linear {
        #[serde(default)]
        bias: bool,
        #[serde(default = "default_true")]
        normalize: bool,
    },
    Mlp {
        #[serde(default = "default_hidden")]
        hidden: Vec<usize>,
        #[serde(default = "default_slope")]
        leaky_slope: f64,
    },
}

fn default_true() -> bool {
    true
}

fn default_hidden() -> Vec<usize> {
    DEFAULT_HIDDEN.to_vec()
}

fn default_slope() -> f64 {
    DEFAULT_LEAKY_SLOPE
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec::Linear {
            bias: false,
            normalize: true,
        }
    }
}

impl ModelSpec {
    pub fn build(&self, dim: usize, seed: u64) -> Result<Model> {
        match self {
            ModelSpec::Linear { bias, normalize } => {
                let mut p = LinearParams::unit_first_axis(dim, *normalize)?;
                if *bias {
                    p.params.push(0.0);
                    p.bias = true;
                }
                Ok(Model::Linear(p))
            }
            ModelSpec::Mlp { hidden, leaky_slope } => {
                let mut sizes = vec![dim];
                sizes.extend(hidden);
                sizes.push(2);
                Ok(Model::Mlp(MlpParams::init(sizes, *leaky_slope, seed)?))
            }
        }
    }
}
