//! Gaussian MLP policy with hand-derived gradients.
//!
//! Parameters live in one flat vector. Per layer the weights come first
//! (row-major, `out × in`), followed by the biases. Hidden layers use ReLU,
//! the output layer is linear and produces the action mean. The standard
//! deviation is state-independent and stored separately as `log_std`.


use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{matvec_slice, matvec_transpose_slice, RngStream};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
}

impl MlpSpec {
    pub const DESK_HIDDEN: [usize; 2] = [64, 64];
    pub const WIDE_HIDDEN: [usize; 3] = [512, 256, 128];

    pub fn new(input_dim: usize, hidden: Vec<usize>, output_dim: usize) -> Result<Self> {
        let spec = Self {
            input_dim,
            hidden,
            output_dim,
            activation: Activation::Relu,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn desk(input_dim: usize, output_dim: usize) -> Self {
        Self::new(input_dim, Self::DESK_HIDDEN.to_vec(), output_dim).expect("valid preset")
    }

    pub fn wide(input_dim: usize, output_dim: usize) -> Self {
        Self::new(input_dim, Self::WIDE_HIDDEN.to_vec(), output_dim).expect("valid preset")
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() {
            return Err(Error::InvalidConfig("hidden layer list is empty".into()));
        }
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden.contains(&0) {
            return Err(Error::InvalidConfig(format!(
                "layer widths must be >= 1 (input {}, hidden {:?}, output {})",
                self.input_dim, self.hidden, self.output_dim
            )));
        }
        Ok(())
    }

    /// Same trunk with a different output width.
    pub fn with_output(&self, output_dim: usize) -> Self {
        Self {
            output_dim,
            ..self.clone()
        }
    }

    /// `(in, out)` per layer, input side first.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut widths = Vec::with_capacity(self.hidden.len() + 2);
        widths.push(self.input_dim);
        widths.extend_from_slice(&self.hidden);
        widths.push(self.output_dim);
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }

    /// Random initial weights. Hidden layers use He scaling, the output layer
    /// is scaled by `output_gain`. Biases get small nonzero values so every
    /// coordinate is eligible for magnitude filtering.
    pub fn init_theta(&self, rng: &mut RngStream, output_gain: f64) -> Vec<f64> {
        let dims = self.layer_dims();
        let last = dims.len() - 1;
        let mut theta = Vec::with_capacity(self.param_count());
        for (l, &(fan_in, fan_out)) in dims.iter().enumerate() {
            let scale = if l == last {
                output_gain / (fan_in as f64).sqrt()
            } else {
                (2.0 / fan_in as f64).sqrt()
            };
            theta.extend((0..fan_in * fan_out).map(|_| rng.gaussian() * scale));
            theta.extend((0..fan_out).map(|_| rng.gaussian() * 1e-2));
        }
        theta
    }
}

/// Activations recorded during a forward pass.
#[derive(Debug, Clone)]
pub(crate) struct ForwardCache {
    /// Input to each layer (layer 0 input is the state).
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of every hidden layer.
    pre: Vec<Vec<f64>>,
}


pub(crate) fn mlp_forward(spec: &MlpSpec, theta: &[f64], x: &[f64]) -> Vec<f64> {
    let dims = spec.layer_dims();
    let last = dims.len() - 1;
    let mut offset = 0;
    let mut h = x.to_vec();
    for (l, &(n_in, n_out)) in dims.iter().enumerate() {
        let w = &theta[offset..offset + n_in * n_out];
        let b = &theta[offset + n_in * n_out..offset + n_in * n_out + n_out];
        offset += n_in * n_out + n_out;
        let mut z = matvec_slice(w, n_out, n_in, &h);
        for (zi, bi) in z.iter_mut().zip(b) {
            *zi += bi;
            if l != last && *zi <= 0.0 {
                *zi = 0.0;
            }
        }
        h = z;
    }
    h
}

pub(crate) fn mlp_forward_cached(
    spec: &MlpSpec,
    theta: &[f64],
    x: &[f64],
) -> (Vec<f64>, ForwardCache) {
    let dims = spec.layer_dims();
    let last = dims.len() - 1;
    let mut cache = ForwardCache {
        inputs: Vec::with_capacity(dims.len()),
        pre: Vec::with_capacity(last),
    };
    let mut offset = 0;
    let mut h = x.to_vec();
    for (l, &(n_in, n_out)) in dims.iter().enumerate() {
        let w = &theta[offset..offset + n_in * n_out];
        let b = &theta[offset + n_in * n_out..offset + n_in * n_out + n_out];
        offset += n_in * n_out + n_out;
        let mut z = matvec_slice(w, n_out, n_in, &h);
        for (zi, bi) in z.iter_mut().zip(b) {
            *zi += bi;
        }
        cache.inputs.push(h);
        if l == last {
            h = z;
        } else {
            h = z.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
            cache.pre.push(z);
        }
    }
    (h, cache)
}

/// Reverse pass. Accumulates `∂L/∂θ` into `param_grad` when given and
/// returns `∂L/∂x`.
pub(crate) fn mlp_backward(
    spec: &MlpSpec,
    theta: &[f64],
    cache: &ForwardCache,
    grad_out: &[f64],
    mut param_grad: Option<&mut [f64]>,
) -> Vec<f64> {
    let dims = spec.layer_dims();
    let mut offsets = Vec::with_capacity(dims.len());
    let mut offset = 0;
    for &(n_in, n_out) in &dims {
        offsets.push(offset);
        offset += n_in * n_out + n_out;
    }
    let mut delta = grad_out.to_vec();
    for l in (0..dims.len()).rev() {
        let (n_in, n_out) = dims[l];
        let off = offsets[l];
        if let Some(g) = param_grad.as_deref_mut() {
            let input = &cache.inputs[l];
            let (gw, gb) = g[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            for (r, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                for (gwi, &xi) in gw[r * n_in..(r + 1) * n_in].iter_mut().zip(input) {
                    *gwi += d * xi;
                }
                gb[r] += d;
            }
        }
        let w = &theta[off..off + n_in * n_out];
        let mut back = matvec_transpose_slice(w, n_out, n_in, &delta);
        if l > 0 {
            for (bi, &z) in back.iter_mut().zip(&cache.pre[l - 1]) {
                if z <= 0.0 {
                    *bi = 0.0;
                }
            }
        }
        delta = back;
    }
    delta
}

fn check_vector(context: &'static str, v: &[f64], expected: usize) -> Result<()> {
    if v.len() != expected {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            got: v.len(),
        });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite { context });
    }
    Ok(())
}

/// A sampled action together with the distribution it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianAction {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
    pub noise: Vec<f64>,
    pub sampled: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    spec: MlpSpec,
    theta: Vec<f64>,
    log_std: Vec<f64>,
}

impl PolicyParams {
    pub fn new(spec: MlpSpec, theta: Vec<f64>, log_std: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        check_vector("policy theta", &theta, spec.param_count())?;
        check_vector("policy log_std", &log_std, spec.output_dim)?;
        Ok(Self {
            spec,
            theta,
            log_std,
        })
    }

    /// Freshly initialised policy with `log_std = 0`.
    pub fn init(spec: MlpSpec, rng: &mut RngStream) -> Self {
        let theta = spec.init_theta(rng, 0.01);
        let log_std = vec![0.0; spec.output_dim];
        Self {
            spec,
            theta,
            log_std,
        }
    }

    pub fn zeros(spec: MlpSpec) -> Self {
        let theta = vec![0.0; spec.param_count()];
        let log_std = vec![0.0; spec.output_dim];
        Self {
            spec,
            theta,
            log_std,
        }
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn log_std(&self) -> &[f64] {
        &self.log_std
    }

    /// Same log_std and spec, new weights.
    pub fn with_theta(&self, theta: Vec<f64>) -> Result<Self> {
        Self::new(self.spec.clone(), theta, self.log_std.clone())
    }

    pub fn with_log_std(&self, log_std: Vec<f64>) -> Result<Self> {
        Self::new(self.spec.clone(), self.theta.clone(), log_std)
    }

    /// Flat view used by the filters: all weights and biases layer by layer,
    /// then `log_std` when `include_log_std` is set.
    pub fn flatten(&self, include_log_std: bool) -> Vec<f64> {
        let mut flat = self.theta.clone();
        if include_log_std {
            flat.extend_from_slice(&self.log_std);
        }
        flat
    }

    pub fn flat_len(&self, include_log_std: bool) -> usize {
        self.theta.len() + if include_log_std { self.log_std.len() } else { 0 }
    }

    /// Inverse of [`flatten`](Self::flatten). When `log_std` is not part of
    /// `flat` it is taken from `self`.
    pub fn unflatten(&self, flat: &[f64], include_log_std: bool) -> Result<Self> {
        let n = self.theta.len();
        let expected = self.flat_len(include_log_std);
        if flat.len() != expected {
            return Err(Error::DimensionMismatch {
                context: "unflatten",
                expected,
                got: flat.len(),
            });
        }
        let log_std = if include_log_std {
            flat[n..].to_vec()
        } else {
            self.log_std.clone()
        };
        Self::new(self.spec.clone(), flat[..n].to_vec(), log_std)
    }

    /// Deterministic action mean `μ(s)`.
    pub fn forward_mean(&self, s: &[f64]) -> Result<Vec<f64>> {
        check_vector("policy state", s, self.spec.input_dim)?;
        Ok(mlp_forward(&self.spec, &self.theta, s))
    }

    pub(crate) fn forward_cached(&self, s: &[f64]) -> (Vec<f64>, ForwardCache) {
        mlp_forward_cached(&self.spec, &self.theta, s)
    }

    /// `log π(a|s)` for the diagonal Gaussian head.
    pub fn log_prob(&self, s: &[f64], a: &[f64]) -> Result<f64> {
        check_vector("log_prob action", a, self.spec.output_dim)?;
        let mean = self.forward_mean(s)?;
        let lp = gaussian_log_prob(&mean, &self.log_std, a);
        if !lp.is_finite() {
            return Err(Error::NonFinite {
                context: "log_prob",
            });
        }
        Ok(lp)
    }

    /// `∇ₛ[−log π(a|s)]` by reverse-mode differentiation. Parameters and the
    /// action are held fixed.
    pub fn grad_state_neglogprob(&self, s: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        check_vector("policy state", s, self.spec.input_dim)?;
        check_vector("grad action", a, self.spec.output_dim)?;
        let (mean, cache) = self.forward_cached(s);
        // d(−log π)/dμ = −(a − μ)/σ²
        let grad_mean: Vec<f64> = mean
            .iter()
            .zip(a)
            .zip(&self.log_std)
            .map(|((m, ai), ls)| -(ai - m) * (-2.0 * ls).exp())
            .collect();
        let g = mlp_backward(&self.spec, &self.theta, &cache, &grad_mean, None);
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                context: "grad_state_neglogprob",
            });
        }
        Ok(g)
    }

    /// Draws `a = μ(s) + exp(log_std)⊙z`.
    pub fn sample_action(&self, s: &[f64], rng: &mut RngStream) -> Result<GaussianAction> {
        let mean = self.forward_mean(s)?;
        let noise: Vec<f64> = (0..mean.len()).map(|_| rng.gaussian()).collect();
        let sampled = mean
            .iter()
            .zip(&self.log_std)
            .zip(&noise)
            .map(|((m, ls), z)| m + ls.exp() * z)
            .collect();
        Ok(GaussianAction {
            mean,
            log_std: self.log_std.clone(),
            noise,
            sampled,
        })
    }

    /// Differential entropy of the action distribution.
    pub fn entropy(&self) -> f64 {
        self.log_std.iter().map(|ls| ls + 0.5 + HALF_LN_2PI).sum()
    }
}

/// Diagonal Gaussian log density.
pub fn gaussian_log_prob(mean: &[f64], log_std: &[f64], a: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(a)
        .map(|((m, ls), ai)| {
            let z = (ai - m) * (-ls).exp();
            -0.5 * z * z - ls - HALF_LN_2PI
        })
        .sum()
}

/// One row of a PPO mini-batch as seen by the policy.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySample {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub advantage: f64,
    pub old_log_prob: f64,
}

/// Coefficients of the clipped surrogate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateCoefs {
    pub clip: f64,
    pub entropy_coef: f64,
}

/// Value and gradient of the clipped surrogate plus entropy bonus, averaged
/// over a mini-batch.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateGrad {
    pub objective: f64,
    pub grad_theta: Vec<f64>,
    pub grad_log_std: Vec<f64>,
    pub mean_ratio: f64,
    pub clip_fraction: f64,
}

fn check_batch(p: &PolicyParams, batch: &[PolicySample]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Empty("policy mini-batch"));
    }
    for row in batch {
        check_vector("batch state", &row.state, p.spec.input_dim)?;
        check_vector("batch action", &row.action, p.spec.output_dim)?;
        if !(row.advantage.is_finite() && row.old_log_prob.is_finite()) {
            return Err(Error::NonFinite {
                context: "batch advantage/log-prob",
            });
        }
    }
    Ok(())
}

/// Clipped surrogate `mean[min(r·A, clip(r)·A)] + c_ent·H`.
pub fn surrogate_objective(
    p: &PolicyParams,
    batch: &[PolicySample],
    coefs: SurrogateCoefs,
) -> Result<f64> {
    check_batch(p, batch)?;
    let mut total = 0.0;
    for row in batch {
        let mean = mlp_forward(&p.spec, &p.theta, &row.state);
        let lp = gaussian_log_prob(&mean, &p.log_std, &row.action);
        let ratio = (lp - row.old_log_prob).exp();
        let clipped = ratio.clamp(1.0 - coefs.clip, 1.0 + coefs.clip);
        total += (ratio * row.advantage).min(clipped * row.advantage);
    }
    Ok(total / batch.len() as f64 + coefs.entropy_coef * p.entropy())
}

/// Gradient of [`surrogate_objective`] with respect to `(theta, log_std)`.
pub fn grad_params_objective(
    p: &PolicyParams,
    batch: &[PolicySample],
    coefs: SurrogateCoefs,
) -> Result<SurrogateGrad> {
    check_batch(p, batch)?;
    let n = batch.len() as f64;
    let mut grad_theta = vec![0.0; p.theta.len()];
    let mut grad_log_std = vec![0.0; p.log_std.len()];
    let inv_var: Vec<f64> = p.log_std.iter().map(|ls| (-2.0 * ls).exp()).collect();
    let mut objective = 0.0;
    let mut ratio_sum = 0.0;
    let mut clipped_count = 0usize;

    for row in batch {
        let (mean, cache) = p.forward_cached(&row.state);
        let lp = gaussian_log_prob(&mean, &p.log_std, &row.action);
        let ratio = (lp - row.old_log_prob).exp();
        let clipped = ratio.clamp(1.0 - coefs.clip, 1.0 + coefs.clip);
        let unclipped_term = ratio * row.advantage;
        let clipped_term = clipped * row.advantage;
        objective += unclipped_term.min(clipped_term);
        ratio_sum += ratio;
        if (ratio - 1.0).abs() > coefs.clip {
            clipped_count += 1;
        }
        // The clipped branch is flat outside the trust region.
        let active_unclipped = unclipped_term <= clipped_term || clipped == ratio;
        if !active_unclipped {
            continue;
        }
        // d/dθ (r·A) = r·A·d log π/dθ
        let scale = ratio * row.advantage / n;
        if scale == 0.0 {
            continue;
        }
        let mut grad_mean = Vec::with_capacity(mean.len());
        for j in 0..mean.len() {
            let diff = row.action[j] - mean[j];
            grad_mean.push(scale * diff * inv_var[j]);
            grad_log_std[j] += scale * (diff * diff * inv_var[j] - 1.0);
        }
        mlp_backward(&p.spec, &p.theta, &cache, &grad_mean, Some(&mut grad_theta));
    }

    for g in grad_log_std.iter_mut() {
        *g += coefs.entropy_coef;
    }
    objective = objective / n + coefs.entropy_coef * p.entropy();
    if !objective.is_finite()
        || grad_theta.iter().chain(&grad_log_std).any(|g| !g.is_finite())
    {
        return Err(Error::NonFinite {
            context: "surrogate gradient",
        });
    }
    Ok(SurrogateGrad {
        objective,
        grad_theta,
        grad_log_std,
        mean_ratio: ratio_sum / n,
        clip_fraction: clipped_count as f64 / n,
    })
}
