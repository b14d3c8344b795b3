#![allow(dead_code)]

use antifrag::numerics::RngStream;
use antifrag::policy::{MlpSpec, PolicyParams};

/// Random network with weights ~ N(0, 1/fan_in), biases ~ N(0, 0.1²) and
/// log_std ~ U(−1, 0.5).
pub fn random_policy(rng: &mut RngStream, input: usize, hidden: &[usize], output: usize) -> PolicyParams {
    let spec = MlpSpec::new(input, hidden.to_vec(), output).unwrap();
    let mut theta = Vec::with_capacity(spec.param_count());
    for (fan_in, fan_out) in spec.layer_dims() {
        let scale = 1.0 / (fan_in as f64).sqrt();
        theta.extend((0..fan_in * fan_out).map(|_| scale * rng.gaussian()));
        theta.extend((0..fan_out).map(|_| 0.1 * rng.gaussian()));
    }
    let log_std = (0..output).map(|_| rng.uniform(-1.0, 0.5)).collect();
    PolicyParams::new(spec, theta, log_std).unwrap()
}

/// Plain-loop forward pass over the flat layout (per layer: row-major
/// weights, then biases). Returns the output and every hidden
/// pre-activation.
pub fn naive_forward(p: &PolicyParams, s: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let theta = p.theta();
    let dims = p.spec().layer_dims();
    let mut h = s.to_vec();
    let mut pre = Vec::new();
    let mut off = 0;
    for (l, &(n_in, n_out)) in dims.iter().enumerate() {
        let w = &theta[off..off + n_in * n_out];
        let b = &theta[off + n_in * n_out..off + n_in * n_out + n_out];
        let mut next = vec![0.0; n_out];
        for r in 0..n_out {
            let mut acc = b[r];
            for c in 0..n_in {
                acc += w[r * n_in + c] * h[c];
            }
            if l + 1 < dims.len() {
                pre.push(acc);
                next[r] = acc.max(0.0);
            } else {
                next[r] = acc;
            }
        }
        off += n_in * n_out + n_out;
        h = next;
    }
    (h, pre)
}

/// Smallest |pre-activation|: distance to the nearest ReLU kink.
pub fn relu_margin(p: &PolicyParams, s: &[f64]) -> f64 {
    naive_forward(p, s).1.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()))
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// ‖a − b‖ / max(‖a‖, ‖b‖), with a tiny floor.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(b)).max(1e-12)
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    dot / (norm(a) * norm(b))
}

pub fn uniform_vec(rng: &mut RngStream, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.uniform(lo, hi)).collect()
}
