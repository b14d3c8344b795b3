//! Gradient-sign observation attacks (FGSM, BIM, PGD).
//!
//! The attack loss is `−log π(a|s)` with `a` drawn from the policy's own
//! Gaussian at the clean observation. At `a = μ(s)` the state gradient is
//! exactly zero, so a deterministic action would give no attack direction.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::envs::{rollout_return, EnvSpec, ObsTransform};
use crate::error::{Error, Result};
use crate::numerics::RngStream;
use crate::policy::PolicyParams;
use crate::ppo::Evaluation;

pub const DEFAULT_ITERATIONS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackMethod {
    Fgsm,
    Bim,
    Pgd,
}

impl AttackMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            AttackMethod::Fgsm => "fgsm",
            AttackMethod::Bim => "bim",
            AttackMethod::Pgd => "pgd",
        }
    }
}

impl fmt::Display for AttackMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttackMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fgsm" => Ok(AttackMethod::Fgsm),
            "bim" => Ok(AttackMethod::Bim),
            "pgd" => Ok(AttackMethod::Pgd),
            other => Err(Error::UnknownName {
                kind: "attack method",
                value: other.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub method: AttackMethod,
    pub epsilon: f64,
    pub steps: usize,
    pub step_size: f64,
    pub rng_seed: u64,
}

impl AttackSpec {
    /// `steps = 10`, `step_size = ε/10`, seed 0.
    pub fn new(method: AttackMethod, epsilon: f64) -> Self {
        Self {
            method,
            epsilon,
            steps: DEFAULT_ITERATIONS,
            step_size: epsilon / DEFAULT_ITERATIONS as f64,
            rng_seed: 0,
        }
    }

    pub fn with_steps(mut self, steps: usize) -> Self {
        self.steps = steps;
        self.step_size = self.epsilon / steps.max(1) as f64;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    /// Same schedule at a different budget; keeps `step_size/ε` fixed.
    pub fn at_epsilon(&self, epsilon: f64) -> Self {
        let ratio = if self.epsilon > 0.0 {
            self.step_size / self.epsilon
        } else {
            1.0 / self.steps.max(1) as f64
        };
        Self {
            epsilon,
            step_size: epsilon * ratio,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "epsilon must be finite and >= 0, got {}",
                self.epsilon
            )));
        }
        if self.method != AttackMethod::Fgsm {
            if self.steps == 0 {
                return Err(Error::InvalidConfig("iterative attacks need steps >= 1".into()));
            }
            let reach = self.step_size * self.steps as f64;
            if !(self.step_size >= 0.0) || reach < self.epsilon * (1.0 - 1e-12) {
                return Err(Error::InvalidConfig(format!(
                    "step_size {} × steps {} cannot reach epsilon {}",
                    self.step_size, self.steps, self.epsilon
                )));
            }
        }
        Ok(())
    }
}

/// Uniform budget ladder `ε₀, ε₀ + Δε, …, ε_M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonGrid {
    pub eps_min: f64,
    pub eps_max: f64,
    pub delta_eps: f64,
    pub values: Vec<f64>,
}

impl EpsilonGrid {
    pub fn new(eps_min: f64, eps_max: f64, delta_eps: f64) -> Result<Self> {
        if !(eps_min >= 0.0 && eps_max >= eps_min && eps_max.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "epsilon range [{eps_min}, {eps_max}] is invalid"
            )));
        }
        if eps_max == eps_min {
            return Ok(Self {
                eps_min,
                eps_max,
                delta_eps,
                values: vec![eps_min],
            });
        }
        if !(delta_eps > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "epsilon step must be positive, got {delta_eps}"
            )));
        }
        let span = (eps_max - eps_min) / delta_eps;
        let steps = span.round();
        if (span - steps).abs() > 1e-9 * steps.max(1.0) {
            return Err(Error::InvalidConfig(format!(
                "epsilon step {delta_eps} does not divide [{eps_min}, {eps_max}]"
            )));
        }
        let steps = steps as usize;
        let mut values: Vec<f64> = (0..=steps).map(|i| eps_min + i as f64 * delta_eps).collect();
        values[steps] = eps_max;
        Ok(Self {
            eps_min,
            eps_max,
            delta_eps,
            values,
        })
    }
}

/// `−log π(a|s)`.
pub fn attack_loss(p: &PolicyParams, s: &[f64], a: &[f64]) -> Result<f64> {
    Ok(-p.log_prob(s, a)?)
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// An adversarial observation and the perturbation that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    pub state: Vec<f64>,
    pub delta: Vec<f64>,
}

fn fgsm_parts(p: &PolicyParams, s: &[f64], epsilon: f64, rng: &mut RngStream) -> Result<Perturbation> {
    if epsilon == 0.0 {
        return Ok(Perturbation {
            state: s.to_vec(),
            delta: vec![0.0; s.len()],
        });
    }
    let a = p.sample_action(s, rng)?.sampled;
    let g = p.grad_state_neglogprob(s, &a)?;
    let delta: Vec<f64> = g.iter().map(|&gi| epsilon * sign(gi)).collect();
    let state = s
        .iter()
        .zip(&delta)
        .map(|(&si, &d)| if d == 0.0 { si } else { si + d })
        .collect();
    Ok(Perturbation { state, delta })
}

/// Single-step `s + ε·sign(∇ₛ(−log π(a|s)))`.
pub fn fgsm(p: &PolicyParams, s: &[f64], spec: &AttackSpec, rng: &mut RngStream) -> Result<Vec<f64>> {
    if spec.method != AttackMethod::Fgsm {
        return Err(Error::InvalidConfig(format!(
            "fgsm called with method {}",
            spec.method
        )));
    }
    Ok(fgsm_parts(p, s, spec.epsilon, rng)?.state)
}

/// Where iterative attacks get the action whose likelihood they attack.
enum ActionSource<'a> {
    /// Fresh draw from `π(·|s₀)` every iteration.
    Sampled,
    Fixed(&'a [f64]),
}

fn iterate(
    p: &PolicyParams,
    s0: &[f64],
    spec: &AttackSpec,
    rng: &mut RngStream,
    actions: ActionSource<'_>,
) -> Result<Vec<f64>> {
    let eps = spec.epsilon;
    if eps == 0.0 {
        return Ok(s0.to_vec());
    }
    let lo: Vec<f64> = s0.iter().map(|v| v - eps).collect();
    let hi: Vec<f64> = s0.iter().map(|v| v + eps).collect();
    let mut x = s0.to_vec();
    if spec.method == AttackMethod::Pgd {
        for i in 0..x.len() {
            x[i] = (s0[i] + rng.uniform(-eps, eps)).clamp(lo[i], hi[i]);
        }
    }
    for _ in 0..spec.steps {
        let a = match actions {
            ActionSource::Sampled => p.sample_action(s0, rng)?.sampled,
            ActionSource::Fixed(a) => a.to_vec(),
        };
        let g = p.grad_state_neglogprob(&x, &a)?;
        for i in 0..x.len() {
            let d = sign(g[i]);
            if d != 0.0 {
                x[i] = (x[i] + spec.step_size * d).clamp(lo[i], hi[i]);
            }
        }
    }
    Ok(x)
}

/// BIM (start at `s₀`) or PGD (start uniformly inside the ε-ball); every
/// step is projected back onto `‖s − s₀‖∞ ≤ ε`.
pub fn iterative_attack(
    p: &PolicyParams,
    s: &[f64],
    spec: &AttackSpec,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    if spec.method == AttackMethod::Fgsm {
        return Err(Error::InvalidConfig("iterative_attack needs bim or pgd".into()));
    }
    iterate(p, s, spec, rng, ActionSource::Sampled)
}

/// Iterative attack against a fixed action instead of fresh samples.
pub fn iterative_attack_fixed_action(
    p: &PolicyParams,
    s: &[f64],
    a: &[f64],
    spec: &AttackSpec,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    if spec.method == AttackMethod::Fgsm {
        return Err(Error::InvalidConfig("iterative_attack needs bim or pgd".into()));
    }
    iterate(p, s, spec, rng, ActionSource::Fixed(a))
}

/// Any method, dispatching on `spec.method`.
pub fn perturb(p: &PolicyParams, s: &[f64], spec: &AttackSpec, rng: &mut RngStream) -> Result<Perturbation> {
    match spec.method {
        AttackMethod::Fgsm => fgsm_parts(p, s, spec.epsilon, rng),
        AttackMethod::Bim | AttackMethod::Pgd => {
            let state = iterative_attack(p, s, spec, rng)?;
            let delta = state.iter().zip(s).map(|(a, b)| a - b).collect();
            Ok(Perturbation { state, delta })
        }
    }
}

/// Per-step stream for the attack at `(episode seed, step)`.
pub fn step_rng(spec: &AttackSpec, episode_seed: u64, step: usize) -> RngStream {
    RngStream::new(spec.rng_seed, 0x6174_7461_636b).derive(&[episode_seed, step as u64])
}

/// Running record of how far perturbed observations moved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetAudit {
    pub observations: usize,
    /// Largest `‖s^ε − s‖∞` seen.
    pub max_linf: f64,
    /// Largest `‖s^ε − s‖∞ − ε` seen (≤ 0 when the budget always held).
    pub max_excess: f64,
    /// FGSM perturbation components outside `{−ε, 0, ε}`.
    pub off_lattice: usize,
}

impl Default for BudgetAudit {
    fn default() -> Self {
        Self::new()
    }
}

impl BudgetAudit {
    pub fn new() -> Self {
        Self {
            observations: 0,
            max_linf: 0.0,
            max_excess: f64::NEG_INFINITY,
            off_lattice: 0,
        }
    }

    fn record(&mut self, method: AttackMethod, eps: f64, clean: &[f64], pert: &Perturbation) {
        let linf = pert
            .state
            .iter()
            .zip(clean)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        self.observations += 1;
        self.max_linf = self.max_linf.max(linf);
        self.max_excess = self.max_excess.max(linf - eps);
        if method == AttackMethod::Fgsm {
            self.off_lattice += pert
                .delta
                .iter()
                .filter(|&&d| !(d == 0.0 || d == eps || d == -eps))
                .count();
        }
    }

    pub fn merge(&mut self, other: &BudgetAudit) {
        self.observations += other.observations;
        self.max_linf = self.max_linf.max(other.max_linf);
        self.max_excess = self.max_excess.max(other.max_excess);
        self.off_lattice += other.off_lattice;
    }

    /// Budget held to within `tol` and FGSM deltas stayed on the lattice.
    pub fn within_budget(&self, tol: f64) -> bool {
        self.max_excess <= tol && self.off_lattice == 0
    }
}

struct AttackTransform<'a> {
    policy: &'a PolicyParams,
    spec: &'a AttackSpec,
    episode_seed: u64,
    audit: &'a mut BudgetAudit,
}

impl ObsTransform for AttackTransform<'_> {
    fn apply(&mut self, obs: &[f64], step: usize) -> Result<Vec<f64>> {
        let mut rng = step_rng(self.spec, self.episode_seed, step);
        let pert = perturb(self.policy, obs, self.spec, &mut rng)?;
        self.audit.record(self.spec.method, self.spec.epsilon, obs, &pert);
        Ok(pert.state)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialEvaluation {
    pub evaluation: Evaluation,
    pub audit: BudgetAudit,
}

/// Deterministic evaluation with every observation attacked through `p`
/// itself (white-box). The per-step attack stream depends only on
/// `(spec.rng_seed, episode seed, step)`.
pub fn adversarial_evaluate(
    p: &PolicyParams,
    env: &EnvSpec,
    spec: &AttackSpec,
    seeds: &[u64],
) -> Result<AdversarialEvaluation> {
    spec.validate()?;
    if seeds.is_empty() {
        return Err(Error::Empty("evaluation seed list"));
    }
    let mut audit = BudgetAudit::new();
    let mut returns = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut transform = AttackTransform {
            policy: p,
            spec,
            episode_seed: seed,
            audit: &mut audit,
        };
        returns.push(rollout_return(env, p, seed, Some(&mut transform))?);
    }
    Ok(AdversarialEvaluation {
        evaluation: Evaluation::from_returns(returns),
        audit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::EnvSpec;
    use crate::numerics::{finite_diff_grad, FD_STEP};
    use crate::policy::MlpSpec;
    use crate::ppo::evaluate;

    /// `μ(s) = w·s` through one always-active ReLU unit.
    fn linear_policy(w: f64) -> PolicyParams {
        let spec = MlpSpec::new(1, vec![1], 1).unwrap();
        let b = 100.0;
        PolicyParams::new(spec, vec![1.0, b, w, -w * b], vec![0.0]).unwrap()
    }

    fn random_policy(seed: u64) -> PolicyParams {
        let mut rng = RngStream::new(seed, 9);
        PolicyParams::init(MlpSpec::new(3, vec![8, 8], 1).unwrap(), &mut rng)
    }

    /// First seed whose first draw at `s` lands on the requested side of the mean.
    fn rng_with_noise_sign(p: &PolicyParams, s: &[f64], negative: bool) -> RngStream {
        (0..)
            .map(|k| RngStream::new(k, 1))
            .find(|r| {
                let z = p.sample_action(s, &mut r.clone()).unwrap().noise[0];
                (z < 0.0) == negative && z != 0.0
            })
            .unwrap()
    }

    #[test]
    fn loss_at_mean_is_half_log_two_pi() {
        let p = linear_policy(2.0);
        let l = attack_loss(&p, &[0.5], &[1.0]).unwrap();
        assert!((l - 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-12);
    }

    #[test]
    fn zero_budget_is_exact_copy() {
        let p = random_policy(1);
        let s = [0.3, -0.7, 1.1];
        let mut rng = RngStream::new(4, 0);
        for method in [AttackMethod::Fgsm, AttackMethod::Bim, AttackMethod::Pgd] {
            let out = perturb(&p, &s, &AttackSpec::new(method, 0.0), &mut rng).unwrap();
            assert_eq!(out.state, s.to_vec());
            assert!(out.delta.iter().all(|&d| d == 0.0));
        }
    }

    #[test]
    fn fgsm_deltas_on_lattice() {
        let p = random_policy(2);
        let eps = 0.37;
        let spec = AttackSpec::new(AttackMethod::Fgsm, eps);
        for k in 0..50 {
            let mut rng = RngStream::new(k, 3);
            let s: Vec<f64> = (0..3).map(|_| rng.uniform(-2.0, 2.0)).collect();
            let out = perturb(&p, &s, &spec, &mut rng).unwrap();
            assert!(out.delta.iter().all(|&d| d == eps || d == -eps || d == 0.0));
        }
    }

    // L = (a − w·s)²/2σ², so ∂L/∂s = −w(a − w·s)/σ². With w > 0, a sample
    // below the mean gives a positive gradient (push s up, away from a).
    #[test]
    fn fgsm_linear_direction() {
        let p = linear_policy(1.5);
        let s = [0.2];
        let spec = AttackSpec::new(AttackMethod::Fgsm, 0.1);
        let mut below = rng_with_noise_sign(&p, &s, true);
        assert_eq!(fgsm(&p, &s, &spec, &mut below).unwrap(), vec![0.2 + 0.1]);
        let mut above = rng_with_noise_sign(&p, &s, false);
        assert_eq!(fgsm(&p, &s, &spec, &mut above).unwrap(), vec![0.2 - 0.1]);
    }

    #[test]
    fn bim_single_full_step_matches_fgsm() {
        let p = random_policy(3);
        let s = [0.1, 0.9, -1.3];
        let eps = 0.25;
        let bim = AttackSpec {
            method: AttackMethod::Bim,
            epsilon: eps,
            steps: 1,
            step_size: eps,
            rng_seed: 0,
        };
        for k in 0..20 {
            let a = iterative_attack(&p, &s, &bim, &mut RngStream::new(k, 0)).unwrap();
            let f = fgsm(&p, &s, &AttackSpec::new(AttackMethod::Fgsm, eps), &mut RngStream::new(k, 0))
                .unwrap();
            assert_eq!(a, f);
        }
    }

    #[test]
    fn iterative_stays_in_ball() {
        let p = random_policy(4);
        for method in [AttackMethod::Bim, AttackMethod::Pgd] {
            for k in 0..30 {
                let mut rng = RngStream::new(k, 5);
                let s: Vec<f64> = (0..3).map(|_| rng.uniform(-3.0, 3.0)).collect();
                let eps = rng.uniform(0.01, 2.0);
                let spec = AttackSpec::new(method, eps).with_steps(7);
                let x = iterative_attack(&p, &s, &spec, &mut rng).unwrap();
                let linf = x.iter().zip(&s).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                assert!(linf <= eps + 1e-12, "{method}: {linf} > {eps}");
            }
        }
    }

    #[test]
    fn bim_fixed_action_increases_loss() {
        let p = random_policy(5);
        let s = [0.4, -0.2, 0.8];
        let a = [p.forward_mean(&s).unwrap()[0] + 0.7];
        let spec = AttackSpec::new(AttackMethod::Bim, 0.05).with_steps(5);
        let x = iterative_attack_fixed_action(&p, &s, &a, &spec, &mut RngStream::new(0, 0)).unwrap();
        assert!(attack_loss(&p, &x, &a).unwrap() > attack_loss(&p, &s, &a).unwrap());
    }

    #[test]
    fn bim_on_linear_policy_increases_loss() {
        let p = linear_policy(0.8);
        let s = [0.3];
        let a = [0.1];
        let spec = AttackSpec::new(AttackMethod::Bim, 0.2).with_steps(4);
        let x = iterative_attack_fixed_action(&p, &s, &a, &spec, &mut RngStream::new(0, 0)).unwrap();
        // Mean 0.24 sits above a = 0.1, so pushing s up moves the mean away.
        assert!((x[0] - 0.5).abs() < 1e-12);
        assert!(attack_loss(&p, &x, &a).unwrap() > attack_loss(&p, &s, &a).unwrap());
    }

    #[test]
    fn attack_sign_agrees_with_finite_differences() {
        let p = random_policy(6);
        let s = [0.5, 0.1, -0.6];
        let a = [0.9];
        let g = p.grad_state_neglogprob(&s, &a).unwrap();
        let fd = finite_diff_grad(|x| attack_loss(&p, x, &a).unwrap(), &s, FD_STEP).unwrap();
        let dot: f64 = g.iter().zip(&fd).map(|(x, y)| x * y).sum();
        let n1 = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        let n2 = fd.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(dot / (n1 * n2) > 0.999);
    }

    #[test]
    fn zero_budget_evaluation_matches_clean() {
        let env = EnvSpec::pendulum().with_horizon(40).unwrap();
        let p = random_policy(7);
        let seeds = [1, 2, 3];
        let clean = evaluate(&p, &env, &seeds).unwrap();
        for method in [AttackMethod::Fgsm, AttackMethod::Bim, AttackMethod::Pgd] {
            let adv = adversarial_evaluate(&p, &env, &AttackSpec::new(method, 0.0), &seeds).unwrap();
            assert_eq!(adv.evaluation, clean);
            assert_eq!(adv.audit.max_linf, 0.0);
        }
    }

    #[test]
    fn adversarial_evaluation_reproducible_and_audited() {
        let env = EnvSpec::pendulum().with_horizon(40).unwrap();
        let p = random_policy(8);
        let spec = AttackSpec::new(AttackMethod::Pgd, 0.3).with_seed(11);
        let a = adversarial_evaluate(&p, &env, &spec, &[4, 5]).unwrap();
        let b = adversarial_evaluate(&p, &env, &spec, &[4, 5]).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.audit.observations, 80);
        assert!(a.audit.within_budget(1e-12));
        assert!(a.audit.max_linf > 0.0);
    }

    #[test]
    fn validation() {
        assert!(AttackSpec::new(AttackMethod::Fgsm, -0.1).validate().is_err());
        let short = AttackSpec {
            step_size: 0.01,
            ..AttackSpec::new(AttackMethod::Bim, 1.0)
        };
        assert!(short.validate().is_err());
        assert!(AttackSpec::new(AttackMethod::Pgd, 1.0).validate().is_ok());
        assert!("cw".parse::<AttackMethod>().is_err());
    }

    #[test]
    fn epsilon_grid_pins_top() {
        let g = EpsilonGrid::new(0.0, 2.0, 0.25).unwrap();
        assert_eq!(g.values.len(), 9);
        assert_eq!(g.values[8], 2.0);
        assert_eq!(EpsilonGrid::new(0.0, 0.3, 0.1).unwrap().values.len(), 4);
        assert!(EpsilonGrid::new(0.0, 1.0, 0.3).is_err());
        assert_eq!(EpsilonGrid::new(0.5, 0.5, 0.0).unwrap().values, vec![0.5]);
    }
}
