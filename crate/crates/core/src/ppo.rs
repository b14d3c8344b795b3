//! PPO trainer and the deterministic policy evaluator.
//!
//! Training alternates stochastic rollouts with clipped-surrogate updates.
//! Advantages come from GAE(λ) and are normalized per mini-batch. Policy and
//! value networks are separate MLPs with the same hidden widths, each with
//! its own Adam optimizer.

use serde::{Deserialize, Serialize};

use crate::envs::{self, EnvSpec, ObsTransform};
use crate::error::{Error, Result};
use crate::numerics::RngStream;
use crate::policy::{
    grad_params_objective, mlp_backward, mlp_forward, mlp_forward_cached, MlpSpec, PolicyParams,
    PolicySample, SurrogateCoefs,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpoConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub clip: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub rollout_len: usize,
    pub epochs_per_update: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    pub normalize_advantage: bool,
    pub total_steps: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 128,
            clip: 0.2,
            gamma: 0.99,
            gae_lambda: 0.95,
            rollout_len: 2048,
            epochs_per_update: 10,
            entropy_coef: 0.0,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            normalize_advantage: true,
            total_steps: 100_000,
        }
    }
}

impl PpoConfig {
    /// Settings used for the 150k-step pendulum runs with `[64, 64]` networks.
    /// Shorter credit assignment and a larger step size than the defaults;
    /// the defaults learn too slowly at this step budget.
    pub fn pendulum_desk() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 128,
            gamma: 0.9,
            gae_lambda: 0.95,
            rollout_len: 2048,
            epochs_per_update: 10,
            total_steps: 150_000,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma must be in (0, 1], got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad(format!("gae_lambda must be in [0, 1], got {}", self.gae_lambda));
        }
        if !(self.clip > 0.0) {
            return bad(format!("clip must be positive, got {}", self.clip));
        }
        if self.batch_size == 0 || self.rollout_len == 0 || self.epochs_per_update == 0 {
            return bad("batch_size, rollout_len and epochs_per_update must be >= 1".into());
        }
        if self.batch_size > self.rollout_len {
            return bad(format!(
                "batch_size {} exceeds rollout_len {}",
                self.batch_size, self.rollout_len
            ));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be >= 0, got {}", self.learning_rate));
        }
        if self.total_steps == 0 {
            return bad("total_steps must be >= 1".into());
        }
        Ok(())
    }

    /// Number of rollout/update cycles needed to reach `total_steps`.
    pub fn iterations(&self) -> usize {
        self.total_steps.div_ceil(self.rollout_len)
    }

    fn coefs(&self) -> SurrogateCoefs {
        SurrogateCoefs {
            clip: self.clip,
            entropy_coef: self.entropy_coef,
        }
    }
}

/// Scalar-output critic network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueParams {
    spec: MlpSpec,
    theta: Vec<f64>,
}

impl ValueParams {
    pub fn new(spec: MlpSpec, theta: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if spec.output_dim != 1 {
            return Err(Error::InvalidConfig(format!(
                "value network must have one output, got {}",
                spec.output_dim
            )));
        }
        if theta.len() != spec.param_count() {
            return Err(Error::DimensionMismatch {
                context: "value theta",
                expected: spec.param_count(),
                got: theta.len(),
            });
        }
        Ok(Self { spec, theta })
    }

    /// Critic sharing the policy's trunk widths.
    pub fn init(policy_spec: &MlpSpec, rng: &mut RngStream) -> Self {
        let spec = policy_spec.with_output(1);
        let theta = spec.init_theta(rng, 1.0);
        Self { spec, theta }
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn predict(&self, s: &[f64]) -> f64 {
        mlp_forward(&self.spec, &self.theta, s)[0]
    }
}

/// One environment step as recorded during collection.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub value: f64,
    pub log_prob: f64,
    /// The episode ended on this step; no bootstrapping across it.
    pub done: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutBuffer {
    pub records: Vec<StepRecord>,
    /// `V(s_T)` for the state following the last record (ignored when the
    /// last record is terminal).
    pub bootstrap_value: f64,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn has_advantages(&self) -> bool {
        !self.records.is_empty() && self.advantages.len() == self.records.len()
    }

    pub fn finish(&mut self, gamma: f64, lambda: f64) -> Result<()> {
        let (adv, ret) = compute_gae(self, gamma, lambda)?;
        self.advantages = adv;
        self.returns = ret;
        Ok(())
    }
}

/// GAE(λ): `δ_t = r_t + γ·V_{t+1}·(1 − done_t) − V_t`,
/// `A_t = δ_t + γλ·(1 − done_t)·A_{t+1}`, returns `A_t + V_t`.
pub fn compute_gae(buffer: &RolloutBuffer, gamma: f64, lambda: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if buffer.records.is_empty() {
        return Err(Error::Empty("rollout buffer"));
    }
    let n = buffer.records.len();
    let mut advantages = vec![0.0; n];
    let mut next_value = buffer.bootstrap_value;
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let rec = &buffer.records[t];
        let carry = if rec.done { 0.0 } else { 1.0 };
        let delta = rec.reward + gamma * next_value * carry - rec.value;
        let adv = delta + gamma * lambda * carry * next_adv;
        advantages[t] = adv;
        next_adv = adv;
        next_value = rec.value;
    }
    let returns = advantages
        .iter()
        .zip(&buffer.records)
        .map(|(a, r)| a + r.value)
        .collect();
    Ok((advantages, returns))
}

/// Shifts and scales to mean 0, std 1 (population std, 1e-8 floor).
pub fn normalize(values: &mut [f64]) {
    if values.is_empty() {
        return;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    for v in values.iter_mut() {
        *v = (*v - mean) / (std + 1e-8);
    }
}

#[derive(Debug, Clone)]
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-5;

    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// Moves `params` along `grad` (ascent when `sign` is +1, descent when -1).
    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64, sign: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * g;
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            let delta = lr * m_hat / (v_hat.sqrt() + Self::EPS);
            if delta != 0.0 {
                params[i] += sign * delta;
            }
        }
    }
}

fn clip_grad_norm(grads: &mut [&mut [f64]], max_norm: f64) {
    if !(max_norm > 0.0) {
        return;
    }
    let norm = grads
        .iter()
        .flat_map(|g| g.iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let scale = max_norm / (norm + 1e-6);
        for g in grads.iter_mut() {
            for x in g.iter_mut() {
                *x *= scale;
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct UpdateDiagnostics {
    pub mean_ratio: f64,
    pub clip_fraction: f64,
    pub policy_objective: f64,
    pub value_loss: f64,
    pub minibatches: usize,
}

/// Value loss `c_v·mean((V(s) − R)²)` and its gradient.
fn value_loss_grad(
    v: &ValueParams,
    states: &[&[f64]],
    targets: &[f64],
    value_coef: f64,
) -> (f64, Vec<f64>) {
    let n = states.len() as f64;
    let mut grad = vec![0.0; v.theta.len()];
    let mut loss = 0.0;
    for (s, &target) in states.iter().zip(targets) {
        let (out, cache) = mlp_forward_cached(&v.spec, &v.theta, s);
        let err = out[0] - target;
        loss += err * err;
        let g = [2.0 * value_coef * err / n];
        mlp_backward(&v.spec, &v.theta, &cache, &g, Some(&mut grad));
    }
    (value_coef * loss / n, grad)
}

/// Policy, critic and optimizer state carried across updates.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub policy: PolicyParams,
    pub value: ValueParams,
    cfg: PpoConfig,
    policy_opt: Adam,
    value_opt: Adam,
    rng: RngStream,
}

impl Trainer {
    pub fn new(policy: PolicyParams, value: ValueParams, cfg: PpoConfig, rng: RngStream) -> Result<Self> {
        cfg.validate()?;
        let n_policy = policy.theta().len() + policy.log_std().len();
        let n_value = value.theta.len();
        Ok(Self {
            policy,
            value,
            cfg,
            policy_opt: Adam::new(n_policy),
            value_opt: Adam::new(n_value),
            rng,
        })
    }

    pub fn config(&self) -> &PpoConfig {
        &self.cfg
    }

    /// `epochs_per_update` passes over shuffled mini-batches.
    pub fn update(&mut self, buffer: &RolloutBuffer, iteration: usize) -> Result<UpdateDiagnostics> {
        if !buffer.has_advantages() {
            return Err(Error::InvalidConfig(
                "rollout buffer has no advantages; call finish() first".into(),
            ));
        }
        let n = buffer.len();
        let batch_size = self.cfg.batch_size.min(n);
        let coefs = self.cfg.coefs();
        let mut diag = UpdateDiagnostics::default();
        let mut order: Vec<usize> = (0..n).collect();
        let n_theta = self.policy.theta().len();

        for _epoch in 0..self.cfg.epochs_per_update {
            shuffle(&mut order, &mut self.rng);
            for (batch_index, chunk) in order.chunks(batch_size).enumerate() {
                let mut adv: Vec<f64> = chunk.iter().map(|&i| buffer.advantages[i]).collect();
                if self.cfg.normalize_advantage && adv.len() > 1 {
                    normalize(&mut adv);
                }
                let samples: Vec<PolicySample> = chunk
                    .iter()
                    .zip(&adv)
                    .map(|(&i, &a)| PolicySample {
                        state: buffer.records[i].state.clone(),
                        action: buffer.records[i].action.clone(),
                        advantage: a,
                        old_log_prob: buffer.records[i].log_prob,
                    })
                    .collect();
                let diverged = |reason: String| Error::Diverged {
                    iteration,
                    batch: batch_index,
                    reason,
                };
                let sg = grad_params_objective(&self.policy, &samples, coefs)
                    .map_err(|e| diverged(e.to_string()))?;

                let states: Vec<&[f64]> = chunk.iter().map(|&i| buffer.records[i].state.as_slice()).collect();
                let targets: Vec<f64> = chunk.iter().map(|&i| buffer.returns[i]).collect();
                let (vloss, mut vgrad) =
                    value_loss_grad(&self.value, &states, &targets, self.cfg.value_coef);
                if !vloss.is_finite() || vgrad.iter().any(|g| !g.is_finite()) {
                    return Err(diverged(format!("value loss {vloss}")));
                }

                let mut pgrad_theta = sg.grad_theta;
                let mut pgrad_log_std = sg.grad_log_std;
                clip_grad_norm(&mut [&mut pgrad_theta, &mut pgrad_log_std], self.cfg.max_grad_norm);
                clip_grad_norm(&mut [&mut vgrad], self.cfg.max_grad_norm);

                let mut flat = self.policy.flatten(true);
                let mut grad = pgrad_theta;
                grad.extend_from_slice(&pgrad_log_std);
                self.policy_opt.step(&mut flat, &grad, self.cfg.learning_rate, 1.0);
                let log_std = flat.split_off(n_theta);
                self.policy = PolicyParams::new(self.policy.spec().clone(), flat, log_std)
                    .map_err(|e| diverged(e.to_string()))?;
                self.value_opt
                    .step(&mut self.value.theta, &vgrad, self.cfg.learning_rate, -1.0);

                diag.mean_ratio += sg.mean_ratio;
                diag.clip_fraction += sg.clip_fraction;
                diag.policy_objective += sg.objective;
                diag.value_loss += vloss;
                diag.minibatches += 1;
            }
        }
        let k = diag.minibatches.max(1) as f64;
        diag.mean_ratio /= k;
        diag.clip_fraction /= k;
        diag.policy_objective /= k;
        diag.value_loss /= k;
        Ok(diag)
    }
}

/// Fisher–Yates with the trainer's stream.
fn shuffle(order: &mut [usize], rng: &mut RngStream) {
    for i in (1..order.len()).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        order.swap(i, j);
    }
}

/// One update on fresh optimizer state. `seed` drives mini-batch shuffling.
pub fn ppo_update(
    p: &PolicyParams,
    v: &ValueParams,
    buffer: &RolloutBuffer,
    cfg: &PpoConfig,
    seed: u64,
) -> Result<(PolicyParams, ValueParams, UpdateDiagnostics)> {
    let mut trainer = Trainer::new(p.clone(), v.clone(), cfg.clone(), RngStream::new(seed, 2))?;
    let diag = trainer.update(buffer, 0)?;
    Ok((trainer.policy, trainer.value, diag))
}

/// Collects `rollout_len` stochastic steps, continuing the episode in
/// `state` across calls. Truncated episodes fold `γ·V(s_T)` into the final
/// reward so the GAE recursion can treat every episode end as terminal.
#[derive(Debug, Clone)]
struct Collector {
    env: EnvSpec,
    state: envs::EnvState,
    episode_return: f64,
    rng: RngStream,
}

impl Collector {
    fn new(env: EnvSpec, mut rng: RngStream) -> Self {
        let seed = rng.next_u64();
        let state = envs::reset(&env, &mut envs::episode_rng(seed));
        Self {
            env,
            state,
            episode_return: 0.0,
            rng,
        }
    }

    fn collect(
        &mut self,
        policy: &PolicyParams,
        value: &ValueParams,
        steps: usize,
        gamma: f64,
    ) -> Result<(RolloutBuffer, Vec<f64>)> {
        let mut records = Vec::with_capacity(steps);
        let mut finished = Vec::new();
        for _ in 0..steps {
            let obs = self.state.observation.clone();
            let act = policy.sample_action(&obs, &mut self.rng)?;
            let log_prob =
                crate::policy::gaussian_log_prob(&act.mean, policy.log_std(), &act.sampled);
            let v = value.predict(&obs);
            let tr = envs::step(&self.env, &self.state, &act.sampled)?;
            self.episode_return += tr.reward;
            let mut reward = tr.reward;
            if tr.truncated {
                reward += gamma * value.predict(&tr.next.observation);
            }
            records.push(StepRecord {
                state: obs,
                action: act.sampled,
                reward,
                value: v,
                log_prob,
                done: tr.done(),
            });
            if tr.done() {
                finished.push(self.episode_return);
                self.episode_return = 0.0;
                let seed = self.rng.next_u64();
                self.state = envs::reset(&self.env, &mut envs::episode_rng(seed));
            } else {
                self.state = tr.next;
            }
        }
        let bootstrap_value = value.predict(&self.state.observation);
        Ok((
            RolloutBuffer {
                records,
                bootstrap_value,
                advantages: Vec::new(),
                returns: Vec::new(),
            },
            finished,
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub iteration: usize,
    pub steps: usize,
    /// Mean return of episodes finished during the iteration's rollout; NaN
    /// when none finished.
    pub mean_return: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub policy: PolicyParams,
    pub value: ValueParams,
    pub curve: Vec<CurvePoint>,
    pub diagnostics: Vec<UpdateDiagnostics>,
}

/// Full training run. Bit-reproducible for a fixed `seed`.
pub fn train(env: &EnvSpec, mlp: &MlpSpec, cfg: &PpoConfig, seed: u64) -> Result<TrainOutcome> {
    train_with_progress(env, mlp, cfg, seed, |_| {})
}

pub fn train_with_progress(
    env: &EnvSpec,
    mlp: &MlpSpec,
    cfg: &PpoConfig,
    seed: u64,
    mut progress: impl FnMut(&CurvePoint),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if mlp.input_dim != env.state_dim || mlp.output_dim != env.action_dim {
        return Err(Error::InvalidConfig(format!(
            "network {}→{} does not match environment {} ({}→{})",
            mlp.input_dim, mlp.output_dim, env.id, env.state_dim, env.action_dim
        )));
    }
    let root = RngStream::new(seed, 0);
    let policy = PolicyParams::init(mlp.clone(), &mut root.derive(&[1]));
    let value = ValueParams::init(mlp, &mut root.derive(&[2]));
    let mut trainer = Trainer::new(policy, value, cfg.clone(), root.derive(&[3]))?;
    let mut collector = Collector::new(env.clone(), root.derive(&[4]));

    let mut curve = Vec::new();
    let mut diagnostics = Vec::new();
    let mut steps = 0;
    for iteration in 0..cfg.iterations() {
        let (mut buffer, finished) =
            collector.collect(&trainer.policy, &trainer.value, cfg.rollout_len, cfg.gamma)?;
        buffer.finish(cfg.gamma, cfg.gae_lambda)?;
        steps += buffer.len();
        diagnostics.push(trainer.update(&buffer, iteration)?);
        let mean_return = if finished.is_empty() {
            f64::NAN
        } else {
            finished.iter().sum::<f64>() / finished.len() as f64
        };
        let point = CurvePoint {
            iteration,
            steps,
            mean_return,
        };
        progress(&point);
        curve.push(point);
    }
    Ok(TrainOutcome {
        policy: trainer.policy,
        value: trainer.value,
        curve,
        diagnostics,
    })
}

/// Per-seed returns and their mean.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub returns: Vec<f64>,
    pub mean: f64,
}

impl Evaluation {
    pub fn from_returns(returns: Vec<f64>) -> Self {
        let mean = returns.iter().sum::<f64>() / returns.len() as f64;
        Self { returns, mean }
    }

    /// Sample standard deviation (0 for a single seed).
    pub fn std(&self) -> f64 {
        let n = self.returns.len();
        if n < 2 {
            return 0.0;
        }
        let var = self
            .returns
            .iter()
            .map(|r| (r - self.mean).powi(2))
            .sum::<f64>()
            / (n - 1) as f64;
        var.sqrt()
    }
}

/// Mean return over `seeds` with deterministic mean actions.
pub fn evaluate(p: &PolicyParams, env: &EnvSpec, seeds: &[u64]) -> Result<Evaluation> {
    evaluate_with(p, env, seeds, |_| None::<fn(&[f64], usize) -> Result<Vec<f64>>>)
}

/// As [`evaluate`], with an observation transform built per episode seed.
pub fn evaluate_with<T, F>(
    p: &PolicyParams,
    env: &EnvSpec,
    seeds: &[u64],
    mut make_transform: F,
) -> Result<Evaluation>
where
    T: ObsTransform,
    F: FnMut(u64) -> Option<T>,
{
    if seeds.is_empty() {
        return Err(Error::Empty("evaluation seed list"));
    }
    let mut returns = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let r = match make_transform(seed) {
            Some(mut t) => envs::rollout_return(env, p, seed, Some(&mut t))?,
            None => envs::rollout_return(env, p, seed, None)?,
        };
        returns.push(r);
    }
    Ok(Evaluation::from_returns(returns))
}

/// Evaluation of a freshly initialised (untrained) policy: the reference
/// point for training progress.
pub fn random_policy_baseline(
    env: &EnvSpec,
    mlp: &MlpSpec,
    seed: u64,
    eval_seeds: &[u64],
) -> Result<Evaluation> {
    let root = RngStream::new(seed, 0);
    let policy = PolicyParams::init(mlp.clone(), &mut root.derive(&[1]));
    evaluate(&policy, env, eval_seeds)
}
