//! Built-in continuous-control tasks.
//!
//! Both environments are deterministic given their reset stream; all
//! randomness sits in the initial state.
//!
//! Pendulum swing-up (`"pendulum"`):
//! m = 1, l = 1, g = 10, dt = 0.05, horizon 200, torque in [-2, 2],
//! angular velocity clamped to [-8, 8]. The angle φ is measured from upright.
//! Observation `[cos φ, sin φ, φ̇]`, reward `−(φ² + 0.1·φ̇² + 0.001·u²)` with φ
//! wrapped to [−π, π] and `u` the clipped torque. Start state
//! φ ~ U[−π, π], φ̇ ~ U[−1, 1].
//!
//! Continuous cart-pole (`"cartpole"`):
//! gravity 9.8, cart mass 1.0, pole mass 0.1, half pole length 0.5,
//! force = 10·u for u in [-1, 1], dt = 0.02, horizon 500. Observation
//! `[x, ẋ, ϑ, ϑ̇]`, all components start in U[−0.05, 0.05]. Reward
//! `1 − 0.01·u²` per step taken; the episode terminates once |x| > 2.4 or
//! |ϑ| > 0.21 rad.
//!
//! Both integrate with semi-implicit Euler (velocity first, then position
//! from the updated velocity).

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::RngStream;
use crate::policy::PolicyParams;

pub mod pendulum {
    pub const MASS: f64 = 1.0;
    pub const LENGTH: f64 = 1.0;
    pub const GRAVITY: f64 = 10.0;
    pub const DT: f64 = 0.05;
    pub const MAX_TORQUE: f64 = 2.0;
    pub const MAX_SPEED: f64 = 8.0;
    pub const HORIZON: usize = 200;
}

pub mod cartpole {
    pub const GRAVITY: f64 = 9.8;
    pub const MASS_CART: f64 = 1.0;
    pub const MASS_POLE: f64 = 0.1;
    pub const HALF_LENGTH: f64 = 0.5;
    pub const FORCE_MAG: f64 = 10.0;
    pub const DT: f64 = 0.02;
    pub const HORIZON: usize = 500;
    pub const X_LIMIT: f64 = 2.4;
    pub const ANGLE_LIMIT: f64 = 0.21;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvId {
    #[serde(rename = "pendulum")]
    PendulumSwingup,
    #[serde(rename = "cartpole")]
    CartPoleContinuous,
}

impl EnvId {
    pub fn as_str(self) -> &'static str {
        match self {
            EnvId::PendulumSwingup => "pendulum",
            EnvId::CartPoleContinuous => "cartpole",
        }
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pendulum" => Ok(EnvId::PendulumSwingup),
            "cartpole" => Ok(EnvId::CartPoleContinuous),
            other => Err(Error::UnknownName {
                kind: "environment",
                value: other.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub id: EnvId,
    pub state_dim: usize,
    pub action_dim: usize,
    pub horizon: usize,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    pub dt: f64,
}

impl EnvSpec {
    pub fn new(id: EnvId) -> Self {
        match id {
            EnvId::PendulumSwingup => Self {
                id,
                state_dim: 3,
                action_dim: 1,
                horizon: pendulum::HORIZON,
                action_low: vec![-pendulum::MAX_TORQUE],
                action_high: vec![pendulum::MAX_TORQUE],
                dt: pendulum::DT,
            },
            EnvId::CartPoleContinuous => Self {
                id,
                state_dim: 4,
                action_dim: 1,
                horizon: cartpole::HORIZON,
                action_low: vec![-1.0],
                action_high: vec![1.0],
                dt: cartpole::DT,
            },
        }
    }

    pub fn pendulum() -> Self {
        Self::new(EnvId::PendulumSwingup)
    }

    pub fn cartpole() -> Self {
        Self::new(EnvId::CartPoleContinuous)
    }

    /// Same dynamics with a shorter episode cap.
    pub fn with_horizon(mut self, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be >= 1".into()));
        }
        self.horizon = horizon;
        Ok(self)
    }

    pub fn clip_action(&self, a: &[f64]) -> Vec<f64> {
        a.iter()
            .zip(self.action_low.iter().zip(&self.action_high))
            .map(|(&v, (&lo, &hi))| v.clamp(lo, hi))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    /// Physical state: `[φ, φ̇]` for the pendulum, `[x, ẋ, ϑ, ϑ̇]` for the
    /// cart-pole.
    physics: Vec<f64>,
    pub observation: Vec<f64>,
    pub step_index: usize,
    pub done: bool,
}

impl EnvState {
    pub fn physics(&self) -> &[f64] {
        &self.physics
    }

    /// Builds a state from raw physical coordinates.
    pub fn from_physics(spec: &EnvSpec, physics: Vec<f64>) -> Result<Self> {
        let expected = match spec.id {
            EnvId::PendulumSwingup => 2,
            EnvId::CartPoleContinuous => 4,
        };
        if physics.len() != expected {
            return Err(Error::DimensionMismatch {
                context: "physical state",
                expected,
                got: physics.len(),
            });
        }
        let observation = observe(spec.id, &physics);
        Ok(Self {
            physics,
            observation,
            step_index: 0,
            done: false,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next: EnvState,
    pub terminated: bool,
    pub truncated: bool,
}

impl Transition {
    pub fn done(&self) -> bool {
        self.next.done
    }
}

fn observe(id: EnvId, physics: &[f64]) -> Vec<f64> {
    match id {
        EnvId::PendulumSwingup => vec![physics[0].cos(), physics[0].sin(), physics[1]],
        EnvId::CartPoleContinuous => physics.to_vec(),
    }
}

/// Wraps an angle into [−π, π).
pub fn wrap_angle(phi: f64) -> f64 {
    (phi + PI).rem_euclid(2.0 * PI) - PI
}

pub fn reset(spec: &EnvSpec, rng: &mut RngStream) -> EnvState {
    let physics = match spec.id {
        EnvId::PendulumSwingup => vec![rng.uniform(-PI, PI), rng.uniform(-1.0, 1.0)],
        EnvId::CartPoleContinuous => (0..4).map(|_| rng.uniform(-0.05, 0.05)).collect(),
    };
    let observation = observe(spec.id, &physics);
    EnvState {
        physics,
        observation,
        step_index: 0,
        done: false,
    }
}

/// Reset stream used for episode `seed`.
pub fn episode_rng(seed: u64) -> RngStream {
    RngStream::new(seed, 0x656e_765f_7265_7365)
}

pub fn step(spec: &EnvSpec, st: &EnvState, a: &[f64]) -> Result<Transition> {
    if st.done {
        return Err(Error::EpisodeDone {
            step: st.step_index,
        });
    }
    if a.len() != spec.action_dim {
        return Err(Error::DimensionMismatch {
            context: "environment action",
            expected: spec.action_dim,
            got: a.len(),
        });
    }
    if a.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite {
            context: "environment action",
        });
    }
    let u = spec.clip_action(a);
    let (physics, reward, terminated) = match spec.id {
        EnvId::PendulumSwingup => pendulum_dynamics(&st.physics, u[0]),
        EnvId::CartPoleContinuous => cartpole_dynamics(&st.physics, u[0]),
    };
    if !reward.is_finite() || physics.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "environment dynamics",
        });
    }
    let step_index = st.step_index + 1;
    let truncated = !terminated && step_index >= spec.horizon;
    let observation = observe(spec.id, &physics);
    Ok(Transition {
        state: st.observation.clone(),
        action: u,
        reward,
        next: EnvState {
            physics,
            observation,
            step_index,
            done: terminated || truncated,
        },
        terminated,
        truncated,
    })
}

fn pendulum_dynamics(x: &[f64], u: f64) -> (Vec<f64>, f64, bool) {
    use pendulum::*;
    let (phi, phi_dot) = (x[0], x[1]);
    let wrapped = wrap_angle(phi);
    let reward = -(wrapped * wrapped + 0.1 * phi_dot * phi_dot + 0.001 * u * u);
    let accel = 3.0 * GRAVITY / (2.0 * LENGTH) * phi.sin() + 3.0 / (MASS * LENGTH * LENGTH) * u;
    let new_dot = (phi_dot + accel * DT).clamp(-MAX_SPEED, MAX_SPEED);
    let new_phi = phi + new_dot * DT;
    (vec![new_phi, new_dot], reward, false)
}

fn cartpole_dynamics(x: &[f64], u: f64) -> (Vec<f64>, f64, bool) {
    use cartpole::*;
    let (pos, vel, angle, ang_vel) = (x[0], x[1], x[2], x[3]);
    let force = FORCE_MAG * u;
    let total_mass = MASS_CART + MASS_POLE;
    let pole_ml = MASS_POLE * HALF_LENGTH;
    let (sin, cos) = angle.sin_cos();
    let temp = (force + pole_ml * ang_vel * ang_vel * sin) / total_mass;
    let ang_acc =
        (GRAVITY * sin - cos * temp) / (HALF_LENGTH * (4.0 / 3.0 - MASS_POLE * cos * cos / total_mass));
    let acc = temp - pole_ml * ang_acc * cos / total_mass;
    let vel = vel + DT * acc;
    let pos = pos + DT * vel;
    let ang_vel = ang_vel + DT * ang_acc;
    let angle = angle + DT * ang_vel;
    let terminated = pos.abs() > X_LIMIT || angle.abs() > ANGLE_LIMIT;
    (vec![pos, vel, angle, ang_vel], 1.0 - 0.01 * u * u, terminated)
}

/// Observation map applied before the policy sees each state.
pub trait ObsTransform {
    fn apply(&mut self, obs: &[f64], step: usize) -> Result<Vec<f64>>;
}

impl<F> ObsTransform for F
where
    F: FnMut(&[f64], usize) -> Result<Vec<f64>>,
{
    fn apply(&mut self, obs: &[f64], step: usize) -> Result<Vec<f64>> {
        self(obs, step)
    }
}

/// One episode under deterministic mean actions; returns the summed reward.
pub fn rollout_return(
    spec: &EnvSpec,
    p: &PolicyParams,
    seed: u64,
    mut transform: Option<&mut dyn ObsTransform>,
) -> Result<f64> {
    if p.spec().input_dim != spec.state_dim || p.spec().output_dim != spec.action_dim {
        return Err(Error::InvalidConfig(format!(
            "policy {}→{} does not fit environment {} ({}→{})",
            p.spec().input_dim,
            p.spec().output_dim,
            spec.id,
            spec.state_dim,
            spec.action_dim
        )));
    }
    let mut state = reset(spec, &mut episode_rng(seed));
    let mut total = 0.0;
    while !state.done {
        let action = match transform.as_deref_mut() {
            Some(t) => {
                let seen = t.apply(&state.observation, state.step_index)?;
                p.forward_mean(&seen)?
            }
            None => p.forward_mean(&state.observation)?,
        };
        let tr = step(spec, &state, &action)?;
        total += tr.reward;
        state = tr.next;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::MlpSpec;

    #[test]
    fn reset_is_deterministic() {
        for spec in [EnvSpec::pendulum(), EnvSpec::cartpole()] {
            let a = reset(&spec, &mut episode_rng(3));
            let b = reset(&spec, &mut episode_rng(3));
            assert_eq!(a, b);
        }
    }

    #[test]
    fn pendulum_observation_on_unit_circle() {
        let spec = EnvSpec::pendulum();
        for seed in 0..50 {
            let st = reset(&spec, &mut episode_rng(seed));
            let o = &st.observation;
            assert!((o[0] * o[0] + o[1] * o[1] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn reset_ranges() {
        let pend = EnvSpec::pendulum();
        let cart = EnvSpec::cartpole();
        for seed in 0..1000 {
            let p = reset(&pend, &mut episode_rng(seed));
            assert!(p.physics()[0].abs() <= PI && p.physics()[1].abs() <= 1.0);
            let c = reset(&cart, &mut episode_rng(seed));
            assert!(c.observation.iter().all(|v| v.abs() <= 0.05));
        }
    }

    #[test]
    fn pendulum_upright_is_fixed_point() {
        let spec = EnvSpec::pendulum();
        let st = EnvState::from_physics(&spec, vec![0.0, 0.0]).unwrap();
        let tr = step(&spec, &st, &[0.0]).unwrap();
        assert_eq!(tr.reward, 0.0);
        assert_eq!(tr.next.physics(), st.physics());
        assert_eq!(tr.next.observation, st.observation);
    }

    #[test]
    fn cartpole_zero_action_reward_is_one() {
        let spec = EnvSpec::cartpole();
        for seed in 0..20 {
            let st = reset(&spec, &mut episode_rng(seed));
            assert_eq!(step(&spec, &st, &[0.0]).unwrap().reward, 1.0);
        }
    }

    #[test]
    fn action_is_clipped_before_dynamics() {
        let spec = EnvSpec::pendulum();
        let st = reset(&spec, &mut episode_rng(1));
        let wild = step(&spec, &st, &[50.0]).unwrap();
        let clipped = step(&spec, &st, &[2.0]).unwrap();
        assert_eq!(wild, clipped);
    }

    #[test]
    fn stepping_done_state_is_rejected() {
        let spec = EnvSpec::pendulum().with_horizon(1).unwrap();
        let st = reset(&spec, &mut episode_rng(0));
        let tr = step(&spec, &st, &[0.0]).unwrap();
        assert!(tr.done() && tr.truncated && !tr.terminated);
        assert!(matches!(
            step(&spec, &tr.next, &[0.0]),
            Err(Error::EpisodeDone { step: 1 })
        ));
    }

    #[test]
    fn pendulum_matches_independent_integrator() {
        // Second integrator: same physics written in terms of energy-free
        // angular state, tracked separately from the environment code.
        let spec = EnvSpec::pendulum();
        let mut st = EnvState::from_physics(&spec, vec![2.5, 0.3]).unwrap();
        let (mut th, mut w) = (2.5f64, 0.3f64);
        let energy = |th: f64, w: f64| 0.5 * w * w / 3.0 - 5.0 * th.cos();
        for _ in 0..200 {
            let tr = step(&spec, &st, &[0.0]).unwrap();
            let wdot = 15.0 * th.sin();
            w = (w + 0.05 * wdot).clamp(-8.0, 8.0);
            th += 0.05 * w;
            st = tr.next;
            let drift_env = energy(st.physics()[0], st.physics()[1]);
            assert!((drift_env - energy(th, w)).abs() < 1e-9);
        }
        assert!(st.done);
    }

    #[test]
    fn rollout_with_identity_transform_matches_plain() {
        let spec = EnvSpec::pendulum();
        let mut rng = RngStream::new(1, 1);
        let p = PolicyParams::init(MlpSpec::desk(3, 1), &mut rng);
        let plain = rollout_return(&spec, &p, 4, None).unwrap();
        let mut ident = |o: &[f64], _: usize| Ok(o.to_vec());
        let with = rollout_return(&spec, &p, 4, Some(&mut ident)).unwrap();
        assert_eq!(plain.to_bits(), with.to_bits());
        assert_eq!(plain, rollout_return(&spec, &p, 4, None).unwrap());
    }

    #[test]
    fn zero_policy_cartpole_return_counts_steps() {
        let spec = EnvSpec::cartpole();
        let p = PolicyParams::zeros(MlpSpec::desk(4, 1));
        for seed in 0..5 {
            let mut st = reset(&spec, &mut episode_rng(seed));
            let mut survived = 0usize;
            while !st.done {
                st = step(&spec, &st, &[0.0]).unwrap().next;
                survived += 1;
            }
            let ret = rollout_return(&spec, &p, seed, None).unwrap();
            assert_eq!(ret, survived as f64);
            assert!(survived < spec.horizon);
        }
    }

    #[test]
    fn rollout_rejects_mismatched_policy() {
        let p = PolicyParams::zeros(MlpSpec::desk(4, 1));
        assert!(rollout_return(&EnvSpec::pendulum(), &p, 0, None).is_err());
    }
}
