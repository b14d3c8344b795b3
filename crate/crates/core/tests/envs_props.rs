mod common;

use antifrag::envs::{reset, rollout_return, step, EnvSpec, EnvState};
use antifrag::numerics::RngStream;
use antifrag::Error;
use common::random_policy;
use proptest::prelude::*;

fn env() -> impl Strategy<Value = EnvSpec> {
    prop_oneof![Just(EnvSpec::pendulum()), Just(EnvSpec::cartpole())]
}

fn random_state(spec: &EnvSpec, rng: &mut RngStream) -> EnvState {
    let physics: Vec<f64> = match spec.state_dim {
        3 => vec![rng.uniform(-4.0, 4.0), rng.uniform(-8.0, 8.0)],
        _ => vec![
            rng.uniform(-2.0, 2.0),
            rng.uniform(-2.0, 2.0),
            rng.uniform(-0.2, 0.2),
            rng.uniform(-2.0, 2.0),
        ],
    };
    EnvState::from_physics(spec, physics).unwrap()
}

proptest! {
    #[test]
    fn clipped_action_gives_same_transition(spec in env(), seed in any::<u64>(), a in -50.0f64..50.0) {
        let st = random_state(&spec, &mut RngStream::new(seed, 20));
        let raw = step(&spec, &st, &[a]).unwrap();
        let clipped = step(&spec, &st, &spec.clip_action(&[a])).unwrap();
        prop_assert_eq!(raw, clipped);
    }

    #[test]
    fn reward_bounds(spec in env(), seed in any::<u64>(), a in -5.0f64..5.0) {
        let st = random_state(&spec, &mut RngStream::new(seed, 21));
        let tr = step(&spec, &st, &[a]).unwrap();
        if spec.state_dim == 3 {
            prop_assert!(tr.reward <= 0.0);
        } else {
            prop_assert!(tr.reward <= 1.0);
        }
    }

    #[test]
    fn episodes_bounded_and_done_absorbing(spec in env(), seed in any::<u64>(), horizon in 1usize..60) {
        let spec = spec.with_horizon(horizon).unwrap();
        let mut rng = RngStream::new(seed, 22);
        let mut st = reset(&spec, &mut rng);
        let mut steps = 0;
        while !st.done {
            let a = rng.uniform(-1.5, 1.5);
            st = step(&spec, &st, &[a]).unwrap().next;
            steps += 1;
            prop_assert!(steps <= horizon);
        }
        prop_assert_eq!(st.step_index, steps);
        let again = step(&spec, &st, &[0.0]);
        prop_assert!(matches!(again, Err(Error::EpisodeDone { .. })), "expected EpisodeDone");
    }

    #[test]
    fn rollouts_deterministic(spec in env(), seed in any::<u64>(), episode in 0u64..1000) {
        let spec = spec.with_horizon(80).unwrap();
        let p = random_policy(&mut RngStream::new(seed, 23), spec.state_dim, &[8], 1);
        let a = rollout_return(&spec, &p, episode, None).unwrap();
        let b = rollout_return(&spec, &p, episode, None).unwrap();
        prop_assert_eq!(a.to_bits(), b.to_bits());
        let mut shift = |obs: &[f64], _: usize| -> antifrag::Result<Vec<f64>> {
            Ok(obs.iter().map(|v| v + 0.01).collect())
        };
        let c = rollout_return(&spec, &p, episode, Some(&mut shift)).unwrap();
        let d = rollout_return(&spec, &p, episode, Some(&mut shift)).unwrap();
        prop_assert_eq!(c.to_bits(), d.to_bits());
    }
}

#[test]
fn rollouts_identical_across_threads() {
    let spec = EnvSpec::pendulum();
    let p = random_policy(&mut RngStream::new(5, 24), 3, &[16, 16], 1);
    let here = rollout_return(&spec, &p, 9, None).unwrap();
    let there = std::thread::spawn(move || rollout_return(&spec, &p, 9, None).unwrap())
        .join()
        .unwrap();
    assert_eq!(here.to_bits(), there.to_bits());
}
