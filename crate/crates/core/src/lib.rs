//! Antifragility analysis for small reinforcement-learning policies.
//!
//! Trains Gaussian-MLP policies with PPO, stresses them internally by
//! masking parameters by magnitude and externally by perturbing
//! observations, and scores every parameter-subset/attack-strength pair.

// `!(x > 0.0)` is used deliberately so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attacks;
pub mod envs;
pub mod error;
pub mod filters;
pub mod harness;
pub mod numerics;
pub mod policy;
pub mod ppo;
pub mod scoring;

pub use error::{Error, Result};
