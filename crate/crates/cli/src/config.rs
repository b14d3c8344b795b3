//! Sweep configuration files (TOML). The grammar is documented in the README.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use antifrag::attacks::{AttackMethod, EpsilonGrid};
use antifrag::envs::EnvId;
use antifrag::filters::{FilterKind, DEFAULT_GRID_STEPS};
use antifrag::harness::{SweepConfig, SweepMode};
use antifrag::scoring::ClassificationPolicy;
use antifrag::{Error, Result};

use crate::seeds::parse_seeds;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    checkpoint: PathBuf,
    env: Option<EnvId>,
    mode: Option<SweepMode>,
    horizon: Option<usize>,
    seeds: Option<SeedSpec>,
    include_log_std: Option<bool>,
    workers: Option<usize>,
    #[serde(default)]
    filters: FilterSection,
    #[serde(default)]
    attack: AttackSection,
    #[serde(default)]
    classification: ClassSection,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum SeedSpec {
    List(Vec<u64>),
    Text(String),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FilterSection {
    kinds: Option<Vec<FilterKind>>,
    grid_steps: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct AttackSection {
    method: Option<AttackMethod>,
    epsilon_min: Option<f64>,
    epsilon_max: Option<f64>,
    epsilon_step: Option<f64>,
    steps: Option<usize>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassSection {
    tau: Option<f64>,
    tau_fraction: Option<f64>,
}

/// A parsed sweep file.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepFile {
    /// Resolved against the config file's directory.
    pub checkpoint: PathBuf,
    pub sweep: SweepConfig,
}

pub fn parse_sweep_config(text: &str, base_dir: &Path) -> Result<SweepFile> {
    let raw: FileConfig =
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let env = raw.env.unwrap_or(EnvId::PendulumSwingup);
    let defaults = SweepConfig::new(env);

    let seeds = match raw.seeds {
        None => defaults.seeds.clone(),
        Some(SeedSpec::List(v)) => v,
        Some(SeedSpec::Text(t)) => parse_seeds(&t)?,
    };
    let a = raw.attack;
    let epsilons = match (a.epsilon_min, a.epsilon_max, a.epsilon_step) {
        (None, None, None) => defaults.epsilons.clone(),
        (min, max, step) => {
            let min = min.unwrap_or(0.0);
            let max = max.ok_or_else(|| Error::InvalidConfig("attack.epsilon_max is required".into()))?;
            EpsilonGrid::new(min, max, step.unwrap_or(0.0))?
        }
    };
    let classification = match (raw.classification.tau, raw.classification.tau_fraction) {
        (Some(_), Some(_)) => {
            return Err(Error::InvalidConfig(
                "set at most one of classification.tau and classification.tau_fraction".into(),
            ))
        }
        (Some(t), None) => ClassificationPolicy::Absolute(t),
        (None, Some(f)) => ClassificationPolicy::FractionOfBaseline(f),
        (None, None) => defaults.classification,
    };
    let sweep = SweepConfig {
        env,
        horizon: raw.horizon,
        mode: raw.mode.unwrap_or(SweepMode::Combined),
        filters: raw.filters.kinds.unwrap_or_else(|| FilterKind::ALL.to_vec()),
        grid_steps: raw.filters.grid_steps.unwrap_or(DEFAULT_GRID_STEPS),
        epsilons,
        attack: a.method.unwrap_or(AttackMethod::Fgsm),
        attack_steps: a.steps.unwrap_or(defaults.attack_steps),
        attack_seed: a.seed.unwrap_or(0),
        seeds,
        classification,
        include_log_std: raw.include_log_std.unwrap_or(false),
        workers: raw.workers.unwrap_or(1),
    };
    sweep.validate()?;
    Ok(SweepFile {
        checkpoint: base_dir.join(raw.checkpoint),
        sweep,
    })
}

pub fn load_sweep_config(path: &Path) -> Result<SweepFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_sweep_config(&text, base)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_takes_defaults() {
        let f = parse_sweep_config("checkpoint = \"p.ckpt\"\n", Path::new("/runs")).unwrap();
        assert_eq!(f.checkpoint, PathBuf::from("/runs/p.ckpt"));
        assert_eq!(f.sweep, SweepConfig::new(EnvId::PendulumSwingup));
    }

    #[test]
    fn full_file() {
        let text = r#"
            checkpoint = "/abs/p.ckpt"
            env = "cartpole"
            mode = "filter"
            horizon = 100
            seeds = "3..5"
            include_log_std = true
            workers = 4

            [filters]
            kinds = ["pwf"]
            grid_steps = 8

            [attack]
            method = "pgd"
            epsilon_min = 0.0
            epsilon_max = 0.5
            epsilon_step = 0.1
            steps = 5
            seed = 77

            [classification]
            tau = 2.5
        "#;
        let f = parse_sweep_config(text, Path::new("/x")).unwrap();
        assert_eq!(f.checkpoint, PathBuf::from("/abs/p.ckpt"));
        let s = f.sweep;
        assert_eq!(s.env, EnvId::CartPoleContinuous);
        assert_eq!(s.mode, SweepMode::Filter);
        assert_eq!(s.seeds, vec![3, 4, 5]);
        assert_eq!(s.filters, vec![FilterKind::Pwf]);
        assert_eq!(s.epsilons.values.len(), 6);
        assert_eq!(s.attack, AttackMethod::Pgd);
        assert_eq!(s.classification, ClassificationPolicy::Absolute(2.5));
        assert_eq!(s.workers, 4);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(parse_sweep_config("", Path::new(".")).is_err());
        assert!(parse_sweep_config("checkpoint = \"a\"\nbogus = 1\n", Path::new(".")).is_err());
        assert!(parse_sweep_config(
            "checkpoint = \"a\"\n[classification]\ntau = 1.0\ntau_fraction = 0.1\n",
            Path::new(".")
        )
        .is_err());
        assert!(parse_sweep_config("checkpoint = \"a\"\nseeds = []\n", Path::new(".")).is_err());
        assert!(parse_sweep_config("checkpoint = \"a\"\n[filters]\nkinds = [\"bpf\"]\n", Path::new(".")).is_err());
    }
}
