//! The five subcommands, independent of argument parsing.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::json;

use antifrag::attacks::{adversarial_evaluate, AttackMethod, AttackSpec};
use antifrag::envs::{EnvId, EnvSpec};
use antifrag::filters::FilterKind;
use antifrag::harness::{run_sweep, SweepControl, SweepOutcome};
use antifrag::policy::MlpSpec;
use antifrag::ppo::{evaluate, train_with_progress, Evaluation, PpoConfig};
use antifrag::{Error, Result};

use crate::checkpoint::{file_digest, Checkpoint, TrainingMetadata};
use crate::config::load_sweep_config;
use crate::heatmap::Heatmap;
use crate::table::{self, fmt_real, TauOverride};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;
pub const EXIT_CHECKPOINT: i32 = 4;
pub const EXIT_CELL: i32 = 5;
pub const EXIT_TABLE: i32 = 6;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Diverged { .. } => EXIT_DIVERGED,
        Error::Checkpoint(_) | Error::CheckpointVersion { .. } => EXIT_CHECKPOINT,
        Error::Cell { .. } | Error::Interrupted { .. } => EXIT_CELL,
        Error::Table(_) => EXIT_TABLE,
        Error::InvalidConfig(_) | Error::UnknownName { .. } | Error::Empty(_) => EXIT_USAGE,
        _ => EXIT_FAILURE,
    }
}

fn write_file(path: &Path, write: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write(&mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// `results.csv` → `results.<suffix>`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

/// Loads a checkpoint; unreadable files count as corrupt.
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path).map_err(|e| match e {
        Error::Io { path, source } => Error::Checkpoint(format!("{}: {source}", path.display())),
        other => other,
    })
}

#[derive(Debug, Clone)]
pub struct TrainArgs {
    pub env: EnvId,
    pub hidden: Vec<usize>,
    pub seed: u64,
    pub ppo: PpoConfig,
    pub out: PathBuf,
    pub curve: Option<PathBuf>,
    pub quiet: bool,
}

/// Default hyperparameters for an environment.
pub fn ppo_preset(env: EnvId) -> PpoConfig {
    match env {
        EnvId::PendulumSwingup => PpoConfig::pendulum_desk(),
        EnvId::CartPoleContinuous => PpoConfig::default(),
    }
}

pub fn train(args: &TrainArgs) -> Result<Checkpoint> {
    let env = EnvSpec::new(args.env);
    let mlp = MlpSpec::new(env.state_dim, args.hidden.clone(), env.action_dim)?;
    let quiet = args.quiet;
    let outcome = train_with_progress(&env, &mlp, &args.ppo, args.seed, |p| {
        if !quiet {
            eprintln!("iteration {:>4}  steps {:>8}  mean return {:.2}", p.iteration, p.steps, p.mean_return);
        }
    })?;
    let checkpoint = Checkpoint {
        policy: outcome.policy,
        value: Some(outcome.value),
        metadata: TrainingMetadata {
            env: args.env,
            seed: args.seed,
            total_steps: outcome.curve.last().map_or(0, |p| p.steps),
            final_mean_return: outcome
                .curve
                .iter()
                .rev()
                .map(|p| p.mean_return)
                .find(|r| !r.is_nan()),
            ppo: args.ppo.clone(),
        },
    };
    checkpoint.save(&args.out)?;
    let curve_path = args.curve.clone().unwrap_or_else(|| sibling(&args.out, "curve.csv"));
    write_file(&curve_path, |w| {
        writeln!(w, "iteration,steps,mean_return").map_err(|e| Error::io(&curve_path, e))?;
        for p in &outcome.curve {
            writeln!(w, "{},{},{}", p.iteration, p.steps, fmt_real(p.mean_return))
                .map_err(|e| Error::io(&curve_path, e))?;
        }
        Ok(())
    })?;
    Ok(checkpoint)
}

#[derive(Debug, Clone)]
pub struct EvalArgs {
    pub checkpoint: PathBuf,
    pub seeds: Vec<u64>,
    pub attack: Option<AttackMethod>,
    pub epsilon: f64,
    pub attack_steps: usize,
    pub attack_seed: u64,
    pub horizon: Option<usize>,
    pub append: Option<PathBuf>,
}

/// Returns the report printed to stdout: per-seed returns, then the mean.
pub fn eval(args: &EvalArgs) -> Result<String> {
    let ck = load_checkpoint(&args.checkpoint)?;
    let mut env = EnvSpec::new(ck.metadata.env);
    if let Some(h) = args.horizon {
        env = env.with_horizon(h)?;
    }
    let evaluation: Evaluation = match args.attack {
        None => evaluate(&ck.policy, &env, &args.seeds)?,
        Some(method) => {
            let spec = AttackSpec::new(method, args.epsilon)
                .with_steps(args.attack_steps)
                .with_seed(args.attack_seed);
            adversarial_evaluate(&ck.policy, &env, &spec, &args.seeds)?.evaluation
        }
    };
    let mut report = String::from("seed,return\n");
    for (seed, r) in args.seeds.iter().zip(&evaluation.returns) {
        report.push_str(&format!("{seed},{}\n", fmt_real(*r)));
    }
    report.push_str(&format!("mean,{}\n", fmt_real(evaluation.mean)));

    if let Some(path) = &args.append {
        let fresh = !path.exists();
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        let io = |e| Error::io(path, e);
        if fresh {
            writeln!(f, "checkpoint_sha256,attack,epsilon,seeds,mean,std").map_err(io)?;
        }
        let seeds: Vec<String> = args.seeds.iter().map(u64::to_string).collect();
        writeln!(
            f,
            "{},{},{},{},{},{}",
            file_digest(&args.checkpoint)?,
            args.attack.map_or("none", AttackMethod::as_str),
            fmt_real(if args.attack.is_some() { args.epsilon } else { 0.0 }),
            seeds.join(" "),
            fmt_real(evaluation.mean),
            fmt_real(evaluation.std())
        )
        .map_err(io)?;
    }
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct SweepArgs {
    pub config: PathBuf,
    pub out: PathBuf,
    pub workers: Option<usize>,
    pub resume: bool,
    /// Stop after computing this many evaluation units (leaves a partial file).
    pub stop_after: Option<usize>,
    /// Add the wall-clock time to the provenance file.
    pub timestamp: bool,
}

pub fn sweep(args: &SweepArgs) -> Result<SweepOutcome> {
    let file = load_sweep_config(&args.config)?;
    let mut cfg = file.sweep;
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    let ck = load_checkpoint(&file.checkpoint)?;
    if ck.metadata.env != cfg.env {
        return Err(Error::InvalidConfig(format!(
            "checkpoint was trained on {}, config asks for {}",
            ck.metadata.env, cfg.env
        )));
    }
    let partial = sibling(&args.out, "partial.jsonl");
    if !args.resume && partial.exists() {
        std::fs::remove_file(&partial).map_err(|e| Error::io(&partial, e))?;
    }
    let outcome = run_sweep(
        &ck.policy,
        &cfg,
        SweepControl {
            partial: Some(&partial),
            stop_after: args.stop_after,
        },
    )?;
    let r = &outcome.result;

    write_file(&args.out, |w| table::write_records(w, &r.records))?;
    write_file(&sibling(&args.out, "anchors.csv"), |w| table::write_records(w, &r.anchors))?;
    write_file(&sibling(&args.out, "curves.csv"), |w| table::write_curves(w, r))?;
    write_file(&sibling(&args.out, "stats.csv"), |w| table::write_statistics(w, &r.statistics))?;

    let excess = if r.audit.max_excess.is_finite() {
        json!(r.audit.max_excess)
    } else {
        json!(null)
    };
    let mut provenance = json!({
        "config_hash": r.provenance.config_hash,
        "policy_digest": r.provenance.policy_digest,
        "checkpoint_sha256": file_digest(&file.checkpoint)?,
        "env": cfg.env,
        "mode": cfg.mode,
        "attack": cfg.attack,
        "seeds": r.provenance.seeds,
        "version": r.provenance.version,
        "records": r.records.len(),
        "anchors": r.anchors.len(),
        "tau": r.tau,
        "clean_baseline": { "mean": r.clean_baseline.mean, "std": r.clean_baseline.std },
        "audit": {
            "observations": r.audit.observations,
            "max_linf": r.audit.max_linf,
            "max_excess": excess,
            "off_lattice": r.audit.off_lattice,
        },
    });
    if args.timestamp {
        let secs = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        provenance["created_unix"] = json!(secs);
    }
    let prov_path = sibling(&args.out, "provenance.json");
    let text = serde_json::to_string_pretty(&provenance).expect("provenance serializes");
    std::fs::write(&prov_path, text + "\n").map_err(|e| Error::io(&prov_path, e))?;
    std::fs::remove_file(&partial).map_err(|e| Error::io(&partial, e))?;
    Ok(outcome)
}

fn read_results(path: &Path) -> Result<Vec<antifrag::scoring::ScoreRecord>> {
    let file = File::open(path).map_err(|e| Error::Table(format!("{}: {e}", path.display())))?;
    table::read_records(std::io::BufReader::new(file))
}

pub fn heatmap(results: &Path, filter: FilterKind, out: &Path) -> Result<Heatmap> {
    let records = read_results(results)?;
    let map = Heatmap::from_records(&records, filter)?;
    std::fs::write(out, map.render()).map_err(|e| Error::io(out, e))?;
    Ok(map)
}

/// Summary CSV text.
pub fn classify(results: &Path, tau: TauOverride) -> Result<String> {
    let records = read_results(results)?;
    let rows = table::summarize(&records, tau)?;
    let mut buf = Vec::new();
    table::write_summary(&mut buf, &rows)?;
    Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
}
