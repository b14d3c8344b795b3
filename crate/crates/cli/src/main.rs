use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use antifrag::attacks::{AttackMethod, DEFAULT_ITERATIONS};
use antifrag::envs::EnvId;
use antifrag::filters::FilterKind;
use antifrag_cli::commands::{self, exit_code, EvalArgs, SweepArgs, TrainArgs};
use antifrag_cli::seeds::parse_seeds;
use antifrag_cli::table::TauOverride;

#[derive(Parser)]
#[command(name = "antifrag", version, about = "Antifragility analysis of PPO policies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy with PPO and write a checkpoint plus its training curve.
    Train(TrainFlags),
    /// Evaluate a checkpoint, optionally under an observation attack.
    Eval(EvalFlags),
    /// Run a filter/attack sweep described by a config file.
    Sweep(SweepFlags),
    /// Render one filter's adversarial scores as an SVG heatmap.
    Heatmap(HeatmapFlags),
    /// Summarise labels and integrated scores per (filter, alpha).
    Classify(ClassifyFlags),
}

#[derive(Clone, Debug)]
struct SeedList(Vec<u64>);

fn seed_list(s: &str) -> Result<SeedList, String> {
    parse_seeds(s).map(SeedList).map_err(|e| e.to_string())
}

fn parse_env(s: &str) -> Result<EnvId, String> {
    s.parse().map_err(|e: antifrag::Error| e.to_string())
}

fn parse_attack(s: &str) -> Result<AttackMethod, String> {
    s.parse().map_err(|e: antifrag::Error| e.to_string())
}

fn parse_filter(s: &str) -> Result<FilterKind, String> {
    s.parse().map_err(|e: antifrag::Error| e.to_string())
}

#[derive(Args)]
struct TrainFlags {
    #[arg(long, value_parser = parse_env, default_value = "pendulum")]
    env: EnvId,
    /// Hidden layer widths.
    #[arg(long, value_delimiter = ',', default_value = "64,64")]
    hidden: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    total_steps: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    gae_lambda: Option<f64>,
    #[arg(long)]
    clip: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    rollout_len: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    entropy_coef: Option<f64>,
    /// Checkpoint path.
    #[arg(long)]
    out: PathBuf,
    /// Training-curve CSV (default: next to the checkpoint).
    #[arg(long)]
    curve: Option<PathBuf>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct EvalFlags {
    #[arg(long)]
    checkpoint: PathBuf,
    /// `1..10`, `1,2,3` or a single seed.
    #[arg(long, value_parser = seed_list, default_value = "1..10")]
    seeds: SeedList,
    #[arg(long, value_parser = parse_attack)]
    attack: Option<AttackMethod>,
    #[arg(long, default_value_t = 0.0)]
    eps: f64,
    #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
    attack_steps: usize,
    #[arg(long, default_value_t = 0)]
    attack_seed: u64,
    #[arg(long)]
    horizon: Option<usize>,
    /// Append a summary row to this CSV.
    #[arg(long)]
    append: Option<PathBuf>,
}

#[derive(Args)]
struct SweepFlags {
    #[arg(long)]
    config: PathBuf,
    /// Results CSV; sibling files share its stem.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    workers: Option<usize>,
    /// Reuse units finished by an earlier, interrupted run.
    #[arg(long)]
    resume: bool,
    #[arg(long, hide = true)]
    stop_after: Option<usize>,
    /// Record the wall-clock time in the provenance file.
    #[arg(long)]
    timestamp: bool,
}

#[derive(Args)]
struct HeatmapFlags {
    #[arg(long)]
    results: PathBuf,
    #[arg(long, value_parser = parse_filter)]
    filter: FilterKind,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ClassifyFlags {
    #[arg(long)]
    results: PathBuf,
    /// Robust band half-width in reward units.
    #[arg(long, conflicts_with = "tau_fraction")]
    tau: Option<f64>,
    /// Robust band as a fraction of |J_clean_base|.
    #[arg(long)]
    tau_fraction: Option<f64>,
    /// Write the summary here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(cli: Cli) -> antifrag::Result<()> {
    match cli.command {
        Command::Train(f) => {
            let mut ppo = commands::ppo_preset(f.env);
            macro_rules! apply {
                ($($flag:ident => $field:ident),*) => {
                    $(if let Some(v) = f.$flag { ppo.$field = v; })*
                };
            }
            apply!(
                total_steps => total_steps,
                learning_rate => learning_rate,
                gamma => gamma,
                gae_lambda => gae_lambda,
                clip => clip,
                batch_size => batch_size,
                rollout_len => rollout_len,
                epochs => epochs_per_update,
                entropy_coef => entropy_coef
            );
            let ck = commands::train(&TrainArgs {
                env: f.env,
                hidden: f.hidden,
                seed: f.seed,
                ppo,
                out: f.out.clone(),
                curve: f.curve,
                quiet: f.quiet,
            })?;
            eprintln!(
                "wrote {} ({} steps, final mean return {})",
                f.out.display(),
                ck.metadata.total_steps,
                ck.metadata.final_mean_return.map_or("n/a".into(), |r| format!("{r:.2}"))
            );
        }
        Command::Eval(f) => {
            let report = commands::eval(&EvalArgs {
                checkpoint: f.checkpoint,
                seeds: f.seeds.0,
                attack: f.attack,
                epsilon: f.eps,
                attack_steps: f.attack_steps,
                attack_seed: f.attack_seed,
                horizon: f.horizon,
                append: f.append,
            })?;
            print!("{report}");
        }
        Command::Sweep(f) => {
            let outcome = commands::sweep(&SweepArgs {
                config: f.config,
                out: f.out.clone(),
                workers: f.workers,
                resume: f.resume,
                stop_after: f.stop_after,
                timestamp: f.timestamp,
            })?;
            eprintln!(
                "wrote {} ({} records; {} units computed, {} reused)",
                f.out.display(),
                outcome.result.records.len(),
                outcome.computed,
                outcome.reused
            );
        }
        Command::Heatmap(f) => {
            let map = commands::heatmap(&f.results, f.filter, &f.out)?;
            eprintln!(
                "wrote {} ({} x {} cells)",
                f.out.display(),
                map.alphas.len(),
                map.epsilons.len()
            );
        }
        Command::Classify(f) => {
            let tau = match (f.tau, f.tau_fraction) {
                (Some(t), _) => TauOverride::Absolute(t),
                (None, Some(fr)) => TauOverride::FractionOfBaseline(fr),
                (None, None) => TauOverride::Stored,
            };
            let text = commands::classify(&f.results, tau)?;
            match f.out {
                Some(path) => std::fs::write(&path, text).map_err(|e| antifrag::Error::io(&path, e))?,
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
