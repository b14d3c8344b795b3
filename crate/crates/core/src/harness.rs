//! Sweep orchestration: shared baselines, filter sweeps, attack sweeps and
//! the combined α × ε grid.
//!
//! A sweep is split into independent evaluation units (one policy variant
//! evaluated on the full seed list, clean or under attack). Units run on a
//! rayon pool and are reassembled in a fixed order, so results never depend
//! on the worker count. Completed units can be appended to a partial file
//! and picked up again by a later run.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attacks::{adversarial_evaluate, AttackMethod, AttackSpec, BudgetAudit, EpsilonGrid};
use crate::envs::{EnvId, EnvSpec};
use crate::error::{Error, Result};
use crate::filters::{apply_mask, compactness, make_grid, CompactnessRecord, FilterKind, ThresholdGrid};
use crate::numerics::mix64;
use crate::policy::PolicyParams;
use crate::ppo::{evaluate, Evaluation};
use crate::scoring::{ClassificationPolicy, ScoreRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepMode {
    /// Every filter at every α under every ε.
    Combined,
    /// Filters only; ε is fixed at 0.
    Filter,
    /// Attacks on the unfiltered policy only.
    Attack,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub env: EnvId,
    /// Overrides the environment's episode length.
    pub horizon: Option<usize>,
    pub mode: SweepMode,
    pub filters: Vec<FilterKind>,
    pub grid_steps: usize,
    pub epsilons: EpsilonGrid,
    pub attack: AttackMethod,
    pub attack_steps: usize,
    pub attack_seed: u64,
    pub seeds: Vec<u64>,
    pub classification: ClassificationPolicy,
    /// Let the filters act on `log_std` as well as the network weights.
    pub include_log_std: bool,
    /// Thread count. Not part of the configuration identity.
    #[serde(skip, default = "default_workers")]
    pub workers: usize,
}

fn default_workers() -> usize {
    1
}

impl SweepConfig {
    /// All three filters, N = 20, FGSM over ε ∈ {0, 0.25, …, 2}, seeds 1–10.
    pub fn new(env: EnvId) -> Self {
        Self {
            env,
            horizon: None,
            mode: SweepMode::Combined,
            filters: FilterKind::ALL.to_vec(),
            grid_steps: crate::filters::DEFAULT_GRID_STEPS,
            epsilons: EpsilonGrid::new(0.0, 2.0, 0.25).expect("valid default grid"),
            attack: AttackMethod::Fgsm,
            attack_steps: crate::attacks::DEFAULT_ITERATIONS,
            attack_seed: 0,
            seeds: (1..=10).collect(),
            classification: ClassificationPolicy::default(),
            include_log_std: false,
            workers: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Empty("sweep seed list"));
        }
        if self.workers == 0 {
            return Err(Error::InvalidConfig("workers must be >= 1".into()));
        }
        if self.grid_steps == 0 {
            return Err(Error::InvalidConfig("grid_steps must be >= 1".into()));
        }
        if self.mode != SweepMode::Attack && self.filters.is_empty() {
            return Err(Error::InvalidConfig("no filters selected".into()));
        }
        for (i, f) in self.filters.iter().enumerate() {
            if self.filters[..i].contains(f) {
                return Err(Error::InvalidConfig(format!("filter {f} listed twice")));
            }
        }
        if self.attack != AttackMethod::Fgsm && self.attack_steps == 0 {
            return Err(Error::InvalidConfig("attack_steps must be >= 1".into()));
        }
        if self.epsilons.values.is_empty() {
            return Err(Error::Empty("epsilon grid"));
        }
        self.classification.validate()?;
        self.env_spec()?;
        Ok(())
    }

    pub fn env_spec(&self) -> Result<EnvSpec> {
        let env = EnvSpec::new(self.env);
        match self.horizon {
            Some(h) => env.with_horizon(h),
            None => Ok(env),
        }
    }

    /// Filters actually swept in this mode.
    pub fn active_filters(&self) -> &[FilterKind] {
        match self.mode {
            SweepMode::Attack => &[],
            _ => &self.filters,
        }
    }

    /// Budgets actually swept in this mode.
    pub fn active_epsilons(&self) -> Vec<f64> {
        match self.mode {
            SweepMode::Filter => vec![0.0],
            _ => self.epsilons.values.clone(),
        }
    }

    /// Attack at the `k`-th budget. Every policy variant at that budget sees
    /// the same attack stream.
    pub fn attack_spec(&self, k: usize, epsilon: f64) -> AttackSpec {
        let seed = mix64(self.attack_seed ^ mix64(k as u64 + 1));
        AttackSpec::new(self.attack, epsilon)
            .with_steps(self.attack_steps.max(1))
            .with_seed(seed)
    }

    /// SHA-256 over the configuration (minus `workers`) and the policy.
    pub fn hash(&self, policy: &PolicyParams) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_string(self).expect("config serializes").as_bytes());
        h.update(b"\n");
        h.update(policy_digest(policy).as_bytes());
        hex::encode(h.finalize())
    }
}

/// SHA-256 of the policy's shape and little-endian parameter bytes.
pub fn policy_digest(p: &PolicyParams) -> String {
    let mut h = Sha256::new();
    let spec = p.spec();
    for d in std::iter::once(spec.input_dim)
        .chain(spec.hidden.iter().copied())
        .chain(std::iter::once(spec.output_dim))
    {
        h.update((d as u64).to_le_bytes());
    }
    for v in p.theta().iter().chain(p.log_std()) {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// Removed counts and compactness for every filter at every grid threshold.
pub fn run_parameter_statistics(
    theta: &[f64],
    grid: &ThresholdGrid,
    filters: &[FilterKind],
) -> Vec<CompactnessRecord> {
    filters
        .iter()
        .flat_map(|&f| {
            grid.values
                .iter()
                .map(move |&alpha| compactness(&f.mask(theta, alpha, grid.delta_alpha)))
        })
        .collect()
}

/// Mean and sample standard deviation of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl From<&Evaluation> for Stat {
    fn from(e: &Evaluation) -> Self {
        Self {
            mean: e.mean,
            std: e.std(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterPoint {
    pub alpha: f64,
    /// The extra threshold outside the grid at which nothing is removed.
    pub identity: bool,
    pub removed: usize,
    pub compactness: f64,
    pub clean: Stat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterCurve {
    pub filter: FilterKind,
    pub points: Vec<FilterPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackPoint {
    pub epsilon: f64,
    pub adversarial: Stat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub policy_digest: String,
    pub seeds: Vec<u64>,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub provenance: Provenance,
    pub grid: Option<ThresholdGrid>,
    pub epsilons: Vec<f64>,
    /// Robust band half-width in reward units.
    pub tau: f64,
    pub clean_baseline: Stat,
    pub attack_curve: Vec<AttackPoint>,
    pub filter_curves: Vec<FilterCurve>,
    /// One record per `(filter, αᵢ, εₖ)`, filter-major, then α, then ε.
    pub records: Vec<ScoreRecord>,
    /// Identity-threshold records, one per `(filter, εₖ)`.
    pub anchors: Vec<ScoreRecord>,
    pub statistics: Vec<CompactnessRecord>,
    pub audit: BudgetAudit,
}

/// Resume and interruption controls.
#[derive(Debug, Clone, Copy, Default)]
pub struct SweepControl<'a> {
    /// Completed units are appended here and reused when present.
    pub partial: Option<&'a Path>,
    /// Compute at most this many new units, then stop with
    /// [`Error::Interrupted`].
    pub stop_after: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub result: SweepResult,
    pub computed: usize,
    pub reused: usize,
}

pub fn run_combined_sweep(policy: &PolicyParams, cfg: &SweepConfig) -> Result<SweepResult> {
    let cfg = SweepConfig {
        mode: SweepMode::Combined,
        ..cfg.clone()
    };
    Ok(run_sweep(policy, &cfg, SweepControl::default())?.result)
}

/// Clean return of every filtered policy, identity threshold last.
pub fn run_filter_sweep(policy: &PolicyParams, cfg: &SweepConfig) -> Result<Vec<FilterCurve>> {
    let cfg = SweepConfig {
        mode: SweepMode::Filter,
        ..cfg.clone()
    };
    Ok(run_sweep(policy, &cfg, SweepControl::default())?.result.filter_curves)
}

/// `J^ε` of the unfiltered policy at every budget.
pub fn run_attack_sweep(policy: &PolicyParams, cfg: &SweepConfig) -> Result<Vec<AttackPoint>> {
    let cfg = SweepConfig {
        mode: SweepMode::Attack,
        ..cfg.clone()
    };
    Ok(run_sweep(policy, &cfg, SweepControl::default())?.result.attack_curve)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Unit {
    CleanBase,
    AdvBase { eps: usize },
    /// `alpha == N + 1` is the identity threshold.
    CleanFilt { filter: FilterKind, alpha: usize },
    AdvFilt { filter: FilterKind, alpha: usize, eps: usize },
}

impl Unit {
    fn key(&self) -> String {
        match *self {
            Unit::CleanBase => "base".into(),
            Unit::AdvBase { eps } => format!("base/e{eps}"),
            Unit::CleanFilt { filter, alpha } => format!("{filter}/a{alpha}"),
            Unit::AdvFilt { filter, alpha, eps } => format!("{filter}/a{alpha}/e{eps}"),
        }
    }

    fn describe(&self, n: usize) -> String {
        let alpha = |a: usize| {
            if a > n {
                "identity".to_string()
            } else {
                a.to_string()
            }
        };
        match *self {
            Unit::CleanBase => "baseline, clean".into(),
            Unit::AdvBase { eps } => format!("baseline, epsilon index {eps}"),
            Unit::CleanFilt { filter, alpha: a } => {
                format!("filter {filter}, alpha index {}, clean", alpha(a))
            }
            Unit::AdvFilt { filter, alpha: a, eps } => {
                format!("filter {filter}, alpha index {}, epsilon index {eps}", alpha(a))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct UnitOutput {
    evaluation: Evaluation,
    audit: Option<BudgetAudit>,
}

#[derive(Serialize, Deserialize)]
struct PartialHeader {
    config_hash: String,
}

/// Floats travel as raw bits so a resumed run is bit-identical.
#[derive(Serialize, Deserialize)]
struct PartialLine {
    unit: String,
    returns: Vec<u64>,
    audit: Option<(usize, u64, u64, usize)>,
}

impl PartialLine {
    fn new(key: String, out: &UnitOutput) -> Self {
        Self {
            unit: key,
            returns: out.evaluation.returns.iter().map(|r| r.to_bits()).collect(),
            audit: out.audit.map(|a| {
                (a.observations, a.max_linf.to_bits(), a.max_excess.to_bits(), a.off_lattice)
            }),
        }
    }

    fn into_output(self) -> (String, UnitOutput) {
        let returns = self.returns.into_iter().map(f64::from_bits).collect();
        let audit = self.audit.map(|(observations, linf, excess, off_lattice)| BudgetAudit {
            observations,
            max_linf: f64::from_bits(linf),
            max_excess: f64::from_bits(excess),
            off_lattice,
        });
        (
            self.unit,
            UnitOutput {
                evaluation: Evaluation::from_returns(returns),
                audit,
            },
        )
    }
}

fn load_partial(path: &Path, hash: &str) -> Result<HashMap<String, UnitOutput>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header: PartialHeader = match lines.next() {
        Some(line) => {
            let line = line.map_err(|e| Error::io(path, e))?;
            serde_json::from_str(&line)
                .map_err(|e| Error::InvalidConfig(format!("{}: bad header: {e}", path.display())))?
        }
        None => return Ok(HashMap::new()),
    };
    if header.config_hash != hash {
        return Err(Error::InvalidConfig(format!(
            "{} holds results for configuration {}, not {hash}",
            path.display(),
            header.config_hash
        )));
    }
    let lines: Vec<String> = lines
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(path, e))?;
    let mut done = HashMap::new();
    for (i, line) in lines.iter().enumerate() {
        match serde_json::from_str::<PartialLine>(line) {
            Ok(entry) => {
                let (key, out) = entry.into_output();
                done.insert(key, out);
            }
            // A run killed mid-write can leave a torn final line.
            Err(_) if i + 1 == lines.len() => {}
            Err(e) => {
                return Err(Error::InvalidConfig(format!(
                    "{}: line {}: {e}",
                    path.display(),
                    i + 2
                )))
            }
        }
    }
    Ok(done)
}

fn open_partial(path: &Path, hash: &str, existing: bool) -> Result<File> {
    if existing {
        let mut f = OpenOptions::new()
            .read(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        // Terminate a torn final line so appended entries start cleanly.
        let len = f.metadata().map_err(|e| Error::io(path, e))?.len();
        if len > 0 {
            let text = std::fs::read(path).map_err(|e| Error::io(path, e))?;
            if text.last() != Some(&b'\n') {
                f.write_all(b"\n").map_err(|e| Error::io(path, e))?;
            }
        }
        return Ok(f);
    }
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    let header = serde_json::to_string(&PartialHeader {
        config_hash: hash.to_string(),
    })
    .expect("header serializes");
    writeln!(f, "{header}").map_err(|e| Error::io(path, e))?;
    Ok(f)
}

struct Plan<'a> {
    policy: &'a PolicyParams,
    cfg: &'a SweepConfig,
    env: EnvSpec,
    flat: Vec<f64>,
    grid: Option<ThresholdGrid>,
    filters: Vec<FilterKind>,
    epsilons: Vec<f64>,
}

impl Plan<'_> {
    fn n(&self) -> usize {
        self.grid.as_ref().map_or(0, |g| g.n_steps)
    }

    fn alpha(&self, filter: FilterKind, index: usize) -> f64 {
        let grid = self.grid.as_ref().expect("filters imply a grid");
        if index <= grid.n_steps {
            grid.values[index]
        } else {
            filter.identity_alpha(grid)
        }
    }

    fn filtered(&self, filter: FilterKind, index: usize) -> Result<(PolicyParams, CompactnessRecord)> {
        let grid = self.grid.as_ref().expect("filters imply a grid");
        let mask = filter.mask(&self.flat, self.alpha(filter, index), grid.delta_alpha);
        let theta = apply_mask(&self.flat, &mask)?;
        let policy = self.policy.unflatten(&theta, self.cfg.include_log_std)?;
        Ok((policy, compactness(&mask)))
    }

    fn units(&self) -> Vec<Unit> {
        let attacked: Vec<usize> = (0..self.epsilons.len())
            .filter(|&k| self.epsilons[k] != 0.0)
            .collect();
        let mut units = vec![Unit::CleanBase];
        units.extend(attacked.iter().map(|&eps| Unit::AdvBase { eps }));
        for &filter in &self.filters {
            for alpha in 0..=self.n() + 1 {
                units.push(Unit::CleanFilt { filter, alpha });
                units.extend(attacked.iter().map(|&eps| Unit::AdvFilt { filter, alpha, eps }));
            }
        }
        units
    }

    fn attacked(&self, p: &PolicyParams, eps: usize) -> Result<UnitOutput> {
        let spec = self.cfg.attack_spec(eps, self.epsilons[eps]);
        let adv = adversarial_evaluate(p, &self.env, &spec, &self.cfg.seeds)?;
        Ok(UnitOutput {
            evaluation: adv.evaluation,
            audit: Some(adv.audit),
        })
    }

    fn run(&self, unit: Unit) -> Result<UnitOutput> {
        let clean = |p: &PolicyParams| -> Result<UnitOutput> {
            Ok(UnitOutput {
                evaluation: evaluate(p, &self.env, &self.cfg.seeds)?,
                audit: None,
            })
        };
        match unit {
            Unit::CleanBase => clean(self.policy),
            Unit::AdvBase { eps } => self.attacked(self.policy, eps),
            Unit::CleanFilt { filter, alpha } => clean(&self.filtered(filter, alpha)?.0),
            Unit::AdvFilt { filter, alpha, eps } => self.attacked(&self.filtered(filter, alpha)?.0, eps),
        }
    }
}

/// Runs the sweep described by `cfg`, honouring resume and stop controls.
pub fn run_sweep(
    policy: &PolicyParams,
    cfg: &SweepConfig,
    control: SweepControl<'_>,
) -> Result<SweepOutcome> {
    cfg.validate()?;
    let env = cfg.env_spec()?;
    let spec = policy.spec();
    if spec.input_dim != env.state_dim || spec.output_dim != env.action_dim {
        return Err(Error::InvalidConfig(format!(
            "policy {}→{} does not fit environment {} ({}→{})",
            spec.input_dim, spec.output_dim, env.id, env.state_dim, env.action_dim
        )));
    }
    let filters = cfg.active_filters().to_vec();
    let flat = policy.flatten(cfg.include_log_std);
    let grid = if filters.is_empty() {
        None
    } else {
        Some(make_grid(&flat, cfg.grid_steps)?)
    };
    let plan = Plan {
        policy,
        cfg,
        env,
        flat,
        grid,
        filters,
        epsilons: cfg.active_epsilons(),
    };
    let hash = cfg.hash(policy);
    let units = plan.units();

    let mut done = match control.partial {
        Some(path) if path.exists() => load_partial(path, &hash)?,
        _ => HashMap::new(),
    };
    let sink = match control.partial {
        Some(path) => Some(Mutex::new(open_partial(path, &hash, path.exists())?)),
        None => None,
    };
    let pending: Vec<(usize, Unit)> = units
        .iter()
        .copied()
        .enumerate()
        .filter(|(_, u)| !done.contains_key(&u.key()))
        .collect();
    let reused = units.len() - pending.len();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let claimed = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let outputs: Vec<Option<Result<UnitOutput>>> = pool.install(|| {
        pending
            .par_iter()
            .map(|&(_, unit)| {
                if abort.load(Ordering::SeqCst) {
                    return None;
                }
                if let Some(k) = control.stop_after {
                    if claimed.fetch_add(1, Ordering::SeqCst) >= k {
                        return None;
                    }
                }
                let out = plan.run(unit).and_then(|out| {
                    if let (Some(sink), Some(path)) = (&sink, control.partial) {
                        let line = serde_json::to_string(&PartialLine::new(unit.key(), &out))
                            .expect("partial line serializes");
                        let mut f = sink.lock().expect("partial sink poisoned");
                        writeln!(f, "{line}").map_err(|e| Error::io(path, e))?;
                        f.flush().map_err(|e| Error::io(path, e))?;
                    }
                    Ok(out)
                });
                if out.is_err() {
                    abort.store(true, Ordering::SeqCst);
                }
                Some(out)
            })
            .collect()
    });

    let mut computed = 0;
    let mut skipped = false;
    for (&(_, unit), out) in pending.iter().zip(outputs) {
        match out {
            Some(Ok(out)) => {
                computed += 1;
                done.insert(unit.key(), out);
            }
            Some(Err(e)) => {
                return Err(Error::Cell {
                    cell: unit.describe(plan.n()),
                    source: Box::new(e),
                })
            }
            None => skipped = true,
        }
    }
    if skipped {
        return Err(Error::Interrupted {
            completed: reused + computed,
        });
    }
    let result = assemble(&plan, &done, hash)?;
    Ok(SweepOutcome {
        result,
        computed,
        reused,
    })
}

fn assemble(plan: &Plan<'_>, done: &HashMap<String, UnitOutput>, hash: String) -> Result<SweepResult> {
    let get = |u: Unit| -> &UnitOutput { &done[&u.key()] };
    let cfg = plan.cfg;
    let eps = &plan.epsilons;
    let base = &get(Unit::CleanBase).evaluation;
    let tau = cfg.classification.resolve(base.mean);

    let adv_base: Vec<&Evaluation> = (0..eps.len())
        .map(|k| {
            if eps[k] == 0.0 {
                base
            } else {
                &get(Unit::AdvBase { eps: k }).evaluation
            }
        })
        .collect();
    let mut audit = BudgetAudit::new();
    for out in done.values() {
        if let Some(a) = &out.audit {
            audit.merge(a);
        }
    }

    let mut records = Vec::new();
    let mut anchors = Vec::new();
    let mut filter_curves = Vec::new();
    for &filter in &plan.filters {
        let mut points = Vec::new();
        for alpha in 0..=plan.n() + 1 {
            let clean = &get(Unit::CleanFilt { filter, alpha }).evaluation;
            let record = plan.filtered(filter, alpha)?.1;
            points.push(FilterPoint {
                alpha: record.alpha,
                identity: alpha > plan.n(),
                removed: record.removed_count,
                compactness: record.compactness,
                clean: Stat::from(clean),
            });
            for (k, &epsilon) in eps.iter().enumerate() {
                let adv = if epsilon == 0.0 {
                    clean
                } else {
                    &get(Unit::AdvFilt { filter, alpha, eps: k }).evaluation
                };
                let row = ScoreRecord::new(
                    filter,
                    record.alpha,
                    epsilon,
                    base.mean,
                    clean.mean,
                    adv_base[k].mean,
                    adv.mean,
                    record.compactness,
                    tau,
                );
                if alpha > plan.n() {
                    anchors.push(row);
                } else {
                    records.push(row);
                }
            }
        }
        filter_curves.push(FilterCurve { filter, points });
    }

    let attack_curve = eps
        .iter()
        .zip(&adv_base)
        .map(|(&epsilon, e)| AttackPoint {
            epsilon,
            adversarial: Stat::from(*e),
        })
        .collect();
    let statistics = match &plan.grid {
        Some(grid) => run_parameter_statistics(&plan.flat, grid, &plan.filters),
        None => Vec::new(),
    };
    Ok(SweepResult {
        provenance: Provenance {
            config_hash: hash,
            policy_digest: policy_digest(plan.policy),
            seeds: cfg.seeds.clone(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        },
        grid: plan.grid.clone(),
        epsilons: eps.clone(),
        tau,
        clean_baseline: Stat::from(base),
        attack_curve,
        filter_curves,
        records,
        anchors,
        statistics,
        audit,
    })
}
