//! Synaptic filtering: magnitude-threshold masks over the flat policy
//! vector.
//!
//! Boundary conventions:
//! - HPF removes `|θ| ≤ α`
//! - LPF removes `|θ| ≥ α`
//! - PWF removes `α − Δα/2 < |θ| ≤ α + Δα/2`

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of grid steps `N` (the grid has `N + 1` thresholds).
pub const DEFAULT_GRID_STEPS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Hpf,
    Lpf,
    Pwf,
}

impl FilterKind {
    pub const ALL: [FilterKind; 3] = [FilterKind::Hpf, FilterKind::Lpf, FilterKind::Pwf];

    pub fn as_str(self) -> &'static str {
        match self {
            FilterKind::Hpf => "hpf",
            FilterKind::Lpf => "lpf",
            FilterKind::Pwf => "pwf",
        }
    }

    pub fn index(self) -> u64 {
        match self {
            FilterKind::Hpf => 0,
            FilterKind::Lpf => 1,
            FilterKind::Pwf => 2,
        }
    }

    /// Mask for this filter at `alpha` (`delta_alpha` is only read by PWF).
    pub fn mask(self, theta: &[f64], alpha: f64, delta_alpha: f64) -> FilterMask {
        match self {
            FilterKind::Hpf => hpf_mask(theta, alpha),
            FilterKind::Lpf => lpf_mask(theta, alpha),
            FilterKind::Pwf => pwf_mask(theta, alpha, delta_alpha),
        }
    }

    /// A threshold outside the grid at which this filter removes nothing.
    pub fn identity_alpha(self, grid: &ThresholdGrid) -> f64 {
        match self {
            FilterKind::Hpf => grid.alpha_min - grid.delta_alpha,
            FilterKind::Lpf | FilterKind::Pwf => grid.alpha_max + grid.delta_alpha,
        }
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hpf" => Ok(FilterKind::Hpf),
            "lpf" => Ok(FilterKind::Lpf),
            "pwf" => Ok(FilterKind::Pwf),
            other => Err(Error::UnknownName {
                kind: "filter",
                value: other.to_string(),
            }),
        }
    }
}

/// Thresholds `α₀ … α_N` spanning `[min|θ|, max|θ|]` uniformly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdGrid {
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub n_steps: usize,
    pub delta_alpha: f64,
    pub values: Vec<f64>,
}

pub fn make_grid(theta: &[f64], n_steps: usize) -> Result<ThresholdGrid> {
    if theta.is_empty() {
        return Err(Error::Empty("parameter vector"));
    }
    if n_steps == 0 {
        return Err(Error::InvalidConfig("threshold grid needs N >= 1".into()));
    }
    if let Some(index) = theta.iter().position(|&t| t == 0.0) {
        return Err(Error::ZeroParameter { index });
    }
    if theta.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite {
            context: "threshold grid source",
        });
    }
    let (alpha_min, alpha_max) = theta
        .iter()
        .map(|t| t.abs())
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), a| (lo.min(a), hi.max(a)));
    if alpha_max == alpha_min {
        return Err(Error::DegenerateGrid(alpha_min));
    }
    let delta_alpha = (alpha_max - alpha_min) / n_steps as f64;
    let mut values: Vec<f64> = (0..=n_steps)
        .map(|i| alpha_min + i as f64 * delta_alpha)
        .collect();
    // Pin the top exactly so the extreme-threshold identities hold.
    values[n_steps] = alpha_max;
    Ok(ThresholdGrid {
        alpha_min,
        alpha_max,
        n_steps,
        delta_alpha,
        values,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterMask {
    pub bits: Vec<bool>,
    pub kind: FilterKind,
    pub alpha: f64,
}

impl FilterMask {
    pub fn source_len(&self) -> usize {
        self.bits.len()
    }

    pub fn removed_count(&self) -> usize {
        self.bits.iter().filter(|b| !**b).count()
    }

    /// Run-length text: alternating `1×n`/`0×n` runs, e.g. `1x3 0x2 1x1`.
    pub fn to_run_length(&self) -> String {
        let mut out = Vec::new();
        let mut iter = self.bits.iter().peekable();
        while let Some(&b) = iter.next() {
            let mut n = 1;
            while iter.peek() == Some(&&b) {
                iter.next();
                n += 1;
            }
            out.push(format!("{}x{}", u8::from(b), n));
        }
        out.join(" ")
    }

    pub fn from_run_length(kind: FilterKind, alpha: f64, text: &str) -> Result<Self> {
        let mut bits = Vec::new();
        for run in text.split_whitespace() {
            let (bit, count) = run
                .split_once('x')
                .ok_or_else(|| Error::InvalidConfig(format!("bad mask run `{run}`")))?;
            let bit = match bit {
                "0" => false,
                "1" => true,
                _ => return Err(Error::InvalidConfig(format!("bad mask bit in `{run}`"))),
            };
            let count: usize = count
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad mask count in `{run}`")))?;
            bits.extend(std::iter::repeat_n(bit, count));
        }
        Ok(Self { bits, kind, alpha })
    }
}

fn build_mask(theta: &[f64], kind: FilterKind, alpha: f64, removed: impl Fn(f64) -> bool) -> FilterMask {
    FilterMask {
        bits: theta.iter().map(|t| !removed(t.abs())).collect(),
        kind,
        alpha,
    }
}

pub fn hpf_mask(theta: &[f64], alpha: f64) -> FilterMask {
    build_mask(theta, FilterKind::Hpf, alpha, |m| m <= alpha)
}

pub fn lpf_mask(theta: &[f64], alpha: f64) -> FilterMask {
    build_mask(theta, FilterKind::Lpf, alpha, |m| m >= alpha)
}

pub fn pwf_mask(theta: &[f64], alpha: f64, delta_alpha: f64) -> FilterMask {
    let lo = alpha - delta_alpha / 2.0;
    let hi = alpha + delta_alpha / 2.0;
    build_mask(theta, FilterKind::Pwf, alpha, |m| lo < m && m <= hi)
}

/// `θ̃ = m ⊙ θ`.
pub fn apply_mask(theta: &[f64], mask: &FilterMask) -> Result<Vec<f64>> {
    if theta.len() != mask.bits.len() {
        return Err(Error::DimensionMismatch {
            context: "apply_mask",
            expected: mask.bits.len(),
            got: theta.len(),
        });
    }
    Ok(theta
        .iter()
        .zip(&mask.bits)
        .map(|(&t, &keep)| if keep { t } else { 0.0 })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompactnessRecord {
    pub kind: FilterKind,
    pub alpha: f64,
    pub removed_count: usize,
    pub total: usize,
    pub compactness: f64,
}

/// `Ψ = 1 − removed/total`. An empty mask counts as fully retained.
pub fn compactness(mask: &FilterMask) -> CompactnessRecord {
    let total = mask.bits.len();
    let removed_count = mask.removed_count();
    let compactness = if total == 0 {
        1.0
    } else {
        1.0 - removed_count as f64 / total as f64
    };
    CompactnessRecord {
        kind: mask.kind,
        alpha: mask.alpha,
        removed_count,
        total,
        compactness,
    }
}
