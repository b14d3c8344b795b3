//! Parameter scores and the fragile/robust/antifragile labelling.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::FilterKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Fragile,
    Robust,
    Antifragile,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Fragile => "fragile",
            Label::Robust => "robust",
            Label::Antifragile => "antifragile",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fragile" => Ok(Label::Fragile),
            "robust" => Ok(Label::Robust),
            "antifragile" => Ok(Label::Antifragile),
            other => Err(Error::UnknownName {
                kind: "label",
                value: other.to_string(),
            }),
        }
    }
}

/// Width of the robust band around zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassificationPolicy {
    /// Reward units.
    Absolute(f64),
    /// Fraction of `|J_clean_baseline|`.
    FractionOfBaseline(f64),
}

impl Default for ClassificationPolicy {
    fn default() -> Self {
        ClassificationPolicy::FractionOfBaseline(0.05)
    }
}

impl ClassificationPolicy {
    pub fn validate(&self) -> Result<()> {
        let v = match *self {
            ClassificationPolicy::Absolute(v) | ClassificationPolicy::FractionOfBaseline(v) => v,
        };
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::InvalidConfig(format!("tau must be finite and >= 0, got {v}")));
        }
        Ok(())
    }

    /// Tolerance in reward units.
    pub fn resolve(&self, j_clean_baseline: f64) -> f64 {
        match *self {
            ClassificationPolicy::Absolute(tau) => tau,
            ClassificationPolicy::FractionOfBaseline(f) => f * j_clean_baseline.abs(),
        }
    }
}

/// `S_α = J(π_θ̃) − J(π_θ)`.
pub fn score_clean(j_filtered: f64, j_baseline: f64) -> f64 {
    j_filtered - j_baseline
}

/// `S^ε = J(π_θ̃^ε) − J(π_θ^ε)`.
pub fn score_adversarial(j_adv_filtered: f64, j_adv_baseline: f64) -> f64 {
    j_adv_filtered - j_adv_baseline
}

/// `ΔS = J(π_θ̃^ε) − J(π_θ̃)`.
pub fn score_combined(j_adv_filtered: f64, j_clean_filtered: f64) -> f64 {
    j_adv_filtered - j_clean_filtered
}

/// Trapezoidal `∫ (J_stressed − J_baseline) dσ` over the stress grid.
pub fn integrated_score(stress: &[f64], stressed: &[f64], baseline: &[f64]) -> Result<f64> {
    if stress.len() != stressed.len() || stress.len() != baseline.len() {
        return Err(Error::DimensionMismatch {
            context: "integrated_score",
            expected: stress.len(),
            got: if stressed.len() != stress.len() {
                stressed.len()
            } else {
                baseline.len()
            },
        });
    }
    if stress.len() < 2 {
        return Err(Error::InvalidConfig(
            "integrated_score needs at least two stress levels".into(),
        ));
    }
    if stress.windows(2).any(|w| !(w[1] >= w[0])) {
        return Err(Error::InvalidConfig("stress levels must be ascending".into()));
    }
    let diff: Vec<f64> = stressed.iter().zip(baseline).map(|(a, b)| a - b).collect();
    Ok(stress
        .windows(2)
        .zip(diff.windows(2))
        .map(|(s, d)| 0.5 * (s[1] - s[0]) * (d[0] + d[1]))
        .sum())
}

pub fn classify(score: f64, tau: f64) -> Label {
    if score < -tau {
        Label::Fragile
    } else if score > tau {
        Label::Antifragile
    } else {
        Label::Robust
    }
}

/// Most frequent label. Ties go to `Robust` when it is among the leaders,
/// otherwise to `Fragile`.
pub fn majority_label(labels: &[Label]) -> Option<Label> {
    if labels.is_empty() {
        return None;
    }
    let count = |l: Label| labels.iter().filter(|&&x| x == l).count();
    let counts = [
        (Label::Robust, count(Label::Robust)),
        (Label::Fragile, count(Label::Fragile)),
        (Label::Antifragile, count(Label::Antifragile)),
    ];
    let best = counts.iter().map(|c| c.1).max().unwrap_or(0);
    counts.iter().find(|c| c.1 == best).map(|c| c.0)
}

/// One `(filter, α, ε)` cell of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub filter: FilterKind,
    pub alpha: f64,
    pub epsilon: f64,
    pub j_clean_base: f64,
    pub j_clean_filt: f64,
    pub j_adv_base: f64,
    pub j_adv_filt: f64,
    pub s_clean: f64,
    pub s_adv: f64,
    pub s_delta: f64,
    pub compactness: f64,
    pub label: Label,
}

impl ScoreRecord {
    /// Derives all scores from the four evaluations. The label classifies
    /// `S^ε` against `tau` (reward units).
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        filter: FilterKind,
        alpha: f64,
        epsilon: f64,
        j_clean_base: f64,
        j_clean_filt: f64,
        j_adv_base: f64,
        j_adv_filt: f64,
        compactness: f64,
        tau: f64,
    ) -> Self {
        let s_adv = score_adversarial(j_adv_filt, j_adv_base);
        Self {
            filter,
            alpha,
            epsilon,
            j_clean_base,
            j_clean_filt,
            j_adv_base,
            j_adv_filt,
            s_clean: score_clean(j_clean_filt, j_clean_base),
            s_adv,
            s_delta: score_combined(j_adv_filt, j_clean_filt),
            compactness,
            label: classify(s_adv, tau),
        }
    }

    /// `|ΔS − (S^ε − S_α + J^ε_base − J_base)|`; zero up to rounding.
    pub fn identity_residual(&self) -> f64 {
        let recombined = self.s_adv - self.s_clean + (self.j_adv_base - self.j_clean_base);
        (self.s_delta - recombined).abs()
    }

    /// The stored scores are exactly the differences of the stored J values.
    pub fn differences_exact(&self) -> bool {
        self.s_clean == self.j_clean_filt - self.j_clean_base
            && self.s_adv == self.j_adv_filt - self.j_adv_base
            && self.s_delta == self.j_adv_filt - self.j_clean_filt
    }
}
