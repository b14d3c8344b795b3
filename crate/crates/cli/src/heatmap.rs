//! SVG heatmaps of `S^ε` over the α × ε grid.
//!
//! Diverging scale centred on white at zero: red for positive scores, blue
//! for negative, fully saturated at the largest `|S|` in the map.

use std::fmt::Write as _;

use antifrag::filters::FilterKind;
use antifrag::scoring::ScoreRecord;
use antifrag::{Error, Result};

use crate::table::fmt_real;

const CELL: f64 = 28.0;
const LEFT: f64 = 80.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 90.0;
const LEGEND_GAP: f64 = 30.0;
const LEGEND_W: f64 = 18.0;
const LEGEND_STEPS: usize = 21;

#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub filter: FilterKind,
    pub alphas: Vec<f64>,
    pub epsilons: Vec<f64>,
    /// `scores[k][i]` is the cell at `(alphas[i], epsilons[k])`.
    pub scores: Vec<Vec<f64>>,
}

fn sorted_unique(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| a.to_bits() == b.to_bits());
    v
}

impl Heatmap {
    /// Picks `filter`'s rows; the grid must be complete with no repeats.
    pub fn from_records(records: &[ScoreRecord], filter: FilterKind) -> Result<Self> {
        let rows: Vec<&ScoreRecord> = records.iter().filter(|r| r.filter == filter).collect();
        if rows.is_empty() {
            return Err(Error::Table(format!("no rows for filter {filter}")));
        }
        let alphas = sorted_unique(rows.iter().map(|r| r.alpha).collect());
        let epsilons = sorted_unique(rows.iter().map(|r| r.epsilon).collect());
        let mut cells = vec![vec![None; alphas.len()]; epsilons.len()];
        for r in &rows {
            let i = alphas.iter().position(|a| a.to_bits() == r.alpha.to_bits()).expect("collected");
            let k = epsilons.iter().position(|e| e.to_bits() == r.epsilon.to_bits()).expect("collected");
            if cells[k][i].replace(r.s_adv).is_some() {
                return Err(Error::Table(format!(
                    "duplicate cell alpha={} epsilon={}",
                    r.alpha, r.epsilon
                )));
            }
        }
        let scores = cells
            .into_iter()
            .enumerate()
            .map(|(k, row)| {
                row.into_iter()
                    .enumerate()
                    .map(|(i, s)| {
                        s.ok_or_else(|| {
                            Error::Table(format!(
                                "missing cell alpha={} epsilon={}",
                                alphas[i], epsilons[k]
                            ))
                        })
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            filter,
            alphas,
            epsilons,
            scores,
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.scores.iter().flatten().fold(0.0, |m, s| m.max(s.abs()))
    }

    pub fn render(&self) -> String {
        let cols = self.alphas.len() as f64;
        let rows = self.epsilons.len() as f64;
        let grid_w = cols * CELL;
        let grid_h = rows * CELL;
        let legend_x = LEFT + grid_w + LEGEND_GAP;
        let width = legend_x + LEGEND_W + 90.0;
        let height = TOP + grid_h + BOTTOM;
        let max = self.max_abs();

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="10">"#
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="20" text-anchor="middle" font-size="13">S_adv, filter {}</text>"#,
            LEFT + grid_w / 2.0,
            self.filter
        );
        // ε grows upwards, so row k sits (rows − 1 − k) cells below the top.
        for (k, (eps, row)) in self.epsilons.iter().zip(&self.scores).enumerate() {
            let y = TOP + (rows - 1.0 - k as f64) * CELL;
            for (i, (alpha, &score)) in self.alphas.iter().zip(row).enumerate() {
                let x = LEFT + i as f64 * CELL;
                let _ = writeln!(
                    s,
                    r#"<rect class="cell" x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{}" data-alpha="{}" data-epsilon="{}" data-score="{}"/>"#,
                    hex(color(score, max)),
                    fmt_real(*alpha),
                    fmt_real(*eps),
                    fmt_real(score)
                );
            }
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="end">{eps:.3}</text>"#,
                LEFT - 6.0,
                y + CELL / 2.0 + 3.0
            );
        }
        for (i, alpha) in self.alphas.iter().enumerate() {
            let x = LEFT + (i as f64 + 0.5) * CELL;
            let y = TOP + grid_h + 8.0;
            let _ = writeln!(
                s,
                r#"<text x="{x}" y="{y}" text-anchor="end" transform="rotate(-60 {x} {y})">{alpha:.3}</text>"#
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">threshold alpha</text>"#,
            LEFT + grid_w / 2.0,
            height - 8.0
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{0}" text-anchor="middle" font-size="12" transform="rotate(-90 16 {0})">attack epsilon</text>"#,
            TOP + grid_h / 2.0
        );

        // Legend: top is +max (red), bottom −max (blue).
        let step_h = grid_h.max(CELL * 3.0) / LEGEND_STEPS as f64;
        for j in 0..LEGEND_STEPS {
            let t = 1.0 - 2.0 * j as f64 / (LEGEND_STEPS - 1) as f64;
            let _ = writeln!(
                s,
                r#"<rect class="legend" x="{legend_x}" y="{}" width="{LEGEND_W}" height="{step_h}" fill="{}"/>"#,
                TOP + j as f64 * step_h,
                hex(color(t, 1.0))
            );
        }
        let legend_h = step_h * LEGEND_STEPS as f64;
        for (frac, value) in [(0.0, max), (0.5, 0.0), (1.0, -max)] {
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}">{value:+.3e}</text>"#,
                legend_x + LEGEND_W + 4.0,
                TOP + frac * legend_h + 3.0
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

/// White at 0, pure red at `+max`, pure blue at `−max`. An all-zero map
/// (`max == 0`) is uniformly white.
pub fn color(score: f64, max: f64) -> (u8, u8, u8) {
    if max == 0.0 || score == 0.0 {
        return (255, 255, 255);
    }
    let t = (score.abs() / max).min(1.0);
    let fade = (255.0 * (1.0 - t)).round() as u8;
    if score > 0.0 {
        (255, fade, fade)
    } else {
        (fade, fade, 255)
    }
}

pub fn hex((r, g, b): (u8, u8, u8)) -> String {
    format!("#{r:02x}{g:02x}{b:02x}")
}
