//! Results CSV and the tables derived from it.

use std::io::{Read, Write};

use antifrag::filters::{CompactnessRecord, FilterKind};
use antifrag::harness::SweepResult;
use antifrag::scoring::{classify, integrated_score, majority_label, Label, ScoreRecord};
use antifrag::{Error, Result};

pub const RESULTS_HEADER: [&str; 12] = [
    "filter",
    "alpha",
    "epsilon",
    "J_clean_base",
    "J_clean_filt",
    "J_adv_base",
    "J_adv_filt",
    "S_clean",
    "S_adv",
    "S_delta",
    "compactness",
    "label",
];

/// 17 significant digits: parsing the text gives back the same `f64`.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

fn table_err(e: impl std::fmt::Display) -> Error {
    Error::Table(e.to_string())
}

pub fn write_records<W: Write>(out: W, records: &[ScoreRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RESULTS_HEADER).map_err(table_err)?;
    for r in records {
        let reals = [
            r.alpha,
            r.epsilon,
            r.j_clean_base,
            r.j_clean_filt,
            r.j_adv_base,
            r.j_adv_filt,
            r.s_clean,
            r.s_adv,
            r.s_delta,
            r.compactness,
        ];
        let mut row = vec![r.filter.to_string()];
        row.extend(reals.iter().map(|&x| fmt_real(x)));
        row.push(r.label.to_string());
        w.write_record(&row).map_err(table_err)?;
    }
    w.flush().map_err(table_err)
}

pub fn read_records<R: Read>(input: R) -> Result<Vec<ScoreRecord>> {
    let mut rd = csv::Reader::from_reader(input);
    let header = rd.headers().map_err(table_err)?.clone();
    if header.iter().ne(RESULTS_HEADER.iter().copied()) {
        return Err(Error::Table(format!(
            "unexpected header `{}`",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut records = Vec::new();
    for (i, row) in rd.records().enumerate() {
        let row = row.map_err(table_err)?;
        let line = i + 2;
        let real = |c: usize| -> Result<f64> {
            row[c]
                .parse::<f64>()
                .map_err(|e| Error::Table(format!("line {line}, column {}: {e}", RESULTS_HEADER[c])))
        };
        let filter: FilterKind = row[0]
            .parse()
            .map_err(|e| Error::Table(format!("line {line}: {e}")))?;
        let label: Label = row[11]
            .parse()
            .map_err(|e| Error::Table(format!("line {line}: {e}")))?;
        records.push(ScoreRecord {
            filter,
            alpha: real(1)?,
            epsilon: real(2)?,
            j_clean_base: real(3)?,
            j_clean_filt: real(4)?,
            j_adv_base: real(5)?,
            j_adv_filt: real(6)?,
            s_clean: real(7)?,
            s_adv: real(8)?,
            s_delta: real(9)?,
            compactness: real(10)?,
            label,
        });
    }
    Ok(records)
}

/// `kind,filter,alpha,epsilon,mean,std`: the attack curve (`kind=attack`)
/// followed by each filter's clean curve (`kind=filter`).
pub fn write_curves<W: Write>(out: W, result: &SweepResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["kind", "filter", "alpha", "epsilon", "mean", "std"])
        .map_err(table_err)?;
    for p in &result.attack_curve {
        w.write_record([
            "attack".to_string(),
            String::new(),
            String::new(),
            fmt_real(p.epsilon),
            fmt_real(p.adversarial.mean),
            fmt_real(p.adversarial.std),
        ])
        .map_err(table_err)?;
    }
    for c in &result.filter_curves {
        for p in &c.points {
            w.write_record([
                if p.identity { "identity" } else { "filter" }.to_string(),
                c.filter.to_string(),
                fmt_real(p.alpha),
                fmt_real(0.0),
                fmt_real(p.clean.mean),
                fmt_real(p.clean.std),
            ])
            .map_err(table_err)?;
        }
    }
    w.flush().map_err(table_err)
}

/// `filter,alpha,removed,total,compactness`.
pub fn write_statistics<W: Write>(out: W, stats: &[CompactnessRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["filter", "alpha", "removed", "total", "compactness"])
        .map_err(table_err)?;
    for s in stats {
        w.write_record([
            s.kind.to_string(),
            fmt_real(s.alpha),
            s.removed_count.to_string(),
            s.total.to_string(),
            fmt_real(s.compactness),
        ])
        .map_err(table_err)?;
    }
    w.flush().map_err(table_err)
}

/// How `classify` decides labels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauOverride {
    /// Keep the labels stored in the table.
    Stored,
    Absolute(f64),
    FractionOfBaseline(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub filter: FilterKind,
    pub alpha: f64,
    pub fragile: usize,
    pub robust: usize,
    pub antifragile: usize,
    pub majority: Label,
    /// `∫ (J_adv_filt − J_adv_base) dε` over the table's ε values.
    pub integrated: f64,
}

/// One summary per `(filter, α)` in order of first appearance.
pub fn summarize(records: &[ScoreRecord], tau: TauOverride) -> Result<Vec<Summary>> {
    let mut groups: Vec<(FilterKind, f64, Vec<&ScoreRecord>)> = Vec::new();
    for r in records {
        match groups
            .iter_mut()
            .find(|g| g.0 == r.filter && g.1.to_bits() == r.alpha.to_bits())
        {
            Some(g) => g.2.push(r),
            None => groups.push((r.filter, r.alpha, vec![r])),
        }
    }
    groups
        .into_iter()
        .map(|(filter, alpha, mut rows)| {
            rows.sort_by(|a, b| a.epsilon.total_cmp(&b.epsilon));
            let labels: Vec<Label> = rows
                .iter()
                .map(|r| match tau {
                    TauOverride::Stored => r.label,
                    TauOverride::Absolute(t) => classify(r.s_adv, t),
                    TauOverride::FractionOfBaseline(f) => classify(r.s_adv, f * r.j_clean_base.abs()),
                })
                .collect();
            let eps: Vec<f64> = rows.iter().map(|r| r.epsilon).collect();
            let stressed: Vec<f64> = rows.iter().map(|r| r.j_adv_filt).collect();
            let baseline: Vec<f64> = rows.iter().map(|r| r.j_adv_base).collect();
            let integrated = if rows.len() >= 2 {
                integrated_score(&eps, &stressed, &baseline)?
            } else {
                0.0
            };
            let count = |l: Label| labels.iter().filter(|&&x| x == l).count();
            Ok(Summary {
                filter,
                alpha,
                fragile: count(Label::Fragile),
                robust: count(Label::Robust),
                antifragile: count(Label::Antifragile),
                majority: majority_label(&labels).expect("groups are nonempty"),
                integrated,
            })
        })
        .collect()
}

pub fn write_summary<W: Write>(out: W, rows: &[Summary]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "filter",
        "alpha",
        "fragile",
        "robust",
        "antifragile",
        "majority",
        "integrated_score",
    ])
    .map_err(table_err)?;
    for s in rows {
        w.write_record([
            s.filter.to_string(),
            fmt_real(s.alpha),
            s.fragile.to_string(),
            s.robust.to_string(),
            s.antifragile.to_string(),
            s.majority.to_string(),
            fmt_real(s.integrated),
        ])
        .map_err(table_err)?;
    }
    w.flush().map_err(table_err)
}
