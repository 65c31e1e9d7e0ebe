//! Comparison table over metric reports: one row per run, best value per
//! column marked with `*`.

use anyhow::{bail, Result};

use repbias::metrics::MetricsReport;
use repbias::objective::ObjectiveKind;

/// Canonical row order.
const ROW_ORDER: [&str; 6] = ["Ori.", "D", "F", "R", "RD", "RF"];

/// Row label of an objective kind.
pub fn label_of(kind: ObjectiveKind) -> &'static str {
    match kind {
        ObjectiveKind::RelevanceOnly => "Ori.",
        ObjectiveKind::NaiveDiv => "D",
        ObjectiveKind::NaiveFair => "F",
        ObjectiveKind::RepeatOnly => "R",
        ObjectiveKind::Radiv => "RD",
        ObjectiveKind::Raif => "RF",
    }
}

#[derive(Clone, Copy)]
enum Best {
    Max,
    Min,
    MinAbs,
    None,
}

const COLUMNS: [(&str, Best); 7] = [
    ("Recall", Best::Max),
    ("DS", Best::Max),
    ("logDP", Best::MinAbs),
    ("RepRatio", Best::None),
    ("RepBias", Best::MinAbs),
    ("mFR", Best::Min),
    ("mDR", Best::Max),
];

fn values(r: &MetricsReport) -> [f64; 7] {
    [r.recall, r.ds, r.log_dp, r.rep_ratio_rec, r.rep_bias, r.m_fr, r.m_dr]
}

pub struct Table {
    rows: Vec<(String, [f64; 7])>,
    best: [Option<usize>; 7],
}

impl Table {
    /// Rows in canonical order (unknown labels last, input order kept among
    /// equals). Errors when the reports disagree on K or ω.
    pub fn new(reports: &[MetricsReport], labels: Option<&[String]>) -> Result<Self> {
        let Some(first) = reports.first() else { bail!("no reports") };
        if let Some(r) = reports.iter().find(|r| r.k != first.k) {
            bail!("reports mix basket sizes: K = {} and K = {}", first.k, r.k);
        }
        if let Some(r) = reports.iter().find(|r| r.omega != first.omega) {
            bail!("reports mix omega values: {} and {}", first.omega, r.omega);
        }
        let mut rows: Vec<(String, [f64; 7])> = reports
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let label = match labels {
                    Some(l) => l[i].clone(),
                    None => label_of(r.config.objective_kind).to_string(),
                };
                (label, values(r))
            })
            .collect();
        rows.sort_by_key(|(label, _)| ROW_ORDER.iter().position(|l| l == label).unwrap_or(ROW_ORDER.len()));
        let mut best = [None; 7];
        if rows.len() > 1 {
            for (c, (_, rule)) in COLUMNS.iter().enumerate() {
                let key = |v: f64| match rule {
                    Best::Max => Some(v),
                    Best::Min => Some(-v),
                    Best::MinAbs => Some(-v.abs()),
                    Best::None => None,
                };
                let mut top: Option<(usize, f64)> = None;
                for (i, (_, v)) in rows.iter().enumerate() {
                    if let Some(k) = key(v[c]) {
                        if top.is_none_or(|(_, t)| k > t) {
                            top = Some((i, k));
                        }
                    }
                }
                best[c] = top.map(|(i, _)| i);
            }
        }
        Ok(Table { rows, best })
    }

    fn cells(&self) -> Vec<Vec<String>> {
        let mut out = vec![std::iter::once("Method".to_string())
            .chain(COLUMNS.iter().map(|(name, _)| name.to_string()))
            .collect::<Vec<_>>()];
        for (i, (label, v)) in self.rows.iter().enumerate() {
            let mut row = vec![label.clone()];
            for (c, x) in v.iter().enumerate() {
                let mark = if self.best[c] == Some(i) { "*" } else { "" };
                row.push(format!("{x:.4}{mark}"));
            }
            out.push(row);
        }
        out
    }

    pub fn to_text(&self) -> String {
        let cells = self.cells();
        let widths: Vec<usize> = (0..cells[0].len())
            .map(|c| cells.iter().map(|r| r[c].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for row in &cells {
            let line: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(c, s)| if c == 0 { format!("{s:<w$}", w = widths[c]) } else { format!("{s:>w$}", w = widths[c]) })
                .collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let cells = self.cells();
        let mut out = format!("| {} |\n", cells[0].join(" | "));
        out.push_str(&format!("|{}\n", " --- |".repeat(cells[0].len())));
        for row in &cells[1..] {
            out.push_str(&format!("| {} |\n", row.join(" | ")));
        }
        out
    }

    #[cfg(test)]
    pub fn labels(&self) -> Vec<&str> {
        self.rows.iter().map(|(l, _)| l.as_str()).collect()
    }
}
