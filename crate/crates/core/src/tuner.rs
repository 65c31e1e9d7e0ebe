//! Grid search with the recall-tolerance selection rule.
//!
//! Every grid point is evaluated on the validation split. Points whose
//! recall stays within `recall_tolerance` of the unmodified baseline are
//! feasible; among them the tuner picks the highest mDR (diversity family)
//! or the lowest mFR (fairness family). Ties go to the lexicographically
//! smallest `(weight, lambda, theta)` point.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::SplitDataset;
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::objective::{ObjectiveKind, RerankConfig};
use crate::pipeline::{baseline_config, rerank_and_evaluate, Context};
use crate::scorer::CandidateSet;
use crate::solver::Engine;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub epsilon_grid: Vec<f64>,
    pub alpha_grid: Vec<f64>,
    pub lambda_grid: Vec<f64>,
    /// `None`: deciles of the pooled repeat scores.
    pub theta_grid: Option<Vec<f64>>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            epsilon_grid: vec![0.0, 0.001, 0.01, 0.02, 0.04, 0.06, 0.08, 0.1, 0.12, 0.14, 0.16, 0.18, 0.2],
            alpha_grid: vec![
                0.0, 0.001, 0.01, 0.1, 1.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0, 100.0, 200.0,
            ],
            lambda_grid: vec![0.0, 0.001, 0.01, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
            theta_grid: None,
        }
    }
}

fn normalize(name: &str, values: &[f64], non_negative: bool) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::Config(format!("{name} grid is empty")));
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite() || (non_negative && **v < 0.0)) {
        return Err(Error::Config(format!("{name} grid contains invalid value {bad}")));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    Ok(v)
}

/// Deciles (10%..90%) of `scores`, nearest-rank, deduplicated ascending.
pub fn theta_deciles(scores: &[f64]) -> Vec<f64> {
    if scores.is_empty() {
        return vec![0.0];
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut out: Vec<f64> = (1..10)
        .map(|d| {
            let rank = (d * n).div_ceil(10).max(1);
            sorted[rank - 1]
        })
        .collect();
    out.dedup();
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridEntry {
    pub config: RerankConfig,
    pub report: MetricsReport,
    pub feasible: bool,
}

impl GridEntry {
    /// `(diversity or fairness weight, lambda, theta)`.
    pub fn point(&self) -> (f64, f64, f64) {
        point_of(&self.config)
    }
}

fn point_of(cfg: &RerankConfig) -> (f64, f64, f64) {
    let weight = match cfg.objective_kind {
        ObjectiveKind::Raif | ObjectiveKind::NaiveFair => cfg.alpha,
        _ => cfg.epsilon,
    };
    (weight, cfg.lambda, cfg.theta)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub kind: ObjectiveKind,
    pub best: RerankConfig,
    pub best_report: MetricsReport,
    pub baseline: MetricsReport,
    pub entries: Vec<GridEntry>,
    pub feasible_count: usize,
    /// No grid point met the recall tolerance; `best` is the baseline.
    pub infeasible: bool,
}

/// Index of the selected entry among `entries` (in grid order), or `None`
/// when none is feasible.
pub fn select_best(entries: &[GridEntry], kind: ObjectiveKind) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, e) in entries.iter().enumerate() {
        if !e.feasible {
            continue;
        }
        let better = match best {
            None => true,
            Some(b) => {
                let (cur, new) = (&entries[b], e);
                let ord = match kind {
                    ObjectiveKind::Raif | ObjectiveKind::NaiveFair => cur.report.m_fr.total_cmp(&new.report.m_fr),
                    _ => new.report.m_dr.total_cmp(&cur.report.m_dr),
                };
                match ord {
                    std::cmp::Ordering::Greater => true,
                    std::cmp::Ordering::Less => false,
                    std::cmp::Ordering::Equal => {
                        let (a, b) = (new.point(), cur.point());
                        (a.0, a.1, a.2).partial_cmp(&(b.0, b.1, b.2)) == Some(std::cmp::Ordering::Less)
                    }
                }
            }
        };
        if better {
            best = Some(i);
        }
    }
    best
}

/// Grid points for `cfg.objective_kind` and the candidate kind. Combined
/// candidates tune the threshold instead of the repeat weight.
pub fn grid_configs(cfg: &RerankConfig, grid: &GridSpec, cands: &CandidateSet) -> Result<Vec<RerankConfig>> {
    let kind = cfg.objective_kind;
    let weights = match kind {
        ObjectiveKind::Radiv => normalize("epsilon", &grid.epsilon_grid, true)?,
        ObjectiveKind::Raif => normalize("alpha", &grid.alpha_grid, true)?,
        other => {
            return Err(Error::Config(format!("grid search supports radiv and raif, not {other}")));
        }
    };
    let (lambdas, thetas) = match cands {
        CandidateSet::Unified(_) => (normalize("lambda", &grid.lambda_grid, true)?, vec![cfg.theta]),
        CandidateSet::Combined { repeat, .. } => {
            let thetas = match &grid.theta_grid {
                Some(t) => normalize("theta", t, false)?,
                None => theta_deciles(&repeat.all_scores()),
            };
            (vec![0.0], thetas)
        }
    };
    let mut out = Vec::with_capacity(weights.len() * lambdas.len() * thetas.len());
    for &w in &weights {
        for &lambda in &lambdas {
            for &theta in &thetas {
                let mut c = cfg.clone();
                match kind {
                    ObjectiveKind::Raif => {
                        c.alpha = w;
                        c.epsilon = 0.0;
                    }
                    _ => {
                        c.epsilon = w;
                        c.alpha = 0.0;
                    }
                }
                c.lambda = lambda;
                c.theta = theta;
                out.push(c);
            }
        }
    }
    Ok(out)
}

/// Evaluates the full grid on `validation` and applies the selection rule.
pub fn run_grid(
    ctx: &Context,
    validation: &SplitDataset,
    cands: &CandidateSet,
    cfg: &RerankConfig,
    grid: &GridSpec,
    engine: Engine,
) -> Result<TuneResult> {
    cfg.validate()?;
    let configs = grid_configs(cfg, grid, cands)?;
    let (_, baseline) = rerank_and_evaluate(ctx, cands, validation, &baseline_config(cfg), engine)?;
    let threshold = (1.0 - cfg.recall_tolerance) * baseline.recall;

    let reports: Vec<MetricsReport> = configs
        .par_iter()
        .map(|c| rerank_and_evaluate(ctx, cands, validation, c, engine).map(|(_, r)| r))
        .collect::<Result<_>>()?;
    let entries: Vec<GridEntry> = configs
        .into_iter()
        .zip(reports)
        .map(|(config, report)| GridEntry {
            feasible: report.recall >= threshold,
            config,
            report,
        })
        .collect();
    let feasible_count = entries.iter().filter(|e| e.feasible).count();
    let (best, best_report, infeasible) = match select_best(&entries, cfg.objective_kind) {
        Some(i) => (entries[i].config.clone(), entries[i].report.clone(), false),
        None => (baseline_config(cfg), baseline.clone(), true),
    };
    Ok(TuneResult {
        kind: cfg.objective_kind,
        best,
        best_report,
        baseline,
        entries,
        feasible_count,
        infeasible,
    })
}

/// Evaluates the tuned configuration once on the test split.
pub fn final_evaluate(
    tune: &TuneResult,
    kind: ObjectiveKind,
    ctx: &Context,
    test: &SplitDataset,
    cands: &CandidateSet,
    engine: Engine,
) -> Result<MetricsReport> {
    if tune.kind != kind || tune.best.objective_kind != kind {
        return Err(Error::ObjectiveKindMismatch {
            tuned: tune.kind.to_string(),
            requested: kind.to_string(),
        });
    }
    rerank_and_evaluate(ctx, cands, test, &tune.best, engine).map(|(_, r)| r)
}

impl TuneResult {
    /// One row per grid point with every metric.
    pub fn sweep_csv(&self) -> String {
        let mut out = String::from(
            "objective_kind,epsilon,alpha,lambda,theta,recall,ds,logdp,rep_ratio,rep_bias,mfr,mdr,feasible\n",
        );
        for e in &self.entries {
            let c = &e.config;
            let r = &e.report;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                c.objective_kind,
                c.epsilon,
                c.alpha,
                c.lambda,
                c.theta,
                r.recall,
                r.ds,
                r.log_dp,
                r.rep_ratio_rec,
                r.rep_bias,
                r.m_fr,
                r.m_dr,
                u8::from(e.feasible)
            );
        }
        out
    }

    /// One-parameter sweeps through the selected point:
    /// `param,value,recall,ds,logdp,repratio`.
    pub fn plot_data_csv(&self) -> String {
        let mut out = String::from("param,value,recall,ds,logdp,repratio\n");
        let (bw, bl, bt) = point_of(&self.best);
        let weight_name = match self.kind {
            ObjectiveKind::Raif | ObjectiveKind::NaiveFair => "alpha",
            _ => "epsilon",
        };
        let best = [bw, bl, bt];
        for (axis, name) in [weight_name, "lambda", "theta"].into_iter().enumerate() {
            let rows: Vec<(f64, &MetricsReport)> = self
                .entries
                .iter()
                .filter_map(|e| {
                    let (w, l, t) = e.point();
                    let p = [w, l, t];
                    (0..3).all(|i| i == axis || p[i] == best[i]).then_some((p[axis], &e.report))
                })
                .collect();
            if rows.len() < 2 {
                continue;
            }
            for (v, r) in rows {
                let _ = writeln!(out, "{name},{v},{},{},{},{}", r.recall, r.ds, r.log_dp, r.rep_ratio_rec);
            }
        }
        out
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
