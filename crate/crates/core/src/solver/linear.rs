//! Closed-form path for objectives that are additive per item.

use super::{check_feasible, pools, Selection, SolveStats, SolverTag};
use crate::error::{Error, Result};
use crate::objective::{ExposureModel, RerankProblem};

/// True when every item's contribution is independent of the rest of the
/// selection: no coverage term, and exposure either unweighted or uniform.
pub fn linear_eligible(problem: &RerankProblem) -> bool {
    let w = problem.weights;
    w.diversity == 0.0 && (w.fairness == 0.0 || problem.exposure == ExposureModel::Uniform)
}

/// Per-item value used by the linear path.
fn adjusted_value(problem: &RerankProblem, i: usize) -> f64 {
    let w = problem.weights;
    let c = &problem.candidates[i];
    let mut v = w.relevance_scale * c.relevance - w.fairness * c.fairness_coef;
    if c.is_repeat {
        v += w.repeat / problem.k as f64;
    }
    v
}

/// Takes the best `slots` items of each pool by adjusted value (ties to the
/// earlier candidate). Optimal whenever [`linear_eligible`] holds.
pub fn solve_topk_linear(problem: &RerankProblem) -> Result<Selection> {
    if !linear_eligible(problem) {
        return Err(Error::Solver {
            user: problem.user.clone(),
            message: "topk_linear requires no diversity term and uniform exposure".into(),
        });
    }
    check_feasible(problem)?;
    let mut chosen = Vec::with_capacity(problem.k);
    for (start, end, slots, _) in pools(problem) {
        let mut idx: Vec<usize> = (start..end).collect();
        let values: Vec<f64> = idx.iter().map(|&i| adjusted_value(problem, i)).collect();
        idx.sort_by(|&a, &b| values[b - start].total_cmp(&values[a - start]).then(a.cmp(&b)));
        let mut top: Vec<usize> = idx.into_iter().take(slots).collect();
        top.sort_unstable();
        chosen.extend(top);
    }
    Ok(Selection::from_indices(
        problem,
        &chosen,
        SolverTag::TopkLinear,
        true,
        SolveStats::default(),
    ))
}
