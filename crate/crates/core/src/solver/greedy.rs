//! Marginal-gain greedy with pairwise-swap local search. Heuristic: the
//! result carries the gap to the root bound and is marked non-optimal unless
//! that gap closes.

use super::{check_feasible, pools, root_bound, Selection, SolveStats, SolverTag, ACCEPT_TOL};
use crate::error::Result;
use crate::objective::{objective_of_sorted, RerankProblem};

const MAX_SWAP_ROUNDS: usize = 100;

fn value(problem: &RerankProblem, chosen: &[usize]) -> f64 {
    let mut sorted = chosen.to_vec();
    sorted.sort_unstable();
    objective_of_sorted(problem, &sorted)
}

pub fn solve_greedy(problem: &RerankProblem) -> Result<Selection> {
    check_feasible(problem)?;
    let pools = pools(problem);
    let mut chosen: Vec<usize> = Vec::with_capacity(problem.k);
    let mut evaluations = 0u64;

    for &(start, end, slots, _) in &pools {
        for _ in 0..slots {
            let base = chosen.clone();
            let mut best: Option<(f64, usize)> = None;
            for j in start..end {
                if chosen.contains(&j) {
                    continue;
                }
                let mut trial = base.clone();
                trial.push(j);
                evaluations += 1;
                let v = value(problem, &trial);
                if best.is_none_or(|(bv, _)| v > bv + ACCEPT_TOL) {
                    best = Some((v, j));
                }
            }
            if let Some((_, j)) = best {
                chosen.push(j);
            }
        }
    }

    let mut current = value(problem, &chosen);
    for _ in 0..MAX_SWAP_ROUNDS {
        let mut improved = false;
        for slot in 0..chosen.len() {
            let out = chosen[slot];
            let &(start, end, _, _) = pools
                .iter()
                .find(|&&(s, e, _, _)| (s..e).contains(&out))
                .expect("chosen item belongs to a pool");
            for j in start..end {
                if chosen.contains(&j) {
                    continue;
                }
                chosen[slot] = j;
                evaluations += 1;
                let v = value(problem, &chosen);
                if v > current + ACCEPT_TOL {
                    current = v;
                    improved = true;
                    break;
                }
                chosen[slot] = out;
            }
        }
        if !improved {
            break;
        }
    }

    chosen.sort_unstable();
    let bound = root_bound(problem)?;
    let mut sel = Selection::from_indices(
        problem,
        &chosen,
        SolverTag::GreedyFallback,
        false,
        SolveStats {
            nodes: evaluations,
            prunes: 0,
            micros: 0,
        },
    );
    let gap = (bound - sel.objective).max(0.0);
    sel.bound_gap = Some(gap);
    sel.optimal = gap <= ACCEPT_TOL;
    Ok(sel)
}
