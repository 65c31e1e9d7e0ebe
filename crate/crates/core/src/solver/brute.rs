//! Exhaustive enumeration, used as the reference oracle.

use super::{check_feasible, pools, Selection, SolveStats, SolverTag, ACCEPT_TOL};
use crate::error::{Error, Result};
use crate::objective::{objective_of_sorted, RerankProblem};

/// Maximum number of feasible selections brute force will enumerate.
pub const BRUTE_FORCE_LIMIT: u128 = 10_000_000;

pub(crate) fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

struct Enumeration<'a> {
    problem: &'a RerankProblem,
    pools: Vec<(usize, usize, usize, usize)>,
    current: Vec<usize>,
    best: f64,
    best_selection: Vec<usize>,
    leaves: u64,
}

impl Enumeration<'_> {
    fn run(&mut self, pool: usize, from: usize, left: usize) {
        if left == 0 {
            if pool + 1 < self.pools.len() {
                let (start, _, slots, _) = self.pools[pool + 1];
                self.run(pool + 1, start, slots);
            } else {
                self.leaves += 1;
                let value = objective_of_sorted(self.problem, &self.current);
                if value > self.best + ACCEPT_TOL {
                    self.best = value;
                    self.best_selection = self.current.clone();
                }
            }
            return;
        }
        let end = self.pools[pool].1;
        for j in from..=end - left {
            self.current.push(j);
            self.run(pool, j + 1, left - 1);
            self.current.pop();
        }
    }
}

/// Evaluates every feasible selection in lexicographic order and keeps the
/// first one that no later selection beats by more than the acceptance
/// tolerance.
pub fn solve_bruteforce(problem: &RerankProblem) -> Result<Selection> {
    check_feasible(problem)?;
    let pools = pools(problem);
    let count = pools
        .iter()
        .map(|&(start, end, slots, _)| binomial(end - start, slots))
        .fold(1u128, |acc, c| acc.saturating_mul(c));
    if count > BRUTE_FORCE_LIMIT {
        return Err(Error::BruteForceGuard {
            user: problem.user.clone(),
            count,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let (start, _, slots, _) = pools[0];
    let mut e = Enumeration {
        problem,
        pools,
        current: Vec::with_capacity(problem.k),
        best: f64::NEG_INFINITY,
        best_selection: Vec::new(),
        leaves: 0,
    };
    e.run(0, start, slots);
    Ok(Selection::from_indices(
        problem,
        &e.best_selection,
        SolverTag::BruteForce,
        true,
        SolveStats {
            nodes: e.leaves,
            prunes: 0,
            micros: 0,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomials() {
        assert_eq!(binomial(5, 2), 10);
        assert_eq!(binomial(12, 5), 792);
        assert_eq!(binomial(3, 4), 0);
        assert_eq!(binomial(100, 20), 535_983_370_403_809_682_970);
    }
}
