//! Depth-first branch-and-bound over include/exclude decisions.
//!
//! Candidates are branched in candidate order (include first), so the
//! exposure position of an included item is known when it is included: it is
//! the pool's position offset plus the number of pool items already chosen.
//!
//! Two admissible bounds on the best completion of a node are combined by
//! taking their minimum:
//!
//! * `dp`: an exact table over (candidate, items chosen) of the best
//!   relevance + repeat + exposure completion, ignoring coverage, plus
//!   `diversity/K` for every remaining slot that could still open a new
//!   category. Exact when the diversity weight is zero.
//! * `top-r`: each remaining item is valued at its best case over the
//!   remaining exposure positions, the best item of every uncovered category
//!   gets the coverage bonus, and the top `r` values are summed. Exact when
//!   the exposure weight is zero.

use super::{check_feasible, pools, Selection, SolveStats, SolverTag, ACCEPT_TOL};
use crate::error::Result;
use crate::objective::{objective_of_sorted, RerankProblem};

/// Allowance for rounding in computed bounds.
const BOUND_SLACK: f64 = 1e-12;

struct Pool {
    start: usize,
    end: usize,
    slots: usize,
    offset: usize,
    /// `dp[(j - start) * (slots + 1) + c]`: best completion choosing
    /// `slots - c` items from `j..end` with `c` already chosen.
    dp: Vec<f64>,
}

impl Pool {
    fn dp(&self, j: usize, c: usize) -> f64 {
        self.dp[(j - self.start) * (self.slots + 1) + c]
    }
}

struct Model<'a> {
    problem: &'a RerankProblem,
    linear: Vec<f64>,
    exposure_coef: Vec<f64>,
    category: Vec<usize>,
    n_categories: usize,
    bonus: f64,
    /// `weight[p]` for 1-based position `p`.
    weight: Vec<f64>,
    pools: Vec<Pool>,
    has_exposure: bool,
}

impl<'a> Model<'a> {
    fn new(problem: &'a RerankProblem) -> Self {
        let k = problem.k as f64;
        let w = problem.weights;
        let linear = problem
            .candidates
            .iter()
            .map(|c| w.relevance_scale * c.relevance + if c.is_repeat { w.repeat / k } else { 0.0 })
            .collect();
        let exposure_coef: Vec<f64> = problem.candidates.iter().map(|c| -w.fairness * c.fairness_coef).collect();
        let mut names: Vec<&str> = Vec::new();
        let category = problem
            .candidates
            .iter()
            .map(|c| match names.iter().position(|n| *n == c.category) {
                Some(i) => i,
                None => {
                    names.push(&c.category);
                    names.len() - 1
                }
            })
            .collect();
        let max_pos = problem.slots.total().max(problem.k) + 1;
        let weight = (0..=max_pos)
            .map(|p| if p == 0 { 0.0 } else { problem.exposure.weight(p) })
            .collect();
        let mut model = Model {
            problem,
            linear,
            has_exposure: exposure_coef.iter().any(|&f| f != 0.0),
            exposure_coef,
            category,
            n_categories: names.len(),
            bonus: w.diversity / k,
            weight,
            pools: Vec::new(),
        };
        model.pools = pools(problem)
            .into_iter()
            .map(|(start, end, slots, offset)| model.build_pool(start, end, slots, offset))
            .collect();
        model
    }

    fn value_at(&self, i: usize, position: usize) -> f64 {
        self.linear[i] + self.exposure_coef[i] * self.weight[position]
    }

    fn build_pool(&self, start: usize, end: usize, slots: usize, offset: usize) -> Pool {
        let width = slots + 1;
        let len = end - start;
        let mut dp = vec![f64::NEG_INFINITY; (len + 1) * width];
        dp[len * width + slots] = 0.0;
        for j in (0..len).rev() {
            dp[j * width + slots] = 0.0;
            for c in (0..slots).rev() {
                let skip = dp[(j + 1) * width + c];
                let take = self.value_at(start + j, offset + c + 1) + dp[(j + 1) * width + c + 1];
                dp[j * width + c] = skip.max(take);
            }
        }
        Pool {
            start,
            end,
            slots,
            offset,
            dp,
        }
    }
}

struct Search<'m, 'a> {
    m: &'m Model<'a>,
    chosen: Vec<usize>,
    category_count: Vec<u32>,
    covered: usize,
    best: f64,
    best_selection: Option<Vec<usize>>,
    nodes: u64,
    prunes: u64,
    stamp: Vec<u64>,
    generation: u64,
    best_in_category: Vec<usize>,
    scratch: Vec<f64>,
}

impl<'m, 'a> Search<'m, 'a> {
    fn new(m: &'m Model<'a>) -> Self {
        Search {
            m,
            chosen: Vec::with_capacity(m.problem.k),
            category_count: vec![0; m.n_categories],
            covered: 0,
            best: f64::NEG_INFINITY,
            best_selection: None,
            nodes: 0,
            prunes: 0,
            stamp: vec![0; m.n_categories],
            generation: 0,
            best_in_category: vec![0; m.n_categories],
            scratch: Vec::with_capacity(m.problem.candidates.len()),
        }
    }

    /// Upper bound on the objective still obtainable from `(p, i, c)`,
    /// excluding what is already banked.
    fn remaining_bound(&mut self, p: usize, i: usize, c: usize) -> f64 {
        let m = self.m;
        let later = &m.pools[p + 1..];
        let mut dp_bound = m.pools[p].dp(i, c) + later.iter().map(|q| q.dp(q.start, 0)).sum::<f64>();
        if dp_bound == f64::NEG_INFINITY || m.bonus == 0.0 {
            return dp_bound;
        }

        let slots_left = (m.pools[p].slots - c) + later.iter().map(|q| q.slots).sum::<usize>();
        self.generation += 1;
        let mut new_categories = 0;
        let ranges = std::iter::once((i, m.pools[p].end)).chain(later.iter().map(|q| (q.start, q.end)));
        for (from, to) in ranges {
            for j in from..to {
                let cat = m.category[j];
                if self.category_count[cat] == 0 && self.stamp[cat] != self.generation {
                    self.stamp[cat] = self.generation;
                    new_categories += 1;
                }
            }
        }
        dp_bound += m.bonus * new_categories.min(slots_left) as f64;

        let mut top_bound = self.top_r_bound(p, i, m.pools[p].slots - c, m.pools[p].offset + c + 1);
        for q in p + 1..m.pools.len() {
            let pool = &m.pools[q];
            top_bound += self.top_r_bound(q, pool.start, pool.slots, pool.offset + 1);
        }
        dp_bound.min(top_bound)
    }

    /// Top-`need` sum over items `from..end` of pool `p`, each at its best
    /// exposure position in `first_pos..=last_pos`, with the coverage bonus
    /// on the best item of each uncovered category.
    fn top_r_bound(&mut self, p: usize, from: usize, need: usize, first_pos: usize) -> f64 {
        let m = self.m;
        let pool = &m.pools[p];
        if need == 0 {
            return 0.0;
        }
        if pool.end - from < need {
            return f64::NEG_INFINITY;
        }
        let last_pos = pool.offset + pool.slots;
        let (e_hi, e_lo) = (m.weight[first_pos], m.weight[last_pos]);
        self.generation += 1;
        self.scratch.clear();
        for j in from..pool.end {
            let f = m.exposure_coef[j];
            let u = m.linear[j] + if m.has_exposure { (f * e_hi).max(f * e_lo) } else { 0.0 };
            let slot = self.scratch.len();
            self.scratch.push(u);
            let cat = m.category[j];
            if self.category_count[cat] == 0 {
                if self.stamp[cat] != self.generation {
                    self.stamp[cat] = self.generation;
                    self.best_in_category[cat] = slot;
                } else if u > self.scratch[self.best_in_category[cat]] {
                    self.best_in_category[cat] = slot;
                }
            }
        }
        for j in from..pool.end {
            let cat = m.category[j];
            if self.category_count[cat] == 0 && self.best_in_category[cat] == j - from {
                self.scratch[j - from] += m.bonus;
            }
        }
        let scratch = &mut self.scratch;
        if need < scratch.len() {
            scratch.select_nth_unstable_by(need - 1, |a, b| b.total_cmp(a));
        }
        scratch[..need].iter().sum()
    }

    fn push(&mut self, i: usize) {
        let cat = self.m.category[i];
        if self.category_count[cat] == 0 {
            self.covered += 1;
        }
        self.category_count[cat] += 1;
        self.chosen.push(i);
    }

    fn pop(&mut self) {
        let i = self.chosen.pop().expect("pop after push");
        let cat = self.m.category[i];
        self.category_count[cat] -= 1;
        if self.category_count[cat] == 0 {
            self.covered -= 1;
        }
    }

    fn visit(&mut self, mut p: usize, mut i: usize, mut c: usize, banked: f64) {
        self.nodes += 1;
        let m = self.m;
        while p < m.pools.len() && c == m.pools[p].slots {
            p += 1;
            c = 0;
            if p < m.pools.len() {
                i = m.pools[p].start;
            }
        }
        if p == m.pools.len() {
            let value = objective_of_sorted(m.problem, &self.chosen);
            if value > self.best + ACCEPT_TOL {
                self.best = value;
                self.best_selection = Some(self.chosen.clone());
            }
            return;
        }

        let bound = banked + m.bonus * self.covered as f64 + self.remaining_bound(p, i, c);
        if bound <= self.best + ACCEPT_TOL - BOUND_SLACK {
            self.prunes += 1;
            return;
        }

        let pool = &m.pools[p];
        let (end, slots, offset) = (pool.end, pool.slots, pool.offset);
        self.push(i);
        self.visit(p, i + 1, c + 1, banked + m.value_at(i, offset + c + 1));
        self.pop();
        if end - (i + 1) >= slots - c {
            self.visit(p, i + 1, c, banked);
        }
    }
}

/// Exact solver for any problem: category coverage, position-dependent
/// exposure and repeat/explore slot splits included.
pub fn solve_branch_and_bound(problem: &RerankProblem) -> Result<Selection> {
    check_feasible(problem)?;
    let model = Model::new(problem);
    let mut search = Search::new(&model);
    search.visit(0, model.pools.first().map_or(0, |p| p.start), 0, 0.0);
    let chosen = search.best_selection.take().unwrap_or_default();
    Ok(Selection::from_indices(
        problem,
        &chosen,
        SolverTag::BranchAndBound,
        true,
        SolveStats {
            nodes: search.nodes,
            prunes: search.prunes,
            micros: 0,
        },
    ))
}

/// Upper bound on the problem's optimum (the bound at the search root).
pub fn root_bound(problem: &RerankProblem) -> Result<f64> {
    check_feasible(problem)?;
    let model = Model::new(problem);
    let mut search = Search::new(&model);
    let mut p = 0;
    while p < model.pools.len() && model.pools[p].slots == 0 {
        p += 1;
    }
    if p == model.pools.len() {
        return Ok(objective_of_sorted(problem, &[]));
    }
    Ok(search.remaining_bound(p, model.pools[p].start, 0))
}
