//! Exact per-user solvers.
//!
//! The global re-ranking program has no term or constraint linking two
//! users, so it is solved user by user. Every solver returns a [`Selection`]
//! in basket order (candidate order) with its objective recomputed by
//! [`objective_of_sorted`].
//!
//! Tie rule shared by all exact engines: leaves are visited in
//! lexicographic order of their candidate-index sequences and a leaf only
//! replaces the incumbent when it is better by more than [`ACCEPT_TOL`].
//! Among (near-)equal optima the selection with the lexicographically
//! smallest candidate-rank sequence therefore wins, which prefers the more
//! relevant items and keeps brute force and branch-and-bound comparable
//! selection by selection.

mod bnb;
mod brute;
mod greedy;
mod linear;

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::RepeatSets;
use crate::error::{Error, Result};
use crate::objective::{objective_of_sorted, RerankConfig, RerankProblem};

pub use bnb::{root_bound, solve_branch_and_bound};
pub use brute::{solve_bruteforce, BRUTE_FORCE_LIMIT};
pub use greedy::solve_greedy;
pub use linear::{linear_eligible, solve_topk_linear};

/// A leaf must beat the incumbent by more than this to replace it.
pub const ACCEPT_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverTag {
    TopkLinear,
    BranchAndBound,
    BruteForce,
    GreedyFallback,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolveStats {
    pub nodes: u64,
    pub prunes: u64,
    pub micros: u64,
}

/// One user's re-ranked basket.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub user: String,
    /// Item ids in basket order (rank 1 first).
    pub items: Vec<String>,
    pub repeat_flags: Vec<bool>,
    pub objective: f64,
    pub solver_tag: SolverTag,
    pub optimal: bool,
    /// Upper bound minus objective, for heuristic solutions.
    pub bound_gap: Option<f64>,
    pub stats: SolveStats,
}

impl Selection {
    pub(crate) fn from_indices(
        problem: &RerankProblem,
        sorted: &[usize],
        solver_tag: SolverTag,
        optimal: bool,
        stats: SolveStats,
    ) -> Self {
        Selection {
            user: problem.user.clone(),
            items: sorted.iter().map(|&i| problem.candidates[i].item.clone()).collect(),
            repeat_flags: sorted.iter().map(|&i| problem.candidates[i].is_repeat).collect(),
            objective: objective_of_sorted(problem, sorted),
            solver_tag,
            optimal,
            bound_gap: None,
            stats,
        }
    }

    pub fn repeat_count(&self) -> usize {
        self.repeat_flags.iter().filter(|&&r| r).count()
    }
}

/// Which solver to run per user.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    /// Linear shortcut when the problem allows it, branch-and-bound otherwise.
    #[default]
    Auto,
    TopkLinear,
    BranchAndBound,
    BruteForce,
    /// Heuristic; only on explicit request.
    Greedy,
}

impl std::str::FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "auto" => Ok(Engine::Auto),
            "topk_linear" | "linear" => Ok(Engine::TopkLinear),
            "branch_and_bound" | "bnb" => Ok(Engine::BranchAndBound),
            "brute_force" | "bruteforce" => Ok(Engine::BruteForce),
            "greedy" => Ok(Engine::Greedy),
            other => Err(Error::Config(format!("unknown engine {other:?}"))),
        }
    }
}

pub fn solve(problem: &RerankProblem, engine: Engine) -> Result<Selection> {
    let start = Instant::now();
    let mut sel = match engine {
        Engine::Auto if linear_eligible(problem) => solve_topk_linear(problem),
        Engine::Auto | Engine::BranchAndBound => solve_branch_and_bound(problem),
        Engine::TopkLinear => solve_topk_linear(problem),
        Engine::BruteForce => solve_bruteforce(problem),
        Engine::Greedy => solve_greedy(problem),
    }?;
    sel.stats.micros = start.elapsed().as_micros() as u64;
    Ok(sel)
}

/// Solves every combined problem in the same way; pool slots are part of
/// the problem so no separate code path is needed.
pub fn solve_combined(problem: &RerankProblem) -> Result<Selection> {
    if matches!(problem.slots, crate::objective::Slots::Total(_)) {
        return Err(Error::Solver {
            user: problem.user.clone(),
            message: "solve_combined needs a repeat/explore slot split".into(),
        });
    }
    solve(problem, Engine::Auto)
}

/// Re-ranked baskets for a set of users plus the configuration used.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RerankedBaskets {
    pub config: RerankConfig,
    pub baskets: BTreeMap<String, Selection>,
}

impl RerankedBaskets {
    pub fn k(&self) -> usize {
        self.config.k
    }

    pub fn len(&self) -> usize {
        self.baskets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.baskets.is_empty()
    }

    /// Sum of per-user objectives: the value of the global program.
    pub fn total_objective(&self) -> f64 {
        self.baskets.values().map(|s| s.objective).sum()
    }

    /// Item lists in basket order, keyed by user.
    pub fn item_lists(&self) -> BTreeMap<String, Vec<String>> {
        self.baskets.iter().map(|(u, s)| (u.clone(), s.items.clone())).collect()
    }

    /// Mean share of each basket's `k` slots taken by repeat items.
    pub fn repeat_ratio(&self, reps: &RepeatSets) -> f64 {
        if self.baskets.is_empty() {
            return 0.0;
        }
        let k = self.k() as f64;
        let total: f64 = self
            .baskets
            .iter()
            .map(|(u, s)| s.items.iter().filter(|i| reps.contains(u, i)).count() as f64 / k)
            .sum();
        total / self.baskets.len() as f64
    }

    /// Writes `user_id<TAB>rank<TAB>item_id<TAB>is_repeat` rows.
    pub fn save_tsv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        self.write_tsv(&mut out).map_err(|e| Error::io(path, e))?;
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_tsv(&self, out: &mut impl Write) -> std::io::Result<()> {
        for (user, sel) in &self.baskets {
            for (rank, (item, rep)) in sel.items.iter().zip(&sel.repeat_flags).enumerate() {
                writeln!(out, "{user}\t{}\t{item}\t{}", rank + 1, u8::from(*rep))?;
            }
        }
        Ok(())
    }

    /// Per-user solver statistics as JSON.
    pub fn stats_json(&self) -> serde_json::Value {
        let per_user: BTreeMap<&str, serde_json::Value> = self
            .baskets
            .iter()
            .map(|(u, s)| {
                (
                    u.as_str(),
                    serde_json::json!({
                        "solver": s.solver_tag,
                        "optimal": s.optimal,
                        "objective": s.objective,
                        "nodes": s.stats.nodes,
                        "prunes": s.stats.prunes,
                        "wall_micros": s.stats.micros,
                        "bound_gap": s.bound_gap,
                    }),
                )
            })
            .collect();
        serde_json::json!({
            "users": self.baskets.len(),
            "total_objective": self.total_objective(),
            "total_nodes": self.baskets.values().map(|s| s.stats.nodes).sum::<u64>(),
            "all_optimal": self.baskets.values().all(|s| s.optimal),
            "per_user": per_user,
        })
    }
}

/// Reads a baskets TSV written by [`RerankedBaskets::save_tsv`] into item
/// lists keyed by user, ordered by rank.
pub fn load_baskets_tsv(path: &Path) -> Result<BTreeMap<String, Vec<String>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut ranked: BTreeMap<String, BTreeMap<usize, String>> = BTreeMap::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(Error::parse(path, line_no, format!("expected 4 columns, found {}", cols.len())));
        }
        let rank: usize = cols[1]
            .parse()
            .ok()
            .filter(|&r| r >= 1)
            .ok_or_else(|| Error::parse(path, line_no, format!("bad rank {:?}", cols[1])))?;
        if !matches!(cols[3], "0" | "1") {
            return Err(Error::parse(path, line_no, format!("is_repeat must be 0 or 1, got {:?}", cols[3])));
        }
        let user = ranked.entry(cols[0].to_string()).or_default();
        if user.insert(rank, cols[2].to_string()).is_some() {
            return Err(Error::parse(path, line_no, format!("user {}: duplicate rank {rank}", cols[0])));
        }
    }
    if ranked.is_empty() {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    Ok(ranked
        .into_iter()
        .map(|(u, r)| (u, r.into_values().collect()))
        .collect())
}

/// Outcome of [`rerank_all`]: the baskets plus users skipped on error.
#[derive(Debug)]
pub struct RerankOutcome {
    pub baskets: RerankedBaskets,
    pub skipped: Vec<(String, String)>,
}

/// Solves every problem independently (in parallel) and assembles the
/// result in user-id order. With `skip_errors` failing users are dropped and
/// reported instead of aborting.
pub fn rerank_all(
    problems: &[RerankProblem],
    engine: Engine,
    config: &RerankConfig,
    skip_errors: bool,
) -> Result<RerankOutcome> {
    let results: Vec<Result<Selection>> = problems.par_iter().map(|p| solve(p, engine)).collect();
    let mut baskets = BTreeMap::new();
    let mut skipped = Vec::new();
    let mut seen = BTreeSet::new();
    for (problem, result) in problems.iter().zip(results) {
        if !seen.insert(problem.user.as_str()) {
            return Err(Error::user(&problem.user, "duplicate problem for user"));
        }
        match result {
            Ok(sel) => {
                baskets.insert(problem.user.clone(), sel);
            }
            Err(e) if skip_errors => {
                log::warn!("skipping user {}: {e}", problem.user);
                skipped.push((problem.user.clone(), e.to_string()));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(RerankOutcome {
        baskets: RerankedBaskets {
            config: config.clone(),
            baskets,
        },
        skipped,
    })
}

/// Problem pools: `(start, end, slots, position_offset)` per pool.
pub(crate) fn pools(problem: &RerankProblem) -> Vec<(usize, usize, usize, usize)> {
    let n = problem.candidates.len();
    match problem.slots {
        crate::objective::Slots::Total(k) => vec![(0, n, k.min(n), 0)],
        crate::objective::Slots::Split { repeat, explore } => {
            let split = problem.repeat_pool_len();
            vec![(0, split, repeat, 0), (split, n, explore, repeat)]
        }
    }
}

pub(crate) fn check_feasible(problem: &RerankProblem) -> Result<()> {
    for (start, end, slots, _) in pools(problem) {
        if end - start < slots {
            return Err(Error::Solver {
                user: problem.user.clone(),
                message: format!("infeasible slots: {slots} required from a pool of {}", end - start),
            });
        }
    }
    if matches!(problem.slots, crate::objective::Slots::Total(k) if k > problem.candidates.len()) {
        return Err(Error::InsufficientCandidates {
            user: problem.user.clone(),
            available: problem.candidates.len(),
            required: problem.slots.total(),
        });
    }
    Ok(())
}
