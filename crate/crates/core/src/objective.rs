//! Per-user selection problems.
//!
//! A [`RerankProblem`] carries everything the solver needs for one user:
//! candidate relevance, repeat flags, categories, popular/unpopular exposure
//! coefficients, slot constraints, and the effective term weights derived
//! from a [`RerankConfig`]. [`objective_value`] is the reference evaluation
//! of a selection; every solver is checked against it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{ItemGroups, RepeatSets};
use crate::error::{Error, Result};
use crate::scorer::{rank_order, ScoreLists, ScoredItem};
use crate::solver::RerankedBaskets;
use crate::UNKNOWN_CATEGORY;

/// Position weights for exposure within a basket.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExposureModel {
    Uniform,
    /// `1 / log2(p + 1)` for 1-based position `p`.
    #[default]
    LogDiscount,
}

impl ExposureModel {
    /// Weight of 1-based basket position `position`.
    pub fn weight(self, position: usize) -> f64 {
        match self {
            ExposureModel::Uniform => 1.0,
            ExposureModel::LogDiscount => 1.0 / ((position + 1) as f64).log2(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignMode {
    /// Subtract the repeat ratio (repeat-biased inputs).
    #[default]
    PenalizeRepeat,
    /// Add the repeat ratio (explore-biased inputs).
    RewardRepeat,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    /// Relevance, category coverage and repeat ratio.
    #[default]
    Radiv,
    /// Relevance, exposure parity and repeat ratio.
    Raif,
    /// Relevance and category coverage only.
    NaiveDiv,
    /// Relevance and exposure parity only.
    NaiveFair,
    /// Relevance and repeat ratio only.
    RepeatOnly,
    /// Relevance only; reproduces the input top-K.
    RelevanceOnly,
}

impl ObjectiveKind {
    pub const ALL: [ObjectiveKind; 6] = [
        ObjectiveKind::Radiv,
        ObjectiveKind::Raif,
        ObjectiveKind::NaiveDiv,
        ObjectiveKind::NaiveFair,
        ObjectiveKind::RepeatOnly,
        ObjectiveKind::RelevanceOnly,
    ];

    /// Relevance is averaged over the basket for the diversity family and
    /// summed for the fairness family.
    fn averages_relevance(self) -> bool {
        !matches!(self, ObjectiveKind::Raif | ObjectiveKind::NaiveFair)
    }
}

macro_rules! str_enum {
    ($ty:ty { $($name:literal => $variant:expr),+ $(,)? }) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                $(if *self == $variant { return f.write_str($name); })+
                unreachable!()
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                let norm = s.trim().replace('-', "_");
                $(if norm == $name { return Ok($variant); })+
                Err(Error::Config(format!("unknown {} {s:?}", stringify!($ty))))
            }
        }
    };
}

str_enum!(ExposureModel { "uniform" => ExposureModel::Uniform, "log_discount" => ExposureModel::LogDiscount });
str_enum!(SignMode { "penalize_repeat" => SignMode::PenalizeRepeat, "reward_repeat" => SignMode::RewardRepeat });
str_enum!(ObjectiveKind {
    "radiv" => ObjectiveKind::Radiv,
    "raif" => ObjectiveKind::Raif,
    "naive_div" => ObjectiveKind::NaiveDiv,
    "naive_fair" => ObjectiveKind::NaiveFair,
    "repeat_only" => ObjectiveKind::RepeatOnly,
    "relevance_only" => ObjectiveKind::RelevanceOnly,
});

/// Re-ranking and evaluation settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RerankConfig {
    /// Basket size.
    pub k: usize,
    /// Candidates kept per user.
    pub n: usize,
    pub epsilon: f64,
    pub alpha: f64,
    pub lambda: f64,
    /// Repeat-score threshold for combined candidates.
    pub theta: f64,
    pub sign_mode: SignMode,
    pub exposure: ExposureModel,
    pub omega: f64,
    pub recall_tolerance: f64,
    pub objective_kind: ObjectiveKind,
    /// Base of the logarithm in logDP.
    pub log_base: f64,
}

impl Default for RerankConfig {
    fn default() -> Self {
        RerankConfig {
            k: 20,
            n: 100,
            epsilon: 0.0,
            alpha: 0.0,
            lambda: 0.0,
            theta: 0.0,
            sign_mode: SignMode::PenalizeRepeat,
            exposure: ExposureModel::LogDiscount,
            omega: 0.5,
            recall_tolerance: 0.10,
            objective_kind: ObjectiveKind::Radiv,
            log_base: std::f64::consts::E,
        }
    }
}

/// Term weights of one user's objective.
///
/// `value = relevance_scale * sum(rel) + diversity * cats / K
///          - fairness * sum(coef * e(pos)) + repeat * reps / K`
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub relevance_scale: f64,
    pub diversity: f64,
    pub fairness: f64,
    /// Signed: negative penalizes repeat items, positive rewards them.
    pub repeat: f64,
}

impl RerankConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be positive".into()));
        }
        if self.k > self.n {
            return Err(Error::Config(format!("k ({}) must not exceed n ({})", self.k, self.n)));
        }
        for (name, v) in [("epsilon", self.epsilon), ("alpha", self.alpha), ("lambda", self.lambda)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be a finite non-negative number, got {v}")));
            }
        }
        if !self.theta.is_finite() {
            return Err(Error::Config("theta must be finite".into()));
        }
        if !(0.0..=1.0).contains(&self.omega) {
            return Err(Error::Config(format!("omega must be in [0, 1], got {}", self.omega)));
        }
        if !(self.recall_tolerance.is_finite() && self.recall_tolerance >= 0.0) {
            return Err(Error::Config("recall_tolerance must be non-negative".into()));
        }
        if !(self.log_base.is_finite() && self.log_base > 0.0 && self.log_base != 1.0) {
            return Err(Error::Config(format!("log_base must be positive and not 1, got {}", self.log_base)));
        }
        Ok(())
    }

    /// Weights for a unified problem; terms not in the objective kind are 0.
    pub fn weights(&self) -> Weights {
        let k = self.k as f64;
        let kind = self.objective_kind;
        let relevance_scale = if kind.averages_relevance() { 1.0 / k } else { 1.0 };
        let diversity = match kind {
            ObjectiveKind::Radiv | ObjectiveKind::NaiveDiv => self.epsilon,
            _ => 0.0,
        };
        let fairness = match kind {
            ObjectiveKind::Raif | ObjectiveKind::NaiveFair => self.alpha,
            _ => 0.0,
        };
        let lambda = match kind {
            ObjectiveKind::Radiv | ObjectiveKind::Raif | ObjectiveKind::RepeatOnly => self.lambda,
            _ => 0.0,
        };
        let repeat = match self.sign_mode {
            SignMode::PenalizeRepeat => -lambda,
            SignMode::RewardRepeat => lambda,
        };
        Weights {
            relevance_scale,
            diversity,
            fairness,
            repeat,
        }
    }

    /// Weights for a combined problem. The repeat share is fixed by the slot
    /// split, so there is no repeat-ratio term.
    pub fn combined_weights(&self) -> Weights {
        Weights {
            repeat: 0.0,
            ..self.weights()
        }
    }

    /// Sets one field from its textual key and value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
        }
        match key.trim().replace('-', "_").as_str() {
            "k" => self.k = num(key, value)?,
            "n" => self.n = num(key, value)?,
            "epsilon" => self.epsilon = num(key, value)?,
            "alpha" => self.alpha = num(key, value)?,
            "lambda" => self.lambda = num(key, value)?,
            "theta" => self.theta = num(key, value)?,
            "sign_mode" => self.sign_mode = value.parse()?,
            "exposure" => self.exposure = value.parse()?,
            "omega" => self.omega = num(key, value)?,
            "recall_tolerance" => self.recall_tolerance = num(key, value)?,
            "objective_kind" => self.objective_kind = value.parse()?,
            "log_base" => {
                self.log_base = match value.trim() {
                    "e" => std::f64::consts::E,
                    other => num(key, other)?,
                }
            }
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RerankConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", idx + 1)))?;
            cfg.set(key, value)
                .map_err(|e| Error::Config(format!("line {}: {e}", idx + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads either the `key = value` form or a JSON object (as written by the tuner).
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if text.trim_start().starts_with('{') {
            let cfg: RerankConfig =
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            cfg.validate()?;
            return Ok(cfg);
        }
        Self::parse(&text)
    }

    /// The `key = value` form read by [`RerankConfig::parse`].
    pub fn to_text(&self) -> String {
        format!(
            "k = {}\nn = {}\nepsilon = {}\nalpha = {}\nlambda = {}\ntheta = {}\nsign_mode = {}\n\
             exposure = {}\nomega = {}\nrecall_tolerance = {}\nobjective_kind = {}\nlog_base = {}\n",
            self.k,
            self.n,
            self.epsilon,
            self.alpha,
            self.lambda,
            self.theta,
            self.sign_mode,
            self.exposure,
            self.omega,
            self.recall_tolerance,
            self.objective_kind,
            self.log_base
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub item: String,
    pub relevance: f64,
    pub is_repeat: bool,
    pub category: String,
    /// `+1/|I_1|` for popular items, `-1/|I_2|` for unpopular ones.
    pub fairness_coef: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slots {
    /// Any `k` candidates.
    Total(usize),
    /// Exactly `repeat` repeat candidates and `explore` explore candidates.
    Split { repeat: usize, explore: usize },
}

impl Slots {
    pub fn total(self) -> usize {
        match self {
            Slots::Total(k) => k,
            Slots::Split { repeat, explore } => repeat + explore,
        }
    }
}

/// One user's selection problem.
///
/// Unified problems list candidates by relevance (descending, ids ascending
/// on ties). Combined problems list the repeat pool first, then the explore
/// pool, each in that order; scores are only ever compared within a pool.
/// Candidate order is also basket order: a selection is ranked by candidate
/// index, which fixes each item's exposure position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RerankProblem {
    pub user: String,
    pub k: usize,
    pub candidates: Vec<Candidate>,
    pub slots: Slots,
    pub weights: Weights,
    pub exposure: ExposureModel,
    /// Fewer candidates than `k`: the basket takes everything available.
    pub short: bool,
}

impl RerankProblem {
    /// Number of leading candidates that form the repeat pool of a combined
    /// problem (0 for unified problems).
    pub fn repeat_pool_len(&self) -> usize {
        match self.slots {
            Slots::Total(_) => 0,
            Slots::Split { .. } => self.candidates.iter().take_while(|c| c.is_repeat).count(),
        }
    }

    pub fn index_of(&self, item: &str) -> Option<usize> {
        self.candidates.iter().position(|c| c.item == item)
    }

    /// Checks a selection (candidate indices) against the slot constraints
    /// and returns it in basket order.
    pub fn check_selection(&self, indices: &[usize]) -> Result<Vec<usize>> {
        let invalid = |message: String| Error::InvalidSelection {
            user: self.user.clone(),
            message,
        };
        let mut sorted = indices.to_vec();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("duplicate item".into()));
        }
        if let Some(&bad) = sorted.iter().find(|&&i| i >= self.candidates.len()) {
            return Err(invalid(format!("candidate index {bad} out of range")));
        }
        match self.slots {
            Slots::Total(k) => {
                if sorted.len() != k {
                    return Err(invalid(format!("expected {k} items, got {}", sorted.len())));
                }
            }
            Slots::Split { repeat, explore } => {
                let reps = sorted.iter().filter(|&&i| self.candidates[i].is_repeat).count();
                let exps = sorted.len() - reps;
                if reps != repeat || exps != explore {
                    return Err(invalid(format!(
                        "expected {repeat} repeat + {explore} explore items, got {reps} + {exps}"
                    )));
                }
            }
        }
        Ok(sorted)
    }
}

/// Objective of a selection given as candidate indices in basket order.
///
/// This is the single reference evaluation; solvers compare leaves through it
/// so their tie handling agrees bit for bit.
pub fn objective_of_sorted(problem: &RerankProblem, sorted: &[usize]) -> f64 {
    let k = problem.k as f64;
    let w = &problem.weights;
    let mut relevance = 0.0;
    let mut exposure = 0.0;
    let mut repeats = 0usize;
    let mut categories: Vec<&str> = Vec::with_capacity(sorted.len());
    for (pos, &idx) in sorted.iter().enumerate() {
        let c = &problem.candidates[idx];
        relevance += c.relevance;
        exposure += c.fairness_coef * problem.exposure.weight(pos + 1);
        if c.is_repeat {
            repeats += 1;
        }
        if !categories.contains(&c.category.as_str()) {
            categories.push(&c.category);
        }
    }
    w.relevance_scale * relevance + w.diversity * categories.len() as f64 / k - w.fairness * exposure
        + w.repeat * repeats as f64 / k
}

/// Objective of a selection of item ids. Order of `selection` is irrelevant:
/// items are ranked by candidate order.
pub fn objective_value(problem: &RerankProblem, selection: &[String]) -> Result<f64> {
    let indices = selection
        .iter()
        .map(|item| {
            problem.index_of(item).ok_or_else(|| Error::InvalidSelection {
                user: problem.user.clone(),
                message: format!("item {item} is not a candidate"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let sorted = problem.check_selection(&indices)?;
    Ok(objective_of_sorted(problem, &sorted))
}

fn make_candidate(
    user: &str,
    entry: &ScoredItem,
    is_repeat: bool,
    groups: &ItemGroups,
    categories: &BTreeMap<String, String>,
) -> Result<Candidate> {
    let fairness_coef = groups.fairness_coef(&entry.item).ok_or_else(|| Error::UnknownItem {
        user: user.to_string(),
        item: entry.item.clone(),
    })?;
    Ok(Candidate {
        item: entry.item.clone(),
        relevance: entry.score,
        is_repeat,
        category: categories
            .get(&entry.item)
            .cloned()
            .unwrap_or_else(|| UNKNOWN_CATEGORY.to_string()),
        fairness_coef,
    })
}

fn sorted_list(list: &[ScoredItem], n: usize) -> Vec<ScoredItem> {
    let mut list = list.to_vec();
    list.sort_by(rank_order);
    list.truncate(n);
    list
}

/// Builds the problem for a user of a unified candidate set: any `k` of the
/// user's candidates.
pub fn build_unified_problem(
    user: &str,
    cands: &ScoreLists,
    reps: &RepeatSets,
    groups: &ItemGroups,
    categories: &BTreeMap<String, String>,
    cfg: &RerankConfig,
) -> Result<RerankProblem> {
    let list = cands
        .get(user)
        .ok_or_else(|| Error::user(user, "no candidate list"))?;
    let list = sorted_list(list, cfg.n);
    if list.len() < cfg.k {
        return Err(Error::InsufficientCandidates {
            user: user.to_string(),
            available: list.len(),
            required: cfg.k,
        });
    }
    let candidates = list
        .iter()
        .map(|e| make_candidate(user, e, reps.contains(user, &e.item), groups, categories))
        .collect::<Result<Vec<_>>>()?;
    Ok(RerankProblem {
        user: user.to_string(),
        k: cfg.k,
        candidates,
        slots: Slots::Total(cfg.k),
        weights: cfg.weights(),
        exposure: cfg.exposure,
        short: false,
    })
}

/// Number of repeat slots: candidates scoring strictly above `theta`,
/// capped at `k`. `repeat_scores` must be sorted descending.
pub fn compute_h_theta(repeat_scores: &[f64], theta: f64, k: usize) -> usize {
    repeat_scores.iter().take_while(|&&s| s > theta).count().min(k)
}

/// Builds the problem for a user of a combined candidate set.
///
/// Repeat slots come from the threshold rule. If the explore list cannot
/// fill the remaining slots, repeat slots are raised to cover the gap; if
/// both pools together hold fewer than `k` items the problem is short and
/// takes every candidate.
pub fn build_combined_problem(
    user: &str,
    repeat: &ScoreLists,
    explore: &ScoreLists,
    reps: &RepeatSets,
    groups: &ItemGroups,
    categories: &BTreeMap<String, String>,
    cfg: &RerankConfig,
) -> Result<RerankProblem> {
    let rep_list = sorted_list(repeat.get(user).unwrap_or_default(), cfg.n);
    let exp_list = sorted_list(explore.get(user).unwrap_or_default(), cfg.n);
    if rep_list.is_empty() && exp_list.is_empty() {
        return Err(Error::user(user, "no candidate list"));
    }
    let scores: Vec<f64> = rep_list.iter().map(|s| s.score).collect();
    let k = cfg.k;
    let mut h = compute_h_theta(&scores, cfg.theta, k);
    let mut short = false;
    let explore_slots;
    if exp_list.len() < k - h {
        h = k - exp_list.len();
        if h > rep_list.len() {
            h = rep_list.len();
            short = true;
        }
        explore_slots = exp_list.len().min(k - h);
    } else {
        explore_slots = k - h;
    }

    let mut candidates = Vec::with_capacity(rep_list.len() + exp_list.len());
    for e in &rep_list {
        if !reps.contains(user, &e.item) {
            return Err(Error::user(user, format!("repeat candidate {} is not in the repeat set", e.item)));
        }
        candidates.push(make_candidate(user, e, true, groups, categories)?);
    }
    for e in &exp_list {
        if reps.contains(user, &e.item) {
            return Err(Error::user(user, format!("explore candidate {} is in the repeat set", e.item)));
        }
        candidates.push(make_candidate(user, e, false, groups, categories)?);
    }
    Ok(RerankProblem {
        user: user.to_string(),
        k,
        candidates,
        slots: Slots::Split {
            repeat: h,
            explore: explore_slots,
        },
        weights: cfg.combined_weights(),
        exposure: cfg.exposure,
        short,
    })
}

/// Penalize repeats when the unmodified baskets already hold at least the
/// ground-truth repeat share, otherwise reward them.
pub fn choose_sign_mode(original: &RerankedBaskets, reps: &RepeatSets, rep_ratio_gt: f64) -> SignMode {
    let rec = original.repeat_ratio(reps);
    if rec >= rep_ratio_gt {
        SignMode::PenalizeRepeat
    } else {
        SignMode::RewardRepeat
    }
}

/// Distinct categories of a selection (debug helper for reports and tests).
pub fn coverage(problem: &RerankProblem, indices: &[usize]) -> usize {
    indices
        .iter()
        .map(|&i| problem.candidates[i].category.as_str())
        .collect::<BTreeSet<_>>()
        .len()
}
