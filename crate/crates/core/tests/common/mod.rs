//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use repbias::dataset::{split_leave_last, RepeatSets, Split};
use repbias::objective::{Candidate, ExposureModel, ObjectiveKind, RerankConfig, RerankProblem, SignMode, Slots};
use repbias::pipeline::Context;
use repbias::scorer::{make_unified, score_explore_popularity, score_repeat_topfreq, CandidateSet};
use repbias::synthetic::{generate, toy_fixture, SyntheticSpec};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Objective written out directly from its definition, sharing no code with
/// the library.
pub fn oracle_objective(p: &RerankProblem, chosen: &[usize]) -> f64 {
    let mut chosen = chosen.to_vec();
    chosen.sort_unstable();
    let k = p.k as f64;
    let w = p.weights;
    let rel: f64 = chosen.iter().map(|&i| p.candidates[i].relevance).sum();
    let cats: BTreeSet<&str> = chosen.iter().map(|&i| p.candidates[i].category.as_str()).collect();
    let exposure: f64 = chosen
        .iter()
        .enumerate()
        .map(|(pos, &i)| {
            let e = match p.exposure {
                ExposureModel::Uniform => 1.0,
                ExposureModel::LogDiscount => 1.0 / ((pos + 2) as f64).log2(),
            };
            p.candidates[i].fairness_coef * e
        })
        .sum();
    let reps = chosen.iter().filter(|&&i| p.candidates[i].is_repeat).count() as f64;
    w.relevance_scale * rel + w.diversity * cats.len() as f64 / k - w.fairness * exposure + w.repeat * reps / k
}

/// Every feasible selection of a problem, by bitmask over candidates.
pub fn feasible_selections(p: &RerankProblem) -> Vec<Vec<usize>> {
    let n = p.candidates.len();
    assert!(n <= 20, "oracle enumeration is for small instances");
    (0u32..(1 << n))
        .filter_map(|mask| {
            let sel: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            let ok = match p.slots {
                Slots::Total(k) => sel.len() == k,
                Slots::Split { repeat, explore } => {
                    let r = sel.iter().filter(|&&i| p.candidates[i].is_repeat).count();
                    r == repeat && sel.len() - r == explore
                }
            };
            ok.then_some(sel)
        })
        .collect()
}

pub fn oracle_optimum(p: &RerankProblem) -> f64 {
    feasible_selections(p)
        .iter()
        .map(|s| oracle_objective(p, s))
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn random_kind(r: &mut ChaCha8Rng) -> ObjectiveKind {
    ObjectiveKind::ALL[r.gen_range(0..ObjectiveKind::ALL.len())]
}

pub fn random_config(r: &mut ChaCha8Rng, kind: ObjectiveKind, k: usize, n: usize) -> RerankConfig {
    RerankConfig {
        k,
        n,
        epsilon: r.gen_range(0.0..1.0),
        alpha: *[0.0, 0.1, 1.0, 10.0, 100.0].get(r.gen_range(0..5)).unwrap(),
        lambda: r.gen_range(0.0..1.0),
        sign_mode: if r.gen_bool(0.5) { SignMode::PenalizeRepeat } else { SignMode::RewardRepeat },
        exposure: if r.gen_bool(0.5) { ExposureModel::Uniform } else { ExposureModel::LogDiscount },
        objective_kind: kind,
        ..RerankConfig::default()
    }
}

/// Random relevance, sometimes coarse so ties occur.
fn relevance(r: &mut ChaCha8Rng, coarse: bool) -> f64 {
    if coarse {
        f64::from(r.gen_range(0..5)) / 4.0
    } else {
        r.gen_range(0.0..1.0)
    }
}

/// Random candidates in candidate order (relevance desc, id asc).
pub fn random_candidates(r: &mut ChaCha8Rng, n: usize, repeat: Option<bool>) -> Vec<Candidate> {
    let n_cats = r.gen_range(1..=4);
    let (n_pop, n_unpop) = (r.gen_range(1..=10), r.gen_range(1..=40));
    let coarse = r.gen_bool(0.3);
    let mut cands: Vec<Candidate> = (0..n)
        .map(|i| Candidate {
            item: format!("i{i:02}"),
            relevance: relevance(r, coarse),
            is_repeat: repeat.unwrap_or_else(|| r.gen_bool(0.5)),
            category: format!("c{}", r.gen_range(0..n_cats)),
            fairness_coef: if r.gen_bool(0.3) { 1.0 / n_pop as f64 } else { -1.0 / n_unpop as f64 },
        })
        .collect();
    cands.sort_by(|a, b| b.relevance.total_cmp(&a.relevance).then_with(|| a.item.cmp(&b.item)));
    cands
}

pub fn random_unified(r: &mut ChaCha8Rng, kind: ObjectiveKind) -> RerankProblem {
    let k = r.gen_range(1..=5);
    let n = r.gen_range(k..=12);
    let cfg = random_config(r, kind, k, n);
    RerankProblem {
        user: "u".into(),
        k,
        candidates: random_candidates(r, n, None),
        slots: Slots::Total(k),
        weights: cfg.weights(),
        exposure: cfg.exposure,
        short: false,
    }
}

/// Built-in-scorer candidates on a synthetic split.
pub struct Bench {
    pub split: Split,
    pub ctx: Context,
    pub cands: CandidateSet,
}

pub fn bench(spec: &SyntheticSpec, mix: f64, n: usize) -> Bench {
    let ds = generate(spec);
    bench_from(ds, spec.seed, mix, n)
}

pub fn bench_from(ds: repbias::dataset::BasketDataset, seed: u64, mix: f64, n: usize) -> Bench {
    let split = split_leave_last(&ds, seed).unwrap();
    let ctx = Context::new(split.train.clone()).unwrap();
    let rep = score_repeat_topfreq(&ctx.train, &ctx.reps, n);
    let exp = score_explore_popularity(&ctx.train, &ctx.reps, n);
    let cands = make_unified(&rep, &exp, mix, n).unwrap();
    Bench { split, ctx, cands }
}

pub fn toy_bench(mix: f64, n: usize) -> Bench {
    bench_from(toy_fixture(), 0, mix, n)
}

/// Validation and test targets together: every user of the split.
pub fn all_targets(split: &Split) -> repbias::dataset::SplitDataset {
    repbias::dataset::SplitDataset {
        label: repbias::dataset::SplitLabel::Test,
        targets: split
            .validation
            .targets
            .iter()
            .chain(&split.test.targets)
            .map(|(u, t)| (u.clone(), t.clone()))
            .collect(),
    }
}

pub fn repeat_share(baskets: &BTreeMap<String, Vec<String>>, reps: &RepeatSets) -> usize {
    baskets
        .iter()
        .map(|(u, b)| b.iter().filter(|i| reps.contains(u, i)).count())
        .sum()
}
