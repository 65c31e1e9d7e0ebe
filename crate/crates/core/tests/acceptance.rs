//! Acceptance suite: one test per criterion, each printing a single
//! PASS/FAIL line with its measured quantities.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rand::Rng;

use common::*;
use repbias::dataset::{ground_truth_repeat_ratio, ItemGroups, RepeatSets, SplitDataset, SplitLabel};
use repbias::metrics::{composite_metrics, evaluate, repeat_metrics};
use repbias::objective::{
    build_combined_problem, Candidate, ExposureModel, ObjectiveKind, RerankConfig, RerankProblem, SignMode, Slots,
};
use repbias::pipeline::rerank_and_evaluate;
use repbias::scorer::{rank_order, CandidateSet, ScoreLists, ScoredItem};
use repbias::solver::{solve, Engine, RerankedBaskets};
use repbias::synthetic::SyntheticSpec;
use repbias::tuner::{run_grid, GridSpec};

fn verdict(criterion: u32, pass: bool, detail: String) {
    println!("acceptance criterion {criterion}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {criterion} failed: {detail}");
}

fn check_oracle(p: &RerankProblem, failures: &mut Vec<String>, tag: &str) {
    let bnb = solve(p, Engine::BranchAndBound).unwrap();
    let bf = solve(p, Engine::BruteForce).unwrap();
    let opt = oracle_optimum(p);
    if (bnb.objective - bf.objective).abs() > 1e-9 || (bf.objective - opt).abs() > 1e-9 {
        failures.push(format!("{tag}: bnb {} brute {} oracle {opt}", bnb.objective, bf.objective));
    }
    if bnb.items != bf.items {
        failures.push(format!("{tag}: selections differ {:?} vs {:?}", bnb.items, bf.items));
    }
    if (oracle_objective(p, &indices(p, &bnb.items)) - bnb.objective).abs() > 1e-9 {
        failures.push(format!("{tag}: reported objective disagrees with oracle"));
    }
}

fn indices(p: &RerankProblem, items: &[String]) -> Vec<usize> {
    items.iter().map(|i| p.index_of(i).unwrap()).collect()
}

#[test]
fn criterion_1_oracle_equivalence_unified() {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut seen = BTreeSet::new();
    let instances = 600;
    for seed in 0..instances {
        let mut r = rng(seed);
        let kind = ObjectiveKind::ALL[seed as usize % ObjectiveKind::ALL.len()];
        let p = random_unified(&mut r, kind);
        seen.insert((kind, p.exposure == ExposureModel::Uniform));
        check_oracle(&p, &mut failures, &format!("seed {seed}"));
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        1,
        failures.is_empty() && seen.len() == 12 && secs < 60.0,
        format!("{instances} instances, {} kind/exposure combos, {secs:.2}s, failures {:?}", seen.len(), failures),
    );
}

/// Repeat slots the threshold rule should give, written out independently.
fn expected_h(scores: &[f64], theta: f64, k: usize, explore_len: usize) -> usize {
    let mut h = scores.iter().filter(|&&s| s > theta).count().min(k);
    if explore_len + h < k {
        h = (k - explore_len).min(scores.len());
    }
    h
}

struct CombinedCase {
    repeat: ScoreLists,
    explore: ScoreLists,
    reps: RepeatSets,
    groups: ItemGroups,
    categories: BTreeMap<String, String>,
    repeat_scores: Vec<f64>,
    explore_len: usize,
}

fn random_combined(r: &mut rand_chacha::ChaCha8Rng) -> CombinedCase {
    let n_rep = r.gen_range(0..=7);
    let n_exp = r.gen_range(usize::from(n_rep == 0)..=7);
    let n_cats = r.gen_range(1..=4);
    let coarse = r.gen_bool(0.3);
    let score = |r: &mut rand_chacha::ChaCha8Rng| {
        if coarse {
            f64::from(r.gen_range(0..5)) / 4.0
        } else {
            r.gen_range(0.0..1.0)
        }
    };
    let rep_items: Vec<ScoredItem> = (0..n_rep).map(|i| ScoredItem::new(format!("r{i}"), score(r))).collect();
    let exp_items: Vec<ScoredItem> = (0..n_exp).map(|i| ScoredItem::new(format!("e{i}"), score(r))).collect();
    let all: Vec<String> = rep_items.iter().chain(&exp_items).map(|s| s.item.clone()).collect();
    let mut groups = ItemGroups::default();
    for item in &all {
        if r.gen_bool(0.3) {
            groups.popular.insert(item.clone());
        } else {
            groups.unpopular.insert(item.clone());
        }
    }
    let categories = all.iter().map(|i| (i.clone(), format!("c{}", r.gen_range(0..n_cats)))).collect();
    let reps = RepeatSets::from_map(BTreeMap::from([(
        "u".to_string(),
        rep_items.iter().map(|s| s.item.clone()).collect(),
    )]));
    let mut repeat_scores: Vec<f64> = rep_items.iter().map(|s| s.score).collect();
    repeat_scores.sort_by(|a, b| b.total_cmp(a));
    CombinedCase {
        repeat: ScoreLists::new(20, BTreeMap::from([("u".to_string(), rep_items)])).unwrap(),
        explore: ScoreLists::new(20, BTreeMap::from([("u".to_string(), exp_items)])).unwrap(),
        reps,
        groups,
        categories,
        repeat_scores,
        explore_len: n_exp,
    }
}

#[test]
fn criterion_2_combined_slots() {
    let start = Instant::now();
    let mut failures = Vec::new();
    let instances = 250;
    let mut solved = 0;
    for seed in 0..instances {
        let mut r = rng(10_000 + seed);
        let case = random_combined(&mut r);
        let kind = ObjectiveKind::ALL[seed as usize % ObjectiveKind::ALL.len()];
        let k = r.gen_range(1..=5);
        let mut thetas: Vec<f64> = case.repeat_scores.clone();
        thetas.extend([-1.0, 2.0, r.gen_range(0.0..1.0)]);
        thetas.sort_by(f64::total_cmp);
        thetas.dedup();
        let mut previous: Option<usize> = None;
        for theta in thetas {
            let cfg = RerankConfig {
                theta,
                ..random_config(&mut r, kind, k, 20)
            };
            let p = build_combined_problem(
                "u",
                &case.repeat,
                &case.explore,
                &case.reps,
                &case.groups,
                &case.categories,
                &cfg,
            )
            .unwrap();
            let tag = format!("seed {seed} theta {theta}");
            let sel = solve(&p, Engine::Auto).unwrap();
            let h = expected_h(&case.repeat_scores, theta, k, case.explore_len);
            if sel.repeat_count() != h {
                failures.push(format!("{tag}: {} repeat items, expected {h}", sel.repeat_count()));
            }
            if previous.is_some_and(|prev| sel.repeat_count() > prev) {
                failures.push(format!("{tag}: repeat count increased"));
            }
            previous = Some(sel.repeat_count());
            check_oracle(&p, &mut failures, &tag);
            solved += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        2,
        failures.is_empty(),
        format!("{instances} instances, {solved} theta points, {secs:.2}s, failures {failures:?}"),
    );
}

/// The global program over all users at once: one shared item universe,
/// group exposure aggregated per item across users.
fn global_objective(kind: ObjectiveKind, cfg: &RerankConfig, users: &[UserCase], chosen: &[&Vec<usize>]) -> f64 {
    let k = cfg.k as f64;
    let mut relevance = 0.0;
    let mut ds = 0.0;
    let mut rep_ratio = 0.0;
    let mut item_exposure: BTreeMap<&str, f64> = BTreeMap::new();
    for (u, sel) in users.iter().zip(chosen) {
        let mut sel = (*sel).clone();
        sel.sort_unstable();
        for (pos, &i) in sel.iter().enumerate() {
            let c = &u.candidates[i];
            relevance += c.relevance;
            *item_exposure.entry(&c.item).or_insert(0.0) += cfg.exposure.weight(pos + 1);
        }
        ds += sel.iter().map(|&i| &u.candidates[i].category).collect::<BTreeSet<_>>().len() as f64 / k;
        rep_ratio += sel.iter().filter(|&&i| u.candidates[i].is_repeat).count() as f64 / k;
    }
    let group_avg = |group: &BTreeSet<String>| {
        group.iter().map(|i| item_exposure.get(i.as_str()).copied().unwrap_or(0.0)).sum::<f64>() / group.len() as f64
    };
    let fairness = group_avg(&users[0].popular) - group_avg(&users[0].unpopular);
    let sign = match cfg.sign_mode {
        SignMode::PenalizeRepeat => -1.0,
        SignMode::RewardRepeat => 1.0,
    };
    match kind {
        ObjectiveKind::Radiv => relevance / k + cfg.epsilon * ds + sign * cfg.lambda * rep_ratio,
        ObjectiveKind::Raif => relevance - cfg.alpha * fairness + sign * cfg.lambda * rep_ratio,
        ObjectiveKind::NaiveDiv => relevance / k + cfg.epsilon * ds,
        ObjectiveKind::NaiveFair => relevance - cfg.alpha * fairness,
        ObjectiveKind::RepeatOnly => relevance / k + sign * cfg.lambda * rep_ratio,
        ObjectiveKind::RelevanceOnly => relevance / k,
    }
}

struct UserCase {
    candidates: Vec<Candidate>,
    popular: BTreeSet<String>,
    unpopular: BTreeSet<String>,
}

#[test]
fn criterion_3_separability() {
    let mut failures = Vec::new();
    let instances = 24;
    for seed in 0..instances {
        let mut r = rng(20_000 + seed);
        let kind = ObjectiveKind::ALL[seed as usize % ObjectiveKind::ALL.len()];
        let cfg = random_config(&mut r, kind, 2, 6);
        let universe: Vec<String> = (0..10).map(|i| format!("i{i}")).collect();
        let popular: BTreeSet<String> = universe.iter().take(3).cloned().collect();
        let unpopular: BTreeSet<String> = universe.iter().skip(3).cloned().collect();
        let item_cat: BTreeMap<&str, String> =
            universe.iter().map(|i| (i.as_str(), format!("c{}", r.gen_range(0..3)))).collect();
        let users: Vec<UserCase> = (0..3)
            .map(|_| {
                let mut pool = universe.clone();
                let mut candidates: Vec<Candidate> = (0..6)
                    .map(|_| {
                        let item = pool.remove(r.gen_range(0..pool.len()));
                        Candidate {
                            relevance: r.gen_range(0.0..1.0),
                            is_repeat: r.gen_bool(0.5),
                            category: item_cat[item.as_str()].clone(),
                            fairness_coef: if popular.contains(&item) {
                                1.0 / popular.len() as f64
                            } else {
                                -1.0 / unpopular.len() as f64
                            },
                            item,
                        }
                    })
                    .collect();
                candidates.sort_by(|a, b| b.relevance.total_cmp(&a.relevance).then_with(|| a.item.cmp(&b.item)));
                UserCase {
                    candidates,
                    popular: popular.clone(),
                    unpopular: unpopular.clone(),
                }
            })
            .collect();

        let per_user: f64 = users
            .iter()
            .map(|u| {
                let p = RerankProblem {
                    user: "u".into(),
                    k: 2,
                    candidates: u.candidates.clone(),
                    slots: Slots::Total(2),
                    weights: cfg.weights(),
                    exposure: cfg.exposure,
                    short: false,
                };
                solve(&p, Engine::BranchAndBound).unwrap().objective
            })
            .sum();
        let pairs: Vec<Vec<usize>> = (0..6).flat_map(|a| (a + 1..6).map(move |b| vec![a, b])).collect();
        let mut joint = f64::NEG_INFINITY;
        for a in &pairs {
            for b in &pairs {
                for c in &pairs {
                    joint = joint.max(global_objective(kind, &cfg, &users, &[a, b, c]));
                }
            }
        }
        if (joint - per_user).abs() > 1e-9 {
            failures.push(format!("seed {seed} ({kind}): joint {joint} vs per-user sum {per_user}"));
        }
    }
    verdict(3, failures.is_empty(), format!("{instances} three-user instances, failures {failures:?}"));
}

fn raw_top_k(cands: &CandidateSet, users: &SplitDataset, k: usize) -> BTreeMap<String, Vec<String>> {
    let CandidateSet::Unified(lists) = cands else { panic!("unified candidates expected") };
    users
        .users()
        .map(|u| {
            let mut list = lists.get(u).unwrap().to_vec();
            list.sort_by(rank_order);
            (u.to_string(), list.into_iter().take(k).map(|s| s.item).collect())
        })
        .collect()
}

#[test]
fn criterion_4_degenerate_identity() {
    let b = toy_bench(0.5, 15);
    let targets = &all_targets(&b.split);
    let raw = raw_top_k(&b.cands, targets, 5);
    let mut mismatches = Vec::new();
    for kind in ObjectiveKind::ALL {
        for exposure in [ExposureModel::Uniform, ExposureModel::LogDiscount] {
            for engine in [Engine::Auto, Engine::BranchAndBound] {
                let cfg = RerankConfig {
                    k: 5,
                    n: 15,
                    objective_kind: kind,
                    exposure,
                    ..RerankConfig::default()
                };
                let (baskets, report) = rerank_and_evaluate(&b.ctx, &b.cands, targets, &cfg, engine).unwrap();
                if baskets.item_lists() != raw {
                    mismatches.push(format!("{kind}/{exposure:?}/{engine:?}: baskets differ"));
                }
                let direct =
                    evaluate(&raw, targets, &b.ctx.reps, &b.ctx.groups, b.ctx.categories(), &cfg, false).unwrap();
                if report != direct {
                    mismatches.push(format!("{kind}/{exposure:?}/{engine:?}: metrics differ"));
                }
            }
        }
    }
    verdict(4, mismatches.is_empty(), format!("{} toy users, mismatches {mismatches:?}", raw.len()));
}

fn toy_run(b: &Bench, cfg: &RerankConfig) -> RerankedBaskets {
    repbias::pipeline::rerank(&b.ctx, &b.cands, &all_targets(&b.split), cfg, Engine::Auto, false)
        .unwrap()
        .baskets
}

/// Signed group exposure gap summed over users: popular minus unpopular
/// average exposure.
fn exposure_gap(b: &Bench, baskets: &RerankedBaskets, exposure: ExposureModel) -> f64 {
    let g = &b.ctx.groups;
    let (mut pop, mut unpop) = (0.0, 0.0);
    for sel in baskets.baskets.values() {
        for (pos, item) in sel.items.iter().enumerate() {
            let e = exposure.weight(pos + 1);
            if g.popular.contains(item) {
                pop += e;
            } else {
                unpop += e;
            }
        }
    }
    pop / g.popular.len() as f64 - unpop / g.unpopular.len() as f64
}

#[test]
fn criterion_5_scalarization_monotonicity() {
    let b = toy_bench(0.5, 15);
    let grid = GridSpec::default();
    let base = RerankConfig {
        k: 5,
        n: 15,
        ..RerankConfig::default()
    };
    let mut problems = Vec::new();

    for sign in [SignMode::PenalizeRepeat, SignMode::RewardRepeat] {
        let mut prev: Option<BTreeMap<String, usize>> = None;
        for &lambda in &grid.lambda_grid {
            let cfg = RerankConfig {
                lambda,
                sign_mode: sign,
                ..base.clone()
            };
            let counts: BTreeMap<String, usize> =
                toy_run(&b, &cfg).baskets.iter().map(|(u, s)| (u.clone(), s.repeat_count())).collect();
            if let Some(prev) = &prev {
                for (u, &c) in &counts {
                    let ok = match sign {
                        SignMode::PenalizeRepeat => c <= prev[u],
                        SignMode::RewardRepeat => c >= prev[u],
                    };
                    if !ok {
                        problems.push(format!("{sign:?} lambda {lambda} user {u}: {} -> {c}", prev[u]));
                    }
                }
            }
            prev = Some(counts);
        }
    }

    let mut prev: Option<BTreeMap<String, usize>> = None;
    for &epsilon in &grid.epsilon_grid {
        let cfg = RerankConfig { epsilon, ..base.clone() };
        let cov: BTreeMap<String, usize> = toy_run(&b, &cfg)
            .baskets
            .iter()
            .map(|(u, s)| (u.clone(), s.items.iter().map(|i| b.ctx.train.category_of(i)).collect::<BTreeSet<_>>().len()))
            .collect();
        if let Some(prev) = &prev {
            for (u, &c) in &cov {
                if c < prev[u] {
                    problems.push(format!("epsilon {epsilon} user {u}: coverage {} -> {c}", prev[u]));
                }
            }
        }
        prev = Some(cov);
    }

    for exposure in [ExposureModel::LogDiscount, ExposureModel::Uniform] {
        let mut prev = f64::INFINITY;
        for &alpha in &grid.alpha_grid {
            let cfg = RerankConfig {
                alpha,
                exposure,
                objective_kind: ObjectiveKind::Raif,
                ..base.clone()
            };
            let gap = exposure_gap(&b, &toy_run(&b, &cfg), exposure);
            if gap > prev + 1e-9 {
                problems.push(format!("{exposure:?} alpha {alpha}: gap {prev} -> {gap}"));
            }
            prev = gap;
        }
    }
    verdict(
        5,
        problems.is_empty(),
        format!(
            "{} lambda x2, {} epsilon, {} alpha x2 points; violations {problems:?}",
            grid.lambda_grid.len(),
            grid.epsilon_grid.len(),
            grid.alpha_grid.len()
        ),
    );
}

#[test]
fn criterion_6_arithmetic_anchors() {
    let (mfr, _) = composite_metrics(3.1252, 0.0, 0.3248, 0.5);
    let (_, mdr_a) = composite_metrics(0.0, 0.3615, 0.3248, 0.5);
    let (_, mdr_b) = composite_metrics(0.0, 0.5898, 0.2874, 0.5);

    // RepBias through the metric path: one user whose basket holds the
    // given repeat share, against a target basket with 3 of 5 repeats.
    let bias = |k: usize, repeats: usize| {
        let reps_items: BTreeSet<String> = (0..repeats).map(|i| format!("r{i}")).chain((0..3).map(|i| format!("t{i}"))).collect();
        let reps = RepeatSets::from_map(BTreeMap::from([("u".to_string(), reps_items)]));
        let basket: Vec<String> = (0..repeats).map(|i| format!("r{i}")).chain((repeats..k).map(|i| format!("x{i}"))).collect();
        let targets = SplitDataset {
            label: SplitLabel::Test,
            targets: BTreeMap::from([("u".to_string(), vec!["t0".into(), "t1".into(), "t2".into(), "n0".into(), "n1".into()])]),
        };
        let gt = ground_truth_repeat_ratio(&targets, &reps).unwrap();
        repeat_metrics(&BTreeMap::from([("u".to_string(), basket)]), &reps, k, gt).1
    };
    let bias_a = bias(2500, 2312);
    let bias_b = bias(10_000, 1923);

    let pass = (mfr - 1.7250).abs() <= 1e-3
        && (mdr_a - 0.0184).abs() <= 5e-4
        && (mdr_b - 0.1512).abs() <= 5e-4
        && (bias_a - 0.3248).abs() <= 1e-9
        && (bias_b + 0.4077).abs() <= 1e-9;
    verdict(
        6,
        pass,
        format!("mFR {mfr:.4}, mDR {mdr_a:.5} / {mdr_b:.4}, RepBias {bias_a:.4} / {bias_b:.4}"),
    );
}

fn tuner_bench() -> Bench {
    let spec = SyntheticSpec {
        users: 120,
        items: 150,
        categories: 10,
        seed: 7,
        ..SyntheticSpec::default()
    };
    bench(&spec, 0.5, 30)
}

fn csv_f64(record: &csv::StringRecord, headers: &csv::StringRecord, name: &str) -> f64 {
    let i = headers.iter().position(|h| h == name).unwrap();
    record[i].parse().unwrap()
}

#[test]
fn criterion_7_tuner_rule_fidelity() {
    let b = tuner_bench();
    let mut lines = Vec::new();
    let mut pass = true;
    for kind in [ObjectiveKind::Radiv, ObjectiveKind::Raif] {
        let cfg = RerankConfig {
            k: 10,
            n: 30,
            objective_kind: kind,
            ..RerankConfig::default()
        };
        let result = run_grid(&b.ctx, &b.split.validation, &b.cands, &cfg, &GridSpec::default(), Engine::Auto).unwrap();
        let csv_text = result.sweep_csv();
        let mut reader = csv::Reader::from_reader(csv_text.as_bytes());
        let headers = reader.headers().unwrap().clone();
        let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
        let threshold = 0.9 * result.baseline.recall;
        let feasible: Vec<&csv::StringRecord> =
            rows.iter().filter(|r| csv_f64(r, &headers, "recall") >= threshold).collect();
        let score = |r: &csv::StringRecord| match kind {
            ObjectiveKind::Raif => -csv_f64(r, &headers, "mfr"),
            _ => csv_f64(r, &headers, "mdr"),
        };
        let best_score = feasible.iter().map(|r| score(r)).fold(f64::NEG_INFINITY, f64::max);
        let chosen_score = match kind {
            ObjectiveKind::Raif => -result.best_report.m_fr,
            _ => result.best_report.m_dr,
        };
        let ok = !feasible.is_empty()
            && !result.infeasible
            && result.best_report.recall >= threshold
            && chosen_score == best_score
            && feasible.len() == result.feasible_count;
        pass &= ok;
        lines.push(format!(
            "{kind}: {} points, {} feasible, chosen eps {} alpha {} lambda {}, recall {:.4} vs baseline {:.4}",
            rows.len(),
            feasible.len(),
            result.best.epsilon,
            result.best.alpha,
            result.best.lambda,
            result.best_report.recall,
            result.baseline.recall
        ));
    }
    verdict(7, pass, lines.join("; "));
}

#[test]
fn criterion_8_repeat_bias_mitigation() {
    let spec = SyntheticSpec {
        users: 120,
        items: 150,
        categories: 10,
        seed: 11,
        ..SyntheticSpec::default()
    };
    let b = bench(&spec, 1.0, 30);
    let base = RerankConfig {
        k: 10,
        n: 30,
        ..RerankConfig::default()
    };
    let test = |cfg: &RerankConfig| {
        rerank_and_evaluate(&b.ctx, &b.cands, &b.split.test, cfg, Engine::Auto).unwrap().1.rep_bias.abs()
    };
    let ori = test(&base);
    let mut pass = true;
    let mut lines = vec![format!("Ori. |RepBias| {ori:.4}")];
    for (kind, naive) in [(ObjectiveKind::Radiv, ObjectiveKind::NaiveDiv), (ObjectiveKind::Raif, ObjectiveKind::NaiveFair)] {
        let cfg = RerankConfig {
            objective_kind: kind,
            ..base.clone()
        };
        let tuned = run_grid(&b.ctx, &b.split.validation, &b.cands, &cfg, &GridSpec::default(), Engine::Auto).unwrap();
        let ra = test(&tuned.best);
        let naive_cfg = RerankConfig {
            objective_kind: naive,
            lambda: 0.0,
            ..tuned.best.clone()
        };
        let nv = test(&naive_cfg);
        pass &= ra < ori && ra < nv;
        lines.push(format!(
            "{kind} (eps {}, alpha {}, lambda {}) {ra:.4} vs {naive} {nv:.4}",
            tuned.best.epsilon, tuned.best.alpha, tuned.best.lambda
        ));
    }
    verdict(8, pass, lines.join("; "));
}

#[test]
fn criterion_9_performance() {
    let spec = SyntheticSpec {
        users: 1000,
        items: 300,
        categories: 12,
        seed: 3,
        ..SyntheticSpec::default()
    };
    let b = bench(&spec, 0.5, 100);
    let users = b.split.train.num_users();
    let radiv = RerankConfig {
        k: 20,
        n: 100,
        epsilon: 0.1,
        lambda: 0.1,
        exposure: ExposureModel::LogDiscount,
        ..RerankConfig::default()
    };
    let all_users = all_targets(&b.split);
    let start = Instant::now();
    let out = repbias::pipeline::rerank(&b.ctx, &b.cands, &all_users, &radiv, Engine::Auto, false).unwrap();
    let radiv_secs = start.elapsed().as_secs_f64();
    let all_optimal = out.baskets.baskets.values().all(|s| s.optimal);
    let max_nodes = out.baskets.baskets.values().map(|s| s.stats.nodes).max().unwrap_or(0);

    let raif = RerankConfig {
        objective_kind: ObjectiveKind::Raif,
        alpha: 1.0,
        exposure: ExposureModel::Uniform,
        ..radiv.clone()
    };
    let start = Instant::now();
    let out_raif = repbias::pipeline::rerank(&b.ctx, &b.cands, &all_users, &raif, Engine::Auto, false).unwrap();
    let raif_secs = start.elapsed().as_secs_f64();

    let solved = out.baskets.len();
    verdict(
        9,
        solved == 1000
            && users == 1000
            && all_optimal
            && out_raif.baskets.baskets.values().all(|s| s.optimal)
            && radiv_secs < 60.0
            && raif_secs < 5.0,
        format!(
            "{solved} users: radiv/log_discount {radiv_secs:.2}s (max nodes {max_nodes}, all optimal {all_optimal}), raif/uniform {raif_secs:.3}s"
        ),
    );
}
