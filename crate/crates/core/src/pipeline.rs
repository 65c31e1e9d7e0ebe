//! End-to-end helpers shared by the tuner, the CLI and the tests: build
//! problems for a split, solve them, and evaluate the baskets.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;

use crate::dataset::{
    build_item_groups, build_repeat_sets, load_baskets, load_categories, save_categories, BasketDataset,
    BasketFormat, ItemGroups, RepeatSets, Split, SplitDataset, SplitLabel,
};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, MetricsReport};
use crate::objective::{
    build_combined_problem, build_unified_problem, choose_sign_mode, ObjectiveKind, RerankConfig, RerankProblem,
    SignMode,
};
use crate::scorer::CandidateSet;
use crate::solver::{rerank_all, Engine, RerankOutcome, RerankedBaskets};

/// Default share of items in the popular group.
pub const POPULAR_FRACTION: f64 = 0.2;

/// Training-side state every stage needs.
#[derive(Clone, Debug)]
pub struct Context {
    pub train: BasketDataset,
    pub reps: RepeatSets,
    pub groups: ItemGroups,
}

impl Context {
    pub fn new(train: BasketDataset) -> Result<Self> {
        Self::with_popular_fraction(train, POPULAR_FRACTION)
    }

    pub fn with_popular_fraction(train: BasketDataset, fraction: f64) -> Result<Self> {
        let reps = build_repeat_sets(&train)?;
        let groups = build_item_groups(&train, fraction)?;
        Ok(Context { train, reps, groups })
    }

    pub fn categories(&self) -> &BTreeMap<String, String> {
        self.train.categories()
    }
}

/// One problem per target user, in user-id order.
pub fn build_problems(
    ctx: &Context,
    cands: &CandidateSet,
    targets: &SplitDataset,
    cfg: &RerankConfig,
) -> Result<Vec<RerankProblem>> {
    cfg.validate()?;
    let users: Vec<&str> = targets.users().collect();
    users
        .par_iter()
        .map(|user| match cands {
            CandidateSet::Unified(lists) => {
                build_unified_problem(user, lists, &ctx.reps, &ctx.groups, ctx.categories(), cfg)
            }
            CandidateSet::Combined { repeat, explore } => {
                build_combined_problem(user, repeat, explore, &ctx.reps, &ctx.groups, ctx.categories(), cfg)
            }
        })
        .collect()
}

/// The configuration with every trade-off weight zeroed: reproduces the
/// recommender's own top-K baskets.
pub fn baseline_config(cfg: &RerankConfig) -> RerankConfig {
    RerankConfig {
        epsilon: 0.0,
        alpha: 0.0,
        lambda: 0.0,
        ..cfg.clone()
    }
}

/// The recommender's unmodified baskets (top-K, or top repeat/explore slots
/// for combined candidates).
pub fn original_baskets(
    ctx: &Context,
    cands: &CandidateSet,
    targets: &SplitDataset,
    cfg: &RerankConfig,
) -> Result<RerankedBaskets> {
    let base = RerankConfig {
        objective_kind: ObjectiveKind::RelevanceOnly,
        ..baseline_config(cfg)
    };
    let problems = build_problems(ctx, cands, targets, &base)?;
    Ok(rerank_all(&problems, Engine::Auto, &base, false)?.baskets)
}

/// Penalize repeats if the original baskets over-recommend them relative to
/// the targets' repeat share, reward them otherwise.
pub fn resolve_sign_mode(
    ctx: &Context,
    cands: &CandidateSet,
    targets: &SplitDataset,
    cfg: &RerankConfig,
) -> Result<SignMode> {
    let original = original_baskets(ctx, cands, targets, cfg)?;
    let gt = crate::dataset::ground_truth_repeat_ratio(targets, &ctx.reps)?;
    Ok(choose_sign_mode(&original, &ctx.reps, gt))
}

pub fn rerank(
    ctx: &Context,
    cands: &CandidateSet,
    targets: &SplitDataset,
    cfg: &RerankConfig,
    engine: Engine,
    skip_errors: bool,
) -> Result<RerankOutcome> {
    let problems = build_problems(ctx, cands, targets, cfg)?;
    rerank_all(&problems, engine, cfg, skip_errors)
}

pub fn evaluate_baskets(
    ctx: &Context,
    baskets: &RerankedBaskets,
    targets: &SplitDataset,
    per_user: bool,
) -> Result<MetricsReport> {
    evaluate(
        &baskets.item_lists(),
        targets,
        &ctx.reps,
        &ctx.groups,
        ctx.categories(),
        &baskets.config,
        per_user,
    )
}

pub fn rerank_and_evaluate(
    ctx: &Context,
    cands: &CandidateSet,
    targets: &SplitDataset,
    cfg: &RerankConfig,
    engine: Engine,
) -> Result<(RerankedBaskets, MetricsReport)> {
    let outcome = rerank(ctx, cands, targets, cfg, engine, false)?;
    let report = evaluate_baskets(ctx, &outcome.baskets, targets, false)?;
    Ok((outcome.baskets, report))
}

const TRAIN_FILE: &str = "train.jsonl";
const CATEGORY_FILE: &str = "categories.tsv";

fn target_file(label: SplitLabel) -> String {
    format!("{label}.jsonl")
}

/// Writes a split as `train.jsonl`, `validation.jsonl`, `test.jsonl` and
/// `categories.tsv` under `dir`.
pub fn save_split(split: &Split, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    split.train.save_jsonl(&dir.join(TRAIN_FILE))?;
    split.validation.save_jsonl(&dir.join(target_file(SplitLabel::Validation)))?;
    split.test.save_jsonl(&dir.join(target_file(SplitLabel::Test)))?;
    save_categories(split.train.categories(), &dir.join(CATEGORY_FILE))
}

/// Reads a directory written by [`save_split`].
pub fn load_split(dir: &Path) -> Result<Split> {
    let (train, _) = load_baskets(&dir.join(TRAIN_FILE), BasketFormat::Jsonl)?;
    let categories = load_categories(&dir.join(CATEGORY_FILE))?;
    let train = train.with_categories(&categories, true);
    let validation = SplitDataset::load_jsonl(&dir.join(target_file(SplitLabel::Validation)), SplitLabel::Validation)?;
    let test = SplitDataset::load_jsonl(&dir.join(target_file(SplitLabel::Test)), SplitLabel::Test)?;
    Ok(Split {
        train,
        validation,
        test,
    })
}
