//! `repbias`: ingest basket data, score or import candidates, re-rank,
//! evaluate, tune and report.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 solver error.

mod report;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context as _, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use repbias::dataset::{
    cap_history, filter_min_activity, load_baskets, load_categories, sample_users, split_leave_last, BasketFormat,
    SplitLabel,
};
use repbias::metrics::{evaluate, MetricsReport};
use repbias::objective::{ExposureModel, ObjectiveKind, RerankConfig, SignMode};
use repbias::pipeline::{build_problems, load_split, resolve_sign_mode, save_split, Context};
use repbias::scorer::{
    import_combined, import_unified, make_unified, score_explore_popularity, score_repeat_topfreq, CandidateSet,
};
use repbias::solver::{load_baskets_tsv, rerank_all, Engine};
use repbias::tuner::{final_evaluate, run_grid, GridSpec, TuneResult};

/// Environment variable holding the solver thread count.
const THREADS_ENV: &str = "REPBIAS_THREADS";

#[derive(Parser, Debug)]
#[command(name = "repbias", version, about = "Repeat-bias-aware re-ranking for next-basket recommendation")]
struct Cli {
    /// Seed for every random choice (user sampling, split).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load, filter and split a basket file into a data directory.
    Ingest(IngestArgs),
    /// Run the built-in scorers and write score files.
    Score(ScoreArgs),
    /// Re-rank candidates into baskets.
    Rerank(RerankArgs),
    /// Evaluate a basket file against a split.
    Evaluate(EvaluateArgs),
    /// Grid-search trade-off weights on the validation split.
    Tune(TuneArgs),
    /// Compare metric reports in one table.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct IngestArgs {
    /// Basket file (JSONL or CSV).
    #[arg(long)]
    input: PathBuf,
    /// Input format; inferred from the extension when omitted.
    #[arg(long)]
    format: Option<String>,
    /// Item-to-category TSV.
    #[arg(long)]
    categories: Option<PathBuf>,
    /// Output data directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 3)]
    min_baskets: usize,
    #[arg(long, default_value_t = 5)]
    min_item_purchases: u64,
    /// Keep at most this many most recent baskets per user.
    #[arg(long, default_value_t = 50)]
    max_history: usize,
    /// Randomly keep this many users before filtering.
    #[arg(long)]
    sample_users: Option<usize>,
}

#[derive(Args, Debug)]
struct ScoreArgs {
    #[arg(long)]
    data: PathBuf,
    /// Candidates kept per user.
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Unified score file (needs `--mix`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Weight of the repeat side in the unified scores.
    #[arg(long, default_value_t = 0.5)]
    mix: f64,
    /// Repeat-side score file.
    #[arg(long)]
    repeat_out: Option<PathBuf>,
    /// Explore-side score file.
    #[arg(long)]
    explore_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CandidateArgs {
    /// Unified score TSV.
    #[arg(long, conflicts_with_all = ["repeat_scores", "explore_scores"])]
    scores: Option<PathBuf>,
    /// Repeat-side score TSV (combined candidates).
    #[arg(long, requires = "explore_scores")]
    repeat_scores: Option<PathBuf>,
    /// Explore-side score TSV (combined candidates).
    #[arg(long, requires = "repeat_scores")]
    explore_scores: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    Radiv,
    Raif,
    NaiveDiv,
    NaiveFair,
    RepeatOnly,
    None,
}

impl From<Mode> for ObjectiveKind {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Radiv => ObjectiveKind::Radiv,
            Mode::Raif => ObjectiveKind::Raif,
            Mode::NaiveDiv => ObjectiveKind::NaiveDiv,
            Mode::NaiveFair => ObjectiveKind::NaiveFair,
            Mode::RepeatOnly => ObjectiveKind::RepeatOnly,
            Mode::None => ObjectiveKind::RelevanceOnly,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Sign {
    Penalize,
    Reward,
    /// Penalize if the unmodified baskets hold at least the ground-truth
    /// repeat share, reward otherwise.
    Auto,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Exposure {
    Uniform,
    LogDiscount,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Split {
    Validation,
    Test,
}

impl From<Split> for SplitLabel {
    fn from(s: Split) -> Self {
        match s {
            Split::Validation => SplitLabel::Validation,
            Split::Test => SplitLabel::Test,
        }
    }
}

/// Every configuration field; flags override the config file.
#[derive(Args, Debug)]
struct ConfigArgs {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    theta: Option<f64>,
    #[arg(long, value_enum)]
    sign: Option<Sign>,
    #[arg(long, value_enum)]
    exposure: Option<Exposure>,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    recall_tolerance: Option<f64>,
    /// Logarithm base of logDP: a number or `e`.
    #[arg(long)]
    log_base: Option<String>,
}

impl ConfigArgs {
    /// The resolved configuration and whether the sign is chosen from data.
    fn resolve(&self, mode: Option<Mode>) -> Result<(RerankConfig, bool)> {
        let mut cfg = match &self.config {
            Some(path) => RerankConfig::load(path)?,
            None => RerankConfig::default(),
        };
        if let Some(v) = self.k {
            cfg.k = v;
        }
        if let Some(v) = self.n {
            cfg.n = v;
        }
        if let Some(v) = self.epsilon {
            cfg.epsilon = v;
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = self.lambda {
            cfg.lambda = v;
        }
        if let Some(v) = self.theta {
            cfg.theta = v;
        }
        let mut auto_sign = false;
        match self.sign {
            Some(Sign::Penalize) => cfg.sign_mode = SignMode::PenalizeRepeat,
            Some(Sign::Reward) => cfg.sign_mode = SignMode::RewardRepeat,
            Some(Sign::Auto) => auto_sign = true,
            None => {}
        }
        if let Some(e) = self.exposure {
            cfg.exposure = match e {
                Exposure::Uniform => ExposureModel::Uniform,
                Exposure::LogDiscount => ExposureModel::LogDiscount,
            };
        }
        if let Some(v) = self.omega {
            cfg.omega = v;
        }
        if let Some(v) = self.recall_tolerance {
            cfg.recall_tolerance = v;
        }
        if let Some(v) = &self.log_base {
            cfg.set("log_base", v)?;
        }
        if let Some(m) = mode {
            cfg.objective_kind = m.into();
        }
        cfg.validate()?;
        Ok((cfg, auto_sign))
    }
}

#[derive(Args, Debug)]
struct RerankArgs {
    /// Data directory written by `ingest`.
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    candidates: CandidateArgs,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[command(flatten)]
    config: ConfigArgs,
    /// Users to re-rank.
    #[arg(long, value_enum, default_value = "test")]
    split: Split,
    /// auto, branch-and-bound, brute-force, topk-linear or greedy.
    #[arg(long, default_value = "auto")]
    engine: String,
    /// Basket TSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Solver statistics JSON.
    #[arg(long)]
    stats: Option<PathBuf>,
    /// Metrics report JSON for the re-ranked baskets.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write the per-user problems as JSON.
    #[arg(long)]
    dump_problems: Option<PathBuf>,
    /// Validate inputs and print the resolved configuration without solving.
    #[arg(long)]
    dry_run: bool,
    /// Skip users whose problem fails instead of aborting.
    #[arg(long)]
    skip_errors: bool,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    data: PathBuf,
    /// Basket TSV written by `rerank`.
    #[arg(long)]
    baskets: PathBuf,
    /// Objective the baskets came from (recorded in the report).
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, value_enum, default_value = "test")]
    split: Split,
    /// Report JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-user metrics TSV.
    #[arg(long)]
    per_user: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TuneArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    candidates: CandidateArgs,
    /// radiv or raif.
    #[arg(long, value_enum)]
    mode: Mode,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, default_value = "auto")]
    engine: String,
    /// Comma-separated grids overriding the defaults.
    #[arg(long, value_delimiter = ',')]
    epsilon_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    alpha_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    lambda_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    theta_grid: Option<Vec<f64>>,
    /// Directory for the sweep CSV, plot data, chosen config and result.
    #[arg(long)]
    out_dir: PathBuf,
    /// Also evaluate the chosen configuration on the test split.
    #[arg(long)]
    evaluate_test: bool,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Metrics report JSON files.
    #[arg(required = true)]
    reports: Vec<PathBuf>,
    /// Row labels in input order; inferred from each report's objective.
    #[arg(long, value_delimiter = ',')]
    labels: Option<Vec<String>>,
    /// Tune result JSON files whose sweep and plot CSVs are written to `--out-dir`.
    #[arg(long)]
    tune: Vec<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Markdown table instead of aligned text.
    #[arg(long)]
    markdown: bool,
}

/// A usage problem found after argument parsing.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(message: impl Into<String>) -> anyhow::Error {
    Usage(message.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Usage>().is_some() {
        return 1;
    }
    match err.downcast_ref::<repbias::Error>() {
        Some(repbias::Error::Config(_) | repbias::Error::ObjectiveKindMismatch { .. }) => 1,
        Some(e) if e.is_solver_error() => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match configure_threads().and_then(|()| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| usage(format!("{THREADS_ENV} must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .context("configuring solver threads")
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(a) => ingest(a, cli.seed),
        Command::Score(a) => score(a),
        Command::Rerank(a) => rerank(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Tune(a) => tune(a),
        Command::Report(a) => report_cmd(a),
    }
}

fn parse_engine(s: &str) -> Result<Engine> {
    s.parse().map_err(|e: repbias::Error| usage(e.to_string()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
    ))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn ingest(a: IngestArgs, seed: u64) -> Result<()> {
    let format = match &a.format {
        Some(f) => f.parse().map_err(|e: repbias::Error| usage(e.to_string()))?,
        None => match a.input.extension().and_then(|e| e.to_str()) {
            Some("csv") => BasketFormat::Csv,
            Some("jsonl") | Some("json") => BasketFormat::Jsonl,
            _ => bail!(usage("cannot infer the input format; pass --format jsonl|csv")),
        },
    };
    let (mut ds, stats) = load_baskets(&a.input, format)?;
    if let Some(path) = &a.categories {
        ds = ds.with_categories(&load_categories(path)?, false);
    }
    if let Some(n) = a.sample_users {
        ds = sample_users(&ds, n, seed);
    }
    let ds = filter_min_activity(&ds, a.min_baskets, a.min_item_purchases)?;
    let ds = cap_history(&ds, a.max_history);
    let split = split_leave_last(&ds, seed)?;
    save_split(&split, &a.out)?;
    println!(
        "records {} (duplicates removed {}), users {}, items {}, baskets {}, validation {}, test {}",
        stats.records,
        stats.duplicates_removed,
        ds.num_users(),
        ds.vocabulary().len(),
        ds.num_baskets(),
        split.validation.targets.len(),
        split.test.targets.len()
    );
    Ok(())
}

fn score(a: ScoreArgs) -> Result<()> {
    if a.out.is_none() && a.repeat_out.is_none() && a.explore_out.is_none() {
        bail!(usage("score needs --out or --repeat-out/--explore-out"));
    }
    let split = load_split(&a.data)?;
    let ctx = Context::new(split.train)?;
    let repeat = score_repeat_topfreq(&ctx.train, &ctx.reps, a.n);
    let explore = score_explore_popularity(&ctx.train, &ctx.reps, a.n);
    if let Some(path) = &a.repeat_out {
        repeat.save_tsv(path)?;
    }
    if let Some(path) = &a.explore_out {
        explore.save_tsv(path)?;
    }
    if let Some(path) = &a.out {
        match make_unified(&repeat, &explore, a.mix, a.n)? {
            CandidateSet::Unified(lists) => lists.save_tsv(path)?,
            CandidateSet::Combined { .. } => unreachable!("make_unified returns unified candidates"),
        }
    }
    Ok(())
}

fn load_candidates(args: &CandidateArgs, n: usize, ctx: &Context) -> Result<CandidateSet> {
    match (&args.scores, &args.repeat_scores, &args.explore_scores) {
        (Some(path), None, None) => Ok(import_unified(path, n)?),
        (None, Some(rp), Some(ep)) => Ok(import_combined(rp, ep, n, &ctx.reps)?),
        _ => Err(usage("pass --scores, or --repeat-scores with --explore-scores")),
    }
}

/// Loads the data directory and candidates and resolves the configuration.
fn prepare(
    data: &Path,
    candidates: &CandidateArgs,
    config: &ConfigArgs,
    mode: Option<Mode>,
    label: SplitLabel,
) -> Result<(repbias::dataset::Split, Context, CandidateSet, RerankConfig)> {
    let (mut cfg, auto_sign) = config.resolve(mode)?;
    let split = load_split(data)?;
    let ctx = Context::new(split.train.clone())?;
    let cands = load_candidates(candidates, cfg.n, &ctx)?;
    let missing = match &cands {
        CandidateSet::Unified(lists) => lists.missing_users(split.targets(label).users()),
        CandidateSet::Combined { repeat, explore } => {
            let users = split.targets(label).users();
            let have: std::collections::BTreeSet<&str> = repeat.users().chain(explore.users()).collect();
            users.filter(|u| !have.contains(u)).map(str::to_string).collect()
        }
    };
    if !missing.is_empty() {
        log::warn!("{} users have no candidates (first: {})", missing.len(), missing[0]);
    }
    if auto_sign {
        cfg.sign_mode = resolve_sign_mode(&ctx, &cands, split.targets(label), &cfg)?;
        log::info!("sign mode resolved to {}", cfg.sign_mode);
    }
    Ok((split, ctx, cands, cfg))
}

fn rerank(a: RerankArgs) -> Result<()> {
    let engine = parse_engine(&a.engine)?;
    let label = a.split.into();
    let (split, ctx, cands, cfg) = prepare(&a.data, &a.candidates, &a.config, a.mode, label)?;
    let targets = split.targets(label);
    let problems = build_problems(&ctx, &cands, targets, &cfg)?;
    if let Some(path) = &a.dump_problems {
        write_json(path, &problems)?;
    }
    if a.dry_run {
        print!("{}", cfg.to_text());
        println!("# {} problems validated ({} users, engine {})", problems.len(), targets.targets.len(), a.engine);
        return Ok(());
    }
    let outcome = rerank_all(&problems, engine, &cfg, a.skip_errors)?;
    for (user, message) in &outcome.skipped {
        eprintln!("warning: skipped user {user}: {message}");
    }
    match &a.out {
        Some(path) => outcome.baskets.save_tsv(path)?,
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            outcome.baskets.write_tsv(&mut lock)?;
            lock.flush()?;
        }
    }
    if let Some(path) = &a.stats {
        write_json(path, &outcome.baskets.stats_json())?;
    }
    if let Some(path) = &a.report {
        repbias::pipeline::evaluate_baskets(&ctx, &outcome.baskets, targets, false)?.save_json(path)?;
    }
    Ok(())
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<()> {
    let label: SplitLabel = a.split.into();
    let baskets = load_baskets_tsv(&a.baskets)?;
    // Without a mode or config file the baskets are recorded as unmodified.
    let mode = a.mode.or_else(|| a.config.config.is_none().then_some(Mode::None));
    let (mut cfg, _) = a.config.resolve(mode)?;
    if a.config.k.is_none() && a.config.config.is_none() {
        let k = baskets.values().map(Vec::len).max().unwrap_or(0);
        if k == 0 {
            bail!(repbias::Error::Empty("basket file has no items"));
        }
        cfg.k = k;
        cfg.n = cfg.n.max(k);
    }
    let split = load_split(&a.data)?;
    let ctx = Context::new(split.train.clone())?;
    let report = evaluate(
        &baskets,
        split.targets(label),
        &ctx.reps,
        &ctx.groups,
        ctx.categories(),
        &cfg,
        a.per_user.is_some(),
    )?;
    print!("{}", report.to_text());
    if let Some(path) = &a.out {
        report.save_json(path)?;
    }
    if let Some(path) = &a.per_user {
        let mut out = create(path)?;
        report.write_per_user_tsv(&mut out)?;
        out.flush()?;
    }
    Ok(())
}

fn tune(a: TuneArgs) -> Result<()> {
    if !matches!(a.mode, Mode::Radiv | Mode::Raif) {
        bail!(usage("tune supports --mode radiv or raif"));
    }
    let engine = parse_engine(&a.engine)?;
    let (split, ctx, cands, cfg) =
        prepare(&a.data, &a.candidates, &a.config, Some(a.mode), SplitLabel::Validation)?;
    let defaults = GridSpec::default();
    let grid = GridSpec {
        epsilon_grid: a.epsilon_grid.unwrap_or(defaults.epsilon_grid),
        alpha_grid: a.alpha_grid.unwrap_or(defaults.alpha_grid),
        lambda_grid: a.lambda_grid.unwrap_or(defaults.lambda_grid),
        theta_grid: a.theta_grid,
    };
    let result = run_grid(&ctx, &split.validation, &cands, &cfg, &grid, engine)?;
    std::fs::create_dir_all(&a.out_dir).with_context(|| format!("cannot create {}", a.out_dir.display()))?;
    write_text(&a.out_dir.join("sweep.csv"), &result.sweep_csv())?;
    write_text(&a.out_dir.join("plot_data.csv"), &result.plot_data_csv())?;
    write_json(&a.out_dir.join("chosen_config.json"), &result.best)?;
    result.save_json(&a.out_dir.join("tune_result.json"))?;
    result.best_report.save_json(&a.out_dir.join("validation_report.json"))?;
    println!(
        "{} grid points, {} feasible{}",
        result.entries.len(),
        result.feasible_count,
        if result.infeasible { " (none met the recall tolerance; keeping the baseline)" } else { "" }
    );
    print!("{}", result.best.to_text());
    if a.evaluate_test {
        let report = final_evaluate(&result, cfg.objective_kind, &ctx, &split.test, &cands, engine)?;
        report.save_json(&a.out_dir.join("test_report.json"))?;
        print!("{}", report.to_text());
    }
    Ok(())
}

fn report_cmd(a: ReportArgs) -> Result<()> {
    let reports = a
        .reports
        .iter()
        .map(|p| MetricsReport::load_json(p))
        .collect::<repbias::Result<Vec<_>>>()?;
    if let Some(labels) = &a.labels {
        if labels.len() != reports.len() {
            bail!(usage(format!("{} labels for {} reports", labels.len(), reports.len())));
        }
    }
    let table = report::Table::new(&reports, a.labels.as_deref())?;
    print!("{}", if a.markdown { table.to_markdown() } else { table.to_text() });
    if !a.tune.is_empty() {
        let dir = a.out_dir.as_ref().ok_or_else(|| usage("--tune needs --out-dir"))?;
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        for path in &a.tune {
            let result = TuneResult::load_json(path)?;
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("tune");
            write_text(&dir.join(format!("{stem}_sweep.csv")), &result.sweep_csv())?;
            write_text(&dir.join(format!("{stem}_plot_data.csv")), &result.plot_data_csv())?;
        }
    }
    Ok(())
}
