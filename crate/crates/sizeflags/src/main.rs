use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;
use sizeflags_core::evaluation::DidConfig;
use sizeflags_core::simulator::{self, CueModel, FeedbackModel, SimConfig, Treatment};
use sizeflags_core::{
    solve_prior_bounds, Direction, Epsilons, ExpertFeedback, ModelVariant, RateInterval, SnapshotSeries,
    VisualCue, Window,
};

use sizeflags::config::{self, machine_epsilon_theta, Input, RunConfig, ThetaSource};
use sizeflags::error::{CliError, Result};
use sizeflags::formats::{self, parse_timestamp, write_records};
use sizeflags::pipeline::{self, CategoryModel};

/// Flags articles whose size-related return rate points to a sizing issue.
#[derive(Debug, Parser)]
#[command(name = "sizeflags", version)]
struct Cli {
    /// Write records here instead of stdout. Relative paths honour SIZEFLAGS_DATA_DIR.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Suppress the summary on stderr.
    #[arg(long, short, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Category mean π, deviation σ and rate bound per direction.
    Stats(ModelArgs),
    /// Upper limits α_max, β_max of the prior parameters.
    SolveBounds(BoundsArgs),
    /// Smallest θ on the grid that meets the stability constraints.
    OptimizeThreshold(ThresholdArgs),
    /// Flag decisions at the last snapshot.
    Run(RunArgs),
    /// Difference-in-differences effect of flagging on the size return rate.
    EvaluateDid(DidArgs),
    /// Order and return counts at first flag, relative to a baseline run.
    ColdStartCompare(ColdStartArgs),
    /// Synthetic snapshots with ground truth.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Snapshot file (JSON lines), `-` for stdin.
    #[arg(long)]
    snapshots: PathBuf,
    /// Restrict to these categories (repeatable).
    #[arg(long = "category")]
    categories: Vec<String>,
    /// RFC 3339; statistics use only snapshots in [start, end] rebased to start.
    #[arg(long, requires = "window_end")]
    window_start: Option<String>,
    #[arg(long, requires = "window_start")]
    window_end: Option<String>,
    /// Articles with fewer orders are left out of the statistics and never flagged.
    #[arg(long, default_value_t = 1)]
    min_orders: u64,
    /// Interval Π for the prior bounds; defaults to [π - σ, π + σ].
    #[arg(long, requires = "pi_high")]
    pi_low: Option<f64>,
    #[arg(long, requires = "pi_low")]
    pi_high: Option<f64>,
    /// θ used in the prior-bound problem; defaults to theta-max.
    #[arg(long)]
    bound_theta: Option<f64>,
    #[arg(long)]
    theta_max: Option<f64>,
    /// Strength c of the data-driven prior (1 + cπ, 1 + c(1 - π)); 0 is uniform.
    #[arg(long, default_value_t = 2.0)]
    prior_concentration: f64,
    /// Position of a "potential" verdict between 1 and α_max.
    #[arg(long, default_value_t = 0.5)]
    potential_weight: f64,
    /// Human feedback file.
    #[arg(long)]
    feedback: Option<PathBuf>,
    /// Visual cue file.
    #[arg(long)]
    cues: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct OptimizerArgs {
    #[arg(long, default_value_t = Epsilons::default().unstable_share)]
    eps_unstable_share: f64,
    #[arg(long, default_value_t = Epsilons::default().extra_flags)]
    eps_extra_flags: f64,
    #[arg(long, default_value_t = Epsilons::default().unstable_ratio)]
    eps_unstable_ratio: f64,
    #[arg(long, default_value_t = sizeflags_core::threshold::DEFAULT_GRID_POINTS)]
    grid_points: usize,
}

#[derive(Debug, Args)]
struct BoundsArgs {
    #[arg(long, requires = "pi_high")]
    pi_low: Option<f64>,
    #[arg(long, requires = "pi_low")]
    pi_high: Option<f64>,
    /// Defaults to -ln 2⁻²³.
    #[arg(long)]
    theta: Option<f64>,
    /// Solve per category and direction with Π = [π - σ, π + σ] instead.
    #[arg(long, conflicts_with_all = ["pi_low", "pi_high"])]
    snapshots: Option<PathBuf>,
    #[arg(long = "category")]
    categories: Vec<String>,
    #[arg(long, default_value_t = 1)]
    min_orders: u64,
}

#[derive(Debug, Args)]
struct ThresholdArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    optimizer: OptimizerArgs,
    #[arg(long, default_value = "V_TH")]
    variant: ModelVariant,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    optimizer: OptimizerArgs,
    #[arg(long, default_value = "SizeFlags")]
    variant: ModelVariant,
    /// A number, `machine_epsilon` or `optimized`. Defaults to optimized
    /// for V_TH and SizeFlags, machine_epsilon otherwise.
    #[arg(long)]
    theta: Option<ThetaSource>,
}

#[derive(Debug, Args)]
struct DidArgs {
    #[arg(long)]
    snapshots: PathBuf,
    /// Decisions from `run`; articles with a first flag are treated, articles
    /// never flagged form the control pool.
    #[arg(long, required_unless_present = "treated", conflicts_with = "treated")]
    decisions: Option<PathBuf>,
    /// Explicit treated set; every other article is a control.
    #[arg(long)]
    treated: Option<PathBuf>,
    #[arg(long = "category")]
    categories: Vec<String>,
    #[arg(long, default_value_t = 10)]
    neighbors: usize,
    #[arg(long, default_value_t = 6)]
    pre_weeks: i64,
    #[arg(long, default_value_t = 6)]
    post_weeks: i64,
}

#[derive(Debug, Args)]
struct ColdStartArgs {
    /// Decisions of the reference run.
    #[arg(long)]
    baseline: PathBuf,
    /// Decisions of a run to compare (repeatable).
    #[arg(long = "compare", required = true)]
    compare: Vec<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Full simulator configuration as JSON; the flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    category: Option<String>,
    #[arg(long)]
    articles: Option<usize>,
    #[arg(long)]
    weeks: Option<usize>,
    #[arg(long)]
    issue_fraction: Option<f64>,
    /// Poisson mean of weekly orders per article.
    #[arg(long)]
    order_rate: Option<f64>,
    /// Share of articles with a human verdict.
    #[arg(long)]
    feedback_coverage: Option<f64>,
    #[arg(long)]
    feedback_accuracy: Option<f64>,
    /// Share of articles with a visual cue.
    #[arg(long)]
    cue_coverage: Option<f64>,
    #[arg(long)]
    cue_noise: Option<f64>,
    #[arg(long)]
    treated_fraction: Option<f64>,
    #[arg(long, default_value_t = 6)]
    flag_week: usize,
    #[arg(long, default_value_t = 0.05)]
    reduction: f64,
    #[arg(long, default_value = "too_big")]
    treated_direction: Direction,
    /// Write snapshots.jsonl, truth.jsonl, feedback.jsonl, cues.jsonl and
    /// treated.jsonl here. Without it only snapshots are written.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

/// Records and diagnostics of one command.
struct Output {
    out: Option<PathBuf>,
    quiet: bool,
    warnings: Vec<String>,
    summary: Vec<String>,
}

impl Output {
    fn warn(&mut self, w: impl Into<String>) {
        self.warnings.push(w.into());
    }

    fn records<T: Serialize>(&self, records: &[T]) -> Result<()> {
        match &self.out {
            Some(path) => write_file(&config::resolve(path), records),
            None => {
                let stdout = std::io::stdout();
                write_records(stdout.lock(), records).map_err(|e| CliError::io("<stdout>", e))
            }
        }
    }

    fn finish(self) {
        let stderr = std::io::stderr();
        let mut err = stderr.lock();
        for w in &self.warnings {
            let _ = writeln!(err, "warning: {w}");
        }
        if !self.quiet {
            for s in &self.summary {
                let _ = writeln!(err, "{s}");
            }
        }
    }
}

fn write_file<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_records(&mut w, records).map_err(|e| CliError::io(path, e))?;
    w.flush().map_err(|e| CliError::io(path, e))
}

fn load_optional(path: &Option<PathBuf>) -> Result<Option<Input>> {
    path.as_deref().map(Input::load).transpose()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut output = Output { out: cli.out.clone(), quiet: cli.quiet, warnings: Vec::new(), summary: Vec::new() };
    let result = match cli.command {
        Command::Stats(a) => stats(a, &mut output),
        Command::SolveBounds(a) => solve_bounds(a, &mut output),
        Command::OptimizeThreshold(a) => optimize_threshold(a, &mut output),
        Command::Run(a) => run(a, &mut output),
        Command::EvaluateDid(a) => evaluate_did(a, &mut output),
        Command::ColdStartCompare(a) => cold_start(a, &mut output),
        Command::Simulate(a) => simulate(a, &mut output),
    };
    output.finish();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error ({}): {e}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn timestamp_arg(s: &str) -> Result<sizeflags_core::Timestamp> {
    parse_timestamp(s).map_err(CliError::Config)
}

fn interval(low: Option<f64>, high: Option<f64>) -> Result<Option<RateInterval>> {
    match (low, high) {
        (Some(l), Some(h)) => RateInterval::new(l, h).map(Some).map_err(|e| CliError::Config(e.to_string())),
        _ => Ok(None),
    }
}

/// Loaded inputs of the model-building commands.
struct ModelInputs {
    series: Vec<SnapshotSeries>,
    feedback: Vec<ExpertFeedback>,
    cues: Vec<VisualCue>,
}

fn model_config(command: &str, args: &ModelArgs, out: &mut Output) -> Result<(RunConfig, ModelInputs)> {
    let snapshots = Input::load(&args.snapshots)?;
    let feedback = load_optional(&args.feedback)?;
    let cues = load_optional(&args.cues)?;
    let mut config = RunConfig::new(command)
        .with_input("snapshots", Some(&snapshots))
        .with_input("feedback", feedback.as_ref())
        .with_input("cues", cues.as_ref());
    config.categories = args.categories.clone();
    if let (Some(s), Some(e)) = (&args.window_start, &args.window_end) {
        config.window = Some(Window { start: timestamp_arg(s)?, end: timestamp_arg(e)? });
    }
    config.min_orders = args.min_orders;
    config.pi_interval = interval(args.pi_low, args.pi_high)?;
    config.bound_theta = args.bound_theta;
    if let Some(t) = args.theta_max {
        config.theta_max = t;
    }
    config.prior_concentration = args.prior_concentration;
    config.potential_weight = args.potential_weight;

    let parsed = formats::read_snapshots(snapshots.bytes.as_slice(), &snapshots.name)?;
    out.warnings.extend(parsed.warnings);
    let feedback = match feedback {
        Some(f) => {
            let p = formats::read_feedback(f.bytes.as_slice(), &f.name)?;
            out.warnings.extend(p.warnings);
            p.value
        }
        None => Vec::new(),
    };
    let cues = match cues {
        Some(c) => {
            let p = formats::read_cues(c.bytes.as_slice(), &c.name)?;
            out.warnings.extend(p.warnings);
            p.value
        }
        None => Vec::new(),
    };
    for c in &config.categories {
        if !parsed.value.iter().any(|s| s.category_id() == c) {
            out.warn(format!("category {c} does not occur in {}", snapshots.name));
        }
    }
    Ok((config, ModelInputs { series: parsed.value, feedback, cues }))
}

fn apply_optimizer(config: &mut RunConfig, args: &OptimizerArgs) {
    config.epsilons = Epsilons {
        unstable_share: args.eps_unstable_share,
        extra_flags: args.eps_extra_flags,
        unstable_ratio: args.eps_unstable_ratio,
    };
    config.grid_points = args.grid_points;
}

/// Categories whose statistics cannot be computed are skipped with a warning.
fn skip_or<T>(category: &str, result: Result<T>, out: &mut Output) -> Result<Option<T>> {
    match result {
        Ok(v) => Ok(Some(v)),
        Err(CliError::Model(e @ sizeflags_core::Error::InsufficientData { .. })) => {
            out.warn(format!("category {category} skipped: {e}"));
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

fn stats(args: ModelArgs, out: &mut Output) -> Result<()> {
    let (config, inputs) = model_config("stats", &args, out)?;
    config.validate()?;
    let fp = config.fingerprint();
    let mut records = Vec::new();
    for s in pipeline::selected(&inputs.series, &config) {
        let series = pipeline::windowed(s, &config)?;
        let Some(stats) = skip_or(s.category_id(), pipeline::category_stats(&series, &config), out)? else {
            continue;
        };
        records.extend(pipeline::stats_records(&stats, &fp));
    }
    out.summary.push(format!("{} category statistics, fingerprint {fp}", records.len()));
    out.records(&records)
}

fn solve_bounds(args: BoundsArgs, out: &mut Output) -> Result<()> {
    let theta = args.theta.unwrap_or_else(machine_epsilon_theta);
    if let Some(path) = &args.snapshots {
        let snapshots = Input::load(path)?;
        let mut config = RunConfig::new("solve-bounds").with_input("snapshots", Some(&snapshots));
        config.categories = args.categories.clone();
        config.min_orders = args.min_orders;
        config.bound_theta = Some(theta);
        config.validate()?;
        let fp = config.fingerprint();
        let parsed = formats::read_snapshots(snapshots.bytes.as_slice(), &snapshots.name)?;
        out.warnings.extend(parsed.warnings);
        let mut records = Vec::new();
        for s in pipeline::selected(&parsed.value, &config) {
            let Some(stats) = skip_or(s.category_id(), pipeline::category_stats(s, &config), out)? else {
                continue;
            };
            for d in Direction::ALL {
                let bounds = solve_prior_bounds(stats.get(d).pi_interval, theta)?;
                let mut r = pipeline::bounds_record(&bounds, &fp);
                r["category_id"] = json!(s.category_id());
                r["direction"] = json!(d);
                records.push(r);
            }
        }
        out.summary.push(format!("{} prior bounds, fingerprint {fp}", records.len()));
        return out.records(&records);
    }
    let Some(pi) = interval(args.pi_low, args.pi_high)? else {
        return Err(CliError::Config("give --pi-low and --pi-high, or --snapshots".into()));
    };
    let mut config = RunConfig::new("solve-bounds");
    config.pi_interval = Some(pi);
    config.bound_theta = Some(theta);
    config.validate()?;
    let fp = config.fingerprint();
    let bounds = solve_prior_bounds(pi, theta)?;
    out.summary.push(format!(
        "alpha_max {} beta_max {} for Π = [{}, {}], θ = {theta}",
        bounds.alpha_max, bounds.beta_max, pi.low, pi.high
    ));
    out.records(&[pipeline::bounds_record(&bounds, &fp)])
}

fn optimize_threshold(args: ThresholdArgs, out: &mut Output) -> Result<()> {
    let (mut config, inputs) = model_config("optimize-threshold", &args.model, out)?;
    apply_optimizer(&mut config, &args.optimizer);
    config.variant = Some(args.variant);
    config.validate()?;
    let fp = config.fingerprint();
    let mut records = Vec::new();
    for s in pipeline::selected(&inputs.series, &config) {
        let model = CategoryModel::build(s, &config, args.variant, &inputs.feedback, &inputs.cues);
        let Some(model) = skip_or(s.category_id(), model, out)? else { continue };
        match model.optimize(args.variant, &config) {
            Ok(solution) => {
                if !solution.feasible {
                    out.warn(format!("category {}: no feasible grid point; theta_star = theta_max", s.category_id()));
                }
                out.summary.push(format!("{}: theta_star {}", s.category_id(), solution.theta_star));
                records.extend(pipeline::threshold_records(&solution, args.variant, &fp));
            }
            Err(CliError::Model(sizeflags_core::Error::InsufficientBaseline)) => {
                out.warn(format!("category {}: nothing is flagged at theta_max; skipped", s.category_id()));
            }
            Err(e) => return Err(e),
        }
    }
    out.summary.push(format!("fingerprint {fp}"));
    out.records(&records)
}

fn run(args: RunArgs, out: &mut Output) -> Result<()> {
    let (mut config, inputs) = model_config("run", &args.model, out)?;
    apply_optimizer(&mut config, &args.optimizer);
    config.variant = Some(args.variant);
    config.theta = args.theta;
    config.validate()?;
    let fp = config.fingerprint();
    let mut records = Vec::new();
    for s in pipeline::selected(&inputs.series, &config) {
        let model = CategoryModel::build(s, &config, args.variant, &inputs.feedback, &inputs.cues);
        let Some(model) = skip_or(s.category_id(), model, out)? else { continue };
        let choice = pipeline::choose_theta(&model, args.variant, &config)?;
        if let Some(w) = choice.warning {
            out.warn(w);
        }
        let decisions = pipeline::decide(&model, args.variant, choice.theta, &config, &fp)?;
        let flagged = decisions.iter().filter(|d| d.flagged).count();
        out.summary.push(format!(
            "{}: {} articles, {flagged} flags at θ = {}",
            s.category_id(),
            decisions.len() / 2,
            choice.theta
        ));
        records.extend(decisions);
    }
    if records.is_empty() {
        out.warn("no decisions produced");
    }
    out.summary.push(format!("variant {}, fingerprint {fp}", args.variant));
    out.records(&records)
}

fn evaluate_did(args: DidArgs, out: &mut Output) -> Result<()> {
    let snapshots = Input::load(&args.snapshots)?;
    let decisions = load_optional(&args.decisions)?;
    let treated_file = load_optional(&args.treated)?;
    let mut config = RunConfig::new("evaluate-did")
        .with_input("snapshots", Some(&snapshots))
        .with_input("decisions", decisions.as_ref())
        .with_input("treated", treated_file.as_ref());
    config.categories = args.categories.clone();
    config.extra.insert("neighbors".into(), json!(args.neighbors));
    config.extra.insert("pre_weeks".into(), json!(args.pre_weeks));
    config.extra.insert("post_weeks".into(), json!(args.post_weeks));
    config.validate()?;
    if args.neighbors == 0 || args.pre_weeks <= 0 || args.post_weeks <= 0 {
        return Err(CliError::Config("neighbors and window lengths must be positive".into()));
    }
    let fp = config.fingerprint();
    let parsed = formats::read_snapshots(snapshots.bytes.as_slice(), &snapshots.name)?;
    out.warnings.extend(parsed.warnings);
    let series = pipeline::selected(&parsed.value, &config);

    let mut treated = BTreeMap::new();
    if let Some(d) = decisions {
        let records = formats::read_decisions(d.bytes.as_slice(), &d.name)?;
        for s in &series {
            treated.insert(s.category_id().to_string(), pipeline::treated_from_decisions(&records, s.category_id())?);
        }
    } else if let Some(t) = treated_file {
        let by_category = formats::read_treated(t.bytes.as_slice(), &t.name)?;
        for s in &series {
            let list = by_category.get(s.category_id()).cloned().unwrap_or_default();
            let ids: BTreeSet<&str> = list.iter().map(|t| t.article_id.as_str()).collect();
            let pool = s.article_ids().into_iter().filter(|a| !ids.contains(a)).map(String::from).collect();
            treated.insert(s.category_id().to_string(), (list, pool));
        }
    }
    let did = DidConfig { neighbors: args.neighbors, pre_weeks: args.pre_weeks, post_weeks: args.post_weeks };
    let summary = pipeline::did_over_categories(&series, &treated, &did)?;
    out.warnings.extend(summary.warnings.iter().cloned());
    match summary.srr_effect() {
        Some(e) => out.summary.push(format!("SRR effect {e:.6}, fingerprint {fp}")),
        None => out.summary.push(format!("no effect estimated, fingerprint {fp}")),
    }
    out.records(&summary.records(&fp))
}

fn variant_from_file(path: &Path, out: &mut Output) -> Result<(Input, sizeflags_core::evaluation::VariantFlags)> {
    let input = Input::load(path)?;
    let records = formats::read_decisions(input.bytes.as_slice(), &input.name)?;
    let variants: BTreeSet<&str> = records.iter().map(|r| r.variant.as_str()).collect();
    if variants.len() > 1 {
        out.warn(format!("{} mixes variants {variants:?}", input.name));
    }
    let stem = path.file_stem().map(|s| s.to_string_lossy().to_string()).unwrap_or_default();
    let label = match variants.iter().next() {
        Some(v) => format!("{v} ({stem})"),
        None => stem,
    };
    let flags = pipeline::variant_flags(label, &records)?;
    Ok((input, flags))
}

fn cold_start(args: ColdStartArgs, out: &mut Output) -> Result<()> {
    let (base_input, baseline) = variant_from_file(&args.baseline, out)?;
    let mut config = RunConfig::new("cold-start-compare").with_input("baseline", Some(&base_input));
    let mut variants = Vec::new();
    for (i, path) in args.compare.iter().enumerate() {
        let (input, flags) = variant_from_file(path, out)?;
        config = config.with_input(&format!("compare.{i}"), Some(&input));
        variants.push(flags);
    }
    let fp = config.fingerprint();
    let report = pipeline::compare_cold_start(baseline, variants)?;
    out.warnings.extend(report.warnings.iter().cloned());
    for v in &report.variants {
        out.summary.push(format!(
            "{}: shared median orders reduction {:?}, coverage {:.3}",
            v.variant,
            v.shared_reduction.and_then(|r| r.orders),
            v.shared_coverage
        ));
    }
    out.records(&pipeline::cold_start_records(&report, &fp))
}

fn simulate(args: SimulateArgs, out: &mut Output) -> Result<()> {
    let mut sim = match &args.config {
        Some(path) => {
            let input = Input::load(path)?;
            serde_json::from_slice::<SimConfig>(&input.bytes).map_err(|e| CliError::Parse {
                source_name: input.name.clone(),
                line: e.line(),
                message: e.to_string(),
            })?
        }
        None => SimConfig::default(),
    };
    if let Some(v) = args.seed {
        sim.seed = v;
    }
    if let Some(v) = &args.category {
        sim.category_id = v.clone();
    }
    if let Some(v) = args.articles {
        sim.article_count = v;
    }
    if let Some(v) = args.weeks {
        sim.weeks = v;
    }
    if let Some(v) = args.issue_fraction {
        sim.issue_fraction = v;
    }
    if let Some(v) = args.order_rate {
        sim.weekly_order_rate = v;
    }
    if args.feedback_coverage.is_some() || args.feedback_accuracy.is_some() {
        let mut f = sim.feedback.unwrap_or_default();
        f.coverage = args.feedback_coverage.unwrap_or(f.coverage);
        f.accuracy = args.feedback_accuracy.unwrap_or(f.accuracy);
        sim.feedback = Some(FeedbackModel { ..f });
    }
    if args.cue_coverage.is_some() || args.cue_noise.is_some() {
        let mut c = sim.cues.unwrap_or_default();
        c.coverage = args.cue_coverage.unwrap_or(c.coverage);
        c.noise_sd = args.cue_noise.unwrap_or(c.noise_sd);
        sim.cues = Some(CueModel { ..c });
    }
    if let Some(fraction) = args.treated_fraction {
        sim.treatment = Some(Treatment {
            treated_fraction: fraction,
            flag_week: args.flag_week,
            relative_reduction: args.reduction,
            direction: args.treated_direction,
        });
    }
    let generated = simulator::generate(&sim)?;
    let (pi, sigma) = sim.mixture_moments();
    out.summary.push(format!(
        "{} articles over {} weeks, π_true {pi:.4}, σ_true {sigma:.4}, {} issues, seed {}",
        sim.article_count,
        sim.weeks,
        generated.truth.issue_count(),
        sim.seed
    ));
    let snapshots = formats::snapshot_records(&generated.series);
    match &args.out_dir {
        Some(dir) => {
            let dir = config::resolve(dir);
            std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
            write_file(&dir.join("snapshots.jsonl"), &snapshots)?;
            write_file(&dir.join("truth.jsonl"), &formats::truth_records(&generated.truth))?;
            write_file(&dir.join("feedback.jsonl"), &formats::feedback_records(&generated.feedback))?;
            write_file(&dir.join("cues.jsonl"), &formats::cue_records(&generated.cues))?;
            write_file(
                &dir.join("treated.jsonl"),
                &formats::treated_records(&sim.category_id, &generated.treated),
            )?;
            out.summary.push(format!("wrote {}", dir.display()));
            Ok(())
        }
        None => out.records(&snapshots),
    }
}
