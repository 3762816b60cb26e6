//! Per-category pipelines shared by the subcommands.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::{json, Value};
use sizeflags_core::evaluation::{
    cold_start_compare, did_effect, flag_timeline, ColdStartReport, DidConfig, DidReport, FirstFlag,
    TreatedArticle, VariantFlags,
};
use sizeflags_core::flagging::{evaluate_article, PerDirection};
use sizeflags_core::priors::{PriorSources, PriorTable};
use sizeflags_core::threshold::{optimize_category_threshold, CategoryThreshold};
use sizeflags_core::{
    solve_prior_bounds, CategoryStats, Direction, ExpertFeedback, FlagConfig, ModelVariant,
    PriorBounds, PriorPolicy, PriorProvenance, SnapshotSeries, VisualCue,
};

use crate::config::{machine_epsilon_theta, RunConfig, ThetaSource};
use crate::error::{CliError, Result};
use crate::formats::{format_timestamp, parse_timestamp, DecisionRecord, FirstFlagRecord};

/// The series restricted to the configured window, with counts rebased to
/// the window start.
pub fn windowed(series: &SnapshotSeries, config: &RunConfig) -> Result<SnapshotSeries> {
    match config.window {
        Some(w) => Ok(series.rebased(w)?),
        None => Ok(series.clone()),
    }
}

/// Keeps the categories selected by the config (all when none are listed).
pub fn selected<'a>(series: &'a [SnapshotSeries], config: &RunConfig) -> Vec<&'a SnapshotSeries> {
    series
        .iter()
        .filter(|s| config.categories.is_empty() || config.categories.iter().any(|c| c == s.category_id()))
        .collect()
}

pub fn category_stats(series: &SnapshotSeries, config: &RunConfig) -> Result<PerDirection<CategoryStats>> {
    Ok(PerDirection::try_from_fn(|d| {
        let counts = series.window_counts(d, None).into_iter().map(|(_, c)| c);
        CategoryStats::compute(series.category_id(), series.window(), counts, config.min_orders)
            .map(|s| match config.pi_interval {
                Some(interval) => s.with_pi_interval(interval),
                None => s,
            })
    })?)
}

pub fn prior_policy(config: &RunConfig) -> PriorPolicy {
    PriorPolicy {
        default_concentration: config.prior_concentration,
        potential_weight: config.potential_weight,
    }
}

/// Statistics, prior bounds and priors of one category under one variant.
#[derive(Debug, Clone)]
pub struct CategoryModel {
    pub series: SnapshotSeries,
    pub stats: PerDirection<CategoryStats>,
    /// Only for Bayesian variants.
    pub bounds: Option<PerDirection<PriorBounds>>,
    pub priors: PriorTable,
}

impl CategoryModel {
    pub fn build(
        series: &SnapshotSeries,
        config: &RunConfig,
        variant: ModelVariant,
        feedback: &[ExpertFeedback],
        cues: &[VisualCue],
    ) -> Result<Self> {
        let series = windowed(series, config)?;
        let stats = category_stats(&series, config)?;
        if !variant.is_bayesian() {
            return Ok(CategoryModel { series, stats, bounds: None, priors: PriorTable::new() });
        }
        let theta = config.bound_theta.unwrap_or(config.theta_max);
        let bounds = PerDirection::try_from_fn(|d| solve_prior_bounds(stats.get(d).pi_interval, theta))?;
        let ids: BTreeSet<&str> = series.article_ids().into_iter().collect();
        let feedback: Vec<ExpertFeedback> =
            feedback.iter().filter(|f| ids.contains(f.article_id.as_str())).cloned().collect();
        let cues: Vec<VisualCue> = cues.iter().filter(|c| ids.contains(c.article_id.as_str())).cloned().collect();
        let priors = PriorTable::build(
            PriorSources::for_variant(variant),
            &feedback,
            &cues,
            &stats,
            &bounds,
            &prior_policy(config),
        );
        Ok(CategoryModel { series, stats, bounds: Some(bounds), priors })
    }

    pub fn flag_config(&self, theta: f64, variant: ModelVariant, config: &RunConfig) -> Result<FlagConfig> {
        Ok(FlagConfig::new(theta, variant)?.with_min_orders(config.min_orders))
    }

    pub fn optimize(&self, variant: ModelVariant, config: &RunConfig) -> Result<CategoryThreshold> {
        let flag = self.flag_config(config.theta_max, variant, config)?;
        Ok(optimize_category_threshold(
            &self.series,
            &self.stats,
            &self.priors,
            &flag,
            config.theta_max,
            config.epsilons,
            config.grid_points,
        )?)
    }
}

pub fn default_theta_source(variant: ModelVariant) -> ThetaSource {
    if variant.uses_optimized_threshold() {
        ThetaSource::Optimized
    } else {
        ThetaSource::MachineEpsilon
    }
}

/// The θ a run uses, with the optimizer's solution when it ran.
#[derive(Debug, Clone)]
pub struct ThetaChoice {
    pub theta: f64,
    pub solution: Option<CategoryThreshold>,
    pub warning: Option<String>,
}

pub fn choose_theta(model: &CategoryModel, variant: ModelVariant, config: &RunConfig) -> Result<ThetaChoice> {
    let source = config.theta.unwrap_or_else(|| default_theta_source(variant));
    let fixed = |theta| ThetaChoice { theta, solution: None, warning: None };
    match source {
        ThetaSource::Fixed(theta) => Ok(fixed(theta)),
        ThetaSource::MachineEpsilon => Ok(fixed(machine_epsilon_theta())),
        ThetaSource::Optimized => match model.optimize(variant, config) {
            Ok(solution) => Ok(ThetaChoice {
                theta: solution.theta_star,
                warning: (!solution.feasible).then(|| {
                    format!(
                        "category {}: no grid point satisfies the threshold constraints; using theta_max",
                        model.series.category_id()
                    )
                }),
                solution: Some(solution),
            }),
            Err(CliError::Model(sizeflags_core::Error::InsufficientBaseline)) => Ok(ThetaChoice {
                theta: config.theta_max,
                solution: None,
                warning: Some(format!(
                    "category {}: nothing is flagged at theta_max; threshold not optimized",
                    model.series.category_id()
                )),
            }),
            Err(e) => Err(e),
        },
    }
}

fn provenance_str(p: PriorProvenance) -> &'static str {
    match p {
        PriorProvenance::Default => "default",
        PriorProvenance::HumanFeedback => "human_feedback",
        PriorProvenance::VisualCue => "visual_cue",
    }
}

/// Decisions at the last snapshot of the window, two per article (too big
/// first), sorted by article id, each with its first raise over the series.
pub fn decide(
    model: &CategoryModel,
    variant: ModelVariant,
    theta: f64,
    config: &RunConfig,
    fingerprint: &str,
) -> Result<Vec<DecisionRecord>> {
    let flag = model.flag_config(theta, variant, config)?;
    let first: BTreeMap<(String, Direction), FirstFlag> = flag_timeline(&model.series, &model.stats, &model.priors, &flag)?
        .into_iter()
        .map(|f| ((f.article_id.clone(), f.direction), f))
        .collect();
    let latest = PerDirection::new(
        model.series.window_counts(Direction::TooBig, None),
        model.series.window_counts(Direction::TooSmall, None),
    );
    let mut out = Vec::new();
    for i in 0..latest.too_big.len() {
        for d in Direction::ALL {
            let (id, counts) = &latest.get(d)[i];
            let stats = model.stats.get(d);
            let outcome = evaluate_article(id, d, *counts, stats, &model.priors, &flag);
            out.push(DecisionRecord {
                record: "decision".into(),
                fingerprint: fingerprint.to_string(),
                category_id: model.series.category_id().to_string(),
                article_id: id.clone(),
                direction: d,
                variant: variant.as_str().to_string(),
                flagged: outcome.flagged,
                reason: outcome.reason.as_str().to_string(),
                orders: counts.orders(),
                returns: counts.returns(),
                srr: outcome.srr_observed,
                score: outcome.score,
                theta,
                pi: stats.pi,
                sigma: stats.sigma,
                prior_alpha: outcome.prior_used.map(|p| p.alpha),
                prior_beta: outcome.prior_used.map(|p| p.beta),
                prior_provenance: outcome.prior_used.map(|p| provenance_str(p.provenance).to_string()),
                posterior_alpha: outcome.posterior.map(|p| p.alpha),
                posterior_beta: outcome.posterior.map(|p| p.beta),
                posterior_exponents: outcome.posterior.map(|p| {
                    let (a, b) = p.exponents();
                    [a, b]
                }),
                first_flag: first.get(&(id.clone(), d)).map(|f| FirstFlagRecord {
                    snapshot_ts: format_timestamp(f.timestamp),
                    orders: f.orders,
                    returns: f.returns,
                }),
            });
        }
    }
    Ok(out)
}

pub fn stats_records(stats: &PerDirection<CategoryStats>, fingerprint: &str) -> Vec<Value> {
    Direction::ALL
        .iter()
        .map(|&d| {
            let s = stats.get(d);
            json!({
                "record": "category_stats",
                "fingerprint": fingerprint,
                "category_id": s.category_id,
                "direction": d,
                "pi": s.pi,
                "sigma": s.sigma,
                "rate_bound": s.rate_bound(),
                "pi_low": s.pi_interval.low,
                "pi_high": s.pi_interval.high,
                "eligible": s.eligible,
                "window_start": s.window.map(|w| format_timestamp(w.start)),
                "window_end": s.window.map(|w| format_timestamp(w.end)),
            })
        })
        .collect()
}

pub fn bounds_record(bounds: &PriorBounds, fingerprint: &str) -> Value {
    json!({
        "record": "prior_bounds",
        "fingerprint": fingerprint,
        "pi_low": bounds.pi_interval.low,
        "pi_high": bounds.pi_interval.high,
        "theta": bounds.theta,
        "alpha_max": bounds.alpha_max,
        "beta_max": bounds.beta_max,
        "pi_star_alpha": bounds.diagnostics.pi_star_alpha,
        "pi_star_beta": bounds.diagnostics.pi_star_beta,
        "delta_alpha": bounds.diagnostics.delta_alpha,
        "delta_beta": bounds.diagnostics.delta_beta,
    })
}

pub fn threshold_records(solution: &CategoryThreshold, variant: ModelVariant, fingerprint: &str) -> Vec<Value> {
    let mut out = Vec::new();
    for d in Direction::ALL {
        if let Some(s) = solution.per_direction.get(d) {
            out.push(json!({
                "record": "threshold",
                "fingerprint": fingerprint,
                "category_id": solution.category_id,
                "variant": variant.as_str(),
                "direction": d,
                "theta_star": s.theta_star,
                "theta_max": s.theta_max,
                "feasible": s.feasible,
                "n_star": s.at_theta_star.flagged,
                "s_star": s.at_theta_star.stable,
                "n_max": s.at_theta_max.flagged,
                "s_max": s.at_theta_max.stable,
                "grid_step": s.grid_step,
                "grid_points": s.grid_points,
                "epsilons": [s.epsilons.unstable_share, s.epsilons.extra_flags, s.epsilons.unstable_ratio],
            }));
        }
    }
    out.push(json!({
        "record": "category_threshold",
        "fingerprint": fingerprint,
        "category_id": solution.category_id,
        "variant": variant.as_str(),
        "theta_star": solution.theta_star,
        "feasible": solution.feasible,
        "directions": Direction::ALL
            .iter()
            .filter(|d| solution.per_direction.get(**d).is_some())
            .collect::<Vec<_>>(),
    }));
    out
}

/// Treated articles (flags with a first raise) and never-flagged controls
/// of one category, from decision records.
pub fn treated_from_decisions(
    decisions: &[DecisionRecord],
    category_id: &str,
) -> Result<(Vec<TreatedArticle>, Vec<String>)> {
    let mut treated = Vec::new();
    let mut ever_flagged: BTreeSet<&str> = BTreeSet::new();
    let mut all: BTreeSet<&str> = BTreeSet::new();
    for d in decisions.iter().filter(|d| d.category_id == category_id) {
        all.insert(&d.article_id);
        if let Some(f) = &d.first_flag {
            ever_flagged.insert(&d.article_id);
            let t_flag = parse_timestamp(&f.snapshot_ts).map_err(|m| CliError::Validation {
                source_name: "decisions".into(),
                message: m,
            })?;
            treated.push(TreatedArticle { article_id: d.article_id.clone(), direction: d.direction, t_flag });
        } else if d.flagged {
            ever_flagged.insert(&d.article_id);
        }
    }
    let controls = all.difference(&ever_flagged).map(|s| s.to_string()).collect();
    Ok((treated, controls))
}

/// DiD over several categories; the overall effect is the mean over every
/// included article.
#[derive(Debug, Clone)]
pub struct DidSummary {
    pub reports: Vec<(String, DidReport)>,
    pub warnings: Vec<String>,
}

impl DidSummary {
    pub fn srr_effect(&self) -> Option<f64> {
        let effects: Vec<f64> = self.reports.iter().flat_map(|(_, r)| r.per_article.iter().map(|a| a.effect)).collect();
        (!effects.is_empty()).then(|| effects.iter().sum::<f64>() / effects.len() as f64)
    }

    pub fn records(&self, fingerprint: &str) -> Vec<Value> {
        let mut out = Vec::new();
        for (category, report) in &self.reports {
            for a in &report.per_article {
                out.push(json!({
                    "record": "did_article",
                    "fingerprint": fingerprint,
                    "category_id": category,
                    "article_id": a.article_id,
                    "direction": a.direction,
                    "t_flag": format_timestamp(a.t_flag),
                    "srr_pre": a.srr_pre,
                    "srr_post": a.srr_post,
                    "control_srr_pre": a.control_srr_pre,
                    "control_srr_post": a.control_srr_post,
                    "gamma_pre": a.gamma_pre,
                    "gamma_post": a.gamma_post,
                    "effect": a.effect,
                    "neighbors": a.neighbors,
                }));
            }
            for e in &report.excluded {
                out.push(json!({
                    "record": "did_exclusion",
                    "fingerprint": fingerprint,
                    "category_id": category,
                    "article_id": e.article_id,
                    "direction": e.direction,
                    "reason": e.reason.as_str(),
                }));
            }
            out.push(json!({
                "record": "did_category",
                "fingerprint": fingerprint,
                "category_id": category,
                "srr_effect": report.srr_effect,
                "neighbors": report.neighbors,
                "treated_count": report.treated_count,
                "included": report.per_article.len(),
                "excluded": report.excluded.len(),
                "truncated_matches": report.truncated_matches.len(),
            }));
        }
        let included: usize = self.reports.iter().map(|(_, r)| r.per_article.len()).sum();
        let treated: usize = self.reports.iter().map(|(_, r)| r.treated_count).sum();
        out.push(json!({
            "record": "did_report",
            "fingerprint": fingerprint,
            "srr_effect": self.srr_effect(),
            "treated_count": treated,
            "included": included,
            "excluded": treated - included,
            "categories": self.reports.len(),
            "warnings": self.warnings,
        }));
        out
    }
}

pub fn did_over_categories(
    series: &[&SnapshotSeries],
    treated: &BTreeMap<String, (Vec<TreatedArticle>, Vec<String>)>,
    did: &DidConfig,
) -> Result<DidSummary> {
    let mut reports = Vec::new();
    let mut warnings = Vec::new();
    for s in series {
        let Some((t, pool)) = treated.get(s.category_id()) else { continue };
        if t.is_empty() {
            warnings.push(format!("category {}: no treated articles", s.category_id()));
            continue;
        }
        match did_effect(t, pool, s, did) {
            Ok(r) => {
                if !r.truncated_matches.is_empty() {
                    warnings.push(format!(
                        "category {}: {} treated articles matched against fewer than {} controls",
                        s.category_id(),
                        r.truncated_matches.len(),
                        did.neighbors
                    ));
                }
                reports.push((s.category_id().to_string(), r));
            }
            Err(e @ sizeflags_core::Error::AllExcluded { .. }) => {
                warnings.push(format!("category {}: {e}", s.category_id()))
            }
            Err(e) => return Err(e.into()),
        }
    }
    if reports.is_empty() {
        return Err(CliError::Model(sizeflags_core::Error::EmptyTreatedSet));
    }
    Ok(DidSummary { reports, warnings })
}

/// First raises of one decision file as a named variant.
pub fn variant_flags(label: String, decisions: &[DecisionRecord]) -> Result<VariantFlags> {
    let mut flags = Vec::new();
    for d in decisions {
        if let Some(f) = &d.first_flag {
            flags.push(FirstFlag {
                article_id: d.article_id.clone(),
                direction: d.direction,
                snapshot_index: 0,
                timestamp: parse_timestamp(&f.snapshot_ts).map_err(|m| CliError::Validation {
                    source_name: label.clone(),
                    message: m,
                })?,
                orders: f.orders,
                returns: f.returns,
            });
        }
    }
    Ok(VariantFlags { variant: label, flags })
}

pub fn cold_start_records(report: &ColdStartReport, fingerprint: &str) -> Vec<Value> {
    let mut out: Vec<Value> = report
        .variants
        .iter()
        .map(|v| {
            let mut value = serde_json::to_value(v).expect("metrics serialize");
            value["record"] = json!("cold_start");
            value["baseline"] = json!(report.baseline);
            value["fingerprint"] = json!(fingerprint);
            value
        })
        .collect();
    out.push(json!({
        "record": "cold_start_baseline",
        "fingerprint": fingerprint,
        "baseline": report.baseline,
        "overall": report.baseline_overall,
        "warnings": report.warnings,
    }));
    out
}

pub fn compare_cold_start(baseline: VariantFlags, variants: Vec<VariantFlags>) -> Result<ColdStartReport> {
    Ok(cold_start_compare(&baseline, &variants)?)
}
