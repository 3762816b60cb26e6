//! Joint flag conditions and the per-category flagging pass.
//!
//! An article is flagged in one direction when
//!
//! 1. its observed rate k/n is at least π + σ, and
//! 2. its score reaches θ, where the score is either the binomial negative
//!    log-likelihood of (k, n) under π, or the negative log posterior density
//!    at π under the article's Beta prior.
//!
//! Both comparisons are inclusive. Articles without orders are never flagged.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::math;
use crate::priors::PriorTable;
use crate::series::{Covariates, Timestamp};
use crate::stats::{
    binomial_score, posterior, posterior_score, CategoryStats, PosteriorParams, PriorParams,
    PriorProvenance, ReturnCounts,
};
use crate::{Error, Result};

/// Single-precision machine epsilon, 2⁻²³.
pub const MACHINE_EPSILON_F32: f64 = f32::EPSILON as f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Direction {
    TooBig,
    TooSmall,
}

impl Direction {
    pub const ALL: [Direction; 2] = [Direction::TooBig, Direction::TooSmall];

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::TooBig => "too_big",
            Direction::TooSmall => "too_small",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> core::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace([' ', '-'], "_").as_str() {
            "too_big" => Ok(Direction::TooBig),
            "too_small" => Ok(Direction::TooSmall),
            _ => Err(alloc::format!("unknown direction {s:?}; expected too_big or too_small")),
        }
    }
}

/// One value per flag direction.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PerDirection<T> {
    pub too_big: T,
    pub too_small: T,
}

impl<T> PerDirection<T> {
    pub fn new(too_big: T, too_small: T) -> Self {
        PerDirection { too_big, too_small }
    }

    pub fn get(&self, direction: Direction) -> &T {
        match direction {
            Direction::TooBig => &self.too_big,
            Direction::TooSmall => &self.too_small,
        }
    }

    pub fn get_mut(&mut self, direction: Direction) -> &mut T {
        match direction {
            Direction::TooBig => &mut self.too_big,
            Direction::TooSmall => &mut self.too_small,
        }
    }

    pub fn splat(value: T) -> Self
    where
        T: Clone,
    {
        PerDirection {
            too_big: value.clone(),
            too_small: value,
        }
    }

    pub fn try_from_fn<E>(mut f: impl FnMut(Direction) -> core::result::Result<T, E>) -> core::result::Result<Self, E> {
        Ok(PerDirection {
            too_big: f(Direction::TooBig)?,
            too_small: f(Direction::TooSmall)?,
        })
    }

    pub fn map<U>(&self, mut f: impl FnMut(Direction, &T) -> U) -> PerDirection<U> {
        PerDirection {
            too_big: f(Direction::TooBig, &self.too_big),
            too_small: f(Direction::TooSmall, &self.too_small),
        }
    }
}

/// Model variants compared in production.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ModelVariant {
    /// Binomial score on order and return data.
    #[cfg_attr(feature = "serde", serde(rename = "V0"))]
    V0,
    /// Only flags backed by a human feedback prior.
    #[cfg_attr(feature = "serde", serde(rename = "V_HF"))]
    VHf,
    /// Posterior score with human feedback priors.
    #[cfg_attr(feature = "serde", serde(rename = "V_Base"))]
    VBase,
    /// Baseline plus visual cue priors.
    #[cfg_attr(feature = "serde", serde(rename = "V_SN"))]
    VSn,
    /// Baseline plus optimized thresholds.
    #[cfg_attr(feature = "serde", serde(rename = "V_TH"))]
    VTh,
    /// Baseline plus visual cue priors plus optimized thresholds.
    SizeFlags,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 6] = [
        ModelVariant::V0,
        ModelVariant::VHf,
        ModelVariant::VBase,
        ModelVariant::VSn,
        ModelVariant::VTh,
        ModelVariant::SizeFlags,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelVariant::V0 => "V0",
            ModelVariant::VHf => "V_HF",
            ModelVariant::VBase => "V_Base",
            ModelVariant::VSn => "V_SN",
            ModelVariant::VTh => "V_TH",
            ModelVariant::SizeFlags => "SizeFlags",
        }
    }

    /// Uses the posterior score instead of the binomial score.
    pub fn is_bayesian(self) -> bool {
        self != ModelVariant::V0
    }

    pub fn uses_visual_cues(self) -> bool {
        matches!(self, ModelVariant::VSn | ModelVariant::SizeFlags)
    }

    pub fn uses_optimized_threshold(self) -> bool {
        matches!(self, ModelVariant::VTh | ModelVariant::SizeFlags)
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelVariant {
    type Err = String;

    fn from_str(s: &str) -> core::result::Result<Self, Self::Err> {
        let key: String = s.chars().filter(|c| *c != '_').collect::<String>().to_ascii_lowercase();
        ModelVariant::ALL
            .into_iter()
            .find(|v| v.as_str().replace('_', "").to_ascii_lowercase() == key)
            .ok_or_else(|| {
                alloc::format!(
                    "unknown model variant {s:?}; expected one of V0, V_HF, V_Base, V_SN, V_TH, SizeFlags"
                )
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FlagConfig {
    /// Score threshold θ = -ln ε.
    pub theta: f64,
    pub variant: ModelVariant,
    /// Articles with fewer orders are not evaluated (at least 1).
    pub min_orders: u64,
}

impl FlagConfig {
    pub fn new(theta: f64, variant: ModelVariant) -> Result<Self> {
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::InvalidParameter { name: "theta", value: theta });
        }
        Ok(FlagConfig { theta, variant, min_orders: 1 })
    }

    /// θ = -ln ε for a likelihood bound ε in (0, 1).
    pub fn from_epsilon(epsilon: f64, variant: ModelVariant) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::InvalidParameter { name: "epsilon", value: epsilon });
        }
        Self::new(-math::ln(epsilon), variant)
    }

    /// θ from single-precision machine epsilon, -ln 2⁻²³ ≈ 15.9424.
    pub fn machine_epsilon(variant: ModelVariant) -> Self {
        Self::from_epsilon(MACHINE_EPSILON_F32, variant).expect("2^-23 is a valid bound")
    }

    pub fn with_min_orders(mut self, min_orders: u64) -> Self {
        self.min_orders = min_orders.max(1);
        self
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }

    /// ε = exp(-θ).
    pub fn epsilon_bound(&self) -> f64 {
        math::exp(-self.theta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum FlagReason {
    Flagged,
    /// No orders: the rate condition cannot be evaluated.
    NoData,
    BelowMinOrders,
    RateBelowBound,
    ScoreBelowThreshold,
    /// π of the category is 0 or 1.
    DegenerateCategoryRate,
    /// V_HF only evaluates articles with a human feedback prior.
    NoFeedbackPrior,
}

impl FlagReason {
    pub fn as_str(self) -> &'static str {
        match self {
            FlagReason::Flagged => "flagged",
            FlagReason::NoData => "no_data",
            FlagReason::BelowMinOrders => "below_min_orders",
            FlagReason::RateBelowBound => "rate_below_bound",
            FlagReason::ScoreBelowThreshold => "score_below_threshold",
            FlagReason::DegenerateCategoryRate => "degenerate_category_rate",
            FlagReason::NoFeedbackPrior => "no_feedback_prior",
        }
    }
}

/// Result of evaluating the joint condition for one (k, n).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FlagOutcome {
    pub flagged: bool,
    pub reason: FlagReason,
    /// Binomial score or posterior score, whichever the variant uses.
    pub score: Option<f64>,
    pub srr_observed: Option<f64>,
    pub threshold_used: f64,
    pub prior_used: Option<PriorParams>,
    pub posterior: Option<PosteriorParams>,
    pub model_variant: ModelVariant,
}

impl FlagOutcome {
    fn rejected(reason: FlagReason, srr: Option<f64>, config: &FlagConfig) -> Self {
        FlagOutcome {
            flagged: false,
            reason,
            score: None,
            srr_observed: srr,
            threshold_used: config.theta,
            prior_used: None,
            posterior: None,
            model_variant: config.variant,
        }
    }
}

/// Data gates plus the rate condition: `Ok(srr)` if k/n ≥ π + σ.
fn rate_condition(
    counts: ReturnCounts,
    stats: &CategoryStats,
    config: &FlagConfig,
) -> core::result::Result<f64, FlagOutcome> {
    if counts.orders() == 0 {
        return Err(FlagOutcome::rejected(FlagReason::NoData, None, config));
    }
    let srr = counts.srr().expect("orders > 0");
    if counts.orders() < config.min_orders {
        return Err(FlagOutcome::rejected(FlagReason::BelowMinOrders, Some(srr), config));
    }
    if !(stats.pi > 0.0 && stats.pi < 1.0) {
        return Err(FlagOutcome::rejected(FlagReason::DegenerateCategoryRate, Some(srr), config));
    }
    if srr < stats.rate_bound() {
        return Err(FlagOutcome::rejected(FlagReason::RateBelowBound, Some(srr), config));
    }
    Ok(srr)
}

fn score_condition(
    srr: f64,
    score: f64,
    prior: Option<PriorParams>,
    post: Option<PosteriorParams>,
    config: &FlagConfig,
) -> FlagOutcome {
    let flagged = score >= config.theta;
    FlagOutcome {
        flagged,
        reason: if flagged { FlagReason::Flagged } else { FlagReason::ScoreBelowThreshold },
        score: Some(score),
        srr_observed: Some(srr),
        threshold_used: config.theta,
        prior_used: prior,
        posterior: post,
        model_variant: config.variant,
    }
}

/// Flags when `-ln p(k | n, π) ≥ θ` and `k/n ≥ π + σ`.
pub fn flag_binomial(counts: ReturnCounts, stats: &CategoryStats, config: &FlagConfig) -> FlagOutcome {
    let srr = match rate_condition(counts, stats, config) {
        Ok(srr) => srr,
        Err(outcome) => return outcome,
    };
    let score = binomial_score(counts, stats.pi).expect("π checked inside (0, 1)");
    score_condition(srr, score, None, None, config)
}

/// Flags when `-ln p(π | k, n; α, β) ≥ θ` and `k/n ≥ π + σ`.
pub fn flag_bayesian(
    counts: ReturnCounts,
    stats: &CategoryStats,
    prior: &PriorParams,
    config: &FlagConfig,
) -> FlagOutcome {
    let srr = match rate_condition(counts, stats, config) {
        Ok(srr) => srr,
        Err(outcome) => return outcome,
    };
    let score = posterior_score(stats.pi, counts, prior).expect("π checked inside (0, 1)");
    score_condition(srr, score, Some(*prior), Some(posterior(counts, prior)), config)
}

/// One article of a category at evaluation time.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ArticleRecord {
    pub article_id: String,
    pub category_id: String,
    pub orders: u64,
    pub returns_too_big: u64,
    pub returns_too_small: u64,
    pub covariates: Covariates,
    pub first_seen: Timestamp,
}

impl ArticleRecord {
    pub fn counts(&self, direction: Direction) -> Result<ReturnCounts> {
        let returns = match direction {
            Direction::TooBig => self.returns_too_big,
            Direction::TooSmall => self.returns_too_small,
        };
        ReturnCounts::new(returns, self.orders)
    }

    pub fn validate(&self) -> Result<()> {
        let returns = self.returns_too_big.saturating_add(self.returns_too_small);
        if returns > self.orders {
            return Err(Error::InvalidCounts { returns, orders: self.orders });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FlagDecision {
    pub article_id: String,
    pub direction: Direction,
    pub counts: ReturnCounts,
    pub outcome: FlagOutcome,
}

impl FlagDecision {
    pub fn flagged(&self) -> bool {
        self.outcome.flagged
    }
}

/// Flags one article in one direction following the per-category pass:
/// rate condition first, then the prior lookup, then the score condition.
pub fn evaluate_article(
    article_id: &str,
    direction: Direction,
    counts: ReturnCounts,
    stats: &CategoryStats,
    priors: &PriorTable,
    config: &FlagConfig,
) -> FlagOutcome {
    if !config.variant.is_bayesian() {
        return flag_binomial(counts, stats, config);
    }
    let srr = match rate_condition(counts, stats, config) {
        Ok(srr) => srr,
        Err(outcome) => return outcome,
    };
    let prior = priors.lookup(article_id, direction, stats);
    if config.variant == ModelVariant::VHf && prior.provenance != PriorProvenance::HumanFeedback {
        return FlagOutcome::rejected(FlagReason::NoFeedbackPrior, Some(srr), config);
    }
    let score = posterior_score(stats.pi, counts, &prior).expect("π checked inside (0, 1)");
    score_condition(srr, score, Some(prior), Some(posterior(counts, &prior)), config)
}

/// Two decisions per article (too big, then too small), in input order.
/// Articles with no prior entry get the table's fallback.
pub fn run_sizeflags(
    articles: &[ArticleRecord],
    stats: &PerDirection<CategoryStats>,
    priors: &PriorTable,
    config: &FlagConfig,
) -> Result<Vec<FlagDecision>> {
    let mut decisions = Vec::with_capacity(2 * articles.len());
    for article in articles {
        article.validate()?;
        for direction in Direction::ALL {
            let counts = article.counts(direction)?;
            let outcome = evaluate_article(
                &article.article_id,
                direction,
                counts,
                stats.get(direction),
                priors,
                config,
            );
            decisions.push(FlagDecision {
                article_id: article.article_id.clone(),
                direction,
                counts,
                outcome,
            });
        }
    }
    Ok(decisions)
}
