//! Beta priors from defaults, human expert feedback and visual cues, bounded
//! so that the prior alone cannot push an article over the flag threshold.
//!
//! The bounds come from the edge case of an article without any data
//! (k = n = 0), where the posterior score equals the prior score
//! `p0(π, α, β) = -ln p_beta(π | α, β)`:
//!
//! - `α_max` minimises `|max_{π∈Π} p0(π, α, 1) - θ|` over integers,
//! - `β_max` minimises `|min_{π∈Π} p0(π, 1, β) + 1|` over the integers on
//!   the descending branch of p0 (see [`solve_prior_bounds`]).
//!
//! For β = 1, `p0(π, α, 1) = -ln α - (α-1) ln π` is decreasing in π, and for
//! α = 1, `p0(π, 1, β) = -ln β - (β-1) ln(1-π)` is increasing in π, so both
//! inner extrema sit at the lower end of Π.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::str::FromStr;

use crate::flagging::{Direction, ModelVariant, PerDirection};
use crate::math;
use crate::stats::{beta_log_density, CategoryStats, PriorParams, PriorProvenance, RateInterval};
use crate::{Error, Result};

/// Largest integer tried for α_max and β_max.
pub const PRIOR_SEARCH_LIMIT: u32 = 1000;

/// p0(π, α, β) = -ln p(π | 0, 0; α, β).
pub fn prior_score_p0(pi: f64, alpha: f64, beta: f64) -> Result<f64> {
    Ok(-beta_log_density(pi, alpha, beta)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BoundDiagnostics {
    /// argmax over Π of p0(π, α_max, 1).
    pub pi_star_alpha: f64,
    /// argmin over Π of p0(π, 1, β_max).
    pub pi_star_beta: f64,
    /// p0(π*_α, α_max, 1), close to θ.
    pub delta_alpha: f64,
    /// p0(π*_β, 1, β_max), close to -1.
    pub delta_beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PriorBounds {
    pub alpha_max: u32,
    pub beta_max: u32,
    pub theta: f64,
    pub pi_interval: RateInterval,
    pub diagnostics: BoundDiagnostics,
}

impl PriorBounds {
    /// Clamps a prior into `[1, α_max] × [1, β_max]`.
    pub fn clamp(&self, prior: PriorParams) -> PriorParams {
        PriorParams {
            alpha: prior.alpha.clamp(1.0, self.alpha_max as f64),
            beta: prior.beta.clamp(1.0, self.beta_max as f64),
            provenance: prior.provenance,
        }
    }

    pub fn admits(&self, prior: &PriorParams) -> bool {
        (1.0..=self.alpha_max as f64).contains(&prior.alpha)
            && (1.0..=self.beta_max as f64).contains(&prior.beta)
    }
}

/// `(argmax_{π∈Π} p0(π, α, 1), max value)`.
pub fn max_prior_score_alpha(interval: &RateInterval, alpha: f64) -> Result<(f64, f64)> {
    let pi = interval.low;
    Ok((pi, prior_score_p0(pi, alpha, 1.0)?))
}

/// `(argmin_{π∈Π} p0(π, 1, β), min value)`.
pub fn min_prior_score_beta(interval: &RateInterval, beta: f64) -> Result<(f64, f64)> {
    let pi = interval.low;
    Ok((pi, prior_score_p0(pi, 1.0, beta)?))
}

/// Integer argmin over `1..=limit`; ties keep the smaller value. Fails when
/// the minimum sits on [`PRIOR_SEARCH_LIMIT`], since a larger integer might
/// do better.
fn integer_argmin(parameter: &'static str, limit: u32, mut objective: impl FnMut(f64) -> Result<f64>) -> Result<u32> {
    let mut best = (1u32, objective(1.0)?);
    for v in 2..=limit {
        let value = objective(v as f64)?;
        if value < best.1 {
            best = (v, value);
        }
    }
    if best.0 == PRIOR_SEARCH_LIMIT {
        return Err(Error::SearchRangeExceeded { parameter, limit: PRIOR_SEARCH_LIMIT });
    }
    Ok(best.0)
}

/// Solves for `(α_max, β_max)` over the integers in `1..=1000`.
///
/// ```
/// use sizeflags_core::{solve_prior_bounds, RateInterval};
/// let bounds = solve_prior_bounds(RateInterval::new(0.08, 0.3).unwrap(), 15.0).unwrap();
/// assert_eq!((bounds.alpha_max, bounds.beta_max), (8, 3));
/// ```
pub fn solve_prior_bounds(pi_interval: RateInterval, theta: f64) -> Result<PriorBounds> {
    if pi_interval.low <= 0.0 {
        return Err(Error::Boundary { name: "interval lower bound", value: pi_interval.low });
    }
    if pi_interval.high >= 1.0 {
        return Err(Error::Boundary { name: "interval upper bound", value: pi_interval.high });
    }
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::InvalidParameter { name: "theta", value: theta });
    }

    // p0(π, α, 1) is convex in α and starts at 0, so it crosses θ > 0 at
    // most once and the global argmin is that crossing.
    let alpha_max = integer_argmin("alpha_max", PRIOR_SEARCH_LIMIT, |alpha| {
        Ok(math::abs(max_prior_score_alpha(&pi_interval, alpha)?.1 - theta))
    })?;
    // p0(π, 1, β) is convex too, with its vertex at β* = -1/ln(1 - π), and
    // can cross -1 twice: down, then back up once the prior piles its mass
    // below π. Past β* a smaller β would score lower than the bound, so the
    // search stays on the descending branch 1..=⌊β*⌋ at Π.low.
    let vertex = -1.0 / math::ln_1p(-pi_interval.low);
    let beta_limit = if vertex >= PRIOR_SEARCH_LIMIT as f64 { PRIOR_SEARCH_LIMIT } else { (vertex as u32).max(1) };
    let beta_max = integer_argmin("beta_max", beta_limit, |beta| {
        Ok(math::abs(min_prior_score_beta(&pi_interval, beta)?.1 + 1.0))
    })?;

    let (pi_star_alpha, delta_alpha) = max_prior_score_alpha(&pi_interval, alpha_max as f64)?;
    let (pi_star_beta, delta_beta) = min_prior_score_beta(&pi_interval, beta_max as f64)?;
    Ok(PriorBounds {
        alpha_max,
        beta_max,
        theta,
        pi_interval,
        diagnostics: BoundDiagnostics {
            pi_star_alpha,
            pi_star_beta,
            delta_alpha,
            delta_beta,
        },
    })
}

/// Tunables for the feedback / cue / default mappings.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PriorPolicy {
    /// c in the default prior `(1 + c·π, 1 + c·(1-π))`; the mode sits at π.
    pub default_concentration: f64,
    /// Fraction of `α_max - 1` used for a "potential size issue" verdict,
    /// rounded up.
    pub potential_weight: f64,
}

impl Default for PriorPolicy {
    fn default() -> Self {
        PriorPolicy {
            default_concentration: 2.0,
            potential_weight: 0.5,
        }
    }
}

/// Weak prior whose mode is the category mean.
pub fn default_prior(stats: &CategoryStats, policy: &PriorPolicy) -> PriorParams {
    let c = policy.default_concentration.max(0.0);
    PriorParams {
        alpha: 1.0 + c * stats.pi,
        beta: 1.0 + c * (1.0 - stats.pi),
        provenance: PriorProvenance::Default,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Verdict {
    // declaration order = increasing issue strength
    GoodFit,
    PotentialSizeIssue,
    CertainSizeIssue,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::CertainSizeIssue => "certain size issue",
            Verdict::PotentialSizeIssue => "potential size issue",
            Verdict::GoodFit => "good fit",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownVerdict(pub String);

impl core::fmt::Display for UnknownVerdict {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(
            f,
            "unknown verdict {:?}; expected \"certain size issue\", \"potential size issue\" or \"good fit\"",
            self.0
        )
    }
}

impl FromStr for Verdict {
    type Err = UnknownVerdict;

    fn from_str(s: &str) -> core::result::Result<Self, Self::Err> {
        let normalized: String = s
            .trim()
            .chars()
            .map(|c| if c == '_' || c == '-' { ' ' } else { c.to_ascii_lowercase() })
            .collect();
        match normalized.as_str() {
            "certain size issue" => Ok(Verdict::CertainSizeIssue),
            "potential size issue" => Ok(Verdict::PotentialSizeIssue),
            "good fit" => Ok(Verdict::GoodFit),
            _ => Err(UnknownVerdict(String::from(s))),
        }
    }
}

/// Try-on verdicts from one or more human fit models for one article and
/// direction.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ExpertFeedback {
    pub article_id: String,
    pub direction: Direction,
    pub verdicts: Vec<Verdict>,
}

impl ExpertFeedback {
    /// Plurality verdict; ties go to the more issue-leaning verdict.
    pub fn aggregate(&self) -> Option<Verdict> {
        let mut tally = [0usize; 3];
        for v in &self.verdicts {
            tally[*v as usize] += 1;
        }
        let top = *tally.iter().max()?;
        if top == 0 {
            return None;
        }
        [Verdict::CertainSizeIssue, Verdict::PotentialSizeIssue, Verdict::GoodFit]
            .into_iter()
            .find(|v| tally[*v as usize] == top)
    }
}

/// Size-issue probability for one article and direction from an image model.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VisualCue {
    pub article_id: String,
    pub direction: Direction,
    pub size_issue_probability: f64,
}

impl VisualCue {
    pub fn new(article_id: impl Into<String>, direction: Direction, probability: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&probability) {
            return Err(Error::InvalidParameter {
                name: "size_issue_probability",
                value: probability,
            });
        }
        Ok(VisualCue {
            article_id: article_id.into(),
            direction,
            size_issue_probability: probability,
        })
    }
}

/// certain → `(α_max, 1)`, potential → `(⌈1 + w(α_max - 1)⌉, 1)`,
/// good fit → `(1, β_max)`. `None` without verdicts.
pub fn prior_from_feedback(
    feedback: &ExpertFeedback,
    bounds: &PriorBounds,
    policy: &PriorPolicy,
) -> Option<PriorParams> {
    let alpha_max = bounds.alpha_max as f64;
    let (alpha, beta) = match feedback.aggregate()? {
        Verdict::CertainSizeIssue => (alpha_max, 1.0),
        Verdict::PotentialSizeIssue => {
            let w = policy.potential_weight.clamp(0.0, 1.0);
            (math::ceil(1.0 + w * (alpha_max - 1.0)), 1.0)
        }
        Verdict::GoodFit => (1.0, bounds.beta_max as f64),
    };
    Some(PriorParams {
        alpha,
        beta,
        provenance: PriorProvenance::HumanFeedback,
    })
}

/// p ≥ ½ → `(1 + round((2p-1)(α_max-1)), 1)`, else `(1, 1 + round((1-2p)(β_max-1)))`.
pub fn prior_from_visual_cue(cue: &VisualCue, bounds: &PriorBounds) -> PriorParams {
    let p = cue.size_issue_probability.clamp(0.0, 1.0);
    let (alpha, beta) = if p >= 0.5 {
        (1.0 + math::round((2.0 * p - 1.0) * (bounds.alpha_max as f64 - 1.0)), 1.0)
    } else {
        (1.0, 1.0 + math::round((1.0 - 2.0 * p) * (bounds.beta_max as f64 - 1.0)))
    };
    PriorParams {
        alpha,
        beta,
        provenance: PriorProvenance::VisualCue,
    }
}

/// Human feedback wins over a visual cue, which wins over the default prior.
/// The default prior is clamped into the bounds.
pub fn select_prior(
    feedback: Option<&ExpertFeedback>,
    cue: Option<&VisualCue>,
    bounds: &PriorBounds,
    stats: &CategoryStats,
    policy: &PriorPolicy,
) -> PriorParams {
    feedback
        .and_then(|f| prior_from_feedback(f, bounds, policy))
        .or_else(|| cue.map(|c| prior_from_visual_cue(c, bounds)))
        .unwrap_or_else(|| bounds.clamp(default_prior(stats, policy)))
}

/// Which expert sources a model variant draws its priors from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PriorSources {
    pub feedback: bool,
    pub visual_cues: bool,
}

impl PriorSources {
    pub fn for_variant(variant: ModelVariant) -> Self {
        PriorSources {
            feedback: variant.is_bayesian(),
            visual_cues: variant.uses_visual_cues(),
        }
    }
}

/// Per-article, per-direction priors with a per-direction fallback.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PriorTable {
    entries: BTreeMap<String, PerDirection<Option<PriorParams>>>,
    fallback: PerDirection<Option<PriorParams>>,
}

impl PriorTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// A table that hands out the same prior for everything.
    pub fn constant(prior: PriorParams) -> Self {
        PriorTable {
            entries: BTreeMap::new(),
            fallback: PerDirection::splat(Some(prior)),
        }
    }

    pub fn insert(&mut self, article_id: impl Into<String>, direction: Direction, prior: PriorParams) {
        *self.entries.entry(article_id.into()).or_default().get_mut(direction) = Some(prior);
    }

    pub fn set_fallback(&mut self, direction: Direction, prior: PriorParams) {
        *self.fallback.get_mut(direction) = Some(prior);
    }

    pub fn fallback(&self, direction: Direction) -> Option<PriorParams> {
        *self.fallback.get(direction)
    }

    /// Explicit entry only.
    pub fn entry(&self, article_id: &str, direction: Direction) -> Option<&PriorParams> {
        self.entries.get(article_id)?.get(direction).as_ref()
    }

    /// Explicit entry, then the direction fallback, then the default prior
    /// of `stats`.
    pub fn lookup(&self, article_id: &str, direction: Direction, stats: &CategoryStats) -> PriorParams {
        self.entry(article_id, direction)
            .copied()
            .or(self.fallback(direction))
            .unwrap_or_else(|| default_prior(stats, &PriorPolicy::default()))
    }

    /// Number of explicit (article, direction) entries.
    pub fn len(&self) -> usize {
        self.entries
            .values()
            .map(|p| Direction::ALL.iter().filter(|&&d| p.get(d).is_some()).count())
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Builds the table for one category: every article with feedback or a
    /// cue gets an explicit entry per `select_prior`; the fallback per
    /// direction is the bounded default prior.
    pub fn build(
        sources: PriorSources,
        feedback: &[ExpertFeedback],
        cues: &[VisualCue],
        stats: &PerDirection<CategoryStats>,
        bounds: &PerDirection<PriorBounds>,
        policy: &PriorPolicy,
    ) -> Self {
        let mut table = PriorTable::new();
        for direction in Direction::ALL {
            let (stats, bounds) = (stats.get(direction), bounds.get(direction));
            table.set_fallback(direction, bounds.clamp(default_prior(stats, policy)));

            let mut by_article: BTreeMap<&str, (Option<&ExpertFeedback>, Option<&VisualCue>)> =
                BTreeMap::new();
            if sources.feedback {
                for f in feedback.iter().filter(|f| f.direction == direction) {
                    by_article.entry(f.article_id.as_str()).or_default().0 = Some(f);
                }
            }
            if sources.visual_cues {
                for c in cues.iter().filter(|c| c.direction == direction) {
                    by_article.entry(c.article_id.as_str()).or_default().1 = Some(c);
                }
            }
            for (id, (f, c)) in by_article {
                table.insert(id, direction, select_prior(f, c, bounds, stats, policy));
            }
        }
        table
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn example_bounds() -> PriorBounds {
        solve_prior_bounds(RateInterval::new(0.08, 0.3).unwrap(), 15.0).unwrap()
    }

    fn stats(pi: f64) -> CategoryStats {
        CategoryStats::from_moments("c", pi, 0.05).unwrap()
    }

    fn fb(verdicts: Vec<Verdict>) -> ExpertFeedback {
        ExpertFeedback {
            article_id: "a".into(),
            direction: Direction::TooBig,
            verdicts,
        }
    }

    #[test]
    fn p0_examples() {
        for pi in [0.01, 0.3, 0.77] {
            assert!(prior_score_p0(pi, 1.0, 1.0).unwrap().abs() < 1e-15);
        }
        let v = prior_score_p0(0.08, 8.0, 1.0).unwrap();
        assert!((v - 15.600_658_968_477_952).abs() < 1e-12);
        let v = prior_score_p0(0.08, 1.0, 3.0).unwrap();
        assert!((v + 0.931_849_070_790_007_6).abs() < 1e-12);
        assert!(prior_score_p0(0.0, 2.0, 1.0).is_err());
    }

    #[test]
    fn reproduces_published_bounds() {
        let b = example_bounds();
        assert_eq!((b.alpha_max, b.beta_max), (8, 3));
        assert_eq!(b.diagnostics.pi_star_alpha, 0.08);
        assert!((b.diagnostics.delta_alpha - 15.600_658_968_477_952).abs() < 1e-12);
        assert!((b.diagnostics.delta_beta + 0.931_849_070_790_007_6).abs() < 1e-12);
    }

    #[test]
    fn alpha_objective_neighbourhood() {
        let iv = RateInterval::new(0.08, 0.3).unwrap();
        let obj = |a: f64| (max_prior_score_alpha(&iv, a).unwrap().1 - 15.0).abs();
        assert!((obj(7.0) - 1.791_538_283_205_780_7).abs() < 1e-12);
        assert!((obj(8.0) - 0.600_658_968_477_952_2).abs() < 1e-12);
        assert!((obj(9.0) - 3.008_604_577_129_824).abs() < 1e-12);
    }

    #[test]
    fn tiny_theta_leaves_degenerate_alpha() {
        let b = solve_prior_bounds(RateInterval::new(0.08, 0.3).unwrap(), 1e-6).unwrap();
        assert_eq!(b.alpha_max, 1);
    }

    #[test]
    fn bound_errors() {
        assert!(matches!(
            solve_prior_bounds(RateInterval::new(0.0, 0.3).unwrap(), 15.0),
            Err(Error::Boundary { .. })
        ));
        assert!(matches!(
            solve_prior_bounds(RateInterval::new(0.2, 1.0).unwrap(), 15.0),
            Err(Error::Boundary { .. })
        ));
        assert!(solve_prior_bounds(RateInterval::new(0.1, 0.2).unwrap(), 0.0).is_err());
        // θ far beyond what α ≤ 1000 can reach
        assert!(matches!(
            solve_prior_bounds(RateInterval::new(0.9, 0.95).unwrap(), 1e6),
            Err(Error::SearchRangeExceeded { parameter: "alpha_max", .. })
        ));
    }

    #[test]
    fn inner_extrema_match_grid_search() {
        let iv = RateInterval::new(0.08, 0.3).unwrap();
        let grid: Vec<f64> = (0..1000)
            .map(|i| iv.low + (iv.high - iv.low) * i as f64 / 999.0)
            .collect();
        let cell = (iv.high - iv.low) / 999.0;
        for alpha in [1.5, 2.0, 8.0, 40.0] {
            let (arg, best) = grid
                .iter()
                .map(|&p| (p, prior_score_p0(p, alpha, 1.0).unwrap()))
                .fold((0.0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
            let (pi_star, value) = max_prior_score_alpha(&iv, alpha).unwrap();
            assert!((arg - pi_star).abs() <= cell);
            assert!((best - value).abs() < 1e-12);
        }
        for beta in [1.5, 3.0, 12.0] {
            let (arg, best) = grid
                .iter()
                .map(|&p| (p, prior_score_p0(p, 1.0, beta).unwrap()))
                .fold((0.0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
            let (pi_star, value) = min_prior_score_beta(&iv, beta).unwrap();
            assert!((arg - pi_star).abs() <= cell);
            assert!((best - value).abs() < 1e-12);
        }
    }

    #[test]
    fn default_prior_examples() {
        let p = default_prior(&stats(0.5), &PriorPolicy::default());
        assert_eq!((p.alpha, p.beta), (2.0, 2.0));
        let p = default_prior(&stats(0.1), &PriorPolicy::default());
        assert!((p.alpha - 1.2).abs() < 1e-15 && (p.beta - 2.8).abs() < 1e-15);
        let mode = (p.alpha - 1.0) / (p.alpha + p.beta - 2.0);
        assert!((mode - 0.1).abs() < 1e-15);
        let b = example_bounds();
        for i in 0..=100 {
            assert!(b.admits(&default_prior(&stats(i as f64 / 100.0), &PriorPolicy::default())));
        }
    }

    #[test]
    fn feedback_examples() {
        use Verdict::*;
        let b = example_bounds();
        let pol = PriorPolicy::default();
        let p = prior_from_feedback(&fb(vec![CertainSizeIssue, CertainSizeIssue, PotentialSizeIssue]), &b, &pol)
            .unwrap();
        assert_eq!((p.alpha, p.beta), (8.0, 1.0));
        assert_eq!(p.provenance, PriorProvenance::HumanFeedback);
        let p = prior_from_feedback(&fb(vec![GoodFit]), &b, &pol).unwrap();
        assert_eq!((p.alpha, p.beta), (1.0, 3.0));
        let p = prior_from_feedback(&fb(vec![CertainSizeIssue, GoodFit]), &b, &pol).unwrap();
        assert_eq!((p.alpha, p.beta), (8.0, 1.0));
        let p = prior_from_feedback(&fb(vec![PotentialSizeIssue]), &b, &pol).unwrap();
        assert_eq!((p.alpha, p.beta), (5.0, 1.0));
        let p = prior_from_feedback(&fb(vec![PotentialSizeIssue, GoodFit]), &b, &pol).unwrap();
        assert_eq!((p.alpha, p.beta), (5.0, 1.0));
        assert!(prior_from_feedback(&fb(vec![]), &b, &pol).is_none());
    }

    #[test]
    fn verdict_parsing() {
        assert_eq!("good fit".parse::<Verdict>().unwrap(), Verdict::GoodFit);
        assert_eq!("Certain Size Issue".parse::<Verdict>().unwrap(), Verdict::CertainSizeIssue);
        assert_eq!("potential_size_issue".parse::<Verdict>().unwrap(), Verdict::PotentialSizeIssue);
        assert!("fits ok".parse::<Verdict>().is_err());
    }

    #[test]
    fn cue_examples() {
        let b = example_bounds();
        let cue = |p| VisualCue::new("a", Direction::TooSmall, p).unwrap();
        let p = prior_from_visual_cue(&cue(1.0), &b);
        assert_eq!((p.alpha, p.beta), (8.0, 1.0));
        let p = prior_from_visual_cue(&cue(0.5), &b);
        assert_eq!((p.alpha, p.beta), (1.0, 1.0));
        let p = prior_from_visual_cue(&cue(0.0), &b);
        assert_eq!((p.alpha, p.beta), (1.0, 3.0));
        assert!(VisualCue::new("a", Direction::TooBig, 1.2).is_err());
    }

    #[test]
    fn precedence() {
        let b = example_bounds();
        let s = stats(0.1);
        let pol = PriorPolicy::default();
        let f = fb(vec![Verdict::GoodFit]);
        let c = VisualCue::new("a", Direction::TooBig, 1.0).unwrap();
        assert_eq!(select_prior(Some(&f), Some(&c), &b, &s, &pol).provenance, PriorProvenance::HumanFeedback);
        assert_eq!(select_prior(None, Some(&c), &b, &s, &pol).provenance, PriorProvenance::VisualCue);
        let d = select_prior(None, None, &b, &s, &pol);
        assert_eq!(d, default_prior(&s, &pol));
    }

    #[test]
    fn default_prior_is_clamped_to_tight_bounds() {
        let b = solve_prior_bounds(RateInterval::new(0.08, 0.3).unwrap(), 1e-6).unwrap();
        let p = select_prior(None, None, &b, &stats(0.4), &PriorPolicy::default());
        assert!(b.admits(&p));
        assert_eq!(p.alpha, 1.0);
    }

    #[test]
    fn table_lookup_and_build() {
        let b = example_bounds();
        let s = stats(0.1);
        let f = vec![fb(vec![Verdict::CertainSizeIssue])];
        let c = vec![
            VisualCue::new("a", Direction::TooBig, 0.0).unwrap(),
            VisualCue::new("z", Direction::TooBig, 1.0).unwrap(),
        ];
        let table = PriorTable::build(
            PriorSources { feedback: true, visual_cues: true },
            &f,
            &c,
            &PerDirection::splat(s.clone()),
            &PerDirection::splat(b),
            &PriorPolicy::default(),
        );
        assert_eq!(table.lookup("a", Direction::TooBig, &s).provenance, PriorProvenance::HumanFeedback);
        assert_eq!(table.lookup("z", Direction::TooBig, &s).provenance, PriorProvenance::VisualCue);
        assert_eq!(table.lookup("z", Direction::TooSmall, &s).provenance, PriorProvenance::Default);
        assert!(table.entry("y", Direction::TooBig).is_none());

        let no_cues = PriorTable::build(
            PriorSources { feedback: true, visual_cues: false },
            &f,
            &c,
            &PerDirection::splat(s.clone()),
            &PerDirection::splat(b),
            &PriorPolicy::default(),
        );
        assert_eq!(no_cues.len(), 1);
    }
}
