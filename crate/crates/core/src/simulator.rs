//! Seeded synthetic categories with known return rates.
//!
//! Each article gets a true rate per direction from a two-component Beta
//! mixture (normal articles and articles with a planted issue). Weekly
//! orders are Poisson; too-big returns are Binomial(orders, r_big) and
//! too-small returns Binomial(orders - big, r_small / (1 - r_big)), so both
//! directions keep their marginal rates. Snapshots are cumulative and
//! weekly.
//!
//! An article has an issue in a direction when it was drawn from the issue
//! component *and* its true rate reaches `π_true + σ_true` of the
//! generating mixture.
//!
//! All randomness comes from ChaCha8 streams derived from one seed, one
//! stream per article, so output is identical across runs and platforms.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Binomial, Distribution, LogNormal, Normal, Poisson};

use crate::evaluation::{FirstFlag, SetMetrics, TreatedArticle};
use crate::flagging::{Direction, FlagDecision, PerDirection};
use crate::math;
use crate::priors::{ExpertFeedback, Verdict, VisualCue};
use crate::series::{ArticleSnapshot, Covariates, Snapshot, SnapshotSeries, Timestamp};
use crate::{Error, Result};

/// 2024-01-01T00:00:00Z
pub const DEFAULT_START: Timestamp = Timestamp(1_704_067_200);

/// Streams at or above this offset feed the feedback and cue noise.
const EXPERT_STREAM: u64 = 1 << 40;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BetaShape {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaShape {
    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    pub fn variance(&self) -> f64 {
        let s = self.alpha + self.beta;
        self.alpha * self.beta / (s * s * (s + 1.0))
    }

    fn valid(&self) -> bool {
        self.alpha > 0.0 && self.beta > 0.0 && self.alpha.is_finite() && self.beta.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CovariateModel {
    /// Log-normal price: mean and deviation of ln(price).
    pub log_price_mean: f64,
    pub log_price_sd: f64,
    pub discount: BetaShape,
    /// Rate of returns for reasons other than size.
    pub other_return: BetaShape,
    pub unknown_return: BetaShape,
}

impl Default for CovariateModel {
    fn default() -> Self {
        CovariateModel {
            log_price_mean: 3.5,
            log_price_sd: 0.6,
            discount: BetaShape { alpha: 2.0, beta: 8.0 },
            other_return: BetaShape { alpha: 10.0, beta: 40.0 },
            unknown_return: BetaShape { alpha: 2.0, beta: 60.0 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FeedbackModel {
    /// Share of articles that received a try-on.
    pub coverage: f64,
    /// Verdicts per reviewed article and direction.
    pub reviewers: usize,
    /// Probability that a single verdict matches the truth.
    pub accuracy: f64,
}

impl Default for FeedbackModel {
    fn default() -> Self {
        FeedbackModel { coverage: 0.2, reviewers: 1, accuracy: 0.9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CueModel {
    /// Share of articles with a cue.
    pub coverage: f64,
    /// Deviation of the Gaussian noise added to the percentile rank.
    pub noise_sd: f64,
}

impl Default for CueModel {
    fn default() -> Self {
        CueModel { coverage: 1.0, noise_sd: 0.1 }
    }
}

/// Multiplies the rate of a random subset of articles by
/// `1 - relative_reduction` after the flag week.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Treatment {
    pub treated_fraction: f64,
    /// Week (1-based snapshot) at whose end the flag is raised.
    pub flag_week: usize,
    pub relative_reduction: f64,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SimConfig {
    pub seed: u64,
    pub category_id: String,
    pub article_count: usize,
    /// Probability that an article is drawn from the issue component, per direction.
    pub issue_fraction: f64,
    pub base_rate: BetaShape,
    pub issue_rate: BetaShape,
    /// Poisson mean of weekly orders.
    pub weekly_order_rate: f64,
    pub weeks: usize,
    pub start: Timestamp,
    pub covariates: CovariateModel,
    pub feedback: Option<FeedbackModel>,
    pub cues: Option<CueModel>,
    pub treatment: Option<Treatment>,
    /// Added to every true rate per elapsed week.
    pub weekly_trend: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 0,
            category_id: String::from("sim"),
            article_count: 1000,
            issue_fraction: 0.05,
            base_rate: BetaShape { alpha: 20.0, beta: 180.0 },
            issue_rate: BetaShape { alpha: 30.0, beta: 70.0 },
            weekly_order_rate: 20.0,
            weeks: 8,
            start: DEFAULT_START,
            covariates: CovariateModel::default(),
            feedback: None,
            cues: None,
            treatment: None,
            weekly_trend: 0.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let prob = |name, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidParameter { name, value: v })
            }
        };
        prob("issue_fraction", self.issue_fraction)?;
        for (name, shape) in [
            ("base_rate", self.base_rate),
            ("issue_rate", self.issue_rate),
            ("discount", self.covariates.discount),
            ("other_return", self.covariates.other_return),
            ("unknown_return", self.covariates.unknown_return),
        ] {
            if !shape.valid() {
                return Err(Error::InvalidParameter { name, value: shape.alpha.min(shape.beta) });
            }
        }
        if !(self.weekly_order_rate > 0.0 && self.weekly_order_rate.is_finite()) {
            return Err(Error::InvalidParameter { name: "weekly_order_rate", value: self.weekly_order_rate });
        }
        if self.weeks == 0 {
            return Err(Error::InvalidParameter { name: "weeks", value: 0.0 });
        }
        if self.covariates.log_price_sd.is_nan() || self.covariates.log_price_sd < 0.0 {
            return Err(Error::InvalidParameter { name: "log_price_sd", value: self.covariates.log_price_sd });
        }
        if let Some(f) = &self.feedback {
            prob("feedback.coverage", f.coverage)?;
            prob("feedback.accuracy", f.accuracy)?;
            if f.reviewers == 0 {
                return Err(Error::InvalidParameter { name: "feedback.reviewers", value: 0.0 });
            }
        }
        if let Some(c) = &self.cues {
            prob("cues.coverage", c.coverage)?;
            if c.noise_sd.is_nan() || c.noise_sd < 0.0 {
                return Err(Error::InvalidParameter { name: "cues.noise_sd", value: c.noise_sd });
            }
        }
        if let Some(t) = &self.treatment {
            prob("treatment.treated_fraction", t.treated_fraction)?;
            prob("treatment.relative_reduction", t.relative_reduction)?;
            if t.flag_week == 0 || t.flag_week >= self.weeks {
                return Err(Error::InvalidParameter { name: "treatment.flag_week", value: t.flag_week as f64 });
            }
        }
        if !self.weekly_trend.is_finite() {
            return Err(Error::InvalidParameter { name: "weekly_trend", value: self.weekly_trend });
        }
        Ok(())
    }

    /// Mean and standard deviation of the rate mixture.
    pub fn mixture_moments(&self) -> (f64, f64) {
        let f = self.issue_fraction;
        let (b, i) = (self.base_rate, self.issue_rate);
        let mean = (1.0 - f) * b.mean() + f * i.mean();
        let second = (1.0 - f) * (b.variance() + b.mean() * b.mean())
            + f * (i.variance() + i.mean() * i.mean());
        (mean, math::sqrt((second - mean * mean).max(0.0)))
    }

    pub fn article_id(&self, index: usize) -> String {
        format!("{}-{:05}", self.category_id, index)
    }

    pub fn snapshot_time(&self, week: usize) -> Timestamp {
        self.start.plus_weeks(week as i64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ArticleTruth {
    pub srr_true: PerDirection<f64>,
    pub has_issue: PerDirection<bool>,
    pub treated: bool,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GroundTruth {
    pub category_id: String,
    pub pi_true: f64,
    pub sigma_true: f64,
    pub articles: BTreeMap<String, ArticleTruth>,
}

impl GroundTruth {
    pub fn issue_count(&self) -> usize {
        self.articles
            .values()
            .map(|a| a.has_issue.too_big as usize + a.has_issue.too_small as usize)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub series: SnapshotSeries,
    pub truth: GroundTruth,
    pub feedback: Vec<ExpertFeedback>,
    pub cues: Vec<VisualCue>,
    pub treated: Vec<TreatedArticle>,
}

struct Drawn {
    rates: PerDirection<f64>,
    from_issue: PerDirection<bool>,
    treated: bool,
    covariates: Covariates,
    /// Cumulative `(orders, big, small)` after each week.
    weekly: Vec<(u64, u64, u64)>,
}

fn draw_article(config: &SimConfig, index: usize) -> Drawn {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64);
    let base = Beta::new(config.base_rate.alpha, config.base_rate.beta).expect("validated");
    let issue = Beta::new(config.issue_rate.alpha, config.issue_rate.beta).expect("validated");

    let draw_rate = |rng: &mut ChaCha8Rng| {
        let from_issue = rng.random::<f64>() < config.issue_fraction;
        let r: f64 = if from_issue { issue.sample(rng) } else { base.sample(rng) };
        (r, from_issue)
    };
    let (big, big_issue) = draw_rate(&mut rng);
    let (small, small_issue) = draw_rate(&mut rng);

    let cm = &config.covariates;
    let beta = |s: BetaShape| Beta::new(s.alpha, s.beta).expect("validated");
    let price: f64 = LogNormal::new(cm.log_price_mean, cm.log_price_sd).expect("validated").sample(&mut rng);
    let discount: f64 = beta(cm.discount).sample(&mut rng);
    let other: f64 = beta(cm.other_return).sample(&mut rng);
    let unknown: f64 = beta(cm.unknown_return).sample(&mut rng);
    let covariates = Covariates {
        general_return_rate: (big + small + other).min(1.0),
        price: math::round(price * 100.0) / 100.0,
        discount_rate: discount,
        unknown_return_rate: unknown,
    };

    let treated = config.treatment.is_some_and(|t| rng.random::<f64>() < t.treated_fraction);
    let orders_dist = Poisson::new(config.weekly_order_rate).expect("validated");
    let mut cum = (0u64, 0u64, 0u64);
    let mut weekly = Vec::with_capacity(config.weeks);
    for week in 1..=config.weeks {
        let shift = config.weekly_trend * (week - 1) as f64;
        let rate = |r: f64, d: Direction| {
            let mut r = (r + shift).clamp(0.0, 1.0);
            if let Some(t) = config.treatment.filter(|t| treated && t.direction == d && week > t.flag_week) {
                r *= 1.0 - t.relative_reduction;
            }
            r
        };
        let r_big = rate(big, Direction::TooBig);
        let r_small = rate(small, Direction::TooSmall);
        let n = orders_dist.sample(&mut rng) as u64;
        let k_big = Binomial::new(n, r_big).expect("rate in [0, 1]").sample(&mut rng);
        let p_small = if r_big < 1.0 { (r_small / (1.0 - r_big)).min(1.0) } else { 0.0 };
        let k_small = Binomial::new(n - k_big, p_small).expect("rate in [0, 1]").sample(&mut rng);
        cum = (cum.0 + n, cum.1 + k_big, cum.2 + k_small);
        weekly.push(cum);
    }
    Drawn {
        rates: PerDirection::new(big, small),
        from_issue: PerDirection::new(big_issue, small_issue),
        treated,
        covariates,
        weekly,
    }
}

/// Position of each value in ascending order, scaled to [0, 1]; equal
/// values share the mean of their positions.
fn percentile_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    if n < 2 {
        return alloc::vec![0.5; n];
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = alloc::vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 / (n - 1) as f64;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        i = j + 1;
    }
    ranks
}

fn wrong_verdict(correct: Verdict, rng: &mut ChaCha8Rng) -> Verdict {
    let others: [Verdict; 2] = match correct {
        Verdict::GoodFit => [Verdict::PotentialSizeIssue, Verdict::CertainSizeIssue],
        Verdict::PotentialSizeIssue => [Verdict::GoodFit, Verdict::CertainSizeIssue],
        Verdict::CertainSizeIssue => [Verdict::GoodFit, Verdict::PotentialSizeIssue],
    };
    others[rng.random_range(0..2)]
}

/// Draws one synthetic category.
pub fn generate(config: &SimConfig) -> Result<SimOutput> {
    config.validate()?;
    let drawn: Vec<Drawn> = (0..config.article_count).map(|i| draw_article(config, i)).collect();
    let ids: Vec<String> = (0..config.article_count).map(|i| config.article_id(i)).collect();
    let (pi_true, sigma_true) = config.mixture_moments();
    let bound = pi_true + sigma_true;

    let snapshots = (0..config.weeks)
        .map(|w| Snapshot {
            timestamp: config.snapshot_time(w + 1),
            articles: ids
                .iter()
                .zip(&drawn)
                .map(|(id, d)| {
                    let (orders, big, small) = d.weekly[w];
                    (
                        id.clone(),
                        ArticleSnapshot {
                            orders,
                            returns_too_big: big,
                            returns_too_small: small,
                            covariates: d.covariates,
                        },
                    )
                })
                .collect(),
        })
        .collect();
    let series = SnapshotSeries::new(config.category_id.clone(), snapshots)?;

    let articles: BTreeMap<String, ArticleTruth> = ids
        .iter()
        .zip(&drawn)
        .map(|(id, d)| {
            let has_issue = PerDirection::new(
                d.from_issue.too_big && d.rates.too_big >= bound,
                d.from_issue.too_small && d.rates.too_small >= bound,
            );
            (id.clone(), ArticleTruth { srr_true: d.rates, has_issue, treated: d.treated })
        })
        .collect();

    let mut feedback = Vec::new();
    let mut cues = Vec::new();
    if config.feedback.is_some() || config.cues.is_some() {
        let ranks = PerDirection::new(
            percentile_ranks(&drawn.iter().map(|d| d.rates.too_big).collect::<Vec<_>>()),
            percentile_ranks(&drawn.iter().map(|d| d.rates.too_small).collect::<Vec<_>>()),
        );
        for (i, id) in ids.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(EXPERT_STREAM + i as u64);
            let truth = &articles[id];
            if let Some(fm) = &config.feedback {
                if rng.random::<f64>() < fm.coverage {
                    for d in Direction::ALL {
                        let correct = if *truth.has_issue.get(d) {
                            Verdict::CertainSizeIssue
                        } else {
                            Verdict::GoodFit
                        };
                        let verdicts = (0..fm.reviewers)
                            .map(|_| {
                                if rng.random::<f64>() < fm.accuracy {
                                    correct
                                } else {
                                    wrong_verdict(correct, &mut rng)
                                }
                            })
                            .collect();
                        feedback.push(ExpertFeedback { article_id: id.clone(), direction: d, verdicts });
                    }
                }
            }
            if let Some(cm) = &config.cues {
                if rng.random::<f64>() < cm.coverage {
                    let noise = Normal::new(0.0, cm.noise_sd).expect("validated");
                    for d in Direction::ALL {
                        let p = (ranks.get(d)[i] + noise.sample(&mut rng)).clamp(0.0, 1.0);
                        cues.push(VisualCue::new(id.clone(), d, p)?);
                    }
                }
            }
        }
    }

    let treated = match &config.treatment {
        Some(t) => ids
            .iter()
            .zip(&drawn)
            .filter(|(_, d)| d.treated)
            .map(|(id, _)| TreatedArticle {
                article_id: id.clone(),
                direction: t.direction,
                t_flag: config.snapshot_time(t.flag_week),
            })
            .collect(),
        None => Vec::new(),
    };

    Ok(SimOutput {
        series,
        truth: GroundTruth {
            category_id: config.category_id.clone(),
            pi_true,
            sigma_true,
            articles,
        },
        feedback,
        cues,
        treated,
    })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TruthScore {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub true_negatives: usize,
    /// Absent when nothing was flagged.
    pub precision: Option<f64>,
    /// Absent when the truth holds no issues.
    pub recall: Option<f64>,
    /// n(a) and ret(a) over true-positive first flags.
    pub time_to_flag: Option<SetMetrics>,
}

/// Precision and recall of per-direction decisions against the truth, plus
/// time-to-flag over the true positives found in `first_flags`.
pub fn score_against_truth(
    decisions: &[FlagDecision],
    first_flags: &[FirstFlag],
    truth: &GroundTruth,
) -> Result<TruthScore> {
    let mut seen: BTreeMap<&str, ()> = BTreeMap::new();
    let mut missing = Vec::new();
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for d in decisions {
        let Some(t) = truth.articles.get(&d.article_id) else {
            missing.push(d.article_id.clone());
            continue;
        };
        seen.insert(&d.article_id, ());
        match (d.flagged(), *t.has_issue.get(d.direction)) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    missing.extend(truth.articles.keys().filter(|k| !seen.contains_key(k.as_str())).cloned());
    if !missing.is_empty() {
        missing.sort();
        missing.dedup();
        return Err(Error::MismatchedArticles { missing });
    }
    let ratio = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
    let true_positive_flags = first_flags.iter().filter(|f| {
        truth.articles.get(&f.article_id).is_some_and(|t| *t.has_issue.get(f.direction))
    });
    Ok(TruthScore {
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        true_negatives: tn,
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
        time_to_flag: SetMetrics::of(true_positive_flags),
    })
}
