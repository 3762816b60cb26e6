//! Impact and cold-start evaluation.
//!
//! The impact of a flag is estimated by nearest-neighbour
//! difference-in-differences: for a treated article `a` flagged at
//! `t_flag`, with `C*` its `m` closest never-flagged neighbours,
//!
//! ```text
//! γ₀ = srr(a | pre) - srr(C* | pre)
//! γ₁ = srr(a | post) - srr(C* | post)
//! effect(a) = (γ₀ - γ₁) / srr(a | pre)
//! ```
//!
//! where `srr(C* | ·)` is the plain mean of the neighbours' rates. A
//! positive effect is a reduction.
//!
//! Cold-start cost is the number of orders n(a) and returns ret(a) an
//! article had accumulated when its flag was first raised.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use crate::flagging::{Direction, FlagConfig, PerDirection};
use crate::math;
use crate::priors::PriorTable;
use crate::series::{Covariates, SnapshotSeries, Timestamp};
use crate::stats::CategoryStats;
use crate::threshold::ScoreTrace;
use crate::{Error, Result};

pub const DEFAULT_NEIGHBORS: usize = 10;
pub const DEFAULT_WINDOW_WEEKS: i64 = 6;
/// Share of the baseline's flags the shared set should cover.
pub const SHARED_COVERAGE_TARGET: f64 = 0.95;

/// Column-wise z-scores. Columns without spread map to 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Standardizer {
    pub mean: [f64; 4],
    pub std: [f64; 4],
}

impl Standardizer {
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a Covariates>) -> Self {
        let mut count = 0usize;
        let mut mean = [0.0; 4];
        let mut m2 = [0.0; 4];
        for row in rows {
            count += 1;
            for (j, x) in row.as_array().into_iter().enumerate() {
                let delta = x - mean[j];
                mean[j] += delta / count as f64;
                m2[j] += delta * (x - mean[j]);
            }
        }
        let std = if count == 0 {
            [0.0; 4]
        } else {
            m2.map(|s| math::sqrt(s / count as f64))
        };
        Standardizer { mean, std }
    }

    pub fn transform(&self, c: &Covariates) -> [f64; 4] {
        let x = c.as_array();
        core::array::from_fn(|j| {
            if self.std[j] > 0.0 {
                (x[j] - self.mean[j]) / self.std[j]
            } else {
                0.0
            }
        })
    }
}

fn euclidean(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    math::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Neighbors {
    /// Indices into the pool, nearest first.
    pub indices: Vec<usize>,
    pub distances: Vec<f64>,
    /// The pool held fewer than `m` candidates.
    pub truncated: bool,
}

/// The `m` pool entries closest to `target` in Euclidean distance over
/// covariates standardized on pool and target together. Equal distances
/// are ordered by id.
pub fn nearest_neighbors<S: AsRef<str>>(
    target: &Covariates,
    pool: &[(S, Covariates)],
    m: usize,
) -> Neighbors {
    let scaler = Standardizer::fit(pool.iter().map(|(_, c)| c).chain(core::iter::once(target)));
    let t = scaler.transform(target);
    let mut ranked: Vec<(f64, usize)> = pool
        .iter()
        .enumerate()
        .map(|(i, (_, c))| (euclidean(&t, &scaler.transform(c)), i))
        .collect();
    ranked.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then_with(|| pool[a.1].0.as_ref().cmp(pool[b.1].0.as_ref()))
    });
    ranked.truncate(m);
    Neighbors {
        truncated: pool.len() < m,
        indices: ranked.iter().map(|r| r.1).collect(),
        distances: ranked.iter().map(|r| r.0).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TreatedArticle {
    pub article_id: String,
    pub direction: Direction,
    pub t_flag: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DidConfig {
    /// Neighbour count m.
    pub neighbors: usize,
    pub pre_weeks: i64,
    pub post_weeks: i64,
}

impl Default for DidConfig {
    fn default() -> Self {
        DidConfig {
            neighbors: DEFAULT_NEIGHBORS,
            pre_weeks: DEFAULT_WINDOW_WEEKS,
            post_weeks: DEFAULT_WINDOW_WEEKS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ExclusionReason {
    /// No orders in the pre-flag window.
    NoOrdersPre,
    /// No orders in the post-flag window.
    NoOrdersPost,
    /// srr before the flag is zero.
    DivisionByZero,
    /// No control article has orders in both windows.
    NoControls,
}

impl ExclusionReason {
    pub fn as_str(self) -> &'static str {
        match self {
            ExclusionReason::NoOrdersPre => "no_orders_pre",
            ExclusionReason::NoOrdersPost => "no_orders_post",
            ExclusionReason::DivisionByZero => "division_by_zero",
            ExclusionReason::NoControls => "no_controls",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ArticleEffect {
    pub article_id: String,
    pub direction: Direction,
    pub t_flag: Timestamp,
    pub srr_pre: f64,
    pub srr_post: f64,
    pub control_srr_pre: f64,
    pub control_srr_post: f64,
    pub gamma_pre: f64,
    pub gamma_post: f64,
    pub effect: f64,
    pub neighbors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Exclusion {
    pub article_id: String,
    pub direction: Direction,
    pub reason: ExclusionReason,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DidReport {
    /// Mean relative reduction over included treated articles.
    pub srr_effect: f64,
    pub per_article: Vec<ArticleEffect>,
    pub neighbors: usize,
    pub treated_count: usize,
    pub excluded: Vec<Exclusion>,
    /// Treated articles matched against fewer than `m` controls, with the
    /// number actually used.
    pub truncated_matches: Vec<(String, usize)>,
}

/// Counts accrued in `(t_flag - pre, t_flag]` and `(t_flag, t_flag + post]`.
fn window_rates(
    series: &SnapshotSeries,
    id: &str,
    direction: Direction,
    t_flag: Timestamp,
    config: &DidConfig,
) -> (Option<f64>, Option<f64>) {
    let pre = series.counts_between(id, direction, t_flag.plus_weeks(-config.pre_weeks), t_flag);
    let post = series.counts_between(id, direction, t_flag, t_flag.plus_weeks(config.post_weeks));
    (pre.srr().ok(), post.srr().ok())
}

fn covariates_at(series: &SnapshotSeries, id: &str, t: Timestamp) -> Covariates {
    series
        .index_at_or_before(t)
        .map(|i| series.article_at(i, id).covariates)
        .unwrap_or_default()
}

/// Nearest-neighbour difference-in-differences over `treated`.
///
/// Controls are drawn from `control_pool` (articles never flagged in the
/// category), aligned to each treated article's own `t_flag`; controls
/// without orders in either window are skipped for that article.
pub fn did_effect<S: AsRef<str>>(
    treated: &[TreatedArticle],
    control_pool: &[S],
    series: &SnapshotSeries,
    config: &DidConfig,
) -> Result<DidReport> {
    if treated.is_empty() {
        return Err(Error::EmptyTreatedSet);
    }
    if config.neighbors == 0 {
        return Err(Error::InvalidParameter { name: "neighbors", value: 0.0 });
    }
    let mut per_article = Vec::new();
    let mut excluded = Vec::new();
    let mut truncated_matches = Vec::new();

    for t in treated {
        let exclude = |reason| Exclusion {
            article_id: t.article_id.clone(),
            direction: t.direction,
            reason,
        };
        let (pre, post) = window_rates(series, &t.article_id, t.direction, t.t_flag, config);
        let Some(srr_pre) = pre else {
            excluded.push(exclude(ExclusionReason::NoOrdersPre));
            continue;
        };
        let Some(srr_post) = post else {
            excluded.push(exclude(ExclusionReason::NoOrdersPost));
            continue;
        };
        if srr_pre == 0.0 {
            excluded.push(exclude(ExclusionReason::DivisionByZero));
            continue;
        }

        let candidates: Vec<(&str, Covariates, f64, f64)> = control_pool
            .iter()
            .map(AsRef::as_ref)
            .filter(|c| *c != t.article_id)
            .filter_map(|c| match window_rates(series, c, t.direction, t.t_flag, config) {
                (Some(pre), Some(post)) => Some((c, covariates_at(series, c, t.t_flag), pre, post)),
                _ => None,
            })
            .collect();
        if candidates.is_empty() {
            excluded.push(exclude(ExclusionReason::NoControls));
            continue;
        }
        let pool: Vec<(&str, Covariates)> = candidates.iter().map(|c| (c.0, c.1)).collect();
        let target = covariates_at(series, &t.article_id, t.t_flag);
        let nn = nearest_neighbors(&target, &pool, config.neighbors);
        if nn.truncated {
            truncated_matches.push((t.article_id.clone(), nn.indices.len()));
        }
        let m = nn.indices.len() as f64;
        let control_pre = nn.indices.iter().map(|&i| candidates[i].2).sum::<f64>() / m;
        let control_post = nn.indices.iter().map(|&i| candidates[i].3).sum::<f64>() / m;
        let gamma_pre = srr_pre - control_pre;
        let gamma_post = srr_post - control_post;
        per_article.push(ArticleEffect {
            article_id: t.article_id.clone(),
            direction: t.direction,
            t_flag: t.t_flag,
            srr_pre,
            srr_post,
            control_srr_pre: control_pre,
            control_srr_post: control_post,
            gamma_pre,
            gamma_post,
            effect: (gamma_pre - gamma_post) / srr_pre,
            neighbors: nn.indices.iter().map(|&i| String::from(candidates[i].0)).collect(),
        });
    }

    if per_article.is_empty() {
        return Err(Error::AllExcluded { excluded: excluded.len() });
    }
    let srr_effect = per_article.iter().map(|a| a.effect).sum::<f64>() / per_article.len() as f64;
    Ok(DidReport {
        srr_effect,
        per_article,
        neighbors: config.neighbors,
        treated_count: treated.len(),
        excluded,
        truncated_matches,
    })
}

/// The first snapshot at which an article's flag is raised in one direction.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FirstFlag {
    pub article_id: String,
    pub direction: Direction,
    pub snapshot_index: usize,
    pub timestamp: Timestamp,
    /// n(a): cumulative orders at that snapshot.
    pub orders: u64,
    /// ret(a): cumulative returns in the flagged direction at that snapshot.
    pub returns: u64,
}

/// First flags of every article and direction, running the flagging pass
/// on each snapshot's cumulative counts with fixed category statistics.
pub fn flag_timeline(
    series: &SnapshotSeries,
    stats: &PerDirection<CategoryStats>,
    priors: &PriorTable,
    config: &FlagConfig,
) -> Result<Vec<FirstFlag>> {
    let mut out = Vec::new();
    for direction in Direction::ALL {
        let trace = ScoreTrace::compute(series, direction, stats.get(direction), priors, config)?;
        for (i, id) in trace.article_ids.iter().enumerate() {
            if let Some(t) = trace.first_flag(i, config.theta) {
                let snap = series.article_at(t, id);
                out.push(FirstFlag {
                    article_id: id.clone(),
                    direction,
                    snapshot_index: t,
                    timestamp: series.snapshots()[t].timestamp,
                    orders: snap.orders,
                    returns: snap.counts(direction).returns(),
                });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VariantFlags {
    pub variant: String,
    pub flags: Vec<FirstFlag>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SetMetrics {
    pub count: usize,
    pub median_orders: f64,
    pub median_returns: f64,
    pub mean_orders: f64,
    pub mean_returns: f64,
}

impl SetMetrics {
    pub fn of<'a>(flags: impl IntoIterator<Item = &'a FirstFlag>) -> Option<Self> {
        let mut orders = Vec::new();
        let mut returns = Vec::new();
        for f in flags {
            orders.push(f.orders as f64);
            returns.push(f.returns as f64);
        }
        if orders.is_empty() {
            return None;
        }
        orders.sort_by(f64::total_cmp);
        returns.sort_by(f64::total_cmp);
        let count = orders.len();
        Some(SetMetrics {
            count,
            median_orders: math::median_sorted(&orders)?,
            median_returns: math::median_sorted(&returns)?,
            mean_orders: orders.iter().sum::<f64>() / count as f64,
            mean_returns: returns.iter().sum::<f64>() / count as f64,
        })
    }
}

/// Relative reductions of median n(a) and ret(a) against the baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Reduction {
    pub orders: Option<f64>,
    pub returns: Option<f64>,
}

impl Reduction {
    fn between(baseline: &SetMetrics, variant: &SetMetrics) -> Self {
        let rel = |b: f64, v: f64| (b > 0.0).then(|| (b - v) / b);
        Reduction {
            orders: rel(baseline.median_orders, variant.median_orders),
            returns: rel(baseline.median_returns, variant.median_returns),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ColdStartMetrics {
    pub variant: String,
    /// Over every article the variant flags.
    pub overall: Option<SetMetrics>,
    pub overall_reduction: Option<Reduction>,
    /// Over the articles flagged by both this variant and the baseline.
    pub shared: Option<SetMetrics>,
    /// The baseline restricted to the shared set.
    pub baseline_shared: Option<SetMetrics>,
    pub shared_reduction: Option<Reduction>,
    /// Share of the baseline's flags that the shared set covers.
    pub shared_coverage: f64,
    pub coverage_met: bool,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ColdStartReport {
    pub baseline: String,
    pub baseline_overall: Option<SetMetrics>,
    pub variants: Vec<ColdStartMetrics>,
    pub warnings: Vec<String>,
}

type FlagKey<'a> = (&'a str, Direction);

fn index(flags: &[FirstFlag]) -> BTreeMap<FlagKey<'_>, &FirstFlag> {
    flags.iter().map(|f| ((f.article_id.as_str(), f.direction), f)).collect()
}

/// Compares each variant's time-to-flag with the baseline's over the
/// overall flag sets and over the shared sets.
pub fn cold_start_compare(baseline: &VariantFlags, variants: &[VariantFlags]) -> Result<ColdStartReport> {
    if variants.is_empty() {
        return Err(Error::NotEnoughVariants);
    }
    let base = index(&baseline.flags);
    let baseline_overall = SetMetrics::of(base.values().copied());
    let mut warnings = Vec::new();
    let mut out = Vec::with_capacity(variants.len());
    for v in variants {
        let own = index(&v.flags);
        let shared: BTreeSet<FlagKey<'_>> = own.keys().filter(|k| base.contains_key(*k)).copied().collect();
        let overall = SetMetrics::of(own.values().copied());
        let shared_metrics = SetMetrics::of(shared.iter().map(|k| own[k]));
        let baseline_shared = SetMetrics::of(shared.iter().map(|k| base[k]));
        if shared.is_empty() {
            warnings.push(alloc::format!(
                "{}: no articles flagged by both it and {}; shared-set metrics omitted",
                v.variant, baseline.variant
            ));
        }
        let shared_coverage = if base.is_empty() {
            1.0
        } else {
            shared.len() as f64 / base.len() as f64
        };
        out.push(ColdStartMetrics {
            variant: v.variant.clone(),
            overall_reduction: match (&baseline_overall, &overall) {
                (Some(b), Some(o)) => Some(Reduction::between(b, o)),
                _ => None,
            },
            overall,
            shared_reduction: match (&baseline_shared, &shared_metrics) {
                (Some(b), Some(s)) => Some(Reduction::between(b, s)),
                _ => None,
            },
            shared: shared_metrics,
            baseline_shared,
            shared_coverage,
            coverage_met: shared_coverage >= SHARED_COVERAGE_TARGET,
        });
    }
    Ok(ColdStartReport {
        baseline: baseline.variant.clone(),
        baseline_overall,
        variants: out,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::{ArticleSnapshot, Snapshot};
    use alloc::vec;

    fn cov(x: f64) -> Covariates {
        Covariates { general_return_rate: x, ..Covariates::default() }
    }

    #[test]
    fn three_article_pool() {
        let pool = [("p0", cov(0.0)), ("p1", cov(1.0)), ("p5", cov(5.0))];
        let nn = nearest_neighbors(&cov(0.0), &pool, 2);
        assert_eq!(nn.indices, vec![0, 1]);
        assert_eq!(nn.distances[0], 0.0);
        assert!(!nn.truncated);
        let all = nearest_neighbors(&cov(0.0), &pool, 10);
        assert!(all.truncated);
        assert_eq!(all.indices.len(), 3);
    }

    #[test]
    fn ties_break_by_id() {
        let pool = [("b", cov(1.0)), ("a", cov(1.0)), ("c", cov(1.0))];
        let nn = nearest_neighbors(&cov(1.0), &pool, 2);
        assert_eq!(nn.indices, vec![1, 0]);
    }

    /// Cumulative series from per-week increments `(orders, too_big)`.
    fn weekly(rows: &[(&str, Vec<(u64, u64)>)]) -> SnapshotSeries {
        let weeks = rows[0].1.len();
        let mut acc: BTreeMap<String, ArticleSnapshot> = BTreeMap::new();
        let mut snaps = Vec::new();
        for w in 0..weeks {
            for (id, inc) in rows {
                let e = acc.entry(String::from(*id)).or_default();
                e.orders += inc[w].0;
                e.returns_too_big += inc[w].1;
            }
            snaps.push(Snapshot { timestamp: Timestamp(0).plus_weeks(w as i64), articles: acc.clone() });
        }
        SnapshotSeries::new("c", snaps).unwrap()
    }

    #[test]
    fn twenty_percent_reduction() {
        // week 0 is the origin; weeks 1..=6 pre, 7..=12 post, t_flag at week 6
        let mut treated = vec![(0, 0)];
        treated.extend(core::iter::repeat_n((100, 20), 6));
        treated.extend(core::iter::repeat_n((100, 16), 6));
        let mut control = vec![(0, 0)];
        control.extend(core::iter::repeat_n((100, 20), 12));
        let s = weekly(&[("t", treated), ("c", control)]);
        let report = did_effect(
            &[TreatedArticle { article_id: "t".into(), direction: Direction::TooBig, t_flag: Timestamp(0).plus_weeks(6) }],
            &["c"],
            &s,
            &DidConfig::default(),
        )
        .unwrap();
        assert!((report.srr_effect - 0.20).abs() < 1e-12);
        assert_eq!(report.truncated_matches, vec![(String::from("t"), 1)]);
    }

    #[test]
    fn parallel_shift_is_zero_and_exclusions_are_counted() {
        let mut treated = vec![(0, 0)];
        treated.extend(core::iter::repeat_n((100, 30), 6));
        treated.extend(core::iter::repeat_n((100, 25), 6));
        let mut control = vec![(0, 0)];
        control.extend(core::iter::repeat_n((100, 20), 6));
        control.extend(core::iter::repeat_n((100, 15), 6));
        let zero = vec![(0, 0); 13];
        let mut clean = vec![(0, 0)];
        clean.extend(core::iter::repeat_n((50, 0), 12));
        let s = weekly(&[("t", treated), ("c", control), ("z", zero), ("k", clean)]);
        let t_flag = Timestamp(0).plus_weeks(6);
        let mk = |id: &str| TreatedArticle { article_id: id.into(), direction: Direction::TooBig, t_flag };
        let report = did_effect(&[mk("t"), mk("z"), mk("k")], &["c"], &s, &DidConfig::default()).unwrap();
        assert!(report.srr_effect.abs() < 1e-12);
        assert_eq!(report.per_article.len() + report.excluded.len(), report.treated_count);
        let reasons: Vec<_> = report.excluded.iter().map(|e| e.reason).collect();
        assert_eq!(reasons, vec![ExclusionReason::NoOrdersPre, ExclusionReason::DivisionByZero]);

        assert_eq!(did_effect(&[mk("z")], &["c"], &s, &DidConfig::default()), Err(Error::AllExcluded { excluded: 1 }));
        assert_eq!(
            did_effect::<&str>(&[], &[], &s, &DidConfig::default()),
            Err(Error::EmptyTreatedSet)
        );
    }

    fn ff(id: &str, orders: u64, returns: u64) -> FirstFlag {
        FirstFlag {
            article_id: id.into(),
            direction: Direction::TooBig,
            snapshot_index: 0,
            timestamp: Timestamp(0),
            orders,
            returns,
        }
    }

    #[test]
    fn cold_start_reductions() {
        let base = VariantFlags { variant: "V_Base".into(), flags: vec![ff("a", 100, 30), ff("b", 200, 50)] };
        let same = VariantFlags { variant: "same".into(), flags: base.flags.clone() };
        let fast = VariantFlags {
            variant: "fast".into(),
            flags: vec![ff("a", 50, 15), ff("b", 100, 25), ff("c", 10, 5)],
        };
        let r = cold_start_compare(&base, &[same, fast]).unwrap();
        let same = &r.variants[0];
        assert_eq!(same.shared_reduction.unwrap().orders, Some(0.0));
        assert_eq!(same.shared_coverage, 1.0);
        let fast = &r.variants[1];
        assert_eq!(fast.shared_reduction.unwrap().orders, Some(0.5));
        assert_eq!(fast.overall.unwrap().median_orders, 50.0);
        assert!(fast.coverage_met);

        let disjoint = VariantFlags { variant: "d".into(), flags: vec![ff("z", 1, 1)] };
        let r = cold_start_compare(&base, &[disjoint]).unwrap();
        assert!(r.variants[0].shared.is_none());
        assert_eq!(r.warnings.len(), 1);
        assert!(!r.variants[0].coverage_met);
        assert_eq!(cold_start_compare(&base, &[]), Err(Error::NotEnoughVariants));
    }
}
