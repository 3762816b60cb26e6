//! Per-category threshold optimization on historical snapshots.
//!
//! Starting from a conservative θ_max, pick the smallest θ on an equidistant
//! grid over (0, θ_max] such that, with N(θ) flagged articles and S(θ) of
//! them stable,
//!
//! ```text
//! (N(θ) - S(θ)) / N(θ)                      ≤ ε₁
//! (N(θ) - N(θ_max)) / N(θ_max)              ≤ ε₂
//! (N(θ) - S(θ)) / (N(θ_max) - S(θ_max))     ≤ ε₃
//! ```
//!
//! A flag is stable when, from the first snapshot at which it is raised, it
//! stays raised at every later snapshot.

use alloc::string::String;
use alloc::vec::Vec;

use crate::flagging::{evaluate_article, Direction, FlagConfig, FlagReason, PerDirection};
use crate::priors::PriorTable;
use crate::series::SnapshotSeries;
use crate::stats::CategoryStats;
use crate::{Error, Result};

pub const DEFAULT_GRID_POINTS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Epsilons {
    /// ε₁: admissible share of unstable flags.
    pub unstable_share: f64,
    /// ε₂: admissible relative excess of flags over the θ_max baseline.
    pub extra_flags: f64,
    /// ε₃: admissible unstable-flag count relative to the baseline's.
    pub unstable_ratio: f64,
}

impl Default for Epsilons {
    fn default() -> Self {
        Epsilons {
            unstable_share: 0.2,
            extra_flags: 0.05,
            unstable_ratio: 1.5,
        }
    }
}

impl Epsilons {
    pub fn validate(&self) -> Result<()> {
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        if !open_unit(self.unstable_share) {
            return Err(Error::InvalidParameter { name: "epsilon_1", value: self.unstable_share });
        }
        if !open_unit(self.extra_flags) {
            return Err(Error::InvalidParameter { name: "epsilon_2", value: self.extra_flags });
        }
        if !(self.unstable_ratio >= 0.0 && self.unstable_ratio.is_finite()) {
            return Err(Error::InvalidParameter { name: "epsilon_3", value: self.unstable_ratio });
        }
        Ok(())
    }
}

/// N(θ) and S(θ).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FlagCounts {
    pub flagged: usize,
    pub stable: usize,
}

impl FlagCounts {
    pub fn unstable(&self) -> usize {
        self.flagged - self.stable
    }
}

/// Left-hand sides of the three constraints. 0/0 evaluates to 0 and x/0 to
/// +inf for x > 0.
pub fn constraint_values(at: FlagCounts, baseline: FlagCounts) -> [f64; 3] {
    fn ratio(num: f64, den: f64) -> f64 {
        if den != 0.0 {
            num / den
        } else if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
    let n = at.flagged as f64;
    let n_max = baseline.flagged as f64;
    [
        ratio(at.unstable() as f64, n),
        ratio(n - n_max, n_max),
        ratio(at.unstable() as f64, baseline.unstable() as f64),
    ]
}

pub fn constraints_hold(at: FlagCounts, baseline: FlagCounts, eps: &Epsilons) -> bool {
    let [c1, c2, c3] = constraint_values(at, baseline);
    c1 <= eps.unstable_share && c2 <= eps.extra_flags && c3 <= eps.unstable_ratio
}

/// Scores of every article at every snapshot for one direction, `None`
/// where the rate condition (or a data gate) fails. The score does not
/// depend on θ, so one trace serves every grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTrace {
    pub direction: Direction,
    pub article_ids: Vec<String>,
    /// `scores[article][snapshot]`
    pub scores: Vec<Vec<Option<f64>>>,
}

impl ScoreTrace {
    pub fn compute(
        series: &SnapshotSeries,
        direction: Direction,
        stats: &CategoryStats,
        priors: &PriorTable,
        config: &FlagConfig,
    ) -> Result<Self> {
        if series.is_empty() {
            return Err(Error::EmptySeries);
        }
        let ids = series.article_ids();
        let scores = ids
            .iter()
            .map(|id| {
                (0..series.len())
                    .map(|t| {
                        let counts = series.article_at(t, id).counts(direction);
                        let outcome = evaluate_article(id, direction, counts, stats, priors, config);
                        match outcome.reason {
                            FlagReason::Flagged | FlagReason::ScoreBelowThreshold => outcome.score,
                            _ => None,
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(ScoreTrace {
            direction,
            article_ids: ids.into_iter().map(String::from).collect(),
            scores,
        })
    }

    /// Flag status per snapshot of article `i` at threshold `theta`.
    pub fn flags(&self, i: usize, theta: f64) -> impl Iterator<Item = bool> + '_ {
        self.scores[i].iter().map(move |s| matches!(s, Some(s) if *s >= theta))
    }

    /// Index of the first snapshot at which article `i` is flagged.
    pub fn first_flag(&self, i: usize, theta: f64) -> Option<usize> {
        self.flags(i, theta).position(|f| f)
    }

    pub fn counts(&self, theta: f64) -> FlagCounts {
        let mut counts = FlagCounts::default();
        for i in 0..self.article_ids.len() {
            if let Some(first) = self.first_flag(i, theta) {
                counts.flagged += 1;
                if self.flags(i, theta).skip(first).all(|f| f) {
                    counts.stable += 1;
                }
            }
        }
        counts
    }
}

/// N(C, θ): articles flagged at any snapshot.
pub fn count_flags(
    series: &SnapshotSeries,
    direction: Direction,
    stats: &CategoryStats,
    priors: &PriorTable,
    config: &FlagConfig,
) -> Result<usize> {
    Ok(ScoreTrace::compute(series, direction, stats, priors, config)?
        .counts(config.theta)
        .flagged)
}

/// S(C, θ): flagged articles whose flag never drops after it is first raised.
pub fn count_stable(
    series: &SnapshotSeries,
    direction: Direction,
    stats: &CategoryStats,
    priors: &PriorTable,
    config: &FlagConfig,
) -> Result<usize> {
    Ok(ScoreTrace::compute(series, direction, stats, priors, config)?
        .counts(config.theta)
        .stable)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ThresholdSolution {
    pub direction: Direction,
    pub theta_star: f64,
    pub theta_max: f64,
    pub epsilons: Epsilons,
    pub at_theta_star: FlagCounts,
    pub at_theta_max: FlagCounts,
    pub grid_step: f64,
    pub grid_points: usize,
    /// False when no grid point satisfies all constraints; θ* is then θ_max.
    pub feasible: bool,
}

/// Grid point `i` (1-based) of `grid_points` over (0, θ_max].
fn grid_theta(theta_max: f64, grid_points: usize, i: usize) -> f64 {
    if i == grid_points {
        theta_max
    } else {
        theta_max * i as f64 / grid_points as f64
    }
}

fn check_grid(theta_max: f64, grid_points: usize, eps: &Epsilons) -> Result<()> {
    if !(theta_max > 0.0 && theta_max.is_finite()) {
        return Err(Error::InvalidParameter { name: "theta_max", value: theta_max });
    }
    if grid_points == 0 {
        return Err(Error::InvalidParameter { name: "grid_points", value: 0.0 });
    }
    eps.validate()
}

fn solve_on_trace(
    trace: &ScoreTrace,
    theta_max: f64,
    eps: Epsilons,
    grid_points: usize,
) -> Result<ThresholdSolution> {
    let baseline = trace.counts(theta_max);
    if baseline.flagged == 0 {
        return Err(Error::InsufficientBaseline);
    }
    let found = (1..=grid_points)
        .map(|i| grid_theta(theta_max, grid_points, i))
        .map(|theta| (theta, trace.counts(theta)))
        .find(|(_, counts)| constraints_hold(*counts, baseline, &eps));
    let (theta_star, at, feasible) = match found {
        Some((theta, counts)) => (theta, counts, true),
        None => (theta_max, baseline, false),
    };
    Ok(ThresholdSolution {
        direction: trace.direction,
        theta_star,
        theta_max,
        epsilons: eps,
        at_theta_star: at,
        at_theta_max: baseline,
        grid_step: theta_max / grid_points as f64,
        grid_points,
        feasible,
    })
}

/// Smallest feasible θ on the grid for one direction.
#[allow(clippy::too_many_arguments)]
pub fn optimize_threshold(
    series: &SnapshotSeries,
    direction: Direction,
    stats: &CategoryStats,
    priors: &PriorTable,
    config: &FlagConfig,
    theta_max: f64,
    epsilons: Epsilons,
    grid_points: usize,
) -> Result<ThresholdSolution> {
    check_grid(theta_max, grid_points, &epsilons)?;
    let trace = ScoreTrace::compute(series, direction, stats, priors, config)?;
    solve_on_trace(&trace, theta_max, epsilons, grid_points)
}

/// One θ shared by both directions of a category.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CategoryThreshold {
    pub category_id: String,
    pub theta_star: f64,
    pub feasible: bool,
    /// Per-direction solutions; `None` for a direction without any flag at θ_max.
    pub per_direction: PerDirection<Option<ThresholdSolution>>,
}

/// Smallest grid θ feasible in every direction that has a baseline.
pub fn optimize_category_threshold(
    series: &SnapshotSeries,
    stats: &PerDirection<CategoryStats>,
    priors: &PriorTable,
    config: &FlagConfig,
    theta_max: f64,
    epsilons: Epsilons,
    grid_points: usize,
) -> Result<CategoryThreshold> {
    check_grid(theta_max, grid_points, &epsilons)?;
    let traces = PerDirection::try_from_fn(|d| {
        ScoreTrace::compute(series, d, stats.get(d), priors, config)
    })?;
    let per_direction = traces.map(|_, t| solve_on_trace(t, theta_max, epsilons, grid_points).ok());
    let active: Vec<(&ScoreTrace, FlagCounts)> = Direction::ALL
        .iter()
        .filter(|d| per_direction.get(**d).is_some())
        .map(|d| (traces.get(*d), traces.get(*d).counts(theta_max)))
        .collect();
    if active.is_empty() {
        return Err(Error::InsufficientBaseline);
    }
    let shared = (1..=grid_points)
        .map(|i| grid_theta(theta_max, grid_points, i))
        .find(|theta| {
            active
                .iter()
                .all(|(trace, baseline)| constraints_hold(trace.counts(*theta), *baseline, &epsilons))
        });
    Ok(CategoryThreshold {
        category_id: String::from(series.category_id()),
        theta_star: shared.unwrap_or(theta_max),
        feasible: shared.is_some(),
        per_direction,
    })
}
