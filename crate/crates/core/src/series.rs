//! Time-ordered cumulative order/return snapshots for one category.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::flagging::Direction;
use crate::stats::ReturnCounts;
use crate::{Error, Result};

/// Seconds since the Unix epoch, UTC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Timestamp(pub i64);

impl Timestamp {
    pub const SECONDS_PER_WEEK: i64 = 7 * 24 * 3600;

    pub fn plus_weeks(self, weeks: i64) -> Self {
        Timestamp(self.0 + weeks * Self::SECONDS_PER_WEEK)
    }
}

/// Closed time range `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Window {
    pub start: Timestamp,
    pub end: Timestamp,
}

/// Confounders used to match treated articles to controls.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Covariates {
    /// Return rate over all return reasons.
    pub general_return_rate: f64,
    pub price: f64,
    pub discount_rate: f64,
    /// Return rate for returns with reason "unknown".
    pub unknown_return_rate: f64,
}

impl Covariates {
    pub fn as_array(&self) -> [f64; 4] {
        [
            self.general_return_rate,
            self.price,
            self.discount_rate,
            self.unknown_return_rate,
        ]
    }

    pub fn is_valid(&self) -> bool {
        let rate = |r: f64| (0.0..=1.0).contains(&r);
        rate(self.general_return_rate)
            && rate(self.discount_rate)
            && rate(self.unknown_return_rate)
            && self.price >= 0.0
            && self.price.is_finite()
    }
}

/// Cumulative counts of one article at one snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ArticleSnapshot {
    pub orders: u64,
    pub returns_too_big: u64,
    pub returns_too_small: u64,
    pub covariates: Covariates,
}

impl ArticleSnapshot {
    pub fn counts(&self, direction: Direction) -> ReturnCounts {
        let returns = match direction {
            Direction::TooBig => self.returns_too_big,
            Direction::TooSmall => self.returns_too_small,
        };
        ReturnCounts::new_unchecked(returns, self.orders)
    }

    fn dominates(&self, earlier: &ArticleSnapshot) -> bool {
        self.orders >= earlier.orders
            && self.returns_too_big >= earlier.returns_too_big
            && self.returns_too_small >= earlier.returns_too_small
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Snapshot {
    pub timestamp: Timestamp,
    pub articles: BTreeMap<String, ArticleSnapshot>,
}

/// Validated, time-ordered cumulative snapshots of one category.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct SnapshotSeries {
    category_id: String,
    snapshots: Vec<Snapshot>,
}

impl SnapshotSeries {
    /// Validates strictly increasing timestamps, per-snapshot count
    /// consistency and cumulative monotonicity per article.
    pub fn new(category_id: impl Into<String>, snapshots: Vec<Snapshot>) -> Result<Self> {
        for (index, pair) in snapshots.windows(2).enumerate() {
            if pair[1].timestamp <= pair[0].timestamp {
                return Err(Error::UnorderedSnapshots { index: index + 1 });
            }
        }
        for snapshot in &snapshots {
            for a in snapshot.articles.values() {
                if a.returns_too_big.saturating_add(a.returns_too_small) > a.orders {
                    return Err(Error::InvalidCounts {
                        returns: a.returns_too_big.saturating_add(a.returns_too_small),
                        orders: a.orders,
                    });
                }
            }
        }

        let mut last_seen: BTreeMap<&str, &ArticleSnapshot> = BTreeMap::new();
        let mut offending: Vec<String> = Vec::new();
        for snapshot in &snapshots {
            for (id, a) in &snapshot.articles {
                if let Some(prev) = last_seen.insert(id.as_str(), a) {
                    if !a.dominates(prev) && !offending.iter().any(|o| o == id) {
                        offending.push(id.clone());
                    }
                }
            }
        }
        if !offending.is_empty() {
            offending.sort();
            return Err(Error::NonMonotoneCounts {
                article_ids: offending,
            });
        }

        Ok(SnapshotSeries {
            category_id: category_id.into(),
            snapshots,
        })
    }

    pub fn category_id(&self) -> &str {
        &self.category_id
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn latest(&self) -> Option<&Snapshot> {
        self.snapshots.last()
    }

    pub fn window(&self) -> Option<Window> {
        Some(Window {
            start: self.snapshots.first()?.timestamp,
            end: self.snapshots.last()?.timestamp,
        })
    }

    /// Every article id that appears in any snapshot, sorted.
    pub fn article_ids(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self
            .snapshots
            .iter()
            .flat_map(|s| s.articles.keys().map(String::as_str))
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Index of the latest snapshot taken at or before `ts`.
    pub fn index_at_or_before(&self, ts: Timestamp) -> Option<usize> {
        match self.snapshots.binary_search_by(|s| s.timestamp.cmp(&ts)) {
            Ok(i) => Some(i),
            Err(0) => None,
            Err(i) => Some(i - 1),
        }
    }

    /// Cumulative state of `article_id` as of snapshot `index`, carrying the
    /// last observed state forward; zero before the article first appears.
    pub fn article_at(&self, index: usize, article_id: &str) -> ArticleSnapshot {
        self.snapshots[..=index]
            .iter()
            .rev()
            .find_map(|s| s.articles.get(article_id).copied())
            .unwrap_or_default()
    }

    /// Counts accrued in `(from, to]`: cumulative counts at the last snapshot
    /// at or before `to` minus those at the last snapshot at or before `from`.
    pub fn counts_between(
        &self,
        article_id: &str,
        direction: Direction,
        from: Timestamp,
        to: Timestamp,
    ) -> ReturnCounts {
        let end = match self.index_at_or_before(to) {
            Some(i) => self.article_at(i, article_id).counts(direction),
            None => return ReturnCounts::default(),
        };
        let start = match self.index_at_or_before(from) {
            Some(i) => self.article_at(i, article_id).counts(direction),
            None => ReturnCounts::default(),
        };
        ReturnCounts::new_unchecked(
            end.returns().saturating_sub(start.returns()),
            end.orders().saturating_sub(start.orders()),
        )
    }

    /// The snapshots inside `window`, with every article's counts rebased to
    /// its state just before the window starts.
    pub fn rebased(&self, window: Window) -> Result<SnapshotSeries> {
        let base_index = self.index_at_or_before(Timestamp(window.start.0 - 1));
        let snapshots = self
            .snapshots
            .iter()
            .filter(|s| s.timestamp >= window.start && s.timestamp <= window.end)
            .map(|s| Snapshot {
                timestamp: s.timestamp,
                articles: s
                    .articles
                    .iter()
                    .map(|(id, a)| {
                        let base = base_index.map(|i| self.article_at(i, id)).unwrap_or_default();
                        let rebased = ArticleSnapshot {
                            orders: a.orders - base.orders,
                            returns_too_big: a.returns_too_big - base.returns_too_big,
                            returns_too_small: a.returns_too_small - base.returns_too_small,
                            covariates: a.covariates,
                        };
                        (id.clone(), rebased)
                    })
                    .collect(),
            })
            .collect();
        SnapshotSeries::new(self.category_id.clone(), snapshots)
    }

    /// Cumulative counts of every article at the latest snapshot within
    /// `window` minus those just before it starts. The default (cumulative)
    /// window covers the whole series.
    pub fn window_counts(
        &self,
        direction: Direction,
        window: Option<Window>,
    ) -> Vec<(String, ReturnCounts)> {
        let Some(full) = self.window() else {
            return Vec::new();
        };
        let window = window.unwrap_or(full);
        let before_start = Timestamp(window.start.0 - 1);
        self.article_ids()
            .into_iter()
            .map(|id| {
                let counts = self.counts_between(id, direction, before_start, window.end);
                (String::from(id), counts)
            })
            .collect()
    }
}
