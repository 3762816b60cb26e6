//! Size-issue flagging for catalog articles from order and return counts.
//!
//! Each article is scored separately for the "too big" and "too small"
//! directions. A flag is raised when the observed size-related return rate
//! sits at least one category deviation above the category mean *and* the
//! evidence against the category rate is strong enough, measured either by
//! the binomial negative log-likelihood or by the negative log posterior
//! density under a Beta prior built from expert feedback or visual cues.
//!
//! The crate is `no_std` (with `alloc`); file formats and the command line
//! live in the `sizeflags` companion crate.
//!
//! Modules:
//! - [`stats`]: binomial score, Beta density, conjugate posterior, category statistics
//! - [`flagging`]: joint flag conditions and the per-category flagging pass
//! - [`priors`]: prior bounds and the mapping from feedback / cues to Beta priors
//! - [`threshold`]: grid search for the optimized per-category threshold
//! - [`evaluation`]: nearest-neighbour difference-in-differences and cold-start metrics
//! - [`simulator`]: seeded synthetic categories with ground truth
#![cfg_attr(not(any(feature = "std", test)), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

mod error;
pub(crate) mod math;

pub mod evaluation;
pub mod flagging;
pub mod priors;
pub mod series;
pub mod simulator;
pub mod special;
pub mod stats;
pub mod threshold;

pub use error::{Error, Result};
pub use flagging::{
    flag_bayesian, flag_binomial, run_sizeflags, ArticleRecord, Direction, FlagConfig,
    FlagDecision, FlagReason, ModelVariant,
};
pub use priors::{
    prior_from_feedback, prior_from_visual_cue, select_prior, solve_prior_bounds, ExpertFeedback,
    PriorBounds, PriorPolicy, PriorTable, Verdict, VisualCue,
};
pub use series::{ArticleSnapshot, Covariates, Snapshot, SnapshotSeries, Timestamp, Window};
pub use stats::{
    beta_log_density, binomial_score, posterior, posterior_score, CategoryStats, PosteriorParams,
    PriorParams, PriorProvenance, RateInterval, ReturnCounts,
};
pub use threshold::{optimize_threshold, Epsilons, ThresholdSolution};
