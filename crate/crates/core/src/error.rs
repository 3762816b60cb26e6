use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// srr is undefined for an article without orders.
    UndefinedRate,
    /// More returns than orders, or a negative count.
    InvalidCounts { returns: u64, orders: u64 },
    /// Too few eligible articles to compute category statistics.
    InsufficientData { eligible: usize, required: usize },
    /// The category rate must lie strictly inside (0, 1).
    DegenerateRate(f64),
    /// A density was evaluated at (or outside) the boundary of its support.
    Boundary { name: &'static str, value: f64 },
    InvalidParameter { name: &'static str, value: f64 },
    /// The integer search for a prior bound ran into its upper limit.
    SearchRangeExceeded { parameter: &'static str, limit: u32 },
    EmptySeries,
    /// Snapshot timestamps must be strictly increasing.
    UnorderedSnapshots { index: usize },
    /// Cumulative counts decreased between snapshots for these articles.
    NonMonotoneCounts { article_ids: Vec<String> },
    /// N(θ_max) = 0, so the relative threshold constraints are undefined.
    InsufficientBaseline,
    EmptyTreatedSet,
    /// Every treated article was excluded from the estimate.
    AllExcluded { excluded: usize },
    /// Two inputs that should describe the same article set do not.
    MismatchedArticles { missing: Vec<String> },
    NotEnoughVariants,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::UndefinedRate => write!(f, "return rate undefined: article has no orders"),
            Error::InvalidCounts { returns, orders } => {
                write!(f, "invalid counts: {returns} returns exceed {orders} orders")
            }
            Error::InsufficientData { eligible, required } => write!(
                f,
                "insufficient data: {eligible} eligible articles, at least {required} required"
            ),
            Error::DegenerateRate(pi) => {
                write!(f, "degenerate category rate {pi}: must lie strictly inside (0, 1)")
            }
            Error::Boundary { name, value } => {
                write!(f, "{name} = {value} lies on or outside the open interval (0, 1)")
            }
            Error::InvalidParameter { name, value } => {
                write!(f, "invalid parameter {name} = {value}")
            }
            Error::SearchRangeExceeded { parameter, limit } => write!(
                f,
                "{parameter} search reached its upper limit {limit} without a minimum"
            ),
            Error::EmptySeries => write!(f, "snapshot series is empty"),
            Error::UnorderedSnapshots { index } => write!(
                f,
                "snapshot {index} does not have a strictly later timestamp than its predecessor"
            ),
            Error::NonMonotoneCounts { article_ids } => write!(
                f,
                "cumulative counts decrease between snapshots for articles: {}",
                article_ids.join(", ")
            ),
            Error::InsufficientBaseline => write!(
                f,
                "no article is flagged at theta_max; threshold constraints are undefined"
            ),
            Error::EmptyTreatedSet => write!(f, "treated set is empty"),
            Error::AllExcluded { excluded } => {
                write!(f, "all {excluded} treated articles were excluded")
            }
            Error::MismatchedArticles { missing } => write!(
                f,
                "article sets differ; unmatched articles: {}",
                missing.join(", ")
            ),
            Error::NotEnoughVariants => write!(f, "at least two model variants are required"),
        }
    }
}

impl core::error::Error for Error {}
