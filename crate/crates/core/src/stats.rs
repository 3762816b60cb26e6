//! Binomial score, Beta density, conjugate posterior and category statistics.
//!
//! All logarithms are natural. Binomial coefficients and Beta functions are
//! evaluated through [`ln_gamma`](crate::special::ln_gamma) only.

use alloc::string::String;

use crate::math;
use crate::series::Window;
use crate::special::{ln_beta, ln_binomial};
use crate::{Error, Result};

/// `k` size-related returns (one direction) out of `n` orders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ReturnCounts {
    returns: u64,
    orders: u64,
}

impl ReturnCounts {
    /// Counts in the usual `(k, n)` order.
    pub fn new(returns: u64, orders: u64) -> Result<Self> {
        if returns > orders {
            return Err(Error::InvalidCounts { returns, orders });
        }
        Ok(ReturnCounts { returns, orders })
    }

    pub(crate) fn new_unchecked(returns: u64, orders: u64) -> Self {
        debug_assert!(returns <= orders);
        ReturnCounts { returns, orders }
    }

    pub fn returns(&self) -> u64 {
        self.returns
    }

    pub fn orders(&self) -> u64 {
        self.orders
    }

    /// Observed size-related return rate k/n.
    pub fn srr(&self) -> Result<f64> {
        if self.orders == 0 {
            return Err(Error::UndefinedRate);
        }
        Ok(self.returns as f64 / self.orders as f64)
    }
}

/// Closed sub-interval of [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RateInterval {
    pub low: f64,
    pub high: f64,
}

impl RateInterval {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&low) {
            return Err(Error::InvalidParameter { name: "interval lower bound", value: low });
        }
        if !(low..=1.0).contains(&high) {
            return Err(Error::InvalidParameter { name: "interval upper bound", value: high });
        }
        Ok(RateInterval { low, high })
    }

    /// `[center - spread, center + spread]` clamped to [0, 1].
    pub fn around(center: f64, spread: f64) -> Self {
        RateInterval {
            low: (center - spread).max(0.0),
            high: (center + spread).min(1.0),
        }
    }

    pub fn contains(&self, r: f64) -> bool {
        (self.low..=self.high).contains(&r)
    }
}

/// Mean π, deviation σ and plausibility interval Π of the size-related
/// return rates in one category.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CategoryStats {
    pub category_id: String,
    pub pi: f64,
    pub sigma: f64,
    pub pi_interval: RateInterval,
    pub window: Option<Window>,
    /// Articles that contributed to π and σ.
    pub eligible: usize,
}

impl CategoryStats {
    /// Stats with known moments; Π defaults to `[π - σ, π + σ]` clamped.
    pub fn from_moments(category_id: impl Into<String>, pi: f64, sigma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&pi) {
            return Err(Error::InvalidParameter { name: "pi", value: pi });
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter { name: "sigma", value: sigma });
        }
        Ok(CategoryStats {
            category_id: category_id.into(),
            pi,
            sigma,
            pi_interval: RateInterval::around(pi, sigma),
            window: None,
            eligible: 0,
        })
    }

    /// Mean and population standard deviation of srr over the articles with
    /// at least `min_orders` orders (and at least one). Needs two of them.
    pub fn compute<I>(
        category_id: impl Into<String>,
        window: Option<Window>,
        articles: I,
        min_orders: u64,
    ) -> Result<Self>
    where
        I: IntoIterator<Item = ReturnCounts>,
    {
        let min_orders = min_orders.max(1);
        // Welford accumulation
        let mut count = 0usize;
        let mut mean = 0.0f64;
        let mut m2 = 0.0f64;
        for counts in articles {
            if counts.orders < min_orders {
                continue;
            }
            let r = counts.srr()?;
            count += 1;
            let delta = r - mean;
            mean += delta / count as f64;
            m2 += delta * (r - mean);
        }
        if count < 2 {
            return Err(Error::InsufficientData { eligible: count, required: 2 });
        }
        let sigma = math::sqrt((m2 / count as f64).max(0.0));
        let mut stats = CategoryStats::from_moments(category_id, mean.clamp(0.0, 1.0), sigma)?;
        stats.window = window;
        stats.eligible = count;
        Ok(stats)
    }

    /// Replaces Π, e.g. with one derived from the category's initial state.
    pub fn with_pi_interval(mut self, interval: RateInterval) -> Self {
        self.pi_interval = interval;
        self
    }

    /// Lower edge of the rate condition, π + σ.
    pub fn rate_bound(&self) -> f64 {
        self.pi + self.sigma
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PriorProvenance {
    Default,
    HumanFeedback,
    VisualCue,
}

/// Beta prior (α, β) on an article's true return rate; both ≥ 1.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PriorParams {
    pub alpha: f64,
    pub beta: f64,
    pub provenance: PriorProvenance,
}

impl PriorParams {
    pub fn new(alpha: f64, beta: f64, provenance: PriorProvenance) -> Result<Self> {
        if !(alpha >= 1.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter { name: "alpha", value: alpha });
        }
        if !(beta >= 1.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter { name: "beta", value: beta });
        }
        Ok(PriorParams { alpha, beta, provenance })
    }

    /// Beta(1, 1).
    pub const fn uniform() -> Self {
        PriorParams {
            alpha: 1.0,
            beta: 1.0,
            provenance: PriorProvenance::Default,
        }
    }

    pub fn log_density(&self, r: f64) -> Result<f64> {
        beta_log_density(r, self.alpha, self.beta)
    }
}

/// Shape parameters of the posterior Beta density.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PosteriorParams {
    pub alpha: f64,
    pub beta: f64,
}

impl PosteriorParams {
    pub fn log_density(&self, r: f64) -> Result<f64> {
        beta_log_density(r, self.alpha, self.beta)
    }

    /// Exponents of r and (1 - r) in the density, i.e. the shapes shifted
    /// down by one: `(k + α - 1, n - k + β - 1)`.
    pub fn exponents(&self) -> (f64, f64) {
        (self.alpha - 1.0, self.beta - 1.0)
    }
}

fn check_open_rate(name: &'static str, r: f64) -> Result<()> {
    if r > 0.0 && r < 1.0 {
        Ok(())
    } else {
        Err(Error::Boundary { name, value: r })
    }
}

/// s = -ln[C(n,k) π^k (1-π)^(n-k)].
pub fn binomial_score(counts: ReturnCounts, pi: f64) -> Result<f64> {
    if !(pi > 0.0 && pi < 1.0) {
        return Err(Error::DegenerateRate(pi));
    }
    let ReturnCounts { returns: k, orders: n } = counts;
    if k > n {
        return Err(Error::InvalidCounts { returns: k, orders: n });
    }
    let log_likelihood =
        ln_binomial(n, k) + k as f64 * math::ln(pi) + (n - k) as f64 * math::ln_1p(-pi);
    Ok(-log_likelihood)
}

/// ln of the Beta(α, β) density at r.
pub fn beta_log_density(r: f64, alpha: f64, beta: f64) -> Result<f64> {
    check_open_rate("rate", r)?;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParameter { name: "alpha", value: alpha });
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidParameter { name: "beta", value: beta });
    }
    Ok(-ln_beta(alpha, beta) + (alpha - 1.0) * math::ln(r) + (beta - 1.0) * math::ln_1p(-r))
}

/// Conjugate update: `(k + α, n - k + β)`.
pub fn posterior(counts: ReturnCounts, prior: &PriorParams) -> PosteriorParams {
    PosteriorParams {
        alpha: counts.returns as f64 + prior.alpha,
        beta: (counts.orders - counts.returns) as f64 + prior.beta,
    }
}

/// s_posterior = -ln p(π | k, n; α, β).
pub fn posterior_score(pi: f64, counts: ReturnCounts, prior: &PriorParams) -> Result<f64> {
    if counts.returns > counts.orders {
        return Err(Error::InvalidCounts { returns: counts.returns, orders: counts.orders });
    }
    Ok(-posterior(counts, prior).log_density(pi)?)
}
