//! Log-gamma and the log-space combinatorics built on it.
//!
//! Binomial coefficients and Beta functions are only ever evaluated in log
//! space; order counts in the hundreds of thousands overflow any direct
//! factorial product.

use crate::math;

// Lanczos approximation with g = 10.900511 and 11 coefficients
// (Pugh, "An Analysis of the Lanczos Gamma Approximation", 2004, p. 116).
const LANCZOS_G: f64 = 10.900511;

#[allow(clippy::excessive_precision)]
const LANCZOS_COEFFS: [f64; 11] = [
    2.48574089138753565546e-5,
    1.05142378581721974210,
    -3.45687097222016235469,
    4.51227709466894823700,
    -2.98285225323576655721,
    1.05639711577126713077,
    -1.95428773191645869583e-1,
    1.70970543404441224307e-2,
    -5.71926117404305781283e-4,
    4.63399473359905636708e-6,
    -2.71994908488607703910e-9,
];

/// ln(2 * sqrt(e / pi))
const LN_2_SQRT_E_OVER_PI: f64 = 0.620_782_237_635_245_2;
const LN_PI: f64 = 1.144_729_885_849_400_2;

/// Natural logarithm of |Γ(x)|.
///
/// Accurate to roughly 15 significant digits for positive arguments up to
/// well beyond 10⁶. Returns `+inf` at the poles (non-positive integers).
pub fn ln_gamma(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < 0.5 {
        if x == libm::floor(x) {
            return f64::INFINITY;
        }
        let sin_pi_x = math::sin(core::f64::consts::PI * x);
        // Reflection: Γ(x)Γ(1-x) = π / sin(πx)
        let s = LANCZOS_COEFFS
            .iter()
            .enumerate()
            .skip(1)
            .fold(LANCZOS_COEFFS[0], |s, (i, &c)| s + c / (i as f64 - x));
        LN_PI
            - math::ln(math::abs(sin_pi_x))
            - math::ln(s)
            - LN_2_SQRT_E_OVER_PI
            - (0.5 - x) * (math::ln(0.5 - x + LANCZOS_G) - 1.0)
    } else {
        let s = LANCZOS_COEFFS
            .iter()
            .enumerate()
            .skip(1)
            .fold(LANCZOS_COEFFS[0], |s, (i, &c)| s + c / (x + i as f64 - 1.0));
        math::ln(s) + LN_2_SQRT_E_OVER_PI + (x - 0.5) * (math::ln(x - 0.5 + LANCZOS_G) - 1.0)
    }
}

/// ln B(a, b) for a, b > 0.
pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// ln C(n, k). Returns `-inf` when k > n.
pub fn ln_binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    if k == 0 || k == n {
        return 0.0;
    }
    let n = n as f64;
    let k = k as f64;
    ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// ln(n!) by direct summation, independent of the Lanczos path.
    fn ln_factorial_sum(n: u64) -> f64 {
        (2..=n).map(|i| (i as f64).ln()).sum()
    }

    #[test]
    fn small_integers() {
        assert!(ln_gamma(1.0).abs() < 1e-15);
        assert!(ln_gamma(2.0).abs() < 1e-15);
        assert!((ln_gamma(3.0) - 2f64.ln()).abs() < 1e-14);
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn half_integers() {
        let sqrt_pi_ln = 0.5 * core::f64::consts::PI.ln();
        assert!((ln_gamma(0.5) - sqrt_pi_ln).abs() < 1e-14);
        assert!((ln_gamma(1.5) - (sqrt_pi_ln - 2f64.ln())).abs() < 1e-14);
        // Γ(-0.5) = -2√π
        assert!((ln_gamma(-0.5) - (2f64.ln() + sqrt_pi_ln)).abs() < 1e-13);
    }

    #[test]
    fn matches_factorial_sums() {
        for n in [10u64, 100, 1_000, 10_000, 100_000] {
            let exact = ln_factorial_sum(n);
            let got = ln_gamma(n as f64 + 1.0);
            assert!(
                ((got - exact) / exact).abs() < 1e-12,
                "n={n}: {got} vs {exact}"
            );
        }
    }

    #[test]
    fn matches_libm_at_large_arguments() {
        for x in [17.3, 250.5, 4_321.0, 99_999.25, 1.0e6] {
            let reference = libm::lgamma(x);
            assert!(((ln_gamma(x) - reference) / reference).abs() < 1e-13, "x={x}");
        }
    }

    #[test]
    fn poles() {
        assert_eq!(ln_gamma(0.0), f64::INFINITY);
        assert_eq!(ln_gamma(-3.0), f64::INFINITY);
    }

    #[test]
    fn binomial_against_product() {
        // ln C(n,k) = Σ_{i=1..k} ln((n-k+i)/i)
        for &(n, k) in &[(10u64, 3u64), (100, 35), (500, 250), (10_000, 3_000)] {
            let exact: f64 = (1..=k)
                .map(|i| ((n - k + i) as f64 / i as f64).ln())
                .sum();
            assert!((ln_binomial(n, k) - exact).abs() < 1e-9 * exact.max(1.0));
        }
        assert_eq!(ln_binomial(0, 0), 0.0);
        assert_eq!(ln_binomial(3, 4), f64::NEG_INFINITY);
    }

    #[test]
    fn beta_closed_forms() {
        // B(2,2) = 1/6, B(a,1) = 1/a
        assert!((ln_beta(2.0, 2.0) + 6f64.ln()).abs() < 1e-14);
        // ln Γ(9) ≈ 10.6, so this is relative accuracy near 4e-15
        assert!((ln_beta(8.0, 1.0) + 8f64.ln()).abs() < 1e-13);
        assert!((ln_beta(1.0, 3.0) + 3f64.ln()).abs() < 1e-14);
    }
}
