//! Standard normal primitives used throughout the probit and outcome models.
//!
//! `cdf` goes through the complementary error function so that both tails keep
//! full relative precision; the log versions never round a representable
//! probability to `-inf`.

use libm::erfc;
use statrs::function::erf::erfc_inv;

const SQRT_2: f64 = std::f64::consts::SQRT_2;
/// ln(sqrt(2 pi))
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Standard normal CDF.
pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Upper tail `1 - cdf(x)`, accurate for large positive `x`.
pub fn sf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// `ln cdf(x)`, finite for every finite `x`.
pub fn ln_cdf(x: f64) -> f64 {
    if x > 0.0 {
        (-sf(x)).ln_1p()
    } else if x > -35.0 {
        cdf(x).ln()
    } else {
        // Mills ratio expansion, three terms.
        let x2 = x * x;
        -0.5 * x2 - LN_SQRT_2PI - (-x).ln() + (1.0 - 1.0 / x2 + 3.0 / (x2 * x2)).ln()
    }
}

/// `ln(1 - cdf(x))`.
pub fn ln_sf(x: f64) -> f64 {
    ln_cdf(-x)
}

/// Inverse of the standard normal CDF on (0, 1).
pub fn quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    if p > 0.5 {
        return -quantile(1.0 - p);
    }
    // The closed-form start is only good to about 1e-9 in the tails; two
    // Newton steps against the accurate CDF bring it to rounding level.
    let mut x = -SQRT_2 * erfc_inv(2.0 * p);
    for _ in 0..2 {
        let d = pdf(x);
        if d == 0.0 {
            break;
        }
        x -= (cdf(x) - p) / d;
    }
    x
}

/// Inverse of the upper tail: `x` with `sf(x) = q`.
pub fn quantile_upper(q: f64) -> f64 {
    -quantile(q)
}

pub fn pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

/// Log density of N(mean, var) at `y`.
pub fn ln_pdf(y: f64, mean: f64, var: f64) -> f64 {
    let d = y - mean;
    -0.5 * d * d / var - 0.5 * var.ln() - LN_SQRT_2PI
}

/// `ln(exp(a) + exp(b))` without overflow; `-inf` only when both are `-inf`.
pub fn log_sum_exp2(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}
