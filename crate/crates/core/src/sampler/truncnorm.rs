//! Truncated normal variates.
//!
//! Inside the central region the draw is an inverse-CDF transform, computed on
//! whichever tail keeps the probabilities away from 1. Once the whole interval
//! lies beyond `TAIL_CUTOFF` standard deviations the CDF is too flat to invert
//! reliably and an exponential-proposal rejection sampler takes over.

use rand::Rng;

use crate::error::{Error, Result};
use crate::normal;

const TAIL_CUTOFF: f64 = 6.0;

/// Draw from N(mean, sd^2) restricted to the open interval (lower, upper).
/// Either bound may be infinite.
pub fn truncated_normal_draw<R: Rng + ?Sized>(
    mean: f64,
    sd: f64,
    lower: f64,
    upper: f64,
    rng: &mut R,
) -> Result<f64> {
    if !mean.is_finite() || !sd.is_finite() || sd <= 0.0 {
        return Err(Error::domain(format!(
            "truncated normal needs finite mean and positive sd (mean={mean}, sd={sd})"
        )));
    }
    if lower.is_nan() || upper.is_nan() {
        return Err(Error::domain("truncation bounds must not be NaN"));
    }
    if lower >= upper {
        return Err(Error::contract(format!(
            "empty truncation interval ({lower}, {upper})"
        )));
    }
    let a = (lower - mean) / sd;
    let b = (upper - mean) / sd;
    for _ in 0..64 {
        let x = mean + sd * standard_draw(a, b, rng);
        if x > lower && x < upper {
            return Ok(x);
        }
    }
    // The interval is narrower than the rounding of `mean + sd * z`.
    let mid = 0.5 * (lower + upper);
    if mid > lower && mid < upper {
        Ok(mid)
    } else {
        Err(Error::contract(format!(
            "truncation interval ({lower}, {upper}) has no interior point"
        )))
    }
}

fn standard_draw<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    if a >= TAIL_CUTOFF {
        return upper_tail(a, b, rng);
    }
    if b <= -TAIL_CUTOFF {
        return -upper_tail(-b, -a, rng);
    }
    let u: f64 = rng.random();
    let x = if a > 0.0 {
        let qa = normal::sf(a);
        let qb = normal::sf(b);
        normal::quantile_upper(qa - u * (qa - qb))
    } else {
        let pa = normal::cdf(a);
        let pb = normal::cdf(b);
        normal::quantile(pa + u * (pb - pa))
    };
    x.clamp(a, b)
}

/// Exponential rejection on `[a, b]` with `a > 0` (Robert's proposal with the
/// optimal rate).
fn upper_tail<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    let rate = 0.5 * (a + (a * a + 4.0).sqrt());
    let width = b - a;
    // Mass of the exponential proposal on [a, b]; 1 when b is infinite.
    let mass = -(-rate * width).exp_m1();
    loop {
        let u: f64 = rng.random();
        let z = a - (-u * mass).ln_1p() / rate;
        if z > b {
            continue;
        }
        let d = z - rate;
        let v: f64 = rng.random();
        if v.ln() <= -0.5 * d * d {
            return z;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn draws(mean: f64, sd: f64, lo: f64, hi: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| truncated_normal_draw(mean, sd, lo, hi, &mut rng).unwrap())
            .collect()
    }

    fn mean(v: &[f64]) -> f64 {
        v.iter().sum::<f64>() / v.len() as f64
    }

    #[test]
    fn untruncated_is_standard_normal() {
        let v = draws(0.0, 1.0, f64::NEG_INFINITY, f64::INFINITY, 100_000, 1);
        assert!(mean(&v).abs() < 4.0 / (1e5f64).sqrt());
    }

    #[test]
    fn half_normal_mean() {
        let v = draws(0.0, 1.0, 0.0, f64::INFINITY, 100_000, 2);
        // sd of a half-normal is sqrt(1 - 2/pi).
        let se = (1.0 - 2.0 / std::f64::consts::PI).sqrt() / (1e5f64).sqrt();
        let want = (2.0 / std::f64::consts::PI).sqrt();
        assert!((mean(&v) - want).abs() < 4.0 * se);
        assert!(v.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn two_sided_support() {
        let v = draws(5.0, 2.0, 4.0, 6.0, 20_000, 3);
        assert!(v.iter().all(|&x| x > 4.0 && x < 6.0));
        // Symmetric about the mean.
        assert!((mean(&v) - 5.0).abs() < 0.02);
    }

    #[test]
    fn deep_tails_use_rejection_and_match_moments() {
        // E[Z | Z > a] = phi(a) / (1 - Phi(a)).
        for a in [6.5, 10.0, 40.0] {
            let v = draws(0.0, 1.0, a, f64::INFINITY, 50_000, 4);
            assert!(v.iter().all(|&x| x > a));
            let want = if a < 30.0 {
                normal::pdf(a) / normal::sf(a)
            } else {
                // Mills ratio expansion.
                a + 1.0 / a - 2.0 / a.powi(3)
            };
            let got = mean(&v);
            assert!(
                (got - want).abs() < 4.0 / a / (5e4f64).sqrt(),
                "a={a}: {got} vs {want}"
            );
        }
        let v = draws(0.0, 1.0, f64::NEG_INFINITY, -8.0, 10_000, 5);
        assert!(v.iter().all(|&x| x < -8.0));
        let v = draws(0.0, 1.0, 7.0, 7.01, 10_000, 6);
        assert!(v.iter().all(|&x| x > 7.0 && x < 7.01));
    }

    #[test]
    fn moderate_tail_uses_inverse_cdf_without_saturation() {
        let v = draws(0.0, 1.0, 5.0, f64::INFINITY, 50_000, 7);
        let want = normal::pdf(5.0) / normal::sf(5.0);
        assert!((mean(&v) - want).abs() < 4.0 * 0.2 / (5e4f64).sqrt());
    }

    #[test]
    fn invalid_arguments() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            truncated_normal_draw(0.0, 1.0, 1.0, 1.0, &mut rng),
            Err(Error::Contract(_))
        ));
        assert!(truncated_normal_draw(0.0, 1.0, 2.0, 1.0, &mut rng).is_err());
        assert!(truncated_normal_draw(0.0, 0.0, 0.0, 1.0, &mut rng).is_err());
        assert!(truncated_normal_draw(f64::NAN, 1.0, 0.0, 1.0, &mut rng).is_err());
        assert!(truncated_normal_draw(0.0, 1.0, f64::NAN, 1.0, &mut rng).is_err());
    }
}
