//! Conditional updates for the probit and normal-regression blocks.

use nalgebra::{SMatrix, SVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use super::truncnorm::truncated_normal_draw;
use super::PriorConfig;
use crate::error::{Error, Result};

/// Draw from N(P^{-1} r, P^{-1}) given the precision `P` and `r`.
fn draw_from_precision<const K: usize, R: Rng + ?Sized>(
    precision: SMatrix<f64, K, K>,
    rhs: SVector<f64, K>,
    rng: &mut R,
) -> Result<SVector<f64, K>> {
    let chol = precision
        .cholesky()
        .ok_or_else(|| Error::domain("posterior precision is not positive definite"))?;
    let mean = chol.solve(&rhs);
    let eps = SVector::<f64, K>::from_fn(|_, _| rng.sample(StandardNormal));
    let noise = chol
        .l()
        .transpose()
        .solve_upper_triangular(&eps)
        .ok_or_else(|| Error::domain("singular Cholesky factor"))?;
    Ok(mean + noise)
}

fn prior_precision<const K: usize>(prior: &PriorConfig) -> (SMatrix<f64, K, K>, SVector<f64, K>) {
    let prec = 1.0 / prior.coef_var;
    (
        SMatrix::<f64, K, K>::identity() * prec,
        SVector::<f64, K>::repeat(prior.coef_mean * prec),
    )
}

fn dot<const K: usize>(a: &[f64; K], b: &[f64; K]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// One Albert–Chib step for a probit regression: draw the latent utilities
/// given `current`, then the coefficients given the utilities. With no rows
/// the draw comes from the prior.
pub fn update_probit_block<const K: usize, R: Rng + ?Sized>(
    responses: &[bool],
    design: &[[f64; K]],
    prior: &PriorConfig,
    current: &[f64; K],
    rng: &mut R,
) -> Result<[f64; K]> {
    if responses.len() != design.len() {
        return Err(Error::contract(format!(
            "{} responses for {} design rows",
            responses.len(),
            design.len()
        )));
    }
    let (mut xtx, mut xtz) = prior_precision::<K>(prior);
    for (&r, row) in responses.iter().zip(design) {
        let m = dot(row, current);
        let z = if r {
            truncated_normal_draw(m, 1.0, 0.0, f64::INFINITY, rng)?
        } else {
            truncated_normal_draw(m, 1.0, f64::NEG_INFINITY, 0.0, rng)?
        };
        for i in 0..K {
            if row[i] == 0.0 {
                continue;
            }
            xtz[i] += row[i] * z;
            for j in 0..K {
                xtx[(i, j)] += row[i] * row[j];
            }
        }
    }
    let b = draw_from_precision(xtx, xtz, rng)?;
    Ok(b.into())
}

/// Draw from the scaled inverse chi-square distribution with `df` degrees of
/// freedom and scale `scale`.
pub fn scaled_inv_chi2<R: Rng + ?Sized>(df: f64, scale: f64, rng: &mut R) -> Result<f64> {
    let chi = ChiSquared::new(df).map_err(|e| Error::domain(format!("chi-square({df}): {e}")))?;
    let x: f64 = chi.sample(rng);
    Ok(df * scale / x)
}

/// Semi-conjugate update of one normal regression: coefficients given the
/// variance, then the variance given the coefficients. With no rows both come
/// from their priors.
pub fn update_outcome_block<const K: usize, R: Rng + ?Sized>(
    outcomes: &[f64],
    design: &[[f64; K]],
    prior: &PriorConfig,
    sigma2_current: f64,
    rng: &mut R,
) -> Result<([f64; K], f64)> {
    if outcomes.len() != design.len() {
        return Err(Error::contract(format!(
            "{} outcomes for {} design rows",
            outcomes.len(),
            design.len()
        )));
    }
    if sigma2_current.is_nan() || sigma2_current <= 0.0 {
        return Err(Error::domain(format!(
            "current variance {sigma2_current} is not positive"
        )));
    }
    let (mut prec, mut rhs) = prior_precision::<K>(prior);
    let mut xtx = SMatrix::<f64, K, K>::zeros();
    let mut xty = SVector::<f64, K>::zeros();
    for (&y, row) in outcomes.iter().zip(design) {
        for i in 0..K {
            if row[i] == 0.0 {
                continue;
            }
            xty[i] += row[i] * y;
            for j in 0..K {
                xtx[(i, j)] += row[i] * row[j];
            }
        }
    }
    prec += xtx / sigma2_current;
    rhs += xty / sigma2_current;
    let beta: [f64; K] = draw_from_precision(prec, rhs, rng)?.into();

    let ssr: f64 = outcomes
        .iter()
        .zip(design)
        .map(|(&y, row)| {
            let r = y - dot(row, &beta);
            r * r
        })
        .sum();
    let n = outcomes.len() as f64;
    let df = prior.sigma2_df + n;
    let scale = (prior.sigma2_df * prior.sigma2_scale + ssr) / df;
    let sigma2 = scaled_inv_chi2(df, scale, rng)?;
    Ok((beta, sigma2))
}
