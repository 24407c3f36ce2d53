use serde::{Deserialize, Serialize};

use super::{observed_slope_slot, ParameterVector, PrincipalStratum, SpecKind, TreatmentSequence};
use crate::error::{Error, Result};
use crate::normal;

/// Probability of each principal stratum, indexed by [`PrincipalStratum::index`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrataProbs(pub [f64; 4]);

impl StrataProbs {
    pub fn get(&self, g: PrincipalStratum) -> f64 {
        self.0[g.index()]
    }

    /// Marginal `Pr(Y1(w1) = y1)`.
    pub fn marginal_y1(&self, w1: bool, y1: bool) -> f64 {
        let (a, b) = latent_pair(w1, y1);
        self.get(a) + self.get(b)
    }
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::domain(format!("{what} must be finite")))
    }
}

fn dot4(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
}

/// Stratum probabilities from the three nested probits.
///
/// `alpha = (a11, a00, a10)`: a unit is in 11 with probability `1 - Phi(a11)`;
/// otherwise in 00 with probability `1 - Phi(a00)`; otherwise in 10 with
/// probability `1 - Phi(a10)`; the rest is 01.
pub fn strata_probs(alpha: &[f64; 3]) -> Result<StrataProbs> {
    check_finite(alpha, "alpha")?;
    let c11 = normal::cdf(alpha[0]);
    let c00 = normal::cdf(alpha[1]);
    let c10 = normal::cdf(alpha[2]);
    let p11 = normal::sf(alpha[0]);
    let p00 = c11 * normal::sf(alpha[1]);
    let p10 = c11 * c00 * normal::sf(alpha[2]);
    let p01 = c11 * c00 * c10;
    Ok(StrataProbs([p00, p01, p10, p11]))
}

/// Log stratum probabilities, finite for any finite `alpha`.
pub fn log_strata_probs(alpha: &[f64; 3]) -> Result<[f64; 4]> {
    check_finite(alpha, "alpha")?;
    let l11 = normal::ln_cdf(alpha[0]);
    let l00 = normal::ln_cdf(alpha[1]);
    let l10 = normal::ln_cdf(alpha[2]);
    Ok([
        l11 + normal::ln_sf(alpha[1]),
        l11 + l00 + l10,
        l11 + l00 + normal::ln_sf(alpha[2]),
        normal::ln_sf(alpha[0]),
    ])
}

/// `Pr(W2 = 1 | W1 = w1, G = g)` under the stratum-level probit.
pub fn assign_prob_lsi(gamma: &[[f64; 4]; 2], w1: bool, g: PrincipalStratum) -> Result<f64> {
    let block = &gamma[usize::from(w1)];
    check_finite(block, "gamma")?;
    Ok(normal::cdf(dot4(block, &g.design_row())))
}

/// `Pr(W2 = 1 | W1 = w1, Y1(w1) = y1)` under the observed-outcome probit.
pub fn assign_prob_si(gamma: &[[f64; 4]; 2], w1: bool, y1: bool) -> Result<f64> {
    let block = &gamma[usize::from(w1)];
    check_finite(block, "gamma")?;
    let mut eta = block[super::INTERCEPT];
    if y1 {
        eta += block[observed_slope_slot(w1)];
    }
    Ok(normal::cdf(eta))
}

/// Mean of `Y2(seq)` for members of stratum `g`.
pub fn outcome_mean(beta: &[[f64; 4]; 4], seq: TreatmentSequence, g: PrincipalStratum) -> f64 {
    dot4(&beta[seq.index()], &g.design_row())
}

/// The two strata compatible with observing `Y1 = y1` after first treatment `w1`.
pub fn latent_pair(w1: bool, y1: bool) -> (PrincipalStratum, PrincipalStratum) {
    use PrincipalStratum::*;
    match (w1, y1) {
        (false, false) => (S00, S01),
        (false, true) => (S10, S11),
        (true, false) => (S00, S10),
        (true, true) => (S01, S11),
    }
}

/// Population mean `E[Y2(seq)]` implied by `theta` under `spec`.
pub(crate) fn potential_mean(
    theta: &ParameterVector,
    seq: TreatmentSequence,
    spec: SpecKind,
) -> Result<f64> {
    match spec {
        SpecKind::Lsi | SpecKind::Si1 => {
            let pi = strata_probs(&theta.alpha)?;
            Ok(PrincipalStratum::ALL
                .iter()
                .map(|&g| pi.get(g) * outcome_mean(&theta.beta, seq, g))
                .sum())
        }
        SpecKind::Si2 => {
            let p1 = normal::cdf(theta.alpha[usize::from(seq.w1)]);
            let b = theta.beta_block(seq);
            Ok(b[super::INTERCEPT] + p1 * b[observed_slope_slot(seq.w1)])
        }
    }
}

/// `E[Y2(a) - Y2(b)]` under `spec`.
pub fn ate_from_params(
    theta: &ParameterVector,
    pair: (TreatmentSequence, TreatmentSequence),
    spec: SpecKind,
) -> Result<f64> {
    theta.validate(spec)?;
    Ok(potential_mean(theta, pair.0, spec)? - potential_mean(theta, pair.1, spec)?)
}
