//! Observed-data log-likelihood of `(W2, Y2)` given `(W1, Y1_obs)`.
//!
//! The first-period assignment factor is omitted under every spec, so values
//! are comparable across specs for the same data.

use super::{
    latent_pair, log_strata_probs, observed_slope_slot, outcome_mean, ParameterVector,
    PrincipalStratum, SpecKind, TreatmentSequence, INTERCEPT,
};
use crate::dataset::{Dataset, Unit};
use crate::error::{Error, Result};
use crate::normal::{self, log_sum_exp2};

/// Per-theta quantities shared by every unit.
#[derive(Clone, Debug)]
pub(crate) struct LogTables {
    pub log_pi: [f64; 4],
    /// `[w1][g][w2]`: log Pr(W2 = w2 | W1 = w1, G = g).
    pub log_h: [[[f64; 2]; 4]; 2],
    /// `[seq][g]`
    pub means: [[f64; 4]; 4],
    pub sigma2: [f64; 4],
}

impl LogTables {
    /// Tables for the stratum-level specs. Under SI-1 the constrained gammas
    /// make paired strata share the same assignment probability.
    pub fn stratum_level(theta: &ParameterVector) -> Result<Self> {
        let log_pi = log_strata_probs(&theta.alpha)?;
        let mut log_h = [[[0.0; 2]; 4]; 2];
        for (w1, table) in log_h.iter_mut().enumerate() {
            let block = &theta.gamma[w1];
            for g in PrincipalStratum::ALL {
                let row = g.design_row();
                let eta: f64 = block.iter().zip(row.iter()).map(|(c, x)| c * x).sum();
                table[g.index()] = [normal::ln_sf(eta), normal::ln_cdf(eta)];
            }
        }
        let mut means = [[0.0; 4]; 4];
        for seq in TreatmentSequence::ALL {
            for g in PrincipalStratum::ALL {
                means[seq.index()][g.index()] = outcome_mean(&theta.beta, seq, g);
            }
        }
        Ok(Self {
            log_pi,
            log_h,
            means,
            sigma2: theta.sigma2,
        })
    }

    pub fn log_f(&self, unit: &Unit, g: PrincipalStratum) -> f64 {
        let s = unit.sequence().index();
        normal::ln_pdf(unit.y2_obs, self.means[s][g.index()], self.sigma2[s])
    }

    /// Log of the unnormalized posterior weight of stratum `g` for `unit`.
    pub fn stratum_log_weight(
        &self,
        unit: &Unit,
        g: PrincipalStratum,
        with_assignment: bool,
    ) -> f64 {
        let mut lw = self.log_pi[g.index()] + self.log_f(unit, g);
        if with_assignment {
            lw += self.log_h[usize::from(unit.w1)][g.index()][usize::from(unit.w2)];
        }
        lw
    }
}

fn si2_unit(theta: &ParameterVector, unit: &Unit) -> f64 {
    let w1 = usize::from(unit.w1);
    let gamma = &theta.gamma[w1];
    let slot = observed_slope_slot(unit.w1);
    let y1 = f64::from(u8::from(unit.y1_obs));
    let eta_w2 = gamma[INTERCEPT] + gamma[slot] * y1;
    let log_h = if unit.w2 {
        normal::ln_cdf(eta_w2)
    } else {
        normal::ln_sf(eta_w2)
    };
    let a = theta.alpha[w1];
    let log_p_y1 = if unit.y1_obs {
        normal::ln_cdf(a)
    } else {
        normal::ln_sf(a)
    };
    let seq = unit.sequence();
    let b = theta.beta_block(seq);
    let mean = b[INTERCEPT] + b[slot] * y1;
    log_h + log_p_y1 + normal::ln_pdf(unit.y2_obs, mean, theta.sigma2[seq.index()])
}

fn si_log_h(theta: &ParameterVector, unit: &Unit) -> f64 {
    let gamma = &theta.gamma[usize::from(unit.w1)];
    let eta = gamma[INTERCEPT]
        + if unit.y1_obs {
            gamma[observed_slope_slot(unit.w1)]
        } else {
            0.0
        };
    if unit.w2 {
        normal::ln_cdf(eta)
    } else {
        normal::ln_sf(eta)
    }
}

fn unit_term(
    theta: &ParameterVector,
    tables: Option<&LogTables>,
    unit: &Unit,
    spec: SpecKind,
) -> f64 {
    match (spec, tables) {
        (SpecKind::Si2, _) => si2_unit(theta, unit),
        (SpecKind::Lsi, Some(t)) => {
            let (a, b) = unit.admissible_strata();
            log_sum_exp2(
                t.stratum_log_weight(unit, a, true),
                t.stratum_log_weight(unit, b, true),
            )
        }
        (SpecKind::Si1, Some(t)) => {
            let (a, b) = unit.admissible_strata();
            si_log_h(theta, unit)
                + log_sum_exp2(
                    t.stratum_log_weight(unit, a, false),
                    t.stratum_log_weight(unit, b, false),
                )
        }
        _ => unreachable!("stratum-level specs always build tables"),
    }
}

fn build_tables(theta: &ParameterVector, spec: SpecKind) -> Result<Option<LogTables>> {
    theta.validate(spec)?;
    if spec.has_strata() {
        LogTables::stratum_level(theta).map(Some)
    } else {
        Ok(None)
    }
}

fn accumulate<'a>(terms: impl Iterator<Item = (&'a Unit, f64)>) -> Result<f64> {
    let mut total = 0.0;
    for (unit, t) in terms {
        if t.is_nan() {
            return Err(Error::domain(format!(
                "log-likelihood of unit {} is NaN",
                unit.id
            )));
        }
        total += t;
    }
    Ok(total)
}

/// Log-likelihood contribution of one unit. May be `-inf` for a cell the
/// parameters give zero probability; NaN is reported as an error.
pub fn unit_log_likelihood(theta: &ParameterVector, unit: &Unit, spec: SpecKind) -> Result<f64> {
    let tables = build_tables(theta, spec)?;
    accumulate(std::iter::once((
        unit,
        unit_term(theta, tables.as_ref(), unit, spec),
    )))
}

/// Observed-data log-likelihood of `data` under `spec`.
pub fn log_likelihood(theta: &ParameterVector, data: &Dataset, spec: SpecKind) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::contract("log-likelihood needs at least one unit"));
    }
    let tables = build_tables(theta, spec)?;
    accumulate(
        data.units
            .iter()
            .map(|u| (u, unit_term(theta, tables.as_ref(), u, spec))),
    )
}

/// SI-1 log-likelihood evaluated after marginalizing over the missing
/// intermediate outcome: each unit contributes `h * pi_y1 * f_y1`, where
/// `pi_y1 = Pr(Y1(w1) = y1)` and `f_y1` is the outcome density given
/// `Y1(w1) = y1` (a two-component mixture). Equal to
/// `log_likelihood(theta, data, Si1)` up to rounding.
pub fn log_likelihood_si_grouped(theta: &ParameterVector, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::contract("log-likelihood needs at least one unit"));
    }
    theta.validate(SpecKind::Si1)?;
    let t = LogTables::stratum_level(theta)?;
    // [w1][y1]
    let mut log_pi_y1 = [[0.0; 2]; 2];
    for w1 in [false, true] {
        for y1 in [false, true] {
            let (a, b) = latent_pair(w1, y1);
            log_pi_y1[usize::from(w1)][usize::from(y1)] =
                log_sum_exp2(t.log_pi[a.index()], t.log_pi[b.index()]);
        }
    }
    accumulate(data.units.iter().map(|u| {
        let (a, b) = u.admissible_strata();
        let lp = log_pi_y1[usize::from(u.w1)][usize::from(u.y1_obs)];
        let log_f_y1 = log_sum_exp2(
            t.log_pi[a.index()] - lp + t.log_f(u, a),
            t.log_pi[b.index()] - lp + t.log_f(u, b),
        );
        (u, si_log_h(theta, u) + lp + log_f_y1)
    }))
}
