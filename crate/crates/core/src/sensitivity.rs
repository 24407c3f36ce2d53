//! Checks on sequential ignorability.
//!
//! Under sequential ignorability the second-period assignment probability is
//! the same for the two strata that share an observed `(W1, Y1)` cell. A fit
//! that lets assignment depend on the stratum can therefore be used to look
//! for evidence against it: [`equality_gaps`] returns the posterior of the
//! four within-cell differences. [`ipw_msm_estimate`] is a frequentist
//! estimate of the same effects that is valid when the assumption holds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::{assign_prob_lsi, contrast_label, PrincipalStratum, SpecKind, ATE_CONTRASTS};
use crate::posterior::{functional_draws, quantile_sorted, summarize, Functional, SummaryRow};
use crate::sampler::Chain;

/// Two strata sharing an observed cell under first-period treatment `w1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Pairing {
    pub id: usize,
    pub w1: bool,
    pub first: PrincipalStratum,
    pub second: PrincipalStratum,
}

impl Pairing {
    pub fn label(&self) -> String {
        format!("w1={}:{}-{}", u8::from(self.w1), self.first, self.second)
    }
}

pub const PAIRINGS: [Pairing; 4] = {
    use PrincipalStratum::*;
    [
        Pairing {
            id: 1,
            w1: false,
            first: S00,
            second: S01,
        },
        Pairing {
            id: 2,
            w1: false,
            first: S10,
            second: S11,
        },
        Pairing {
            id: 3,
            w1: true,
            first: S00,
            second: S10,
        },
        Pairing {
            id: 4,
            w1: true,
            first: S01,
            second: S11,
        },
    ]
};

/// Draw-wise `h(first) - h(second)` for each of the four pairings.
pub fn equality_gaps(chain: &Chain) -> Result<Vec<(Pairing, Vec<f64>)>> {
    if chain.spec != SpecKind::Lsi {
        return Err(Error::contract(format!(
            "equality gaps need a fit with stratum-dependent assignment (lsi), got {}",
            chain.spec.label()
        )));
    }
    PAIRINGS
        .iter()
        .map(|&p| {
            let gaps = chain
                .draws
                .iter()
                .map(|d| {
                    Ok(assign_prob_lsi(&d.gamma, p.w1, p.first)?
                        - assign_prob_lsi(&d.gamma, p.w1, p.second)?)
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok((p, gaps))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensitivityConfig {
    /// Coverage of the equal-tailed interval used to flag a gap.
    pub interval_level: f64,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        Self {
            interval_level: 0.95,
        }
    }
}

impl SensitivityConfig {
    pub fn validate(&self) -> Result<()> {
        if self.interval_level > 0.0 && self.interval_level < 1.0 {
            Ok(())
        } else {
            Err(Error::domain(format!(
                "interval level {} is not in (0, 1)",
                self.interval_level
            )))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GapRow {
    pub pairing: Pairing,
    pub summary: SummaryRow,
    pub lower: f64,
    pub upper: f64,
    pub excludes_zero: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SensitivityReport {
    pub level: f64,
    pub gaps: Vec<GapRow>,
    /// Posterior of every Pr(W2 = 1 | W1, G), w1 = 0 first.
    pub assignment: Vec<SummaryRow>,
}

impl SensitivityReport {
    pub fn any_excludes_zero(&self) -> bool {
        self.gaps.iter().any(|g| g.excludes_zero)
    }
}

pub fn sensitivity_report(chain: &Chain, cfg: &SensitivityConfig) -> Result<SensitivityReport> {
    cfg.validate()?;
    let tail = 0.5 * (1.0 - cfg.interval_level);
    let gaps = equality_gaps(chain)?
        .into_iter()
        .map(|(pairing, draws)| {
            let summary = summarize(&pairing.label(), &draws)?;
            let mut sorted = draws;
            sorted.sort_by(f64::total_cmp);
            let lower = quantile_sorted(&sorted, tail);
            let upper = quantile_sorted(&sorted, 1.0 - tail);
            Ok(GapRow {
                pairing,
                summary,
                lower,
                upper,
                excludes_zero: lower > 0.0 || upper < 0.0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let assignment = Functional::assign_probs()
        .into_iter()
        .map(|f| summarize(&f.name(), &functional_draws(chain, f)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(SensitivityReport {
        level: cfg.interval_level,
        gaps,
        assignment,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IpwEstimate {
    pub name: String,
    /// `None` when a cell needed by either sequence is empty.
    pub estimate: Option<f64>,
    pub se: Option<f64>,
    /// Bootstrap replicates in which the contrast was defined.
    pub replicates_used: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IpwReport {
    pub estimates: Vec<IpwEstimate>,
    /// Labels `w1 y1 w2` of empty observed cells in the original data.
    pub empty_cells: Vec<String>,
    pub bootstrap_reps: usize,
    pub seed: u64,
}

fn cell_label(cell: usize) -> String {
    format!("O({},{},{})", cell >> 2, (cell >> 1) & 1, cell & 1)
}

/// Weighted mean of `Y2` per sequence with weights
/// `1 / (p(W1) p(W2 | W1, Y1))` from empirical cell frequencies. `None` for a
/// sequence whose `(w1, y1, w2)` cells are not all populated.
fn sequence_means(rows: impl Iterator<Item = (usize, f64)>) -> [Option<f64>; 4] {
    let mut count = [0usize; 8];
    let mut sum = [0.0f64; 8];
    for (cell, y) in rows {
        count[cell] += 1;
        sum[cell] += y;
    }
    let n: usize = count.iter().sum();
    let mut out = [None; 4];
    for w1 in 0..2 {
        let n_w1: usize = count[4 * w1..4 * w1 + 4].iter().sum();
        for w2 in 0..2 {
            let mut num = 0.0;
            let mut den = 0.0;
            let mut ok = n_w1 > 0;
            for y1 in 0..2 {
                let base = 4 * w1 + 2 * y1;
                let n_wy = count[base] + count[base + 1];
                if n_wy == 0 {
                    continue;
                }
                let c = base + w2;
                if count[c] == 0 {
                    ok = false;
                    break;
                }
                let weight = 1.0 / ((n_w1 as f64 / n as f64) * (count[c] as f64 / n_wy as f64));
                num += weight * sum[c];
                den += weight * count[c] as f64;
            }
            if ok && den > 0.0 {
                out[2 * w1 + w2] = Some(num / den);
            }
        }
    }
    out
}

fn contrasts(means: &[Option<f64>; 4]) -> [Option<f64>; 6] {
    ATE_CONTRASTS.map(|(a, b)| Some(means[a.index()]? - means[b.index()]?))
}

/// Inverse-probability-weighted estimates of the six effects from a saturated
/// marginal structural model, with nonparametric bootstrap standard errors.
pub fn ipw_msm_estimate(data: &Dataset, bootstrap_reps: usize, seed: u64) -> Result<IpwReport> {
    if data.is_empty() {
        return Err(Error::contract("IPW needs a nonempty dataset"));
    }
    let rows: Vec<(usize, f64)> = data.units.iter().map(|u| (u.cell(), u.y2_obs)).collect();
    let point = contrasts(&sequence_means(rows.iter().copied()));

    let n = rows.len();
    let reps: Vec<[Option<f64>; 6]> = (0..bootstrap_reps as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r);
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            contrasts(&sequence_means(idx.iter().map(|&i| rows[i])))
        })
        .collect();

    let estimates = ATE_CONTRASTS
        .iter()
        .enumerate()
        .map(|(k, &pair)| {
            let vals: Vec<f64> = reps.iter().filter_map(|r| r[k]).collect();
            let se = if vals.len() >= 2 {
                let m = vals.iter().sum::<f64>() / vals.len() as f64;
                Some(
                    (vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (vals.len() - 1) as f64)
                        .sqrt(),
                )
            } else {
                None
            };
            IpwEstimate {
                name: contrast_label(pair),
                estimate: point[k],
                se: point[k].and(se),
                replicates_used: vals.len(),
            }
        })
        .collect();

    let counts = data.cell_counts();
    let empty_cells = (0..8).filter(|&c| counts[c] == 0).map(cell_label).collect();
    Ok(IpwReport {
        estimates,
        empty_cells,
        bootstrap_reps,
        seed,
    })
}
