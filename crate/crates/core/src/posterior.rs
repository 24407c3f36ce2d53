//! Posterior summaries: estimand draws, credible intervals, density grids and
//! convergence diagnostics.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{
    assign_prob_lsi, ate_from_params, contrast_label, parameter_names, strata_probs,
    PrincipalStratum, TreatmentSequence, ATE_CONTRASTS,
};
use crate::sampler::Chain;

/// A scalar estimand evaluated on each posterior draw.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Functional {
    /// `E[Y2(a)] - E[Y2(b)]`
    Ate(TreatmentSequence, TreatmentSequence),
    StratumProb(PrincipalStratum),
    /// Pr(W2 = 1 | W1 = w1, G = g)
    AssignProb {
        w1: bool,
        stratum: PrincipalStratum,
    },
}

impl Functional {
    pub fn name(&self) -> String {
        match *self {
            Functional::Ate(a, b) => contrast_label((a, b)),
            Functional::StratumProb(g) => format!("pi_{g}"),
            Functional::AssignProb { w1, stratum } => format!("h{}_{stratum}", u8::from(w1)),
        }
    }

    pub fn ates() -> Vec<Functional> {
        ATE_CONTRASTS
            .iter()
            .map(|&(a, b)| Functional::Ate(a, b))
            .collect()
    }

    pub fn stratum_probs() -> Vec<Functional> {
        PrincipalStratum::ALL
            .iter()
            .map(|&g| Functional::StratumProb(g))
            .collect()
    }

    /// Ordered as w1 = 0 then w1 = 1, strata 00, 01, 10, 11 within each.
    pub fn assign_probs() -> Vec<Functional> {
        [false, true]
            .iter()
            .flat_map(|&w1| {
                PrincipalStratum::ALL
                    .iter()
                    .map(move |&stratum| Functional::AssignProb { w1, stratum })
            })
            .collect()
    }
}

/// Evaluate `functional` on every stored draw of `chain`.
///
/// Stratum-level functionals are not defined for SI-2 fits, which carry no
/// stratum model; those entries are reported as "-" in summary tables.
pub fn functional_draws(chain: &Chain, functional: Functional) -> Result<Vec<f64>> {
    let spec = chain.spec;
    match functional {
        Functional::Ate(a, b) => chain
            .draws
            .iter()
            .map(|d| ate_from_params(d, (a, b), spec))
            .collect(),
        Functional::StratumProb(g) => {
            if !spec.has_strata() {
                return Err(Error::contract(format!(
                    "{} is not defined under {}: no stratum model (shown as \"-\")",
                    functional.name(),
                    spec.label()
                )));
            }
            chain
                .draws
                .iter()
                .map(|d| Ok(strata_probs(&d.alpha)?.get(g)))
                .collect()
        }
        Functional::AssignProb { w1, stratum } => {
            if !spec.has_strata() {
                return Err(Error::contract(format!(
                    "{} is not defined under {}: assignment does not depend on strata (shown as \"-\")",
                    functional.name(),
                    spec.label()
                )));
            }
            chain
                .draws
                .iter()
                .map(|d| assign_prob_lsi(&d.gamma, w1, stratum))
                .collect()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q975: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
}

impl SummaryRow {
    pub fn covers(&self, value: f64) -> bool {
        self.q025 <= value && value <= self.q975
    }

    pub fn excludes_zero(&self) -> bool {
        !self.covers(0.0)
    }
}

/// Sample quantile by linear interpolation between order statistics
/// (`h = (n - 1) p`). `sorted` must be ascending and nonempty.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let frac = h - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

fn sorted_copy(draws: &[f64]) -> Result<Vec<f64>> {
    if draws.iter().any(|x| x.is_nan()) {
        return Err(Error::domain("draws contain NaN"));
    }
    let mut v = draws.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

fn mean_sd(draws: &[f64]) -> (f64, f64) {
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let ss: f64 = draws.iter().map(|x| (x - mean) * (x - mean)).sum();
    let sd = if draws.len() > 1 {
        (ss / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

/// Mean, sd (n - 1 denominator) and quantiles of `draws`.
pub fn summarize(name: &str, draws: &[f64]) -> Result<SummaryRow> {
    if draws.len() < 2 {
        return Err(Error::contract(format!(
            "summarizing {name} needs at least 2 draws, got {}",
            draws.len()
        )));
    }
    let sorted = sorted_copy(draws)?;
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    let (mean, sd) = if lo == hi {
        (lo, 0.0)
    } else {
        let (m, s) = mean_sd(draws);
        (m.clamp(lo, hi), s)
    };
    let q = |p| quantile_sorted(&sorted, p);
    Ok(SummaryRow {
        name: name.to_string(),
        mean,
        sd,
        q025: q(0.025),
        q975: q(0.975),
        q25: q(0.25),
        median: q(0.5),
        q75: q(0.75),
    })
}

pub fn summarize_functional(chain: &Chain, functional: Functional) -> Result<SummaryRow> {
    summarize(&functional.name(), &functional_draws(chain, functional)?)
}

/// The six ATE summaries of one fit, in contrast order.
pub fn ate_summaries(chain: &Chain) -> Result<Vec<SummaryRow>> {
    Functional::ates()
        .into_iter()
        .map(|f| summarize_functional(chain, f))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub enum DensityGrid {
    Grid(Vec<(f64, f64)>),
    /// All draws share one value.
    PointMass(f64),
}

/// Gaussian kernel density estimate on `n_points` equally spaced points
/// spanning the draws plus four bandwidths either side. The bandwidth is
/// Silverman's rule `0.9 min(sd, IQR / 1.34) n^(-1/5)`.
pub fn density_grid(draws: &[f64], n_points: usize) -> Result<DensityGrid> {
    if draws.len() < 30 {
        return Err(Error::contract(format!(
            "density needs at least 30 draws, got {}",
            draws.len()
        )));
    }
    if n_points < 2 {
        return Err(Error::contract("density grid needs at least 2 points"));
    }
    let sorted = sorted_copy(draws)?;
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    if lo == hi {
        return Ok(DensityGrid::PointMass(lo));
    }
    let (_, sd) = mean_sd(draws);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let n = draws.len() as f64;
    let bw = 0.9 * spread * n.powf(-0.2);

    let start = lo - 4.0 * bw;
    let step = (hi - lo + 8.0 * bw) / (n_points - 1) as f64;
    let norm = 1.0 / (n * bw * (2.0 * std::f64::consts::PI).sqrt());
    let grid = (0..n_points)
        .map(|i| {
            let x = start + i as f64 * step;
            let d: f64 = sorted
                .iter()
                .map(|&v| {
                    let z = (x - v) / bw;
                    (-0.5 * z * z).exp()
                })
                .sum();
            (x, d * norm)
        })
        .collect();
    Ok(DensityGrid::Grid(grid))
}

fn autocovariances(x: &[f64], max_lag: usize) -> Vec<f64> {
    let n = x.len();
    let (m, _) = mean_sd(x);
    let c: Vec<f64> = x.iter().map(|v| v - m).collect();
    (0..=max_lag.min(n - 1))
        .map(|k| {
            c[..n - k]
                .iter()
                .zip(&c[k..])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / n as f64
        })
        .collect()
}

/// Effective sample size of one sequence using Geyer's initial positive
/// sequence estimator. Constant sequences report `n`.
pub fn effective_sample_size(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return n as f64;
    }
    let mut acov = Vec::new();
    let mut computed = 0usize;
    let mut tau = -1.0;
    let mut pair = 0usize;
    loop {
        let need = 2 * pair + 1;
        if need >= n {
            break;
        }
        if need >= computed {
            // Grow the autocovariance table geometrically.
            computed = (computed.max(32) * 2).min(n - 1);
            acov = autocovariances(x, computed);
        }
        if acov[0] <= 0.0 {
            return n as f64;
        }
        let gamma = (acov[2 * pair] + acov[need]) / acov[0];
        if gamma <= 0.0 {
            break;
        }
        tau += 2.0 * gamma;
        pair += 1;
    }
    let tau = tau.max(1.0 / n as f64);
    (n as f64 / tau).min(n as f64 * (n as f64).log10())
}

/// Between/within variance ratio over chains of equal length. Uses
/// `var+ = W + B / n`, so chains with identical draws give exactly 1.
pub fn rhat(chains: &[Vec<f64>]) -> Result<f64> {
    let m = chains.len();
    if m < 2 {
        return Err(Error::contract("R-hat needs at least two chains"));
    }
    let n = chains[0].len();
    if n < 2 || chains.iter().any(|c| c.len() != n) {
        return Err(Error::contract("R-hat needs chains of equal length >= 2"));
    }
    let stats: Vec<(f64, f64)> = chains.iter().map(|c| mean_sd(c)).collect();
    let w = stats.iter().map(|(_, s)| s * s).sum::<f64>() / m as f64;
    let grand = stats.iter().map(|(mu, _)| mu).sum::<f64>() / m as f64;
    let b = n as f64 / (m - 1) as f64
        * stats
            .iter()
            .map(|(mu, _)| (mu - grand) * (mu - grand))
            .sum::<f64>();
    if w == 0.0 {
        return Ok(if b == 0.0 { 1.0 } else { f64::INFINITY });
    }
    Ok(((w + b / n as f64) / w).sqrt())
}

/// Split R-hat: each chain is halved and the classic
/// `((n - 1) / n W + B / n) / W` ratio is taken over the halves.
pub fn split_rhat(chains: &[Vec<f64>]) -> Result<f64> {
    if chains.is_empty() {
        return Err(Error::contract("split R-hat needs at least one chain"));
    }
    let n = chains[0].len() / 2;
    if n < 2 || chains.iter().any(|c| c.len() != chains[0].len()) {
        return Err(Error::contract(
            "split R-hat needs chains of equal length >= 4",
        ));
    }
    let halves: Vec<&[f64]> = chains
        .iter()
        .flat_map(|c| [&c[..n], &c[c.len() - n..]])
        .collect();
    let m = halves.len();
    let stats: Vec<(f64, f64)> = halves.iter().map(|c| mean_sd(c)).collect();
    let w = stats.iter().map(|(_, s)| s * s).sum::<f64>() / m as f64;
    let grand = stats.iter().map(|(mu, _)| mu).sum::<f64>() / m as f64;
    let b = n as f64 / (m - 1) as f64
        * stats
            .iter()
            .map(|(mu, _)| (mu - grand) * (mu - grand))
            .sum::<f64>();
    if w == 0.0 {
        return Ok(if b == 0.0 { 1.0 } else { f64::INFINITY });
    }
    let nf = n as f64;
    Ok((((nf - 1.0) / nf * w + b / nf) / w).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiagnosticRow {
    pub name: String,
    /// Summed over chains.
    pub ess: f64,
    pub rhat: Option<f64>,
    pub split_rhat: f64,
    pub first_half_mean: f64,
    pub second_half_mean: f64,
}

fn diagnose_series(name: String, series: &[Vec<f64>]) -> Result<DiagnosticRow> {
    let ess = series.iter().map(|s| effective_sample_size(s)).sum();
    let rhat = if series.len() >= 2 {
        Some(rhat(series)?)
    } else {
        None
    };
    let split = split_rhat(series)?;
    let half = series[0].len() / 2;
    let (first, second): (Vec<f64>, Vec<f64>) = (
        series
            .iter()
            .flat_map(|s| s[..half].iter().copied())
            .collect(),
        series
            .iter()
            .flat_map(|s| s[half..].iter().copied())
            .collect(),
    );
    Ok(DiagnosticRow {
        name,
        ess,
        rhat,
        split_rhat: split,
        first_half_mean: mean_sd(&first).0,
        second_half_mean: mean_sd(&second).0,
    })
}

/// Per-parameter and per-ATE diagnostics over one or more chains of the same
/// fit. Parameters fixed at zero by the spec are skipped.
pub fn diagnostics(chains: &[Chain]) -> Result<Vec<DiagnosticRow>> {
    let first = chains
        .first()
        .ok_or_else(|| Error::contract("no chains to diagnose"))?;
    let spec = first.spec;
    if chains
        .iter()
        .any(|c| c.spec != spec || c.len() != first.len())
    {
        return Err(Error::contract("chains differ in spec or length"));
    }
    let names = parameter_names(spec);
    let mut rows = Vec::new();
    for (k, name) in names.into_iter().enumerate() {
        let series: Vec<Vec<f64>> = chains.iter().map(|c| c.column(k)).collect();
        if series.iter().all(|s| s.iter().all(|&v| v == 0.0)) {
            continue;
        }
        rows.push(diagnose_series(name, &series)?);
    }
    for f in Functional::ates() {
        let series: Vec<Vec<f64>> = chains
            .iter()
            .map(|c| functional_draws(c, f))
            .collect::<Result<_>>()?;
        rows.push(diagnose_series(f.name(), &series)?);
    }
    Ok(rows)
}
