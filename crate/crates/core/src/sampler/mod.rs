//! Gibbs samplers with data augmentation.
//!
//! One sweep updates the stratum probits, the second-period assignment probit
//! and the four outcome regressions given the current strata, then imputes
//! the missing stratum of every unit (stratum-level specs only). Probit blocks
//! augment their latent utilities inside [`update_probit_block`].
//!
//! Each unit is confined to the two strata compatible with its observed
//! `(W1, Y1)`, so there is no global label symmetry. Local modes that swap the
//! components of a few cells do exist, which is why chains start from the
//! strata of a multi-start EM fit by default (see [`InitStrategy`]).

mod blocks;
mod init;
mod truncnorm;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use blocks::{scaled_inv_chi2, update_outcome_block, update_probit_block};
pub use init::{em_initial_strata, InitStrategy};
pub use truncnorm::truncated_normal_draw;

use crate::dataset::{Dataset, Unit};
use crate::error::{Error, Result};
use crate::model::likelihood::LogTables;
use crate::model::{
    observed_slope_slot, ParameterVector, PrincipalStratum, SpecKind, TreatmentSequence, INTERCEPT,
};

/// Independent priors shared by every coefficient and variance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorConfig {
    pub coef_mean: f64,
    pub coef_var: f64,
    /// Degrees of freedom of the scaled inverse chi-square prior on each variance.
    pub sigma2_df: f64,
    pub sigma2_scale: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            coef_mean: 0.0,
            coef_var: 100.0,
            sigma2_df: 1.0,
            sigma2_scale: 1.0,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.coef_mean.is_finite()
            && self.coef_var.is_finite()
            && self.coef_var > 0.0
            && self.sigma2_df.is_finite()
            && self.sigma2_df > 0.0
            && self.sigma2_scale.is_finite()
            && self.sigma2_scale > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::domain(format!(
                "improper prior configuration {self:?}"
            )))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McmcConfig {
    pub burn_in: usize,
    /// Post burn-in iterations; every `thin`-th one is stored.
    pub kept: usize,
    pub thin: usize,
    pub seed: u64,
    /// Starting strata of the stratum-level samplers.
    pub init: InitStrategy,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            burn_in: 1000,
            kept: 9000,
            thin: 1,
            seed: 1,
            init: InitStrategy::Em,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kept == 0 || self.thin == 0 {
            return Err(Error::domain("kept and thin must be positive"));
        }
        if self.kept < self.thin {
            return Err(Error::domain(format!(
                "kept ({}) < thin ({}) stores no draws",
                self.kept, self.thin
            )));
        }
        Ok(())
    }

    pub fn stored_draws(&self) -> usize {
        self.kept / self.thin
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainMeta {
    pub priors: PriorConfig,
    pub mcmc: McmcConfig,
    /// Stream index of the chain's generator; chain 0 is what `run_gibbs` returns.
    pub chain_index: u64,
    pub n_units: usize,
    pub wall_time_secs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub spec: SpecKind,
    pub draws: Vec<ParameterVector>,
    /// Imputed strata after the final sweep; empty under SI-2.
    pub final_strata: Vec<PrincipalStratum>,
    pub meta: ChainMeta,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Same draws and strata, ignoring run metadata such as wall time.
    pub fn same_draws(&self, other: &Chain) -> bool {
        self.spec == other.spec
            && self.draws == other.draws
            && self.final_strata == other.final_strata
    }

    /// Values of flattened parameter `k` across draws.
    pub fn column(&self, k: usize) -> Vec<f64> {
        self.draws.iter().map(|d| d.to_vec()[k]).collect()
    }
}

fn choose_stratum<R: Rng + ?Sized>(
    tables: &LogTables,
    unit: &Unit,
    with_assignment: bool,
    rng: &mut R,
) -> Result<PrincipalStratum> {
    let (a, b) = unit.admissible_strata();
    let la = tables.stratum_log_weight(unit, a, with_assignment);
    let lb = tables.stratum_log_weight(unit, b, with_assignment);
    if la.is_nan() || lb.is_nan() || (la == f64::NEG_INFINITY && lb == f64::NEG_INFINITY) {
        return Err(Error::Degenerate {
            unit: unit.id,
            detail: format!("log weights {a}: {la}, {b}: {lb}"),
        });
    }
    let p_a = 1.0 / (1.0 + (lb - la).exp());
    let u: f64 = rng.random();
    Ok(if u < p_a { a } else { b })
}

/// Impute the stratum of one unit from its conditional posterior given `theta`.
///
/// Under LSI the weight of stratum `g` is `pi_g * h_g * f_g`; under SI-1 the
/// assignment factor is common to both admissible strata and drops out.
pub fn augment_stratum<R: Rng + ?Sized>(
    unit: &Unit,
    theta: &ParameterVector,
    spec: SpecKind,
    rng: &mut R,
) -> Result<PrincipalStratum> {
    if !spec.has_strata() {
        return Err(Error::contract("SI-2 has no principal strata to impute"));
    }
    theta.validate(spec)?;
    let tables = LogTables::stratum_level(theta)?;
    choose_stratum(&tables, unit, spec == SpecKind::Lsi, rng)
}

/// Posterior probability of the first stratum of `unit.admissible_strata()`.
pub fn stratum_posterior_prob(unit: &Unit, theta: &ParameterVector, spec: SpecKind) -> Result<f64> {
    if !spec.has_strata() {
        return Err(Error::contract("SI-2 has no principal strata"));
    }
    theta.validate(spec)?;
    let tables = LogTables::stratum_level(theta)?;
    let (a, b) = unit.admissible_strata();
    let with_h = spec == SpecKind::Lsi;
    let la = tables.stratum_log_weight(unit, a, with_h);
    let lb = tables.stratum_log_weight(unit, b, with_h);
    Ok(1.0 / (1.0 + (lb - la).exp()))
}

fn initial_state<R: Rng + ?Sized>(
    data: &Dataset,
    spec: SpecKind,
    init: InitStrategy,
    rng: &mut R,
) -> (ParameterVector, Vec<PrincipalStratum>) {
    let mut theta = ParameterVector::zeros();
    for seq in TreatmentSequence::ALL {
        let ys: Vec<f64> = data
            .units
            .iter()
            .filter(|u| u.sequence() == seq)
            .map(|u| u.y2_obs)
            .collect();
        let var = if ys.len() >= 2 {
            let m = ys.iter().sum::<f64>() / ys.len() as f64;
            ys.iter().map(|y| (y - m) * (y - m)).sum::<f64>() / (ys.len() - 1) as f64
        } else {
            0.0
        };
        theta.sigma2[seq.index()] = if var > 0.0 && var.is_finite() {
            var
        } else {
            1.0
        };
    }
    let strata = if !spec.has_strata() {
        Vec::new()
    } else if init == InitStrategy::Em {
        em_initial_strata(data).0
    } else {
        data.units
            .iter()
            .map(|u| {
                let (a, b) = u.admissible_strata();
                if rng.random::<bool>() {
                    a
                } else {
                    b
                }
            })
            .collect()
    };
    (theta, strata)
}

struct Sweep<'a> {
    data: &'a Dataset,
    spec: SpecKind,
    priors: &'a PriorConfig,
    by_w1: [Vec<usize>; 2],
    by_seq: [Vec<usize>; 4],
}

impl<'a> Sweep<'a> {
    fn new(data: &'a Dataset, spec: SpecKind, priors: &'a PriorConfig) -> Self {
        let mut by_w1: [Vec<usize>; 2] = Default::default();
        let mut by_seq: [Vec<usize>; 4] = Default::default();
        for (i, u) in data.units.iter().enumerate() {
            by_w1[usize::from(u.w1)].push(i);
            by_seq[u.sequence().index()].push(i);
        }
        Self {
            data,
            spec,
            priors,
            by_w1,
            by_seq,
        }
    }

    fn augment<R: Rng + ?Sized>(
        &self,
        theta: &ParameterVector,
        strata: &mut [PrincipalStratum],
        rng: &mut R,
    ) -> Result<()> {
        let tables = LogTables::stratum_level(theta)?;
        let with_h = self.spec == SpecKind::Lsi;
        for (u, g) in self.data.units.iter().zip(strata.iter_mut()) {
            *g = choose_stratum(&tables, u, with_h, rng)?;
        }
        Ok(())
    }

    fn update_alpha<R: Rng + ?Sized>(
        &self,
        theta: &mut ParameterVector,
        strata: &[PrincipalStratum],
        rng: &mut R,
    ) -> Result<()> {
        use PrincipalStratum::*;
        if self.spec.has_strata() {
            // Nested probits: "success" means continuing past the stratum.
            let levels: [(&[PrincipalStratum], PrincipalStratum); 3] = [
                (&[S00, S01, S10, S11], S11),
                (&[S00, S01, S10], S00),
                (&[S01, S10], S10),
            ];
            for (k, (at_risk, stop)) in levels.into_iter().enumerate() {
                let resp: Vec<bool> = strata
                    .iter()
                    .filter(|g| at_risk.contains(g))
                    .map(|&g| g != stop)
                    .collect();
                let design = vec![[1.0]; resp.len()];
                theta.alpha[k] =
                    update_probit_block(&resp, &design, self.priors, &[theta.alpha[k]], rng)?[0];
            }
        } else {
            for w1 in 0..2 {
                let resp: Vec<bool> = self.by_w1[w1]
                    .iter()
                    .map(|&i| self.data.units[i].y1_obs)
                    .collect();
                let design = vec![[1.0]; resp.len()];
                theta.alpha[w1] =
                    update_probit_block(&resp, &design, self.priors, &[theta.alpha[w1]], rng)?[0];
            }
            theta.alpha[2] = 0.0;
        }
        Ok(())
    }

    fn update_gamma<R: Rng + ?Sized>(
        &self,
        theta: &mut ParameterVector,
        strata: &[PrincipalStratum],
        rng: &mut R,
    ) -> Result<()> {
        for w1 in [false, true] {
            let idx = &self.by_w1[usize::from(w1)];
            let resp: Vec<bool> = idx.iter().map(|&i| self.data.units[i].w2).collect();
            let block = &mut theta.gamma[usize::from(w1)];
            if self.spec == SpecKind::Lsi {
                let design: Vec<[f64; 4]> = idx.iter().map(|&i| strata[i].design_row()).collect();
                *block = update_probit_block(&resp, &design, self.priors, block, rng)?;
            } else {
                let slot = observed_slope_slot(w1);
                let design: Vec<[f64; 2]> = idx
                    .iter()
                    .map(|&i| [1.0, f64::from(u8::from(self.data.units[i].y1_obs))])
                    .collect();
                let cur = [block[INTERCEPT], block[slot]];
                let next = update_probit_block(&resp, &design, self.priors, &cur, rng)?;
                *block = [0.0; 4];
                block[INTERCEPT] = next[0];
                block[slot] = next[1];
            }
        }
        Ok(())
    }

    fn update_outcomes<R: Rng + ?Sized>(
        &self,
        theta: &mut ParameterVector,
        strata: &[PrincipalStratum],
        rng: &mut R,
    ) -> Result<()> {
        for seq in TreatmentSequence::ALL {
            let s = seq.index();
            let idx = &self.by_seq[s];
            let y: Vec<f64> = idx.iter().map(|&i| self.data.units[i].y2_obs).collect();
            if self.spec.has_strata() {
                let design: Vec<[f64; 4]> = idx.iter().map(|&i| strata[i].design_row()).collect();
                let (b, s2) = update_outcome_block(&y, &design, self.priors, theta.sigma2[s], rng)?;
                theta.beta[s] = b;
                theta.sigma2[s] = s2;
            } else {
                let slot = observed_slope_slot(seq.w1);
                let design: Vec<[f64; 2]> = idx
                    .iter()
                    .map(|&i| [1.0, f64::from(u8::from(self.data.units[i].y1_obs))])
                    .collect();
                let (b, s2) = update_outcome_block(&y, &design, self.priors, theta.sigma2[s], rng)?;
                theta.beta[s] = [0.0; 4];
                theta.beta[s][INTERCEPT] = b[0];
                theta.beta[s][slot] = b[1];
                theta.sigma2[s] = s2;
            }
        }
        Ok(())
    }
}

fn check_block(values: &[f64], iteration: usize, block: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            iteration,
            block: block.to_string(),
        })
    }
}

/// Tag a failure inside a block with the iteration at which it happened.
fn at_iteration<T>(r: Result<T>, iteration: usize, block: &str) -> Result<T> {
    r.map_err(|e| match e {
        Error::Domain(msg) => Error::NonFinite {
            iteration,
            block: format!("{block}: {msg}"),
        },
        other => other,
    })
}

fn run_chain(
    data: &Dataset,
    spec: SpecKind,
    priors: &PriorConfig,
    mcmc: &McmcConfig,
    chain_index: u64,
) -> Result<Chain> {
    priors.validate()?;
    mcmc.validate()?;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(mcmc.seed);
    rng.set_stream(chain_index);

    let sweep = Sweep::new(data, spec, priors);
    let (mut theta, mut strata) = initial_state(data, spec, mcmc.init, &mut rng);
    let total = mcmc.burn_in + mcmc.kept;
    let mut draws = Vec::with_capacity(mcmc.stored_draws());

    for it in 0..total {
        at_iteration(
            sweep.update_alpha(&mut theta, &strata, &mut rng),
            it,
            "alpha",
        )?;
        check_block(&theta.alpha, it, "alpha")?;
        at_iteration(
            sweep.update_gamma(&mut theta, &strata, &mut rng),
            it,
            "gamma",
        )?;
        check_block(theta.gamma.as_flattened(), it, "gamma")?;
        at_iteration(
            sweep.update_outcomes(&mut theta, &strata, &mut rng),
            it,
            "beta/sigma2",
        )?;
        check_block(theta.beta.as_flattened(), it, "beta")?;
        check_block(&theta.sigma2, it, "sigma2")?;
        if theta.sigma2.iter().any(|&s| s <= 0.0) {
            return Err(Error::NonFinite {
                iteration: it,
                block: "sigma2 underflowed to zero".into(),
            });
        }
        if spec.has_strata() {
            at_iteration(sweep.augment(&theta, &mut strata, &mut rng), it, "strata")?;
        }

        if it >= mcmc.burn_in && (it - mcmc.burn_in + 1).is_multiple_of(mcmc.thin) {
            draws.push(theta);
        }
    }

    Ok(Chain {
        spec,
        draws,
        final_strata: strata,
        meta: ChainMeta {
            priors: *priors,
            mcmc: *mcmc,
            chain_index,
            n_units: data.len(),
            wall_time_secs: start.elapsed().as_secs_f64(),
        },
    })
}

/// Run one chain. An empty dataset is allowed and yields prior draws.
pub fn run_gibbs(
    data: &Dataset,
    spec: SpecKind,
    priors: &PriorConfig,
    mcmc: &McmcConfig,
) -> Result<Chain> {
    run_chain(data, spec, priors, mcmc, 0)
}

/// Run `n_chains` independent chains concurrently; chain `k` uses generator
/// stream `k` of `mcmc.seed`.
pub fn run_chains(
    data: &Dataset,
    spec: SpecKind,
    priors: &PriorConfig,
    mcmc: &McmcConfig,
    n_chains: usize,
) -> Result<Vec<Chain>> {
    if n_chains == 0 {
        return Err(Error::domain("need at least one chain"));
    }
    (0..n_chains as u64)
        .into_par_iter()
        .map(|k| run_chain(data, spec, priors, mcmc, k))
        .collect()
}
