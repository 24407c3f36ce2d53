//! Starting strata for the stratum-level samplers.
//!
//! Each unit's stratum is one of two, and the labels are identified only
//! through the requirement that both first-period arms imply the same stratum
//! probabilities. A chain started from random strata can settle in a labeling
//! that swaps the two components of some observed cells and never leave it.
//! The initializer therefore fits the saturated model by EM from every
//! orientation of a median split of the eight observed cells, refines the
//! most promising fits to convergence and starts from the best one.
//!
//! In the saturated parameterization every model is a free table: stratum
//! probabilities, `Pr(W2 = 1 | W1, G)` and one outcome mean per sequence and
//! stratum, so every M-step is closed form.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::model::PrincipalStratum;
use crate::normal;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitStrategy {
    /// Multi-start EM on the saturated model.
    #[default]
    Em,
    /// Each unit uniformly at random within its admissible pair.
    Random,
}

const SHORT_ITERS: usize = 25;
const REFINED_STARTS: usize = 8;
const MAX_ITERS: usize = 400;
const TOLERANCE: f64 = 1e-8;

struct Cells<'a> {
    data: &'a Dataset,
    first: Vec<usize>,
    second: Vec<usize>,
    w1: Vec<usize>,
    seq: Vec<usize>,
    n_seq: [usize; 4],
}

impl<'a> Cells<'a> {
    fn new(data: &'a Dataset) -> Self {
        let mut n_seq = [0; 4];
        let mut first = Vec::with_capacity(data.len());
        let mut second = Vec::with_capacity(data.len());
        for u in &data.units {
            let (a, b) = u.admissible_strata();
            first.push(a.index());
            second.push(b.index());
            n_seq[u.sequence().index()] += 1;
        }
        Self {
            data,
            first,
            second,
            w1: data.units.iter().map(|u| usize::from(u.w1)).collect(),
            seq: data.units.iter().map(|u| u.sequence().index()).collect(),
            n_seq,
        }
    }

    /// One EM iteration: M-step from `resp` (probability of the first
    /// admissible stratum), then E-step. Returns the log-likelihood of the
    /// fitted parameters.
    fn step(&self, resp: &mut [f64]) -> f64 {
        let n = resp.len() as f64;
        let mut mass = [0.0; 4];
        let mut arm = [[0.0; 4]; 2];
        let mut treated = [[0.0; 4]; 2];
        let mut cell_mass = [[0.0; 4]; 4];
        let mut cell_sum = [[0.0; 4]; 4];
        for (i, u) in self.data.units.iter().enumerate() {
            for (g, r) in [(self.first[i], resp[i]), (self.second[i], 1.0 - resp[i])] {
                mass[g] += r;
                arm[self.w1[i]][g] += r;
                if u.w2 {
                    treated[self.w1[i]][g] += r;
                }
                cell_mass[self.seq[i]][g] += r;
                cell_sum[self.seq[i]][g] += r * u.y2_obs;
            }
        }
        let log_pi = mass.map(|m| (m / n).max(1e-12).ln());
        let mut log_h = [[[0.0; 2]; 4]; 2];
        for w1 in 0..2 {
            for g in 0..4 {
                let h = if arm[w1][g] > 0.0 {
                    treated[w1][g] / arm[w1][g]
                } else {
                    0.5
                };
                let h = h.clamp(1e-9, 1.0 - 1e-9);
                log_h[w1][g] = [(1.0 - h).ln(), h.ln()];
            }
        }
        let mut mu = [[0.0; 4]; 4];
        for s in 0..4 {
            let total: f64 = cell_sum[s].iter().sum();
            let fallback = if self.n_seq[s] > 0 {
                total / self.n_seq[s] as f64
            } else {
                0.0
            };
            for g in 0..4 {
                mu[s][g] = if cell_mass[s][g] > 1e-12 {
                    cell_sum[s][g] / cell_mass[s][g]
                } else {
                    fallback
                };
            }
        }
        let mut ss = [0.0; 4];
        for (i, u) in self.data.units.iter().enumerate() {
            let s = self.seq[i];
            let da = u.y2_obs - mu[s][self.first[i]];
            let db = u.y2_obs - mu[s][self.second[i]];
            ss[s] += resp[i] * da * da + (1.0 - resp[i]) * db * db;
        }
        let sigma2: [f64; 4] = std::array::from_fn(|s| {
            if self.n_seq[s] > 1 {
                (ss[s] / self.n_seq[s] as f64).max(1e-6)
            } else {
                1.0
            }
        });

        let mut ll = 0.0;
        for (i, u) in self.data.units.iter().enumerate() {
            let s = self.seq[i];
            let w2 = usize::from(u.w2);
            let lw = |g: usize| {
                log_pi[g] + log_h[self.w1[i]][g][w2] + normal::ln_pdf(u.y2_obs, mu[s][g], sigma2[s])
            };
            let la = lw(self.first[i]);
            let lb = lw(self.second[i]);
            ll += normal::log_sum_exp2(la, lb);
            resp[i] = 1.0 / (1.0 + (lb - la).exp());
        }
        ll
    }

    fn run(&self, resp: &mut [f64], max_iters: usize) -> f64 {
        let mut ll = f64::NEG_INFINITY;
        for _ in 0..max_iters {
            let next = self.step(resp);
            let done = (next - ll).abs() <= TOLERANCE * next.abs();
            ll = next;
            if done {
                break;
            }
        }
        ll
    }

    /// Hard responsibilities from a median split of every observed cell;
    /// bit `c` of `orientation` sends the upper half of cell `c` to the first
    /// admissible stratum.
    fn median_split(&self, medians: &[Option<f64>; 8], orientation: u32) -> Vec<f64> {
        self.data
            .units
            .iter()
            .map(|u| {
                let c = u.cell();
                let upper = medians[c].is_some_and(|m| u.y2_obs > m);
                let flip = orientation >> c & 1 == 1;
                if upper == flip {
                    1.0
                } else {
                    0.0
                }
            })
            .collect()
    }
}

fn cell_medians(data: &Dataset) -> [Option<f64>; 8] {
    let mut by_cell: [Vec<f64>; 8] = Default::default();
    for u in &data.units {
        by_cell[u.cell()].push(u.y2_obs);
    }
    by_cell.map(|mut v| {
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let m = v.len() / 2;
        Some(if v.len() % 2 == 0 {
            0.5 * (v[m - 1] + v[m])
        } else {
            v[m]
        })
    })
}

/// Most probable stratum of every unit under the best EM fit, and that fit's
/// log-likelihood. Deterministic.
pub fn em_initial_strata(data: &Dataset) -> (Vec<PrincipalStratum>, f64) {
    if data.is_empty() {
        return (Vec::new(), 0.0);
    }
    let cells = Cells::new(data);
    let medians = cell_medians(data);
    let mut short: Vec<(f64, Vec<f64>)> = (0..256u32)
        .into_par_iter()
        .map(|o| {
            let mut resp = cells.median_split(&medians, o);
            let ll = cells.run(&mut resp, SHORT_ITERS);
            (ll, resp)
        })
        .collect();
    short.sort_by(|a, b| b.0.total_cmp(&a.0));
    short.truncate(REFINED_STARTS);
    let refined: Vec<(f64, Vec<f64>)> = short
        .into_par_iter()
        .map(|(_, mut resp)| {
            let ll = cells.run(&mut resp, MAX_ITERS);
            (ll, resp)
        })
        .collect();
    let (ll, resp) = refined
        .into_iter()
        .reduce(|best, x| if x.0 > best.0 { x } else { best })
        .expect("at least one start");
    let strata = data
        .units
        .iter()
        .zip(&resp)
        .map(|(u, &r)| {
            let (a, b) = u.admissible_strata();
            if r >= 0.5 {
                a
            } else {
                b
            }
        })
        .collect();
    (strata, ll)
}
