//! End-to-end acceptance checks, one PASS/FAIL line per criterion.
//!
//! Run with `cargo test --release --test acceptance`. The exit status is
//! nonzero if any criterion fails. Fits use the full 1000 + 9000 schedule on
//! the shipped reference scenarios and take several minutes on one core.

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use seqlsi::model::{
    assign_prob_lsi, latent_pair, log_likelihood, log_likelihood_si_grouped, strata_probs,
    INTERACTION, INTERCEPT, SLOPE_Y1_0, SLOPE_Y1_1,
};
use seqlsi::normal;
use seqlsi::posterior::{ate_summaries, SummaryRow};
use seqlsi::sampler::{run_gibbs, truncated_normal_draw, Chain, McmcConfig, PriorConfig};
use seqlsi::sensitivity::{ipw_msm_estimate, sensitivity_report, SensitivityConfig};
use seqlsi::simgen::{generate, true_ates, ScenarioConfig, TARGET_ATES_2DP};
use seqlsi::{Dataset, ParameterVector, PrincipalStratum, SpecKind};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn fmt_list(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:.3}"))
        .collect::<Vec<_>>()
        .join(", ")
}

fn random_theta(rng: &mut ChaCha8Rng) -> ParameterVector {
    let mut u = |lo: f64, hi: f64| lo + (hi - lo) * rng.random::<f64>();
    let mut t = ParameterVector::zeros();
    for a in &mut t.alpha {
        *a = u(-1.2, 1.2);
    }
    for g in &mut t.gamma {
        for c in g.iter_mut() {
            *c = u(-1.5, 1.5);
        }
    }
    for b in &mut t.beta {
        b[INTERCEPT] = u(-5.0, 15.0);
        b[SLOPE_Y1_0] = u(-4.0, 4.0);
        b[SLOPE_Y1_1] = u(-4.0, 4.0);
        b[INTERACTION] = u(-2.0, 2.0);
    }
    for s in &mut t.sigma2 {
        *s = u(0.3, 3.0);
    }
    t.with_si_constraint()
}

fn marginalization_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for k in 0..100u64 {
        let theta = random_theta(&mut rng);
        let cfg = ScenarioConfig {
            theta_true: theta,
            spec: SpecKind::Si1,
            n: 200,
            p_w1: 0.5,
            seed: 1000 + k,
        };
        let data = generate(&cfg).expect("valid scenario");
        let direct = log_likelihood(&theta, &data, SpecKind::Si1).expect("finite");
        let grouped = log_likelihood_si_grouped(&theta, &data).expect("finite");
        worst = worst.max((direct - grouped).abs());
    }
    outcome(
        worst <= 1e-10,
        format!("max |delta| = {worst:.2e} over 100 configurations"),
    )
}

const BIG_N: usize = 1_000_000;

fn generator_consistency(big: &Dataset, cfg: &ScenarioConfig) -> Outcome {
    let n = big.len() as f64;
    let theta = &cfg.theta_true;
    let pi = strata_probs(&theta.alpha).unwrap();
    let mut worst = 0.0f64;
    let mut z_of = |count: usize, p: f64| {
        let z = (count as f64 / n - p) / (p * (1.0 - p) / n).sqrt();
        worst = worst.max(z.abs());
    };
    let mut counts = [0usize; 4];
    for u in &big.units {
        counts[u.latent.as_ref().unwrap().stratum.index()] += 1;
    }
    for g in PrincipalStratum::ALL {
        z_of(counts[g.index()], pi.get(g));
    }
    let cells = big.cell_counts();
    for w1 in [false, true] {
        let pw = if w1 { cfg.p_w1 } else { 1.0 - cfg.p_w1 };
        for y1 in [false, true] {
            let (a, b) = latent_pair(w1, y1);
            for w2 in [false, true] {
                let p: f64 = [a, b]
                    .iter()
                    .map(|&g| {
                        let h = assign_prob_lsi(&theta.gamma, w1, g).unwrap();
                        pi.get(g) * if w2 { h } else { 1.0 - h }
                    })
                    .sum();
                let c = 4 * usize::from(w1) + 2 * usize::from(y1) + usize::from(w2);
                z_of(cells[c], pw * p);
            }
        }
    }
    outcome(
        worst < 4.0,
        format!("max |z| = {worst:.2} over 4 strata and 8 cells, n = {BIG_N}"),
    )
}

fn ate_calibration(big: &Dataset, cfg: &ScenarioConfig) -> Outcome {
    let truth: Vec<f64> = true_ates(&cfg.theta_true)
        .unwrap()
        .into_iter()
        .map(|(_, v)| v)
        .collect();
    let rounded_ok = truth
        .iter()
        .zip(TARGET_ATES_2DP)
        .all(|(v, t)| ((v * 100.0).round() / 100.0 - t).abs() < 1e-9);
    let n = big.len() as f64;
    let mut worst = 0.0f64;
    for (pair, &closed) in seqlsi::model::ATE_CONTRASTS.iter().zip(&truth) {
        let diffs: Vec<f64> = big
            .units
            .iter()
            .map(|u| {
                let y = &u.latent.as_ref().unwrap().potential_y2;
                y[pair.0.index()] - y[pair.1.index()]
            })
            .collect();
        let mean = diffs.iter().sum::<f64>() / n;
        let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0);
        worst = worst.max(((mean - closed) / (var / n).sqrt()).abs());
    }
    outcome(
        rounded_ok && worst < 3.0,
        format!(
            "true ATEs [{}] round to targets: {rounded_ok}; max MC |z| = {worst:.2}",
            fmt_list(&truth)
        ),
    )
}

struct Fit {
    chain: Chain,
    rows: Vec<SummaryRow>,
}

fn fit(data: &Dataset, spec: SpecKind) -> Fit {
    let chain = run_gibbs(data, spec, &PriorConfig::default(), &McmcConfig::default())
        .expect("fit succeeds");
    let rows = ate_summaries(&chain).expect("summaries");
    Fit { chain, rows }
}

fn covers_all(f: &Fit, truth: &[f64]) -> (bool, Vec<String>) {
    let misses: Vec<String> = f
        .rows
        .iter()
        .zip(truth)
        .filter(|(r, &t)| !r.covers(t))
        .map(|(r, t)| format!("{} [{:.3}, {:.3}] vs {t:.3}", r.name, r.q025, r.q975))
        .collect();
    (misses.is_empty(), misses)
}

fn lsi_recovery(f: &Fit, truth: &[f64]) -> Outcome {
    let (covered, misses) = covers_all(f, truth);
    let max_sd = f.rows.iter().map(|r| r.sd).fold(0.0, f64::max);
    let secs = f.chain.meta.wall_time_secs;
    outcome(
        covered && max_sd < 0.5 && secs < 600.0,
        format!(
            "means [{}], max sd {max_sd:.3}, {secs:.0}s; misses: {misses:?}",
            fmt_list(&f.rows.iter().map(|r| r.mean).collect::<Vec<_>>())
        ),
    )
}

fn misspecification(f: &Fit, truth: &[f64]) -> Outcome {
    let excluded = f
        .rows
        .iter()
        .zip(truth)
        .filter(|(r, &t)| !r.covers(t))
        .count();
    let r = &f.rows[1];
    let toward_zero = !r.covers(truth[1]) && r.mean.abs() < truth[1].abs();
    outcome(
        excluded >= 3 && toward_zero,
        format!(
            "{excluded}/6 intervals exclude truth; {} mean {:.3} vs true {:.3}",
            r.name, r.mean, truth[1]
        ),
    )
}

fn si_agreement(fits: &[(SpecKind, &Fit)], truth: &[f64]) -> Outcome {
    let mut misses = Vec::new();
    for (spec, f) in fits {
        let (_, m) = covers_all(f, truth);
        misses.extend(m.into_iter().map(|s| format!("{spec}: {s}")));
    }
    outcome(
        misses.is_empty(),
        format!("3 specs x 6 ATEs; misses: {misses:?}"),
    )
}

fn sensitivity_discrimination(si_fit: &Fit, lsi_fit: &Fit) -> Outcome {
    let cfg = SensitivityConfig::default();
    let si = sensitivity_report(&si_fit.chain, &cfg).unwrap();
    let lsi = sensitivity_report(&lsi_fit.chain, &cfg).unwrap();
    let si_flags = si.gaps.iter().filter(|g| g.excludes_zero).count();
    let lsi_flags = lsi.gaps.iter().filter(|g| g.excludes_zero).count();
    outcome(
        si_flags == 0 && lsi_flags >= 1,
        format!("gap intervals excluding 0: SI data {si_flags}/4, LSI data {lsi_flags}/4"),
    )
}

fn ipw_oracle(data: &Dataset, truth: &[f64]) -> Outcome {
    let report = ipw_msm_estimate(data, 500, 1).unwrap();
    let mut worst = 0.0f64;
    let mut ok = true;
    for (e, &t) in report.estimates.iter().zip(truth) {
        match (e.estimate, e.se) {
            (Some(est), Some(se)) if se > 0.0 => worst = worst.max(((est - t) / se).abs()),
            _ => ok = false,
        }
    }
    outcome(
        ok && worst <= 3.0,
        format!("max |estimate - truth| / se = {worst:.2}, 500 bootstrap reps"),
    )
}

fn prior_recovery() -> (bool, String) {
    let priors = PriorConfig::default();
    let mcmc = McmcConfig {
        burn_in: 0,
        kept: 10_000,
        ..McmcConfig::default()
    };
    let chain = run_gibbs(&Dataset::new(Vec::new()), SpecKind::Lsi, &priors, &mcmc).unwrap();
    let n = chain.len() as f64;
    let probs = [0.05, 0.25, 0.5, 0.75, 0.95];
    let sd = priors.coef_var.sqrt();
    let mut worst = 0.0f64;
    // Empirical CDF at each theoretical quantile must match its level.
    let mut check = |col: Vec<f64>, q: &dyn Fn(f64) -> f64| {
        for p in probs {
            let x = q(p);
            let ecdf = col.iter().filter(|&&v| v <= x).count() as f64 / n;
            worst = worst.max(((ecdf - p) / (p * (1.0 - p) / n).sqrt()).abs());
        }
    };
    for k in [0, 3, 11, 26] {
        check(chain.column(k), &|p| {
            priors.coef_mean + sd * normal::quantile(p)
        });
    }
    // X = df * scale / chi2_df; for df = 1, chi2_1 = Z^2.
    let df = priors.sigma2_df;
    assert_eq!(df, 1.0, "closed form below assumes one degree of freedom");
    check(chain.column(27), &|p| {
        priors.sigma2_scale / normal::quantile(1.0 - p / 2.0).powi(2)
    });
    (worst < 4.0, format!("prior quantiles max |z| = {worst:.2}"))
}

fn truncnorm_moments() -> (bool, String) {
    let cases = [
        (0.0, f64::INFINITY),
        (-1.0, 2.0),
        (2.5, f64::INFINITY),
        (8.0, f64::INFINITY),
        (f64::NEG_INFINITY, -7.0),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst = 0.0f64;
    for (a, b) in cases {
        let n = 100_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| truncated_normal_draw(0.0, 1.0, a, b, &mut rng).unwrap())
            .collect();
        let (pa, pb) = (normal::pdf(a), normal::pdf(b));
        // Upper-tail masses via the survival function stay accurate deep out.
        let mass = if a > 0.0 {
            normal::sf(a) - normal::sf(b)
        } else {
            normal::cdf(b) - normal::cdf(a)
        };
        let mean = (pa - pb) / mass;
        let ta = if a.is_finite() { a * pa } else { 0.0 };
        let tb = if b.is_finite() { b * pb } else { 0.0 };
        let var = 1.0 + (ta - tb) / mass - mean * mean;
        let m = xs.iter().sum::<f64>() / n as f64;
        let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
        let z_mean = (m - mean) / (var / n as f64).sqrt();
        // Loose enough for the near-exponential shape of the deep tails.
        let z_var = (v - var) / (var * (8.0 / n as f64).sqrt());
        worst = worst.max(z_mean.abs()).max(z_var.abs());
        if xs.iter().any(|&x| x <= a || x >= b) {
            return (false, format!("draw outside ({a}, {b})"));
        }
    }
    (
        worst < 4.0,
        format!("truncated-normal moments max |z| = {worst:.2}"),
    )
}

fn duplicate_seeds() -> (bool, String) {
    let mut cfg = ScenarioConfig::reference_lsi();
    cfg.n = 500;
    let data = generate(&cfg).unwrap();
    let mcmc = McmcConfig {
        burn_in: 100,
        kept: 300,
        seed: 9,
        ..McmcConfig::default()
    };
    let same = SpecKind::ALL.iter().all(|&spec| {
        let a = run_gibbs(&data, spec, &PriorConfig::default(), &mcmc).unwrap();
        let b = run_gibbs(&data, spec, &PriorConfig::default(), &mcmc).unwrap();
        a.same_draws(&b)
    });
    (
        same,
        format!("repeat runs bit-identical for all specs: {same}"),
    )
}

fn all_finite(chains: &[&Chain]) -> bool {
    chains.iter().all(|c| {
        c.draws
            .iter()
            .all(|d| d.to_vec().iter().all(|v| v.is_finite()))
    })
}

fn main() -> ExitCode {
    let start = Instant::now();
    let lsi_cfg = ScenarioConfig::reference_lsi();
    let si_cfg = ScenarioConfig::reference_si();
    let truth: Vec<f64> = true_ates(&lsi_cfg.theta_true)
        .unwrap()
        .into_iter()
        .map(|(_, v)| v)
        .collect();
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();

    results.push((1, "marginalization identity", marginalization_identity()));
    {
        let mut big_cfg = lsi_cfg.clone();
        big_cfg.n = BIG_N;
        let big = generate(&big_cfg).unwrap();
        results.push((
            2,
            "generator consistency",
            generator_consistency(&big, &big_cfg),
        ));
        results.push((3, "true-ATE calibration", ate_calibration(&big, &big_cfg)));
    }

    let lsi_data = generate(&lsi_cfg).unwrap();
    let si_data = generate(&si_cfg).unwrap();
    let jobs = [
        (&lsi_data, SpecKind::Lsi),
        (&lsi_data, SpecKind::Si2),
        (&si_data, SpecKind::Lsi),
        (&si_data, SpecKind::Si1),
        (&si_data, SpecKind::Si2),
    ];
    let fits: Vec<Fit> = jobs.par_iter().map(|(d, s)| fit(d, *s)).collect();
    let [lsi_lsi, lsi_si2, si_lsi, si_si1, si_si2] = &fits[..] else {
        unreachable!()
    };

    results.push((
        4,
        "LSI fit on LSI data recovers the ATEs",
        lsi_recovery(lsi_lsi, &truth),
    ));
    results.push((
        5,
        "SI-2 misspecification bias on LSI data",
        misspecification(lsi_si2, &truth),
    ));
    results.push((
        6,
        "all specs cover the ATEs on SI data",
        si_agreement(
            &[
                (SpecKind::Lsi, si_lsi),
                (SpecKind::Si1, si_si1),
                (SpecKind::Si2, si_si2),
            ],
            &truth,
        ),
    ));
    results.push((
        7,
        "sensitivity gaps discriminate SI from LSI",
        sensitivity_discrimination(si_lsi, lsi_lsi),
    ));
    results.push((8, "IPW estimates on SI data", ipw_oracle(&si_data, &truth)));

    let (prior_ok, prior_msg) = prior_recovery();
    let (tn_ok, tn_msg) = truncnorm_moments();
    let (dup_ok, dup_msg) = duplicate_seeds();
    let finite = all_finite(&fits.iter().map(|f| &f.chain).collect::<Vec<_>>());
    results.push((
        9,
        "sampler hygiene",
        outcome(
            prior_ok && tn_ok && dup_ok && finite,
            format!("{prior_msg}; {tn_msg}; {dup_msg}; all kept draws finite: {finite}"),
        ),
    ));

    let mut failed = 0;
    for (id, name, o) in &results {
        if !o.pass {
            failed += 1;
        }
        println!(
            "{} [{id}] {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!(
        "acceptance: {}/{} passed in {:.0}s",
        results.len() - failed,
        results.len(),
        start.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
