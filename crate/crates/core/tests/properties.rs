use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use seqlsi::model::{
    assign_prob_lsi, log_likelihood, log_likelihood_si_grouped, strata_probs, unit_log_likelihood,
    ATE_CONTRASTS,
};
use seqlsi::normal;
use seqlsi::posterior::{effective_sample_size, quantile_sorted, rhat, summarize};
use seqlsi::sampler::{truncated_normal_draw, Chain, ChainMeta, McmcConfig, PriorConfig};
use seqlsi::sensitivity::{equality_gaps, ipw_msm_estimate};
use seqlsi::simgen::{calibrate_intercepts, generate, true_ates, ScenarioConfig};
use seqlsi::{Dataset, ParameterVector, SpecKind, Unit};

fn theta_strategy() -> impl Strategy<Value = ParameterVector> {
    (
        prop::array::uniform3(-2.0..2.0f64),
        prop::array::uniform8(-2.0..2.0f64),
        prop::array::uniform16(-6.0..6.0f64),
        prop::array::uniform4(0.2..4.0f64),
    )
        .prop_map(|(alpha, g, b, sigma2)| {
            let mut t = ParameterVector::zeros();
            t.alpha = alpha;
            for (k, v) in g.into_iter().enumerate() {
                t.gamma[k / 4][k % 4] = v;
            }
            for (k, v) in b.into_iter().enumerate() {
                t.beta[k / 4][k % 4] = v;
            }
            t.sigma2 = sigma2;
            t
        })
}

fn small_dataset(theta: ParameterVector, n: usize, seed: u64) -> Dataset {
    generate(&ScenarioConfig {
        theta_true: theta,
        spec: SpecKind::Lsi,
        n,
        p_w1: 0.5,
        seed,
    })
    .unwrap()
}

fn chain_of(spec: SpecKind, draws: Vec<ParameterVector>) -> Chain {
    Chain {
        spec,
        draws,
        final_strata: Vec::new(),
        meta: ChainMeta {
            priors: PriorConfig::default(),
            mcmc: McmcConfig::default(),
            chain_index: 0,
            n_units: 0,
            wall_time_secs: 0.0,
        },
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn strata_probabilities_form_a_distribution(alpha in prop::array::uniform3(-8.0..8.0f64)) {
        let p = strata_probs(&alpha).unwrap();
        prop_assert!(p.0.iter().all(|&v| (0.0..=1.0).contains(&v)));
        prop_assert!((p.0.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn si_grouped_likelihood_matches_direct(theta in theta_strategy(), seed in 0u64..1000) {
        let theta = theta.with_si_constraint();
        let data = small_dataset(theta, 60, seed);
        let a = log_likelihood(&theta, &data, SpecKind::Si1).unwrap();
        let b = log_likelihood_si_grouped(&theta, &data).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0), "{} vs {}", a, b);
    }

    #[test]
    fn likelihood_is_a_sum_over_units(theta in theta_strategy(), seed in 0u64..1000) {
        let data = small_dataset(theta, 25, seed);
        for (spec, theta) in [(SpecKind::Lsi, theta), (SpecKind::Si1, theta.with_si_constraint())] {
            let total = log_likelihood(&theta, &data, spec).unwrap();
            let parts: f64 = data.units.iter().map(|u| unit_log_likelihood(&theta, u, spec).unwrap()).sum();
            prop_assert!((total - parts).abs() <= 1e-9 * total.abs().max(1.0));
        }
    }

    #[test]
    fn calibration_is_exact_for_any_stratum_mix(theta in theta_strategy(), targets in prop::array::uniform4(-20.0..20.0f64)) {
        let cal = calibrate_intercepts(&theta, targets).unwrap();
        let ates = true_ates(&cal).unwrap();
        for (pair, (_, v)) in ATE_CONTRASTS.iter().zip(&ates) {
            let want = targets[pair.0.index()] - targets[pair.1.index()];
            prop_assert!((v - want).abs() < 1e-9);
        }
    }

    #[test]
    fn gaps_vanish_under_the_si_constraint(draws in prop::collection::vec(theta_strategy(), 1..8)) {
        let chain = chain_of(SpecKind::Lsi, draws.into_iter().map(|t| t.with_si_constraint()).collect());
        for (_, gaps) in equality_gaps(&chain).unwrap() {
            prop_assert!(gaps.iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn assignment_probabilities_are_probabilities(theta in theta_strategy()) {
        for w1 in [false, true] {
            for g in seqlsi::PrincipalStratum::ALL {
                let h = assign_prob_lsi(&theta.gamma, w1, g).unwrap();
                prop_assert!((0.0..=1.0).contains(&h));
            }
        }
    }

    #[test]
    fn ipw_is_invariant_to_duplicating_units(seed in 0u64..500) {
        let data = small_dataset(ScenarioConfig::reference_si().theta_true, 400, seed);
        let doubled = Dataset::new(
            data.units.iter().chain(&data.units).cloned().collect::<Vec<Unit>>(),
        );
        let a = ipw_msm_estimate(&data, 0, 1).unwrap();
        let b = ipw_msm_estimate(&doubled, 0, 1).unwrap();
        for (x, y) in a.estimates.iter().zip(&b.estimates) {
            match (x.estimate, y.estimate) {
                (Some(p), Some(q)) => prop_assert!((p - q).abs() < 1e-9),
                (None, None) => {}
                _ => prop_assert!(false, "definedness changed"),
            }
        }
    }

    #[test]
    fn truncated_draws_stay_inside(mean in -5.0..5.0f64, sd in 0.1..3.0f64, lo in -12.0..12.0f64, width in 0.01..10.0f64, seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hi = lo + width;
        for _ in 0..20 {
            let x = truncated_normal_draw(mean, sd, lo, hi, &mut rng).unwrap();
            prop_assert!(x > lo && x < hi, "{} not in ({}, {})", x, lo, hi);
        }
    }

    #[test]
    fn summaries_are_ordered(draws in prop::collection::vec(-100.0..100.0f64, 2..200)) {
        let r = summarize("x", &draws).unwrap();
        prop_assert!(r.q025 <= r.q25 && r.q25 <= r.median && r.median <= r.q75 && r.q75 <= r.q975);
        let lo = draws.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = draws.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lo <= r.q025 && r.q975 <= hi && lo <= r.mean && r.mean <= hi);
        prop_assert!(r.sd >= 0.0);
    }

    #[test]
    fn quantiles_are_monotone(mut v in prop::collection::vec(-1e3..1e3f64, 1..100), p in 0.0..1.0f64, q in 0.0..1.0f64) {
        v.sort_by(f64::total_cmp);
        let (p, q) = if p <= q { (p, q) } else { (q, p) };
        prop_assert!(quantile_sorted(&v, p) <= quantile_sorted(&v, q));
    }

    #[test]
    fn ess_is_positive_and_duplicate_chains_have_unit_rhat(v in prop::collection::vec(-10.0..10.0f64, 8..300)) {
        let ess = effective_sample_size(&v);
        prop_assert!(ess > 0.0 && ess.is_finite());
        let r = rhat(&[v.clone(), v.clone()]).unwrap();
        prop_assert!((r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normal_quantile_inverts_cdf(e in -300.0..-0.01f64) {
        let p = 10f64.powf(e);
        let x = normal::quantile(p);
        let back = if x > 0.0 { 1.0 - normal::sf(x) } else { normal::cdf(x) };
        prop_assert!(((back - p) / p).abs() < 1e-9 || (back - p).abs() < 1e-15);
    }
}
