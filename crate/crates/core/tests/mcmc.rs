mod common;

use common::{gmm_denoiser, mean_var, normal_pdf};
use proptest::prelude::*;
use slips::mcmc::{
    adapt_step, estimate_denoiser, estimate_eps0, mala_log_accept_ratio, mala_step, ula_step, ChainStart, FnDensity,
    MalaSettings, MalaState,
};
use slips::rng::seeded;
use slips::sampler::{DenoiserMode, SlipsConfig};
use slips::GaussianMixture;

/// `log N(b; a + h g(a), 2h I)` summed over coordinates.
fn log_q(b: &[f64], a: &[f64], ga: &[f64], h: f64) -> f64 {
    b.iter()
        .zip(a)
        .zip(ga)
        .map(|((b, a), g)| normal_pdf(*b, a + h * g, 2.0 * h).ln())
        .sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn accept_ratio_is_the_metropolis_hastings_ratio(
        x in prop::collection::vec(-3.0f64..3.0, 2),
        xn in prop::collection::vec(-3.0f64..3.0, 2),
        h in 0.01f64..2.0,
    ) {
        // Target N(0, diag(1, 4)).
        let lp = |z: &[f64]| -0.5 * (z[0] * z[0] + z[1] * z[1] / 4.0);
        let gr = |z: &[f64]| vec![-z[0], -z[1] / 4.0];
        let exact = lp(&xn) + log_q(&x, &xn, &gr(&xn), h) - lp(&x) - log_q(&xn, &x, &gr(&x), h);
        let got = mala_log_accept_ratio(h, &x, lp(&x), &gr(&x), &xn, lp(&xn), &gr(&xn));
        prop_assert!((got - exact).abs() <= 1e-9 * (1.0 + exact.abs()), "{got} vs {exact}");
        // Swapping the two points negates the ratio.
        let back = mala_log_accept_ratio(h, &xn, lp(&xn), &gr(&xn), &x, lp(&x), &gr(&x));
        prop_assert!((got + back).abs() <= 1e-9 * (1.0 + got.abs()));
    }

    #[test]
    fn adaptation_moves_toward_the_target_rate(h in 0.001f64..10.0, n in 0usize..10_000) {
        prop_assert!(adapt_step(h, 0.9, n) > h);
        prop_assert!(adapt_step(h, 0.1, n) < h);
        prop_assert!(adapt_step(h, 0.9, n).is_finite());
    }
}

#[test]
fn mala_leaves_a_gaussian_invariant() {
    let (m, v) = (1.0, 0.5);
    let density = FnDensity {
        dim: 1,
        log_density: |x: &[f64]| -(x[0] - m).powi(2) / (2.0 * v),
        grad: |x: &[f64], g: &mut [f64]| g[0] = -(x[0] - m) / v,
    };
    let mut state = MalaState::new(&density, vec![m], 0.4).unwrap();
    let mut rng = seeded(3);
    let xs: Vec<f64> = (0..400_000)
        .map(|_| {
            mala_step(&density, &mut state, &mut rng);
            state.position()[0]
        })
        .collect();
    let (mean, var) = mean_var(&xs);
    assert!((mean - m).abs() < 0.01, "{mean}");
    assert!((var - v).abs() < 0.01, "{var}");
    assert!(state.acceptance_rate() > 0.5 && state.acceptance_rate() < 1.0);
}

#[test]
fn ula_inflates_gaussian_variance_by_the_step_factor() {
    // ULA on N(0, v) with step lambda is the AR(1) chain x' = (1 - lambda / v) x + sqrt(2 lambda) G,
    // whose stationary variance is v / (1 - lambda / (2 v)). At lambda = v / 2 that is 4v / 3.
    let v = 2.0;
    let lambda = v / 2.0;
    let mut rng = seeded(9);
    let mut x = vec![0.0];
    let mut xs = Vec::with_capacity(400_000);
    for _ in 0..400_000 {
        x = ula_step(|p| Ok(vec![-p[0] / v]), &x, lambda, &mut rng).unwrap();
        xs.push(x[0]);
    }
    let (_, var) = mean_var(&xs);
    let expected = v / (1.0 - lambda / (2.0 * v));
    assert!((var - expected).abs() < 0.03 * expected, "{var} vs {expected}");
}

#[test]
fn ula_rejects_non_finite_scores() {
    let mut rng = seeded(0);
    assert!(ula_step(|_| Ok(vec![f64::NAN]), &[0.0], 0.1, &mut rng).is_err());
    assert!(ula_step(|_| Ok(vec![0.0]), &[0.0], 0.0, &mut rng).is_err());
}

#[test]
fn fresh_chain_estimates_the_posterior_mean() {
    let g = GaussianMixture::symmetric_bimodal(2, 1.0, 1.0, 0.5).unwrap();
    let sigma = 2f64.sqrt();
    for (t, y) in [(0.5, vec![0.3, 0.1]), (5.0, vec![4.0, 6.0]), (50.0, vec![-49.0, -51.0])] {
        let exact = gmm_denoiser(g.weights(), g.means(), 1.0, t, sigma, &y);
        let est = estimate_denoiser(&g, t, sigma, &y, 40_000, ChainStart::Fresh, &MalaSettings::default(), &mut seeded(1))
            .unwrap();
        for (a, b) in est.u_hat.iter().zip(&exact) {
            assert!((a - b).abs() < 0.05, "t={t}: {a} vs {b}");
        }
        assert!(est.acceptance_rate > 0.3, "{}", est.acceptance_rate);
        assert!(!est.all_rejected);
    }
}

#[test]
fn warm_start_rescales_the_step_and_records_from_the_first_move() {
    let g = GaussianMixture::gaussian(vec![0.0], 1.0).unwrap();
    let s = MalaSettings { adapt: false, ..MalaSettings::default() };
    let first = estimate_denoiser(&g, 1.0, 1.0, &[0.5], 50, ChainStart::Fresh, &s, &mut seeded(2)).unwrap();
    let h1 = first.final_state.step_size();
    let next = estimate_denoiser(&g, 2.0, 1.0, &[1.0], 1, first.into_warm_start(), &s, &mut seeded(3)).unwrap();
    assert!((next.final_state.step_size() - h1 * 2.0 / 3.0).abs() < 1e-15);
    // With M = 1 the estimate is the single post-move position.
    assert_eq!(next.u_hat, next.final_state.position());
    assert_eq!(next.time, 2.0);
}

#[test]
fn eps0_shrinks_with_chain_length_and_vanishes_for_the_oracle() {
    let g = GaussianMixture::symmetric_bimodal(2, 1.0, 1.0, 0.5).unwrap();
    let base = SlipsConfig { k: 20, t_final: 100.0, seed: 5, ..SlipsConfig::default() };
    let short = estimate_eps0(&g, &SlipsConfig { m: 20, ..base.clone() }, 100, 1).unwrap();
    let long = estimate_eps0(&g, &SlipsConfig { m: 400, ..base.clone() }, 100, 1).unwrap();
    assert!(long.value < short.value, "{long:?} vs {short:?}");
    let oracle = estimate_eps0(&g, &SlipsConfig { denoiser_mode: DenoiserMode::Oracle, ..base }, 10, 1).unwrap();
    assert_eq!(oracle.value, 0.0);
}
