mod common;

use common::{c_disc_oracle, fd_grad, gmm_denoiser, gmm_log_density, Mix1};
use proptest::prelude::*;
use slips::localization::{
    posterior_grad, posterior_log_density_unnorm, sigma_default, tv_information_bound, tv_total_bound,
    tweedie_score, Discretization, Posterior, TvBoundInputs,
};
use slips::GaussianMixture;

fn kappa(t0: f64, t_final: f64, k: usize) -> f64 {
    ((t_final / t0).ln() / k as f64).exp() - 1.0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn log_snr_c_disc_matches_closed_form(lt0 in -4.0f64..1.0, span in 0.5f64..6.0, k in 1usize..400) {
        let t0 = 10f64.powf(lt0);
        let t_final = t0 * 10f64.powf(span);
        let g = Discretization::log_snr(t0, t_final, k).unwrap();
        let kp = kappa(t0, t_final, k);
        let closed = (k as f64 - 1.0) * kp * kp / (1.0 + kp) + kp;
        prop_assert!((g.c_disc() - closed).abs() <= 1e-10 * closed);
        prop_assert!((g.c_disc() - c_disc_oracle(g.times())).abs() <= 1e-12 * closed);
    }

    #[test]
    fn uniform_c_disc_is_the_first_step_ratio(lt0 in -4.0f64..1.0, span in 0.5f64..6.0, k in 1usize..400) {
        let t0 = 10f64.powf(lt0);
        let t_final = t0 * 10f64.powf(span);
        let g = Discretization::uniform(t0, t_final, k).unwrap();
        let expected = (t_final - t0) / (k as f64 * t0);
        prop_assert!((g.c_disc() - expected).abs() <= 1e-12 * expected);
    }

    #[test]
    fn c_disc_is_invariant_under_time_rescaling(
        raw in prop::collection::vec(0.01f64..5.0, 2..30),
        scale in 0.001f64..1000.0,
    ) {
        let mut t = vec![0.1];
        for r in &raw {
            let last = *t.last().unwrap();
            t.push(last + r);
        }
        let a = Discretization::custom(t.clone()).unwrap().c_disc();
        let b = Discretization::custom(t.iter().map(|x| x * scale).collect()).unwrap().c_disc();
        prop_assert!((a - b).abs() <= 1e-10 * a.max(1.0));
        prop_assert!((a - c_disc_oracle(&t)).abs() <= 1e-12 * a.max(1.0));
    }

    #[test]
    fn log_snr_grid_is_geometric(lt0 in -3.0f64..1.0, span in 0.5f64..5.0, k in 1usize..200) {
        let t0 = 10f64.powf(lt0);
        let t_final = t0 * 10f64.powf(span);
        let g = Discretization::log_snr(t0, t_final, k).unwrap();
        let t = g.times();
        prop_assert_eq!(t.len(), k + 1);
        prop_assert_eq!(t[0], t0);
        prop_assert_eq!(t[k], t_final);
        let r = (t_final / t0).powf(1.0 / k as f64);
        for w in t.windows(2) {
            prop_assert!((w[1] / w[0] - r).abs() <= 1e-9 * r);
        }
    }

    #[test]
    fn posterior_gradient_matches_finite_differences(
        x in prop::collection::vec(-3.0f64..3.0, 3),
        y in prop::collection::vec(-5.0f64..5.0, 3),
        t in 0.05f64..20.0,
        sigma in 0.3f64..3.0,
    ) {
        let g = GaussianMixture::new(vec![0.3, 0.7], vec![vec![1.0, 0.0, -1.0], vec![-1.0, 2.0, 0.5]], 0.8).unwrap();
        let grad = posterior_grad(&g, t, sigma, &y, &x).unwrap();
        let fd = fd_grad(|z| posterior_log_density_unnorm(&g, t, sigma, &y, z).unwrap(), &x, 1e-5);
        for (a, b) in grad.iter().zip(&fd) {
            prop_assert!((a - b).abs() <= 1e-5 * (1.0 + b.abs()), "{a} vs {b}");
        }
        let post = Posterior::new(&g, t, sigma, &y).unwrap();
        let mut buf = vec![0.0; 3];
        let lp = post.log_density_and_grad(&x, &mut buf);
        prop_assert!((lp - post.log_density(&x)).abs() <= 1e-12 * (1.0 + lp.abs()));
        for (a, b) in buf.iter().zip(&grad) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn posterior_differs_from_prior_by_the_gaussian_likelihood(
        x in prop::collection::vec(-3.0f64..3.0, 2),
        x2 in prop::collection::vec(-3.0f64..3.0, 2),
        y in prop::collection::vec(-5.0f64..5.0, 2),
        t in 0.05f64..20.0,
    ) {
        let (w, m, s2, sigma) = (vec![0.5, 0.5], vec![vec![1.0, 1.0], vec![-1.0, -1.0]], 1.0, 1.3);
        let g = GaussianMixture::new(w.clone(), m.clone(), s2).unwrap();
        let lq = |z: &[f64]| {
            let r2: f64 = y.iter().zip(z).map(|(a, b)| (a - t * b).powi(2)).sum();
            gmm_log_density(&w, &m, s2, z) - r2 / (2.0 * t * sigma * sigma)
        };
        let a = posterior_log_density_unnorm(&g, t, sigma, &y, &x).unwrap()
            - posterior_log_density_unnorm(&g, t, sigma, &y, &x2).unwrap();
        prop_assert!((a - (lq(&x) - lq(&x2))).abs() <= 1e-9 * (1.0 + a.abs()));
    }

    #[test]
    fn tweedie_score_of_the_oracle_is_the_score_of_p_t(y in -8.0f64..8.0, t in 0.1f64..30.0, sigma in 0.5f64..2.0) {
        let mix = Mix1 { w: vec![0.3, 0.7], m: vec![-1.5, 2.0], s2: 0.6 };
        let g = GaussianMixture::new(mix.w.clone(), vec![vec![-1.5], vec![2.0]], 0.6).unwrap();
        let u = gmm_denoiser(&mix.w, &[vec![-1.5], vec![2.0]], 0.6, t, sigma, &[y]);
        let lib_u = g.oracle_denoiser(t, sigma, &[y]).unwrap();
        prop_assert!((u[0] - lib_u[0]).abs() <= 1e-10 * (1.0 + u[0].abs()));
        let s = tweedie_score(t, sigma, &[y], &lib_u).unwrap()[0];
        let exact = mix.score_t(t, sigma, y);
        prop_assert!((s - exact).abs() <= 1e-9 * (1.0 + exact.abs()), "{s} vs {exact}");
    }

    #[test]
    fn information_bound_formula(score in 0.0f64..10.0, d in 1usize..100, sigma in 0.1f64..5.0, t in 0.1f64..1e4) {
        let b = tv_information_bound(score, d, sigma, t).unwrap();
        prop_assert!((b - 0.5 * score * (d as f64 * sigma * sigma / t).sqrt()).abs() <= 1e-12 * (1.0 + b));
        // Quadrupling t halves the bound.
        let b4 = tv_information_bound(score, d, sigma, 4.0 * t).unwrap();
        prop_assert!((b4 - 0.5 * b).abs() <= 1e-12 * (1.0 + b));
    }
}

#[test]
fn uniform_grid_c_disc_from_the_remark() {
    // (t_K - t_0) / (K t_0) for t0 = 1, t_K = 101, K = 10.
    let g = Discretization::uniform(1.0, 101.0, 10).unwrap();
    assert!((g.c_disc() - 10.0).abs() < 1e-12);
}

#[test]
fn log_snr_c_disc_sits_under_the_stated_bounds() {
    // The literal sum has K - 1 acceleration terms, so it is below kappa^2 K / (1 + kappa) + kappa,
    // which is below kappa (kappa K + 1).
    for (t0, t_final, k) in [(0.02, 1000.0, 200), (0.01, 100.0, 6), (1.0, 16.0, 4), (0.02, 200.0, 100)] {
        let c = Discretization::log_snr(t0, t_final, k).unwrap().c_disc();
        let kp = kappa(t0, t_final, k);
        let stated = kp * kp * k as f64 / (1.0 + kp) + kp;
        assert!(c < stated && stated <= kp * (kp * k as f64 + 1.0), "{c} {stated}");
    }
}

#[test]
fn frozen_c_disc_values() {
    // From the closed form at (0.02, 200, 100) and (0.02, 1000, 200).
    let a = Discretization::log_snr(0.02, 200.0, 100).unwrap().c_disc();
    assert!((a - 0.936_892_710_553_566).abs() < 1e-12, "{a}");
    let b = Discretization::uniform(0.02, 200.0, 100).unwrap().c_disc();
    assert!((b - 99.99).abs() < 1e-10);
    assert!(b / a > 10.0);
}

#[test]
fn information_bound_at_unit_inputs() {
    assert_eq!(tv_information_bound(1.0, 1, 1.0, 4.0).unwrap(), 0.25);
}

#[test]
fn default_sigma_of_the_benchmark() {
    // Means +-(1, 1), unit variance: R^2 = 2 + 2 = 4, d = 2, sigma^2 = 2.
    let g = GaussianMixture::symmetric_bimodal(2, 1.0, 1.0, 0.5).unwrap();
    assert!((g.variance_proxy() - 4.0).abs() < 1e-12);
    let s = sigma_default(g.variance_proxy(), 2).unwrap();
    assert!((s * s - 2.0).abs() < 1e-12);
}

#[test]
fn total_bound_adds_its_terms() {
    let r = tv_total_bound(&TvBoundInputs {
        dim: 4,
        sigma: 1.0,
        t_final: 100.0,
        eps0: 0.01,
        c_disc: 0.25,
        score_norm: 2.0,
        init_tv: 0.05,
    })
    .unwrap();
    assert!((r.disc_term - 1.0).abs() < 1e-12);
    assert!((r.estimation_term - 0.1).abs() < 1e-12);
    assert!((r.information_term - 0.2).abs() < 1e-12);
    assert!((r.total - 1.35).abs() < 1e-12);
}

#[test]
fn rejects_bad_grids() {
    assert!(Discretization::log_snr(0.0, 1.0, 4).is_err());
    assert!(Discretization::log_snr(2.0, 1.0, 4).is_err());
    assert!(Discretization::uniform(0.1, 1.0, 0).is_err());
    assert!(Discretization::custom(vec![0.1, 0.1, 0.2]).is_err());
    assert!(Discretization::custom(vec![0.1]).is_err());
}
