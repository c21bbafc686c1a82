use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;
use slips::metrics::{
    histogram_tv, mode_weights, moment_error, random_directions, reference_samples, sliced_tv, sliced_tv_with_directions,
    Bins, Samples,
};
use slips::rng::seeded;
use slips::GaussianMixture;

fn gaussian_cloud(n: usize, dim: usize, shift: f64, seed: u64) -> Samples {
    let mut rng = seeded(seed);
    let data = (0..n * dim).map(|_| rng.sample::<f64, _>(StandardNormal) + shift).collect();
    Samples::new(dim, data).unwrap()
}

/// TV between histograms on a shared regular grid, computed directly.
fn histogram_tv_oracle(a: &[f64], b: &[f64], bins: usize) -> f64 {
    let lo = a.iter().chain(b).cloned().fold(f64::INFINITY, f64::min);
    let hi = a.iter().chain(b).cloned().fold(f64::NEG_INFINITY, f64::max);
    let count = |xs: &[f64]| {
        let mut c = vec![0.0; bins];
        for x in xs {
            let i = (((x - lo) / (hi - lo)) * bins as f64).floor() as usize;
            c[i.min(bins - 1)] += 1.0 / xs.len() as f64;
        }
        c
    };
    let (ca, cb) = (count(a), count(b));
    0.5 * ca.iter().zip(&cb).map(|(p, q)| (p - q).abs()).sum::<f64>()
}

#[test]
fn fixed_bin_tv_matches_direct_count() {
    let a: Vec<f64> = gaussian_cloud(3000, 1, 0.0, 1).as_slice().to_vec();
    let b: Vec<f64> = gaussian_cloud(5000, 1, 0.7, 2).as_slice().to_vec();
    for bins in [16, 50, 128] {
        let got = histogram_tv(&a, &b, Bins::Fixed(bins));
        let exact = histogram_tv_oracle(&a, &b, bins);
        assert!((got - exact).abs() < 1e-12, "{bins}: {got} vs {exact}");
    }
}

#[test]
fn disjoint_and_identical_samples() {
    let a = gaussian_cloud(1000, 2, 0.0, 3);
    let far = gaussian_cloud(1000, 2, 1000.0, 4);
    let tv = sliced_tv(&a, &far, 16, Bins::Fixed(64), &mut seeded(0)).unwrap();
    assert!((tv.value() - 1.0).abs() < 1e-12);
    let same = sliced_tv(&a, &a, 16, Bins::FreedmanDiaconis, &mut seeded(0)).unwrap();
    assert_eq!(same.value(), 0.0);
}

#[test]
fn sample_tv_noise_floor_at_the_acceptance_sizes() {
    // Frozen: two exact 5000-draw batches against one 10^6 reference sit near 0.03.
    let g = GaussianMixture::symmetric_bimodal(2, 1.0, 1.0, 0.5).unwrap();
    let reference = reference_samples(&g, 2, 1_000_000, 77);
    for seed in [1, 2] {
        let exact = reference_samples(&g, 2, 5000, seed);
        let tv = sliced_tv(&exact, &reference, 64, Bins::FreedmanDiaconis, &mut seeded(3)).unwrap();
        assert!(tv.value() > 0.015 && tv.value() < 0.045, "{}", tv.value());
    }
}

#[test]
fn mode_weights_and_moments_of_exact_draws() {
    let g = GaussianMixture::new(vec![0.25, 0.75], vec![vec![3.0, 3.0], vec![-3.0, -3.0]], 1.0).unwrap();
    let s = reference_samples(&g, 2, 100_000, 5);
    let w = mode_weights(&s, g.means()).unwrap();
    assert!((w.values[0] - 0.25).abs() < 4.0 * w.std_errors[0]);
    assert!((w.values.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    let m = moment_error(&s, &g).unwrap();
    assert!(m.values[0] < 0.01 && m.values[1] < 0.02, "{:?}", m.values);
}

#[test]
fn samples_validate_shape() {
    assert!(Samples::new(2, vec![1.0, 2.0, 3.0]).is_err());
    assert!(Samples::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    let s = Samples::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
    assert_eq!(s.len(), 2);
    assert_eq!(s.row(1), &[3.0, 4.0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn sliced_tv_is_symmetric_and_bounded(seed in 0u64..1000, shift in 0.0f64..3.0, dim in 1usize..5) {
        let a = gaussian_cloud(800, dim, 0.0, seed);
        let b = gaussian_cloud(600, dim, shift, seed + 1);
        let dirs = random_directions(dim, 16, &mut seeded(seed));
        for bins in [Bins::FreedmanDiaconis, Bins::Fixed(40)] {
            let ab = sliced_tv_with_directions(&a, &b, &dirs, bins).unwrap().value();
            let ba = sliced_tv_with_directions(&b, &a, &dirs, bins).unwrap().value();
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&ab));
        }
    }

    #[test]
    fn sliced_tv_ignores_a_common_translation_and_rotation(seed in 0u64..1000, angle in 0.0f64..6.3, dx in -5.0f64..5.0) {
        let a = gaussian_cloud(500, 2, 0.0, seed);
        let b = gaussian_cloud(500, 2, 0.8, seed + 7);
        let dirs = random_directions(2, 8, &mut seeded(seed));
        let (c, s) = (angle.cos(), angle.sin());
        let rot = |r: &[f64]| vec![c * r[0] - s * r[1] + dx, s * r[0] + c * r[1] - dx];
        let rdirs: Vec<Vec<f64>> = dirs.iter().map(|d| vec![c * d[0] - s * d[1], s * d[0] + c * d[1]]).collect();
        let base = sliced_tv_with_directions(&a, &b, &dirs, Bins::Fixed(32)).unwrap().value();
        let moved = sliced_tv_with_directions(&a.map_rows(rot).unwrap(), &b.map_rows(rot).unwrap(), &rdirs, Bins::Fixed(32))
            .unwrap()
            .value();
        prop_assert!((base - moved).abs() < 1e-9, "{base} vs {moved}");
    }

    #[test]
    fn directions_are_unit_vectors(dim in 1usize..50, seed in 0u64..1000) {
        for d in random_directions(dim, 10, &mut seeded(seed)) {
            let n: f64 = d.iter().map(|x| x * x).sum();
            prop_assert!((n - 1.0).abs() < 1e-12);
        }
    }
}
