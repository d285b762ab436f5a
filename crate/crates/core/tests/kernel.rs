//! The limit kernel: normalization, symmetries, samplers and the Π operator.

use lorentz_core::kernel::{
    equilibrium_e, equilibrium_h_band, equilibrium_s_marginal, limit_transfer, p_full, p_simple,
    pi_kernel, pi_spectrum, s_integral, sample_mu, sample_p,
};
use lorentz_core::mc::{kernel_bin_masses, KernelBins};
use lorentz_core::quad::{integrate, integrate_to_infinity, Tolerance};
use lorentz_core::stats::chi2_test;
use lorentz_core::verify::p_total_mass;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn p_integrates_to_one() {
    for hp in [-0.95, -0.5, 0.0, 0.3, 0.8] {
        let m = p_total_mass(hp).unwrap();
        assert!((m - 1.0).abs() < 1e-7, "h' = {hp}: {m}");
    }
}

#[test]
fn pi_integrates_to_one() {
    for hp in [-0.9, -0.2, 0.0, 0.6] {
        let m = integrate(
            |h| pi_kernel(h, hp),
            -1.0,
            1.0,
            &[hp, -hp],
            Tolerance::new(1e-13, 1e-11),
        )
        .unwrap()
        .value;
        assert!((m - 1.0).abs() < 1e-8, "h' = {hp}: {m}");
    }
}

#[test]
fn pi_operator_is_stochastic_with_a_gap() {
    // Midpoint sums of the log-singular kernel leave row sums off by ~1e-5.
    let s = pi_spectrum(200, 200);
    assert!((s.top - 1.0).abs() < 1e-4, "{s:?}");
    assert!(s.second < 0.5, "{s:?}");
    assert!(s.spread < 1e-3, "{s:?}");
    let fine = pi_spectrum(800, 100);
    assert!((fine.top - 1.0).abs() < (s.top - 1.0).abs(), "{fine:?}");
}

#[test]
fn sampler_matches_bin_masses() {
    let bins = KernelBins {
        s_max: 4.0,
        ns: 10,
        nh: 10,
    };
    for (seed, hp) in [(41u64, -0.7), (42, 0.0), (43, 0.5)] {
        let exact = kernel_bin_masses(hp, bins).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 200_000;
        let mut counts = vec![0.0; bins.len()];
        for _ in 0..n {
            let (s, h) = sample_p(hp, &mut rng);
            counts[bins.index(s, h)] += 1.0;
        }
        let expected: Vec<f64> = exact.iter().map(|p| p * n as f64).collect();
        let c = chi2_test(&counts, &expected);
        assert!(c.p_value > 1e-3, "h' = {hp}: {c:?}");
    }
}

#[test]
fn equilibrium_profile_shape() {
    for h in [-0.9, -0.3, 0.0, 0.5] {
        assert!((equilibrium_e(0.0, h).unwrap() - 1.0).abs() < 1e-9);
        let mut last = 1.0;
        for s in [0.1, 0.5, 1.0, 2.0, 5.0, 20.0] {
            let e = equilibrium_e(s, h).unwrap();
            assert!(e <= last + 1e-12 && e >= 0.0);
            last = e;
        }
        // s-marginal against a direct integral of E.
        let direct = integrate_to_infinity(
            |s| equilibrium_e(s, h).unwrap(),
            0.0,
            &[0.5, 1.0, 2.0],
            Tolerance::new(1e-12, 1e-10),
        )
        .unwrap()
        .value;
        let closed = equilibrium_s_marginal(h);
        assert!(
            (direct - closed).abs() < 1e-8,
            "h = {h}: {direct} vs {closed}"
        );
    }
    let total = equilibrium_h_band(-1.0, 1.0).unwrap();
    assert!(total.is_finite() && total > 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1024))]

    #[test]
    fn p_symmetries_and_formulas(s in 0.0f64..10.0, h in -1.0f64..1.0, hp in -1.0f64..1.0) {
        let p = p_simple(s, h, hp);
        prop_assert!(p >= 0.0 && p.is_finite());
        prop_assert!((p - p_simple(s, hp, h)).abs() <= 1e-13 * p.max(1.0));
        prop_assert!((p - p_simple(s, -h, -hp)).abs() <= 1e-13 * p.max(1.0));
        prop_assert!((p - p_full(s, h, hp)).abs() <= 1e-12 * p.max(1.0));
    }

    #[test]
    fn pi_symmetric(h in -0.999f64..0.999, hp in -0.999f64..0.999) {
        let a = pi_kernel(h, hp);
        prop_assert!(a > 0.0);
        prop_assert!((a - pi_kernel(hp, h)).abs() <= 1e-13 * a);
        prop_assert!((a - pi_kernel(-h, -hp)).abs() <= 1e-13 * a);
    }

    #[test]
    fn s_integrals_add(a in 0.0f64..3.0, w1 in 0.0f64..3.0, w2 in 0.0f64..3.0, h in -0.99f64..0.99, hp in -0.99f64..0.99) {
        let (b, c) = (a + w1, a + w1 + w2);
        let whole = s_integral(a, c, h, hp);
        let parts = s_integral(a, b, h, hp) + s_integral(b, c, h, hp);
        prop_assert!((whole - parts).abs() < 1e-10);
    }

    #[test]
    fn limit_map_lands_in_range(seed in any::<u64>(), hp in -1.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = sample_mu(&mut rng);
        prop_assert!(cfg.a + cfg.b <= 1.0 + 1e-12);
        prop_assert!(cfg.relation_residual().abs() < 1e-12);
        let (s, h) = limit_transfer(&cfg, hp);
        prop_assert!(s > 0.0 && s.is_finite());
        prop_assert!((-1.0..=1.0).contains(&h));
    }
}
