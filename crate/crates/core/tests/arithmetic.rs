//! Continued fraction identities and growth of denominators.

use std::f64::consts::PI;

use lorentz_core::arithmetic::{cf_expand, farey_neighbors, Stop};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Mean of `ln q_n` grows like `n π²/(12 ln 2)` for Lebesgue-almost every `α`.
#[test]
fn levy_growth_of_denominators() {
    let levy = PI * PI / (12.0 * 2f64.ln());
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let n_max = 11;
    let mut sums = vec![0.0; n_max + 2];
    let mut used = 0;
    for _ in 0..4000 {
        let a: f64 = rng.gen_range(1e-6..1.0 - 1e-6);
        let Ok(e) = cf_expand(a, Stop::Digits(n_max)) else {
            continue;
        };
        if e.q.len() < n_max + 2 {
            continue;
        }
        for (s, &q) in sums.iter_mut().zip(&e.q).skip(2) {
            *s += (q as f64).ln();
        }
        used += 1;
    }
    assert!(used > 3900, "{used}");
    // Fit the increments over indices 4..=12 (q_2 = a_1 is heavy tailed).
    let xs: Vec<f64> = (4..=n_max + 1).map(|n| n as f64).collect();
    let ys: Vec<f64> = (4..=n_max + 1).map(|n| sums[n] / used as f64).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let slope = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    assert!((slope - levy).abs() < 0.05, "slope {slope} vs {levy}");
}

#[test]
fn distances_decay_at_least_geometrically() {
    // d_{n+1} < d_{n−1}/2 since d_{n−1} = a_{n+1} d_n + d_{n+1} ≥ 2 d_{n+1}.
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for _ in 0..1000 {
        let a: f64 = rng.gen_range(1e-3..1.0 - 1e-3);
        let e = cf_expand(a, Stop::Threshold(1e-9)).unwrap();
        for n in 2..e.d.len() {
            assert!(e.d[n] < 0.5 * e.d[n - 2] + 1e-15, "{a}: {:?}", e.d);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn convergent_identities(a in 1e-4f64..0.9999) {
        let e = cf_expand(a, Stop::Threshold(1e-10)).unwrap();
        for n in 0..e.p.len() - 1 {
            let det = e.p[n + 1] as i128 * e.q[n] as i128 - e.p[n] as i128 * e.q[n + 1] as i128;
            prop_assert_eq!(det.abs(), 1);
            prop_assert!((e.qd_identity(n) - 1.0).abs() < 1e-9);
        }
        for n in 1..e.p.len() {
            let err = (e.q[n] as f64).mul_add(a, -(e.p[n] as f64));
            prop_assert!((err - e.signed_error(n)).abs() < 1e-12, "n={} {} vs {}", n, err, e.signed_error(n));
        }
        for w in e.d.windows(2) {
            prop_assert!(w[1] < w[0]);
        }
        let n = e.first_below(1e-6).unwrap();
        prop_assert!(e.d[n] <= 1e-6 && e.d[n - 1] > 1e-6);
    }

    #[test]
    fn farey_neighbors_bracket_alpha(a in 1e-4f64..0.9999, q_max in 1u64..100_000) {
        let f = farey_neighbors(a, q_max);
        prop_assert_eq!(f.determinant(), 1);
        prop_assert!(f.left.q <= q_max && f.right.q <= q_max);
        prop_assert!(f.left.offset(a) >= 0.0 && f.right.offset(a) <= 0.0);
        // Neighbors in F_Q satisfy q + q' > Q.
        prop_assert!(f.left.q + f.right.q > q_max);
    }
}
