//! Billiard, continued fraction and limit-map routes checked against each other.

use lorentz_core::arithmetic::{
    obstacle_params_cf, obstacle_params_farey, three_obstacle_lattice, FareyCase,
};
use lorentz_core::billiard::transfer_map;
use lorentz_core::kernel::{limit_transfer, limit_transfer_case};
use lorentz_core::{Direction, Vec2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn golden_dir() -> Direction {
    Direction::from_vector(Vec2::new(1.0, (5f64.sqrt() - 1.0) / 2.0))
}

fn random_first_octant(rng: &mut ChaCha8Rng) -> Direction {
    let t: f64 = rng.gen_range(1e-3..std::f64::consts::FRAC_PI_4 - 1e-3);
    Direction::from_angle(t)
}

#[test]
fn cf_and_farey_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut cases = [0usize; 3];
    let mut checked = 0;
    for _ in 0..10_000 {
        let w = random_first_octant(&mut rng);
        let r = 10f64.powf(rng.gen_range(-6.0..-0.7)) * w.cos() / 2.0;
        let (Ok(c), Ok((f, case))) = (obstacle_params_cf(&w, r), obstacle_params_farey(&w, r))
        else {
            continue;
        };
        if c.near_boundary || f.near_boundary {
            continue;
        }
        checked += 1;
        cases[case as usize] += 1;
        assert_eq!(c.sigma, f.sigma, "{w:?} {r}");
        for (x, y) in [(c.a, f.a), (c.b, f.b), (c.q, f.q)] {
            assert!((x - y).abs() < 1e-10, "{w:?} {r}: {c:?} vs {f:?}");
        }
        assert!(c.relation_residual().abs() < 1e-10);
        assert!(c.a + c.b <= 1.0 + 1e-12);
        assert!(c.q < 1.0 / (2.0 - c.a - c.b) + 1e-12);
        assert!((c.d - (1.0 - c.a)).abs() < 1e-12);
    }
    assert!(checked > 9_900);
    assert!(cases.iter().all(|&n| n > 0), "{cases:?}");
    let _ = FareyCase::Both;
}

#[test]
fn next_obstacle_is_in_the_triple() {
    let w = golden_dir();
    let r = 0.05 * w.cos();
    let triple = three_obstacle_lattice(&w, r).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut seen = std::collections::HashSet::new();
    for _ in 0..10_000 {
        let hp: f64 = rng.gen_range(-1.0..1.0);
        let t = transfer_map(hp, w, r).unwrap();
        assert!(
            triple.contains(t.center),
            "{:?} not in {triple:?}",
            t.center
        );
        seen.insert(t.center);
    }
    assert_eq!(seen.len(), 3);
}

#[test]
fn billiard_transfer_matches_limit_map() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut compared = 0;
    for _ in 0..2_000 {
        let w = random_first_octant(&mut rng);
        let r = 10f64.powf(rng.gen_range(-5.0..-3.0));
        let hp: f64 = rng.gen_range(-1.0..1.0);
        let Ok(cfg) = obstacle_params_cf(&w, r) else {
            continue;
        };
        let (_, gap) = limit_transfer_case(&cfg, hp);
        if gap < 1e-6 {
            continue;
        }
        let t = transfer_map(hp, w, r).unwrap();
        let (s, h) = limit_transfer(&cfg, hp);
        assert!((t.impact - h).abs() < 1e-10, "h: {} vs {h}", t.impact);
        assert!(
            (t.flight - s).abs() < 50.0 * r * r + 1e-9,
            "S: {} vs {s}",
            t.flight
        );
        compared += 1;
    }
    assert!(compared > 1_900);
}
