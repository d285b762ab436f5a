//! Billiard dynamics against a brute-force enumeration of obstacles, plus
//! reversibility and flow composition.

use std::f64::consts::TAU;

use lorentz_core::billiard::{
    collision_sequence, exit_time, flow, impact_parameter, transfer_map, transfer_map_direct,
};
use lorentz_core::{Direction, ParticleState, Vec2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// First hit time and center along `x + tω` by checking every lattice disk in
/// the bounding box of the segment of length `t_max`.
fn brute_first_hit(x: Vec2, w: Vec2, r: f64, t_max: f64) -> Option<(f64, (i64, i64))> {
    let end = x + w * t_max;
    let (i0, i1) = (
        x.x.min(end.x).floor() as i64 - 1,
        x.x.max(end.x).ceil() as i64 + 1,
    );
    let (j0, j1) = (
        x.y.min(end.y).floor() as i64 - 1,
        x.y.max(end.y).ceil() as i64 + 1,
    );
    let mut best: Option<(f64, (i64, i64))> = None;
    for i in i0..=i1 {
        for j in j0..=j1 {
            let c = Vec2::new(i as f64, j as f64);
            let rel = c - x;
            let b = rel.dot(w);
            // Distance to the line from the cross product, which stays
            // accurate far from the start.
            let d = rel.cross(w).abs();
            if d >= r {
                continue;
            }
            let t = b - ((r - d) * (r + d)).sqrt();
            if t > 1e-12 && t <= t_max && best.map_or(true, |(tb, _)| t < tb) {
                best = Some((t, (i, j)));
            }
        }
    }
    best
}

fn random_start(rng: &mut ChaCha8Rng, r: f64) -> ParticleState {
    loop {
        let p = Vec2::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        let off = p - Vec2::new(p.x.round(), p.y.round());
        if off.norm() > r + 1e-6 {
            return ParticleState::new(p, Direction::from_angle(rng.gen::<f64>() * TAU));
        }
    }
}

#[test]
fn exit_time_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut checked = 0;
    for _ in 0..3000 {
        let r = rng.gen_range(0.02..0.45);
        let st = random_start(&mut rng, r);
        let Ok(ex) = exit_time(&st, r) else { continue };
        let w = st.direction.vec();
        let (t, c) = brute_first_hit(st.position, w, r, ex.tau + 1.0).expect("oracle finds a hit");
        assert!(
            (t - ex.tau).abs() < 1e-9 * t.max(1.0),
            "{st:?} r={r}: {t} vs {}",
            ex.tau
        );
        assert_eq!(c, ex.center);
        // |h| is the distance of the center to the line, over r.
        let rel = Vec2::new(c.0 as f64, c.1 as f64) - st.position;
        let perp = rel.cross(w).abs() / r;
        assert!(
            (ex.impact.abs() - perp).abs() < 1e-8,
            "{} vs {perp}",
            ex.impact
        );
        checked += 1;
    }
    assert!(checked > 2900, "{checked}");
}

#[test]
fn sequence_matches_repeated_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..100 {
        let r = rng.gen_range(0.05..0.4);
        let st = random_start(&mut rng, r);
        let Ok(events) = collision_sequence(&st, r, 20) else {
            continue;
        };
        let mut x = st.position;
        let mut w = st.direction.vec();
        let mut time = 0.0;
        let mut prev = 0.0;
        for e in &events {
            let (t, c) = brute_first_hit(x, w, r, e.time - prev + 1.0).expect("hit");
            prev = e.time;
            time += t;
            assert_eq!(c, e.center);
            assert!((time - e.time).abs() < 1e-8 * time.max(1.0));
            x = e.point;
            w = e.outgoing.vec();
            let n = (e.point - Vec2::new(c.0 as f64, c.1 as f64)) * (1.0 / r);
            assert!((n.norm() - 1.0).abs() < 1e-9);
            assert!(w.dot(n) >= -1e-12, "outgoing points into the disk");
        }
    }
}

/// Whether every collision up to time `t` is far from grazing. Rounding
/// errors grow by a factor of order `1/(r cos φ)` at each collision, so
/// comparisons use short windows without near-tangential hits.
fn tame(st: &ParticleState, r: f64, t: f64) -> bool {
    match collision_sequence(st, r, 64) {
        Ok(ev) => {
            ev.last().map_or(false, |e| e.time > t)
                && ev
                    .iter()
                    .filter(|e| e.time <= t + 1.0)
                    .all(|e| e.impact.abs() < 0.9)
        }
        Err(_) => false,
    }
}

#[test]
fn flow_is_reversible() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut checked = 0;
    for _ in 0..500 {
        let r = rng.gen_range(0.1..0.45);
        let st = random_start(&mut rng, r);
        let t = rng.gen_range(0.1..5.0);
        if !tame(&st, r, t) {
            continue;
        }
        let Ok(fwd) = flow(&st, r, t) else { continue };
        let back = ParticleState::new(
            fwd.position,
            Direction::from_vector(fwd.direction.vec() * -1.0),
        );
        let Ok(home) = flow(&back, r, t) else {
            continue;
        };
        assert!((home.position - st.position).norm() < 1e-8, "{st:?} t={t}");
        assert!((home.direction.vec() + st.direction.vec()).norm() < 1e-8);
        checked += 1;
    }
    assert!(checked > 100, "{checked}");
}

#[test]
fn flow_composes() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let mut checked = 0;
    for _ in 0..500 {
        let r = rng.gen_range(0.1..0.45);
        let st = random_start(&mut rng, r);
        let (t1, t2) = (rng.gen_range(0.0..3.0), rng.gen_range(0.0..3.0));
        if !tame(&st, r, t1 + t2) {
            continue;
        }
        let (Ok(a), Ok(whole)) = (flow(&st, r, t1), flow(&st, r, t1 + t2)) else {
            continue;
        };
        let Ok(b) = flow(&a, r, t2) else { continue };
        assert!((b.position - whole.position).norm() < 1e-8);
        assert!((b.direction.vec() - whole.direction.vec()).norm() < 1e-8);
        checked += 1;
    }
    assert!(checked > 100, "{checked}");
}

#[test]
fn octant_reduction_agrees_with_direct_transfer() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let mut checked = 0;
    for _ in 0..2000 {
        let r = 10f64.powf(rng.gen_range(-3.0..-1.0));
        let w = Direction::from_angle(rng.gen::<f64>() * TAU);
        let hp = rng.gen_range(-0.999..0.999);
        let (Ok(a), Ok(b)) = (transfer_map(hp, w, r), transfer_map_direct(hp, w, r)) else {
            continue;
        };
        assert!((a.flight - b.flight).abs() < 1e-9 * a.flight.max(1.0));
        assert!((a.impact - b.impact).abs() < 1e-7);
        assert_eq!(a.center, b.center);
        checked += 1;
    }
    assert!(checked > 1900);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn flow_keeps_unit_speed_and_stays_outside(
        x in -2.0f64..2.0, y in -2.0f64..2.0, th in 0.0f64..TAU, r in 0.05f64..0.45, t in 0.0f64..30.0,
    ) {
        let p = Vec2::new(x, y);
        let off = p - Vec2::new(x.round(), y.round());
        prop_assume!(off.norm() > r + 1e-6);
        let st = ParticleState::new(p, Direction::from_angle(th));
        if let Ok(s) = flow(&st, r, t) {
            prop_assert!((s.direction.vec().norm() - 1.0).abs() < 1e-12);
            let q = s.position;
            let o = q - Vec2::new(q.x.round(), q.y.round());
            prop_assert!(o.norm() >= r - 1e-9);
        }
    }

    #[test]
    fn impact_is_the_same_before_and_after_reflection(
        x in -2.0f64..2.0, y in -2.0f64..2.0, th in 0.0f64..TAU, r in 0.05f64..0.45,
    ) {
        let p = Vec2::new(x, y);
        let off = p - Vec2::new(x.round(), y.round());
        prop_assume!(off.norm() > r + 1e-6);
        let st = ParticleState::new(p, Direction::from_angle(th));
        if let Ok(ev) = collision_sequence(&st, r, 1) {
            let e = ev[0];
            let before = impact_parameter(e.point, st.direction, r).unwrap();
            let after = impact_parameter(e.point, e.outgoing, r).unwrap();
            prop_assert!((before - after).abs() < 1e-9);
            prop_assert!((before - e.impact).abs() < 1e-9);
        }
    }
}
