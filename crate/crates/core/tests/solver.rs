//! Kinetic solver: agreement with the Markov particle process, entropy
//! decay, stability limit and determinism.

use lorentz_core::initial::InitialData;
use lorentz_core::mc::{markov_ensemble, EnsembleBins};
use lorentz_core::solver::{
    diagnostics, equilibrium_field, init_field, mass, solve, step, Discretization, EntropyKind,
    Grids, SolverError, StepOptions,
};
use lorentz_core::stats::chi2_test;

const SEED: u64 = 13;
const PARTICLES: u64 = 400_000;

fn comparison_grids() -> Grids {
    Grids {
        nx1: 64,
        nx2: 1,
        nomega: 32,
        ns: 48,
        nh: 16,
        s_max: 200.0,
    }
}

/// The `(x₁, θ)` marginal of the solver against Markov particles at t = 1
/// and t = 5: χ² p-value above 1e-3 and every pull within 4.
#[test]
fn markov_process_matches_solver() {
    let f_in = InitialData::cosine(0.5);
    let (n1, nt) = (16, 4);
    let bins = EnsembleBins {
        nx1: n1,
        nx2: 1,
        ntheta: nt,
        ns: 4,
        nh: 4,
        s_max: 5.0,
    };
    let times = [1.0, 5.0];
    let ens = markov_ensemble(&f_in, PARTICLES, &times, bins, SEED).unwrap();

    let disc = Discretization::new(comparison_grids()).unwrap();
    let dt = 0.5 * disc.dt_limit();
    let mut field = init_field(&f_in, &disc);
    for (snap, &t) in ens.snapshots.iter().zip(&times) {
        let every = t - field.t;
        let out = solve(
            &disc,
            field,
            t,
            dt,
            every,
            &[],
            StepOptions::default(),
            false,
        )
        .unwrap();
        field = out.last;
        assert!((field.t - t).abs() < 1e-12);
        let p = lorentz_core::solver::xw_marginal(&disc, &field, n1, 1, nt);
        let n = PARTICLES as f64;
        let obs: Vec<f64> = snap.xw.iter().map(|&c| c as f64).collect();
        let exp: Vec<f64> = p.iter().map(|q| q * n).collect();
        let c = chi2_test(&obs, &exp);
        let worst = obs
            .iter()
            .zip(&exp)
            .map(|(o, e)| ((o - e) / e.sqrt()).abs())
            .fold(0.0, f64::max);
        assert!(c.p_value > 1e-3, "t = {t}: {c:?}");
        assert!(worst <= 4.0, "t = {t}: worst pull {worst}");
    }
}

#[test]
fn entropies_decrease_and_dissipation_is_nonnegative() {
    let disc = Discretization::new(Grids::reduced()).unwrap();
    let f_in = InitialData::Bump {
        center: [0.5, 0.5],
        width: 0.15,
        height: 1.0,
        base: 0.2,
        angular: 0.8,
        theta0: 1.0,
    };
    let kinds = [EntropyKind::Zlogz, EntropyKind::Square];
    let out = solve(
        &disc,
        init_field(&f_in, &disc),
        5.0,
        disc.dt_limit(),
        0.25,
        &kinds,
        StepOptions::default(),
        false,
    )
    .unwrap();
    for w in out.reports.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        assert!(
            b.h_zlogz.unwrap() <= a.h_zlogz.unwrap() + 1e-12,
            "{a:?} {b:?}"
        );
        assert!(b.h_square.unwrap() <= a.h_square.unwrap() + 1e-12);
        assert!((b.mass - a.mass).abs() < 1e-12 * a.mass);
    }
    for r in &out.reports {
        assert!(r.d_zlogz.unwrap() >= -1e-14);
        assert!(r.d_square.unwrap() >= -1e-14);
    }
}

#[test]
fn equilibrium_is_stationary() {
    let disc = Discretization::new(Grids::reduced()).unwrap();
    let f0 = equilibrium_field(&disc, 1.7);
    let mut f = f0.clone();
    for _ in 0..20 {
        f = step(&disc, &f, disc.dt_limit(), StepOptions::default()).unwrap();
    }
    let worst = f0
        .values
        .iter()
        .zip(&f.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let top = f0.values.iter().cloned().fold(0.0, f64::max);
    assert!(worst < 1e-12 * top, "{worst}");
}

#[test]
fn step_above_limit_is_rejected() {
    let disc = Discretization::new(Grids::reduced()).unwrap();
    let f = init_field(&InitialData::cosine(0.5), &disc);
    let limit = disc.dt_limit();
    match step(&disc, &f, 1.01 * limit, StepOptions::default()) {
        Err(SolverError::CflViolation { dt, limit: l }) => {
            assert!(dt > l);
            assert_eq!(l, limit);
        }
        other => panic!("expected a stability error, got {other:?}"),
    }
    assert!(step(&disc, &f, limit, StepOptions::default()).is_ok());
    assert!(matches!(
        step(&disc, &f, 0.0, StepOptions::default()),
        Err(SolverError::CflViolation { .. })
    ));
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let disc = Discretization::new(Grids {
        nx1: 8,
        nx2: 8,
        nomega: 16,
        ns: 17,
        nh: 8,
        s_max: 200.0,
    })
    .unwrap();
    let f_in = InitialData::Bump {
        center: [0.3, 0.6],
        width: 0.2,
        height: 1.0,
        base: 0.1,
        angular: 0.5,
        theta0: 0.2,
    };
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| {
            let mut f = init_field(&f_in, &disc);
            for _ in 0..10 {
                f = step(&disc, &f, disc.dt_limit(), StepOptions::default()).unwrap();
            }
            let d = diagnostics(&disc, &f, &[EntropyKind::Zlogz]);
            let m = mass(&disc, &f);
            (f, d, m)
        })
    };
    let (a, da, ma) = run(1);
    let (b, db, mb) = run(3);
    assert_eq!(a, b);
    assert_eq!(da, db);
    assert_eq!(ma.to_bits(), mb.to_bits());
}
