//! Acceptance checks with pinned tolerances, shared by the test suite and
//! the command line.
//!
//! Each check returns a [`Check`] carrying the measured value, the
//! tolerance and a pass flag. Errors inside a check turn into a failed
//! check; they never abort the suite.

use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arithmetic::{obstacle_params_cf, obstacle_params_farey};
use crate::consts::PI2;
use crate::geom::{Direction, Vec2};
use crate::initial::InitialData;
use crate::kernel::{
    brute_count_m, canonical, count_m, equilibrium_e, equilibrium_h_integral, equilibrium_total,
    p_full, p_simple, phi_map, pi_kernel, psi_map, sample_lambda, sample_p, EquilibriumTable,
    TableGrid,
};
use crate::mc::{
    asymptotic_transfer_check, bin_deviation, cesaro_config_distribution, cesaro_kernel_estimate,
    kernel_bin_masses, particle_rng, stationary_run, ConfigBins, EnsembleBins, KernelBins,
};
use crate::quad::{integrate, QuadError, Tolerance};
use crate::solver::{
    entropy_balance, equilibrium_field, free_flow_lower_bound, init_field,
    local_equilibrium_residual, lower_bound_limit, mass, solve, step, Diagnostics, Discretization,
    EntropyKind, Field, Grids, StepOptions,
};
use crate::stats::chi2_against_probabilities;
use crate::ObstacleConfig;

/// Scale of a verification run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    /// Fewer samples; same tolerances.
    Quick,
    Full,
}

impl Level {
    fn pick<T>(self, quick: T, full: T) -> T {
        match self {
            Level::Quick => quick,
            Level::Full => full,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub id: u8,
    pub name: String,
    /// Short label of the property being checked.
    pub topic: String,
    pub passed: bool,
    pub measured: f64,
    pub tolerance: f64,
    /// Trend check at finite scale rather than a sharp limit.
    pub trend: bool,
    pub detail: String,
    pub seconds: f64,
}

impl Check {
    pub fn line(&self) -> String {
        format!(
            "criterion {:2} {} {}{}: measured {:.6e}, tolerance {:.3e}; {} ({:.1} s)",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            if self.trend { " [trend]" } else { "" },
            self.measured,
            self.tolerance,
            self.detail,
            self.seconds
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub level: Level,
    pub version: String,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed(&self) -> Vec<u8> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.id)
            .collect()
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            s.push_str(&c.line());
            s.push('\n');
        }
        let n = self.checks.iter().filter(|c| c.passed).count();
        s.push_str(&format!("{n}/{} criteria passed\n", self.checks.len()));
        s
    }
}

/// Tolerances, pinned.
pub mod tol {
    pub const NORMALIZATION: f64 = 1e-7;
    pub const FORMULA: f64 = 1e-12;
    pub const SYMMETRY: f64 = 1e-13;
    pub const PI_CONSISTENCY: f64 = 1e-8;
    pub const E_AT_ZERO: f64 = 1e-6;
    pub const E_TOTAL: f64 = 1e-6;
    pub const E_TAIL_RELATIVE: f64 = 0.05;
    pub const CF_FAREY: f64 = 1e-10;
    pub const GOLDEN: f64 = 5e-7;
    pub const CHI2_LEVEL: f64 = 1e-3;
    pub const MEAN_SIGMA: f64 = 0.05;
    pub const SLOPE_MIN: f64 = 1.8;
    pub const H_AGREEMENT: f64 = 1e-10;
    pub const CESARO_RELATIVE: f64 = 0.10;
    pub const MASS_RELATIVE: f64 = 1e-3;
    pub const INITIAL_MASS_RELATIVE: f64 = 1e-4;
    pub const STATIONARY_PER_TIME: f64 = 1e-6;
    /// Allowance for rounding in positivity, comparison and monotonicity.
    pub const ROUNDING: f64 = 1e-12;
    pub const REFINEMENT_RATIO_MIN: f64 = 1.7;
    pub const REFINEMENT_RATIO_MAX: f64 = 2.5;
    pub const COARSE_DECAY: f64 = 0.10;
    pub const LOWER_BOUND_RELATIVE: f64 = 0.10;
    pub const RESIDUAL_ZERO: f64 = 1e-12;
    pub const LINEARITY: f64 = 1e-9;
}

/// Seeds, pinned.
pub mod seeds {
    pub const FORMULA: u64 = 1;
    pub const SYMMETRY: u64 = 2;
    pub const PI_PAIRS: u64 = 3;
    pub const CF_FAREY: u64 = 11;
    pub const PUSHFORWARD: u64 = 5;
    pub const LAMBDA: u64 = 6;
    pub const COUNT_M: u64 = 8;
    pub const STATIONARY: u64 = 7;
    pub const COMPARISON: u64 = 13;
}

struct Outcome {
    passed: bool,
    measured: f64,
    tolerance: f64,
    detail: String,
}

fn run(
    id: u8,
    name: &str,
    topic: &str,
    trend: bool,
    body: impl FnOnce() -> Result<Outcome, String>,
) -> Check {
    let start = Instant::now();
    let r = body();
    let seconds = start.elapsed().as_secs_f64();
    match r {
        Ok(o) => Check {
            id,
            name: name.into(),
            topic: topic.into(),
            passed: o.passed,
            measured: o.measured,
            tolerance: o.tolerance,
            trend,
            detail: o.detail,
            seconds,
        },
        Err(e) => Check {
            id,
            name: name.into(),
            topic: topic.into(),
            passed: false,
            measured: f64::NAN,
            tolerance: f64::NAN,
            trend,
            detail: format!("error: {e}"),
            seconds,
        },
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// `∫ P(S, h | h') dS` by quadrature of the short formula. The decaying
/// piece is integrated in `ln S`, where it is smooth and short.
pub fn p_s_integral(h: f64, hp: f64) -> Result<f64, QuadError> {
    let (u, v) = canonical(h, hp);
    let s1 = 2.0 / (1.0 + u);
    let t = Tolerance::new(1e-14, 1e-12);
    let flat = integrate(|s| p_simple(s, h, hp), 0.0, s1, &[], t)?.value;
    if v <= -1.0 {
        return Ok(f64::INFINITY);
    }
    let s2 = 2.0 / (1.0 + v);
    if s2 <= s1 {
        return Ok(flat);
    }
    let tail = integrate(
        |y: f64| {
            let s = y.exp();
            p_simple(s, h, hp) * s
        },
        s1.ln(),
        s2.ln(),
        &[],
        t,
    )?
    .value;
    Ok(flat + tail)
}

/// `∫∫ P(S, h | h') dS dh` by nested quadrature of the short formula.
pub fn p_total_mass(hp: f64) -> Result<f64, QuadError> {
    let failed = std::cell::Cell::new(None);
    let r = integrate(
        |h| match p_s_integral(h, hp) {
            Ok(v) => v,
            Err(e) => {
                failed.set(Some(e));
                f64::NAN
            }
        },
        -1.0,
        1.0,
        &[hp, -hp],
        // ∫P dS has a logarithmic singularity where |h| and |h'| both reach 1.
        Tolerance::new(1e-12, 1e-10),
    )?;
    if let Some(e) = failed.take() {
        return Err(e);
    }
    Ok(r.value)
}

pub fn criterion_1(_level: Level) -> Check {
    run(1, "kernel normalization", "kernel mass", false, || {
        let worst = (0..=40)
            .into_par_iter()
            .map(|i| {
                // Midpoints of 41 equal cells; at |h'| = 1 the formula loses
                // all digits to cancellation as |h| → 1.
                let hp = -1.0 + (2 * i + 1) as f64 / 41.0;
                p_total_mass(hp).map(|m| (m - 1.0).abs())
            })
            .collect::<Result<Vec<f64>, QuadError>>()
            .map_err(err)?
            .into_iter()
            .fold(0.0, f64::max);
        Ok(Outcome {
            passed: worst < tol::NORMALIZATION,
            measured: worst,
            tolerance: tol::NORMALIZATION,
            detail: "max |∫∫P dS dh − 1| over 41 values of h' in (−1, 1)".into(),
        })
    })
}

pub fn criterion_2(level: Level) -> Check {
    run(2, "formula equivalence", "two closed forms", false, || {
        let n: u64 = level.pick(100_000, 1_000_000);
        let chunks = 100;
        let worst = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut rng = particle_rng(seeds::FORMULA, c);
                let mut w: f64 = 0.0;
                for _ in 0..n / chunks {
                    let s = rng.gen_range(0.0..6.0);
                    let h = rng.gen_range(-1.0..1.0);
                    let hp = rng.gen_range(-1.0..1.0);
                    w = w.max((p_full(s, h, hp) - p_simple(s, h, hp)).abs());
                }
                w
            })
            .reduce(|| 0.0, f64::max);
        Ok(Outcome {
            passed: worst < tol::FORMULA,
            measured: worst,
            tolerance: tol::FORMULA,
            detail: format!("max |p_full − p_simple| over {n} random (S, h, h')"),
        })
    })
}

pub fn criterion_3(_level: Level) -> Check {
    run(3, "kernel symmetries", "symmetry", false, || {
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::SYMMETRY);
        let mut worst: f64 = 0.0;
        for _ in 0..100_000 {
            let s = rng.gen_range(0.0..6.0);
            let h = rng.gen_range(-1.0..1.0);
            let hp = rng.gen_range(-1.0..1.0);
            let p = p_simple(s, h, hp);
            worst = worst
                .max((p - p_simple(s, hp, h)).abs())
                .max((p - p_simple(s, -h, -hp)).abs());
            let q = pi_kernel(h, hp);
            worst = worst
                .max((q - pi_kernel(hp, h)).abs())
                .max((q - pi_kernel(-h, -hp)).abs());
        }
        Ok(Outcome {
            passed: worst < tol::SYMMETRY,
            measured: worst,
            tolerance: tol::SYMMETRY,
            detail: "swap and reflection of (h, h') for P and Π".into(),
        })
    })
}

pub fn criterion_4(_level: Level) -> Check {
    run(4, "Π consistency", "S-marginal", false, || {
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::PI_PAIRS);
        let pairs: Vec<(f64, f64)> = (0..100)
            .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let worst = pairs
            .par_iter()
            .map(|&(h, hp)| p_s_integral(h, hp).map(|v| (v - pi_kernel(h, hp)).abs()))
            .collect::<Result<Vec<f64>, QuadError>>()
            .map_err(err)?
            .into_iter()
            .fold(0.0, f64::max);
        Ok(Outcome {
            passed: worst < tol::PI_CONSISTENCY,
            measured: worst,
            tolerance: tol::PI_CONSISTENCY,
            detail: "max |∫P dS − Π| over 100 pairs".into(),
        })
    })
}

pub fn criterion_5(level: Level) -> Check {
    run(5, "equilibrium profile", "equilibrium", false, || {
        let grid = level.pick(
            TableGrid {
                n_near: 41,
                n_far: 40,
                n_h: 65,
                ..TableGrid::default()
            },
            TableGrid::default(),
        );
        let table = EquilibriumTable::build(grid).map_err(err)?;
        let nh = table.h_grid.len();
        let at_zero = table.values[..nh]
            .iter()
            .map(|v| (v - 1.0).abs())
            .fold(0.0, f64::max);
        let direct = (0..=20)
            .map(|i| equilibrium_e(0.0, -1.0 + i as f64 / 10.0).map(|v| (v - 1.0).abs()))
            .collect::<Result<Vec<f64>, QuadError>>()
            .map_err(err)?
            .into_iter()
            .fold(at_zero, f64::max);
        let total = equilibrium_total().map_err(err)?;
        let tail = 100.0 * 100.0 * equilibrium_h_integral(100.0).map_err(err)?;
        let tail_rel = (tail - 1.0 / PI2).abs() * PI2;
        let passed = direct < tol::E_AT_ZERO
            && (total - 1.0).abs() < tol::E_TOTAL
            && tail_rel < tol::E_TAIL_RELATIVE;
        Ok(Outcome {
            passed,
            measured: (total - 1.0).abs(),
            tolerance: tol::E_TOTAL,
            detail: format!(
                "|∫∫E − 1| measured; max |E(0,h) − 1| {direct:.1e} (≤ {:.0e}); s²∫E dh at s = 100 is {tail:.6} vs 1/π², rel {tail_rel:.2e} (≤ {}); table {}×{}",
                tol::E_AT_ZERO,
                tol::E_TAIL_RELATIVE,
                table.s_grid.len(),
                nh
            ),
        })
    })
}

fn golden_direction() -> Direction {
    Direction::from_vector(Vec2::new(1.0, (5f64.sqrt() - 1.0) / 2.0))
}

pub fn criterion_6(_level: Level) -> Check {
    run(6, "CF and Farey agree", "configuration", false, || {
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::CF_FAREY);
        let mut worst: f64 = 0.0;
        let (mut checked, mut skipped, mut sigma_bad) = (0, 0, 0);
        for _ in 0..10_000 {
            let t: f64 = rng.gen_range(1e-3..std::f64::consts::FRAC_PI_4 - 1e-3);
            let w = Direction::from_angle(t);
            let r = 10f64.powf(rng.gen_range(-6.0..-0.7)) * w.cos() / 2.0;
            let (Ok(c), Ok((f, _))) = (obstacle_params_cf(&w, r), obstacle_params_farey(&w, r))
            else {
                skipped += 1;
                continue;
            };
            if c.near_boundary || f.near_boundary {
                skipped += 1;
                continue;
            }
            checked += 1;
            if c.sigma != f.sigma {
                sigma_bad += 1;
            }
            worst = worst
                .max((c.a - f.a).abs())
                .max((c.b - f.b).abs())
                .max((c.q - f.q).abs());
        }
        let w = golden_direction();
        let g = obstacle_params_cf(&w, 0.05 * w.cos()).map_err(err)?;
        let golden_err = [
            (g.a - 0.098_301).abs(),
            (g.b - 0.442_719).abs(),
            (g.q - 0.5).abs(),
            (g.qbar - 0.8).abs(),
        ]
        .into_iter()
        .fold(0.0, f64::max);
        let golden_ok = golden_err < tol::GOLDEN && g.sigma == -1;
        Ok(Outcome {
            passed: worst < tol::CF_FAREY && sigma_bad == 0 && golden_ok && checked >= 9_900,
            measured: worst,
            tolerance: tol::CF_FAREY,
            detail: format!(
                "{checked} compared, {skipped} skipped at case boundaries or precision limit, σ mismatches {sigma_bad}; golden example (A, B, Q, Q̄) = ({:.6}, {:.6}, {}, {}), σ = {}",
                g.a, g.b, g.q, g.qbar, g.sigma
            ),
        })
    })
}

/// Directions used for the configuration law.
pub const GENERIC_ANGLES: [f64; 3] = [0.3, 0.5, 1.0];

pub fn criterion_7(level: Level) -> Check {
    run(7, "configuration law", "ergodic average", true, || {
        let eps = 1e-6;
        let per_decade = level.pick(2_000, 20_000);
        let bins = ConfigBins { n: 6 };
        let mut worst_p: f64 = 1.0;
        let mut worst_sigma: f64 = 0.0;
        let mut parts = Vec::new();
        for &t in &GENERIC_ANGLES {
            let s = cesaro_config_distribution(Direction::from_angle(t), eps, per_decade)
                .map_err(err)?;
            let chi = crate::mc::config_chi2(&s, bins).map_err(err)?;
            let ms = s.mean_sigma();
            worst_p = worst_p.min(chi.p_value);
            worst_sigma = worst_sigma.max(ms.abs());
            parts.push(format!("θ={t}: p {:.2e}, mean σ {ms:+.3}", chi.p_value));
        }
        Ok(Outcome {
            passed: worst_p > tol::CHI2_LEVEL && worst_sigma < tol::MEAN_SIGMA,
            measured: worst_p,
            tolerance: tol::CHI2_LEVEL,
            detail: format!(
                "min χ² p-value at ε = 1e-6; {}; |mean σ| ≤ {}",
                parts.join("; "),
                tol::MEAN_SIGMA
            ),
        })
    })
}

fn pushforward_counts(hp: f64, n: u64, bins: KernelBins) -> Vec<f64> {
    let chunks = 64;
    let parts: Vec<Vec<u64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = particle_rng(seeds::PUSHFORWARD ^ hp.to_bits(), c);
            let mut counts = vec![0u64; bins.len()];
            let m = n / chunks + u64::from(c < n % chunks);
            for _ in 0..m {
                let (s, h) = sample_p(hp, &mut rng);
                counts[bins.index(s, h)] += 1;
            }
            counts
        })
        .collect();
    let mut out = vec![0.0; bins.len()];
    for p in parts {
        for (o, c) in out.iter_mut().zip(p) {
            *o += c as f64;
        }
    }
    out
}

pub fn criterion_8(level: Level) -> Check {
    run(8, "pushforward identities", "pushforward", false, || {
        let n: u64 = level.pick(100_000, 1_000_000);
        let bins = KernelBins::default();
        let mut min_p: f64 = 1.0;
        let mut parts = Vec::new();
        for hp in [-0.9, 0.0, 0.9] {
            let exact = kernel_bin_masses(hp, bins).map_err(err)?;
            let counts = pushforward_counts(hp, n, bins);
            let chi = chi2_against_probabilities(&counts, &exact);
            min_p = min_p.min(chi.p_value);
            parts.push(format!("h'={hp}: p {:.3}", chi.p_value));
        }
        // λ pushed through Φ then Ψ against ν.
        let cb = ConfigBins { n: 6 };
        let half = cb.len() / 2;
        let mu = cb.mu_probabilities().map_err(err)?;
        let nu: Vec<f64> = mu[..half].iter().map(|p| 2.0 * p).collect();
        let chunks = 64;
        let lam: Vec<Vec<u64>> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut rng = particle_rng(seeds::LAMBDA, c);
                let mut counts = vec![0u64; half];
                for _ in 0..n / chunks {
                    let (q, qp, d) = sample_lambda(&mut rng);
                    let (a, b, q) = phi_map(q, qp, d);
                    let (a, b, q) = psi_map(a, b, q);
                    counts[cb.index(&ObstacleConfig::from_abq(a, b, q, 1))] += 1;
                }
                counts
            })
            .collect();
        let mut counts = vec![0.0; half];
        for p in lam {
            for (o, c) in counts.iter_mut().zip(p) {
                *o += c as f64;
            }
        }
        let chi = chi2_against_probabilities(&counts, &nu);
        min_p = min_p.min(chi.p_value);
        parts.push(format!("λ→ν: p {:.3}", chi.p_value));
        // Closed-form count against enumeration.
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::COUNT_M);
        let (mut mismatches, mut degenerate) = (0u32, 0u32);
        for _ in 0..100_000 {
            let a: f64 = rng.gen();
            let b = (1.0 - a) * rng.gen::<f64>();
            let q: f64 = rng.gen();
            let (m, deg) = brute_count_m(a, b, q, 1e-12);
            if deg {
                degenerate += 1;
                continue;
            }
            if m != count_m(a, b, q) {
                mismatches += 1;
            }
        }
        parts.push(format!(
            "count M mismatches {mismatches} ({degenerate} degenerate skipped)"
        ));
        Ok(Outcome {
            passed: min_p > tol::CHI2_LEVEL && mismatches == 0,
            measured: min_p,
            tolerance: tol::CHI2_LEVEL,
            detail: format!("min χ² p-value, {n} samples each; {}", parts.join("; ")),
        })
    })
}

pub fn criterion_9(level: Level) -> Check {
    run(9, "transfer map limit", "transfer map", true, || {
        let w = golden_direction();
        let radii: Vec<f64> = (0..9).map(|i| 10f64.powf(-2.0 - 0.25 * i as f64)).collect();
        let asy = asymptotic_transfer_check(w, &radii, 0.3).map_err(err)?;
        let asy_ok = asy.slope >= tol::SLOPE_MIN && asy.max_err_h <= tol::H_AGREEMENT;
        let bins = KernelBins::default();
        let exact = kernel_bin_masses(0.0, bins).map_err(err)?;
        let per_decade = level.pick(50, 200);
        let omega = Direction::from_angle(GENERIC_ANGLES[0]);
        let mut tv = Vec::new();
        let mut last = None;
        for eps in [1e-3, 10f64.powf(-4.5), 1e-6] {
            let est = cesaro_kernel_estimate(0.0, omega, eps, bins, per_decade).map_err(err)?;
            let total = est.total();
            let normalized: Vec<f64> = est.mass.iter().map(|m| m / total).collect();
            let dev = bin_deviation(&normalized, &exact);
            tv.push(dev.total_variation);
            last = Some(dev);
        }
        let dev = last.expect("three estimates");
        let ces_ok = dev.max_relative <= tol::CESARO_RELATIVE;
        Ok(Outcome {
            passed: asy_ok && ces_ok,
            measured: dev.max_relative,
            tolerance: tol::CESARO_RELATIVE,
            detail: format!(
                "Cesàro max relative bin error at ε = 1e-6, θ = {}, h' = 0 ({}), max abs {:.3}, TV over ε = 1e-3, 1e-4.5, 1e-6: {:.3}, {:.3}, {:.3}; billiard vs limit map: slope {:.3} (≥ {}), max h error {:.1e} (≤ {:.0e}) {}",
                GENERIC_ANGLES[0],
                if ces_ok { "ok" } else { "fails" },
                dev.max_absolute,
                tv[0],
                tv[1],
                tv[2],
                asy.slope,
                tol::SLOPE_MIN,
                asy.max_err_h,
                tol::H_AGREEMENT,
                if asy_ok { "ok" } else { "fails" }
            ),
        })
    })
}

pub fn criterion_10(level: Level) -> Check {
    run(10, "Markov equilibrium", "stationary chain", false, || {
        let steps: u64 = level.pick(200_000, 1_000_000);
        let chains = 64;
        let r = stationary_run(
            chains,
            steps / chains,
            0.1,
            50.0,
            EnsembleBins::default(),
            seeds::STATIONARY,
        );
        let chi = r.chi2().map_err(err)?;
        Ok(Outcome {
            passed: chi.p_value > tol::CHI2_LEVEL,
            measured: chi.p_value,
            tolerance: tol::CHI2_LEVEL,
            detail: format!(
                "χ² p-value of (s, h) at Poisson times, {} steps, {} samples, dof {}; mean flight per step {:.4}",
                r.steps,
                r.samples,
                chi.dof,
                r.mean_flight()
            ),
        })
    })
}

/// Grid of the long solver runs.
pub fn solver_grids() -> Grids {
    Grids::reduced()
}

/// Cosine-perturbed run to `t = 50`, shared by criteria 11 and 12.
#[derive(Clone, Debug)]
pub struct LongRun {
    pub reports: Vec<Diagnostics>,
    pub initial_mass: f64,
    pub data_mass: f64,
    pub dt: f64,
    pub seconds: f64,
}

pub const LONG_T: f64 = 50.0;
pub const LONG_REPORT: f64 = 2.5;

fn long_run() -> Result<&'static LongRun, String> {
    static RUN: OnceLock<Result<LongRun, String>> = OnceLock::new();
    RUN.get_or_init(|| {
        let start = Instant::now();
        let disc = Discretization::new(solver_grids()).map_err(err)?;
        let f_in = InitialData::cosine(0.5);
        let f0 = init_field(&f_in, &disc);
        let initial_mass = mass(&disc, &f0);
        let dt = 0.9 * disc.dt_limit();
        let out = solve(
            &disc,
            f0,
            LONG_T,
            dt,
            LONG_REPORT,
            &[EntropyKind::Zlogz, EntropyKind::Square],
            StepOptions::default(),
            false,
        )
        .map_err(err)?;
        Ok(LongRun {
            reports: out.reports,
            initial_mass,
            data_mass: f_in.mass(),
            dt: out.dt,
            seconds: start.elapsed().as_secs_f64(),
        })
    })
    .as_ref()
    .map_err(|e| e.clone())
}

fn max_increase(series: &[f64]) -> f64 {
    series
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Balance residuals at `t = 0` on `grids` and on its refinement.
pub fn refinement_ratios(
    grids: Grids,
    f_in: &InitialData,
) -> Result<Vec<(EntropyKind, f64, f64)>, String> {
    let mut res = Vec::new();
    let coarse = Discretization::new(grids).map_err(err)?;
    let fine = Discretization::new(grids.refined()).map_err(err)?;
    for kind in [EntropyKind::Zlogz, EntropyKind::Square] {
        let mut r = [0.0; 2];
        for (i, d) in [&coarse, &fine].into_iter().enumerate() {
            let f = init_field(f_in, d);
            let b = entropy_balance(d, &f, 0.9 * d.dt_limit(), kind, StepOptions::default())
                .map_err(err)?;
            r[i] = b.residual.abs();
        }
        res.push((kind, r[0], r[1]));
    }
    Ok(res)
}

pub fn criterion_11(_level: Level) -> Check {
    run(11, "solver structure", "discrete H-theorem", false, || {
        let lr = long_run()?;
        let mut notes = Vec::new();
        let mut ok = true;

        let m0 = lr.reports[0].mass;
        let mass_drift = lr
            .reports
            .iter()
            .map(|r| ((r.mass - m0) / m0).abs())
            .fold(0.0, f64::max);
        let init_err = ((lr.initial_mass - lr.data_mass) / lr.data_mass).abs();
        ok &= mass_drift < tol::MASS_RELATIVE && init_err < tol::INITIAL_MASS_RELATIVE;
        notes.push(format!(
            "initial mass vs data {init_err:.1e} (≤ {:.0e})",
            tol::INITIAL_MASS_RELATIVE
        ));

        let disc = Discretization::new(solver_grids()).map_err(err)?;
        let dt = 0.9 * disc.dt_limit();
        let e = equilibrium_field(&disc, 1.0);
        let steps = (1.0 / dt).ceil() as usize;
        let mut f = e.clone();
        for _ in 0..steps {
            f = step(&disc, &f, dt, StepOptions::default()).map_err(err)?;
        }
        let emax = e.values.iter().fold(0.0_f64, |a, &b| a.max(b));
        let drift = e
            .values
            .iter()
            .zip(&f.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
            / emax
            / f.t;
        ok &= drift < tol::STATIONARY_PER_TIME;
        notes.push(format!(
            "E drift per unit time {drift:.1e} (≤ {:.0e})",
            tol::STATIONARY_PER_TIME
        ));

        // 0 ≤ F ≤ 2E kept from random data in that range.
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::COMPARISON);
        let two = equilibrium_field(&disc, 2.0);
        let mut g = Field {
            t: 0.0,
            values: two.values.iter().map(|&v| v * rng.gen::<f64>()).collect(),
        };
        let mut worst_low: f64 = 0.0;
        let mut worst_high: f64 = 0.0;
        for _ in 0..(2.0 / dt).ceil() as usize {
            g = step(&disc, &g, dt, StepOptions::default()).map_err(err)?;
            for (&v, &c) in g.values.iter().zip(&two.values) {
                worst_low = worst_low.max(-v);
                worst_high = worst_high.max(v - c);
            }
        }
        let scale = two.values.iter().fold(0.0_f64, |a, &b| a.max(b));
        let order_ok = worst_low <= tol::ROUNDING * scale && worst_high <= tol::ROUNDING * scale;
        ok &= order_ok;
        notes.push(format!(
            "0 ≤ F ≤ 2E to t = 2: worst undershoot {worst_low:.1e}, overshoot {worst_high:.1e}"
        ));

        for (name, series) in [
            (
                "zlogz",
                lr.reports
                    .iter()
                    .map(|r| r.h_zlogz.unwrap_or(f64::NAN))
                    .collect::<Vec<_>>(),
            ),
            (
                "square",
                lr.reports
                    .iter()
                    .map(|r| r.h_square.unwrap_or(f64::NAN))
                    .collect(),
            ),
        ] {
            let inc = max_increase(&series);
            let good = inc <= tol::ROUNDING * series[0] && series.iter().all(|v| v.is_finite());
            ok &= good;
            notes.push(format!("H_{name} max increase between reports {inc:.1e}"));
        }

        let ratios = refinement_ratios(solver_grids(), &InitialData::cosine(0.5))?;
        for (kind, c, f) in ratios {
            let ratio = c / f;
            let good = (tol::REFINEMENT_RATIO_MIN..=tol::REFINEMENT_RATIO_MAX).contains(&ratio);
            ok &= good;
            notes.push(format!(
                "{} balance residual {c:.2e} → {f:.2e} under refinement, ratio {ratio:.2}",
                kind.name()
            ));
        }

        Ok(Outcome {
            passed: ok,
            measured: mass_drift,
            tolerance: tol::MASS_RELATIVE,
            detail: format!(
                "relative mass drift to t = {LONG_T}; {}; grid {:?}, dt {:.4}, long run {:.1} s",
                notes.join("; "),
                solver_grids(),
                lr.dt,
                lr.seconds
            ),
        })
    })
}

/// Compares the solver with gain against the free flow on the same grid.
pub fn free_flow_comparison(
    grids: Grids,
    f_in: &InitialData,
    t_end: f64,
) -> Result<(f64, f64), String> {
    let disc = Discretization::new(grids).map_err(err)?;
    let dt = 0.9 * disc.dt_limit();
    let mut f = init_field(f_in, &disc);
    let mut g = f.clone();
    let n = (t_end / dt).ceil() as usize;
    let dt = t_end / n as f64;
    let mut worst: f64 = 0.0;
    let free = StepOptions {
        gain: false,
        ..StepOptions::default()
    };
    for _ in 0..n {
        f = step(&disc, &f, dt, StepOptions::default()).map_err(err)?;
        g = step(&disc, &g, dt, free).map_err(err)?;
        for (a, b) in f.values.iter().zip(&g.values) {
            worst = worst.max(b - a);
        }
    }
    let scale = init_field(f_in, &disc)
        .values
        .iter()
        .fold(0.0_f64, |a, &b| a.max(b));
    Ok((worst, scale))
}

/// Grid of the free-flow comparison; `x₂` is resolved for the bump.
pub fn comparison_grids() -> Grids {
    Grids {
        nx1: 12,
        nx2: 12,
        nomega: 16,
        ns: 32,
        nh: 8,
        s_max: 200.0,
    }
}

pub fn bump() -> InitialData {
    InitialData::Bump {
        center: [0.5, 0.5],
        width: 0.1,
        height: 1.0,
        base: 0.0,
        angular: 0.5,
        theta0: 0.0,
    }
}

pub fn criterion_12(_level: Level) -> Check {
    run(12, "long-time behavior", "relaxation", true, || {
        let lr = long_run()?;
        let first = lr.reports.first().expect("reports");
        let last = lr.reports.last().expect("reports");
        let decay = last.coarse_distance / first.coarse_distance;
        let decay_ok = decay < tol::COARSE_DECAY;
        let (worst, scale) = free_flow_comparison(comparison_grids(), &bump(), 10.0)?;
        let below_ok = worst <= tol::ROUNDING * scale;
        let lb = free_flow_lower_bound(&InitialData::cosine(0.5), LONG_T).map_err(err)?;
        let lim = lower_bound_limit();
        let lb_rel = (lb.scaled - lim).abs() / lim;
        let lb_ok = lb_rel < tol::LOWER_BOUND_RELATIVE;
        Ok(Outcome {
            passed: decay_ok && below_ok && lb_ok,
            measured: decay,
            tolerance: tol::COARSE_DECAY,
            detail: format!(
                "coarse distance ratio t = {LONG_T} vs 0 ({:.3e} → {:.3e}), C = {:.6}; F ≥ G worst violation {worst:.1e} to t = 10 on {:?}; t^(3/2) bound {:.6} vs 1/(√3π²) = {lim:.6}, rel {lb_rel:.2e} (≤ {})",
                first.coarse_distance,
                last.coarse_distance,
                last.c,
                comparison_grids(),
                lb.scaled,
                tol::LOWER_BOUND_RELATIVE
            ),
        })
    })
}

pub fn criterion_13(_level: Level) -> Check {
    run(
        13,
        "rigidity of local equilibria",
        "local equilibrium",
        false,
        || {
            let disc = Discretization::new(solver_grids()).map_err(err)?;
            let constant = local_equilibrium_residual(&InitialData::Uniform { level: 1.7 }, &disc);
            let deltas = [0.05, 0.1, 0.2, 0.4];
            let rs: Vec<f64> = deltas
                .iter()
                .map(|&d| local_equilibrium_residual(&InitialData::cosine(d), &disc))
                .collect();
            let slopes: Vec<f64> = rs.iter().zip(&deltas).map(|(r, d)| r / d).collect();
            let spread = slopes
                .iter()
                .map(|s| (s - slopes[0]).abs() / slopes[0])
                .fold(0.0, f64::max);
            let positive = rs.iter().all(|&r| r > 10.0 * tol::RESIDUAL_ZERO);
            Ok(Outcome {
            passed: constant < tol::RESIDUAL_ZERO && positive && spread < tol::LINEARITY,
            measured: constant,
            tolerance: tol::RESIDUAL_ZERO,
            detail: format!(
                "residual for constant f; for f = 1 + δ cos 2πx₁ residual/δ = {:.6e}, relative spread {spread:.1e} (≤ {:.0e})",
                slopes[0],
                tol::LINEARITY
            ),
        })
        },
    )
}

pub fn criterion(id: u8, level: Level) -> Option<Check> {
    Some(match id {
        1 => criterion_1(level),
        2 => criterion_2(level),
        3 => criterion_3(level),
        4 => criterion_4(level),
        5 => criterion_5(level),
        6 => criterion_6(level),
        7 => criterion_7(level),
        8 => criterion_8(level),
        9 => criterion_9(level),
        10 => criterion_10(level),
        11 => criterion_11(level),
        12 => criterion_12(level),
        13 => criterion_13(level),
        _ => return None,
    })
}

pub fn verify_all(level: Level) -> VerifyReport {
    VerifyReport {
        level,
        version: env!("CARGO_PKG_VERSION").to_string(),
        checks: (1..=13).filter_map(|i| criterion(i, level)).collect(),
    }
}
