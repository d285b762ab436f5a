//! Cesàro estimators over the radius and particle simulations.
//!
//! Cesàro averages use a logarithmic grid in `r` with trapezoid weights in
//! `ln r`, normalized to total weight one. They are deterministic and do not
//! depend on the number of worker threads. Particle simulations draw from one
//! ChaCha8 stream per particle and merge integer histograms, so they are
//! reproducible for any thread count as well.

use std::f64::consts::TAU;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arithmetic::{
    cf_expand_direction, obstacle_params_cf, params_from_cf, ArithmeticError, ObstacleConfig, Stop,
};
use crate::billiard::{
    exit_time, flow, reduce_to_octant, transfer_map, BilliardError, ParticleState,
};
use crate::consts::TWELVE_OVER_PI2;
use crate::geom::{deflection, Direction, Vec2};
use crate::initial::InitialData;
use crate::kernel::{
    equilibrium_cell_integral, equilibrium_h_band, limit_transfer, limit_transfer_case, s_integral,
    sample_mu,
};
use crate::quad::{integrate, QuadError, Tolerance};
use crate::stats::{chi2_test, log_log_slope, Chi2};

/// Upper end of the radius range in Cesàro averages.
pub const R_MAX: f64 = 0.25;
/// Default number of grid points per decade of `r`.
pub const POINTS_PER_DECADE: usize = 200;
/// Distance of `σh'` to a branch boundary below which a radius is excluded
/// from [`asymptotic_transfer_check`].
pub const CASE_GAP: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum McError {
    #[error(transparent)]
    Arithmetic(#[from] ArithmeticError),
    #[error(transparent)]
    Billiard(#[from] BilliardError),
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error("invalid parameter: {0}")]
    Param(String),
}

/// Generator for particle `id` under `seed`.
pub fn particle_rng(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Log-spaced radii on `[r_min, r_max]` with trapezoid weights in `ln r`
/// summing to one.
pub fn log_grid(r_min: f64, r_max: f64, per_decade: usize) -> Vec<(f64, f64)> {
    assert!(r_min > 0.0 && r_max > r_min && per_decade > 0);
    let (la, lb) = (r_min.ln(), r_max.ln());
    let decades = (lb - la) / std::f64::consts::LN_10;
    let n = ((decades * per_decade as f64).ceil() as usize).max(1);
    let step = (lb - la) / n as f64;
    (0..=n)
        .map(|i| {
            let w = if i == 0 || i == n { 0.5 } else { 1.0 } / n as f64;
            ((la + step * i as f64).exp(), w)
        })
        .collect()
}

/// Bins on `[0, s_max) × [−1, 1]` plus one overflow bin for `S ≥ s_max`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelBins {
    pub s_max: f64,
    pub ns: usize,
    pub nh: usize,
}

impl Default for KernelBins {
    fn default() -> Self {
        Self {
            s_max: 4.0,
            ns: 20,
            nh: 20,
        }
    }
}

impl KernelBins {
    pub fn len(&self) -> usize {
        self.ns * self.nh + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn overflow(&self) -> usize {
        self.ns * self.nh
    }

    pub fn index(&self, s: f64, h: f64) -> usize {
        if s >= self.s_max {
            return self.overflow();
        }
        let i = ((s / self.s_max * self.ns as f64) as usize).min(self.ns - 1);
        let j = (((h + 1.0) / 2.0 * self.nh as f64) as usize).min(self.nh - 1);
        i * self.nh + j
    }

    pub fn s_edges(&self, i: usize) -> (f64, f64) {
        let w = self.s_max / self.ns as f64;
        (w * i as f64, w * (i + 1) as f64)
    }

    pub fn h_edges(&self, j: usize) -> (f64, f64) {
        let w = 2.0 / self.nh as f64;
        (-1.0 + w * j as f64, -1.0 + w * (j + 1) as f64)
    }
}

/// Radius-averaged histogram of the billiard transfer map.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CesaroEstimate {
    pub h_prime: f64,
    pub theta: f64,
    pub eps: f64,
    pub bins: KernelBins,
    /// Weighted mass per bin, overflow last.
    pub mass: Vec<f64>,
    pub r_min: f64,
    pub r_max: f64,
    pub samples: usize,
    /// Radii where the billiard reported an error.
    pub excluded: usize,
    pub excluded_weight: f64,
}

impl CesaroEstimate {
    pub fn total(&self) -> f64 {
        self.mass.iter().sum::<f64>() + self.excluded_weight
    }
}

/// Cesàro average over `r ∈ [eps, 1/4]` of bin indicators applied to the
/// billiard transfer map `T_r(h', ω)`.
pub fn cesaro_kernel_estimate(
    h_prime: f64,
    omega: Direction,
    eps: f64,
    bins: KernelBins,
    per_decade: usize,
) -> Result<CesaroEstimate, McError> {
    if !(1e-8..R_MAX).contains(&eps) {
        return Err(McError::Param(format!("eps {eps} outside [1e-8, 0.25)")));
    }
    let (reduced, _) = reduce_to_octant(omega);
    if reduced.sin() == 0.0 || reduced.sin() == reduced.cos() {
        return Err(McError::Param("rational direction".into()));
    }
    let grid = log_grid(eps, R_MAX, per_decade);
    let hits: Vec<Option<usize>> = grid
        .par_iter()
        .map(|&(r, _)| {
            transfer_map(h_prime, omega, r)
                .ok()
                .map(|t| bins.index(t.flight, t.impact))
        })
        .collect();
    let mut mass = vec![0.0; bins.len()];
    let (mut excluded, mut excluded_weight) = (0, 0.0);
    for (&(_, w), hit) in grid.iter().zip(&hits) {
        match hit {
            Some(k) => mass[*k] += w,
            None => {
                excluded += 1;
                excluded_weight += w;
            }
        }
    }
    Ok(CesaroEstimate {
        h_prime,
        theta: omega.theta(),
        eps,
        bins,
        mass,
        r_min: eps,
        r_max: R_MAX,
        samples: grid.len(),
        excluded,
        excluded_weight,
    })
}

/// Kinks in `h` of `∫_a^b P(S, h | h') dS`.
fn kernel_h_breaks(hp: f64, sa: f64, sb: f64) -> Vec<f64> {
    let mut b = vec![hp, -hp];
    for s in [sa, sb] {
        if s > 0.0 && s.is_finite() {
            let c = 2.0 / s - 1.0;
            if c.abs() < 1.0 {
                b.push(c);
                b.push(-c);
            }
        }
    }
    b
}

/// `∫∫ P(S, h | h') dS dh` over every bin of `bins`, overflow last.
pub fn kernel_bin_masses(h_prime: f64, bins: KernelBins) -> Result<Vec<f64>, McError> {
    let cells: Vec<Result<f64, QuadError>> = (0..bins.ns * bins.nh)
        .into_par_iter()
        .map(|k| {
            let (sa, sb) = bins.s_edges(k / bins.nh);
            let (ha, hb) = bins.h_edges(k % bins.nh);
            integrate(
                |h| s_integral(sa, sb, h, h_prime),
                ha,
                hb,
                &kernel_h_breaks(h_prime, sa, sb),
                Tolerance::new(1e-15, 1e-11),
            )
            .map(|r| r.value)
        })
        .collect();
    let mut out = Vec::with_capacity(bins.len());
    for c in cells {
        out.push(c?);
    }
    let s_max = bins.s_max;
    let tail = integrate(
        |h| s_integral(s_max, f64::INFINITY, h, h_prime),
        -1.0,
        1.0,
        &kernel_h_breaks(h_prime, s_max, f64::INFINITY),
        Tolerance::new(1e-15, 1e-11),
    )?;
    out.push(tail.value);
    Ok(out)
}

/// Per-bin comparison of an estimate with exact bin masses.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BinDeviation {
    /// Max of `|est − exact| / exact` over bins with positive exact mass.
    pub max_relative: f64,
    pub max_absolute: f64,
    /// Bin attaining `max_relative`.
    pub worst_bin: usize,
    /// Estimated mass in bins where the exact mass vanishes.
    pub mass_in_empty_bins: f64,
    /// Total variation distance `½ Σ |est − exact|`.
    pub total_variation: f64,
}

pub fn bin_deviation(estimate: &[f64], exact: &[f64]) -> BinDeviation {
    let mut d = BinDeviation {
        max_relative: 0.0,
        max_absolute: 0.0,
        worst_bin: 0,
        mass_in_empty_bins: 0.0,
        total_variation: 0.0,
    };
    for (k, (&e, &x)) in estimate.iter().zip(exact).enumerate() {
        let diff = (e - x).abs();
        d.max_absolute = d.max_absolute.max(diff);
        d.total_variation += 0.5 * diff;
        if x > 0.0 {
            if diff / x > d.max_relative {
                d.max_relative = diff / x;
                d.worst_bin = k;
            }
        } else {
            d.mass_in_empty_bins += e;
        }
    }
    d
}

/// Radius-averaged samples of `(A, B, Q, σ)(ω, r)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConfigSamples {
    pub theta: f64,
    pub eps: f64,
    pub configs: Vec<ObstacleConfig>,
    /// Cesàro weights, summing to one with `excluded_weight`.
    pub weights: Vec<f64>,
    pub excluded: usize,
    pub excluded_weight: f64,
}

impl ConfigSamples {
    /// Weighted mean of `σ`.
    pub fn mean_sigma(&self) -> f64 {
        let w: f64 = self.weights.iter().sum();
        self.configs
            .iter()
            .zip(&self.weights)
            .map(|(c, w)| c.sigma_f64() * w)
            .sum::<f64>()
            / w
    }

    /// Weighted mean of `σ g(A, B, Q)`.
    pub fn mean_sigma_times<G: Fn(&ObstacleConfig) -> f64>(&self, g: G) -> f64 {
        let w: f64 = self.weights.iter().sum();
        self.configs
            .iter()
            .zip(&self.weights)
            .map(|(c, w)| c.sigma_f64() * g(c) * w)
            .sum::<f64>()
            / w
    }
}

/// `(A, B, Q, σ)(ω, r)` on a logarithmic grid of `r ∈ [eps, 1/4]`.
pub fn cesaro_config_distribution(
    omega: Direction,
    eps: f64,
    per_decade: usize,
) -> Result<ConfigSamples, McError> {
    if !(1e-8..R_MAX).contains(&eps) {
        return Err(McError::Param(format!("eps {eps} outside [1e-8, 0.25)")));
    }
    let (w, _) = reduce_to_octant(omega);
    let cf = cf_expand_direction(&w, Stop::Threshold(2.0 * eps / w.cos()))?;
    let grid = log_grid(eps, R_MAX, per_decade);
    let results: Vec<Option<ObstacleConfig>> = grid
        .par_iter()
        .map(|&(r, _)| params_from_cf(&cf, 2.0 * r / w.cos()).ok())
        .collect();
    let mut out = ConfigSamples {
        theta: omega.theta(),
        eps,
        configs: Vec::with_capacity(grid.len()),
        weights: Vec::with_capacity(grid.len()),
        excluded: 0,
        excluded_weight: 0.0,
    };
    for (&(_, wt), c) in grid.iter().zip(results) {
        match c {
            Some(c) => {
                out.configs.push(c);
                out.weights.push(wt);
            }
            None => {
                out.excluded += 1;
                out.excluded_weight += wt;
            }
        }
    }
    Ok(out)
}

/// Binning of `(A, B' = B/(1−A), Q, σ)` into `n³ × 2` cells.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ConfigBins {
    pub n: usize,
}

impl ConfigBins {
    pub fn len(&self) -> usize {
        2 * self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn coord(&self, x: f64) -> usize {
        ((x * self.n as f64).max(0.0) as usize).min(self.n - 1)
    }

    pub fn index(&self, c: &ObstacleConfig) -> usize {
        let bp = if c.a < 1.0 { c.b / (1.0 - c.a) } else { 0.0 };
        let (i, j, k) = (self.coord(c.a), self.coord(bp), self.coord(c.q));
        let s = usize::from(c.sigma < 0);
        ((s * self.n + i) * self.n + j) * self.n + k
    }

    /// `μ`-probability of every cell, in [`ConfigBins::index`] order.
    pub fn mu_probabilities(&self) -> Result<Vec<f64>, McError> {
        let n = self.n;
        let h = 1.0 / n as f64;
        let cells: Vec<Result<f64, QuadError>> = (0..n * n * n)
            .into_par_iter()
            .map(|idx| {
                let (i, j, k) = (idx / (n * n), (idx / n) % n, idx % n);
                let (a0, a1) = (i as f64 * h, (i + 1) as f64 * h);
                let (b0, b1) = (j as f64 * h, (j + 1) as f64 * h);
                let (q0, q1) = (k as f64 * h, (k + 1) as f64 * h);
                // Q ranges over [0, 1/(1 + (1−A)(1−B'))).
                let len = |a: f64, bp: f64| {
                    let top = 1.0 / (1.0 + (1.0 - a) * (1.0 - bp));
                    (top.min(q1) - q0).max(0.0)
                };
                let inner = |a: f64| {
                    let mut br = Vec::new();
                    for q in [q0, q1] {
                        if q > 0.0 && a < 1.0 {
                            br.push(1.0 - (1.0 / q - 1.0) / (1.0 - a));
                        }
                    }
                    integrate(|bp| len(a, bp), b0, b1, &br, Tolerance::new(1e-14, 1e-11))
                        .map(|r| r.value)
                        .unwrap_or(f64::NAN)
                };
                // Kinks in A where a curve enters a corner of the (B', Q) cell.
                let mut abr = Vec::new();
                for q in [q0, q1] {
                    for bp in [b0, b1] {
                        if q > 0.0 && bp < 1.0 {
                            abr.push(1.0 - (1.0 / q - 1.0) / (1.0 - bp));
                        }
                    }
                }
                integrate(inner, a0, a1, &abr, Tolerance::new(1e-13, 1e-10))
                    .map(|r| 0.5 * TWELVE_OVER_PI2 * r.value)
            })
            .collect();
        let mut half = Vec::with_capacity(n * n * n);
        for c in cells {
            half.push(c?);
        }
        let mut p = half.clone();
        p.extend(half);
        Ok(p)
    }
}

/// χ² of a weighted configuration sample against `μ`. The weights are turned
/// into counts by scaling with the number of samples.
pub fn config_chi2(samples: &ConfigSamples, bins: ConfigBins) -> Result<Chi2, McError> {
    let probs = bins.mu_probabilities()?;
    let n = samples.configs.len() as f64;
    let total: f64 = samples.weights.iter().sum();
    let mut obs = vec![0.0; bins.len()];
    for (c, w) in samples.configs.iter().zip(&samples.weights) {
        obs[bins.index(c)] += w / total * n;
    }
    let expected: Vec<f64> = probs.iter().map(|p| p * n).collect();
    Ok(chi2_test(&obs, &expected))
}

/// One row of [`asymptotic_transfer_check`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AsymptoticRow {
    pub r: f64,
    pub s_billiard: f64,
    pub h_billiard: f64,
    pub s_limit: f64,
    pub h_limit: f64,
    pub err_s: f64,
    pub err_h: f64,
    /// Distance of `σh'` to the nearest branch boundary of the limit map.
    pub gap: f64,
    pub excluded: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AsymptoticCheck {
    pub rows: Vec<AsymptoticRow>,
    /// Log-log slope of `err_s` against `r` over included rows.
    pub slope: f64,
    pub max_err_h: f64,
}

/// Billiard transfer map against the limit map for each radius.
pub fn asymptotic_transfer_check(
    omega: Direction,
    r_list: &[f64],
    h_prime: f64,
) -> Result<AsymptoticCheck, McError> {
    let (w, frame) = reduce_to_octant(omega);
    let sign = frame.impact_sign();
    let mut rows = Vec::with_capacity(r_list.len());
    for &r in r_list {
        let t = transfer_map(h_prime, omega, r)?;
        let cfg = obstacle_params_cf(&w, r)?;
        let (s_lim, h_red) = limit_transfer(&cfg, sign * h_prime);
        let (_, gap) = limit_transfer_case(&cfg, sign * h_prime);
        let h_lim = sign * h_red;
        rows.push(AsymptoticRow {
            r,
            s_billiard: t.flight,
            h_billiard: t.impact,
            s_limit: s_lim,
            h_limit: h_lim,
            err_s: (t.flight - s_lim).abs(),
            err_h: (t.impact - h_lim).abs(),
            gap,
            excluded: gap < CASE_GAP || cfg.near_boundary,
        });
    }
    let kept: Vec<&AsymptoticRow> = rows.iter().filter(|r| !r.excluded).collect();
    let xs: Vec<f64> = kept.iter().map(|r| r.r).collect();
    let ys: Vec<f64> = kept.iter().map(|r| r.err_s).collect();
    let slope = if kept.len() >= 2 {
        log_log_slope(&xs, &ys)
    } else {
        f64::NAN
    };
    let max_err_h = kept.iter().map(|r| r.err_h).fold(0.0, f64::max);
    Ok(AsymptoticCheck {
        rows,
        slope,
        max_err_h,
    })
}

/// State of the limiting process in extended phase space: `s` is the time
/// left until the next collision and `h` the impact parameter there.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkovState {
    pub position: Vec2,
    pub direction: Direction,
    pub s: f64,
    pub h: f64,
    pub t: f64,
}

fn wrap(x: Vec2) -> Vec2 {
    Vec2::new(x.x.rem_euclid(1.0), x.y.rem_euclid(1.0))
}

impl MarkovState {
    /// The state after free flight for `dt ≤ s`.
    pub fn drifted(&self, dt: f64) -> MarkovState {
        debug_assert!(dt <= self.s + 1e-12);
        MarkovState {
            position: wrap(self.position + self.direction.vec() * dt),
            s: (self.s - dt).max(0.0),
            t: self.t + dt,
            ..*self
        }
    }
}

/// Flight to the next collision, deflection there, and a fresh draw of the
/// following flight and impact from `μ` and the limit map.
pub fn markov_step<R: Rng + ?Sized>(state: &MarkovState, rng: &mut R) -> MarkovState {
    let arrived = state.drifted(state.s);
    let direction = arrived.direction.rotated(deflection(state.h));
    let (big_s, h) = limit_transfer(&sample_mu(rng), state.h);
    MarkovState {
        direction,
        s: 0.5 * big_s,
        h,
        ..arrived
    }
}

/// Draws `(s, h)` from the equilibrium profile `E`.
///
/// With `(A, B, Q, σ) ∼ μ` and `h'` uniform, the three branches of the
/// limit map have probabilities `A`, `B`, `1−A−B` and flights `Q`, `Q̄`,
/// `Q+Q̄`. Size-biasing by the flight gives branch weights summing to
/// `Q(1−B) + Q̄(1−A) = 1`, and `s` is then uniform on `[0, S/2]`.
pub fn sample_stationary<R: Rng + ?Sized>(rng: &mut R) -> (f64, f64) {
    let cfg = sample_mu(rng);
    let sigma = cfg.sigma_f64();
    let w1 = cfg.a * cfg.q;
    let w2 = cfg.b * cfg.qbar;
    let u: f64 = rng.gen();
    let v: f64 = rng.gen();
    let x = if u < w1 {
        1.0 - 2.0 * cfg.a * v
    } else if u < w1 + w2 {
        -1.0 + 2.0 * cfg.b * v
    } else {
        -1.0 + 2.0 * cfg.b + 2.0 * (1.0 - cfg.a - cfg.b) * v
    };
    let (big_s, h) = limit_transfer(&cfg, sigma * x);
    (0.5 * big_s * rng.gen::<f64>(), h)
}

/// Runs the chain until time `t`, returning the drifted state at `t`.
pub fn advance_to<R: Rng + ?Sized>(state: &MarkovState, t: f64, rng: &mut R) -> MarkovState {
    let mut st = *state;
    while st.t + st.s <= t {
        st = markov_step(&st, rng);
    }
    st.drifted(t - st.t)
}

/// Binning of `(x, θ)` and `(s, h)` for ensembles.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleBins {
    pub nx1: usize,
    pub nx2: usize,
    pub ntheta: usize,
    pub ns: usize,
    pub nh: usize,
    pub s_max: f64,
}

impl Default for EnsembleBins {
    fn default() -> Self {
        Self {
            nx1: 8,
            nx2: 8,
            ntheta: 8,
            ns: 10,
            nh: 8,
            s_max: 5.0,
        }
    }
}

fn cell(x: f64, lo: f64, hi: f64, n: usize) -> usize {
    (((x - lo) / (hi - lo) * n as f64).max(0.0) as usize).min(n - 1)
}

impl EnsembleBins {
    pub fn xw_len(&self) -> usize {
        self.nx1 * self.nx2 * self.ntheta
    }

    /// `(s, h)` bins with one overflow column `s ≥ s_max` per `h` bin.
    pub fn sh_len(&self) -> usize {
        (self.ns + 1) * self.nh
    }

    pub fn xw_index(&self, x: Vec2, theta: f64) -> usize {
        let i = cell(x.x.rem_euclid(1.0), 0.0, 1.0, self.nx1);
        let j = cell(x.y.rem_euclid(1.0), 0.0, 1.0, self.nx2);
        let k = cell(theta.rem_euclid(TAU), 0.0, TAU, self.ntheta);
        (i * self.nx2 + j) * self.ntheta + k
    }

    pub fn sh_index(&self, s: f64, h: f64) -> usize {
        let i = if s >= self.s_max {
            self.ns
        } else {
            cell(s, 0.0, self.s_max, self.ns)
        };
        i * self.nh + cell(h, -1.0, 1.0, self.nh)
    }

    pub fn s_edges(&self, i: usize) -> (f64, f64) {
        if i == self.ns {
            return (self.s_max, f64::INFINITY);
        }
        let w = self.s_max / self.ns as f64;
        (w * i as f64, w * (i + 1) as f64)
    }

    pub fn h_edges(&self, j: usize) -> (f64, f64) {
        let w = 2.0 / self.nh as f64;
        (-1.0 + w * j as f64, -1.0 + w * (j + 1) as f64)
    }

    /// `∫∫ E` over every `(s, h)` bin, in [`EnsembleBins::sh_index`] order.
    pub fn equilibrium_probabilities(&self) -> Result<Vec<f64>, McError> {
        let nh = self.nh;
        let ns = self.ns;
        let cells: Vec<Result<f64, QuadError>> = (0..ns * nh)
            .into_par_iter()
            .map(|k| {
                let (sa, sb) = self.s_edges(k / nh);
                let (ha, hb) = self.h_edges(k % nh);
                equilibrium_cell_integral(sa, sb, ha, hb)
            })
            .collect();
        let mut p = Vec::with_capacity(self.sh_len());
        for c in cells {
            p.push(c?);
        }
        // Overflow column: full h-band mass minus the finite cells.
        for j in 0..nh {
            let (ha, hb) = self.h_edges(j);
            let band = equilibrium_h_band(ha, hb)?;
            let inside: f64 = (0..ns).map(|i| p[i * nh + j]).sum();
            p.push((band - inside).max(0.0));
        }
        Ok(p)
    }
}

/// Histograms of a stationary chain sampled at Poisson times.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StationaryRun {
    pub bins: EnsembleBins,
    pub counts: Vec<u64>,
    pub steps: u64,
    pub samples: u64,
    /// Sum of the drawn flights `S`, for the mean flight per step.
    pub flight_sum: f64,
}

impl StationaryRun {
    pub fn mean_flight(&self) -> f64 {
        self.flight_sum / self.steps as f64
    }

    pub fn chi2(&self) -> Result<Chi2, McError> {
        let p = self.bins.equilibrium_probabilities()?;
        let obs: Vec<f64> = self.counts.iter().map(|&c| c as f64).collect();
        let n = self.samples as f64;
        let exp: Vec<f64> = p.iter().map(|q| q * n).collect();
        Ok(chi2_test(&obs, &exp))
    }
}

/// Runs `chains` independent chains for `steps_per_chain` collisions each,
/// started after a collision with uniform `h`, and samples `(s, h)` at the
/// points of a Poisson process of the given `rate` after `burn_in`.
pub fn stationary_run(
    chains: u64,
    steps_per_chain: u64,
    rate: f64,
    burn_in: f64,
    bins: EnsembleBins,
    seed: u64,
) -> StationaryRun {
    let per_chain: Vec<(Vec<u64>, u64, f64)> = (0..chains)
        .into_par_iter()
        .map(|id| {
            let mut rng = particle_rng(seed, id);
            let mut counts = vec![0u64; bins.sh_len()];
            let mut samples = 0;
            let mut flights = 0.0;
            let h0 = rng.gen_range(-1.0..1.0);
            let (big_s, h) = limit_transfer(&sample_mu(&mut rng), h0);
            let mut st = MarkovState {
                position: Vec2::new(rng.gen(), rng.gen()),
                direction: Direction::from_angle(rng.gen::<f64>() * TAU),
                s: 0.5 * big_s,
                h,
                t: 0.0,
            };
            let mut next_sample = burn_in - rng.gen::<f64>().ln() / rate;
            for _ in 0..steps_per_chain {
                while next_sample < st.t + st.s {
                    let s_left = st.t + st.s - next_sample;
                    counts[bins.sh_index(s_left, st.h)] += 1;
                    samples += 1;
                    next_sample -= (1.0 - rng.gen::<f64>()).ln() / rate;
                }
                st = markov_step(&st, &mut rng);
                flights += 2.0 * st.s;
            }
            (counts, samples, flights)
        })
        .collect();
    let mut counts = vec![0u64; bins.sh_len()];
    let mut samples = 0;
    let mut flight_sum = 0.0;
    for (c, n, f) in per_chain {
        for (a, b) in counts.iter_mut().zip(c) {
            *a += b;
        }
        samples += n;
        flight_sum += f;
    }
    StationaryRun {
        bins,
        counts,
        steps: chains * steps_per_chain,
        samples,
        flight_sum,
    }
}

/// Mean of `S` per step when `h'` is uniform:
/// `½ ∫∫∫ S P(S, h | h') dS dh dh'`.
pub fn mean_flight_per_step() -> Result<f64, McError> {
    Ok(equilibrium_h_band(-1.0, 1.0)?)
}

/// Snapshot histograms of an ensemble.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub xw: Vec<u64>,
    /// Empty for billiard ensembles.
    pub sh: Vec<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Ensemble {
    pub bins: EnsembleBins,
    pub particles: u64,
    pub snapshots: Vec<Snapshot>,
    /// Particles dropped after a billiard error.
    pub lost: u64,
}

fn check_times(times: &[f64]) -> Result<(), McError> {
    if times.windows(2).any(|w| w[1] < w[0]) || times.iter().any(|&t| !(t >= 0.0)) {
        return Err(McError::Param(
            "snapshot times must be nonnegative and sorted".into(),
        ));
    }
    Ok(())
}

/// Particles of the limiting process started from `f_in(x, ω) E(s, h)`.
pub fn markov_ensemble(
    f_in: &InitialData,
    n_particles: u64,
    times: &[f64],
    bins: EnsembleBins,
    seed: u64,
) -> Result<Ensemble, McError> {
    check_times(times)?;
    let per: Vec<Vec<(usize, usize)>> = (0..n_particles)
        .into_par_iter()
        .map(|id| {
            let mut rng = particle_rng(seed, id);
            let (x, theta) = f_in.sample(&mut rng);
            let (s, h) = sample_stationary(&mut rng);
            let mut st = MarkovState {
                position: x,
                direction: Direction::from_angle(theta),
                s,
                h,
                t: 0.0,
            };
            times
                .iter()
                .map(|&t| {
                    st = advance_to(&st, t, &mut rng);
                    (
                        bins.xw_index(st.position, st.direction.theta()),
                        bins.sh_index(st.s, st.h),
                    )
                })
                .collect()
        })
        .collect();
    let mut snapshots: Vec<Snapshot> = times
        .iter()
        .map(|&t| Snapshot {
            t,
            xw: vec![0; bins.xw_len()],
            sh: vec![0; bins.sh_len()],
        })
        .collect();
    for p in per {
        for (snap, (a, b)) in snapshots.iter_mut().zip(p) {
            snap.xw[a] += 1;
            snap.sh[b] += 1;
        }
    }
    Ok(Ensemble {
        bins,
        particles: n_particles,
        snapshots,
        lost: 0,
    })
}

/// Billiard particles at radius `r` in macroscopic variables: the position
/// is `r` times the lattice position, taken mod 1, and macroscopic time `t`
/// is lattice time `t/r`.
pub fn billiard_ensemble(
    f_in: &InitialData,
    r: f64,
    n_particles: u64,
    times: &[f64],
    bins: EnsembleBins,
    seed: u64,
) -> Result<Ensemble, McError> {
    check_times(times)?;
    if !(r > 0.0 && r < 0.5) {
        return Err(McError::Param(format!("radius {r} outside (0, 1/2)")));
    }
    let per: Vec<Option<Vec<usize>>> = (0..n_particles)
        .into_par_iter()
        .map(|id| {
            let mut rng = particle_rng(seed, id);
            // Rejection keeps the start point in the free domain.
            let (x, theta) = loop {
                let (x, theta) = f_in.sample(&mut rng);
                let micro = x * (1.0 / r);
                let off = micro - Vec2::new(micro.x.round(), micro.y.round());
                if off.norm() > r {
                    break (x, theta);
                }
            };
            let mut st = ParticleState::new(x * (1.0 / r), Direction::from_angle(theta));
            let mut last = 0.0;
            let mut out = Vec::with_capacity(times.len());
            for &t in times {
                st = flow(&st, r, (t - last) / r).ok()?;
                last = t;
                out.push(bins.xw_index(st.position * r, st.direction.theta()));
            }
            Some(out)
        })
        .collect();
    let mut snapshots: Vec<Snapshot> = times
        .iter()
        .map(|&t| Snapshot {
            t,
            xw: vec![0; bins.xw_len()],
            sh: Vec::new(),
        })
        .collect();
    let mut lost = 0;
    for p in per {
        match p {
            Some(idx) => {
                for (snap, k) in snapshots.iter_mut().zip(idx) {
                    snap.xw[k] += 1;
                }
            }
            None => lost += 1,
        }
    }
    Ok(Ensemble {
        bins,
        particles: n_particles,
        snapshots,
        lost,
    })
}

/// χ² of a histogram against the uniform law.
pub fn uniformity_chi2(counts: &[u64]) -> Chi2 {
    let n: u64 = counts.iter().sum();
    let e = n as f64 / counts.len() as f64;
    let obs: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    chi2_test(&obs, &vec![e; counts.len()])
}

/// Lag-one correlations of the configuration parameters seen along billiard
/// trajectories.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub r: f64,
    pub pairs: u64,
    pub corr_a: f64,
    pub corr_b: f64,
    pub corr_q: f64,
    pub corr_sigma: f64,
    /// Standard error of a correlation estimate under independence.
    pub std_error: f64,
    pub skipped: u64,
}

#[derive(Default, Clone, Copy)]
struct Moments {
    n: f64,
    sx: f64,
    sy: f64,
    sxx: f64,
    syy: f64,
    sxy: f64,
}

impl Moments {
    fn push(&mut self, x: f64, y: f64) {
        self.n += 1.0;
        self.sx += x;
        self.sy += y;
        self.sxx += x * x;
        self.syy += y * y;
        self.sxy += x * y;
    }

    fn add(&mut self, o: &Moments) {
        self.n += o.n;
        self.sx += o.sx;
        self.sy += o.sy;
        self.sxx += o.sxx;
        self.syy += o.syy;
        self.sxy += o.sxy;
    }

    fn corr(&self) -> f64 {
        let cxy = self.sxy / self.n - self.sx * self.sy / (self.n * self.n);
        let vx = self.sxx / self.n - (self.sx / self.n).powi(2);
        let vy = self.syy / self.n - (self.sy / self.n).powi(2);
        cxy / (vx * vy).sqrt()
    }
}

fn config_after(omega: Direction, r: f64) -> Option<ObstacleConfig> {
    let (w, _) = reduce_to_octant(omega);
    obstacle_params_cf(&w, r).ok()
}

/// Follows `n_trajectories` billiard orbits for `n_collisions` collisions
/// each and correlates `(A, B, Q, σ)(ω_j, r)` with `(A, B, Q, σ)(ω_{j+1}, r)`.
pub fn hypothesis_h(
    r: f64,
    n_trajectories: u64,
    n_collisions: usize,
    seed: u64,
) -> Result<HypothesisReport, McError> {
    if !(r > 0.0 && r < 0.1) {
        return Err(McError::Param(format!("radius {r} outside (0, 0.1)")));
    }
    let per: Vec<([Moments; 4], u64)> = (0..n_trajectories)
        .into_par_iter()
        .map(|id| {
            let mut rng = particle_rng(seed, id);
            let mut m = [Moments::default(); 4];
            let mut skipped = 0;
            let start = loop {
                let p = Vec2::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
                if p.norm() > r {
                    break ParticleState::new(p, Direction::from_angle(rng.gen::<f64>() * TAU));
                }
            };
            let mut st = start;
            let mut prev = config_after(st.direction, r);
            for _ in 0..n_collisions {
                let Ok(ex) = exit_time(&st, r) else {
                    skipped += 1;
                    break;
                };
                let Ok(next) = flow(&st, r, ex.tau + 1e-9 * ex.tau.max(1.0)) else {
                    skipped += 1;
                    break;
                };
                st = next;
                let cur = config_after(st.direction, r);
                match (&prev, &cur) {
                    (Some(a), Some(b)) => {
                        m[0].push(a.a, b.a);
                        m[1].push(a.b, b.b);
                        m[2].push(a.q, b.q);
                        m[3].push(a.sigma_f64(), b.sigma_f64());
                    }
                    _ => skipped += 1,
                }
                prev = cur;
            }
            (m, skipped)
        })
        .collect();
    let mut m = [Moments::default(); 4];
    let mut skipped = 0;
    for (pm, s) in &per {
        for (a, b) in m.iter_mut().zip(pm) {
            a.add(b);
        }
        skipped += s;
    }
    Ok(HypothesisReport {
        r,
        pairs: m[0].n as u64,
        corr_a: m[0].corr(),
        corr_b: m[1].corr(),
        corr_q: m[2].corr(),
        corr_sigma: m[3].corr(),
        std_error: 1.0 / m[0].n.sqrt(),
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn golden() -> Direction {
        Direction::from_vector(Vec2::new(1.0, (5f64.sqrt() - 1.0) / 2.0))
    }

    #[test]
    fn log_grid_weights_sum_to_one() {
        let g = log_grid(1e-6, 0.25, 200);
        let s: f64 = g.iter().map(|p| p.1).sum();
        assert!((s - 1.0).abs() < 1e-10);
        assert!((g[0].0 - 1e-6).abs() < 1e-18);
        assert!((g.last().unwrap().0 - 0.25).abs() < 1e-14);
    }

    #[test]
    fn kernel_bins_are_a_partition() {
        let b = KernelBins::default();
        for hp in [-0.9, 0.0, 0.4] {
            let m = kernel_bin_masses(hp, b).unwrap();
            let s: f64 = m.iter().sum();
            assert!((s - 1.0).abs() < 1e-9, "{s}");
            assert!(m.iter().all(|&x| x >= -1e-15));
        }
    }

    #[test]
    fn estimate_mass_is_one() {
        let e = cesaro_kernel_estimate(0.0, golden(), 1e-3, KernelBins::default(), 50).unwrap();
        assert!((e.total() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn mu_cells_sum_to_one() {
        let p = ConfigBins { n: 4 }.mu_probabilities().unwrap();
        let s: f64 = p.iter().sum();
        assert!((s - 1.0).abs() < 1e-8, "{s}");
    }

    #[test]
    fn stationary_sampler_mean() {
        // Mass of s < 1/2 against quadrature of E.
        let mut rng = particle_rng(1, 0);
        let n = 200_000;
        let mut below = 0;
        for _ in 0..n {
            let (s, h) = sample_stationary(&mut rng);
            assert!(s >= 0.0 && h.abs() <= 1.0);
            if s < 0.5 {
                below += 1;
            }
        }
        let exact = equilibrium_cell_integral(0.0, 0.5, -1.0, 1.0).unwrap();
        let frac = below as f64 / n as f64;
        let se = (exact * (1.0 - exact) / n as f64).sqrt();
        assert!((frac - exact).abs() < 5.0 * se, "{frac} vs {exact}");
    }

    #[test]
    fn step_keeps_unit_speed_and_torus() {
        let mut rng = particle_rng(2, 0);
        let mut st = MarkovState {
            position: Vec2::new(0.3, 0.7),
            direction: Direction::from_angle(0.4),
            s: 0.2,
            h: 0.1,
            t: 0.0,
        };
        for _ in 0..10_000 {
            st = markov_step(&st, &mut rng);
            assert!(st.s > 0.0 && st.h.abs() <= 1.0);
            assert!((0.0..1.0).contains(&st.position.x) && (0.0..1.0).contains(&st.position.y));
        }
        assert!((st.direction.vec().norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn ensembles_do_not_depend_on_thread_count() {
        let f = InitialData::cosine(0.5);
        let b = EnsembleBins::default();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| markov_ensemble(&f, 2000, &[0.0, 1.0], b, 9).unwrap())
        };
        let (a, c) = (run(1), run(4));
        for (x, y) in a.snapshots.iter().zip(&c.snapshots) {
            assert_eq!(x.xw, y.xw);
            assert_eq!(x.sh, y.sh);
        }
    }
}
