//! Limit objects: the three-obstacle transfer map, the transition density
//! `P(S, h | h')`, its S-marginal `Π`, the equilibrium profile `E(s, h)`,
//! the configuration laws `μ`, `ν`, `λ` and samplers.
//!
//! `P` depends on `(h, h')` only through the canonical pair `(u, v)` with
//! `u = max(|h|, |h'|)` and `|v| ≤ u`. In those variables
//! `P = 3/π²` on `S ≤ s₁ = 2/(1+u)`, `P = (3/π²)(2/S − 1 − v)/(u − v)` on
//! `s₁ ≤ S ≤ s₂ = 2/(1+v)` and zero beyond, so every S-integral is elementary.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arithmetic::ObstacleConfig;
use crate::consts::{SIX_OVER_PI2, THREE_OVER_PI2, TWELVE_OVER_PI2};
use crate::quad::{integrate, QuadError, Tolerance};

/// `sgn` with `sgn(±0) = +1`.
fn sgn(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Canonical pair `(u, v)`: `u = max(|h|, |h'|)`, `v` the other argument
/// with the sign making `P(S,h|h') = P(S,u|v)`, `|v| ≤ u`.
pub fn canonical(h: f64, hp: f64) -> (f64, f64) {
    if h.abs() >= hp.abs() {
        (h.abs(), sgn(h) * hp)
    } else {
        (hp.abs(), sgn(hp) * h)
    }
}

/// `P(S, h | h')` from the short formula.
pub fn p_simple(s: f64, h: f64, hp: f64) -> f64 {
    if s <= 0.0 {
        return THREE_OVER_PI2;
    }
    let (u, v) = canonical(h, hp);
    let x = (2.0 / s - 1.0 - v).max(0.0);
    let d = u - v;
    if x == 0.0 {
        0.0
    } else if x >= d {
        THREE_OVER_PI2
    } else {
        THREE_OVER_PI2 * (x / d)
    }
}

/// `P(S, h | h')` from the four-term formula in `η = |h−h'|/2`, `ζ = |h+h'|/2`.
pub fn p_full(s: f64, h: f64, hp: f64) -> f64 {
    if s <= 0.0 {
        return THREE_OVER_PI2;
    }
    let eta = 0.5 * (h - hp).abs();
    let zeta = 0.5 * (h + hp).abs();
    if eta == 0.0 {
        return if s * (1.0 + zeta) < 2.0 {
            THREE_OVER_PI2
        } else {
            0.0
        };
    }
    let se = s * eta;
    let half = 0.5 * se;
    let t1 = se.min((1.0 - s).max(0.0));
    let t2 = (se - (1.0 - s).abs()).max(0.0);
    let core = 0.5 * s * (1.0 - eta - zeta);
    let t3 = core
        .min(s - 1.0 - half)
        .min(1.0 - 0.5 * s * (1.0 + zeta - eta))
        .min(half)
        .max(0.0);
    let t4 = core
        .min(s - 1.0)
        .min(1.0 - 0.5 * s * (1.0 + zeta))
        .min(half)
        .max(0.0);
    THREE_OVER_PI2 * (t1 + t2 + t3 + t4) / se
}

/// `Π(h | h') = ∫₀^∞ P(S, h | h') dS` in closed form.
pub fn pi_kernel(h: f64, hp: f64) -> f64 {
    let (u, v) = canonical(h, hp);
    let z = (u - v) / (1.0 + v);
    let ratio = if z < 1e-8 {
        // ln(1+z)/z
        1.0 - z / 2.0 + z * z / 3.0
    } else {
        z.ln_1p() / z
    };
    SIX_OVER_PI2 * ratio / (1.0 + v)
}

/// `x − 1 − ln x` as a function of `y = 1 − x`.
fn g_of_y(y: f64) -> f64 {
    if y.abs() < 0.1 {
        let mut term = y;
        let mut sum = 0.0;
        for k in 2..40 {
            term *= y;
            let t = term / k as f64;
            sum += t;
            if t.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        -y - (-y).ln_1p()
    }
}

/// Piecewise description of `S ↦ P(S, u | v)` divided by `3/π²`.
#[derive(Clone, Copy, Debug)]
struct Profile {
    u: f64,
    beta: f64,
    d: f64,
    s1: f64,
    s2: f64,
}

impl Profile {
    fn new(h: f64, hp: f64) -> Self {
        let (u, v) = canonical(h, hp);
        let beta = 1.0 + v;
        Self {
            u,
            beta,
            d: u - v,
            s1: 2.0 / (1.0 + u),
            s2: if beta > 0.0 {
                2.0 / beta
            } else {
                f64::INFINITY
            },
        }
    }

    fn y_at(&self, s: f64) -> f64 {
        if s == self.s1 {
            self.d / (1.0 + self.u)
        } else if s == self.s2 {
            0.0
        } else {
            1.0 - 0.5 * self.beta * s
        }
    }

    /// Overlap of `[a, b]` with the decaying piece.
    fn mid(&self, a: f64, b: f64) -> Option<(f64, f64)> {
        let lo = a.max(self.s1);
        let hi = b.min(self.s2);
        (hi > lo && self.d > 0.0).then_some((lo, hi))
    }

    fn m0(&self, a: f64, b: f64) -> f64 {
        let mut t = (b.min(self.s1) - a).max(0.0);
        if let Some((lo, hi)) = self.mid(a, b) {
            if hi.is_infinite() {
                return f64::INFINITY;
            }
            t += 2.0 * (g_of_y(self.y_at(lo)) - g_of_y(self.y_at(hi))) / self.d;
        }
        t
    }

    fn m1(&self, a: f64, b: f64) -> f64 {
        let top = b.min(self.s1);
        let mut t = if top > a {
            0.5 * (top * top - a * a)
        } else {
            0.0
        };
        if let Some((lo, hi)) = self.mid(a, b) {
            if hi.is_infinite() {
                return f64::INFINITY;
            }
            let (da, db) = (self.s2 - lo, self.s2 - hi);
            t += 0.5 * self.beta * (da - db) * (da + db) / self.d;
        }
        t
    }
}

/// `∫_a^b P(S, h | h') dS`, `0 ≤ a ≤ b ≤ ∞`.
pub fn s_integral(a: f64, b: f64, h: f64, hp: f64) -> f64 {
    THREE_OVER_PI2 * Profile::new(h, hp).m0(a, b)
}

/// `∫_a^b S P(S, h | h') dS`.
pub fn s_moment(a: f64, b: f64, h: f64, hp: f64) -> f64 {
    THREE_OVER_PI2 * Profile::new(h, hp).m1(a, b)
}

/// `∫_a^b dσ ∫_σ^∞ P(τ, h | h') dτ`.
pub fn s_tail_integral(a: f64, b: f64, h: f64, hp: f64) -> f64 {
    let p = Profile::new(h, hp);
    if b <= a {
        return 0.0;
    }
    let tail = if b.is_infinite() {
        0.0
    } else {
        (b - a) * p.m0(b, f64::INFINITY)
    };
    THREE_OVER_PI2 * (p.m1(a, b) - a * p.m0(a, b) + tail)
}

/// `∫₀^∞ ½ S P(S, h | h') dS = 3 / (π²(1+u)(1+v))`.
pub fn half_mean_flight(h: f64, hp: f64) -> f64 {
    let (u, v) = canonical(h, hp);
    THREE_OVER_PI2 / ((1.0 + u) * (1.0 + v))
}

/// Kinks in `h'` of the S-integrals starting at `σ` for fixed `h`.
fn hp_breaks(h: f64, sigmas: &[f64]) -> Vec<f64> {
    let mut b = vec![h, -h];
    for &s in sigmas {
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

fn tight() -> Tolerance {
    Tolerance::new(1e-14, 1e-12)
}

/// `E(s, h) = ∫_{2s}^∞ ∫ P(τ, h | h') dh' dτ`, by quadrature in `h'`.
pub fn equilibrium_e(s: f64, h: f64) -> Result<f64, QuadError> {
    let sigma = 2.0 * s;
    integrate(
        |hp| s_integral(sigma, f64::INFINITY, h, hp),
        -1.0,
        1.0,
        &hp_breaks(h, &[sigma]),
        tight(),
    )
    .map(|r| r.value)
}

/// `∫ 2P(2s, h | h') dh' = −∂_s E(s, h)`.
pub fn equilibrium_rate(s: f64, h: f64) -> Result<f64, QuadError> {
    let sigma = 2.0 * s;
    integrate(
        |hp| 2.0 * p_simple(sigma, h, hp),
        -1.0,
        1.0,
        &hp_breaks(h, &[sigma]),
        tight(),
    )
    .map(|r| r.value)
}

/// Support of `h ↦ E(s, h)` is `|h| ≥ 1 − 1/s` for `s > 1`.
fn h_breaks(s: f64) -> Vec<f64> {
    let mut b = vec![0.0];
    if s > 1.0 {
        b.push(1.0 - 1.0 / s);
        b.push(-(1.0 - 1.0 / s));
    }
    if s > 0.5 {
        b.push(1.0 / s - 1.0);
        b.push(1.0 - 1.0 / s);
    }
    b
}

/// `∫ E(s, h) dh`.
pub fn equilibrium_h_integral(s: f64) -> Result<f64, QuadError> {
    let inner_err = std::cell::Cell::new(None);
    let r = integrate(
        |h| match equilibrium_e(s, h) {
            Ok(v) => v,
            Err(e) => {
                inner_err.set(Some(e));
                f64::NAN
            }
        },
        -1.0,
        1.0,
        &h_breaks(s),
        Tolerance::new(1e-15, 1e-11),
    )?;
    if let Some(e) = inner_err.take() {
        return Err(e);
    }
    Ok(r.value)
}

/// `∫∫ E ds dh` by nested quadrature; the outer tail uses `s = 1/t`.
pub fn equilibrium_total() -> Result<f64, QuadError> {
    let tol = Tolerance::new(1e-13, 1e-10);
    let f = |s: f64| equilibrium_h_integral(s).unwrap_or(f64::NAN);
    let near = integrate(f, 0.0, 1.0, &[0.5], tol)?.value;
    // ∫_1^∞ F(s) ds = ∫_0^1 F(1/t)/t² dt; F(1/t)/t² → 1/π² as t → 0.
    let far = integrate(
        |t: f64| if t <= 0.0 { 0.0 } else { f(1.0 / t) / (t * t) },
        0.0,
        1.0,
        &[],
        tol,
    )?
    .value;
    let total = near + far;
    if total.is_nan() {
        return Err(QuadError {
            value: total,
            error: f64::NAN,
            evals: 0,
        });
    }
    Ok(total)
}

/// `∫∫ E ds dh` through `∫∫∫ ½ S P = ∫∫ 3/(π²(1+u)(1+v)) dh dh'`.
pub fn equilibrium_total_by_moment() -> Result<f64, QuadError> {
    let inner = |h: f64| {
        integrate(|hp| half_mean_flight(h, hp), -1.0, 1.0, &[h, -h], tight())
            .map(|r| r.value)
            .unwrap_or(f64::NAN)
    };
    integrate(inner, -1.0, 1.0, &[0.0], Tolerance::new(1e-14, 1e-12)).map(|r| r.value)
}

/// `∫₀^∞ E(s, h) ds = ∫ ½∫S P dS dh'`, in closed form. Diverges like
/// `½ ln(1/(1−|h|))` at `|h| = 1`.
pub fn equilibrium_s_marginal(h: f64) -> f64 {
    let a = h.abs().min(1.0);
    if a >= 1.0 {
        return f64::INFINITY;
    }
    let inner = ((1.0 + a) / (1.0 - a)).ln() / (1.0 + a);
    let outer = 2.0 * (2.0 / (1.0 + a)).ln() / ((1.0 - a) * (1.0 + a));
    THREE_OVER_PI2 * (inner + outer)
}

/// `∫_{h_a}^{h_b} ∫₀^∞ E(s, h) ds dh`.
pub fn equilibrium_h_band(ha: f64, hb: f64) -> Result<f64, QuadError> {
    integrate(
        equilibrium_s_marginal,
        ha,
        hb,
        &[0.0],
        Tolerance::new(1e-14, 1e-11),
    )
    .map(|r| r.value)
}

/// `∫_{s_a}^{s_b} ∫_{h_a}^{h_b} E ds dh`.
pub fn equilibrium_cell_integral(sa: f64, sb: f64, ha: f64, hb: f64) -> Result<f64, QuadError> {
    let (sig_a, sig_b) = (2.0 * sa, 2.0 * sb);
    let inner = |h: f64| {
        integrate(
            |hp| 0.5 * s_tail_integral(sig_a, sig_b, h, hp),
            -1.0,
            1.0,
            &hp_breaks(h, &[sig_a, sig_b]),
            Tolerance::new(1e-15, 1e-11),
        )
        .map(|r| r.value)
        .unwrap_or(f64::NAN)
    };
    let mut breaks = h_breaks(sa);
    breaks.extend(h_breaks(sb));
    integrate(inner, ha, hb, &breaks, Tolerance::new(1e-15, 1e-10)).map(|r| r.value)
}

/// Tabulated `E(s, h)` with bilinear interpolation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EquilibriumTable {
    pub s_grid: Vec<f64>,
    pub h_grid: Vec<f64>,
    /// Row-major in `s`: `values[i * h_grid.len() + j] = E(s_i, h_j)`.
    pub values: Vec<f64>,
    /// `s² ∫E dh → tail_constant` as `s → ∞`.
    pub tail_constant: f64,
}

/// Grid parameters of [`EquilibriumTable::build`].
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TableGrid {
    pub s_max: f64,
    /// Uniform points on `[0, 2]`.
    pub n_near: usize,
    /// Geometric points on `(2, s_max]`.
    pub n_far: usize,
    pub n_h: usize,
}

impl Default for TableGrid {
    fn default() -> Self {
        Self {
            s_max: 200.0,
            n_near: 201,
            n_far: 200,
            n_h: 257,
        }
    }
}

impl TableGrid {
    pub fn s_points(&self) -> Vec<f64> {
        let mut s: Vec<f64> = (0..self.n_near)
            .map(|i| 2.0 * i as f64 / (self.n_near - 1) as f64)
            .collect();
        if self.s_max > 2.0 {
            let ratio = (self.s_max / 2.0).ln();
            s.extend((1..=self.n_far).map(|i| 2.0 * (ratio * i as f64 / self.n_far as f64).exp()));
        }
        s
    }

    pub fn h_points(&self) -> Vec<f64> {
        (0..self.n_h)
            .map(|j| -1.0 + 2.0 * j as f64 / (self.n_h - 1) as f64)
            .collect()
    }
}

impl EquilibriumTable {
    pub fn build(grid: TableGrid) -> Result<Self, QuadError> {
        let s_grid = grid.s_points();
        let h_grid = grid.h_points();
        let nh = h_grid.len();
        let values: Result<Vec<f64>, QuadError> = (0..s_grid.len() * nh)
            .into_par_iter()
            .map(|idx| equilibrium_e(s_grid[idx / nh], h_grid[idx % nh]))
            .collect();
        Ok(Self {
            s_grid,
            h_grid,
            values: values?,
            tail_constant: 1.0 / crate::consts::PI2,
        })
    }

    fn locate(grid: &[f64], x: f64) -> (usize, f64) {
        let n = grid.len();
        if x <= grid[0] {
            return (0, 0.0);
        }
        if x >= grid[n - 1] {
            return (n - 2, 1.0);
        }
        let i = grid.partition_point(|&g| g <= x) - 1;
        let i = i.min(n - 2);
        (i, (x - grid[i]) / (grid[i + 1] - grid[i]))
    }

    /// Bilinear value; beyond `s_max` the direct quadrature is used.
    pub fn eval(&self, s: f64, h: f64) -> f64 {
        if s > *self.s_grid.last().expect("grid") {
            return equilibrium_e(s, h).unwrap_or(0.0);
        }
        let nh = self.h_grid.len();
        let (i, a) = Self::locate(&self.s_grid, s);
        let (j, b) = Self::locate(&self.h_grid, h);
        let v = |i: usize, j: usize| self.values[i * nh + j];
        (1.0 - a) * ((1.0 - b) * v(i, j) + b * v(i, j + 1))
            + a * ((1.0 - b) * v(i + 1, j) + b * v(i + 1, j + 1))
    }
}

/// Image of `h'` under the three-obstacle map with configuration `cfg`.
/// Ties at case boundaries go to the first listed case.
pub fn limit_transfer(cfg: &ObstacleConfig, hp: f64) -> (f64, f64) {
    let sigma = cfg.sigma_f64();
    let x = sigma * hp;
    let (s, h) = if x >= 1.0 - 2.0 * cfg.a {
        (cfg.q, hp - 2.0 * sigma * (1.0 - cfg.a))
    } else if x <= -1.0 + 2.0 * cfg.b {
        (cfg.qbar, hp + 2.0 * sigma * (1.0 - cfg.b))
    } else {
        (cfg.q + cfg.qbar, hp + 2.0 * sigma * (cfg.a - cfg.b))
    };
    (s, h.clamp(-1.0, 1.0))
}

/// Which branch of [`limit_transfer`] applies, and the distance of `σh'` to
/// the nearest branch boundary.
pub fn limit_transfer_case(cfg: &ObstacleConfig, hp: f64) -> (u8, f64) {
    let x = cfg.sigma_f64() * hp;
    let (e1, e2) = (1.0 - 2.0 * cfg.a, -1.0 + 2.0 * cfg.b);
    let case = if x >= e1 {
        1
    } else if x <= e2 {
        2
    } else {
        3
    };
    (case, (x - e1).abs().min((x - e2).abs()))
}

/// Density of `μ` on `K = [0,1]³ × {±1}`, per unit of `dA dB dQ` and per sign.
pub fn density_mu(a: f64, b: f64, q: f64, sigma: i8) -> f64 {
    if sigma != 1 && sigma != -1 {
        return 0.0;
    }
    0.5 * density_nu(a, b, q)
}

/// Density of `ν` on `[0,1]³`.
pub fn density_nu(a: f64, b: f64, q: f64) -> f64 {
    let inside = a > 0.0 && a < 1.0 && b > 0.0 && b < 1.0 - a && q > 0.0 && q < 1.0 / (2.0 - a - b);
    if inside {
        TWELVE_OVER_PI2 / (1.0 - a)
    } else {
        0.0
    }
}

/// Density of `λ` on `[0,1]³` in `(Q, Q', D)`.
pub fn density_lambda(q: f64, qp: f64, d: f64) -> f64 {
    let unit = |x: f64| x > 0.0 && x < 1.0;
    if !(unit(q) && unit(qp) && d > 0.0 && d < 1.0) {
        return 0.0;
    }
    let cut = (1.0 - q) / qp;
    let first = q + qp > 1.0 && d < cut;
    let second = q < qp && cut < d;
    let n = first as u8 + second as u8;
    TWELVE_OVER_PI2 * n as f64 / q
}

/// `(Q, Q', D) ↦ (A, b, Q)`.
pub fn phi_map(q: f64, qp: f64, d: f64) -> (f64, f64, f64) {
    (1.0 - d, (q - 1.0 + qp * d) / q, q)
}

/// `(A, b, Q) ↦ (A, B, Q)` with `B = b − ⌊b/(1−A)⌋(1−A)`.
pub fn psi_map(a: f64, b: f64, q: f64) -> (f64, f64, f64) {
    let d = 1.0 - a;
    (a, b - (b / d).floor() * d, q)
}

/// Closed form `M(A, B, Q) = 1{Q < 1/(2−A−B)}`.
pub fn count_m(a: f64, b: f64, q: f64) -> u32 {
    (q < 1.0 / (2.0 - a - b)) as u32
}

/// The two open intervals `Λ₁(A,Q)` and `Λ₂(A,Q)`.
pub fn lambda_intervals(a: f64, q: f64) -> [(f64, f64); 2] {
    [
        (a - a / q, (1.0 - a / q).min(0.0)),
        ((2.0 - a - 1.0 / q).max(0.0), 1.0 - a / q),
    ]
}

/// Number of `n ∈ Z` with `B + n(1−A)` in `Λ₁ ∪ Λ₂`, by enumeration, and
/// whether some translate lies within `tol` of an interval endpoint.
pub fn brute_count_m(a: f64, b: f64, q: f64, tol: f64) -> (u32, bool) {
    let d = 1.0 - a;
    let mut count = 0;
    let mut degenerate = false;
    for (lo, hi) in lambda_intervals(a, q) {
        if hi <= lo {
            continue;
        }
        let n0 = ((lo - b) / d).floor() as i64 - 1;
        let n1 = ((hi - b) / d).ceil() as i64 + 1;
        for n in n0..=n1 {
            let x = b + n as f64 * d;
            if (x - lo).abs() < tol || (x - hi).abs() < tol {
                degenerate = true;
            }
            if x > lo && x < hi {
                count += 1;
            }
        }
    }
    (count, degenerate)
}

/// Draws `(A, B, Q, σ) ∼ μ` by rejection in `(A, B', Q)`; also returns the
/// number of proposals used.
pub fn sample_mu_counted<R: Rng + ?Sized>(rng: &mut R) -> (ObstacleConfig, u32) {
    let mut tries = 0;
    loop {
        tries += 1;
        let a: f64 = rng.gen();
        let bp: f64 = rng.gen();
        let q: f64 = rng.gen();
        if q * (1.0 + (1.0 - a) * (1.0 - bp)) < 1.0 && q > 0.0 && a < 1.0 {
            let sigma = if rng.gen::<bool>() { 1 } else { -1 };
            return (ObstacleConfig::from_abq(a, (1.0 - a) * bp, q, sigma), tries);
        }
    }
}

pub fn sample_mu<R: Rng + ?Sized>(rng: &mut R) -> ObstacleConfig {
    sample_mu_counted(rng).0
}

/// Draws `(S, h) ∼ P(·, · | h')` as the image of `μ` under the limit map.
pub fn sample_p<R: Rng + ?Sized>(hp: f64, rng: &mut R) -> (f64, f64) {
    limit_transfer(&sample_mu(rng), hp)
}

/// Draws `(Q, Q', D) ∼ λ`.
pub fn sample_lambda<R: Rng + ?Sized>(rng: &mut R) -> (f64, f64, f64) {
    loop {
        let q: f64 = rng.gen();
        if q <= 0.0 {
            continue;
        }
        let qp = 1.0 - q * rng.gen::<f64>();
        let d: f64 = rng.gen();
        if density_lambda(q, qp, d) > 0.0 {
            return (q, qp, d);
        }
    }
}

/// Power iteration for the operator `Φ ↦ ∫Π(·|h')Φ(h')dh'` on a midpoint
/// grid of `n` cells.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PiSpectrum {
    /// Largest eigenvalue (1 in the continuum).
    pub top: f64,
    /// Second largest eigenvalue modulus.
    pub second: f64,
    /// Max relative spread of an iterate started from a nonconstant vector.
    pub spread: f64,
}

pub fn pi_spectrum(n: usize, iterations: usize) -> PiSpectrum {
    let w = 2.0 / n as f64;
    let h: Vec<f64> = (0..n).map(|i| -1.0 + (i as f64 + 0.5) * w).collect();
    let k: Vec<f64> = (0..n * n)
        .into_par_iter()
        .map(|idx| pi_kernel(h[idx / n], h[idx % n]) * w)
        .collect();
    let apply = |x: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| (0..n).map(|j| k[i * n + j] * x[j]).sum())
            .collect()
    };
    let norm = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().sqrt();
    // Iterate from a positive nonconstant vector.
    let mut x: Vec<f64> = h.iter().map(|&t| 1.0 + 0.9 * (3.0 * t).sin()).collect();
    let mut top = 0.0;
    for _ in 0..iterations {
        let y = apply(&x);
        top = norm(&y) / norm(&x);
        x = y;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let spread = x.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max) / mean;
    // Second eigenvalue: iterate on the orthogonal complement of the top vector.
    let top_vec: Vec<f64> = {
        let s = norm(&x);
        x.iter().map(|v| v / s).collect()
    };
    let project = |y: &mut Vec<f64>| {
        let c: f64 = y.iter().zip(&top_vec).map(|(a, b)| a * b).sum();
        for (a, b) in y.iter_mut().zip(&top_vec) {
            *a -= c * b;
        }
    };
    let mut z: Vec<f64> = h.iter().map(|&t| t + 0.3 * t * t).collect();
    project(&mut z);
    let mut second = 0.0;
    for _ in 0..iterations {
        let mut y = apply(&z);
        project(&mut y);
        second = norm(&y) / norm(&z);
        let s = norm(&y);
        z = y.iter().map(|v| v / s).collect();
    }
    PiSpectrum {
        top,
        second,
        spread,
    }
}
