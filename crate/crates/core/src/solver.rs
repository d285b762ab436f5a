//! Finite-volume solver for the limiting kinetic equation on
//! T² × S¹ × [0, ∞) × [−1, 1].
//!
//! Unknowns are masses `m = ∫∫ F ds dh` of `(s, h)` cells, per unit of `x`
//! area and angle, at cell centers in `x` and nodes `θ_m = 2πm/N_ω`. The last
//! `s` cell is a reservoir `[s_max, ∞)`.
//!
//! One step is donor-cell transport in `x` followed by the `s`/collision
//! update. The `s` flux through the lower face of cell `k` is
//! `(m_k / ε_k) e_k`, where `ε_k` is the equilibrium mass of the cell and
//! `e_k` the equilibrium flux through its lower face. With a kernel that is
//! doubly stochastic in `(h, h')` this makes `E` an exact discrete steady
//! state and conserves mass to rounding. Every substep is a positive,
//! mass-preserving map fixing `E`, so relative entropies cannot increase.

use std::f64::consts::{PI, TAU};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{deflection, Vec2};
use crate::initial::InitialData;
use crate::kernel::{
    equilibrium_cell_integral, equilibrium_h_band, equilibrium_h_integral, s_integral,
};
use crate::quad::{integrate, integrate_to_infinity, QuadError, Tolerance};

/// Floor below which `E` counts as zero in entropy evaluations.
pub const E_FLOOR: f64 = 1e-12;
/// Largest tolerated negative mass before a step is rejected.
pub const NEGATIVE_GUARD: f64 = -1e-12;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("time step {dt} exceeds the stability limit {limit}")]
    CflViolation { dt: f64, limit: f64 },
    #[error("negative density {value:e} at index {index}")]
    NegativeDensity { value: f64, index: usize },
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error(transparent)]
    Quad(#[from] QuadError),
}

/// Grid sizes. `nx2 = 1` is allowed for data that do not depend on `x₂`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grids {
    pub nx1: usize,
    pub nx2: usize,
    pub nomega: usize,
    /// Number of `s` cells including the reservoir.
    pub ns: usize,
    pub nh: usize,
    /// Start of the reservoir cell.
    pub s_max: f64,
}

impl Default for Grids {
    fn default() -> Self {
        Self {
            nx1: 32,
            nx2: 32,
            nomega: 64,
            ns: 128,
            nh: 64,
            s_max: 200.0,
        }
    }
}

impl Grids {
    /// Reduced grid used by the automated checks.
    pub fn reduced() -> Self {
        Self {
            nx1: 16,
            nx2: 1,
            nomega: 32,
            ns: 48,
            nh: 16,
            s_max: 200.0,
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: &str| Err(SolverError::Grid(m.to_string()));
        if self.nx1 == 0 || self.nx2 == 0 {
            return bad("nx1 and nx2 must be positive");
        }
        if self.nomega < 4 {
            return bad("nomega must be at least 4");
        }
        if self.ns < 4 {
            return bad("ns must be at least 4");
        }
        if self.nh < 2 || self.nh % 2 != 0 {
            return bad("nh must be even and at least 2");
        }
        if !(self.s_max > 2.0) {
            return bad("s_max must exceed 2");
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nx1 * self.nx2 * self.block()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Values per `x` cell.
    pub fn block(&self) -> usize {
        self.nomega * self.ns * self.nh
    }

    pub fn idx(&self, i1: usize, i2: usize, m: usize, k: usize, j: usize) -> usize {
        (((i1 * self.nx2 + i2) * self.nomega + m) * self.ns + k) * self.nh + j
    }

    pub fn dx1(&self) -> f64 {
        1.0 / self.nx1 as f64
    }

    pub fn dx2(&self) -> f64 {
        1.0 / self.nx2 as f64
    }

    pub fn dtheta(&self) -> f64 {
        TAU / self.nomega as f64
    }

    pub fn dh(&self) -> f64 {
        2.0 / self.nh as f64
    }

    /// `x`-area times angle of one `(x, ω)` node.
    pub fn phase_volume(&self) -> f64 {
        self.dx1() * self.dx2() * self.dtheta()
    }

    pub fn theta(&self, m: usize) -> f64 {
        m as f64 * self.dtheta()
    }

    pub fn x_center(&self, i1: usize, i2: usize) -> Vec2 {
        Vec2::new(
            (i1 as f64 + 0.5) * self.dx1(),
            (i2 as f64 + 0.5) * self.dx2(),
        )
    }

    pub fn h_edge(&self, j: usize) -> f64 {
        -1.0 + j as f64 * self.dh()
    }

    pub fn h_center(&self, j: usize) -> f64 {
        -1.0 + (j as f64 + 0.5) * self.dh()
    }

    /// Lower faces `σ_0 = 0 < … < σ_{ns−1} = s_max` of the `s` cells: half
    /// of the finite cells uniform on `[0, 2]`, the rest geometric up to
    /// `s_max`.
    pub fn s_faces(&self) -> Vec<f64> {
        let finite = self.ns - 1;
        let near = finite.div_ceil(2);
        let far = finite - near;
        let mut f: Vec<f64> = (0..=near).map(|i| 2.0 * i as f64 / near as f64).collect();
        if far == 0 {
            *f.last_mut().expect("faces") = self.s_max;
        } else {
            let ratio = (self.s_max / 2.0).ln() / far as f64;
            f.extend((1..=far).map(|i| 2.0 * (ratio * i as f64).exp()));
            *f.last_mut().expect("faces") = self.s_max;
        }
        f
    }

    /// Largest stable step of the `x` transport.
    pub fn dt_x_limit(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for m in 0..self.nomega {
            let t = self.theta(m);
            let rate = t.cos().abs() / self.dx1()
                + if self.nx2 > 1 {
                    t.sin().abs() / self.dx2()
                } else {
                    0.0
                };
            worst = worst.max(rate);
        }
        1.0 / worst
    }

    /// The same grid with `x` and `s` spacings halved.
    pub fn refined(&self) -> Self {
        Self {
            nx1: 2 * self.nx1,
            nx2: if self.nx2 > 1 { 2 * self.nx2 } else { 1 },
            ns: 2 * (self.ns - 1) + 1,
            ..*self
        }
    }
}

/// Grid-dependent data shared by all fields.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Discretization {
    pub grids: Grids,
    /// Lower faces of the `s` cells.
    pub faces: Vec<f64>,
    /// Equilibrium mass `ε_{kj}` of each `(s, h)` cell.
    pub eq_mass: Vec<f64>,
    /// Equilibrium flux `e_{kj}` through the lower face of each cell, with
    /// an extra zero row for the top of the reservoir.
    pub eq_flux: Vec<f64>,
    /// `K[k][j][j']`: probability that a collision with impact in cell `j'`
    /// is followed by `(s, h)` in cell `(k, j)`.
    pub kernel: Vec<f64>,
    /// For each `j'`: offsets `d` and weights of the pre-collision node
    /// `m − d` feeding node `m`.
    pub shifts: Vec<Vec<(usize, f64)>>,
    /// Max deviation of the kernel's `(h, h')` marginals from 1 after
    /// normalization.
    pub sinkhorn_residual: f64,
    /// Largest stable step of the `s`/collision update.
    pub dt_s_limit: f64,
    /// Continuum mass of `E` lying in the reservoir.
    pub reservoir_mass: f64,
    /// Mass added to cells by the stability floor.
    pub floor_added: f64,
}

fn sinkhorn(m: &mut [f64], n: usize, iters: usize) -> f64 {
    let mut resid = f64::INFINITY;
    for _ in 0..iters {
        for j in 0..n {
            let s: f64 = (0..n).map(|jp| m[j * n + jp]).sum();
            if s > 0.0 {
                for jp in 0..n {
                    m[j * n + jp] /= s;
                }
            }
        }
        for jp in 0..n {
            let s: f64 = (0..n).map(|j| m[j * n + jp]).sum();
            if s > 0.0 {
                for j in 0..n {
                    m[j * n + jp] /= s;
                }
            }
        }
        resid = (0..n)
            .map(|j| ((0..n).map(|jp| m[j * n + jp]).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max);
        if resid < 1e-15 {
            break;
        }
    }
    resid
}

/// `(1/Δh') ∫_{h' ∈ j'} ∫_{h ∈ j} ∫_{σ}^∞ 2P(2s, h | h') ds dh dh'`.
fn tail_block(sigma: f64, ha: f64, hb: f64, hpa: f64, hpb: f64) -> Result<f64, QuadError> {
    let big = 2.0 * sigma;
    let c = if big > 0.0 { 2.0 / big - 1.0 } else { 2.0 };
    let inner = |hp: f64| {
        let mut br = vec![hp, -hp];
        if c.abs() < 1.0 {
            br.push(c);
            br.push(-c);
        }
        integrate(
            |h| s_integral(big, f64::INFINITY, h, hp),
            ha,
            hb,
            &br,
            Tolerance::new(1e-14, 1e-11),
        )
        .map(|r| r.value)
        .unwrap_or(f64::NAN)
    };
    let mut br = vec![ha, -ha, hb, -hb];
    if c.abs() < 1.0 {
        br.push(c);
        br.push(-c);
    }
    let r = integrate(inner, hpa, hpb, &br, Tolerance::new(1e-13, 1e-10))?;
    if r.value.is_nan() {
        return Err(QuadError {
            value: r.value,
            error: f64::NAN,
            evals: r.evals,
        });
    }
    Ok(r.value / (hpb - hpa))
}

impl Discretization {
    pub fn new(grids: Grids) -> Result<Self, SolverError> {
        grids.validate()?;
        let (ns, nh, nw) = (grids.ns, grids.nh, grids.nomega);
        let faces = grids.s_faces();
        let dh = grids.dh();

        // Tail blocks G(σ_k) for every face; G at the top of the reservoir is 0.
        let tails: Vec<Result<f64, QuadError>> = (0..ns * nh * nh)
            .into_par_iter()
            .map(|idx| {
                let k = idx / (nh * nh);
                let (j, jp) = ((idx / nh) % nh, idx % nh);
                // P(S,h|h') = P(S,−h|−h'): fill only half and mirror below.
                if j * nh + jp > (nh - 1 - j) * nh + (nh - 1 - jp) {
                    return Ok(f64::NAN);
                }
                tail_block(
                    faces[k],
                    grids.h_edge(j),
                    grids.h_edge(j + 1),
                    grids.h_edge(jp),
                    grids.h_edge(jp + 1),
                )
            })
            .collect();
        let mut g = Vec::with_capacity(tails.len());
        for t in tails {
            g.push(t?);
        }
        for k in 0..ns {
            for j in 0..nh {
                for jp in 0..nh {
                    let i = (k * nh + j) * nh + jp;
                    if g[i].is_nan() {
                        g[i] = g[(k * nh + (nh - 1 - j)) * nh + (nh - 1 - jp)];
                    }
                }
            }
        }
        let mut kernel = vec![0.0; ns * nh * nh];
        for k in 0..ns {
            for b in 0..nh * nh {
                let upper = if k + 1 < ns {
                    g[(k + 1) * nh * nh + b]
                } else {
                    0.0
                };
                kernel[k * nh * nh + b] = (g[k * nh * nh + b] - upper).max(0.0);
            }
        }
        // Make Σ_k K doubly stochastic in (j, j').
        let mut total = vec![0.0; nh * nh];
        for k in 0..ns {
            for b in 0..nh * nh {
                total[b] += kernel[k * nh * nh + b];
            }
        }
        let mut scaled = total.clone();
        let sinkhorn_residual = sinkhorn(&mut scaled, nh, 10_000);
        for b in 0..nh * nh {
            let f = if total[b] > 0.0 {
                scaled[b] / total[b]
            } else {
                0.0
            };
            for k in 0..ns {
                kernel[k * nh * nh + b] *= f;
            }
        }

        // Equilibrium fluxes e_{kj} = Σ_{k' ≥ k} Σ_{j'} K Δh'.
        let mut eq_flux = vec![0.0; (ns + 1) * nh];
        for k in (0..ns).rev() {
            for j in 0..nh {
                let r: f64 = (0..nh).map(|jp| kernel[(k * nh + j) * nh + jp] * dh).sum();
                eq_flux[k * nh + j] = eq_flux[(k + 1) * nh + j] + r;
            }
        }

        // Equilibrium masses: continuum cell integrals, reservoir by difference.
        let cells: Vec<Result<f64, QuadError>> = (0..(ns - 1) * nh)
            .into_par_iter()
            .map(|idx| {
                let (k, j) = (idx / nh, idx % nh);
                equilibrium_cell_integral(
                    faces[k],
                    faces[k + 1],
                    grids.h_edge(j),
                    grids.h_edge(j + 1),
                )
            })
            .collect();
        let mut eq_mass = vec![0.0; ns * nh];
        for (i, c) in cells.into_iter().enumerate() {
            eq_mass[i] = c?.max(0.0);
        }
        let mut reservoir_mass = 0.0;
        for j in 0..nh {
            let band = equilibrium_h_band(grids.h_edge(j), grids.h_edge(j + 1))?;
            let inside: f64 = (0..ns - 1).map(|k| eq_mass[k * nh + j]).sum();
            let r = (band - inside).max(0.0);
            eq_mass[(ns - 1) * nh + j] = r;
            reservoir_mass += r;
        }
        // Cells cut by the edge of the support of E can hold far less mass
        // than their face flux suggests, which would force tiny steps. Floor
        // the mass at half a cell width of outflow.
        let mut floor_added = 0.0;
        for k in 0..ns - 1 {
            for j in 0..nh {
                let i = k * nh + j;
                let floor = 0.5 * (faces[k + 1] - faces[k]) * eq_flux[i];
                if eq_mass[i] < floor {
                    floor_added += floor - eq_mass[i];
                    eq_mass[i] = floor;
                }
            }
        }
        for j in 0..nh {
            let i = (ns - 1) * nh + j;
            if eq_flux[i] > 0.0 && eq_mass[i] <= 0.0 {
                eq_mass[i] = faces[ns - 1] * eq_flux[i];
                floor_added += eq_mass[i];
            }
        }
        // Any positive rescaling of ε keeps E stationary; restore the
        // continuum total so that F₀ = f_in E carries the mass of f_in.
        let continuum: f64 = (0..nh)
            .map(|j| equilibrium_h_band(grids.h_edge(j), grids.h_edge(j + 1)))
            .sum::<Result<f64, QuadError>>()?;
        let scale = continuum / eq_mass.iter().sum::<f64>();
        for v in &mut eq_mass {
            *v *= scale;
        }
        let dt_s_limit = eq_mass
            .iter()
            .zip(&eq_flux)
            .filter(|(_, &e)| e > 0.0)
            .map(|(&m, &e)| m / e)
            .fold(f64::INFINITY, f64::min);

        // Angular shifts, averaged over each h' cell.
        let dth = grids.dtheta();
        let samples = 256;
        let shifts = (0..nh)
            .map(|jp| {
                let mut w = vec![0.0; nw];
                for q in 0..samples {
                    let hp = grids.h_edge(jp) + (q as f64 + 0.5) / samples as f64 * dh;
                    let delta = deflection(hp) / dth;
                    let n = delta.floor();
                    let phi = delta - n;
                    let d0 = (n as i64).rem_euclid(nw as i64) as usize;
                    w[d0] += (1.0 - phi) / samples as f64;
                    w[(d0 + 1) % nw] += phi / samples as f64;
                }
                w.into_iter()
                    .enumerate()
                    .filter(|(_, x)| *x > 0.0)
                    .collect::<Vec<_>>()
            })
            .collect();

        Ok(Self {
            grids,
            faces,
            eq_mass,
            eq_flux,
            kernel,
            shifts,
            sinkhorn_residual,
            dt_s_limit,
            reservoir_mass,
            floor_added,
        })
    }

    pub fn dt_limit(&self) -> f64 {
        self.grids.dt_x_limit().min(self.dt_s_limit)
    }

    /// Width of `s` cell `k`; the reservoir gets `s_max`.
    pub fn s_width(&self, k: usize) -> f64 {
        if k + 1 < self.grids.ns {
            self.faces[k + 1] - self.faces[k]
        } else {
            self.grids.s_max
        }
    }

    pub fn s_center(&self, k: usize) -> f64 {
        if k + 1 < self.grids.ns {
            0.5 * (self.faces[k] + self.faces[k + 1])
        } else {
            self.grids.s_max
        }
    }

    /// `Σ ε` over all `(s, h)` cells.
    pub fn eq_total(&self) -> f64 {
        self.eq_mass.iter().sum()
    }
}

/// Cell masses on the grid of a [`Discretization`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Field {
    pub t: f64,
    pub values: Vec<f64>,
}

/// `F₀ = f_in(x, ω) E(s, h)`.
pub fn init_field(f_in: &InitialData, disc: &Discretization) -> Field {
    let g = &disc.grids;
    let sh = g.ns * g.nh;
    let mut values = vec![0.0; g.len()];
    values
        .par_chunks_mut(sh)
        .enumerate()
        .for_each(|(node, chunk)| {
            let m = node % g.nomega;
            let cell = node / g.nomega;
            let (i1, i2) = (cell / g.nx2, cell % g.nx2);
            let f = f_in.value(g.x_center(i1, i2), g.theta(m));
            for (v, e) in chunk.iter_mut().zip(&disc.eq_mass) {
                *v = f * e;
            }
        });
    Field { t: 0.0, values }
}

/// Field with masses `c · ε` everywhere.
pub fn equilibrium_field(disc: &Discretization, c: f64) -> Field {
    init_field(&InitialData::Uniform { level: c }, disc)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeOrder {
    Euler,
    Ssp2,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct StepOptions {
    /// Disable the gain term; the scheme then evolves the free flow.
    pub gain: bool,
    pub order: TimeOrder,
}

impl Default for StepOptions {
    fn default() -> Self {
        Self {
            gain: true,
            order: TimeOrder::Euler,
        }
    }
}

/// Donor-cell transport in `x` by `dt`.
fn transport_x(disc: &Discretization, src: &[f64], dst: &mut [f64], dt: f64) {
    let g = &disc.grids;
    let sh = g.ns * g.nh;
    let (l1, l2) = (dt / g.dx1(), dt / g.dx2());
    dst.par_chunks_mut(sh).enumerate().for_each(|(node, out)| {
        let m = node % g.nomega;
        let cell = node / g.nomega;
        let (i1, i2) = (cell / g.nx2, cell % g.nx2);
        let t = g.theta(m);
        let (c, s) = (t.cos(), t.sin());
        let a1 = l1 * c.abs();
        let a2 = if g.nx2 > 1 { l2 * s.abs() } else { 0.0 };
        let up1 = if c >= 0.0 {
            (i1 + g.nx1 - 1) % g.nx1
        } else {
            (i1 + 1) % g.nx1
        };
        let up2 = if s >= 0.0 {
            (i2 + g.nx2 - 1) % g.nx2
        } else {
            (i2 + 1) % g.nx2
        };
        let here = g.idx(i1, i2, m, 0, 0);
        let from1 = g.idx(up1, i2, m, 0, 0);
        let from2 = g.idx(i1, up2, m, 0, 0);
        for q in 0..sh {
            out[q] = (1.0 - a1 - a2) * src[here + q] + a1 * src[from1 + q] + a2 * src[from2 + q];
        }
    });
}

/// Ratios `f = m / ε` of one angular node, zero where `ε = 0`.
fn ratios(disc: &Discretization, block: &[f64], m: usize) -> Vec<f64> {
    let sh = disc.grids.ns * disc.grids.nh;
    block[m * sh..(m + 1) * sh]
        .iter()
        .zip(&disc.eq_mass)
        .map(|(&v, &e)| if e > 0.0 { v / e } else { 0.0 })
        .collect()
}

/// Rate of the `s`/collision operator on one `x` block.
fn sc_rate_block(disc: &Discretization, block: &[f64], rate: &mut [f64], gain: bool) {
    let g = &disc.grids;
    let (nw, ns, nh) = (g.nomega, g.ns, g.nh);
    let sh = ns * nh;
    // Collision flux per (m, j').
    let mut trace = vec![0.0; nw * nh];
    for m in 0..nw {
        let f = ratios(disc, block, m);
        let r = &mut rate[m * sh..(m + 1) * sh];
        for k in 0..ns {
            for j in 0..nh {
                let i = k * nh + j;
                let out = f[i] * disc.eq_flux[i];
                let inn = if k + 1 < ns {
                    f[i + nh] * disc.eq_flux[i + nh]
                } else {
                    0.0
                };
                r[i] = inn - out;
            }
        }
        for j in 0..nh {
            trace[m * nh + j] = f[j] * disc.eq_flux[j];
        }
    }
    if !gain {
        return;
    }
    // Trace at the pre-collision node, then the kernel.
    let mut rotated = vec![0.0; nw * nh];
    for m in 0..nw {
        for jp in 0..nh {
            let mut acc = 0.0;
            for &(d, w) in &disc.shifts[jp] {
                acc += w * trace[((m + nw - d) % nw) * nh + jp];
            }
            rotated[m * nh + jp] = acc;
        }
    }
    for m in 0..nw {
        let t = &rotated[m * nh..(m + 1) * nh];
        let r = &mut rate[m * sh..(m + 1) * sh];
        for (i, ri) in r.iter_mut().enumerate() {
            let kr = &disc.kernel[i * nh..(i + 1) * nh];
            let gsum: f64 = kr.iter().zip(t).map(|(a, b)| a * b).sum();
            *ri += gsum;
        }
    }
}

fn sc_update(disc: &Discretization, src: &[f64], dst: &mut [f64], dt: f64, gain: bool) {
    let b = disc.grids.block();
    dst.par_chunks_mut(b)
        .zip(src.par_chunks(b))
        .for_each(|(out, inp)| {
            sc_rate_block(disc, inp, out, gain);
            for (o, &i) in out.iter_mut().zip(inp) {
                *o = i + dt * *o;
            }
        });
}

fn euler(disc: &Discretization, src: &[f64], dt: f64, gain: bool) -> Vec<f64> {
    let mut mid = vec![0.0; src.len()];
    transport_x(disc, src, &mut mid, dt);
    let mut out = vec![0.0; src.len()];
    sc_update(disc, &mid, &mut out, dt, gain);
    out
}

fn check_negative(values: &[f64]) -> Result<(), SolverError> {
    if let Some((index, &value)) = values
        .iter()
        .enumerate()
        .find(|(_, &v)| v < NEGATIVE_GUARD || v.is_nan())
    {
        return Err(SolverError::NegativeDensity { value, index });
    }
    Ok(())
}

/// Advances `field` by `dt`.
pub fn step(
    disc: &Discretization,
    field: &Field,
    dt: f64,
    opts: StepOptions,
) -> Result<Field, SolverError> {
    let limit = disc.dt_limit();
    if !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
        return Err(SolverError::CflViolation { dt, limit });
    }
    let values = match opts.order {
        TimeOrder::Euler => euler(disc, &field.values, dt, opts.gain),
        TimeOrder::Ssp2 => {
            let one = euler(disc, &field.values, dt, opts.gain);
            let two = euler(disc, &one, dt, opts.gain);
            field
                .values
                .iter()
                .zip(&two)
                .map(|(a, b)| 0.5 * (a + b))
                .collect()
        }
    };
    check_negative(&values)?;
    Ok(Field {
        t: field.t + dt,
        values,
    })
}

/// Right-hand side of the semi-discrete equation.
pub fn generator(disc: &Discretization, field: &Field, gain: bool) -> Vec<f64> {
    let g = &disc.grids;
    // The donor-cell update is affine in dt, so a unit step gives the rate.
    let mut tr = vec![0.0; field.values.len()];
    transport_x_rate(disc, &field.values, &mut tr);
    let mut sc = vec![0.0; field.values.len()];
    let b = g.block();
    sc.par_chunks_mut(b)
        .zip(field.values.par_chunks(b))
        .for_each(|(out, inp)| sc_rate_block(disc, inp, out, gain));
    tr.iter().zip(&sc).map(|(a, b)| a + b).collect()
}

fn transport_x_rate(disc: &Discretization, src: &[f64], dst: &mut [f64]) {
    transport_x(disc, src, dst, 1.0);
    dst.par_iter_mut()
        .zip(src.par_iter())
        .for_each(|(d, &s)| *d -= s);
}

/// `Σ m · vol`.
pub fn mass(disc: &Discretization, field: &Field) -> f64 {
    let b = disc.grids.block();
    let parts: Vec<f64> = field.values.par_chunks(b).map(|c| c.iter().sum()).collect();
    parts.iter().sum::<f64>() * disc.grids.phase_volume()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntropyKind {
    /// `h(z) = z ln z`.
    Zlogz,
    /// `h(z) = z²/2`.
    Square,
}

impl EntropyKind {
    pub fn h(&self, z: f64) -> f64 {
        match self {
            EntropyKind::Zlogz => {
                if z > 0.0 {
                    z * z.ln()
                } else {
                    0.0
                }
            }
            EntropyKind::Square => 0.5 * z * z,
        }
    }

    /// `h(a) − h(b) − h'(b)(a − b)`.
    pub fn bregman(&self, a: f64, b: f64) -> f64 {
        match self {
            EntropyKind::Zlogz => {
                if b <= 0.0 {
                    if a <= 0.0 {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                } else if a <= 0.0 {
                    b
                } else {
                    a * (a / b).ln() - a + b
                }
            }
            EntropyKind::Square => 0.5 * (a - b) * (a - b),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EntropyKind::Zlogz => "zlogz",
            EntropyKind::Square => "square",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub t: f64,
    /// Relative entropy `H_h(F | E)`.
    pub h: f64,
    /// Dissipation rate of the collision term.
    pub d: f64,
    pub kind: EntropyKind,
    /// Mass in cells where `E < E_FLOOR`, left out of `H`.
    pub excluded_mass: f64,
}

fn cell_density_floor(disc: &Discretization, k: usize) -> f64 {
    E_FLOOR * disc.s_width(k) * disc.grids.dh()
}

/// Relative entropy and collision dissipation with the same kernel and
/// angular shifts as [`step`].
pub fn entropy_report(disc: &Discretization, field: &Field, kind: EntropyKind) -> EntropyReport {
    let g = &disc.grids;
    let (nw, ns, nh) = (g.nomega, g.ns, g.nh);
    let sh = ns * nh;
    let dh = g.dh();
    let parts: Vec<(f64, f64, f64)> = field
        .values
        .par_chunks(g.block())
        .map(|block| {
            let mut h_sum = 0.0;
            let mut excl = 0.0;
            let mut fs = vec![0.0; nw * sh];
            for m in 0..nw {
                for k in 0..ns {
                    let floor = cell_density_floor(disc, k);
                    for j in 0..nh {
                        let i = k * nh + j;
                        let e = disc.eq_mass[i];
                        let v = block[m * sh + i];
                        if e < floor {
                            excl += v;
                            continue;
                        }
                        let f = v / e;
                        fs[m * sh + i] = f;
                        h_sum += kind.bregman(f, 1.0) * e;
                    }
                }
            }
            let mut d_sum = 0.0;
            for m in 0..nw {
                for jp in 0..nh {
                    for &(d, w) in &disc.shifts[jp] {
                        let f0 = fs[((m + nw - d) % nw) * sh + jp];
                        for k in 0..ns {
                            for j in 0..nh {
                                let i = k * nh + j;
                                let kv = disc.kernel[i * nh + jp];
                                if kv == 0.0 {
                                    continue;
                                }
                                d_sum += w * kv * dh * kind.bregman(f0, fs[m * sh + i]);
                            }
                        }
                    }
                }
            }
            (h_sum, d_sum, excl)
        })
        .collect();
    let vol = g.phase_volume();
    let (mut h, mut d, mut x) = (0.0, 0.0, 0.0);
    for (a, b, c) in parts {
        h += a;
        d += b;
        x += c;
    }
    EntropyReport {
        t: field.t,
        h: h * vol,
        d: d * vol,
        kind,
        excluded_mass: x * vol,
    }
}

/// Distances of `F` to `C E`, where `C` matches the mass of `F`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumDistance {
    pub c: f64,
    /// `(Σ (F − CE)² vol)^{1/2}` over finite cells, `F` as a density.
    pub distance: f64,
    /// The same for the spatial density `∫∫∫ F dω ds dh`.
    pub coarse: f64,
}

pub fn equilibrium_distance(disc: &Discretization, field: &Field) -> EquilibriumDistance {
    let g = &disc.grids;
    let (nw, ns, nh) = (g.nomega, g.ns, g.nh);
    let sh = ns * nh;
    let total_mass = mass(disc, field);
    let eq_mass_total = disc.eq_total() * TAU;
    let c = total_mass / eq_mass_total;
    let parts: Vec<(f64, f64)> = field
        .values
        .par_chunks(g.block())
        .map(|block| {
            let mut fine = 0.0;
            for m in 0..nw {
                for k in 0..ns - 1 {
                    let area = disc.s_width(k) * g.dh();
                    for j in 0..nh {
                        let i = k * nh + j;
                        let diff = (block[m * sh + i] - c * disc.eq_mass[i]) / area;
                        fine += diff * diff * area;
                    }
                }
            }
            let rho: f64 = block.iter().sum::<f64>() * g.dtheta();
            let rho_eq = c * eq_mass_total;
            (
                fine * g.phase_volume(),
                (rho - rho_eq).powi(2) * g.dx1() * g.dx2(),
            )
        })
        .collect();
    let (mut fine, mut coarse) = (0.0, 0.0);
    for (a, b) in parts {
        fine += a;
        coarse += b;
    }
    EquilibriumDistance {
        c,
        distance: fine.sqrt(),
        coarse: coarse.sqrt(),
    }
}

/// Free-flow lower bounds at time `t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowerBound {
    pub t: f64,
    /// `‖f_in‖₂ (∫_t^∞ ∫ E² dh ds)^{1/2}`.
    pub strong: f64,
    /// `(1/√2) (∫_t^∞ (∫ E dh)² ds)^{1/2}`.
    pub loose: f64,
    /// `t^{3/2} (∫_t^∞ (∫ E dh)² ds)^{1/2}`, which tends to `1/(√3 π²)`.
    pub scaled: f64,
}

/// Limit of [`LowerBound::scaled`] as `t → ∞`.
pub fn lower_bound_limit() -> f64 {
    1.0 / (3f64.sqrt() * PI * PI)
}

fn squared_h_integral(s: f64) -> f64 {
    equilibrium_h_integral(s).map(|v| v * v).unwrap_or(f64::NAN)
}

fn e_squared_h_integral(s: f64) -> f64 {
    let mut br = vec![0.0];
    if s > 1.0 {
        br.push(1.0 - 1.0 / s);
        br.push(-(1.0 - 1.0 / s));
    }
    integrate(
        |h| {
            crate::kernel::equilibrium_e(s, h)
                .map(|v| v * v)
                .unwrap_or(f64::NAN)
        },
        -1.0,
        1.0,
        &br,
        Tolerance::new(1e-13, 1e-9),
    )
    .map(|r| r.value)
    .unwrap_or(f64::NAN)
}

/// `‖f_in‖₂` over T² × S¹ by midpoint sums.
pub fn l2_norm(f_in: &InitialData, n: usize) -> f64 {
    let (hx, ht) = (1.0 / n as f64, TAU / n as f64);
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let x = Vec2::new((i as f64 + 0.5) * hx, (j as f64 + 0.5) * hx);
                let v = f_in.value(x, (k as f64 + 0.5) * ht);
                s += v * v;
            }
        }
    }
    (s * hx * hx * ht).sqrt()
}

pub fn free_flow_lower_bound(f_in: &InitialData, t: f64) -> Result<LowerBound, SolverError> {
    let tol = Tolerance::new(1e-16, 1e-8);
    let loose_sq = integrate_to_infinity(squared_h_integral, t, &[], tol)?.value;
    let strong_sq = integrate_to_infinity(e_squared_h_integral, t, &[t.max(1.0)], tol)?.value;
    Ok(LowerBound {
        t,
        strong: l2_norm(f_in, 32) * strong_sq.sqrt(),
        loose: (0.5 * loose_sq).sqrt(),
        scaled: t.powf(1.5) * loose_sq.sqrt(),
    })
}

/// `‖E‖²_{L²}` over `[0, ∞) × [−1, 1]`.
pub fn equilibrium_l2_squared() -> Result<f64, SolverError> {
    let tol = Tolerance::new(1e-14, 1e-8);
    let near = integrate(e_squared_h_integral, 0.0, 2.0, &[0.5, 1.0], tol)?.value;
    let far = integrate_to_infinity(e_squared_h_integral, 2.0, &[], tol)?.value;
    Ok(near + far)
}

/// L¹ norm of the discrete equation residual of `F = f E`.
pub fn local_equilibrium_residual(f: &InitialData, disc: &Discretization) -> f64 {
    let field = init_field(f, disc);
    let r = generator(disc, &field, true);
    r.iter().map(|v| v.abs()).sum::<f64>() * disc.grids.phase_volume()
}

/// One-step entropy balance `(H(t+dt) − H(t))/dt + D(t)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyBalance {
    pub t: f64,
    pub dt: f64,
    pub h_before: f64,
    pub h_after: f64,
    pub dissipation: f64,
    /// Nonpositive up to rounding: the numerical dissipation of the scheme.
    pub residual: f64,
}

pub fn entropy_balance(
    disc: &Discretization,
    field: &Field,
    dt: f64,
    kind: EntropyKind,
    opts: StepOptions,
) -> Result<EntropyBalance, SolverError> {
    let before = entropy_report(disc, field, kind);
    let next = step(disc, field, dt, opts)?;
    let after = entropy_report(disc, &next, kind);
    Ok(EntropyBalance {
        t: field.t,
        dt,
        h_before: before.h,
        h_after: after.h,
        dissipation: before.d,
        residual: (after.h - before.h) / dt + before.d,
    })
}

/// One line of the diagnostics time series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub t: f64,
    pub mass: f64,
    pub h_zlogz: Option<f64>,
    pub d_zlogz: Option<f64>,
    pub h_square: Option<f64>,
    pub d_square: Option<f64>,
    pub distance: f64,
    pub coarse_distance: f64,
    pub c: f64,
}

pub fn diagnostics(disc: &Discretization, field: &Field, entropies: &[EntropyKind]) -> Diagnostics {
    let dist = equilibrium_distance(disc, field);
    let mut d = Diagnostics {
        t: field.t,
        mass: mass(disc, field),
        h_zlogz: None,
        d_zlogz: None,
        h_square: None,
        d_square: None,
        distance: dist.distance,
        coarse_distance: dist.coarse,
        c: dist.c,
    };
    for kind in entropies {
        let r = entropy_report(disc, field, *kind);
        match kind {
            EntropyKind::Zlogz => {
                d.h_zlogz = Some(r.h);
                d.d_zlogz = Some(r.d);
            }
            EntropyKind::Square => {
                d.h_square = Some(r.h);
                d.d_square = Some(r.d);
            }
        }
    }
    d
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveOutput {
    pub reports: Vec<Diagnostics>,
    pub snapshots: Vec<Field>,
    pub last: Field,
    pub dt: f64,
}

/// Runs to `t_end` with steps of at most `dt`, reporting every
/// `report_every` time units. Snapshots are kept at report times when
/// `keep_snapshots` is set.
pub fn solve(
    disc: &Discretization,
    field0: Field,
    t_end: f64,
    dt: f64,
    report_every: f64,
    entropies: &[EntropyKind],
    opts: StepOptions,
    keep_snapshots: bool,
) -> Result<SolveOutput, SolverError> {
    let n_reports = ((t_end - field0.t) / report_every).round().max(1.0) as usize;
    let interval = (t_end - field0.t) / n_reports as f64;
    let steps_per = (interval / dt).ceil().max(1.0) as usize;
    let h = interval / steps_per as f64;
    let mut field = field0;
    let mut reports = vec![diagnostics(disc, &field, entropies)];
    let mut snapshots = Vec::new();
    if keep_snapshots {
        snapshots.push(field.clone());
    }
    let t0 = field.t;
    for r in 1..=n_reports {
        for _ in 0..steps_per {
            field = step(disc, &field, h, opts)?;
        }
        // Remove drift of the clock from repeated addition.
        field.t = t0 + r as f64 * interval;
        reports.push(diagnostics(disc, &field, entropies));
        if keep_snapshots {
            snapshots.push(field.clone());
        }
    }
    Ok(SolveOutput {
        reports,
        snapshots,
        last: field,
        dt: h,
    })
}

/// Marginal in `(x₁, x₂, θ)` on a coarse grid, normalized to total one.
/// Fine sizes must be multiples of the coarse ones.
pub fn xw_marginal(
    disc: &Discretization,
    field: &Field,
    n1: usize,
    n2: usize,
    nt: usize,
) -> Vec<f64> {
    let g = &disc.grids;
    let mut out = vec![0.0; n1 * n2 * nt];
    let mut total = 0.0;
    for i1 in 0..g.nx1 {
        for i2 in 0..g.nx2 {
            for m in 0..g.nomega {
                let base = g.idx(i1, i2, m, 0, 0);
                let v: f64 = field.values[base..base + g.ns * g.nh].iter().sum();
                let c1 = i1 * n1 / g.nx1;
                let c2 = i2 * n2 / g.nx2;
                // Angular nodes sit on cell edges of the coarse θ bins; split
                // boundary nodes evenly.
                let pos = m as f64 / g.nomega as f64 * nt as f64;
                let lo = pos.floor();
                let frac = pos - lo;
                let b0 = lo as usize % nt;
                if frac == 0.0 {
                    out[(c1 * n2 + c2) * nt + b0] += 0.5 * v;
                    out[(c1 * n2 + c2) * nt + (b0 + nt - 1) % nt] += 0.5 * v;
                } else {
                    out[(c1 * n2 + c2) * nt + b0] += v;
                }
                total += v;
            }
        }
    }
    for o in &mut out {
        *o /= total;
    }
    out
}
