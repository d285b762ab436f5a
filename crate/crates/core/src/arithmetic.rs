//! Continued fractions, Farey neighbors and three-obstacle parameters.
//!
//! A slope `α` given as an `f64` is an exact dyadic rational `M / 2^K`. The
//! expansion runs the integer Euclid algorithm on `(2^K, M)`, so the digits,
//! convergents and errors `d_n = |q_n α − p_n|` are those of that rational,
//! with `d_n` rounded once. Expansion stops before `d_n` falls below
//! [`MIN_DN`], where the dyadic rational stops representing a generic slope.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{two_prod, Direction};

/// Smallest usable `d_n`.
pub const MIN_DN: f64 = 1e-14;
/// Distance to an integer below which the floor in the B formula is flagged.
pub const FLOOR_TOL: f64 = 1e-13;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArithmeticError {
    #[error("slope {0} must lie in (0, 1) with at most 120 binary digits")]
    InvalidAlpha(f64),
    #[error("d_{index} = {value:e} fell below {MIN_DN:e} before the stop condition")]
    PrecisionExhausted { index: usize, value: f64 },
    #[error("expansion has no d_n <= {0}; extend it")]
    ExpansionTooShort(f64),
    #[error("convergent overflowed 64 bits")]
    Overflow,
    #[error("direction ({0}, {1}) is not in the open first octant 0 < w2 < w1")]
    Octant(f64, f64),
    #[error("scaled radius eps = 2r/w1 = {0} must lie in (0, 1)")]
    Epsilon(f64),
}

/// When to stop expanding.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Stop {
    /// Exactly this many digits.
    Digits(usize),
    /// Until `d_n <= eps`, plus one more digit when available.
    Threshold(f64),
}

/// Continued fraction data of `α = [0; a_1, a_2, …]`.
///
/// `digits[k]` holds `a_{k+1}`; `p`, `q` and `d` are indexed from 0 and have
/// `digits.len() + 2` entries, with `p_0 = 1, q_0 = 0, p_1 = 0, q_1 = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CfExpansion {
    pub alpha: f64,
    pub digits: Vec<u64>,
    pub p: Vec<u64>,
    pub q: Vec<u64>,
    pub d: Vec<f64>,
}

fn dyadic(alpha: f64) -> Result<(u128, u32), ArithmeticError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(ArithmeticError::InvalidAlpha(alpha));
    }
    let bits = alpha.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i32;
    let frac = bits & ((1u64 << 52) - 1);
    let (mut m, mut k) = if exp == 0 {
        (frac as u128, 1074u32)
    } else {
        ((frac | (1u64 << 52)) as u128, (1075 - exp) as u32)
    };
    let tz = m.trailing_zeros().min(k);
    m >>= tz;
    k -= tz;
    if k > 120 {
        return Err(ArithmeticError::InvalidAlpha(alpha));
    }
    Ok((m, k))
}

/// Expands `alpha` until `stop` is met.
pub fn cf_expand(alpha: f64, stop: Stop) -> Result<CfExpansion, ArithmeticError> {
    let (m, k) = dyadic(alpha)?;
    expand_ratio(m, 1u128 << k, alpha, stop)
}

/// Splits a positive finite `f64` into `(mantissa, exponent)` with
/// `x = mantissa · 2^exponent`.
fn split(x: f64) -> (u128, i32) {
    let bits = x.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i32;
    let frac = bits & ((1u64 << 52) - 1);
    if exp == 0 {
        (frac as u128, -1074)
    } else {
        ((frac | (1u64 << 52)) as u128, exp - 1075)
    }
}

/// Expansion of the exact ratio `ω₂/ω₁` of the stored components of a
/// first-octant direction, so errors `d_n` are those of the direction itself
/// and not of a rounded slope.
pub fn cf_expand_direction(omega: &Direction, stop: Stop) -> Result<CfExpansion, ArithmeticError> {
    let (c, s) = (omega.cos(), omega.sin());
    if !(s > 0.0 && s < c) {
        return Err(ArithmeticError::Octant(c, s));
    }
    let (mc, ec) = split(c);
    let (ms, es) = split(s);
    let shift = ec - es;
    if !(0..=70).contains(&shift) {
        return Err(ArithmeticError::InvalidAlpha(s / c));
    }
    expand_ratio(ms, mc << shift, s / c, stop)
}

/// Euclid on `(y, x)` for the slope `x / y`.
fn expand_ratio(x: u128, y: u128, alpha: f64, stop: Stop) -> Result<CfExpansion, ArithmeticError> {
    let scale = y as f64;
    let mut out = CfExpansion {
        alpha,
        digits: Vec::new(),
        p: vec![1, 0],
        q: vec![0, 1],
        d: vec![1.0, x as f64 / scale],
    };
    // r_{n−2}, r_{n−1}
    let (mut r0, mut r1) = (y, x);
    let done = |e: &CfExpansion| match stop {
        Stop::Digits(n) => e.digits.len() >= n,
        Stop::Threshold(eps) => e.d.iter().rev().skip(1).any(|&d| d <= eps),
    };
    if let Stop::Threshold(eps) = stop {
        if eps >= 1.0 {
            return Ok(out);
        }
    }
    while !done(&out) {
        let n = out.digits.len();
        if r1 == 0 || out.d[n + 1] < MIN_DN {
            // Threshold already met; the extra digit is optional.
            if matches!(stop, Stop::Threshold(eps) if out.d[n + 1] <= eps) {
                return Ok(out);
            }
            return Err(ArithmeticError::PrecisionExhausted {
                index: n + 1,
                value: out.d[n + 1],
            });
        }
        let a = r0 / r1;
        let r2 = r0 % r1;
        let dn = r2 as f64 / scale;
        if let Stop::Threshold(eps) = stop {
            // The digit after the threshold is optional.
            if out.d[n + 1] <= eps && (r2 == 0 || dn < MIN_DN) {
                return Ok(out);
            }
        }
        let a64 = u64::try_from(a).map_err(|_| ArithmeticError::Overflow)?;
        let next = |v: &[u64]| -> Result<u64, ArithmeticError> {
            a64.checked_mul(v[n + 1])
                .and_then(|x| x.checked_add(v[n]))
                .ok_or(ArithmeticError::Overflow)
        };
        let (pn, qn) = (next(&out.p)?, next(&out.q)?);
        out.digits.push(a64);
        out.p.push(pn);
        out.q.push(qn);
        out.d.push(dn);
        (r0, r1) = (r1, r2);
    }
    Ok(out)
}

impl CfExpansion {
    /// Smallest `n` with `d_n <= eps`.
    pub fn first_below(&self, eps: f64) -> Result<usize, ArithmeticError> {
        self.d
            .iter()
            .position(|&d| d <= eps)
            .ok_or(ArithmeticError::ExpansionTooShort(eps))
    }

    /// `q_n d_{n+1} + q_{n+1} d_n`, equal to 1 in exact arithmetic.
    pub fn qd_identity(&self, n: usize) -> f64 {
        self.q[n] as f64 * self.d[n + 1] + self.q[n + 1] as f64 * self.d[n]
    }

    /// Signed error `q_n α − p_n`, which equals `(−1)^{n−1} d_n`.
    pub fn signed_error(&self, n: usize) -> f64 {
        if n % 2 == 1 {
            self.d[n]
        } else {
            -self.d[n]
        }
    }
}

/// Smallest `n` with `d_n(α) <= eps`.
pub fn first_below(expansion: &CfExpansion, eps: f64) -> Result<usize, ArithmeticError> {
    expansion.first_below(eps)
}

/// The three-obstacle parameters of a direction and radius.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObstacleConfig {
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "Q")]
    pub q: f64,
    #[serde(rename = "Qbar")]
    pub qbar: f64,
    pub sigma: i8,
    /// `d_N / ε`, equal to `1 − A`.
    #[serde(rename = "D")]
    pub d: f64,
    /// ε times the denominator of the other Farey neighbor. Unset for sampled configurations.
    #[serde(rename = "Qprime")]
    pub q_prime: Option<f64>,
    /// `B` before reduction modulo `D`. Unset for sampled configurations.
    #[serde(rename = "b")]
    pub b_raw: Option<f64>,
    /// The floor in the B formula acted within `FLOOR_TOL` of an integer.
    pub near_boundary: bool,
}

impl ObstacleConfig {
    /// Configuration from `(A, B, Q, σ)` alone, with `Q̄` from
    /// `Q̄(1−A) + Q(1−B) = 1`.
    pub fn from_abq(a: f64, b: f64, q: f64, sigma: i8) -> Self {
        Self {
            a,
            b,
            q,
            qbar: (1.0 - q * (1.0 - b)) / (1.0 - a),
            sigma,
            d: 1.0 - a,
            q_prime: None,
            b_raw: None,
            near_boundary: false,
        }
    }

    pub fn sigma_f64(&self) -> f64 {
        self.sigma as f64
    }

    /// `Q̄(1−A) + Q(1−B) − 1`.
    pub fn relation_residual(&self) -> f64 {
        self.qbar * (1.0 - self.a) + self.q * (1.0 - self.b) - 1.0
    }
}

/// `(α, ε)` of a first-octant direction.
pub fn slope_and_eps(omega: &Direction, r: f64) -> Result<(f64, f64), ArithmeticError> {
    let (c, s) = (omega.cos(), omega.sin());
    if !(s > 0.0 && s < c) {
        return Err(ArithmeticError::Octant(c, s));
    }
    let eps = 2.0 * r / c;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(ArithmeticError::Epsilon(eps));
    }
    Ok((s / c, eps))
}

fn floor_flagged(z: f64) -> (f64, bool) {
    let k = z.floor();
    (k, (z - z.round()).abs() < FLOOR_TOL * z.abs().max(1.0))
}

/// Configuration from the continued fraction of `α = ω₂/ω₁` with `ε = 2r/ω₁`.
pub fn obstacle_params_cf(omega: &Direction, r: f64) -> Result<ObstacleConfig, ArithmeticError> {
    let (_, eps) = slope_and_eps(omega, r)?;
    let cf = cf_expand_direction(omega, Stop::Threshold(eps))?;
    params_from_cf(&cf, eps)
}

/// Configuration from an existing expansion reaching below `eps`.
pub fn params_from_cf(cf: &CfExpansion, eps: f64) -> Result<ObstacleConfig, ArithmeticError> {
    let n = cf.first_below(eps)?;
    debug_assert!(n >= 1);
    let (dn, dm) = (cf.d[n], cf.d[n - 1]);
    let a = 1.0 - dn / eps;
    let (k, near) = floor_flagged((eps - dm) / dn);
    let b = 1.0 - dm / eps - k * dn / eps;
    let q = eps * cf.q[n] as f64;
    let sigma = if n % 2 == 0 { 1 } else { -1 };
    let d = dn / eps;
    let big_q = (1.0 / eps).floor();
    let (qn, qm) = (cf.q[n] as f64, cf.q[n - 1] as f64);
    let j = ((big_q - qm) / qn).floor();
    let q_prime = eps * (qm + j * qn);
    let b_raw = (q - 1.0 + q_prime * d) / q;
    Ok(ObstacleConfig {
        a,
        b,
        q,
        qbar: (1.0 - q * (1.0 - b)) / (1.0 - a),
        sigma,
        d,
        q_prime: Some(q_prime),
        b_raw: Some(b_raw),
        near_boundary: near,
    })
}

/// A fraction `p/q` in lowest terms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fraction {
    pub p: u64,
    pub q: u64,
}

impl Fraction {
    /// `q α − p`, correctly rounded, so its sign is exact.
    pub fn offset(&self, alpha: f64) -> f64 {
        (self.q as f64).mul_add(alpha, -(self.p as f64))
    }
}

/// Consecutive Farey fractions `left < α < right` of order `q_max`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FareyPair {
    pub left: Fraction,
    pub right: Fraction,
}

impl FareyPair {
    pub fn determinant(&self) -> i128 {
        self.right.p as i128 * self.left.q as i128 - self.left.p as i128 * self.right.q as i128
    }
}

/// Farey neighbors of `α` by batched Stern–Brocot descent. `0/1` and `1/1`
/// belong to every order.
pub fn farey_neighbors(alpha: f64, q_max: u64) -> FareyPair {
    assert!(alpha > 0.0 && alpha < 1.0, "slope must lie in (0, 1)");
    farey_by(|f: Fraction| f.offset(alpha), q_max)
}

/// `(q ω₂ − p ω₁)/ω₁` with compensated products, i.e. `qα − p` for the exact
/// slope of `omega`.
pub fn direction_offset(omega: &Direction, f: Fraction) -> f64 {
    let (c, s) = (omega.cos(), omega.sin());
    let (a, ea) = two_prod(f.q as f64, s);
    let (b, eb) = two_prod(f.p as f64, c);
    ((a - b) + (ea - eb)) / c
}

/// Stern–Brocot descent driven by the sign of `offset(p/q) = qα − p`.
fn farey_by<F: Fn(Fraction) -> f64>(offset: F, q_max: u64) -> FareyPair {
    assert!(q_max >= 1, "order must be at least 1");
    let mut l = Fraction { p: 0, q: 1 };
    let mut r = Fraction { p: 1, q: 1 };
    loop {
        if l.q + r.q > q_max {
            return FareyPair { left: l, right: r };
        }
        let mediant = Fraction {
            p: l.p + r.p,
            q: l.q + r.q,
        };
        let dl = offset(l);
        let dr = -offset(r);
        if offset(mediant) > 0.0 {
            // α above the mediant: move left toward r, l_k = l + k r.
            let cap = (q_max - l.q) / r.q;
            let mut k = ((dl / dr).floor() as u64).clamp(1, cap.max(1));
            let step = |k: u64| Fraction {
                p: l.p + k * r.p,
                q: l.q + k * r.q,
            };
            while k > 1 && offset(step(k)) <= 0.0 {
                k -= 1;
            }
            while k < cap && offset(step(k + 1)) > 0.0 {
                k += 1;
            }
            l = step(k.min(cap));
        } else {
            let cap = (q_max - r.q) / l.q;
            let mut k = ((dr / dl).floor() as u64).clamp(1, cap.max(1));
            let step = |k: u64| Fraction {
                p: r.p + k * l.p,
                q: r.q + k * l.q,
            };
            while k > 1 && offset(step(k)) >= 0.0 {
                k -= 1;
            }
            while k < cap && offset(step(k + 1)) < 0.0 {
                k += 1;
            }
            r = step(k.min(cap));
        }
    }
}

/// Which of the three Farey cases applies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FareyCase {
    /// The right neighbor lies farther than ε: the left one is selected.
    LeftOnly,
    /// Both within ε: the smaller denominator is selected.
    Both,
    /// The left neighbor lies farther than ε: the right one is selected.
    RightOnly,
}

/// Configuration from the Farey neighbors of `α` of order `⌊1/ε⌋`.
pub fn obstacle_params_farey(
    omega: &Direction,
    r: f64,
) -> Result<(ObstacleConfig, FareyCase), ArithmeticError> {
    let (_, eps) = slope_and_eps(omega, r)?;
    // Rejects slopes too close to a small rational, like the CF route.
    cf_expand_direction(omega, Stop::Threshold(eps))?;
    let big_q = (1.0 / eps).floor();
    let offset = |f: Fraction| direction_offset(omega, f);
    let pair = farey_by(offset, big_q as u64);
    let dl = offset(pair.left);
    let dr = -offset(pair.right);
    let (case, left_selected) = if dr > eps {
        (FareyCase::LeftOnly, true)
    } else if dl > eps {
        (FareyCase::RightOnly, false)
    } else {
        (FareyCase::Both, pair.left.q < pair.right.q)
    };
    let (sel, other, dn) = if left_selected {
        (pair.left, pair.right, dl)
    } else {
        (pair.right, pair.left, dr)
    };
    let q = eps * sel.q as f64;
    let q_prime = eps * other.q as f64;
    let d = dn / eps;
    let a = 1.0 - d;
    let b_raw = (q - 1.0 + q_prime * d) / q;
    let (k, near) = floor_flagged(b_raw / d);
    let b = b_raw - k * d;
    Ok((
        ObstacleConfig {
            a,
            b,
            q,
            qbar: (1.0 - q * (1.0 - b)) / (1.0 - a),
            sigma: if left_selected { -1 } else { 1 },
            d,
            q_prime: Some(q_prime),
            b_raw: Some(b_raw),
            near_boundary: near,
        },
        case,
    ))
}

/// Lattice vectors of the three obstacles that can be hit next.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObstacleTriple {
    /// `(q, p)`: the obstacle at flight `Q`.
    pub near: (i64, i64),
    /// `(q̄, p̄)`: the obstacle at flight `Q̄`.
    pub far: (i64, i64),
    /// `q p̄ − q̄ p`, which is `−σ`.
    pub det: i64,
}

impl ObstacleTriple {
    pub fn sum(&self) -> (i64, i64) {
        (self.near.0 + self.far.0, self.near.1 + self.far.1)
    }

    pub fn contains(&self, c: (i64, i64)) -> bool {
        c == self.near || c == self.far || c == self.sum()
    }
}

/// The obstacle triple `{(q,p), (q̄,p̄), (q+q̄, p+p̄)}` for a first-octant direction.
pub fn three_obstacle_lattice(
    omega: &Direction,
    r: f64,
) -> Result<ObstacleTriple, ArithmeticError> {
    let (_, eps) = slope_and_eps(omega, r)?;
    let cf = cf_expand_direction(omega, Stop::Threshold(eps))?;
    let n = cf.first_below(eps)?;
    let k = -((eps - cf.d[n - 1]) / cf.d[n]).floor();
    let k = k as i64;
    let (q, p) = (cf.q[n] as i64, cf.p[n] as i64);
    let qbar = cf.q[n - 1] as i64 + k * q;
    let pbar = cf.p[n - 1] as i64 + k * p;
    Ok(ObstacleTriple {
        near: (q, p),
        far: (qbar, pbar),
        det: q * pbar - qbar * p,
    })
}
