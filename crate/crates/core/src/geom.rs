//! Plane vectors and unit directions.

use std::f64::consts::{PI, TAU};
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    /// Counterclockwise quarter turn.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn rounded(self) -> (i64, i64) {
        (self.x.round() as i64, self.y.round() as i64)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

/// Unit direction with cached components.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    theta: f64,
    cos: f64,
    sin: f64,
}

impl Direction {
    pub fn from_angle(theta: f64) -> Self {
        let theta = wrap_angle(theta);
        let (sin, cos) = theta.sin_cos();
        Self { theta, cos, sin }
    }

    /// Normalizes `v`; panics on the zero vector.
    pub fn from_vector(v: Vec2) -> Self {
        let n = v.norm();
        assert!(n > 0.0, "zero vector has no direction");
        let (cos, sin) = (v.x / n, v.y / n);
        Self {
            theta: wrap_angle(sin.atan2(cos)),
            cos,
            sin,
        }
    }

    /// Keeps the given components as they are; they must already be unit
    /// length up to rounding.
    pub fn from_unit_components(cos: f64, sin: f64) -> Self {
        debug_assert!((cos * cos + sin * sin - 1.0).abs() < 1e-12);
        Self {
            theta: wrap_angle(sin.atan2(cos)),
            cos,
            sin,
        }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn cos(&self) -> f64 {
        self.cos
    }

    pub fn sin(&self) -> f64 {
        self.sin
    }

    pub fn vec(&self) -> Vec2 {
        Vec2::new(self.cos, self.sin)
    }

    /// R[angle] applied to this direction.
    pub fn rotated(&self, angle: f64) -> Self {
        Self::from_angle(self.theta + angle)
    }
}

/// Reduces an angle to [0, 2π).
pub fn wrap_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(TAU);
    if t >= TAU {
        0.0
    } else {
        t
    }
}

/// Deflection angle of a collision with impact parameter `h`.
pub fn deflection(h: f64) -> f64 {
    PI - 2.0 * h.clamp(-1.0, 1.0).asin()
}

/// Exact product `a*b = hi + lo`.
#[inline]
pub(crate) fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let hi = a * b;
    (hi, a.mul_add(b, -hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angle_wraps_into_range() {
        assert_eq!(wrap_angle(-0.0), 0.0);
        assert!((wrap_angle(-PI / 2.0) - 1.5 * PI).abs() < 1e-15);
        assert!(wrap_angle(7.0 * TAU + 0.25) < TAU);
    }

    #[test]
    fn direction_components_agree() {
        for k in 0..100 {
            let d = Direction::from_angle(0.37 * k as f64 - 5.0);
            assert!((d.cos().powi(2) + d.sin().powi(2) - 1.0).abs() < 1e-12);
            let back = Direction::from_vector(d.vec());
            assert!(
                (back.theta() - d.theta()).abs() < 1e-12
                    || (back.theta() - d.theta()).abs() > TAU - 1e-12
            );
        }
    }

    #[test]
    fn deflection_endpoints() {
        assert!((deflection(0.0) - PI).abs() < 1e-15);
        assert!(deflection(1.0).abs() < 1e-15);
        assert!((deflection(-1.0) - TAU).abs() < 1e-15);
    }

    #[test]
    fn two_prod_is_exact() {
        let (hi, lo) = two_prod(0.1, 3.0);
        assert_eq!(hi, 0.1 * 3.0);
        assert!(lo != 0.0);
    }
}
