//! Initial densities `f_in(x, ω)` on T² × S¹.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geom::Vec2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InitialData {
    /// `f = level`.
    Uniform {
        #[serde(default = "one")]
        level: f64,
    },
    /// `f = 1 + amplitude · cos(2π mode x₁)`.
    Cosine {
        #[serde(default = "half")]
        amplitude: f64,
        #[serde(default = "one_u")]
        mode: u32,
    },
    /// `f = base + height · exp(−|x − center|²/(2 width²)) · (1 + angular cos(θ − theta0))`
    /// with the periodic distance on T².
    Bump {
        center: [f64; 2],
        width: f64,
        #[serde(default = "one")]
        height: f64,
        #[serde(default)]
        base: f64,
        #[serde(default)]
        angular: f64,
        #[serde(default)]
        theta0: f64,
    },
}

fn one() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}
fn one_u() -> u32 {
    1
}

fn torus_delta(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

impl InitialData {
    pub fn cosine(amplitude: f64) -> Self {
        InitialData::Cosine { amplitude, mode: 1 }
    }

    pub fn value(&self, x: Vec2, theta: f64) -> f64 {
        match *self {
            InitialData::Uniform { level } => level,
            InitialData::Cosine { amplitude, mode } => {
                1.0 + amplitude * (TAU * mode as f64 * x.x).cos()
            }
            InitialData::Bump {
                center,
                width,
                height,
                base,
                angular,
                theta0,
            } => {
                let dx = torus_delta(x.x, center[0]);
                let dy = torus_delta(x.y, center[1]);
                let g = (-(dx * dx + dy * dy) / (2.0 * width * width)).exp();
                base + height * g * (1.0 + angular * (theta - theta0).cos())
            }
        }
    }

    /// Upper bound of the density.
    pub fn max(&self) -> f64 {
        match *self {
            InitialData::Uniform { level } => level,
            InitialData::Cosine { amplitude, .. } => 1.0 + amplitude.abs(),
            InitialData::Bump {
                height,
                base,
                angular,
                ..
            } => base + height * (1.0 + angular.abs()),
        }
    }

    pub fn is_nonnegative(&self) -> bool {
        match *self {
            InitialData::Uniform { level } => level >= 0.0,
            InitialData::Cosine { amplitude, .. } => amplitude.abs() <= 1.0,
            InitialData::Bump {
                height,
                base,
                angular,
                width,
                ..
            } => width > 0.0 && base >= 0.0 && height >= 0.0 && angular.abs() <= 1.0,
        }
    }

    /// Whether `f` does not depend on `x₂`.
    pub fn x2_invariant(&self) -> bool {
        !matches!(self, InitialData::Bump { .. })
    }

    /// Draws `(x, θ)` with density proportional to `f` by rejection.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec2, f64) {
        let m = self.max();
        loop {
            let x = Vec2::new(rng.gen(), rng.gen());
            let theta = rng.gen::<f64>() * TAU;
            if rng.gen::<f64>() * m <= self.value(x, theta) {
                return (x, theta);
            }
        }
    }

    /// `∫∫ f dx dω` over T² × S¹, by midpoint sums on a fine grid for the bump.
    pub fn mass(&self) -> f64 {
        match *self {
            InitialData::Uniform { level } => TAU * level,
            InitialData::Cosine { .. } => TAU,
            InitialData::Bump { .. } => {
                let n = 400;
                let h = 1.0 / n as f64;
                let mut s = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        let x = Vec2::new((i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
                        // At θ = θ₀ + π/2 the angular factor equals its mean.
                        s += self.value(x, self.theta0() + PI / 2.0);
                    }
                }
                TAU * s * h * h
            }
        }
    }

    fn theta0(&self) -> f64 {
        match *self {
            InitialData::Bump { theta0, .. } => theta0,
            _ => 0.0,
        }
    }
}
