//! Periodic Lorentz gas in two dimensions and its Boltzmann-Grad limit.
//!
//! * [`billiard`]: exact dynamics among disks of radius `r` on Z².
//! * [`arithmetic`]: continued fractions, Farey neighbors and the
//!   three-obstacle parameters `(A, B, Q, Q̄, σ)`.
//! * [`kernel`]: the limiting transition density `P(S, h | h')`, the
//!   equilibrium profile `E(s, h)` and samplers.
//! * [`mc`]: Cesàro estimators and particle simulations.
//! * [`solver`]: finite-volume solver for the limiting kinetic equation.
//! * [`verify`]: acceptance checks shared by tests and the CLI.

pub mod arithmetic;
pub mod billiard;
pub mod consts;
pub mod geom;
pub mod initial;
pub mod kernel;
pub mod mc;
pub mod quad;
pub mod solver;
pub mod stats;
pub mod verify;

pub use arithmetic::{CfExpansion, FareyPair, ObstacleConfig};
pub use billiard::{CollisionEvent, ParticleState, TransferResult};
pub use geom::{Direction, Vec2};
