//! `billiard` and `cf` subcommands.

use clap::{Args, Subcommand};
use serde::Serialize;
use serde_json::json;

use lorentz_core::arithmetic::{cf_expand, obstacle_params_cf, Stop};
use lorentz_core::billiard::{collision_sequence, reduce_to_octant, transfer_map};
use lorentz_core::{Direction, ParticleState, Vec2};

use crate::out::{check, f, run_err, CliError, Dest, Meta, Result};

#[derive(Subcommand, Debug)]
pub enum BilliardCmd {
    /// CSV of the next n collisions from (x, y) in direction θ.
    Trace(TraceArgs),
    /// Transfer map from impact parameter h' on the obstacle at the origin.
    Transfer(TransferArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct TraceArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub x: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub y: f64,
    /// Direction angle in radians.
    #[arg(long, allow_hyphen_values = true)]
    pub theta: f64,
    /// Obstacle radius in (0, 1/2).
    #[arg(long)]
    pub r: f64,
    /// Number of collisions.
    #[arg(long, default_value_t = 10)]
    pub n: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct TransferArgs {
    /// Impact parameter in [−1, 1].
    #[arg(long, allow_hyphen_values = true)]
    pub hprime: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub theta: f64,
    #[arg(long)]
    pub r: f64,
}

fn check_radius(r: f64) -> Result<()> {
    check("--r", r, r > 0.0 && r < 0.5, "(0, 0.5)")
}

pub fn billiard(cmd: BilliardCmd, dest: &Dest) -> Result<()> {
    match cmd {
        BilliardCmd::Trace(a) => {
            check_radius(a.r)?;
            check("--n", a.n, (1..=10_000_000).contains(&a.n), "[1, 1e7]")?;
            check("--theta", a.theta, a.theta.is_finite(), "finite")?;
            let meta = Meta::new("billiard trace", &a, None);
            let st = ParticleState::new(Vec2::new(a.x, a.y), Direction::from_angle(a.theta));
            let (events, err) = match collision_sequence(&st, a.r, a.n) {
                Ok(ev) => (ev, None),
                Err(e) => (e.events.clone(), Some(e)),
            };
            let rows: Vec<Vec<String>> = events
                .iter()
                .enumerate()
                .map(|(j, e)| {
                    vec![
                        (j + 1).to_string(),
                        f(e.time),
                        f(e.point.x),
                        f(e.point.y),
                        f(e.outgoing.theta()),
                        f(e.impact),
                    ]
                })
                .collect();
            dest.csv(
                "billiard_trace.csv",
                &meta,
                &["j", "t", "x1", "x2", "theta_out", "h"],
                &rows,
            )?;
            match err {
                Some(e) => Err(run_err(e)),
                None => Ok(()),
            }
        }
        BilliardCmd::Transfer(a) => {
            check_radius(a.r)?;
            check(
                "--hprime",
                a.hprime,
                (-1.0..=1.0).contains(&a.hprime),
                "[-1, 1]",
            )?;
            let meta = Meta::new("billiard transfer", &a, None);
            let t = transfer_map(a.hprime, Direction::from_angle(a.theta), a.r).map_err(run_err)?;
            dest.csv(
                "billiard_transfer.csv",
                &meta,
                &["S", "h"],
                &[vec![f(t.flight), f(t.impact)]],
            )
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum CfCmd {
    /// Three-obstacle parameters (A, B, Q, Q̄, σ, D, Q') of a direction and radius, as JSON.
    Params(ParamsArgs),
    /// Digits, convergents and distances d_n of α down to eps, as CSV.
    Expand(ExpandArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct ParamsArgs {
    /// Direction angle in radians; reduced to the first octant.
    #[arg(long, allow_hyphen_values = true)]
    pub theta: f64,
    #[arg(long)]
    pub r: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct ExpandArgs {
    /// Number in (0, 1).
    #[arg(long)]
    pub alpha: f64,
    /// Stop once d_n drops below eps.
    #[arg(long, default_value_t = 1e-6)]
    pub eps: f64,
}

pub fn cf(cmd: CfCmd, dest: &Dest) -> Result<()> {
    match cmd {
        CfCmd::Params(a) => {
            check_radius(a.r)?;
            check("--theta", a.theta, a.theta.is_finite(), "finite")?;
            let meta = Meta::new("cf params", &a, None);
            let (w, frame) = reduce_to_octant(Direction::from_angle(a.theta));
            let cfg = obstacle_params_cf(&w, a.r).map_err(run_err)?;
            let mut body = serde_json::to_value(cfg).map_err(run_err)?;
            body["theta_reduced"] = json!(w.theta());
            body["mirrored"] = json!(frame.impact_sign() < 0.0);
            dest.json("cf_params.json", &meta, body)
        }
        CfCmd::Expand(a) => {
            check("--alpha", a.alpha, a.alpha > 0.0 && a.alpha < 1.0, "(0, 1)")?;
            check("--eps", a.eps, a.eps > 0.0 && a.eps < 1.0, "(0, 1)")?;
            let meta = Meta::new("cf expand", &a, None);
            let e = cf_expand(a.alpha, Stop::Threshold(a.eps)).map_err(run_err)?;
            // Row n ≥ 2 is built from digit a_{n−1} = digits[n − 2].
            let rows: Vec<Vec<String>> = (0..e.p.len())
                .map(|n| {
                    let digit = if n >= 2 {
                        e.digits[n - 2].to_string()
                    } else {
                        String::new()
                    };
                    vec![
                        n.to_string(),
                        digit,
                        e.p[n].to_string(),
                        e.q[n].to_string(),
                        f(e.d[n]),
                    ]
                })
                .collect();
            if rows.is_empty() {
                return Err(CliError::Run("empty expansion".into()));
            }
            dest.csv(
                "cf_expand.csv",
                &meta,
                &["n", "digit", "p", "q", "d"],
                &rows,
            )
        }
    }
}
