//! `kernel` subcommands.

use clap::{Args, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use lorentz_core::kernel::{equilibrium_e, p_simple, pi_kernel};
use lorentz_core::verify::{criterion, Level};

use crate::out::{check, f, run_err, CliError, Dest, Meta, Result};

#[derive(Subcommand, Debug)]
pub enum KernelCmd {
    /// Prints P(S, h | h') and Π(h | h').
    Eval(EvalArgs),
    /// CSV table of P, Π or E on a grid.
    Tabulate(TabulateArgs),
    /// Runs the kernel invariants (acceptance criteria 1 to 5) and prints PASS/FAIL lines.
    Verify(KernelVerifyArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub s: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub h: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub hprime: f64,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum What {
    /// P(S, h | h') at fixed h'.
    #[value(name = "P", alias = "p")]
    P,
    /// Π(h | h').
    #[value(name = "Pi", alias = "pi")]
    Pi,
    /// E(s, h).
    #[value(name = "E", alias = "e")]
    E,
}

#[derive(Args, Debug, Serialize)]
pub struct TabulateArgs {
    #[arg(long, value_enum)]
    pub what: What,
    /// `NS,NH`: midpoints in s on [0, s_max] and in h on [−1, 1].
    #[arg(long, default_value = "50,40")]
    pub grid: String,
    #[arg(long, default_value_t = 5.0)]
    pub s_max: f64,
    /// Fixed h' for `P`.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub hprime: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct KernelVerifyArgs {
    /// Use the larger sample sizes.
    #[arg(long)]
    pub full: bool,
}

fn check_h(flag: &str, h: f64) -> Result<()> {
    check(flag, h, (-1.0..=1.0).contains(&h), "[-1, 1]")
}

pub fn parse_grid(s: &str, n: usize) -> Result<Vec<usize>> {
    let v: std::result::Result<Vec<usize>, _> =
        s.split(',').map(|t| t.trim().parse::<usize>()).collect();
    match v {
        Ok(v) if v.len() == n && v.iter().all(|&k| k >= 1) => Ok(v),
        _ => Err(CliError::Usage(format!(
            "invalid value {s} for --grid: expected {n} positive integers separated by commas"
        ))),
    }
}

fn midpoints(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| a + (b - a) * (i as f64 + 0.5) / n as f64)
        .collect()
}

pub fn run(cmd: KernelCmd, dest: &Dest) -> Result<()> {
    match cmd {
        KernelCmd::Eval(a) => {
            check("--s", a.s, a.s >= 0.0 && a.s.is_finite(), "[0, ∞)")?;
            check_h("--h", a.h)?;
            check_h("--hprime", a.hprime)?;
            println!("P={:.6}", p_simple(a.s, a.h, a.hprime));
            println!("Pi={:.6}", pi_kernel(a.h, a.hprime));
            Ok(())
        }
        KernelCmd::Tabulate(a) => {
            let g = parse_grid(&a.grid, 2)?;
            let (ns, nh) = (g[0], g[1]);
            check(
                "--s-max",
                a.s_max,
                a.s_max > 0.0 && a.s_max.is_finite(),
                "(0, ∞)",
            )?;
            check_h("--hprime", a.hprime)?;
            check(
                "--grid",
                &a.grid,
                ns * nh <= 4_000_000,
                "at most 4e6 points",
            )?;
            let meta = Meta::new("kernel tabulate", &a, None);
            let s = midpoints(0.0, a.s_max, ns);
            let h = midpoints(-1.0, 1.0, nh);
            let (header, rows): (Vec<&str>, Vec<Vec<String>>) = match a.what {
                What::P => (
                    vec!["S", "h", "hprime", "P"],
                    (0..ns * nh)
                        .map(|k| {
                            let (si, hj) = (s[k / nh], h[k % nh]);
                            vec![f(si), f(hj), f(a.hprime), f(p_simple(si, hj, a.hprime))]
                        })
                        .collect(),
                ),
                What::Pi => (
                    vec!["h", "hprime", "Pi"],
                    (0..nh * nh)
                        .map(|k| {
                            let (hi, hj) = (h[k / nh], h[k % nh]);
                            vec![f(hi), f(hj), f(pi_kernel(hi, hj))]
                        })
                        .collect(),
                ),
                What::E => {
                    let vals: std::result::Result<Vec<f64>, _> = (0..ns * nh)
                        .into_par_iter()
                        .map(|k| equilibrium_e(s[k / nh], h[k % nh]))
                        .collect();
                    let vals = vals.map_err(run_err)?;
                    (
                        vec!["s", "h", "E"],
                        (0..ns * nh)
                            .map(|k| vec![f(s[k / nh]), f(h[k % nh]), f(vals[k])])
                            .collect(),
                    )
                }
            };
            dest.csv("kernel_table.csv", &meta, &header, &rows)
        }
        KernelCmd::Verify(a) => {
            let level = if a.full { Level::Full } else { Level::Quick };
            let mut failed = Vec::new();
            for id in 1..=5 {
                let c = criterion(id, level).expect("criterion id in range");
                println!("{}", c.line());
                if !c.passed {
                    failed.push(id);
                }
            }
            if failed.is_empty() {
                Ok(())
            } else {
                Err(CliError::Check(format!("failed criteria {failed:?}")))
            }
        }
    }
}
