//! `mc` subcommands. Each writes a CSV histogram and a JSON sidecar.

use std::path::Path;

use clap::{Args, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use lorentz_core::initial::InitialData;
use lorentz_core::mc::{
    self, bin_deviation, cesaro_config_distribution, cesaro_kernel_estimate, config_chi2,
    kernel_bin_masses, ConfigBins, Ensemble, EnsembleBins, KernelBins, POINTS_PER_DECADE,
};
use lorentz_core::stats::chi2_test;
use lorentz_core::Direction;

use crate::kernel::parse_grid;
use crate::out::{check, csv_file, f, json_file, run_err, CliError, Dest, Meta, Result};

#[derive(Subcommand, Debug)]
pub enum McCmd {
    /// Cesàro histogram of the billiard transfer map against the limit kernel, for several ε.
    KernelConverge(ConvergeArgs),
    /// Cesàro distribution of (A, B, Q, σ) against the limit law.
    ConfigDist(ConfigArgs),
    /// Particles following the limiting Markov process.
    Markov(MarkovArgs),
    /// Particles following the billiard flow at radius r, in macroscopic units.
    Billiard(BilliardArgs),
    /// Lag-one correlations of (A, B, Q, σ) along billiard orbits.
    HypothesisH(HypothesisArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct ConvergeArgs {
    #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
    pub theta: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub hprime: f64,
    /// Lower ends of the radius averages, comma separated.
    #[arg(long, default_value = "1e-3,1e-4,1e-5")]
    pub eps: String,
    /// `NS,NH` bins on [0, s_max) × [−1, 1].
    #[arg(long, default_value = "20,20")]
    pub bins: String,
    #[arg(long, default_value_t = 4.0)]
    pub s_max: f64,
    #[arg(long, default_value_t = POINTS_PER_DECADE)]
    pub per_decade: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct ConfigArgs {
    #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
    pub theta: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub eps: f64,
    /// Bins per axis of (A, B/(1−A), Q).
    #[arg(long, default_value_t = 6)]
    pub bins: usize,
    #[arg(long, default_value_t = 2000)]
    pub per_decade: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct EnsembleArgs {
    /// Number of particles.
    #[arg(long, default_value_t = 100_000)]
    pub n: u64,
    #[arg(long, default_value_t = 1.0)]
    pub tend: f64,
    /// Number of evenly spaced snapshot times ending at tend.
    #[arg(long, default_value_t = 1)]
    pub snapshots: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Initial density as JSON, `{"kind": "uniform"|"cosine"|"bump", "params": {...}}`.
    #[arg(
        long,
        default_value = r#"{"kind":"cosine","params":{"amplitude":0.5}}"#
    )]
    pub initial: String,
    /// `NX1,NX2,NTHETA,NS,NH` histogram bins.
    #[arg(long, default_value = "8,8,8,10,8")]
    pub bins: String,
    /// Upper end of the finite s bins.
    #[arg(long, default_value_t = 5.0)]
    pub s_max: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct MarkovArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub ensemble: EnsembleArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct BilliardArgs {
    /// Obstacle radius in (0, 1/2); macroscopic time is r times billiard time.
    #[arg(long)]
    pub r: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub ensemble: EnsembleArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct HypothesisArgs {
    /// Obstacle radius in (0, 0.1).
    #[arg(long, default_value_t = 0.01)]
    pub r: f64,
    /// Number of trajectories.
    #[arg(long, default_value_t = 1000)]
    pub n: u64,
    /// Collisions per trajectory.
    #[arg(long, default_value_t = 100)]
    pub collisions: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Parses `{"kind": ..., "params": {...}}`; flat fields next to `kind` are
/// accepted too.
pub fn parse_initial(v: &Value) -> Result<InitialData> {
    let bad = |m: String| CliError::Usage(format!("invalid initial data: {m}"));
    let mut obj = v
        .as_object()
        .cloned()
        .ok_or_else(|| bad("expected an object".into()))?;
    if let Some(p) = obj.remove("params") {
        let p = p
            .as_object()
            .cloned()
            .ok_or_else(|| bad("params must be an object".into()))?;
        obj.extend(p);
    }
    let d: InitialData =
        serde_json::from_value(Value::Object(obj)).map_err(|e| bad(e.to_string()))?;
    if !d.is_nonnegative() {
        return Err(bad("density must be nonnegative".into()));
    }
    Ok(d)
}

fn parse_f64_list(flag: &str, s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| {
            CliError::Usage(format!(
                "invalid value {s} for {flag}: expected numbers separated by commas"
            ))
        })
}

fn direction(theta: f64) -> Result<Direction> {
    check("--theta", theta, theta.is_finite(), "finite")?;
    Ok(Direction::from_angle(theta))
}

fn ensemble_setup(a: &EnsembleArgs) -> Result<(InitialData, Vec<f64>, EnsembleBins)> {
    check("--n", a.n, (1..=1_000_000_000).contains(&a.n), "[1, 1e9]")?;
    check(
        "--tend",
        a.tend,
        a.tend > 0.0 && a.tend.is_finite(),
        "(0, ∞)",
    )?;
    check(
        "--snapshots",
        a.snapshots,
        (1..=1000).contains(&a.snapshots),
        "[1, 1000]",
    )?;
    check(
        "--s-max",
        a.s_max,
        a.s_max > 0.0 && a.s_max.is_finite(),
        "(0, ∞)",
    )?;
    let b = parse_grid(&a.bins, 5)?;
    let v: Value = serde_json::from_str(&a.initial)
        .map_err(|e| CliError::Usage(format!("invalid value for --initial: {e}")))?;
    let init = parse_initial(&v)?;
    let times = (1..=a.snapshots)
        .map(|k| a.tend * k as f64 / a.snapshots as f64)
        .collect();
    let bins = EnsembleBins {
        nx1: b[0],
        nx2: b[1],
        ntheta: b[2],
        ns: b[3],
        nh: b[4],
        s_max: a.s_max,
    };
    Ok((init, times, bins))
}

fn xw_rows(e: &Ensemble) -> Vec<Vec<String>> {
    let b = e.bins;
    let mut rows = Vec::new();
    for s in &e.snapshots {
        for (k, &c) in s.xw.iter().enumerate() {
            let (i1, i2, m) = (k / (b.nx2 * b.ntheta), (k / b.ntheta) % b.nx2, k % b.ntheta);
            rows.push(vec![
                f(s.t),
                i1.to_string(),
                i2.to_string(),
                m.to_string(),
                c.to_string(),
            ]);
        }
    }
    rows
}

fn write_ensemble(dir: &Path, stem: &str, meta: &Meta, e: &Ensemble, with_sh: bool) -> Result<()> {
    let p = csv_file(
        dir,
        &format!("{stem}_xw.csv"),
        meta,
        &["t", "i1", "i2", "itheta", "count"],
        &xw_rows(e),
    )?;
    eprintln!("wrote {}", p.display());
    let mut summary = Vec::new();
    if with_sh {
        let probs = e.bins.equilibrium_probabilities().map_err(run_err)?;
        let b = e.bins;
        let mut rows = Vec::new();
        for s in &e.snapshots {
            let n: u64 = s.sh.iter().sum();
            for (k, &c) in s.sh.iter().enumerate() {
                let (i, j) = (k / b.nh, k % b.nh);
                let (s0, s1) = b.s_edges(i);
                let (h0, h1) = b.h_edges(j);
                rows.push(vec![
                    f(s.t),
                    f(s0),
                    f(s1),
                    f(h0),
                    f(h1),
                    c.to_string(),
                    f(probs[k] * n as f64),
                ]);
            }
            let obs: Vec<f64> = s.sh.iter().map(|&c| c as f64).collect();
            let exp: Vec<f64> = probs.iter().map(|p| p * n as f64).collect();
            summary.push(json!({ "t": s.t, "sh_vs_equilibrium": chi2_test(&obs, &exp) }));
        }
        let p = csv_file(
            dir,
            &format!("{stem}_sh.csv"),
            meta,
            &["t", "s_lo", "s_hi", "h_lo", "h_hi", "count", "equilibrium"],
            &rows,
        )?;
        eprintln!("wrote {}", p.display());
    }
    let body = json!({
        "bins": e.bins,
        "particles": e.particles,
        "lost": e.lost,
        "snapshots": summary,
    });
    let p = json_file(dir, &format!("{stem}.json"), meta, body)?;
    eprintln!("wrote {}", p.display());
    Ok(())
}

pub fn run(cmd: McCmd, dest: &Dest) -> Result<()> {
    let dir = dest.dir_or_cwd();
    match cmd {
        McCmd::KernelConverge(a) => {
            let omega = direction(a.theta)?;
            check(
                "--hprime",
                a.hprime,
                (-1.0..=1.0).contains(&a.hprime),
                "[-1, 1]",
            )?;
            let eps = parse_f64_list("--eps", &a.eps)?;
            for &e in &eps {
                check("--eps", e, (1e-8..mc::R_MAX).contains(&e), "[1e-8, 0.25)")?;
            }
            let g = parse_grid(&a.bins, 2)?;
            check(
                "--s-max",
                a.s_max,
                a.s_max > 0.0 && a.s_max.is_finite(),
                "(0, ∞)",
            )?;
            check(
                "--per-decade",
                a.per_decade,
                (2..=1_000_000).contains(&a.per_decade),
                "[2, 1e6]",
            )?;
            let bins = KernelBins {
                s_max: a.s_max,
                ns: g[0],
                nh: g[1],
            };
            let meta = Meta::new("mc kernel-converge", &a, None);
            let exact = kernel_bin_masses(a.hprime, bins).map_err(run_err)?;
            let mut rows = Vec::new();
            let mut per_eps = Vec::new();
            for &e in &eps {
                let est = cesaro_kernel_estimate(a.hprime, omega, e, bins, a.per_decade)
                    .map_err(run_err)?;
                for (k, (&m, &x)) in est.mass.iter().zip(&exact).enumerate() {
                    let (s0, s1, h0, h1) = if k == bins.overflow() {
                        (bins.s_max, f64::INFINITY, -1.0, 1.0)
                    } else {
                        let (s0, s1) = bins.s_edges(k / bins.nh);
                        let (h0, h1) = bins.h_edges(k % bins.nh);
                        (s0, s1, h0, h1)
                    };
                    rows.push(vec![f(e), f(s0), f(s1), f(h0), f(h1), f(m), f(x)]);
                }
                per_eps.push(json!({
                    "eps": e,
                    "deviation": bin_deviation(&est.mass, &exact),
                    "excluded_weight": est.excluded_weight,
                    "samples": est.samples,
                }));
            }
            let p = csv_file(
                &dir,
                "kernel_converge.csv",
                &meta,
                &["eps", "s_lo", "s_hi", "h_lo", "h_hi", "cesaro", "exact"],
                &rows,
            )?;
            eprintln!("wrote {}", p.display());
            let p = json_file(
                &dir,
                "kernel_converge.json",
                &meta,
                json!({ "bins": bins, "results": per_eps }),
            )?;
            eprintln!("wrote {}", p.display());
            Ok(())
        }
        McCmd::ConfigDist(a) => {
            let omega = direction(a.theta)?;
            check(
                "--eps",
                a.eps,
                (1e-8..mc::R_MAX).contains(&a.eps),
                "[1e-8, 0.25)",
            )?;
            check("--bins", a.bins, (1..=50).contains(&a.bins), "[1, 50]")?;
            check(
                "--per-decade",
                a.per_decade,
                (2..=1_000_000).contains(&a.per_decade),
                "[2, 1e6]",
            )?;
            let meta = Meta::new("mc config-dist", &a, None);
            let bins = ConfigBins { n: a.bins };
            let samples =
                cesaro_config_distribution(omega, a.eps, a.per_decade).map_err(run_err)?;
            let probs = bins.mu_probabilities().map_err(run_err)?;
            let total: f64 = samples.weights.iter().sum();
            let mut w = vec![0.0; bins.len()];
            for (c, x) in samples.configs.iter().zip(&samples.weights) {
                w[bins.index(c)] += x / total;
            }
            let n = a.bins;
            let rows: Vec<Vec<String>> = (0..bins.len())
                .map(|k| {
                    let sigma = if k / (n * n * n) == 0 { 1 } else { -1 };
                    let (i, j, l) = ((k / (n * n)) % n, (k / n) % n, k % n);
                    vec![
                        sigma.to_string(),
                        i.to_string(),
                        j.to_string(),
                        l.to_string(),
                        f(w[k]),
                        f(probs[k]),
                    ]
                })
                .collect();
            let p = csv_file(
                &dir,
                "config_dist.csv",
                &meta,
                &["sigma", "iA", "iBprime", "iQ", "cesaro", "mu"],
                &rows,
            )?;
            eprintln!("wrote {}", p.display());
            let chi = config_chi2(&samples, bins).map_err(run_err)?;
            let body = json!({
                "mean_sigma": samples.mean_sigma(),
                "chi2": chi,
                "samples": samples.configs.len(),
                "excluded_weight": samples.excluded_weight,
            });
            let p = json_file(&dir, "config_dist.json", &meta, body)?;
            eprintln!("wrote {}", p.display());
            Ok(())
        }
        McCmd::Markov(a) => {
            let (init, times, bins) = ensemble_setup(&a.ensemble)?;
            let meta = Meta::new("mc markov", &a, Some(a.ensemble.seed));
            let e = mc::markov_ensemble(&init, a.ensemble.n, &times, bins, a.ensemble.seed)
                .map_err(run_err)?;
            write_ensemble(&dir, "markov", &meta, &e, true)
        }
        McCmd::Billiard(a) => {
            check("--r", a.r, a.r > 0.0 && a.r < 0.5, "(0, 0.5)")?;
            let (init, times, bins) = ensemble_setup(&a.ensemble)?;
            let meta = Meta::new("mc billiard", &a, Some(a.ensemble.seed));
            let e = mc::billiard_ensemble(&init, a.r, a.ensemble.n, &times, bins, a.ensemble.seed)
                .map_err(run_err)?;
            write_ensemble(&dir, "billiard", &meta, &e, false)
        }
        McCmd::HypothesisH(a) => {
            check("--r", a.r, a.r > 0.0 && a.r < 0.1, "(0, 0.1)")?;
            check("--n", a.n, a.n >= 1, "[1, ∞)")?;
            check("--collisions", a.collisions, a.collisions >= 1, "[1, ∞)")?;
            let meta = Meta::new("mc hypothesis-h", &a, Some(a.seed));
            let r = mc::hypothesis_h(a.r, a.n, a.collisions, a.seed).map_err(run_err)?;
            let rows = vec![
                vec!["A".to_string(), f(r.corr_a)],
                vec!["B".to_string(), f(r.corr_b)],
                vec!["Q".to_string(), f(r.corr_q)],
                vec!["sigma".to_string(), f(r.corr_sigma)],
            ];
            let p = csv_file(
                &dir,
                "hypothesis_h.csv",
                &meta,
                &["parameter", "lag1_correlation"],
                &rows,
            )?;
            eprintln!("wrote {}", p.display());
            let body = serde_json::to_value(&r).map_err(run_err)?;
            let p = json_file(&dir, "hypothesis_h.json", &meta, body)?;
            eprintln!("wrote {}", p.display());
            Ok(())
        }
    }
}
