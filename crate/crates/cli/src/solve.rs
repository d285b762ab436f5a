//! `solve --config run.json`.

use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use lorentz_core::initial::InitialData;
use lorentz_core::solver::{
    free_flow_lower_bound, init_field, solve, Discretization, EntropyKind, Field, Grids,
    StepOptions, TimeOrder,
};

use crate::mc::parse_initial;
use crate::out::{
    check, csv_file, csv_gz_file, f, json_file, run_err, CliError, Dest, Meta, Result,
};

#[derive(Args, Debug, Serialize)]
pub struct SolveArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
}

fn default_cfl() -> f64 {
    0.5
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reports {
    pub every: f64,
    #[serde(default)]
    pub entropy: Vec<EntropyKind>,
}

/// Run configuration. `grids` may list a subset of
/// `nx1, nx2, nomega, ns, nh, s_max`; the rest take default values.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub grids: Value,
    /// Step as a fraction of the stability limit.
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    pub t_end: f64,
    pub initial: Value,
    pub reports: Reports,
    /// Write gzip CSV snapshots at report times.
    #[serde(default = "default_true")]
    pub snapshots: bool,
    #[serde(default)]
    pub order: Option<TimeOrder>,
}

pub struct Resolved {
    pub grids: Grids,
    pub initial: InitialData,
}

pub fn resolve(cfg: &RunConfig) -> Result<Resolved> {
    let mut g = serde_json::to_value(Grids::default()).map_err(run_err)?;
    match &cfg.grids {
        Value::Null => {}
        Value::Object(m) => {
            for (k, v) in m {
                if g.get(k).is_none() {
                    return Err(CliError::Usage(format!(
                        "unknown grid field {k}: valid fields nx1, nx2, nomega, ns, nh, s_max"
                    )));
                }
                g[k] = v.clone();
            }
        }
        _ => return Err(CliError::Usage("grids must be an object".into())),
    }
    let grids: Grids =
        serde_json::from_value(g).map_err(|e| CliError::Usage(format!("invalid grids: {e}")))?;
    grids
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    check("cfl", cfg.cfl, cfg.cfl > 0.0 && cfg.cfl <= 1.0, "(0, 1]")?;
    check(
        "t_end",
        cfg.t_end,
        cfg.t_end > 0.0 && cfg.t_end.is_finite(),
        "(0, ∞)",
    )?;
    check(
        "reports.every",
        cfg.reports.every,
        cfg.reports.every > 0.0 && cfg.reports.every <= cfg.t_end,
        "(0, t_end]",
    )?;
    let initial = parse_initial(&cfg.initial)?;
    Ok(Resolved { grids, initial })
}

fn snapshot_rows<'a>(
    disc: &'a Discretization,
    field: &'a Field,
) -> impl Iterator<Item = Vec<String>> + 'a {
    let g = disc.grids;
    let dh = g.dh();
    (0..g.len()).map(move |idx| {
        let j = idx % g.nh;
        let k = (idx / g.nh) % g.ns;
        let m = (idx / (g.nh * g.ns)) % g.nomega;
        let cell = idx / g.block();
        let x = g.x_center(cell / g.nx2, cell % g.nx2);
        let density = field.values[idx] / (disc.s_width(k) * dh);
        vec![
            f(x.x),
            f(x.y),
            f(g.theta(m)),
            f(disc.s_center(k)),
            f(g.h_center(j)),
            f(density),
        ]
    })
}

fn opt(x: Option<f64>) -> String {
    x.map(f).unwrap_or_default()
}

pub fn run(a: SolveArgs, dest: &Dest) -> Result<()> {
    let text = std::fs::read_to_string(&a.config).map_err(|e| {
        CliError::Usage(format!("cannot read --config {}: {e}", a.config.display()))
    })?;
    let cfg: RunConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", a.config.display())))?;
    let r = resolve(&cfg)?;
    let meta = Meta::new("solve", &cfg, None);
    let disc = Discretization::new(r.grids).map_err(run_err)?;
    let dt = cfg.cfl * disc.dt_limit();
    let opts = StepOptions {
        gain: true,
        order: cfg.order.unwrap_or(TimeOrder::Euler),
    };
    let field0 = init_field(&r.initial, &disc);
    let out = solve(
        &disc,
        field0,
        cfg.t_end,
        dt,
        cfg.reports.every,
        &cfg.reports.entropy,
        opts,
        cfg.snapshots,
    )
    .map_err(run_err)?;
    let dir = dest.dir_or_cwd();
    let mut rows = Vec::new();
    for d in &out.reports {
        let lb = free_flow_lower_bound(&r.initial, d.t).map_err(run_err)?;
        rows.push(vec![
            f(d.t),
            f(d.mass),
            opt(d.h_zlogz),
            opt(d.d_zlogz),
            opt(d.h_square),
            opt(d.d_square),
            f(d.distance),
            f(d.coarse_distance),
            f(lb.strong),
        ]);
    }
    let p = csv_file(
        &dir,
        "diagnostics.csv",
        &meta,
        &[
            "t",
            "mass",
            "H_zlogz",
            "D_zlogz",
            "H_sq",
            "D_sq",
            "dist_to_CE",
            "coarse_dist",
            "lower_bound",
        ],
        &rows,
    )?;
    eprintln!("wrote {}", p.display());
    for (n, s) in out.snapshots.iter().enumerate() {
        let p = csv_gz_file(
            &dir,
            &format!("snapshot_{n:04}.csv.gz"),
            &meta,
            &["x1", "x2", "theta", "s", "h", "F"],
            snapshot_rows(&disc, s),
        )?;
        eprintln!("wrote {}", p.display());
    }
    let body = json!({
        "grids": r.grids,
        "initial": r.initial,
        "dt": out.dt,
        "dt_limit": disc.dt_limit(),
        "reservoir_mass": disc.reservoir_mass,
        "sinkhorn_residual": disc.sinkhorn_residual,
        "snapshot_times": out.snapshots.iter().map(|s| s.t).collect::<Vec<_>>(),
    });
    let p = json_file(&dir, "run.json", &meta, body)?;
    eprintln!("wrote {}", p.display());
    Ok(())
}
