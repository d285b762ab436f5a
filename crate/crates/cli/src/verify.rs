//! `verify all`.

use clap::{Args, Subcommand};
use serde::Serialize;

use lorentz_core::verify::{criterion, Level, VerifyReport};

use crate::out::{json_file, CliError, Dest, Meta, Result, VERSION};

#[derive(Subcommand, Debug)]
pub enum VerifyCmd {
    /// Runs the acceptance criteria, writes verify_report.json and prints a summary.
    All(AllArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct AllArgs {
    /// Reduced sample sizes (default).
    #[arg(long, conflicts_with = "full")]
    pub quick: bool,
    /// Full sample sizes.
    #[arg(long)]
    pub full: bool,
    /// Comma separated subset of criteria, e.g. `3,4`.
    #[arg(long)]
    pub only: Option<String>,
}

fn parse_ids(s: &str) -> Result<Vec<u8>> {
    let ids: std::result::Result<Vec<u8>, _> =
        s.split(',').map(|t| t.trim().parse::<u8>()).collect();
    match ids {
        Ok(v) if !v.is_empty() && v.iter().all(|i| (1..=13).contains(i)) => Ok(v),
        _ => Err(CliError::Usage(format!(
            "invalid value {s} for --only: valid range 1..=13, comma separated"
        ))),
    }
}

pub fn run(cmd: VerifyCmd, dest: &Dest) -> Result<()> {
    let VerifyCmd::All(a) = cmd;
    let level = if a.full { Level::Full } else { Level::Quick };
    let ids = match &a.only {
        Some(s) => parse_ids(s)?,
        None => (1..=13).collect(),
    };
    let meta = Meta::new("verify all", &a, None);
    let mut checks = Vec::new();
    for id in ids {
        let c = criterion(id, level).expect("criterion id in range");
        println!("{}", c.line());
        checks.push(c);
    }
    let report = VerifyReport {
        level,
        version: VERSION.to_string(),
        checks,
    };
    let n = report.checks.iter().filter(|c| c.passed).count();
    println!("{n}/{} criteria passed", report.checks.len());
    let body = serde_json::to_value(&report).map_err(crate::out::run_err)?;
    let p = json_file(&dest.dir_or_cwd(), "verify_report.json", &meta, body)?;
    eprintln!("wrote {}", p.display());
    if report.all_passed() {
        Ok(())
    } else {
        Err(CliError::Check(format!(
            "failed criteria {:?}",
            report.failed()
        )))
    }
}
