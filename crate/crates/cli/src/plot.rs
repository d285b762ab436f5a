//! `plot-data`: wide CSV to long format.

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::PathBuf;

use clap::Args;
use flate2::read::GzDecoder;
use serde::Serialize;

use crate::out::{run_err, CliError, Dest, Meta, Result};

#[derive(Args, Debug, Serialize)]
pub struct PlotArgs {
    /// CSV file, optionally gzip-compressed (`.gz`). `#` lines are skipped.
    #[arg(long)]
    pub input: PathBuf,
    /// Identifier columns kept as is; defaults to the first column.
    #[arg(long)]
    pub id_cols: Option<String>,
}

fn open(path: &PathBuf) -> Result<Box<dyn Read>> {
    let f = File::open(path)
        .map_err(|e| CliError::Usage(format!("cannot read --input {}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "gz") {
        Ok(Box::new(GzDecoder::new(f)))
    } else {
        Ok(Box::new(f))
    }
}

pub fn run(a: PlotArgs, dest: &Dest) -> Result<()> {
    let mut text = String::new();
    for line in BufReader::new(open(&a.input)?).lines() {
        let line = line?;
        if !line.starts_with('#') {
            text.push_str(&line);
            text.push('\n');
        }
    }
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = rd
        .headers()
        .map_err(run_err)?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() {
        return Err(CliError::Run("input has no header".into()));
    }
    let ids: Vec<String> = match &a.id_cols {
        Some(s) => s.split(',').map(|t| t.trim().to_string()).collect(),
        None => vec![header[0].clone()],
    };
    let mut id_idx = Vec::new();
    for c in &ids {
        match header.iter().position(|h| h == c) {
            Some(i) => id_idx.push(i),
            None => {
                return Err(CliError::Usage(format!(
                    "invalid value {c} for --id-cols: valid columns {}",
                    header.join(",")
                )))
            }
        }
    }
    let value_idx: Vec<usize> = (0..header.len()).filter(|i| !id_idx.contains(i)).collect();
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(run_err)?;
        for &v in &value_idx {
            let mut row: Vec<String> = id_idx.iter().map(|&i| rec[i].to_string()).collect();
            row.push(header[v].clone());
            row.push(rec[v].to_string());
            rows.push(row);
        }
    }
    let mut out_header: Vec<&str> = ids.iter().map(String::as_str).collect();
    out_header.extend(["variable", "value"]);
    let meta = Meta::new("plot-data", &a, None);
    let stem = a
        .input
        .file_name()
        .and_then(|s| s.to_str())
        .map(|s| {
            s.trim_end_matches(".gz")
                .trim_end_matches(".csv")
                .to_string()
        })
        .unwrap_or_else(|| "table".into());
    dest.csv(&format!("{stem}_long.csv"), &meta, &out_header, &rows)
}
