//! Output plumbing: metadata headers, CSV and JSON writers, error kinds.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use flate2::write::GzEncoder;
use flate2::Compression;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const TOOL: &str = "lorentz-bg";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flag value. Exit status 2.
    #[error("{0}")]
    Usage(String),
    /// A check ran and failed. Exit status 1.
    #[error("{0}")]
    Check(String),
    /// Anything that went wrong while computing. Exit status 1.
    #[error("{0}")]
    Run(String),
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

pub fn run_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Run(e.to_string())
}

/// Rejects `value` unless `ok` holds, naming the flag and its valid range.
pub fn check(flag: &str, value: impl std::fmt::Display, ok: bool, range: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "invalid value {value} for {flag}: valid range {range}"
        )))
    }
}

/// Provenance attached to every output file.
#[derive(Clone, Debug, Serialize)]
pub struct Meta {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    /// SHA-256 of the canonical JSON of the parameters.
    pub config_hash: String,
    pub seed: Option<u64>,
    pub params: Value,
}

impl Meta {
    pub fn new<P: Serialize>(command: &str, params: &P, seed: Option<u64>) -> Self {
        let params = serde_json::to_value(params).unwrap_or(Value::Null);
        let canonical = serde_json::to_string(&params).unwrap_or_default();
        let digest = Sha256::digest(canonical.as_bytes());
        Self {
            tool: TOOL,
            version: VERSION,
            command: command.to_string(),
            config_hash: format!("sha256:{digest:x}"),
            seed,
            params,
        }
    }

    /// `#` comment lines for the top of a CSV file.
    pub fn csv_header(&self) -> String {
        let seed = self.seed.map_or("none".to_string(), |s| s.to_string());
        format!(
            "# tool={} version={}\n# command={}\n# config_hash={}\n# seed={}\n",
            self.tool, self.version, self.command, self.config_hash, seed
        )
    }

    pub fn json(&self) -> Value {
        serde_json::to_value(self).unwrap_or(Value::Null)
    }
}

/// Where outputs go. Without `--output-dir` single tables go to stdout.
#[derive(Clone, Debug)]
pub struct Dest {
    pub dir: Option<PathBuf>,
}

impl Dest {
    /// Directory for commands that always write files.
    pub fn dir_or_cwd(&self) -> PathBuf {
        self.dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    fn open(&self, name: &str) -> Result<(Box<dyn Write>, Option<PathBuf>)> {
        match &self.dir {
            Some(d) => {
                fs::create_dir_all(d)?;
                let p = d.join(name);
                Ok((Box::new(BufWriter::new(File::create(&p)?)), Some(p)))
            }
            None => Ok((Box::new(io::stdout().lock()), None)),
        }
    }

    /// Writes a CSV table with a metadata header.
    pub fn csv(
        &self,
        name: &str,
        meta: &Meta,
        header: &[&str],
        rows: &[Vec<String>],
    ) -> Result<()> {
        let (mut w, path) = self.open(name)?;
        write_csv(&mut w, meta, header, rows)?;
        w.flush()?;
        if let Some(p) = path {
            eprintln!("wrote {}", p.display());
        }
        Ok(())
    }

    /// Writes pretty JSON with the metadata under `"meta"`.
    pub fn json(&self, name: &str, meta: &Meta, body: Value) -> Result<()> {
        let (mut w, path) = self.open(name)?;
        write_json(&mut w, meta, body)?;
        if let Some(p) = path {
            eprintln!("wrote {}", p.display());
        }
        Ok(())
    }
}

pub fn write_csv<W: Write>(
    w: &mut W,
    meta: &Meta,
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<()> {
    w.write_all(meta.csv_header().as_bytes())?;
    let mut cw = csv::Writer::from_writer(w);
    cw.write_record(header).map_err(run_err)?;
    for r in rows {
        cw.write_record(r).map_err(run_err)?;
    }
    cw.flush()?;
    Ok(())
}

pub fn write_json<W: Write>(w: &mut W, meta: &Meta, body: Value) -> Result<()> {
    let mut obj = json!({ "meta": meta.json() });
    match body {
        Value::Object(m) => {
            for (k, v) in m {
                obj[k] = v;
            }
        }
        other => obj["data"] = other,
    }
    serde_json::to_writer_pretty(&mut *w, &obj).map_err(run_err)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Writes a CSV file into `dir`.
pub fn csv_file(
    dir: &Path,
    name: &str,
    meta: &Meta,
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let p = dir.join(name);
    let mut w = BufWriter::new(File::create(&p)?);
    write_csv(&mut w, meta, header, rows)?;
    Ok(p)
}

/// Writes a gzip-compressed CSV file into `dir`. The gzip header carries no
/// timestamp, so equal inputs give equal bytes.
pub fn csv_gz_file(
    dir: &Path,
    name: &str,
    meta: &Meta,
    header: &[&str],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let p = dir.join(name);
    let f = BufWriter::new(File::create(&p)?);
    let mut gz = flate2::GzBuilder::new()
        .mtime(0)
        .write(f, Compression::default());
    gz.write_all(meta.csv_header().as_bytes())?;
    {
        let mut cw = csv::Writer::from_writer(&mut gz);
        cw.write_record(header).map_err(run_err)?;
        for r in rows {
            cw.write_record(&r).map_err(run_err)?;
        }
        cw.flush()?;
    }
    finish(gz)?;
    Ok(p)
}

fn finish<W: Write>(gz: GzEncoder<W>) -> Result<()> {
    let mut inner = gz.finish()?;
    inner.flush()?;
    Ok(())
}

pub fn json_file(dir: &Path, name: &str, meta: &Meta, body: Value) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let p = dir.join(name);
    let mut w = BufWriter::new(File::create(&p)?);
    write_json(&mut w, meta, body)?;
    Ok(p)
}

/// Shortest round-trip formatting.
pub fn f(x: f64) -> String {
    format!("{x:?}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_depends_on_params_only() {
        let a = Meta::new("x", &json!({"r": 0.1}), Some(3));
        let b = Meta::new("x", &json!({"r": 0.1}), Some(4));
        let c = Meta::new("x", &json!({"r": 0.2}), Some(3));
        assert_eq!(a.config_hash, b.config_hash);
        assert_ne!(a.config_hash, c.config_hash);
        assert!(a.csv_header().contains("seed=3"));
    }

    #[test]
    fn usage_errors_exit_two() {
        let e = check("--r", 0.7, false, "(0, 0.5)").unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains("--r"));
        assert_eq!(CliError::Check("x".into()).exit_code(), 1);
    }
}
