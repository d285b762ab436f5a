use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use lorentz_core::verify::VerifyReport;
use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_lorentz-bg"));
    c.env_remove("LORENTZ_BG_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn lorentz-bg")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Data lines of a CSV with `#` metadata lines.
fn data_lines(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).collect()
}

fn has_meta(text: &str) {
    assert!(text.starts_with("# tool=lorentz-bg version="), "{text}");
    assert!(text.contains("# config_hash=sha256:"));
    assert!(text.contains("# seed="));
}

#[test]
fn kernel_eval_reference_value() {
    let o = run(&[
        "kernel", "eval", "--s", "1.0", "--h", "0.5", "--hprime", "0.0",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(
        stdout(&o).lines().any(|l| l == "P=0.303964"),
        "{}",
        stdout(&o)
    );
}

#[test]
fn unknown_flag_is_usage_error() {
    let o = run(&["kernel", "eval", "--nope", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
}

#[test]
fn out_of_range_value_names_flag_and_range() {
    let o = run(&[
        "billiard", "transfer", "--hprime", "0.1", "--theta", "0.4", "--r", "0.7",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("--r") && e.contains("(0, 0.5)"), "{e}");
    let o = run(&["kernel", "eval", "--s", "1", "--h", "-1.5", "--hprime", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--h"));
}

#[test]
fn help_documents_flags() {
    let o = run(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    let h = stdout(&o);
    for w in [
        "--threads",
        "--output-dir",
        "billiard",
        "cf",
        "kernel",
        "mc",
        "solve",
        "verify",
        "plot-data",
    ] {
        assert!(h.contains(w), "{w} missing from help");
    }
    let o = run(&["billiard", "trace", "--help"]);
    for w in ["--x", "--y", "--theta", "--r", "--n"] {
        assert!(stdout(&o).contains(w));
    }
}

#[test]
fn billiard_trace_csv() {
    let o = run(&[
        "billiard", "trace", "--x", "0.5", "--y", "0.2", "--theta", "0.3", "--r", "0.1", "--n", "5",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    has_meta(&text);
    let lines = data_lines(&text);
    assert_eq!(lines[0], "j,t,x1,x2,theta_out,h");
    assert_eq!(lines.len(), 6);
    let mut last_t = 0.0;
    for l in &lines[1..] {
        let v: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
        assert!(v[1] > last_t);
        last_t = v[1];
        assert!(v[5].abs() <= 1.0);
    }
}

#[test]
fn billiard_transfer_csv() {
    let o = run(&[
        "billiard", "transfer", "--hprime", "-0.3", "--theta", "0.5", "--r", "0.01",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let lines = data_lines(&text);
    assert_eq!(lines[0], "S,h");
    let v: Vec<f64> = lines[1].split(',').map(|x| x.parse().unwrap()).collect();
    assert!(v[0] > 0.0 && v[1].abs() <= 1.0);
}

#[test]
fn cf_params_json_fields() {
    let o = run(&["cf", "params", "--theta", "0.5", "--r", "0.01"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    for k in ["A", "B", "Q", "Qbar", "sigma", "D", "Qprime"] {
        assert!(v.get(k).is_some(), "missing {k}");
    }
    let (a, b, q, qbar) = (
        v["A"].as_f64().unwrap(),
        v["B"].as_f64().unwrap(),
        v["Q"].as_f64().unwrap(),
        v["Qbar"].as_f64().unwrap(),
    );
    assert!((qbar * (1.0 - a) + q * (1.0 - b) - 1.0).abs() < 1e-12);
    assert_eq!(v["meta"]["tool"], "lorentz-bg");
}

#[test]
fn cf_expand_csv() {
    let o = run(&[
        "cf",
        "expand",
        "--alpha",
        "0.6180339887498949",
        "--eps",
        "1e-4",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let lines = data_lines(&text);
    assert_eq!(lines[0], "n,digit,p,q,d");
    assert!(lines[3..].iter().all(|l| l.split(',').nth(1) == Some("1")));
}

#[test]
fn kernel_tabulate_and_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let o = run(&[
        "--output-dir",
        d,
        "kernel",
        "tabulate",
        "--what",
        "Pi",
        "--grid",
        "3,4",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("kernel_table.csv")).unwrap();
    has_meta(&text);
    assert_eq!(data_lines(&text).len(), 1 + 16);

    let input = dir.path().join("kernel_table.csv");
    let o = run(&[
        "plot-data",
        "--input",
        input.to_str().unwrap(),
        "--id-cols",
        "h,hprime",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let long = stdout(&o);
    has_meta(&long);
    let lines = data_lines(&long);
    assert_eq!(lines[0], "h,hprime,variable,value");
    assert_eq!(lines.len(), 1 + 16);
    assert!(lines[1..].iter().all(|l| l.contains(",Pi,")));

    let o = run(&[
        "plot-data",
        "--input",
        input.to_str().unwrap(),
        "--id-cols",
        "nope",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

const RUN: &str = r#"{
  "grids": {"nx1": 8, "nx2": 1, "nomega": 16, "ns": 17, "nh": 8},
  "cfl": 0.5,
  "t_end": 0.5,
  "initial": {"kind": "cosine", "params": {"amplitude": 0.5}},
  "reports": {"every": 0.25, "entropy": ["zlogz", "square"]}
}"#;

#[test]
fn solve_outputs_are_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(&cfg, RUN).unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let o = run(&[
        "--threads",
        "1",
        "--output-dir",
        a.to_str().unwrap(),
        "solve",
        "--config",
        cfg.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = bin()
        .env("LORENTZ_BG_THREADS", "3")
        .args([
            "--output-dir",
            b.to_str().unwrap(),
            "solve",
            "--config",
            cfg.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let (fa, fb) = (read_all(&a), read_all(&b));
    let names: Vec<&str> = fa.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(
        names,
        [
            "diagnostics.csv",
            "run.json",
            "snapshot_0000.csv.gz",
            "snapshot_0001.csv.gz",
            "snapshot_0002.csv.gz"
        ]
    );
    assert_eq!(fa, fb);

    let diag = String::from_utf8(fa[0].1.clone()).unwrap();
    has_meta(&diag);
    let lines = data_lines(&diag);
    assert_eq!(
        lines[0],
        "t,mass,H_zlogz,D_zlogz,H_sq,D_sq,dist_to_CE,coarse_dist,lower_bound"
    );
    let rows: Vec<Vec<f64>> = lines[1..]
        .iter()
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 3);
    let m0 = rows[0][1];
    for r in &rows {
        assert!((r[1] - m0).abs() < 1e-12 * m0);
    }
    assert!(rows[2][2] < rows[1][2] && rows[1][2] < rows[0][2]);
    assert!(rows[2][4] < rows[1][4] && rows[1][4] < rows[0][4]);

    let mut snap = String::new();
    use std::io::Read;
    flate2::read::GzDecoder::new(&fa[3].1[..])
        .read_to_string(&mut snap)
        .unwrap();
    has_meta(&snap);
    let lines = data_lines(&snap);
    assert_eq!(lines[0], "x1,x2,theta,s,h,F");
    assert_eq!(lines.len(), 1 + 8 * 16 * 17 * 8);
}

#[test]
fn solve_rejects_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(&cfg, RUN.replace("\"cfl\": 0.5", "\"cfl\": 3.0")).unwrap();
    let o = run(&[
        "--output-dir",
        dir.path().to_str().unwrap(),
        "solve",
        "--config",
        cfg.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("cfl"));
    fs::write(&cfg, RUN.replace("cosine", "triangle")).unwrap();
    let o = run(&[
        "--output-dir",
        dir.path().to_str().unwrap(),
        "solve",
        "--config",
        cfg.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("diagnostics.csv").exists());
}

#[test]
fn markov_ensemble_is_reproducible_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let out = |sub: &str, threads: &str| {
        let p = dir.path().join(sub);
        let o = run(&[
            "--threads",
            threads,
            "--output-dir",
            p.to_str().unwrap(),
            "mc",
            "markov",
            "--n",
            "20000",
            "--tend",
            "2",
            "--snapshots",
            "2",
            "--seed",
            "9",
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        read_all(&p)
    };
    let a = out("a", "1");
    let b = out("b", "4");
    assert_eq!(a, b);
    let names: Vec<&str> = a.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["markov.json", "markov_sh.csv", "markov_xw.csv"]);
    let side: Value = serde_json::from_slice(&a[0].1).unwrap();
    assert_eq!(side["meta"]["seed"], 9);
    assert_eq!(side["particles"], 20000);
}

#[test]
fn billiard_ensemble_and_hypothesis_h() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let o = run(&[
        "--output-dir",
        d,
        "mc",
        "billiard",
        "--r",
        "0.05",
        "--n",
        "500",
        "--tend",
        "0.5",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("billiard_xw.csv")).unwrap();
    let total: u64 = data_lines(&text)[1..]
        .iter()
        .map(|l| l.rsplit(',').next().unwrap().parse::<u64>().unwrap())
        .sum();
    let side: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("billiard.json")).unwrap())
            .unwrap();
    assert_eq!(total + side["lost"].as_u64().unwrap(), 500);

    let o = run(&[
        "--output-dir",
        d,
        "mc",
        "hypothesis-h",
        "--r",
        "0.02",
        "--n",
        "50",
        "--collisions",
        "20",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("hypothesis_h.json")).unwrap())
            .unwrap();
    assert!(v["pairs"].as_u64().unwrap() > 0);
}

#[test]
fn mc_cesaro_commands() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let o = run(&[
        "--output-dir",
        d,
        "mc",
        "kernel-converge",
        "--eps",
        "1e-3,1e-4",
        "--bins",
        "5,5",
        "--per-decade",
        "100",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("kernel_converge.json")).unwrap())
            .unwrap();
    assert_eq!(v["results"].as_array().unwrap().len(), 2);
    let o = run(&[
        "--output-dir",
        d,
        "mc",
        "config-dist",
        "--eps",
        "1e-4",
        "--bins",
        "3",
        "--per-decade",
        "200",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("config_dist.csv")).unwrap();
    assert_eq!(data_lines(&text).len(), 1 + 54);
}

#[test]
fn verify_subset_report_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let o = run(&[
        "--output-dir",
        d,
        "verify",
        "all",
        "--quick",
        "--only",
        "3,4",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let text = fs::read_to_string(dir.path().join("verify_report.json")).unwrap();
    let mut v: Value = serde_json::from_str(&text).unwrap();
    v.as_object_mut().unwrap().remove("meta");
    let report: VerifyReport = serde_json::from_value(v.clone()).unwrap();
    assert_eq!(
        report.checks.iter().map(|c| c.id).collect::<Vec<_>>(),
        [3, 4]
    );
    assert_eq!(serde_json::to_value(&report).unwrap(), v);
    assert!(stdout(&o).contains("2/2 criteria passed"));
    let o = run(&["verify", "all", "--only", "14"]);
    assert_eq!(o.status.code(), Some(2));
}

/// Every criterion appears exactly once, and the exit status reports whether
/// all of them passed.
#[test]
fn verify_all_quick() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let o = run(&["--output-dir", d, "verify", "all", "--quick"]);
    let text = fs::read_to_string(dir.path().join("verify_report.json")).unwrap();
    let mut v: Value = serde_json::from_str(&text).unwrap();
    v.as_object_mut().unwrap().remove("meta");
    let report: VerifyReport = serde_json::from_value(v).unwrap();
    let ids: Vec<u8> = report.checks.iter().map(|c| c.id).collect();
    assert_eq!(ids, (1..=13).collect::<Vec<u8>>());
    assert_eq!(
        stdout(&o)
            .lines()
            .filter(|l| l.starts_with("criterion"))
            .count(),
        13
    );
    let expected = if report.all_passed() { 0 } else { 1 };
    assert_eq!(o.status.code(), Some(expected), "{}", stdout(&o));
}

#[test]
fn kernel_verify_passes() {
    let o = run(&["kernel", "verify"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert_eq!(stdout(&o).matches(" PASS ").count(), 5);
}
