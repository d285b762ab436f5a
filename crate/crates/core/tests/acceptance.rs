//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Runs the full scale. Set `LORENTZ_ACCEPTANCE=quick` for the reduced
//! sample counts; tolerances are the same at both scales.

use lorentz_core::verify::{criterion, Level};

fn main() {
    let level = match std::env::var("LORENTZ_ACCEPTANCE").as_deref() {
        Ok("quick") => Level::Quick,
        _ => Level::Full,
    };
    let only: Option<Vec<u8>> = std::env::var("LORENTZ_CRITERIA")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    println!("acceptance suite, level {level:?}");
    let mut failed = Vec::new();
    for id in 1..=13u8 {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let check = criterion(id, level).expect("criterion id in range");
        println!("{}", check.line());
        if !check.passed {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
