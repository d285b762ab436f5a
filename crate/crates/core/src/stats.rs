//! Goodness-of-fit helpers.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Minimum expected count per bin after merging.
pub const MIN_EXPECTED: f64 = 5.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Chi2 {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Bins left after merging sparse ones.
    pub bins: usize,
    /// Observed minus expected over expected, per merged bin.
    pub worst_pull: f64,
}

impl Chi2 {
    pub fn passes(&self, level: f64) -> bool {
        self.p_value > level
    }
}

/// Pearson χ² of `observed` counts against `expected` counts with the same
/// total. Consecutive bins are merged until each expected count reaches
/// [`MIN_EXPECTED`].
pub fn chi2_test(observed: &[f64], expected: &[f64]) -> Chi2 {
    assert_eq!(observed.len(), expected.len());
    let mut groups: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (&ob, &ex) in observed.iter().zip(expected) {
        o += ob;
        e += ex;
        if e >= MIN_EXPECTED {
            groups.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        match groups.last_mut() {
            Some(last) => {
                last.0 += o;
                last.1 += e;
            }
            None => groups.push((o, e)),
        }
    }
    let mut stat = 0.0;
    let mut worst: f64 = 0.0;
    for &(o, e) in &groups {
        if e > 0.0 {
            stat += (o - e) * (o - e) / e;
            worst = worst.max(((o - e) / e.sqrt()).abs());
        } else if o > 0.0 {
            stat = f64::INFINITY;
        }
    }
    let dof = groups.len().saturating_sub(1).max(1);
    let p_value = if stat.is_finite() {
        ChiSquared::new(dof as f64)
            .map(|d| 1.0 - d.cdf(stat))
            .unwrap_or(0.0)
    } else {
        0.0
    };
    Chi2 {
        statistic: stat,
        dof,
        p_value,
        bins: groups.len(),
        worst_pull: worst,
    }
}

/// χ² of counts against bin probabilities.
pub fn chi2_against_probabilities(counts: &[f64], probs: &[f64]) -> Chi2 {
    let n: f64 = counts.iter().sum();
    let expected: Vec<f64> = probs.iter().map(|p| p * n).collect();
    chi2_test(counts, &expected)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_fit() {
        let c = chi2_test(&[10.0, 20.0, 30.0], &[10.0, 20.0, 30.0]);
        assert_eq!(c.statistic, 0.0);
        assert!((c.p_value - 1.0).abs() < 1e-12);
        assert_eq!(c.dof, 2);
    }

    #[test]
    fn merges_sparse_bins() {
        let c = chi2_test(&[1.0, 2.0, 3.0, 10.0], &[1.0, 2.0, 3.0, 10.0]);
        assert_eq!(c.bins, 2);
    }

    #[test]
    fn bad_fit_rejected() {
        let c = chi2_test(&[100.0, 0.0], &[50.0, 50.0]);
        assert!(c.p_value < 1e-10);
    }

    #[test]
    fn slope() {
        let x = [1.0, 10.0, 100.0];
        let y = [2.0, 200.0, 20000.0];
        assert!((log_log_slope(&x, &y) - 2.0).abs() < 1e-12);
    }
}
