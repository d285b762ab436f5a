//! Constants built from one value of π².

use std::f64::consts::PI;

pub const PI2: f64 = PI * PI;
pub const THREE_OVER_PI2: f64 = 3.0 / PI2;
pub const SIX_OVER_PI2: f64 = 6.0 / PI2;
pub const TWELVE_OVER_PI2: f64 = 12.0 / PI2;
/// Limit of `N(α, ε) / ln(1/ε)` for Lebesgue-almost every α.
pub const LEVY_RATE: f64 = 12.0 * std::f64::consts::LN_2 / PI2;
/// Volume of the region where the configuration density is positive in
/// `(A, B', Q)` coordinates.
pub const MU_ACCEPTANCE: f64 = PI2 / 12.0;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values() {
        assert!((THREE_OVER_PI2 - 0.303_963_550_927_013_3).abs() < 1e-15);
        assert!((TWELVE_OVER_PI2 - 1.215_854_203_708_053).abs() < 1e-14);
        assert!((LEVY_RATE - 0.842_765_913_272).abs() < 1e-9);
    }
}
