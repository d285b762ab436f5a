//! Shared inputs for the benchmarks.

/// `n` points `(s, h, h')` on a deterministic scrambled grid with s in [0, 5).
pub fn kernel_points(n: usize) -> Vec<(f64, f64, f64)> {
    let g = 0.618_033_988_749_894_9;
    (0..n)
        .map(|i| {
            let u = (i as f64 * g).fract();
            let v = (i as f64 * g * g).fract();
            let w = (i as f64 * 0.754_877_666_246_692_7).fract();
            (5.0 * u, 2.0 * v - 1.0, 2.0 * w - 1.0)
        })
        .collect()
}

/// Irrational-looking directions in (0, 2π).
pub fn angles(n: usize) -> Vec<f64> {
    (1..=n)
        .map(|i| (i as f64 * 0.381_966_011_250_105).fract() * std::f64::consts::TAU)
        .collect()
}
