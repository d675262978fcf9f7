//! Uniform grids.

/// `n` evenly spaced points from `lo` to `hi` inclusive. The last point is
/// exactly `hi`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (n - 1) as f64;
            (0..n)
                .map(|i| if i + 1 == n { hi } else { lo + step * i as f64 })
                .collect()
        }
    }
}

/// `n` points of a periodic grid on `[lo, lo + period)`.
pub fn periodic(lo: f64, period: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + period * i as f64 / n as f64).collect()
}
