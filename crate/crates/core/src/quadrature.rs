//! Composite Simpson quadrature for smooth integrands.

use crate::error::{LanError, Result};

/// Default number of Simpson intervals per signal period.
pub const DEFAULT_POINTS_PER_PERIOD: usize = 4096;

/// Composite Simpson rule on `[a, b]` with `intervals` sub-intervals
/// (rounded up to the next even number).
pub fn simpson<F>(a: f64, b: f64, intervals: usize, mut f: F) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    if intervals == 0 {
        return Err(LanError::Quadrature("zero intervals".into()));
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(LanError::Quadrature(format!(
            "non-finite bounds [{a}, {b}]"
        )));
    }
    let n = intervals + intervals % 2;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    let value = acc * h / 3.0;
    if !value.is_finite() {
        return Err(LanError::Quadrature(format!(
            "integrand is not integrable on [{a}, {b}]"
        )));
    }
    Ok(value)
}

/// Simpson nodes and weights on `[a, b]`, for integrating several
/// integrands that share expensive evaluations.
pub fn simpson_rule(a: f64, b: f64, intervals: usize) -> Vec<(f64, f64)> {
    let n = (intervals + intervals % 2).max(2);
    let h = (b - a) / n as f64;
    (0..=n)
        .map(|i| {
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            (a + i as f64 * h, w * h / 3.0)
        })
        .collect()
}
