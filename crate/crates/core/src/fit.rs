//! Small least-squares helpers for the diagnostics.

use crate::error::{Error, Result};

/// Ordinary least squares `y ≈ a + b x`; returns `(b, a)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidParameter(
            "linear fit needs two or more paired points".into(),
        ));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter(
            "linear fit with coincident abscissae".into(),
        ));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Slope of `y ≈ c x` through the origin.
pub fn slope_through_origin(x: &[f64], y: &[f64]) -> Result<f64> {
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    if x.len() != y.len() || sxx == 0.0 {
        return Err(Error::InvalidParameter(
            "degenerate fit through the origin".into(),
        ));
    }
    Ok(x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / sxx)
}

/// Slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidParameter(
            "log-log fit needs positive data".into(),
        ));
    }
    let lx: alloc::vec::Vec<f64> = x.iter().map(|v| num_traits::Float::ln(*v)).collect();
    let ly: alloc::vec::Vec<f64> = y.iter().map(|v| num_traits::Float::ln(*v)).collect();
    Ok(linear_fit(&lx, &ly)?.0)
}
