use nalgebra::DVector;

use crate::error::{check_len, Result};

/// Threshold on `|f_j|` used when counting nonzeros.
pub const NONZERO_THRESHOLD: f64 = 1e-6;

/// `(1/len) ||f_hat - f_true||^2`
pub fn mse(f_hat: &DVector<f64>, f_true: &DVector<f64>) -> Result<f64> {
    check_len("mse", f_true.len(), f_hat.len())?;
    if f_true.is_empty() {
        return Ok(0.0);
    }
    Ok((f_hat - f_true).norm_squared() / f_true.len() as f64)
}

/// Number of entries with `|f_j| > threshold`.
pub fn count_nonzeros(f: &DVector<f64>, threshold: f64) -> usize {
    f.iter().filter(|v| v.abs() > threshold).count()
}

/// Sample mean and standard deviation (`n - 1` denominator; zero for a single
/// value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
