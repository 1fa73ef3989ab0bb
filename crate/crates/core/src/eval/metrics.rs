use crate::error::{Error, Result};

fn check(actual: &[f64], predicted: &[f64], min: usize) -> Result<()> {
    if actual.len() != predicted.len() {
        return Err(Error::LengthMismatch(format!(
            "{} actuals but {} predictions",
            actual.len(),
            predicted.len()
        )));
    }
    if actual.len() < min {
        return Err(Error::TooSmall(format!("{} pairs, at least {min} required", actual.len())));
    }
    if actual.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("actuals"));
    }
    if predicted.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("predictions"));
    }
    Ok(())
}

/// Coefficient of determination `1 - Σ(ỹ - y)² / Σ(ȳ - y)²`. Negative for
/// predictors worse than the mean.
pub fn r_squared(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check(actual, predicted, 2)?;
    let mean = actual.iter().sum::<f64>() / actual.len() as f64;
    let ss_tot: f64 = actual.iter().map(|y| (mean - y).powi(2)).sum();
    if !(ss_tot > 0.0) {
        return Err(Error::UndefinedVariance);
    }
    let ss_res: f64 = actual.iter().zip(predicted).map(|(y, p)| (p - y).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Mean absolute error.
pub fn mae(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check(actual, predicted, 1)?;
    Ok(actual.iter().zip(predicted).map(|(y, p)| (p - y).abs()).sum::<f64>() / actual.len() as f64)
}
