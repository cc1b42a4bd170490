use serde::Serialize;

use super::StatError;

const LAMBDA_BRACKET: (f64, f64) = (-5.0, 5.0);
const GOLDEN_TOL: f64 = 1e-6;

fn yj_one(y: f64, lambda: f64) -> f64 {
    if y >= 0.0 {
        if lambda.abs() < 1e-12 {
            y.ln_1p()
        } else {
            ((y + 1.0).powf(lambda) - 1.0) / lambda
        }
    } else if (lambda - 2.0).abs() < 1e-12 {
        -(-y).ln_1p()
    } else {
        -((1.0 - y).powf(2.0 - lambda) - 1.0) / (2.0 - lambda)
    }
}

fn check_finite(x: &[f64]) -> Result<(), StatError> {
    match x.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(StatError::NonFinite(format!("value at row {i}"))),
        None => Ok(()),
    }
}

/// Normal profile log-likelihood of the transformed data.
pub fn yeo_johnson_loglik(x: &[f64], lambda: f64) -> f64 {
    let n = x.len() as f64;
    let t: Vec<f64> = x.iter().map(|&y| yj_one(y, lambda)).collect();
    let mean = t.iter().sum::<f64>() / n;
    let var = t.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let jac: f64 = x.iter().map(|&y| y.signum() * y.abs().ln_1p()).sum();
    -0.5 * n * var.ln() + (lambda - 1.0) * jac
}

fn golden_max<F: Fn(f64) -> f64>(f: F, (mut a, mut b): (f64, f64), tol: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    (a + b) / 2.0
}

/// Yeo-Johnson transform. Without `lambda`, picks the maximizer of the
/// profile log-likelihood on [-5, 5].
pub fn yeo_johnson(x: &[f64], lambda: Option<f64>) -> Result<(Vec<f64>, f64), StatError> {
    check_finite(x)?;
    let lambda = match lambda {
        Some(l) if l.is_finite() => l,
        Some(_) => return Err(StatError::NonFinite("lambda".into())),
        None => {
            let distinct = x.iter().any(|&v| v != x[0]);
            if x.len() < 2 || !distinct {
                1.0
            } else {
                golden_max(|l| yeo_johnson_loglik(x, l), LAMBDA_BRACKET, GOLDEN_TOL)
            }
        }
    };
    Ok((x.iter().map(|&y| yj_one(y, lambda)).collect(), lambda))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moments {
    pub mean: f64,
    pub sd: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

/// Mean, sample sd, and moment-based skewness and excess kurtosis.
pub fn moments(x: &[f64]) -> Moments {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let m = |k: i32| x.iter().map(|v| (v - mean).powi(k)).sum::<f64>() / n;
    let (m2, m3, m4) = (m(2), m(3), m(4));
    let sd = if n > 1.0 { (m2 * n / (n - 1.0)).sqrt() } else { 0.0 };
    let (skewness, excess_kurtosis) = if m2 > 0.0 {
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    } else {
        (0.0, 0.0)
    };
    Moments {
        mean,
        sd,
        skewness,
        excess_kurtosis,
    }
}

/// Centers to mean 0 and scales to sample sd 1; returns moments of the
/// result for normality diagnostics.
pub fn standardize(name: &str, x: &[f64]) -> Result<(Vec<f64>, Moments), StatError> {
    check_finite(x)?;
    if x.len() < 2 || x.iter().all(|&v| v == x[0]) {
        return Err(StatError::ConstantColumn(name.to_string()));
    }
    let m = moments(x);
    let out: Vec<f64> = x.iter().map(|v| (v - m.mean) / m.sd).collect();
    let after = moments(&out);
    Ok((out, after))
}

pub fn min_max(name: &str, x: &[f64]) -> Result<Vec<f64>, StatError> {
    check_finite(x)?;
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(StatError::ConstantColumn(name.to_string()));
    }
    Ok(x.iter().map(|v| (v - lo) / (hi - lo)).collect())
}
