use serde::{Deserialize, Serialize};

use super::mean;
use crate::error::{Error, Result};

/// Critical value used for the Fisher interval.
const Z_95: f64 = 1.96;

pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(Error::InsufficientData("correlation needs at least 3 pairs".into()));
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(Error::ZeroVariance("correlation input".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// 95% interval for r via the Fisher z transform.
pub fn fisher_ci(r: f64, n: usize) -> Result<(f64, f64)> {
    if !(r.abs() < 1.0) {
        return Err(Error::InvalidArgument(format!("|r| must be below 1, got {r}")));
    }
    if n < 4 {
        return Err(Error::InsufficientData("Fisher interval needs n >= 4".into()));
    }
    let z = r.atanh();
    let half = Z_95 / ((n - 3) as f64).sqrt();
    Ok(((z - half).tanh(), (z + half).tanh()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEntry {
    pub a: String,
    pub b: String,
    pub r: f64,
    pub lower: f64,
    pub upper: f64,
    pub n: usize,
}

/// Pairwise correlations (upper triangle, column order) with Fisher CIs.
pub fn correlation_table(columns: &[(String, Vec<f64>)]) -> Result<Vec<CorrelationEntry>> {
    let mut out = Vec::new();
    for (i, (name_a, a)) in columns.iter().enumerate() {
        for (name_b, b) in &columns[i + 1..] {
            let r = pearson_r(a, b)?;
            let (lower, upper) = if r.abs() < 1.0 {
                fisher_ci(r, a.len())?
            } else {
                (r, r)
            };
            out.push(CorrelationEntry {
                a: name_a.clone(),
                b: name_b.clone(),
                r,
                lower,
                upper,
                n: a.len(),
            });
        }
    }
    Ok(out)
}
