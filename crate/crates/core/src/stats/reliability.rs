use nalgebra::DMatrix;

use super::sample_var;
use crate::error::{Error, Result};

/// Cronbach's alpha over item columns (each inner vec is one item's ratings).
pub fn cronbach_alpha(items: &[Vec<f64>]) -> Result<f64> {
    let k = items.len();
    if k < 2 {
        return Err(Error::InsufficientData("alpha needs at least 2 items".into()));
    }
    let n = items[0].len();
    if n < 3 {
        return Err(Error::InsufficientData("alpha needs at least 3 observations".into()));
    }
    if items.iter().any(|it| it.len() != n) {
        return Err(Error::InvalidArgument("items have different lengths".into()));
    }
    let item_var: f64 = items.iter().map(|it| sample_var(it)).sum();
    let totals: Vec<f64> = (0..n).map(|i| items.iter().map(|it| it[i]).sum()).collect();
    let total_var = sample_var(&totals);
    if total_var <= 0.0 {
        return Err(Error::ZeroVariance("item totals".into()));
    }
    Ok(k as f64 / (k - 1) as f64 * (1.0 - item_var / total_var))
}

/// Alpha from an item covariance matrix: the variance of the sum is the sum
/// of all covariance entries.
pub fn cronbach_alpha_from_covariance(cov: &DMatrix<f64>) -> Result<f64> {
    let k = cov.nrows();
    if k < 2 || cov.ncols() != k {
        return Err(Error::InvalidArgument("need a square covariance matrix of at least 2 items".into()));
    }
    let total = cov.sum();
    if total <= 0.0 {
        return Err(Error::ZeroVariance("item totals".into()));
    }
    Ok(k as f64 / (k - 1) as f64 * (1.0 - cov.trace() / total))
}

/// Covariance matrix Σ_ij = r_ij · s_i · s_j from SDs and a correlation matrix.
pub fn covariance_from_correlations(sds: &[f64], corr: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(sds.len(), sds.len(), |i, j| corr[(i, j)] * sds[i] * sds[j])
}
