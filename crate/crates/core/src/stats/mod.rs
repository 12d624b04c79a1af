//! Statistical procedures: two-group comparisons, bootstrap intervals,
//! correlations, reliability, least squares, power analysis and density
//! summaries.

pub mod bootstrap;
pub mod compare;
pub mod correlation;
pub mod density;
pub mod distributions;
pub mod ols;
pub mod power;
pub mod reliability;

pub use bootstrap::{bootstrap_d_ci, BootstrapCi, BootstrapConfig};
pub use compare::{cohens_d, compare_samples, compare_summaries, welch_t, ComparisonReport, GroupSummary, WelchTest};
pub use correlation::{correlation_table, fisher_ci, pearson_r, CorrelationEntry};
pub use density::{density_summary, DensitySummary};
pub use ols::{ols, Design, OlsFit};
pub use power::{power_n, PowerDesign, PowerRequest, PowerResult};
pub use reliability::{cronbach_alpha, cronbach_alpha_from_covariance};

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub(crate) fn sample_var(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64
}

pub(crate) fn sample_sd(values: &[f64]) -> f64 {
    sample_var(values).sqrt()
}

/// Linear-interpolation quantile of sorted data (R type 7).
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}
