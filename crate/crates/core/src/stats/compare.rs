use serde::{Deserialize, Serialize};

use super::bootstrap::{bootstrap_d_ci, BootstrapCi, BootstrapConfig};
use super::distributions::t_two_tailed_p;
use super::{mean, sample_sd};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
}

impl GroupSummary {
    pub fn new(n: usize, mean: f64, sd: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!("group size {n} is below 2")));
        }
        if !(sd >= 0.0) || !mean.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "invalid group moments (mean {mean}, sd {sd})"
            )));
        }
        Ok(GroupSummary { n, mean, sd })
    }

    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "a group needs at least 2 values, got {}",
                values.len()
            )));
        }
        GroupSummary::new(values.len(), mean(values), sample_sd(values))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchTest {
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

/// Welch's unequal-variance t-test with Welch–Satterthwaite df.
pub fn welch_t(a: &GroupSummary, b: &GroupSummary) -> Result<WelchTest> {
    let va = a.sd * a.sd / a.n as f64;
    let vb = b.sd * b.sd / b.n as f64;
    let se2 = va + vb;
    if se2 <= 0.0 {
        return Err(Error::ZeroVariance("both groups".into()));
    }
    let t = (a.mean - b.mean) / se2.sqrt();
    let df = se2 * se2 / (va * va / (a.n - 1) as f64 + vb * vb / (b.n - 1) as f64);
    Ok(WelchTest {
        t,
        df,
        p: t_two_tailed_p(t, df),
    })
}

/// Standardized mean difference a − b over √((s_a² + s_b²)/2).
pub fn cohens_d(a: &GroupSummary, b: &GroupSummary) -> Result<f64> {
    let pooled = ((a.sd * a.sd + b.sd * b.sd) / 2.0).sqrt();
    if pooled <= 0.0 {
        return Err(Error::ZeroVariance("pooled standard deviation".into()));
    }
    Ok((a.mean - b.mean) / pooled)
}

pub(crate) fn cohens_d_values(a: &[f64], b: &[f64]) -> Option<f64> {
    let (ma, mb) = (mean(a), mean(b));
    let va = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / (a.len() - 1) as f64;
    let vb = b.iter().map(|x| (x - mb).powi(2)).sum::<f64>() / (b.len() - 1) as f64;
    let pooled = ((va + vb) / 2.0).sqrt();
    (pooled > 0.0).then(|| (ma - mb) / pooled)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub group_a: GroupSummary,
    pub group_b: GroupSummary,
    pub t: f64,
    pub df: f64,
    pub p: f64,
    pub d: f64,
    /// Present when the comparison was computed from raw values.
    pub d_ci: Option<BootstrapCi>,
}

/// Comparison from published moments alone; no CI is available.
pub fn compare_summaries(a: &GroupSummary, b: &GroupSummary) -> Result<ComparisonReport> {
    let welch = welch_t(a, b)?;
    Ok(ComparisonReport {
        group_a: *a,
        group_b: *b,
        t: welch.t,
        df: welch.df,
        p: welch.p,
        d: cohens_d(a, b)?,
        d_ci: None,
    })
}

pub fn compare_samples(
    a: &[f64],
    b: &[f64],
    bootstrap: Option<&BootstrapConfig>,
) -> Result<ComparisonReport> {
    let mut report = compare_summaries(&GroupSummary::from_values(a)?, &GroupSummary::from_values(b)?)?;
    if let Some(config) = bootstrap {
        report.d_ci = Some(bootstrap_d_ci(a, b, config)?);
    }
    Ok(report)
}
