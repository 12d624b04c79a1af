//! A-priori sample-size search using exact noncentral t and F power.
//!
//! Two-sample t (two-tailed): per-group n, df = 2n − 2, ncp = d·√(n/2).
//!
//! One-way repeated-measures ANOVA, within-subject effect with m levels:
//! df₁ = (m − 1)·ε, df₂ = (N − 1)(m − 1)·ε, λ = f²·N·m·ε / (1 − ρ).

use serde::{Deserialize, Serialize};

use super::distributions::{
    f_upper_quantile, noncentral_f_sf, noncentral_t_cdf, t_upper_quantile,
};
use crate::error::{Error, Result};

const MAX_N: usize = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "design", rename_all = "snake_case")]
pub enum PowerDesign {
    TwoSampleT,
    RmAnovaWithin {
        measurements: usize,
        rho: f64,
        epsilon: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerRequest {
    pub design: PowerDesign,
    /// Cohen's d for the t design, Cohen's f for the ANOVA design.
    pub effect: f64,
    pub alpha: f64,
    pub power: f64,
}

impl PowerRequest {
    pub fn two_sample_t(d: f64, alpha: f64, power: f64) -> Self {
        PowerRequest {
            design: PowerDesign::TwoSampleT,
            effect: d,
            alpha,
            power,
        }
    }

    /// ρ = 0.5 and ε = 1 unless overridden.
    pub fn rm_anova(f: f64, measurements: usize, alpha: f64, power: f64) -> Self {
        PowerRequest {
            design: PowerDesign::RmAnovaWithin {
                measurements,
                rho: 0.5,
                epsilon: 1.0,
            },
            effect: f,
            alpha,
            power,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.effect > 0.0) || !self.effect.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "effect size must be positive, got {}; target power is unreachable",
                self.effect
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.power > 0.0 && self.power < 1.0) {
            return Err(Error::InvalidArgument(format!("power must lie in (0, 1), got {}", self.power)));
        }
        if let PowerDesign::RmAnovaWithin { measurements, rho, epsilon } = self.design {
            if measurements < 2 {
                return Err(Error::InvalidArgument("need at least 2 measurements".into()));
            }
            if !(rho > -1.0 && rho < 1.0) {
                return Err(Error::InvalidArgument(format!("rho must lie in (-1, 1), got {rho}")));
            }
            let lower = 1.0 / (measurements - 1) as f64;
            if !(epsilon >= lower - 1e-12 && epsilon <= 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "epsilon must lie in [{lower}, 1], got {epsilon}"
                )));
            }
        }
        Ok(())
    }

    /// Smallest unit count the design admits (per group for t, subjects for rm).
    fn min_units(&self) -> usize {
        2
    }

    /// Achieved power for `units` (per-group n for t, total N for rm).
    pub fn power_at(&self, units: usize) -> f64 {
        match self.design {
            PowerDesign::TwoSampleT => two_sample_t_power(self.effect, units, self.alpha),
            PowerDesign::RmAnovaWithin { measurements, rho, epsilon } => {
                rm_anova_power(self.effect, units, measurements, rho, epsilon, self.alpha)
            }
        }
    }

    fn total(&self, units: usize) -> usize {
        match self.design {
            PowerDesign::TwoSampleT => 2 * units,
            PowerDesign::RmAnovaWithin { .. } => units,
        }
    }
}

pub fn two_sample_t_power(d: f64, n_per_group: usize, alpha: f64) -> f64 {
    let n = n_per_group as f64;
    let df = 2.0 * n - 2.0;
    let ncp = d * (n / 2.0).sqrt();
    let crit = t_upper_quantile(alpha / 2.0, df);
    (1.0 - noncentral_t_cdf(crit, df, ncp)) + noncentral_t_cdf(-crit, df, ncp)
}

pub fn rm_anova_power(f: f64, subjects: usize, measurements: usize, rho: f64, epsilon: f64, alpha: f64) -> f64 {
    let n = subjects as f64;
    let m = measurements as f64;
    let d1 = (m - 1.0) * epsilon;
    let d2 = (n - 1.0) * (m - 1.0) * epsilon;
    let lambda = f * f * n * m * epsilon / (1.0 - rho);
    let crit = f_upper_quantile(alpha, d1, d2);
    noncentral_f_sf(crit, d1, d2, lambda)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerResult {
    /// Required total sample size.
    pub total_n: usize,
    pub achieved_power: f64,
}

/// Smallest total sample size reaching the requested power.
pub fn power_n(req: &PowerRequest) -> Result<PowerResult> {
    req.validate()?;
    let reaches = |units: usize| req.power_at(units) >= req.power;

    let mut lo = req.min_units();
    if reaches(lo) {
        return Ok(PowerResult {
            total_n: req.total(lo),
            achieved_power: req.power_at(lo),
        });
    }
    let mut hi = lo * 2;
    while !reaches(hi) {
        lo = hi;
        hi *= 2;
        if hi > MAX_N {
            return Err(Error::InvalidArgument(
                "target power is unreachable within 50 million units".into(),
            ));
        }
    }
    // invariant: !reaches(lo) && reaches(hi)
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if reaches(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(PowerResult {
        total_n: req.total(hi),
        achieved_power: req.power_at(hi),
    })
}
