//! Percentile bootstrap for Cohen's d.
//!
//! Replicate `r` draws from its own ChaCha stream (`seed`, stream `r`), so
//! the interval is identical no matter how replicates are spread over
//! threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::compare::cohens_d_values;
use super::quantile_sorted;
use crate::error::{Error, Result};

pub const DEFAULT_REPLICATES: usize = 5000;
pub const MIN_REPLICATES: usize = 1000;
/// Redraw budget for a replicate whose resamples have zero pooled variance.
pub const MAX_REDRAWS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            replicates: DEFAULT_REPLICATES,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub replicates: usize,
    /// Degenerate resamples that were thrown away and redrawn.
    pub redraws: usize,
}

fn resample_into(rng: &mut ChaCha8Rng, source: &[f64], out: &mut Vec<f64>) {
    out.clear();
    out.extend((0..source.len()).map(|_| source[rng.random_range(0..source.len())]));
}

fn replicate(a: &[f64], b: &[f64], seed: u64, index: usize) -> Result<(f64, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let mut ra = Vec::with_capacity(a.len());
    let mut rb = Vec::with_capacity(b.len());
    for redraws in 0..=MAX_REDRAWS {
        resample_into(&mut rng, a, &mut ra);
        resample_into(&mut rng, b, &mut rb);
        if let Some(d) = cohens_d_values(&ra, &rb) {
            return Ok((d, redraws));
        }
    }
    Err(Error::ZeroVariance(format!(
        "bootstrap replicate {index}: {MAX_REDRAWS} consecutive degenerate resamples"
    )))
}

/// 95% percentile interval for d(a, b) from `config.replicates` resamples
/// drawn with replacement within each group.
pub fn bootstrap_d_ci(a: &[f64], b: &[f64], config: &BootstrapConfig) -> Result<BootstrapCi> {
    if config.replicates < MIN_REPLICATES {
        return Err(Error::InvalidArgument(format!(
            "at least {MIN_REPLICATES} bootstrap replicates are required, got {}",
            config.replicates
        )));
    }
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InsufficientData("bootstrap needs at least 2 values per group".into()));
    }
    if cohens_d_values(a, b).is_none() {
        return Err(Error::ZeroVariance("bootstrap input samples".into()));
    }

    let draws: Vec<(f64, usize)> = (0..config.replicates)
        .into_par_iter()
        .map(|r| replicate(a, b, config.seed, r))
        .collect::<Result<_>>()?;
    let redraws = draws.iter().map(|(_, r)| r).sum();
    let mut stats: Vec<f64> = draws.into_iter().map(|(d, _)| d).collect();
    stats.sort_by(f64::total_cmp);
    Ok(BootstrapCi {
        lower: quantile_sorted(&stats, 0.025),
        upper: quantile_sorted(&stats, 0.975),
        level: 0.95,
        replicates: config.replicates,
        redraws,
    })
}
