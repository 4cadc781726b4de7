use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

pub const DEFAULT_REPLICATES: usize = 1000;
pub const DEFAULT_LEVEL: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
}

/// Percentile bootstrap interval of `statistic` over resampled `units`.
///
/// Replicate `r` draws with replacement from RNG stream `r` of `seed`, so
/// the interval depends only on the inputs and the seed.
pub fn bootstrap_interval<T, F>(units: &[T], statistic: F, replicates: usize, level: f64, seed: u64) -> Result<Interval>
where
    T: Sync,
    F: Fn(&[&T]) -> f64 + Sync + Send,
{
    if units.is_empty() {
        return Err(Error::EmptyInput("bootstrap units"));
    }
    if replicates == 0 || !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!(
            "bootstrap needs replicates >= 1 and 0 < level < 1 (got {replicates}, {level})"
        )));
    }
    let n = units.len();
    let mut stats = par::map_range(replicates, |r| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64);
        let sample: Vec<&T> = (0..n).map(|_| &units[rng.random_range(0..n)]).collect();
        statistic(&sample)
    });
    stats.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok(Interval { low: quantile(&stats, tail), high: quantile(&stats, 1.0 - tail) })
}

/// Interval for the mean of `values`.
pub fn bootstrap_mean(values: &[f64], replicates: usize, level: f64, seed: u64) -> Result<Interval> {
    bootstrap_interval(values, |s| s.iter().copied().sum::<f64>() / s.len() as f64, replicates, level, seed)
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
