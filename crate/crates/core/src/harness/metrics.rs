//! Success-rate arithmetic.
//!
//! Percentages are rounded half-up to one decimal using integer arithmetic,
//! and deltas are differences of the rounded percentages, which is how the
//! reported tables combine them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("no results to summarize")]
    EmptyResults,
    #[error("configuration {0:?} has no runs")]
    NoRuns(String),
    #[error("configuration {0:?} has no tasks")]
    NoTasks(String),
    #[error("configuration {0:?} reports more passes than tasks")]
    TooManyPasses(String),
}

/// Raw pass counts of one configuration, one entry per run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigRuns {
    pub config: String,
    pub total: usize,
    pub per_run_passes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigMetrics {
    pub config: String,
    pub total: usize,
    pub runs: usize,
    /// Mean passes per run, one decimal.
    pub mean_passes: f64,
    /// Success rate in percent, one decimal.
    pub success_rate_pct: f64,
    /// Sample standard deviation of the per-run passes, one decimal.
    pub std_dev: f64,
    pub min: usize,
    pub max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub from: String,
    pub to: String,
    /// Percentage points, one decimal.
    pub pp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub configs: Vec<ConfigMetrics>,
    /// Each configuration against the first one.
    pub deltas: Vec<Delta>,
}

/// `num / den` in tenths, rounded half-up. `den` must be positive.
fn tenths_half_up(num: u128, den: u128) -> u128 {
    (20 * num + den) / (2 * den)
}

fn one_decimal(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

/// Sample (n - 1) standard deviation; zero for a single run.
pub fn sample_std_dev(values: &[usize]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<usize>() as f64 / n;
    let ss: f64 = values.iter().map(|&v| (v as f64 - mean).powi(2)).sum();
    (ss / (n - 1.0)).sqrt()
}

/// Success rate of `passes` out of `total` in percent, rounded half-up to
/// one decimal.
pub fn success_rate_pct(passes: usize, total: usize) -> f64 {
    tenths_half_up(100 * passes as u128, total as u128) as f64 / 10.0
}

pub fn compute_metrics(results: &[ConfigRuns]) -> Result<MetricsSummary, MetricsError> {
    if results.is_empty() {
        return Err(MetricsError::EmptyResults);
    }
    let mut configs = Vec::new();
    let mut rate_tenths = Vec::new();
    for r in results {
        if r.per_run_passes.is_empty() {
            return Err(MetricsError::NoRuns(r.config.clone()));
        }
        if r.total == 0 {
            return Err(MetricsError::NoTasks(r.config.clone()));
        }
        if r.per_run_passes.iter().any(|&p| p > r.total) {
            return Err(MetricsError::TooManyPasses(r.config.clone()));
        }
        let runs = r.per_run_passes.len() as u128;
        let passes: u128 = r.per_run_passes.iter().map(|&p| p as u128).sum();
        let rate = tenths_half_up(100 * passes, r.total as u128 * runs);
        rate_tenths.push(rate as i128);
        configs.push(ConfigMetrics {
            config: r.config.clone(),
            total: r.total,
            runs: r.per_run_passes.len(),
            mean_passes: tenths_half_up(passes, runs) as f64 / 10.0,
            success_rate_pct: rate as f64 / 10.0,
            std_dev: one_decimal(sample_std_dev(&r.per_run_passes)),
            min: *r.per_run_passes.iter().min().expect("nonempty"),
            max: *r.per_run_passes.iter().max().expect("nonempty"),
        });
    }
    let deltas = configs
        .iter()
        .zip(&rate_tenths)
        .skip(1)
        .map(|(c, &t)| Delta {
            from: configs[0].config.clone(),
            to: c.config.clone(),
            pp: (t - rate_tenths[0]) as f64 / 10.0,
        })
        .collect();
    Ok(MetricsSummary { configs, deltas })
}
