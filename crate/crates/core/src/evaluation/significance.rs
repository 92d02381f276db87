//! Two-sided paired sign-flip permutation test.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::metrics::MetricResult;
use crate::rng;
use crate::{Error, Result};

/// Largest query count enumerated exactly.
pub const EXACT_LIMIT: usize = 20;
pub const DEFAULT_RESAMPLES: usize = 100_000;
const DEFAULT_SEED: u64 = 0x5eed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceResult {
    pub p_value: f64,
    /// Mean of `a - b` over queries.
    pub statistic: f64,
    pub n_queries: usize,
    pub method: String,
}

/// Tests `a` against `b` on their shared query set.
pub fn paired_significance(a: &MetricResult, b: &MetricResult) -> Result<SignificanceResult> {
    paired_significance_with(a, b, DEFAULT_RESAMPLES, DEFAULT_SEED)
}

pub fn paired_significance_with(
    a: &MetricResult,
    b: &MetricResult,
    resamples: usize,
    seed: u64,
) -> Result<SignificanceResult> {
    if a.per_query.len() != b.per_query.len() || a.per_query.keys().ne(b.per_query.keys()) {
        return Err(Error::invalid("metric results cover different query sets"));
    }
    let diffs: Vec<f64> = a
        .per_query
        .iter()
        .zip(b.per_query.values())
        .map(|((_, x), y)| x - y)
        .collect();
    let n = diffs.len();
    if n == 0 {
        return Err(Error::invalid("no queries to test"));
    }
    let statistic = diffs.iter().sum::<f64>() / n as f64;
    let (p_value, method) = if n <= EXACT_LIMIT {
        (exact_p(&diffs), "sign-flip permutation, exact".to_string())
    } else {
        if resamples == 0 {
            return Err(Error::config("resamples", "must be at least 1"));
        }
        (
            sampled_p(&diffs, resamples, seed),
            format!("sign-flip permutation, {resamples} resamples"),
        )
    };
    Ok(SignificanceResult {
        p_value,
        statistic,
        n_queries: n,
        method,
    })
}

/// Slack for comparing sums accumulated in different orders.
fn tolerance(diffs: &[f64]) -> f64 {
    1e-12 * diffs.iter().map(|d| d.abs()).sum::<f64>().max(1.0)
}

/// Enumerates all `2^n` sign assignments, walking them in Gray-code order so
/// each step flips one sign.
fn exact_p(diffs: &[f64]) -> f64 {
    let n = diffs.len();
    let observed = diffs.iter().sum::<f64>().abs() - tolerance(diffs);
    let mut signs = vec![1.0f64; n];
    let mut sum: f64 = diffs.iter().sum();
    let mut hits: u64 = u64::from(sum.abs() >= observed);
    for i in 1u64..(1u64 << n) {
        let bit = i.trailing_zeros() as usize;
        signs[bit] = -signs[bit];
        sum += 2.0 * signs[bit] * diffs[bit];
        hits += u64::from(sum.abs() >= observed);
    }
    hits as f64 / (1u64 << n) as f64
}

fn sampled_p(diffs: &[f64], resamples: usize, seed: u64) -> f64 {
    let observed = diffs.iter().sum::<f64>().abs() - tolerance(diffs);
    let mut rng = rng::substream(seed, "permutation");
    let mut hits = 0usize;
    for _ in 0..resamples {
        let s: f64 = diffs
            .iter()
            .map(|&d| if rng.random::<bool>() { d } else { -d })
            .sum();
        hits += usize::from(s.abs() >= observed);
    }
    (hits + 1) as f64 / (resamples + 1) as f64
}
