//! Paired sign-flip test between two per-query metric results.
use std::collections::BTreeMap;

use promptrank::evaluation::{paired_significance, MetricResult};

fn main() -> promptrank::Result<()> {
    let per_query = |f: &dyn Fn(usize) -> f64, n: usize| -> BTreeMap<String, f64> {
        (0..n).map(|i| (format!("q{i:02}"), f(i))).collect()
    };
    let wins = MetricResult::new("mrr", 10, per_query(&|_| 1.0, 10))?;
    let loses = MetricResult::new("mrr", 10, per_query(&|_| 0.0, 10))?;
    let r = paired_significance(&wins, &loses)?;
    println!("10/10 wins: p = {:.6} ({})", r.p_value, r.method);

    let a = MetricResult::new("mrr", 10, per_query(&|i| ((i * 7) % 10) as f64 / 10.0, 40))?;
    let b = MetricResult::new("mrr", 10, per_query(&|i| ((i * 7) % 10) as f64 / 12.0, 40))?;
    let r = paired_significance(&a, &b)?;
    println!("40 queries: mean diff {:+.4}, p = {:.2e} ({})", r.statistic, r.p_value, r.method);
    Ok(())
}
