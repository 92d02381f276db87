//! The few-shot transfer experiment: vanilla versus pre-finetuned rerankers.
//!
//! `cargo run --release --example transfer -- configs/desk_transfer.json`
use promptrank::experiment::{run_transfer, ExperimentConfig, Variant};

fn main() -> promptrank::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "crates/core/configs/desk_transfer.json".into());
    let cfg = ExperimentConfig::load(&path)?;
    let report = run_transfer(&cfg)?;
    print!("{}", report.table());
    for v in [Variant::NliLike, Variant::QaLike] {
        if let (Some(a), Some(b)) = (report.mean_mrr.get(v.name()), report.mean_mrr.get("vanilla")) {
            println!("{} - vanilla: {:+.4} MRR@10", v.name(), a - b);
        }
    }
    Ok(())
}
