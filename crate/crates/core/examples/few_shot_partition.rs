//! Few-shot training splits, dev sets, label fractions and folds over the
//! synthetic ranking corpus.
use promptrank::bm25::{retrieve_all, Bm25Params, InvertedIndex};
use promptrank::partition::{
    build_dev_set, dev_set_size, make_folds, sample_label_fraction, sample_msmarco_split,
};
use promptrank::training::{make_synthetic_tasks, SyntheticConfig};

fn main() -> promptrank::Result<()> {
    let cfg = SyntheticConfig { nli_examples: 10, qa_examples: 10, ..Default::default() };
    let tasks = make_synthetic_tasks(1, &cfg)?;
    let index = InvertedIndex::build(&tasks.collection, Bm25Params::default())?;
    let first = retrieve_all(&index, &tasks.queries, 30, "bm25")?;

    for k in [5, 50] {
        let split = sample_msmarco_split(&tasks.qrels, &first, k, 7)?;
        let dev = build_dev_set(&tasks.qrels, &first, &split, 8)?;
        println!("k={k}: {} triples, dev {} queries (rule says {})", split.len(), dev.len(), dev_set_size(k));
    }
    let split = sample_msmarco_split(&tasks.qrels, &first, 5, 7)?;
    print!("{}", split.to_tsv());

    let total = tasks.qrels.label_count();
    for r in [0.02, 0.5, 1.0] {
        let kept = sample_label_fraction(&tasks.qrels, r, 3)?;
        println!("r={r}: kept {} of {total} labels", kept.label_count());
    }

    let folds = make_folds(tasks.qrels.query_ids(), 5, 3)?;
    println!("fold sizes {:?}", folds.fold_sizes());
    Ok(())
}
