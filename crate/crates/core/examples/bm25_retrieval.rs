//! Index a toy collection with BM25, retrieve, and score the run.
use promptrank::bm25::{retrieve_all, Bm25Params, InvertedIndex};
use promptrank::corpus::{Collection, Document, Qrels, Queries, Query};
use promptrank::evaluation::{mrr_at_k, ndcg_at_k};

fn main() -> promptrank::Result<()> {
    let collection = Collection::new(vec![
        Document::new("d1", "the cat sat on the mat"),
        Document::new("d2", "dogs chase cats in the park"),
        Document::new("d3", "a cat and a dog share a mat"),
        Document::new("d4", "stock markets fell sharply today"),
        Document::new("d5", "the market for cat food is growing"),
    ])?;
    let queries = Queries::new(vec![
        Query::new("q1", "cat mat"),
        Query::new("q2", "market"),
    ])?;
    let mut qrels = Qrels::new();
    qrels.insert("q1", "d3", 2)?;
    qrels.insert("q1", "d1", 1)?;
    qrels.insert("q2", "d4", 1)?;

    let index = InvertedIndex::build(&collection, Bm25Params::default())?;
    let stats = index.stats();
    println!("{} docs, {} terms, avgdl {:.2}", stats.doc_count, stats.term_count, stats.avg_doc_length);

    let run = retrieve_all(&index, &queries, 3, "bm25")?;
    print!("{}", run.to_trec());

    let terms = index.analyze("cat mat");
    println!("score(q1, d1) = {:.4}", index.score(&terms, "d1")?);
    println!("MRR@10  {:.4}", mrr_at_k(&run, &qrels, 10)?.mean);
    println!("NDCG@20 {:.4}", ndcg_at_k(&run, &qrels, 20)?.mean);
    Ok(())
}
