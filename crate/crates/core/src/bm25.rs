//! Okapi BM25 over an in-memory inverted index.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::{Collection, Query, RunEntry};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 0.9, b: 0.4 }
    }
}

impl Bm25Params {
    pub fn new(k1: f64, b: f64) -> Result<Self> {
        if !(k1 > 0.0 && k1.is_finite()) {
            return Err(Error::config("k1", "must be a positive number"));
        }
        if !(0.0..=1.0).contains(&b) {
            return Err(Error::config("b", "must lie in [0, 1]"));
        }
        Ok(Self { k1, b })
    }
}

/// Turns text into index terms.
pub trait Analyzer: Send + Sync {
    fn analyze(&self, text: &str) -> Vec<String>;
}

/// Lowercases and splits on runs of non-alphanumeric characters.
#[derive(Debug, Clone, Copy, Default)]
pub struct DefaultAnalyzer;

impl Analyzer for DefaultAnalyzer {
    fn analyze(&self, text: &str) -> Vec<String> {
        text.split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(str::to_lowercase)
            .collect()
    }
}

pub struct InvertedIndex {
    /// term -> (document index, term frequency), ascending by document index.
    postings: HashMap<String, Vec<(usize, u32)>>,
    doc_ids: Vec<String>,
    doc_index: HashMap<String, usize>,
    doc_length: Vec<u32>,
    avg_doc_length: f64,
    params: Bm25Params,
    analyzer: Arc<dyn Analyzer>,
}

impl fmt::Debug for InvertedIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("InvertedIndex")
            .field("doc_count", &self.doc_ids.len())
            .field("terms", &self.postings.len())
            .field("avg_doc_length", &self.avg_doc_length)
            .field("params", &self.params)
            .finish()
    }
}

/// Summary numbers for an index, as reported by the `index` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexStats {
    pub doc_count: usize,
    pub term_count: usize,
    pub avg_doc_length: f64,
    pub k1: f64,
    pub b: f64,
}

impl InvertedIndex {
    pub fn build(collection: &Collection, params: Bm25Params) -> Result<Self> {
        Self::build_with(collection, params, Arc::new(DefaultAnalyzer))
    }

    pub fn build_with(
        collection: &Collection,
        params: Bm25Params,
        analyzer: Arc<dyn Analyzer>,
    ) -> Result<Self> {
        if collection.is_empty() {
            return Err(Error::invalid("cannot index an empty collection"));
        }
        let mut postings: HashMap<String, Vec<(usize, u32)>> = HashMap::new();
        let mut doc_ids = Vec::with_capacity(collection.len());
        let mut doc_index = HashMap::with_capacity(collection.len());
        let mut doc_length = Vec::with_capacity(collection.len());
        for (i, doc) in collection.iter().enumerate() {
            let terms = analyzer.analyze(&doc.text);
            doc_length.push(terms.len() as u32);
            let mut tf: HashMap<String, u32> = HashMap::new();
            for t in terms {
                *tf.entry(t).or_default() += 1;
            }
            for (t, n) in tf {
                postings.entry(t).or_default().push((i, n));
            }
            doc_index.insert(doc.id.clone(), i);
            doc_ids.push(doc.id.clone());
        }
        let total: u64 = doc_length.iter().map(|&l| u64::from(l)).sum();
        let avg_doc_length = total as f64 / doc_length.len() as f64;
        Ok(Self {
            postings,
            doc_ids,
            doc_index,
            doc_length,
            avg_doc_length,
            params,
            analyzer,
        })
    }

    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn doc_frequency(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn doc_length(&self, docid: &str) -> Option<u32> {
        self.doc_index.get(docid).map(|&i| self.doc_length[i])
    }

    pub fn term_frequency(&self, term: &str, docid: &str) -> u32 {
        let Some(&doc) = self.doc_index.get(docid) else {
            return 0;
        };
        self.tf_at(term, doc)
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn analyze(&self, text: &str) -> Vec<String> {
        self.analyzer.analyze(text)
    }

    pub fn stats(&self) -> IndexStats {
        IndexStats {
            doc_count: self.doc_count(),
            term_count: self.postings.len(),
            avg_doc_length: self.avg_doc_length,
            k1: self.params.k1,
            b: self.params.b,
        }
    }

    fn tf_at(&self, term: &str, doc: usize) -> u32 {
        self.postings
            .get(term)
            .and_then(|p| p.binary_search_by_key(&doc, |&(d, _)| d).ok().map(|i| p[i].1))
            .unwrap_or(0)
    }

    /// Lucene-style idf, never negative.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.doc_count() as f64;
        let df = self.doc_frequency(term) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    fn term_weight(&self, idf: f64, tf: u32, doc_len: u32) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let tf = f64::from(tf);
        let norm = k1 * (1.0 - b + b * f64::from(doc_len) / self.avg_doc_length);
        idf * tf * (k1 + 1.0) / (tf + norm)
    }

    /// BM25 score of one document for an analyzed query.
    pub fn score(&self, query_terms: &[String], docid: &str) -> Result<f64> {
        let &doc = self
            .doc_index
            .get(docid)
            .ok_or_else(|| Error::UnknownId(docid.to_string()))?;
        let mut score = 0.0;
        for term in query_terms {
            let tf = self.tf_at(term, doc);
            if tf > 0 {
                score += self.term_weight(self.idf(term), tf, self.doc_length[doc]);
            }
        }
        Ok(score)
    }

    /// Top-`k` documents with a positive score, ties broken by ascending id.
    pub fn retrieve(&self, query: &Query, k: usize, tag: &str) -> Vec<RunEntry> {
        let terms = self.analyze(&query.text);
        self.retrieve_terms(&terms, k, tag)
    }

    pub fn retrieve_terms(&self, query_terms: &[String], k: usize, tag: &str) -> Vec<RunEntry> {
        let mut acc: HashMap<usize, f64> = HashMap::new();
        for term in query_terms {
            let Some(list) = self.postings.get(term) else {
                continue;
            };
            let idf = self.idf(term);
            for &(doc, tf) in list {
                *acc.entry(doc).or_insert(0.0) += self.term_weight(idf, tf, self.doc_length[doc]);
            }
        }
        let mut scored: Vec<(usize, f64)> = acc.into_iter().filter(|&(_, s)| s > 0.0).collect();
        scored.sort_by(|a, b| {
            b.1.total_cmp(&a.1)
                .then_with(|| self.doc_ids[a.0].cmp(&self.doc_ids[b.0]))
        });
        scored
            .into_iter()
            .take(k)
            .enumerate()
            .map(|(i, (doc, score))| RunEntry {
                docid: self.doc_ids[doc].clone(),
                rank: i + 1,
                score,
                tag: tag.to_string(),
            })
            .collect()
    }
}

/// Retrieves `k` candidates for every query into a run.
pub fn retrieve_all(
    index: &InvertedIndex,
    queries: &crate::corpus::Queries,
    k: usize,
    tag: &str,
) -> Result<crate::corpus::Run> {
    use rayon::prelude::*;
    if k == 0 {
        return Err(Error::config("k", "must be at least 1"));
    }
    let lists: Vec<(String, Vec<RunEntry>)> = queries
        .as_slice()
        .par_iter()
        .map(|q| (q.id.clone(), index.retrieve(q, k, tag)))
        .collect();
    let mut run = crate::corpus::Run::new();
    for (qid, entries) in lists {
        if !entries.is_empty() {
            run.insert_entries(&qid, entries)?;
        }
    }
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;

    fn corpus() -> Collection {
        Collection::new(vec![
            Document::new("d1", "a b a"),
            Document::new("d2", "b c"),
            Document::new("d3", "c c c"),
        ])
        .unwrap()
    }

    fn terms(ts: &[&str]) -> Vec<String> {
        ts.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn index_statistics() {
        let idx = InvertedIndex::build(&corpus(), Bm25Params::default()).unwrap();
        assert_eq!(idx.doc_count(), 3);
        assert_eq!(idx.doc_frequency("a"), 1);
        assert_eq!(idx.doc_frequency("b"), 2);
        assert_eq!(idx.doc_frequency("c"), 2);
        assert!((idx.avg_doc_length() - 8.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn default_analyzer() {
        assert_eq!(DefaultAnalyzer.analyze("Hello, WORLD"), vec!["hello", "world"]);
    }

    #[test]
    fn empty_document_counts_toward_avgdl() {
        let c = Collection::new(vec![Document::new("x", ""), Document::new("y", "a b")]).unwrap();
        let idx = InvertedIndex::build(&c, Bm25Params::default()).unwrap();
        assert_eq!(idx.doc_length("x"), Some(0));
        assert_eq!(idx.avg_doc_length(), 1.0);
    }

    #[test]
    fn empty_collection_rejected() {
        assert!(InvertedIndex::build(&Collection::default(), Bm25Params::default()).is_err());
    }

    #[test]
    fn hand_evaluated_score() {
        let idx = InvertedIndex::build(&corpus(), Bm25Params::new(0.9, 0.4).unwrap()).unwrap();
        // idf = ln(1 + 2.5/1.5); norm = 0.9 * (0.6 + 0.4 * 3 / (8/3)) = 0.945
        let expected = (1.0f64 + 2.5 / 1.5).ln() * (2.0 * 1.9) / (2.0 + 0.945);
        let got = idx.score(&terms(&["a"]), "d1").unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 1.2656).abs() < 1e-4);
        assert_eq!(idx.score(&terms(&["z"]), "d1").unwrap(), 0.0);
        assert_eq!(idx.score(&[], "d1").unwrap(), 0.0);
        assert!(idx.score(&terms(&["a"]), "nope").is_err());
    }

    #[test]
    fn retrieve_orders_by_score() {
        let idx = InvertedIndex::build(&corpus(), Bm25Params::default()).unwrap();
        let hits = idx.retrieve(&Query::new("q", "c"), 10, "bm25");
        let ids: Vec<_> = hits.iter().map(|e| e.docid.as_str()).collect();
        assert_eq!(ids, vec!["d3", "d2"]);
        assert_eq!(idx.retrieve(&Query::new("q", "c"), 1, "t").len(), 1);
        assert!(idx.retrieve(&Query::new("q", "zzz"), 10, "t").is_empty());
    }

    #[test]
    fn ties_break_by_docid() {
        let c = Collection::new(vec![
            Document::new("b", "x y"),
            Document::new("a", "x y"),
            Document::new("c", "y z"),
        ])
        .unwrap();
        let idx = InvertedIndex::build(&c, Bm25Params::default()).unwrap();
        let hits = idx.retrieve(&Query::new("q", "x"), 10, "t");
        assert_eq!(hits[0].docid, "a");
        assert_eq!(hits[1].docid, "b");
    }
}
