use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Qrels, Run};
use crate::{Error, Result};

/// Per-query values of one metric and their mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub metric: String,
    pub cutoff: usize,
    pub mean: f64,
    pub per_query: BTreeMap<String, f64>,
}

impl MetricResult {
    /// Computes the mean; an empty map is rejected.
    pub fn new(metric: impl Into<String>, cutoff: usize, per_query: BTreeMap<String, f64>) -> Result<Self> {
        if per_query.is_empty() {
            return Err(Error::invalid("no queries to average"));
        }
        let mean = per_query.values().sum::<f64>() / per_query.len() as f64;
        Ok(Self {
            metric: metric.into(),
            cutoff,
            mean,
            per_query,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Self = serde_json::from_str(&text).map_err(|e| Error::from(e).context(path.display().to_string()))?;
        Ok(m)
    }
}

fn check_cutoff(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::config("k", "cutoff must be at least 1"));
    }
    Ok(())
}

fn judged<'a>(qrels: &'a Qrels, qid: &str) -> Result<&'a BTreeMap<String, u32>> {
    qrels
        .query(qid)
        .ok_or_else(|| Error::invalid(format!("run query \"{qid}\" has no relevance judgments")))
}

/// Reciprocal rank of the first document with grade >= 1 in the top `k`.
pub fn mrr_at_k(run: &Run, qrels: &Qrels, k: usize) -> Result<MetricResult> {
    check_cutoff(k)?;
    let mut per_query = BTreeMap::new();
    for (qid, entries) in run.iter() {
        let grades = judged(qrels, qid)?;
        let rr = entries
            .iter()
            .take(k)
            .position(|e| grades.get(&e.docid).is_some_and(|&g| g >= 1))
            .map_or(0.0, |i| 1.0 / (i + 1) as f64);
        per_query.insert(qid.to_string(), rr);
    }
    MetricResult::new("mrr", k, per_query)
}

fn dcg(grades: impl Iterator<Item = u32>) -> f64 {
    grades
        .enumerate()
        .map(|(i, g)| (2f64.powi(g as i32) - 1.0) / ((i + 2) as f64).log2())
        .sum()
}

/// NDCG with gain `2^g - 1` and discount `log2(i + 1)`; 0 when no document
/// is relevant.
pub fn ndcg_at_k(run: &Run, qrels: &Qrels, k: usize) -> Result<MetricResult> {
    check_cutoff(k)?;
    let mut per_query = BTreeMap::new();
    for (qid, entries) in run.iter() {
        let grades = judged(qrels, qid)?;
        let actual = dcg(entries
            .iter()
            .take(k)
            .map(|e| grades.get(&e.docid).copied().unwrap_or(0)));
        let mut ideal: Vec<u32> = grades.values().copied().collect();
        ideal.sort_unstable_by(|a, b| b.cmp(a));
        let ideal = dcg(ideal.into_iter().take(k));
        let v = if ideal > 0.0 { actual / ideal } else { 0.0 };
        per_query.insert(qid.to_string(), v);
    }
    MetricResult::new("ndcg", k, per_query)
}
