//! Few-shot training splits, development sets and cross-validation folds.
//!
//! Two sampling schemes are provided: a query-count scheme (`k` queries, each
//! with one positive and one first-stage negative) for sparse-label
//! collections, and a label-fraction scheme for densely judged collections,
//! which drops whole queries and then trims labels round-robin.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Qrels, Run};
use crate::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triple {
    pub qid: String,
    pub positive: String,
    pub negative: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainSplit {
    pub triples: Vec<Triple>,
    pub seed: u64,
}

impl TrainSplit {
    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.triples.iter().map(|t| t.qid.as_str())
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    /// `qid<TAB>pos_docid<TAB>neg_docid` lines.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for t in &self.triples {
            let _ = writeln!(out, "{}\t{}\t{}", t.qid, t.positive, t.negative);
        }
        out
    }

    pub fn parse_tsv(contents: &str, seed: u64) -> Result<Self> {
        let mut triples = Vec::new();
        let mut seen = HashSet::new();
        for (n, line) in contents.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [qid, pos, neg] = fields[..] else {
                return Err(Error::invalid(format!(
                    "split line {}: expected `qid<TAB>pos<TAB>neg`",
                    n + 1
                )));
            };
            if !seen.insert(qid.to_string()) {
                return Err(Error::DuplicateId(qid.to_string()));
            }
            triples.push(Triple {
                qid: qid.into(),
                positive: pos.into(),
                negative: neg.into(),
            });
        }
        Ok(Self { triples, seed })
    }

    pub fn load(path: impl AsRef<Path>, seed: u64) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_tsv(&text, seed)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DevSet {
    /// query id -> first-stage candidates in rank order.
    pub candidates: BTreeMap<String, Vec<String>>,
    pub seed: u64,
}

impl DevSet {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.candidates.keys().map(String::as_str)
    }

    /// Every query of `run` with its ranked candidates.
    pub fn from_run(run: &Run, seed: u64) -> Self {
        let candidates = run
            .query_ids()
            .map(|q| (q.to_string(), run.ranked_docids(q).into_iter().map(String::from).collect()))
            .collect();
        Self { candidates, seed }
    }

    /// The first-stage run restricted to the dev queries.
    pub fn run(&self, first_stage: &Run) -> Run {
        first_stage.restrict(self.query_ids())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub fold_of: BTreeMap<String, usize>,
    pub n_folds: usize,
}

impl FoldAssignment {
    pub fn fold(&self, f: usize) -> Vec<&str> {
        self.fold_of
            .iter()
            .filter(|(_, &k)| k == f)
            .map(|(q, _)| q.as_str())
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_folds];
        for &f in self.fold_of.values() {
            sizes[f] += 1;
        }
        sizes
    }

    /// `qid<TAB>fold` lines.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (q, f) in &self.fold_of {
            let _ = writeln!(out, "{q}\t{f}");
        }
        out
    }
}

/// Candidates for `qid` that carry no positive grade, in run order.
fn eligible_negatives<'a>(qrels: &Qrels, first_stage: &'a Run, qid: &str) -> Vec<&'a str> {
    first_stage
        .get(qid)
        .unwrap_or_default()
        .iter()
        .map(|e| e.docid.as_str())
        .filter(|d| !qrels.is_positive(qid, d))
        .collect()
}

/// Samples `k_queries` training queries, each with one positive and one
/// first-stage negative.
pub fn sample_msmarco_split(
    qrels: &Qrels,
    first_stage: &Run,
    k_queries: usize,
    seed: u64,
) -> Result<TrainSplit> {
    let eligible: Vec<&str> = qrels
        .query_ids()
        .filter(|q| {
            !qrels.positives(q).is_empty() && !eligible_negatives(qrels, first_stage, q).is_empty()
        })
        .collect();
    if k_queries > eligible.len() {
        return Err(Error::invalid(format!(
            "requested {k_queries} training queries but only {} are eligible (short by {})",
            eligible.len(),
            k_queries - eligible.len()
        )));
    }
    let mut rng = rng::seeded(seed);
    let chosen: Vec<&str> = eligible
        .choose_multiple(&mut rng, k_queries)
        .copied()
        .collect();
    let triples = chosen
        .into_iter()
        .map(|qid| {
            let positives = qrels.positives(qid);
            let negatives = eligible_negatives(qrels, first_stage, qid);
            let positive = positives[rng.random_range(0..positives.len())];
            let negative = negatives[rng.random_range(0..negatives.len())];
            Triple {
                qid: qid.to_string(),
                positive: positive.to_string(),
                negative: negative.to_string(),
            }
        })
        .collect();
    Ok(TrainSplit { triples, seed })
}

/// Dev size rule: same size as the training set up to 50 queries, 500 beyond.
pub fn dev_set_size(train_queries: usize) -> usize {
    if train_queries <= 50 {
        train_queries
    } else {
        500
    }
}

/// Samples held-out development queries with their full first-stage lists.
pub fn build_dev_set(
    qrels: &Qrels,
    first_stage: &Run,
    train: &TrainSplit,
    seed: u64,
) -> Result<DevSet> {
    let train_ids: HashSet<&str> = train.query_ids().collect();
    let held_out: Vec<&str> = first_stage
        .query_ids()
        .filter(|q| !train_ids.contains(q) && !qrels.positives(q).is_empty())
        .collect();
    if held_out.is_empty() {
        return Err(Error::invalid("no held-out queries available for a dev set"));
    }
    let n = dev_set_size(train.len()).min(held_out.len());
    let mut rng = rng::seeded(seed);
    let candidates = held_out
        .choose_multiple(&mut rng, n)
        .map(|q| (q.to_string(), first_stage.ranked_docids(q).into_iter().map(String::from).collect()))
        .collect();
    Ok(DevSet { candidates, seed })
}

/// Keeps `floor(r * M)` of the `M` labels in `qrels`.
///
/// Whole queries are dropped at random until fewer than the target remain;
/// the last dropped query is restored, then one random label is removed per
/// query, visiting queries round-robin in ascending id order, until the target
/// is reached. A query is only reduced to zero labels when no other query has
/// more than one left.
pub fn sample_label_fraction(qrels: &Qrels, r: f64, seed: u64) -> Result<Qrels> {
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::config("r", format!("label fraction {r} not in (0, 1]")));
    }
    let total = qrels.label_count();
    if total == 0 {
        return Err(Error::invalid("qrels contain no labels"));
    }
    let target = (r * total as f64).floor() as usize;
    if target == total {
        return Ok(qrels.clone());
    }
    let mut rng = rng::seeded(seed);
    let mut kept: BTreeMap<String, BTreeMap<String, u32>> = qrels.clone().into_map();
    let mut remaining = total;

    while !kept.is_empty() {
        let ids: Vec<String> = kept.keys().cloned().collect();
        let victim = ids[rng.random_range(0..ids.len())].clone();
        let labels = kept.remove(&victim).expect("victim present");
        remaining -= labels.len();
        if remaining < target {
            remaining += labels.len();
            kept.insert(victim, labels);
            break;
        }
    }

    while remaining > target {
        let any_spare = kept.values().any(|m| m.len() > 1);
        let order: Vec<String> = kept.keys().cloned().collect();
        for qid in order {
            if remaining == target {
                break;
            }
            let labels = kept.get_mut(&qid).expect("query present");
            if labels.is_empty() || (labels.len() == 1 && any_spare) {
                continue;
            }
            let docs: Vec<String> = labels.keys().cloned().collect();
            labels.remove(&docs[rng.random_range(0..docs.len())]);
            remaining -= 1;
        }
    }
    kept.retain(|_, m| !m.is_empty());
    Ok(Qrels::from_map(kept))
}

/// Shuffles queries under `seed` and deals them round-robin into folds.
pub fn make_folds<'a>(
    query_ids: impl IntoIterator<Item = &'a str>,
    n_folds: usize,
    seed: u64,
) -> Result<FoldAssignment> {
    let mut ids: Vec<&str> = query_ids
        .into_iter()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if n_folds == 0 || ids.len() < n_folds {
        return Err(Error::invalid(format!(
            "{} queries cannot fill {n_folds} folds",
            ids.len()
        )));
    }
    ids.shuffle(&mut rng::seeded(seed));
    let fold_of = ids
        .into_iter()
        .enumerate()
        .map(|(i, q)| (q.to_string(), i % n_folds))
        .collect();
    Ok(FoldAssignment { fold_of, n_folds })
}
