//! Documents, queries, relevance judgments and ranked runs, plus their
//! TSV / TREC text formats.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub text: String,
}

impl Query {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
        }
    }
}

/// An ordered set of records with unique ids and lookup by id.
///
/// Used for both documents ([`Collection`]) and queries ([`Queries`]).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Records<T> {
    items: Vec<T>,
    by_id: HashMap<String, usize>,
}

impl<T> Default for Records<T> {
    fn default() -> Self {
        Self {
            items: Vec::new(),
            by_id: HashMap::new(),
        }
    }
}

pub type Collection = Records<Document>;
pub type Queries = Records<Query>;

/// Anything with a string id and a text body.
pub trait Record {
    fn id(&self) -> &str;
    fn text(&self) -> &str;
    fn from_parts(id: String, text: String) -> Self;
}

impl Record for Document {
    fn id(&self) -> &str {
        &self.id
    }
    fn text(&self) -> &str {
        &self.text
    }
    fn from_parts(id: String, text: String) -> Self {
        Document { id, text }
    }
}

impl Record for Query {
    fn id(&self) -> &str {
        &self.id
    }
    fn text(&self) -> &str {
        &self.text
    }
    fn from_parts(id: String, text: String) -> Self {
        Query { id, text }
    }
}

impl<T: Record> Records<T> {
    pub fn new(items: Vec<T>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(items.len());
        for (i, item) in items.iter().enumerate() {
            if item.id().is_empty() {
                return Err(Error::invalid(format!("record {} has an empty id", i + 1)));
            }
            if by_id.insert(item.id().to_string(), i).is_some() {
                return Err(Error::DuplicateId(item.id().to_string()));
            }
        }
        Ok(Self { items, by_id })
    }

    pub fn get(&self, id: &str) -> Option<&T> {
        self.by_id.get(id).map(|&i| &self.items[i])
    }

    /// Like [`Records::get`] but failing with [`Error::UnknownId`].
    pub fn lookup(&self, id: &str) -> Result<&T> {
        self.get(id).ok_or_else(|| Error::UnknownId(id.to_string()))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.by_id.contains_key(id)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.items.iter()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.items
    }

    /// Parses `id<TAB>text` lines. Blank lines are skipped.
    pub fn parse_tsv(contents: &str, path: &Path) -> Result<Self> {
        let mut items = Vec::new();
        let mut seen = HashSet::new();
        for (n, raw) in contents.split('\n').enumerate() {
            let line = raw.strip_suffix('\r').unwrap_or(raw);
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |message: &str| Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                message: message.to_string(),
            };
            let mut fields = line.split('\t');
            let (id, text) = match (fields.next(), fields.next(), fields.next()) {
                (Some(id), Some(text), None) => (id, text),
                (_, None, _) => return Err(parse_err("expected `id<TAB>text`")),
                _ => return Err(parse_err("tab inside text field")),
            };
            if id.is_empty() {
                return Err(parse_err("empty id"));
            }
            if !seen.insert(id.to_string()) {
                return Err(Error::DuplicateId(id.to_string()));
            }
            items.push(T::from_parts(id.to_string(), text.to_string()));
        }
        Self::new(items)
    }

    pub fn to_tsv(&self) -> Result<String> {
        let mut out = String::new();
        for item in &self.items {
            if item.text().contains(['\t', '\n', '\r']) {
                return Err(Error::invalid(format!(
                    "text of \"{}\" contains a tab or newline",
                    item.id()
                )));
            }
            let _ = writeln!(out, "{}\t{}", item.id(), item.text());
        }
        Ok(out)
    }
}

impl<'a, T> IntoIterator for &'a Records<T> {
    type Item = &'a T;
    type IntoIter = std::slice::Iter<'a, T>;
    fn into_iter(self) -> Self::IntoIter {
        self.items.iter()
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn load_collection(path: impl AsRef<Path>) -> Result<Collection> {
    let path = path.as_ref();
    Collection::parse_tsv(&read(path)?, path)
}

pub fn load_queries(path: impl AsRef<Path>) -> Result<Queries> {
    let path = path.as_ref();
    Queries::parse_tsv(&read(path)?, path)
}

pub fn write_records<T: Record>(records: &Records<T>, path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), &records.to_tsv()?)
}

/// Graded relevance judgments: query id -> document id -> grade.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Qrels {
    judgments: BTreeMap<String, BTreeMap<String, u32>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one judgment, rejecting a repeated `(qid, docid)` pair.
    pub fn insert(&mut self, qid: &str, docid: &str, grade: u32) -> Result<()> {
        let per_query = self.judgments.entry(qid.to_string()).or_default();
        if per_query.contains_key(docid) {
            return Err(Error::DuplicateId(format!("{qid}/{docid}")));
        }
        per_query.insert(docid.to_string(), grade);
        Ok(())
    }

    pub fn grade(&self, qid: &str, docid: &str) -> Option<u32> {
        self.judgments.get(qid)?.get(docid).copied()
    }

    pub fn query(&self, qid: &str) -> Option<&BTreeMap<String, u32>> {
        self.judgments.get(qid)
    }

    pub fn contains_query(&self, qid: &str) -> bool {
        self.judgments.contains_key(qid)
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.judgments.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &BTreeMap<String, u32>)> {
        self.judgments.iter().map(|(q, m)| (q.as_str(), m))
    }

    /// Documents judged with grade >= 1, in ascending id order.
    pub fn positives(&self, qid: &str) -> Vec<&str> {
        self.judgments
            .get(qid)
            .map(|m| {
                m.iter()
                    .filter(|(_, &g)| g >= 1)
                    .map(|(d, _)| d.as_str())
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn is_positive(&self, qid: &str, docid: &str) -> bool {
        self.grade(qid, docid).is_some_and(|g| g >= 1)
    }

    /// Total number of judgments.
    pub fn label_count(&self) -> usize {
        self.judgments.values().map(BTreeMap::len).sum()
    }

    pub fn query_count(&self) -> usize {
        self.judgments.len()
    }

    pub(crate) fn from_map(judgments: BTreeMap<String, BTreeMap<String, u32>>) -> Self {
        Self { judgments }
    }

    pub(crate) fn into_map(self) -> BTreeMap<String, BTreeMap<String, u32>> {
        self.judgments
    }

    pub fn parse(contents: &str, path: &Path) -> Result<Self> {
        let mut qrels = Qrels::new();
        for (n, line) in contents.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                message,
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [qid, _iter, docid, grade] = fields[..] else {
                return Err(parse_err(format!(
                    "expected 4 fields `qid 0 docid grade`, found {}",
                    fields.len()
                )));
            };
            let grade: i64 = grade
                .parse()
                .map_err(|_| parse_err(format!("grade \"{grade}\" is not an integer")))?;
            if grade < 0 {
                return Err(parse_err(format!("negative grade {grade}")));
            }
            let grade = u32::try_from(grade).map_err(|_| parse_err("grade too large".into()))?;
            qrels
                .insert(qid, docid, grade)
                .map_err(|_| parse_err(format!("repeated judgment for ({qid}, {docid})")))?;
        }
        Ok(qrels)
    }

    pub fn to_trec(&self) -> String {
        let mut out = String::new();
        for (qid, docs) in &self.judgments {
            for (docid, grade) in docs {
                let _ = writeln!(out, "{qid} 0 {docid} {grade}");
            }
        }
        out
    }
}

pub fn load_qrels(path: impl AsRef<Path>) -> Result<Qrels> {
    let path = path.as_ref();
    Qrels::parse(&read(path)?, path)
}

pub fn write_qrels(qrels: &Qrels, path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), &qrels.to_trec())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub docid: String,
    pub rank: usize,
    pub score: f64,
    pub tag: String,
}

/// Ranked result lists, one per query, in TREC run convention.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Run {
    entries: BTreeMap<String, Vec<RunEntry>>,
}

impl Run {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets the list for `qid` from `(docid, score)` pairs already in rank
    /// order. Ranks are assigned 1..n.
    pub fn set_ranked(
        &mut self,
        qid: &str,
        ranked: Vec<(String, f64)>,
        tag: &str,
    ) -> Result<()> {
        let entries = ranked
            .into_iter()
            .enumerate()
            .map(|(i, (docid, score))| RunEntry {
                docid,
                rank: i + 1,
                score,
                tag: tag.to_string(),
            })
            .collect::<Vec<_>>();
        validate_entries(qid, &entries)?;
        self.entries.insert(qid.to_string(), entries);
        Ok(())
    }

    pub fn insert_entries(&mut self, qid: &str, entries: Vec<RunEntry>) -> Result<()> {
        validate_entries(qid, &entries)?;
        self.entries.insert(qid.to_string(), entries);
        Ok(())
    }

    pub fn get(&self, qid: &str) -> Option<&[RunEntry]> {
        self.entries.get(qid).map(Vec::as_slice)
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[RunEntry])> {
        self.entries.iter().map(|(q, e)| (q.as_str(), e.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Document ids for `qid` in rank order.
    pub fn ranked_docids(&self, qid: &str) -> Vec<&str> {
        self.entries
            .get(qid)
            .map(|e| e.iter().map(|x| x.docid.as_str()).collect())
            .unwrap_or_default()
    }

    /// Keeps only the listed queries.
    pub fn restrict<'a>(&self, qids: impl IntoIterator<Item = &'a str>) -> Run {
        let entries = qids
            .into_iter()
            .filter_map(|q| self.entries.get_key_value(q))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        Run { entries }
    }

    /// `qid Q0 docid rank score tag` lines, scores at 6 decimal places.
    pub fn to_trec(&self) -> String {
        let mut out = String::new();
        for (qid, entries) in &self.entries {
            for e in entries {
                let _ = writeln!(
                    out,
                    "{qid} Q0 {} {} {:.6} {}",
                    e.docid, e.rank, e.score, e.tag
                );
            }
        }
        out
    }

    pub fn parse(contents: &str, path: &Path) -> Result<Self> {
        let mut grouped: BTreeMap<String, Vec<RunEntry>> = BTreeMap::new();
        for (n, line) in contents.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                message,
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [qid, _q0, docid, rank, score, tag] = fields[..] else {
                return Err(parse_err(format!(
                    "expected 6 fields `qid Q0 docid rank score tag`, found {}",
                    fields.len()
                )));
            };
            let rank: usize = rank
                .parse()
                .map_err(|_| parse_err(format!("rank \"{rank}\" is not a positive integer")))?;
            let score: f64 = score
                .parse()
                .map_err(|_| parse_err(format!("score \"{score}\" is not a number")))?;
            grouped.entry(qid.to_string()).or_default().push(RunEntry {
                docid: docid.to_string(),
                rank,
                score,
                tag: tag.to_string(),
            });
        }
        for (qid, entries) in grouped.iter_mut() {
            entries.sort_by_key(|e| e.rank);
            validate_entries(qid, entries).map_err(|e| e.context(path.display().to_string()))?;
        }
        Ok(Run { entries: grouped })
    }
}

fn validate_entries(qid: &str, entries: &[RunEntry]) -> Result<()> {
    let mut seen = HashSet::new();
    for (i, e) in entries.iter().enumerate() {
        if e.rank != i + 1 {
            return Err(Error::invalid(format!(
                "query {qid}: non-contiguous ranks (expected {}, found {})",
                i + 1,
                e.rank
            )));
        }
        if !seen.insert(e.docid.as_str()) {
            return Err(Error::invalid(format!(
                "query {qid}: document {} listed twice",
                e.docid
            )));
        }
        if e.tag.is_empty() || e.tag.contains(char::is_whitespace) {
            return Err(Error::invalid(format!("query {qid}: invalid run tag {:?}", e.tag)));
        }
        if !e.score.is_finite() {
            return Err(Error::invalid(format!("query {qid}: non-finite score")));
        }
        if i > 0 && e.score > entries[i - 1].score {
            return Err(Error::invalid(format!(
                "query {qid}: score increases at rank {}",
                e.rank
            )));
        }
    }
    Ok(())
}

pub fn load_run(path: impl AsRef<Path>) -> Result<Run> {
    let path = path.as_ref();
    Run::parse(&read(path)?, path)
}

pub fn write_run(run: &Run, path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), &run.to_trec())
}
