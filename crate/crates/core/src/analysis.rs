//! Transfer diagnostics: decision-token embeddings, score histograms and a
//! 2-D PCA projection of the embeddings.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::evaluation::{PairScorer, PromptRanker};
use crate::model::ScorerModel;
use crate::{Error, Result};

pub const DEFAULT_BIN_COUNT: usize = 20;

/// A `(query, document)` or task pair tagged with where it came from, e.g.
/// `pos`, `neg` or `entailment`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledPair {
    pub id: String,
    pub label: String,
    pub text_a: String,
    pub text_b: String,
}

impl LabeledPair {
    pub fn new(
        id: impl Into<String>,
        label: impl Into<String>,
        text_a: impl Into<String>,
        text_b: impl Into<String>,
    ) -> Self {
        Self { id: id.into(), label: label.into(), text_a: text_a.into(), text_b: text_b.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRow {
    pub id: String,
    pub label: String,
    pub vector: Vec<f64>,
}

/// Decision-token states for a set of pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingDump {
    label_set: Vec<String>,
    dimension: usize,
    rows: Vec<EmbeddingRow>,
}

impl EmbeddingDump {
    pub fn new(label_set: Vec<String>, rows: Vec<EmbeddingRow>) -> Result<Self> {
        let dimension = rows.first().map_or(0, |r| r.vector.len());
        let declared: BTreeSet<&str> = label_set.iter().map(String::as_str).collect();
        for r in &rows {
            if r.vector.len() != dimension {
                return Err(Error::invalid(format!(
                    "row {}: dimension {} != {dimension}",
                    r.id,
                    r.vector.len()
                )));
            }
            if !declared.contains(r.label.as_str()) {
                return Err(Error::invalid(format!("row {}: undeclared label {:?}", r.id, r.label)));
            }
        }
        Ok(Self { label_set, dimension, rows })
    }

    pub fn label_set(&self) -> &[String] {
        &self.label_set
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn rows(&self) -> &[EmbeddingRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Joins dumps taken under different templates (ranking plus a source
    /// task, say). Label sets are unioned.
    pub fn concat(dumps: Vec<EmbeddingDump>) -> Result<Self> {
        let mut labels: Vec<String> = Vec::new();
        let mut rows = Vec::new();
        for d in dumps {
            for l in d.label_set {
                if !labels.contains(&l) {
                    labels.push(l);
                }
            }
            rows.extend(d.rows);
        }
        Self::new(labels, rows)
    }

    /// `id<TAB>label<TAB>v1 ... vd`, one row per line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            let _ = write!(out, "{}\t{}", r.id, r.label);
            for v in &r.vector {
                let _ = write!(out, "\t{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), &self.to_tsv())
    }
}

/// Reads `h_t` for every pair exactly as scoring would. Label set is the
/// set of labels present, in first-seen order.
pub fn extract_embeddings<M: ScorerModel + ?Sized>(
    ranker: &PromptRanker<'_, M>,
    pairs: &[LabeledPair],
) -> Result<EmbeddingDump> {
    let rows = pairs
        .par_iter()
        .map(|p| {
            let out = ranker
                .score(&p.text_a, &p.text_b)
                .map_err(|e| e.context(format!("pair {}", p.id)))?;
            Ok(EmbeddingRow { id: p.id.clone(), label: p.label.clone(), vector: out.h_t })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut labels: Vec<String> = Vec::new();
    for p in pairs {
        if !labels.contains(&p.label) {
            labels.push(p.label.clone());
        }
    }
    EmbeddingDump::new(labels, rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub positive: usize,
    pub negative: usize,
}

/// Positive and negative score counts over equal-width bins of `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreHistogram {
    pub bin_count: usize,
    pub bins: Vec<HistogramBin>,
    pub mean_positive: Option<f64>,
    pub mean_negative: Option<f64>,
    /// Mean positive score minus mean negative score.
    pub separation: Option<f64>,
}

impl ScoreHistogram {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), &self.to_json()?)
    }
}

pub fn score_histogram(positive: &[f64], negative: &[f64], bin_count: usize) -> Result<ScoreHistogram> {
    if bin_count == 0 {
        return Err(Error::invalid("bin_count must be at least 1"));
    }
    let mut bins: Vec<HistogramBin> = (0..bin_count)
        .map(|i| HistogramBin {
            lower: i as f64 / bin_count as f64,
            upper: (i + 1) as f64 / bin_count as f64,
            positive: 0,
            negative: 0,
        })
        .collect();
    let bin_of = |s: f64| -> Result<usize> {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::invalid(format!("score {s} outside [0, 1]")));
        }
        Ok(((s * bin_count as f64) as usize).min(bin_count - 1))
    };
    for &s in positive {
        bins[bin_of(s)?].positive += 1;
    }
    for &s in negative {
        bins[bin_of(s)?].negative += 1;
    }
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    let (mp, mn) = (mean(positive), mean(negative));
    Ok(ScoreHistogram {
        bin_count,
        bins,
        mean_positive: mp,
        mean_negative: mn,
        separation: mp.zip(mn).map(|(p, n)| p - n),
    })
}

/// Scores labelled pairs and splits them by `is_positive(label)`.
pub fn score_labeled<S: PairScorer + ?Sized>(
    scorer: &S,
    pairs: &[LabeledPair],
    is_positive: impl Fn(&str) -> bool,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let scores = pairs
        .par_iter()
        .map(|p| {
            scorer
                .relevance(&p.text_a, &p.text_b)
                .map_err(|e| e.context(format!("pair {}", p.id)))
        })
        .collect::<Result<Vec<_>>>()?;
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    for (p, s) in pairs.iter().zip(scores) {
        if is_positive(&p.label) {
            pos.push(s);
        } else {
            neg.push(s);
        }
    }
    Ok((pos, neg))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedPoint {
    pub id: String,
    pub label: String,
    pub x: f64,
    pub y: f64,
}

/// Mean-centred PCA onto the top two principal axes. Each axis is signed
/// so its largest-magnitude loading is positive.
pub fn project_2d(dump: &EmbeddingDump) -> Result<Vec<ProjectedPoint>> {
    let (axes, centered) = principal_axes(dump, 2)?;
    let coords = &centered * &axes;
    Ok(dump
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| ProjectedPoint {
            id: r.id.clone(),
            label: r.label.clone(),
            x: coords[(i, 0)],
            y: if coords.ncols() > 1 { coords[(i, 1)] } else { 0.0 },
        })
        .collect())
}

/// Squared reconstruction error after projecting onto the top `k` axes.
pub fn reconstruction_error(dump: &EmbeddingDump, k: usize) -> Result<f64> {
    let (axes, centered) = principal_axes(dump, k)?;
    let back = (&centered * &axes) * axes.transpose();
    Ok((centered - back).norm_squared())
}

fn principal_axes(dump: &EmbeddingDump, k: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = dump.rows.len();
    if n < 3 {
        return Err(Error::invalid(format!("projection needs at least 3 rows, got {n}")));
    }
    let d = dump.dimension;
    let mut x = DMatrix::from_fn(n, d, |i, j| dump.rows[i].vector[j]);
    for j in 0..d {
        let mean = x.column(j).mean();
        x.column_mut(j).add_scalar_mut(-mean);
    }
    let cov = x.transpose() * &x / (n - 1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let k = k.min(d);
    let mut axes = DMatrix::zeros(d, k);
    for (c, &src) in order.iter().take(k).enumerate() {
        let mut v = eig.eigenvectors.column(src).clone_owned();
        let pivot = v.iter().copied().max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap_or(0.0);
        if pivot < 0.0 {
            v.neg_mut();
        }
        axes.set_column(c, &v);
    }
    Ok((axes, x))
}

/// `id<TAB>label<TAB>x<TAB>y`.
pub fn projection_to_tsv(points: &[ProjectedPoint]) -> String {
    let mut out = String::new();
    for p in points {
        let _ = writeln!(out, "{}\t{}\t{}\t{}", p.id, p.label, p.x, p.y);
    }
    out
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, content).map_err(|e| Error::io(path, e))
}
