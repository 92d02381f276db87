use std::fmt;

use serde::{Deserialize, Serialize};

use super::tokenizer::{TokenId, Tokenizer};
use crate::{Error, Result};

/// A task label such as `1`, `0` or `entailment`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Label(pub String);

impl Label {
    pub fn new(s: impl Into<String>) -> Self {
        Label(s.into())
    }

    pub fn relevant() -> Self {
        Label("1".into())
    }

    pub fn irrelevant() -> Self {
        Label("0".into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Label {
    fn from(s: &str) -> Self {
        Label(s.to_string())
    }
}

/// Bijection between task labels and single-token label words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verbalizer {
    labels: Vec<Label>,
    words: Vec<String>,
    word_ids: Vec<TokenId>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerbalizerSpec {
    pub pairs: Vec<(Label, String)>,
}

impl Verbalizer {
    pub fn new(pairs: Vec<(Label, String)>, tokenizer: &Tokenizer) -> Result<Self> {
        if pairs.len() < 2 {
            return Err(Error::invalid("a verbalizer needs at least two labels"));
        }
        let mut labels = Vec::with_capacity(pairs.len());
        let mut words = Vec::with_capacity(pairs.len());
        let mut word_ids = Vec::with_capacity(pairs.len());
        for (label, word) in pairs {
            if labels.contains(&label) {
                return Err(Error::DuplicateId(label.0));
            }
            let id = tokenizer.single_token(&word)?;
            if word_ids.contains(&id) {
                return Err(Error::invalid(format!("label word \"{word}\" used twice")));
            }
            labels.push(label);
            words.push(word);
            word_ids.push(id);
        }
        Ok(Self {
            labels,
            words,
            word_ids,
        })
    }

    pub fn from_spec(spec: &VerbalizerSpec, tokenizer: &Tokenizer) -> Result<Self> {
        Self::new(spec.pairs.clone(), tokenizer)
    }

    pub fn spec(&self) -> VerbalizerSpec {
        VerbalizerSpec {
            pairs: self.labels.iter().cloned().zip(self.words.iter().cloned()).collect(),
        }
    }

    fn from_static(pairs: &[(&str, &str)], tokenizer: &Tokenizer) -> Result<Self> {
        Self::new(
            pairs.iter().map(|&(l, w)| (Label::new(l), w.to_string())).collect(),
            tokenizer,
        )
    }

    /// `1 -> true`, `0 -> false`.
    pub fn ranking(tokenizer: &Tokenizer) -> Result<Self> {
        Self::from_static(&[("1", "true"), ("0", "false")], tokenizer)
    }

    /// `1 -> relevant`, `0 -> irrelevant`, for mask templates.
    pub fn ranking_mask(tokenizer: &Tokenizer) -> Result<Self> {
        Self::from_static(&[("1", "relevant"), ("0", "irrelevant")], tokenizer)
    }

    pub fn nli(tokenizer: &Tokenizer) -> Result<Self> {
        Self::from_static(
            &[("entailment", "yes"), ("neutral", "maybe"), ("contradiction", "no")],
            tokenizer,
        )
    }

    pub fn answerability(tokenizer: &Tokenizer) -> Result<Self> {
        Self::from_static(&[("answerable", "true"), ("unanswerable", "false")], tokenizer)
    }

    pub fn verbalize(&self, label: &Label) -> Result<&str> {
        self.index_of(label).map(|i| self.words[i].as_str())
    }

    pub fn deverbalize(&self, word: &str) -> Result<&Label> {
        self.words
            .iter()
            .position(|w| w == word)
            .map(|i| &self.labels[i])
            .ok_or_else(|| Error::invalid(format!("\"{word}\" is not a label word")))
    }

    pub fn index_of(&self, label: &Label) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::invalid(format!("label \"{label}\" is not in the verbalizer")))
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word_ids(&self) -> &[TokenId] {
        &self.word_ids
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}
