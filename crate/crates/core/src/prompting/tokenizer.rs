//! Word-level vocabulary and tokenizer.
//!
//! Text is lowercased and split into alphanumeric runs; every other
//! non-whitespace character is a token of its own. `[MASK]` is recognized
//! verbatim.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type TokenId = u32;

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const MASK: &str = "[MASK]";
pub const BOS: &str = "[BOS]";

pub const PAD_ID: TokenId = 0;
pub const UNK_ID: TokenId = 1;
pub const MASK_ID: TokenId = 2;
pub const BOS_ID: TokenId = 3;

const SPECIALS: [&str; 4] = [PAD, UNK, MASK, BOS];

/// Splits text into word tokens (not yet mapped to ids).
pub fn split_words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    let mut rest = text;
    while let Some(c) = rest.chars().next() {
        if rest.starts_with(MASK) {
            flush(&mut word, &mut out);
            out.push(MASK.to_string());
            rest = &rest[MASK.len()..];
            continue;
        }
        if c.is_alphanumeric() {
            word.extend(c.to_lowercase());
        } else {
            flush(&mut word, &mut out);
            if !c.is_whitespace() {
                out.push(c.to_string());
            }
        }
        rest = &rest[c.len_utf8()..];
    }
    flush(&mut word, &mut out);
    out
}

fn flush(word: &mut String, out: &mut Vec<String>) {
    if !word.is_empty() {
        out.push(std::mem::take(word));
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tokenizer {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    tokens: Vec<String>,
}

impl Tokenizer {
    /// Vocabulary of the special tokens followed by every distinct word of
    /// `texts`, in first-seen order.
    pub fn from_texts<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        let mut index: HashMap<String, TokenId> = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as TokenId))
            .collect();
        for text in texts {
            for w in split_words(text) {
                if !index.contains_key(&w) {
                    index.insert(w.clone(), tokens.len() as TokenId);
                    tokens.push(w);
                }
            }
        }
        Self { tokens, index }
    }

    /// Like [`Tokenizer::from_texts`] but keeping only the `max_size` most
    /// frequent words (ties by first occurrence); `required` texts are always
    /// kept.
    pub fn from_corpus<'a>(
        required: impl IntoIterator<Item = &'a str>,
        corpus: impl IntoIterator<Item = &'a str>,
        max_size: usize,
    ) -> Self {
        let mut base = Self::from_texts(required);
        let mut counts: HashMap<String, (usize, usize)> = HashMap::new();
        let mut order = 0;
        for text in corpus {
            for w in split_words(text) {
                let entry = counts.entry(w).or_insert_with(|| {
                    order += 1;
                    (0, order)
                });
                entry.0 += 1;
            }
        }
        let mut ranked: Vec<(String, (usize, usize))> = counts
            .into_iter()
            .filter(|(w, _)| !base.index.contains_key(w))
            .collect();
        ranked.sort_by(|a, b| b.1 .0.cmp(&a.1 .0).then(a.1 .1.cmp(&b.1 .1)));
        for (w, _) in ranked {
            if base.tokens.len() >= max_size {
                break;
            }
            base.index.insert(w.clone(), base.tokens.len() as TokenId);
            base.tokens.push(w);
        }
        base
    }

    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        for (i, s) in SPECIALS.iter().enumerate() {
            if tokens.get(i).map(String::as_str) != Some(s) {
                return Err(Error::invalid(format!("vocabulary must start with {SPECIALS:?}")));
            }
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as TokenId).is_some() {
                return Err(Error::DuplicateId(t.clone()));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        split_words(text)
            .iter()
            .map(|w| self.id(w).unwrap_or(UNK_ID))
            .collect()
    }

    pub fn decode(&self, ids: &[TokenId]) -> Vec<&str> {
        ids.iter().map(|&i| self.token(i).unwrap_or(UNK)).collect()
    }

    /// The id of `word` if it is exactly one known token.
    pub fn single_token(&self, word: &str) -> Result<TokenId> {
        match split_words(word).as_slice() {
            [w] => self
                .id(w)
                .ok_or_else(|| Error::invalid(format!("label word \"{word}\" is not in the vocabulary"))),
            other => Err(Error::invalid(format!(
                "label word \"{word}\" must be a single token, got {} tokens",
                other.len()
            ))),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&VocabFile {
            tokens: self.tokens.clone(),
        })?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: VocabFile = serde_json::from_str(s)?;
        Self::from_tokens(file.tokens)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}
