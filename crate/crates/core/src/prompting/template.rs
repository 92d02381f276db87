use std::fmt;

use serde::{Deserialize, Serialize};

use super::tokenizer::{split_words, TokenId, Tokenizer, MASK_ID};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateKind {
    /// Literal prompt words around the slots; read from the first decoder token.
    Seq2seqManual,
    /// Fill-in-the-blank with a `[MASK]`, hand written.
    MaskManual,
    /// Fill-in-the-blank with a `[MASK]`, from an external generator.
    MaskAuto,
    /// Trainable prompt vectors `[s1] [q] [s2] [d] [s3]`.
    Continuous,
    /// Query and document only, every prompt word removed.
    NoneWords,
}

impl TemplateKind {
    pub fn is_mask(self) -> bool {
        matches!(self, TemplateKind::MaskManual | TemplateKind::MaskAuto)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Slot {
    #[serde(rename = "q")]
    Query,
    #[serde(rename = "d")]
    Document,
    #[serde(rename = "mask")]
    Mask,
    #[serde(rename = "s1")]
    S1,
    #[serde(rename = "s2")]
    S2,
    #[serde(rename = "s3")]
    S3,
}

impl Slot {
    fn marker(self) -> &'static str {
        match self {
            Slot::Query => "[q]",
            Slot::Document => "[d]",
            Slot::Mask => "[MASK]",
            Slot::S1 => "[s1]",
            Slot::S2 => "[s2]",
            Slot::S3 => "[s3]",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Piece {
    Lit(String),
    Slot(Slot),
}

/// A prompt pattern: literal text and slots concatenated verbatim.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawTemplate")]
pub struct Template {
    kind: TemplateKind,
    pieces: Vec<Piece>,
}

#[derive(Deserialize)]
struct RawTemplate {
    kind: TemplateKind,
    pieces: Vec<Piece>,
}

impl TryFrom<RawTemplate> for Template {
    type Error = Error;
    fn try_from(raw: RawTemplate) -> Result<Self> {
        Template::new(raw.kind, raw.pieces)
    }
}

/// Token ids of a rendered pair, with the query and document spans marked.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedPair {
    pub ids: Vec<TokenId>,
    /// Number of document tokens dropped to fit the length limit.
    pub truncated: usize,
}

impl EncodedPair {
    pub fn mask_positions(&self) -> Vec<usize> {
        self.ids
            .iter()
            .enumerate()
            .filter(|(_, &t)| t == MASK_ID)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Query and document tokens for a continuous prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContinuousSlots {
    pub query: Vec<TokenId>,
    pub document: Vec<TokenId>,
}

impl Template {
    pub fn new(kind: TemplateKind, pieces: Vec<Piece>) -> Result<Self> {
        let count = |slot: Slot| pieces.iter().filter(|p| **p == Piece::Slot(slot)).count();
        if count(Slot::Query) != 1 || count(Slot::Document) != 1 {
            return Err(Error::invalid("a template needs exactly one [q] and one [d] slot"));
        }
        let masks = count(Slot::Mask);
        if kind.is_mask() && masks != 1 {
            return Err(Error::invalid(format!(
                "{kind:?} template needs exactly one [MASK], found {masks}"
            )));
        }
        if !kind.is_mask() && masks != 0 {
            return Err(Error::invalid(format!("{kind:?} template cannot contain [MASK]")));
        }
        let soft = [Slot::S1, Slot::S2, Slot::S3].map(count);
        match kind {
            TemplateKind::Continuous => {
                if soft != [1, 1, 1] {
                    return Err(Error::invalid(
                        "continuous template needs each of [s1], [s2], [s3] exactly once",
                    ));
                }
            }
            _ if soft != [0, 0, 0] => {
                return Err(Error::invalid("[s1]/[s2]/[s3] only belong in continuous templates"));
            }
            _ => {}
        }
        if matches!(kind, TemplateKind::Continuous | TemplateKind::NoneWords) {
            let has_words = pieces
                .iter()
                .any(|p| matches!(p, Piece::Lit(s) if !s.trim().is_empty()));
            if has_words {
                return Err(Error::invalid(format!("{kind:?} template cannot contain prompt words")));
            }
        }
        Ok(Self { kind, pieces })
    }

    /// Parses a pattern such as `"Query: [q] Document: [d] Relevant:"`.
    pub fn parse(kind: TemplateKind, pattern: &str) -> Result<Self> {
        const SLOTS: [Slot; 6] = [
            Slot::Query,
            Slot::Document,
            Slot::Mask,
            Slot::S1,
            Slot::S2,
            Slot::S3,
        ];
        let mut pieces = Vec::new();
        let mut lit = String::new();
        let mut rest = pattern;
        'outer: while !rest.is_empty() {
            for slot in SLOTS {
                if let Some(after) = rest.strip_prefix(slot.marker()) {
                    if !lit.is_empty() {
                        pieces.push(Piece::Lit(std::mem::take(&mut lit)));
                    }
                    pieces.push(Piece::Slot(slot));
                    rest = after;
                    continue 'outer;
                }
            }
            let c = rest.chars().next().expect("non-empty");
            lit.push(c);
            rest = &rest[c.len_utf8()..];
        }
        if !lit.is_empty() {
            pieces.push(Piece::Lit(lit));
        }
        Self::new(kind, pieces)
    }

    /// `Query: [q] Document: [d] Relevant:`
    pub fn seq2seq_manual() -> Self {
        Self::parse(TemplateKind::Seq2seqManual, "Query: [q] Document: [d] Relevant:")
            .expect("valid template")
    }

    /// `[q] [d]`
    pub fn none_words() -> Self {
        Self::parse(TemplateKind::NoneWords, "[q] [d]").expect("valid template")
    }

    /// `[q] is [MASK] (relevant|irrelevant) to [d]`
    pub fn mask_manual() -> Self {
        Self::parse(TemplateKind::MaskManual, "[q] is [MASK] (relevant|irrelevant) to [d]")
            .expect("valid template")
    }

    /// `[s1] [q] [s2] [d] [s3]`
    pub fn continuous() -> Self {
        Self::parse(TemplateKind::Continuous, "[s1] [q] [s2] [d] [s3]").expect("valid template")
    }

    pub fn kind(&self) -> TemplateKind {
        self.kind
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    /// Literal prompt text in order.
    pub fn literals(&self) -> impl Iterator<Item = &str> {
        self.pieces.iter().filter_map(|p| match p {
            Piece::Lit(s) => Some(s.as_str()),
            Piece::Slot(_) => None,
        })
    }

    /// Substitutes the slots of any discrete template.
    pub fn render(&self, query: &str, document: &str) -> Result<String> {
        if self.kind == TemplateKind::Continuous {
            return Err(Error::invalid("continuous templates have no string rendering"));
        }
        let mut out = String::new();
        for p in &self.pieces {
            match p {
                Piece::Lit(s) => out.push_str(s),
                Piece::Slot(Slot::Query) => out.push_str(query),
                Piece::Slot(Slot::Document) => out.push_str(document),
                Piece::Slot(Slot::Mask) => out.push_str(Slot::Mask.marker()),
                Piece::Slot(_) => unreachable!("validated at construction"),
            }
        }
        Ok(out)
    }

    pub fn render_seq2seq(&self, query: &str, document: &str) -> Result<String> {
        if !matches!(self.kind, TemplateKind::Seq2seqManual | TemplateKind::NoneWords) {
            return Err(Error::invalid(format!(
                "render_seq2seq needs a seq2seq or no-word template, got {:?}",
                self.kind
            )));
        }
        self.render(query, document)
    }

    pub fn render_mask(&self, query: &str, document: &str) -> Result<String> {
        if !self.kind.is_mask() {
            return Err(Error::invalid(format!(
                "render_mask needs a mask template, got {:?}",
                self.kind
            )));
        }
        self.render(query, document)
    }

    /// Tokenizes a discrete template with its slots filled, dropping document
    /// tokens from the right when the result would exceed `max_len`.
    pub fn encode(
        &self,
        tokenizer: &Tokenizer,
        query: &str,
        document: &str,
        max_len: usize,
    ) -> Result<EncodedPair> {
        if self.kind == TemplateKind::Continuous {
            return Err(Error::invalid("use encode_continuous for continuous templates"));
        }
        let doc = tokenizer.encode(document);
        let mut fixed: Vec<(Option<Vec<TokenId>>, bool)> = Vec::new();
        let mut fixed_len = 0;
        for p in &self.pieces {
            let ids = match p {
                Piece::Lit(s) => tokenizer.encode(s),
                Piece::Slot(Slot::Query) => tokenizer.encode(query),
                Piece::Slot(Slot::Mask) => vec![MASK_ID],
                Piece::Slot(Slot::Document) => {
                    fixed.push((None, true));
                    continue;
                }
                Piece::Slot(_) => unreachable!("validated at construction"),
            };
            fixed_len += ids.len();
            fixed.push((Some(ids), false));
        }
        if fixed_len > max_len {
            return Err(Error::invalid(format!(
                "query and template take {fixed_len} tokens, over the limit of {max_len}"
            )));
        }
        let keep = doc.len().min(max_len - fixed_len);
        let mut ids = Vec::with_capacity(fixed_len + keep);
        for (part, is_doc) in fixed {
            if is_doc {
                ids.extend_from_slice(&doc[..keep]);
            } else if let Some(part) = part {
                ids.extend(part);
            }
        }
        Ok(EncodedPair {
            ids,
            truncated: doc.len() - keep,
        })
    }

    /// Query and document tokens for a continuous template whose prompt
    /// segments take `prompt_len` positions in total.
    pub fn encode_continuous(
        &self,
        tokenizer: &Tokenizer,
        query: &str,
        document: &str,
        prompt_len: usize,
        max_len: usize,
    ) -> Result<ContinuousSlots> {
        if self.kind != TemplateKind::Continuous {
            return Err(Error::invalid("encode_continuous needs a continuous template"));
        }
        let query_ids = tokenizer.encode(query);
        let fixed = query_ids.len() + prompt_len;
        if fixed > max_len {
            return Err(Error::invalid(format!(
                "query and prompt take {fixed} tokens, over the limit of {max_len}"
            )));
        }
        let mut doc = tokenizer.encode(document);
        doc.truncate(max_len - fixed);
        Ok(ContinuousSlots {
            query: query_ids,
            document: doc,
        })
    }

    /// Every word the template itself contributes (for building a vocabulary).
    pub fn prompt_words(&self) -> Vec<String> {
        self.literals().flat_map(split_words).collect()
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.pieces {
            match p {
                Piece::Lit(s) => f.write_str(s)?,
                Piece::Slot(s) => f.write_str(s.marker())?,
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn manual_seq2seq_rendering() {
        let t = Template::seq2seq_manual();
        assert_eq!(
            t.render_seq2seq("hello", "world").unwrap(),
            "Query: hello Document: world Relevant:"
        );
        assert_eq!(t.render_seq2seq("", "x").unwrap(), "Query:  Document: x Relevant:");
        assert_eq!(
            Template::none_words().render_seq2seq("hello", "world").unwrap(),
            "hello world"
        );
        assert!(t.render_mask("a", "b").is_err());
    }

    #[test]
    fn mask_rendering() {
        let t = Template::mask_manual();
        assert_eq!(
            t.render_mask("apple", "fruit facts").unwrap(),
            "apple is [MASK] (relevant|irrelevant) to fruit facts"
        );
        let auto = Template::parse(TemplateKind::MaskAuto, "[q]? Which is [MASK]? [d]").unwrap();
        assert_eq!(auto.render_mask("a", "b").unwrap(), "a? Which is [MASK]? b");
        assert!(auto.render_seq2seq("a", "b").is_err());
    }

    #[test]
    fn invariants_enforced_at_construction() {
        assert!(Template::parse(TemplateKind::MaskManual, "[q] is relevant to [d]").is_err());
        assert!(Template::parse(TemplateKind::Seq2seqManual, "Query: [q]").is_err());
        assert!(Template::parse(TemplateKind::Seq2seqManual, "[q] [q] [d]").is_err());
        assert!(Template::parse(TemplateKind::Continuous, "[s1] [q] [d] [s3]").is_err());
        assert!(Template::parse(TemplateKind::NoneWords, "Q: [q] [d]").is_err());
        assert!(Template::parse(TemplateKind::Seq2seqManual, "[q] [MASK] [d]").is_err());
    }

    #[test]
    fn json_round_trip_and_validation() {
        let t = Template::seq2seq_manual();
        let json = serde_json::to_string(&t).unwrap();
        assert!(json.contains(r#""kind":"seq2seq_manual""#));
        assert!(json.contains(r#"{"slot":"q"}"#) && json.contains(r#"{"lit":"Query: "}"#));
        assert_eq!(serde_json::from_str::<Template>(&json).unwrap(), t);
        let bad = r#"{"kind":"mask_manual","pieces":[{"slot":"q"},{"slot":"d"}]}"#;
        assert!(serde_json::from_str::<Template>(bad).is_err());
    }

    #[test]
    fn truncation_drops_document_tail_only() {
        let tok = Tokenizer::from_texts(["query document relevant : a b c d e f"]);
        let t = Template::seq2seq_manual();
        let full = t.encode(&tok, "a", "b c d e f", 64).unwrap();
        assert_eq!(full.ids.len(), 12);
        assert_eq!(full.truncated, 0);
        let cut = t.encode(&tok, "a", "b c d e f", 9).unwrap();
        assert_eq!(cut.ids.len(), 9);
        assert_eq!(cut.truncated, 3);
        assert_eq!(tok.decode(&cut.ids), vec!["query", ":", "a", "document", ":", "b", "c", "relevant", ":"]);
        assert!(t.encode(&tok, "a b c d e f", "b", 8).is_err());
    }

    proptest! {
        #[test]
        fn rendering_keeps_slots_and_prompt_words(q in "[a-z ]{0,20}", d in "[a-z ]{0,40}") {
            for t in [Template::seq2seq_manual(), Template::mask_manual(), Template::none_words()] {
                let s = t.render(&q, &d).unwrap();
                prop_assert!(s.contains(&q) && s.contains(&d));
                let mut at = 0;
                for lit in t.literals().filter(|l| !l.trim().is_empty()) {
                    let found = s[at..].find(lit);
                    prop_assert!(found.is_some());
                    at += found.unwrap() + lit.len();
                }
            }
        }

        #[test]
        fn encoding_matches_tokenized_rendering(q in "[a-e ]{0,12}", d in "[a-e ]{0,30}") {
            let tok = Tokenizer::from_texts(["query document relevant : is ( | ) to irrelevant a b c d e"]);
            for t in [Template::seq2seq_manual(), Template::mask_manual(), Template::none_words()] {
                let rendered = tok.encode(&t.render(&q, &d).unwrap());
                prop_assert_eq!(t.encode(&tok, &q, &d, 512).unwrap().ids, rendered);
            }
        }
    }
}
