//! Small generated stand-ins for an entailment task, an answerability task
//! and a ranking corpus, all over one made-up vocabulary.
//!
//! Every task is about token containment. A hypothesis is entailed when all
//! of its words occur in the premise, a question is answerable when all of its
//! words occur in the passage, and a document is relevant when it contains
//! every query term. Ranking distractors repeat the query's rare term in a
//! short document, which BM25 tends to prefer over the true positive.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tasks::{TaskExample, TaskSpec};
use crate::corpus::{Collection, Document, Qrels, Queries, Query};
use crate::prompting::continuous::DEFAULT_INIT_TEXTS;
use crate::prompting::tokenizer::Tokenizer;
use crate::prompting::{Label, Template, TemplateKind, Verbalizer};
use crate::rng::{self, StageRng};
use crate::Result;

pub const NLI_TEMPLATE: &str = "Hypothesis: [q] Premise: [d] Entailment:";
pub const QA_TEMPLATE: &str = "Question: [q] Passage: [d] Answerable:";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub nli_examples: usize,
    pub qa_examples: usize,
    pub docs: usize,
    pub queries: usize,
    /// Frequent words, drawn as filler about half of the time.
    pub common_words: usize,
    pub rare_words: usize,
    pub min_len: usize,
    pub max_len: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            nli_examples: 20000,
            qa_examples: 20000,
            docs: 200,
            queries: 60,
            common_words: 20,
            rare_words: 280,
            min_len: 6,
            max_len: 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticTasks {
    pub tokenizer: Tokenizer,
    pub nli_like: TaskSpec,
    pub qa_like: TaskSpec,
    pub collection: Collection,
    pub queries: Queries,
    pub qrels: Qrels,
}

struct Words {
    common: Vec<String>,
    rare: Vec<String>,
}

impl Words {
    fn new(cfg: &SyntheticConfig) -> Self {
        let word = |i: usize| format!("w{i:03}");
        Self {
            common: (0..cfg.common_words).map(word).collect(),
            rare: (cfg.common_words..cfg.common_words + cfg.rare_words).map(word).collect(),
        }
    }

    fn filler(&self, rng: &mut StageRng) -> &str {
        if rng.random_bool(0.5) {
            self.common.choose(rng).expect("common words")
        } else {
            self.rare.choose(rng).expect("rare words")
        }
    }

    /// Two distinct words: one rare, one common, in random order.
    fn pair(&self, rng: &mut StageRng) -> [String; 2] {
        let r = self.rare.choose(rng).expect("rare words").clone();
        let c = self.common.choose(rng).expect("common words").clone();
        if rng.random_bool(0.5) {
            [r, c]
        } else {
            [c, r]
        }
    }

    /// `len` filler words avoiding `banned`.
    fn text(&self, rng: &mut StageRng, len: usize, banned: &[&str]) -> Vec<String> {
        let mut out = Vec::with_capacity(len);
        while out.len() < len {
            let w = self.filler(rng);
            if !banned.contains(&w) {
                out.push(w.to_string());
            }
        }
        out
    }
}

fn insert_at_random(rng: &mut StageRng, text: &mut Vec<String>, word: &str, times: usize) {
    for _ in 0..times {
        let at = rng.random_range(0..=text.len());
        text.insert(at, word.to_string());
    }
}

/// A text of length in `[min_len, max_len]` holding each of `present`
/// (`times` copies) and none of `absent`.
fn compose(
    rng: &mut StageRng,
    words: &Words,
    cfg: &SyntheticConfig,
    present: &[(&str, usize)],
    absent: &[&str],
) -> String {
    let inserted: usize = present.iter().map(|p| p.1).sum();
    let len = rng.random_range(cfg.min_len..=cfg.max_len).saturating_sub(inserted).max(1);
    let mut banned: Vec<&str> = absent.to_vec();
    banned.extend(present.iter().map(|p| p.0));
    let mut text = words.text(rng, len, &banned);
    for &(w, times) in present {
        insert_at_random(rng, &mut text, w, times);
    }
    text.join(" ")
}

fn copies(rng: &mut StageRng) -> usize {
    if rng.random_bool(0.25) {
        2
    } else {
        1
    }
}

fn nli_examples(rng: &mut StageRng, words: &Words, cfg: &SyntheticConfig) -> Vec<TaskExample> {
    (0..cfg.nli_examples)
        .map(|i| {
            let [a, b] = words.pair(rng);
            let (label, premise) = match i % 3 {
                0 => {
                    let p = [(a.as_str(), copies(rng)), (b.as_str(), copies(rng))];
                    ("entailment", compose(rng, words, cfg, &p, &[]))
                }
                1 => {
                    let (inn, out) = if rng.random_bool(0.5) { (&a, &b) } else { (&b, &a) };
                    let k = rng.random_range(1..=3);
                    ("neutral", compose(rng, words, cfg, &[(inn, k)], &[out]))
                }
                _ => ("contradiction", compose(rng, words, cfg, &[], &[&a, &b])),
            };
            TaskExample {
                text_a: format!("{a} {b}"),
                text_b: premise,
                label: Label::new(label),
            }
        })
        .collect()
}

fn qa_examples(rng: &mut StageRng, words: &Words, cfg: &SyntheticConfig) -> Vec<TaskExample> {
    (0..cfg.qa_examples)
        .map(|i| {
            let [a, b] = words.pair(rng);
            let (label, passage) = if i % 2 == 0 {
                let p = [(a.as_str(), copies(rng)), (b.as_str(), copies(rng))];
                ("answerable", compose(rng, words, cfg, &p, &[]))
            } else if rng.random_bool(0.7) {
                let (inn, out) = if rng.random_bool(0.5) { (&a, &b) } else { (&b, &a) };
                let k = rng.random_range(1..=3);
                ("unanswerable", compose(rng, words, cfg, &[(inn, k)], &[out]))
            } else {
                ("unanswerable", compose(rng, words, cfg, &[], &[&a, &b]))
            };
            TaskExample {
                text_a: format!("{a} {b}"),
                text_b: passage,
                label: Label::new(label),
            }
        })
        .collect()
}

fn contains_all(doc: &str, terms: &[&str]) -> bool {
    let words: BTreeSet<&str> = doc.split(' ').collect();
    terms.iter().all(|t| words.contains(t))
}

fn ranking(
    rng: &mut StageRng,
    words: &Words,
    cfg: &SyntheticConfig,
) -> Result<(Collection, Queries, Qrels)> {
    let mut rare = words.rare.clone();
    rare.shuffle(rng);
    let n_queries = cfg.queries.min(rare.len());
    let mut queries = Vec::new();
    let mut docs: Vec<String> = Vec::new();
    let mut distractors: Vec<(usize, usize)> = Vec::new();
    for (qi, r) in rare.iter().take(n_queries).enumerate() {
        let c = words.common.choose(rng).expect("common words").clone();
        let text = if rng.random_bool(0.5) { format!("{r} {c}") } else { format!("{c} {r}") };
        queries.push(Query::new(format!("q{qi:03}"), text));
        docs.push(compose(rng, words, cfg, &[(r, 1), (&c, 1)], &[]));
        for _ in 0..2 {
            let short = SyntheticConfig {
                min_len: cfg.min_len.min(5),
                max_len: cfg.min_len.min(5) + 1,
                ..cfg.clone()
            };
            distractors.push((qi, docs.len()));
            docs.push(compose(rng, words, &short, &[(r, 3)], &[&c]));
        }
    }
    while docs.len() < cfg.docs {
        docs.push(compose(rng, words, cfg, &[], &[]));
    }
    let mut order: Vec<usize> = (0..docs.len()).collect();
    order.shuffle(rng);
    let mut id_of = vec![String::new(); docs.len()];
    for (pos, &i) in order.iter().enumerate() {
        id_of[i] = format!("d{pos:04}");
    }
    let mut qrels = Qrels::new();
    for q in &queries {
        let terms: Vec<&str> = q.text.split(' ').collect();
        for (i, d) in docs.iter().enumerate() {
            if contains_all(d, &terms) {
                qrels.insert(&q.id, &id_of[i], 1)?;
            }
        }
    }
    for (qi, di) in distractors {
        qrels.insert(&queries[qi].id, &id_of[di], 0)?;
    }
    let mut collection: Vec<Document> = docs
        .into_iter()
        .enumerate()
        .map(|(i, text)| Document::new(id_of[i].clone(), text))
        .collect();
    collection.sort_by(|a, b| a.id.cmp(&b.id));
    Ok((Collection::new(collection)?, Queries::new(queries)?, qrels))
}

pub fn nli_template() -> Template {
    Template::parse(TemplateKind::Seq2seqManual, NLI_TEMPLATE).expect("valid template")
}

pub fn qa_template() -> Template {
    Template::parse(TemplateKind::Seq2seqManual, QA_TEMPLATE).expect("valid template")
}

/// Every word any shipped template, verbalizer or prompt initialization uses.
fn prompt_vocabulary() -> Vec<String> {
    let mut texts: Vec<String> = vec![
        Template::seq2seq_manual().to_string(),
        Template::mask_manual().to_string(),
        NLI_TEMPLATE.into(),
        QA_TEMPLATE.into(),
        "[q]? Which is [MASK]? [d]".into(),
        "true false relevant irrelevant yes maybe no".into(),
    ];
    texts.extend(DEFAULT_INIT_TEXTS.iter().map(|s| s.to_string()));
    texts
}

/// Generates all three tasks; the same seed and sizes always yield the same
/// data.
pub fn make_synthetic_tasks(seed: u64, cfg: &SyntheticConfig) -> Result<SyntheticTasks> {
    let words = Words::new(cfg);
    let mut vocab_texts = prompt_vocabulary();
    vocab_texts.extend(words.common.iter().chain(&words.rare).cloned());
    let tokenizer = Tokenizer::from_texts(vocab_texts.iter().map(String::as_str));

    let mut rng = rng::substream(seed, "synthetic/nli");
    let nli = nli_examples(&mut rng, &words, cfg);
    let mut rng = rng::substream(seed, "synthetic/qa");
    let qa = qa_examples(&mut rng, &words, cfg);
    let mut rng = rng::substream(seed, "synthetic/ranking");
    let (collection, queries, qrels) = ranking(&mut rng, &words, cfg)?;

    let nli_like = TaskSpec::new("nli_like", nli, nli_template(), Verbalizer::nli(&tokenizer)?)?;
    let qa_like = TaskSpec::new("qa_like", qa, qa_template(), Verbalizer::answerability(&tokenizer)?)?;
    Ok(SyntheticTasks {
        tokenizer,
        nli_like,
        qa_like,
        collection,
        queries,
        qrels,
    })
}
