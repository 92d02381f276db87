use rayon::prelude::*;

use crate::corpus::{Collection, Queries, Run};
use crate::model::{score_any, ScoreOutput, ScorerModel};
use crate::prompting::{ContinuousPrompt, EncodedInput, Label, Template, Tokenizer, Verbalizer};
use crate::{Error, Result};

/// Anything that maps a `(query, document)` pair to a relevance score.
pub trait PairScorer: Sync {
    fn relevance(&self, query: &str, document: &str) -> Result<f64>;
}

impl<F: Fn(&str, &str) -> Result<f64> + Sync> PairScorer for F {
    fn relevance(&self, query: &str, document: &str) -> Result<f64> {
        self(query, document)
    }
}

/// A model read through a template and verbalizer; the relevance score is
/// the probability of the relevant label.
#[derive(Clone, Copy)]
pub struct PromptRanker<'a, M: ScorerModel + ?Sized> {
    pub model: &'a M,
    pub tokenizer: &'a Tokenizer,
    pub template: &'a Template,
    pub verbalizer: &'a Verbalizer,
    pub prompt: Option<&'a ContinuousPrompt>,
    pub max_len: usize,
}

impl<'a, M: ScorerModel + ?Sized> PromptRanker<'a, M> {
    pub fn new(
        model: &'a M,
        tokenizer: &'a Tokenizer,
        template: &'a Template,
        verbalizer: &'a Verbalizer,
        max_len: usize,
    ) -> Self {
        Self {
            model,
            tokenizer,
            template,
            verbalizer,
            prompt: None,
            max_len,
        }
    }

    pub fn with_prompt(mut self, prompt: &'a ContinuousPrompt) -> Self {
        self.prompt = Some(prompt);
        self
    }

    pub fn encode(&self, query: &str, document: &str) -> Result<EncodedInput> {
        let prompt_len = self.prompt.map_or(0, ContinuousPrompt::total_len);
        EncodedInput::encode(self.template, self.tokenizer, query, document, self.max_len, prompt_len)
    }

    /// Full label-word output for one pair.
    pub fn score(&self, query: &str, document: &str) -> Result<ScoreOutput> {
        let enc = self.encode(query, document)?;
        score_any(self.model, self.verbalizer, enc.model_input(self.prompt)?)
    }
}

impl<M: ScorerModel + ?Sized> PairScorer for PromptRanker<'_, M> {
    fn relevance(&self, query: &str, document: &str) -> Result<f64> {
        self.score(query, document)?.prob(&Label::relevant())
    }
}

/// Rescores the top `depth` first-stage candidates of every query and sorts
/// them by descending score, ties by ascending docid.
pub fn rerank<S: PairScorer + ?Sized>(
    scorer: &S,
    first_stage: &Run,
    queries: &Queries,
    collection: &Collection,
    depth: usize,
    tag: &str,
) -> Result<Run> {
    if depth == 0 {
        return Err(Error::config("depth", "must be at least 1"));
    }
    let lists: Vec<(&str, Vec<&str>)> = first_stage
        .iter()
        .map(|(q, e)| (q, e.iter().take(depth).map(|x| x.docid.as_str()).collect()))
        .collect();
    let scored: Vec<(String, Vec<(String, f64)>)> = lists
        .par_iter()
        .map(|(qid, docs)| {
            let query = queries.lookup(qid)?;
            let mut ranked = docs
                .iter()
                .map(|&docid| {
                    let doc = collection.lookup(docid)?;
                    let s = scorer
                        .relevance(&query.text, &doc.text)
                        .map_err(|e| e.context(format!("scoring ({qid}, {docid})")))?;
                    if s.is_nan() {
                        return Err(Error::invalid(format!("NaN score for ({qid}, {docid})")));
                    }
                    Ok((docid.to_string(), s))
                })
                .collect::<Result<Vec<_>>>()?;
            ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            Ok((qid.to_string(), ranked))
        })
        .collect::<Result<_>>()?;
    let mut run = Run::new();
    for (qid, ranked) in scored {
        run.set_ranked(&qid, ranked, tag)?;
    }
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Document, Query};

    fn fixture() -> (Run, Queries, Collection) {
        let collection = Collection::new(vec![
            Document::new("a", "x"),
            Document::new("b", "x x x"),
            Document::new("c", "x x"),
            Document::new("d", "x x"),
        ])
        .unwrap();
        let queries = Queries::new(vec![Query::new("q", "x")]).unwrap();
        let mut run = Run::new();
        let list = ["a", "b", "c", "d"].iter().enumerate().map(|(i, d)| (d.to_string(), 4.0 - i as f64)).collect();
        run.set_ranked("q", list, "bm25").unwrap();
        (run, queries, collection)
    }

    #[test]
    fn orders_by_score_then_docid() {
        let (run, queries, collection) = fixture();
        let by_len = |_: &str, d: &str| Ok(d.len() as f64 / 10.0);
        let out = rerank(&by_len, &run, &queries, &collection, 3, "re").unwrap();
        assert_eq!(out.ranked_docids("q"), vec!["b", "c", "a"]);
        let out = rerank(&by_len, &run, &queries, &collection, 4, "re").unwrap();
        assert_eq!(out.ranked_docids("q"), vec!["b", "c", "d", "a"]);
        let top = rerank(&by_len, &run, &queries, &collection, 1, "re").unwrap();
        assert_eq!(top.ranked_docids("q"), vec!["a"]);
        assert!(rerank(&by_len, &run, &queries, &collection, 0, "re").is_err());
    }

    #[test]
    fn missing_document_is_named() {
        let (mut run, queries, collection) = fixture();
        run.set_ranked("q", vec![("zz".into(), 1.0)], "bm25").unwrap();
        let err = rerank(&|_: &str, _: &str| Ok(0.5), &run, &queries, &collection, 5, "re").unwrap_err();
        assert!(err.to_string().contains("zz"), "{err}");
    }
}
