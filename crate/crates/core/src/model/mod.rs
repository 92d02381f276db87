//! Relevance scoring through a label-word softmax.
//!
//! A scorer exposes the hidden state of its decision token (the first decoder
//! token of an encoder-decoder model, or the `[MASK]` position of an
//! encoder-only one) and the language-modeling head rows of the label words.
//! The probability of a task label is the softmax of `w_word · h` taken over
//! the verbalizer's words only.

pub mod checkpoint;
pub mod micro;
pub mod tape;
pub mod tensor;

use serde::{Deserialize, Serialize};

pub use micro::{Architecture, MicroModel, MicroModelConfig};
pub use tensor::{Scalar, Tensor};

use crate::prompting::continuous::ContinuousPrompt;
use crate::prompting::template::ContinuousSlots;
use crate::prompting::tokenizer::{TokenId, MASK_ID};
use crate::prompting::verbalizer::{Label, Verbalizer};
use crate::{Error, Result};

/// What a scorer reads: token ids, a continuous prompt with its query and
/// document tokens, or a ready-made embedding sequence.
#[derive(Debug, Clone, Copy)]
pub enum ModelInput<'a, F: Scalar = f32> {
    Tokens(&'a [TokenId]),
    Continuous {
        prompt: &'a ContinuousPrompt<F>,
        slots: &'a ContinuousSlots,
    },
    Embeddings(&'a Tensor<F>),
}

impl<F: Scalar> ModelInput<'_, F> {
    pub fn len(&self) -> usize {
        match self {
            ModelInput::Tokens(t) => t.len(),
            ModelInput::Continuous { prompt, slots } => {
                prompt.total_len() + slots.query.len() + slots.document.len()
            }
            ModelInput::Embeddings(e) => e.rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A model that can be scored through a label-word head.
pub trait ScorerModel<F: Scalar = f32>: Send + Sync {
    fn architecture(&self) -> Architecture;

    fn d_model(&self) -> usize;

    /// Hidden representation of the decision token.
    fn decision_state(&self, input: ModelInput<'_, F>) -> Result<Vec<f64>>;

    /// Language-modeling head rows for the given tokens.
    fn label_word_vectors(&self, words: &[TokenId]) -> Result<Vec<Vec<f64>>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreOutput {
    pub h_t: Vec<f64>,
    /// Label word -> `w · h_t`, in verbalizer order.
    pub logits: Vec<(String, f64)>,
    /// Task label -> probability, in verbalizer order.
    pub probs: Vec<(Label, f64)>,
}

impl ScoreOutput {
    pub fn prob(&self, label: &Label) -> Result<f64> {
        self.probs
            .iter()
            .find(|(l, _)| l == label)
            .map(|(_, p)| *p)
            .ok_or_else(|| Error::invalid(format!("label \"{label}\" not scored")))
    }

    /// Builds the output from label-word logits already in verbalizer order.
    pub fn from_logits(verbalizer: &Verbalizer, h_t: Vec<f64>, logits: Vec<f64>) -> Self {
        let probs = restricted_softmax(&logits);
        Self {
            h_t,
            logits: verbalizer.words().iter().cloned().zip(logits).collect(),
            probs: verbalizer.labels().iter().cloned().zip(probs).collect(),
        }
    }
}

/// Softmax over label-word logits only.
pub fn restricted_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn score_with<F: Scalar, M: ScorerModel<F> + ?Sized>(
    model: &M,
    verbalizer: &Verbalizer,
    input: ModelInput<'_, F>,
) -> Result<ScoreOutput> {
    let h_t = model.decision_state(input)?;
    let rows = model.label_word_vectors(verbalizer.word_ids())?;
    let logits = rows
        .iter()
        .map(|w| w.iter().zip(&h_t).map(|(a, b)| a * b).sum())
        .collect();
    Ok(ScoreOutput::from_logits(verbalizer, h_t, logits))
}

/// Label probabilities read from the first decoder token.
pub fn score_pair<F: Scalar, M: ScorerModel<F> + ?Sized>(
    model: &M,
    verbalizer: &Verbalizer,
    input: ModelInput<'_, F>,
) -> Result<ScoreOutput> {
    if model.architecture() != Architecture::EncoderDecoder {
        return Err(Error::invalid("score_pair needs an encoder-decoder model"));
    }
    score_with(model, verbalizer, input)
}

/// Label probabilities read from the single `[MASK]` position.
pub fn score_mask_pair<F: Scalar, M: ScorerModel<F> + ?Sized>(
    model: &M,
    verbalizer: &Verbalizer,
    tokens: &[TokenId],
) -> Result<ScoreOutput> {
    if model.architecture() != Architecture::EncoderOnly {
        return Err(Error::invalid("score_mask_pair needs an encoder-only model"));
    }
    let masks = tokens.iter().filter(|&&t| t == MASK_ID).count();
    if masks != 1 {
        return Err(Error::invalid(format!("expected exactly one [MASK], found {masks}")));
    }
    score_with(model, verbalizer, ModelInput::Tokens(tokens))
}

/// Dispatches on the model architecture.
pub fn score_any<F: Scalar, M: ScorerModel<F> + ?Sized>(
    model: &M,
    verbalizer: &Verbalizer,
    input: ModelInput<'_, F>,
) -> Result<ScoreOutput> {
    match (model.architecture(), input) {
        (Architecture::EncoderOnly, ModelInput::Tokens(t)) => score_mask_pair(model, verbalizer, t),
        (Architecture::EncoderOnly, _) => Err(Error::invalid(
            "encoder-only models score token inputs with a [MASK]",
        )),
        (Architecture::EncoderDecoder, input) => score_pair(model, verbalizer, input),
    }
}

/// Cross-entropy of the gold label: `-ln P(y)`.
pub fn ce_loss(output: &ScoreOutput, gold: &Label) -> Result<f64> {
    let p = output.prob(gold)?;
    let loss = -p.ln();
    Ok(if loss <= 0.0 { 0.0 } else { loss })
}
