//! Prompt templates, verbalizers and continuous prompts.

pub mod candidates;
pub mod continuous;
pub mod template;
pub mod tokenizer;
pub mod verbalizer;

pub use candidates::{rank_template_candidates, TemplateCandidateSet};
pub use continuous::ContinuousPrompt;
pub use template::{Template, TemplateKind};
pub use tokenizer::Tokenizer;
pub use verbalizer::{Label, Verbalizer};

use crate::model::{ModelInput, Scalar};
use crate::{Error, Result};
use template::ContinuousSlots;
use tokenizer::TokenId;

/// A `(query, document)` pair encoded for one template.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EncodedInput {
    Tokens(Vec<TokenId>),
    Continuous(ContinuousSlots),
}

impl EncodedInput {
    /// `prompt_len` is the total continuous prompt length (ignored for
    /// discrete templates).
    pub fn encode(
        template: &Template,
        tokenizer: &Tokenizer,
        query: &str,
        document: &str,
        max_len: usize,
        prompt_len: usize,
    ) -> Result<Self> {
        if template.kind() == TemplateKind::Continuous {
            template
                .encode_continuous(tokenizer, query, document, prompt_len, max_len)
                .map(EncodedInput::Continuous)
        } else {
            template
                .encode(tokenizer, query, document, max_len)
                .map(|e| EncodedInput::Tokens(e.ids))
        }
    }

    pub fn model_input<'a, F: Scalar>(
        &'a self,
        prompt: Option<&'a ContinuousPrompt<F>>,
    ) -> Result<ModelInput<'a, F>> {
        match (self, prompt) {
            (EncodedInput::Tokens(t), _) => Ok(ModelInput::Tokens(t)),
            (EncodedInput::Continuous(slots), Some(prompt)) => {
                Ok(ModelInput::Continuous { prompt, slots })
            }
            (EncodedInput::Continuous(_), None) => {
                Err(Error::invalid("continuous template used without a prompt"))
            }
        }
    }
}

/// A tokenizer, template and verbalizer used together.
#[derive(Debug, Clone, Copy)]
pub struct Scheme<'a> {
    pub tokenizer: &'a Tokenizer,
    pub template: &'a Template,
    pub verbalizer: &'a Verbalizer,
}

impl<'a> Scheme<'a> {
    pub fn new(tokenizer: &'a Tokenizer, template: &'a Template, verbalizer: &'a Verbalizer) -> Self {
        Self {
            tokenizer,
            template,
            verbalizer,
        }
    }
}
