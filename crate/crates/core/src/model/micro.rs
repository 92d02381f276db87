//! A small pre-layer-norm transformer used as the reference scorer.
//!
//! The encoder-decoder variant runs the encoder over the prompt and a single
//! decoder step from `[BOS]`; the final decoder state is the decision token.
//! The encoder-only variant reads the encoder state at the `[MASK]` position.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::tape::{Graph, ParamGrads, Var};
use super::tensor::{Scalar, Tensor};
use super::{ModelInput, ScorerModel};
use crate::prompting::continuous::ContinuousPrompt;
use crate::prompting::tokenizer::{TokenId, BOS_ID, MASK_ID};
use crate::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    EncoderDecoder,
    EncoderOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MicroModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    /// Layers in the encoder, and in the decoder when there is one.
    pub n_layers: usize,
    pub n_heads: usize,
    pub max_len: usize,
    pub seed: u64,
    #[serde(default)]
    pub d_ff: Option<usize>,
    #[serde(default = "default_arch")]
    pub architecture: Architecture,
    /// Share the input embedding matrix as the language-modeling head.
    #[serde(default)]
    pub tie_embeddings: bool,
}

fn default_arch() -> Architecture {
    Architecture::EncoderDecoder
}

impl MicroModelConfig {
    pub fn new(vocab_size: usize, d_model: usize, n_layers: usize, n_heads: usize, seed: u64) -> Self {
        Self {
            vocab_size,
            d_model,
            n_layers,
            n_heads,
            max_len: 128,
            seed,
            d_ff: None,
            architecture: Architecture::EncoderDecoder,
            tie_embeddings: false,
        }
    }

    pub fn encoder_only(mut self) -> Self {
        self.architecture = Architecture::EncoderOnly;
        self
    }

    pub fn d_ff(&self) -> usize {
        self.d_ff.unwrap_or(4 * self.d_model)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("vocab_size", self.vocab_size),
            ("d_model", self.d_model),
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("max_len", self.max_len),
            ("d_ff", self.d_ff()),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(Error::config(field, "must be at least 1"));
            }
        }
        if self.d_model % self.n_heads != 0 {
            return Err(Error::config(
                "n_heads",
                format!("d_model {} is not divisible by {} heads", self.d_model, self.n_heads),
            ));
        }
        if self.vocab_size <= BOS_ID as usize {
            return Err(Error::config("vocab_size", "must cover the special tokens"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct AttnIds {
    ln_g: usize,
    ln_b: usize,
    wq: usize,
    wk: usize,
    wv: usize,
    wo: usize,
}

#[derive(Debug, Clone)]
struct FfnIds {
    ln_g: usize,
    ln_b: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

#[derive(Debug, Clone)]
struct EncLayer {
    attn: AttnIds,
    ffn: FfnIds,
}

#[derive(Debug, Clone)]
struct DecLayer {
    self_attn: AttnIds,
    cross_attn: AttnIds,
    ffn: FfnIds,
}

#[derive(Debug, Clone)]
struct Layout {
    embed: usize,
    lm_head: usize,
    encoder: Vec<EncLayer>,
    enc_ln: (usize, usize),
    decoder: Vec<DecLayer>,
    dec_ln: (usize, usize),
}

/// Named parameter tensors in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<F: Scalar> {
    names: Vec<String>,
    tensors: Vec<Tensor<F>>,
}

impl<F: Scalar> ParamSet<F> {
    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<F>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<F>] {
        &mut self.tensors
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// How parameters take part in a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradMode {
    /// Model parameters are trainable (keys = parameter index).
    Model,
    /// Only the three continuous prompt segments are trainable (keys 0..3).
    Prompt,
    /// Nothing is trainable.
    Frozen,
}

#[derive(Debug, Clone)]
pub struct MicroModel<F: Scalar = f32> {
    config: MicroModelConfig,
    params: ParamSet<F>,
    layout: Layout,
    positions: Tensor<F>,
}

struct Builder<'r, F: Scalar, R: Rng> {
    names: Vec<String>,
    tensors: Vec<Tensor<F>>,
    rng: &'r mut R,
}

impl<F: Scalar, R: Rng> Builder<'_, F, R> {
    fn add(&mut self, name: String, t: Tensor<F>) -> usize {
        self.names.push(name);
        self.tensors.push(t);
        self.tensors.len() - 1
    }

    fn normal(&mut self, name: String, rows: usize, cols: usize, std: f64) -> usize {
        let dist = Normal::new(0.0, std).expect("valid std");
        let data = (0..rows * cols).map(|_| F::of(dist.sample(self.rng))).collect();
        self.add(name, Tensor::from_vec(rows, cols, data))
    }

    fn filled(&mut self, name: String, cols: usize, v: f64) -> usize {
        self.add(name, Tensor::filled(1, cols, F::of(v)))
    }

    fn attn(&mut self, prefix: &str, d: usize, out_std: f64) -> AttnIds {
        let s = 1.0 / (d as f64).sqrt();
        AttnIds {
            ln_g: self.filled(format!("{prefix}.ln.gain"), d, 1.0),
            ln_b: self.filled(format!("{prefix}.ln.bias"), d, 0.0),
            wq: self.normal(format!("{prefix}.wq"), d, d, s),
            wk: {
                let wq = self.tensors.last().expect("wq").clone();
                self.add(format!("{prefix}.wk"), wq)
            },
            wv: self.normal(format!("{prefix}.wv"), d, d, s),
            wo: self.normal(format!("{prefix}.wo"), d, d, out_std),
        }
    }

    fn ffn(&mut self, prefix: &str, d: usize, ff: usize, out_std: f64) -> FfnIds {
        FfnIds {
            ln_g: self.filled(format!("{prefix}.ln.gain"), d, 1.0),
            ln_b: self.filled(format!("{prefix}.ln.bias"), d, 0.0),
            w1: self.normal(format!("{prefix}.w1"), d, ff, 1.0 / (d as f64).sqrt()),
            b1: self.filled(format!("{prefix}.b1"), ff, 0.0),
            w2: self.normal(format!("{prefix}.w2"), ff, d, out_std),
            b2: self.filled(format!("{prefix}.b2"), d, 0.0),
        }
    }
}

/// Sinusoidal position table, `max_len × d`.
fn sinusoids<F: Scalar>(max_len: usize, d: usize) -> Tensor<F> {
    let mut t = Tensor::zeros(max_len, d);
    for pos in 0..max_len {
        for i in 0..d {
            let freq = 1.0 / 10000f64.powf((2 * (i / 2)) as f64 / d as f64);
            let angle = pos as f64 * freq;
            let v = if i % 2 == 0 { angle.sin() } else { angle.cos() };
            t.set(pos, i, F::of(v));
        }
    }
    t
}

impl<F: Scalar> MicroModel<F> {
    /// Seeded initialization; the same config always yields the same weights.
    pub fn new(config: MicroModelConfig) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let ff = config.d_ff();
        let mut rng = rng::seeded(config.seed);
        let out_std = 1.0 / ((d as f64).sqrt() * (2.0 * config.n_layers as f64).sqrt());
        let mut b = Builder {
            names: Vec::new(),
            tensors: Vec::new(),
            rng: &mut rng,
        };
        let embed = b.normal("embed".into(), config.vocab_size, d, 1.0);
        let lm_head = if config.tie_embeddings {
            embed
        } else {
            b.normal("lm_head".into(), config.vocab_size, d, 1.0 / (d as f64).sqrt())
        };
        let encoder = (0..config.n_layers)
            .map(|l| EncLayer {
                attn: b.attn(&format!("enc.{l}.attn"), d, out_std),
                ffn: b.ffn(&format!("enc.{l}.ffn"), d, ff, out_std),
            })
            .collect();
        let enc_ln = (
            b.filled("enc.final_ln.gain".into(), d, 1.0),
            b.filled("enc.final_ln.bias".into(), d, 0.0),
        );
        let (decoder, dec_ln) = match config.architecture {
            Architecture::EncoderOnly => (Vec::new(), (usize::MAX, usize::MAX)),
            Architecture::EncoderDecoder => {
                let layers = (0..config.n_layers)
                    .map(|l| DecLayer {
                        self_attn: b.attn(&format!("dec.{l}.self_attn"), d, out_std),
                        cross_attn: b.attn(&format!("dec.{l}.cross_attn"), d, out_std),
                        ffn: b.ffn(&format!("dec.{l}.ffn"), d, ff, out_std),
                    })
                    .collect();
                let ln = (
                    b.filled("dec.final_ln.gain".into(), d, 1.0),
                    b.filled("dec.final_ln.bias".into(), d, 0.0),
                );
                (layers, ln)
            }
        };
        let params = ParamSet {
            names: b.names,
            tensors: b.tensors,
        };
        let positions = sinusoids(config.max_len, d);
        Ok(Self {
            config,
            params,
            layout: Layout {
                embed,
                lm_head,
                encoder,
                enc_ln,
                decoder,
                dec_ln,
            },
            positions,
        })
    }

    /// Rebuilds a model from a config and named tensors (checkpoint loading).
    pub fn from_named_tensors(
        config: MicroModelConfig,
        tensors: Vec<(String, Tensor<F>)>,
    ) -> Result<Self> {
        let mut model = Self::new(config)?;
        if tensors.len() != model.params.len() {
            return Err(Error::invalid(format!(
                "expected {} tensors, found {}",
                model.params.len(),
                tensors.len()
            )));
        }
        for (name, t) in tensors {
            let i = model
                .params
                .index_of(&name)
                .ok_or_else(|| Error::invalid(format!("unexpected tensor \"{name}\"")))?;
            if t.shape() != model.params.tensors[i].shape() {
                return Err(Error::invalid(format!("tensor \"{name}\" has the wrong shape")));
            }
            model.params.tensors[i] = t;
        }
        Ok(model)
    }

    pub fn config(&self) -> &MicroModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet<F> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<F> {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.count()
    }

    pub fn embedding_table(&self) -> &Tensor<F> {
        &self.params.tensors[self.layout.embed]
    }

    pub fn named_tensors(&self) -> impl Iterator<Item = (&str, &Tensor<F>)> {
        self.params
            .names
            .iter()
            .map(String::as_str)
            .zip(&self.params.tensors)
    }

    /// SHA-256 over every parameter's bit pattern.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for (name, t) in self.named_tensors() {
            h.update(name.as_bytes());
            for x in t.data() {
                h.update(x.to_f64().unwrap_or(f64::NAN).to_bits().to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn cast<G: Scalar>(&self) -> MicroModel<G> {
        MicroModel {
            config: self.config.clone(),
            params: ParamSet {
                names: self.params.names.clone(),
                tensors: self.params.tensors.iter().map(Tensor::cast).collect(),
            },
            layout: self.layout.clone(),
            positions: self.positions.cast(),
        }
    }

    fn bind<'p>(&'p self, g: &mut Graph<'p, F>, trainable: bool) -> Vec<Var> {
        self.params
            .tensors
            .iter()
            .enumerate()
            .map(|(k, t)| if trainable { g.param(t, k) } else { g.constant_ref(t) })
            .collect()
    }

    fn with_positions(&self, g: &mut Graph<'_, F>, x: Var) -> Var {
        let n = g.value(x).rows();
        let d = self.config.d_model;
        let pos = Tensor::from_vec(n, d, self.positions.data()[..n * d].to_vec());
        let pos = g.constant(pos);
        g.add(x, pos)
    }

    /// Input embedding sequence (before positions).
    fn embed_input<'p>(
        &self,
        g: &mut Graph<'p, F>,
        p: &[Var],
        input: ModelInput<'p, F>,
        prompt_trainable: bool,
    ) -> Result<Var> {
        let n = input.len();
        if n == 0 {
            return Err(Error::invalid("empty model input"));
        }
        if n > self.config.max_len {
            return Err(Error::invalid(format!(
                "input of {n} positions exceeds max_len {}",
                self.config.max_len
            )));
        }
        let vocab = self.config.vocab_size;
        let ids = |tokens: &[TokenId]| -> Result<Vec<usize>> {
            tokens
                .iter()
                .map(|&t| {
                    let t = t as usize;
                    if t < vocab {
                        Ok(t)
                    } else {
                        Err(Error::invalid(format!("token id {t} outside vocabulary of {vocab}")))
                    }
                })
                .collect()
        };
        let d = self.config.d_model;
        Ok(match input {
            ModelInput::Tokens(tokens) => g.gather(p[self.layout.embed], &ids(tokens)?),
            ModelInput::Embeddings(e) => {
                if e.cols() != d {
                    return Err(Error::invalid(format!(
                        "embedding width {} does not match d_model {d}",
                        e.cols()
                    )));
                }
                g.constant_ref(e)
            }
            ModelInput::Continuous { prompt, slots } => {
                if prompt.dim() != d {
                    return Err(Error::invalid(format!(
                        "prompt width {} does not match d_model {d}",
                        prompt.dim()
                    )));
                }
                let seg: Vec<Var> = prompt
                    .segments()
                    .iter()
                    .enumerate()
                    .map(|(k, s)| if prompt_trainable { g.param(s, k) } else { g.constant_ref(s) })
                    .collect();
                let q = g.gather(p[self.layout.embed], &ids(&slots.query)?);
                let doc = g.gather(p[self.layout.embed], &ids(&slots.document)?);
                let parts: Vec<Var> = [seg[0], q, seg[1], doc, seg[2]]
                    .into_iter()
                    .filter(|&v| g.value(v).rows() > 0)
                    .collect();
                g.concat_rows(&parts)
            }
        })
    }

    fn attention(
        &self,
        g: &mut Graph<'_, F>,
        p: &[Var],
        ids: &AttnIds,
        x: Var,
        memory: Option<Var>,
    ) -> Var {
        let h = g.layer_norm(x, p[ids.ln_g], p[ids.ln_b]);
        let kv = memory.unwrap_or(h);
        let q = g.matmul(h, p[ids.wq]);
        let k = g.matmul(kv, p[ids.wk]);
        let v = g.matmul(kv, p[ids.wv]);
        let heads = self.config.n_heads;
        let dh = self.config.d_model / heads;
        let scale = F::of(1.0 / (dh as f64).sqrt());
        let outs: Vec<Var> = (0..heads)
            .map(|i| {
                let qh = g.slice_cols(q, i * dh, dh);
                let kh = g.slice_cols(k, i * dh, dh);
                let vh = g.slice_cols(v, i * dh, dh);
                let s = g.matmul_t(qh, kh);
                let s = g.scale(s, scale);
                let a = g.softmax_rows(s);
                g.matmul(a, vh)
            })
            .collect();
        let cat = if outs.len() == 1 { outs[0] } else { g.concat_cols(&outs) };
        let o = g.matmul(cat, p[ids.wo]);
        g.add(x, o)
    }

    fn feed_forward(&self, g: &mut Graph<'_, F>, p: &[Var], ids: &FfnIds, x: Var) -> Var {
        let h = g.layer_norm(x, p[ids.ln_g], p[ids.ln_b]);
        let h = g.matmul(h, p[ids.w1]);
        let h = g.add_bias(h, p[ids.b1]);
        let h = g.gelu(h);
        let h = g.matmul(h, p[ids.w2]);
        let h = g.add_bias(h, p[ids.b2]);
        g.add(x, h)
    }

    /// Builds the forward pass up to the decision-token state (`1 × d`).
    fn decision_var<'p>(
        &self,
        g: &mut Graph<'p, F>,
        p: &[Var],
        input: ModelInput<'p, F>,
        prompt_trainable: bool,
    ) -> Result<Var> {
        let mask_pos = match (self.config.architecture, input) {
            (Architecture::EncoderOnly, ModelInput::Tokens(t)) => {
                let found: Vec<usize> = t
                    .iter()
                    .enumerate()
                    .filter(|(_, &x)| x == MASK_ID)
                    .map(|(i, _)| i)
                    .collect();
                match found[..] {
                    [i] => Some(i),
                    _ => {
                        return Err(Error::invalid(format!(
                            "expected exactly one [MASK], found {}",
                            found.len()
                        )))
                    }
                }
            }
            (Architecture::EncoderOnly, _) => {
                return Err(Error::invalid("encoder-only models need token input with a [MASK]"))
            }
            (Architecture::EncoderDecoder, _) => None,
        };
        let x = self.embed_input(g, p, input, prompt_trainable)?;
        let mut x = self.with_positions(g, x);
        for layer in &self.layout.encoder {
            x = self.attention(g, p, &layer.attn, x, None);
            x = self.feed_forward(g, p, &layer.ffn, x);
        }
        let enc = g.layer_norm(x, p[self.layout.enc_ln.0], p[self.layout.enc_ln.1]);
        if let Some(i) = mask_pos {
            return Ok(g.select_rows(enc, &[i]));
        }
        let y = g.gather(p[self.layout.embed], &[BOS_ID as usize]);
        let mut y = self.with_positions(g, y);
        for layer in &self.layout.decoder {
            y = self.attention(g, p, &layer.self_attn, y, None);
            y = self.attention(g, p, &layer.cross_attn, y, Some(enc));
            y = self.feed_forward(g, p, &layer.ffn, y);
        }
        Ok(g.layer_norm(y, p[self.layout.dec_ln.0], p[self.layout.dec_ln.1]))
    }

    /// `1 × L` logits of the label words.
    fn label_logits(&self, g: &mut Graph<'_, F>, p: &[Var], h: Var, words: &[TokenId]) -> Var {
        let ids: Vec<usize> = words.iter().map(|&w| w as usize).collect();
        let w = g.gather(p[self.layout.lm_head], &ids);
        g.matmul_t(h, w)
    }

    /// Label-word logits for one input, without gradients.
    pub fn logits(&self, input: ModelInput<'_, F>, words: &[TokenId]) -> Result<Vec<F>> {
        self.check_words(words)?;
        let mut g = Graph::new();
        let p = self.bind(&mut g, false);
        let h = self.decision_var(&mut g, &p, input, false)?;
        let l = self.label_logits(&mut g, &p, h, words);
        Ok(g.value(l).data().to_vec())
    }

    fn check_words(&self, words: &[TokenId]) -> Result<()> {
        match words.iter().find(|&&w| w as usize >= self.config.vocab_size) {
            Some(w) => Err(Error::invalid(format!("label word id {w} outside vocabulary"))),
            None => Ok(()),
        }
    }

    /// Cross-entropy of `target` (an index into `words`) and its gradients.
    ///
    /// Under [`GradMode::Model`] gradients are keyed by parameter index; under
    /// [`GradMode::Prompt`] by prompt segment (0, 1, 2).
    pub fn loss_and_grads(
        &self,
        input: ModelInput<'_, F>,
        words: &[TokenId],
        target: usize,
        mode: GradMode,
    ) -> Result<(F, ParamGrads<F>)> {
        self.check_words(words)?;
        if target >= words.len() {
            return Err(Error::invalid("target outside the label-word set"));
        }
        let mut g = Graph::new();
        let p = self.bind(&mut g, mode == GradMode::Model);
        let h = self.decision_var(&mut g, &p, input, mode == GradMode::Prompt)?;
        let logits = self.label_logits(&mut g, &p, h, words);
        let loss = g.cross_entropy(logits, target);
        let value = g.value(loss).get(0, 0);
        let grads = if mode == GradMode::Frozen {
            ParamGrads { by_key: Vec::new() }
        } else {
            g.backward(loss)
        };
        Ok((value, grads))
    }

    /// Frozen vocabulary embeddings of `tokens`.
    pub fn embed_tokens(&self, tokens: &[TokenId]) -> Result<Tensor<F>> {
        let table = self.embedding_table();
        let d = self.config.d_model;
        let mut out = Tensor::zeros(tokens.len(), d);
        for (i, &t) in tokens.iter().enumerate() {
            if t as usize >= table.rows() {
                return Err(Error::invalid(format!("token id {t} outside vocabulary")));
            }
            out.row_mut(i).copy_from_slice(table.row(t as usize));
        }
        Ok(out)
    }

    /// A continuous prompt initialized from the embeddings of three texts.
    pub fn init_prompt(
        &self,
        tokenizer: &crate::prompting::tokenizer::Tokenizer,
        texts: [&str; 3],
    ) -> Result<ContinuousPrompt<F>> {
        let segs = texts.map(|t| self.embed_tokens(&tokenizer.encode(t)));
        let [a, b, c] = segs;
        ContinuousPrompt::new([a?, b?, c?], texts.map(String::from))
    }
}

impl<F: Scalar> ScorerModel<F> for MicroModel<F> {
    fn architecture(&self) -> Architecture {
        self.config.architecture
    }

    fn d_model(&self) -> usize {
        self.config.d_model
    }

    fn decision_state(&self, input: ModelInput<'_, F>) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let p = self.bind(&mut g, false);
        let h = self.decision_var(&mut g, &p, input, false)?;
        Ok(g.value(h).to_f64_vec())
    }

    fn label_word_vectors(&self, words: &[TokenId]) -> Result<Vec<Vec<f64>>> {
        self.check_words(words)?;
        let head = &self.params.tensors[self.layout.lm_head];
        Ok(words
            .iter()
            .map(|&w| head.row(w as usize).iter().map(|x| x.to_f64().unwrap_or(f64::NAN)).collect())
            .collect())
    }
}
