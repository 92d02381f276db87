//! The three training loops.
//!
//! Each step encodes a batch, computes per-example gradients in parallel and
//! sums them in batch order, so results do not depend on thread scheduling.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::optim::{linear_lr, Adam};
use super::tasks::{mix_stream, MixtureSpec};
use super::{default_batch_size, LogEntry, TrainConfig, TrainLog, TrainMode};
use crate::corpus::{Collection, Qrels, Queries, Run};
use crate::evaluation::{mrr_at_k, rerank, PromptRanker};
use crate::model::micro::GradMode;
use crate::model::tape::ParamGrads;
use crate::model::{MicroModel, Tensor};
use crate::partition::{DevSet, TrainSplit};
use crate::prompting::tokenizer::TokenId;
use crate::prompting::{ContinuousPrompt, EncodedInput, Label, Scheme, TemplateKind, Tokenizer};
use crate::rng;
use crate::{Error, Result};

/// The ranking corpus a split and dev set refer to.
#[derive(Debug, Clone, Copy)]
pub struct RankingData<'a> {
    pub collection: &'a Collection,
    pub queries: &'a Queries,
    pub qrels: &'a Qrels,
}

#[derive(Debug, Clone)]
pub struct FinetuneOutcome {
    pub log: TrainLog,
    /// Step of the kept checkpoint (the last step without a dev set).
    pub best_step: usize,
    pub best_dev: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct PromptTuneOutcome {
    pub log: TrainLog,
    pub best_step: usize,
    pub best_dev: Option<f64>,
    pub trainable_params: usize,
    pub total_params: usize,
}

impl PromptTuneOutcome {
    pub fn trainable_fraction(&self) -> f64 {
        self.trainable_params as f64 / (self.trainable_params + self.total_params) as f64
    }
}

struct Example<'w> {
    input: EncodedInput,
    words: &'w [TokenId],
    target: usize,
}

/// Mean loss and mean gradients of one batch.
fn batch_grads(
    model: &MicroModel,
    prompt: Option<&ContinuousPrompt>,
    batch: &[&Example<'_>],
    mode: GradMode,
) -> Result<(f64, Vec<Option<Tensor>>)> {
    let per_example: Vec<(f32, ParamGrads<f32>)> = batch
        .par_iter()
        .map(|ex| {
            let input = ex.input.model_input(prompt)?;
            model.loss_and_grads(input, ex.words, ex.target, mode)
        })
        .collect::<Result<_>>()?;
    let scale = 1.0 / batch.len() as f32;
    let mut loss = 0.0f64;
    let mut sum: Vec<Option<Tensor>> = Vec::new();
    for (l, g) in per_example {
        loss += f64::from(l);
        if sum.len() < g.by_key.len() {
            sum.resize(g.by_key.len(), None);
        }
        for (k, t) in g.by_key.into_iter().enumerate() {
            if let Some(t) = t {
                match &mut sum[k] {
                    Some(acc) => acc.add_assign(&t),
                    slot => *slot = Some(t),
                }
            }
        }
    }
    for t in sum.iter_mut().flatten() {
        t.scale(scale);
    }
    Ok((loss / batch.len() as f64, sum))
}

/// Cycles through `n` indices, reshuffling at each epoch boundary.
struct EpochSampler {
    order: Vec<usize>,
    cursor: usize,
    rng: rng::StageRng,
}

impl EpochSampler {
    fn new(n: usize, rng: rng::StageRng) -> Self {
        let mut s = Self {
            order: (0..n).collect(),
            cursor: n,
            rng,
        };
        s.reshuffle_if_done();
        s
    }

    fn reshuffle_if_done(&mut self) {
        if self.cursor == self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
    }

    fn next_batch(&mut self, size: usize) -> Vec<usize> {
        (0..size)
            .map(|_| {
                self.reshuffle_if_done();
                self.cursor += 1;
                self.order[self.cursor - 1]
            })
            .collect()
    }
}

/// Trains the whole model on a task mixture with the label-word loss.
pub fn prefinetune(
    model: &mut MicroModel,
    tokenizer: &Tokenizer,
    mixture: &MixtureSpec,
    cfg: &TrainConfig,
) -> Result<TrainLog> {
    cfg.expect_mode(TrainMode::ModelTuning)?;
    if let Some(t) = mixture.tasks.iter().find(|t| t.template.kind() == TemplateKind::Continuous) {
        return Err(Error::invalid(format!("task \"{}\" uses a continuous template", t.name)));
    }
    let max_len = model.config().max_len;
    let batch_size = cfg.batch_size.unwrap_or(super::PAPER_PREFINETUNE_BATCH);
    let mut stream = mix_stream(mixture, rng::substream_seed(cfg.seed, "prefinetune"))?;
    let mut opt = Adam::new(model.params().tensors());
    let mut log = TrainLog::default();
    for step in 0..cfg.max_steps {
        let mut batch = Vec::with_capacity(batch_size);
        for _ in 0..batch_size {
            let (t, ex) = stream.next().expect("endless stream");
            let task = &mixture.tasks[t];
            let target = task
                .verbalizer
                .index_of(&ex.label)
                .map_err(|e| e.context(format!("task {}", task.name)))?;
            let input = EncodedInput::encode(&task.template, tokenizer, &ex.text_a, &ex.text_b, max_len, 0)?;
            batch.push(Example {
                input,
                words: task.verbalizer.word_ids(),
                target,
            });
        }
        let refs: Vec<&Example<'_>> = batch.iter().collect();
        let (loss, grads) = batch_grads(model, None, &refs, GradMode::Model)?;
        let lr = linear_lr(cfg.learning_rate, step, cfg.max_steps);
        opt.step(model.params_mut().tensors_mut(), &grads, lr);
        log.entries.push(LogEntry {
            step,
            loss,
            lr,
            dev_metric: None,
        });
    }
    Ok(log)
}

/// Two examples per triple: the positive as relevant, the negative as not.
fn ranking_examples<'w>(
    scheme: &Scheme<'w>,
    split: &TrainSplit,
    data: &RankingData<'_>,
    max_len: usize,
    prompt_len: usize,
) -> Result<Vec<Example<'w>>> {
    if split.triples.is_empty() {
        return Err(Error::invalid("training split is empty"));
    }
    let pos = scheme.verbalizer.index_of(&Label::relevant())?;
    let neg = scheme.verbalizer.index_of(&Label::irrelevant())?;
    let mut out = Vec::with_capacity(2 * split.triples.len());
    for t in &split.triples {
        let q = &data.queries.lookup(&t.qid)?.text;
        for (docid, target) in [(&t.positive, pos), (&t.negative, neg)] {
            let d = &data.collection.lookup(docid)?.text;
            out.push(Example {
                input: EncodedInput::encode(scheme.template, scheme.tokenizer, q, d, max_len, prompt_len)?,
                words: scheme.verbalizer.word_ids(),
                target,
            });
        }
    }
    Ok(out)
}

/// MRR@10 of reranking the dev candidates.
pub fn dev_mrr(
    model: &MicroModel,
    scheme: &Scheme<'_>,
    prompt: Option<&ContinuousPrompt>,
    dev: &DevSet,
    data: &RankingData<'_>,
) -> Result<f64> {
    let mut first = Run::new();
    for (qid, docs) in &dev.candidates {
        let n = docs.len();
        let ranked = docs.iter().enumerate().map(|(i, d)| (d.clone(), (n - i) as f64)).collect();
        first.set_ranked(qid, ranked, "dev")?;
    }
    let mut ranker = PromptRanker::new(model, scheme.tokenizer, scheme.template, scheme.verbalizer, model.config().max_len);
    ranker.prompt = prompt;
    let depth = dev.candidates.values().map(Vec::len).max().unwrap_or(1).max(1);
    let run = rerank(&ranker, &first, data.queries, data.collection, depth, "dev")?;
    Ok(mrr_at_k(&run, data.qrels, 10)?.mean)
}

fn split_batch_size(cfg: &TrainConfig, split: &TrainSplit) -> usize {
    let n_queries = {
        let mut q: Vec<&str> = split.query_ids().collect();
        q.sort_unstable();
        q.dedup();
        q.len()
    };
    cfg.batch_size.unwrap_or_else(|| default_batch_size(n_queries))
}

fn is_eval_step(cfg: &TrainConfig, done: usize) -> bool {
    done % cfg.eval_every == 0 || done == cfg.max_steps
}

/// Fine-tunes the whole model on ranking triples. With a dev set, the
/// checkpoint with the best dev MRR@10 is kept.
pub fn finetune(
    model: &mut MicroModel,
    scheme: &Scheme<'_>,
    split: &TrainSplit,
    data: &RankingData<'_>,
    dev: Option<&DevSet>,
    cfg: &TrainConfig,
) -> Result<FinetuneOutcome> {
    cfg.expect_mode(TrainMode::ModelTuning)?;
    if scheme.template.kind() == TemplateKind::Continuous {
        return Err(Error::invalid("model tuning needs a discrete template; use prompt_tune"));
    }
    let examples = ranking_examples(scheme, split, data, model.config().max_len, 0)?;
    let batch_size = split_batch_size(cfg, split);
    let mut sampler = EpochSampler::new(examples.len(), rng::substream(cfg.seed, "finetune"));
    let mut opt = Adam::new(model.params().tensors());
    let mut log = TrainLog::default();
    let mut best: Option<(f64, usize, Vec<Tensor>)> = None;
    for step in 0..cfg.max_steps {
        let idx = sampler.next_batch(batch_size);
        let batch: Vec<&Example<'_>> = idx.iter().map(|&i| &examples[i]).collect();
        let (loss, grads) = batch_grads(model, None, &batch, GradMode::Model)?;
        let lr = linear_lr(cfg.learning_rate, step, cfg.max_steps);
        opt.step(model.params_mut().tensors_mut(), &grads, lr);
        let mut dev_metric = None;
        if let Some(dev) = dev.filter(|_| is_eval_step(cfg, step + 1)) {
            let m = dev_mrr(model, scheme, None, dev, data)?;
            dev_metric = Some(m);
            if best.as_ref().is_none_or(|b| m > b.0) {
                best = Some((m, step + 1, model.params().tensors().to_vec()));
            }
        }
        log.entries.push(LogEntry {
            step,
            loss,
            lr,
            dev_metric,
        });
    }
    Ok(match best {
        Some((m, s, tensors)) => {
            model.params_mut().tensors_mut().clone_from_slice(&tensors);
            FinetuneOutcome {
                log,
                best_step: s,
                best_dev: Some(m),
            }
        }
        None => FinetuneOutcome {
            log,
            best_step: cfg.max_steps,
            best_dev: None,
        },
    })
}

/// Trains only the continuous prompt vectors; the model is borrowed
/// immutably and cannot change.
pub fn prompt_tune(
    model: &MicroModel,
    prompt: &mut ContinuousPrompt,
    scheme: &Scheme<'_>,
    split: &TrainSplit,
    data: &RankingData<'_>,
    dev: Option<&DevSet>,
    cfg: &TrainConfig,
) -> Result<PromptTuneOutcome> {
    cfg.expect_mode(TrainMode::PromptTuning)?;
    if scheme.template.kind() != TemplateKind::Continuous {
        return Err(Error::invalid("prompt tuning needs a continuous template"));
    }
    if prompt.dim() != model.config().d_model {
        return Err(Error::invalid("prompt width does not match the model"));
    }
    let examples = ranking_examples(scheme, split, data, model.config().max_len, prompt.total_len())?;
    let batch_size = split_batch_size(cfg, split);
    let mut sampler = EpochSampler::new(examples.len(), rng::substream(cfg.seed, "prompt_tune"));
    let mut opt = Adam::new(prompt.segments());
    let mut log = TrainLog::default();
    let mut best: Option<(f64, usize, ContinuousPrompt)> = None;
    for step in 0..cfg.max_steps {
        let idx = sampler.next_batch(batch_size);
        let batch: Vec<&Example<'_>> = idx.iter().map(|&i| &examples[i]).collect();
        let (loss, grads) = batch_grads(model, Some(prompt), &batch, GradMode::Prompt)?;
        let lr = linear_lr(cfg.learning_rate, step, cfg.max_steps);
        opt.step(prompt.segments_mut(), &grads, lr);
        let mut dev_metric = None;
        if let Some(dev) = dev.filter(|_| is_eval_step(cfg, step + 1)) {
            let m = dev_mrr(model, scheme, Some(prompt), dev, data)?;
            dev_metric = Some(m);
            if best.as_ref().is_none_or(|b| m > b.0) {
                best = Some((m, step + 1, prompt.clone()));
            }
        }
        log.entries.push(LogEntry {
            step,
            loss,
            lr,
            dev_metric,
        });
    }
    let trainable_params = prompt.total_len() * prompt.dim();
    let total_params = model.param_count();
    let (best_step, best_dev) = match best {
        Some((m, s, p)) => {
            *prompt = p;
            (s, Some(m))
        }
        None => (cfg.max_steps, None),
    };
    Ok(PromptTuneOutcome {
        log,
        best_step,
        best_dev,
        trainable_params,
        total_params,
    })
}
