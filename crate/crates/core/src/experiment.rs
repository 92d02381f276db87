//! The few-shot transfer experiment: vanilla versus pre-finetuned rerankers,
//! fine-tuned on a handful of ranking queries and evaluated on the rest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{score_histogram, score_labeled, LabeledPair, ScoreHistogram, DEFAULT_BIN_COUNT};
use crate::bm25::{retrieve_all, Bm25Params, InvertedIndex};
use crate::corpus::{self, Qrels, Run};
use crate::evaluation::{mrr_at_k, paired_significance, rerank, MetricResult, PairScorer, PromptRanker};
use crate::model::checkpoint::save_model;
use crate::model::{Architecture, MicroModel, MicroModelConfig};
use crate::partition::{build_dev_set, sample_msmarco_split, DevSet, TrainSplit};
use crate::prompting::{Scheme, Template, Tokenizer, Verbalizer};
use crate::rng::substream_seed;
use crate::training::{
    finetune, make_synthetic_tasks, prefinetune, MixtureSpec, RankingData, SyntheticConfig,
    SyntheticTasks, TaskSpec, TrainConfig, TrainLog,
};
use crate::training::synthetic::{nli_template, qa_template};
use crate::{Error, Result};

/// Model shape; the vocabulary size comes from the tokenizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub max_len: usize,
    #[serde(default)]
    pub d_ff: Option<usize>,
    #[serde(default = "encoder_decoder")]
    pub architecture: Architecture,
}

fn encoder_decoder() -> Architecture {
    Architecture::EncoderDecoder
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            d_model: 64,
            n_layers: 2,
            n_heads: 4,
            max_len: 48,
            d_ff: None,
            architecture: Architecture::EncoderDecoder,
        }
    }
}

impl ModelSpec {
    pub fn config(&self, vocab_size: usize, seed: u64) -> MicroModelConfig {
        MicroModelConfig {
            vocab_size,
            d_model: self.d_model,
            n_layers: self.n_layers,
            n_heads: self.n_heads,
            max_len: self.max_len,
            seed,
            d_ff: self.d_ff,
            architecture: self.architecture,
            tie_embeddings: false,
        }
    }
}

/// Which model a reranker starts from before ranking fine-tuning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Random initialization.
    Vanilla,
    NliLike,
    QaLike,
    /// Equal mixture of both tasks.
    Mixture,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Vanilla => "vanilla",
            Variant::NliLike => "nli_like",
            Variant::QaLike => "qa_like",
            Variant::Mixture => "mixture",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankingScheme {
    Seq2seqManual,
    NoneWords,
}

impl RankingScheme {
    pub fn template(self) -> Template {
        match self {
            RankingScheme::Seq2seqManual => Template::seq2seq_manual(),
            RankingScheme::NoneWords => Template::none_words(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Every random choice derives from this seed.
    pub seed: u64,
    /// Independent few-shot repetitions.
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub synthetic: SyntheticConfig,
    #[serde(default)]
    pub model: ModelSpec,
    pub prefinetune: TrainConfig,
    pub finetune: TrainConfig,
    #[serde(default = "default_k")]
    pub k_queries: usize,
    /// First-stage depth, also the reranking depth.
    #[serde(default = "default_depth")]
    pub depth: usize,
    #[serde(default = "default_scheme")]
    pub scheme: RankingScheme,
    #[serde(default = "default_variants")]
    pub variants: Vec<Variant>,
    /// Save model checkpoints under the output directory.
    #[serde(default)]
    pub save_checkpoints: bool,
}

fn default_repeats() -> usize {
    5
}
fn default_k() -> usize {
    5
}
fn default_depth() -> usize {
    30
}
fn default_scheme() -> RankingScheme {
    RankingScheme::Seq2seqManual
}
fn default_variants() -> Vec<Variant> {
    vec![Variant::Vanilla, Variant::NliLike, Variant::QaLike]
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::config("repeats", "must be at least 1"));
        }
        if self.k_queries == 0 {
            return Err(Error::config("k_queries", "must be at least 1"));
        }
        if self.depth == 0 {
            return Err(Error::config("depth", "must be at least 1"));
        }
        if self.variants.is_empty() {
            return Err(Error::config("variants", "list at least one variant"));
        }
        let mut v = self.variants.clone();
        v.sort_unstable();
        v.dedup();
        if v.len() != self.variants.len() {
            return Err(Error::config("variants", "duplicate variant"));
        }
        self.prefinetune.validate().map_err(|e| e.context("prefinetune"))?;
        self.finetune.validate().map_err(|e| e.context("finetune"))?;
        self.model.config(16, 0).validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantRun {
    pub variant: Variant,
    pub mrr: f64,
    /// Mean relevant-label probability of positives minus that of negatives.
    pub separation: f64,
    pub best_step: usize,
    pub best_dev: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatResult {
    pub repeat: usize,
    pub seed: u64,
    pub train_queries: Vec<String>,
    pub dev_queries: Vec<String>,
    pub eval_queries: usize,
    pub bm25_mrr: f64,
    pub variants: Vec<VariantRun>,
    /// Paired test of each pre-finetuned variant against vanilla.
    pub p_vs_vanilla: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub repeats: Vec<RepeatResult>,
    pub mean_mrr: BTreeMap<String, f64>,
    pub mean_separation: BTreeMap<String, f64>,
    pub bm25_mean_mrr: f64,
}

impl TransferReport {
    pub fn mrr_of(&self, v: Variant) -> Vec<f64> {
        self.collect(v, |r| r.mrr)
    }

    pub fn separation_of(&self, v: Variant) -> Vec<f64> {
        self.collect(v, |r| r.separation)
    }

    fn collect(&self, v: Variant, f: impl Fn(&VariantRun) -> f64) -> Vec<f64> {
        self.repeats
            .iter()
            .filter_map(|r| r.variants.iter().find(|x| x.variant == v).map(&f))
            .collect()
    }

    /// Markdown table of MRR@10 and score separation per repeat.
    pub fn table(&self) -> String {
        let names: Vec<&str> = self
            .repeats
            .first()
            .map(|r| r.variants.iter().map(|v| v.variant.name()).collect())
            .unwrap_or_default();
        let mut s = String::from("| repeat | bm25 |");
        for n in &names {
            s.push_str(&format!(" {n} MRR@10 | {n} sep |"));
        }
        s.push('\n');
        s.push_str(&"|---".repeat(2 + 2 * names.len()));
        s.push_str("|\n");
        for r in &self.repeats {
            s.push_str(&format!("| {} | {:.4} |", r.repeat, r.bm25_mrr));
            for v in &r.variants {
                s.push_str(&format!(" {:.4} | {:.4} |", v.mrr, v.separation));
            }
            s.push('\n');
        }
        s.push_str(&format!("| mean | {:.4} |", self.bm25_mean_mrr));
        for n in &names {
            s.push_str(&format!(" {:.4} | {:.4} |", self.mean_mrr[*n], self.mean_separation[*n]));
        }
        s.push('\n');
        s
    }
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Score histogram of judged positives against judged non-relevant
/// documents over `qids`; its `separation` is the gap in mean P(relevant).
pub fn score_separation<S: PairScorer + ?Sized>(
    scorer: &S,
    qids: &[&str],
    data: &RankingData<'_>,
) -> Result<ScoreHistogram> {
    let mut pairs = Vec::new();
    for &qid in qids {
        let q = &data.queries.lookup(qid)?.text;
        let Some(judged) = data.qrels.query(qid) else {
            continue;
        };
        for (docid, &grade) in judged {
            let label = if grade >= 1 { "pos" } else { "neg" };
            let d = &data.collection.lookup(docid)?.text;
            pairs.push(LabeledPair::new(format!("{qid}:{docid}"), label, q.clone(), d.clone()));
        }
    }
    let (pos, neg) = score_labeled(scorer, &pairs, |l| l == "pos")?;
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::invalid("separation needs judged positives and negatives"));
    }
    score_histogram(&pos, &neg, DEFAULT_BIN_COUNT)
}

/// Queries outside the split and dev set that have a positive and a
/// first-stage list.
fn eval_queries<'a>(qrels: &'a Qrels, first: &Run, split: &TrainSplit, dev: &DevSet) -> Vec<&'a str> {
    let train: Vec<&str> = split.query_ids().collect();
    qrels
        .query_ids()
        .filter(|q| !train.contains(q) && !dev.candidates.contains_key(*q))
        .filter(|q| !qrels.positives(q).is_empty() && first.get(q).is_some())
        .collect()
}

struct Pipeline<'a> {
    cfg: &'a ExperimentConfig,
    tasks: &'a SyntheticTasks,
    out: Option<&'a Path>,
}

impl Pipeline<'_> {
    fn save(&self, rel: &str, contents: &str) -> Result<()> {
        match self.out {
            Some(dir) => write(&dir.join(rel), contents),
            None => Ok(()),
        }
    }

    fn start_model(&self, variant: Variant, base: &MicroModel) -> Result<(MicroModel, Option<TrainLog>)> {
        let t = self.tasks;
        let mixture = match variant {
            Variant::Vanilla => return Ok((base.clone(), None)),
            Variant::NliLike => MixtureSpec::single(t.nli_like.clone()),
            Variant::QaLike => MixtureSpec::single(t.qa_like.clone()),
            Variant::Mixture => MixtureSpec::equal(vec![t.nli_like.clone(), t.qa_like.clone()])?,
        };
        let mut model = base.clone();
        let tc = TrainConfig {
            seed: substream_seed(self.cfg.seed, &format!("prefinetune/{}", variant.name())),
            ..self.cfg.prefinetune.clone()
        };
        let log = prefinetune(&mut model, &t.tokenizer, &mixture, &tc)
            .map_err(|e| e.context(format!("pre-finetuning {}", variant.name())))?;
        Ok((model, Some(log)))
    }
}

/// Runs every variant over every repeat; with an output directory, writes
/// data, runs, metrics and logs there.
pub fn run_transfer(cfg: &ExperimentConfig) -> Result<TransferReport> {
    cfg.validate()?;
    let tasks = make_synthetic_tasks(substream_seed(cfg.seed, "synthetic"), &cfg.synthetic)?;
    let out = cfg.output_dir.as_deref();
    let p = Pipeline {
        cfg,
        tasks: &tasks,
        out,
    };
    p.save("config.json", &(serde_json::to_string_pretty(cfg)? + "\n"))?;
    if let Some(dir) = out {
        save_task_dir(&dir.join("data"), &tasks)?;
    }

    let index = InvertedIndex::build(&tasks.collection, Bm25Params::default())?;
    let first = retrieve_all(&index, &tasks.queries, cfg.depth, "bm25")?;
    p.save("runs/bm25.trec", &first.to_trec())?;

    let tokenizer: &Tokenizer = &tasks.tokenizer;
    let base = MicroModel::new(cfg.model.config(tokenizer.vocab_size(), substream_seed(cfg.seed, "init")))?;
    let mut starts = Vec::new();
    for &v in &cfg.variants {
        let (model, log) = p.start_model(v, &base)?;
        if let Some(log) = log {
            p.save(&format!("logs/prefinetune_{}.jsonl", v.name()), &log.to_jsonl()?)?;
        }
        if cfg.save_checkpoints {
            if let Some(dir) = out {
                fs::create_dir_all(dir.join("models")).map_err(|e| Error::io(dir, e))?;
                save_model(dir.join(format!("models/{}.ckpt", v.name())), &model, tokenizer)?;
            }
        }
        starts.push((v, model));
    }

    let template = cfg.scheme.template();
    let verbalizer = Verbalizer::ranking(tokenizer)?;
    let scheme = Scheme::new(tokenizer, &template, &verbalizer);
    let data = RankingData {
        collection: &tasks.collection,
        queries: &tasks.queries,
        qrels: &tasks.qrels,
    };
    let mut repeats = Vec::new();
    for i in 0..cfg.repeats {
        let seed = substream_seed(cfg.seed, &format!("repeat/{i}"));
        let split = sample_msmarco_split(&tasks.qrels, &first, cfg.k_queries, substream_seed(seed, "split"))?;
        let dev = build_dev_set(&tasks.qrels, &first, &split, substream_seed(seed, "dev"))?;
        let eval = eval_queries(&tasks.qrels, &first, &split, &dev);
        if eval.is_empty() {
            return Err(Error::invalid("no queries left for evaluation"));
        }
        let eval_first = first.restrict(eval.iter().copied());
        let bm25 = mrr_at_k(&eval_first, &tasks.qrels, 10)?;
        p.save(&format!("repeat{i}/split.tsv"), &split.to_tsv())?;
        let mut variants = Vec::new();
        let mut metrics: Vec<(Variant, MetricResult)> = Vec::new();
        for (v, start) in &starts {
            let mut model = start.clone();
            let tc = TrainConfig {
                seed: substream_seed(seed, "finetune"),
                ..cfg.finetune.clone()
            };
            let outcome = finetune(&mut model, &scheme, &split, &data, Some(&dev), &tc)
                .map_err(|e| e.context(format!("fine-tuning {} (repeat {i})", v.name())))?;
            let ranker = PromptRanker::new(&model, tokenizer, &template, &verbalizer, cfg.model.max_len);
            let run = rerank(&ranker, &eval_first, &tasks.queries, &tasks.collection, cfg.depth, v.name())?;
            let m = mrr_at_k(&run, &tasks.qrels, 10)?;
            let hist = score_separation(&ranker, &eval, &data)?;
            let separation = hist.separation.expect("both classes present");
            p.save(&format!("repeat{i}/{}.scores.json", v.name()), &hist.to_json()?)?;
            p.save(&format!("repeat{i}/{}.trec", v.name()), &run.to_trec())?;
            p.save(&format!("repeat{i}/{}.mrr.json", v.name()), &m.to_json()?)?;
            p.save(&format!("repeat{i}/{}.log.jsonl", v.name()), &outcome.log.to_jsonl()?)?;
            variants.push(VariantRun {
                variant: *v,
                mrr: m.mean,
                separation,
                best_step: outcome.best_step,
                best_dev: outcome.best_dev,
            });
            metrics.push((*v, m));
        }
        let mut p_vs_vanilla = BTreeMap::new();
        if let Some((_, vanilla)) = metrics.iter().find(|(v, _)| *v == Variant::Vanilla) {
            for (v, m) in metrics.iter().filter(|(v, _)| *v != Variant::Vanilla) {
                p_vs_vanilla.insert(v.name().to_string(), paired_significance(m, vanilla)?.p_value);
            }
        }
        repeats.push(RepeatResult {
            repeat: i,
            seed,
            train_queries: split.query_ids().map(String::from).collect(),
            dev_queries: dev.query_ids().map(String::from).collect(),
            eval_queries: eval.len(),
            bm25_mrr: bm25.mean,
            variants,
            p_vs_vanilla,
        });
    }
    let mean = |f: &dyn Fn(&VariantRun) -> f64, v: Variant| -> f64 {
        let xs: Vec<f64> = repeats
            .iter()
            .filter_map(|r| r.variants.iter().find(|x| x.variant == v).map(f))
            .collect();
        xs.iter().sum::<f64>() / xs.len() as f64
    };
    let report = TransferReport {
        mean_mrr: cfg.variants.iter().map(|&v| (v.name().to_string(), mean(&|r| r.mrr, v))).collect(),
        mean_separation: cfg
            .variants
            .iter()
            .map(|&v| (v.name().to_string(), mean(&|r| r.separation, v)))
            .collect(),
        bm25_mean_mrr: repeats.iter().map(|r| r.bm25_mrr).sum::<f64>() / repeats.len() as f64,
        repeats,
    };
    p.save("results.json", &(serde_json::to_string_pretty(&report)? + "\n"))?;
    p.save("results.md", &report.table())?;
    Ok(report)
}

/// Writes the tasks as `collection.tsv`, `queries.tsv`, `qrels.txt`,
/// `nli_like.tsv`, `qa_like.tsv` and the tokenizer as `vocab.json`.
pub fn save_task_dir(dir: &Path, tasks: &SyntheticTasks) -> Result<()> {
    write(&dir.join("collection.tsv"), &tasks.collection.to_tsv()?)?;
    write(&dir.join("queries.tsv"), &tasks.queries.to_tsv()?)?;
    write(&dir.join("qrels.txt"), &tasks.qrels.to_trec())?;
    write(&dir.join("nli_like.tsv"), &tasks.nli_like.to_tsv())?;
    write(&dir.join("qa_like.tsv"), &tasks.qa_like.to_tsv())?;
    write(&dir.join("vocab.json"), &tasks.tokenizer.to_json()?)
}

/// Inverse of [`save_task_dir`].
pub fn load_task_dir(dir: &Path) -> Result<SyntheticTasks> {
    let tokenizer = Tokenizer::load(dir.join("vocab.json"))?;
    let (collection, queries, qrels) = load_ranking_dir(dir)?;
    let nli_like = TaskSpec::load_tsv("nli_like", dir.join("nli_like.tsv"), nli_template(), Verbalizer::nli(&tokenizer)?)?;
    let qa_like = TaskSpec::load_tsv("qa_like", dir.join("qa_like.tsv"), qa_template(), Verbalizer::answerability(&tokenizer)?)?;
    Ok(SyntheticTasks { tokenizer, nli_like, qa_like, collection, queries, qrels })
}

/// Loads `collection.tsv`, `queries.tsv` and `qrels.txt` written by a run.
pub fn load_ranking_dir(dir: &Path) -> Result<(corpus::Collection, corpus::Queries, Qrels)> {
    Ok((
        corpus::load_collection(dir.join("collection.tsv"))?,
        corpus::load_queries(dir.join("queries.tsv"))?,
        corpus::load_qrels(dir.join("qrels.txt"))?,
    ))
}
