//! Command-line front end. Every stage of the pipeline is a subcommand that
//! reads files and writes files; `run-all` chains them for the synthetic
//! transfer experiment.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;

use crate::analysis::{
    extract_embeddings, project_2d, projection_to_tsv, score_histogram, score_labeled, EmbeddingDump,
    LabeledPair, DEFAULT_BIN_COUNT,
};
use crate::bm25::{retrieve_all, Bm25Params, InvertedIndex};
use crate::corpus::{load_collection, load_qrels, load_queries, load_run, Qrels, Run};
use crate::evaluation::{mrr_at_k, ndcg_at_k, paired_significance_with, rerank, MetricResult, PromptRanker};
use crate::experiment::{load_task_dir, run_transfer, save_task_dir, ExperimentConfig, ModelSpec, RankingScheme};
use crate::model::checkpoint::{load_model, load_prompt, save_model, save_prompt};
use crate::model::MicroModel;
use crate::partition::{build_dev_set, make_folds, sample_label_fraction, sample_msmarco_split, DevSet, TrainSplit};
use crate::prompting::{ContinuousPrompt, Scheme, Template, Verbalizer};
use crate::rng::substream_seed;
use crate::training::{
    finetune, make_synthetic_tasks, prefinetune, prompt_tune, MixtureSpec, RankingData, SyntheticConfig,
    TrainConfig, TrainMode,
};
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "promptrank", version, about = "Few-shot prompt-based reranking at desk scale")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a BM25 index and print its statistics.
    Index(IndexArgs),
    /// Retrieve first-stage candidates with BM25.
    Retrieve(RetrieveArgs),
    /// Sample a few-shot split, a label fraction or cross-validation folds.
    Partition(PartitionArgs),
    /// Train a model on an intermediate task.
    Prefinetune(PrefinetuneArgs),
    /// Fine-tune a model on ranking triples.
    Finetune(FinetuneArgs),
    /// Train continuous prompt vectors against a frozen model.
    PromptTune(PromptTuneArgs),
    /// Rescore first-stage candidates with a model.
    Rerank(RerankArgs),
    /// Compute MRR or NDCG of a run.
    Evaluate(EvaluateArgs),
    /// Paired significance test between two metric files.
    Compare(CompareArgs),
    /// Dump decision-token embeddings, a 2-D projection and score histogram.
    Analyze(AnalyzeArgs),
    /// Write the synthetic tasks and ranking corpus to a directory.
    Synth(SynthArgs),
    /// Run the whole transfer experiment from one config.
    RunAll(RunAllArgs),
}

#[derive(Debug, Args)]
pub struct Bm25Flags {
    #[arg(long, default_value_t = 0.9)]
    pub k1: f64,
    #[arg(long, default_value_t = 0.4)]
    pub b: f64,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    #[arg(long)]
    pub collection: PathBuf,
    #[command(flatten)]
    pub bm25: Bm25Flags,
    /// Write the statistics here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RetrieveArgs {
    #[arg(long)]
    pub collection: PathBuf,
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub k: usize,
    #[command(flatten)]
    pub bm25: Bm25Flags,
    #[arg(long, default_value = "bm25")]
    pub tag: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PartitionScheme {
    /// `k` queries with one positive and one first-stage negative each.
    Msmarco,
    /// Keep a fraction `r` of all labels.
    Fraction,
    /// Assign queries to cross-validation folds.
    Folds,
}

#[derive(Debug, Args)]
pub struct PartitionArgs {
    #[arg(long, value_enum)]
    pub scheme: PartitionScheme,
    #[arg(long)]
    pub qrels: PathBuf,
    /// First-stage run; negatives and dev candidates come from it.
    #[arg(long)]
    pub run: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub r: Option<f64>,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// With `msmarco`: also write the dev queries' candidates as a run.
    #[arg(long)]
    pub dev_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainFlags {
    /// JSON training config; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    /// Training log (JSON lines).
    #[arg(long)]
    pub log: Option<PathBuf>,
}

impl TrainFlags {
    fn resolve(&self, mode: TrainMode) -> Result<TrainConfig> {
        let mut cfg: TrainConfig = match &self.config {
            Some(p) => load_json(p)?,
            None => TrainConfig::default(),
        };
        cfg.mode = mode;
        if let Some(v) = self.lr {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.steps {
            cfg.max_steps = v;
        }
        if let Some(v) = self.batch {
            cfg.batch_size = Some(v);
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.eval_every {
            cfg.eval_every = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskChoice {
    NliLike,
    QaLike,
    Mixture,
}

#[derive(Debug, Args)]
pub struct PrefinetuneArgs {
    /// Directory written by `synth`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub task: TaskChoice,
    /// Start from this checkpoint instead of a fresh model.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Seed for a fresh model's initialization.
    #[arg(long, default_value_t = 0)]
    pub init_seed: u64,
    #[command(flatten)]
    pub train: TrainFlags,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SchemeChoice {
    Seq2seq,
    NoneWords,
}

impl SchemeChoice {
    fn template(self) -> Template {
        match self {
            SchemeChoice::Seq2seq => RankingScheme::Seq2seqManual.template(),
            SchemeChoice::NoneWords => RankingScheme::NoneWords.template(),
        }
    }
}

#[derive(Debug, Args)]
pub struct RankingInputs {
    /// Starting checkpoint.
    #[arg(long)]
    pub model: PathBuf,
    /// Directory with `collection.tsv`, `queries.tsv` and `qrels.txt`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub split: PathBuf,
    /// Dev candidates as a run; enables best-checkpoint selection.
    #[arg(long)]
    pub dev_run: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FinetuneArgs {
    #[command(flatten)]
    pub inputs: RankingInputs,
    #[arg(long, value_enum, default_value = "seq2seq")]
    pub scheme: SchemeChoice,
    #[command(flatten)]
    pub train: TrainFlags,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PromptTuneArgs {
    #[command(flatten)]
    pub inputs: RankingInputs,
    #[command(flatten)]
    pub train: TrainFlags,
    /// Output prompt checkpoint.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RerankArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Continuous prompt from `prompt-tune`.
    #[arg(long)]
    pub prompt: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long, default_value_t = 30)]
    pub depth: usize,
    #[arg(long, value_enum, default_value = "seq2seq")]
    pub scheme: SchemeChoice,
    #[arg(long, default_value = "rerank")]
    pub tag: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MetricChoice {
    Mrr,
    Ndcg,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub qrels: PathBuf,
    #[arg(long, value_enum)]
    pub metric: MetricChoice,
    #[arg(long)]
    pub k: usize,
    /// Write the metric JSON here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    /// Random sign flips when exact enumeration is too large.
    #[arg(long, default_value_t = 100_000)]
    pub resamples: usize,
    #[arg(long, default_value_t = 0x5eed)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Directory written by `synth`.
    #[arg(long)]
    pub data: PathBuf,
    /// Candidates whose judged pairs are analyzed.
    #[arg(long)]
    pub run: PathBuf,
    /// Entailment-task pairs added to the embedding dump.
    #[arg(long, default_value_t = 300)]
    pub task_pairs: usize,
    #[arg(long, default_value_t = DEFAULT_BIN_COUNT)]
    pub bins: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub seed: u64,
    /// JSON sizes for the generator; flags override.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub nli_examples: Option<usize>,
    #[arg(long)]
    pub qa_examples: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunAllArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub repeats: Option<usize>,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match std::panic::catch_unwind(|| run(cli.command)) {
        Ok(Ok(())) => EXIT_OK,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
        Err(_) => EXIT_INTERNAL,
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e.root() {
        Error::Config { .. } => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Index(a) => index(a),
        Command::Retrieve(a) => retrieve(a),
        Command::Partition(a) => partition(a),
        Command::Prefinetune(a) => prefinetune_cmd(a),
        Command::Finetune(a) => finetune_cmd(a),
        Command::PromptTune(a) => prompt_tune_cmd(a),
        Command::Rerank(a) => rerank_cmd(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Compare(a) => compare(a),
        Command::Analyze(a) => analyze(a),
        Command::Synth(a) => synth(a),
        Command::RunAll(a) => run_all(a),
    }
}

fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::config(path.display().to_string(), e.to_string()))
}

fn write_out(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn emit(out: Option<&Path>, contents: &str) -> Result<()> {
    match out {
        Some(p) => write_out(p, contents),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(contents.as_bytes())
                .map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn bm25_params(f: &Bm25Flags) -> Result<Bm25Params> {
    Bm25Params::new(f.k1, f.b)
}

fn index(a: IndexArgs) -> Result<()> {
    let collection = load_collection(&a.collection)?;
    let idx = InvertedIndex::build(&collection, bm25_params(&a.bm25)?)?;
    emit(a.out.as_deref(), &(serde_json::to_string_pretty(&idx.stats())? + "\n"))
}

fn retrieve(a: RetrieveArgs) -> Result<()> {
    let collection = load_collection(&a.collection)?;
    let queries = load_queries(&a.queries)?;
    let idx = InvertedIndex::build(&collection, bm25_params(&a.bm25)?)?;
    let run = retrieve_all(&idx, &queries, a.k, &a.tag)?;
    write_out(&a.out, &run.to_trec())
}

fn require<T>(v: Option<T>, flag: &str, scheme: &str) -> Result<T> {
    v.ok_or_else(|| Error::config(flag, format!("required by --scheme {scheme}")))
}

fn partition(a: PartitionArgs) -> Result<()> {
    let qrels = load_qrels(&a.qrels)?;
    match a.scheme {
        PartitionScheme::Msmarco => {
            let run = load_run(require(a.run.as_ref(), "run", "msmarco")?)?;
            let k = require(a.k, "k", "msmarco")?;
            let split = sample_msmarco_split(&qrels, &run, k, substream_seed(a.seed, "split"))?;
            write_out(&a.out, &split.to_tsv())?;
            if let Some(dev_out) = &a.dev_out {
                let dev = build_dev_set(&qrels, &run, &split, substream_seed(a.seed, "dev"))?;
                write_out(dev_out, &dev.run(&run).to_trec())?;
            }
            Ok(())
        }
        PartitionScheme::Fraction => {
            let r = require(a.r, "r", "fraction")?;
            let kept = sample_label_fraction(&qrels, r, a.seed)?;
            write_out(&a.out, &kept.to_trec())
        }
        PartitionScheme::Folds => {
            let folds = make_folds(qrels.query_ids(), a.folds, a.seed)?;
            write_out(&a.out, &folds.to_tsv())
        }
    }
}

fn prefinetune_cmd(a: PrefinetuneArgs) -> Result<()> {
    let cfg = a.train.resolve(TrainMode::ModelTuning)?;
    let tasks = load_task_dir(&a.data)?;
    let mut model = match &a.init {
        Some(p) => {
            let (m, tok) = load_model(p)?;
            if tok != tasks.tokenizer {
                return Err(Error::invalid(format!("{}: vocabulary differs from {}", p.display(), a.data.display())));
            }
            m
        }
        None => MicroModel::new(ModelSpec::default().config(tasks.tokenizer.vocab_size(), a.init_seed))?,
    };
    let mixture = match a.task {
        TaskChoice::NliLike => MixtureSpec::single(tasks.nli_like.clone()),
        TaskChoice::QaLike => MixtureSpec::single(tasks.qa_like.clone()),
        TaskChoice::Mixture => MixtureSpec::equal(vec![tasks.nli_like.clone(), tasks.qa_like.clone()])?,
    };
    let log = prefinetune(&mut model, &tasks.tokenizer, &mixture, &cfg)?;
    if let Some(p) = &a.train.log {
        write_out(p, &log.to_jsonl()?)?;
    }
    save_model(&a.out, &model, &tasks.tokenizer)
}

struct RankingSetup {
    model: MicroModel,
    tokenizer: crate::prompting::Tokenizer,
    collection: crate::corpus::Collection,
    queries: crate::corpus::Queries,
    qrels: Qrels,
    split: TrainSplit,
    dev: Option<DevSet>,
}

impl RankingSetup {
    fn load(i: &RankingInputs, seed: u64) -> Result<Self> {
        let (model, tokenizer) = load_model(&i.model)?;
        let collection = load_collection(i.data.join("collection.tsv"))?;
        let queries = load_queries(i.data.join("queries.tsv"))?;
        let qrels = load_qrels(i.data.join("qrels.txt"))?;
        let split = TrainSplit::load(&i.split, seed)?;
        let dev = match &i.dev_run {
            Some(p) => Some(DevSet::from_run(&load_run(p)?, seed)),
            None => None,
        };
        Ok(Self { model, tokenizer, collection, queries, qrels, split, dev })
    }

    fn data(&self) -> RankingData<'_> {
        RankingData { collection: &self.collection, queries: &self.queries, qrels: &self.qrels }
    }
}

fn finetune_cmd(a: FinetuneArgs) -> Result<()> {
    let cfg = a.train.resolve(TrainMode::ModelTuning)?;
    let mut s = RankingSetup::load(&a.inputs, cfg.seed)?;
    let template = a.scheme.template();
    let verbalizer = Verbalizer::ranking(&s.tokenizer)?;
    let mut model = s.model.clone();
    let outcome = {
        let scheme = Scheme::new(&s.tokenizer, &template, &verbalizer);
        finetune(&mut model, &scheme, &s.split, &s.data(), s.dev.as_ref(), &cfg)?
    };
    s.model = model;
    if let Some(p) = &a.train.log {
        write_out(p, &outcome.log.to_jsonl()?)?;
    }
    save_model(&a.out, &s.model, &s.tokenizer)
}

fn prompt_tune_cmd(a: PromptTuneArgs) -> Result<()> {
    let cfg = a.train.resolve(TrainMode::PromptTuning)?;
    let s = RankingSetup::load(&a.inputs, cfg.seed)?;
    let template = Template::continuous();
    let verbalizer = Verbalizer::ranking(&s.tokenizer)?;
    let texts = ContinuousPrompt::<f32>::default_texts();
    let mut prompt = s
        .model
        .init_prompt(&s.tokenizer, [texts[0].as_str(), texts[1].as_str(), texts[2].as_str()])?;
    let scheme = Scheme::new(&s.tokenizer, &template, &verbalizer);
    let outcome = prompt_tune(&s.model, &mut prompt, &scheme, &s.split, &s.data(), s.dev.as_ref(), &cfg)?;
    if let Some(p) = &a.train.log {
        write_out(p, &outcome.log.to_jsonl()?)?;
    }
    eprintln!(
        "trainable parameters: {} of {} ({:.4}%)",
        outcome.trainable_params,
        outcome.total_params,
        100.0 * outcome.trainable_fraction()
    );
    save_prompt(&a.out, &prompt)
}

fn rerank_cmd(a: RerankArgs) -> Result<()> {
    let (model, tokenizer) = load_model(&a.model)?;
    let collection = load_collection(a.data.join("collection.tsv"))?;
    let queries = load_queries(a.data.join("queries.tsv"))?;
    let first = load_run(&a.run)?;
    let verbalizer = Verbalizer::ranking(&tokenizer)?;
    let prompt = a.prompt.as_ref().map(load_prompt).transpose()?;
    let template = if prompt.is_some() { Template::continuous() } else { a.scheme.template() };
    let max_len = model.config().max_len;
    let mut ranker = PromptRanker::new(&model, &tokenizer, &template, &verbalizer, max_len);
    if let Some(p) = &prompt {
        ranker = ranker.with_prompt(p);
    }
    let run = rerank(&ranker, &first, &queries, &collection, a.depth, &a.tag)?;
    write_out(&a.out, &run.to_trec())
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let run = load_run(&a.run)?;
    let qrels = load_qrels(&a.qrels)?;
    let m = match a.metric {
        MetricChoice::Mrr => mrr_at_k(&run, &qrels, a.k)?,
        MetricChoice::Ndcg => ndcg_at_k(&run, &qrels, a.k)?,
    };
    emit(a.out.as_deref(), &m.to_json()?)
}

fn compare(a: CompareArgs) -> Result<()> {
    let x = MetricResult::load(&a.a)?;
    let y = MetricResult::load(&a.b)?;
    let r = paired_significance_with(&x, &y, a.resamples, a.seed)?;
    emit(None, &(serde_json::to_string_pretty(&r)? + "\n"))
}

/// Judged `(query, document)` pairs of every query in `run`, labelled
/// `pos` or `neg`.
fn judged_pairs(run: &Run, tasks: &crate::training::SyntheticTasks) -> Result<Vec<LabeledPair>> {
    let mut pairs = Vec::new();
    for qid in run.query_ids() {
        let Some(judged) = tasks.qrels.query(qid) else { continue };
        let q = &tasks.queries.lookup(qid)?.text;
        for (docid, &grade) in judged {
            let label = if grade >= 1 { "pos" } else { "neg" };
            let d = &tasks.collection.lookup(docid)?.text;
            pairs.push(LabeledPair::new(format!("{qid}:{docid}"), label, q.clone(), d.clone()));
        }
    }
    Ok(pairs)
}

fn analyze(a: AnalyzeArgs) -> Result<()> {
    let (model, tokenizer) = load_model(&a.model)?;
    let tasks = load_task_dir(&a.data)?;
    if tokenizer != tasks.tokenizer {
        return Err(Error::invalid(format!("{}: vocabulary differs from {}", a.model.display(), a.data.display())));
    }
    let run = load_run(&a.run)?;
    let max_len = model.config().max_len;
    let template = Template::seq2seq_manual();
    let verbalizer = Verbalizer::ranking(&tokenizer)?;
    let ranker = PromptRanker::new(&model, &tokenizer, &template, &verbalizer, max_len);
    let ranking_pairs = judged_pairs(&run, &tasks)?;
    let nli = &tasks.nli_like;
    let nli_pairs: Vec<LabeledPair> = nli
        .examples
        .iter()
        .take(a.task_pairs)
        .enumerate()
        .map(|(i, e)| LabeledPair::new(format!("nli{i}"), e.label.as_str(), e.text_a.clone(), e.text_b.clone()))
        .collect();
    let nli_ranker = PromptRanker::new(&model, &tokenizer, &nli.template, &nli.verbalizer, max_len);
    let mut dumps = vec![extract_embeddings(&ranker, &ranking_pairs)?];
    if !nli_pairs.is_empty() {
        dumps.push(extract_embeddings(&nli_ranker, &nli_pairs)?);
    }
    let dump = EmbeddingDump::concat(dumps)?;
    let (pos, neg) = score_labeled(&ranker, &ranking_pairs, |l| l == "pos")?;
    let hist = score_histogram(&pos, &neg, a.bins)?;
    write_out(&a.out.join("embeddings.tsv"), &dump.to_tsv())?;
    write_out(&a.out.join("projection.tsv"), &projection_to_tsv(&project_2d(&dump)?))?;
    write_out(&a.out.join("histogram.json"), &hist.to_json()?)
}

fn synth(a: SynthArgs) -> Result<()> {
    let mut cfg: SyntheticConfig = match &a.config {
        Some(p) => load_json(p)?,
        None => SyntheticConfig::default(),
    };
    if let Some(n) = a.nli_examples {
        cfg.nli_examples = n;
    }
    if let Some(n) = a.qa_examples {
        cfg.qa_examples = n;
    }
    let tasks = make_synthetic_tasks(substream_seed(a.seed, "synthetic"), &cfg)?;
    save_task_dir(&a.out, &tasks)
}

fn run_all(a: RunAllArgs) -> Result<()> {
    let mut cfg: ExperimentConfig = load_json(&a.config)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(o) = a.output {
        cfg.output_dir = Some(o);
    }
    if let Some(r) = a.repeats {
        cfg.repeats = r;
    }
    cfg.validate()?;
    let report = run_transfer(&cfg)?;
    emit(None, &report.table())
}
