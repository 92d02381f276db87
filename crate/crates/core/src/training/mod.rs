//! Pre-finetuning, ranking fine-tuning and prompt tuning.

pub mod optim;
pub mod synthetic;
pub mod tasks;
pub mod trainer;

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use optim::{linear_lr, Adam};
pub use synthetic::{make_synthetic_tasks, SyntheticConfig, SyntheticTasks};
pub use tasks::{mix_stream, MixStream, MixtureSpec, TaskExample, TaskSpec};
pub use trainer::{finetune, prefinetune, prompt_tune, FinetuneOutcome, PromptTuneOutcome, RankingData};

use crate::{Error, Result};

/// Steps of pre-finetuning used at full scale.
pub const PAPER_PREFINETUNE_STEPS: usize = 12_000;
/// Batch size used for pre-finetuning at full scale.
pub const PAPER_PREFINETUNE_BATCH: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    ModelTuning,
    PromptTuning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_steps: usize,
    /// `None` picks the size from the number of training queries.
    pub batch_size: Option<usize>,
    pub seed: u64,
    pub mode: TrainMode,
    /// Dev evaluation cadence for checkpoint selection.
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2e-5,
            max_steps: 2000,
            batch_size: None,
            seed: 0,
            mode: TrainMode::ModelTuning,
            eval_every: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be positive"));
        }
        if self.batch_size == Some(0) {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if self.eval_every == 0 {
            return Err(Error::config("eval_every", "must be at least 1"));
        }
        Ok(())
    }

    pub(crate) fn expect_mode(&self, mode: TrainMode) -> Result<()> {
        self.validate()?;
        if self.mode != mode {
            return Err(Error::config("mode", format!("expected {mode:?}, found {:?}", self.mode)));
        }
        Ok(())
    }
}

/// 8 for up to 50 training queries, 32 beyond.
pub fn default_batch_size(n_queries: usize) -> usize {
    if n_queries <= 50 {
        8
    } else {
        32
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dev_metric: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub entries: Vec<LogEntry>,
}

impl TrainLog {
    pub fn to_jsonl(&self) -> Result<String> {
        let mut s = String::new();
        for e in &self.entries {
            s.push_str(&serde_json::to_string(e)?);
            s.push('\n');
        }
        Ok(s)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_jsonl()?.as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn losses(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|e| e.loss)
    }

    /// Mean loss over the first and the last `n` logged steps.
    pub fn head_tail_loss(&self, n: usize) -> Option<(f64, f64)> {
        let n = n.min(self.entries.len());
        if n == 0 {
            return None;
        }
        let mean = |s: &[LogEntry]| s.iter().map(|e| e.loss).sum::<f64>() / s.len() as f64;
        Some((
            mean(&self.entries[..n]),
            mean(&self.entries[self.entries.len() - n..]),
        ))
    }
}
