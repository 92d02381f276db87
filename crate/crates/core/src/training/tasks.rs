//! Labeled text-pair tasks and seeded task mixtures.

use std::fs;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;

use crate::prompting::{Label, Template, Verbalizer};
use crate::rng::{self, StageRng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskExample {
    /// Fills the template's first slot (`[q]`).
    pub text_a: String,
    /// Fills the template's second slot (`[d]`).
    pub text_b: String,
    pub label: Label,
}

/// Examples of one task with the template and verbalizer used to train on it.
#[derive(Debug, Clone)]
pub struct TaskSpec {
    pub name: String,
    pub examples: Vec<TaskExample>,
    pub template: Template,
    pub verbalizer: Verbalizer,
}

impl TaskSpec {
    /// Rejects any gold label the verbalizer cannot express.
    pub fn new(
        name: impl Into<String>,
        examples: Vec<TaskExample>,
        template: Template,
        verbalizer: Verbalizer,
    ) -> Result<Self> {
        let name = name.into();
        for (i, ex) in examples.iter().enumerate() {
            verbalizer
                .index_of(&ex.label)
                .map_err(|e| e.context(format!("task {name}, example {i}")))?;
        }
        Ok(Self {
            name,
            examples,
            template,
            verbalizer,
        })
    }

    /// `text_a<TAB>text_b<TAB>label` lines.
    pub fn parse_tsv(
        name: &str,
        contents: &str,
        path: &Path,
        template: Template,
        verbalizer: Verbalizer,
    ) -> Result<Self> {
        let mut examples = Vec::new();
        for (i, line) in contents.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [a, b, label] = fields[..] else {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: format!("expected 3 tab-separated fields, found {}", fields.len()),
                });
            };
            if verbalizer.index_of(&Label::new(label)).is_err() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: format!("label \"{label}\" is not in the verbalizer"),
                });
            }
            examples.push(TaskExample {
                text_a: a.to_string(),
                text_b: b.to_string(),
                label: Label::new(label),
            });
        }
        Self::new(name, examples, template, verbalizer)
    }

    pub fn load_tsv(name: &str, path: impl AsRef<Path>, template: Template, verbalizer: Verbalizer) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_tsv(name, &text, path, template, verbalizer)
    }

    pub fn to_tsv(&self) -> String {
        self.examples
            .iter()
            .map(|e| format!("{}\t{}\t{}\n", e.text_a, e.text_b, e.label))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct MixtureSpec {
    pub tasks: Vec<TaskSpec>,
    pub weights: Vec<f64>,
}

impl MixtureSpec {
    pub fn new(tasks: Vec<TaskSpec>, weights: Vec<f64>) -> Result<Self> {
        if tasks.is_empty() {
            return Err(Error::invalid("a mixture needs at least one task"));
        }
        if weights.len() != tasks.len() {
            return Err(Error::config("weights", "one weight per task"));
        }
        if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::config("weights", "weights must be positive"));
        }
        Ok(Self { tasks, weights })
    }

    pub fn equal(tasks: Vec<TaskSpec>) -> Result<Self> {
        let n = tasks.len();
        Self::new(tasks, vec![1.0; n])
    }

    pub fn single(task: TaskSpec) -> Self {
        Self {
            tasks: vec![task],
            weights: vec![1.0],
        }
    }
}

/// Endless draws from a mixture: a task by weight, then the next example of
/// that task's current shuffled epoch.
pub struct MixStream<'a> {
    mixture: &'a MixtureSpec,
    pick: WeightedIndex<f64>,
    order: Vec<Vec<usize>>,
    cursor: Vec<usize>,
    rng: StageRng,
}

pub fn mix_stream(mixture: &MixtureSpec, seed: u64) -> Result<MixStream<'_>> {
    if let Some(t) = mixture.tasks.iter().find(|t| t.is_empty()) {
        return Err(Error::invalid(format!("task \"{}\" has no examples", t.name)));
    }
    let pick = WeightedIndex::new(&mixture.weights).map_err(|e| Error::config("weights", e.to_string()))?;
    let mut rng = rng::substream(seed, "mixture");
    let order = mixture
        .tasks
        .iter()
        .map(|t| {
            let mut o: Vec<usize> = (0..t.len()).collect();
            o.shuffle(&mut rng);
            o
        })
        .collect();
    Ok(MixStream {
        mixture,
        pick,
        order,
        cursor: vec![0; mixture.tasks.len()],
        rng,
    })
}

impl<'a> Iterator for MixStream<'a> {
    /// `(task index, example)`.
    type Item = (usize, &'a TaskExample);

    fn next(&mut self) -> Option<Self::Item> {
        let t = self.pick.sample(&mut self.rng);
        if self.cursor[t] == self.order[t].len() {
            self.order[t].shuffle(&mut self.rng);
            self.cursor[t] = 0;
        }
        let i = self.order[t][self.cursor[t]];
        self.cursor[t] += 1;
        Some((t, &self.mixture.tasks[t].examples[i]))
    }
}
