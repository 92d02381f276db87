//! Ranking externally generated template candidates.

use std::fs;
use std::path::Path;

use rayon::prelude::*;

use super::template::Template;
use crate::partition::TrainSplit;
use crate::{Error, Result};

/// Number of few-shot sets each candidate is trained on.
pub const DEFAULT_FEWSHOT_SETS: usize = 5;
/// Examples per class in each few-shot set.
pub const DEFAULT_SHOTS_PER_CLASS: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct TemplateCandidateSet {
    candidates: Vec<Template>,
    scores: Option<Vec<f64>>,
}

impl TemplateCandidateSet {
    pub fn new(candidates: Vec<Template>) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::invalid("template candidate set is empty"));
        }
        Ok(Self {
            candidates,
            scores: None,
        })
    }

    /// One template JSON object per non-blank line.
    pub fn parse_jsonl(text: &str, path: &Path) -> Result<Self> {
        let mut out = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let t: Template = serde_json::from_str(line).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
            out.push(t);
        }
        Self::new(out)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_jsonl(&text, path)
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut s = String::new();
        for t in &self.candidates {
            s.push_str(&serde_json::to_string(t)?);
            s.push('\n');
        }
        Ok(s)
    }

    pub fn candidates(&self) -> &[Template] {
        &self.candidates
    }

    /// Dev scores, in candidate order, once ranked.
    pub fn scores(&self) -> Option<&[f64]> {
        self.scores.as_deref()
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }
}

/// Trains every candidate on every few-shot set and returns the candidate
/// whose best dev metric is highest (earliest candidate on ties).
///
/// `trainer` returns the dev metric of one (candidate, set) run. Runs are
/// independent and may execute in parallel; results are merged in candidate
/// order.
pub fn rank_template_candidates<T>(
    set: &mut TemplateCandidateSet,
    fewshot_sets: &[TrainSplit],
    trainer: T,
) -> Result<Template>
where
    T: Fn(&Template, &TrainSplit) -> Result<f64> + Sync,
{
    if fewshot_sets.is_empty() {
        return Err(Error::invalid("no few-shot sets to rank templates on"));
    }
    let scores: Vec<f64> = set
        .candidates
        .par_iter()
        .enumerate()
        .map(|(i, t)| {
            let mut best = f64::NEG_INFINITY;
            for (j, split) in fewshot_sets.iter().enumerate() {
                let m = trainer(t, split)
                    .map_err(|e| e.context(format!("template candidate {i} \"{t}\", set {j}")))?;
                best = best.max(m);
            }
            Ok(best)
        })
        .collect::<Result<_>>()?;
    let mut arg = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[arg] {
            arg = i;
        }
    }
    let best = set.candidates[arg].clone();
    set.scores = Some(scores);
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompting::template::TemplateKind;

    fn split() -> TrainSplit {
        TrainSplit {
            triples: Vec::new(),
            seed: 0,
        }
    }

    fn tpl(p: &str) -> Template {
        Template::parse(TemplateKind::MaskAuto, p).unwrap()
    }

    #[test]
    fn single_and_tied() {
        let mut one = TemplateCandidateSet::new(vec![tpl("[q] [MASK] [d]")]).unwrap();
        let best = rank_template_candidates(&mut one, &[split()], |_, _| Ok(0.0)).unwrap();
        assert_eq!(best, tpl("[q] [MASK] [d]"));
        let mut two = TemplateCandidateSet::new(vec![tpl("[q] a [MASK] [d]"), tpl("[q] b [MASK] [d]")]).unwrap();
        let best = rank_template_candidates(&mut two, &[split(), split()], |_, _| Ok(0.3)).unwrap();
        assert_eq!(best, tpl("[q] a [MASK] [d]"));
        assert_eq!(two.scores().unwrap(), &[0.3, 0.3]);
    }

    #[test]
    fn max_over_sets_and_error_context() {
        let mut set = TemplateCandidateSet::new(vec![tpl("[q] a [MASK] [d]"), tpl("[q] b [MASK] [d]")]).unwrap();
        let sets = [TrainSplit { triples: vec![], seed: 1 }, TrainSplit { triples: vec![], seed: 2 }];
        let best = rank_template_candidates(&mut set, &sets, |t, s| {
            let a = t.to_string().contains(" a ");
            Ok(match (a, s.seed) {
                (true, 1) => 0.9,
                (true, _) => 0.1,
                (false, _) => 0.5,
            })
        })
        .unwrap();
        assert_eq!(best, tpl("[q] a [MASK] [d]"));
        let err = rank_template_candidates(&mut set, &sets, |t, _| {
            if t.to_string().contains(" b ") {
                Err(Error::invalid("boom"))
            } else {
                Ok(0.0)
            }
        })
        .unwrap_err();
        assert!(err.to_string().contains("candidate 1"), "{err}");
    }

    #[test]
    fn jsonl_round_trip_and_empty() {
        let set = TemplateCandidateSet::new(vec![tpl("[q]? Which is [MASK]? [d]"), Template::mask_manual()]).unwrap();
        let text = set.to_jsonl().unwrap();
        let back = TemplateCandidateSet::parse_jsonl(&text, Path::new("c.jsonl")).unwrap();
        assert_eq!(back.candidates(), set.candidates());
        assert!(TemplateCandidateSet::parse_jsonl("\n", Path::new("c.jsonl")).is_err());
        let bad = r#"{"kind":"mask_auto","pieces":[{"slot":"q"},{"slot":"d"}]}"#;
        assert!(TemplateCandidateSet::parse_jsonl(bad, Path::new("c.jsonl")).is_err());
    }
}
