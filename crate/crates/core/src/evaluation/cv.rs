use std::collections::BTreeMap;

use super::metrics::MetricResult;
use crate::partition::FoldAssignment;
use crate::{Error, Result};

/// For each fold, trains on the other folds' queries and evaluates on the
/// fold; per-query values are pooled across folds.
pub fn cross_validate<T, TrainFn, EvalFn>(
    folds: &FoldAssignment,
    mut train_fn: TrainFn,
    mut eval_fn: EvalFn,
) -> Result<MetricResult>
where
    TrainFn: FnMut(usize, &[&str]) -> Result<T>,
    EvalFn: FnMut(&T, &[&str]) -> Result<MetricResult>,
{
    if folds.n_folds < 2 {
        return Err(Error::config("n_folds", "cross-validation needs at least two folds"));
    }
    let mut pooled = BTreeMap::new();
    let mut name: Option<(String, usize)> = None;
    for f in 0..folds.n_folds {
        let test = folds.fold(f);
        if test.is_empty() {
            return Err(Error::invalid(format!("fold {f} has no queries")));
        }
        let train: Vec<&str> = folds
            .fold_of
            .iter()
            .filter(|(_, &k)| k != f)
            .map(|(q, _)| q.as_str())
            .collect();
        let trained = train_fn(f, &train).map_err(|e| e.context(format!("training fold {f}")))?;
        let result = eval_fn(&trained, &test).map_err(|e| e.context(format!("evaluating fold {f}")))?;
        for (q, v) in result.per_query {
            if !test.contains(&q.as_str()) {
                return Err(Error::invalid(format!("fold {f} evaluated query \"{q}\" outside the fold")));
            }
            pooled.insert(q, v);
        }
        name.get_or_insert((result.metric, result.cutoff));
    }
    let (metric, cutoff) = name.expect("at least two folds");
    MetricResult::new(metric, cutoff, pooled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::make_folds;

    #[test]
    fn pools_every_query() {
        let ids: Vec<String> = (0..249).map(|i| format!("q{i}")).collect();
        let folds = make_folds(ids.iter().map(String::as_str), 5, 3).unwrap();
        let r = cross_validate(
            &folds,
            |f, train| {
                assert!(!train.is_empty());
                Ok(f)
            },
            |_, test| MetricResult::new("mrr", 10, test.iter().map(|q| (q.to_string(), 0.5)).collect()),
        )
        .unwrap();
        assert_eq!(r.per_query.len(), 249);
        assert_eq!(r.mean, 0.5);
    }

    #[test]
    fn train_errors_name_the_fold() {
        let ids: Vec<String> = (0..10).map(|i| format!("q{i}")).collect();
        let folds = make_folds(ids.iter().map(String::as_str), 5, 3).unwrap();
        let err = cross_validate(
            &folds,
            |f, _| if f == 2 { Err(Error::invalid("x")) } else { Ok(()) },
            |_, test| MetricResult::new("mrr", 10, test.iter().map(|q| (q.to_string(), 0.0)).collect()),
        )
        .unwrap_err();
        assert!(err.to_string().contains("fold 2"));
    }
}
