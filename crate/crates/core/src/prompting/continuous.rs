//! Trainable prompt vectors: `[s1] [q] [s2] [d] [s3]`.

use crate::model::{Scalar, Tensor};
use crate::{Error, Result};

/// Initialization strings for the three segments.
pub const DEFAULT_INIT_TEXTS: [&str; 3] = [
    "Task: Find the relevance between Query and Document. Query:",
    "Document:",
    "Relevant:",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousPrompt<F: Scalar = f32> {
    segments: [Tensor<F>; 3],
    init_texts: [String; 3],
}

impl<F: Scalar> ContinuousPrompt<F> {
    /// Segment lengths are fixed from here on; all must share one width.
    pub fn new(segments: [Tensor<F>; 3], init_texts: [String; 3]) -> Result<Self> {
        let dim = segments[0].cols();
        if segments.iter().any(|s| s.cols() != dim) {
            return Err(Error::invalid("prompt segments differ in width"));
        }
        if dim == 0 {
            return Err(Error::invalid("prompt segments have zero width"));
        }
        if !segments.iter().all(Tensor::all_finite) {
            return Err(Error::invalid("prompt vectors must be finite"));
        }
        Ok(Self {
            segments,
            init_texts,
        })
    }

    pub fn default_texts() -> [String; 3] {
        DEFAULT_INIT_TEXTS.map(String::from)
    }

    pub fn segments(&self) -> &[Tensor<F>; 3] {
        &self.segments
    }

    /// Mutable access for optimizers; shapes must not change.
    pub fn segments_mut(&mut self) -> &mut [Tensor<F>; 3] {
        &mut self.segments
    }

    pub fn init_texts(&self) -> &[String; 3] {
        &self.init_texts
    }

    pub fn dim(&self) -> usize {
        self.segments[0].cols()
    }

    pub fn lengths(&self) -> [usize; 3] {
        [
            self.segments[0].rows(),
            self.segments[1].rows(),
            self.segments[2].rows(),
        ]
    }

    /// `|s1| + |s2| + |s3|`.
    pub fn total_len(&self) -> usize {
        self.lengths().iter().sum()
    }

    pub fn cast<G: Scalar>(&self) -> ContinuousPrompt<G> {
        ContinuousPrompt {
            segments: [
                self.segments[0].cast(),
                self.segments[1].cast(),
                self.segments[2].cast(),
            ],
            init_texts: self.init_texts.clone(),
        }
    }

    /// The full input sequence: prompt vectors around frozen query and
    /// document embeddings.
    pub fn assemble(&self, query: &Tensor<F>, document: &Tensor<F>) -> Result<Tensor<F>> {
        let d = self.dim();
        if query.cols() != d || document.cols() != d {
            return Err(Error::invalid(format!(
                "token embeddings have width {}/{}, prompt has {d}",
                query.cols(),
                document.cols()
            )));
        }
        let parts = [
            &self.segments[0],
            query,
            &self.segments[1],
            document,
            &self.segments[2],
        ];
        let rows = parts.iter().map(|p| p.rows()).sum();
        let mut data = Vec::with_capacity(rows * d);
        for p in parts {
            data.extend_from_slice(p.data());
        }
        Ok(Tensor::from_vec(rows, d, data))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn prompt(lens: [usize; 3], d: usize) -> ContinuousPrompt<f64> {
        let seg = |n: usize, v: f64| Tensor::filled(n, d, v);
        ContinuousPrompt::new(
            [seg(lens[0], 1.0), seg(lens[1], 2.0), seg(lens[2], 3.0)],
            ContinuousPrompt::<f64>::default_texts(),
        )
        .unwrap()
    }

    #[test]
    fn assembled_length() {
        let p = prompt([2, 1, 1], 4);
        let out = p.assemble(&Tensor::zeros(3, 4), &Tensor::zeros(4, 4)).unwrap();
        assert_eq!(out.rows(), 11);
        let p = prompt([2, 0, 1], 4);
        let out = p.assemble(&Tensor::zeros(3, 4), &Tensor::zeros(4, 4)).unwrap();
        assert_eq!(out.rows(), 10);
        assert!(p.assemble(&Tensor::zeros(3, 5), &Tensor::zeros(4, 4)).is_err());
    }

    #[test]
    fn rejects_bad_segments() {
        let texts = ContinuousPrompt::<f64>::default_texts();
        let mixed = [Tensor::<f64>::zeros(1, 4), Tensor::zeros(1, 3), Tensor::zeros(1, 4)];
        assert!(ContinuousPrompt::new(mixed, texts.clone()).is_err());
        let nan = [Tensor::filled(1, 2, f64::NAN), Tensor::zeros(1, 2), Tensor::zeros(1, 2)];
        assert!(ContinuousPrompt::new(nan, texts).is_err());
    }

    proptest! {
        #[test]
        fn layout_and_frozen_inputs(s1 in 0usize..4, s2 in 0usize..4, s3 in 0usize..4, q in 0usize..5, dl in 0usize..5) {
            let p = prompt([s1, s2, s3], 3);
            let qe = Tensor::filled(q, 3, 7.0);
            let de = Tensor::filled(dl, 3, 9.0);
            let (qc, dc) = (qe.clone(), de.clone());
            let out = p.assemble(&qe, &de).unwrap();
            prop_assert_eq!(out.rows(), s1 + q + s2 + dl + s3);
            prop_assert_eq!(&qe, &qc);
            prop_assert_eq!(&de, &dc);
            for r in s1..s1 + q {
                prop_assert!(out.row(r).iter().all(|&x| x == 7.0));
            }
            for r in s1 + q + s2..s1 + q + s2 + dl {
                prop_assert!(out.row(r).iter().all(|&x| x == 9.0));
            }
        }
    }
}
