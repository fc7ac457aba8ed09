//! Datasets: synthetic 2-D generators, IDX ingestion and semi-supervised
//! splits.

pub mod idx;
pub mod split;
pub mod synthetic;

use crate::error::{Error, Result};
use crate::model::SoftLabel;
use crate::tensor::Tensor;

pub use split::{split_semisup, SemiSupervisedSplit};
pub use synthetic::{gen_synthetic, SyntheticKind};

/// Ground-truth classes that only evaluation code may read.
#[derive(Clone, Debug, PartialEq)]
pub struct SealedLabels(Vec<usize>);

impl SealedLabels {
    pub(crate) fn new(labels: Vec<usize>) -> Self {
        Self(labels)
    }

    /// Reveal the labels to an evaluation routine.
    pub fn reveal_for_evaluation(&self) -> &[usize] {
        &self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    /// `[N, d]`.
    pub inputs: Tensor,
    /// Visible class labels, one per row.
    pub labels: Option<Vec<usize>>,
    /// Soft pseudo-labels, one per row.
    pub pseudo_labels: Option<Vec<SoftLabel>>,
    pub class_count: usize,
    pub domain_bounds: Option<(f64, f64)>,
    /// Ground truth of rows whose labels are hidden from training.
    pub sealed: Option<SealedLabels>,
}

impl Dataset {
    pub fn labeled(inputs: Tensor, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        let ds = Self {
            inputs,
            labels: Some(labels),
            pseudo_labels: None,
            class_count,
            domain_bounds: None,
            sealed: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs.shape().len() != 2 {
            return Err(Error::shape(
                "dataset",
                format!("inputs must be [N, d], got {:?}", self.inputs.shape()),
            ));
        }
        let n = self.len();
        if let Some(l) = &self.labels {
            if l.len() != n {
                return Err(Error::shape("dataset", format!("{} labels for {n} rows", l.len())));
            }
            if let Some(bad) = l.iter().find(|&&c| c >= self.class_count) {
                return Err(Error::invalid(format!(
                    "label {bad} out of range for {} classes",
                    self.class_count
                )));
            }
        }
        if let Some(p) = &self.pseudo_labels {
            if p.len() != n || p.iter().any(|s| s.classes() != self.class_count) {
                return Err(Error::shape("dataset", "pseudo-label rows do not match inputs"));
            }
        }
        Ok(())
    }

    /// Rows `indices`, in that order, carrying every per-row field along.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        if indices.is_empty() {
            return Err(Error::invalid("empty subset"));
        }
        let pick = |v: &Vec<usize>| indices.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Ok(Dataset {
            inputs: self.inputs.select_rows(indices)?,
            labels: self.labels.as_ref().map(pick),
            pseudo_labels: self
                .pseudo_labels
                .as_ref()
                .map(|p| indices.iter().map(|&i| p[i].clone()).collect()),
            class_count: self.class_count,
            domain_bounds: self.domain_bounds,
            sealed: self.sealed.as_ref().map(|s| SealedLabels(pick(&s.0))),
        })
    }

    /// One-hot targets for labeled data.
    pub fn one_hot_labels(&self) -> Result<Vec<SoftLabel>> {
        let labels = self
            .labels
            .as_ref()
            .ok_or_else(|| Error::invalid("dataset has no visible labels"))?;
        labels
            .iter()
            .map(|&c| SoftLabel::one_hot(c, self.class_count))
            .collect()
    }
}
