//! Datasets, sparse file ingestion, task construction, and synthetic tasks.

mod sparse;
mod synth;
mod task;

pub use sparse::{load_labeled, load_sparse, load_unlabeled, save_labeled, save_unlabeled, SparseFile};
pub use synth::{synth_gaussian_pair, GaussianPairSpec};
pub use task::{
    build_task, largest_remainder_counts, resample_with_ratio, select_task_indices, shift_degree, Task, TaskSelection,
    TaskSpec,
};

use crate::error::{Error, Result};
use crate::numkit::Matrix;

/// One example with sorted, strictly increasing feature indices.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseExample {
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseExample {
    pub fn new(indices: Vec<u32>, values: Vec<f64>) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::contract("sparse example indices and values differ in length"));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::contract("sparse example indices must be strictly increasing"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("sparse example values must be finite"));
        }
        Ok(Self { indices, values })
    }

    /// Keeps every nonzero coordinate of a dense vector.
    pub fn from_dense(dense: &[f64]) -> Self {
        let (indices, values) = dense
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i as u32, *v))
            .unzip();
        Self { indices, values }
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// Largest index plus one, or zero when empty.
    pub fn min_dim(&self) -> usize {
        self.indices.last().map_or(0, |&i| i as usize + 1)
    }

    fn write_dense(&self, out: &mut [f64]) {
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            out[i as usize] = v;
        }
    }
}

/// Expands the selected examples into dense rows.
pub fn densify(examples: &[SparseExample], rows: &[usize], feature_dim: usize) -> Matrix {
    let mut m = Matrix::zeros(rows.len(), feature_dim);
    for (r, &i) in rows.iter().enumerate() {
        examples[i].write_dense(m.row_mut(r));
    }
    m
}

fn check_dims(examples: &[SparseExample], feature_dim: usize) -> Result<()> {
    if let Some((i, ex)) = examples.iter().enumerate().find(|(_, e)| e.min_dim() > feature_dim) {
        return Err(Error::contract(format!(
            "example {i} has feature index {} outside dimension {feature_dim}",
            ex.min_dim() - 1
        )));
    }
    Ok(())
}

/// Labelled examples, e.g. the source domain.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    examples: Vec<SparseExample>,
    labels: Vec<usize>,
    num_classes: usize,
    feature_dim: usize,
}

impl LabeledDataset {
    pub fn new(
        examples: Vec<SparseExample>,
        labels: Vec<usize>,
        num_classes: usize,
        feature_dim: usize,
    ) -> Result<Self> {
        if examples.len() != labels.len() {
            return Err(Error::contract(format!(
                "{} examples but {} labels",
                examples.len(),
                labels.len()
            )));
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::Index {
                context: "dataset label",
                index: y,
                limit: num_classes,
            });
        }
        check_dims(&examples, feature_dim)?;
        Ok(Self {
            examples,
            labels,
            num_classes,
            feature_dim,
        })
    }

    /// Builds a dataset from dense rows.
    pub fn from_dense(x: &Matrix, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let examples = x.iter_rows().map(SparseExample::from_dense).collect();
        Self::new(examples, labels, num_classes, x.cols())
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn examples(&self) -> &[SparseExample] {
        &self.examples
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Empirical class frequencies.
    pub fn priors(&self) -> Vec<f64> {
        let n = self.len() as f64;
        self.class_counts().iter().map(|&c| c as f64 / n).collect()
    }

    /// Example indices grouped by class.
    pub fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.num_classes];
        for (i, &y) in self.labels.iter().enumerate() {
            by_class[y].push(i);
        }
        by_class
    }

    pub fn dense(&self) -> Matrix {
        let all: Vec<usize> = (0..self.len()).collect();
        densify(&self.examples, &all, self.feature_dim)
    }

    pub fn dense_rows(&self, rows: &[usize]) -> Matrix {
        densify(&self.examples, rows, self.feature_dim)
    }

    pub fn subset(&self, rows: &[usize]) -> LabeledDataset {
        LabeledDataset {
            examples: rows.iter().map(|&i| self.examples[i].clone()).collect(),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            feature_dim: self.feature_dim,
        }
    }

    /// Drops the labels. They stay reachable through
    /// [`UnlabeledDataset::oracle_labels`] for evaluation-only uses.
    pub fn into_unlabeled(self) -> UnlabeledDataset {
        UnlabeledDataset {
            examples: self.examples,
            feature_dim: self.feature_dim,
            hidden_labels: Some(self.labels),
        }
    }
}

/// Unlabelled examples, e.g. the target domain training set.
#[derive(Clone, Debug, PartialEq)]
pub struct UnlabeledDataset {
    examples: Vec<SparseExample>,
    feature_dim: usize,
    hidden_labels: Option<Vec<usize>>,
}

impl UnlabeledDataset {
    pub fn new(examples: Vec<SparseExample>, feature_dim: usize) -> Result<Self> {
        check_dims(&examples, feature_dim)?;
        Ok(Self {
            examples,
            feature_dim,
            hidden_labels: None,
        })
    }

    pub fn from_dense(x: &Matrix) -> Self {
        Self {
            examples: x.iter_rows().map(SparseExample::from_dense).collect(),
            feature_dim: x.cols(),
            hidden_labels: None,
        }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn examples(&self) -> &[SparseExample] {
        &self.examples
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn dense(&self) -> Matrix {
        let all: Vec<usize> = (0..self.len()).collect();
        densify(&self.examples, &all, self.feature_dim)
    }

    pub fn dense_rows(&self, rows: &[usize]) -> Matrix {
        densify(&self.examples, rows, self.feature_dim)
    }

    /// Labels hidden when the set was built from labelled data. Training
    /// never reads them; they exist for oracle quantities and diagnostics.
    pub fn oracle_labels(&self) -> Option<&[usize]> {
        self.hidden_labels.as_deref()
    }
}
