use serde::{Deserialize, Serialize};

use crate::error::{LegopError, Result};

/// `n` feature vectors in `D` dimensions with scalar labels, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    dim: usize,
    features: Vec<f64>,
    labels: Vec<f64>,
}

impl LabeledDataset {
    /// Builds a dataset from row-major features. Rejects empty data,
    /// mismatched lengths and non-finite entries.
    pub fn from_flat(dim: usize, features: Vec<f64>, labels: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(LegopError::InvalidDataset("feature dimension must be >= 1".into()));
        }
        if labels.is_empty() {
            return Err(LegopError::InvalidDataset("dataset has no samples".into()));
        }
        if features.len() != dim * labels.len() {
            return Err(LegopError::InvalidDataset(format!(
                "{} feature values do not match {} labels in dimension {}",
                features.len(),
                labels.len(),
                dim
            )));
        }
        if let Some(k) = features.iter().position(|v| !v.is_finite()) {
            return Err(LegopError::InvalidDataset(format!(
                "non-finite feature at row {}, column {}",
                k / dim,
                k % dim
            )));
        }
        if let Some(k) = labels.iter().position(|v| !v.is_finite()) {
            return Err(LegopError::InvalidDataset(format!("non-finite label at row {k}")));
        }
        Ok(Self { dim, features, labels })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<f64>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(LegopError::InvalidDataset("ragged feature rows".into()));
        }
        Self::from_flat(dim, rows.concat(), labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    /// Same features, new labels.
    pub fn with_labels(&self, labels: Vec<f64>) -> Result<Self> {
        Self::from_flat(self.dim, self.features.clone(), labels)
    }

    /// Rows `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Self::from_flat(self.dim, features, labels)
    }

    pub(crate) fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(LegopError::DimensionMismatch { expected: self.dim, found: x.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(LegopError::InvalidDataset("non-finite query point".into()));
        }
        Ok(())
    }
}
