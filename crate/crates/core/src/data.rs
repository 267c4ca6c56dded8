//! Row-major training data and the per-dimension min/max feature scaler.

use serde::{Deserialize, Serialize};

use crate::error::{MondrianError, Result};

/// Features (N x D, row-major) with one label per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSlice {
    dim: usize,
    features: Vec<f64>,
    labels: Vec<f64>,
}

impl TrainingSlice {
    /// Builds a slice, rejecting ragged input and non-finite values.
    pub fn new(dim: usize, features: Vec<f64>, labels: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(MondrianError::usage("feature dimension must be at least 1"));
        }
        if features.len() != labels.len() * dim {
            return Err(MondrianError::usage(format!(
                "{} feature values do not form {} rows of dimension {}",
                features.len(),
                labels.len(),
                dim
            )));
        }
        for (i, v) in features.iter().enumerate() {
            if !v.is_finite() {
                return Err(MondrianError::NonFinite { row: i / dim, col: i % dim });
            }
        }
        for (i, v) in labels.iter().enumerate() {
            if !v.is_finite() {
                return Err(MondrianError::NonFinite { row: i, col: dim });
            }
        }
        Ok(TrainingSlice { dim, features, labels })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<f64>) -> Result<Self> {
        let dim = rows.first().map(|r| r.len()).ok_or(MondrianError::EmptyDataset)?;
        let mut features = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(MondrianError::DimensionMismatch { expected: dim, got: r.len() });
            }
            features.extend_from_slice(r);
        }
        Self::new(dim, features, labels)
    }

    pub fn empty(dim: usize) -> Self {
        TrainingSlice { dim, features: Vec::new(), labels: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn value(&self, i: usize, d: usize) -> f64 {
        self.features[i * self.dim + d]
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks_exact(self.dim)
    }

    /// Appends one observation and returns its index.
    pub fn push(&mut self, x: &[f64], y: f64) -> Result<usize> {
        if x.len() != self.dim {
            return Err(MondrianError::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        let row = self.len();
        if let Some(col) = x.iter().position(|v| !v.is_finite()) {
            return Err(MondrianError::NonFinite { row, col });
        }
        if !y.is_finite() {
            return Err(MondrianError::NonFinite { row, col: self.dim });
        }
        self.features.extend_from_slice(x);
        self.labels.push(y);
        Ok(row)
    }
}

/// Per-dimension affine map of training features onto [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Scaler {
    pub fn fit(slice: &TrainingSlice) -> Result<Self> {
        if slice.is_empty() {
            return Err(MondrianError::EmptyDataset);
        }
        let d = slice.dim();
        let mut min = vec![f64::INFINITY; d];
        let mut max = vec![f64::NEG_INFINITY; d];
        for row in slice.rows() {
            for k in 0..d {
                min[k] = min[k].min(row[k]);
                max[k] = max[k].max(row[k]);
            }
        }
        Ok(Scaler { min, max })
    }

    /// Maps [0, 1]^D onto itself.
    pub fn identity(dim: usize) -> Self {
        Scaler { min: vec![0.0; dim], max: vec![1.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// Zero-range dimensions map to 0.5; values outside the training range
    /// land outside [0, 1].
    pub fn scale_row(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(MondrianError::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        for (k, o) in out.iter_mut().enumerate() {
            let range = self.max[k] - self.min[k];
            *o = if range > 0.0 { (x[k] - self.min[k]) / range } else { 0.5 };
        }
        Ok(())
    }

    pub fn scale(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; x.len()];
        self.scale_row(x, &mut out)?;
        Ok(out)
    }

    /// Zero-range dimensions invert to their constant training value.
    pub fn inverse(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.dim() {
            return Err(MondrianError::DimensionMismatch { expected: self.dim(), got: z.len() });
        }
        Ok(z.iter()
            .enumerate()
            .map(|(k, &v)| {
                let range = self.max[k] - self.min[k];
                if range > 0.0 {
                    self.min[k] + v * range
                } else {
                    self.min[k]
                }
            })
            .collect())
    }

    pub fn scale_slice(&self, slice: &TrainingSlice) -> Result<TrainingSlice> {
        if slice.dim() != self.dim() {
            return Err(MondrianError::DimensionMismatch { expected: self.dim(), got: slice.dim() });
        }
        let mut features = vec![0.0; slice.features().len()];
        for (row, out) in slice.rows().zip(features.chunks_exact_mut(self.dim())) {
            self.scale_row(row, out)?;
        }
        TrainingSlice::new(slice.dim(), features, slice.labels().to_vec())
    }
}

/// Scales every row of a feature matrix with a fitted scaler.
pub fn scale_features(features: &[Vec<f64>], scaler: &Scaler) -> Result<Vec<Vec<f64>>> {
    features.iter().map(|x| scaler.scale(x)).collect()
}
