//! RMSE, negative log predictive density and interval calibration.

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::TrainingSlice;
use crate::error::{MondrianError, Result};
use crate::forest::ForestModel;
use crate::predict::PredictiveMixture;

pub const DEFAULT_LEVELS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationRow {
    pub level: f64,
    pub observed: f64,
    /// `observed - level`; negative means over-confident.
    pub delta: f64,
}

pub fn rmse(predictions: &[f64], labels: &[f64]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(MondrianError::DimensionMismatch { expected: labels.len(), got: predictions.len() });
    }
    if labels.is_empty() {
        return Err(MondrianError::EmptyDataset);
    }
    let sse: f64 = predictions.iter().zip(labels).map(|(p, y)| (p - y) * (p - y)).sum();
    Ok((sse / labels.len() as f64).sqrt())
}

/// Mean negative log density of the labels under their mixtures.
pub fn nlpd(mixtures: &[PredictiveMixture], labels: &[f64]) -> Result<f64> {
    if mixtures.len() != labels.len() {
        return Err(MondrianError::DimensionMismatch { expected: labels.len(), got: mixtures.len() });
    }
    if labels.is_empty() {
        return Err(MondrianError::EmptyDataset);
    }
    let total: f64 = mixtures.iter().zip(labels).map(|(m, &y)| -m.log_density(y)).sum();
    Ok(total / labels.len() as f64)
}

/// Ensemble predictive mixtures for every row of a raw (unscaled) slice.
pub fn predict_slice(model: &ForestModel, slice: &TrainingSlice) -> Result<Vec<PredictiveMixture>> {
    model.refresh_posteriors()?;
    (0..slice.len()).into_par_iter().map(|i| model.predict(slice.row(i))).collect()
}

pub fn nlpd_dataset(model: &ForestModel, slice: &TrainingSlice) -> Result<f64> {
    nlpd(&predict_slice(model, slice)?, slice.labels())
}

/// Dataset NLPD after multiplying every component variance by `factor`.
pub fn nlpd_dataset_with_variance_scale(model: &ForestModel, slice: &TrainingSlice, factor: f64) -> Result<f64> {
    let mixtures: Vec<_> = predict_slice(model, slice)?.iter().map(|m| m.with_variance_scale(factor)).collect();
    nlpd(&mixtures, slice.labels())
}

/// Coverage of central Gaussian intervals `mean +- q * std` with
/// `q = Phi^-1((1 + z) / 2)`. Points on the boundary count as inside.
pub fn calibration_from_moments(
    means: &[f64],
    variances: &[f64],
    labels: &[f64],
    levels: &[f64],
) -> Result<Vec<CalibrationRow>> {
    if means.len() != labels.len() || variances.len() != labels.len() {
        return Err(MondrianError::DimensionMismatch { expected: labels.len(), got: means.len().min(variances.len()) });
    }
    if labels.is_empty() {
        return Err(MondrianError::EmptyDataset);
    }
    let std_normal = Normal::standard();
    levels
        .iter()
        .map(|&z| {
            if !(z > 0.0 && z < 1.0) {
                return Err(MondrianError::usage(format!("calibration level {z} is not in (0, 1)")));
            }
            let q = std_normal.inverse_cdf(0.5 * (1.0 + z));
            let inside = means
                .iter()
                .zip(variances)
                .zip(labels)
                .filter(|((m, v), y)| (**y - **m).abs() <= q * v.sqrt())
                .count();
            let observed = inside as f64 / labels.len() as f64;
            Ok(CalibrationRow { level: z, observed, delta: observed - z })
        })
        .collect()
}

pub fn calibration_table(model: &ForestModel, slice: &TrainingSlice, levels: &[f64]) -> Result<Vec<CalibrationRow>> {
    let (means, vars): (Vec<f64>, Vec<f64>) = predict_slice(model, slice)?.iter().map(|m| m.moments()).unzip();
    calibration_from_moments(&means, &vars, slice.labels(), levels)
}

/// Everything `evaluate` reports for one labelled dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub rmse: f64,
    pub nlpd: f64,
    pub calibration: Vec<CalibrationRow>,
}

pub fn evaluate(model: &ForestModel, slice: &TrainingSlice, levels: &[f64]) -> Result<EvaluationReport> {
    let mixtures = predict_slice(model, slice)?;
    let (means, vars): (Vec<f64>, Vec<f64>) = mixtures.iter().map(|m| m.moments()).unzip();
    Ok(EvaluationReport {
        rmse: rmse(&means, slice.labels())?,
        nlpd: nlpd(&mixtures, slice.labels())?,
        calibration: calibration_from_moments(&means, &vars, slice.labels(), levels)?,
    })
}
