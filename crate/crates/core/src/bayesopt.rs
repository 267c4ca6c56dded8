//! Sequential model-based maximization over a finite candidate grid with a
//! fast-mode forest surrogate and an upper-confidence-bound acquisition.

use rand::seq::index::sample;
use rayon::prelude::*;

use crate::data::{Scaler, TrainingSlice};
use crate::error::{MondrianError, Result};
use crate::forest::{ForestConfig, ForestModel};
use crate::gaussian::PosteriorMode;
use crate::predict::PredictiveMixture;
use crate::rng::tree_rng;

/// Candidate inputs on the unit cube plus what has been observed so far.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateGrid {
    dim: usize,
    points: Vec<f64>,
    evaluated: Vec<bool>,
    values: Vec<Option<f64>>,
}

impl CandidateGrid {
    pub fn new(dim: usize, points: Vec<f64>) -> Result<Self> {
        if dim == 0 || points.is_empty() || points.len() % dim != 0 {
            return Err(MondrianError::usage("candidate grid needs at least one point of positive dimension"));
        }
        let g = points.len() / dim;
        Ok(CandidateGrid { dim, points, evaluated: vec![false; g], values: vec![None; g] })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.evaluated.len()
    }

    pub fn is_empty(&self) -> bool {
        self.evaluated.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn is_evaluated(&self, i: usize) -> bool {
        self.evaluated[i]
    }

    pub fn value(&self, i: usize) -> Option<f64> {
        self.values[i]
    }

    pub fn evaluated_count(&self) -> usize {
        self.evaluated.iter().filter(|&&e| e).count()
    }

    pub fn unevaluated(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&i| !self.evaluated[i])
    }

    fn record(&mut self, i: usize, value: f64) {
        self.evaluated[i] = true;
        self.values[i] = Some(value);
    }
}

/// Supplies the objective value at a grid index.
pub trait Objective {
    fn evaluate(&mut self, index: usize, point: &[f64]) -> f64;
}

impl<F: FnMut(usize, &[f64]) -> f64> Objective for F {
    fn evaluate(&mut self, index: usize, point: &[f64]) -> f64 {
        self(index, point)
    }
}

/// Objective read from a precomputed table indexed like the grid.
#[derive(Debug, Clone)]
pub struct TableObjective(pub Vec<f64>);

impl Objective for TableObjective {
    fn evaluate(&mut self, index: usize, _point: &[f64]) -> f64 {
        self.0[index]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoConfig {
    pub num_trees: usize,
    pub min_samples_split: usize,
    /// Weight on the predictive standard deviation.
    pub beta: f64,
    /// Random evaluations before the first surrogate fit.
    pub n_init: usize,
    pub seed: u64,
    pub mode: PosteriorMode,
}

impl Default for BoConfig {
    fn default() -> Self {
        BoConfig {
            num_trees: 10,
            min_samples_split: 2,
            beta: 1.0,
            n_init: 2,
            seed: 0,
            mode: PosteriorMode::FastEmpirical,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoRecord {
    pub iteration: usize,
    pub index: usize,
    pub value: f64,
    pub best: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BoHistory {
    pub records: Vec<BoRecord>,
}

impl BoHistory {
    pub fn best(&self) -> Option<f64> {
        self.records.last().map(|r| r.best)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn push(&mut self, index: usize, value: f64) {
        let best = self.best().map_or(value, |b| b.max(value));
        self.records.push(BoRecord { iteration: self.records.len() + 1, index, value, best });
    }
}

/// Predictive mean plus `beta` predictive standard deviations.
pub fn ucb_score(mixture: &PredictiveMixture, beta: f64) -> f64 {
    let (mean, var) = mixture.moments();
    mean + beta * var.sqrt()
}

/// Unevaluated candidate with the highest UCB score; ties go to the lowest
/// index.
pub fn propose_next(model: &ForestModel, grid: &CandidateGrid, beta: f64) -> Result<usize> {
    if grid.dim() != model.dim() {
        return Err(MondrianError::DimensionMismatch { expected: model.dim(), got: grid.dim() });
    }
    model.refresh_posteriors()?;
    let candidates: Vec<usize> = grid.unevaluated().collect();
    let scored: Vec<(usize, f64)> = candidates
        .par_iter()
        .map(|&i| model.predict_scaled(grid.point(i)).map(|m| (i, ucb_score(&m, beta))))
        .collect::<Result<_>>()?;
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scored {
        let s = if s.is_nan() { f64::NEG_INFINITY } else { s };
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i).ok_or(MondrianError::GridExhausted)
}

/// Evaluates `budget` grid points: `n_init` uniformly random ones, then one
/// UCB proposal at a time with an online surrogate update after each.
pub fn run_bayesopt<O: Objective + ?Sized>(
    objective: &mut O,
    grid: &mut CandidateGrid,
    budget: usize,
    config: &BoConfig,
) -> Result<BoHistory> {
    if budget == 0 {
        return Err(MondrianError::usage("budget must be at least 1"));
    }
    let remaining = grid.len() - grid.evaluated_count();
    if budget > remaining {
        return Err(MondrianError::usage(format!(
            "budget {budget} exceeds the {remaining} unevaluated grid points"
        )));
    }
    let mut history = BoHistory::default();
    let mut rng = tree_rng(config.seed, usize::MAX);

    let open: Vec<usize> = grid.unevaluated().collect();
    let n_init = config.n_init.clamp(1, budget);
    let mut seen = TrainingSlice::empty(grid.dim());
    for k in sample(&mut rng, open.len(), n_init).into_vec() {
        let i = open[k];
        let v = objective.evaluate(i, grid.point(i));
        grid.record(i, v);
        seen.push(grid.point(i), v)?;
        history.push(i, v);
    }
    if history.len() == budget {
        return Ok(history);
    }

    let forest_config = ForestConfig {
        num_trees: config.num_trees,
        min_samples_split: config.min_samples_split,
        mode: config.mode,
        master_seed: config.seed,
    };
    let mut model = ForestModel::train_with_scaler(&seen, forest_config, Scaler::identity(grid.dim()))?;
    while history.len() < budget {
        model.refit_hyperparameters()?;
        let i = propose_next(&model, grid, config.beta)?;
        let v = objective.evaluate(i, grid.point(i));
        grid.record(i, v);
        history.push(i, v);
        model.update_scaled(grid.point(i), v)?;
    }
    Ok(history)
}
