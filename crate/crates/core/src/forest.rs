//! Ensembles of independently sampled Mondrian trees sharing one set of
//! hyperparameters and one frozen feature scaler.

use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Scaler, TrainingSlice};
use crate::error::{MondrianError, Result};
use crate::gaussian::{HyperParams, NodePosterior, PosteriorMode};
use crate::predict::{predict_tree, FastMoments, PredictiveMixture};
use crate::rng::{tree_rng, TreeRng};
use crate::tree::MondrianTree;

pub const DEFAULT_TREES: usize = 10;
pub const DEFAULT_MIN_SAMPLES_SPLIT: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub num_trees: usize,
    pub min_samples_split: usize,
    pub mode: PosteriorMode,
    pub master_seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            num_trees: DEFAULT_TREES,
            min_samples_split: DEFAULT_MIN_SAMPLES_SPLIT,
            mode: PosteriorMode::ExactBp,
            master_seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_trees == 0 {
            return Err(MondrianError::usage("a forest needs at least one tree"));
        }
        if self.min_samples_split == 0 {
            return Err(MondrianError::usage("min_samples_split must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ForestModel {
    pub(crate) config: ForestConfig,
    pub(crate) hyper: HyperParams,
    pub(crate) scaler: Scaler,
    pub(crate) trees: Vec<MondrianTree>,
    /// Exact-mode posteriors; emptied by updates and filled on demand.
    pub(crate) posteriors: Vec<OnceLock<NodePosterior>>,
    pub(crate) rngs: Vec<TreeRng>,
    /// Scaled training rows referenced by the trees' leaf indices.
    pub(crate) data: TrainingSlice,
}

impl ForestModel {
    /// Fits the scaler on `slice`, then trains.
    pub fn train(slice: &TrainingSlice, config: ForestConfig) -> Result<Self> {
        let scaler = Scaler::fit(slice)?;
        Self::train_with_scaler(slice, config, scaler)
    }

    /// Trains with a caller-supplied scaler, e.g. the identity for inputs
    /// already on the unit cube.
    pub fn train_with_scaler(slice: &TrainingSlice, config: ForestConfig, scaler: Scaler) -> Result<Self> {
        config.validate()?;
        if slice.is_empty() {
            return Err(MondrianError::EmptyDataset);
        }
        let data = scaler.scale_slice(slice)?;
        let hyper = HyperParams::fit(data.labels(), data.dim())?;

        let grown: Vec<(MondrianTree, TreeRng)> = (0..config.num_trees)
            .into_par_iter()
            .map(|m| {
                let mut rng = tree_rng(config.master_seed, m);
                MondrianTree::sample(&data, config.min_samples_split, &mut rng).map(|t| (t, rng))
            })
            .collect::<Result<_>>()?;
        let (trees, rngs): (Vec<_>, Vec<_>) = grown.into_iter().unzip();

        let model = ForestModel {
            config,
            hyper,
            scaler,
            posteriors: (0..trees.len()).map(|_| OnceLock::new()).collect(),
            trees,
            rngs,
            data,
        };
        model.refresh_posteriors()?;
        Ok(model)
    }

    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    pub fn hyper(&self) -> &HyperParams {
        &self.hyper
    }

    pub fn scaler(&self) -> &Scaler {
        &self.scaler
    }

    pub fn trees(&self) -> &[MondrianTree] {
        &self.trees
    }

    /// Scaled training data seen so far.
    pub fn data(&self) -> &TrainingSlice {
        &self.data
    }

    pub fn dim(&self) -> usize {
        self.scaler.dim()
    }

    pub fn train_count(&self) -> usize {
        self.data.len()
    }

    /// Replaces the shared hyperparameters.
    pub fn set_hyper(&mut self, hyper: HyperParams) {
        self.hyper = hyper;
        self.invalidate_posteriors();
    }

    /// Refits the hyperparameters on every label seen so far, in constant
    /// time from the root statistics.
    pub fn refit_hyperparameters(&mut self) -> Result<()> {
        let stats = self.trees[0].node(self.trees[0].root()).stats;
        let hyper = HyperParams::from_stats(&stats, self.dim())?;
        self.set_hyper(hyper);
        Ok(())
    }

    /// Computes any missing exact-mode posteriors. A no-op in fast mode.
    pub fn refresh_posteriors(&self) -> Result<()> {
        if self.config.mode == PosteriorMode::ExactBp {
            (0..self.trees.len()).into_par_iter().try_for_each(|m| self.posterior(m).map(|_| ()))?;
        }
        Ok(())
    }

    /// Exact posterior of tree `m`, computed on first use after training or
    /// an update.
    pub fn posterior(&self, m: usize) -> Result<&NodePosterior> {
        let cell = &self.posteriors[m];
        if let Some(p) = cell.get() {
            return Ok(p);
        }
        let p = NodePosterior::exact(&self.trees[m], &self.data, &self.hyper)?;
        Ok(cell.get_or_init(|| p))
    }

    fn invalidate_posteriors(&mut self) {
        for cell in &mut self.posteriors {
            cell.take();
        }
    }

    /// Adds one raw (unscaled) observation to every tree.
    ///
    /// Fast mode only touches the running statistics along each tree's
    /// insertion path. Exact mode drops the cached posteriors, which are
    /// recomputed on the next prediction.
    pub fn update(&mut self, x: &[f64], y: f64) -> Result<()> {
        let z = self.scaler.scale(x)?;
        self.update_scaled(&z, y)
    }

    pub fn update_scaled(&mut self, z: &[f64], y: f64) -> Result<()> {
        let index = self.data.push(z, y)?;
        let data = &self.data;
        self.trees
            .par_iter_mut()
            .zip(self.rngs.par_iter_mut())
            .try_for_each(|(tree, rng)| tree.extend(data, index, rng))?;
        if self.config.mode == PosteriorMode::ExactBp {
            self.invalidate_posteriors();
        }
        Ok(())
    }

    /// Per-tree predictive mixtures at a raw input.
    pub fn tree_mixtures(&self, x: &[f64]) -> Result<Vec<PredictiveMixture>> {
        let z = self.scaler.scale(x)?;
        self.tree_mixtures_scaled(&z)
    }

    pub fn tree_mixtures_scaled(&self, z: &[f64]) -> Result<Vec<PredictiveMixture>> {
        if z.len() != self.dim() {
            return Err(MondrianError::DimensionMismatch { expected: self.dim(), got: z.len() });
        }
        (0..self.trees.len())
            .map(|m| {
                let tree = &self.trees[m];
                Ok(match self.config.mode {
                    PosteriorMode::ExactBp => predict_tree(tree, self.posterior(m)?, &self.hyper, z),
                    PosteriorMode::FastEmpirical => predict_tree(tree, &FastMoments, &self.hyper, z),
                })
            })
            .collect()
    }

    /// Ensemble mixture at a raw input: every tree weighted `1/M`.
    pub fn predict(&self, x: &[f64]) -> Result<PredictiveMixture> {
        Ok(PredictiveMixture::ensemble(&self.tree_mixtures(x)?))
    }

    pub fn predict_scaled(&self, z: &[f64]) -> Result<PredictiveMixture> {
        Ok(PredictiveMixture::ensemble(&self.tree_mixtures_scaled(z)?))
    }
}

/// Ensemble predictive mixture of a trained forest at a raw input.
pub fn predict_forest(model: &ForestModel, x: &[f64]) -> Result<PredictiveMixture> {
    model.predict(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(n: usize) -> TrainingSlice {
        let xs: Vec<f64> = (0..n).map(|i| i as f64 / n as f64 * 6.0).collect();
        let ys = xs.iter().map(|x| x.sin()).collect();
        TrainingSlice::new(1, xs, ys).unwrap()
    }

    #[test]
    fn rejects_bad_config() {
        let s = sine(5);
        let cfg = ForestConfig { num_trees: 0, ..Default::default() };
        assert!(ForestModel::train(&s, cfg).is_err());
        let cfg = ForestConfig { min_samples_split: 0, ..Default::default() };
        assert!(ForestModel::train(&s, cfg).is_err());
        assert!(matches!(
            ForestModel::train(&TrainingSlice::empty(1), ForestConfig::default()),
            Err(MondrianError::EmptyDataset)
        ));
    }

    #[test]
    fn single_point_forest_has_positive_variance() {
        let s = TrainingSlice::new(1, vec![2.0], vec![1.0]).unwrap();
        let model = ForestModel::train(&s, ForestConfig { num_trees: 1, ..Default::default() }).unwrap();
        for x in [-100.0, 2.0, 3.0, 1e6] {
            let (_, v) = model.predict(&[x]).unwrap().moments();
            assert!(v > 0.0);
        }
    }

    #[test]
    fn update_checks_dimension() {
        let mut model = ForestModel::train(&sine(20), ForestConfig::default()).unwrap();
        assert!(matches!(model.update(&[0.1, 0.2], 1.0), Err(MondrianError::DimensionMismatch { .. })));
    }

    #[test]
    fn exact_update_invalidates_posteriors() {
        let mut model = ForestModel::train(&sine(30), ForestConfig { num_trees: 3, ..Default::default() }).unwrap();
        assert!(model.posteriors.iter().all(|c| c.get().is_some()));
        model.update(&[1.0], 0.5).unwrap();
        assert!(model.posteriors.iter().all(|c| c.get().is_none()));
        model.predict(&[1.0]).unwrap();
        assert!(model.posteriors.iter().all(|c| c.get().is_some()));
    }
}
