//! Hierarchical Gaussian prior over node means and its posterior.
//!
//! Node means form a Gaussian chain down the tree:
//! `mu_root ~ N(mu_H, phi_root)`, `mu_j | mu_parent ~ N(mu_parent, phi_j)` with
//! `phi_j = gamma1 * (s(gamma2 * tau_j) - s(gamma2 * tau_parent))` and `s` the
//! logistic sigmoid. Leaf observations are `N(mu_leaf, sigma_y^2)`.
//!
//! The exact posterior is computed with one upward and one downward pass of
//! Gaussian messages in natural parameters. The fast mode replaces it with the
//! running empirical mean and variance kept at every node.

use serde::{Deserialize, Serialize};

use crate::data::TrainingSlice;
use crate::error::{MondrianError, Result};
use crate::stats::RunningStats;
use crate::tree::{MondrianTree, NodeId};

/// Cap on the noise fraction constant `K`.
pub const MAX_NOISE_FRACTION: f64 = 2000.0;
/// Relative floor on `gamma1` for (near-)constant labels.
pub const GAMMA1_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub mu_h: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub sigma_y_sq: f64,
    pub k: f64,
}

impl HyperParams {
    /// Closed-form fit: `mu_H` is the label mean, `K = min(2000, 2N)`,
    /// `gamma1 * (1/2 + 1/K)` is the population label variance,
    /// `sigma_y^2 = gamma1 / K` and `gamma2 = D / (20 log2 N)`.
    pub fn fit(labels: &[f64], dim: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(MondrianError::EmptyDataset);
        }
        Self::from_stats(&RunningStats::from_values(labels.iter().copied()), dim)
    }

    pub fn from_stats(stats: &RunningStats, dim: usize) -> Result<Self> {
        if stats.count == 0 {
            return Err(MondrianError::EmptyDataset);
        }
        if dim == 0 {
            return Err(MondrianError::usage("feature dimension must be at least 1"));
        }
        let n = stats.count as f64;
        let variance = stats.variance();
        let k = MAX_NOISE_FRACTION.min(2.0 * n);
        let floor = GAMMA1_FLOOR * variance.max(1.0);
        let gamma1 = (variance / (0.5 + 1.0 / k)).max(floor);
        let gamma2 = dim as f64 / (20.0 * n.max(2.0).log2());
        Ok(HyperParams { mu_h: stats.mean, gamma1, gamma2, sigma_y_sq: gamma1 / k, k })
    }

    /// Prior variance of a new leaf hanging directly off the hyper-root.
    pub fn prior_leaf_variance(&self) -> f64 {
        variance_increment(0.0, f64::INFINITY, self)
    }
}

/// Logistic sigmoid, exact at `+-inf`.
#[inline]
pub fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// `gamma1 * (s(gamma2 * tau_j) - s(gamma2 * tau_parent))`, evaluated through
/// the complementary sigmoid so deep nodes do not lose precision.
#[inline]
pub fn variance_increment(tau_parent: f64, tau_j: f64, hp: &HyperParams) -> f64 {
    let upper = sigmoid(-hp.gamma2 * tau_parent);
    let lower = sigmoid(-hp.gamma2 * tau_j);
    (hp.gamma1 * (upper - lower)).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PosteriorMode {
    ExactBp,
    FastEmpirical,
}

/// Per-node Gaussian moments over the node means, indexed by `NodeId`.
///
/// `branch_mean`/`branch_var` describe the mean at the parent of a node as
/// seen from everything outside that node's subtree. They are the starting
/// point for a test point that separates from the tree just above the node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodePosterior {
    pub mode: PosteriorMode,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub branch_mean: Vec<f64>,
    pub branch_var: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default)]
struct Natural {
    precision: f64,
    shift: f64,
}

impl Natural {
    fn from_moments(mean: f64, var: f64) -> Self {
        Natural { precision: 1.0 / var, shift: mean / var }
    }

    fn add(self, o: Natural) -> Natural {
        Natural { precision: self.precision + o.precision, shift: self.shift + o.shift }
    }

    /// Message through an additive Gaussian link of variance `phi`.
    fn diffuse(self, phi: f64) -> Natural {
        let scale = 1.0 / (1.0 + phi * self.precision);
        Natural { precision: self.precision * scale, shift: self.shift * scale }
    }

    fn moments(self) -> (f64, f64) {
        (self.shift / self.precision, 1.0 / self.precision)
    }
}

impl NodePosterior {
    /// Exact marginals by Gaussian belief propagation, linear in the number
    /// of nodes.
    pub fn exact(tree: &MondrianTree, slice: &TrainingSlice, hp: &HyperParams) -> Result<Self> {
        let n = tree.len();
        let noise_precision = 1.0 / hp.sigma_y_sq;

        let mut order = Vec::with_capacity(n);
        let mut stack = vec![tree.root()];
        while let Some(id) = stack.pop() {
            order.push(id);
            stack.extend(tree.node(id).children());
        }

        // Upward: evidence from each subtree about its own node mean.
        let mut up = vec![Natural::default(); n];
        let mut to_parent = vec![Natural::default(); n];
        for &id in order.iter().rev() {
            let node = tree.node(id);
            let evidence = if node.is_leaf() {
                let sum: f64 = node.indices.iter().map(|&i| slice.label(i)).sum();
                Natural { precision: node.indices.len() as f64 * noise_precision, shift: sum * noise_precision }
            } else {
                node.children().fold(Natural::default(), |acc, c| acc.add(to_parent[c.0]))
            };
            up[id.0] = evidence;
            let phi = variance_increment(tree.parent_time(id), node.split_time, hp);
            to_parent[id.0] = evidence.diffuse(phi);
        }

        // Downward: cavity at the parent, then through the link.
        let mut post = NodePosterior {
            mode: PosteriorMode::ExactBp,
            mean: vec![0.0; n],
            var: vec![0.0; n],
            branch_mean: vec![0.0; n],
            branch_var: vec![0.0; n],
        };
        let mut from_above = vec![Natural::default(); n];
        for &id in &order {
            let node = tree.node(id);
            let phi = variance_increment(tree.parent_time(id), node.split_time, hp);
            let (cav_mean, cav_var) = match node.parent {
                None => (hp.mu_h, 0.0),
                Some(p) => {
                    let mut cavity = from_above[p.0];
                    for s in tree.node(p).children().filter(|&s| s != id) {
                        cavity = cavity.add(to_parent[s.0]);
                    }
                    cavity.moments()
                }
            };
            post.branch_mean[id.0] = cav_mean;
            post.branch_var[id.0] = cav_var;
            let outside = Natural::from_moments(cav_mean, cav_var + phi);
            from_above[id.0] = outside;
            let (mean, var) = outside.add(up[id.0]).moments();
            if !(mean.is_finite() && var.is_finite() && var >= 0.0) {
                return Err(MondrianError::NumericalFault {
                    node: id.0,
                    what: format!("posterior mean {mean}, variance {var}"),
                });
            }
            post.mean[id.0] = mean;
            post.var[id.0] = var;
        }
        Ok(post)
    }

    /// Snapshot of the fast-mode moments for every node.
    pub fn fast_snapshot(tree: &MondrianTree, hp: &HyperParams) -> Self {
        let n = tree.len();
        let mut post = NodePosterior {
            mode: PosteriorMode::FastEmpirical,
            mean: vec![0.0; n],
            var: vec![0.0; n],
            branch_mean: vec![0.0; n],
            branch_var: vec![0.0; n],
        };
        for id in tree.node_ids() {
            let (m, v) = fast_posterior_read(tree, id, hp);
            post.mean[id.0] = m;
            post.var[id.0] = v;
            let (bm, bv) = match tree.node(id).parent {
                None => (hp.mu_h, 0.0),
                Some(p) => fast_posterior_read(tree, p, hp),
            };
            post.branch_mean[id.0] = bm;
            post.branch_var[id.0] = bv;
        }
        post
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}

/// Empirical (mean, population variance) of the labels at a node, falling
/// back to the prior `(mu_H, gamma1 / 2)` on an empty node.
pub fn fast_posterior_read(tree: &MondrianTree, id: NodeId, hp: &HyperParams) -> (f64, f64) {
    let stats = &tree.node(id).stats;
    if stats.count == 0 {
        (hp.mu_h, hp.prior_leaf_variance())
    } else {
        (stats.mean, stats.variance())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::tree_rng;

    #[test]
    fn fit_two_labels() {
        let hp = HyperParams::fit(&[0.0, 2.0], 1).unwrap();
        assert_eq!(hp.mu_h, 1.0);
        assert_eq!(hp.k, 4.0);
        assert!((hp.gamma1 - 4.0 / 3.0).abs() < 1e-15);
        assert!((hp.sigma_y_sq - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(hp.gamma2, 1.0 / 20.0);
    }

    #[test]
    fn fit_constant_labels_floors_gamma1() {
        let hp = HyperParams::fit(&[3.0; 10], 2).unwrap();
        assert_eq!(hp.gamma1, 1e-6);
        assert_eq!(hp.sigma_y_sq, 1e-6 / 20.0);
    }

    #[test]
    fn fit_gamma2_and_k_cap() {
        let labels: Vec<f64> = (0..256).map(|i| i as f64).collect();
        let hp = HyperParams::fit(&labels, 4).unwrap();
        assert!((hp.gamma2 - 0.025).abs() < 1e-15);
        assert_eq!(hp.k, 512.0);
        let labels: Vec<f64> = (0..5000).map(|i| (i % 7) as f64).collect();
        assert_eq!(HyperParams::fit(&labels, 1).unwrap().k, 2000.0);
        // N = 1 uses log2(2)
        assert_eq!(HyperParams::fit(&[1.0], 3).unwrap().gamma2, 3.0 / 20.0);
        assert!(HyperParams::fit(&[], 1).is_err());
    }

    #[test]
    fn increment_examples() {
        let hp = HyperParams { mu_h: 0.0, gamma1: 1.0, gamma2: 1.0, sigma_y_sq: 1.0, k: 1.0 };
        assert_eq!(variance_increment(0.0, f64::INFINITY, &hp), 0.5);
        assert_eq!(variance_increment(0.7, 0.7, &hp), 0.0);
        let expect = 1.0 / (1.0 + (-1.0f64).exp()) - 0.5;
        assert!((variance_increment(0.0, 1.0, &hp) - expect).abs() < 1e-15);
        assert!((expect - 0.23106).abs() < 1e-5);
        let hp3 = HyperParams { gamma1: 3.0, gamma2: 0.01, ..hp };
        assert_eq!(variance_increment(0.0, f64::INFINITY, &hp3), 1.5);
    }

    #[test]
    fn increments_telescope_to_half_gamma1() {
        let hp = HyperParams { mu_h: 0.0, gamma1: 2.5, gamma2: 0.3, sigma_y_sq: 1.0, k: 1.0 };
        let taus = [0.0, 0.4, 1.7, 2.2, 9.0, f64::INFINITY];
        let total: f64 = taus.windows(2).map(|w| variance_increment(w[0], w[1], &hp)).sum();
        assert!((total - 1.25).abs() < 1e-14);
    }

    #[test]
    fn single_leaf_posterior_is_conjugate() {
        let slice = TrainingSlice::new(1, vec![0.5], vec![2.0]).unwrap();
        let tree = MondrianTree::sample(&slice, 10, &mut tree_rng(0, 0)).unwrap();
        let hp = HyperParams { mu_h: 0.5, gamma1: 3.0, gamma2: 0.2, sigma_y_sq: 0.4, k: 1.0 };
        let post = NodePosterior::exact(&tree, &slice, &hp).unwrap();
        let var = 1.0 / (2.0 / hp.gamma1 + 1.0 / hp.sigma_y_sq);
        let mean = var * (2.0 * hp.mu_h / hp.gamma1 + 2.0 / hp.sigma_y_sq);
        assert!((post.var[0] - var).abs() < 1e-14);
        assert!((post.mean[0] - mean).abs() < 1e-14);
        assert_eq!(post.branch_mean[0], hp.mu_h);
        assert_eq!(post.branch_var[0], 0.0);
    }

    #[test]
    fn fast_read_prior_fallback() {
        let slice = TrainingSlice::new(1, vec![0.5, 0.6], vec![1.0, 3.0]).unwrap();
        let tree = MondrianTree::sample(&slice, 10, &mut tree_rng(0, 0)).unwrap();
        let hp = HyperParams::fit(slice.labels(), 1).unwrap();
        assert_eq!(fast_posterior_read(&tree, tree.root(), &hp), (2.0, 1.0));
    }
}
