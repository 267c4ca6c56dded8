//! Predictive distributions: per-tree Gaussian mixtures along the root-to-leaf
//! path, their moments, and the ensemble mixture.

use crate::gaussian::{fast_posterior_read, variance_increment, HyperParams, NodePosterior, PosteriorMode};
use crate::tree::{MondrianTree, NodeId};

/// Components lighter than this are dropped and the rest renormalized.
pub const PRUNE_WEIGHT: f64 = 1e-12;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictiveComponent {
    pub w: f64,
    pub m: f64,
    pub v: f64,
}

impl PredictiveComponent {
    #[inline]
    pub fn log_density(&self, y: f64) -> f64 {
        let r = y - self.m;
        -0.5 * (LN_2PI + self.v.ln() + r * r / self.v)
    }
}

/// Weighted Gaussian components; for a single tree they are in root-to-leaf
/// order with the leaf component last.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PredictiveMixture {
    pub components: Vec<PredictiveComponent>,
}

/// Source of the Gaussian moments used to build a tree's predictive mixture.
pub trait NodeMoments {
    /// (mean, variance) of `y` for a point that stays in `leaf`.
    fn stay(&self, tree: &MondrianTree, leaf: NodeId, hp: &HyperParams) -> (f64, f64);
    /// (mean, variance) of `y` at the attachment point of a branch just above
    /// `node`, before the prior increment down to the new leaf is added.
    fn branch_base(&self, tree: &MondrianTree, node: NodeId, hp: &HyperParams) -> (f64, f64);
}

impl NodeMoments for NodePosterior {
    fn stay(&self, _tree: &MondrianTree, leaf: NodeId, hp: &HyperParams) -> (f64, f64) {
        let (m, v) = (self.mean[leaf.index()], self.var[leaf.index()]);
        match self.mode {
            PosteriorMode::ExactBp => (m, v + hp.sigma_y_sq),
            PosteriorMode::FastEmpirical => (m, v.max(hp.sigma_y_sq)),
        }
    }

    fn branch_base(&self, _tree: &MondrianTree, node: NodeId, hp: &HyperParams) -> (f64, f64) {
        let (m, v) = (self.branch_mean[node.index()], self.branch_var[node.index()]);
        match self.mode {
            PosteriorMode::ExactBp => (m, v + hp.sigma_y_sq),
            PosteriorMode::FastEmpirical => (m, v.max(hp.sigma_y_sq)),
        }
    }
}

/// Fast mode read straight from the running statistics kept in the tree.
/// The empirical variance already contains the noise, so it is floored at
/// `sigma_y^2` rather than incremented by it.
#[derive(Debug, Clone, Copy, Default)]
pub struct FastMoments;

impl NodeMoments for FastMoments {
    fn stay(&self, tree: &MondrianTree, leaf: NodeId, hp: &HyperParams) -> (f64, f64) {
        let (m, v) = fast_posterior_read(tree, leaf, hp);
        (m, v.max(hp.sigma_y_sq))
    }

    fn branch_base(&self, tree: &MondrianTree, node: NodeId, hp: &HyperParams) -> (f64, f64) {
        match tree.node(node).parent {
            None => (hp.mu_h, hp.sigma_y_sq),
            Some(p) => {
                let (m, v) = fast_posterior_read(tree, p, hp);
                (m, v.max(hp.sigma_y_sq))
            }
        }
    }
}

/// Walks `x` from the root to its leaf. At each node the point separates
/// with probability `1 - exp(-delta * eta)`; a separated point starts a new
/// leaf whose mean descends from the parent's posterior with the remaining
/// prior variance `gamma1 * (1 - s(gamma2 * tau_parent))`.
pub fn predict_tree<S: NodeMoments + ?Sized>(
    tree: &MondrianTree,
    moments: &S,
    hp: &HyperParams,
    x: &[f64],
) -> PredictiveMixture {
    let mut components = Vec::new();
    let mut not_separated = 1.0;
    let mut id = tree.root();
    loop {
        let node = tree.node(id);
        let sep = tree.separation(id, x);
        if sep.p_split > 0.0 {
            let tau_parent = tree.parent_time(id);
            let (m, base_var) = moments.branch_base(tree, id, hp);
            let v = base_var + variance_increment(tau_parent, f64::INFINITY, hp);
            components.push(PredictiveComponent { w: not_separated * sep.p_split, m, v });
        }
        not_separated *= 1.0 - sep.p_split;
        match node.child_for(x) {
            Some(c) => id = c,
            None => {
                if not_separated > 0.0 {
                    let (m, v) = moments.stay(tree, id, hp);
                    components.push(PredictiveComponent { w: not_separated, m, v });
                }
                break;
            }
        }
    }
    let mut mixture = PredictiveMixture { components };
    mixture.prune_and_normalize();
    mixture
}

impl PredictiveMixture {
    pub fn single(m: f64, v: f64) -> Self {
        PredictiveMixture { components: vec![PredictiveComponent { w: 1.0, m, v }] }
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.components.iter().map(|c| c.w).sum()
    }

    pub fn prune_and_normalize(&mut self) {
        self.components.retain(|c| c.w >= PRUNE_WEIGHT);
        let total = self.total_weight();
        if total > 0.0 && total != 1.0 {
            for c in &mut self.components {
                c.w /= total;
            }
        }
    }

    /// Equal-weight concatenation of per-tree mixtures.
    pub fn ensemble(parts: &[PredictiveMixture]) -> PredictiveMixture {
        let scale = 1.0 / parts.len() as f64;
        let components = parts
            .iter()
            .flat_map(|p| p.components.iter().map(move |c| PredictiveComponent { w: c.w * scale, ..*c }))
            .collect();
        PredictiveMixture { components }
    }

    /// Mixture mean and variance. The variance is evaluated in the centred
    /// form `sum w (v + (m - mean)^2)`, which equals
    /// `sum w (v + m^2) - mean^2` without the cancellation.
    pub fn moments(&self) -> (f64, f64) {
        mixture_moments(self)
    }

    pub fn log_density(&self, y: f64) -> f64 {
        log_predictive_density(self, y)
    }

    /// Copy with every component variance multiplied by `factor`.
    pub fn with_variance_scale(&self, factor: f64) -> PredictiveMixture {
        PredictiveMixture {
            components: self.components.iter().map(|c| PredictiveComponent { v: c.v * factor, ..*c }).collect(),
        }
    }
}

pub fn mixture_moments(mixture: &PredictiveMixture) -> (f64, f64) {
    let mean: f64 = mixture.components.iter().map(|c| c.w * c.m).sum();
    let var: f64 = mixture
        .components
        .iter()
        .map(|c| {
            let r = c.m - mean;
            c.w * (c.v + r * r)
        })
        .sum();
    (mean, var.max(0.0))
}

/// `log sum_j w_j N(y | m_j, v_j)` with a max shift.
pub fn log_predictive_density(mixture: &PredictiveMixture, y: f64) -> f64 {
    let mut terms = mixture.components.iter().filter(|c| c.w > 0.0).map(|c| c.w.ln() + c.log_density(y));
    let Some(first) = terms.next() else {
        return f64::NEG_INFINITY;
    };
    let rest: Vec<f64> = terms.collect();
    let max = rest.iter().copied().fold(first, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let sum: f64 = (first - max).exp() + rest.iter().map(|t| (t - max).exp()).sum::<f64>();
    max + sum.ln()
}
