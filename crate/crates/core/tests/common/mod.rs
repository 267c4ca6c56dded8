#![allow(dead_code)]

use mondrian_core::gaussian::HyperParams;
use mondrian_core::tree::{MondrianTree, NodeId};
use mondrian_core::TrainingSlice;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub fn sigmoid(t: f64) -> f64 {
    if t == f64::INFINITY {
        1.0
    } else {
        1.0 / (1.0 + (-t).exp())
    }
}

pub fn uniform_slice<R: Rng>(rng: &mut R, n: usize, dim: usize, f: impl Fn(&[f64]) -> f64, noise: f64) -> TrainingSlice {
    let xs: Vec<f64> = (0..n * dim).map(|_| rng.random::<f64>()).collect();
    let ys = xs
        .chunks_exact(dim)
        .map(|x| f(x) + noise * rng.sample::<f64, _>(rand_distr::StandardNormal))
        .collect();
    TrainingSlice::new(dim, xs, ys).unwrap()
}

fn ancestors(tree: &MondrianTree, id: NodeId) -> Vec<NodeId> {
    let mut out = vec![id];
    let mut cur = id;
    while let Some(p) = tree.node(cur).parent {
        out.push(p);
        cur = p;
    }
    out
}

/// Prior covariance of the node means: the variance accumulated from the
/// hyper-root down to the deepest common ancestor.
pub fn prior_covariance(tree: &MondrianTree, hp: &HyperParams) -> DMatrix<f64> {
    let n = tree.len();
    let anc: Vec<Vec<NodeId>> = (0..n).map(|i| ancestors(tree, NodeId(i))).collect();
    DMatrix::from_fn(n, n, |i, j| {
        let lca = anc[i].iter().find(|a| anc[j].contains(a)).expect("shared root");
        hp.gamma1 * (sigmoid(hp.gamma2 * tree.node(*lca).split_time) - 0.5)
    })
}

/// Posterior marginals of every node mean from the full joint Gaussian,
/// conditioning only on the rows for which `keep` is true.
pub fn dense_posterior(
    tree: &MondrianTree,
    slice: &TrainingSlice,
    hp: &HyperParams,
    keep: impl Fn(usize) -> bool,
) -> (Vec<f64>, Vec<f64>) {
    let n = tree.len();
    let c = prior_covariance(tree, hp);
    let mut obs: Vec<(usize, usize)> = Vec::new();
    for leaf in tree.leaves() {
        for &row in &tree.node(leaf).indices {
            if keep(row) {
                obs.push((row, leaf.index()));
            }
        }
    }
    if obs.is_empty() {
        return (vec![hp.mu_h; n], (0..n).map(|i| c[(i, i)]).collect());
    }
    let h = DMatrix::from_fn(obs.len(), n, |r, j| if obs[r].1 == j { 1.0 } else { 0.0 });
    let s = &h * &c * h.transpose() + DMatrix::identity(obs.len(), obs.len()) * hp.sigma_y_sq;
    let resid = DVector::from_iterator(obs.len(), obs.iter().map(|&(row, _)| slice.label(row) - hp.mu_h));
    let chol = s.cholesky().expect("innovation covariance is positive definite");
    let ch = &c * h.transpose();
    let mean = DVector::from_element(n, hp.mu_h) + &ch * chol.solve(&resid);
    let cov = &c - &ch * chol.solve(&ch.transpose());
    (mean.iter().copied().collect(), (0..n).map(|i| cov[(i, i)]).collect())
}

/// Rows stored under `id`.
pub fn subtree_rows(tree: &MondrianTree, id: NodeId) -> Vec<usize> {
    let mut out = Vec::new();
    let mut stack = vec![id];
    while let Some(cur) = stack.pop() {
        let node = tree.node(cur);
        out.extend_from_slice(&node.indices);
        stack.extend(node.children());
    }
    out
}

/// Limiting distribution of the Kolmogorov statistic, `P(K > lambda)`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=200 {
        let j = j as f64;
        let term = 2.0 * (-1f64).powi(j as i32 - 1) * (-2.0 * j * j * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let en = (n * m / (n + m)).sqrt();
    (d, kolmogorov_q((en + 0.12 + 0.11 / en) * d))
}
