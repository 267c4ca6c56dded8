//! Mondrian trees: label-independent random axis-aligned partitions whose
//! splits live inside the bounding box of the data at each node.
//!
//! Nodes are stored in a contiguous arena and linked by [`NodeId`] handles.
//! Leaves keep the indices of their training rows; the rows themselves live in
//! a [`TrainingSlice`] owned by the caller, which is why sampling and online
//! extension take the slice as an argument.

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::data::TrainingSlice;
use crate::error::{MondrianError, Result};
use crate::stats::RunningStats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisAlignedBox {
    /// Lower corner followed by upper corner.
    bounds: Vec<f64>,
}

impl AxisAlignedBox {
    pub fn new(lower: &[f64], upper: &[f64]) -> Self {
        assert_eq!(lower.len(), upper.len(), "corner dimensions differ");
        AxisAlignedBox { bounds: lower.iter().chain(upper).copied().collect() }
    }

    pub fn from_point(x: &[f64]) -> Self {
        Self::new(x, x)
    }

    pub fn dim(&self) -> usize {
        self.bounds.len() / 2
    }

    pub fn lower(&self) -> &[f64] {
        &self.bounds[..self.dim()]
    }

    pub fn upper(&self) -> &[f64] {
        &self.bounds[self.dim()..]
    }

    pub fn extend(&mut self, x: &[f64]) {
        grow(&mut self.bounds, x);
    }

    pub fn contains_point(&self, x: &[f64]) -> bool {
        x.iter().enumerate().all(|(d, &v)| self.lower()[d] <= v && v <= self.upper()[d])
    }

    pub fn contains_box(&self, other: &AxisAlignedBox) -> bool {
        (0..self.dim()).all(|d| self.lower()[d] <= other.lower()[d] && other.upper()[d] <= self.upper()[d])
    }

    /// Sum of side lengths; the rate of the exponential split clock.
    pub fn linear_dimension(&self) -> f64 {
        self.lower().iter().zip(self.upper()).map(|(l, u)| u - l).sum()
    }

    /// Linear dimension of the box after growing it to cover `x`.
    pub fn linear_dimension_with(&self, x: &[f64]) -> f64 {
        grown_linear_dimension(&self.bounds, x)
    }

    /// Total L1 distance from `x` to the box, zero inside.
    pub fn distance(&self, x: &[f64]) -> f64 {
        distance(&self.bounds, x)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.bounds
    }
}

// Helpers over a packed `[lower.., upper..]` slice, shared by the box type
// and the per-tree extent array.

#[inline]
fn grow(bounds: &mut [f64], x: &[f64]) {
    let (lower, upper) = bounds.split_at_mut(x.len());
    for ((l, u), &v) in lower.iter_mut().zip(upper).zip(x) {
        if v < *l {
            *l = v;
        }
        if v > *u {
            *u = v;
        }
    }
}

#[inline]
fn grown_linear_dimension(bounds: &[f64], x: &[f64]) -> f64 {
    let (lower, upper) = bounds.split_at(x.len());
    lower.iter().zip(upper).zip(x).map(|((&l, &u), &v)| u.max(v) - l.min(v)).sum()
}

#[inline]
fn distance(bounds: &[f64], x: &[f64]) -> f64 {
    let (lower, upper) = bounds.split_at(x.len());
    let mut eta = 0.0;
    for ((&l, &u), &v) in lower.iter().zip(upper).zip(x) {
        eta += (v - u).max(0.0) + (l - v).max(0.0);
    }
    eta
}

/// Dimension-wise min and max over the selected rows.
pub fn compute_extent(slice: &TrainingSlice, indices: &[usize]) -> Result<AxisAlignedBox> {
    let (&first, rest) = indices
        .split_first()
        .ok_or_else(|| MondrianError::usage("cannot compute the extent of an empty index set"))?;
    let mut b = AxisAlignedBox::from_point(slice.row(first));
    for &i in rest {
        b.extend(slice.row(i));
    }
    Ok(b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub parent: Option<NodeId>,
    pub left: Option<NodeId>,
    /// `None` on leaves and on pass-through nodes (which only have `left`).
    pub right: Option<NodeId>,
    pub split_dim: Option<usize>,
    pub split_loc: Option<f64>,
    /// `+inf` for leaves.
    pub split_time: f64,
    /// Training rows held by a leaf; empty on internal nodes.
    pub indices: Vec<usize>,
    pub count: usize,
    pub stats: RunningStats,
}

impl TreeNode {
    fn placeholder(parent: Option<NodeId>) -> Self {
        TreeNode {
            parent,
            left: None,
            right: None,
            split_dim: None,
            split_loc: None,
            split_time: f64::INFINITY,
            indices: Vec::new(),
            count: 0,
            stats: RunningStats::new(),
        }
    }

    #[inline]
    pub fn is_leaf(&self) -> bool {
        self.left.is_none()
    }

    /// Child that `x` routes to; ties on the split location go left.
    #[inline]
    pub fn child_for(&self, x: &[f64]) -> Option<NodeId> {
        match (self.split_dim, self.split_loc) {
            (Some(d), Some(loc)) => {
                if x[d] <= loc {
                    self.left
                } else {
                    self.right
                }
            }
            _ => self.left,
        }
    }

    pub fn children(&self) -> impl Iterator<Item = NodeId> {
        self.left.into_iter().chain(self.right)
    }
}

/// Quantities governing whether a test point branches off above a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Separation {
    /// `tau_j - tau_parent(j)`; infinite for leaves.
    pub delta: f64,
    /// L1 distance from the point to the node's data extent.
    pub eta: f64,
    /// `1 - exp(-delta * eta)`.
    pub p_split: f64,
}

impl Separation {
    pub fn new(delta: f64, eta: f64) -> Self {
        let p_split = if eta <= 0.0 {
            0.0
        } else if delta.is_infinite() {
            1.0
        } else {
            -(-delta * eta).exp_m1()
        };
        Separation { delta, eta, p_split }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MondrianTree {
    nodes: Vec<TreeNode>,
    /// Node extents packed as `[lower.., upper..]`, `2 * dim` values per node.
    extents: Vec<f64>,
    root: NodeId,
    dim: usize,
    min_samples_split: usize,
}

impl MondrianTree {
    /// Samples a tree over every row of `slice`.
    pub fn sample<R: Rng + ?Sized>(
        slice: &TrainingSlice,
        min_samples_split: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if slice.is_empty() {
            return Err(MondrianError::EmptyDataset);
        }
        if min_samples_split == 0 {
            return Err(MondrianError::usage("min_samples_split must be at least 1"));
        }
        let dim = slice.dim();
        let mut tree = MondrianTree {
            nodes: vec![TreeNode::placeholder(None)],
            extents: vec![0.0; 2 * dim],
            root: NodeId(0),
            dim,
            min_samples_split,
        };
        tree.sample_block(slice, NodeId(0), (0..slice.len()).collect(), 0.0, rng)?;
        Ok(tree)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn min_samples_split(&self) -> usize {
        self.min_samples_split
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    #[inline]
    pub fn node(&self, id: NodeId) -> &TreeNode {
        &self.nodes[id.0]
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    /// Bounding box of the data below `id`.
    pub fn extent(&self, id: NodeId) -> AxisAlignedBox {
        let b = self.bounds(id);
        AxisAlignedBox::new(&b[..self.dim], &b[self.dim..])
    }

    #[inline]
    fn bounds(&self, id: NodeId) -> &[f64] {
        let w = 2 * self.dim;
        &self.extents[id.0 * w..(id.0 + 1) * w]
    }

    #[inline]
    fn bounds_mut(&mut self, id: NodeId) -> &mut [f64] {
        let w = 2 * self.dim;
        &mut self.extents[id.0 * w..(id.0 + 1) * w]
    }

    fn push_node(&mut self, node: TreeNode, bounds: &[f64]) -> NodeId {
        debug_assert_eq!(bounds.len(), 2 * self.dim);
        self.nodes.push(node);
        self.extents.extend_from_slice(bounds);
        NodeId(self.nodes.len() - 1)
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len()).map(NodeId)
    }

    pub fn leaves(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.node_ids().filter(|&id| self.node(id).is_leaf())
    }

    /// Split time of the parent, with the root's parent at time zero.
    #[inline]
    pub fn parent_time(&self, id: NodeId) -> f64 {
        self.node(id).parent.map_or(0.0, |p| self.node(p).split_time)
    }

    /// Nodes from the root down to the leaf that `x` routes to.
    pub fn path(&self, x: &[f64]) -> Vec<NodeId> {
        let mut path = Vec::new();
        let mut id = self.root;
        loop {
            path.push(id);
            match self.node(id).child_for(x) {
                Some(c) => id = c,
                None => return path,
            }
        }
    }

    pub fn leaf_for(&self, x: &[f64]) -> NodeId {
        let mut id = self.root;
        while let Some(c) = self.node(id).child_for(x) {
            id = c;
        }
        id
    }

    pub fn separation(&self, id: NodeId, x: &[f64]) -> Separation {
        let node = self.node(id);
        Separation::new(node.split_time - self.parent_time(id), distance(self.bounds(id), x))
    }

    /// Depth of the deepest leaf (root has depth 0).
    pub fn max_depth(&self) -> usize {
        let mut best = 0;
        let mut stack = vec![(self.root, 0usize)];
        while let Some((id, depth)) = stack.pop() {
            best = best.max(depth);
            for c in self.node(id).children() {
                stack.push((c, depth + 1));
            }
        }
        best
    }

    /// Recursively samples the block rooted at `start` over `indices`,
    /// overwriting whatever `start` previously held. Children are appended to
    /// the arena.
    pub fn sample_block<R: Rng + ?Sized>(
        &mut self,
        slice: &TrainingSlice,
        start: NodeId,
        indices: Vec<usize>,
        tau_parent: f64,
        rng: &mut R,
    ) -> Result<()> {
        if indices.is_empty() {
            return Err(MondrianError::usage("cannot sample a block with no data"));
        }
        let mut work = vec![(start, indices, tau_parent)];
        while let Some((id, indices, tau_parent)) = work.pop() {
            let extent = compute_extent(slice, &indices)?;
            let stats = RunningStats::from_values(indices.iter().map(|&i| slice.label(i)));
            let rate = extent.linear_dimension();
            let count = indices.len();

            self.bounds_mut(id).copy_from_slice(extent.as_slice());
            let node = &mut self.nodes[id.0];
            node.left = None;
            node.right = None;
            node.split_dim = None;
            node.split_loc = None;
            node.count = count;
            node.stats = stats;

            if count < self.min_samples_split || rate <= 0.0 {
                node.split_time = f64::INFINITY;
                node.indices = indices;
                continue;
            }

            let e: f64 = rng.sample(Exp1);
            let tau = later_than(tau_parent, tau_parent + e / rate);
            let dim = sample_proportional(rng, rate, extent.upper().iter().zip(extent.lower()).map(|(u, l)| u - l));
            let (lo, hi) = (extent.lower()[dim], extent.upper()[dim]);
            let loc = rng.random_range(lo..hi);

            let (left_idx, right_idx): (Vec<usize>, Vec<usize>) =
                indices.into_iter().partition(|&i| slice.value(i, dim) <= loc);
            debug_assert!(!left_idx.is_empty() && !right_idx.is_empty());

            let left = self.push_node(TreeNode::placeholder(Some(id)), extent.as_slice());
            let right = self.push_node(TreeNode::placeholder(Some(id)), extent.as_slice());

            let node = &mut self.nodes[id.0];
            node.split_time = tau;
            node.split_dim = Some(dim);
            node.split_loc = Some(loc);
            node.indices = Vec::new();
            node.left = Some(left);
            node.right = Some(right);

            work.push((right, right_idx, tau));
            work.push((left, left_idx, tau));
        }
        Ok(())
    }

    /// Adds row `index` of `slice` to the tree.
    ///
    /// Internal nodes follow the usual online Mondrian extension: an
    /// exponential clock with rate equal to the distance from the new point to
    /// the node's extent decides whether a new parent is introduced above the
    /// node. A leaf absorbs the point and its block is re-sampled from its
    /// parent's split time, which splits it once it holds `min_samples_split`
    /// rows and otherwise just grows its extent.
    pub fn extend<R: Rng + ?Sized>(&mut self, slice: &TrainingSlice, index: usize, rng: &mut R) -> Result<()> {
        if slice.dim() != self.dim {
            return Err(MondrianError::DimensionMismatch { expected: self.dim, got: slice.dim() });
        }
        if index >= slice.len() {
            return Err(MondrianError::usage(format!("row {index} is out of range")));
        }
        let x = slice.row(index);
        let y = slice.label(index);
        let mut id = self.root;
        let mut tau_parent = 0.0;
        loop {
            if self.nodes[id.0].is_leaf() {
                let count = self.nodes[id.0].count;
                if count + 1 < self.min_samples_split || grown_linear_dimension(self.bounds(id), x) <= 0.0 {
                    // Re-sampling would only produce this same, larger leaf.
                    grow(self.bounds_mut(id), x);
                    let leaf = &mut self.nodes[id.0];
                    leaf.indices.push(index);
                    leaf.count += 1;
                    leaf.stats.push(y);
                    return Ok(());
                }
                let mut indices = std::mem::take(&mut self.nodes[id.0].indices);
                indices.push(index);
                return self.sample_block(slice, id, indices, tau_parent, rng);
            }

            let rate = distance(self.bounds(id), x);
            let e = if rate > 0.0 { rng.sample::<f64, _>(Exp1) / rate } else { f64::INFINITY };
            if tau_parent + e < self.nodes[id.0].split_time {
                self.insert_parent(slice, id, index, later_than(tau_parent, tau_parent + e), rate, rng)?;
                return Ok(());
            }

            grow(self.bounds_mut(id), x);
            let node = &mut self.nodes[id.0];
            node.count += 1;
            node.stats.push(y);
            tau_parent = node.split_time;
            id = node.child_for(x).expect("internal node has a child");
        }
    }

    fn insert_parent<R: Rng + ?Sized>(
        &mut self,
        slice: &TrainingSlice,
        below: NodeId,
        index: usize,
        tau: f64,
        rate: f64,
        rng: &mut R,
    ) -> Result<()> {
        let x = slice.row(index);
        let extent = self.extent(below);
        let node = &self.nodes[below.0];
        let dim = sample_proportional(
            rng,
            rate,
            (0..self.dim).map(|d| (extent.lower()[d] - x[d]).max(0.0) + (x[d] - extent.upper()[d]).max(0.0)),
        );
        let loc = if x[dim] > extent.upper()[dim] {
            rng.random_range(extent.upper()[dim]..x[dim])
        } else {
            rng.random_range(x[dim]..extent.lower()[dim])
        };

        let mut joined = extent.clone();
        joined.extend(x);
        let mut stats = node.stats;
        stats.push(slice.label(index));
        let parent = node.parent;
        let count = node.count + 1;

        let new_parent = NodeId(self.nodes.len());
        let new_leaf = NodeId(self.nodes.len() + 1);
        let (left, right) = if x[dim] <= loc { (new_leaf, below) } else { (below, new_leaf) };
        self.push_node(TreeNode {
            parent,
            left: Some(left),
            right: Some(right),
            split_dim: Some(dim),
            split_loc: Some(loc),
            split_time: tau,
            indices: Vec::new(),
            count,
            stats,
        }, joined.as_slice());
        self.push_node(TreeNode::placeholder(Some(new_parent)), joined.as_slice());
        self.replace_child(parent, below, new_parent);
        self.nodes[below.0].parent = Some(new_parent);
        self.sample_block(slice, new_leaf, vec![index], tau, rng)
    }

    fn replace_child(&mut self, parent: Option<NodeId>, old: NodeId, new: NodeId) {
        match parent {
            None => self.root = new,
            Some(p) => {
                let pn = &mut self.nodes[p.0];
                if pn.left == Some(old) {
                    pn.left = Some(new);
                } else if pn.right == Some(old) {
                    pn.right = Some(new);
                }
            }
        }
    }

    /// Inserts a node with a single child between `below` and its parent at
    /// split time `time`. The new node shares the child's extent and data, so
    /// it changes the partition not at all; it exists to check that the label
    /// model is closed under marginalization.
    pub fn insert_pass_through(&mut self, below: NodeId, time: f64) -> Result<NodeId> {
        let lo = self.parent_time(below);
        let hi = self.node(below).split_time;
        if !(time > lo && time < hi) {
            return Err(MondrianError::usage(format!(
                "pass-through time {time} must lie strictly inside ({lo}, {hi})"
            )));
        }
        let extent = self.extent(below);
        let node = self.node(below);
        let parent = node.parent;
        let id = NodeId(self.nodes.len());
        self.push_node(TreeNode {
            parent,
            left: Some(below),
            right: None,
            split_dim: None,
            split_loc: None,
            split_time: time,
            indices: Vec::new(),
            count: node.count,
            stats: node.stats,
        }, extent.as_slice());
        self.replace_child(parent, below, id);
        self.nodes[below.0].parent = Some(id);
        Ok(id)
    }

    /// Checks every structural invariant, returning a description of the
    /// first violation. With `slice`, extents, counts and the data partition
    /// are checked against the rows as well.
    pub fn validate(&self, slice: Option<&TrainingSlice>) -> std::result::Result<(), String> {
        if self.node(self.root).parent.is_some() {
            return Err("root has a parent".into());
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            if std::mem::replace(&mut seen[id.0], true) {
                return Err(format!("node {id} reachable twice"));
            }
            let node = self.node(id);
            let extent = self.extent(id);
            let tau_p = self.parent_time(id);
            if !(node.split_time > tau_p) {
                return Err(format!("node {id}: split time {} not after parent {}", node.split_time, tau_p));
            }
            if extent.dim() != self.dim || (0..self.dim).any(|d| extent.lower()[d] > extent.upper()[d]) {
                return Err(format!("node {id}: malformed extent"));
            }
            if node.stats.count as usize != node.count {
                return Err(format!("node {id}: stats count {} != count {}", node.stats.count, node.count));
            }
            if node.is_leaf() {
                if node.right.is_some() || node.split_dim.is_some() || node.split_time != f64::INFINITY {
                    return Err(format!("node {id}: leaf carries split data"));
                }
                if node.indices.len() != node.count {
                    return Err(format!("node {id}: leaf holds {} rows, count {}", node.indices.len(), node.count));
                }
                if node.count >= self.min_samples_split && extent.linear_dimension() > 0.0 {
                    return Err(format!("node {id}: splittable leaf with {} rows", node.count));
                }
                if let Some(slice) = slice {
                    let ext = compute_extent(slice, &node.indices).map_err(|e| e.to_string())?;
                    if ext != extent {
                        return Err(format!("node {id}: extent differs from its rows"));
                    }
                }
                continue;
            }
            if !node.split_time.is_finite() {
                return Err(format!("node {id}: internal node with infinite split time"));
            }
            let mut child_count = 0;
            for c in node.children() {
                let child = self.node(c);
                let child_extent = self.extent(c);
                if child.parent != Some(id) {
                    return Err(format!("node {c}: parent link does not point at {id}"));
                }
                if !extent.contains_box(&child_extent) {
                    return Err(format!("node {c}: extent not inside parent {id}"));
                }
                child_count += child.count;
                stack.push(c);
            }
            if child_count != node.count {
                return Err(format!("node {id}: children hold {child_count} rows, node {}", node.count));
            }
            match (node.split_dim, node.split_loc, node.right) {
                (Some(d), Some(loc), Some(right)) => {
                    if d >= self.dim {
                        return Err(format!("node {id}: split dimension {d} out of range"));
                    }
                    if !(extent.lower()[d] <= loc && loc <= extent.upper()[d]) {
                        return Err(format!("node {id}: split location outside extent"));
                    }
                    let (left, right) = (self.extent(node.left.unwrap()), self.extent(right));
                    if left.upper()[d] > loc || right.lower()[d] <= loc {
                        return Err(format!("node {id}: children straddle the split"));
                    }
                }
                (None, None, None) => {
                    if self.extent(node.left.unwrap()) != extent {
                        return Err(format!("node {id}: pass-through extent differs from child"));
                    }
                }
                _ => return Err(format!("node {id}: inconsistent split fields")),
            }
        }
        if let Some(unreached) = seen.iter().position(|s| !s) {
            return Err(format!("node {unreached} unreachable from root"));
        }
        Ok(())
    }
}

/// Chooses an index with probability proportional to its non-negative weight.
fn sample_proportional<R: Rng + ?Sized>(rng: &mut R, total: f64, weights: impl Iterator<Item = f64> + Clone) -> usize {
    let u = rng.random_range(0.0..total);
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (d, w) in weights.enumerate() {
        if w > 0.0 {
            last_positive = d;
            acc += w;
            if u < acc {
                return d;
            }
        }
    }
    last_positive
}

/// Keeps split times strictly increasing when `tau_parent + E` rounds back
/// onto `tau_parent`.
#[inline]
fn later_than(tau_parent: f64, tau: f64) -> f64 {
    if tau > tau_parent {
        tau
    } else {
        tau_parent.next_up()
    }
}
