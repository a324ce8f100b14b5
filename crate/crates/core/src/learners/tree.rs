//! Depth-limited regression trees grown from per-row gradients and Hessians.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::NumError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    /// Rows with `x[feature] < threshold` go left, the rest go right.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<TreeNode>,
    pub depth: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_child_weight: f64,
    /// L2 penalty on leaf values.
    pub lambda: f64,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: 3,
            min_child_weight: 10.0,
            lambda: 1.0,
        }
    }
}

impl RegressionTree {
    pub fn constant(value: f64) -> Self {
        Self {
            nodes: vec![TreeNode::Leaf { value }],
            depth: 0,
        }
    }

    /// Index of the leaf node reached by `row`.
    pub fn leaf_index(&self, row: &[f64]) -> usize {
        let mut k = 0;
        loop {
            match self.nodes[k] {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => k = if row[feature] < threshold { left } else { right },
                TreeNode::Leaf { .. } => return k,
            }
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match self.nodes[self.leaf_index(row)] {
            TreeNode::Leaf { value } => value,
            TreeNode::Split { .. } => unreachable!("leaf_index returns leaves"),
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, TreeNode::Leaf { .. })).count()
    }

    pub(crate) fn scale_leaves(&mut self, factor: f64) {
        for node in &mut self.nodes {
            if let TreeNode::Leaf { value } = node {
                *value *= factor;
            }
        }
    }
}

/// Per-feature row orderings, computed once and reused across boosting rounds.
#[derive(Debug, Clone)]
pub(crate) struct SortedFeatures {
    order: Vec<Vec<usize>>,
}

impl SortedFeatures {
    pub(crate) fn new(x: ArrayView2<'_, f64>) -> Self {
        let order = x
            .columns()
            .into_iter()
            .map(|col| {
                let mut idx: Vec<usize> = (0..col.len()).collect();
                idx.sort_by(|&a, &b| col[a].total_cmp(&col[b]).then(a.cmp(&b)));
                idx
            })
            .collect();
        Self { order }
    }
}

#[derive(Clone, Copy)]
struct BestSplit {
    gain: f64,
    feature: usize,
    threshold: f64,
}

#[derive(Clone, Copy, Default)]
struct ScanState {
    gl: f64,
    hl: f64,
    last: f64,
    seen: bool,
}

fn score(g: f64, h: f64, lambda: f64) -> f64 {
    g * g / (h + lambda)
}

const MIN_GAIN: f64 = 1e-12;

/// Grow a tree level by level with exact greedy split search.
pub(crate) fn grow_tree(
    x: ArrayView2<'_, f64>,
    sorted: &SortedFeatures,
    grad: &[f64],
    hess: &[f64],
    params: &TreeParams,
) -> (RegressionTree, Vec<usize>) {
    let n = x.nrows();
    // Node index for each row; rows always sit at a current frontier node.
    let mut pos = vec![0usize; n];
    let mut nodes = vec![TreeNode::Leaf { value: 0.0 }];
    let mut node_g = vec![grad.iter().sum::<f64>()];
    let mut node_h = vec![hess.iter().sum::<f64>()];
    let mut frontier = vec![0usize];
    let mut depth = 0;

    for level in 0..params.max_depth {
        if frontier.is_empty() {
            break;
        }
        let mut slot = vec![usize::MAX; nodes.len()];
        for (s, &node) in frontier.iter().enumerate() {
            slot[node] = s;
        }
        let mut best: Vec<Option<BestSplit>> = vec![None; frontier.len()];
        let mut state = vec![ScanState::default(); frontier.len()];
        for (f, order) in sorted.order.iter().enumerate() {
            state.iter_mut().for_each(|s| *s = ScanState::default());
            for &r in order {
                let s = slot[pos[r]];
                if s == usize::MAX {
                    continue;
                }
                let v = x[[r, f]];
                let st = &mut state[s];
                if st.seen && v > st.last {
                    let node = frontier[s];
                    let (g, h) = (node_g[node], node_h[node]);
                    let (gr, hr) = (g - st.gl, h - st.hl);
                    if st.hl >= params.min_child_weight && hr >= params.min_child_weight {
                        let gain = score(st.gl, st.hl, params.lambda) + score(gr, hr, params.lambda)
                            - score(g, h, params.lambda);
                        if gain > MIN_GAIN && best[s].is_none_or(|b| gain > b.gain) {
                            let mid = st.last + 0.5 * (v - st.last);
                            let threshold = if mid > st.last { mid } else { v };
                            best[s] = Some(BestSplit {
                                gain,
                                feature: f,
                                threshold,
                            });
                        }
                    }
                }
                st.gl += grad[r];
                st.hl += hess[r];
                st.last = v;
                st.seen = true;
            }
        }

        let mut next = Vec::new();
        let mut child_of = vec![(usize::MAX, usize::MAX); nodes.len()];
        for (s, &node) in frontier.iter().enumerate() {
            if let Some(b) = best[s] {
                let left = nodes.len();
                let right = left + 1;
                nodes.push(TreeNode::Leaf { value: 0.0 });
                nodes.push(TreeNode::Leaf { value: 0.0 });
                node_g.extend([0.0, 0.0]);
                node_h.extend([0.0, 0.0]);
                nodes[node] = TreeNode::Split {
                    feature: b.feature,
                    threshold: b.threshold,
                    left,
                    right,
                };
                child_of[node] = (left, right);
                next.push(left);
                next.push(right);
            }
        }
        if next.is_empty() {
            break;
        }
        depth = level + 1;
        child_of.resize(nodes.len(), (usize::MAX, usize::MAX));
        for r in 0..n {
            let node = pos[r];
            if let TreeNode::Split { feature, threshold, .. } = nodes[node] {
                let (l, rt) = child_of[node];
                if l == usize::MAX {
                    continue;
                }
                let child = if x[[r, feature]] < threshold { l } else { rt };
                pos[r] = child;
                node_g[child] += grad[r];
                node_h[child] += hess[r];
            }
        }
        frontier = next;
    }

    for (k, node) in nodes.iter_mut().enumerate() {
        if let TreeNode::Leaf { value } = node {
            *value = -node_g[k] / (node_h[k] + params.lambda);
        }
    }
    (RegressionTree { nodes, depth }, pos)
}

/// Fit one Newton tree: splits maximize
/// `GL²/(HL+λ) + GR²/(HR+λ) − G²/(H+λ)`, leaves take `−G/(H+λ)`.
pub fn fit_tree_newton(
    x: ArrayView2<'_, f64>,
    grad: &[f64],
    hess: &[f64],
    params: &TreeParams,
) -> Result<RegressionTree, NumError> {
    let n = x.nrows();
    if grad.len() != n || hess.len() != n {
        return Err(NumError::Dimension(format!(
            "{} rows but {} gradients and {} hessians",
            n,
            grad.len(),
            hess.len()
        )));
    }
    if hess.iter().any(|h| !(*h >= 0.0)) || grad.iter().any(|g| !g.is_finite()) {
        return Err(NumError::Domain(
            "hessians must be nonnegative and gradients finite".into(),
        ));
    }
    let sorted = SortedFeatures::new(x);
    Ok(grow_tree(x, &sorted, grad, hess, params).0)
}
