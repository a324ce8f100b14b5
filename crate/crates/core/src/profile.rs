//! Classification trees that describe clusters by covariate rules.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::NumError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProfileNode {
    /// Rows with `x[feature] < threshold` go left. `gain` is the decrease
    /// in row-weighted Gini impurity.
    Split {
        feature: usize,
        threshold: f64,
        gain: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        leaf_id: usize,
        majority_label: usize,
        class_counts: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileTree {
    pub nodes: Vec<ProfileNode>,
    pub leaf_count: usize,
    pub n_features: usize,
}

/// One split on the path from the root, with its depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitInfo {
    pub depth: usize,
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafRule {
    pub leaf_id: usize,
    pub conditions: Vec<String>,
    pub text: String,
    pub size: usize,
    pub majority_label: usize,
}

fn gini_mass(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    // n·Gini = n − Σ c²/n
    t - counts.iter().map(|&c| (c * c) as f64).sum::<f64>() / t
}

struct Builder<'a> {
    x: ArrayView2<'a, f64>,
    labels: &'a [usize],
    n_classes: usize,
    max_depth: usize,
    min_leaf: usize,
    nodes: Vec<ProfileNode>,
    leaf_count: usize,
}

impl Builder<'_> {
    fn counts(&self, rows: &[usize]) -> Vec<usize> {
        let mut c = vec![0; self.n_classes];
        for &r in rows {
            c[self.labels[r]] += 1;
        }
        c
    }

    fn best_split(&self, rows: &[usize], counts: &[usize]) -> Option<(usize, f64, f64)> {
        let n = rows.len();
        let parent = gini_mass(counts, n);
        let mut best: Option<(usize, f64, f64)> = None;
        let mut sorted = rows.to_vec();
        for f in 0..self.x.ncols() {
            let col = self.x.column(f);
            sorted.sort_by(|&a, &b| col[a].total_cmp(&col[b]).then(a.cmp(&b)));
            let mut left = vec![0usize; self.n_classes];
            for k in 0..n - 1 {
                left[self.labels[sorted[k]]] += 1;
                let nl = k + 1;
                let (v, next) = (col[sorted[k]], col[sorted[k + 1]]);
                if v == next || nl < self.min_leaf || n - nl < self.min_leaf {
                    continue;
                }
                let right: Vec<usize> = counts.iter().zip(&left).map(|(c, l)| c - l).collect();
                let gain = parent - gini_mass(&left, nl) - gini_mass(&right, n - nl);
                if gain > 1e-12 && best.is_none_or(|b| gain > b.2) {
                    let mid = 0.5 * (v + next);
                    let threshold = if mid > v && mid <= next { mid } else { next };
                    best = Some((f, threshold, gain));
                }
            }
        }
        best
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let counts = self.counts(&rows);
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let split = if pure || depth >= self.max_depth || rows.len() < 2 * self.min_leaf {
            None
        } else {
            self.best_split(&rows, &counts)
        };
        let id = self.nodes.len();
        match split {
            None => {
                let majority = (0..self.n_classes)
                    .max_by_key(|&c| (counts[c], std::cmp::Reverse(c)))
                    .unwrap_or(0);
                self.nodes.push(ProfileNode::Leaf {
                    leaf_id: self.leaf_count,
                    majority_label: majority,
                    class_counts: counts,
                });
                self.leaf_count += 1;
            }
            Some((feature, threshold, gain)) => {
                self.nodes.push(ProfileNode::Split {
                    feature,
                    threshold,
                    gain,
                    left: 0,
                    right: 0,
                });
                let (l, r): (Vec<usize>, Vec<usize>) =
                    rows.into_iter().partition(|&i| self.x[[i, feature]] < threshold);
                let left = self.grow(l, depth + 1);
                let right = self.grow(r, depth + 1);
                if let ProfileNode::Split { left: a, right: b, .. } = &mut self.nodes[id] {
                    *a = left;
                    *b = right;
                }
            }
        }
        id
    }
}

/// Greedy Gini tree on raw covariates. Leaf ids follow depth-first,
/// left-before-right order.
pub fn fit_cart(
    x: ArrayView2<'_, f64>,
    labels: &[usize],
    max_depth: usize,
    min_leaf: usize,
) -> Result<ProfileTree, NumError> {
    if labels.len() != x.nrows() {
        return Err(NumError::Dimension(format!(
            "{} labels for {} rows",
            labels.len(),
            x.nrows()
        )));
    }
    if x.nrows() == 0 {
        return Err(NumError::Domain("profile tree needs at least one row".into()));
    }
    let n_classes = labels.iter().max().map_or(1, |m| m + 1);
    let mut b = Builder {
        x,
        labels,
        n_classes,
        max_depth,
        min_leaf: min_leaf.max(1),
        nodes: Vec::new(),
        leaf_count: 0,
    };
    b.grow((0..x.nrows()).collect(), 0);
    Ok(ProfileTree {
        nodes: b.nodes,
        leaf_count: b.leaf_count,
        n_features: x.ncols(),
    })
}

impl ProfileTree {
    pub fn leaf_of(&self, row: &[f64]) -> usize {
        let mut k = 0;
        loop {
            match &self.nodes[k] {
                ProfileNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => k = if row[*feature] < *threshold { *left } else { *right },
                ProfileNode::Leaf { leaf_id, .. } => return *leaf_id,
            }
        }
    }

    /// Splits in depth-first order.
    pub fn splits(&self) -> Vec<SplitInfo> {
        let mut out = Vec::new();
        let mut stack = vec![(0usize, 0usize)];
        while let Some((k, depth)) = stack.pop() {
            if let ProfileNode::Split {
                feature,
                threshold,
                gain,
                left,
                right,
            } = &self.nodes[k]
            {
                out.push(SplitInfo {
                    depth,
                    feature: *feature,
                    threshold: *threshold,
                    gain: *gain,
                });
                stack.push((*right, depth + 1));
                stack.push((*left, depth + 1));
            }
        }
        out
    }

    /// Total impurity decrease per feature.
    pub fn importance(&self) -> Vec<f64> {
        let mut imp = vec![0.0; self.n_features];
        for s in self.splits() {
            imp[s.feature] += s.gain;
        }
        imp
    }

    /// Features ordered by decreasing importance, ties by index; features
    /// never used are omitted.
    pub fn ranked_features(&self) -> Vec<usize> {
        let imp = self.importance();
        let mut f: Vec<usize> = (0..self.n_features).filter(|&j| imp[j] > 0.0).collect();
        f.sort_by(|&a, &b| imp[b].total_cmp(&imp[a]).then(a.cmp(&b)));
        f
    }

    /// Training accuracy of the leaf majority labels.
    pub fn training_accuracy(&self) -> f64 {
        let (mut hit, mut total) = (0usize, 0usize);
        for node in &self.nodes {
            if let ProfileNode::Leaf {
                majority_label,
                class_counts,
                ..
            } = node
            {
                hit += class_counts[*majority_label];
                total += class_counts.iter().sum::<usize>();
            }
        }
        hit as f64 / total.max(1) as f64
    }
}

pub fn leaf_assign(tree: &ProfileTree, x: ArrayView2<'_, f64>) -> Result<Vec<usize>, NumError> {
    if x.ncols() != tree.n_features {
        return Err(NumError::Dimension(format!(
            "tree uses {} features, rows have {}",
            tree.n_features,
            x.ncols()
        )));
    }
    Ok(x.rows().into_iter().map(|r| tree.leaf_of(&r.to_vec())).collect())
}

fn fmt_threshold(t: f64) -> String {
    let short = format!("{t:.4}");
    let trimmed = short.trim_end_matches('0').trim_end_matches('.');
    if trimmed.parse::<f64>().ok() == Some(t) {
        trimmed.to_string()
    } else {
        format!("{t}")
    }
}

/// One conjunctive rule per leaf, ordered by leaf id.
pub fn tree_rules(tree: &ProfileTree, names: &[String]) -> Vec<LeafRule> {
    let name = |f: usize| names.get(f).cloned().unwrap_or_else(|| format!("x{}", f + 1));
    let mut rules = Vec::new();
    let mut stack: Vec<(usize, Vec<String>)> = vec![(0, Vec::new())];
    while let Some((k, conds)) = stack.pop() {
        match &tree.nodes[k] {
            ProfileNode::Split {
                feature,
                threshold,
                left,
                right,
                ..
            } => {
                let t = fmt_threshold(*threshold);
                let mut r = conds.clone();
                r.push(format!("{} ≥ {}", name(*feature), t));
                stack.push((*right, r));
                let mut l = conds;
                l.push(format!("{} < {}", name(*feature), t));
                stack.push((*left, l));
            }
            ProfileNode::Leaf {
                leaf_id,
                majority_label,
                class_counts,
            } => {
                let text = if conds.is_empty() {
                    "all subjects".to_string()
                } else {
                    conds.join(" and ")
                };
                rules.push(LeafRule {
                    leaf_id: *leaf_id,
                    conditions: conds,
                    text,
                    size: class_counts.iter().sum(),
                    majority_label: *majority_label,
                });
            }
        }
    }
    rules.sort_by_key(|r| r.leaf_id);
    rules
}
