//! Stagewise Newton boosting with squared-error or Cox partial-likelihood loss.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::tree::{grow_tree, RegressionTree, SortedFeatures, TreeParams};
use crate::cox::RiskSets;
use crate::error::NumError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    Squared,
    Cox,
}

/// Training target for [`boost_fit`].
#[derive(Debug, Clone, Copy)]
pub enum BoostTarget<'a> {
    Squared(&'a [f64]),
    Cox { time: &'a [f64], event: &'a [bool] },
}

impl BoostTarget<'_> {
    pub fn loss(&self) -> Loss {
        match self {
            BoostTarget::Squared(_) => Loss::Squared,
            BoostTarget::Cox { .. } => Loss::Cox,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostParams {
    pub rounds: usize,
    pub learning_rate: f64,
    pub tree: TreeParams,
}

impl Default for BoostParams {
    fn default() -> Self {
        Self {
            rounds: 200,
            learning_rate: 0.1,
            tree: TreeParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    pub trees: Vec<RegressionTree>,
    pub learning_rate: f64,
    pub base_score: f64,
    pub loss: Loss,
    pub n_features: usize,
    /// Training loss after each accepted round (index 0 is the base model).
    pub loss_history: Vec<f64>,
}

impl BoostedModel {
    /// A model with no trees.
    pub fn constant(loss: Loss, base_score: f64, n_features: usize) -> Self {
        Self {
            trees: Vec::new(),
            learning_rate: 1.0,
            base_score,
            loss,
            n_features,
            loss_history: Vec::new(),
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut acc = self.base_score;
        for tree in &self.trees {
            acc += self.learning_rate * tree.predict_row(row);
        }
        acc
    }

    pub fn predict(&self, rows: ArrayView2<'_, f64>) -> Result<Vec<f64>, NumError> {
        if rows.ncols() != self.n_features {
            return Err(NumError::Dimension(format!(
                "model expects {} features, got {}",
                self.n_features,
                rows.ncols()
            )));
        }
        let mut buf = vec![0.0; self.n_features];
        Ok(rows
            .rows()
            .into_iter()
            .map(|r| {
                buf.iter_mut().zip(r.iter()).for_each(|(b, v)| *b = *v);
                self.predict_row(&buf)
            })
            .collect())
    }
}

enum Objective<'a> {
    Squared(&'a [f64]),
    Cox(RiskSets),
}

impl Objective<'_> {
    fn loss(&self, pred: &[f64]) -> Result<f64, NumError> {
        match self {
            Objective::Squared(y) => Ok(0.5 * y.iter().zip(pred).map(|(a, b)| (a - b).powi(2)).sum::<f64>()),
            Objective::Cox(rs) => Ok(-rs.partial_loglik(pred)?),
        }
    }

    fn grad_hess(&self, pred: &[f64]) -> Result<(Vec<f64>, Vec<f64>), NumError> {
        match self {
            Objective::Squared(y) => Ok((
                pred.iter().zip(y.iter()).map(|(p, t)| p - t).collect(),
                vec![1.0; pred.len()],
            )),
            Objective::Cox(rs) => rs.grad_hess(pred),
        }
    }
}

const MAX_SHRINK: usize = 10;

/// Fit a boosted ensemble. Each round fits a Newton tree to the current
/// gradients; a round that would increase the training loss is shrunk by
/// halving its leaf values, and boosting stops if no shrinkage helps.
pub fn boost_fit(
    features: ArrayView2<'_, f64>,
    target: BoostTarget<'_>,
    params: &BoostParams,
) -> Result<BoostedModel, NumError> {
    let n = features.nrows();
    if params.rounds == 0 {
        return Err(NumError::Domain("boosting needs at least one round".into()));
    }
    if !(params.learning_rate > 0.0) {
        return Err(NumError::Domain("learning rate must be positive".into()));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(NumError::NonFinite("boosting features".into()));
    }
    let (objective, base_score) = match target {
        BoostTarget::Squared(y) => {
            if y.len() != n {
                return Err(NumError::Dimension(format!("{n} rows but {} targets", y.len())));
            }
            if n == 0 {
                return Err(NumError::Domain("no training rows".into()));
            }
            (Objective::Squared(y), y.iter().sum::<f64>() / n as f64)
        }
        BoostTarget::Cox { time, event } => {
            if time.len() != n {
                return Err(NumError::Dimension(format!("{n} rows but {} times", time.len())));
            }
            (Objective::Cox(RiskSets::new(time, event)?), 0.0)
        }
    };

    let sorted = SortedFeatures::new(features);
    let mut pred = vec![base_score; n];
    let mut current = objective.loss(&pred)?;
    let mut trees = Vec::with_capacity(params.rounds);
    let mut history = vec![current];
    let lr = params.learning_rate;

    'rounds: for _ in 0..params.rounds {
        let (grad, hess) = objective.grad_hess(&pred)?;
        let (mut tree, leaf_of) = grow_tree(features, &sorted, &grad, &hess, &params.tree);
        for _ in 0..=MAX_SHRINK {
            let trial: Vec<f64> = pred
                .iter()
                .zip(&leaf_of)
                .map(|(p, &leaf)| match tree.nodes[leaf] {
                    super::tree::TreeNode::Leaf { value } => p + lr * value,
                    super::tree::TreeNode::Split { .. } => unreachable!(),
                })
                .collect();
            let next = objective.loss(&trial)?;
            if next <= current {
                pred = trial;
                current = next;
                history.push(current);
                trees.push(tree);
                continue 'rounds;
            }
            tree.scale_leaves(0.5);
        }
        break;
    }

    Ok(BoostedModel {
        trees,
        learning_rate: lr,
        base_score,
        loss: target.loss(),
        n_features: features.ncols(),
        loss_history: history,
    })
}
