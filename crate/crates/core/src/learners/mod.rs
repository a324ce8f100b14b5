//! Flexible regression learners: Newton regression trees and gradient
//! boosting under squared-error and Cox losses.

mod boost;
mod tree;

pub use boost::{boost_fit, BoostParams, BoostTarget, BoostedModel, Loss};
pub use tree::{fit_tree_newton, RegressionTree, TreeNode, TreeParams};
