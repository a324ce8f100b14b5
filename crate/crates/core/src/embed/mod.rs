//! Dissimilarity, embedding and clustering of the estimated effects.

mod dissim;
mod kmeans;
mod tsne;

pub use dissim::{iqr, niecc_dissimilarity, DissimilarityMatrix};
pub use kmeans::{kmeans, kmeans_run, Clustering};
pub use tsne::{calibrate_affinities, tsne_embed, Affinities, Embedding};
