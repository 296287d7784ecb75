//! Unsupervised classification over precomputed embeddings in three stages:
//! multi-head clustering with adaptive nearest neighbors, cluster-ensemble
//! consensus, and one round of self-training on the consensus labels.

mod binio;
pub mod cli;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod featstore;
pub mod heads;
pub mod neighbors;
pub mod selftrain;

pub use ensemble::Labeling;
pub use error::{Error, Result};
pub use featstore::EmbeddingMatrix;
