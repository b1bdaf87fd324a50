//! Embedding of multivariate time series (MTS) datasets into 2-D or 3-D.
//!
//! The pipeline mean-centers and normalizes the raw series, segments them
//! into fixed-window items, scores every pair of items with the EROS
//! eigenvector similarity and then projects the items with a
//! KL-divergence minimizing stochastic neighbor embedding. PCA,
//! Euclidean t-SNE and DTW t-SNE are provided as baselines, together with
//! neighborhood-based quality metrics.

pub mod cli;
pub mod data;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod similarity;
pub mod synthetic;

pub use data::{MtsDataset, MtsItem, PreprocessReport};
pub use embedding::{Embedding, TsneConfig};
pub use error::{Error, Result};
pub use similarity::{EigenBasis, MatrixKind, PairwiseMatrix, WeightVector};
