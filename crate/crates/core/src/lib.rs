//! Label co-occurrence graph supervision for multi-label classification.
//!
//! The crate builds undirected label graphs (empirical co-occurrence, expert
//! differential groups, or random), turns them into propagation operators,
//! and trains a two-layer graph-convolutional head whose output rows act as
//! per-label linear classifiers over precomputed image features. Evaluation
//! covers the usual multi-label metric suite plus a node-proximity analysis
//! of the learned label embeddings.
//!
//! Module map:
//!
//! - [`graph`]: vocabularies, differential groups, graph construction,
//!   normalization and propagation matrices.
//! - [`model`]: the GCN head, the linear baseline, loss, manual gradients,
//!   training loops and checkpoints.
//! - [`metrics`]: top-n accuracy, mAP, Hamming loss, ranking loss, one-error.
//! - [`proximity`]: centered-cosine node proximity and threshold clustering.
//! - [`data`]: dataset records and the synthetic incomplete-label generator.
//! - [`cli`]: the `labelgcn` command-line front end.

pub mod cli;
pub mod data;
mod error;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod proximity;

pub use error::{Error, Result};
