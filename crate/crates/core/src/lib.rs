//! Noise-tolerant node representation learning on graphs.
//!
//! A two-layer graph-convolutional encoder is trained to maximize a scaled
//! coding rate reduction, with the class memberships of all nodes supplied
//! by decoupled label propagation: noisy training labels are denoised over
//! the train-only subgraph before training, and each epoch mixes
//! prototype pseudo-labels with the denoised labels and spreads them over
//! the whole graph. A logistic-regression readout classifies the learned
//! representations.
//!
//! The encoder backbone is a GCN; attention-based backbones are not
//! provided.

pub mod checkpoint;
pub mod diagnostics;
pub mod encoder;
pub mod error;
pub mod graph;
pub mod noise;
pub mod optim;
pub mod propagation;
pub mod rate;
pub mod readout;
pub mod semantics;
pub mod trainer;

pub use error::{Error, Result};

/// Artifact format version, written as `spec_version` in every JSON output.
pub const FORMAT_VERSION: &str = "1.0";
