//! Error-passing-rate guided graph augmentation and contrastive learning.
//!
//! The crate measures how much message mass a graph passes along edges whose
//! endpoints belong to different classes (the error passing rate), derives
//! degree-based weights for adding and dropping edges so that a wrong
//! perturbation has bounded impact on that rate, and trains a small GCN
//! encoder with an InfoNCE objective on the two resulting views. A
//! brute-force oracle verifies the underlying single-edge perturbation
//! theory on small graphs and on constant-error-fraction constructions.
//!
//! Modules:
//!
//! * [`graph`]: graph storage, the message-passing operator, EPR;
//! * [`augment`]: candidate selection, weights, probabilities, views;
//! * [`theory`]: exact delta measurements, sign and identity checkers;
//! * [`nn`]: GCN encoder, projection head, manual gradients, Adam;
//! * [`contrastive`]: cosine InfoNCE loss and its gradient;
//! * [`pipeline`]: training loop, splits, linear probe, block models;
//! * [`stats`]: Wilcoxon signed-rank test;
//! * [`io`]: text formats, configs, metrics, checkpoints.

pub mod augment;
pub mod contrastive;
pub mod error;
pub mod graph;
pub mod io;
pub mod matrix;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod stats;
pub mod theory;

pub use error::{Error, Result};
pub use graph::{EprReport, Graph, MassConvention, NormalizedAdjacency};
pub use matrix::Matrix;
