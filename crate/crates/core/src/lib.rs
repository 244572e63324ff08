//! Graph neural networks with in-layer non-linear feedforward blocks.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`]: dense 2-D tensors, a reverse-mode gradient tape, optimizers
//!   and a finite-difference gradient checker.
//! - [`graph`]: CSR graphs, datasets and their on-disk formats, neighbor
//!   sampling, cluster partitioning and feature/edge perturbations.
//! - [`layers`]: GCN, GraphSage (mean) and multi-head GAT layers plus the
//!   [`layers::NgnnBlock`] that stacks square feedforward layers after a GNN
//!   layer.
//! - [`model`]: L-layer stacks with an NGNN position policy, the block spec
//!   grammar (`"1-relu+1-sigmoid"`), parameter accounting and checkpoints.
//! - [`train`]: full-graph, neighbor-sampling and cluster training drivers,
//!   link prediction, and evaluation metrics.
//! - [`experiments`]: experiment configs, sweep protocols, result tables and
//!   the synthetic SBM generator backing the CLI.

pub mod error;
pub mod experiments;
pub mod graph;
pub mod layers;
pub mod model;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{NgnnError, Result};
