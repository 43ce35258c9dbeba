//! Confusion-network encoding with a GRU and a neural dialog state tracker
//! built on top of it.
//!
//! The crate is organised bottom-up:
//!
//! - [`cnet`]: confusion-network types, the text log format, pruning and
//!   coverage statistics.
//! - [`numerics`]: dense tensors, a reverse-mode tape, Adam, dropout and a
//!   finite-difference gradient checker.
//! - [`encoder`]: the GRU cell, pooled timestep encoding over confusion
//!   networks and the system/user turn combiner.
//! - [`model`]: ontology, dialog state, the tracker model, training,
//!   metrics, ensembling and checkpoints.
//! - [`corpus`]: dialog loading, act-to-word mapping, vocabulary,
//!   embedding files and the synthetic corpus generator.
//! - [`cli`]: the command implementations behind the `cnet-dst` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod cnet;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod model;
pub mod numerics;

pub use error::{Error, Result};
