//! Face-to-parameters (F2P) pipeline: a procedural parametric face model,
//! synthetic dataset generation, small from-scratch CNN predictors, a
//! decomposition-based ensemble with least-squares blend weights, and a
//! pluggable inverse-style domain adapter, plus the harness that drives the
//! ablation matrix end to end.

pub mod datagen;
pub mod domain_adapt;
pub mod ensemble;
pub mod error;
pub mod facegen;
pub mod harness;
pub mod nets;

pub use error::{Error, Result};
