//! Patch-sampled transductive node classification on citation
//! heterographs and very deep Graph Network regression on molecules.
//!
//! The crate is organised bottom-up:
//! - [`hetgraph`], [`sampler`], [`featurize`]: heterograph storage, patch
//!   subsampling and patch featurisation.
//! - [`molgraph`]: molecules, SMILES ingestion and molecular features.
//! - [`autodiff`], [`processors`], [`objectives`]: tensors, models and
//!   losses.
//! - [`train`], [`evalens`]: optimisation loops, evaluation and ensembling.

pub mod autodiff;
pub mod error;
pub mod evalens;
pub mod featurize;
pub mod hetgraph;
pub mod molgraph;
pub mod objectives;
pub mod kv;
pub mod pfgm;
pub mod processors;
pub mod rng;
pub mod sampler;
pub mod train;

pub use error::{Error, Result};
