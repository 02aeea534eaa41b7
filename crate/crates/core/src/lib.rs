//! Exact simulation of branching Brownian motion with selection.
//!
//! A population of `N` particles in `R^d` moves as independent Brownian
//! motions. At rate `N` one particle chosen uniformly is duplicated and the
//! particle with the lowest score is removed, keeping the population size
//! fixed. The crate provides exact event-driven engines, genealogy tracking,
//! shape observables, free branching Brownian motion with walls and a batch
//! experiment runner.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod engine;
pub mod error;
pub mod experiments;
pub mod genealogy;
pub mod kernels;
pub mod model;
pub mod observables;
pub mod walls;

pub use engine::{build_engine, AnyEngine, CoupledPair, DenseEngine, Engine, EngineKind, EventRecord, LinearEngine};
pub use error::{Error, Result};
pub use genealogy::GenealogyForest;
pub use kernels::RngStream;
pub use model::{Configuration, InitSpec, Params, ScoreFunction};
