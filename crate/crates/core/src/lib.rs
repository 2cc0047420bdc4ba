//! Link stealing attacks against inductive graph neural networks.

pub mod attack;
pub mod data;
pub mod defense;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod features;
pub mod gnn;
pub mod graph;
pub mod nn;
pub mod rng;

pub use error::{Error, Result};
