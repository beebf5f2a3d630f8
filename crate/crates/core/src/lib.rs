//! Family-graph disease risk modeling at desk scale.
//!
//! Pipeline: simulate multi-generation pedigrees under a liability threshold
//! model, build per-target family graphs with kinship-derived edges, train
//! GNN / GNN-LSTM risk models and baselines on a from-scratch autodiff core,
//! evaluate with exact imbalance-aware metrics, and explain predictions with
//! learned node / feature masks.

pub mod error;
pub mod explain;
pub mod experiment;
pub mod graph;
pub mod io;
pub mod layers;
pub mod metrics;
pub mod model;
pub mod params;
pub mod pedigree;
pub mod rng;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
