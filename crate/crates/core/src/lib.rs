//! Active-learning query strategies for volumetric segmentation.
//!
//! The crate scores unannotated 3D probability maps for uncertainty, prunes
//! redundant candidates with cosine-similarity set functions, picks diverse
//! initial training sets from first-order intensity features, and drives the
//! whole annotate/retrain loop against a pluggable [`simulation::Predictor`].
//! A synthetic phantom pool and oracle predictor make the loop runnable
//! without training a network.
//!
//! Per-item work (scoring, pairwise similarity, Monte Carlo draws) runs on
//! rayon when the `parallel` feature is enabled (the default). Every result is
//! bitwise identical at any thread count.

pub mod cli;
pub mod error;
pub mod initialization;
pub mod metrics;
pub mod par;
pub mod seed;
pub mod selection;
pub mod similarity;
pub mod simulation;
pub mod tabular;
pub mod uncertainty;
pub mod volume;

mod ids;
mod numeric;

pub use error::{Error, Result};
pub use ids::ItemId;
