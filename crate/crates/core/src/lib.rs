//! Exact stable semantics for flat assumption-based argumentation, plus a
//! graph network that predicts credulous acceptance and drives a greedy
//! extension builder.

pub mod aba;
pub mod datagen;
pub mod depgraph;
pub mod harness;
pub mod kv;
pub mod metrics;
pub mod nn;
pub mod reconstruct;

pub use aba::{Abaf, AssumptionSet, RawAbaf};
pub use depgraph::DepGraph;

/// Double-precision network.
pub type GnnModel = nn::Model<f64>;
/// Single-precision network.
pub type GnnModel32 = nn::Model<f32>;
pub type GraphSample = nn::Sample<f64>;
pub type GnnPredictor<'a> = reconstruct::GnnPredictor<'a, f64>;
