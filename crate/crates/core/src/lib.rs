//! Insertion-order laboratory for HNSW graphs: synthetic data with known
//! intrinsic dimensionality, dimensionality estimators, exact baselines,
//! a deterministic HNSW implementation, order strategies and evaluation.

pub mod cli;
pub mod dataset;
pub mod dimest;
pub mod error;
pub mod hnsw;
pub mod io;
pub mod knn;
pub mod lab;
pub mod metrics;
pub mod orders;
pub mod seed;
pub mod synth;
pub mod vecmath;

pub use dataset::Dataset;
pub use error::{Error, Result};
pub use hnsw::{HnswIndex, HnswParams, NeighborSelect};
pub use knn::{Baseline, Neighbor, SearchResult};
pub use orders::{OrderPlan, Strategy};
pub use vecmath::Metric;
