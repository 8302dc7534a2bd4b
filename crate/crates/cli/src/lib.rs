//! Command-line front end for the sparse-estimation solvers: dataset
//! ingestion (sparse text and dense CSV), synthetic problem generation,
//! single solves, warm-started regularization paths, cross-solver benches,
//! and plain-text trace emission for plotting and regression tests.

pub mod dataset;
pub mod path;
pub mod runner;
pub mod synth;
pub mod traceio;
