//! Hypergraph node-injection attacks against hypergraph neural networks:
//! core data structures, a minimal reverse-mode numeric layer, two victim
//! models, the pivotality-based injection pipeline, perturbation-bound
//! checkers, and dataset/report file formats.

pub mod attack;
pub mod bounds;
pub mod experiment;
pub mod hypergraph;
pub mod io;
pub mod models;
pub mod numeric;
pub mod synth;
