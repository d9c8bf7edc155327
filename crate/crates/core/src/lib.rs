//! Onboard-style cloud segmentation for hyperspectral imagery.
//!
//! The crate covers the whole desk-scale workflow: cube and mask I/O with
//! tiling ([`hypercube`]), ground-segment channel selection by PCA
//! ([`bandselect`]), a small CNN engine with forward and backward passes
//! ([`nn`]), the two lightweight segmentation networks ([`models`]),
//! training, inference and benchmarking ([`pipeline`]) and evaluation
//! metrics with report rendering ([`metrics`]).

pub mod bandselect;
pub mod error;
pub mod hypercube;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod pipeline;
pub mod synth;

pub use error::{Error, ErrorClass, Result};
