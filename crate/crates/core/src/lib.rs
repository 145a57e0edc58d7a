//! Denoise-and-repair anomaly detection for multivariate time series.
//!
//! A single depthwise-separable residual block sits between two pointwise
//! projections, with a global skip from input to output. The network is
//! trained to repair corrupted windows; at inference the clean window and its
//! repair are compared by a fixed structural discrepancy (amplitude, first
//! difference, moving-average trend, cross-channel correlation).
//!
//! All gradients are written by hand; there is no autodiff.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod inference;
pub mod model;
pub mod numerics;
pub mod pipeline;
pub mod scoring;
pub mod training;

pub use error::{Error, LoadError, Result};
