//! Sparse functional multilayer perceptrons.
//!
//! Curves observed at a handful of irregular times are summarised by
//! FPCA conditional scores, which feed a network whose first layer is made
//! of functional neurons with weight functions in the estimated eigenbasis.

pub mod cli;
pub mod curvedata;
pub mod error;
pub mod eval;
pub mod fpca;
pub mod funcnet;
pub mod grid;
pub mod interp;
pub mod persist;
pub mod pipeline;
pub mod rng;
pub mod simgen;
pub mod smoothing;

pub use error::{Error, Result};
pub use grid::TimeGrid;
pub use pipeline::{Pipeline, PipelineConfig, ScoreMode};
