//! Dynamic sparse training of multilayer perceptrons with in-time
//! over-parameterization instrumentation.

pub mod baselines;
pub mod data;
pub mod error;
pub mod harness;
pub mod itop;
pub mod ndcore;
pub mod nn;
pub mod sparsity;

pub use error::{Error, Result};
