//! Coupled flow matching at desk scale.
//!
//! Two stages: a kernelized Gromov-Wasserstein solver couples data points
//! with samples of a low-dimensional target distribution, then a
//! dual-conditional flow-matching network turns the coupling into
//! bidirectional samplers `p(y | x)` and `p(x | y)`.

pub mod config;
pub mod dcfm;
pub mod error;
pub mod gwot;
pub mod io;
pub mod kernels;
pub mod lowrank;
pub mod metrics;
pub mod oracle;
pub mod plan_ops;
pub mod sampler;
pub mod sinkhorn;
pub mod synth;

pub use error::{Error, Result};
