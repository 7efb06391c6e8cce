//! normlab: a numerical laboratory for studying how feature normalization
//! interacts with minimum-norm interpolation, max-margin classification,
//! and batch-normalized networks.
//!
//! The crate has three layers:
//!
//! * exact linear-model solvers ([`theory`]) that expose the variance bias
//!   of normalized interpolators on overparameterized problems;
//! * a small deterministic autodiff engine ([`tensor`]) plus model,
//!   training, and evaluation machinery ([`model`], [`train`], [`metrics`])
//!   for the counterbalancing-teacher experiments; and
//! * synthetic data generation and corruption tooling ([`data`]).
//!
//! Everything is plain `f64` on the CPU with fixed iteration orders, so a
//! given seed reproduces results bit for bit.

pub mod data;
pub mod metrics;
pub mod model;
pub mod stats;
pub mod theory;
pub mod train;
pub mod rng;
pub mod tensor;

pub use tensor::{BnMode, BnStats, Graph, NodeId, Tensor, TensorError};
