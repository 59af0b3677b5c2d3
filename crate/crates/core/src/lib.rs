//! Iterative method selection for sparse linear systems.
//!
//! The crate turns a sparse matrix into relative image channels plus six
//! absolute scalars, solves systems with a small catalog of preconditioned
//! Krylov methods to label the fastest one, and trains a two-branch
//! convolutional classifier that predicts that label.
//!
//! Everything here is pure computation on in-memory data and builds without
//! `std` (an allocator is required). File IO, the command line and the worker
//! pool live in the companion `raf` crate.
//!
//! Module map:
//!
//! - [`sparse`]: CSR storage, Matrix Market text, value extrema, block grids.
//! - [`features`]: red/green/blue channels and the fused feature bundle.
//! - [`solvers`]: CG, GMRES(m), BiCGSTAB, preconditioners, labeling.
//! - [`generator`]: PDE discretizations and corpus sampling/rebalancing.
//! - [`nn`]: tensors, layers with hand-written backward passes, Adam.
//! - [`model`]: the selector network, training, prediction, evaluation.
#![no_std]
#![warn(rust_2018_idioms, unused_qualifications)]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod error;
pub mod features;
pub mod generator;
pub mod math;
pub mod model;
pub mod nn;
pub mod solvers;
pub mod sparse;

pub use error::{Error, Result};
pub use features::{AbsoluteFeatures, DatasetOrderStats, FeatureBundle, ImageChannels, RafFeatures};
pub use solvers::{Clock, LabelRecord, Method, MethodCatalog, SolveConfig, SolveOutcome, SolveStatus};
pub use sparse::{BlockGrid, CsrMatrix, ValueExtrema};
