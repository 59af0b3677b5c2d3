//! File formats, the worker pool and the `raf` command line on top of
//! [`raf_core`].
//!
//! Every subcommand of the binary is a function in [`pipeline`], so the same
//! stages can be driven from tests.

pub mod clock;
pub mod config;
pub mod error;
pub mod io;
pub mod manifest;
pub mod pipeline;
pub mod render;

pub use config::RunConfig;
pub use error::{Error, Result};
