//! Sparse matrix storage and the statistics every feature formula is built on.

mod blocks;
mod csr;
mod mtx;

pub use blocks::{block_partition, value_extrema, BlockGrid, ValueExtrema, LOG_PATH_THRESHOLD};
pub use csr::CsrMatrix;
pub use mtx::{parse_matrix_market, write_matrix_market};
