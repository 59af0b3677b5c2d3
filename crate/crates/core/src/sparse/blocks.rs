use alloc::vec;
use alloc::vec::Vec;

use super::CsrMatrix;
use crate::error::{Error, Result};
use crate::math;

/// Value ranges above this switch block averaging to the log2 path.
pub const LOG_PATH_THRESHOLD: f64 = 255.0;

/// Extrema over the stored nonzero values of a matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueExtrema {
    pub min_val: f64,
    pub max_val: f64,
    pub range: f64,
}

/// Minimum, maximum and range of the stored nonzero values.
///
/// Implicit zeros and explicitly stored zeros do not participate.
pub fn value_extrema(matrix: &CsrMatrix) -> Result<ValueExtrema> {
    let mut nonzero = matrix.values().iter().copied().filter(|v| *v != 0.0);
    let first = nonzero.next().ok_or(Error::EmptyMatrix)?;
    let (min_val, max_val) = nonzero.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v)));
    Ok(ValueExtrema { min_val, max_val, range: max_val - min_val })
}

/// Per-block statistics of an `m x m` partition of a matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockGrid {
    resolution: usize,
    block_order: usize,
    extrema: ValueExtrema,
    log_path: bool,
    nnz: Vec<u32>,
    gamma: Vec<f64>,
    gamma_min: f64,
    gamma_max: f64,
}

impl BlockGrid {
    /// Blocks per side, `m`.
    pub fn resolution(&self) -> usize {
        self.resolution
    }

    /// `ceil(order / m)`
    pub fn block_order(&self) -> usize {
        self.block_order
    }

    pub fn extrema(&self) -> ValueExtrema {
        self.extrema
    }

    /// Whether block averages were taken over `log2 v(a)`.
    pub fn log_path(&self) -> bool {
        self.log_path
    }

    pub fn nnz(&self, i: usize, j: usize) -> u32 {
        self.nnz[i * self.resolution + j]
    }

    /// Row-major `m x m` nonzero counts.
    pub fn nnz_grid(&self) -> &[u32] {
        &self.nnz
    }

    /// Biased block average, `None` for empty blocks.
    pub fn gamma(&self, i: usize, j: usize) -> Option<f64> {
        let k = i * self.resolution + j;
        (self.nnz[k] > 0).then(|| self.gamma[k])
    }

    /// Row-major block averages; entries of empty blocks are meaningless.
    pub(crate) fn gamma_grid(&self) -> &[f64] {
        &self.gamma
    }

    pub fn gamma_min(&self) -> f64 {
        self.gamma_min
    }

    pub fn gamma_max(&self) -> f64 {
        self.gamma_max
    }

    pub fn total_nnz(&self) -> u64 {
        self.nnz.iter().map(|&c| c as u64).sum()
    }
}

/// Index of the block holding row (or column) `index`.
#[inline]
pub(crate) fn block_of(index: usize, resolution: usize, order: usize) -> usize {
    ((index as u128 * resolution as u128) / order as u128) as usize
}

/// Partitions a matrix into `m x m` blocks and computes the biased block
/// averages.
///
/// Entry `(r, c)` lands in block `(floor(r m / n), floor(c m / n))`. Each
/// nonzero `a` is biased to `v(a) = a - min + 1`; a block averages `v(a)` when
/// the value range is at most 255 and `log2 v(a)` otherwise.
pub fn block_partition(matrix: &CsrMatrix, resolution: usize) -> Result<BlockGrid> {
    if resolution < 1 {
        return Err(Error::BadResolution(resolution));
    }
    let extrema = value_extrema(matrix)?;
    let order = matrix.order();
    let log_path = extrema.range > LOG_PATH_THRESHOLD;
    let m = resolution;

    let mut nnz = vec![0u32; m * m];
    let mut sums = vec![0.0f64; m * m];
    for (r, c, a) in matrix.iter() {
        if a == 0.0 {
            continue;
        }
        let k = block_of(r, m, order) * m + block_of(c, m, order);
        let v = a - extrema.min_val + 1.0;
        nnz[k] += 1;
        sums[k] += if log_path { math::log2(v) } else { v };
    }

    let mut gamma_min = f64::INFINITY;
    let mut gamma_max = f64::NEG_INFINITY;
    let gamma: Vec<f64> = sums
        .iter()
        .zip(&nnz)
        .map(|(&s, &count)| {
            if count == 0 {
                return 0.0;
            }
            let g = s / count as f64;
            gamma_min = gamma_min.min(g);
            gamma_max = gamma_max.max(g);
            g
        })
        .collect();

    Ok(BlockGrid {
        resolution,
        block_order: order.div_ceil(m),
        extrema,
        log_path,
        nnz,
        gamma,
        gamma_min,
        gamma_max,
    })
}
