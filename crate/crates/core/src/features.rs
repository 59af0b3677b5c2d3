//! Image channels and absolute scalars extracted from a block grid.
//!
//! Red encodes the normalized biased block average, green the block fill
//! ratio, and blue (conventional three-channel mode only) the matrix order
//! relative to the dataset's order range. The fused bundle keeps red and green
//! and adds six absolute values: `min(A)`, `max(A)`, `min(gamma)`,
//! `max(gamma)`, the order `N_A` and the block order `N_b`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::sparse::{block_partition, BlockGrid, CsrMatrix};

/// Default image resolution.
pub const DEFAULT_RESOLUTION: usize = 256;

/// Number of absolute values in a fused bundle.
pub const ABSOLUTE_COUNT: usize = 6;

/// Display names of the absolute values, in storage order.
pub const ABSOLUTE_NAMES: [&str; ABSOLUTE_COUNT] =
    ["min_a", "max_a", "min_gamma", "max_gamma", "order", "block_order"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageChannels {
    pub resolution: usize,
    pub red: Vec<u8>,
    pub green: Vec<u8>,
    pub blue: Option<Vec<u8>>,
}

impl ImageChannels {
    /// Channel planes in network input order.
    pub fn planes(&self) -> Vec<&[u8]> {
        let mut planes: Vec<&[u8]> = vec![&self.red, &self.green];
        if let Some(blue) = &self.blue {
            planes.push(blue);
        }
        planes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbsoluteFeatures {
    pub min_a: f64,
    pub max_a: f64,
    pub min_gamma: f64,
    pub max_gamma: f64,
    pub order: f64,
    pub block_order: f64,
}

impl AbsoluteFeatures {
    pub fn to_array(&self) -> [f64; ABSOLUTE_COUNT] {
        [self.min_a, self.max_a, self.min_gamma, self.max_gamma, self.order, self.block_order]
    }

    pub fn from_array(v: [f64; ABSOLUTE_COUNT]) -> Self {
        Self {
            min_a: v[0],
            max_a: v[1],
            min_gamma: v[2],
            max_gamma: v[3],
            order: v[4],
            block_order: v[5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RafFeatures {
    pub channels: ImageChannels,
    pub absolute: AbsoluteFeatures,
}

/// Dataset-wide matrix order range used by the blue channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetOrderStats {
    pub n_min: usize,
    pub n_max: usize,
}

impl DatasetOrderStats {
    pub fn new(n_min: usize, n_max: usize) -> Result<Self> {
        if n_min == 0 || n_min > n_max {
            return Err(Error::ConfigError(format!("invalid order range [{n_min}, {n_max}]")));
        }
        Ok(Self { n_min, n_max })
    }

    pub fn from_orders<I: IntoIterator<Item = usize>>(orders: I) -> Result<Self> {
        let mut it = orders.into_iter();
        let first = it.next().ok_or(Error::EmptyCorpus)?;
        let (lo, hi) = it.fold((first, first), |(lo, hi), n| (lo.min(n), hi.max(n)));
        Self::new(lo, hi)
    }
}

/// Normalized block averages scaled to bytes; empty blocks are 0.
pub fn red_channel(grid: &BlockGrid) -> Result<Vec<u8>> {
    if grid.total_nnz() == 0 {
        return Err(Error::EmptyMatrix);
    }
    let (lo, hi) = (grid.gamma_min(), grid.gamma_max());
    let span = hi - lo;
    Ok(grid
        .gamma_grid()
        .iter()
        .zip(grid.nnz_grid())
        .map(|(&g, &count)| {
            if count == 0 || span == 0.0 {
                0
            } else {
                to_byte((g - lo) / span * 255.0)
            }
        })
        .collect())
}

/// Block fill ratio `NNZ / N_b^2` scaled to bytes and clamped to 255.
pub fn green_channel(grid: &BlockGrid) -> Vec<u8> {
    let cells = (grid.block_order() * grid.block_order()) as f64;
    grid.nnz_grid()
        .iter()
        .map(|&count| to_byte(count as f64 / cells * 255.0))
        .collect()
}

/// Order of the matrix relative to the dataset range, as one byte.
///
/// Orders outside the range are clamped with a warning; a degenerate range
/// gives 0.
pub fn blue_channel(order: usize, stats: DatasetOrderStats) -> u8 {
    if stats.n_max == stats.n_min {
        return 0;
    }
    let clamped = order.clamp(stats.n_min, stats.n_max);
    if clamped != order {
        log::warn!(
            "matrix order {order} outside dataset range [{}, {}]; clamped",
            stats.n_min,
            stats.n_max
        );
    }
    to_byte((clamped - stats.n_min) as f64 / (stats.n_max - stats.n_min) as f64 * 255.0)
}

#[inline]
fn to_byte(x: f64) -> u8 {
    math::floor(x).clamp(0.0, 255.0) as u8
}

/// Red and green channels plus the six absolute values.
pub fn extract_raf(matrix: &CsrMatrix, resolution: usize) -> Result<RafFeatures> {
    let grid = block_partition(matrix, resolution)?;
    raf_from_grid(matrix.order(), &grid)
}

pub fn raf_from_grid(order: usize, grid: &BlockGrid) -> Result<RafFeatures> {
    let red = red_channel(grid)?;
    let green = green_channel(grid);
    let e = grid.extrema();
    Ok(RafFeatures {
        channels: ImageChannels { resolution: grid.resolution(), red, green, blue: None },
        absolute: AbsoluteFeatures {
            min_a: e.min_val,
            max_a: e.max_val,
            min_gamma: grid.gamma_min(),
            max_gamma: grid.gamma_max(),
            order: order as f64,
            block_order: grid.block_order() as f64,
        },
    })
}

/// Conventional three-channel image without absolute values.
pub fn extract_rgb_baseline(
    matrix: &CsrMatrix,
    resolution: usize,
    stats: DatasetOrderStats,
) -> Result<ImageChannels> {
    let grid = block_partition(matrix, resolution)?;
    let red = red_channel(&grid)?;
    let green = green_channel(&grid);
    let blue = vec![blue_channel(matrix.order(), stats); resolution * resolution];
    Ok(ImageChannels { resolution, red, green, blue: Some(blue) })
}

/// Signed log compression `sign(x) ln(1 + |x|)` applied before standardization.
pub fn signed_log(x: f64) -> f64 {
    let y = math::ln_1p(x.abs());
    if x < 0.0 {
        -y
    } else {
        y
    }
}

/// A feature record as stored on disk and fed to the selector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum FeatureBundle {
    Raf(RafFeatures),
    Baseline(ImageChannels),
}

const BUNDLE_MAGIC: &[u8; 4] = b"RAFB";
pub const BUNDLE_VERSION: u32 = 1;

impl FeatureBundle {
    pub fn channels(&self) -> &ImageChannels {
        match self {
            FeatureBundle::Raf(f) => &f.channels,
            FeatureBundle::Baseline(c) => c,
        }
    }

    pub fn absolute(&self) -> Option<&AbsoluteFeatures> {
        match self {
            FeatureBundle::Raf(f) => Some(&f.absolute),
            FeatureBundle::Baseline(_) => None,
        }
    }

    pub fn resolution(&self) -> usize {
        self.channels().resolution
    }

    pub fn is_baseline(&self) -> bool {
        matches!(self, FeatureBundle::Baseline(_))
    }

    /// Little-endian record: magic `RAFB`, u32 version, u8 mode (0 fused,
    /// 1 baseline), three zero bytes, u32 `m`, the channel planes (red,
    /// green, then blue in baseline mode; `m*m` bytes each, row-major) and,
    /// for fused records only, six f64 absolute values.
    pub fn to_bytes(&self) -> Vec<u8> {
        let ch = self.channels();
        let m = ch.resolution;
        let planes = ch.planes();
        let mut out = Vec::with_capacity(16 + planes.len() * m * m + 48);
        out.extend_from_slice(BUNDLE_MAGIC);
        out.extend_from_slice(&BUNDLE_VERSION.to_le_bytes());
        out.push(u8::from(self.is_baseline()));
        out.extend_from_slice(&[0, 0, 0]);
        out.extend_from_slice(&(m as u32).to_le_bytes());
        for p in planes {
            out.extend_from_slice(p);
        }
        if let Some(abs) = self.absolute() {
            for v in abs.to_array() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let short = || Error::FormatError("feature record truncated".into());
        if bytes.len() < 16 {
            return Err(short());
        }
        if &bytes[..4] != BUNDLE_MAGIC {
            return Err(Error::FormatError("bad feature record magic".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != BUNDLE_VERSION {
            return Err(Error::VersionError { found: version, expected: BUNDLE_VERSION });
        }
        let baseline = match bytes[8] {
            0 => false,
            1 => true,
            other => return Err(Error::FormatError(format!("unknown feature mode {other}"))),
        };
        let m = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
        let n_planes = if baseline { 3 } else { 2 };
        let plane = m.checked_mul(m).ok_or_else(short)?;
        let expected = plane
            .checked_mul(n_planes)
            .and_then(|b| b.checked_add(16 + if baseline { 0 } else { 48 }))
            .ok_or_else(short)?;
        if bytes.len() < expected {
            return Err(short());
        }
        if bytes.len() > expected {
            return Err(Error::FormatError("trailing bytes after feature record".into()));
        }
        let body = &bytes[16..];
        let red = body[..plane].to_vec();
        let green = body[plane..2 * plane].to_vec();
        if baseline {
            let blue = body[2 * plane..3 * plane].to_vec();
            return Ok(FeatureBundle::Baseline(ImageChannels {
                resolution: m,
                red,
                green,
                blue: Some(blue),
            }));
        }
        let mut abs = [0.0; ABSOLUTE_COUNT];
        for (i, chunk) in body[2 * plane..].chunks_exact(8).enumerate() {
            abs[i] = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        }
        Ok(FeatureBundle::Raf(RafFeatures {
            channels: ImageChannels { resolution: m, red, green, blue: None },
            absolute: AbsoluteFeatures::from_array(abs),
        }))
    }
}
