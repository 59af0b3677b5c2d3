//! Five-point finite-difference matrices on a rectangular interior grid and
//! the sampling/rebalancing used to assemble labeled corpora.
//!
//! Nodes are numbered lexicographically, `k = ix + nx * iy`. All stencils are
//! scaled by `h^2`, so coefficients are dimensionless.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PdeFamily {
    Poisson,
    Anisotropic,
    ConvectionDiffusion,
}

impl PdeFamily {
    pub const ALL: [PdeFamily; 3] =
        [PdeFamily::Poisson, PdeFamily::Anisotropic, PdeFamily::ConvectionDiffusion];

    pub fn as_str(self) -> &'static str {
        match self {
            PdeFamily::Poisson => "poisson",
            PdeFamily::Anisotropic => "anisotropic",
            PdeFamily::ConvectionDiffusion => "convection_diffusion",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "poisson" => Ok(PdeFamily::Poisson),
            "anisotropic" => Ok(PdeFamily::Anisotropic),
            "convection_diffusion" | "convdiff" => Ok(PdeFamily::ConvectionDiffusion),
            other => Err(Error::SpecError(format!("unknown PDE family '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdeCoeffs {
    /// y-coupling relative to x-coupling.
    pub anisotropy: f64,
    /// Mesh-scaled convection `h * (cx, cy)`.
    pub convection: [f64; 2],
    pub diffusion: f64,
}

impl Default for PdeCoeffs {
    fn default() -> Self {
        Self { anisotropy: 1.0, convection: [0.0, 0.0], diffusion: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdeSpec {
    pub family: PdeFamily,
    pub nx: usize,
    pub ny: usize,
    pub coeffs: PdeCoeffs,
    pub seed: u64,
}

impl PdeSpec {
    pub fn order(&self) -> usize {
        self.nx * self.ny
    }
}

/// Coupling coefficients `(center, west, east, south, north)` as written in
/// each row; neighbor entries are stored with their sign.
type Stencil = [f64; 5];

fn assemble(nx: usize, ny: usize, stencil: Stencil) -> Result<CsrMatrix> {
    if nx == 0 || ny == 0 {
        return Err(Error::SpecError(format!("grid {nx} x {ny} must be at least 1 x 1")));
    }
    let n = nx
        .checked_mul(ny)
        .filter(|&n| n <= u32::MAX as usize)
        .ok_or_else(|| Error::SpecError(format!("grid {nx} x {ny} overflows the order bound")))?;
    let [c, w, e, s, north] = stencil;
    let mut offsets = Vec::with_capacity(n + 1);
    let mut cols = Vec::with_capacity(5 * n);
    let mut vals = Vec::with_capacity(5 * n);
    offsets.push(0);
    for iy in 0..ny {
        for ix in 0..nx {
            let k = ix + nx * iy;
            let mut push = |col: usize, v: f64| {
                if v != 0.0 {
                    cols.push(col);
                    vals.push(v);
                }
            };
            if iy > 0 {
                push(k - nx, s);
            }
            if ix > 0 {
                push(k - 1, w);
            }
            push(k, c);
            if ix + 1 < nx {
                push(k + 1, e);
            }
            if iy + 1 < ny {
                push(k + nx, north);
            }
            offsets.push(vals.len());
        }
    }
    CsrMatrix::new(n, offsets, cols, vals)
}

/// Standard 5-point Laplacian: 4 on the diagonal, -1 to each neighbor.
pub fn generate_poisson2d(nx: usize, ny: usize) -> Result<CsrMatrix> {
    assemble(nx, ny, [4.0, -1.0, -1.0, -1.0, -1.0])
}

fn check_coeffs(spec: &PdeSpec) -> Result<()> {
    let c = &spec.coeffs;
    let finite = c.anisotropy.is_finite()
        && c.diffusion.is_finite()
        && c.convection.iter().all(|v| v.is_finite());
    if !finite {
        return Err(Error::SpecError("coefficients must be finite".into()));
    }
    if c.anisotropy <= 0.0 {
        return Err(Error::SpecError(format!("anisotropy {} must be positive", c.anisotropy)));
    }
    if c.diffusion <= 0.0 {
        return Err(Error::SpecError(format!("diffusion {} must be positive", c.diffusion)));
    }
    Ok(())
}

/// x-coupling 1, y-coupling `anisotropy`.
pub fn generate_anisotropic(spec: &PdeSpec) -> Result<CsrMatrix> {
    check_coeffs(spec)?;
    let eps = spec.coeffs.anisotropy;
    assemble(spec.nx, spec.ny, [2.0 + 2.0 * eps, -1.0, -1.0, -eps, -eps])
}

/// Diffusion plus first-order upwind convection.
///
/// With mesh convection `(cx, cy)` the upstream neighbor gains `-|c|` and
/// the diagonal gains `|cx| + |cy|`; with zero convection the matrix is the
/// Laplacian scaled by the diffusion coefficient.
pub fn generate_convection_diffusion(spec: &PdeSpec) -> Result<CsrMatrix> {
    check_coeffs(spec)?;
    let k = spec.coeffs.diffusion;
    let [cx, cy] = spec.coeffs.convection;
    let center = 4.0 * k + cx.abs() + cy.abs();
    let west = -k - cx.max(0.0);
    let east = -k - (-cx).max(0.0);
    let south = -k - cy.max(0.0);
    let north = -k - (-cy).max(0.0);
    assemble(spec.nx, spec.ny, [center, west, east, south, north])
}

pub fn generate(spec: &PdeSpec) -> Result<CsrMatrix> {
    match spec.family {
        PdeFamily::Poisson => generate_poisson2d(spec.nx, spec.ny),
        PdeFamily::Anisotropic => generate_anisotropic(spec),
        PdeFamily::ConvectionDiffusion => generate_convection_diffusion(spec),
    }
}

/// Parameter ranges for corpus sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationRanges {
    pub families: Vec<PdeFamily>,
    pub min_order: usize,
    pub max_order: usize,
    /// Log-uniform range of the anisotropy ratio.
    pub anisotropy: [f64; 2],
    /// Log-uniform range of the mesh Peclet number `h |c| / diffusion`.
    pub peclet: [f64; 2],
    /// Log-uniform range of the diffusion coefficient.
    pub diffusion: [f64; 2],
}

impl Default for GenerationRanges {
    fn default() -> Self {
        Self {
            families: PdeFamily::ALL.to_vec(),
            min_order: 1000,
            max_order: 4000,
            anisotropy: [1e-3, 1.0],
            peclet: [1e-2, 1e2],
            diffusion: [1.0, 1.0],
        }
    }
}

/// Corpus matrices must fall in this order range.
pub const CORPUS_ORDER_BOUNDS: (usize, usize) = (1000, 10000);

impl GenerationRanges {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = CORPUS_ORDER_BOUNDS;
        if self.families.is_empty() {
            return Err(Error::SpecError("no PDE families selected".into()));
        }
        if self.min_order < lo || self.max_order > hi || self.min_order > self.max_order {
            return Err(Error::SpecError(format!(
                "order range [{}, {}] must lie within [{lo}, {hi}]",
                self.min_order, self.max_order
            )));
        }
        for (name, [a, b]) in
            [("anisotropy", self.anisotropy), ("peclet", self.peclet), ("diffusion", self.diffusion)]
        {
            if !(a > 0.0 && a <= b && b.is_finite()) {
                return Err(Error::SpecError(format!("{name} range [{a}, {b}] is invalid")));
            }
        }
        Ok(())
    }
}

fn log_uniform<R: Rng>(rng: &mut R, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        return lo;
    }
    math::exp(rng.random_range(math::ln(lo)..math::ln(hi)))
}

/// Draws one spec. The grid is near-square with `nx * ny` inside the order
/// range.
pub fn sample_spec<R: Rng>(rng: &mut R, ranges: &GenerationRanges) -> Result<PdeSpec> {
    ranges.validate()?;
    let family = ranges.families[rng.random_range(0..ranges.families.len())];
    let (nx, ny) = loop {
        let target = rng.random_range(ranges.min_order..=ranges.max_order) as f64;
        let aspect = rng.random_range(0.5f64..2.0);
        let nx = math::floor(math::sqrt(target * aspect)).max(1.0) as usize;
        let ny = ((target / nx as f64) as usize).max(1);
        let n = nx * ny;
        if (ranges.min_order..=ranges.max_order).contains(&n) {
            break (nx, ny);
        }
    };
    let mut coeffs = PdeCoeffs { diffusion: log_uniform(rng, ranges.diffusion), ..PdeCoeffs::default() };
    match family {
        PdeFamily::Poisson => coeffs.diffusion = 1.0,
        PdeFamily::Anisotropic => {
            coeffs.diffusion = 1.0;
            coeffs.anisotropy = log_uniform(rng, ranges.anisotropy);
        }
        PdeFamily::ConvectionDiffusion => {
            let pe = log_uniform(rng, ranges.peclet);
            let angle = rng.random_range(0.0..core::f64::consts::TAU);
            let speed = pe * coeffs.diffusion;
            coeffs.convection = [speed * libm::cos(angle), speed * libm::sin(angle)];
        }
    }
    Ok(PdeSpec { family, nx, ny, coeffs, seed: rng.random() })
}

/// Draws `count` specs from a seeded generator.
pub fn sample_specs(count: usize, ranges: &GenerationRanges, seed: u64) -> Result<Vec<PdeSpec>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| sample_spec(&mut rng, ranges)).collect()
}

/// Count of entries per class.
pub fn class_histogram<I: IntoIterator<Item = usize>>(labels: I) -> BTreeMap<usize, usize> {
    let mut h = BTreeMap::new();
    for l in labels {
        *h.entry(l).or_insert(0) += 1;
    }
    h
}

/// Largest over smallest nonzero class count.
pub fn class_ratio(histogram: &BTreeMap<usize, usize>) -> Option<f64> {
    let min = histogram.values().copied().filter(|&c| c > 0).min()?;
    let max = histogram.values().copied().max()?;
    Some(max as f64 / min as f64)
}

/// Downsamples dominant classes so no class exceeds `max_ratio` times the
/// smallest class. Returns kept positions in their original order.
pub fn rebalance(labels: &[usize], max_ratio: f64, seed: u64) -> Result<Vec<usize>> {
    if !(max_ratio >= 1.0) {
        return Err(Error::ConfigError(format!("balance ratio {max_ratio} must be at least 1")));
    }
    let histogram = class_histogram(labels.iter().copied());
    let Some(&min) = histogram.values().min() else {
        return Ok(Vec::new());
    };
    let cap = math::floor(max_ratio * min as f64) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = alloc::vec![false; labels.len()];
    for (&class, &count) in &histogram {
        let mut members: Vec<usize> =
            labels.iter().enumerate().filter(|(_, &l)| l == class).map(|(i, _)| i).collect();
        if count > cap {
            members.shuffle(&mut rng);
            members.truncate(cap);
        }
        for i in members {
            keep[i] = true;
        }
    }
    Ok(keep.iter().enumerate().filter(|(_, &k)| k).map(|(i, _)| i).collect())
}
