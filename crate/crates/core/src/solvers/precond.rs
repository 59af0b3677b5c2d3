//! Preconditioners as operators `z = M^-1 r`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{PreconditionerKind, SolveConfig};
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// A factored preconditioner ready to apply.
#[derive(Debug, Clone)]
pub enum Preconditioner<'a> {
    Identity,
    /// `M = D / omega`; stores `omega / d_i`.
    Jacobi { scaled_inv_diag: Vec<f64> },
    /// LU factors of consecutive diagonal blocks.
    BlockJacobi { blocks: Vec<DenseLu> },
    /// `M = omega/(2-omega) (D/omega + L) D^-1 (D/omega + U)`.
    Ssor { matrix: &'a CsrMatrix, diag: Vec<f64>, diag_pos: Vec<usize>, omega: f64 },
    /// Unit lower L and upper U sharing the pattern of A, stored in one CSR.
    Ilu0 { factors: CsrMatrix, diag_pos: Vec<usize> },
}

fn diagonal_positions(a: &CsrMatrix) -> Result<Vec<usize>> {
    a.diagonal_positions()
        .into_iter()
        .enumerate()
        .map(|(row, pos)| match pos {
            Some(p) if a.values()[p] != 0.0 => Ok(p),
            _ => Err(Error::Breakdown(format!("zero diagonal in row {row}"))),
        })
        .collect()
}

pub fn build_preconditioner<'a>(
    a: &'a CsrMatrix,
    kind: PreconditionerKind,
    cfg: &SolveConfig,
) -> Result<Preconditioner<'a>> {
    match kind {
        PreconditionerKind::None => Ok(Preconditioner::Identity),
        PreconditionerKind::Jacobi => {
            let pos = diagonal_positions(a)?;
            Ok(Preconditioner::Jacobi {
                scaled_inv_diag: pos.iter().map(|&p| cfg.omega / a.values()[p]).collect(),
            })
        }
        PreconditionerKind::BlockJacobi => {
            let n = a.order();
            let mut blocks = Vec::with_capacity(n.div_ceil(cfg.block_size));
            let mut start = 0;
            while start < n {
                let end = (start + cfg.block_size).min(n);
                blocks.push(DenseLu::factor_block(a, start, end)?);
                start = end;
            }
            Ok(Preconditioner::BlockJacobi { blocks })
        }
        PreconditionerKind::Ssor => {
            let diag_pos = diagonal_positions(a)?;
            let diag = diag_pos.iter().map(|&p| a.values()[p]).collect();
            Ok(Preconditioner::Ssor { matrix: a, diag, diag_pos, omega: cfg.omega })
        }
        PreconditionerKind::Ilu0 => ilu0(a),
    }
}

impl Preconditioner<'_> {
    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        match self {
            Preconditioner::Identity => z.copy_from_slice(r),
            Preconditioner::Jacobi { scaled_inv_diag } => {
                for ((zi, ri), s) in z.iter_mut().zip(r).zip(scaled_inv_diag) {
                    *zi = ri * s;
                }
            }
            Preconditioner::BlockJacobi { blocks } => {
                for lu in blocks {
                    let range = lu.start..lu.start + lu.size;
                    z[range.clone()].copy_from_slice(&r[range.clone()]);
                    lu.solve_in_place(&mut z[range]);
                }
            }
            Preconditioner::Ssor { matrix, diag, diag_pos, omega } => {
                ssor_apply(matrix, diag, diag_pos, *omega, r, z)
            }
            Preconditioner::Ilu0 { factors, diag_pos } => ilu0_apply(factors, diag_pos, r, z),
        }
    }
}

fn ssor_apply(
    a: &CsrMatrix,
    diag: &[f64],
    diag_pos: &[usize],
    omega: f64,
    r: &[f64],
    z: &mut [f64],
) {
    let n = a.order();
    let (offsets, cols, vals) = (a.row_offsets(), a.col_indices(), a.values());
    // (D/omega + L) y = r
    for i in 0..n {
        let mut acc = r[i];
        for k in offsets[i]..diag_pos[i] {
            acc -= vals[k] * z[cols[k]];
        }
        z[i] = acc * omega / diag[i];
    }
    for i in 0..n {
        z[i] *= diag[i];
    }
    // (D/omega + U) z = D y
    for i in (0..n).rev() {
        let mut acc = z[i];
        for k in diag_pos[i] + 1..offsets[i + 1] {
            acc -= vals[k] * z[cols[k]];
        }
        z[i] = acc * omega / diag[i];
    }
    let scale = (2.0 - omega) / omega;
    for zi in z.iter_mut() {
        *zi *= scale;
    }
}

fn ilu0(a: &CsrMatrix) -> Result<Preconditioner<'static>> {
    let n = a.order();
    let diag_pos: Vec<usize> = a
        .diagonal_positions()
        .into_iter()
        .enumerate()
        .map(|(row, p)| p.ok_or_else(|| Error::Breakdown(format!("structurally zero diagonal in row {row}"))))
        .collect::<Result<_>>()?;
    let offsets = a.row_offsets();
    let cols = a.col_indices();
    let mut vals = a.values().to_vec();
    let mut slot = vec![usize::MAX; n];

    for i in 0..n {
        for k in offsets[i]..offsets[i + 1] {
            slot[cols[k]] = k;
        }
        for kk in offsets[i]..diag_pos[i] {
            let k = cols[kk];
            let pivot = vals[diag_pos[k]];
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(Error::Breakdown(format!("zero pivot in row {k}")));
            }
            let lik = vals[kk] / pivot;
            vals[kk] = lik;
            for kj in diag_pos[k] + 1..offsets[k + 1] {
                let s = slot[cols[kj]];
                if s != usize::MAX {
                    vals[s] -= lik * vals[kj];
                }
            }
        }
        for k in offsets[i]..offsets[i + 1] {
            slot[cols[k]] = usize::MAX;
        }
        let d = vals[diag_pos[i]];
        if d == 0.0 || !d.is_finite() {
            return Err(Error::Breakdown(format!("zero pivot in row {i}")));
        }
    }
    let factors = CsrMatrix::new(n, offsets.to_vec(), cols.to_vec(), vals)?;
    Ok(Preconditioner::Ilu0 { factors, diag_pos })
}

fn ilu0_apply(f: &CsrMatrix, diag_pos: &[usize], r: &[f64], z: &mut [f64]) {
    let n = f.order();
    let (offsets, cols, vals) = (f.row_offsets(), f.col_indices(), f.values());
    for i in 0..n {
        let mut acc = r[i];
        for k in offsets[i]..diag_pos[i] {
            acc -= vals[k] * z[cols[k]];
        }
        z[i] = acc;
    }
    for i in (0..n).rev() {
        let mut acc = z[i];
        for k in diag_pos[i] + 1..offsets[i + 1] {
            acc -= vals[k] * z[cols[k]];
        }
        z[i] = acc / vals[diag_pos[i]];
    }
}

/// Dense LU with partial pivoting of one diagonal block.
#[derive(Debug, Clone)]
pub struct DenseLu {
    start: usize,
    size: usize,
    lu: Vec<f64>,
    pivots: Vec<usize>,
}

impl DenseLu {
    fn factor_block(a: &CsrMatrix, start: usize, end: usize) -> Result<Self> {
        let size = end - start;
        let mut lu = vec![0.0; size * size];
        for r in start..end {
            let (cols, vals) = a.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                if (start..end).contains(&c) {
                    lu[(r - start) * size + (c - start)] = v;
                }
            }
        }
        let mut pivots = vec![0; size];
        for k in 0..size {
            let p = (k..size)
                .max_by(|&i, &j| lu[i * size + k].abs().total_cmp(&lu[j * size + k].abs()))
                .expect("non-empty pivot range");
            if lu[p * size + k] == 0.0 {
                return Err(Error::Breakdown(format!("singular diagonal block at row {start}")));
            }
            pivots[k] = p;
            if p != k {
                for c in 0..size {
                    lu.swap(k * size + c, p * size + c);
                }
            }
            let pivot = lu[k * size + k];
            for i in k + 1..size {
                let l = lu[i * size + k] / pivot;
                lu[i * size + k] = l;
                for c in k + 1..size {
                    lu[i * size + c] -= l * lu[k * size + c];
                }
            }
        }
        Ok(Self { start, size, lu, pivots })
    }

    fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.size;
        for k in 0..n {
            x.swap(k, self.pivots[k]);
        }
        for i in 0..n {
            let mut acc = x[i];
            for c in 0..i {
                acc -= self.lu[i * n + c] * x[c];
            }
            x[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for c in i + 1..n {
                acc -= self.lu[i * n + c] * x[c];
            }
            x[i] = acc / self.lu[i * n + i];
        }
    }
}
