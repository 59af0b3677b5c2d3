use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Square matrix in compressed sparse row form.
///
/// Column indices are strictly increasing within each row. Explicit zeros may
/// be stored; [`CsrMatrix::canonicalize`] drops them, and every feature
/// computation skips them.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    order: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from raw CSR arrays, validating every structural invariant.
    pub fn new(
        order: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidStructure("order must be positive".into()));
        }
        if row_offsets.len() != order + 1 {
            return Err(Error::InvalidStructure(format!(
                "row_offsets has length {}, expected {}",
                row_offsets.len(),
                order + 1
            )));
        }
        if row_offsets[0] != 0 {
            return Err(Error::InvalidStructure("row_offsets[0] must be 0".into()));
        }
        if col_indices.len() != values.len() || row_offsets[order] != values.len() {
            return Err(Error::InvalidStructure(
                "row_offsets[order], col_indices and values disagree on entry count".into(),
            ));
        }
        for row in 0..order {
            let (start, end) = (row_offsets[row], row_offsets[row + 1]);
            if start > end {
                return Err(Error::InvalidStructure(format!("row_offsets decrease at row {row}")));
            }
            let cols = &col_indices[start..end];
            if cols.iter().any(|&c| c >= order) {
                return Err(Error::InvalidStructure(format!("column out of range in row {row}")));
            }
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidStructure(format!(
                    "columns not strictly increasing in row {row}"
                )));
            }
        }
        Ok(Self { order, row_offsets, col_indices, values })
    }

    /// Builds a matrix from `(row, col, value)` triplets in any order.
    /// Duplicate coordinates are summed.
    pub fn from_triplets<I>(order: usize, triplets: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut entries: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        if let Some(&(r, c, _)) = entries.iter().find(|&&(r, c, _)| r >= order || c >= order) {
            return Err(Error::InvalidStructure(format!(
                "entry ({r}, {c}) outside a {order} x {order} matrix"
            )));
        }
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

        let mut row_offsets = vec![0usize; order + 1];
        let mut col_indices = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            if last == Some((r, c)) {
                *values.last_mut().expect("duplicate follows an entry") += v;
                continue;
            }
            last = Some((r, c));
            row_offsets[r + 1] += 1;
            col_indices.push(c);
            values.push(v);
        }
        for row in 0..order {
            row_offsets[row + 1] += row_offsets[row];
        }
        Self::new(order, row_offsets, col_indices, values)
    }

    pub fn identity(order: usize) -> Self {
        Self::diagonal_matrix(&vec![1.0; order])
    }

    pub fn diagonal_matrix(diag: &[f64]) -> Self {
        let order = diag.len();
        Self {
            order,
            row_offsets: (0..=order).collect(),
            col_indices: (0..order).collect(),
            values: diag.to_vec(),
        }
    }

    /// Dense row-major input; zeros are not stored.
    pub fn from_dense(order: usize, dense: &[f64]) -> Result<Self> {
        if dense.len() != order * order {
            return Err(Error::DimensionError { expected: order * order, got: dense.len() });
        }
        Self::from_triplets(
            order,
            dense
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(k, v)| (k / order, k % order, *v)),
        )
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.order;
        let mut dense = vec![0.0; n * n];
        for (r, c, v) in self.iter() {
            dense[r * n + c] = v;
        }
        dense
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of stored entries, explicit zeros included.
    #[inline]
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    #[inline]
    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of one row.
    #[inline]
    pub fn row(&self, row: usize) -> (&[usize], &[f64]) {
        let range = self.row_offsets[row]..self.row_offsets[row + 1];
        (&self.col_indices[range.clone()], &self.values[range])
    }

    /// Iterates stored entries as `(row, col, value)` in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.order).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let (cols, vals) = self.row(row);
        cols.binary_search(&col).map(|k| vals[k]).unwrap_or(0.0)
    }

    /// Returns a copy without explicitly stored zeros.
    pub fn canonicalize(&self) -> Self {
        let mut row_offsets = Vec::with_capacity(self.order + 1);
        let mut col_indices = Vec::with_capacity(self.nnz());
        let mut values = Vec::with_capacity(self.nnz());
        row_offsets.push(0);
        for r in 0..self.order {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                if v != 0.0 {
                    col_indices.push(c);
                    values.push(v);
                }
            }
            row_offsets.push(values.len());
        }
        Self { order: self.order, row_offsets, col_indices, values }
    }

    /// Count of stored entries whose value is not zero.
    pub fn nonzero_count(&self) -> usize {
        self.values.iter().filter(|v| **v != 0.0).count()
    }

    /// Adds `shift` to every stored value; the pattern is unchanged.
    pub fn shifted(&self, shift: f64) -> Self {
        let mut out = self.clone();
        for v in &mut out.values {
            *v += shift;
        }
        out
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= factor;
        }
        out
    }

    /// Diagonal values, zero where no diagonal entry is stored.
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.order).map(|r| self.get(r, r)).collect()
    }

    /// Position of the diagonal entry of each row inside `values`.
    pub fn diagonal_positions(&self) -> Vec<Option<usize>> {
        (0..self.order)
            .map(|r| {
                let (cols, _) = self.row(r);
                cols.binary_search(&r).ok().map(|k| self.row_offsets[r] + k)
            })
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let n = self.order;
        let mut counts = vec![0usize; n + 1];
        for &c in &self.col_indices {
            counts[c + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let row_offsets = counts.clone();
        let mut next = counts;
        let mut col_indices = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for (r, c, v) in self.iter() {
            let slot = next[c];
            col_indices[slot] = r;
            values[slot] = v;
            next[c] += 1;
        }
        Self { order: n, row_offsets, col_indices, values }
    }

    /// Same pattern and values as the transpose.
    pub fn is_symmetric(&self) -> bool {
        let t = self.canonicalize().transpose();
        t == self.canonicalize()
    }

    /// Same pattern as the transpose, values ignored.
    pub fn is_structurally_symmetric(&self) -> bool {
        let t = self.transpose();
        t.row_offsets == self.row_offsets && t.col_indices == self.col_indices
    }

    /// `y = A x`
    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.order {
            return Err(Error::DimensionError { expected: self.order, got: x.len() });
        }
        let mut y = vec![0.0; self.order];
        self.spmv_into(x, &mut y);
        Ok(y)
    }

    /// `y = A x` without length checks beyond debug assertions.
    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.order);
        debug_assert_eq!(y.len(), self.order);
        for (r, yr) in y.iter_mut().enumerate() {
            let (start, end) = (self.row_offsets[r], self.row_offsets[r + 1]);
            let mut acc = 0.0;
            for k in start..end {
                acc += self.values[k] * x[self.col_indices[k]];
            }
            *yr = acc;
        }
    }

    /// `r = b - A x`
    pub fn residual_into(&self, b: &[f64], x: &[f64], r: &mut [f64]) {
        self.spmv_into(x, r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
    }
}
