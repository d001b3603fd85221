//! Matrix products and selection primitives.
//!
//! Every product accumulates each output element in ascending order of the
//! contracted index, starting from +0.0, and each output row is owned by one
//! task. Results are therefore bit-identical for any rayon thread count.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ndcore::{Mask, Matrix, Scalar};

/// Rows per rayon task. Small inputs stay on the calling thread.
const ROW_CHUNK: usize = 16;

pub fn matmul<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    if a.cols() != b.rows() {
        return Err(Error::shape(format!(
            "matmul {}x{} by {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let (k, n) = (a.cols(), b.cols());
    let mut out = Matrix::zeros(a.rows(), n);
    if n == 0 {
        return Ok(out);
    }
    let bs = b.as_slice();
    out.as_mut_slice()
        .par_chunks_mut(n * ROW_CHUNK)
        .enumerate()
        .for_each(|(chunk, rows)| {
            for (off, orow) in rows.chunks_mut(n).enumerate() {
                let arow = a.row(chunk * ROW_CHUNK + off);
                for p in 0..k {
                    let av = arow[p];
                    let brow = &bs[p * n..(p + 1) * n];
                    for (o, &bv) in orow.iter_mut().zip(brow) {
                        *o = *o + av * bv;
                    }
                }
            }
        });
    Ok(out)
}

/// `a · (w ⊙ m)` through the dense grid.
pub fn masked_matmul<T: Scalar>(a: &Matrix<T>, w: &Matrix<T>, m: &Mask) -> Result<Matrix<T>> {
    if w.shape() != m.shape() {
        return Err(Error::shape(format!(
            "weights {:?} vs mask {:?}",
            w.shape(),
            m.shape()
        )));
    }
    let mut masked = w.clone();
    for (v, &on) in masked.as_mut_slice().iter_mut().zip(m.bits()) {
        if !on {
            *v = T::zero();
        }
    }
    matmul(a, &masked)
}

/// Compressed-row sparsity pattern of a mask. Values stay in the dense grid
/// and are addressed through the flat index `row * cols + col`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Csr {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
}

impl Csr {
    pub fn from_mask(m: &Mask) -> Self {
        let (rows, cols) = m.shape();
        let mut row_ptr = Vec::with_capacity(rows + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for r in 0..rows {
            for c in 0..cols {
                if m.get(r, c) {
                    col_idx.push(c as u32);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Csr {
            rows,
            cols,
            row_ptr,
            col_idx,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    #[inline]
    pub fn row_cols(&self, r: usize) -> &[u32] {
        &self.col_idx[self.row_ptr[r]..self.row_ptr[r + 1]]
    }
}

/// Batch rows per task in the compressed-row products.
const BATCH_BLOCK: usize = 64;

/// Rows `[start, start + len)` of `a`, transposed into a `cols × len` buffer.
fn block_transpose<T: Scalar>(a: &Matrix<T>, start: usize, len: usize) -> Vec<T> {
    let k = a.cols();
    let mut out = vec![T::zero(); k * len];
    for b in 0..len {
        for (p, &v) in a.row(start + b).iter().enumerate() {
            out[p * len + b] = v;
        }
    }
    out
}

/// Applies `kernel(start, len, block_out)` to disjoint batch blocks of the
/// `rows × width` output. Each block is computed transposed (`width × len`)
/// so the inner loops run over the batch, then copied back row-major.
fn batch_blocks<T: Scalar>(
    rows: usize,
    width: usize,
    kernel: impl Fn(usize, usize, &mut [T]) + Sync,
) -> Matrix<T> {
    let mut out = Matrix::zeros(rows, width);
    if width == 0 {
        return out;
    }
    out.as_mut_slice()
        .par_chunks_mut(width * BATCH_BLOCK)
        .enumerate()
        .for_each(|(blk, dst)| {
            let start = blk * BATCH_BLOCK;
            let len = dst.len() / width;
            let mut tmp = vec![T::zero(); width * len];
            kernel(start, len, &mut tmp);
            for (b, row) in dst.chunks_mut(width).enumerate() {
                for (j, o) in row.iter_mut().enumerate() {
                    *o = tmp[j * len + b];
                }
            }
        });
    out
}

/// `a · (w ⊙ m)` through the compressed-row pattern of `m`. Bit-identical to
/// [`masked_matmul`]: each output still sums its terms in ascending input
/// index, only the loop nest is reordered.
pub fn masked_matmul_csr<T: Scalar>(a: &Matrix<T>, w: &Matrix<T>, csr: &Csr) -> Result<Matrix<T>> {
    if w.shape() != csr.shape() || a.cols() != w.rows() {
        return Err(Error::shape(format!(
            "csr matmul {:?} by {:?} (pattern {:?})",
            a.shape(),
            w.shape(),
            csr.shape()
        )));
    }
    let (k, n) = w.shape();
    let ws = w.as_slice();
    Ok(batch_blocks(a.rows(), n, |start, len, out| {
        let at = block_transpose(a, start, len);
        for p in 0..k {
            let acol = &at[p * len..(p + 1) * len];
            let base = p * n;
            for &c in csr.row_cols(p) {
                let wv = ws[base + c as usize];
                let orow = &mut out[c as usize * len..(c as usize + 1) * len];
                for (o, &av) in orow.iter_mut().zip(acol) {
                    // a zero term cannot change an accumulator that started at +0.0
                    *o = *o + av * wv;
                }
            }
        }
    }))
}

/// `d · (w ⊙ m)ᵀ` through the compressed-row pattern: out[b][r] = Σ_c d[b][c]·w[r][c].
pub fn csr_matmul_transposed<T: Scalar>(
    d: &Matrix<T>,
    w: &Matrix<T>,
    csr: &Csr,
) -> Result<Matrix<T>> {
    if w.shape() != csr.shape() || d.cols() != w.cols() {
        return Err(Error::shape(format!(
            "transposed csr matmul {:?} by {:?}ᵀ",
            d.shape(),
            w.shape()
        )));
    }
    let (k, n) = w.shape();
    let ws = w.as_slice();
    Ok(batch_blocks(d.rows(), k, |start, len, out| {
        let dt = block_transpose(d, start, len);
        for r in 0..k {
            let orow = &mut out[r * len..(r + 1) * len];
            let base = r * n;
            for &c in csr.row_cols(r) {
                let wv = ws[base + c as usize];
                let dcol = &dt[c as usize * len..(c as usize + 1) * len];
                for (o, &dv) in orow.iter_mut().zip(dcol) {
                    *o = *o + dv * wv;
                }
            }
        }
    }))
}

/// `aᵀ · d`, accumulating over the shared batch dimension in ascending order.
pub fn matmul_tn<T: Scalar>(a: &Matrix<T>, d: &Matrix<T>) -> Result<Matrix<T>> {
    if a.rows() != d.rows() {
        return Err(Error::shape(format!(
            "aᵀ·d with {:?} and {:?}",
            a.shape(),
            d.shape()
        )));
    }
    let at = a.transpose();
    let (k, n) = (a.cols(), d.cols());
    let batch = a.rows();
    let mut out = Matrix::zeros(k, n);
    if n == 0 {
        return Ok(out);
    }
    let ds = d.as_slice();
    out.as_mut_slice()
        .par_chunks_mut(n * ROW_CHUNK)
        .enumerate()
        .for_each(|(chunk, rows)| {
            for (off, orow) in rows.chunks_mut(n).enumerate() {
                let arow = at.row(chunk * ROW_CHUNK + off);
                for b in 0..batch {
                    let av = arow[b];
                    if av == T::zero() {
                        continue;
                    }
                    let drow = &ds[b * n..(b + 1) * n];
                    for (o, &dv) in orow.iter_mut().zip(drow) {
                        *o = *o + av * dv;
                    }
                }
            }
        });
    Ok(out)
}

/// `aᵀ · d` evaluated only at the coordinates of `csr`; zero elsewhere.
/// Active entries are bit-identical to [`matmul_tn`].
pub fn masked_matmul_tn<T: Scalar>(a: &Matrix<T>, d: &Matrix<T>, csr: &Csr) -> Result<Matrix<T>> {
    if a.rows() != d.rows() || csr.shape() != (a.cols(), d.cols()) {
        return Err(Error::shape(format!(
            "masked aᵀ·d with {:?}, {:?}, pattern {:?}",
            a.shape(),
            d.shape(),
            csr.shape()
        )));
    }
    let at = a.transpose();
    let (k, n) = csr.shape();
    let batch = a.rows();
    let ds = d.as_slice();
    let mut out = Matrix::zeros(k, n);
    if n == 0 {
        return Ok(out);
    }
    out.as_mut_slice()
        .par_chunks_mut(n * ROW_CHUNK)
        .enumerate()
        .for_each(|(chunk, rows)| {
            let mut acc = Vec::new();
            for (off, orow) in rows.chunks_mut(n).enumerate() {
                let r = chunk * ROW_CHUNK + off;
                let cols = csr.row_cols(r);
                if cols.is_empty() {
                    continue;
                }
                acc.clear();
                acc.resize(cols.len(), T::zero());
                let arow = at.row(r);
                for b in 0..batch {
                    let av = arow[b];
                    if av == T::zero() {
                        continue;
                    }
                    let drow = &ds[b * n..(b + 1) * n];
                    for (s, &c) in acc.iter_mut().zip(cols) {
                        *s = *s + av * drow[c as usize];
                    }
                }
                for (&s, &c) in acc.iter().zip(cols) {
                    orow[c as usize] = s;
                }
            }
        });
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    Largest,
    Smallest,
}

/// The `k` coordinates with the largest (or smallest) absolute values.
///
/// Ties are broken by ascending coordinate, so the result does not depend on
/// input order. The returned coordinates are sorted ascending.
pub fn topk_abs<C: Copy + Ord, T: Scalar>(values: &[(C, T)], k: usize, order: Order) -> Result<Vec<C>> {
    if k > values.len() {
        return Err(Error::Bounds(format!(
            "top-{k} of {} values",
            values.len()
        )));
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    let cmp = |x: &(C, T), y: &(C, T)| -> Ordering {
        let by_mag = x.1.abs().partial_cmp(&y.1.abs()).unwrap_or(Ordering::Equal);
        let by_mag = match order {
            Order::Smallest => by_mag,
            Order::Largest => by_mag.reverse(),
        };
        by_mag.then_with(|| x.0.cmp(&y.0))
    };
    let mut items = values.to_vec();
    if k < items.len() {
        items.select_nth_unstable_by(k - 1, cmp);
        items.truncate(k);
    }
    let mut out: Vec<C> = items.into_iter().map(|(c, _)| c).collect();
    out.sort_unstable();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn identity_product() {
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(matmul(&a, &Matrix::identity(2)).unwrap(), a);
    }

    #[test]
    fn unit_column_selects_second_column() {
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let e = m(&[&[0.0], &[1.0]]);
        assert_eq!(matmul(&a, &e).unwrap(), m(&[&[2.0], &[4.0]]));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let a = Matrix::<f64>::zeros(2, 3);
        assert!(matches!(matmul(&a, &a), Err(Error::Shape(_))));
        let w = Matrix::<f64>::zeros(3, 2);
        assert!(masked_matmul(&a, &w, &Mask::full(2, 3)).is_err());
    }

    #[test]
    fn full_and_empty_masks() {
        let a = m(&[&[1.0, -2.0, 0.5]]);
        let w = m(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]);
        assert_eq!(
            masked_matmul(&a, &w, &Mask::full(3, 2)).unwrap(),
            matmul(&a, &w).unwrap()
        );
        assert_eq!(
            masked_matmul(&a, &w, &Mask::empty(3, 2)).unwrap(),
            Matrix::zeros(1, 2)
        );
    }

    #[test]
    fn topk_examples() {
        let v = [('a', 0.5), ('b', -0.2), ('c', 0.05), ('d', -0.9)];
        assert_eq!(topk_abs(&v, 2, Order::Smallest).unwrap(), vec!['b', 'c']);
        assert_eq!(topk_abs(&v, 2, Order::Largest).unwrap(), vec!['a', 'd']);
        assert!(matches!(topk_abs(&v, 5, Order::Largest), Err(Error::Bounds(_))));
    }

    #[test]
    fn topk_ties_follow_coordinates() {
        let v = [(3usize, 1.0), (1, -1.0), (2, 1.0), (0, 2.0)];
        assert_eq!(topk_abs(&v, 2, Order::Smallest).unwrap(), vec![1, 2]);
        assert_eq!(topk_abs(&v, 2, Order::Largest).unwrap(), vec![0, 1]);
    }
}
