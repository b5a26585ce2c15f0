//! Dense/sparse helpers shared by the assembly and inference code.

use std::borrow::Cow;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl Csr {
    /// Keeps every entry that is not exactly `0.0`.
    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let (nrows, ncols) = m.shape();
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for i in 0..nrows {
            for j in 0..ncols {
                let v = m[(i, j)];
                if v != 0.0 {
                    indices.push(j);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        }
    }

    /// Builds from per-row `(column, value)` lists; columns must be sorted.
    pub fn from_rows(nrows: usize, ncols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        debug_assert_eq!(rows.len(), nrows);
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for row in rows {
            for (j, v) in row {
                debug_assert!(j < ncols);
                indices.push(j);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        }
    }

    pub fn identity_scaled(n: usize, scale: f64) -> Self {
        Self::from_rows(n, n, (0..n).map(|i| vec![(i, scale)]).collect())
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.indptr[i]..self.indptr[i + 1];
        match self.indices[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub fn transpose(&self) -> Csr {
        let mut counts = vec![0usize; self.ncols + 1];
        for &j in &self.indices {
            counts[j + 1] += 1;
        }
        for j in 0..self.ncols {
            counts[j + 1] += counts[j];
        }
        let indptr = counts.clone();
        let mut next = counts;
        let mut indices = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                let slot = next[j];
                indices[slot] = i;
                values[slot] = v;
                next[j] += 1;
            }
        }
        Csr {
            nrows: self.ncols,
            ncols: self.nrows,
            indptr,
            indices,
            values,
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.values {
            *v *= factor;
        }
    }

    /// Adds `delta` to every diagonal entry, inserting missing ones.
    pub fn shift_diagonal(&self, delta: f64) -> Csr {
        let n = self.nrows.min(self.ncols);
        let rows = (0..self.nrows)
            .map(|i| {
                let mut row: Vec<(usize, f64)> = self.row(i).collect();
                if i < n {
                    match row.binary_search_by_key(&i, |e| e.0) {
                        Ok(k) => row[k].1 += delta,
                        Err(k) => row.insert(k, (i, delta)),
                    }
                }
                row
            })
            .collect();
        Csr::from_rows(self.nrows, self.ncols, rows)
    }

    /// Largest `|i - j|` over stored entries.
    pub fn bandwidth(&self) -> usize {
        (0..self.nrows)
            .flat_map(|i| self.row(i).map(move |(j, _)| i.abs_diff(j)))
            .max()
            .unwrap_or(0)
    }

    /// `self * x` for a dense right-hand side.
    pub fn mul_dense(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(self.ncols, x.nrows(), "csr * dense shape mismatch");
        let mut out = DMatrix::zeros(self.nrows, x.ncols());
        for c in 0..x.ncols() {
            let xc = x.column(c);
            let mut oc = out.column_mut(c);
            for i in 0..self.nrows {
                let mut acc = 0.0;
                for k in self.indptr[i]..self.indptr[i + 1] {
                    acc += self.values[k] * xc[self.indices[k]];
                }
                oc[i] = acc;
            }
        }
        out
    }

    /// `x * self` for a dense left-hand side.
    pub fn dense_mul(x: &DMatrix<f64>, a: &Csr) -> DMatrix<f64> {
        assert_eq!(x.ncols(), a.nrows, "dense * csr shape mismatch");
        let mut out = DMatrix::zeros(x.nrows(), a.ncols);
        for k in 0..a.nrows {
            let xk = x.column(k);
            for (c, v) in a.row(k) {
                out.column_mut(c).axpy(v, &xk, 1.0);
            }
        }
        out
    }

    /// Sparse product `self * other`; also returns the multiply-add count.
    pub fn matmul(&self, other: &Csr) -> (Csr, u64) {
        assert_eq!(self.ncols, other.nrows, "csr * csr shape mismatch");
        let mut acc = vec![0.0; other.ncols];
        let mut seen = vec![false; other.ncols];
        let mut ops = 0u64;
        let mut rows = Vec::with_capacity(self.nrows);
        for i in 0..self.nrows {
            let mut cols = Vec::new();
            for (k, a) in self.row(i) {
                for (j, b) in other.row(k) {
                    if !seen[j] {
                        seen[j] = true;
                        cols.push(j);
                    }
                    acc[j] += a * b;
                    ops += 1;
                }
            }
            cols.sort_unstable();
            let row = cols
                .into_iter()
                .map(|j| {
                    let v = acc[j];
                    acc[j] = 0.0;
                    seen[j] = false;
                    (j, v)
                })
                .collect();
            rows.push(row);
        }
        (Csr::from_rows(self.nrows, other.ncols, rows), ops)
    }

    pub fn mul_vec(&self, y: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.nrows,
            (0..self.nrows).map(|i| self.row(i).map(|(j, v)| v * y[j]).sum::<f64>()),
        )
    }

    /// `yᵀ A y` touching only stored entries; also returns the count touched.
    pub fn quadratic_form_counted(&self, y: &DVector<f64>) -> Result<(f64, usize)> {
        if self.nrows != self.ncols || y.len() != self.nrows {
            return Err(Error::shape(
                format!("square matrix matching vector of length {}", y.len()),
                format!("{}x{}", self.nrows, self.ncols),
            ));
        }
        let mut total = 0.0;
        for i in 0..self.nrows {
            let mut acc = 0.0;
            for k in self.indptr[i]..self.indptr[i + 1] {
                acc += self.values[k] * y[self.indices[k]];
            }
            total += y[i] * acc;
        }
        Ok((total, self.nnz()))
    }
}

/// Cholesky factor of a symmetric banded matrix.
///
/// Row `i` of the factor stores `L[i][i-bw..=i]` in `bw + 1` slots.
#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    lower: Vec<f64>,
}

impl BandCholesky {
    /// Factors the symmetric matrix given by its stored entries.
    pub fn factor(a: &Csr) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::shape("square banded matrix", format!("{}x{}", n, a.ncols())));
        }
        let bw = a.bandwidth();
        let w = bw + 1;
        let mut lower = vec![0.0; n * w];
        for i in 0..n {
            for (j, v) in a.row(i) {
                if j <= i {
                    lower[i * w + (j + bw - i)] = v;
                }
            }
        }
        for j in 0..n {
            let jlo = j.saturating_sub(bw);
            let mut d = lower[j * w + bw];
            for k in jlo..j {
                let l = lower[j * w + (k + bw - j)];
                d -= l * l;
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::CholeskyFailure(format!("non-positive pivot {d:e} at row {j}")));
            }
            let djj = d.sqrt();
            lower[j * w + bw] = djj;
            let iend = (j + bw).min(n - 1);
            for i in (j + 1)..=iend {
                let ilo = i.saturating_sub(bw).max(jlo);
                let mut s = lower[i * w + (j + bw - i)];
                for k in ilo..j {
                    s -= lower[i * w + (k + bw - i)] * lower[j * w + (k + bw - j)];
                }
                lower[i * w + (j + bw - i)] = s / djj;
            }
        }
        Ok(Self { n, bw, lower })
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    fn l(&self, i: usize, j: usize) -> f64 {
        self.lower[i * (self.bw + 1) + (j + self.bw - i)]
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let (n, bw) = (self.n, self.bw);
        for i in 0..n {
            let mut s = x[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.l(i, k) * x[k];
            }
            x[i] = s / self.l(i, i);
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..=(i + bw).min(n - 1) {
                s -= self.l(k, i) * x[k];
            }
            x[i] = s / self.l(i, i);
        }
    }

    /// Dense inverse, one banded solve per column.
    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.n;
        let mut out = DMatrix::zeros(n, n);
        for c in 0..n {
            let mut col = vec![0.0; n];
            col[c] = 1.0;
            self.solve_in_place(&mut col);
            out.column_mut(c).copy_from_slice(&col);
        }
        symmetrize_in_place(&mut out);
        out
    }

    pub fn logdet(&self) -> f64 {
        2.0 * (0..self.n).map(|i| self.l(i, i).ln()).sum::<f64>()
    }

    pub fn lower_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for j in i.saturating_sub(self.bw)..=i {
                m[(i, j)] = self.l(i, j);
            }
        }
        m
    }
}

/// Lower Cholesky factor with strictly positive finite pivots.
pub fn cholesky_lower(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::shape("square matrix", format!("{}x{}", m.nrows(), m.ncols())));
    }
    let chol = nalgebra::Cholesky::new(m.clone())
        .ok_or_else(|| Error::CholeskyFailure("matrix is not positive definite".into()))?;
    let l = chol.unpack();
    if let Some(i) = (0..l.nrows()).find(|&i| !(l[(i, i)] > 0.0) || !l[(i, i)].is_finite()) {
        return Err(Error::CholeskyFailure(format!("degenerate pivot at row {i}")));
    }
    Ok(l)
}

/// `(inverse, log-determinant)` of an SPD matrix via Cholesky.
pub fn cholesky_inverse(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let l = cholesky_lower(m)?;
    let logdet = 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let chol = nalgebra::Cholesky::pack_dirty(l);
    let mut inv = chol.inverse();
    symmetrize_in_place(&mut inv);
    Ok((inv, logdet))
}

pub fn logdet_spd(m: &DMatrix<f64>) -> Result<f64> {
    let l = cholesky_lower(m)?;
    Ok(2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// Replaces `m` with `(m + mᵀ) / 2`.
pub fn symmetrize_in_place(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows().min(m.ncols());
    let mut worst = 0.0_f64;
    for j in 0..n {
        for i in (j + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Ritz residual bound, relative to the eigenvalue estimate.
const LANCZOS_TOL: f64 = 1e-13;
const LANCZOS_STEPS_PER_DIM: usize = 10;

/// Largest eigenvalue of a symmetric operator by the Lanczos recurrence.
///
/// Runs without reorthogonalization; the top Ritz value comes from Sturm
/// bisection on the tridiagonal and stops on the Ritz residual bound.
pub fn symmetric_max_eigenvalue(dim: usize, mut apply: impl FnMut(&DVector<f64>) -> DVector<f64>) -> f64 {
    if dim == 0 {
        return 0.0;
    }
    // a slightly uneven start avoids being orthogonal to the top eigenvector
    let mut v = DVector::from_fn(dim, |i, _| 1.0 + 0.1 * ((i as f64) * 0.7).sin());
    v /= v.norm();
    let mut prev = DVector::zeros(dim);
    let (mut alpha, mut beta): (Vec<f64>, Vec<f64>) = (Vec::new(), Vec::new());
    let mut theta = 0.0;
    let max_steps = LANCZOS_STEPS_PER_DIM * dim + 20;
    for j in 0..max_steps {
        let mut w = apply(&v);
        let a = w.dot(&v);
        w.axpy(-a, &v, 1.0);
        if j > 0 {
            w.axpy(-beta[j - 1], &prev, 1.0);
        }
        alpha.push(a);
        let b = w.norm();
        theta = tridiagonal_max_eigenvalue(&alpha, &beta);
        let scale = theta.abs().max(f64::MIN_POSITIVE);
        if b <= f64::EPSILON * scale {
            break;
        }
        let last = top_ritz_last_component(&alpha, &beta, theta);
        if b * last <= LANCZOS_TOL * scale {
            break;
        }
        beta.push(b);
        prev = std::mem::replace(&mut v, w / b);
    }
    theta
}

/// Number of eigenvalues of the tridiagonal `(alpha, beta)` below `x`.
fn sturm_count(alpha: &[f64], beta: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut d = 1.0;
    for (i, &a) in alpha.iter().enumerate() {
        let off = if i == 0 { 0.0 } else { beta[i - 1] * beta[i - 1] / d };
        d = a - x - off;
        if d == 0.0 {
            d = -f64::EPSILON * (a.abs() + x.abs()).max(f64::MIN_POSITIVE);
        }
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

fn tridiagonal_max_eigenvalue(alpha: &[f64], beta: &[f64]) -> f64 {
    let k = alpha.len();
    let radius = |i: usize| {
        let left = if i > 0 { beta[i - 1].abs() } else { 0.0 };
        let right = if i + 1 < k { beta[i].abs() } else { 0.0 };
        left + right
    };
    let mut lo = (0..k).map(|i| alpha[i] - radius(i)).fold(f64::INFINITY, f64::min);
    let mut hi = (0..k).map(|i| alpha[i] + radius(i)).fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(alpha, beta, mid) == k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// `|s_k|`, the last entry of the unit eigenvector for the top eigenvalue
/// `theta`, by one inverse iteration with `theta I - T` (positive definite).
fn top_ritz_last_component(alpha: &[f64], beta: &[f64], theta: f64) -> f64 {
    let k = alpha.len();
    let shift = theta + 4.0 * f64::EPSILON * theta.abs().max(1.0);
    let mut x = vec![1.0; k];
    for _ in 0..2 {
        // Thomas solve of (shift I - T) y = x
        let mut diag = vec![0.0; k];
        let mut rhs = x.clone();
        diag[0] = shift - alpha[0];
        for i in 1..k {
            let m = -beta[i - 1] / diag[i - 1];
            diag[i] = shift - alpha[i] + m * beta[i - 1];
            rhs[i] -= m * rhs[i - 1];
        }
        x[k - 1] = rhs[k - 1] / diag[k - 1];
        for i in (0..k - 1).rev() {
            x[i] = (rhs[i] + beta[i] * x[i + 1]) / diag[i];
        }
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return 1.0;
        }
        x.iter_mut().for_each(|v| *v /= norm);
    }
    x[k - 1].abs()
}

/// `p x p` grid of `n x n` blocks; absent blocks are exact zeros.
///
/// Symmetric matrices can keep only the blocks on and above the block
/// diagonal; the dense and CSR expansions mirror them below.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMatrix {
    p: usize,
    n: usize,
    upper_only: bool,
    blocks: Vec<Option<DMatrix<f64>>>,
}

impl BlockMatrix {
    pub fn new(p: usize, n: usize) -> Self {
        Self {
            p,
            n,
            upper_only: false,
            blocks: vec![None; p * p],
        }
    }

    /// Symmetric storage: only blocks `(r, c)` with `r <= c` are held.
    pub fn new_upper(p: usize, n: usize) -> Self {
        Self {
            upper_only: true,
            ..Self::new(p, n)
        }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn block_size(&self) -> usize {
        self.n
    }

    pub fn is_upper_only(&self) -> bool {
        self.upper_only
    }

    /// Stored block. Under symmetric storage this is `None` below the block diagonal.
    pub fn get(&self, r: usize, c: usize) -> Option<&DMatrix<f64>> {
        self.blocks[r * self.p + c].as_ref()
    }

    /// Logical block, transposing the mirrored block under symmetric storage.
    pub fn block(&self, r: usize, c: usize) -> Option<Cow<'_, DMatrix<f64>>> {
        if self.upper_only && r > c {
            self.get(c, r).map(|b| Cow::Owned(b.transpose()))
        } else {
            self.get(r, c).map(Cow::Borrowed)
        }
    }

    pub fn get_mut(&mut self, r: usize, c: usize) -> Option<&mut DMatrix<f64>> {
        self.blocks[r * self.p + c].as_mut()
    }

    pub fn set(&mut self, r: usize, c: usize, block: DMatrix<f64>) {
        debug_assert_eq!(block.shape(), (self.n, self.n));
        debug_assert!(!self.upper_only || r <= c, "symmetric storage holds only upper blocks");
        self.blocks[r * self.p + c] = Some(block);
    }

    /// Adds into an existing block or creates it.
    pub fn add(&mut self, r: usize, c: usize, block: DMatrix<f64>) {
        debug_assert!(!self.upper_only || r <= c, "symmetric storage holds only upper blocks");
        match &mut self.blocks[r * self.p + c] {
            Some(b) => *b += block,
            slot @ None => *slot = Some(block),
        }
    }

    pub fn is_present(&self, r: usize, c: usize) -> bool {
        if self.upper_only && r > c {
            self.blocks[c * self.p + r].is_some()
        } else {
            self.blocks[r * self.p + c].is_some()
        }
    }

    /// Number of logically present blocks, mirrored ones included.
    pub fn present_blocks(&self) -> usize {
        (0..self.p)
            .flat_map(|r| (0..self.p).map(move |c| (r, c)))
            .filter(|&(r, c)| self.is_present(r, c))
            .count()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n;
        let mut out = DMatrix::zeros(self.p * n, self.p * n);
        for r in 0..self.p {
            for c in 0..self.p {
                if let Some(b) = self.get(r, c) {
                    out.view_mut((r * n, c * n), (n, n)).copy_from(b);
                    if self.upper_only && r < c {
                        out.view_mut((c * n, r * n), (n, n)).tr_copy_from(b);
                    }
                }
            }
        }
        out
    }

    /// CSR of the dense expansion, dropping absent blocks and exact zeros.
    pub fn to_csr(&self) -> Csr {
        let n = self.n;
        let dim = self.p * n;
        let mut rows = vec![Vec::new(); dim];
        for r in 0..self.p {
            for c in 0..self.p {
                if let Some(b) = self.block(r, c) {
                    for i in 0..n {
                        let row = &mut rows[r * n + i];
                        for j in 0..n {
                            let v = b[(i, j)];
                            if v != 0.0 {
                                row.push((c * n + j, v));
                            }
                        }
                    }
                }
            }
        }
        Csr::from_rows(dim, dim, rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag(n: usize, d: f64, off: f64) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                d
            } else if i.abs_diff(j) == 1 {
                off
            } else {
                0.0
            }
        })
    }

    #[test]
    fn csr_products_match_dense() {
        let a = DMatrix::from_row_slice(3, 4, &[1.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0, -1.0, 3.0, 4.0, 0.0, 0.0]);
        let x = DMatrix::from_fn(4, 2, |i, j| (i + 2 * j) as f64 - 1.5);
        let y = DMatrix::from_fn(5, 3, |i, j| (i * j) as f64 + 0.25);
        let csr = Csr::from_dense(&a);
        assert_eq!(csr.nnz(), 5);
        assert_eq!(csr.mul_dense(&x), &a * &x);
        assert_eq!(Csr::dense_mul(&y, &csr), &y * &a);
        assert_eq!(csr.transpose().to_dense(), a.transpose());
        assert_eq!(csr.get(2, 1), 4.0);
        assert_eq!(csr.get(1, 1), 0.0);
        let b = Csr::from_dense(&x);
        let (prod, ops) = csr.matmul(&b);
        assert_eq!(prod.to_dense(), &a * &x);
        assert_eq!(ops, 10);
    }

    #[test]
    fn quadratic_form_matches_dense() {
        let a = tridiag(6, 2.0, -0.5);
        let y = DVector::from_fn(6, |i, _| (i as f64).sin());
        let (q, touched) = Csr::from_dense(&a).quadratic_form_counted(&y).unwrap();
        let dense = (y.transpose() * &a * &y)[(0, 0)];
        assert!((q - dense).abs() <= 1e-12 * dense.abs());
        assert_eq!(touched, 16);
        assert!(Csr::from_dense(&a).quadratic_form_counted(&DVector::zeros(5)).is_err());
    }

    #[test]
    fn band_cholesky_agrees_with_dense() {
        let a = tridiag(8, 2.5, -1.0) + DMatrix::from_fn(8, 8, |i, j| if i.abs_diff(j) == 2 { 0.3 } else { 0.0 });
        let band = BandCholesky::factor(&Csr::from_dense(&a)).unwrap();
        assert_eq!(band.bandwidth(), 2);
        let l = band.lower_dense();
        assert!((&l * l.transpose() - &a).abs().max() < 1e-12);
        let (inv, logdet) = cholesky_inverse(&a).unwrap();
        assert!((band.inverse() - inv).abs().max() < 1e-12);
        assert!((band.logdet() - logdet).abs() < 1e-12);
    }

    #[test]
    fn indefinite_inputs_are_rejected() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]));
        assert!(matches!(cholesky_lower(&a), Err(Error::CholeskyFailure(_))));
        assert!(matches!(BandCholesky::factor(&Csr::from_dense(&a)), Err(Error::CholeskyFailure(_))));
    }

    #[test]
    fn block_matrix_roundtrips_through_dense_and_csr() {
        let mut b = BlockMatrix::new(2, 2);
        b.set(0, 0, DMatrix::identity(2, 2));
        b.set(1, 0, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, 0.0]));
        b.add(1, 0, DMatrix::from_element(2, 2, 1.0));
        let d = b.to_dense();
        assert_eq!(d[(2, 0)], 1.0);
        assert_eq!(d[(3, 0)], 3.0);
        assert_eq!(d[(0, 2)], 0.0);
        assert_eq!(b.to_csr().to_dense(), d);
        assert_eq!(b.present_blocks(), 2);
    }
}
