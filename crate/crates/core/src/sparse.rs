//! Compressed sparse rows and an envelope (skyline) LDL^T factorization.
//!
//! The condensed mini-element system is symmetric quasi-definite, so it
//! factors as `L D L^T` with a diagonal `D` under any symmetric ordering.
//! The per-vertex interleaved numbering of [`crate::mesh::DofMap`] keeps
//! the envelope narrow on structured grids.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Accumulates `(row, col, value)` contributions; duplicates are summed.
#[derive(Debug, Clone, Default)]
pub struct TripletBuilder {
    n_rows: usize,
    n_cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(n_rows: usize, n_cols: usize) -> Self {
        Self { n_rows, n_cols, entries: Vec::new() }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.n_rows && col < self.n_cols);
        self.entries.push((row, col, value));
    }

    /// Sums duplicates in insertion order, so the result is reproducible.
    pub fn build(mut self) -> CsrMatrix {
        self.entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; self.n_rows + 1];
        let mut col_idx = Vec::with_capacity(self.entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in self.entries {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..self.n_rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        CsrMatrix { n_rows: self.n_rows, n_cols: self.n_cols, row_ptr, col_idx, values }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|&(col, _)| col == c).map_or(0.0, |(_, v)| v)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        self.mul_vec_add(x, 1.0, &mut y);
        y
    }

    /// `y += alpha * A x`
    pub fn mul_vec_add(&self, x: &[f64], alpha: f64, y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_cols);
        for (r, yr) in y.iter_mut().enumerate().take(self.n_rows) {
            let s: f64 = self.row(r).map(|(c, v)| v * x[c]).sum();
            *yr += alpha * s;
        }
    }

    /// `|A| |x|`, the componentwise magnitude used in residual scaling.
    pub fn abs_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_rows)
            .map(|r| self.row(r).map(|(c, v)| (v * x[c]).abs()).sum())
            .collect()
    }

    /// `y += alpha * A^T x`
    pub fn mul_transpose_add(&self, x: &[f64], alpha: f64, y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_rows);
        for (r, &xr) in x.iter().enumerate() {
            for (c, v) in self.row(r) {
                y[c] += alpha * v * xr;
            }
        }
    }

    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        (0..self.n_rows).map(|r| x[r] * self.row(r).map(|(c, v)| v * x[c]).sum::<f64>()).sum()
    }

    pub fn bilinear_form(&self, x: &[f64], y: &[f64]) -> f64 {
        (0..self.n_rows).map(|r| x[r] * self.row(r).map(|(c, v)| v * y[c]).sum::<f64>()).sum()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.n_rows == self.n_cols
            && (0..self.n_rows).all(|r| self.row(r).all(|(c, v)| (v - self.get(c, r)).abs() <= tol))
    }

    /// Principal submatrix on the rows/columns selected by `keep`, in order.
    pub fn principal_submatrix(&self, keep: &[usize]) -> CsrMatrix {
        let mut position = vec![usize::MAX; self.n_cols];
        for (i, &k) in keep.iter().enumerate() {
            position[k] = i;
        }
        let mut b = TripletBuilder::new(keep.len(), keep.len());
        for (i, &k) in keep.iter().enumerate() {
            for (c, v) in self.row(k) {
                if position[c] != usize::MAX {
                    b.push(i, position[c], v);
                }
            }
        }
        b.build()
    }
}

/// Envelope storage of the unit lower factor `L` and the diagonal `D`.
#[derive(Debug, Clone)]
pub struct SkylineLdl {
    n: usize,
    first_col: Vec<usize>,
    /// Start of row `i` in `lower`; the row holds columns `first_col[i]..i`.
    row_start: Vec<usize>,
    lower: Vec<f64>,
    diag: Vec<f64>,
}

impl SkylineLdl {
    /// Factors the symmetric matrix whose lower triangle is read from `a`.
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        if a.n_rows != a.n_cols {
            return Err(Error::InvalidInput("skyline factorization needs a square matrix".into()));
        }
        let n = a.n_rows;
        let mut first_col: Vec<usize> = (0..n).collect();
        for r in 0..n {
            for (c, _) in a.row(r) {
                if c < first_col[r] {
                    first_col[r] = c;
                }
            }
        }
        let mut row_start = vec![0usize; n + 1];
        for r in 0..n {
            row_start[r + 1] = row_start[r] + (r - first_col[r]);
        }
        let mut lower = vec![0.0; row_start[n]];
        let mut diag = vec![0.0; n];
        for r in 0..n {
            for (c, v) in a.row(r) {
                if c < r {
                    lower[row_start[r] + c - first_col[r]] += v;
                } else if c == r {
                    diag[r] += v;
                }
            }
        }

        let scale = diag.iter().fold(0.0f64, |m, d| m.max(d.abs())).max(f64::MIN_POSITIVE);
        for i in 0..n {
            let fi = first_col[i];
            let si = row_start[i];
            // Row i holds g_ij = L_ij d_j while it is being computed.
            for j in fi..i {
                let fj = first_col[j];
                let sj = row_start[j];
                let k0 = fi.max(fj);
                let mut s = 0.0;
                for k in k0..j {
                    s += lower[si + k - fi] * lower[sj + k - fj];
                }
                lower[si + j - fi] -= s;
            }
            let mut d = diag[i];
            for j in fi..i {
                let g = lower[si + j - fi];
                let l = g / diag[j];
                d -= g * l;
                lower[si + j - fi] = l;
            }
            if !d.is_finite() || d.abs() <= 1e-300 * scale {
                return Err(Error::SingularMatrix { pivot: i });
            }
            diag[i] = d;
        }
        Ok(Self { n, first_col, row_start, lower, diag })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn envelope_len(&self) -> usize {
        self.lower.len()
    }

    /// Number of negative pivots (inertia of the factored matrix).
    pub fn negative_pivots(&self) -> usize {
        self.diag.iter().filter(|&&d| d < 0.0).count()
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        for i in 0..self.n {
            let fi = self.first_col[i];
            let row = &self.lower[self.row_start[i]..self.row_start[i + 1]];
            let s: f64 = row.iter().zip(&x[fi..i]).map(|(l, y)| l * y).sum();
            x[i] -= s;
        }
        for (xi, d) in x.iter_mut().zip(&self.diag) {
            *xi /= d;
        }
        for i in (0..self.n).rev() {
            let fi = self.first_col[i];
            let xi = x[i];
            let row = &self.lower[self.row_start[i]..self.row_start[i + 1]];
            for (l, xk) in row.iter().zip(&mut x[fi..i]) {
                *xk -= l * xi;
            }
        }
    }

    /// Solves `A x = b` and applies `refinements` steps of iterative
    /// refinement against `a`.
    pub fn solve_refined(&self, a: &CsrMatrix, b: &[f64], refinements: usize) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        for _ in 0..refinements {
            let mut r = b.to_vec();
            a.mul_vec_add(&x, -1.0, &mut r);
            self.solve_in_place(&mut r);
            for (xi, ri) in x.iter_mut().zip(&r) {
                *xi += ri;
            }
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn laplacian_1d(n: usize, shift: f64) -> CsrMatrix {
        let mut b = TripletBuilder::new(n, n);
        for i in 0..n {
            b.push(i, i, 2.0 + shift);
            if i > 0 {
                b.push(i, i - 1, -1.0);
                b.push(i - 1, i, -1.0);
            }
        }
        b.build()
    }

    #[test]
    fn duplicates_are_summed() {
        let mut b = TripletBuilder::new(2, 2);
        b.push(0, 1, 1.0);
        b.push(0, 1, 2.5);
        b.push(1, 0, -1.0);
        let m = b.build();
        assert_eq!(m.get(0, 1), 3.5);
        assert_eq!(m.get(1, 0), -1.0);
        assert_eq!(m.get(1, 1), 0.0);
        assert_eq!(m.nnz(), 2);
    }

    #[test]
    fn transpose_product_matches_explicit() {
        let mut b = TripletBuilder::new(2, 3);
        b.push(0, 0, 1.0);
        b.push(0, 2, 2.0);
        b.push(1, 1, 3.0);
        let m = b.build();
        let mut y = vec![0.0; 3];
        m.mul_transpose_add(&[1.0, -1.0], 1.0, &mut y);
        assert_eq!(y, vec![1.0, -3.0, 2.0]);
    }

    #[test]
    fn solves_spd_tridiagonal() {
        let a = laplacian_1d(50, 0.1);
        let ldl = SkylineLdl::factor(&a).unwrap();
        assert_eq!(ldl.negative_pivots(), 0);
        let x_true: Vec<f64> = (0..50).map(|i| libm::sin(i as f64)).collect();
        let b = a.mul_vec(&x_true);
        let x = ldl.solve_refined(&a, &b, 1);
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn quasi_definite_inertia() {
        // [[K, B^T], [B, -C]] with K, C positive definite.
        let mut b = TripletBuilder::new(3, 3);
        b.push(0, 0, 4.0);
        b.push(1, 1, 3.0);
        b.push(2, 2, -1e-6);
        for (r, v) in [(0, 1.0), (1, -2.0)] {
            b.push(2, r, v);
            b.push(r, 2, v);
        }
        let a = b.build();
        let ldl = SkylineLdl::factor(&a).unwrap();
        assert_eq!(ldl.negative_pivots(), 1);
        let rhs = [1.0, 2.0, 3.0];
        let x = ldl.solve_refined(&a, &rhs, 2);
        let r = a.mul_vec(&x);
        for (ri, bi) in r.iter().zip(rhs) {
            assert!((ri - bi).abs() < 1e-10);
        }
    }

    #[test]
    fn singular_matrix_reports_pivot() {
        let mut b = TripletBuilder::new(2, 2);
        b.push(0, 0, 1.0);
        b.push(0, 1, 1.0);
        b.push(1, 0, 1.0);
        b.push(1, 1, 1.0);
        match SkylineLdl::factor(&b.build()) {
            Err(Error::SingularMatrix { pivot }) => assert_eq!(pivot, 1),
            other => panic!("expected singular, got {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn random_banded_spd_solve(seed in proptest::collection::vec(-1.0f64..1.0, 30)) {
            // A = B^T B + I with B bidiagonal, assembled through triplets.
            let n = seed.len();
            let mut b = TripletBuilder::new(n, n);
            for i in 0..n {
                b.push(i, i, 1.0 + seed[i] * seed[i] + if i + 1 < n { 1.0 } else { 0.0 });
                if i + 1 < n {
                    b.push(i, i + 1, seed[i]);
                    b.push(i + 1, i, seed[i]);
                }
            }
            let a = b.build();
            let ldl = SkylineLdl::factor(&a).unwrap();
            let rhs: Vec<f64> = (0..n).map(|i| i as f64 - 3.0).collect();
            let x = ldl.solve_refined(&a, &rhs, 1);
            let r = a.mul_vec(&x);
            for (ri, bi) in r.iter().zip(&rhs) {
                prop_assert!((ri - bi).abs() < 1e-10);
            }
        }
    }
}
