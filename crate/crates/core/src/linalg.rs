//! Compressed sparse rows and a banded LU factorization.
//!
//! Every matrix assembled by this crate comes from a box stencil in
//! lexicographic order, so the bandwidth is at most one axis length and a
//! band factorization is a direct sparse solver with no fill outside the band.

use crate::error::{Error, Result};

/// Real sparse matrix in row-compressed form. Column indices are sorted
/// within each row, so two matrices with the same entries compare equal.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from triplets. Duplicate entries are summed in insertion order.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nrows];
        for &(i, j, v) in triplets {
            assert!(i < nrows && j < ncols, "triplet ({i}, {j}) out of bounds");
            rows[i].push((j, v));
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::with_capacity(triplets.len());
        let mut data = Vec::with_capacity(triplets.len());
        indptr.push(0);
        for mut row in rows {
            // stable sort keeps the summation order of duplicates deterministic
            row.sort_by_key(|&(j, _)| j);
            let mut k = 0;
            while k < row.len() {
                let col = row[k].0;
                let mut sum = 0.0;
                while k < row.len() && row[k].0 == col {
                    sum += row[k].1;
                    k += 1;
                }
                indices.push(col);
                data.push(sum);
            }
            indptr.push(indices.len());
        }
        CsrMatrix {
            nrows,
            ncols,
            indptr,
            indices,
            data,
        }
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            data: vec![1.0; n],
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    /// `(column, value)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.indptr[i]..self.indptr[i + 1];
        self.indices[range.clone()]
            .iter()
            .copied()
            .zip(self.data[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.indptr[i]..self.indptr[i + 1];
        match self.indices[range.clone()].binary_search(&j) {
            Ok(k) => self.data[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.nrows)
            .flat_map(|i| self.row(i).map(move |(j, v)| (i, j, v)))
            .collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.nrows).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    /// Exact transpose: entries are moved, never recomputed.
    pub fn transpose(&self) -> Self {
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
        let mut data = vec![0.0; self.nnz()];
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                let slot = next[j];
                indices[slot] = i;
                data[slot] = v;
                next[j] += 1;
            }
        }
        CsrMatrix {
            nrows: self.ncols,
            ncols: self.nrows,
            indptr,
            indices,
            data,
        }
    }

    /// `alpha * self + beta * I`.
    pub fn shifted(&self, alpha: f64, beta: f64) -> Self {
        assert_eq!(self.nrows, self.ncols);
        let mut t: Vec<(usize, usize, f64)> = self
            .triplets()
            .into_iter()
            .map(|(i, j, v)| (i, j, alpha * v))
            .collect();
        t.extend((0..self.nrows).map(|i| (i, i, beta)));
        CsrMatrix::from_triplets(self.nrows, self.ncols, &t)
    }

    /// `diag(left) * self * diag(right)`.
    pub fn scaled(&self, left: &[f64], right: &[f64]) -> Self {
        let mut out = self.clone();
        for i in 0..self.nrows {
            for k in self.indptr[i]..self.indptr[i + 1] {
                out.data[k] = left[i] * self.data[k] * right[self.indices[k]];
            }
        }
        out
    }

    /// Kronecker sum `self ⊗ I + I ⊗ other` with the first factor's index
    /// varying slowest.
    pub fn kronecker_sum(&self, other: &CsrMatrix) -> Self {
        let (n1, n2) = (self.nrows, other.nrows);
        let mut t = Vec::with_capacity(self.nnz() * n2 + other.nnz() * n1);
        for i1 in 0..n1 {
            for i2 in 0..n2 {
                let row = i1 * n2 + i2;
                for (j1, v) in self.row(i1) {
                    t.push((row, j1 * n2 + i2, v));
                }
                for (j2, v) in other.row(i2) {
                    t.push((row, i1 * n2 + j2, v));
                }
            }
        }
        CsrMatrix::from_triplets(n1 * n2, n1 * n2, &t)
    }

    /// Rows and columns restricted to `keep` (in the given order).
    pub fn submatrix(&self, keep: &[usize]) -> Self {
        let mut map = vec![usize::MAX; self.ncols];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = new;
        }
        let mut t = Vec::new();
        for (new_i, &old_i) in keep.iter().enumerate() {
            for (j, v) in self.row(old_i) {
                if map[j] != usize::MAX {
                    t.push((new_i, map[j], v));
                }
            }
        }
        CsrMatrix::from_triplets(keep.len(), keep.len(), &t)
    }

    /// Lower and upper bandwidth.
    pub fn bandwidth(&self) -> (usize, usize) {
        let mut lower = 0;
        let mut upper = 0;
        for i in 0..self.nrows {
            for (j, _) in self.row(i) {
                if j < i {
                    lower = lower.max(i - j);
                } else {
                    upper = upper.max(j - i);
                }
            }
        }
        (lower, upper)
    }

    /// True when every off-diagonal entry is nonpositive.
    pub fn is_z_matrix(&self) -> bool {
        (0..self.nrows).all(|i| self.row(i).all(|(j, v)| j == i || v <= 0.0))
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, j, v) in self.triplets() {
            d[i][j] = v;
        }
        d
    }
}

/// LU factors of a band matrix, computed without pivoting.
///
/// Stable for nonsingular M-matrices, which covers every system this crate
/// factors when the cell Péclet number is moderate. A zero or non-finite
/// pivot is reported as a numerical error.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    lower: usize,
    upper: usize,
    width: usize,
    band: Vec<f64>,
    min_pivot: f64,
}

impl BandedLu {
    pub fn factor(matrix: &CsrMatrix) -> Result<Self> {
        assert_eq!(matrix.nrows(), matrix.ncols(), "band LU needs a square matrix");
        let n = matrix.nrows();
        let (lower, upper) = matrix.bandwidth();
        let width = lower + upper + 1;
        let mut band = vec![0.0; n * width];
        for (i, j, v) in matrix.triplets() {
            band[i * width + (j + lower - i)] = v;
        }
        let mut min_pivot = f64::INFINITY;
        for k in 0..n {
            let pivot = band[k * width + lower];
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(Error::numerical(
                    "zero pivot in band factorization",
                    format!("row {k} of {n}, bandwidth ({lower}, {upper})"),
                ));
            }
            min_pivot = min_pivot.min(pivot);
            let last_row = (k + lower).min(n - 1);
            let last_col = (k + upper).min(n - 1);
            for i in k + 1..=last_row {
                let lik_pos = i * width + (k + lower - i);
                let lik = band[lik_pos] / pivot;
                band[lik_pos] = lik;
                if lik == 0.0 {
                    continue;
                }
                let (head, tail) = band.split_at_mut(i * width);
                let pivot_row = &head[k * width..k * width + width];
                let span = last_col - k;
                let target = &mut tail[k + 1 + lower - i..k + 1 + lower - i + span];
                let source = &pivot_row[lower + 1..lower + 1 + span];
                for (t, s) in target.iter_mut().zip(source) {
                    *t -= lik * s;
                }
            }
        }
        Ok(BandedLu {
            n,
            lower,
            upper,
            width,
            band,
            min_pivot,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Smallest pivot encountered. All pivots of a Z-matrix are positive
    /// exactly when it is a nonsingular M-matrix.
    pub fn min_pivot(&self) -> f64 {
        self.min_pivot
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        let (n, w, lo, up) = (self.n, self.width, self.lower, self.upper);
        for i in 0..n {
            let first = i.saturating_sub(lo);
            let row = &self.band[i * w..i * w + w];
            let mut s = x[i];
            for j in first..i {
                s -= row[j + lo - i] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let last = (i + up).min(n - 1);
            let row = &self.band[i * w..i * w + w];
            let mut s = x[i];
            for j in i + 1..=last {
                s -= row[j + lo - i] * x[j];
            }
            x[i] = s / row[lo];
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}
