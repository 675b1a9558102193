//! Compressed sparse row matrices with fully deterministic assembly.
//!
//! Every constructor orders entries the same way on every run, so assembling
//! the same operator twice yields bitwise-identical bytes. Duplicate triplets
//! are summed in sorted order.

use nalgebra::DMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
}

impl Csr {
    /// Build from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, mut trips: Vec<(usize, usize, f64)>) -> Self {
        for &(r, c, _) in &trips {
            assert!(r < nrows && c < ncols, "triplet ({r},{c}) out of {nrows}x{ncols}");
        }
        trips.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(trips.len());
        let mut vals: Vec<f64> = Vec::with_capacity(trips.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in trips {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { nrows, ncols, row_ptr, col_idx, vals }
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, row_ptr: vec![0; nrows + 1], col_idx: Vec::new(), vals: Vec::new() }
    }

    pub fn diag(d: &[f64]) -> Self {
        let n = d.len();
        Self {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            vals: d.to_vec(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn vals(&self) -> &[f64] {
        &self.vals
    }

    pub fn from_raw(
        nrows: usize,
        ncols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        vals: Vec<f64>,
    ) -> Self {
        assert_eq!(row_ptr.len(), nrows + 1);
        assert_eq!(row_ptr[0], 0);
        assert_eq!(*row_ptr.last().unwrap(), col_idx.len());
        assert_eq!(col_idx.len(), vals.len());
        assert!(row_ptr.windows(2).all(|w| w[0] <= w[1]));
        for i in 0..nrows {
            let cols = &col_idx[row_ptr[i]..row_ptr[i + 1]];
            assert!(cols.windows(2).all(|w| w[0] < w[1]), "row {i} not strictly sorted");
            assert!(cols.iter().all(|&c| c < ncols));
        }
        Self { nrows, ncols, row_ptr, col_idx, vals }
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        (&self.col_idx[lo..hi], &self.vals[lo..hi])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&c, &v)| (i, c, v))
        })
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols, "matvec input length");
        assert_eq!(y.len(), self.nrows, "matvec output length");
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (&c, &v) in cols.iter().zip(vals) {
                acc += v * x[c];
            }
            y[i] = acc;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec_into(x, &mut y);
        y
    }

    /// y += alpha * A x.
    pub fn matvec_add(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (&c, &v) in cols.iter().zip(vals) {
                acc += v * x[c];
            }
            y[i] += alpha * acc;
        }
    }

    /// Transpose by counting sort; value bytes are copied unchanged.
    pub fn transpose(&self) -> Csr {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.col_idx {
            counts[c + 1] += 1;
        }
        for j in 0..self.ncols {
            counts[j + 1] += counts[j];
        }
        let row_ptr = counts.clone();
        let mut col_idx = vec![0usize; self.nnz()];
        let mut vals = vec![0.0f64; self.nnz()];
        let mut next = counts;
        for i in 0..self.nrows {
            let (cols, rvals) = self.row(i);
            for (&c, &v) in cols.iter().zip(rvals) {
                let pos = next[c];
                next[c] += 1;
                col_idx[pos] = i;
                vals[pos] = v;
            }
        }
        Csr { nrows: self.ncols, ncols: self.nrows, row_ptr, col_idx, vals }
    }

    /// Entrywise negation; sparsity pattern unchanged.
    pub fn negated(&self) -> Csr {
        let mut out = self.clone();
        for v in &mut out.vals {
            *v = -*v;
        }
        out
    }

    pub fn scaled(&self, alpha: f64) -> Csr {
        let mut out = self.clone();
        for v in &mut out.vals {
            *v *= alpha;
        }
        out
    }

    /// diag(d) * A.
    pub fn scale_rows(&self, d: &[f64]) -> Csr {
        assert_eq!(d.len(), self.nrows);
        let mut out = self.clone();
        for i in 0..self.nrows {
            let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
            for v in &mut out.vals[lo..hi] {
                *v *= d[i];
            }
        }
        out
    }

    /// A * diag(d).
    pub fn scale_cols(&self, d: &[f64]) -> Csr {
        assert_eq!(d.len(), self.ncols);
        let mut out = self.clone();
        for (v, &c) in out.vals.iter_mut().zip(&self.col_idx) {
            *v *= d[c];
        }
        out
    }

    /// alpha*self + beta*other, patterns merged.
    pub fn add_scaled(&self, alpha: f64, other: &Csr, beta: f64) -> Csr {
        assert_eq!(self.nrows, other.nrows);
        assert_eq!(self.ncols, other.ncols);
        let mut row_ptr = vec![0usize; self.nrows + 1];
        let mut col_idx = Vec::with_capacity(self.nnz() + other.nnz());
        let mut vals = Vec::with_capacity(self.nnz() + other.nnz());
        for i in 0..self.nrows {
            let (ca, va) = self.row(i);
            let (cb, vb) = other.row(i);
            let (mut p, mut q) = (0, 0);
            while p < ca.len() || q < cb.len() {
                let next_a = ca.get(p).copied().unwrap_or(usize::MAX);
                let next_b = cb.get(q).copied().unwrap_or(usize::MAX);
                if next_a < next_b {
                    col_idx.push(next_a);
                    vals.push(alpha * va[p]);
                    p += 1;
                } else if next_b < next_a {
                    col_idx.push(next_b);
                    vals.push(beta * vb[q]);
                    q += 1;
                } else {
                    col_idx.push(next_a);
                    vals.push(alpha * va[p] + beta * vb[q]);
                    p += 1;
                    q += 1;
                }
            }
            row_ptr[i + 1] = col_idx.len();
        }
        Csr { nrows: self.nrows, ncols: self.ncols, row_ptr, col_idx, vals }
    }

    /// Row-by-row product with sorted column gathering (deterministic).
    pub fn matmul(&self, rhs: &Csr) -> Csr {
        assert_eq!(self.ncols, rhs.nrows, "matmul inner dimension");
        let mut row_ptr = vec![0usize; self.nrows + 1];
        let mut col_idx = Vec::new();
        let mut vals = Vec::new();
        let mut acc = vec![0.0f64; rhs.ncols];
        let mut marked: Vec<usize> = Vec::new();
        for i in 0..self.nrows {
            marked.clear();
            let (ca, va) = self.row(i);
            for (&k, &av) in ca.iter().zip(va) {
                let (cb, vb) = rhs.row(k);
                for (&j, &bv) in cb.iter().zip(vb) {
                    if acc[j] == 0.0 && !marked.contains(&j) {
                        marked.push(j);
                    }
                    acc[j] += av * bv;
                }
            }
            marked.sort_unstable();
            for &j in &marked {
                col_idx.push(j);
                vals.push(acc[j]);
                acc[j] = 0.0;
            }
            row_ptr[i + 1] = col_idx.len();
        }
        Csr { nrows: self.nrows, ncols: rhs.ncols, row_ptr, col_idx, vals }
    }

    pub fn norm_max(&self) -> f64 {
        self.vals.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.triplets() {
            m[(i, j)] += v;
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Csr {
        // [1 0 2]
        // [0 0 0]
        // [3 4 0]
        Csr::from_triplets(3, 3, vec![(2, 1, 4.0), (0, 2, 2.0), (2, 0, 3.0), (0, 0, 1.0)])
    }

    #[test]
    fn triplet_assembly_sorts_and_sums_duplicates() {
        let a = Csr::from_triplets(2, 2, vec![(1, 1, 2.0), (0, 0, 1.0), (1, 1, 3.0), (1, 0, -1.0)]);
        assert_eq!(a.row_ptr(), &[0, 1, 3]);
        assert_eq!(a.col_idx(), &[0, 0, 1]);
        assert_eq!(a.vals(), &[1.0, -1.0, 5.0]);
    }

    #[test]
    fn assembly_is_order_independent() {
        let trips = vec![(0, 1, 1.5), (2, 2, -2.0), (1, 0, 3.0), (0, 1, 0.5)];
        let a = Csr::from_triplets(3, 3, trips.clone());
        let mut rev = trips;
        rev.reverse();
        let b = Csr::from_triplets(3, 3, rev);
        assert_eq!(a, b);
    }

    #[test]
    fn matvec_matches_dense() {
        let a = sample();
        let x = vec![1.0, -1.0, 2.0];
        let y = a.matvec(&x);
        assert_eq!(y, vec![5.0, 0.0, -1.0]);
        let mut y2 = vec![1.0, 1.0, 1.0];
        a.matvec_add(2.0, &x, &mut y2);
        assert_eq!(y2, vec![11.0, 1.0, -1.0]);
    }

    #[test]
    fn transpose_round_trip_is_exact() {
        let a = sample();
        let att = a.transpose().transpose();
        assert_eq!(a, att);
        let at = a.transpose();
        assert_eq!(at.get(1, 2), 4.0);
        assert_eq!(at.get(2, 0), 2.0);
    }

    #[test]
    fn negated_transpose_is_bitwise() {
        let a = Csr::from_triplets(2, 3, vec![(0, 1, 0.1 + 0.2), (1, 2, -7.25)]);
        let g = a.transpose().negated();
        for (i, j, v) in a.triplets() {
            assert_eq!(g.get(j, i).to_bits(), (-v).to_bits());
        }
    }

    #[test]
    fn matmul_matches_dense() {
        let a = sample();
        let b = Csr::from_triplets(3, 2, vec![(0, 0, 1.0), (1, 0, -2.0), (2, 1, 0.5), (1, 1, 4.0)]);
        let c = a.matmul(&b);
        let dense = a.to_dense() * b.to_dense();
        assert_eq!(c.to_dense(), dense);
        // rows stay sorted
        for i in 0..c.nrows() {
            let (cols, _) = c.row(i);
            assert!(cols.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn add_scaled_merges_patterns() {
        let a = sample();
        let b = Csr::from_triplets(3, 3, vec![(0, 1, 1.0), (2, 0, -3.0)]);
        let c = a.add_scaled(2.0, &b, 1.0);
        assert_eq!(c.get(0, 0), 2.0);
        assert_eq!(c.get(0, 1), 1.0);
        assert_eq!(c.get(2, 0), 3.0);
        assert_eq!(c.to_dense(), a.to_dense() * 2.0 + b.to_dense());
    }

    #[test]
    fn scaling_rows_and_cols() {
        let a = sample();
        let dr = a.scale_rows(&[2.0, 3.0, 0.5]).to_dense();
        let dc = a.scale_cols(&[1.0, -1.0, 2.0]).to_dense();
        assert_eq!(dr[(2, 0)], 1.5);
        assert_eq!(dc[(0, 2)], 4.0);
        assert_eq!(dc[(2, 1)], -4.0);
    }

    #[test]
    fn diag_and_empty_rows() {
        let d = Csr::diag(&[1.0, 2.0]);
        assert_eq!(d.matvec(&[3.0, 4.0]), vec![3.0, 8.0]);
        let z = Csr::zeros(2, 5);
        assert_eq!(z.matvec(&[1.0; 5]), vec![0.0, 0.0]);
    }
}
