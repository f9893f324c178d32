//! Graded sparse operators on the truncated lattice Hilbert space.
//!
//! Storage is compressed sparse rows over the full `d^N` product basis. Every
//! operator carries the particle-number shift it produces, so restrictions to
//! sectors can be taken without scanning for stray entries.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::fockspace::FockLattice;

const DROP_TOL: f64 = 0.0;

#[derive(Clone, Debug, PartialEq)]
pub struct LatticeOperator {
    dim: usize,
    grading: i32,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<C64>,
}

impl LatticeOperator {
    pub fn zero(dim: usize, grading: i32) -> Self {
        Self {
            dim,
            grading,
            indptr: vec![0; dim + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scalar(dim, C64::new(1.0, 0.0))
    }

    pub fn scalar(dim: usize, value: C64) -> Self {
        if value == C64::new(0.0, 0.0) {
            return Self::zero(dim, 0);
        }
        Self {
            dim,
            grading: 0,
            indptr: (0..=dim).collect(),
            indices: (0..dim).collect(),
            values: vec![value; dim],
        }
    }

    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(dim: usize, grading: i32, mut triplets: Vec<(usize, usize, C64)>) -> Self {
        triplets.sort_by_key(|a| (a.0, a.1));
        let mut indptr = vec![0usize; dim + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<C64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < dim && c < dim, "triplet out of range");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..dim {
            indptr[i + 1] += indptr[i];
        }
        let mut op = Self {
            dim,
            grading,
            indptr,
            indices,
            values,
        };
        op.prune();
        op
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn grading(&self) -> i32 {
        self.grading
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_zero(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        self.indices[a..b]
            .iter()
            .copied()
            .zip(self.values[a..b].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.row(i)
            .find(|&(c, _)| c == j)
            .map(|(_, v)| v)
            .unwrap_or_default()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    fn prune(&mut self) {
        if self.values.iter().all(|v| v.norm() > DROP_TOL) {
            return;
        }
        let mut indptr = vec![0usize; self.dim + 1];
        let mut indices = Vec::with_capacity(self.indices.len());
        let mut values = Vec::with_capacity(self.values.len());
        for i in 0..self.dim {
            for (c, v) in self.row(i) {
                if v.norm() > DROP_TOL {
                    indices.push(c);
                    values.push(v);
                }
            }
            indptr[i + 1] = indices.len();
        }
        self.indptr = indptr;
        self.indices = indices;
        self.values = values;
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out.prune();
        out
    }

    /// `self + s * other`. Zero operands adopt the grading of the other side.
    pub fn axpy(&self, s: C64, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        if other.is_zero() || s == C64::new(0.0, 0.0) {
            return self.clone();
        }
        if self.is_zero() {
            return other.scale(s);
        }
        assert_eq!(
            self.grading, other.grading,
            "adding operators of different grading"
        );
        let mut indptr = vec![0usize; self.dim + 1];
        let mut indices = Vec::with_capacity(self.nnz() + other.nnz());
        let mut values = Vec::with_capacity(self.nnz() + other.nnz());
        for i in 0..self.dim {
            let mut a = self.row(i).peekable();
            let mut b = other.row(i).map(|(c, v)| (c, v * s)).peekable();
            loop {
                let next = match (a.peek(), b.peek()) {
                    (None, None) => break,
                    (Some(_), None) => a.next().unwrap(),
                    (None, Some(_)) => b.next().unwrap(),
                    (Some(&(ca, va)), Some(&(cb, vb))) => {
                        if ca < cb {
                            a.next().unwrap()
                        } else if cb < ca {
                            b.next().unwrap()
                        } else {
                            a.next();
                            b.next();
                            (ca, va + vb)
                        }
                    }
                };
                if next.1.norm() > DROP_TOL {
                    indices.push(next.0);
                    values.push(next.1);
                }
            }
            indptr[i + 1] = indices.len();
        }
        Self {
            dim: self.dim,
            grading: self.grading,
            indptr,
            indices,
            values,
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.axpy(C64::new(1.0, 0.0), other)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.axpy(C64::new(-1.0, 0.0), other)
    }

    /// Operator product `self · other` (other acts first).
    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        let grading = self.grading + other.grading;
        if self.is_zero() || other.is_zero() {
            return Self::zero(self.dim, grading);
        }
        let mut acc = vec![C64::new(0.0, 0.0); self.dim];
        let mut mark = vec![usize::MAX; self.dim];
        let mut cols: Vec<usize> = Vec::new();
        let mut indptr = vec![0usize; self.dim + 1];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for i in 0..self.dim {
            cols.clear();
            for (k, a) in self.row(i) {
                for (j, b) in other.row(k) {
                    if mark[j] != i {
                        mark[j] = i;
                        acc[j] = C64::new(0.0, 0.0);
                        cols.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            cols.sort_unstable();
            for &j in &cols {
                if acc[j].norm() > DROP_TOL {
                    indices.push(j);
                    values.push(acc[j]);
                }
            }
            indptr[i + 1] = indices.len();
        }
        Self {
            dim: self.dim,
            grading,
            indptr,
            indices,
            values,
        }
    }

    pub fn commutator(&self, other: &Self) -> Self {
        self.mul(other).sub(&other.mul(self))
    }

    pub fn adjoint(&self) -> Self {
        let mut triplets = Vec::with_capacity(self.nnz());
        for i in 0..self.dim {
            for (j, v) in self.row(i) {
                triplets.push((j, i, v.conj()));
            }
        }
        Self::from_triplets(self.dim, -self.grading, triplets)
    }

    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(x.len(), self.dim);
        (0..self.dim)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    /// Dense block mapping sector `from` into sector `from + grading`.
    /// Returns an empty matrix when the target sector does not exist.
    pub fn restrict(&self, lattice: &FockLattice, from: usize) -> DMatrix<C64> {
        let target = from as i64 + self.grading as i64;
        let cols = lattice.sector(from).len();
        if target < 0 || target as usize > lattice.max_quanta() {
            return DMatrix::zeros(0, cols);
        }
        let target = target as usize;
        let row_basis = lattice.sector(target);
        let col_basis = lattice.sector(from);
        let mut out = DMatrix::zeros(row_basis.len(), col_basis.len());
        for (r, &full) in row_basis.full_indices().iter().enumerate() {
            for (c_full, v) in self.row(full) {
                if lattice.sector_of(c_full) == from {
                    out[(r, lattice.position_of(c_full))] += v;
                }
            }
        }
        out
    }

    /// Largest matrix element connecting sectors whose difference is not the
    /// declared grading.
    pub fn grading_leak(&self, lattice: &FockLattice) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim {
            let ti = lattice.sector_of(i) as i64;
            for (j, v) in self.row(i) {
                if ti - lattice.sector_of(j) as i64 != self.grading as i64 {
                    worst = worst.max(v.norm());
                }
            }
        }
        worst
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut out = DMatrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            for (j, v) in self.row(i) {
                out[(i, j)] = v;
            }
        }
        out
    }
}

/// Spectral norm of a dense block; zero for empty blocks.
pub fn op_norm(m: &DMatrix<C64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone()
        .singular_values()
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

pub fn vec_norm(v: &DVector<C64>) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn product_matches_dense() {
        let a = LatticeOperator::from_triplets(
            3,
            0,
            vec![(0, 1, c(2.0)), (1, 2, C64::new(0.0, 1.0)), (2, 0, c(-1.0))],
        );
        let b = LatticeOperator::from_triplets(3, 0, vec![(0, 0, c(1.0)), (1, 0, c(3.0)), (2, 2, c(4.0))]);
        let p = a.mul(&b).to_dense();
        let q = a.to_dense() * b.to_dense();
        assert!((p - q).norm() < 1e-15);
    }

    #[test]
    fn axpy_cancels_to_zero() {
        let a = LatticeOperator::from_triplets(2, 1, vec![(1, 0, c(1.5))]);
        let z = a.sub(&a);
        assert!(z.is_zero());
    }

    #[test]
    fn adjoint_flips_grading() {
        let a = LatticeOperator::from_triplets(2, 1, vec![(1, 0, C64::new(1.0, 2.0))]);
        let ad = a.adjoint();
        assert_eq!(ad.grading(), -1);
        assert_eq!(ad.get(0, 1), C64::new(1.0, -2.0));
    }
}
