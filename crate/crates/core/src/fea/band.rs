//! Symmetric banded storage and the matching Cholesky factorization.
//!
//! Row `i` stores columns `i - bw ..= i` contiguously, so the inner products of
//! the factorization run over contiguous slices of two rows.

use crate::error::{Error, Result};

/// Pivots below this fraction of the original diagonal are treated as singular.
const PIVOT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SymBandMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl SymBandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        let bw = bw.min(n.saturating_sub(1));
        Self { n, bw, data: vec![0.0; n * (bw + 1)] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        // requires j <= i and i - j <= bw
        i * (self.bw + 1) + self.bw - (i - j)
    }

    /// Adds `v` to entry `(i, j)` (and implicitly `(j, i)`).
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        assert!(i - j <= self.bw, "entry ({i},{j}) outside bandwidth {}", self.bw);
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[self.slot(i, j)]
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.data[self.slot(i, i)]).collect()
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![0.0; self.n];
        let w = self.bw + 1;
        for i in 0..self.n {
            let j0 = i.saturating_sub(self.bw);
            let row = &self.data[i * w + self.bw - (i - j0)..i * w + w];
            let (off, diag) = row.split_at(row.len() - 1);
            let xs = &x[j0..i];
            // lower part and diagonal
            let s: f64 = off.iter().zip(xs).map(|(a, b)| a * b).sum::<f64>() + diag[0] * x[i];
            // mirrored upper part
            let xi = x[i];
            for (yk, &a) in y[j0..i].iter_mut().zip(off) {
                *yk += a * xi;
            }
            y[i] += s;
        }
        y
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| (0..self.n).map(|j| self.get(i, j)).collect()).collect()
    }

    pub fn cholesky(&self) -> Result<BandCholesky> {
        let n = self.n;
        let bw = self.bw;
        let w = bw + 1;
        let mut l = self.data.clone();
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let k0 = j0.max(j.saturating_sub(bw));
                let ri = i * w + bw - i;
                let rj = j * w + bw - j;
                let mut s = l[ri + j];
                // columns k0..j of rows i and j
                let a = &l[ri + k0..ri + j];
                let b = &l[rj + k0..rj + j];
                s -= a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
                if i == j {
                    let diag = self.data[ri + i];
                    if !(s > PIVOT_TOLERANCE * diag.abs()) || !s.is_finite() {
                        return Err(Error::SingularStiffness { dof: i, pivot: s, diagonal: diag });
                    }
                    l[ri + i] = s.sqrt();
                } else {
                    l[ri + j] = s / l[rj + j];
                }
            }
        }
        Ok(BandCholesky { n, bw, l })
    }
}

/// Lower-triangular banded factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandCholesky {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        let bw = self.bw;
        let w = bw + 1;
        for i in 0..self.n {
            let j0 = i.saturating_sub(bw);
            let ri = i * w + bw - i;
            let s: f64 = self.l[ri + j0..ri + i].iter().zip(&x[j0..i]).map(|(a, b)| a * b).sum();
            x[i] = (x[i] - s) / self.l[ri + i];
        }
        for i in (0..self.n).rev() {
            let ri = i * w + bw - i;
            x[i] /= self.l[ri + i];
            let xi = x[i];
            let j0 = i.saturating_sub(bw);
            for (xj, a) in x[j0..i].iter_mut().zip(&self.l[ri + j0..ri + i]) {
                *xj -= a * xi;
            }
        }
    }
}
