//! Symmetric banded matrices and their Cholesky factors.
//!
//! Nearest-neighbour stencils on a structured lattice have half bandwidth 1
//! (intervals) or `nx` (rectangles), so a dense band factorization is exact
//! and cheap at the grid sizes this crate targets.

use crate::error::{Error, Result};

/// Symmetric matrix stored by its lower band: entry `(i, j)` with
/// `0 ≤ i - j ≤ bw` lives at `i * (bw + 1) + (i - j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedSym {
    n: usize,
    bw: usize,
    band: Vec<f64>,
}

impl BandedSym {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            band: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        debug_assert!(i - j <= self.bw);
        i * (self.bw + 1) + (i - j)
    }

    /// Entry `(i, j)`, zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i.abs_diff(j) > self.bw {
            0.0
        } else {
            self.band[self.idx(i, j)]
        }
    }

    /// Adds `v` to the symmetric pair `(i, j)`, `(j, i)`.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.band[k] += v;
    }

    pub fn diag(&self, i: usize) -> f64 {
        self.band[i * (self.bw + 1)]
    }

    /// `self * alpha + diag(d)` as a new matrix.
    pub fn scaled_plus_diag(&self, alpha: f64, d: &[f64]) -> Self {
        let mut out = Self {
            n: self.n,
            bw: self.bw,
            band: self.band.iter().map(|v| alpha * v).collect(),
        };
        for (i, di) in d.iter().enumerate() {
            out.band[i * (self.bw + 1)] += di;
        }
        out
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        let w = self.bw + 1;
        for i in 0..self.n {
            let row = &self.band[i * w..(i + 1) * w];
            y[i] += row[0] * x[i];
            for k in 1..=self.bw.min(i) {
                let j = i - k;
                let a = row[k];
                y[i] += a * x[j];
                y[j] += a * x[i];
            }
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec(x, &mut y);
        y
    }

    /// In-place band Cholesky `A = L Lᵀ`.
    pub fn cholesky(&self) -> Result<BandedCholesky> {
        let n = self.n;
        let bw = self.bw;
        let w = bw + 1;
        let mut l = self.band.clone();
        for i in 0..n {
            let jmin = i.saturating_sub(bw);
            for j in jmin..=i {
                let mut s = l[i * w + (i - j)];
                // L(i,k) and L(j,k) are both in the band for k ≥ i - bw.
                for k in jmin..j {
                    s -= l[i * w + (i - k)] * l[j * w + (j - k)];
                }
                if i == j {
                    if !(s > 0.0) {
                        return Err(Error::Singular { row: i, pivot: s });
                    }
                    l[i * w] = s.sqrt();
                } else {
                    l[i * w + (i - j)] = s / l[j * w];
                }
            }
        }
        Ok(BandedCholesky { n, bw, l })
    }
}

/// Lower-triangular band factor of an SPD [`BandedSym`].
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandedCholesky {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Overwrites `b` with `A⁻¹ b`.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let w = self.bw + 1;
        for i in 0..self.n {
            let mut s = b[i];
            for k in 1..=self.bw.min(i) {
                s -= self.l[i * w + k] * b[i - k];
            }
            b[i] = s / self.l[i * w];
        }
        for i in (0..self.n).rev() {
            let mut s = b[i];
            for k in 1..=self.bw.min(self.n - 1 - i) {
                let r = i + k;
                s -= self.l[r * w + k] * b[r];
            }
            b[i] = s / self.l[i * w];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}
