//! Dense row-major matrices and the primitive operations the rest of the
//! crate records on the differentiation tape.
//!
//! All arithmetic is 64-bit and deterministic: summations run left to right
//! in a fixed order, so identical inputs produce bit-identical outputs on
//! the same platform. Public operations reject non-finite results rather
//! than letting NaN/Inf propagate silently.

use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::seeds::splitmix64;

/// A dense `rows x cols` matrix of `f64`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// All-zeros matrix. Panics if either dimension is zero.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a matrix from a row-major buffer.
    ///
    /// Fails if the buffer length is not `rows * cols` or any entry is
    /// non-finite.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        if data.len() != rows * cols {
            return Err(Error::BadLength {
                rows,
                cols,
                len: data.len(),
            });
        }
        if !data.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite { op: "from_vec" });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix by evaluating `f(row, col)` for every entry.
    /// Panics on a non-finite entry.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                let v = f(r, c);
                assert!(v.is_finite(), "from_fn produced a non-finite entry");
                data.push(v);
            }
        }
        Self { rows, cols, data }
    }

    /// 1x1 matrix that may carry a non-finite value. Only loss heads use
    /// this, so a diverging loss surfaces as a `Diverged` error in the
    /// training loop instead of a panic here.
    pub(crate) fn scalar_unchecked(v: f64) -> Self {
        Self {
            rows: 1,
            cols: 1,
            data: vec![v],
        }
    }

    /// The `n x n` identity.
    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Row-major view of the entries.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        assert!(r < self.rows && c < self.cols, "index out of bounds");
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        assert!(r < self.rows && c < self.cols, "index out of bounds");
        assert!(v.is_finite(), "set with non-finite value");
        self.data[r * self.cols + c] = v;
    }

    /// Borrow of row `r` as a slice.
    pub fn row(&self, r: usize) -> &[f64] {
        assert!(r < self.rows, "row out of bounds");
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Matrix product `self * other`.
    ///
    /// Summation over the inner dimension runs left to right for every
    /// output element, so results are reproducible bit for bit.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        let (m, k, n) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let out_row = &mut out[i * n..(i + 1) * n];
            let a_row = &self.data[i * k..(i + 1) * k];
            for (p, &aip) in a_row.iter().enumerate() {
                let b_row = &other.data[p * n..(p + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += aip * b;
                }
            }
        }
        finite_out("matmul", Matrix { rows: m, cols: n, data: out })
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    /// Elementwise (Hadamard) product.
    pub fn hadamard(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "hadamard", |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> Result<Matrix> {
        if !c.is_finite() {
            return Err(Error::NonFinite { op: "scale" });
        }
        let data = self.data.iter().map(|x| x * c).collect();
        finite_out(
            "scale",
            Matrix {
                rows: self.rows,
                cols: self.cols,
                data,
            },
        )
    }

    /// Elementwise `max(0, x)`.
    pub fn relu(&self) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, x| acc + x * x).sqrt()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Largest singular value via power iteration on the Gram matrix.
    ///
    /// The start vector is the normalized all-ones vector plus a small
    /// deterministic perturbation, so runs are reproducible and an exactly
    /// orthogonal start cannot stall the iteration. Returns the estimate
    /// together with whether successive estimates converged to within `tol`
    /// before `max_iters` was reached. A zero matrix yields exactly 0.
    pub fn spectral_norm(&self, max_iters: usize, tol: f64) -> Result<SpectralNorm> {
        if max_iters == 0 {
            return Err(Error::InvalidArgument {
                what: "max_iters",
                detail: alloc::format!("{max_iters} < 1"),
            });
        }
        if !(tol > 0.0) {
            return Err(Error::InvalidArgument {
                what: "tol",
                detail: alloc::format!("{tol} <= 0"),
            });
        }
        if self.max_abs() == 0.0 {
            return Ok(SpectralNorm {
                value: 0.0,
                converged: true,
                iterations: 0,
            });
        }
        // Iterate on the smaller Gram side: A^T A if cols <= rows, else A A^T.
        let tall = self.cols <= self.rows;
        let dim = if tall { self.cols } else { self.rows };
        for attempt in 0..2 {
            let mut v = start_vector(dim, attempt);
            let mut sigma = 0.0f64;
            let mut scratch = vec![0.0; if tall { self.rows } else { self.cols }];
            let mut next = vec![0.0; dim];
            for it in 1..=max_iters {
                if tall {
                    self.matvec(&v, &mut scratch);
                    self.matvec_t(&scratch, &mut next);
                } else {
                    self.matvec_t(&v, &mut scratch);
                    self.matvec(&scratch, &mut next);
                }
                // Rayleigh quotient v^T (Gram v) = ||A v||^2 for unit v.
                let rayleigh: f64 = v.iter().zip(&next).map(|(a, b)| a * b).sum();
                let estimate = rayleigh.max(0.0).sqrt();
                let norm = l2(&next);
                if norm == 0.0 {
                    // Start vector fell in the null space; retry perturbed.
                    break;
                }
                for x in &mut next {
                    *x /= norm;
                }
                core::mem::swap(&mut v, &mut next);
                if (estimate - sigma).abs() < tol {
                    return Ok(SpectralNorm {
                        value: estimate,
                        converged: true,
                        iterations: it,
                    });
                }
                sigma = estimate;
                if it == max_iters {
                    return Ok(SpectralNorm {
                        value: sigma,
                        converged: false,
                        iterations: it,
                    });
                }
            }
        }
        // Both starts annihilated by the Gram matrix: operator norm is 0 on
        // the probed subspace, matrix itself nonzero only pathologically.
        Ok(SpectralNorm {
            value: 0.0,
            converged: false,
            iterations: 0,
        })
    }

    /// `out = self * v`, fixed left-to-right summation.
    fn matvec(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            *o = row.iter().zip(v).map(|(a, b)| a * b).sum();
        }
    }

    /// `out = self^T * v`, fixed summation order (row index ascending).
    fn matvec_t(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        out.iter_mut().for_each(|x| *x = 0.0);
        for (r, &vr) in v.iter().enumerate() {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            for (o, &a) in out.iter_mut().zip(row) {
                *o += vr * a;
            }
        }
    }

    fn zip_with(
        &self,
        other: &Matrix,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                op,
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        finite_out(
            op,
            Matrix {
                rows: self.rows,
                cols: self.cols,
                data,
            },
        )
    }
}

/// Result of a power-iteration spectral norm estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralNorm {
    pub value: f64,
    /// True when successive estimates settled to within the tolerance.
    pub converged: bool,
    pub iterations: usize,
}

/// Default power-iteration budget.
pub const SPECTRAL_NORM_MAX_ITERS: usize = 200;
/// Default power-iteration tolerance.
pub const SPECTRAL_NORM_TOL: f64 = 1e-10;

fn finite_out(op: &'static str, m: Matrix) -> Result<Matrix> {
    if m.data.iter().all(|x| x.is_finite()) {
        Ok(m)
    } else {
        Err(Error::NonFinite { op })
    }
}

fn l2(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc + x * x).sqrt()
}

/// Normalized all-ones vector with a small seeded perturbation.
fn start_vector(dim: usize, attempt: usize) -> Vec<f64> {
    let salt = 0x706f776572u64.wrapping_add(attempt as u64);
    let mut v: Vec<f64> = (0..dim)
        .map(|i| {
            let bits = splitmix64(salt ^ (i as u64).wrapping_mul(0x9e3779b97f4a7c15));
            // Map to [-1, 1) and shrink: keeps the all-ones direction dominant.
            let noise = (bits >> 11) as f64 / (1u64 << 52) as f64; // [0, 2)
            1.0 + 1e-3 * (noise - 1.0)
        })
        .collect();
    let n = l2(&v);
    for x in &mut v {
        *x /= n;
    }
    v
}
