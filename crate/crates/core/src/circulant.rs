//! Alpha-circulant shift matrices and their closed-form spectra.
//!
//! `AlphaCirculant::new(n, s, alpha)` is the n-by-n matrix with ones on the
//! s-th subdiagonal and `alpha` in the s-by-s top-right corner:
//! entries `(i + s, i) = 1` for `i = 0..n-s` and `(r, n - s + r) = alpha`
//! for `r = 0..s`. The shift-by-one case generates the family: the shift-s
//! matrix equals the s-th power of the shift-1 matrix exactly.
//!
//! Writing `gamma_t = alpha^(t/n)`, `Gamma = diag(gamma_t)`, and `F` for the
//! unitary DFT synthesis matrix (`F_{jk} = omega^{jk}/sqrt(n)` with
//! `omega = exp(2 pi i / n)`), every member diagonalizes as
//!
//! ```text
//!     C = Gamma^{-1} F^* D F Gamma,    D_k = (alpha^{1/n} omega^k)^s .
//! ```
//!
//! The bin order of `D` matches what applying `F` via an inverse FFT along
//! the time axis produces, which is what the block preconditioner relies on.

use num_complex::Complex64;

use crate::dense::ZMat;
use crate::{Error, Result};

/// Smallest accepted `alpha`: below this the diagonal similarity `Gamma`
/// becomes too ill-conditioned for the circulant factorization to be useful.
pub const MIN_ALPHA: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaCirculant {
    n: usize,
    shift: usize,
    alpha: f64,
}

impl AlphaCirculant {
    pub fn new(n: usize, shift: usize, alpha: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("empty circulant".into()));
        }
        if shift > n {
            return Err(Error::InvalidParameter(format!(
                "shift {shift} exceeds dimension {n}"
            )));
        }
        if !alpha.is_finite() || alpha < MIN_ALPHA || alpha > 1.0 {
            return Err(Error::InvalidParameter(format!(
                "alpha = {alpha} outside [{MIN_ALPHA}, 1]"
            )));
        }
        Ok(Self { n, shift, alpha })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn shift(&self) -> usize {
        self.shift
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Closed-form eigenvalues, ordered by FFT bin:
    /// `lambda_k = (alpha^{1/n} omega^k)^shift`, `k = 0..n`.
    pub fn eigenvalues(&self) -> Vec<Complex64> {
        let root = self.alpha.powf(1.0 / self.n as f64);
        (0..self.n)
            .map(|k| {
                let base = Complex64::from_polar(
                    root,
                    2.0 * std::f64::consts::PI * k as f64 / self.n as f64,
                );
                base.powu(self.shift as u32)
            })
            .collect()
    }

    /// The scaling weights `gamma_t = alpha^(t/n)` of the similarity.
    pub fn gamma_weights(&self) -> Vec<f64> {
        (0..self.n)
            .map(|t| self.alpha.powf(t as f64 / self.n as f64))
            .collect()
    }

    /// Sparse structural apply.
    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(v.len(), self.n);
        let (n, s) = (self.n, self.shift);
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for r in 0..n {
            out[r] = if r < s {
                v[n - s + r] * self.alpha
            } else {
                v[r - s]
            };
        }
        out
    }

    pub fn dense(&self) -> ZMat {
        let (n, s) = (self.n, self.shift);
        let mut m = ZMat::zeros(n, n);
        for i in 0..n - s {
            m[(i + s, i)] = Complex64::new(1.0, 0.0);
        }
        for r in 0..s {
            m[(r, n - s + r)] = Complex64::new(self.alpha, 0.0);
        }
        m
    }

    /// Strictly lower shift with the corner zeroed: the time-stepping matrix
    /// the alpha-circulant approximates.
    pub fn dense_noncirculant(&self) -> ZMat {
        let (n, s) = (self.n, self.shift);
        let mut m = ZMat::zeros(n, n);
        for i in 0..n - s {
            m[(i + s, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }
}
