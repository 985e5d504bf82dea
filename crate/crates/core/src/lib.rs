//! Parallel-in-time solvers for parabolic evolution problems.
//!
//! The library discretizes `u' = L u (+ N(u))` with exponential or Pade-type
//! one-step integrators, stacks all time steps into a single block system, and
//! solves that system iteratively with an alpha-circulant preconditioner that
//! diagonalizes in time via the FFT. Spatial operators are constant-coefficient
//! finite-difference stencils handled in their own eigenbasis (fast sine,
//! cosine, or Fourier transforms), so every preconditioner application costs a
//! pair of transforms in time, a pair in space, and a pointwise divide.
//!
//! Modules:
//! - [`spatial`]: grids, boundary conditions, and diagonalizable stencils
//! - [`propagator`]: one-step multipliers (exact exponential and Pade ratios)
//! - [`circulant`]: alpha-circulant shift matrices and their spectra
//! - [`allatonce`]: the stacked block system, right-hand sides, and the
//!   preconditioner
//! - [`solvers`]: Richardson, waveform, GMRES, and BiCGStab drivers
//! - [`nonlinear`]: IMEX and Newton outer iterations for semilinear problems
//! - [`analysis`]: numerical certification of the contraction and spectrum
//!   bounds the solver design relies on
//! - [`dense`]: small dense complex linear algebra (LAPACK-backed) used by the
//!   analysis routines and as a reference oracle in tests
//! - [`transforms`]: unitary FFT, sine, and cosine transforms on complex data

pub mod allatonce;
pub mod analysis;
pub mod circulant;
pub mod dense;
pub mod nonlinear;
pub mod propagator;
pub mod solvers;
pub mod spatial;
pub mod transforms;

pub use num_complex::Complex64;

use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("numerical breakdown: {0}")]
    Breakdown(String),
    #[error("non-finite value encountered in {0}")]
    NonFinite(String),
    #[error("LAPACK routine {routine} failed with info = {info}")]
    Lapack { routine: &'static str, info: i32 },
}

pub type Result<T> = std::result::Result<T, Error>;

/// Why an iterative solver stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Tolerance reached.
    Converged,
    /// Iteration cap hit before the tolerance.
    MaxIterations,
    /// Progress stalled near the attainable floor.
    Stagnated,
    /// Error grew for several consecutive iterations.
    Diverged,
    /// The method hit an internal breakdown (zero inner product or pivot).
    Breakdown,
}

/// Convergence record shared by all iterative drivers.
///
/// `residual_history` stores relative preconditioned residuals with the
/// initial value normalized to 1 (entry `k` belongs to iterate `k`).
/// `error_history` is populated when a reference solution is supplied (or
/// computed internally) and stores `max_t ||u^k_t - u*_t||_inf` per iterate,
/// starting with the initial guess, so consecutive quotients are observed
/// per-iteration contraction factors.
#[derive(Debug, Clone)]
pub struct IterationReport {
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub error_history: Vec<f64>,
    pub termination: Termination,
    pub wall_seconds: f64,
}

impl IterationReport {
    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }
}

/// A vector split into `n_blocks` contiguous blocks of equal length
/// (one block per unknown time level).
#[derive(Debug, Clone, PartialEq)]
pub struct BlockVector {
    data: Vec<Complex64>,
    n_blocks: usize,
    block_len: usize,
}

impl BlockVector {
    pub fn zeros(n_blocks: usize, block_len: usize) -> Self {
        Self {
            data: vec![Complex64::new(0.0, 0.0); n_blocks * block_len],
            n_blocks,
            block_len,
        }
    }

    pub fn from_flat(data: Vec<Complex64>, n_blocks: usize) -> Result<Self> {
        if n_blocks == 0 || data.len() % n_blocks != 0 {
            return Err(Error::Dimension(format!(
                "flat length {} not divisible into {} blocks",
                data.len(),
                n_blocks
            )));
        }
        let block_len = data.len() / n_blocks;
        Ok(Self {
            data,
            n_blocks,
            block_len,
        })
    }

    pub fn from_blocks(blocks: &[Vec<Complex64>]) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::Dimension("no blocks supplied".into()));
        }
        let block_len = blocks[0].len();
        if blocks.iter().any(|b| b.len() != block_len) {
            return Err(Error::Dimension("ragged block lengths".into()));
        }
        let mut data = Vec::with_capacity(blocks.len() * block_len);
        for b in blocks {
            data.extend_from_slice(b);
        }
        Ok(Self {
            data,
            n_blocks: blocks.len(),
            block_len,
        })
    }

    pub fn n_blocks(&self) -> usize {
        self.n_blocks
    }

    pub fn block_len(&self) -> usize {
        self.block_len
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn block(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.block_len..(i + 1) * self.block_len]
    }

    pub fn block_mut(&mut self, i: usize) -> &mut [Complex64] {
        &mut self.data[i * self.block_len..(i + 1) * self.block_len]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    pub fn norm_inf(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn norm_2(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest imaginary magnitude relative to the largest real magnitude.
    ///
    /// Real-valued problems should produce solutions whose imaginary parts sit
    /// at roundoff; callers use this ratio to warn when a configuration leaks.
    pub fn imag_leakage(&self) -> f64 {
        let re = self
            .data
            .iter()
            .map(|z| z.re.abs())
            .fold(0.0_f64, f64::max);
        let im = self
            .data
            .iter()
            .map(|z| z.im.abs())
            .fold(0.0_f64, f64::max);
        if re == 0.0 {
            if im == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            im / re
        }
    }

    /// Per-block infinity-norm distance to another block vector.
    pub fn max_block_distance(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.data.len(), other.data.len());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}
