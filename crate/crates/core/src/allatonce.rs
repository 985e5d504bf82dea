//! The stacked (all-at-once) time discretization and its circulant
//! preconditioner.
//!
//! A `k`-step scheme advances `u_t = sum_p w_p A^p u_{t-p}` where `A` is a
//! one-step propagator and the `w_p` are the classic backward-differentiation
//! history weights (so the combination is exact whenever `A^p u_{t-p} = u_t`,
//! in particular for the exact propagator of a linear autonomous problem).
//! Collecting the unknown levels `u_s .. u_{N_t}` into one block vector turns
//! the recursion into
//!
//! ```text
//!     Q u = f,      Q = I - sum_p T_p (x) (w_p A^p),
//! ```
//!
//! with `T_p` the strict lower shift by `p` in time and `f` carrying the
//! startup levels. The preconditioner replaces each `T_p` with the
//! alpha-circulant completion `C_p^alpha`, which diagonalizes in time under a
//! scaled FFT; one preconditioner application is then
//!
//! ```text
//!     step (a)  w = (F (x) I) (Gamma (x) I) r        scaled time FFT
//!     step (b)  per time bin k, per spatial mode j:  divide by
//!               delta_{k,j} = 1 - sum_p w_p (zeta_k m_j)^p ,
//!               zeta_k = alpha^{1/m} omega^k
//!     step (c)  u = (Gamma^{-1} (x) I) (F^* (x) I) w
//! ```
//!
//! At `alpha = 0` the circulant completion degenerates to the original
//! triangular system, so the preconditioner switches to exact block forward
//! substitution (same cost per apply, no parallelism across time).

use num_complex::Complex64;
use rayon::prelude::*;

use crate::circulant::{AlphaCirculant, MIN_ALPHA};
use crate::dense::ZMat;
use crate::propagator::Propagator;
use crate::transforms::Dft;
use crate::{BlockVector, Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Multistep combination weights `w_1 .. w_s` (backward-differentiation
/// history coefficients).
#[derive(Debug, Clone, PartialEq)]
pub struct TimeScheme {
    order: usize,
    weights: Vec<f64>,
}

impl TimeScheme {
    /// Scheme of the given step count `s` (1 through 6).
    pub fn bdf(s: usize) -> Result<Self> {
        let weights: Vec<f64> = match s {
            1 => vec![1.0],
            2 => vec![4.0 / 3.0, -1.0 / 3.0],
            3 => vec![18.0 / 11.0, -9.0 / 11.0, 2.0 / 11.0],
            4 => vec![48.0 / 25.0, -36.0 / 25.0, 16.0 / 25.0, -3.0 / 25.0],
            5 => vec![
                300.0 / 137.0,
                -300.0 / 137.0,
                200.0 / 137.0,
                -75.0 / 137.0,
                12.0 / 137.0,
            ],
            6 => vec![
                360.0 / 147.0,
                -450.0 / 147.0,
                400.0 / 147.0,
                -225.0 / 147.0,
                72.0 / 147.0,
                -10.0 / 147.0,
            ],
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "multistep order {s} outside 1..=6"
                )))
            }
        };
        Ok(Self { order: s, weights })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// `weights()[p-1]` multiplies `A^p u_{t-p}`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Step-by-step time integration; the reference every iterative solve is
/// measured against. Levels `1 .. s-1` are started with repeated one-step
/// applications, after which the full multistep recursion takes over. The
/// returned trajectory includes the initial level, `n_steps + 1` entries.
pub fn sequential_solve(
    scheme: &TimeScheme,
    propagator: &Propagator,
    u_0: &[Complex64],
    n_steps: usize,
) -> Vec<Vec<Complex64>> {
    let s = scheme.order();
    let n = u_0.len();
    let mut work = propagator.op().make_work();

    // Work in eigencoefficient space: each level is then a pointwise
    // combination of earlier levels.
    let mut hat0 = u_0.to_vec();
    propagator.op().forward_transform(&mut hat0, &mut work);
    let mults = propagator.multipliers();
    let mut hats: Vec<Vec<Complex64>> = Vec::with_capacity(n_steps + 1);
    hats.push(hat0);
    for t in 1..=n_steps {
        let mut next = vec![ZERO; n];
        if t < s {
            let prev = &hats[t - 1];
            for j in 0..n {
                next[j] = mults[j] * prev[j];
            }
        } else {
            for (p, &w) in scheme.weights().iter().enumerate() {
                let prev = &hats[t - 1 - p];
                for j in 0..n {
                    next[j] += prev[j] * mults[j].powu(p as u32 + 1) * w;
                }
            }
        }
        hats.push(next);
    }
    hats.into_iter()
        .map(|mut hat| {
            propagator.op().inverse_transform(&mut hat, &mut work);
            hat
        })
        .collect()
}

/// The block system `Q u = f` over the unknown levels `u_s .. u_{N_t}`.
pub struct AllAtOnceOperator {
    scheme: TimeScheme,
    propagator: Propagator,
    n_time: usize,
}

impl AllAtOnceOperator {
    pub fn new(scheme: TimeScheme, propagator: Propagator, n_time: usize) -> Result<Self> {
        if n_time < scheme.order() {
            return Err(Error::InvalidParameter(format!(
                "n_time = {n_time} smaller than the scheme's step count {}",
                scheme.order()
            )));
        }
        Ok(Self {
            scheme,
            propagator,
            n_time,
        })
    }

    pub fn scheme(&self) -> &TimeScheme {
        &self.scheme
    }

    pub fn propagator(&self) -> &Propagator {
        &self.propagator
    }

    /// Final time index `N_t`; the covered interval is `[0, N_t * dt]`.
    pub fn n_time(&self) -> usize {
        self.n_time
    }

    /// Number of unknown time levels.
    pub fn n_blocks(&self) -> usize {
        self.n_time - self.scheme.order() + 1
    }

    pub fn block_len(&self) -> usize {
        self.propagator.op().n_points()
    }

    /// `Q v`, computed in eigencoefficient space (two transform sweeps and a
    /// pointwise combination).
    pub fn apply_system(&self, v: &BlockVector) -> BlockVector {
        assert_eq!(v.n_blocks(), self.n_blocks());
        assert_eq!(v.block_len(), self.block_len());
        let n = self.block_len();
        let m = self.n_blocks();
        let s = self.scheme.order();
        let mults = self.propagator.multipliers();

        let mut coeffs = v.clone();
        self.par_transform_blocks(&mut coeffs, true);

        let mut out = BlockVector::zeros(m, n);
        {
            let src = coeffs.as_slice();
            out.as_mut_slice()
                .par_chunks_mut(n)
                .enumerate()
                .for_each(|(j, dst)| {
                    dst.copy_from_slice(&src[j * n..(j + 1) * n]);
                    for p in 1..=s.min(j) {
                        let w = self.scheme.weights()[p - 1];
                        let prev = &src[(j - p) * n..(j - p + 1) * n];
                        for i in 0..n {
                            dst[i] -= prev[i] * mults[i].powu(p as u32) * w;
                        }
                    }
                });
        }
        self.par_transform_blocks(&mut out, false);
        out
    }

    /// Builds `f` from the startup levels `u_0 .. u_{s-1}`.
    pub fn build_rhs(&self, u_startup: &[Vec<Complex64>]) -> Result<BlockVector> {
        let s = self.scheme.order();
        let n = self.block_len();
        if u_startup.len() != s {
            return Err(Error::Dimension(format!(
                "expected {s} startup levels, got {}",
                u_startup.len()
            )));
        }
        if u_startup.iter().any(|u| u.len() != n) {
            return Err(Error::Dimension("startup level length mismatch".into()));
        }
        let mut work = self.propagator.op().make_work();
        let mut hats: Vec<Vec<Complex64>> = Vec::with_capacity(s);
        for u in u_startup {
            let mut hat = u.clone();
            self.propagator.op().forward_transform(&mut hat, &mut work);
            hats.push(hat);
        }
        let m = self.n_blocks();
        let mults = self.propagator.multipliers();
        let mut rhs = BlockVector::zeros(m, n);
        for j in 0..s.min(m) {
            let dst = rhs.block_mut(j);
            for p in (j + 1)..=s {
                let w = self.scheme.weights()[p - 1];
                let hat = &hats[s + j - p];
                for i in 0..n {
                    dst[i] += hat[i] * mults[i].powu(p as u32) * w;
                }
            }
            self.propagator.op().inverse_transform(dst, &mut work);
        }
        Ok(rhs)
    }

    /// Startup levels produced the same way [`sequential_solve`] produces
    /// them: one-step applications of the propagator.
    pub fn startup_levels(&self, u_0: &[Complex64]) -> Vec<Vec<Complex64>> {
        let s = self.scheme.order();
        let mut levels = Vec::with_capacity(s);
        levels.push(u_0.to_vec());
        for _ in 1..s {
            let next = self.propagator.apply(levels.last().unwrap());
            levels.push(next);
        }
        levels
    }

    /// Extracts the unknown levels of a full trajectory as a block vector
    /// (for error measurement against a sequential reference).
    pub fn reference_blocks(&self, trajectory: &[Vec<Complex64>]) -> Result<BlockVector> {
        if trajectory.len() != self.n_time + 1 {
            return Err(Error::Dimension(format!(
                "trajectory has {} levels, expected {}",
                trajectory.len(),
                self.n_time + 1
            )));
        }
        BlockVector::from_blocks(&trajectory[self.scheme.order()..])
    }

    /// Dense `Q` (small instances only).
    pub fn assemble_dense(&self) -> Result<ZMat> {
        self.assemble_dense_completed(None)
    }

    /// Dense `Q_alpha` (small instances only).
    pub fn assemble_dense_preconditioner(&self, alpha: f64) -> Result<ZMat> {
        self.assemble_dense_completed(Some(alpha))
    }

    fn assemble_dense_completed(&self, alpha: Option<f64>) -> Result<ZMat> {
        let m = self.n_blocks();
        let n = self.block_len();
        let a = self.propagator.assemble_dense();
        let mut q = ZMat::identity(m * n);
        let mut a_pow = ZMat::identity(n);
        for (p, &w) in self.scheme.weights().iter().enumerate() {
            a_pow = a_pow.matmul(&a);
            let shift = p + 1;
            let t = match alpha {
                Some(al) => {
                    // C_1^p wraps: the corner contributes a factor alpha per
                    // full revolution.
                    let wrap = al.powi((shift / m) as i32);
                    AlphaCirculant::new(m, shift % m, al)?
                        .dense()
                        .scale(Complex64::new(wrap, 0.0))
                }
                None if shift < m => {
                    AlphaCirculant::new(m, shift, MIN_ALPHA)?.dense_noncirculant()
                }
                None => ZMat::zeros(m, m),
            };
            q = q.sub(&t.kron(&a_pow.scale(Complex64::new(w, 0.0))));
        }
        Ok(q)
    }

    fn par_transform_blocks(&self, v: &mut BlockVector, forward: bool) {
        let n = self.block_len();
        let op = self.propagator.op();
        v.as_mut_slice()
            .par_chunks_mut(n)
            .for_each_init(
                || op.make_work(),
                |work, block| {
                    if forward {
                        op.forward_transform(block, work);
                    } else {
                        op.inverse_transform(block, work);
                    }
                },
            );
    }
}

impl std::fmt::Debug for AllAtOnceOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AllAtOnceOperator")
            .field("order", &self.scheme.order())
            .field("n_time", &self.n_time)
            .field("n_blocks", &self.n_blocks())
            .field("block_len", &self.block_len())
            .finish()
    }
}

enum PrecondMode {
    /// Time diagonalization through the scaled FFT.
    Circulant { dft: Dft, gamma: Vec<f64>, root: f64 },
    /// Exact block forward substitution (`alpha = 0`: the preconditioner IS
    /// the system).
    Sequential,
}

/// The alpha-circulant preconditioner `Q_alpha^{-1}` for a fixed system shape.
pub struct ParaDiagPreconditioner {
    propagator: Propagator,
    weights: Vec<f64>,
    alpha: f64,
    m: usize,
    mode: PrecondMode,
}

impl ParaDiagPreconditioner {
    /// Validates `alpha`, plans the time FFT, and scans the full divisor grid
    /// for breakdown (`|delta| < 1e-14`) before accepting the configuration.
    pub fn new(system: &AllAtOnceOperator, alpha: f64) -> Result<Self> {
        let m = system.n_blocks();
        let weights = system.scheme().weights().to_vec();
        let propagator = system.propagator().clone();

        if alpha == 0.0 {
            return Ok(Self {
                propagator,
                weights,
                alpha,
                m,
                mode: PrecondMode::Sequential,
            });
        }
        // Range checks (and the MIN_ALPHA cutoff) are owned by the circulant.
        let circ = AlphaCirculant::new(m, 1, alpha)?;
        let root = alpha.powf(1.0 / m as f64);
        let gamma = circ.gamma_weights();

        let mults = system.propagator().multipliers();
        for k in 0..m {
            let zeta = Complex64::from_polar(root, 2.0 * std::f64::consts::PI * k as f64 / m as f64);
            for &mj in mults {
                let d = delta(&weights, zeta, mj);
                if d.norm() < 1e-14 {
                    return Err(Error::Breakdown(format!(
                        "preconditioner divisor vanishes at time bin {k} (delta = {d})"
                    )));
                }
            }
        }

        Ok(Self {
            propagator,
            weights,
            alpha,
            m,
            mode: PrecondMode::Circulant {
                dft: Dft::new(m),
                gamma,
                root,
            },
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn n_blocks(&self) -> usize {
        self.m
    }

    /// `Q_alpha^{-1} r`.
    pub fn apply(&self, r: &BlockVector) -> BlockVector {
        assert_eq!(r.n_blocks(), self.m);
        assert_eq!(r.block_len(), self.propagator.op().n_points());
        match &self.mode {
            PrecondMode::Circulant { dft, gamma, root } => self.apply_circulant(r, dft, gamma, *root),
            PrecondMode::Sequential => self.apply_sequential(r),
        }
    }

    fn apply_circulant(&self, r: &BlockVector, dft: &Dft, gamma: &[f64], root: f64) -> BlockVector {
        let m = self.m;
        let n = r.block_len();
        let op = self.propagator.op();
        let mults = self.propagator.multipliers();

        let mut data = r.as_slice().to_vec();
        // Step (a): Gamma scaling, then the time FFT across blocks. The data
        // is time-major, so transpose to make time lines contiguous.
        for (t, chunk) in data.chunks_mut(n).enumerate() {
            let g = gamma[t];
            for z in chunk.iter_mut() {
                *z *= g;
            }
        }
        let mut lines = vec![ZERO; m * n];
        transpose::transpose(&data, &mut lines, n, m);
        lines.par_chunks_mut(m).for_each_init(
            || dft.work(),
            |work, line| dft.synthesis(line, work),
        );
        transpose::transpose(&lines, &mut data, m, n);

        // Step (b): independent spatial solves per time bin.
        data.par_chunks_mut(n).enumerate().for_each_init(
            || op.make_work(),
            |work, (k, block)| {
                let zeta =
                    Complex64::from_polar(root, 2.0 * std::f64::consts::PI * k as f64 / m as f64);
                op.forward_transform(block, work);
                for (z, &mj) in block.iter_mut().zip(mults) {
                    *z /= delta(&self.weights, zeta, mj);
                }
                op.inverse_transform(block, work);
            },
        );

        // Step (c): inverse time FFT, then the inverse Gamma scaling.
        transpose::transpose(&data, &mut lines, n, m);
        lines.par_chunks_mut(m).for_each_init(
            || dft.work(),
            |work, line| dft.analysis(line, work),
        );
        transpose::transpose(&lines, &mut data, m, n);
        for (t, chunk) in data.chunks_mut(n).enumerate() {
            let g = 1.0 / gamma[t];
            for z in chunk.iter_mut() {
                *z *= g;
            }
        }
        BlockVector::from_flat(data, m).expect("shape preserved")
    }

    fn apply_sequential(&self, r: &BlockVector) -> BlockVector {
        let m = self.m;
        let n = r.block_len();
        let op = self.propagator.op();
        let mults = self.propagator.multipliers();
        let s = self.weights.len();

        let mut u = r.clone();
        // Eigencoefficient space turns the block forward substitution into
        // independent scalar recursions.
        u.as_mut_slice().par_chunks_mut(n).for_each_init(
            || op.make_work(),
            |work, block| op.forward_transform(block, work),
        );
        for j in 1..m {
            for p in 1..=s.min(j) {
                let w = self.weights[p - 1];
                // Split borrow: block j accumulates from block j - p.
                let (head, tail) = u.as_mut_slice().split_at_mut(j * n);
                let prev = &head[(j - p) * n..(j - p + 1) * n];
                let dst = &mut tail[..n];
                for i in 0..n {
                    dst[i] += prev[i] * mults[i].powu(p as u32) * w;
                }
            }
        }
        u.as_mut_slice().par_chunks_mut(n).for_each_init(
            || op.make_work(),
            |work, block| op.inverse_transform(block, work),
        );
        u
    }
}

impl std::fmt::Debug for ParaDiagPreconditioner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ParaDiagPreconditioner")
            .field("alpha", &self.alpha)
            .field("n_blocks", &self.m)
            .finish()
    }
}

/// `delta = 1 - sum_p w_p (zeta m)^p`, the per-mode divisor of step (b).
fn delta(weights: &[f64], zeta: Complex64, mj: Complex64) -> Complex64 {
    let t = zeta * mj;
    let mut pow = ONE;
    let mut acc = ONE;
    for &w in weights {
        pow *= t;
        acc -= pow * w;
    }
    acc
}
