//! Unitary transforms that diagonalize the supported spatial stencils.
//!
//! Everything here acts in place on `Complex64` slices. The sine and cosine
//! transforms are computed through FFTs of symmetric extensions, which stays
//! valid for complex data because the identities used are linear in the input.
//!
//! Conventions:
//! - [`Dft::synthesis`] applies the unitary matrix `F` with entries
//!   `exp(+2*pi*i*j*k/n)/sqrt(n)`; [`Dft::analysis`] applies its inverse `F^*`.
//! - [`SineTransform`] is the orthonormal type-I sine transform, which is its
//!   own inverse.
//! - [`CosineTransform::forward`] is the orthonormal type-II cosine transform
//!   (half-sample shifted), and [`CosineTransform::inverse`] its transpose.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Reusable buffers for the extension-based transforms. Obtain a right-sized
/// instance from the transform that will consume it; a single instance can be
/// shared across transforms by sizing it to the largest.
#[derive(Debug, Clone, Default)]
pub struct TransformWork {
    ext: Vec<Complex64>,
    ext2: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl TransformWork {
    pub fn from_parts(ext: Vec<Complex64>, ext2: Vec<Complex64>, scratch: Vec<Complex64>) -> Self {
        Self { ext, ext2, scratch }
    }

    pub fn into_parts(self) -> (Vec<Complex64>, Vec<Complex64>, Vec<Complex64>) {
        (self.ext, self.ext2, self.scratch)
    }

    fn ensure(&mut self, ext: usize, ext2: usize, scratch: usize) {
        if self.ext.len() < ext {
            self.ext.resize(ext, ZERO);
        }
        if self.ext2.len() < ext2 {
            self.ext2.resize(ext2, ZERO);
        }
        if self.scratch.len() < scratch {
            self.scratch.resize(scratch, ZERO);
        }
    }
}

/// Unitary discrete Fourier transform pair of a fixed length.
#[derive(Clone)]
pub struct Dft {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Dft {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            fwd: planner.plan_fft(n, FftDirection::Forward),
            inv: planner.plan_fft(n, FftDirection::Inverse),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn work(&self) -> TransformWork {
        let s = self
            .fwd
            .get_inplace_scratch_len()
            .max(self.inv.get_inplace_scratch_len());
        let mut w = TransformWork::default();
        w.ensure(0, 0, s);
        w
    }

    /// Apply `F^*` (unitary analysis): coefficients from samples.
    pub fn analysis(&self, v: &mut [Complex64], work: &mut TransformWork) {
        debug_assert_eq!(v.len(), self.n);
        work.ensure(0, 0, self.fwd.get_inplace_scratch_len());
        self.fwd.process_with_scratch(v, &mut work.scratch);
        let s = 1.0 / (self.n as f64).sqrt();
        for z in v.iter_mut() {
            *z *= s;
        }
    }

    /// Apply `F` (unitary synthesis): samples from coefficients.
    pub fn synthesis(&self, v: &mut [Complex64], work: &mut TransformWork) {
        debug_assert_eq!(v.len(), self.n);
        work.ensure(0, 0, self.inv.get_inplace_scratch_len());
        self.inv.process_with_scratch(v, &mut work.scratch);
        let s = 1.0 / (self.n as f64).sqrt();
        for z in v.iter_mut() {
            *z *= s;
        }
    }

    /// Unnormalized forward FFT, `X_k = sum_j x_j exp(-2 pi i j k / n)`.
    /// Used to read circulant stencil eigenvalues off a first column.
    pub fn forward_raw(&self, v: &mut [Complex64]) {
        debug_assert_eq!(v.len(), self.n);
        self.fwd.process(v);
    }
}

/// Orthonormal type-I discrete sine transform on `n` interior points,
/// `(S v)_k = sqrt(2/(n+1)) * sum_j sin(j k pi / (n+1)) v_j` (1-based j, k).
/// Self-inverse. Computed via an odd extension of length `2(n+1)`.
#[derive(Clone)]
pub struct SineTransform {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl SineTransform {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut planner = FftPlanner::new();
        Self {
            n,
            fft: planner.plan_fft(2 * (n + 1), FftDirection::Forward),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn work(&self) -> TransformWork {
        let mut w = TransformWork::default();
        w.ensure(2 * (self.n + 1), 0, self.fft.get_inplace_scratch_len());
        w
    }

    pub fn apply(&self, v: &mut [Complex64], work: &mut TransformWork) {
        let n = self.n;
        debug_assert_eq!(v.len(), n);
        let m = 2 * (n + 1);
        work.ensure(m, 0, self.fft.get_inplace_scratch_len());
        let y = &mut work.ext[..m];
        y[0] = ZERO;
        y[n + 1] = ZERO;
        for j in 1..=n {
            y[j] = v[j - 1];
            y[m - j] = -v[j - 1];
        }
        self.fft.process_with_scratch(y, &mut work.scratch);
        // Forward FFT of the odd extension yields -2i times the sine sums.
        let scale = (2.0 / (n as f64 + 1.0)).sqrt() * 0.5;
        for k in 1..=n {
            let z = y[k];
            v[k - 1] = Complex64::new(-z.im, z.re) * scale;
        }
    }
}

/// Orthonormal type-II cosine transform on `n` half-sample points,
/// `(C v)_k = w_k * sum_j cos(pi (j + 1/2) k / n) v_j` with `w_0 = sqrt(1/n)`
/// and `w_k = sqrt(2/n)` otherwise. `inverse` applies the transpose.
#[derive(Clone)]
pub struct CosineTransform {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl CosineTransform {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut planner = FftPlanner::new();
        Self {
            n,
            fwd: planner.plan_fft(2 * n, FftDirection::Forward),
            inv: planner.plan_fft(2 * n, FftDirection::Inverse),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn work(&self) -> TransformWork {
        let s = self
            .fwd
            .get_inplace_scratch_len()
            .max(self.inv.get_inplace_scratch_len());
        let mut w = TransformWork::default();
        w.ensure(2 * self.n, 2 * self.n, s);
        w
    }

    pub fn forward(&self, v: &mut [Complex64], work: &mut TransformWork) {
        let n = self.n;
        debug_assert_eq!(v.len(), n);
        let m = 2 * n;
        work.ensure(m, 0, self.fwd.get_inplace_scratch_len());
        let y = &mut work.ext[..m];
        for j in 0..n {
            y[j] = v[j];
            y[m - 1 - j] = v[j];
        }
        self.fwd.process_with_scratch(y, &mut work.scratch);
        let w0 = (1.0 / n as f64).sqrt();
        let wk = (2.0 / n as f64).sqrt();
        for k in 0..n {
            let phase = Complex64::from_polar(0.5, -std::f64::consts::PI * k as f64 / m as f64);
            let w = if k == 0 { w0 } else { wk };
            v[k] = y[k] * phase * w;
        }
    }

    pub fn inverse(&self, v: &mut [Complex64], work: &mut TransformWork) {
        let n = self.n;
        debug_assert_eq!(v.len(), n);
        let m = 2 * n;
        let s = self
            .fwd
            .get_inplace_scratch_len()
            .max(self.inv.get_inplace_scratch_len());
        work.ensure(m, m, s);
        let w0 = (1.0 / n as f64).sqrt();
        let wk = (2.0 / n as f64).sqrt();
        // x_j = sum_k g_k cos(pi k (j+1/2) / n) splits into two half-sample
        // exponential sums, each a zero-padded length-2n FFT.
        {
            let p = &mut work.ext[..m];
            let q = &mut work.ext2[..m];
            for k in 0..n {
                let w = if k == 0 { w0 } else { wk };
                let g = v[k] * w;
                let phase = Complex64::from_polar(1.0, std::f64::consts::PI * k as f64 / m as f64);
                p[k] = g * phase;
                q[k] = g * phase.conj();
                p[n + k] = ZERO;
                q[n + k] = ZERO;
            }
        }
        self.inv
            .process_with_scratch(&mut work.ext[..m], &mut work.scratch);
        self.fwd
            .process_with_scratch(&mut work.ext2[..m], &mut work.scratch);
        for j in 0..n {
            v[j] = (work.ext[j] + work.ext2[j]) * 0.5;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Deterministic pseudo-random complex vector for reference checks.
    fn test_vector(n: usize, seed: u64) -> Vec<Complex64> {
        let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1);
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        (0..n).map(|_| c(next(), next())).collect()
    }

    fn naive_sine(v: &[Complex64]) -> Vec<Complex64> {
        let n = v.len();
        let scale = (2.0 / (n as f64 + 1.0)).sqrt();
        (1..=n)
            .map(|k| {
                let mut acc = c(0.0, 0.0);
                for (j, &vj) in v.iter().enumerate() {
                    let angle = (j + 1) as f64 * k as f64 * PI / (n as f64 + 1.0);
                    acc += vj * angle.sin();
                }
                acc * scale
            })
            .collect()
    }

    fn naive_cosine2(v: &[Complex64]) -> Vec<Complex64> {
        let n = v.len();
        (0..n)
            .map(|k| {
                let w = if k == 0 {
                    (1.0 / n as f64).sqrt()
                } else {
                    (2.0 / n as f64).sqrt()
                };
                let mut acc = c(0.0, 0.0);
                for (j, &vj) in v.iter().enumerate() {
                    let angle = PI * (j as f64 + 0.5) * k as f64 / n as f64;
                    acc += vj * angle.cos();
                }
                acc * w
            })
            .collect()
    }

    #[test]
    fn sine_transform_matches_naive_sum() {
        for n in [1, 2, 5, 16, 31] {
            let t = SineTransform::new(n);
            let mut work = t.work();
            let v0 = test_vector(n, n as u64);
            let want = naive_sine(&v0);
            let mut v = v0.clone();
            t.apply(&mut v, &mut work);
            for k in 0..n {
                assert!(
                    (v[k] - want[k]).norm() < 1e-12,
                    "n={n} k={k}: {} vs {}",
                    v[k],
                    want[k]
                );
            }
        }
    }

    #[test]
    fn sine_transform_is_self_inverse() {
        let n = 24;
        let t = SineTransform::new(n);
        let mut work = t.work();
        let v0 = test_vector(n, 7);
        let mut v = v0.clone();
        t.apply(&mut v, &mut work);
        t.apply(&mut v, &mut work);
        for k in 0..n {
            assert!((v[k] - v0[k]).norm() < 1e-12);
        }
    }

    #[test]
    fn cosine_forward_matches_naive_sum() {
        for n in [1, 2, 6, 17, 32] {
            let t = CosineTransform::new(n);
            let mut work = t.work();
            let v0 = test_vector(n, 100 + n as u64);
            let want = naive_cosine2(&v0);
            let mut v = v0.clone();
            t.forward(&mut v, &mut work);
            for k in 0..n {
                assert!(
                    (v[k] - want[k]).norm() < 1e-12,
                    "n={n} k={k}: {} vs {}",
                    v[k],
                    want[k]
                );
            }
        }
    }

    #[test]
    fn cosine_round_trip_is_identity() {
        for n in [1, 3, 20, 33] {
            let t = CosineTransform::new(n);
            let mut work = t.work();
            let v0 = test_vector(n, 3 * n as u64 + 1);
            let mut v = v0.clone();
            t.forward(&mut v, &mut work);
            t.inverse(&mut v, &mut work);
            for k in 0..n {
                assert!((v[k] - v0[k]).norm() < 1e-12, "n={n} k={k}");
            }
            // Opposite order as well: forward is the transpose of inverse.
            let mut v = v0.clone();
            t.inverse(&mut v, &mut work);
            t.forward(&mut v, &mut work);
            for k in 0..n {
                assert!((v[k] - v0[k]).norm() < 1e-12, "n={n} k={k} (swapped)");
            }
        }
    }

    #[test]
    fn dft_synthesis_matches_naive_sum() {
        let n = 12;
        let t = Dft::new(n);
        let mut work = t.work();
        let v0 = test_vector(n, 9);
        let mut v = v0.clone();
        t.synthesis(&mut v, &mut work);
        let scale = 1.0 / (n as f64).sqrt();
        for j in 0..n {
            let mut acc = c(0.0, 0.0);
            for (k, &vk) in v0.iter().enumerate() {
                acc += vk * Complex64::from_polar(1.0, 2.0 * PI * (j * k) as f64 / n as f64);
            }
            assert!((v[j] - acc * scale).norm() < 1e-12);
        }
    }

    #[test]
    fn dft_analysis_inverts_synthesis() {
        let n = 18;
        let t = Dft::new(n);
        let mut work = t.work();
        let v0 = test_vector(n, 21);
        let mut v = v0.clone();
        t.synthesis(&mut v, &mut work);
        t.analysis(&mut v, &mut work);
        for k in 0..n {
            assert!((v[k] - v0[k]).norm() < 1e-12);
        }
    }

    #[test]
    fn forward_raw_reads_circulant_eigenvalues() {
        // First column of the periodic second-difference stencil; its raw
        // forward FFT must equal -4 sin^2(pi k / n).
        let n = 8;
        let t = Dft::new(n);
        let mut col = vec![c(0.0, 0.0); n];
        col[0] = c(-2.0, 0.0);
        col[1] = c(1.0, 0.0);
        col[n - 1] = c(1.0, 0.0);
        t.forward_raw(&mut col);
        for k in 0..n {
            let want = -4.0 * (PI * k as f64 / n as f64).sin().powi(2);
            assert!((col[k] - c(want, 0.0)).norm() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn prop_sine_round_trip(n in 1usize..40, seed in 0u64..1000) {
            let t = SineTransform::new(n);
            let mut work = t.work();
            let v0 = test_vector(n, seed);
            let mut v = v0.clone();
            t.apply(&mut v, &mut work);
            t.apply(&mut v, &mut work);
            for k in 0..n {
                prop_assert!((v[k] - v0[k]).norm() < 1e-12);
            }
        }

        #[test]
        fn prop_cosine_round_trip(n in 1usize..40, seed in 0u64..1000) {
            let t = CosineTransform::new(n);
            let mut work = t.work();
            let v0 = test_vector(n, seed);
            let mut v = v0.clone();
            t.forward(&mut v, &mut work);
            t.inverse(&mut v, &mut work);
            for k in 0..n {
                prop_assert!((v[k] - v0[k]).norm() < 1e-12);
            }
        }

        #[test]
        fn prop_dft_round_trip_and_unitarity(n in 1usize..40, seed in 0u64..1000) {
            let t = Dft::new(n);
            let mut work = t.work();
            let v0 = test_vector(n, seed);
            let norm0: f64 = v0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let mut v = v0.clone();
            t.analysis(&mut v, &mut work);
            let norm1: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            prop_assert!((norm0 - norm1).abs() < 1e-12 * (1.0 + norm0));
            t.synthesis(&mut v, &mut work);
            for k in 0..n {
                prop_assert!((v[k] - v0[k]).norm() < 1e-12);
            }
        }
    }
}
