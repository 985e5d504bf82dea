//! Spatial grids and constant-coefficient stencil operators that diagonalize
//! under fast transforms.
//!
//! The operator family is
//!
//! ```text
//!     L u = a * lap(u) - b * adv(u) - beta * lap(lap(u)) - c * u
//! ```
//!
//! with `lap` the second-difference Laplacian, `adv` the centered first
//! difference (periodic axes only), complex `a` and `c`, and real `b`, `beta`.
//! Each boundary condition pairs with the transform that diagonalizes its
//! Laplacian: homogeneous Dirichlet with the type-I sine transform, periodic
//! with the DFT, and Neumann (cell-centered, reflecting ghost cells) with the
//! type-II cosine transform. On rectangles the operator acts axis by axis and
//! the eigenbasis is the tensor product of the 1D bases; the flattened index
//! runs x-major (`idx = ix * ny + iy`).

use num_complex::Complex64;

use crate::dense::ZMat;
use crate::transforms::{CosineTransform, Dft, SineTransform, TransformWork};
use crate::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// One axis of a tensor-product grid: `n` unknowns on `(lo, hi)` with mesh
/// width `h`. How the unknowns sit inside the interval is a property of the
/// boundary condition, so use [`Grid::from_resolution`] (or the bc-aware
/// constructors) unless a nonstandard spacing is intended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub n: usize,
    pub lo: f64,
    pub hi: f64,
    pub h: f64,
}

impl Axis {
    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Tensor-product grid in one or two dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    axes: Vec<Axis>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryCondition {
    /// Homogeneous Dirichlet values at both interval ends; unknowns are the
    /// `n` interior nodes, `h = L / (n + 1)`.
    Dirichlet,
    /// Periodic wrap; unknowns are `n` nodes starting at `lo`, `h = L / n`.
    Periodic,
    /// Homogeneous Neumann flux, discretized at `n` cell centers with
    /// reflecting ghost cells, `h = L / n`.
    Neumann,
}

impl Grid {
    /// 1D grid with an explicit spacing.
    pub fn line(n: usize, lo: f64, hi: f64, h: f64) -> Result<Self> {
        let axis = Axis { n, lo, hi, h };
        validate_axis(&axis)?;
        Ok(Self { axes: vec![axis] })
    }

    /// 2D grid with explicit spacings.
    pub fn rect(x: Axis, y: Axis) -> Result<Self> {
        validate_axis(&x)?;
        validate_axis(&y)?;
        Ok(Self { axes: vec![x, y] })
    }

    /// 1D grid from a subdivision count: the interval is split into `m` mesh
    /// cells of width `L / m`, and the unknown count follows the boundary
    /// condition (`m - 1` interior nodes for Dirichlet, `m` otherwise).
    pub fn from_resolution(bc: BoundaryCondition, m: usize, lo: f64, hi: f64) -> Result<Self> {
        Ok(Self {
            axes: vec![axis_from_resolution(bc, m, lo, hi)?],
        })
    }

    /// 2D tensor grid from per-axis subdivision counts.
    pub fn from_resolution_2d(
        bc: BoundaryCondition,
        mx: usize,
        my: usize,
        bounds_x: (f64, f64),
        bounds_y: (f64, f64),
    ) -> Result<Self> {
        Ok(Self {
            axes: vec![
                axis_from_resolution(bc, mx, bounds_x.0, bounds_x.1)?,
                axis_from_resolution(bc, my, bounds_y.0, bounds_y.1)?,
            ],
        })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axis(&self, k: usize) -> &Axis {
        &self.axes[k]
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn n_points(&self) -> usize {
        self.axes.iter().map(|a| a.n).product()
    }
}

fn axis_from_resolution(bc: BoundaryCondition, m: usize, lo: f64, hi: f64) -> Result<Axis> {
    if m < 2 {
        return Err(Error::InvalidParameter(format!(
            "resolution must be at least 2, got {m}"
        )));
    }
    let h = (hi - lo) / m as f64;
    let n = match bc {
        BoundaryCondition::Dirichlet => m - 1,
        BoundaryCondition::Periodic | BoundaryCondition::Neumann => m,
    };
    let axis = Axis { n, lo, hi, h };
    validate_axis(&axis)?;
    Ok(axis)
}

fn validate_axis(axis: &Axis) -> Result<()> {
    if axis.n == 0 {
        return Err(Error::InvalidParameter("axis with zero unknowns".into()));
    }
    if !(axis.hi > axis.lo) || !axis.h.is_finite() || axis.h <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "bad axis geometry: ({}, {}) with h = {}",
            axis.lo, axis.hi, axis.h
        )));
    }
    Ok(())
}

/// PDE coefficients for `u_t = a lap(u) - b adv(u) - beta lap^2(u) - c u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    /// Diffusion `a` (complex allowed for Schrodinger-type runs).
    pub diffusion: Complex64,
    /// Advection `b`, real; requires periodic boundaries.
    pub advection: f64,
    /// Zeroth-order reaction `c` entering as `-c u`.
    pub reaction: Complex64,
    /// Fourth-order coefficient `beta` entering as `-beta lap^2(u)`.
    pub biharmonic: f64,
}

impl Default for Coefficients {
    fn default() -> Self {
        Self {
            diffusion: Complex64::new(1.0, 0.0),
            advection: 0.0,
            reaction: ZERO,
            biharmonic: 0.0,
        }
    }
}

impl Coefficients {
    pub fn heat(a: f64, c: f64) -> Self {
        Self {
            diffusion: Complex64::new(a, 0.0),
            reaction: Complex64::new(c, 0.0),
            ..Self::default()
        }
    }
}

#[derive(Clone)]
enum AxisTransform {
    Sine(SineTransform),
    Cosine(CosineTransform),
    Fourier(Dft),
}

impl AxisTransform {
    fn forward(&self, v: &mut [Complex64], work: &mut TransformWork) {
        match self {
            AxisTransform::Sine(t) => t.apply(v, work),
            AxisTransform::Cosine(t) => t.forward(v, work),
            AxisTransform::Fourier(t) => t.analysis(v, work),
        }
    }

    fn inverse(&self, v: &mut [Complex64], work: &mut TransformWork) {
        match self {
            AxisTransform::Sine(t) => t.apply(v, work),
            AxisTransform::Cosine(t) => t.inverse(v, work),
            AxisTransform::Fourier(t) => t.synthesis(v, work),
        }
    }

    fn work(&self) -> TransformWork {
        match self {
            AxisTransform::Sine(t) => t.work(),
            AxisTransform::Cosine(t) => t.work(),
            AxisTransform::Fourier(t) => t.work(),
        }
    }
}

/// Scratch buffers for the spatial transforms, one per worker thread.
#[derive(Default)]
pub struct SpatialWork {
    tw: TransformWork,
    line: Vec<Complex64>,
}

/// A finite-difference operator together with the fast transforms that
/// diagonalize it.
#[derive(Clone)]
pub struct SpectralOperator {
    grid: Grid,
    bc: BoundaryCondition,
    coeffs: Coefficients,
    /// Flattened full spectrum in x-major order.
    eigs: Vec<Complex64>,
    transforms: Vec<AxisTransform>,
}

/// Validate the grid/coefficient combination and construct the operator with
/// its spectrum and transform plans.
pub fn build_operator(
    grid: &Grid,
    bc: BoundaryCondition,
    coeffs: Coefficients,
) -> Result<SpectralOperator> {
    if grid.dim() == 0 || grid.dim() > 2 {
        return Err(Error::InvalidParameter(format!(
            "only 1D and 2D grids are supported, got dim = {}",
            grid.dim()
        )));
    }
    for z in [coeffs.diffusion, coeffs.reaction] {
        if !z.re.is_finite() || !z.im.is_finite() {
            return Err(Error::NonFinite("PDE coefficients".into()));
        }
    }
    if !coeffs.advection.is_finite() || !coeffs.biharmonic.is_finite() {
        return Err(Error::NonFinite("PDE coefficients".into()));
    }
    if coeffs.advection != 0.0 && bc != BoundaryCondition::Periodic {
        return Err(Error::InvalidParameter(
            "advection uses a centered difference that only diagonalizes on periodic axes".into(),
        ));
    }

    let mut sigma = Vec::new();
    let mut adv = Vec::new();
    let mut transforms = Vec::new();
    for axis in grid.axes() {
        let n = axis.n;
        let h = axis.h;
        let (s, a, t): (Vec<f64>, Vec<f64>, AxisTransform) = match bc {
            BoundaryCondition::Dirichlet => {
                let s = (0..n)
                    .map(|k| {
                        let arg = (k + 1) as f64 * std::f64::consts::PI / (2.0 * (n as f64 + 1.0));
                        -4.0 / (h * h) * arg.sin().powi(2)
                    })
                    .collect();
                (s, vec![0.0; n], AxisTransform::Sine(SineTransform::new(n)))
            }
            BoundaryCondition::Periodic => {
                let s = (0..n)
                    .map(|k| {
                        let arg = std::f64::consts::PI * k as f64 / n as f64;
                        -4.0 / (h * h) * arg.sin().powi(2)
                    })
                    .collect();
                let a = (0..n)
                    .map(|k| (2.0 * std::f64::consts::PI * k as f64 / n as f64).sin() / h)
                    .collect();
                (s, a, AxisTransform::Fourier(Dft::new(n)))
            }
            BoundaryCondition::Neumann => {
                let s = (0..n)
                    .map(|k| {
                        let arg = k as f64 * std::f64::consts::PI / (2.0 * n as f64);
                        -4.0 / (h * h) * arg.sin().powi(2)
                    })
                    .collect();
                (
                    s,
                    vec![0.0; n],
                    AxisTransform::Cosine(CosineTransform::new(n)),
                )
            }
        };
        sigma.push(s);
        adv.push(a);
        transforms.push(t);
    }

    let eigs = flatten_spectrum(grid, &coeffs, &sigma, &adv);
    Ok(SpectralOperator {
        grid: grid.clone(),
        bc,
        coeffs,
        eigs,
        transforms,
    })
}

fn flatten_spectrum(
    grid: &Grid,
    coeffs: &Coefficients,
    sigma: &[Vec<f64>],
    adv: &[Vec<f64>],
) -> Vec<Complex64> {
    let symbol = |lap_sum: f64, adv_sum: f64| -> Complex64 {
        coeffs.diffusion * lap_sum - Complex64::new(0.0, coeffs.advection * adv_sum)
            - Complex64::new(coeffs.biharmonic * lap_sum * lap_sum, 0.0)
            - coeffs.reaction
    };
    match grid.dim() {
        1 => (0..grid.axis(0).n)
            .map(|k| symbol(sigma[0][k], adv[0][k]))
            .collect(),
        2 => {
            let (nx, ny) = (grid.axis(0).n, grid.axis(1).n);
            let mut out = Vec::with_capacity(nx * ny);
            for ix in 0..nx {
                for iy in 0..ny {
                    out.push(symbol(
                        sigma[0][ix] + sigma[1][iy],
                        adv[0][ix] + adv[1][iy],
                    ));
                }
            }
            out
        }
        _ => unreachable!(),
    }
}

impl SpectralOperator {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn bc(&self) -> BoundaryCondition {
        self.bc
    }

    pub fn coefficients(&self) -> &Coefficients {
        &self.coeffs
    }

    pub fn n_points(&self) -> usize {
        self.grid.n_points()
    }

    /// Full spectrum, flattened x-major; entry `k` belongs to the `k`-th
    /// coefficient produced by [`forward_transform`](Self::forward_transform).
    pub fn eigenvalues(&self) -> &[Complex64] {
        &self.eigs
    }

    /// Largest real part over the spectrum (the stiffness-side bound used by
    /// the contraction estimates).
    pub fn max_real_eigenvalue(&self) -> f64 {
        self.eigs.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn make_work(&self) -> SpatialWork {
        let mut tw = TransformWork::default();
        for t in &self.transforms {
            let w = t.work();
            tw = merge_work(tw, w);
        }
        SpatialWork {
            tw,
            line: vec![ZERO; self.grid.axes().iter().map(|a| a.n).max().unwrap_or(0)],
        }
    }

    /// Samples `f` at every grid point in flattened order. The coordinate
    /// slice has one entry per axis.
    pub fn sample(&self, f: impl Fn(&[f64]) -> Complex64) -> Vec<Complex64> {
        match self.grid.dim() {
            1 => self
                .axis_points(0)
                .into_iter()
                .map(|x| f(&[x]))
                .collect(),
            _ => {
                let xs = self.axis_points(0);
                let ys = self.axis_points(1);
                let mut out = Vec::with_capacity(xs.len() * ys.len());
                for &x in &xs {
                    for &y in &ys {
                        out.push(f(&[x, y]));
                    }
                }
                out
            }
        }
    }

    /// Physical coordinates of the unknowns along one axis.
    pub fn axis_points(&self, k: usize) -> Vec<f64> {
        let axis = self.grid.axis(k);
        let offset = match self.bc {
            BoundaryCondition::Dirichlet => 1.0,
            BoundaryCondition::Periodic => 0.0,
            BoundaryCondition::Neumann => 0.5,
        };
        (0..axis.n)
            .map(|i| axis.lo + (i as f64 + offset) * axis.h)
            .collect()
    }

    /// Direct stencil application (no transforms). This is the reference path
    /// the diagonalization is tested against.
    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(v.len(), self.n_points());
        let lap = self.lap_all(v);
        let mut out: Vec<Complex64> = lap.iter().map(|&l| self.coeffs.diffusion * l).collect();
        if self.coeffs.biharmonic != 0.0 {
            let lap2 = self.lap_all(&lap);
            for (o, l2) in out.iter_mut().zip(&lap2) {
                *o -= self.coeffs.biharmonic * l2;
            }
        }
        if self.coeffs.advection != 0.0 {
            let adv = self.adv_all(v);
            for (o, a) in out.iter_mut().zip(&adv) {
                *o -= self.coeffs.advection * a;
            }
        }
        if self.coeffs.reaction != ZERO {
            for (o, &x) in out.iter_mut().zip(v) {
                *o -= self.coeffs.reaction * x;
            }
        }
        out
    }

    /// Applies `V f(D) V^{-1}` where `V` is the eigenbasis. Errors if `f`
    /// produces a non-finite multiplier anywhere on the spectrum.
    pub fn apply_function(
        &self,
        f: impl Fn(Complex64) -> Complex64,
        v: &[Complex64],
    ) -> Result<Vec<Complex64>> {
        let mut mult = Vec::with_capacity(self.eigs.len());
        for &d in &self.eigs {
            let m = f(d);
            if !m.re.is_finite() || !m.im.is_finite() {
                return Err(Error::NonFinite(format!(
                    "spectral multiplier at eigenvalue {d}"
                )));
            }
            mult.push(m);
        }
        let mut out = v.to_vec();
        let mut work = self.make_work();
        self.forward_transform(&mut out, &mut work);
        for (z, m) in out.iter_mut().zip(&mult) {
            *z *= m;
        }
        self.inverse_transform(&mut out, &mut work);
        Ok(out)
    }

    /// In-place transform to eigencoefficient space.
    pub fn forward_transform(&self, v: &mut [Complex64], work: &mut SpatialWork) {
        self.transform_all(v, work, true);
    }

    /// In-place transform back to grid values.
    pub fn inverse_transform(&self, v: &mut [Complex64], work: &mut SpatialWork) {
        self.transform_all(v, work, false);
    }

    fn transform_all(&self, v: &mut [Complex64], work: &mut SpatialWork, forward: bool) {
        assert_eq!(v.len(), self.n_points());
        match self.grid.dim() {
            1 => {
                if forward {
                    self.transforms[0].forward(v, &mut work.tw);
                } else {
                    self.transforms[0].inverse(v, &mut work.tw);
                }
            }
            2 => {
                let (nx, ny) = (self.grid.axis(0).n, self.grid.axis(1).n);
                for chunk in v.chunks_mut(ny) {
                    if forward {
                        self.transforms[1].forward(chunk, &mut work.tw);
                    } else {
                        self.transforms[1].inverse(chunk, &mut work.tw);
                    }
                }
                let line = &mut work.line[..nx];
                for iy in 0..ny {
                    for ix in 0..nx {
                        line[ix] = v[ix * ny + iy];
                    }
                    if forward {
                        self.transforms[0].forward(line, &mut work.tw);
                    } else {
                        self.transforms[0].inverse(line, &mut work.tw);
                    }
                    for ix in 0..nx {
                        v[ix * ny + iy] = line[ix];
                    }
                }
            }
            _ => unreachable!(),
        }
    }

    /// Dense matrix of the stencil, column by column. Meant for small
    /// instances (reference tests, dense mode solves).
    pub fn assemble_dense(&self) -> ZMat {
        let n = self.n_points();
        let mut m = ZMat::zeros(n, n);
        let mut e = vec![ZERO; n];
        for j in 0..n {
            e[j] = Complex64::new(1.0, 0.0);
            let col = self.apply(&e);
            m.set_column(j, &col);
            e[j] = ZERO;
        }
        m
    }

    fn lap_all(&self, v: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![ZERO; v.len()];
        for axis in 0..self.grid.dim() {
            let h = self.grid.axis(axis).h;
            self.for_each_line(v, &mut out, axis, |src, dst| match self.bc {
                BoundaryCondition::Dirichlet => lap_line_dirichlet(src, dst, h),
                BoundaryCondition::Periodic => lap_line_periodic(src, dst, h),
                BoundaryCondition::Neumann => lap_line_neumann(src, dst, h),
            });
        }
        out
    }

    fn adv_all(&self, v: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![ZERO; v.len()];
        for axis in 0..self.grid.dim() {
            let h = self.grid.axis(axis).h;
            self.for_each_line(v, &mut out, axis, |src, dst| adv_line_periodic(src, dst, h));
        }
        out
    }

    /// Runs a 1D line operation along `axis`, accumulating into `out`.
    fn for_each_line(
        &self,
        v: &[Complex64],
        out: &mut [Complex64],
        axis: usize,
        op: impl Fn(&[Complex64], &mut [Complex64]),
    ) {
        match (self.grid.dim(), axis) {
            (1, 0) => {
                let mut dst = vec![ZERO; v.len()];
                op(v, &mut dst);
                for (o, d) in out.iter_mut().zip(&dst) {
                    *o += d;
                }
            }
            (2, 1) => {
                let ny = self.grid.axis(1).n;
                let mut dst = vec![ZERO; ny];
                for (src_chunk, out_chunk) in v.chunks(ny).zip(out.chunks_mut(ny)) {
                    op(src_chunk, &mut dst);
                    for (o, d) in out_chunk.iter_mut().zip(&dst) {
                        *o += d;
                    }
                }
            }
            (2, 0) => {
                let (nx, ny) = (self.grid.axis(0).n, self.grid.axis(1).n);
                let mut src = vec![ZERO; nx];
                let mut dst = vec![ZERO; nx];
                for iy in 0..ny {
                    for ix in 0..nx {
                        src[ix] = v[ix * ny + iy];
                    }
                    op(&src, &mut dst);
                    for ix in 0..nx {
                        out[ix * ny + iy] += dst[ix];
                    }
                }
            }
            _ => unreachable!(),
        }
    }
}

impl std::fmt::Debug for SpectralOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralOperator")
            .field("grid", &self.grid)
            .field("bc", &self.bc)
            .field("coeffs", &self.coeffs)
            .field("n_points", &self.n_points())
            .finish()
    }
}

fn merge_work(a: TransformWork, b: TransformWork) -> TransformWork {
    // TransformWork grows on demand; keeping the larger one avoids
    // reallocation when transforms of different lengths share a buffer.
    let pick = |x: Vec<Complex64>, y: Vec<Complex64>| if x.len() >= y.len() { x } else { y };
    let (ae, ae2, asc) = a.into_parts();
    let (be, be2, bsc) = b.into_parts();
    TransformWork::from_parts(pick(ae, be), pick(ae2, be2), pick(asc, bsc))
}

fn lap_line_dirichlet(src: &[Complex64], dst: &mut [Complex64], h: f64) {
    let n = src.len();
    let s = 1.0 / (h * h);
    for i in 0..n {
        let left = if i > 0 { src[i - 1] } else { ZERO };
        let right = if i + 1 < n { src[i + 1] } else { ZERO };
        dst[i] = (left - src[i] * 2.0 + right) * s;
    }
}

fn lap_line_periodic(src: &[Complex64], dst: &mut [Complex64], h: f64) {
    let n = src.len();
    let s = 1.0 / (h * h);
    for i in 0..n {
        let left = src[(i + n - 1) % n];
        let right = src[(i + 1) % n];
        dst[i] = (left - src[i] * 2.0 + right) * s;
    }
}

fn lap_line_neumann(src: &[Complex64], dst: &mut [Complex64], h: f64) {
    let n = src.len();
    let s = 1.0 / (h * h);
    for i in 0..n {
        // Reflecting ghost cells: the missing neighbor equals the cell itself.
        let left = if i > 0 { src[i - 1] } else { src[0] };
        let right = if i + 1 < n { src[i + 1] } else { src[n - 1] };
        dst[i] = (left - src[i] * 2.0 + right) * s;
    }
}

fn adv_line_periodic(src: &[Complex64], dst: &mut [Complex64], h: f64) {
    let n = src.len();
    let s = 1.0 / (2.0 * h);
    for i in 0..n {
        let left = src[(i + n - 1) % n];
        let right = src[(i + 1) % n];
        dst[i] = (right - left) * s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn rand_vec(n: usize, seed: u64) -> Vec<Complex64> {
        let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1);
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        (0..n).map(|_| c(next(), next())).collect()
    }

    /// Greedy multiset match between computed and analytic spectra.
    fn assert_spectra_match(computed: &[Complex64], analytic: &[Complex64], tol: f64) {
        assert_eq!(computed.len(), analytic.len());
        let mut used = vec![false; computed.len()];
        for &want in analytic {
            let mut best = usize::MAX;
            let mut best_dist = f64::INFINITY;
            for (i, &got) in computed.iter().enumerate() {
                if !used[i] {
                    let d = (got - want).norm();
                    if d < best_dist {
                        best_dist = d;
                        best = i;
                    }
                }
            }
            assert!(
                best_dist < tol,
                "no eigenvalue near {want}; closest at distance {best_dist}"
            );
            used[best] = true;
        }
    }

    #[test]
    fn dirichlet_spectrum_matches_closed_form() {
        let grid = Grid::from_resolution(BoundaryCondition::Dirichlet, 4, 0.0, 1.0).unwrap();
        let op = build_operator(&grid, BoundaryCondition::Dirichlet, Coefficients::heat(1.0, 0.0))
            .unwrap();
        let d = op.eigenvalues();
        assert!((d[0] - c(-9.372583, 0.0)).norm() < 1e-6);
        assert!((d[1] - c(-32.0, 0.0)).norm() < 1e-6);
        assert!((d[2] - c(-54.627417, 0.0)).norm() < 1e-6);
    }

    #[test]
    fn dirichlet_stencil_first_column() {
        let grid = Grid::from_resolution(BoundaryCondition::Dirichlet, 4, 0.0, 1.0).unwrap();
        let op = build_operator(&grid, BoundaryCondition::Dirichlet, Coefficients::heat(1.0, 0.0))
            .unwrap();
        let out = op.apply(&[c(1.0, 0.0), ZERO, ZERO]);
        assert!((out[0] - c(-32.0, 0.0)).norm() < 1e-12);
        assert!((out[1] - c(16.0, 0.0)).norm() < 1e-12);
        assert!(out[2].norm() < 1e-12);
    }

    #[test]
    fn dense_eigenvalues_match_analytic_dirichlet() {
        let grid = Grid::from_resolution(BoundaryCondition::Dirichlet, 12, 0.0, 1.0).unwrap();
        let op = build_operator(&grid, BoundaryCondition::Dirichlet, Coefficients::heat(0.7, 0.3))
            .unwrap();
        let w = op.assemble_dense().eigenvalues().unwrap();
        assert_spectra_match(&w, op.eigenvalues(), 1e-8);
    }

    #[test]
    fn dense_eigenvalues_match_analytic_periodic_advection() {
        let grid = Grid::from_resolution(BoundaryCondition::Periodic, 14, 0.0, 2.0).unwrap();
        let coeffs = Coefficients {
            diffusion: c(0.05, 0.0),
            advection: 1.3,
            reaction: c(0.2, 0.0),
            biharmonic: 0.0,
        };
        let op = build_operator(&grid, BoundaryCondition::Periodic, coeffs).unwrap();
        let w = op.assemble_dense().eigenvalues().unwrap();
        assert_spectra_match(&w, op.eigenvalues(), 1e-8);
    }

    #[test]
    fn dense_eigenvalues_match_analytic_neumann() {
        let grid = Grid::from_resolution(BoundaryCondition::Neumann, 11, -1.0, 1.0).unwrap();
        let op = build_operator(&grid, BoundaryCondition::Neumann, Coefficients::heat(2.0, 0.0))
            .unwrap();
        let w = op.assemble_dense().eigenvalues().unwrap();
        assert_spectra_match(&w, op.eigenvalues(), 1e-8);
        // Constant vectors lie in the kernel of the pure Neumann Laplacian.
        let ones = vec![c(1.0, 0.0); op.n_points()];
        let lap = op.apply(&ones);
        assert!(lap.iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn dense_eigenvalues_match_analytic_biharmonic() {
        let grid = Grid::from_resolution(BoundaryCondition::Dirichlet, 10, 0.0, 1.0).unwrap();
        let coeffs = Coefficients {
            diffusion: c(1.0, 0.0),
            advection: 0.0,
            reaction: c(0.1, 0.0),
            biharmonic: 1e-3,
        };
        let op = build_operator(&grid, BoundaryCondition::Dirichlet, coeffs).unwrap();
        let w = op.assemble_dense().eigenvalues().unwrap();
        // Fourth-order entries reach ~1e6, so allow a matched relative slack.
        assert_spectra_match(&w, op.eigenvalues(), 1e-6);
    }

    #[test]
    fn two_dimensional_operator_is_kronecker_sum() {
        let grid = Grid::from_resolution_2d(
            BoundaryCondition::Dirichlet,
            5,
            4,
            (0.0, 1.0),
            (0.0, 2.0),
        )
        .unwrap();
        let op2 =
            build_operator(&grid, BoundaryCondition::Dirichlet, Coefficients::heat(1.0, 0.0))
                .unwrap();
        let gx = Grid::from_resolution(BoundaryCondition::Dirichlet, 5, 0.0, 1.0).unwrap();
        let gy = Grid::from_resolution(BoundaryCondition::Dirichlet, 4, 0.0, 2.0).unwrap();
        let ax = build_operator(&gx, BoundaryCondition::Dirichlet, Coefficients::heat(1.0, 0.0))
            .unwrap()
            .assemble_dense();
        let ay = build_operator(&gy, BoundaryCondition::Dirichlet, Coefficients::heat(1.0, 0.0))
            .unwrap()
            .assemble_dense();
        // x-major flattening puts the x factor on the left of the product.
        let want = ax
            .kron(&ZMat::identity(3))
            .add(&ZMat::identity(4).kron(&ay));
        let got = op2.assemble_dense();
        assert!(got.sub(&want).max_abs() < 1e-12);
        let w = got.eigenvalues().unwrap();
        assert_spectra_match(&w, op2.eigenvalues(), 1e-8);
    }

    #[test]
    fn transform_diagonalizes_stencil() {
        for (bc, m) in [
            (BoundaryCondition::Dirichlet, 9),
            (BoundaryCondition::Periodic, 9),
            (BoundaryCondition::Neumann, 9),
        ] {
            let grid = Grid::from_resolution(bc, m, 0.0, 1.0).unwrap();
            let coeffs = if bc == BoundaryCondition::Periodic {
                Coefficients {
                    diffusion: c(0.3, 0.0),
                    advection: 0.8,
                    reaction: c(0.05, 0.0),
                    biharmonic: 0.0,
                }
            } else {
                Coefficients::heat(0.3, 0.05)
            };
            let op = build_operator(&grid, bc, coeffs).unwrap();
            let v = rand_vec(op.n_points(), 42);
            let direct = op.apply(&v);
            let spectral = {
                let mut w = v.clone();
                let mut work = op.make_work();
                op.forward_transform(&mut w, &mut work);
                for (z, d) in w.iter_mut().zip(op.eigenvalues()) {
                    *z *= d;
                }
                op.inverse_transform(&mut w, &mut work);
                w
            };
            let scale = direct.iter().map(|z| z.norm()).fold(0.0, f64::max);
            for i in 0..direct.len() {
                assert!(
                    (direct[i] - spectral[i]).norm() < 1e-11 * (1.0 + scale),
                    "bc {bc:?} mismatch at {i}"
                );
            }
        }
    }

    #[test]
    fn transform_diagonalizes_stencil_2d() {
        let grid =
            Grid::from_resolution_2d(BoundaryCondition::Neumann, 6, 5, (0.0, 1.0), (0.0, 1.0))
                .unwrap();
        let op = build_operator(&grid, BoundaryCondition::Neumann, Coefficients::heat(0.5, 0.1))
            .unwrap();
        let v = rand_vec(op.n_points(), 7);
        let direct = op.apply(&v);
        let mut w = v.clone();
        let mut work = op.make_work();
        op.forward_transform(&mut w, &mut work);
        for (z, d) in w.iter_mut().zip(op.eigenvalues()) {
            *z *= d;
        }
        op.inverse_transform(&mut w, &mut work);
        let scale = direct.iter().map(|z| z.norm()).fold(0.0, f64::max);
        for i in 0..direct.len() {
            assert!((direct[i] - w[i]).norm() < 1e-11 * (1.0 + scale));
        }
    }

    #[test]
    fn apply_function_exponential_matches_dense_oracle() {
        let grid = Grid::from_resolution(BoundaryCondition::Dirichlet, 8, 0.0, 1.0).unwrap();
        let op = build_operator(&grid, BoundaryCondition::Dirichlet, Coefficients::heat(1.0, 0.0))
            .unwrap();
        let dt = 0.01;
        let dense = op.assemble_dense().scale(c(dt, 0.0)).expm().unwrap();
        let v = rand_vec(op.n_points(), 3);
        let want = dense.matvec(&v);
        let got = op
            .apply_function(|d| (d * dt).exp(), &v)
            .unwrap();
        for i in 0..v.len() {
            assert!((want[i] - got[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn apply_function_rejects_overflow() {
        let grid = Grid::from_resolution(BoundaryCondition::Dirichlet, 64, 0.0, 1.0).unwrap();
        let op = build_operator(&grid, BoundaryCondition::Dirichlet, Coefficients::heat(1.0, 0.0))
            .unwrap();
        let v = vec![c(1.0, 0.0); op.n_points()];
        // exp(-d * huge) overflows for the most negative eigenvalues.
        let res = op.apply_function(|d| (-d * 1e6).exp(), &v);
        assert!(matches!(res, Err(Error::NonFinite(_))));
    }

    #[test]
    fn advection_requires_periodic_axes() {
        let grid = Grid::from_resolution(BoundaryCondition::Dirichlet, 8, 0.0, 1.0).unwrap();
        let coeffs = Coefficients {
            advection: 1.0,
            ..Coefficients::default()
        };
        let res = build_operator(&grid, BoundaryCondition::Dirichlet, coeffs);
        assert!(matches!(res, Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn grid_resolution_conventions() {
        let g = Grid::from_resolution(BoundaryCondition::Dirichlet, 128, -1.0, 1.0).unwrap();
        assert_eq!(g.axis(0).n, 127);
        assert!((g.axis(0).h - 2.0 / 128.0).abs() < 1e-15);
        let g = Grid::from_resolution(BoundaryCondition::Periodic, 64, 0.0, 1.0).unwrap();
        assert_eq!(g.axis(0).n, 64);
        assert!((g.axis(0).h - 1.0 / 64.0).abs() < 1e-15);
        let g = Grid::from_resolution(BoundaryCondition::Neumann, 10, 0.0, 1.0).unwrap();
        assert_eq!(g.axis(0).n, 10);
        let op = build_operator(&g, BoundaryCondition::Neumann, Coefficients::heat(1.0, 0.0))
            .unwrap();
        let pts = op.axis_points(0);
        assert!((pts[0] - 0.05).abs() < 1e-15);
        assert!((pts[9] - 0.95).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn prop_spatial_round_trip(m in 3usize..24, choice in 0usize..3, seed in 0u64..500) {
            let bc = [
                BoundaryCondition::Dirichlet,
                BoundaryCondition::Periodic,
                BoundaryCondition::Neumann,
            ][choice];
            let grid = Grid::from_resolution(bc, m, 0.0, 1.0).unwrap();
            let op = build_operator(&grid, bc, Coefficients::heat(1.0, 0.0)).unwrap();
            let v0 = rand_vec(op.n_points(), seed);
            let mut v = v0.clone();
            let mut work = op.make_work();
            op.forward_transform(&mut v, &mut work);
            op.inverse_transform(&mut v, &mut work);
            for k in 0..v0.len() {
                prop_assert!((v[k] - v0[k]).norm() < 1e-12);
            }
        }
    }
}
