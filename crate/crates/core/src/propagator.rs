//! One-step time propagators in the spatial eigenbasis.
//!
//! A propagator is the matrix function `A = r(dt * L)` of a diagonalizable
//! spatial operator `L`, where `r` is either the exponential itself or a Pade
//! rational approximation of it. Because `L` diagonalizes under fast
//! transforms, applying `A` (or any integer power of it) costs one transform
//! pair plus a pointwise multiply.

use num_complex::Complex64;

use crate::dense::ZMat;
use crate::spatial::{SpatialWork, SpectralOperator};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PropagatorKind {
    /// `exp(z)`: the exact exponential integrator step.
    Exact,
    /// `(1 + z/2) / (1 - z/2)`: diagonal second-order Pade (trapezoidal).
    Pade2,
    /// `(1 + 2z/3 + z^2/6) / (1 - z/3)`: subdiagonal third-order Pade.
    /// On the negative real axis its modulus stays below 1 only for
    /// `z >= -6`; stiffer modes amplify, which the solvers surface through
    /// [`Propagator::norm_bound`].
    Pade3,
}

impl std::fmt::Display for PropagatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PropagatorKind::Exact => "exact",
            PropagatorKind::Pade2 => "pade2",
            PropagatorKind::Pade3 => "pade3",
        })
    }
}

/// Scalar stability function `r(z)` of a propagator kind.
pub fn multiplier(kind: PropagatorKind, z: Complex64) -> Complex64 {
    match kind {
        PropagatorKind::Exact => z.exp(),
        PropagatorKind::Pade2 => {
            let half = z * 0.5;
            (Complex64::new(1.0, 0.0) + half) / (Complex64::new(1.0, 0.0) - half)
        }
        PropagatorKind::Pade3 => {
            let num = Complex64::new(1.0, 0.0) + z * (2.0 / 3.0) + z * z * (1.0 / 6.0);
            let den = Complex64::new(1.0, 0.0) - z * (1.0 / 3.0);
            num / den
        }
    }
}

/// `A = r(dt * L)` held as its eigen-multipliers over `L`'s spectrum.
#[derive(Clone)]
pub struct Propagator {
    op: SpectralOperator,
    dt: f64,
    kind: PropagatorKind,
    multipliers: Vec<Complex64>,
}

pub fn make_propagator(
    op: SpectralOperator,
    dt: f64,
    kind: PropagatorKind,
) -> Result<Propagator> {
    if !dt.is_finite() || dt <= 0.0 {
        return Err(Error::InvalidParameter(format!("time step dt = {dt}")));
    }
    let mut multipliers = Vec::with_capacity(op.n_points());
    for &d in op.eigenvalues() {
        let z = d * dt;
        // Reject Pade pole neighborhoods before they poison a solve.
        let den_ok = match kind {
            PropagatorKind::Exact => true,
            PropagatorKind::Pade2 => (Complex64::new(1.0, 0.0) - z * 0.5).norm() > 1e-14,
            PropagatorKind::Pade3 => (Complex64::new(1.0, 0.0) - z / 3.0).norm() > 1e-14,
        };
        if !den_ok {
            return Err(Error::Breakdown(format!(
                "Pade denominator vanishes at dt*eigenvalue = {z}"
            )));
        }
        let m = multiplier(kind, z);
        if !m.re.is_finite() || !m.im.is_finite() {
            return Err(Error::NonFinite(format!(
                "propagator multiplier at dt*eigenvalue = {z}"
            )));
        }
        multipliers.push(m);
    }
    Ok(Propagator {
        op,
        dt,
        kind,
        multipliers,
    })
}

impl Propagator {
    pub fn op(&self) -> &SpectralOperator {
        &self.op
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn kind(&self) -> PropagatorKind {
        self.kind
    }

    /// Eigen-multipliers `r(dt * d_j)` aligned with
    /// [`SpectralOperator::eigenvalues`].
    pub fn multipliers(&self) -> &[Complex64] {
        &self.multipliers
    }

    /// `max_j |r(dt d_j)|`, an exact 2-norm bound for the step matrix in the
    /// (unitary) eigenbasis.
    pub fn norm_bound(&self) -> f64 {
        self.multipliers.iter().map(|m| m.norm()).fold(0.0, f64::max)
    }

    /// One time step.
    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        self.power_apply(v, 1)
    }

    /// `A^p v` with a single transform pair.
    pub fn power_apply(&self, v: &[Complex64], p: usize) -> Vec<Complex64> {
        let mut out = v.to_vec();
        let mut work = self.op.make_work();
        self.power_apply_in_place(&mut out, p, &mut work);
        out
    }

    /// In-place `A^p v` reusing caller scratch; the workhorse inside solvers.
    pub fn power_apply_in_place(&self, v: &mut [Complex64], p: usize, work: &mut SpatialWork) {
        self.op.forward_transform(v, work);
        self.scale_modes(v, p);
        self.op.inverse_transform(v, work);
    }

    /// Pointwise `m_j^p` scaling for data already in eigencoefficient space.
    pub fn scale_modes(&self, coeffs: &mut [Complex64], p: usize) {
        debug_assert_eq!(coeffs.len(), self.multipliers.len());
        match p {
            0 => {}
            1 => {
                for (z, m) in coeffs.iter_mut().zip(&self.multipliers) {
                    *z *= m;
                }
            }
            _ => {
                for (z, m) in coeffs.iter_mut().zip(&self.multipliers) {
                    *z *= m.powu(p as u32);
                }
            }
        }
    }

    /// Dense step matrix, column by column; for reference tests and the dense
    /// per-mode solves in the Newton path.
    pub fn assemble_dense(&self) -> ZMat {
        let n = self.op.n_points();
        let mut m = ZMat::zeros(n, n);
        let mut e = vec![Complex64::new(0.0, 0.0); n];
        let mut work = self.op.make_work();
        for j in 0..n {
            e[j] = Complex64::new(1.0, 0.0);
            let mut col = e.clone();
            self.power_apply_in_place(&mut col, 1, &mut work);
            m.set_column(j, &col);
            e[j] = Complex64::new(0.0, 0.0);
        }
        m
    }
}

impl std::fmt::Debug for Propagator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Propagator")
            .field("kind", &self.kind)
            .field("dt", &self.dt)
            .field("n_points", &self.op.n_points())
            .field("norm_bound", &self.norm_bound())
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spatial::{build_operator, BoundaryCondition, Coefficients, Grid};
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Operator whose entire spectrum is the single value `-lambda` (pure
    /// reaction), for scalar-style checks.
    fn reaction_op(n: usize, lambda: f64) -> SpectralOperator {
        let grid = Grid::from_resolution(BoundaryCondition::Periodic, n, 0.0, 1.0).unwrap();
        let coeffs = Coefficients {
            diffusion: c(0.0, 0.0),
            advection: 0.0,
            reaction: c(lambda, 0.0),
            biharmonic: 0.0,
        };
        build_operator(&grid, BoundaryCondition::Periodic, coeffs).unwrap()
    }

    #[test]
    fn stability_function_values_at_small_argument() {
        let z = c(-0.1, 0.0);
        assert!((multiplier(PropagatorKind::Exact, z) - c(0.904837418, 0.0)).norm() < 1e-9);
        assert!((multiplier(PropagatorKind::Pade2, z) - c(0.904761905, 0.0)).norm() < 1e-9);
        assert!((multiplier(PropagatorKind::Pade3, z) - c(0.904838710, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn pade_local_error_constants() {
        // r(z) - e^z = -z^3/12 + O(z^4) for Pade2, z^4/72 + O(z^5) for Pade3.
        let z = c(-0.01, 0.0);
        let e2 = (multiplier(PropagatorKind::Pade2, z) - z.exp()).norm();
        assert!((e2 - 1e-6 / 12.0).abs() < 1e-9);
        let e3 = (multiplier(PropagatorKind::Pade3, z) - z.exp()).norm();
        assert!((e3 - 1e-8 / 72.0).abs() < 1e-11);
    }

    #[test]
    fn norm_bound_of_uniform_spectrum() {
        let op = reaction_op(4, 0.5);
        let prop = make_propagator(op, 2.0, PropagatorKind::Exact).unwrap();
        assert!((prop.norm_bound() - 0.367879441).abs() < 1e-9);
    }

    #[test]
    fn five_steps_of_scalar_decay() {
        let op = reaction_op(2, 1.0);
        let prop = make_propagator(op, 0.1, PropagatorKind::Exact).unwrap();
        let u = prop.power_apply(&[c(1.0, 0.0), c(1.0, 0.0)], 5);
        assert!((u[0] - c(0.606530660, 0.0)).norm() < 1e-9);
        assert!((u[1] - c(0.606530660, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn exact_step_matches_expm_oracle() {
        let grid = Grid::from_resolution(BoundaryCondition::Dirichlet, 32, 0.0, 1.0).unwrap();
        let op = build_operator(&grid, BoundaryCondition::Dirichlet, Coefficients::heat(0.5, 0.2))
            .unwrap();
        let dt = 5e-4;
        let dense = op.assemble_dense().scale(c(dt, 0.0)).expm().unwrap();
        let prop = make_propagator(op, dt, PropagatorKind::Exact).unwrap();
        let v: Vec<Complex64> = (0..31).map(|i| c((i as f64 * 0.3).sin(), 0.0)).collect();
        let want = dense.matvec(&v);
        let got = prop.apply(&v);
        for i in 0..v.len() {
            assert!((want[i] - got[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn pade_steps_match_dense_rational_oracle() {
        let grid = Grid::from_resolution(BoundaryCondition::Dirichlet, 12, 0.0, 1.0).unwrap();
        let op = build_operator(&grid, BoundaryCondition::Dirichlet, Coefficients::heat(1.0, 0.0))
            .unwrap();
        let a = op.assemble_dense();
        let dt = 0.003;
        let id = ZMat::identity(11);
        let v: Vec<Complex64> = (0..11).map(|i| c(1.0 / (1.0 + i as f64), 0.2)).collect();

        let num2 = id.add(&a.scale(c(dt / 2.0, 0.0)));
        let den2 = id.sub(&a.scale(c(dt / 2.0, 0.0)));
        let want2 = den2.solve(&num2.matvec(&v)).unwrap();
        let got2 = make_propagator(op.clone(), dt, PropagatorKind::Pade2)
            .unwrap()
            .apply(&v);
        for i in 0..11 {
            assert!((want2[i] - got2[i]).norm() < 1e-11);
        }

        let a2 = a.matmul(&a);
        let num3 = id
            .add(&a.scale(c(2.0 * dt / 3.0, 0.0)))
            .add(&a2.scale(c(dt * dt / 6.0, 0.0)));
        let den3 = id.sub(&a.scale(c(dt / 3.0, 0.0)));
        let want3 = den3.solve(&num3.matvec(&v)).unwrap();
        let got3 = make_propagator(op, dt, PropagatorKind::Pade3)
            .unwrap()
            .apply(&v);
        for i in 0..11 {
            assert!((want3[i] - got3[i]).norm() < 1e-11);
        }
    }

    #[test]
    fn power_apply_equals_repeated_steps() {
        let grid = Grid::from_resolution(BoundaryCondition::Neumann, 10, 0.0, 1.0).unwrap();
        let op = build_operator(&grid, BoundaryCondition::Neumann, Coefficients::heat(1.0, 0.1))
            .unwrap();
        let prop = make_propagator(op, 0.01, PropagatorKind::Pade2).unwrap();
        let v: Vec<Complex64> = (0..10).map(|i| c(i as f64, -0.5)).collect();
        let mut stepped = v.clone();
        for _ in 0..3 {
            stepped = prop.apply(&stepped);
        }
        let powered = prop.power_apply(&v, 3);
        for i in 0..10 {
            assert!((stepped[i] - powered[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn pade_orders_improve_under_dt_halving() {
        // Deep in the asymptotic regime (|dt d| <= 0.05) the max multiplier
        // error contracts by ~2^3 (Pade2) and ~2^4 (Pade3) per halving.
        let grid = Grid::from_resolution(BoundaryCondition::Dirichlet, 16, 0.0, 1.0).unwrap();
        let op = build_operator(&grid, BoundaryCondition::Dirichlet, Coefficients::heat(1.0, 0.0))
            .unwrap();
        let stiffest = op
            .eigenvalues()
            .iter()
            .map(|d| d.norm())
            .fold(0.0, f64::max);
        let dt = 0.05 / stiffest;
        for (kind, factor) in [(PropagatorKind::Pade2, 7.5), (PropagatorKind::Pade3, 15.0)] {
            let err = |step: f64| -> f64 {
                let p = make_propagator(op.clone(), step, kind).unwrap();
                p.multipliers()
                    .iter()
                    .zip(op.eigenvalues())
                    .map(|(m, d)| (m - (d * step).exp()).norm())
                    .fold(0.0, f64::max)
            };
            let coarse = err(dt);
            let fine = err(dt / 2.0);
            assert!(
                coarse / fine >= factor,
                "{kind:?}: ratio {} below {factor}",
                coarse / fine
            );
        }
    }

    #[test]
    fn pade3_amplifies_beyond_its_real_stability_interval() {
        assert!((multiplier(PropagatorKind::Pade3, c(-6.0, 0.0)).norm() - 1.0).abs() < 1e-12);
        assert!(multiplier(PropagatorKind::Pade3, c(-5.9, 0.0)).norm() < 1.0);
        assert!(multiplier(PropagatorKind::Pade3, c(-6.1, 0.0)).norm() > 1.0);
    }

    #[test]
    fn rejects_nonpositive_time_step() {
        let op = reaction_op(2, 1.0);
        assert!(make_propagator(op, 0.0, PropagatorKind::Exact).is_err());
    }

    proptest! {
        #[test]
        fn prop_stability_on_negative_axis(x in -6.0f64..0.0) {
            let z = c(x, 0.0);
            prop_assert!(multiplier(PropagatorKind::Exact, z).norm() <= 1.0 + 1e-12);
            prop_assert!(multiplier(PropagatorKind::Pade2, z).norm() <= 1.0 + 1e-12);
            prop_assert!(multiplier(PropagatorKind::Pade3, z).norm() <= 1.0 + 1e-12);
        }

        #[test]
        fn prop_trapezoidal_is_unconditionally_contractive(re in -1e6f64..0.0, im in -1e3f64..1e3) {
            let z = c(re, im);
            prop_assert!(multiplier(PropagatorKind::Pade2, z).norm() <= 1.0 + 1e-12);
        }
    }
}
