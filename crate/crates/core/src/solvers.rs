//! Iterative drivers for the stacked system: stationary Richardson, the
//! head-condition waveform sweep for one-step schemes, unrestarted GMRES, and
//! BiCGStab. All Krylov drivers are left-preconditioned: they iterate on
//! `P^{-1} Q` with right-hand side `P^{-1} f` and report preconditioned
//! residuals.
//!
//! Conventions shared by every driver:
//! - zero initial guess unless a guess is passed explicitly;
//! - `residual_history[k]` is the preconditioned residual of iterate `k`
//!   relative to iterate 0 (so entry 0 is 1);
//! - `error_history[k]`, when a reference is available, is the largest
//!   pointwise distance of iterate `k` from the reference, starting with the
//!   initial guess at entry 0;
//! - inner products and norms are accumulated sequentially so repeated runs
//!   are bit-identical; the heavy lifting (operator and preconditioner
//!   applications) parallelizes internally over disjoint blocks.

use std::time::Instant;

use num_complex::Complex64;

use crate::allatonce::{sequential_solve, AllAtOnceOperator, ParaDiagPreconditioner, TimeScheme};
use crate::circulant::AlphaCirculant;
use crate::propagator::Propagator;
use crate::{BlockVector, Error, IterationReport, Result, Termination};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Shared bookkeeping for the stationary iterations: histories, the stopping
/// test, and detection of divergence (three consecutive growth steps) or
/// stagnation (three consecutive improvements under one percent).
///
/// The gating quantity is the error when a reference is tracked, the residual
/// otherwise.
pub struct ConvergenceTracker {
    tol: f64,
    residual_history: Vec<f64>,
    error_history: Vec<f64>,
    rises: usize,
    stalls: usize,
    last_gate: Option<f64>,
    started: Instant,
}

impl ConvergenceTracker {
    pub fn new(tol: f64) -> Self {
        Self {
            tol,
            residual_history: vec![1.0],
            error_history: Vec::new(),
            rises: 0,
            stalls: 0,
            last_gate: None,
            started: Instant::now(),
        }
    }

    /// Error of the initial guess (entry 0 of the error history).
    pub fn push_initial_error(&mut self, e: f64) {
        debug_assert!(self.error_history.is_empty());
        self.error_history.push(e);
    }

    /// Record iterate `k`'s residual and (optionally) error. `Some` means the
    /// iteration should stop with that verdict.
    pub fn record(&mut self, residual: f64, error: Option<f64>) -> Option<Termination> {
        self.residual_history.push(residual);
        if let Some(e) = error {
            self.error_history.push(e);
        }
        let gate = error.unwrap_or(residual);
        if !gate.is_finite() {
            return Some(Termination::Diverged);
        }
        if gate < self.tol {
            return Some(Termination::Converged);
        }
        if let Some(prev) = self.last_gate {
            if gate > prev {
                self.rises += 1;
            } else {
                self.rises = 0;
            }
            if gate > 0.99 * prev {
                self.stalls += 1;
            } else {
                self.stalls = 0;
            }
            if self.rises >= 3 {
                return Some(Termination::Diverged);
            }
            if self.stalls >= 3 {
                return Some(Termination::Stagnated);
            }
        }
        self.last_gate = Some(gate);
        None
    }

    pub fn finish(self, iterations: usize, termination: Termination) -> IterationReport {
        IterationReport {
            iterations,
            residual_history: self.residual_history,
            error_history: self.error_history,
            termination,
            wall_seconds: self.started.elapsed().as_secs_f64(),
        }
    }
}

fn check_block_shape(system: &AllAtOnceOperator, v: &BlockVector, what: &str) -> Result<()> {
    if v.n_blocks() != system.n_blocks() || v.block_len() != system.block_len() {
        return Err(Error::Dimension(format!(
            "{what} is {}x{}, the system needs {}x{}",
            v.n_blocks(),
            v.block_len(),
            system.n_blocks(),
            system.block_len()
        )));
    }
    Ok(())
}

fn check_tol(tol: f64) -> Result<()> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    Ok(())
}

/// `P^{-1} (rhs - Q u)`.
fn preconditioned_residual(
    system: &AllAtOnceOperator,
    precond: &ParaDiagPreconditioner,
    rhs: &BlockVector,
    u: &BlockVector,
) -> BlockVector {
    let mut t = system.apply_system(u);
    for (d, r) in t.as_mut_slice().iter_mut().zip(rhs.as_slice()) {
        *d = r - *d;
    }
    precond.apply(&t)
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn axpy(alpha: Complex64, x: &BlockVector, y: &mut BlockVector) {
    for (yi, xi) in y.as_mut_slice().iter_mut().zip(x.as_slice()) {
        *yi += alpha * xi;
    }
}

/// Stationary update `u <- u + P^{-1}(f - Q u)`.
///
/// Stops when the error against `reference` (when given, measured pointwise)
/// or otherwise the relative preconditioned residual drops below `tol`. A
/// `guess` of `None` starts from zero.
pub fn richardson_solve(
    system: &AllAtOnceOperator,
    precond: &ParaDiagPreconditioner,
    rhs: &BlockVector,
    guess: Option<&BlockVector>,
    tol: f64,
    maxit: usize,
    reference: Option<&BlockVector>,
) -> Result<(BlockVector, IterationReport)> {
    check_tol(tol)?;
    check_block_shape(system, rhs, "right-hand side")?;
    if let Some(g) = guess {
        check_block_shape(system, g, "initial guess")?;
    }
    if let Some(r) = reference {
        check_block_shape(system, r, "reference")?;
    }

    let mut tracker = ConvergenceTracker::new(tol);
    let mut u = guess
        .cloned()
        .unwrap_or_else(|| BlockVector::zeros(system.n_blocks(), system.block_len()));
    let initial_error = reference.map(|r| u.max_block_distance(r));
    if let Some(e) = initial_error {
        tracker.push_initial_error(e);
    }

    // The correction for the first update doubles as iterate 0's residual.
    let mut s = preconditioned_residual(system, precond, rhs, &u);
    let denom = s.norm_2().max(f64::MIN_POSITIVE);
    let converged_at_start = match initial_error {
        Some(e) => e < tol,
        None => s.norm_2() == 0.0,
    };
    if converged_at_start {
        return Ok((u, tracker.finish(0, Termination::Converged)));
    }

    for k in 1..=maxit {
        for (ui, si) in u.as_mut_slice().iter_mut().zip(s.as_slice()) {
            *ui += si;
        }
        s = preconditioned_residual(system, precond, rhs, &u);
        let error = reference.map(|r| u.max_block_distance(r));
        if let Some(t) = tracker.record(s.norm_2() / denom, error) {
            return Ok((u, tracker.finish(k, t)));
        }
    }
    Ok((u, tracker.finish(maxit, Termination::MaxIterations)))
}

/// One-step-scheme fixed point iteration in head-condition form: each sweep
/// solves the time-circulant completion with the head value
/// `u_0 - alpha * u_last^{previous sweep}` and then propagates forward. The
/// iterates coincide with [`richardson_solve`] from a zero guess; the sweep
/// form exposes the scalar per-mode recursion the contraction theory reads
/// off directly.
///
/// The reference trajectory is computed internally (one sequential
/// integration), so `error_history` is always populated and gates the stop.
pub fn waveform_iterate(
    propagator: &Propagator,
    alpha: f64,
    u_0: &[Complex64],
    n_time: usize,
    tol: f64,
    maxit: usize,
) -> Result<(BlockVector, IterationReport)> {
    check_tol(tol)?;
    let op = propagator.op();
    let n = op.n_points();
    if u_0.len() != n {
        return Err(Error::Dimension(format!(
            "initial state has {} entries, operator has {n}",
            u_0.len()
        )));
    }
    if n_time == 0 {
        return Err(Error::InvalidParameter("n_time must be positive".into()));
    }
    if alpha != 0.0 {
        // Reuse the circulant's range validation.
        AlphaCirculant::new(n_time, 1, alpha)?;
    }

    let m = n_time;
    let mults = propagator.multipliers();
    let denoms: Vec<Complex64> = mults
        .iter()
        .map(|&mj| ONE - mj.powu(m as u32) * alpha)
        .collect();
    if let Some(d) = denoms.iter().find(|d| d.norm() < 1e-14) {
        return Err(Error::Breakdown(format!(
            "head-condition divisor vanishes (1 - alpha * m^n_time = {d})"
        )));
    }

    let scheme = TimeScheme::bdf(1).expect("order 1 is always valid");
    let reference = {
        let traj = sequential_solve(&scheme, propagator, u_0, m);
        BlockVector::from_blocks(&traj[1..])?
    };

    let mut work = op.make_work();
    let mut u0_hat = u_0.to_vec();
    op.forward_transform(&mut u0_hat, &mut work);

    let mut tracker = ConvergenceTracker::new(tol);
    tracker.push_initial_error(reference.norm_inf());
    let mut last_hat = vec![ZERO; n];
    let mut u = BlockVector::zeros(m, n);
    let mut prev = u.clone();
    let mut denom = None;

    for k in 1..=maxit {
        let mut hat: Vec<Complex64> = (0..n)
            .map(|j| mults[j] * (u0_hat[j] - last_hat[j] * alpha) / denoms[j])
            .collect();
        for t in 0..m {
            if t > 0 {
                for j in 0..n {
                    hat[j] *= mults[j];
                }
            }
            let dst = u.block_mut(t);
            dst.copy_from_slice(&hat);
            op.inverse_transform(dst, &mut work);
        }
        last_hat.copy_from_slice(&hat);

        let update = u.max_block_distance(&prev);
        let d = *denom.get_or_insert(update.max(f64::MIN_POSITIVE));
        let error = u.max_block_distance(&reference);
        if let Some(t) = tracker.record(update / d, Some(error)) {
            return Ok((u, tracker.finish(k, t)));
        }
        prev.as_mut_slice().copy_from_slice(u.as_slice());
    }
    Ok((u, tracker.finish(maxit, Termination::MaxIterations)))
}

/// Unitary Givens rotation `[[c, s], [-conj(s), c]]` (real `c`) taking
/// `(a, b)` to `(r, 0)`. Returns `(c, s, r)`.
fn givens(a: Complex64, b: Complex64) -> (f64, Complex64, Complex64) {
    let na = a.norm();
    let nb = b.norm();
    if nb == 0.0 {
        return (1.0, ZERO, a);
    }
    if na == 0.0 {
        return (0.0, b.conj() / nb, Complex64::new(nb, 0.0));
    }
    let r = na.hypot(nb);
    (na / r, a * b.conj() / (r * na), a * (r / na))
}

/// Full (unrestarted) GMRES on the left-preconditioned system, modified
/// Gram-Schmidt orthogonalization, Givens-rotation least squares. Stops on
/// the relative preconditioned residual; an invariant Krylov subspace (happy
/// breakdown) counts as convergence.
pub fn gmres_solve(
    system: &AllAtOnceOperator,
    precond: &ParaDiagPreconditioner,
    rhs: &BlockVector,
    tol: f64,
    maxit: usize,
) -> Result<(BlockVector, IterationReport)> {
    check_tol(tol)?;
    check_block_shape(system, rhs, "right-hand side")?;
    let started = Instant::now();
    let (m_blocks, n) = (system.n_blocks(), system.block_len());

    let b = precond.apply(rhs);
    let beta = b.norm_2();
    let mut residual_history = vec![1.0];
    if beta == 0.0 {
        return Ok((
            BlockVector::zeros(m_blocks, n),
            IterationReport {
                iterations: 0,
                residual_history,
                error_history: Vec::new(),
                termination: Termination::Converged,
                wall_seconds: started.elapsed().as_secs_f64(),
            },
        ));
    }

    let mut basis: Vec<BlockVector> = Vec::with_capacity(maxit.min(64) + 1);
    {
        let mut v0 = b;
        let inv = 1.0 / beta;
        for z in v0.as_mut_slice().iter_mut() {
            *z *= inv;
        }
        basis.push(v0);
    }
    // Columns of the rotated Hessenberg factor; column j keeps entries 0..=j.
    let mut h_cols: Vec<Vec<Complex64>> = Vec::new();
    let mut rotations: Vec<(f64, Complex64)> = Vec::new();
    let mut g = vec![Complex64::new(beta, 0.0)];
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;

    for j in 0..maxit {
        let mut w = precond.apply(&system.apply_system(&basis[j]));
        let w_scale = w.norm_2();
        let mut col = Vec::with_capacity(j + 2);
        for v in basis.iter() {
            let hij = dot(v.as_slice(), w.as_slice());
            axpy(-hij, v, &mut w);
            col.push(hij);
        }
        let h_last = w.norm_2();
        if !h_last.is_finite() {
            return Err(Error::NonFinite("GMRES basis expansion".into()));
        }

        for (i, &(c, s)) in rotations.iter().enumerate() {
            let t0 = col[i];
            let t1 = col[i + 1];
            col[i] = t0 * c + s * t1;
            col[i + 1] = -s.conj() * t0 + t1 * c;
        }
        let (c, s, r) = givens(col[j], Complex64::new(h_last, 0.0));
        col[j] = r;
        rotations.push((c, s));
        g.push(-s.conj() * g[j]);
        g[j] *= c;
        h_cols.push(col);

        iterations = j + 1;
        let rel = g[j + 1].norm() / beta;
        residual_history.push(rel);

        let happy = h_last <= 1e-14 * w_scale.max(1.0);
        if rel < tol || happy {
            termination = Termination::Converged;
            break;
        }
        let inv = 1.0 / h_last;
        for z in w.as_mut_slice().iter_mut() {
            *z *= inv;
        }
        basis.push(w);
    }

    // Back substitution for the least-squares coefficients.
    let k = iterations;
    let mut y = vec![ZERO; k];
    for i in (0..k).rev() {
        let mut acc = g[i];
        for j in (i + 1)..k {
            acc -= h_cols[j][i] * y[j];
        }
        let diag = h_cols[i][i];
        if diag.norm() == 0.0 {
            return Err(Error::Breakdown(
                "singular least-squares factor in GMRES".into(),
            ));
        }
        y[i] = acc / diag;
    }
    let mut x = BlockVector::zeros(m_blocks, n);
    for (j, yj) in y.iter().enumerate() {
        axpy(*yj, &basis[j], &mut x);
    }

    Ok((
        x,
        IterationReport {
            iterations,
            residual_history,
            error_history: Vec::new(),
            termination,
            wall_seconds: started.elapsed().as_secs_f64(),
        },
    ))
}

/// BiCGStab on the left-preconditioned system with the same stopping rule as
/// [`gmres_solve`]. Each iteration applies the preconditioned operator twice.
pub fn bicgstab_solve(
    system: &AllAtOnceOperator,
    precond: &ParaDiagPreconditioner,
    rhs: &BlockVector,
    tol: f64,
    maxit: usize,
) -> Result<(BlockVector, IterationReport)> {
    check_tol(tol)?;
    check_block_shape(system, rhs, "right-hand side")?;
    let started = Instant::now();
    let (m_blocks, n) = (system.n_blocks(), system.block_len());
    let apply = |v: &BlockVector| precond.apply(&system.apply_system(v));

    let b = precond.apply(rhs);
    let bnorm = b.norm_2();
    let mut residual_history = vec![1.0];
    let finish = |x: BlockVector,
                  iterations: usize,
                  residual_history: Vec<f64>,
                  termination: Termination,
                  started: Instant| {
        Ok((
            x,
            IterationReport {
                iterations,
                residual_history,
                error_history: Vec::new(),
                termination,
                wall_seconds: started.elapsed().as_secs_f64(),
            },
        ))
    };
    if bnorm == 0.0 {
        return finish(
            BlockVector::zeros(m_blocks, n),
            0,
            residual_history,
            Termination::Converged,
            started,
        );
    }

    let mut x = BlockVector::zeros(m_blocks, n);
    let r_hat = b.clone();
    let mut r = b;
    let mut p = BlockVector::zeros(m_blocks, n);
    let mut v = BlockVector::zeros(m_blocks, n);
    let mut rho = ONE;
    let mut alpha = ONE;
    let mut omega = ONE;

    for k in 1..=maxit {
        let rho_next = dot(r_hat.as_slice(), r.as_slice());
        if rho_next.norm() < 1e-300 {
            return Err(Error::Breakdown(
                "BiCGStab rho vanished (restart with a different shadow vector)".into(),
            ));
        }
        if k == 1 {
            p = r.clone();
        } else {
            let beta = (rho_next / rho) * (alpha / omega);
            // p = r + beta (p - omega v)
            for i in 0..p.len() {
                let pi = p.as_slice()[i];
                let vi = v.as_slice()[i];
                p.as_mut_slice()[i] = r.as_slice()[i] + beta * (pi - omega * vi);
            }
        }
        rho = rho_next;
        v = apply(&p);
        let rv = dot(r_hat.as_slice(), v.as_slice());
        if rv.norm() < 1e-300 {
            return Err(Error::Breakdown("BiCGStab direction collapsed".into()));
        }
        alpha = rho / rv;

        // s = r - alpha v (reuse r)
        axpy(-alpha, &v, &mut r);
        let snorm = r.norm_2();
        if snorm / bnorm < tol {
            axpy(alpha, &p, &mut x);
            residual_history.push(snorm / bnorm);
            return finish(x, k, residual_history, Termination::Converged, started);
        }

        let t = apply(&r);
        let tt = dot(t.as_slice(), t.as_slice());
        if tt.norm() < 1e-300 {
            return Err(Error::Breakdown("BiCGStab stabilization collapsed".into()));
        }
        omega = dot(t.as_slice(), r.as_slice()) / tt;
        if omega.norm() < 1e-300 {
            return Err(Error::Breakdown("BiCGStab omega vanished".into()));
        }
        axpy(alpha, &p, &mut x);
        axpy(omega, &r, &mut x);
        // r = s - omega t
        axpy(-omega, &t, &mut r);
        let rnorm = r.norm_2();
        if !rnorm.is_finite() {
            return Err(Error::NonFinite("BiCGStab residual".into()));
        }
        residual_history.push(rnorm / bnorm);
        if rnorm / bnorm < tol {
            return finish(x, k, residual_history, Termination::Converged, started);
        }
    }
    let iterations = maxit;
    finish(
        x,
        iterations,
        residual_history,
        Termination::MaxIterations,
        started,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagator::{make_propagator, PropagatorKind};
    use crate::spatial::{build_operator, BoundaryCondition, Coefficients, Grid};
    use proptest::prelude::*;

    fn heat_system(
        m_res: usize,
        a: f64,
        dt: f64,
        s: usize,
        n_time: usize,
    ) -> (AllAtOnceOperator, BlockVector, BlockVector) {
        let grid = Grid::from_resolution(BoundaryCondition::Dirichlet, m_res, 0.0, 1.0).unwrap();
        let op = build_operator(&grid, BoundaryCondition::Dirichlet, Coefficients::heat(a, 0.0))
            .unwrap();
        let u0 = op.sample(|x| Complex64::new((-30.0 * x[0] * x[0]).exp(), 0.0));
        let prop = make_propagator(op, dt, PropagatorKind::Exact).unwrap();
        let scheme = TimeScheme::bdf(s).unwrap();
        let traj = sequential_solve(&scheme, &prop, &u0, n_time);
        let sys = AllAtOnceOperator::new(scheme, prop, n_time).unwrap();
        let rhs = sys.build_rhs(&sys.startup_levels(&u0)).unwrap();
        let reference = sys.reference_blocks(&traj).unwrap();
        (sys, rhs, reference)
    }

    #[test]
    fn richardson_exact_guess_takes_zero_iterations() {
        let (sys, rhs, reference) = heat_system(16, 1.0, 0.05, 1, 8);
        let pc = ParaDiagPreconditioner::new(&sys, 0.1).unwrap();
        let (u, rep) =
            richardson_solve(&sys, &pc, &rhs, Some(&reference), 1e-10, 20, Some(&reference))
                .unwrap();
        assert_eq!(rep.iterations, 0);
        assert!(rep.converged());
        assert_eq!(u, reference);
    }

    #[test]
    fn richardson_zero_alpha_converges_in_one_iteration() {
        let (sys, rhs, reference) = heat_system(16, 1.0, 0.05, 2, 10);
        let pc = ParaDiagPreconditioner::new(&sys, 0.0).unwrap();
        let (u, rep) =
            richardson_solve(&sys, &pc, &rhs, None, 1e-10, 20, Some(&reference)).unwrap();
        assert_eq!(rep.iterations, 1);
        assert!(rep.converged());
        assert!(u.max_block_distance(&reference) < 1e-11);
    }

    #[test]
    fn richardson_error_ratios_stay_below_head_condition_factor() {
        let (sys, rhs, reference) = heat_system(32, 0.5, 1.0 / 32.0, 1, 32);
        let alpha = 0.1;
        let pc = ParaDiagPreconditioner::new(&sys, alpha).unwrap();
        let (_, rep) =
            richardson_solve(&sys, &pc, &rhs, None, 1e-10, 50, Some(&reference)).unwrap();
        assert!(rep.converged());
        let lam = sys.propagator().op().max_real_eigenvalue();
        let t_final = sys.propagator().dt() * sys.n_time() as f64;
        let rho = alpha * (lam * t_final).exp();
        let bound = rho / (1.0 - rho);
        // The bound is attained exactly by the slowest mode, so ratios are
        // only meaningful while the error sits well above the roundoff floor;
        // the slack covers the floor's additive contamination.
        for w in rep.error_history.windows(2) {
            if w[0] < 1e-6 * rep.error_history[0] {
                break;
            }
            let ratio = w[1] / w[0];
            assert!(
                ratio <= bound * (1.0 + 1e-5),
                "ratio {ratio} above bound {bound}"
            );
        }
    }

    #[test]
    fn richardson_solution_matches_dense_solve() {
        let (sys, rhs, _) = heat_system(8, 1.0, 0.05, 2, 8);
        let pc = ParaDiagPreconditioner::new(&sys, 0.05).unwrap();
        let (u, rep) = richardson_solve(&sys, &pc, &rhs, None, 1e-13, 60, None).unwrap();
        assert!(rep.converged());
        let want = sys.assemble_dense().unwrap().solve(rhs.as_slice()).unwrap();
        for i in 0..want.len() {
            assert!((u.as_slice()[i] - want[i]).norm() < 1e-10);
        }
    }

    #[test]
    fn waveform_iterates_match_richardson_iterates() {
        let grid = Grid::from_resolution(BoundaryCondition::Dirichlet, 12, 0.0, 1.0).unwrap();
        let op = build_operator(&grid, BoundaryCondition::Dirichlet, Coefficients::heat(1.0, 0.0))
            .unwrap();
        let u0 = op.sample(|x| Complex64::new((std::f64::consts::PI * x[0]).sin() + 0.3, 0.0));
        let prop = make_propagator(op, 0.05, PropagatorKind::Exact).unwrap();
        let n_time = 10;
        let alpha = 0.2;
        let sys = AllAtOnceOperator::new(TimeScheme::bdf(1).unwrap(), prop.clone(), n_time).unwrap();
        let pc = ParaDiagPreconditioner::new(&sys, alpha).unwrap();
        let rhs = sys.build_rhs(&sys.startup_levels(&u0)).unwrap();
        for k in 1..=4 {
            let (uw, rw) = waveform_iterate(&prop, alpha, &u0, n_time, 1e-300, k).unwrap();
            assert_eq!(rw.iterations, k);
            let (ur, rr) = richardson_solve(&sys, &pc, &rhs, None, 1e-300, k, None).unwrap();
            assert_eq!(rr.iterations, k);
            let scale = 1.0 + uw.norm_inf();
            assert!(
                uw.max_block_distance(&ur) < 1e-12 * scale,
                "sweep {k}: head-condition and stationary iterates differ by {}",
                uw.max_block_distance(&ur)
            );
        }
    }

    #[test]
    fn waveform_eigenvector_contraction_is_the_scalar_factor() {
        let grid = Grid::from_resolution(BoundaryCondition::Dirichlet, 16, 0.0, 1.0).unwrap();
        let op = build_operator(&grid, BoundaryCondition::Dirichlet, Coefficients::heat(0.02, 0.0))
            .unwrap();
        // Lowest sine mode is an exact eigenvector of the stencil.
        let u0 = op.sample(|x| Complex64::new((std::f64::consts::PI * x[0]).sin(), 0.0));
        let lam = op.max_real_eigenvalue();
        let dt = 0.1;
        let n_time = 10;
        let alpha = 0.1;
        let prop = make_propagator(op, dt, PropagatorKind::Exact).unwrap();
        let (_, rep) = waveform_iterate(&prop, alpha, &u0, n_time, 1e-12, 30).unwrap();
        assert!(rep.converged());
        let rho = alpha * (lam * dt * n_time as f64).exp();
        let psi = rho / (1.0 - rho);
        // Stay far enough above the roundoff floor that the quotient carries
        // ten accurate digits.
        for w in rep.error_history.windows(2) {
            if w[1] < 1e-4 {
                break;
            }
            let ratio = w[1] / w[0];
            assert!(
                (ratio - psi).abs() < 1e-10,
                "eigenvector ratio {ratio} differs from scalar factor {psi}"
            );
        }
    }

    #[test]
    fn waveform_alpha_zero_converges_in_one_sweep() {
        let grid = Grid::from_resolution(BoundaryCondition::Dirichlet, 8, 0.0, 1.0).unwrap();
        let op = build_operator(&grid, BoundaryCondition::Dirichlet, Coefficients::heat(1.0, 0.0))
            .unwrap();
        let u0 = op.sample(|x| Complex64::new(x[0] * (1.0 - x[0]), 0.0));
        let prop = make_propagator(op, 0.1, PropagatorKind::Exact).unwrap();
        let (_, rep) = waveform_iterate(&prop, 0.0, &u0, 6, 1e-12, 5).unwrap();
        assert_eq!(rep.iterations, 1);
        assert!(rep.converged());
    }

    #[test]
    fn gmres_exactly_preconditioned_system_takes_one_iteration() {
        let (sys, rhs, _) = heat_system(12, 1.0, 0.05, 1, 8);
        let pc = ParaDiagPreconditioner::new(&sys, 0.0).unwrap();
        let (u, rep) = gmres_solve(&sys, &pc, &rhs, 1e-10, 30).unwrap();
        assert_eq!(rep.iterations, 1);
        assert!(rep.converged());
        let want = sys.assemble_dense().unwrap().solve(rhs.as_slice()).unwrap();
        for i in 0..want.len() {
            assert!((u.as_slice()[i] - want[i]).norm() < 1e-10);
        }
    }

    #[test]
    fn gmres_residuals_are_monotone_and_solution_is_accurate() {
        let (sys, rhs, _) = heat_system(10, 1.0, 0.02, 2, 12);
        let pc = ParaDiagPreconditioner::new(&sys, 0.3).unwrap();
        let (u, rep) = gmres_solve(&sys, &pc, &rhs, 1e-12, 60).unwrap();
        assert!(rep.converged());
        for w in rep.residual_history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-14));
        }
        let want = sys.assemble_dense().unwrap().solve(rhs.as_slice()).unwrap();
        let scale = want.iter().map(|z| z.norm()).fold(0.0, f64::max);
        for i in 0..want.len() {
            assert!((u.as_slice()[i] - want[i]).norm() < 1e-9 * (1.0 + scale));
        }
    }

    #[test]
    fn gmres_terminates_within_the_rank_bound() {
        // The preconditioned system differs from the identity by a low-rank
        // correction, so full GMRES must terminate once the rank is exhausted.
        for (s, cap) in [(1usize, 5usize), (2, 9)] {
            let grid = Grid::from_resolution(BoundaryCondition::Dirichlet, 5, 0.0, 1.0).unwrap();
            let op =
                build_operator(&grid, BoundaryCondition::Dirichlet, Coefficients::heat(1.0, 0.0))
                    .unwrap();
            assert_eq!(op.n_points(), 4);
            let u0 = op.sample(|x| Complex64::new(1.0 + x[0], 0.0));
            let prop = make_propagator(op, 0.1, PropagatorKind::Exact).unwrap();
            let scheme = TimeScheme::bdf(s).unwrap();
            let sys = AllAtOnceOperator::new(scheme, prop, 6).unwrap();
            let rhs = sys.build_rhs(&sys.startup_levels(&u0)).unwrap();
            let pc = ParaDiagPreconditioner::new(&sys, 0.4).unwrap();
            let (_, rep) = gmres_solve(&sys, &pc, &rhs, 1e-13, 40).unwrap();
            assert!(rep.converged());
            assert!(
                rep.iterations <= cap,
                "s={s}: {} iterations, cap {cap}",
                rep.iterations
            );
        }
    }

    #[test]
    fn bicgstab_agrees_with_gmres() {
        let (sys, rhs, _) = heat_system(14, 0.7, 0.04, 1, 10);
        let pc = ParaDiagPreconditioner::new(&sys, 0.2).unwrap();
        let (ug, rg) = gmres_solve(&sys, &pc, &rhs, 1e-11, 50).unwrap();
        let (ub, rb) = bicgstab_solve(&sys, &pc, &rhs, 1e-11, 50).unwrap();
        assert!(rg.converged() && rb.converged());
        let scale = 1.0 + ug.norm_inf();
        assert!(ug.max_block_distance(&ub) < 1e-8 * scale);
    }

    #[test]
    fn bicgstab_zero_rhs_returns_zero_without_iterating() {
        let (sys, _, _) = heat_system(8, 1.0, 0.05, 1, 6);
        let pc = ParaDiagPreconditioner::new(&sys, 0.1).unwrap();
        let zero = BlockVector::zeros(sys.n_blocks(), sys.block_len());
        let (u, rep) = bicgstab_solve(&sys, &pc, &zero, 1e-10, 10).unwrap();
        assert_eq!(rep.iterations, 0);
        assert!(rep.converged());
        assert_eq!(u.norm_inf(), 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let (sys, rhs, _) = heat_system(8, 1.0, 0.05, 1, 6);
        let pc = ParaDiagPreconditioner::new(&sys, 0.1).unwrap();
        assert!(richardson_solve(&sys, &pc, &rhs, None, 0.0, 5, None).is_err());
        let short = BlockVector::zeros(2, 3);
        assert!(gmres_solve(&sys, &pc, &short, 1e-10, 5).is_err());
        assert!(bicgstab_solve(&sys, &pc, &short, 1e-10, 5).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn prop_gmres_matches_dense_solve(
            s in 1usize..4,
            m_res in 5usize..9,
            n_extra in 0usize..5,
            alpha in 0.02f64..0.4,
        ) {
            let n_time = s + 3 + n_extra;
            let (sys, rhs, _) = heat_system(m_res, 1.0, 0.05, s, n_time);
            let pc = ParaDiagPreconditioner::new(&sys, alpha).unwrap();
            let (u, rep) = gmres_solve(&sys, &pc, &rhs, 1e-12, 80).unwrap();
            prop_assert!(rep.converged());
            let want = sys.assemble_dense().unwrap().solve(rhs.as_slice()).unwrap();
            let scale = want.iter().map(|z| z.norm()).fold(0.0, f64::max);
            for i in 0..want.len() {
                prop_assert!((u.as_slice()[i] - want[i]).norm() < 1e-8 * (1.0 + scale));
            }
        }
    }
}
