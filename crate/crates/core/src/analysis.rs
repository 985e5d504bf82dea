//! Dense certification of the preconditioner's spectral claims.
//!
//! The iterative solvers in this crate ship with sharp convergence
//! predictions: the stationary iteration contracts at a rate controlled by
//! the damping factor, the preconditioned spectrum clusters around one, and
//! the defect from the identity is confined to the trailing block columns
//! with rank at most `order * n_points`.  This module assembles small
//! instances densely and measures each of those quantities directly, so the
//! bounds the library advertises can be checked numerically instead of taken
//! on faith.  It also hosts the scalar-instance inequalities behind the
//! field-of-values residual envelopes and a halving search for the damping
//! factor that minimises the worst-mode contraction rate.
//!
//! Everything here is cubic-cost dense linear algebra intended for offline
//! studies and test suites, not production solves.  Size guards reject
//! instances that would silently take minutes, and the SVD-based structure
//! probes switch themselves off above [`STRUCTURE_LIMIT`] where they are both
//! slow and numerically meaningless (powers of the propagator spread the
//! singular values past double precision).

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::allatonce::{AllAtOnceOperator, TimeScheme};
use crate::circulant::{AlphaCirculant, MIN_ALPHA};
use crate::dense::ZMat;
use crate::propagator::{make_propagator, PropagatorKind};
use crate::spatial::SpectralOperator;
use crate::{Error, Result};

/// Largest assembled dimension (`n_points * n_blocks`) accepted by
/// [`preconditioned_spectrum`].  Above this the dense eigensolve alone takes
/// minutes; use the matrix-free solvers instead.
pub const DENSE_ANALYSIS_LIMIT: usize = 4000;

/// Largest assembled dimension for the SVD-based structure checks (numerical
/// rank, trailing-column support).  Above this the checks are skipped and
/// reported as `None`: the singular values of propagator powers underflow,
/// so a rank decision would be noise.
pub const STRUCTURE_LIMIT: usize = 1024;

/// Relative singular-value cutoff for numerical rank decisions.
const RANK_TOL: f64 = 1e-10;

fn check_order(order: usize) -> Result<()> {
    if order == 1 || order == 2 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "spectral analysis covers one- and two-step schemes, not order {order}"
        )))
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && (0.0..1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "damping factor {alpha} outside [0, 1)"
        )))
    }
}

/// Predicted contraction factor of the damped stationary iteration.
///
/// For the one-step scheme the rate is `alpha*q / (1 - alpha*q)` with
/// `q = exp(lambda_max * t_final)`, where `lambda_max` is the largest real
/// part of the spatial spectrum and `t_final` the horizon covered by the
/// unknown time levels.  The estimate requires `alpha * q < 1` and fails
/// otherwise.  For the two-step scheme the rate is `alpha / (1 - alpha)`,
/// independent of the spectrum.
pub fn theoretical_contraction(
    order: usize,
    alpha: f64,
    lambda_max: f64,
    t_final: f64,
) -> Result<f64> {
    check_order(order)?;
    check_alpha(alpha)?;
    match order {
        1 => {
            if !lambda_max.is_finite() || !t_final.is_finite() || t_final <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "contraction estimate needs a finite growth rate and a positive \
                     horizon, got lambda_max = {lambda_max}, t_final = {t_final}"
                )));
            }
            let q = (lambda_max * t_final).exp();
            let x = alpha * q;
            if x >= 1.0 {
                return Err(Error::InvalidParameter(format!(
                    "alpha * exp(lambda_max * t_final) = {x} >= 1; the contraction \
                     estimate is vacuous for this damping factor"
                )));
            }
            Ok(x / (1.0 - x))
        }
        _ => Ok(alpha / (1.0 - alpha)),
    }
}

/// Radius of the disk around one that contains the preconditioned spectrum.
///
/// One-step schemes cluster within `alpha / (1 - alpha)`; two-step schemes
/// within `(alpha + alpha^2) / (1 - alpha - alpha^2)`, which requires the
/// denominator to stay positive (`alpha` below the golden-ratio conjugate).
pub fn cluster_radius_bound(order: usize, alpha: f64) -> Result<f64> {
    check_order(order)?;
    check_alpha(alpha)?;
    match order {
        1 => Ok(alpha / (1.0 - alpha)),
        _ => {
            let s = alpha + alpha * alpha;
            let denom = 1.0 - s;
            if denom <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "clustering radius for the two-step scheme needs \
                     alpha + alpha^2 < 1, got {s}"
                )));
            }
            Ok(s / denom)
        }
    }
}

/// Closed-form nonzero eigenvalues of `I - P^{-1} Q` contributed by a single
/// spatial mode with per-step multiplier `multiplier`.
///
/// Eliminating the interior levels of the defect leaves a scalar per
/// characteristic root `rho` of the underlying step recursion: the one-step
/// scheme has the single root `multiplier`, the two-step scheme the pair
/// `{multiplier, multiplier / 3}`.  Each root contributes the eigenvalue
/// `-alpha * rho^n_blocks / (1 - alpha * rho^n_blocks)`; all remaining
/// eigenvalues of the defect vanish.
pub fn defect_mode_eigenvalues(
    order: usize,
    alpha: f64,
    multiplier: Complex64,
    n_blocks: usize,
) -> Result<Vec<Complex64>> {
    check_order(order)?;
    check_alpha(alpha)?;
    if n_blocks == 0 {
        return Err(Error::InvalidParameter(
            "defect eigenvalues need at least one unknown block".into(),
        ));
    }
    let roots: Vec<Complex64> = match order {
        1 => vec![multiplier],
        _ => vec![multiplier, multiplier / 3.0],
    };
    roots
        .into_iter()
        .map(|rho| {
            let p = rho.powu(n_blocks as u32);
            let denom = Complex64::new(1.0, 0.0) - alpha * p;
            if denom.norm() < 1e-300 {
                return Err(Error::InvalidParameter(format!(
                    "alpha * rho^{n_blocks} lands on 1 for rho = {rho}; the mode \
                     eigenvalue is unbounded"
                )));
            }
            Ok(-(alpha * p) / denom)
        })
        .collect()
}

/// Measured spectrum of a densely assembled preconditioned system, together
/// with the theoretical envelopes it is supposed to respect.
#[derive(Debug, Clone)]
pub struct SpectrumReport {
    /// Multistep order of the time discretisation.
    pub order: usize,
    /// Damping factor used to close the time circulant.
    pub alpha: f64,
    /// Largest real part of the spatial spectrum.
    pub lambda_max: f64,
    /// Horizon covered by the unknown time levels (`dt * n_blocks`).
    pub t_final: f64,
    /// Eigenvalues of the preconditioned system `P^{-1} Q`.
    pub eigenvalues: Vec<Complex64>,
    /// Spectral radius of the defect `I - P^{-1} Q`, i.e. the largest
    /// distance of a preconditioned eigenvalue from one.
    pub defect_radius: f64,
    /// Predicted contraction factor from [`theoretical_contraction`].
    pub contraction_bound: f64,
    /// Predicted clustering radius from [`cluster_radius_bound`].
    pub cluster_bound: f64,
    /// Whether the measured radius sits below both envelopes (up to a
    /// roundoff allowance of one part in 1e8).
    pub bound_satisfied: bool,
    /// Numerical rank of the defect; `None` above [`STRUCTURE_LIMIT`].
    pub defect_rank: Option<usize>,
    /// Structural rank cap, `order * n_points`.
    pub expected_rank: usize,
    /// Whether the defect is supported on its trailing `order` block columns
    /// and that column slab has full column rank, the structure behind the
    /// finite-termination estimate for the preconditioned Krylov solver.
    /// `None` above [`STRUCTURE_LIMIT`] or when `alpha == 0`.
    pub tail_columns_full_rank: Option<bool>,
}

impl SpectrumReport {
    /// Serialise the report: one metadata line, then the eigenvalues as
    /// `re,im` rows in full precision.
    pub fn to_csv(&self) -> String {
        let opt_usize = |v: Option<usize>| v.map(|r| r.to_string()).unwrap_or_default();
        let opt_bool = |v: Option<bool>| v.map(|b| b.to_string()).unwrap_or_default();
        let mut out = String::new();
        out.push_str(
            "order,alpha,lambda_max,t_final,defect_radius,contraction_bound,\
             cluster_bound,bound_satisfied,defect_rank,expected_rank,tail_columns_full_rank\n",
        );
        out.push_str(&format!(
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{},{},{}\n",
            self.order,
            self.alpha,
            self.lambda_max,
            self.t_final,
            self.defect_radius,
            self.contraction_bound,
            self.cluster_bound,
            self.bound_satisfied,
            opt_usize(self.defect_rank),
            self.expected_rank,
            opt_bool(self.tail_columns_full_rank),
        ));
        out.push_str("re,im\n");
        for z in &self.eigenvalues {
            out.push_str(&format!("{:.16e},{:.16e}\n", z.re, z.im));
        }
        out
    }
}

fn max_abs_entry(m: &ZMat) -> f64 {
    m.data().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// True when the defect vanishes outside its trailing `order` block columns
/// and the trailing column slab has full column rank.
fn tail_columns_carry_the_defect(
    defect: &ZMat,
    n_points: usize,
    n_blocks: usize,
    order: usize,
) -> Result<bool> {
    let dim = n_points * n_blocks;
    let tail = order.min(n_blocks) * n_points;
    let head = dim - tail;
    let overall = max_abs_entry(defect);
    if overall == 0.0 {
        return Ok(false);
    }
    let mut head_max = 0.0_f64;
    for c in 0..head {
        for r in 0..dim {
            head_max = head_max.max(defect[(r, c)].norm());
        }
    }
    if head_max > 1e-10 * overall {
        return Ok(false);
    }
    let slab = ZMat::from_fn(dim, tail, |r, c| defect[(r, head + c)]);
    let svs = slab.singular_values()?;
    let smax = svs.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return Ok(false);
    }
    Ok(svs.len() == tail && svs.iter().all(|&s| s > RANK_TOL * smax))
}

/// Assemble the preconditioned system densely and measure its spectrum
/// against the contraction and clustering envelopes.
///
/// The exact propagator of `op` is advanced with an `order`-step scheme over
/// `n_time` levels and closed with damping factor `alpha`.  With `alpha == 0`
/// the preconditioner equals the system and the report is trivially clean.
/// Structure probes (numerical rank, trailing-column support) run only up to
/// [`STRUCTURE_LIMIT`] unknowns.
pub fn preconditioned_spectrum(
    order: usize,
    op: &SpectralOperator,
    dt: f64,
    n_time: usize,
    alpha: f64,
) -> Result<SpectrumReport> {
    check_order(order)?;
    check_alpha(alpha)?;
    if !dt.is_finite() || dt <= 0.0 {
        return Err(Error::InvalidParameter(format!("step size {dt} must be positive")));
    }
    if n_time < order {
        return Err(Error::InvalidParameter(format!(
            "{n_time} time levels cannot seed a {order}-step scheme"
        )));
    }
    let n_points = op.n_points();
    let n_blocks = n_time - order + 1;
    let dim = n_points * n_blocks;
    if dim > DENSE_ANALYSIS_LIMIT {
        return Err(Error::InvalidParameter(format!(
            "assembled dimension {dim} exceeds the dense analysis limit {DENSE_ANALYSIS_LIMIT}"
        )));
    }
    let lambda_max = op.max_real_eigenvalue();
    let t_final = dt * n_blocks as f64;
    let contraction_bound = theoretical_contraction(order, alpha, lambda_max, t_final)?;
    let cluster_bound = cluster_radius_bound(order, alpha)?;
    let expected_rank = order * n_points;

    if alpha == 0.0 {
        return Ok(SpectrumReport {
            order,
            alpha,
            lambda_max,
            t_final,
            eigenvalues: vec![Complex64::new(1.0, 0.0); dim],
            defect_radius: 0.0,
            contraction_bound,
            cluster_bound,
            bound_satisfied: true,
            defect_rank: Some(0),
            expected_rank,
            tail_columns_full_rank: None,
        });
    }

    let propagator = make_propagator(op.clone(), dt, PropagatorKind::Exact)?;
    let system = AllAtOnceOperator::new(TimeScheme::bdf(order)?, propagator, n_time)?;
    let q = system.assemble_dense()?;
    let q_alpha = system.assemble_dense_preconditioner(alpha)?;
    let x = q_alpha.solve_mat(&q)?;
    let defect = ZMat::identity(dim).sub(&x);

    let mu = defect.eigenvalues()?;
    let defect_radius = mu.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let eigenvalues: Vec<Complex64> = mu.iter().map(|m| Complex64::new(1.0, 0.0) - m).collect();

    let (defect_rank, tail_columns_full_rank) = if dim <= STRUCTURE_LIMIT {
        let svs = defect.singular_values()?;
        let smax = svs.first().copied().unwrap_or(0.0);
        let rank = svs.iter().filter(|&&s| s > RANK_TOL * smax).count();
        let tail = tail_columns_carry_the_defect(&defect, n_points, n_blocks, order)?;
        (Some(rank), Some(tail))
    } else {
        (None, None)
    };

    let slack = |b: f64| b * (1.0 + 1e-8) + 1e-13;
    let bound_satisfied =
        defect_radius <= slack(contraction_bound) && defect_radius <= slack(cluster_bound);

    Ok(SpectrumReport {
        order,
        alpha,
        lambda_max,
        t_final,
        eigenvalues,
        defect_radius,
        contraction_bound,
        cluster_bound,
        bound_satisfied,
        defect_rank,
        expected_rank,
        tail_columns_full_rank,
    })
}

/// Model problem and search controls for the damping-factor search.
///
/// The model is a one-dimensional diffusion-reaction operator with diffusion
/// `a`, reaction `c`, homogeneous boundaries on the unit interval at spacing
/// `h`, integrated to `t_final`.
#[derive(Debug, Clone)]
pub struct AlphaSearchConfig {
    pub a: f64,
    pub c: f64,
    pub t_final: f64,
    pub h: f64,
    /// First damping factor tried; the search only ever halves it.
    pub initial_guess: f64,
    /// Smallest admissible candidate; halving stops once the next candidate
    /// would drop below this.
    pub x_tol: f64,
    /// Hard cap on objective evaluations.
    pub max_evals: usize,
}

impl AlphaSearchConfig {
    pub fn new(a: f64, c: f64, t_final: f64, h: f64) -> Self {
        Self {
            a,
            c,
            t_final,
            h,
            initial_guess: 0.1,
            x_tol: 1e-4,
            max_evals: 64,
        }
    }

    pub fn with_initial_guess(mut self, guess: f64) -> Self {
        self.initial_guess = guess;
        self
    }

    pub fn with_x_tol(mut self, x_tol: f64) -> Self {
        self.x_tol = x_tol;
        self
    }

    pub fn with_max_evals(mut self, max_evals: usize) -> Self {
        self.max_evals = max_evals;
        self
    }

    fn validate(&self) -> Result<()> {
        let ok = self.a.is_finite()
            && self.a >= 0.0
            && self.c.is_finite()
            && self.c >= 0.0
            && self.t_final.is_finite()
            && self.t_final > 0.0
            && self.h.is_finite()
            && self.h > 0.0
            && 1.0 / self.h >= 2.0
            && self.initial_guess.is_finite()
            && self.initial_guess > 0.0
            && self.initial_guess < 1.0
            && self.x_tol.is_finite()
            && self.x_tol > 0.0
            && self.max_evals >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "invalid damping search configuration: {self:?}"
            )))
        }
    }
}

/// Worst-mode contraction rate of the damped iteration on the model problem.
///
/// Every Fourier mode `omega` decays by `q = exp(-(a*omega^2 + c)*t_final)`
/// over the horizon and contributes the rate `alpha*q / (1 - alpha*q)`; the
/// objective is the maximum over the resolved frequencies `j*pi` up to the
/// grid cutoff `pi/h`.  The maximum is attained at the lowest frequency, but
/// the scan keeps the full grid so the evaluation stays honest if the decay
/// model changes.
pub fn alpha_objective(cfg: &AlphaSearchConfig, alpha: f64) -> Result<f64> {
    cfg.validate()?;
    check_alpha(alpha)?;
    let intervals = (1.0 / cfg.h).round() as usize;
    let mut worst = 0.0_f64;
    let frequencies = (1..intervals)
        .map(|j| j as f64 * PI)
        .chain(std::iter::once(PI / cfg.h));
    for omega in frequencies {
        let q = (-(cfg.a * omega * omega + cfg.c) * cfg.t_final).exp();
        let x = alpha * q;
        if x >= 1.0 {
            return Err(Error::InvalidParameter(format!(
                "alpha * q = {x} >= 1 at omega = {omega}; no contraction"
            )));
        }
        worst = worst.max(x / (1.0 - x));
    }
    Ok(worst)
}

/// Trace of a damping-factor search.
#[derive(Debug, Clone)]
pub struct AlphaSearchResult {
    /// Last accepted damping factor.
    pub alpha_opt: f64,
    /// Objective value at `alpha_opt`.
    pub objective: f64,
    /// Every `(alpha, objective)` pair evaluated, in order.
    pub evaluations: Vec<(f64, f64)>,
}

/// Monotone halving search for the damping factor.
///
/// Starting from `initial_guess`, each step proposes half the current factor
/// and accepts it when the objective improves, stopping at the resolution
/// floor `x_tol`, the evaluation cap, or the first non-improving candidate.
/// The worst-mode objective is strictly increasing in the damping factor, so
/// on the model problem the search walks the full halving schedule and the
/// result is determined by `initial_guess` and `x_tol` alone; the smallest
/// mode ratios are then traded against the roundoff amplification that very
/// small factors cause elsewhere, which is why the floor is kept coarse.
pub fn alpha_opt_search(cfg: &AlphaSearchConfig) -> Result<AlphaSearchResult> {
    cfg.validate()?;
    let mut alpha = cfg.initial_guess;
    let mut value = alpha_objective(cfg, alpha)?;
    let mut evaluations = vec![(alpha, value)];
    while alpha / 2.0 >= cfg.x_tol && evaluations.len() < cfg.max_evals {
        let candidate = alpha / 2.0;
        let cand_value = alpha_objective(cfg, candidate)?;
        evaluations.push((candidate, cand_value));
        if cand_value < value {
            alpha = candidate;
            value = cand_value;
        } else {
            break;
        }
    }
    Ok(AlphaSearchResult {
        alpha_opt: alpha,
        objective: value,
        evaluations,
    })
}

/// Measured scalar-instance quantities feeding the field-of-values residual
/// estimate, each next to its threshold.
///
/// All matrix quantities are evaluated on one-step scalar instances
/// `(I - y*C)^{-1} (I - y*T)` with `y` running over the supplied grid of
/// per-step decay factors in `(0, 1)`, `T` the pure time-shift and `C` its
/// damped circulant closure.
#[derive(Debug, Clone)]
pub struct SupportLemmaReport {
    pub alpha: f64,
    pub n_time: usize,
    /// Positivity of the discriminant-like polynomial `g` is guaranteed for
    /// damping factors below `2 / (1 + sqrt(n_time))`.
    pub g_threshold: f64,
    /// Smallest value of `g(y) = 4(1 - alpha*y^n)(1 - y^2) - alpha^2 (y^2 - y^{2n})`
    /// over the grid.
    pub g_min: f64,
    pub g_positive: bool,
    /// Both quadratic roots stay inside the unit disk for damping factors
    /// below `2 / (3 + sqrt(n_time))`.
    pub root_threshold: f64,
    /// Largest magnitude of the roots
    /// `(alpha*y/(1-alpha*y) +/- sqrt(tau(y))) / 2` over the grid.
    pub max_root_magnitude: f64,
    /// Closed-form supremum `alpha (1 + sqrt(n_time)) / (2 (1 - alpha))` of
    /// the larger root over `y` in `(0, 1)`.
    pub root_magnitude_bound: f64,
    pub roots_inside: bool,
    /// Smallest eigenvalue of the Hermitian part of the preconditioned
    /// instance over the grid.
    pub h_min_eigenvalue: f64,
    pub h_positive_definite: bool,
    /// Largest spectral norm of the Hermitian part of the defect over the
    /// grid.
    pub defect_h_norm: f64,
    pub defect_h_below_one: bool,
    /// Largest eigenvector condition number of the preconditioned instance
    /// over the grid.  No usable a-priori bound is known for it, so it is
    /// measured and reported rather than checked.
    pub eigenvector_condition: f64,
}

/// Evaluate the scalar-instance inequalities behind the residual envelopes.
///
/// Failures are findings, not errors: out-of-threshold damping factors
/// return a report with the corresponding flags cleared.
pub fn support_lemma_checks(
    alpha: f64,
    n_time: usize,
    y_grid: &[f64],
) -> Result<SupportLemmaReport> {
    if !alpha.is_finite() || !(MIN_ALPHA..1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!(
            "damping factor {alpha} outside [{MIN_ALPHA}, 1)"
        )));
    }
    if n_time < 2 {
        return Err(Error::InvalidParameter(
            "scalar instances need at least two time levels".into(),
        ));
    }
    if y_grid.is_empty() {
        return Err(Error::InvalidParameter("empty decay-factor grid".into()));
    }
    if y_grid.iter().any(|&y| !y.is_finite() || y <= 0.0 || y >= 1.0) {
        return Err(Error::InvalidParameter(
            "decay factors must lie strictly inside (0, 1)".into(),
        ));
    }

    let nt = n_time as f64;
    let g_threshold = 2.0 / (1.0 + nt.sqrt());
    let root_threshold = 2.0 / (3.0 + nt.sqrt());
    let root_magnitude_bound = alpha * (1.0 + nt.sqrt()) / (2.0 * (1.0 - alpha));

    let shift = AlphaCirculant::new(n_time, 1, alpha)?;
    let t_dense = shift.dense_noncirculant();
    let c_dense = shift.dense();
    let id = ZMat::identity(n_time);

    let mut g_min = f64::INFINITY;
    let mut max_root_magnitude = 0.0_f64;
    let mut h_min_eigenvalue = f64::INFINITY;
    let mut defect_h_norm = 0.0_f64;
    let mut eigenvector_condition = 0.0_f64;

    for &y in y_grid {
        let y_pow_n = y.powi(n_time as i32);
        let g = 4.0 * (1.0 - alpha * y_pow_n) * (1.0 - y * y)
            - alpha * alpha * (y * y - y_pow_n * y_pow_n);
        g_min = g_min.min(g);

        let denom = 1.0 - alpha * y;
        let geometric: f64 = (1..n_time).map(|j| y.powi(2 * j as i32)).sum();
        let tau = alpha * alpha / (denom * denom) * (geometric + y * y);
        let base = alpha * y / denom;
        let sqrt_tau = tau.sqrt();
        let root_plus = 0.5 * (base + sqrt_tau);
        let root_minus = 0.5 * (base - sqrt_tau);
        max_root_magnitude = max_root_magnitude
            .max(root_plus.abs())
            .max(root_minus.abs());

        let scale = Complex64::new(y, 0.0);
        let q = id.sub(&t_dense.scale(scale));
        let q_alpha = id.sub(&c_dense.scale(scale));
        let x = q_alpha.solve_mat(&q)?;
        let hermitian_part = x.add(&x.adjoint()).scale(Complex64::new(0.5, 0.0));
        let h_eigs = hermitian_part.eigvalsh()?;
        for e in &h_eigs {
            h_min_eigenvalue = h_min_eigenvalue.min(*e);
            defect_h_norm = defect_h_norm.max((e - 1.0).abs());
        }
        let (_values, vectors) = x.eig()?;
        let svs = vectors.singular_values()?;
        let smin = svs.last().copied().unwrap_or(0.0);
        let kappa = if smin > 0.0 {
            svs[0] / smin
        } else {
            f64::INFINITY
        };
        eigenvector_condition = eigenvector_condition.max(kappa);
    }

    Ok(SupportLemmaReport {
        alpha,
        n_time,
        g_threshold,
        g_min,
        g_positive: g_min > 0.0,
        root_threshold,
        max_root_magnitude,
        root_magnitude_bound,
        roots_inside: max_root_magnitude < 1.0,
        h_min_eigenvalue,
        h_positive_definite: h_min_eigenvalue > 0.0,
        defect_h_norm,
        defect_h_below_one: defect_h_norm < 1.0,
        eigenvector_condition,
    })
}

/// Per-iteration factor of the field-of-values residual envelope
/// `|r_k| <= factor^{k/2} |r_0|` for the preconditioned minimal-residual
/// solver: `4 alpha (1 - alpha)` for the one-step scheme and
/// `4 (alpha + alpha^2)(1 - alpha - alpha^2)` for the two-step scheme.
pub fn elman_factor(order: usize, alpha: f64) -> Result<f64> {
    check_order(order)?;
    if !alpha.is_finite() || alpha <= 0.0 || alpha >= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "damping factor {alpha} outside (0, 1)"
        )));
    }
    match order {
        1 => Ok(4.0 * alpha * (1.0 - alpha)),
        _ => {
            let s = alpha + alpha * alpha;
            let denom = 1.0 - s;
            if denom <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "the two-step envelope needs alpha + alpha^2 < 1, got {s}"
                )));
            }
            Ok(4.0 * s * denom)
        }
    }
}

/// Result of checking a residual history against its square-root envelope.
#[derive(Debug, Clone)]
pub struct ElmanCheck {
    /// Per-iteration envelope factor from [`elman_factor`].
    pub factor: f64,
    /// `factor^{k/2}` for each recorded iteration.
    pub envelope: Vec<f64>,
    /// Whether every relative residual sits below the envelope.
    pub dominated: bool,
    /// First iteration that broke the envelope, if any.
    pub first_violation: Option<usize>,
}

/// Check a minimal-residual history against `factor^{k/2}`.
///
/// `history[k]` is the residual norm after `k` iterations; the comparison is
/// relative to `history[0]` with a one-part-in-1e12 roundoff allowance.
pub fn residual_history_dominated(
    order: usize,
    alpha: f64,
    history: &[f64],
) -> Result<ElmanCheck> {
    let factor = elman_factor(order, alpha)?;
    if history.is_empty() {
        return Err(Error::InvalidParameter("empty residual history".into()));
    }
    if history.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(Error::InvalidParameter(
            "residual history must be finite and nonnegative".into(),
        ));
    }
    if history[0] <= 0.0 {
        return Err(Error::InvalidParameter(
            "initial residual must be positive to normalise the history".into(),
        ));
    }
    let envelope: Vec<f64> = (0..history.len())
        .map(|k| factor.powf(k as f64 / 2.0))
        .collect();
    let mut first_violation = None;
    for (k, (&r, &e)) in history.iter().zip(&envelope).enumerate() {
        if r / history[0] > e * (1.0 + 1e-12) {
            first_violation = Some(k);
            break;
        }
    }
    Ok(ElmanCheck {
        factor,
        envelope,
        dominated: first_violation.is_none(),
        first_violation,
    })
}
