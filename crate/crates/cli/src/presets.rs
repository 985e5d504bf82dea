//! Named experiment presets.
//!
//! Each preset bundles a full [`ExperimentConfig`] plus the sweep shape it
//! runs (single solve, mesh refinement, window growth, propagator
//! comparison, damping-factor tableau, or dense spectrum certification).
//! Every benchmark family the library targets has at least one entry here;
//! `expparadiag list` prints this catalog.

use expparadiag::Complex64;

use crate::config::{
    Alpha, ExperimentConfig, Jacobian, ProblemId, PropagatorChoice, Solver,
};

/// The damping factor the halving search returns for every diffusive
/// benchmark; pinned where the search objective is not defined (complex or
/// fourth-order spectra).
pub const TUNED_ALPHA: f64 = 0.0001953125;

/// What a preset sweeps over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    /// One all-at-once solve.
    Single,
    /// Same problem at resolutions 32..256 with `dt = h`.
    MeshSweep,
    /// Same problem for windows `T` in {4, 16, 64}.
    WindowSweep,
    /// Scheme orders 3..6 on one problem.
    OrderSweep,
    /// Rational propagators against the exact reference trajectory.
    PadeSweep,
    /// Damping-factor search over the 16-entry parameter tableau.
    Tableau,
    /// Dense spectrum certification of the preconditioned system.
    Spectrum,
}

pub struct Preset {
    pub id: &'static str,
    pub description: &'static str,
    pub kind: Kind,
    pub config: ExperimentConfig,
}

fn base(problem: ProblemId) -> ExperimentConfig {
    ExperimentConfig {
        problem,
        a: Complex64::new(0.1, 0.0),
        c: Complex64::new(0.0, 0.0),
        b: 0.0,
        beta: 0.0,
        epsilon: 0.01,
        power: 3,
        resolution: 128,
        dt: 0.01,
        t_final: 1.0,
        n_time: None,
        alpha: Alpha::Opt,
        order: 1,
        solver: Solver::Gmres,
        jacobian: Jacobian::TimeAveraged,
        propagator: PropagatorChoice::Exact,
        initial: default_initial(problem).to_string(),
        tol: 1e-10,
        maxit: 30,
        seed: 0,
    }
}

/// Initial profile used when the preset does not override it.
pub fn default_initial(problem: ProblemId) -> &'static str {
    match problem {
        ProblemId::Heat1d | ProblemId::Biharmonic1d => "gaussian",
        ProblemId::Heat2d => "gaussian2d",
        ProblemId::Ade1d => "periodic-gaussian",
        ProblemId::Schrodinger1d => "sine",
        ProblemId::Schrodinger2d => "packet",
        ProblemId::AllenCahn => "cos-bump",
        ProblemId::PowerReaction | ProblemId::ExpReaction => "small-cos",
        ProblemId::Fisher => "sech2",
        ProblemId::AllenCahn2d => "sine-product-2d",
    }
}

pub fn catalog() -> Vec<Preset> {
    let mut list = Vec::new();

    let mut heat1d = base(ProblemId::Heat1d);
    heat1d.dt = 1.0 / 128.0;
    heat1d.solver = Solver::Richardson;
    heat1d.maxit = 20;
    list.push(Preset {
        id: "heat1d",
        description: "1D heat, stationary sweeps at the tuned damping factor, error vs sequential reference",
        kind: Kind::Single,
        config: heat1d,
    });

    let mut bdf2 = base(ProblemId::Heat1d);
    bdf2.a = Complex64::new(1e-5, 0.0);
    bdf2.order = 2;
    bdf2.t_final = 2.0;
    list.push(Preset {
        id: "heat1d_bdf2",
        description: "1D heat with the two-step scheme, weak diffusion, preconditioned GMRES",
        kind: Kind::Single,
        config: bdf2,
    });

    let window = base(ProblemId::Heat1d);
    list.push(Preset {
        id: "heat1d_window",
        description: "GMRES iteration counts across time windows T in {4, 16, 64}",
        kind: Kind::WindowSweep,
        config: window,
    });

    let mut window2 = base(ProblemId::Heat1d);
    window2.order = 2;
    list.push(Preset {
        id: "heat1d_window_bdf2",
        description: "window sweep with the two-step scheme",
        kind: Kind::WindowSweep,
        config: window2,
    });

    let mut mesh = base(ProblemId::Heat1d);
    mesh.c = Complex64::new(0.1, 0.0);
    mesh.t_final = 4.0;
    mesh.solver = Solver::Richardson;
    mesh.maxit = 20;
    list.push(Preset {
        id: "heat1d_mesh",
        description: "stationary-iteration counts under simultaneous h and dt refinement 1/32..1/256",
        kind: Kind::MeshSweep,
        config: mesh,
    });

    let mut mesh_g = base(ProblemId::Heat1d);
    mesh_g.c = Complex64::new(0.1, 0.0);
    mesh_g.t_final = 4.0;
    list.push(Preset {
        id: "heat1d_mesh_gmres",
        description: "GMRES counts under mesh refinement",
        kind: Kind::MeshSweep,
        config: mesh_g,
    });

    let mut mesh2 = base(ProblemId::Heat1d);
    mesh2.c = Complex64::new(0.1, 0.0);
    mesh2.t_final = 4.0;
    mesh2.order = 2;
    list.push(Preset {
        id: "heat1d_mesh_bdf2",
        description: "GMRES counts under mesh refinement, two-step scheme",
        kind: Kind::MeshSweep,
        config: mesh2,
    });

    let mut pade = base(ProblemId::Heat1d);
    pade.dt = 1.0 / 128.0;
    pade.solver = Solver::Richardson;
    pade.tol = 1e-13;
    pade.maxit = 12;
    list.push(Preset {
        id: "pade_plateau",
        description: "rational propagators vs the exact trajectory: error stalls at the consistency level",
        kind: Kind::PadeSweep,
        config: pade,
    });

    let mut orders = base(ProblemId::Heat1d);
    orders.dt = 0.05;
    orders.t_final = 2.0;
    list.push(Preset {
        id: "higher_order",
        description: "GMRES counts for scheme orders 3..6",
        kind: Kind::OrderSweep,
        config: orders,
    });

    let mut heat2d = base(ProblemId::Heat2d);
    heat2d.resolution = 20;
    heat2d.t_final = 4.0;
    list.push(Preset {
        id: "heat2d",
        description: "2D heat on the unit square, preconditioned GMRES",
        kind: Kind::Single,
        config: heat2d,
    });

    let mut sch1 = base(ProblemId::Schrodinger1d);
    sch1.a = Complex64::new(0.0, 1.0);
    sch1.c = Complex64::new(0.0, 2.0);
    sch1.alpha = Alpha::Value(TUNED_ALPHA);
    list.push(Preset {
        id: "schrodinger1d",
        description: "1D dispersive problem (imaginary coefficients), GMRES",
        kind: Kind::Single,
        config: sch1,
    });

    let mut sch2 = base(ProblemId::Schrodinger2d);
    sch2.a = Complex64::new(0.0, 1.0);
    sch2.c = Complex64::new(0.0, 200.0);
    sch2.alpha = Alpha::Value(TUNED_ALPHA);
    sch2.resolution = 40;
    sch2.dt = 0.05;
    sch2.order = 2;
    list.push(Preset {
        id: "schrodinger2d",
        description: "2D wave packet with strong rotation, two-step scheme, GMRES",
        kind: Kind::Single,
        config: sch2,
    });

    let mut bih = base(ProblemId::Biharmonic1d);
    bih.a = Complex64::new(0.0, 0.0);
    bih.beta = 1e-5;
    bih.alpha = Alpha::Value(TUNED_ALPHA);
    bih.order = 2;
    bih.t_final = 2.0;
    bih.initial = "modulated-sine".to_string();
    list.push(Preset {
        id: "biharmonic1d",
        description: "fourth-order diffusion, two-step scheme, GMRES",
        kind: Kind::Single,
        config: bih,
    });

    let mut ade = base(ProblemId::Ade1d);
    ade.b = 2.0;
    ade.alpha = Alpha::Value(TUNED_ALPHA);
    list.push(Preset {
        id: "ade1d",
        description: "periodic advection-diffusion with speed 2, GMRES",
        kind: Kind::Single,
        config: ade,
    });

    let mut ade_s = base(ProblemId::Ade1d);
    ade_s.b = 2.0;
    ade_s.alpha = Alpha::Value(TUNED_ALPHA);
    ade_s.resolution = 48;
    ade_s.n_time = Some(30);
    list.push(Preset {
        id: "ade1d_spectrum",
        description: "dense spectrum of the preconditioned advective system vs the cluster radius",
        kind: Kind::Spectrum,
        config: ade_s,
    });

    let mut spec1 = base(ProblemId::Heat1d);
    spec1.c = Complex64::new(0.1, 0.0);
    spec1.resolution = 64;
    spec1.n_time = Some(30);
    spec1.t_final = 0.3;
    list.push(Preset {
        id: "spectrum_cluster",
        description: "dense eigenvalues of the preconditioned system vs contraction and cluster bounds",
        kind: Kind::Spectrum,
        config: spec1,
    });

    let mut spec2 = base(ProblemId::Heat1d);
    spec2.c = Complex64::new(0.1, 0.0);
    spec2.resolution = 64;
    spec2.n_time = Some(30);
    spec2.t_final = 0.3;
    spec2.order = 2;
    list.push(Preset {
        id: "spectrum_cluster_bdf2",
        description: "dense spectrum certification for the two-step scheme",
        kind: Kind::Spectrum,
        config: spec2,
    });

    let table = base(ProblemId::Heat1d);
    list.push(Preset {
        id: "table1",
        description: "damping-factor search across the 16-entry (a, c, N_x, T) tableau",
        kind: Kind::Tableau,
        config: table,
    });

    let mut ac = base(ProblemId::AllenCahn);
    ac.a = Complex64::new(0.0, 0.0);
    ac.dt = 1e-3;
    ac.t_final = 0.1;
    ac.alpha = Alpha::Value(0.005);
    ac.solver = Solver::Newton;
    ac.tol = 1e-8;
    ac.maxit = 10;
    list.push(Preset {
        id: "allen_cahn",
        description: "bistable reaction with a manufactured decaying-cosine solution, window Newton",
        kind: Kind::Single,
        config: ac,
    });

    let mut power = base(ProblemId::PowerReaction);
    power.a = Complex64::new(1.0, 0.0);
    power.dt = 1e-3;
    power.t_final = 0.5;
    power.alpha = Alpha::Value(0.005);
    power.solver = Solver::Newton;
    power.maxit = 20;
    list.push(Preset {
        id: "power_reaction",
        description: "odd power-law decay reaction, window Newton",
        kind: Kind::Single,
        config: power,
    });

    let mut expr = base(ProblemId::ExpReaction);
    expr.a = Complex64::new(1.0, 0.0);
    expr.resolution = 256;
    expr.dt = 1e-3;
    expr.alpha = Alpha::Value(5e-5);
    expr.solver = Solver::Imex;
    expr.maxit = 25;
    list.push(Preset {
        id: "exp_reaction",
        description: "exponential sink reaction, reaction-implicit sweeps",
        kind: Kind::Single,
        config: expr,
    });

    let mut fisher = base(ProblemId::Fisher);
    fisher.a = Complex64::new(0.01, 0.0);
    fisher.dt = 1e-3;
    fisher.alpha = Alpha::Value(5e-4);
    fisher.solver = Solver::Imex;
    fisher.maxit = 25;
    list.push(Preset {
        id: "fisher",
        description: "logistic reaction front, reaction-implicit sweeps",
        kind: Kind::Single,
        config: fisher,
    });

    let mut ac2 = base(ProblemId::AllenCahn2d);
    ac2.a = Complex64::new(0.0, 0.0);
    ac2.resolution = 30;
    ac2.dt = 1e-3;
    ac2.t_final = 0.5;
    ac2.alpha = Alpha::Value(0.005);
    ac2.solver = Solver::Imex;
    ac2.maxit = 25;
    list.push(Preset {
        id: "allen_cahn_2d",
        description: "2D bistable reaction on the unit square, reaction-implicit sweeps",
        kind: Kind::Single,
        config: ac2,
    });

    list
}

pub fn find(id: &str) -> Option<Preset> {
    catalog().into_iter().find(|p| p.id == id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn ids_are_unique_and_described() {
        let all = catalog();
        let ids: BTreeSet<_> = all.iter().map(|p| p.id).collect();
        assert_eq!(ids.len(), all.len(), "duplicate preset ids");
        assert!(all.iter().all(|p| !p.description.is_empty()));
        assert!(all.iter().all(|p| p.config.validate().is_ok()), "preset fails validation");
    }

    /// Coverage manifest: every problem family has a preset, every sweep
    /// shape is represented, and the tableau preset keeps its documented id.
    #[test]
    fn catalog_covers_every_benchmark_family() {
        let all = catalog();
        for problem in ProblemId::ALL {
            assert!(
                all.iter().any(|p| p.config.problem == problem),
                "no preset for problem '{}'",
                problem.name()
            );
        }
        for kind in [
            Kind::Single,
            Kind::MeshSweep,
            Kind::WindowSweep,
            Kind::OrderSweep,
            Kind::PadeSweep,
            Kind::Tableau,
            Kind::Spectrum,
        ] {
            assert!(
                all.iter().any(|p| p.kind == kind),
                "no preset of kind {kind:?}"
            );
        }
        assert!(all.iter().any(|p| p.id == "table1"));
        // Both scheme orders and both solver families appear.
        assert!(all.iter().any(|p| p.config.order == 2));
        assert!(all.iter().any(|p| p.config.solver == Solver::Richardson));
        assert!(all.iter().any(|p| p.config.solver == Solver::Newton));
        assert!(all.iter().any(|p| p.config.solver == Solver::Imex));
    }
}
