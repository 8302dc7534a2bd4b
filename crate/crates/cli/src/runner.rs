//! Uniform front end over the solvers: one request type, one output type,
//! budget exhaustion reported as `converged = false` with the best iterate.

use anyhow::{anyhow, bail, Result};
use dal_core::baselines::{
    fista_solve_from, ist_solve_from, power_iteration_norm, FirstOrderOptions, FoSolution,
};
use dal_core::dal::{solve_from, DalOptions, Problem, Solution};
use dal_core::diagnostics::Trace;
use dal_core::{BestIterate, Error};
use ndarray::Array1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Dal,
    DalB,
    Fista,
    Ist,
}

impl SolverKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "dal" => Ok(SolverKind::Dal),
            "dal-b" => Ok(SolverKind::DalB),
            "fista" => Ok(SolverKind::Fista),
            "ist" => Ok(SolverKind::Ist),
            other => bail!("unknown solver {other:?} (expected dal, dal-b, fista, or ist)"),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Dal => "dal",
            SolverKind::DalB => "dal-b",
            SolverKind::Fista => "fista",
            SolverKind::Ist => "ist",
        }
    }
}

/// Proximity/step-size choice. For the augmented-Lagrangian solvers the
/// named settings map to `η₀ = 1/λ` and `η₀ = 0.01/λ`; for the first-order
/// baselines they both fall back to the guaranteed-descent step
/// `γ/(1.1‖A‖)²` estimated by power iteration, and a numeric value is used
/// verbatim in either case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EtaChoice {
    Aggressive,
    Conservative,
    Value(f64),
}

impl EtaChoice {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "aggressive" => Ok(EtaChoice::Aggressive),
            "conservative" => Ok(EtaChoice::Conservative),
            other => {
                let v: f64 = other.parse().map_err(|_| {
                    anyhow!("eta0 must be `aggressive`, `conservative`, or a number, got {other:?}")
                })?;
                if !(v.is_finite() && v > 0.0) {
                    bail!("numeric eta0 must be positive and finite, got {v}");
                }
                Ok(EtaChoice::Value(v))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunRequest {
    pub solver: SolverKind,
    pub eta0: EtaChoice,
    /// Absolute regularization constant of the problem being solved; used
    /// by the named `eta0` settings.
    pub lambda: f64,
    pub rdg_tol: f64,
    pub max_iters: usize,
}

impl RunRequest {
    pub fn new(solver: SolverKind, lambda: f64) -> Self {
        RunRequest {
            solver,
            eta0: EtaChoice::Aggressive,
            lambda,
            rdg_tol: 1e-6,
            max_iters: 100,
        }
    }
}

#[derive(Debug)]
pub struct RunOutput {
    pub w: Array1<f64>,
    pub b: Option<f64>,
    pub f: f64,
    pub rdg: f64,
    pub iters: usize,
    pub trace: Trace,
    /// False when the budget ran out; the fields above then hold the best
    /// iterate found.
    pub converged: bool,
}

impl RunOutput {
    fn from_dal(sol: Solution, converged: bool) -> Self {
        RunOutput {
            w: sol.w,
            b: sol.b,
            f: sol.f,
            rdg: sol.rdg,
            iters: sol.iters,
            trace: sol.trace,
            converged,
        }
    }

    fn from_first_order(sol: FoSolution, converged: bool) -> Self {
        RunOutput {
            w: sol.w,
            b: None,
            f: sol.f,
            rdg: sol.rdg,
            iters: sol.iters,
            trace: sol.trace,
            converged,
        }
    }
}

/// Solves from the zero vector.
pub fn run(problem: &Problem, req: &RunRequest) -> Result<RunOutput> {
    run_from(problem, req, None)
}

/// Solves from an optional warm start `(w0, b0)`. `b0` is ignored except by
/// the bias-aware solver.
///
/// # Errors
/// Input and domain errors propagate; budget exhaustion is NOT an error —
/// it returns `converged = false` with the best iterate found.
pub fn run_from(
    problem: &Problem,
    req: &RunRequest,
    warm: Option<(Array1<f64>, Option<f64>)>,
) -> Result<RunOutput> {
    let (w0, b0) = match warm {
        Some((w, b)) => (w, b),
        None => (Array1::zeros(problem.features()), None),
    };
    match req.solver {
        SolverKind::Dal | SolverKind::DalB => {
            let eta0 = match req.eta0 {
                EtaChoice::Aggressive => 1.0 / req.lambda,
                EtaChoice::Conservative => 0.01 / req.lambda,
                EtaChoice::Value(v) => v,
            };
            let mut opts = DalOptions::new(eta0);
            opts.rdg_tol = req.rdg_tol;
            opts.max_outer = req.max_iters;
            if req.solver == SolverKind::DalB {
                opts = opts.with_bias();
            }
            let b0 = if opts.bias { Some(b0.unwrap_or(0.0)) } else { None };
            match solve_from(problem, &opts, w0, b0) {
                Ok(sol) => Ok(RunOutput::from_dal(sol, true)),
                Err(Error::NonConvergence { best: Some(BestIterate::Dal(sol)), .. }) => {
                    Ok(RunOutput::from_dal(*sol, false))
                }
                Err(e) => Err(e.into()),
            }
        }
        SolverKind::Fista | SolverKind::Ist => {
            let opts = first_order_options(problem, req);
            let res = match req.solver {
                SolverKind::Fista => fista_solve_from(problem, &opts, w0),
                _ => ist_solve_from(problem, &opts, w0),
            };
            match res {
                Ok(sol) => Ok(RunOutput::from_first_order(sol, true)),
                Err(Error::NonConvergence { best: Some(BestIterate::FirstOrder(sol)), .. }) => {
                    Ok(RunOutput::from_first_order(*sol, false))
                }
                Err(e) => Err(e.into()),
            }
        }
    }
}

fn first_order_options(problem: &Problem, req: &RunRequest) -> FirstOrderOptions {
    let mut opts = match req.eta0 {
        EtaChoice::Value(v) => FirstOrderOptions::fixed(v),
        _ => {
            let norm = power_iteration_norm(&problem.design, 80, 7);
            FirstOrderOptions::fixed(problem.loss.gamma() / (1.1 * norm).powi(2))
        }
    };
    opts.rdg_tol = req.rdg_tol;
    opts.max_iters = req.max_iters;
    opts
}
