//! First-order baselines: proximal gradient descent (iterative
//! soft-thresholding) and its momentum-accelerated variant.
//!
//! Both methods take steps `w ← prox_{ηφ}(x − η Aᵀ∇f_ℓ(Ax))` (with `x` the
//! current iterate, or the extrapolated point for the accelerated
//! variant) and share the duality-gap stopping rule with the dual solver,
//! so iteration counts and traces are directly comparable. A fixed step
//! must satisfy `η ≤ γ/‖A‖²` where `γ` is the strong-convexity modulus of
//! the loss conjugate (equivalently `1/η` dominates the Lipschitz constant
//! of the smooth part); the backtracking rule discovers such a step by
//! halving against the quadratic majorization test.

use crate::dal::Problem;
use crate::design::DesignOperator;
use crate::diagnostics::{self, Trace, TraceRecord};
use crate::prox::{ActiveStructure, Regularizer};
use crate::{BestIterate, Error, Result};
use ndarray::Array1;
use rand::Rng;
use rand::SeedableRng;
use std::time::Instant;

/// Step-size policy for the first-order methods.
#[derive(Debug, Clone)]
pub enum StepRule {
    /// Constant step; caller guarantees `eta ≤ γ/‖A‖²`.
    Fixed { eta: f64 },
    /// Start from `eta0`, halve (multiply by `beta`) until the quadratic
    /// majorization holds; never grows back.
    Backtracking { eta0: f64, beta: f64 },
}

#[derive(Debug, Clone)]
pub struct FirstOrderOptions {
    pub step: StepRule,
    pub max_iters: usize,
    /// Stop once the relative duality gap falls below this.
    pub rdg_tol: f64,
    pub keep_iterates: bool,
}

impl FirstOrderOptions {
    /// # Panics
    /// If `eta` is not positive finite.
    pub fn fixed(eta: f64) -> Self {
        assert!(eta.is_finite() && eta > 0.0, "fixed step must be positive, got {eta}");
        FirstOrderOptions {
            step: StepRule::Fixed { eta },
            max_iters: 10_000,
            rdg_tol: 1e-3,
            keep_iterates: false,
        }
    }

    /// # Panics
    /// If `eta0` is not positive finite.
    pub fn backtracking(eta0: f64) -> Self {
        assert!(eta0.is_finite() && eta0 > 0.0, "initial step must be positive, got {eta0}");
        FirstOrderOptions {
            step: StepRule::Backtracking { eta0, beta: 0.5 },
            max_iters: 10_000,
            rdg_tol: 1e-3,
            keep_iterates: false,
        }
    }
}

/// Output of a first-order solve.
#[derive(Debug, Clone)]
pub struct FoSolution {
    pub w: Array1<f64>,
    pub f: f64,
    pub rdg: f64,
    pub iters: usize,
    pub trace: Trace,
    pub iterates: Option<Vec<Array1<f64>>>,
}

/// One proximal-gradient step from `w` with step `eta`.
pub fn ist_step(problem: &Problem, w: &Array1<f64>, eta: f64) -> (Array1<f64>, ActiveStructure) {
    let z = problem.design.apply(w);
    let g = problem.design.apply_adjoint(&problem.loss.grad(&z));
    let shifted = w - &(g.mapv(|v| v * eta));
    problem.reg.prox(&shifted, eta)
}

/// Largest singular value of the design operator by power iteration on
/// `AᵀA` (deterministic for a fixed seed). Callers deriving step sizes
/// should pad the result (it approaches the true norm from below).
pub fn power_iteration_norm(design: &DesignOperator, iters: usize, seed: u64) -> f64 {
    let n = design.cols();
    assert!(n > 0, "power iteration needs at least one column");
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut v = Array1::from_iter((0..n).map(|_| rng.random::<f64>() - 0.5));
    let mut norm = v.dot(&v).sqrt();
    if norm == 0.0 {
        v[0] = 1.0;
        norm = 1.0;
    }
    v.mapv_inplace(|x| x / norm);
    let mut sigma2 = 0.0;
    for _ in 0..iters {
        let u = design.apply(&v);
        let mut next = design.apply_adjoint(&u);
        sigma2 = next.dot(&v); // Rayleigh quotient for AᵀA
        let nn = next.dot(&next).sqrt();
        if nn == 0.0 {
            return 0.0; // zero operator
        }
        next.mapv_inplace(|x| x / nn);
        v = next;
    }
    sigma2.max(0.0).sqrt()
}

struct RowInputs<'a> {
    w: &'a Array1<f64>,
    eta: f64,
}

/// Gap of `w` using the canonical first-order dual candidate
/// `−∇f_ℓ(Aw)`. Returns `(f, rdg)`; a zero objective short-circuits as
/// converged (exact fit with zero regularization).
fn gap(problem: &Problem, w: &Array1<f64>, z: &Array1<f64>) -> Result<(f64, f64)> {
    let f = problem.loss.value(z) + problem.reg.reg_value(w);
    if f == 0.0 {
        return Ok((0.0, 0.0));
    }
    let cand = problem.loss.grad(z).mapv(|v| -v);
    let info = diagnostics::rdg(&problem.design, &problem.loss, &problem.reg, w, None, &cand)?;
    Ok((info.primal, info.rdg))
}

fn push_row(
    trace: &mut Trace,
    iterates: &mut Option<Vec<Array1<f64>>>,
    inputs: RowInputs<'_>,
    f: f64,
    rdg: f64,
    secs: f64,
) {
    trace.push(TraceRecord {
        iter: trace.len(),
        f,
        dual: f - rdg * f,
        rdg,
        nnz: inputs.w.iter().filter(|v| **v != 0.0).count(),
        inner_newton: 0,
        pcg_steps: 0,
        eta1: inputs.eta,
        eta2: None,
        seconds: secs,
        dist_to_ref: None,
    });
    if let Some(list) = iterates {
        list.push(inputs.w.clone());
    }
}

fn reject_unsupported(reg: &Regularizer) -> Result<()> {
    if matches!(reg, Regularizer::SupportFunction { .. }) {
        return Err(Error::UnsupportedRegularizer(
            "first-order solvers monitor a duality gap, which support functions do not expose"
                .into(),
        ));
    }
    Ok(())
}

/// Proximal gradient descent from the zero vector.
pub fn ist_solve(problem: &Problem, opts: &FirstOrderOptions) -> Result<FoSolution> {
    ist_solve_from(problem, opts, Array1::zeros(problem.features()))
}

/// Proximal gradient descent from `w0`.
///
/// # Errors
/// [`Error::UnsupportedRegularizer`] for support-function regularizers;
/// [`Error::NonConvergence`] (carrying the best iterate) when the budget
/// runs out; [`Error::Degenerate`] from the gap on pathological objectives.
pub fn ist_solve_from(
    problem: &Problem,
    opts: &FirstOrderOptions,
    w0: Array1<f64>,
) -> Result<FoSolution> {
    reject_unsupported(&problem.reg)?;
    assert_eq!(w0.len(), problem.features(), "ist: w0 length mismatch");
    let start = Instant::now();
    let mut trace = Trace::default();
    let mut iterates = if opts.keep_iterates { Some(Vec::new()) } else { None };

    let mut w = w0;
    let mut z = problem.design.apply(&w);
    let (mut eta, beta) = match opts.step {
        StepRule::Fixed { eta } => (eta, 1.0),
        StepRule::Backtracking { eta0, beta } => (eta0, beta),
    };

    let (mut f, mut rdg) = gap(problem, &w, &z)?;
    push_row(&mut trace, &mut iterates, RowInputs { w: &w, eta }, f, rdg, 0.0);

    for k in 0..opts.max_iters {
        if rdg <= opts.rdg_tol {
            return Ok(FoSolution { w, f, rdg, iters: k, trace, iterates });
        }
        let grad_z = problem.loss.grad(&z);
        let g_w = problem.design.apply_adjoint(&grad_z);
        let g_val = problem.loss.value(&z);
        let (w_next, z_next, eta_used) = descend(problem, &w, &g_w, g_val, &mut eta, beta);
        w = w_next;
        z = z_next;
        let (fk, rk) = gap(problem, &w, &z)?;
        f = fk;
        rdg = rk;
        push_row(
            &mut trace,
            &mut iterates,
            RowInputs { w: &w, eta: eta_used },
            f,
            rdg,
            start.elapsed().as_secs_f64(),
        );
    }
    if rdg <= opts.rdg_tol {
        let iters = opts.max_iters;
        return Ok(FoSolution { w, f, rdg, iters, trace, iterates });
    }
    Err(Error::NonConvergence {
        iters: opts.max_iters,
        message: format!("proximal gradient budget exhausted with relative gap {rdg:.3e}"),
        best: Some(BestIterate::FirstOrder(Box::new(FoSolution {
            w,
            f,
            rdg,
            iters: opts.max_iters,
            trace,
            iterates,
        }))),
    })
}

/// One majorization-tested step from `x` (gradient `g_x` at `x`,
/// `g_val = f_ℓ(Ax)`). Fixed rule: `beta = 1` leaves `eta` untouched.
fn descend(
    problem: &Problem,
    x: &Array1<f64>,
    g_x: &Array1<f64>,
    g_val: f64,
    eta: &mut f64,
    beta: f64,
) -> (Array1<f64>, Array1<f64>, f64) {
    loop {
        let shifted = x - &(g_x.mapv(|v| v * *eta));
        let (w_next, _) = problem.reg.prox(&shifted, *eta);
        let z_next = problem.design.apply(&w_next);
        if beta >= 1.0 {
            return (w_next, z_next, *eta);
        }
        let d = &w_next - x;
        let quad = g_val + g_x.dot(&d) + d.dot(&d) / (2.0 * *eta);
        if problem.loss.value(&z_next) <= quad + 1e-12 * (1.0 + quad.abs()) {
            return (w_next, z_next, *eta);
        }
        *eta *= beta;
    }
}

/// Accelerated proximal gradient descent from the zero vector.
pub fn fista_solve(problem: &Problem, opts: &FirstOrderOptions) -> Result<FoSolution> {
    fista_solve_from(problem, opts, Array1::zeros(problem.features()))
}

/// Accelerated proximal gradient descent from `w0`, with the standard
/// `s_{k+1} = (1 + √(1+4s_k²))/2` momentum sequence. The extrapolated
/// predictions reuse `A w` by linearity, so each iteration costs two
/// operator products plus the gap evaluation.
///
/// # Errors
/// As [`ist_solve_from`].
pub fn fista_solve_from(
    problem: &Problem,
    opts: &FirstOrderOptions,
    w0: Array1<f64>,
) -> Result<FoSolution> {
    reject_unsupported(&problem.reg)?;
    assert_eq!(w0.len(), problem.features(), "fista: w0 length mismatch");
    let start = Instant::now();
    let mut trace = Trace::default();
    let mut iterates = if opts.keep_iterates { Some(Vec::new()) } else { None };

    let mut w = w0;
    let mut w_prev = w.clone();
    let mut z = problem.design.apply(&w);
    let mut z_prev = z.clone();
    let mut s = 1.0f64;
    let (mut eta, beta) = match opts.step {
        StepRule::Fixed { eta } => (eta, 1.0),
        StepRule::Backtracking { eta0, beta } => (eta0, beta),
    };

    let (mut f, mut rdg) = gap(problem, &w, &z)?;
    push_row(&mut trace, &mut iterates, RowInputs { w: &w, eta }, f, rdg, 0.0);

    for k in 0..opts.max_iters {
        if rdg <= opts.rdg_tol {
            return Ok(FoSolution { w, f, rdg, iters: k, trace, iterates });
        }
        let s_next = 0.5 * (1.0 + (1.0 + 4.0 * s * s).sqrt());
        let mom = (s - 1.0) / s_next;
        let y = &w + &((&w - &w_prev).mapv(|v| v * mom));
        let z_y = &z + &((&z - &z_prev).mapv(|v| v * mom));
        let grad_y = problem.design.apply_adjoint(&problem.loss.grad(&z_y));
        let g_val = problem.loss.value(&z_y);

        let (w_next, z_next, eta_used) = descend(problem, &y, &grad_y, g_val, &mut eta, beta);
        w_prev = w;
        z_prev = z;
        w = w_next;
        z = z_next;
        s = s_next;

        let (fk, rk) = gap(problem, &w, &z)?;
        f = fk;
        rdg = rk;
        push_row(
            &mut trace,
            &mut iterates,
            RowInputs { w: &w, eta: eta_used },
            f,
            rdg,
            start.elapsed().as_secs_f64(),
        );
    }
    if rdg <= opts.rdg_tol {
        let iters = opts.max_iters;
        return Ok(FoSolution { w, f, rdg, iters, trace, iterates });
    }
    Err(Error::NonConvergence {
        iters: opts.max_iters,
        message: format!("accelerated proximal gradient budget exhausted with relative gap {rdg:.3e}"),
        best: Some(BestIterate::FirstOrder(Box::new(FoSolution {
            w,
            f,
            rdg,
            iters: opts.max_iters,
            trace,
            iterates,
        }))),
    })
}
