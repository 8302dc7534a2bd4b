//! Dual augmented-Lagrangian solver.
//!
//! Minimizes `f_ℓ(Aw [+ b·1]) + φ_λ(w)` by applying the proximal-point
//! update `w ← prox_{η φ_λ}(w + η Aᵀα)` where `α` approximately minimizes
//! the dual augmented Lagrangian
//!
//! `φ_t(α) = f_ℓ*(−α) + (1/η₁) Φ*(wᵗ + η₁ Aᵀα) [+ (1/2η₂)(bᵗ + η₂ 1ᵀα)²]`,
//!
//! with `Φ*` the envelope whose gradient is the proximal operator. The
//! inner minimization runs a truncated Newton method: Hessian-vector
//! products touch only the columns the proximal candidate keeps active, so
//! the per-iteration cost tracks the sparsity of the current candidate
//! rather than the full problem size. Inner accuracy follows a stopping
//! rule that compares the dual gradient norm against the primal step it
//! induces, which is what makes the outer iteration provably contract.

use crate::design::DesignOperator;
use crate::diagnostics::{self, Trace, TraceRecord};
use crate::loss::LossFunction;
use crate::prox::{ActiveStructure, Regularizer};
use crate::{BestIterate, Error, Result};
use ndarray::Array1;
use std::time::Instant;

/// A regularized estimation problem: loss on predictions, design operator,
/// regularizer on coefficients.
#[derive(Debug, Clone)]
pub struct Problem {
    pub design: DesignOperator,
    pub loss: LossFunction,
    pub reg: Regularizer,
}

impl Problem {
    /// # Panics
    /// If the loss length differs from the operator's row count, or the
    /// regularizer's intrinsic dimension differs from its column count.
    pub fn new(design: DesignOperator, loss: LossFunction, reg: Regularizer) -> Self {
        assert_eq!(
            loss.len(),
            design.rows(),
            "Problem::new: loss defined on {} samples but design has {} rows",
            loss.len(),
            design.rows()
        );
        reg.check_len(design.cols(), "Problem::new");
        Problem { design, loss, reg }
    }

    pub fn samples(&self) -> usize {
        self.design.rows()
    }

    pub fn features(&self) -> usize {
        self.design.cols()
    }
}

/// Primal objective `f_ℓ(Aw + b·1) + φ_λ(w)`.
pub fn objective(problem: &Problem, w: &Array1<f64>, bias: Option<f64>) -> f64 {
    let mut z = problem.design.apply(w);
    if let Some(b) = bias {
        z.mapv_inplace(|v| v + b);
    }
    problem.loss.value(&z) + problem.reg.reg_value(w)
}

/// Inner (dual) solver controls.
#[derive(Debug, Clone)]
pub struct InnerOptions {
    /// Newton iteration budget per outer step.
    pub max_newton: usize,
    /// Conjugate-gradient budget per Newton step.
    pub max_pcg: usize,
    /// Cap on the CG relative tolerance; the effective tolerance is
    /// `min(cap, √‖∇φ‖)` so late Newton steps are solved more exactly.
    pub pcg_rtol_cap: f64,
    /// Armijo backtracking shrink factor.
    pub backtrack_beta: f64,
    /// Armijo sufficient-decrease fraction.
    pub backtrack_c: f64,
    /// When set, replaces the adaptive stopping rule with the absolute
    /// test `‖∇φ‖ ≤ force_tol` (used by reference computations and tests
    /// that need a near-exact inner optimum).
    pub force_tol: Option<f64>,
}

impl Default for InnerOptions {
    fn default() -> Self {
        InnerOptions {
            max_newton: 60,
            max_pcg: 400,
            pcg_rtol_cap: 0.1,
            backtrack_beta: 0.5,
            backtrack_c: 1e-4,
            force_tol: None,
        }
    }
}

/// Outer solver controls.
#[derive(Debug, Clone)]
pub struct DalOptions {
    /// Initial proximity parameter `η₁`.
    pub eta0: f64,
    /// Multiplicative increase of `η₁` per outer step.
    pub eta_factor: f64,
    /// Stop once the relative duality gap falls below this.
    pub rdg_tol: f64,
    pub max_outer: usize,
    pub inner: InnerOptions,
    /// Solve with an unregularized intercept (augments the prox update
    /// with `b ← b + η₂ 1ᵀα` and the dual with a quadratic bias penalty).
    pub bias: bool,
    /// Initial `η₂`; defaults to `eta0`.
    pub bias_eta0: Option<f64>,
    /// `η₂` multiplier when the feasibility violation `|1ᵀα|` stalls.
    pub bias_escalation_factor: f64,
    /// Violation level below which `η₂` never escalates.
    pub bias_viol_tol: f64,
    /// Record every primal iterate in the solution (for diagnostics).
    pub keep_iterates: bool,
}

impl DalOptions {
    /// # Panics
    /// If `eta0` is not a positive finite number.
    pub fn new(eta0: f64) -> Self {
        assert!(
            eta0.is_finite() && eta0 > 0.0,
            "DalOptions: eta0 must be positive and finite, got {eta0}"
        );
        DalOptions {
            eta0,
            eta_factor: 2.0,
            rdg_tol: 1e-3,
            max_outer: 100,
            inner: InnerOptions::default(),
            bias: false,
            bias_eta0: None,
            bias_escalation_factor: 40.0,
            bias_viol_tol: 1e-3,
            keep_iterates: false,
        }
    }

    /// Aggressive schedule `η₀ = 1/λ` (suits strongly sparse targets).
    ///
    /// # Panics
    /// If `lambda` is not positive finite.
    pub fn aggressive(lambda: f64) -> Self {
        assert!(lambda.is_finite() && lambda > 0.0, "aggressive: lambda must be positive");
        Self::new(1.0 / lambda)
    }

    /// Conservative schedule `η₀ = 0.01/λ`.
    ///
    /// # Panics
    /// If `lambda` is not positive finite.
    pub fn conservative(lambda: f64) -> Self {
        assert!(lambda.is_finite() && lambda > 0.0, "conservative: lambda must be positive");
        Self::new(0.01 / lambda)
    }

    pub fn with_bias(mut self) -> Self {
        self.bias = true;
        self
    }
}

/// Mutable solver state between outer steps.
#[derive(Debug, Clone)]
pub struct DalState {
    pub w: Array1<f64>,
    pub b: f64,
    pub alpha: Array1<f64>,
    /// Outer step counter (0-based; step `t` produces iterate `t+1`).
    pub t: usize,
    pub eta1: f64,
    /// Present iff the intercept is being solved for.
    pub eta2: Option<f64>,
    prev_viol: Option<f64>,
}

impl DalState {
    /// Fresh state anchored at `w` with dual start `alpha` (no intercept).
    pub fn anchored(w: Array1<f64>, alpha: Array1<f64>, eta1: f64) -> Self {
        DalState { w, b: 0.0, alpha, t: 0, eta1, eta2: None, prev_viol: None }
    }

    /// Fresh state with an intercept block.
    pub fn anchored_with_bias(
        w: Array1<f64>,
        b: f64,
        alpha: Array1<f64>,
        eta1: f64,
        eta2: f64,
    ) -> Self {
        DalState { w, b, alpha, t: 0, eta1, eta2: Some(eta2), prev_viol: None }
    }
}

/// Converged (or best-so-far) output of [`solve`].
#[derive(Debug, Clone)]
pub struct Solution {
    pub w: Array1<f64>,
    /// Intercept, present iff solved with `bias = true`.
    pub b: Option<f64>,
    /// Final dual variable.
    pub alpha: Array1<f64>,
    /// Final primal objective.
    pub f: f64,
    /// Final relative duality gap.
    pub rdg: f64,
    /// Number of outer steps taken.
    pub iters: usize,
    pub trace: Trace,
    /// Primal iterate per trace row, when `keep_iterates` was set.
    pub iterates: Option<Vec<Array1<f64>>>,
}

/// One gradient evaluation of the dual augmented Lagrangian.
#[derive(Debug, Clone)]
pub struct AlGrad {
    pub grad: Array1<f64>,
    /// The proximal candidate `w⁺(α) = prox_{η₁φ}(wᵗ + η₁Aᵀα)`.
    pub w_plus: Array1<f64>,
    /// Candidate intercept `b⁺(α) = bᵗ + η₂1ᵀα` (bias mode only).
    pub b_plus: Option<f64>,
    /// Active structure of the candidate (drives Hessian assembly).
    pub active: ActiveStructure,
    /// `‖∇_α f_ℓ*(−α)‖`, used as the scale of the degenerate-step floor.
    pub conj_grad_norm: f64,
}

/// Value of the dual augmented Lagrangian at `alpha` (`+∞` outside the
/// conjugate domain).
pub fn al_value(problem: &Problem, state: &DalState, alpha: &Array1<f64>) -> f64 {
    let u = problem.design.apply_adjoint(alpha);
    let q = &state.w + &(u.mapv(|v| v * state.eta1));
    let mut val = problem.loss.conj_value(alpha) + problem.reg.envelope_star(&q, state.eta1) / state.eta1;
    if let Some(eta2) = state.eta2 {
        let bp = state.b + eta2 * alpha.sum();
        val += bp * bp / (2.0 * eta2);
    }
    val
}

/// Gradient of the dual augmented Lagrangian:
/// `∇φ(α) = ∇f_ℓ*(−α)·(−1) + A w⁺(α) [+ b⁺(α)·1]`.
///
/// # Errors
/// [`Error::DomainViolation`] if `alpha` is outside the open conjugate
/// domain.
pub fn al_grad(problem: &Problem, state: &DalState, alpha: &Array1<f64>) -> Result<AlGrad> {
    let cg = problem.loss.conj_grad(alpha)?;
    let u = problem.design.apply_adjoint(alpha);
    let q = &state.w + &(u.mapv(|v| v * state.eta1));
    let (w_plus, active) = problem.reg.prox(&q, state.eta1);
    let aw = apply_on_active(&problem.design, &w_plus, &active);
    let mut grad = &cg + &aw;
    let b_plus = state.eta2.map(|eta2| state.b + eta2 * alpha.sum());
    if let Some(bp) = b_plus {
        grad.mapv_inplace(|v| v + bp);
    }
    Ok(AlGrad {
        grad,
        w_plus,
        b_plus,
        active,
        conj_grad_norm: cg.dot(&cg).sqrt(),
    })
}

/// `A·v` touching only the active columns of `v`.
fn apply_on_active(design: &DesignOperator, v: &Array1<f64>, active: &ActiveStructure) -> Array1<f64> {
    let indices: Vec<usize> = match active {
        ActiveStructure::Coords { indices, .. } => indices.clone(),
        ActiveStructure::Groups { groups } => {
            groups.iter().flat_map(|g| g.indices.iter().copied()).collect()
        }
        ActiveStructure::Opaque => return design.apply(v),
    };
    if indices.is_empty() {
        return Array1::zeros(design.rows());
    }
    // Dense full application is cheaper than a subset view once most
    // columns survive.
    if indices.len() * 2 >= design.cols() {
        return design.apply(v);
    }
    let sub = design.column_subset(&indices);
    let vj = Array1::from_iter(indices.iter().map(|&j| v[j]));
    sub.apply(&vj)
}

/// Matrix-free Hessian of the dual augmented Lagrangian at a proximal
/// candidate:
///
/// `H = ∇²f_ℓ*(−α) + η₁·A J A ᵀ [+ η₂·11ᵀ]`,
///
/// where `J` is the (generalized) Jacobian of the proximal operator — a
/// scaled identity on active coordinates for separable regularizers, and
/// `(1−r_g)I + r_g q̃q̃ᵀ` per surviving group for the group regularizer.
pub struct HessOperator {
    conj_hess: Array1<f64>,
    eta1: f64,
    eta2: Option<f64>,
    structure: HessStructure,
}

enum HessStructure {
    /// Active-coordinate block `jac · A_J A_Jᵀ`.
    Coords { op: DesignOperator, jac: f64 },
    /// Per-group blocks `(1−r)·A_g A_gᵀ + r·(A_g q̃)(A_g q̃)ᵀ`.
    Groups { items: Vec<GroupBlock> },
    /// Empty active set: the data term vanishes.
    Empty,
}

struct GroupBlock {
    op: DesignOperator,
    /// `A_g q̃`, precomputed: gives both the rank-one product and its
    /// diagonal contribution.
    a_unit: Array1<f64>,
    ratio: f64,
}

impl HessOperator {
    pub fn dim(&self) -> usize {
        self.conj_hess.len()
    }

    /// `H·v`.
    pub fn apply(&self, v: &Array1<f64>) -> Array1<f64> {
        let mut out = &self.conj_hess * v;
        match &self.structure {
            HessStructure::Coords { op, jac } => {
                let u = op.apply_adjoint(v);
                let au = op.apply(&u);
                out.scaled_add(self.eta1 * jac, &au);
            }
            HessStructure::Groups { items } => {
                for blk in items {
                    let u = blk.op.apply_adjoint(v);
                    let au = blk.op.apply(&u);
                    out.scaled_add(self.eta1 * (1.0 - blk.ratio), &au);
                    let proj = blk.a_unit.dot(v);
                    out.scaled_add(self.eta1 * blk.ratio * proj, &blk.a_unit);
                }
            }
            HessStructure::Empty => {}
        }
        if let Some(eta2) = self.eta2 {
            let s = v.sum();
            out.mapv_inplace(|x| x + eta2 * s);
        }
        out
    }

    /// Diagonal of `H`, used as the CG preconditioner.
    pub fn diag(&self) -> Array1<f64> {
        let mut d = self.conj_hess.clone();
        match &self.structure {
            HessStructure::Coords { op, jac } => {
                d.scaled_add(self.eta1 * jac, &op.row_squared_norms());
            }
            HessStructure::Groups { items } => {
                for blk in items {
                    d.scaled_add(self.eta1 * (1.0 - blk.ratio), &blk.op.row_squared_norms());
                    let sq = blk.a_unit.mapv(|x| x * x);
                    d.scaled_add(self.eta1 * blk.ratio, &sq);
                }
            }
            HessStructure::Empty => {}
        }
        if let Some(eta2) = self.eta2 {
            d.mapv_inplace(|x| x + eta2);
        }
        d
    }
}

/// Assembles the Hessian operator for the candidate structure produced by
/// [`al_grad`] at the same `alpha`.
///
/// # Errors
/// [`Error::DomainViolation`] off the open conjugate domain;
/// [`Error::UnsupportedRegularizer`] for opaque active structures.
pub fn al_hessian(
    problem: &Problem,
    state: &DalState,
    alpha: &Array1<f64>,
    active: &ActiveStructure,
) -> Result<HessOperator> {
    let conj_hess = problem.loss.conj_hess_diag(alpha)?;
    let structure = match active {
        ActiveStructure::Coords { indices, jac_scale } => {
            if indices.is_empty() {
                HessStructure::Empty
            } else {
                HessStructure::Coords {
                    op: problem.design.column_subset(indices),
                    jac: *jac_scale,
                }
            }
        }
        ActiveStructure::Groups { groups } => {
            let items = groups
                .iter()
                .map(|g| {
                    let op = problem.design.column_subset(&g.indices);
                    let a_unit = op.apply(&g.unit);
                    GroupBlock { op, a_unit, ratio: g.ratio }
                })
                .collect();
            HessStructure::Groups { items }
        }
        ActiveStructure::Opaque => {
            return Err(Error::UnsupportedRegularizer(
                "dual Hessian needs coordinate or group active-set structure".into(),
            ))
        }
    };
    Ok(HessOperator {
        conj_hess,
        eta1: state.eta1,
        eta2: state.eta2,
        structure,
    })
}

/// Preconditioned conjugate gradients for `H d = rhs`, starting from 0,
/// with Jacobi preconditioning. Returns the iterate and the iteration
/// count; stops when `‖r‖ ≤ rtol·‖rhs‖` or the budget runs out.
pub(crate) fn pcg(
    h: &HessOperator,
    rhs: &Array1<f64>,
    rtol: f64,
    max_iter: usize,
) -> (Array1<f64>, usize) {
    let n = rhs.len();
    let diag = h.diag();
    let inv_diag = diag.mapv(|d| if d > 0.0 { 1.0 / d } else { 1.0 });
    let mut x = Array1::<f64>::zeros(n);
    let mut r = rhs.clone();
    let target = rtol * r.dot(&r).sqrt();
    if r.dot(&r).sqrt() <= target {
        return (x, 0);
    }
    let mut z = &inv_diag * &r;
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    for k in 0..max_iter {
        let hp = h.apply(&p);
        let php = p.dot(&hp);
        if php <= 0.0 || !php.is_finite() {
            break; // numerically lost positive definiteness; keep x
        }
        let step = rz / php;
        x.scaled_add(step, &p);
        r.scaled_add(-step, &hp);
        if r.dot(&r).sqrt() <= target {
            return (x, k + 1);
        }
        z = &inv_diag * &r;
        let rz_new = r.dot(&z);
        let beta = rz_new / rz;
        rz = rz_new;
        p = &z + &(p.mapv(|v| v * beta));
    }
    (x, max_iter)
}

/// Result of one inner minimization.
pub struct InnerOutcome {
    pub alpha: Array1<f64>,
    pub w_plus: Array1<f64>,
    pub b_plus: Option<f64>,
    pub newton_steps: usize,
    pub pcg_steps: usize,
}

/// Minimizes the dual augmented Lagrangian from `state.alpha` by truncated
/// Newton with Armijo backtracking and a fraction-to-the-boundary cap for
/// losses with bounded conjugate domains.
///
/// The default stopping rule accepts `α` once
/// `‖∇φ(α)‖ ≤ √γ · √(‖w⁺−wᵗ‖²/η₁ + (b⁺−bᵗ)²/η₂)`
/// (γ = strong-convexity modulus of `f_ℓ*`), floored at
/// `1e-12·(1 + ‖∇f_ℓ*(−α)‖)` so a stationary prox step cannot demand an
/// exactly-zero gradient.
///
/// # Errors
/// [`Error::NonConvergence`] if the Newton budget runs out, and domain
/// errors from the conjugate oracles.
pub fn inner_solve(problem: &Problem, state: &DalState, opts: &InnerOptions) -> Result<InnerOutcome> {
    let gamma = problem.loss.gamma();
    let mut alpha = state.alpha.clone();
    let mut pcg_total = 0usize;
    let mut last_gnorm = f64::NAN;

    for k in 0..=opts.max_newton {
        let ag = al_grad(problem, state, &alpha)?;
        let gnorm = ag.grad.dot(&ag.grad).sqrt();
        last_gnorm = gnorm;

        let stop = match opts.force_tol {
            Some(tol) => gnorm <= tol,
            None => {
                let dw = &ag.w_plus - &state.w;
                let mut step2 = dw.dot(&dw) / state.eta1;
                if let (Some(bp), Some(eta2)) = (ag.b_plus, state.eta2) {
                    step2 += (bp - state.b) * (bp - state.b) / eta2;
                }
                let rhs = gamma.sqrt() * step2.sqrt();
                let floor = 1e-12 * (1.0 + ag.conj_grad_norm);
                gnorm <= rhs.max(floor)
            }
        };
        if stop {
            return Ok(InnerOutcome {
                alpha,
                w_plus: ag.w_plus,
                b_plus: ag.b_plus,
                newton_steps: k,
                pcg_steps: pcg_total,
            });
        }
        if k == opts.max_newton {
            break;
        }

        let hess = al_hessian(problem, state, &alpha, &ag.active)?;
        let rtol = opts.pcg_rtol_cap.min(gnorm.sqrt());
        let neg_g = ag.grad.mapv(|v| -v);
        let (mut dir, used) = pcg(&hess, &neg_g, rtol, opts.max_pcg);
        pcg_total += used;
        let mut slope = dir.dot(&ag.grad);
        // `>= 0` or NaN: CG failed to produce descent; fall back to
        // preconditioned steepest descent.
        if slope.partial_cmp(&0.0) != Some(std::cmp::Ordering::Less) {
            let d = hess.diag();
            dir = Array1::from_iter(
                ag.grad.iter().zip(d.iter()).map(|(&g, &di)| -g / di.max(1e-12)),
            );
            slope = dir.dot(&ag.grad);
        }

        // Keep strictly inside the conjugate domain.
        let tmax = problem.loss.max_feasible_step(&alpha, &dir);
        let mut t = if tmax.is_finite() { (0.999 * tmax).min(1.0) } else { 1.0 };

        let phi0 = al_value(problem, state, &alpha);
        let mut accepted = false;
        for _ in 0..60 {
            let cand = &alpha + &(dir.mapv(|v| v * t));
            let phi = al_value(problem, state, &cand);
            if phi.is_finite() && phi <= phi0 + opts.backtrack_c * t * slope {
                alpha = cand;
                accepted = true;
                break;
            }
            t *= opts.backtrack_beta;
        }
        if !accepted {
            // The line search collapsed: the gradient is accurate to
            // machine precision relative to the value; treat the current
            // point as the inner optimum.
            return Ok(InnerOutcome {
                alpha,
                w_plus: ag.w_plus,
                b_plus: ag.b_plus,
                newton_steps: k,
                pcg_steps: pcg_total,
            });
        }
    }

    Err(Error::NonConvergence {
        iters: opts.max_newton,
        message: format!(
            "inner Newton exhausted its budget with ‖∇φ‖ = {last_gnorm:.3e}"
        ),
        best: None,
    })
}

/// Whether the intercept proximity parameter escalates: true when the
/// feasibility violation `|1ᵀα|` failed to halve against the previous
/// outer step and still exceeds `tol`. Never escalates on the first two
/// steps (`t ≤ 1`, 0-based): there is no trustworthy previous violation.
pub fn bias_escalates(t: usize, viol: f64, prev_viol: Option<f64>, tol: f64) -> bool {
    t > 1
        && match prev_viol {
            Some(p) => viol > p / 2.0 && viol > tol,
            None => false,
        }
}

/// Solves the problem from the zero initial point.
pub fn solve(problem: &Problem, opts: &DalOptions) -> Result<Solution> {
    let w0 = Array1::zeros(problem.features());
    solve_from(problem, opts, w0, None)
}

/// Solves the problem from a warm start. `b0` may only be given in bias
/// mode (it defaults to 0 there).
///
/// # Errors
/// [`Error::UnsupportedRegularizer`] for regularizers without coordinate
/// or group prox structure (trace norm, support functions) — use the
/// first-order baselines for those; [`Error::NonConvergence`] with the
/// best iterate if the outer budget runs out; domain errors are
/// propagated from the conjugate oracles.
///
/// # Panics
/// If `w0` has the wrong length or `b0` is given without `bias` mode.
pub fn solve_from(
    problem: &Problem,
    opts: &DalOptions,
    w0: Array1<f64>,
    b0: Option<f64>,
) -> Result<Solution> {
    assert_eq!(w0.len(), problem.features(), "solve_from: w0 length mismatch");
    assert!(
        opts.bias || b0.is_none(),
        "solve_from: intercept start given but bias mode is off"
    );
    if matches!(
        problem.reg,
        Regularizer::TraceNorm { .. } | Regularizer::SupportFunction { .. }
    ) {
        return Err(Error::UnsupportedRegularizer(
            "the dual solver needs coordinate or group prox structure; \
             use the first-order baselines for this regularizer"
            .into(),
        ));
    }

    let start = Instant::now();
    let b_init = if opts.bias { b0.unwrap_or(0.0) } else { 0.0 };
    let mut z0 = problem.design.apply(&w0);
    if opts.bias {
        z0.mapv_inplace(|v| v + b_init);
    }
    let alpha0 = problem
        .loss
        .clamp_to_domain(&problem.loss.grad(&z0).mapv(|v| -v), 1e-6);

    let mut state = DalState {
        w: w0,
        b: b_init,
        alpha: alpha0,
        t: 0,
        eta1: opts.eta0,
        eta2: if opts.bias { Some(opts.bias_eta0.unwrap_or(opts.eta0)) } else { None },
        prev_viol: None,
    };

    let mut trace = Trace::default();
    let mut iterates: Option<Vec<Array1<f64>>> = if opts.keep_iterates { Some(Vec::new()) } else { None };

    // Gap of the current iterate, with the dual candidate centered first in
    // bias mode. A zero objective certifies an exact fit with zero
    // regularization — already optimal.
    let gap = |state: &DalState, cand: &Array1<f64>| -> Result<(f64, f64)> {
        let bias = if opts.bias { Some(state.b) } else { None };
        let f = objective(problem, &state.w, bias);
        if f == 0.0 {
            return Ok((0.0, 0.0));
        }
        let cand = if opts.bias {
            diagnostics::center_dual_candidate(cand)
        } else {
            cand.clone()
        };
        let info = diagnostics::rdg(&problem.design, &problem.loss, &problem.reg, &state.w, bias, &cand)?;
        Ok((info.primal, info.rdg))
    };

    let record = |trace: &mut Trace,
                  iterates: &mut Option<Vec<Array1<f64>>>,
                  state: &DalState,
                  f: f64,
                  rdg: f64,
                  newton: usize,
                  pcg_steps: usize,
                  secs: f64| {
        trace.push(TraceRecord {
            iter: trace.len(),
            f,
            dual: f - rdg * f,
            rdg,
            nnz: state.w.iter().filter(|v| **v != 0.0).count(),
            inner_newton: newton,
            pcg_steps,
            eta1: state.eta1,
            eta2: state.eta2,
            seconds: secs,
            dist_to_ref: None,
        });
        if let Some(list) = iterates {
            list.push(state.w.clone());
        }
    };

    let (f0, rdg0) = gap(&state, &state.alpha.clone())?;
    record(&mut trace, &mut iterates, &state, f0, rdg0, 0, 0, 0.0);

    let build_solution = |state: &DalState, f: f64, rdg: f64, trace: Trace, iterates: Option<Vec<Array1<f64>>>| Solution {
        w: state.w.clone(),
        b: if opts.bias { Some(state.b) } else { None },
        alpha: state.alpha.clone(),
        f,
        rdg,
        iters: state.t,
        trace,
        iterates,
    };

    if rdg0 <= opts.rdg_tol {
        return Ok(build_solution(&state, f0, rdg0, trace, iterates));
    }

    let mut last = (f0, rdg0);
    for t in 0..opts.max_outer {
        let outcome = inner_solve(problem, &state, &opts.inner)?;
        state.alpha = outcome.alpha;
        state.w = outcome.w_plus;
        if let Some(bp) = outcome.b_plus {
            state.b = bp;
        }
        state.t = t + 1;

        let (f, rdg) = gap(&state, &state.alpha.clone())?;
        last = (f, rdg);
        record(
            &mut trace,
            &mut iterates,
            &state,
            f,
            rdg,
            outcome.newton_steps,
            outcome.pcg_steps,
            start.elapsed().as_secs_f64(),
        );
        if rdg <= opts.rdg_tol {
            return Ok(build_solution(&state, f, rdg, trace, iterates));
        }

        // Proximity updates happen after the row is recorded so each row
        // shows the parameters that produced it.
        if let Some(eta2) = state.eta2 {
            let viol = state.alpha.sum().abs();
            let factor = if bias_escalates(t, viol, state.prev_viol, opts.bias_viol_tol) {
                opts.bias_escalation_factor
            } else {
                2.0
            };
            state.eta2 = Some(eta2 * factor);
            state.prev_viol = Some(viol);
        }
        state.eta1 *= opts.eta_factor;
    }

    let (f, rdg) = last;
    let best = build_solution(&state, f, rdg, trace, iterates);
    Err(Error::NonConvergence {
        iters: opts.max_outer,
        message: format!("outer budget exhausted with relative gap {rdg:.3e}"),
        best: Some(BestIterate::Dal(Box::new(best))),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use dal_testkit::{central_diff_grad, normal_array1, normal_array2, seeded_rng};
    use ndarray::array;

    fn small_problem() -> Problem {
        let a = array![
            [0.6, -0.3, 0.9, 0.1],
            [-0.2, 1.1, 0.4, -0.7],
            [0.5, 0.2, -0.8, 0.3],
        ];
        let y = array![1.2, -0.4, 0.7];
        Problem::new(
            DesignOperator::dense(a),
            LossFunction::squared(y),
            Regularizer::l1(0.3),
        )
    }

    fn state_for(problem: &Problem, eta1: f64, eta2: Option<f64>) -> DalState {
        DalState {
            w: Array1::zeros(problem.features()),
            b: 0.0,
            alpha: Array1::zeros(problem.samples()),
            t: 0,
            eta1,
            eta2,
            prev_viol: None,
        }
    }

    #[test]
    fn al_grad_matches_finite_differences() {
        let problem = small_problem();
        let state = state_for(&problem, 0.7, None);
        let alpha = array![0.3, -0.5, 0.2];
        let ag = al_grad(&problem, &state, &alpha).unwrap();
        let f = |x: &[f64]| al_value(&problem, &state, &Array1::from(x.to_vec()));
        let fd = central_diff_grad(f, alpha.as_slice().unwrap(), 1e-6);
        for (i, (&g, &d)) in ag.grad.iter().zip(&fd).enumerate() {
            assert!((g - d).abs() < 1e-6 * (1.0 + d.abs()), "coord {i}: {g} vs {d}");
        }
    }

    #[test]
    fn al_grad_with_bias_matches_finite_differences() {
        let problem = small_problem();
        let mut state = state_for(&problem, 0.7, Some(0.4));
        state.b = 0.25;
        let alpha = array![0.3, -0.5, 0.2];
        let ag = al_grad(&problem, &state, &alpha).unwrap();
        let f = |x: &[f64]| al_value(&problem, &state, &Array1::from(x.to_vec()));
        let fd = central_diff_grad(f, alpha.as_slice().unwrap(), 1e-6);
        for (&g, &d) in ag.grad.iter().zip(&fd) {
            assert!((g - d).abs() < 1e-6 * (1.0 + d.abs()));
        }
        assert!((ag.b_plus.unwrap() - (0.25 + 0.4 * alpha.sum())).abs() < 1e-15);
    }

    #[test]
    fn hessian_apply_matches_gradient_differences() {
        let problem = small_problem();
        let state = state_for(&problem, 0.9, Some(0.5));
        let alpha = array![0.25, -0.4, 0.15];
        let ag = al_grad(&problem, &state, &alpha).unwrap();
        let h = al_hessian(&problem, &state, &alpha, &ag.active).unwrap();
        let mut rng = seeded_rng(7);
        let v = normal_array1(&mut rng, 3);
        let hv = h.apply(&v);
        // Directional finite difference of the gradient. The prox pattern
        // is locally constant away from kinks, so this is exact to O(h²).
        let h_fd = 1e-6;
        let ap = al_grad(&problem, &state, &(&alpha + &(v.mapv(|x| x * h_fd)))).unwrap();
        let am = al_grad(&problem, &state, &(&alpha - &(v.mapv(|x| x * h_fd)))).unwrap();
        for i in 0..3 {
            let fd = (ap.grad[i] - am.grad[i]) / (2.0 * h_fd);
            assert!(
                (hv[i] - fd).abs() < 1e-5 * (1.0 + fd.abs()),
                "coord {i}: {} vs {}",
                hv[i],
                fd
            );
        }
    }

    #[test]
    fn hessian_diag_matches_materialized_diagonal() {
        let problem = small_problem();
        let state = state_for(&problem, 0.9, None);
        let alpha = array![0.25, -0.4, 0.15];
        let ag = al_grad(&problem, &state, &alpha).unwrap();
        let h = al_hessian(&problem, &state, &alpha, &ag.active).unwrap();
        let d = h.diag();
        for i in 0..3 {
            let mut e = Array1::zeros(3);
            e[i] = 1.0;
            let col = h.apply(&e);
            assert!((d[i] - col[i]).abs() < 1e-12, "diag {i}: {} vs {}", d[i], col[i]);
        }
    }

    #[test]
    fn pcg_solves_to_requested_residual() {
        let problem = small_problem();
        let state = state_for(&problem, 2.0, None);
        // Elastic net with θ = 1 keeps every coordinate active (pure
        // ridge), so the Hessian is dense SPD.
        let problem = Problem::new(
            problem.design.clone(),
            problem.loss.clone(),
            Regularizer::elastic_net(0.4, 1.0),
        );
        let alpha = array![0.3, -0.2, 0.5];
        let ag = al_grad(&problem, &state, &alpha).unwrap();
        let h = al_hessian(&problem, &state, &alpha, &ag.active).unwrap();
        let rhs = array![1.0, -2.0, 0.5];
        let (x, iters) = pcg(&h, &rhs, 1e-10, 50);
        let r = &rhs - &h.apply(&x);
        assert!(r.dot(&r).sqrt() <= 1e-10 * rhs.dot(&rhs).sqrt() * 1.01);
        assert!(iters <= 3, "3-dim SPD system should need ≤3 CG steps, took {iters}");
    }

    #[test]
    fn inner_solve_reaches_stationarity_of_the_dual() {
        // At the inner optimum, −∇f_ℓ(A w⁺) = α: the dual iterate equals
        // the negative loss gradient at the candidate predictions.
        let problem = small_problem();
        let state = state_for(&problem, 1.5, None);
        let opts = InnerOptions { force_tol: Some(1e-11), ..InnerOptions::default() };
        let out = inner_solve(&problem, &state, &opts).unwrap();
        let z = problem.design.apply(&out.w_plus);
        let neg_grad = problem.loss.grad(&z).mapv(|v| -v);
        for i in 0..3 {
            assert!(
                (neg_grad[i] - out.alpha[i]).abs() < 1e-8,
                "sample {i}: {} vs {}",
                neg_grad[i],
                out.alpha[i]
            );
        }
        // And the candidate is the prox of the dual-shifted anchor.
        let q = &state.w + &(problem.design.apply_adjoint(&out.alpha).mapv(|v| v * state.eta1));
        let (w_check, _) = problem.reg.prox(&q, state.eta1);
        for j in 0..4 {
            assert!((w_check[j] - out.w_plus[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn bias_escalation_truth_table() {
        // Never on the first two steps.
        assert!(!bias_escalates(0, 1.0, None, 1e-3));
        assert!(!bias_escalates(1, 1.0, Some(1.0), 1e-3));
        // Stalled and large: escalate.
        assert!(bias_escalates(2, 0.9, Some(1.0), 1e-3));
        // Halved: no escalation.
        assert!(!bias_escalates(2, 0.4, Some(1.0), 1e-3));
        // Small violation: no escalation even if stalled.
        assert!(!bias_escalates(2, 5e-4, Some(6e-4), 1e-3));
        // Exactly at half: no escalation (strict inequality).
        assert!(!bias_escalates(3, 0.5, Some(1.0), 1e-3));
    }

    #[test]
    fn eta_schedule_doubles_and_rows_show_the_eta_used() {
        let mut rng = seeded_rng(11);
        let a = normal_array2(&mut rng, 8, 12);
        let y = normal_array1(&mut rng, 8);
        let problem = Problem::new(
            DesignOperator::dense(a),
            LossFunction::squared(y),
            Regularizer::l1(0.05),
        );
        let mut opts = DalOptions::new(1.0);
        opts.rdg_tol = 1e-14; // force several steps
        opts.max_outer = 5;
        let err = solve(&problem, &opts);
        let trace = match err {
            Ok(sol) => sol.trace,
            Err(Error::NonConvergence { best: Some(BestIterate::Dal(sol)), .. }) => sol.trace,
            other => panic!("unexpected outcome: {other:?}"),
        };
        let etas: Vec<f64> = trace.records.iter().map(|r| r.eta1).collect();
        assert!(etas.len() >= 4);
        assert_eq!(etas[0], 1.0);
        assert_eq!(etas[1], 1.0);
        assert_eq!(etas[2], 2.0);
        assert_eq!(etas[3], 4.0);
    }

    #[test]
    fn solve_decreases_objective_monotonically() {
        let mut rng = seeded_rng(3);
        let a = normal_array2(&mut rng, 6, 10);
        let y = normal_array1(&mut rng, 6);
        let problem = Problem::new(
            DesignOperator::dense(a),
            LossFunction::squared(y),
            Regularizer::l1(0.2),
        );
        let mut opts = DalOptions::new(0.5);
        opts.rdg_tol = 1e-8;
        opts.keep_iterates = true;
        let sol = solve(&problem, &opts).unwrap();
        let fs: Vec<f64> = sol.trace.records.iter().map(|r| r.f).collect();
        for k in 1..fs.len() {
            assert!(
                fs[k] <= fs[k - 1] + 1e-12 * (1.0 + fs[k - 1].abs()),
                "objective rose at row {k}: {} -> {}",
                fs[k - 1],
                fs[k]
            );
        }
        assert_eq!(sol.iterates.as_ref().unwrap().len(), sol.trace.len());
        assert!(sol.rdg <= 1e-8);
    }

    #[test]
    fn dominant_regularization_returns_zero_immediately() {
        let mut rng = seeded_rng(19);
        let a = normal_array2(&mut rng, 10, 25);
        let y = Array1::from_iter((0..10).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }));
        let design = DesignOperator::dense(a);
        // λ̄ = 1 in the scaling where the zero solution appears at λ̄ ≥ ½.
        let lam = design.apply_adjoint(&y).iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        let problem = Problem::new(design, LossFunction::logistic(y), Regularizer::l1(lam));
        let sol = solve(&problem, &DalOptions::new(1.0 / lam)).unwrap();
        assert_eq!(sol.iters, 0);
        assert!(sol.w.iter().all(|&v| v == 0.0));
        assert!(sol.rdg.abs() < 1e-12);
    }

    #[test]
    fn solve_rejects_opaque_regularizers() {
        let problem = Problem::new(
            DesignOperator::dense(array![[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]]),
            LossFunction::squared(array![1.0, 2.0]),
            Regularizer::trace_norm(0.5, 2, 2),
        );
        assert!(matches!(
            solve(&problem, &DalOptions::new(1.0)),
            Err(Error::UnsupportedRegularizer(_))
        ));
    }

    #[test]
    fn bias_mode_fits_an_intercept() {
        // Targets with a constant offset: the intercept should absorb it.
        let mut rng = seeded_rng(23);
        let a = normal_array2(&mut rng, 30, 6);
        let y = Array1::from_iter((0..30).map(|i| 3.0 + 0.01 * (i as f64 % 5.0)));
        let problem = Problem::new(
            DesignOperator::dense(a),
            LossFunction::squared(y),
            Regularizer::l1(2.0),
        );
        let mut opts = DalOptions::new(0.5).with_bias();
        opts.rdg_tol = 1e-8;
        opts.max_outer = 60;
        let sol = solve(&problem, &opts).unwrap();
        let b = sol.b.unwrap();
        assert!((b - 3.02).abs() < 0.05, "intercept {b} far from target mean");
        // Dual feasibility for the intercept: 1ᵀα ≈ 0.
        assert!(sol.alpha.sum().abs() < 1e-4, "violation {}", sol.alpha.sum().abs());
    }

    #[test]
    fn group_regularizer_zeroes_whole_groups() {
        let mut rng = seeded_rng(31);
        let a = normal_array2(&mut rng, 12, 9);
        let y = normal_array1(&mut rng, 12);
        let groups = vec![vec![0, 1, 2], vec![3, 4, 5], vec![6, 7, 8]];
        let problem = Problem::new(
            DesignOperator::dense(a),
            LossFunction::squared(y),
            Regularizer::group_lasso(2.5, groups.clone(), 9),
        );
        let mut opts = DalOptions::new(1.0);
        opts.rdg_tol = 1e-7;
        let sol = solve(&problem, &opts).unwrap();
        for g in &groups {
            let norm: f64 = g.iter().map(|&j| sol.w[j] * sol.w[j]).sum::<f64>().sqrt();
            let zeros = g.iter().filter(|&&j| sol.w[j] == 0.0).count();
            assert!(
                zeros == g.len() || zeros == 0,
                "group partially zero (norm {norm}): {:?}",
                g.iter().map(|&j| sol.w[j]).collect::<Vec<_>>()
            );
        }
    }
}
