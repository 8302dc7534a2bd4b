//! Solver instrumentation: trace records, the relative duality gap used
//! for termination, curvature estimation from a trajectory, per-iteration
//! convergence-bound checks, and high-accuracy reference solutions.

use crate::dal;
use crate::design::DesignOperator;
use crate::linalg;
use crate::loss::LossFunction;
use crate::prox::Regularizer;
use crate::{Error, Result};
use ndarray::Array1;

/// One row of a solver trace. Field order matches the on-disk record
/// layout: iter, f, dual, rdg, nnz, inner_newton, pcg_steps, eta1, eta2,
/// seconds, dist_to_ref. `eta2` is present only for the bias-augmented
/// solver; `dist_to_ref` only once a reference solution is attached.
#[derive(Debug, Clone)]
pub struct TraceRecord {
    pub iter: usize,
    pub f: f64,
    pub dual: f64,
    pub rdg: f64,
    pub nnz: usize,
    pub inner_newton: usize,
    pub pcg_steps: usize,
    pub eta1: f64,
    pub eta2: Option<f64>,
    pub seconds: f64,
    pub dist_to_ref: Option<f64>,
}

/// Iteration history of one solver run. Row 0 describes the initial
/// iterate; row `k ≥ 1` describes the iterate produced by outer step `k`,
/// with `eta1`/`eta2` recording the proximity parameters used by that step.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn push(&mut self, r: TraceRecord) {
        self.records.push(r);
    }

    /// Final objective value, if any rows exist.
    pub fn last_f(&self) -> Option<f64> {
        self.records.last().map(|r| r.f)
    }
}

/// Centers a dual candidate to satisfy the bias-feasibility constraint
/// `1ᵀα = 0`: returns `α − mean(α)·1`.
pub fn center_dual_candidate(alpha: &Array1<f64>) -> Array1<f64> {
    let mean = alpha.sum() / alpha.len() as f64;
    alpha.mapv(|v| v - mean)
}

/// Result of a duality-gap evaluation.
#[derive(Debug, Clone)]
pub struct DualGapInfo {
    /// Primal objective `f(w) = f_ℓ(Aw + b·1) + φ_λ(w)`.
    pub primal: f64,
    /// Dual objective of the feasibility-corrected candidate.
    pub dual: f64,
    /// Relative duality gap `(primal − dual)/primal`.
    pub rdg: f64,
    /// The candidate after projection/scaling into the dual-feasible set.
    pub scaled_candidate: Array1<f64>,
}

/// Relative duality gap of `w` (and optional intercept `b`) against a dual
/// candidate `α`.
///
/// The candidate is made dual-feasible per regularizer family:
/// - ℓ1 / group lasso / trace norm: scale by `min(1, λ/‖Aᵀα‖∘)` where
///   `‖·‖∘` is the respective dual norm (max-abs, max group norm, largest
///   singular value);
/// - weighted ℓ1: coordinates with `λ_j = 0` demand exact feasibility
///   `(Aᵀα)_j = 0`, enforced by projecting `α` onto that subspace (small
///   Gram system) before scaling over the `λ_j > 0` coordinates;
/// - elastic net with `θ > 0`: the dual is unconstrained; its value is
///   `−f*(−α) − Σ((|(Aᵀα)_j| − λ(1−θ))₊)²/(2λθ)` (θ = 0 falls back to ℓ1);
/// - support functions: unsupported (the feasible set is only available
///   through a projector, not a dual norm), returns an error.
///
/// For the bias-augmented problem, pass `bias = Some(b)` and a candidate
/// that is already centered (see [`center_dual_candidate`]); centering is a
/// caller responsibility because the candidate returned in
/// [`DualGapInfo::scaled_candidate`] must expose it for feasibility checks.
///
/// # Errors
/// [`Error::Degenerate`] if the primal objective is not strictly positive;
/// [`Error::UnsupportedRegularizer`] for support functions.
///
/// # Panics
/// On dimension mismatches.
pub fn rdg(
    design: &DesignOperator,
    loss: &LossFunction,
    reg: &Regularizer,
    w: &Array1<f64>,
    bias: Option<f64>,
    candidate: &Array1<f64>,
) -> Result<DualGapInfo> {
    assert_eq!(w.len(), design.cols(), "rdg: w length mismatch");
    assert_eq!(candidate.len(), design.rows(), "rdg: candidate length mismatch");
    let mut z = design.apply(w);
    if let Some(b) = bias {
        z.mapv_inplace(|v| v + b);
    }
    let primal = loss.value(&z) + reg.reg_value(w);
    if primal <= 0.0 {
        return Err(Error::Degenerate(format!(
            "relative duality gap undefined for non-positive objective {primal}"
        )));
    }

    // Exact-feasibility projection for unregularized coordinates.
    let mut alpha = candidate.clone();
    if let Regularizer::WeightedL1 { weights } = reg {
        let zero_cols: Vec<usize> = (0..weights.len()).filter(|&j| weights[j] == 0.0).collect();
        if !zero_cols.is_empty() {
            let sub = design.column_subset(&zero_cols);
            let b_mat = sub.materialize();
            let gram = b_mat.t().dot(&b_mat);
            let k = zero_cols.len();
            let ridge = 1e-12 * (1.0 + gram.diag().sum() / k as f64);
            let mut g = gram;
            for i in 0..k {
                g[[i, i]] += ridge;
            }
            let rhs = sub.apply_adjoint(&alpha);
            let x = linalg::cholesky_solve(&g, &rhs);
            let corr = sub.apply(&x);
            alpha = &alpha - &corr;
        }
    }

    let v = design.apply_adjoint(&alpha);
    let mut extra_dual_penalty = 0.0;
    let scale = match reg {
        Regularizer::L1 { lambda } => {
            let denom = v.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
            if denom > *lambda && denom > 0.0 {
                lambda / denom
            } else {
                1.0
            }
        }
        Regularizer::WeightedL1 { weights } => {
            let mut s = 1.0f64;
            for j in 0..weights.len() {
                if weights[j] > 0.0 && v[j].abs() > weights[j] {
                    s = s.min(weights[j] / v[j].abs());
                }
            }
            s
        }
        Regularizer::GroupLasso { lambda, groups, .. } => {
            let mut worst = 0.0f64;
            for g in groups.iter() {
                let n = g.iter().map(|&j| v[j] * v[j]).sum::<f64>().sqrt();
                worst = worst.max(n);
            }
            if worst > *lambda && worst > 0.0 {
                lambda / worst
            } else {
                1.0
            }
        }
        Regularizer::ElasticNet { lambda, theta } => {
            if *theta > 0.0 && *lambda > 0.0 {
                let a0 = lambda * (1.0 - theta);
                let b0 = lambda * theta;
                extra_dual_penalty = v
                    .iter()
                    .map(|&x| {
                        let e = (x.abs() - a0).max(0.0);
                        e * e / (2.0 * b0)
                    })
                    .sum();
                1.0
            } else {
                let denom = v.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
                if denom > *lambda && denom > 0.0 {
                    lambda / denom
                } else {
                    1.0
                }
            }
        }
        Regularizer::TraceNorm { lambda, rows, cols } => {
            let mat = ndarray::Array2::from_shape_vec((*rows, *cols), v.to_vec()).unwrap();
            let (_, s, _) = linalg::svd(&mat);
            let top = if s.is_empty() { 0.0 } else { s[0] };
            if top > *lambda && top > 0.0 {
                lambda / top
            } else {
                1.0
            }
        }
        Regularizer::SupportFunction { .. } => {
            return Err(Error::UnsupportedRegularizer(
                "duality gap needs a dual norm; support functions expose only a projector".into(),
            ))
        }
    };

    let scaled = alpha.mapv(|x| x * scale);
    let dual = -loss.conj_value(&scaled) - extra_dual_penalty;
    Ok(DualGapInfo {
        primal,
        dual,
        rdg: (primal - dual) / primal,
        scaled_candidate: scaled,
    })
}

/// High-accuracy solution used as ground truth by the bound checks.
#[derive(Debug, Clone)]
pub struct ReferenceSolution {
    pub w_star: Array1<f64>,
    pub f_star: f64,
    /// Strong-convexity-style curvature of the objective around `w_star`
    /// along the observed trajectory; 0 until estimated (see
    /// [`estimate_sigma`]).
    pub sigma: f64,
    /// Euclidean norm of the minimum-norm subgradient at `w_star`.
    pub subgrad_norm: f64,
}

impl ReferenceSolution {
    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }
}

/// Computes a reference solution for ℓ1 / weighted-ℓ1 problems: a tightly
/// converged dual-augmented-Lagrangian run (relative gap below 1e-9),
/// followed by Newton polishing restricted to the discovered support, and
/// certified by the minimum-norm subgradient
///
/// `‖r‖² = Σ_{j∈J} (g_j + λ_j sign(w_j))² + Σ_{j∉J} ((|g_j| − λ_j)₊)²`,
///
/// with `g = Aᵀ∇f_ℓ(Aw)`, required to satisfy `‖r‖ ≤ 1e-10`.
///
/// # Errors
/// [`Error::UnsupportedRegularizer`] for families other than ℓ1/weighted
/// ℓ1; [`Error::Degenerate`] if polishing cannot reach the certificate;
/// solver errors from the inner run are propagated.
pub fn compute_reference(
    design: &DesignOperator,
    loss: &LossFunction,
    reg: &Regularizer,
    eta0: f64,
) -> Result<ReferenceSolution> {
    let weights: Array1<f64> = match reg {
        Regularizer::L1 { lambda } => Array1::from_elem(design.cols(), *lambda),
        Regularizer::WeightedL1 { weights } => weights.clone(),
        other => {
            return Err(Error::UnsupportedRegularizer(format!(
                "reference recipe supports ℓ1-type regularizers, got {other:?}"
            )))
        }
    };

    let problem = dal::Problem::new(design.clone(), loss.clone(), reg.clone());
    let mut opts = dal::DalOptions::new(eta0);
    opts.rdg_tol = 1e-9;
    opts.max_outer = 120;
    let sol = dal::solve(&problem, &opts)?;
    let mut w = sol.w;

    // Support = nonzero coordinates plus every unregularized coordinate.
    let support: Vec<usize> = (0..w.len())
        .filter(|&j| w[j] != 0.0 || weights[j] == 0.0)
        .collect();

    let subgrad_norm = |w: &Array1<f64>| -> f64 {
        let z = design.apply(w);
        let g = design.apply_adjoint(&loss.grad(&z));
        let mut acc = 0.0;
        for j in 0..w.len() {
            if support.contains(&j) {
                let s = if weights[j] == 0.0 { 0.0 } else { w[j].signum() };
                let r = g[j] + weights[j] * s;
                acc += r * r;
            } else {
                let r = (g[j].abs() - weights[j]).max(0.0);
                acc += r * r;
            }
        }
        acc.sqrt()
    };

    let objective = |w: &Array1<f64>| -> f64 {
        let z = design.apply(w);
        loss.value(&z) + reg.reg_value(w)
    };

    if !support.is_empty() {
        let sub = design.column_subset(&support);
        let b_mat = sub.materialize();
        for _ in 0..12 {
            if subgrad_norm(&w) <= 1e-12 {
                break;
            }
            let z = design.apply(&w);
            let g_full = design.apply_adjoint(&loss.grad(&z));
            let d = loss.hess_diag(&z);
            // H = BᵀDB with a whisper of ridge for rank safety.
            let k = support.len();
            let mut h = ndarray::Array2::<f64>::zeros((k, k));
            for a in 0..k {
                for b in a..k {
                    let mut acc = 0.0;
                    for i in 0..design.rows() {
                        acc += b_mat[[i, a]] * d[i] * b_mat[[i, b]];
                    }
                    h[[a, b]] = acc;
                    h[[b, a]] = acc;
                }
            }
            let ridge = 1e-13 * (1.0 + h.diag().sum() / k as f64);
            for a in 0..k {
                h[[a, a]] += ridge;
            }
            let mut rhs = Array1::<f64>::zeros(k);
            for (a, &j) in support.iter().enumerate() {
                let s = if weights[j] == 0.0 { 0.0 } else { w[j].signum() };
                rhs[a] = -(g_full[j] + weights[j] * s);
            }
            let delta = linalg::cholesky_solve(&h, &rhs);

            // Damp to preserve signs (the subgradient model is only valid
            // while no supported coordinate crosses zero) and to never
            // increase the objective.
            let f0 = objective(&w);
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..40 {
                let mut cand = w.clone();
                let mut flipped = false;
                for (a, &j) in support.iter().enumerate() {
                    cand[j] += t * delta[a];
                    if weights[j] > 0.0 && w[j] != 0.0 && cand[j].signum() != w[j].signum() {
                        flipped = true;
                    }
                }
                if !flipped && objective(&cand) <= f0 + 1e-15 * (1.0 + f0.abs()) {
                    w = cand;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
        }
    }

    let cert = subgrad_norm(&w);
    if cert > 1e-10 {
        return Err(Error::Degenerate(format!(
            "reference polish stalled with subgradient norm {cert:.3e} > 1e-10"
        )));
    }
    Ok(ReferenceSolution {
        f_star: objective(&w),
        w_star: w,
        sigma: 0.0,
        subgrad_norm: cert,
    })
}

/// Fills `dist_to_ref` on every trace row from the stored iterates
/// (`iterates[k]` is the primal iterate described by row `k`).
///
/// # Panics
/// If the lengths disagree.
pub fn attach_reference(
    trace: &mut Trace,
    iterates: &[Array1<f64>],
    reference: &ReferenceSolution,
) {
    assert_eq!(
        trace.len(),
        iterates.len(),
        "attach_reference: one iterate per trace row required"
    );
    for (rec, w) in trace.records.iter_mut().zip(iterates) {
        let d = w - &reference.w_star;
        rec.dist_to_ref = Some(d.dot(&d).sqrt());
    }
}

/// Estimates the curvature `σ` of the objective around the optimum from a
/// trajectory: `σ = 0.7 · min_k (f_k − f*)/‖w_k − w*‖²` over rows with
/// positive distance and positive objective gap (the 0.7 is a safety
/// margin).
///
/// # Errors
/// [`Error::Degenerate`] if no row is usable (e.g. the whole trajectory
/// sits at the optimum) or if distances were never attached.
pub fn estimate_sigma(trace: &Trace, f_star: f64) -> Result<f64> {
    let mut best = f64::INFINITY;
    for rec in &trace.records {
        let dist = rec.dist_to_ref.ok_or_else(|| {
            Error::Degenerate("estimate_sigma: trace has no reference distances".into())
        })?;
        let gap = rec.f - f_star;
        if dist > 0.0 && gap > 0.0 {
            best = best.min(gap / (dist * dist));
        }
    }
    if !best.is_finite() {
        return Err(Error::Degenerate(
            "estimate_sigma: every iterate sits at the optimum".into(),
        ));
    }
    Ok(0.7 * best)
}

/// Satisfaction record for one iteration of one bound.
#[derive(Debug, Clone)]
pub struct BoundIteration {
    pub iter: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
}

fn check(iter: usize, lhs: f64, rhs: f64) -> BoundIteration {
    BoundIteration {
        iter,
        lhs,
        rhs,
        satisfied: lhs <= rhs * (1.0 + 1e-9) + 1e-12,
    }
}

/// Per-iteration evaluation of the solver's convergence guarantees.
///
/// Gating bounds (their premises hold for the production solver):
/// - `objective_gap`: `f(w_k) − f* ≤ ‖w⁰ − w*‖² / (2 Σ_{t≤k} η_t)`;
/// - `distance_contraction`: `‖w_k − w*‖²(1 + 2ση_k) ≤ ‖w_{k−1} − w*‖²`
///   (quadratic-growth exponent), equivalently the `1/√(1+2ση)` rate.
///
/// Informational bounds (computed, never gating, because their premises —
/// exact inner minimization, or a tolerance-scheduled stopping rule — are
/// not what the solver runs):
/// - `exact_contraction`: `‖w_k − w*‖(1 + ση_k) ≤ ‖w_{k−1} − w*‖`;
/// - `scheduled_contraction`: `‖w_k − w*‖(1 + ε_k ση_k) ≤ ‖w_{k−1} − w*‖`
///   with `ε_k = max(0.1, 1 − ¾ση_k)`.
#[derive(Debug, Clone)]
pub struct BoundsReport {
    pub objective_gap: Vec<BoundIteration>,
    pub distance_contraction: Vec<BoundIteration>,
    pub exact_contraction: Vec<BoundIteration>,
    pub scheduled_contraction: Vec<BoundIteration>,
    /// True iff every gating bound holds at every iteration.
    pub pass: bool,
}

/// Evaluates the convergence bounds on a trace whose rows carry reference
/// distances (see [`attach_reference`]) against a reference with a
/// positive curvature estimate.
///
/// # Errors
/// [`Error::Degenerate`] if distances are missing, the curvature is not
/// positive, or the trace has fewer than two rows.
pub fn check_bounds(trace: &Trace, reference: &ReferenceSolution) -> Result<BoundsReport> {
    if trace.len() < 2 {
        return Err(Error::Degenerate(
            "check_bounds: need at least an initial row and one step".into(),
        ));
    }
    // `<= 0` or NaN both mean the curvature estimate is unusable.
    if reference.sigma.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::Degenerate(
            "check_bounds: reference curvature must be positive (run estimate_sigma)".into(),
        ));
    }
    let sigma = reference.sigma;
    let f_star = reference.f_star;
    let dist = |k: usize| -> Result<f64> {
        trace.records[k]
            .dist_to_ref
            .ok_or_else(|| Error::Degenerate("check_bounds: trace has no reference distances".into()))
    };

    let d0 = dist(0)?;
    let mut objective_gap = Vec::new();
    let mut distance_contraction = Vec::new();
    let mut exact_contraction = Vec::new();
    let mut scheduled_contraction = Vec::new();

    let mut eta_sum = 0.0;
    for k in 1..trace.len() {
        let rec = &trace.records[k];
        let eta = rec.eta1;
        eta_sum += eta;
        objective_gap.push(check(rec.iter, rec.f - f_star, d0 * d0 / (2.0 * eta_sum)));

        let dk = dist(k)?;
        let dprev = dist(k - 1)?;
        distance_contraction.push(check(rec.iter, dk * dk * (1.0 + 2.0 * sigma * eta), dprev * dprev));
        exact_contraction.push(check(rec.iter, dk * (1.0 + sigma * eta), dprev));
        let eps = (1.0 - 0.75 * sigma * eta).max(0.1);
        scheduled_contraction.push(check(rec.iter, dk * (1.0 + eps * sigma * eta), dprev));
    }

    let pass = objective_gap.iter().all(|b| b.satisfied)
        && distance_contraction.iter().all(|b| b.satisfied);
    Ok(BoundsReport {
        objective_gap,
        distance_contraction,
        exact_contraction,
        scheduled_contraction,
        pass,
    })
}
