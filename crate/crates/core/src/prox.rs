//! Sparsity-inducing regularizers and their proximal calculus.
//!
//! A [`Regularizer`] represents `φ_λ : ℝⁿ → ℝ`. Every family here is
//! positively homogeneous in the sense `η·φ_λ = φ_{λη}` (the elastic net
//! absorbs the factor into both of its parameters), so proximal operators
//! and dual envelopes take a `scale` argument rather than requiring a
//! rescaled object.
//!
//! Three ops form the calculus used by the dual solver:
//! - [`Regularizer::prox`]: `argmin_x ½‖x−y‖² + scale·φ_λ(x)`, returned
//!   together with the [`ActiveStructure`] discovered while thresholding.
//! - [`Regularizer::envelope_star`]: the Moreau envelope of the conjugate
//!   `(scale·φ_λ)*` evaluated through closed forms; for pure support
//!   functions this equals `½‖prox‖²`, but NOT for the elastic net (its
//!   conjugate is not an indicator).
//! - [`Regularizer::reg_value`]: `φ_λ` itself.
//!
//! The Moreau decomposition `prox_f(z) + prox_{f*}(z) = z` is exposed as a
//! runtime check that computes both sides through independent formulas.

use crate::linalg;
use ndarray::{Array1, Array2};
use std::sync::Arc;

/// Projection onto a closed convex set, supplied by the caller for
/// support-function regularizers.
pub type Projector = Arc<dyn Fn(&Array1<f64>) -> Array1<f64> + Send + Sync>;

/// Clamps every coordinate of `v` to `[−radius, radius]`.
///
/// # Panics
/// If `radius < 0`.
pub fn project_linf_ball(v: &Array1<f64>, radius: f64) -> Array1<f64> {
    assert!(radius >= 0.0, "project_linf_ball: negative radius");
    v.mapv(|x| x.clamp(-radius, radius))
}

/// Structure of the proximal output, produced by [`Regularizer::prox`] as
/// a byproduct of thresholding (never recomputed after the fact). The
/// inner Newton method uses it to assemble Hessian products whose cost
/// scales with the active set.
#[derive(Debug, Clone)]
pub enum ActiveStructure {
    /// Coordinate-separable kinds: indices with nonzero prox output, plus
    /// the constant diagonal of the prox Jacobian on those coordinates
    /// (1 for soft-thresholding; `1/(1+scale·λθ)` for the elastic net).
    Coords { indices: Vec<usize>, jac_scale: f64 },
    /// Group-separable kind: the surviving groups.
    Groups { groups: Vec<ActiveGroup> },
    /// Kinds that do not expose coordinate structure (support functions,
    /// trace norm). The dual solver rejects these.
    Opaque,
}

/// One active group: its coordinates, the unit direction `q̃ = q_g/‖q_g‖`
/// of the prox input restricted to the group, and the shrink ratio
/// `r = scale·λ/‖q_g‖ ∈ (0, 1)`.
#[derive(Debug, Clone)]
pub struct ActiveGroup {
    pub indices: Vec<usize>,
    pub unit: Array1<f64>,
    pub ratio: f64,
}

impl ActiveStructure {
    /// Number of active coordinates.
    pub fn active_count(&self) -> usize {
        match self {
            ActiveStructure::Coords { indices, .. } => indices.len(),
            ActiveStructure::Groups { groups } => groups.iter().map(|g| g.indices.len()).sum(),
            ActiveStructure::Opaque => 0,
        }
    }
}

/// A sparsity-inducing regularizer `φ_λ`.
#[derive(Clone)]
pub enum Regularizer {
    /// `λ‖w‖₁`.
    L1 { lambda: f64 },
    /// `Σ_j λ_j |w_j|` with per-coordinate `λ_j ≥ 0` (zero entries leave
    /// the coordinate unregularized).
    WeightedL1 { weights: Array1<f64> },
    /// `λ Σ_g ‖w_g‖₂` over disjoint groups partitioning `{0..n}`.
    GroupLasso {
        lambda: f64,
        groups: Arc<Vec<Vec<usize>>>,
        n: usize,
    },
    /// `λ Σ_j [(1−θ)|w_j| + (θ/2) w_j²]`, `θ ∈ [0, 1]`.
    ElasticNet { lambda: f64, theta: f64 },
    /// Support function `w ↦ sup_{u ∈ C} uᵀw` of a closed convex set `C`
    /// given through its projection oracle.
    SupportFunction { projector: Projector },
    /// `λ·Σσ_j(W)` where `w = vec(W)` row-major with shape `rows×cols`.
    TraceNorm { lambda: f64, rows: usize, cols: usize },
}

impl std::fmt::Debug for Regularizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Regularizer::L1 { lambda } => write!(f, "L1 {{ lambda: {lambda} }}"),
            Regularizer::WeightedL1 { weights } => {
                write!(f, "WeightedL1 {{ weights: {weights} }}")
            }
            Regularizer::GroupLasso { lambda, groups, n } => write!(
                f,
                "GroupLasso {{ lambda: {lambda}, groups: {}, n: {n} }}",
                groups.len()
            ),
            Regularizer::ElasticNet { lambda, theta } => {
                write!(f, "ElasticNet {{ lambda: {lambda}, theta: {theta} }}")
            }
            Regularizer::SupportFunction { .. } => write!(f, "SupportFunction {{ .. }}"),
            Regularizer::TraceNorm { lambda, rows, cols } => {
                write!(f, "TraceNorm {{ lambda: {lambda}, rows: {rows}, cols: {cols} }}")
            }
        }
    }
}

impl Regularizer {
    /// # Panics
    /// If `lambda < 0` or not finite.
    pub fn l1(lambda: f64) -> Self {
        assert!(lambda.is_finite() && lambda >= 0.0, "l1: lambda must be ≥ 0");
        Regularizer::L1 { lambda }
    }

    /// # Panics
    /// If any weight is negative or not finite.
    pub fn weighted_l1(weights: Array1<f64>) -> Self {
        assert!(
            weights.iter().all(|&w| w.is_finite() && w >= 0.0),
            "weighted_l1: weights must be ≥ 0"
        );
        Regularizer::WeightedL1 { weights }
    }

    /// Group lasso over `groups`, which must partition `{0, …, n−1}`.
    ///
    /// # Panics
    /// If `lambda < 0`, any index is `≥ n`, or the groups do not form a
    /// partition (missing or repeated coordinates).
    pub fn group_lasso(lambda: f64, groups: Vec<Vec<usize>>, n: usize) -> Self {
        assert!(lambda.is_finite() && lambda >= 0.0, "group_lasso: lambda must be ≥ 0");
        let mut seen = vec![false; n];
        for g in &groups {
            for &j in g {
                assert!(j < n, "group_lasso: index {j} out of range");
                assert!(!seen[j], "group_lasso: coordinate {j} appears twice");
                seen[j] = true;
            }
        }
        assert!(
            seen.iter().all(|&s| s),
            "group_lasso: groups must cover every coordinate"
        );
        Regularizer::GroupLasso {
            lambda,
            groups: Arc::new(groups),
            n,
        }
    }

    /// # Panics
    /// If `lambda < 0` or `theta ∉ [0, 1]`.
    pub fn elastic_net(lambda: f64, theta: f64) -> Self {
        assert!(lambda.is_finite() && lambda >= 0.0, "elastic_net: lambda must be ≥ 0");
        assert!((0.0..=1.0).contains(&theta), "elastic_net: theta must be in [0,1]");
        Regularizer::ElasticNet { lambda, theta }
    }

    /// Support function of the closed convex set handled by `projector`.
    /// The oracle must return the Euclidean projection onto the set.
    pub fn support_function(projector: Projector) -> Self {
        Regularizer::SupportFunction { projector }
    }

    /// # Panics
    /// If `lambda < 0` or the shape is empty.
    pub fn trace_norm(lambda: f64, rows: usize, cols: usize) -> Self {
        assert!(lambda.is_finite() && lambda >= 0.0, "trace_norm: lambda must be ≥ 0");
        assert!(rows > 0 && cols > 0, "trace_norm: empty shape");
        Regularizer::TraceNorm { lambda, rows, cols }
    }

    /// The regularization level `λ`, where the family has a single one.
    pub fn lambda(&self) -> Option<f64> {
        match self {
            Regularizer::L1 { lambda }
            | Regularizer::GroupLasso { lambda, .. }
            | Regularizer::ElasticNet { lambda, .. }
            | Regularizer::TraceNorm { lambda, .. } => Some(*lambda),
            _ => None,
        }
    }

    pub(crate) fn check_len(&self, len: usize, what: &str) {
        match self {
            Regularizer::WeightedL1 { weights } => {
                assert_eq!(weights.len(), len, "{what}: weight length mismatch");
            }
            Regularizer::GroupLasso { n, .. } => {
                assert_eq!(*n, len, "{what}: group partition covers a different dimension");
            }
            Regularizer::TraceNorm { rows, cols, .. } => {
                assert_eq!(rows * cols, len, "{what}: trace-norm shape mismatch");
            }
            _ => {}
        }
    }

    /// `φ_λ(w)`.
    ///
    /// For support functions this evaluates `sup_{u∈C} uᵀw` by following
    /// the projection of `T·w` for escalating `T` until the support value
    /// stabilizes (valid for compact `C`).
    ///
    /// # Panics
    /// If `w` has the wrong length for this regularizer.
    pub fn reg_value(&self, w: &Array1<f64>) -> f64 {
        self.check_len(w.len(), "reg_value");
        match self {
            Regularizer::L1 { lambda } => lambda * w.iter().map(|v| v.abs()).sum::<f64>(),
            Regularizer::WeightedL1 { weights } => {
                w.iter().zip(weights).map(|(v, l)| l * v.abs()).sum()
            }
            Regularizer::GroupLasso { lambda, groups, .. } => {
                let mut acc = 0.0;
                for g in groups.iter() {
                    acc += g.iter().map(|&j| w[j] * w[j]).sum::<f64>().sqrt();
                }
                lambda * acc
            }
            Regularizer::ElasticNet { lambda, theta } => {
                lambda
                    * w.iter()
                        .map(|v| (1.0 - theta) * v.abs() + 0.5 * theta * v * v)
                        .sum::<f64>()
            }
            Regularizer::SupportFunction { projector } => {
                let mut t = 1.0;
                let mut last = projector(&(w * t)).dot(w);
                for _ in 0..60 {
                    t *= 2.0;
                    let cur = projector(&(w * t)).dot(w);
                    if (cur - last).abs() <= 1e-12 * (1.0 + cur.abs()) {
                        return cur;
                    }
                    last = cur;
                }
                last
            }
            Regularizer::TraceNorm { lambda, rows, cols } => {
                let mat = Array2::from_shape_vec((*rows, *cols), w.to_vec()).unwrap();
                let (_, s, _) = linalg::svd(&mat);
                lambda * s.sum()
            }
        }
    }

    /// `argmin_x ½‖x−y‖² + scale·φ_λ(x)` together with the active
    /// structure discovered while thresholding. Exact zeros are produced
    /// (the `y_j/|y_j|` convention at `y_j = 0` is the zero vector).
    ///
    /// # Panics
    /// If `y` has the wrong length or `scale < 0`.
    pub fn prox(&self, y: &Array1<f64>, scale: f64) -> (Array1<f64>, ActiveStructure) {
        self.check_len(y.len(), "prox");
        assert!(scale.is_finite() && scale >= 0.0, "prox: scale must be ≥ 0");
        match self {
            Regularizer::L1 { lambda } => {
                let tau = lambda * scale;
                soft_threshold_coords(y, |_| tau, 1.0)
            }
            Regularizer::WeightedL1 { weights } => {
                soft_threshold_coords(y, |j| weights[j] * scale, 1.0)
            }
            Regularizer::GroupLasso { lambda, groups, .. } => {
                let tau = lambda * scale;
                let mut out = Array1::<f64>::zeros(y.len());
                let mut active = Vec::new();
                for g in groups.iter() {
                    let norm = g.iter().map(|&j| y[j] * y[j]).sum::<f64>().sqrt();
                    if norm > tau && norm > 0.0 {
                        let shrink = 1.0 - tau / norm;
                        for &j in g {
                            out[j] = shrink * y[j];
                        }
                        active.push(ActiveGroup {
                            indices: g.clone(),
                            unit: Array1::from_iter(g.iter().map(|&j| y[j] / norm)),
                            ratio: tau / norm,
                        });
                    }
                }
                (out, ActiveStructure::Groups { groups: active })
            }
            Regularizer::ElasticNet { lambda, theta } => {
                let a = lambda * scale * (1.0 - theta);
                let b = lambda * scale * theta;
                let (mut out, st) = soft_threshold_coords(y, |_| a, 1.0 / (1.0 + b));
                if b != 0.0 {
                    out.mapv_inplace(|v| v / (1.0 + b));
                }
                (out, st)
            }
            Regularizer::SupportFunction { projector } => {
                if scale == 0.0 {
                    return (y.clone(), ActiveStructure::Opaque);
                }
                let proj = projector(&(y / scale));
                (y - &(proj * scale), ActiveStructure::Opaque)
            }
            Regularizer::TraceNorm { lambda, rows, cols } => {
                let tau = lambda * scale;
                let mat = Array2::from_shape_vec((*rows, *cols), y.to_vec()).unwrap();
                let (u, s, v) = linalg::svd(&mat);
                let k = s.len();
                let mut out = Array2::<f64>::zeros((*rows, *cols));
                for j in 0..k {
                    let sv = (s[j] - tau).max(0.0);
                    if sv > 0.0 {
                        for r in 0..*rows {
                            for c in 0..*cols {
                                out[[r, c]] += sv * u[[r, j]] * v[[c, j]];
                            }
                        }
                    }
                }
                (
                    Array1::from_iter(out.iter().copied()),
                    ActiveStructure::Opaque,
                )
            }
        }
    }

    /// The Moreau envelope of `(scale·φ_λ)*` at `y` — the smooth dual
    /// counterpart of the regularizer, in closed form:
    ///
    /// - soft-threshold families: `½ Σ ((|y_j| − τ_j)₊)²`
    /// - group lasso: `½ Σ_g ((‖y_g‖ − τ)₊)²`
    /// - elastic net: `Σ ((|y_j| − a)₊)² / (2(1+b))` with
    ///   `a = scale·λ(1−θ)`, `b = scale·λθ`
    /// - trace norm: `½ Σ ((σ_j − τ)₊)²` over `min(rows, cols)` values
    /// - support functions: `½‖prox‖²` (their conjugate is an indicator)
    ///
    /// # Panics
    /// If `y` has the wrong length or `scale < 0`.
    pub fn envelope_star(&self, y: &Array1<f64>, scale: f64) -> f64 {
        self.check_len(y.len(), "envelope_star");
        assert!(scale.is_finite() && scale >= 0.0, "envelope_star: scale must be ≥ 0");
        match self {
            Regularizer::L1 { lambda } => {
                let tau = lambda * scale;
                0.5 * y
                    .iter()
                    .map(|v| {
                        let e = (v.abs() - tau).max(0.0);
                        e * e
                    })
                    .sum::<f64>()
            }
            Regularizer::WeightedL1 { weights } => {
                0.5 * y
                    .iter()
                    .zip(weights)
                    .map(|(v, l)| {
                        let e = (v.abs() - l * scale).max(0.0);
                        e * e
                    })
                    .sum::<f64>()
            }
            Regularizer::GroupLasso { lambda, groups, .. } => {
                let tau = lambda * scale;
                let mut acc = 0.0;
                for g in groups.iter() {
                    let norm = g.iter().map(|&j| y[j] * y[j]).sum::<f64>().sqrt();
                    let e = (norm - tau).max(0.0);
                    acc += e * e;
                }
                0.5 * acc
            }
            Regularizer::ElasticNet { lambda, theta } => {
                let a = lambda * scale * (1.0 - theta);
                let b = lambda * scale * theta;
                y.iter()
                    .map(|v| {
                        let e = (v.abs() - a).max(0.0);
                        e * e / (2.0 * (1.0 + b))
                    })
                    .sum()
            }
            Regularizer::SupportFunction { .. } => {
                let (p, _) = self.prox(y, scale);
                0.5 * p.dot(&p)
            }
            Regularizer::TraceNorm { lambda, rows, cols } => {
                let tau = lambda * scale;
                let mat = Array2::from_shape_vec((*rows, *cols), y.to_vec()).unwrap();
                let (_, s, _) = linalg::svd(&mat);
                0.5 * s
                    .iter()
                    .map(|&sv| {
                        let e = (sv - tau).max(0.0);
                        e * e
                    })
                    .sum::<f64>()
            }
        }
    }

    /// Proximal operator of the conjugate `(scale·φ_λ)*`, through formulas
    /// independent of [`Self::prox`] (dual-ball projections for the gauge
    /// families, the closed-form shrink for the elastic net, the caller's
    /// oracle for support functions).
    fn conj_prox(&self, y: &Array1<f64>, scale: f64) -> Array1<f64> {
        self.check_len(y.len(), "conj_prox");
        match self {
            Regularizer::L1 { lambda } => project_linf_ball(y, lambda * scale),
            Regularizer::WeightedL1 { weights } => Array1::from_iter(
                y.iter()
                    .zip(weights)
                    .map(|(&v, &l)| v.clamp(-l * scale, l * scale)),
            ),
            Regularizer::GroupLasso { lambda, groups, .. } => {
                let tau = lambda * scale;
                let mut out = Array1::<f64>::zeros(y.len());
                for g in groups.iter() {
                    let norm = g.iter().map(|&j| y[j] * y[j]).sum::<f64>().sqrt();
                    let f = if norm > tau && norm > 0.0 { tau / norm } else { 1.0 };
                    for &j in g {
                        out[j] = f * y[j];
                    }
                }
                out
            }
            Regularizer::ElasticNet { lambda, theta } => {
                let a = lambda * scale * (1.0 - theta);
                let b = lambda * scale * theta;
                Array1::from_iter(y.iter().map(|&v| {
                    let mag = v.abs().min((a + b * v.abs()) / (1.0 + b));
                    mag * v.signum()
                }))
            }
            Regularizer::SupportFunction { projector } => {
                if scale == 0.0 {
                    return Array1::zeros(y.len());
                }
                projector(&(y / scale)) * scale
            }
            Regularizer::TraceNorm { lambda, rows, cols } => {
                let tau = lambda * scale;
                let mat = Array2::from_shape_vec((*rows, *cols), y.to_vec()).unwrap();
                let (u, s, v) = linalg::svd(&mat);
                let mut out = Array2::<f64>::zeros((*rows, *cols));
                for j in 0..s.len() {
                    let sv = s[j].min(tau);
                    if sv > 0.0 {
                        for r in 0..*rows {
                            for c in 0..*cols {
                                out[[r, c]] += sv * u[[r, j]] * v[[c, j]];
                            }
                        }
                    }
                }
                Array1::from_iter(out.iter().copied())
            }
        }
    }
}

/// Maximum absolute deviation of the Moreau decomposition
/// `prox_{scale·φ}(y) + prox_{(scale·φ)*}(y) − y`, with the two proximal
/// maps computed through independent code paths.
///
/// # Panics
/// If `y` has the wrong length or `scale < 0`.
pub fn moreau_decomposition_check(reg: &Regularizer, y: &Array1<f64>, scale: f64) -> f64 {
    let (p, _) = reg.prox(y, scale);
    let d = reg.conj_prox(y, scale);
    let mut worst = 0.0f64;
    for i in 0..y.len() {
        worst = worst.max((p[i] + d[i] - y[i]).abs());
    }
    worst
}

/// Soft-thresholding over coordinates with per-coordinate thresholds;
/// shared by the ℓ1-type families. `jac_scale` is recorded in the
/// structure but NOT applied to the output (the elastic net divides
/// afterwards).
fn soft_threshold_coords<F: Fn(usize) -> f64>(
    y: &Array1<f64>,
    tau: F,
    jac_scale: f64,
) -> (Array1<f64>, ActiveStructure) {
    let mut out = Array1::<f64>::zeros(y.len());
    let mut indices = Vec::new();
    for j in 0..y.len() {
        let t = tau(j);
        let mag = y[j].abs() - t;
        if mag > 0.0 {
            out[j] = mag * y[j].signum();
            indices.push(j);
        }
    }
    (out, ActiveStructure::Coords { indices, jac_scale })
}
