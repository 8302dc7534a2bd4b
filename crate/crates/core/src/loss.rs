//! Smooth convex loss functions and their Fenchel conjugates.
//!
//! Each loss `f_ℓ : ℝᵐ → ℝ` acts on a prediction vector `z = A w` and is
//! separable across samples. The dual solver works with the conjugate
//! `f_ℓ*`, always evaluated at `−α`; all `conj_*` ops below take `α` and
//! internally handle the sign, so `conj_grad` returns `∇_α [f_ℓ*(−α)]`.
//!
//! Every loss has a gradient with Lipschitz constant `1/γ`; equivalently
//! its conjugate is `γ`-strongly convex, and `conj_hess_diag ≥ γ`
//! entrywise. This `γ` drives both the inner stopping rule of the dual
//! solver and valid step sizes for the first-order baselines.
//!
//! Conjugate conventions (each makes Fenchel–Young an exact equality, with
//! no additive fudge):
//! - squared: `f*(−α) = Σ ½σ_i²α_i² − α_i y_i`. This differs from the
//!   completed-square form `½Σσ_i²(α_i−y_i)²` by the constant `−½Σσ_i²y_i²`;
//!   in particular at `σ = 1, α = y` it evaluates to `−½‖y‖²`, not 0.
//! - logistic: `f*(−α) = Σ p log p + (1−p) log(1−p)`, `p = α_i y_i ∈ [0,1]`,
//!   with `0·log 0 = 0` at the boundary.
//! - sech-squared: `f(z) = Σ log(e^{y−z} + e^{z−y} + 2)` (the logistic-
//!   density likelihood; `f'' = ½sech²((z−y)/2) ≤ ½`, so `γ = 2` exactly),
//!   `f*(−α) = Σ (1−α)log(1−α) + (1+α)log(1+α) − α_i y_i − 2 log 2` on
//!   `α ∈ [−1, 1]`.

use crate::{Error, Result};
use ndarray::Array1;

/// `x·log(x)` with the closure convention `0·log 0 = 0`.
#[inline]
fn xlogx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// `log(1 + e^{-u})` without overflow for any `u`.
#[inline]
fn log1p_exp_neg(u: f64) -> f64 {
    if u >= 0.0 {
        (-u).exp().ln_1p()
    } else {
        -u + u.exp().ln_1p()
    }
}

/// Logistic sigmoid `1/(1+e^{u})` evaluated stably (note the sign: this is
/// `σ(−u)`).
#[inline]
fn sigmoid_neg(u: f64) -> f64 {
    if u >= 0.0 {
        let e = (-u).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + u.exp())
    }
}

/// A separable smooth convex loss on predictions.
#[derive(Debug, Clone)]
pub enum LossFunction {
    /// `f(z) = ½ Σ (y_i − z_i)²/σ_i²`.
    Squared { y: Array1<f64>, sigma: Array1<f64> },
    /// `f(z) = Σ log(1 + e^{−y_i z_i})`, labels `y_i ∈ {−1, +1}`.
    Logistic { y: Array1<f64> },
    /// `f(z) = Σ log(e^{y_i−z_i} + e^{z_i−y_i} + 2)`, real targets.
    SechSquared { y: Array1<f64> },
}

impl LossFunction {
    /// Squared loss with unit noise scales.
    ///
    /// # Panics
    /// If `y` is empty.
    pub fn squared(y: Array1<f64>) -> Self {
        let n = y.len();
        assert!(n > 0, "squared: empty target vector");
        LossFunction::Squared {
            y,
            sigma: Array1::ones(n),
        }
    }

    /// Squared loss with per-sample noise scales `σ_i > 0`.
    ///
    /// # Panics
    /// If `y` is empty, lengths differ, or any `σ_i ≤ 0`.
    pub fn squared_weighted(y: Array1<f64>, sigma: Array1<f64>) -> Self {
        assert!(!y.is_empty(), "squared: empty target vector");
        assert_eq!(y.len(), sigma.len(), "squared: sigma length mismatch");
        assert!(sigma.iter().all(|&s| s > 0.0), "squared: sigma must be positive");
        LossFunction::Squared { y, sigma }
    }

    /// Logistic loss.
    ///
    /// # Panics
    /// If `y` is empty or any label is not ±1.
    pub fn logistic(y: Array1<f64>) -> Self {
        assert!(!y.is_empty(), "logistic: empty label vector");
        assert!(
            y.iter().all(|&v| v == 1.0 || v == -1.0),
            "logistic: labels must be exactly +1 or -1"
        );
        LossFunction::Logistic { y }
    }

    /// Sech-squared (logistic-density) loss with real targets.
    ///
    /// # Panics
    /// If `y` is empty.
    pub fn sech_squared(y: Array1<f64>) -> Self {
        assert!(!y.is_empty(), "sech_squared: empty target vector");
        LossFunction::SechSquared { y }
    }

    /// Number of samples `m`.
    pub fn len(&self) -> usize {
        match self {
            LossFunction::Squared { y, .. } => y.len(),
            LossFunction::Logistic { y } => y.len(),
            LossFunction::SechSquared { y } => y.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Targets/labels.
    pub fn targets(&self) -> &Array1<f64> {
        match self {
            LossFunction::Squared { y, .. } => y,
            LossFunction::Logistic { y } => y,
            LossFunction::SechSquared { y } => y,
        }
    }

    /// Strong-convexity modulus `γ` of the conjugate (equivalently, the
    /// reciprocal of the gradient Lipschitz constant of the loss):
    /// `min σ_i²` / 4 / 2.
    pub fn gamma(&self) -> f64 {
        match self {
            LossFunction::Squared { sigma, .. } => {
                sigma.iter().fold(f64::INFINITY, |a, &s| a.min(s * s))
            }
            LossFunction::Logistic { .. } => 4.0,
            LossFunction::SechSquared { .. } => 2.0,
        }
    }

    /// `f_ℓ(z)`, finite for every finite `z`.
    ///
    /// # Panics
    /// If `z.len()` differs from the sample count.
    pub fn value(&self, z: &Array1<f64>) -> f64 {
        assert_eq!(z.len(), self.len(), "loss value: length mismatch");
        match self {
            LossFunction::Squared { y, sigma } => {
                let mut acc = 0.0;
                for i in 0..y.len() {
                    let r = (y[i] - z[i]) / sigma[i];
                    acc += 0.5 * r * r;
                }
                acc
            }
            LossFunction::Logistic { y } => {
                z.iter().zip(y).map(|(&zi, &yi)| log1p_exp_neg(yi * zi)).sum()
            }
            LossFunction::SechSquared { y } => z
                .iter()
                .zip(y)
                .map(|(&zi, &yi)| {
                    // log(e^{u} + e^{−u} + 2) = |u| + 2·log(1 + e^{−|u|})
                    let u = (zi - yi).abs();
                    u + 2.0 * log1p_exp_neg(u)
                })
                .sum(),
        }
    }

    /// `∇f_ℓ(z)`.
    ///
    /// # Panics
    /// If `z.len()` differs from the sample count.
    pub fn grad(&self, z: &Array1<f64>) -> Array1<f64> {
        assert_eq!(z.len(), self.len(), "loss grad: length mismatch");
        match self {
            LossFunction::Squared { y, sigma } => {
                Array1::from_iter((0..y.len()).map(|i| (z[i] - y[i]) / (sigma[i] * sigma[i])))
            }
            LossFunction::Logistic { y } => Array1::from_iter(
                z.iter()
                    .zip(y)
                    .map(|(&zi, &yi)| -yi * sigmoid_neg(yi * zi)),
            ),
            LossFunction::SechSquared { y } => Array1::from_iter(
                z.iter().zip(y).map(|(&zi, &yi)| (0.5 * (zi - yi)).tanh()),
            ),
        }
    }

    /// Diagonal of `∇²f_ℓ(z)` (all losses here are separable, so the
    /// primal Hessian is diagonal).
    ///
    /// # Panics
    /// If `z.len()` differs from the sample count.
    pub fn hess_diag(&self, z: &Array1<f64>) -> Array1<f64> {
        assert_eq!(z.len(), self.len(), "loss hess: length mismatch");
        match self {
            LossFunction::Squared { sigma, .. } => {
                Array1::from_iter(sigma.iter().map(|&s| 1.0 / (s * s)))
            }
            LossFunction::Logistic { y } => Array1::from_iter(z.iter().zip(y).map(|(&zi, &yi)| {
                let p = sigmoid_neg(yi * zi);
                p * (1.0 - p)
            })),
            LossFunction::SechSquared { y } => {
                Array1::from_iter(z.iter().zip(y).map(|(&zi, &yi)| {
                    let c = (0.5 * (zi - yi)).cosh();
                    0.5 / (c * c)
                }))
            }
        }
    }

    /// `f_ℓ*(−α)`: the conjugate evaluated at `−α`. Returns `+∞` when `α`
    /// is outside the (closed) conjugate domain; boundary points use the
    /// `0·log 0 = 0` convention and are finite.
    ///
    /// # Panics
    /// If `alpha.len()` differs from the sample count.
    pub fn conj_value(&self, alpha: &Array1<f64>) -> f64 {
        assert_eq!(alpha.len(), self.len(), "conj value: length mismatch");
        match self {
            LossFunction::Squared { y, sigma } => {
                let mut acc = 0.0;
                for i in 0..y.len() {
                    let s2 = sigma[i] * sigma[i];
                    acc += 0.5 * s2 * alpha[i] * alpha[i] - alpha[i] * y[i];
                }
                acc
            }
            LossFunction::Logistic { y } => {
                let mut acc = 0.0;
                for i in 0..y.len() {
                    let p = alpha[i] * y[i];
                    if !(0.0..=1.0).contains(&p) {
                        return f64::INFINITY;
                    }
                    acc += xlogx(p) + xlogx(1.0 - p);
                }
                acc
            }
            LossFunction::SechSquared { y } => {
                let mut acc = 0.0;
                for i in 0..y.len() {
                    let a = alpha[i];
                    if !(-1.0..=1.0).contains(&a) {
                        return f64::INFINITY;
                    }
                    acc += xlogx(1.0 - a) + xlogx(1.0 + a)
                        - a * y[i]
                        - 2.0 * std::f64::consts::LN_2;
                }
                acc
            }
        }
    }

    /// `∇_α [f_ℓ*(−α)]`. Errors if `α` is not strictly inside the conjugate
    /// domain (the gradient blows up on the boundary).
    ///
    /// # Panics
    /// If `alpha.len()` differs from the sample count.
    pub fn conj_grad(&self, alpha: &Array1<f64>) -> Result<Array1<f64>> {
        assert_eq!(alpha.len(), self.len(), "conj grad: length mismatch");
        match self {
            LossFunction::Squared { y, sigma } => Ok(Array1::from_iter(
                (0..y.len()).map(|i| sigma[i] * sigma[i] * alpha[i] - y[i]),
            )),
            LossFunction::Logistic { y } => {
                let mut g = Array1::zeros(y.len());
                for i in 0..y.len() {
                    let p = alpha[i] * y[i];
                    if p <= 0.0 || p >= 1.0 {
                        return Err(Error::DomainViolation(format!(
                            "logistic conjugate gradient needs 0 < α_i·y_i < 1, got {p} at {i}"
                        )));
                    }
                    g[i] = y[i] * (p.ln() - (1.0 - p).ln());
                }
                Ok(g)
            }
            LossFunction::SechSquared { y } => {
                let mut g = Array1::zeros(y.len());
                for i in 0..y.len() {
                    let a = alpha[i];
                    if a <= -1.0 || a >= 1.0 {
                        return Err(Error::DomainViolation(format!(
                            "sech-squared conjugate gradient needs −1 < α_i < 1, got {a} at {i}"
                        )));
                    }
                    g[i] = (1.0 + a).ln() - (1.0 - a).ln() - y[i];
                }
                Ok(g)
            }
        }
    }

    /// Diagonal of `∇²_α [f_ℓ*(−α)]` (the conjugate Hessian is diagonal for
    /// all separable losses here). Entries are `≥ γ`. Errors off the open
    /// domain, like [`Self::conj_grad`].
    ///
    /// # Panics
    /// If `alpha.len()` differs from the sample count.
    pub fn conj_hess_diag(&self, alpha: &Array1<f64>) -> Result<Array1<f64>> {
        assert_eq!(alpha.len(), self.len(), "conj hess: length mismatch");
        match self {
            LossFunction::Squared { sigma, .. } => {
                Ok(Array1::from_iter(sigma.iter().map(|&s| s * s)))
            }
            LossFunction::Logistic { y } => {
                let mut h = Array1::zeros(y.len());
                for i in 0..y.len() {
                    let p = alpha[i] * y[i];
                    if p <= 0.0 || p >= 1.0 {
                        return Err(Error::DomainViolation(format!(
                            "logistic conjugate Hessian needs 0 < α_i·y_i < 1, got {p} at {i}"
                        )));
                    }
                    h[i] = 1.0 / (p * (1.0 - p));
                }
                Ok(h)
            }
            LossFunction::SechSquared { y } => {
                let mut h = Array1::zeros(y.len());
                for i in 0..y.len() {
                    let a = alpha[i];
                    if a <= -1.0 || a >= 1.0 {
                        return Err(Error::DomainViolation(format!(
                            "sech-squared conjugate Hessian needs −1 < α_i < 1, got {a} at {i}"
                        )));
                    }
                    h[i] = 2.0 / ((1.0 - a) * (1.0 + a));
                }
                Ok(h)
            }
        }
    }

    /// Projects `α` into the interior of the conjugate domain, keeping a
    /// relative `margin` from the boundary. A no-op for the squared loss.
    pub fn clamp_to_domain(&self, alpha: &Array1<f64>, margin: f64) -> Array1<f64> {
        match self {
            LossFunction::Squared { .. } => alpha.clone(),
            LossFunction::Logistic { y } => Array1::from_iter((0..y.len()).map(|i| {
                let p = (alpha[i] * y[i]).clamp(margin, 1.0 - margin);
                p * y[i]
            })),
            LossFunction::SechSquared { y } => Array1::from_iter(
                (0..y.len()).map(|i| alpha[i].clamp(-1.0 + margin, 1.0 - margin)),
            ),
        }
    }

    /// Largest `t ≥ 0` such that `α + s·d` stays in the closed conjugate
    /// domain for all `s ∈ [0, t]` (`+∞` for the squared loss). Callers
    /// take a fraction of this to stay strictly interior.
    ///
    /// # Panics
    /// If lengths differ.
    pub fn max_feasible_step(&self, alpha: &Array1<f64>, dir: &Array1<f64>) -> f64 {
        assert_eq!(alpha.len(), self.len(), "max_feasible_step: length mismatch");
        assert_eq!(dir.len(), self.len(), "max_feasible_step: length mismatch");
        match self {
            LossFunction::Squared { .. } => f64::INFINITY,
            LossFunction::Logistic { y } => {
                let mut t = f64::INFINITY;
                for i in 0..y.len() {
                    let p = alpha[i] * y[i];
                    let dp = dir[i] * y[i];
                    if dp > 0.0 {
                        t = t.min((1.0 - p) / dp);
                    } else if dp < 0.0 {
                        t = t.min(p / -dp);
                    }
                }
                t.max(0.0)
            }
            LossFunction::SechSquared { y } => {
                let mut t = f64::INFINITY;
                for i in 0..y.len() {
                    let d = dir[i];
                    if d > 0.0 {
                        t = t.min((1.0 - alpha[i]) / d);
                    } else if d < 0.0 {
                        t = t.min((alpha[i] + 1.0) / -d);
                    }
                }
                t.max(0.0)
            }
        }
    }
}
