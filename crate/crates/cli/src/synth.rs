//! Synthetic classification problems: Gaussian design, sparse Gaussian
//! ground truth, labels from the sign of noisy predictions.

use crate::dataset::Dataset;
use dal_core::design::DesignOperator;
use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub m: usize,
    pub n: usize,
    /// Probability that a coefficient belongs to the true support.
    pub support_frac: f64,
    /// Scale of the Gaussian noise added to predictions before the sign.
    pub noise: f64,
    pub seed: u64,
}

impl SynthConfig {
    /// # Panics
    /// If `m` or `n` is zero, or `support_frac ∉ [0,1]`, or `noise < 0`.
    pub fn new(m: usize, n: usize, seed: u64) -> Self {
        assert!(m >= 1 && n >= 1, "synth needs at least one sample and feature");
        SynthConfig { m, n, support_frac: 0.04, noise: 0.01, seed }
    }

    pub fn with_support_frac(mut self, f: f64) -> Self {
        assert!((0.0..=1.0).contains(&f), "support fraction must lie in [0,1]");
        self.support_frac = f;
        self
    }

    pub fn with_noise(mut self, s: f64) -> Self {
        assert!(s >= 0.0, "noise scale must be nonnegative");
        self.noise = s;
        self
    }
}

/// Draws `(dataset, true_beta)`: standard-Gaussian dense design `A`,
/// Gaussian `β` on a Bernoulli(`support_frac`) support, labels
/// `y = sign(Aβ + noise·ξ)` with `sign(0) = +1`. Bit-identical for a fixed
/// config.
pub fn synth(cfg: &SynthConfig) -> (Dataset, Array1<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut a = Array2::<f64>::zeros((cfg.m, cfg.n));
    for i in 0..cfg.m {
        for j in 0..cfg.n {
            a[[i, j]] = rng.sample(StandardNormal);
        }
    }
    let mut beta = Array1::<f64>::zeros(cfg.n);
    for j in 0..cfg.n {
        if rng.random::<f64>() < cfg.support_frac {
            beta[j] = rng.sample(StandardNormal);
        }
    }
    let mut z = a.dot(&beta);
    for zi in z.iter_mut() {
        let xi: f64 = rng.sample(StandardNormal);
        *zi += cfg.noise * xi;
    }
    let labels = z.mapv(|v| if v >= 0.0 { 1.0 } else { -1.0 });
    let dataset = Dataset {
        design: DesignOperator::dense(a),
        labels,
        provenance: format!(
            "synth(m={}, n={}, support_frac={}, noise={}, seed={})",
            cfg.m, cfg.n, cfg.support_frac, cfg.noise, cfg.seed
        ),
        warnings: Vec::new(),
    };
    (dataset, beta)
}
