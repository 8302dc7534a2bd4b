//! Warm-started regularization paths: a grid of relative regularization
//! levels solved in decreasing order, each solve seeded with the previous
//! solution.

use std::time::Instant;

use dal_core::dal::Problem;
use dal_core::loss::LossFunction;
use dal_core::prox::Regularizer;
use ndarray::Array1;

use crate::dataset::{lambda_from_bar, Dataset};
use crate::runner::{run_from, RunRequest};
use dal_core::diagnostics::Trace;

#[derive(Debug, Clone)]
pub struct PathConfig {
    pub lambda_bar_max: f64,
    pub lambda_bar_min: f64,
    pub num_points: usize,
    pub warm_start: bool,
}

impl Default for PathConfig {
    fn default() -> Self {
        PathConfig {
            lambda_bar_max: 0.5,
            lambda_bar_min: 0.001,
            num_points: 20,
            warm_start: true,
        }
    }
}

impl PathConfig {
    /// # Panics
    /// If the grid is empty or the endpoints are not `0 < min ≤ max`.
    pub fn validate(&self) {
        assert!(self.num_points >= 1, "path needs at least one point");
        assert!(
            self.lambda_bar_min > 0.0 && self.lambda_bar_min <= self.lambda_bar_max,
            "path endpoints must satisfy 0 < min <= max"
        );
    }

    /// Log-linearly spaced levels in decreasing order, `max` first. A
    /// single point reduces to `[max]`.
    pub fn lambda_bars(&self) -> Vec<f64> {
        self.validate();
        if self.num_points == 1 {
            return vec![self.lambda_bar_max];
        }
        let (lo, hi) = (self.lambda_bar_min.ln(), self.lambda_bar_max.ln());
        (0..self.num_points)
            .map(|i| {
                let t = i as f64 / (self.num_points - 1) as f64;
                (hi + t * (lo - hi)).exp()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PointStatus {
    Converged,
    /// Budget ran out; the recorded metrics describe the best iterate.
    BudgetExhausted,
    /// Hard solver error; metrics are absent.
    Failed(String),
}

impl PointStatus {
    pub fn label(&self) -> &str {
        match self {
            PointStatus::Converged => "ok",
            PointStatus::BudgetExhausted => "budget",
            PointStatus::Failed(_) => "failed",
        }
    }
}

#[derive(Debug)]
pub struct PathPoint {
    pub lambda_bar: f64,
    pub lambda: f64,
    pub status: PointStatus,
    pub f: f64,
    pub rdg: f64,
    pub nnz: usize,
    pub iters: usize,
    pub seconds: f64,
    pub trace: Trace,
    pub w: Option<Array1<f64>>,
}

#[derive(Debug)]
pub struct PathReport {
    pub points: Vec<PathPoint>,
    /// Typical-case observation on sparsity along the path; recorded for
    /// the report, never asserted.
    pub nnz_non_decreasing: bool,
    pub total_iters: usize,
}

impl PathReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str("lambda_bar,lambda,status,f,rdg,nnz,iters,seconds\n");
        for p in &self.points {
            out.push_str(&format!(
                "{:.6e},{:.6e},{},{:.12e},{:.6e},{},{},{:.4}\n",
                p.lambda_bar, p.lambda, p.status.label(), p.f, p.rdg, p.nnz, p.iters, p.seconds
            ));
        }
        out.push_str(&format!(
            "# nnz_non_decreasing={} total_iters={}\n",
            self.nnz_non_decreasing, self.total_iters
        ));
        out
    }
}

/// Solves the dataset at each grid level in decreasing order of `λ̄`. A
/// failed point is marked and skipped; the path continues from the last
/// usable iterate.
pub fn run_path(
    dataset: &Dataset,
    loss: &LossFunction,
    template: &RunRequest,
    cfg: &PathConfig,
) -> PathReport {
    let bars = cfg.lambda_bars();
    let mut points = Vec::with_capacity(bars.len());
    let mut warm: Option<(Array1<f64>, Option<f64>)> = None;
    for bar in bars {
        let lambda = lambda_from_bar(dataset, bar);
        let mut req = template.clone();
        req.lambda = lambda;
        let problem = Problem::new(
            dataset.design.clone(),
            loss.clone(),
            Regularizer::l1(lambda),
        );
        let start = Instant::now();
        let result = run_from(&problem, &req, warm.clone());
        let seconds = start.elapsed().as_secs_f64();
        match result {
            Ok(out) => {
                if cfg.warm_start {
                    warm = Some((out.w.clone(), out.b));
                }
                points.push(PathPoint {
                    lambda_bar: bar,
                    lambda,
                    status: if out.converged {
                        PointStatus::Converged
                    } else {
                        PointStatus::BudgetExhausted
                    },
                    f: out.f,
                    rdg: out.rdg,
                    nnz: out.w.iter().filter(|v| **v != 0.0).count(),
                    iters: out.iters,
                    seconds,
                    trace: out.trace,
                    w: Some(out.w),
                });
            }
            Err(e) => points.push(PathPoint {
                lambda_bar: bar,
                lambda,
                status: PointStatus::Failed(format!("{e:#}")),
                f: f64::NAN,
                rdg: f64::NAN,
                nnz: 0,
                iters: 0,
                seconds,
                trace: Trace::default(),
                w: None,
            }),
        }
    }
    let usable: Vec<usize> = points
        .iter()
        .filter(|p| !matches!(p.status, PointStatus::Failed(_)))
        .map(|p| p.nnz)
        .collect();
    PathReport {
        nnz_non_decreasing: usable.windows(2).all(|w| w[0] <= w[1]),
        total_iters: points.iter().map(|p| p.iters).sum(),
        points,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runner::{EtaChoice, RunRequest, SolverKind};
    use crate::synth::{synth, SynthConfig};

    #[test]
    fn grid_is_log_linear_and_decreasing() {
        let cfg = PathConfig::default();
        let bars = cfg.lambda_bars();
        assert_eq!(bars.len(), 20);
        assert!((bars[0] - 0.5).abs() < 1e-15);
        assert!((bars[19] - 0.001).abs() < 1e-12);
        let ratios: Vec<f64> = bars.windows(2).map(|w| w[1] / w[0]).collect();
        for r in &ratios {
            assert!((r - ratios[0]).abs() < 1e-12, "spacing must be log-linear");
            assert!(*r < 1.0, "levels must decrease");
        }
    }

    #[test]
    fn single_point_grid_is_the_max_level() {
        let cfg = PathConfig { num_points: 1, ..PathConfig::default() };
        assert_eq!(cfg.lambda_bars(), vec![0.5]);
    }

    #[test]
    #[should_panic(expected = "endpoints")]
    fn inverted_endpoints_are_rejected() {
        PathConfig { lambda_bar_min: 0.9, ..PathConfig::default() }.lambda_bars();
    }

    #[test]
    fn path_on_synthetic_data_converges_at_every_point() {
        let (dataset, _) = synth(&SynthConfig::new(30, 40, 5));
        let loss = LossFunction::logistic(dataset.labels.clone());
        let mut req = RunRequest::new(SolverKind::Dal, f64::NAN);
        req.rdg_tol = 1e-6;
        req.max_iters = 60;
        req.eta0 = EtaChoice::Aggressive;
        let cfg = PathConfig {
            lambda_bar_max: 0.4,
            lambda_bar_min: 0.05,
            num_points: 5,
            warm_start: true,
        };
        let report = run_path(&dataset, &loss, &req, &cfg);
        assert_eq!(report.points.len(), 5);
        for p in &report.points {
            assert_eq!(p.status, PointStatus::Converged, "λ̄={}", p.lambda_bar);
            assert!(p.rdg <= 1e-6);
            assert!(p.w.is_some());
        }
        let rendered = report.render();
        assert!(rendered.contains("nnz_non_decreasing="));
        assert_eq!(rendered.lines().count(), 7);
    }

    #[test]
    fn budget_exhaustion_marks_points_but_path_continues() {
        let (dataset, _) = synth(&SynthConfig::new(25, 30, 9));
        let loss = LossFunction::logistic(dataset.labels.clone());
        let mut req = RunRequest::new(SolverKind::Ist, f64::NAN);
        req.rdg_tol = 1e-12;
        req.max_iters = 2;
        let cfg = PathConfig {
            lambda_bar_max: 0.3,
            lambda_bar_min: 0.1,
            num_points: 3,
            warm_start: true,
        };
        let report = run_path(&dataset, &loss, &req, &cfg);
        assert_eq!(report.points.len(), 3);
        for p in &report.points {
            assert_eq!(p.status, PointStatus::BudgetExhausted);
            assert_eq!(p.iters, 2);
        }
    }
}
