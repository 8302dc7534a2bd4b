//! Oracle checks for the dual augmented Lagrangian: value/gradient/Hessian
//! consistency by finite differences across every loss–regularizer pair,
//! the stationarity identities of an (almost) exact inner solve, and
//! solver-level descent and convergence-bound properties.

use dal_core::dal::{
    al_grad, al_hessian, al_value, bias_escalates, inner_solve, objective, solve, DalOptions,
    DalState, InnerOptions, Problem,
};
use dal_core::design::DesignOperator;
use dal_core::diagnostics::{attach_reference, check_bounds, compute_reference, estimate_sigma};
use dal_core::loss::LossFunction;
use dal_core::prox::Regularizer;
use dal_testkit::{central_diff_grad, minimize_convex, normal_array1, normal_array2, seeded_rng};
use ndarray::Array1;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const M: usize = 5;
const N: usize = 6;

fn losses(rng: &mut ChaCha8Rng) -> Vec<(&'static str, LossFunction)> {
    let y1 = normal_array1(rng, M);
    let y2 = normal_array1(rng, M);
    let sig = Array1::from_iter((0..M).map(|_| rng.random_range(0.6..1.4)));
    let labels = Array1::from_iter((0..M).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }));
    let y3 = normal_array1(rng, M);
    vec![
        ("squared", LossFunction::squared(y1)),
        ("squared_weighted", LossFunction::squared_weighted(y2, sig)),
        ("logistic", LossFunction::logistic(labels)),
        ("sech_squared", LossFunction::sech_squared(y3)),
    ]
}

fn regularizers() -> Vec<(&'static str, Regularizer)> {
    vec![
        ("l1", Regularizer::l1(0.3)),
        (
            "weighted_l1",
            Regularizer::weighted_l1(Array1::from(vec![0.0, 0.2, 0.35, 0.5, 0.15, 0.4])),
        ),
        (
            "group",
            Regularizer::group_lasso(0.35, vec![vec![0, 1, 2], vec![3, 4], vec![5]], N),
        ),
        ("elastic_net", Regularizer::elastic_net(0.4, 0.3)),
    ]
}

/// Strictly feasible dual point for the loss's conjugate domain.
fn feasible_alpha(loss: &LossFunction, rng: &mut ChaCha8Rng) -> Array1<f64> {
    match loss {
        LossFunction::Logistic { y } => {
            Array1::from_iter(y.iter().map(|&yi| yi * rng.random_range(0.15..0.85)))
        }
        LossFunction::SechSquared { .. } => {
            Array1::from_iter((0..M).map(|_| rng.random_range(-0.8..0.8)))
        }
        _ => normal_array1(rng, M),
    }
}

/// Distance from the prox input to the nearest thresholding kink; finite
/// differences are only trustworthy away from them.
fn kink_margin(reg: &Regularizer, q: &Array1<f64>, scale: f64) -> f64 {
    match reg {
        Regularizer::L1 { lambda } => q
            .iter()
            .map(|v| (v.abs() - lambda * scale).abs())
            .fold(f64::INFINITY, f64::min),
        Regularizer::WeightedL1 { weights } => q
            .iter()
            .zip(weights)
            .filter(|(_, &l)| l > 0.0)
            .map(|(v, &l)| (v.abs() - l * scale).abs())
            .fold(f64::INFINITY, f64::min),
        Regularizer::GroupLasso { lambda, groups, .. } => groups
            .iter()
            .map(|g| {
                let n = g.iter().map(|&j| q[j] * q[j]).sum::<f64>().sqrt();
                (n - lambda * scale).abs()
            })
            .fold(f64::INFINITY, f64::min),
        Regularizer::ElasticNet { lambda, theta } => {
            let a = lambda * scale * (1.0 - theta);
            q.iter().map(|v| (v.abs() - a).abs()).fold(f64::INFINITY, f64::min)
        }
        _ => f64::INFINITY,
    }
}

/// Samples (state, alpha) with the prox input clear of kinks.
fn sample_point(
    problem: &Problem,
    eta1: f64,
    eta2: Option<f64>,
    rng: &mut ChaCha8Rng,
) -> (DalState, Array1<f64>) {
    for _ in 0..200 {
        let w = normal_array1(rng, N);
        let alpha = feasible_alpha(&problem.loss, rng);
        let q = &w + &(problem.design.apply_adjoint(&alpha).mapv(|v| v * eta1));
        if kink_margin(&problem.reg, &q, eta1) > 5e-4 {
            let state = match eta2 {
                None => DalState::anchored(w, alpha.clone(), eta1),
                Some(e2) => DalState::anchored_with_bias(w, 0.3, alpha.clone(), eta1, e2),
            };
            return (state, alpha);
        }
    }
    panic!("could not sample a kink-free evaluation point");
}

#[test]
fn al_gradient_matches_finite_differences_for_all_pairs() {
    let mut rng = seeded_rng(101);
    let a = normal_array2(&mut rng, M, N);
    for (lname, loss) in losses(&mut rng) {
        for (rname, reg) in regularizers() {
            let problem = Problem::new(DesignOperator::dense(a.clone()), loss.clone(), reg);
            for &eta2 in &[None, Some(0.6)] {
                let (state, alpha) = sample_point(&problem, 0.8, eta2, &mut rng);
                let ag = al_grad(&problem, &state, &alpha).unwrap();
                let f = |x: &[f64]| al_value(&problem, &state, &Array1::from(x.to_vec()));
                let fd = central_diff_grad(f, alpha.as_slice().unwrap(), 1e-6);
                for (i, (&g, &d)) in ag.grad.iter().zip(&fd).enumerate() {
                    assert!(
                        (g - d).abs() <= 1e-6 * (1.0 + d.abs()),
                        "{lname}+{rname} bias={} coord {i}: {g} vs {d}",
                        eta2.is_some(),
                    );
                }
            }
        }
    }
}

#[test]
fn al_hessian_matches_gradient_differences_for_all_pairs() {
    let mut rng = seeded_rng(202);
    let a = normal_array2(&mut rng, M, N);
    for (lname, loss) in losses(&mut rng) {
        for (rname, reg) in regularizers() {
            let problem = Problem::new(DesignOperator::dense(a.clone()), loss.clone(), reg);
            for &eta2 in &[None, Some(0.7)] {
                let (state, alpha) = sample_point(&problem, 0.9, eta2, &mut rng);
                let ag = al_grad(&problem, &state, &alpha).unwrap();
                let h = al_hessian(&problem, &state, &alpha, &ag.active).unwrap();
                let step = 1e-6;
                for col in 0..M {
                    let mut e = Array1::zeros(M);
                    e[col] = 1.0;
                    let he = h.apply(&e);
                    let gp = al_grad(&problem, &state, &(&alpha + &(e.mapv(|x| x * step))))
                        .unwrap()
                        .grad;
                    let gm = al_grad(&problem, &state, &(&alpha - &(e.mapv(|x| x * step))))
                        .unwrap()
                        .grad;
                    for i in 0..M {
                        let fd = (gp[i] - gm[i]) / (2.0 * step);
                        assert!(
                            (he[i] - fd).abs() <= 1e-5 * (1.0 + fd.abs()),
                            "{lname}+{rname} bias={} H[{i},{col}]: {} vs {}",
                            eta2.is_some(),
                            he[i],
                            fd
                        );
                    }
                }
            }
        }
    }
}

#[test]
fn exact_inner_solve_satisfies_the_stationarity_identities() {
    // At a stationary dual point: α = −∇f_ℓ(A w⁺) and w⁺ is the prox of
    // the dual-shifted anchor — the pair certifies itself.
    let mut rng = seeded_rng(303);
    let a = normal_array2(&mut rng, M, N);
    for (lname, loss) in losses(&mut rng) {
        for (rname, reg) in [regularizers().remove(0), regularizers().remove(2)] {
            let problem = Problem::new(DesignOperator::dense(a.clone()), loss.clone(), reg);
            let w0 = normal_array1(&mut rng, N).mapv(|v| 0.3 * v);
            let alpha0 = problem
                .loss
                .clamp_to_domain(&problem.loss.grad(&problem.design.apply(&w0)).mapv(|v| -v), 1e-6);
            let state = DalState::anchored(w0, alpha0, 1.2);
            let opts = InnerOptions { force_tol: Some(1e-11), ..InnerOptions::default() };
            let out = inner_solve(&problem, &state, &opts)
                .unwrap_or_else(|e| panic!("{lname}+{rname}: {e}"));
            let z = problem.design.apply(&out.w_plus);
            let neg_grad = problem.loss.grad(&z).mapv(|v| -v);
            for i in 0..M {
                assert!(
                    (neg_grad[i] - out.alpha[i]).abs() < 1e-7,
                    "{lname}+{rname} sample {i}: {} vs {}",
                    neg_grad[i],
                    out.alpha[i]
                );
            }
            let q = &state.w
                + &(problem.design.apply_adjoint(&out.alpha).mapv(|v| v * state.eta1));
            let (w_check, _) = problem.reg.prox(&q, state.eta1);
            for j in 0..N {
                assert!((w_check[j] - out.w_plus[j]).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn overwhelming_regularization_reduces_gradient_to_conjugate_part() {
    // With λ large enough the prox candidate is identically zero, so the
    // dual gradient equals the conjugate gradient alone.
    let mut rng = seeded_rng(404);
    let a = normal_array2(&mut rng, M, N);
    let y = normal_array1(&mut rng, M);
    let problem = Problem::new(
        DesignOperator::dense(a),
        LossFunction::squared(y),
        Regularizer::l1(1e6),
    );
    let w = normal_array1(&mut rng, N);
    let alpha = normal_array1(&mut rng, M);
    let state = DalState::anchored(w, alpha.clone(), 1.0);
    let ag = al_grad(&problem, &state, &alpha).unwrap();
    let cg = problem.loss.conj_grad(&alpha).unwrap();
    assert_eq!(ag.w_plus.iter().filter(|v| **v != 0.0).count(), 0);
    for i in 0..M {
        assert!((ag.grad[i] - cg[i]).abs() < 1e-12);
    }
}

#[test]
fn solver_matches_derivative_free_minimizer() {
    let mut rng = seeded_rng(505);
    let a = normal_array2(&mut rng, 4, N);
    let y = normal_array1(&mut rng, 4);
    for (loss, reg) in [
        (LossFunction::squared(y.clone()), Regularizer::l1(0.3)),
        (
            LossFunction::sech_squared(y.clone()),
            Regularizer::elastic_net(0.25, 0.4),
        ),
    ] {
        let problem = Problem::new(DesignOperator::dense(a.clone()), loss, reg);
        let mut opts = DalOptions::new(1.0);
        opts.rdg_tol = 1e-10;
        let sol = solve(&problem, &opts).unwrap();

        let obj = |x: &[f64]| objective(&problem, &Array1::from(x.to_vec()), None);
        let x = minimize_convex(obj, &[0.0; N], 1.0);
        let f_nm = obj(&x);
        assert!(
            sol.f <= f_nm + 1e-6 * (1.0 + f_nm.abs()),
            "solver {} worse than derivative-free {}",
            sol.f,
            f_nm
        );
    }
}

#[test]
fn outer_steps_satisfy_proximal_descent() {
    // Each outer step is an inexact proximal-point step, so
    // f(w⁺) + ‖w⁺ − w‖²/(2η) ≤ f(w) up to the inner tolerance.
    let mut rng = seeded_rng(606);
    for trial in 0..12 {
        let m = 6 + (trial % 3) * 2;
        let a = normal_array2(&mut rng, m, 9);
        let loss = match trial % 3 {
            0 => LossFunction::squared(normal_array1(&mut rng, m)),
            1 => LossFunction::logistic(Array1::from_iter(
                (0..m).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }),
            )),
            _ => LossFunction::sech_squared(normal_array1(&mut rng, m)),
        };
        let reg = match trial % 4 {
            0 => Regularizer::l1(0.25),
            1 => Regularizer::weighted_l1(Array1::from_iter(
                (0..9).map(|_| rng.random_range(0.05..0.5)),
            )),
            2 => Regularizer::group_lasso(0.3, vec![vec![0, 1, 2], vec![3, 4, 5], vec![6, 7, 8]], 9),
            _ => Regularizer::elastic_net(0.3, 0.5),
        };
        let problem = Problem::new(DesignOperator::dense(a), loss, reg);
        let mut opts = DalOptions::new(0.5 + 0.5 * (trial % 2) as f64);
        opts.rdg_tol = 1e-7;
        opts.keep_iterates = true;
        let sol = solve(&problem, &opts).unwrap();
        let ws = sol.iterates.as_ref().unwrap();
        for k in 1..sol.trace.len() {
            let f_prev = sol.trace.records[k - 1].f;
            let f_k = sol.trace.records[k].f;
            let eta = sol.trace.records[k].eta1;
            let d = &ws[k] - &ws[k - 1];
            let lhs = f_k + d.dot(&d) / (2.0 * eta);
            assert!(
                lhs <= f_prev + 1e-9 * (1.0 + f_prev.abs()),
                "trial {trial} row {k}: {lhs} vs {f_prev}"
            );
        }
    }
}

#[test]
fn bound_diagnostics_pass_on_a_real_run() {
    let mut rng = seeded_rng(707);
    let a = normal_array2(&mut rng, 12, 20);
    let y = normal_array1(&mut rng, 12);
    let design = DesignOperator::dense(a);
    let lam = 0.15 * design.apply_adjoint(&y).iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let loss = LossFunction::squared(y);
    let reg = Regularizer::l1(lam);
    let reference = compute_reference(&design, &loss, &reg, 1.0 / lam).unwrap();
    assert!(reference.subgrad_norm <= 1e-10);

    let problem = Problem::new(design, loss, reg);
    let mut opts = DalOptions::new(0.1 / lam);
    opts.rdg_tol = 1e-9;
    opts.keep_iterates = true;
    let sol = solve(&problem, &opts).unwrap();
    assert!((sol.f - reference.f_star).abs() <= 1e-7 * (1.0 + reference.f_star.abs()));

    let mut trace = sol.trace.clone();
    attach_reference(&mut trace, sol.iterates.as_ref().unwrap(), &reference);
    let sigma = estimate_sigma(&trace, reference.f_star).unwrap();
    assert!(sigma > 0.0);
    let report = check_bounds(&trace, &reference.with_sigma(sigma)).unwrap();
    assert!(
        report.pass,
        "objective_gap: {:?}\ndistance: {:?}",
        report.objective_gap, report.distance_contraction
    );
    // The informational bounds are reported for every step.
    assert_eq!(report.exact_contraction.len(), trace.len() - 1);
    assert_eq!(report.scheduled_contraction.len(), trace.len() - 1);
}

#[test]
fn mirrored_data_pins_the_intercept_at_zero() {
    // Duplicating (A, y) as (A; −A), (y; −y) makes the objective symmetric
    // in the intercept, so the fitted intercept must vanish.
    let mut rng = seeded_rng(808);
    let half = normal_array2(&mut rng, 10, 8);
    let yhalf = Array1::from_iter((0..10).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }));
    let mut a = ndarray::Array2::<f64>::zeros((20, 8));
    let mut y = Array1::<f64>::zeros(20);
    for i in 0..10 {
        for j in 0..8 {
            a[[i, j]] = half[[i, j]];
            a[[10 + i, j]] = -half[[i, j]];
        }
        y[i] = yhalf[i];
        y[10 + i] = -yhalf[i];
    }
    let design = DesignOperator::dense(a);
    let lam = 0.05 * design.apply_adjoint(&y).iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let problem = Problem::new(design, LossFunction::logistic(y), Regularizer::l1(lam));
    let mut opts = DalOptions::new(1.0 / lam).with_bias();
    opts.rdg_tol = 1e-6;
    let sol = solve(&problem, &opts).unwrap();
    assert!(sol.b.unwrap().abs() <= 1e-3, "intercept {}", sol.b.unwrap());
}

#[test]
fn escalation_rule_only_fires_on_stalled_meaningful_violations() {
    for t in 0..2 {
        assert!(!bias_escalates(t, 1.0, Some(1.0), 1e-3));
    }
    assert!(bias_escalates(2, 1.0, Some(1.5), 1e-3));
    assert!(!bias_escalates(2, 0.7, Some(1.5), 1e-3));
    assert!(!bias_escalates(5, 9e-4, Some(1e-3), 1e-3));
}
