//! Operator contract checks across every storage kind: adjoint consistency
//! on many random probes, and subset/standardization composition.

use dal_core::design::DesignOperator;
use ndarray::Array1;

/// All storage kinds built over the same random data, including subsets
/// and standardized wrappers (and a standardized subset).
fn operator_zoo(seed: u64, m: usize, n: usize) -> Vec<(String, DesignOperator)> {
    let mut rng = dal_testkit::seeded_rng(seed);
    let dense_data = dal_testkit::normal_array2(&mut rng, m, n);

    // Sparse data: ~30% fill from triplets.
    let mut triplets = Vec::new();
    for i in 0..m {
        for j in 0..n {
            let u: f64 = dal_testkit::normal_vec(&mut rng, 1)[0];
            if u > 0.5 {
                triplets.push((i, j, u));
            }
        }
    }

    let dense = DesignOperator::dense(dense_data);
    let csc = DesignOperator::from_triplets(m, n, &triplets);
    let subset: Vec<usize> = (0..n).step_by(2).collect();

    vec![
        ("dense".into(), dense.clone()),
        ("csc".into(), csc.clone()),
        ("dense_standardized".into(), dense.standardized()),
        ("csc_standardized".into(), csc.standardized()),
        ("dense_subset".into(), dense.column_subset(&subset)),
        (
            "csc_standardized_subset".into(),
            csc.standardized().column_subset(&subset),
        ),
    ]
}

#[test]
fn adjoint_consistency_on_many_probes() {
    let mut rng = dal_testkit::seeded_rng(0xADCE);
    for (name, op) in operator_zoo(123, 9, 14) {
        for probe in 0..120 {
            let v = dal_testkit::normal_array1(&mut rng, op.cols());
            let u = dal_testkit::normal_array1(&mut rng, op.rows());
            let lhs = op.apply(&v).dot(&u);
            let rhs = v.dot(&op.apply_adjoint(&u));
            let rel = (lhs - rhs).abs() / (1.0 + lhs.abs().max(rhs.abs()));
            assert!(
                rel <= 1e-10,
                "{name} probe {probe}: ⟨Av,u⟩={lhs} vs ⟨v,Aᵀu⟩={rhs}"
            );
        }
    }
}

#[test]
fn apply_agrees_with_materialization() {
    let mut rng = dal_testkit::seeded_rng(0xBEEF);
    for (name, op) in operator_zoo(7, 6, 10) {
        let mat = op.materialize();
        for _ in 0..20 {
            let v = dal_testkit::normal_array1(&mut rng, op.cols());
            let got = op.apply(&v);
            let want = mat.dot(&v);
            for i in 0..op.rows() {
                assert!(
                    (got[i] - want[i]).abs() < 1e-10,
                    "{name}: row {i} {} vs {}",
                    got[i],
                    want[i]
                );
            }
            let u = dal_testkit::normal_array1(&mut rng, op.rows());
            let got_t = op.apply_adjoint(&u);
            let want_t = mat.t().dot(&u);
            for j in 0..op.cols() {
                assert!((got_t[j] - want_t[j]).abs() < 1e-10, "{name}: col {j}");
            }
        }
    }
}

#[test]
fn subset_chains_compose_across_kinds() {
    for (name, op) in operator_zoo(99, 8, 12) {
        let n = op.cols();
        let first: Vec<usize> = (0..n).rev().collect();
        let second: Vec<usize> = (0..n).step_by(3).collect();
        let chained = op.column_subset(&first).column_subset(&second);
        let direct: Vec<usize> = second.iter().map(|&j| first[j]).collect();
        let one_shot = op.column_subset(&direct);
        let v = Array1::from_iter((0..chained.cols()).map(|j| (j as f64) - 1.5));
        let a = chained.apply(&v);
        let b = one_shot.apply(&v);
        for i in 0..op.rows() {
            assert!((a[i] - b[i]).abs() < 1e-14, "{name}");
        }
    }
}

#[test]
fn empty_subset_behaves_as_zero_operator() {
    for (name, op) in operator_zoo(5, 5, 7) {
        let z = op.column_subset(&[]);
        assert_eq!(z.cols(), 0, "{name}");
        let out = z.apply(&Array1::zeros(0));
        assert!(out.iter().all(|&x| x == 0.0), "{name}");
        assert_eq!(out.len(), op.rows(), "{name}");
        let adj = z.apply_adjoint(&Array1::ones(op.rows()));
        assert_eq!(adj.len(), 0, "{name}");
    }
}
