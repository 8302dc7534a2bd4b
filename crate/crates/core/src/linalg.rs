//! Small dense linear-algebra kernels used by the trace-norm proximal
//! operator and the reference-solution recipe. These handle matrices of at
//! most a few hundred rows/columns; nothing here is performance-critical.

use ndarray::{Array1, Array2};

/// Thin singular value decomposition of a dense matrix by one-sided Jacobi
/// rotations: `a = u · diag(s) · vᵀ` with `u` (m×k), `s` (k), `v` (n×k),
/// `k = min(m, n)`, singular values sorted descending.
///
/// Columns of `u` corresponding to zero singular values are zero vectors
/// (callers only form products weighted by the singular values, so an
/// orthonormal completion is never needed).
pub fn svd(a: &Array2<f64>) -> (Array2<f64>, Array1<f64>, Array2<f64>) {
    let (m, n) = a.dim();
    if m < n {
        // Work on the transpose and swap the factors.
        let at = a.t().to_owned();
        let (u, s, v) = svd(&at);
        return (v, s, u);
    }
    let k = n;
    let mut w = a.clone(); // columns are rotated in place
    let mut v = Array2::<f64>::eye(n);

    let max_sweeps = 60;
    let tol = 1e-30;
    for _ in 0..max_sweeps {
        let mut off = 0.0f64;
        for p in 0..k {
            for q in (p + 1)..k {
                let mut app = 0.0;
                let mut aqq = 0.0;
                let mut apq = 0.0;
                for i in 0..m {
                    let wp = w[[i, p]];
                    let wq = w[[i, q]];
                    app += wp * wp;
                    aqq += wq * wq;
                    apq += wp * wq;
                }
                if apq * apq <= tol * app * aqq {
                    continue;
                }
                off = off.max(apq.abs() / (app * aqq).sqrt().max(f64::MIN_POSITIVE));
                let tau = (aqq - app) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let wp = w[[i, p]];
                    let wq = w[[i, q]];
                    w[[i, p]] = c * wp - s * wq;
                    w[[i, q]] = s * wp + c * wq;
                }
                for i in 0..n {
                    let vp = v[[i, p]];
                    let vq = v[[i, q]];
                    v[[i, p]] = c * vp - s * vq;
                    v[[i, q]] = s * vp + c * vq;
                }
            }
        }
        if off < 1e-15 {
            break;
        }
    }

    let mut sing: Vec<(f64, usize)> = (0..k)
        .map(|j| {
            let nrm: f64 = (0..m).map(|i| w[[i, j]] * w[[i, j]]).sum::<f64>().sqrt();
            (nrm, j)
        })
        .collect();
    sing.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());

    let mut u = Array2::<f64>::zeros((m, k));
    let mut s = Array1::<f64>::zeros(k);
    let mut vs = Array2::<f64>::zeros((n, k));
    for (out, &(nrm, j)) in sing.iter().enumerate() {
        s[out] = nrm;
        if nrm > 0.0 {
            for i in 0..m {
                u[[i, out]] = w[[i, j]] / nrm;
            }
        }
        for i in 0..n {
            vs[[i, out]] = v[[i, j]];
        }
    }
    (u, s, vs)
}

/// Solves `a x = b` for a symmetric positive-definite `a` by Cholesky
/// factorization. Panics if `a` is not square, `b` has the wrong length,
/// or a pivot is not strictly positive (not SPD).
pub fn cholesky_solve(a: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let n = a.nrows();
    assert_eq!(a.ncols(), n, "cholesky_solve: matrix must be square");
    assert_eq!(b.len(), n, "cholesky_solve: rhs length mismatch");
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        assert!(d > 0.0, "cholesky_solve: matrix is not positive definite");
        let dj = d.sqrt();
        l[[j, j]] = dj;
        for i in (j + 1)..n {
            let mut v = a[[i, j]];
            for k in 0..j {
                v -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = v / dj;
        }
    }
    // Forward then backward substitution.
    let mut y = Array1::<f64>::zeros(n);
    for i in 0..n {
        let mut v = b[i];
        for k in 0..i {
            v -= l[[i, k]] * y[k];
        }
        y[i] = v / l[[i, i]];
    }
    let mut x = Array1::<f64>::zeros(n);
    for i in (0..n).rev() {
        let mut v = y[i];
        for k in (i + 1)..n {
            v -= l[[k, i]] * x[k];
        }
        x[i] = v / l[[i, i]];
    }
    x
}
