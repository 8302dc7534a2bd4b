//! Shared test support for the workspace: derivative-free convex
//! minimization (used as an implementation-independent oracle for proximal
//! operators and Moreau envelopes), finite differences, seeded random
//! generators, and small closed-form linear-algebra references.
//!
//! Nothing in this crate depends on the library under test.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Deterministic RNG for reproducible test data.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_vec<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn normal_array1<R: Rng>(rng: &mut R, n: usize) -> Array1<f64> {
    Array1::from(normal_vec(rng, n))
}

pub fn normal_array2<R: Rng>(rng: &mut R, m: usize, n: usize) -> Array2<f64> {
    Array2::from_shape_vec((m, n), normal_vec(rng, m * n)).unwrap()
}

/// Central finite difference of `f` at `x` with step `h`.
pub fn central_diff_grad<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut xp = x.to_vec();
    for j in 0..x.len() {
        let orig = xp[j];
        xp[j] = orig + h;
        let fp = f(&xp);
        xp[j] = orig - h;
        let fm = f(&xp);
        xp[j] = orig;
        g[j] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Golden-section search for the minimum of a unimodal `g` on `[lo, hi]`.
pub fn golden_min<G: Fn(f64) -> f64>(g: G, lo: f64, hi: f64, iters: usize) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - (b - a) * INV_PHI;
    let mut d = a + (b - a) * INV_PHI;
    let (mut fc, mut fd) = (g(c), g(d));
    for _ in 0..iters {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - (b - a) * INV_PHI;
            fc = g(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + (b - a) * INV_PHI;
            fd = g(d);
        }
    }
    0.5 * (a + b)
}

/// One run of adaptive Nelder–Mead (Gao–Han parameters). Returns the best
/// vertex and its value.
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(
    f: &F,
    x0: &[f64],
    scale: f64,
    max_iter: usize,
) -> (Vec<f64>, f64) {
    let n = x0.len();
    assert!(n >= 1, "nelder_mead needs at least one dimension");
    let nf = n as f64;
    // Adaptive parameters; for n <= 2 these coincide with the classic ones.
    let alpha = 1.0;
    let beta = 1.0 + 2.0 / nf;
    let gamma = (0.75 - 1.0 / (2.0 * nf)).max(0.1);
    let delta = 1.0 - 1.0 / nf;
    let delta = if n == 1 { 0.5 } else { delta };

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for j in 0..n {
        let mut v = x0.to_vec();
        v[j] += if scale != 0.0 { scale } else { 1.0 };
        simplex.push(v);
    }
    let mut fvals: Vec<f64> = simplex.iter().map(|v| f(v)).collect();

    for _ in 0..max_iter {
        // Sort vertices by value.
        let mut idx: Vec<usize> = (0..=n).collect();
        idx.sort_by(|&i, &j| fvals[i].partial_cmp(&fvals[j]).unwrap());
        let ordered: Vec<Vec<f64>> = idx.iter().map(|&i| simplex[i].clone()).collect();
        let fordered: Vec<f64> = idx.iter().map(|&i| fvals[i]).collect();
        simplex = ordered;
        fvals = fordered;

        if fvals[n] - fvals[0] <= 1e-15 * (1.0 + fvals[0].abs()) {
            break;
        }

        // Centroid of all but the worst.
        let mut cen = vec![0.0; n];
        for v in simplex.iter().take(n) {
            for j in 0..n {
                cen[j] += v[j] / nf;
            }
        }
        let lerp = |t: f64| -> Vec<f64> {
            (0..n)
                .map(|j| cen[j] + t * (cen[j] - simplex[n][j]))
                .collect()
        };

        let xr = lerp(alpha);
        let fr = f(&xr);
        if fr < fvals[0] {
            let xe = lerp(alpha * beta);
            let fe = f(&xe);
            if fe < fr {
                simplex[n] = xe;
                fvals[n] = fe;
            } else {
                simplex[n] = xr;
                fvals[n] = fr;
            }
        } else if fr < fvals[n - 1] {
            simplex[n] = xr;
            fvals[n] = fr;
        } else {
            let (xc, fc) = if fr < fvals[n] {
                let x = lerp(alpha * gamma);
                let v = f(&x);
                (x, v)
            } else {
                let x = lerp(-gamma);
                let v = f(&x);
                (x, v)
            };
            if fc < fvals[n].min(fr) {
                simplex[n] = xc;
                fvals[n] = fc;
            } else {
                // Shrink toward the best vertex.
                let best = simplex[0].clone();
                for i in 1..=n {
                    for j in 0..n {
                        simplex[i][j] = best[j] + delta * (simplex[i][j] - best[j]);
                    }
                    fvals[i] = f(&simplex[i]);
                }
            }
        }
    }

    let mut bi = 0;
    for i in 1..=n {
        if fvals[i] < fvals[bi] {
            bi = i;
        }
    }
    (simplex[bi].clone(), fvals[bi])
}

/// Robust minimizer for convex (possibly nonsmooth) objectives, used as an
/// oracle: Nelder–Mead restarts at decreasing scales, cyclic golden-section
/// polishing of each coordinate, and exact-zero snapping candidates judged
/// purely by objective value.
pub fn minimize_convex<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64], scale: f64) -> Vec<f64> {
    let n = x0.len();
    let mut best = x0.to_vec();
    let mut fbest = f(&best);

    let consider = |cand: Vec<f64>, fc: f64, best: &mut Vec<f64>, fbest: &mut f64| {
        if fc < *fbest {
            *best = cand;
            *fbest = fc;
        }
    };

    if n > 1 {
        for s in [scale, 0.3 * scale, 0.03 * scale, 0.003 * scale] {
            let (x, fx) = nelder_mead(&f, &best.clone(), s, 2500);
            consider(x, fx, &mut best, &mut fbest);
        }
        // Perturbed restarts to escape nonsmooth stagnation.
        let mut rng = seeded_rng(0xC0FFEE);
        for _ in 0..3 {
            let start: Vec<f64> = best
                .iter()
                .map(|&v| v + 0.05 * scale * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let (x, fx) = nelder_mead(&f, &start, 0.1 * scale, 2500);
            consider(x, fx, &mut best, &mut fbest);
        }
    }

    // Cyclic coordinate polish with shrinking windows.
    let mut r = 1.0 + scale.abs();
    for _ in 0..14 {
        for j in 0..n {
            let xj = golden_min(
                |t| {
                    let mut x = best.clone();
                    x[j] = t;
                    f(&x)
                },
                best[j] - r,
                best[j] + r,
                64,
            );
            let mut cand = best.clone();
            cand[j] = xj;
            let fc = f(&cand);
            consider(cand, fc, &mut best, &mut fbest);
        }
        r *= 0.35;
    }

    // Exact-zero snapping candidates (kept only if the objective agrees).
    for tol in [1e-4, 1e-7] {
        let snapped: Vec<f64> = best
            .iter()
            .map(|&v| if v.abs() < tol { 0.0 } else { v })
            .collect();
        let fs = f(&snapped);
        consider(snapped, fs, &mut best, &mut fbest);
    }
    let zero = vec![0.0; n];
    let fz = f(&zero);
    consider(zero, fz, &mut best, &mut fbest);

    best
}

/// Nuclear norm of the 2×2 matrix [[a, b], [c, d]] by the rotation
/// identity: with Q = √(E²+H²), R = √(F²+G²) where E=(a+d)/2, F=(a−d)/2,
/// G=(c+b)/2, H=(c−b)/2, the singular values are Q+R and |Q−R|.
pub fn nuclear_norm_2x2(a: f64, b: f64, c: f64, d: f64) -> f64 {
    let e = 0.5 * (a + d);
    let fq = 0.5 * (a - d);
    let g = 0.5 * (c + b);
    let h = 0.5 * (c - b);
    let q = e.hypot(h);
    let r = fq.hypot(g);
    (q + r) + (q - r).abs()
}

/// Singular values (descending) of the 2×2 matrix [[a, b], [c, d]].
pub fn singular_values_2x2(a: f64, b: f64, c: f64, d: f64) -> (f64, f64) {
    let e = 0.5 * (a + d);
    let fq = 0.5 * (a - d);
    let g = 0.5 * (c + b);
    let h = 0.5 * (c - b);
    let q = e.hypot(h);
    let r = fq.hypot(g);
    (q + r, (q - r).abs())
}

/// Least-squares slope of log(y) against log(x); points with y <= 0 are
/// dropped. Panics if fewer than two usable points remain.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|&(x, y)| (x.ln(), y.ln()))
        .collect();
    assert!(pts.len() >= 2, "need at least two positive points for a slope");
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// Exact-to-roundoff spectral norm of a small dense matrix: power iteration
/// on the Gram matrix from several deterministic starts.
pub fn spectral_norm_dense(a: &Array2<f64>) -> f64 {
    let n = a.ncols();
    if n == 0 || a.nrows() == 0 {
        return 0.0;
    }
    let gram = a.t().dot(a);
    let mut best = 0.0f64;
    for seed in 0..4u64 {
        let mut rng = seeded_rng(0x9E3779B9 ^ seed);
        let mut v = normal_array1(&mut rng, n);
        let nv = v.dot(&v).sqrt();
        if nv == 0.0 {
            continue;
        }
        v /= nv;
        let mut lam = 0.0;
        for _ in 0..4000 {
            let w = gram.dot(&v);
            let nw = w.dot(&w).sqrt();
            if nw == 0.0 {
                lam = 0.0;
                break;
            }
            v = &w / nw;
            lam = v.dot(&gram.dot(&v));
        }
        best = best.max(lam.max(0.0));
    }
    best.sqrt()
}
