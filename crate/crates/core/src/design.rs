//! Matrix-free design operators.
//!
//! A [`DesignOperator`] exposes a linear map `A : ℝⁿ → ℝᵐ` through
//! matrix-vector products only. Three representations share one interface:
//! dense row-major storage, compressed sparse column storage, and a lazy
//! standardized wrapper `Ã = (A − 1·m̄ᵀ)·S⁻¹` that never materializes the
//! (generally dense) centered matrix. Column subsets are lightweight views
//! used by the inner Newton method to form Hessian products whose cost
//! scales with the active set, not the full dimension.

use ndarray::{Array1, Array2};
use std::sync::Arc;

/// Per-column means and scales used by the standardized wrapper.
///
/// Scales are strictly positive: columns with zero variance get scale 1 so
/// that standardization maps them to exactly zero instead of dividing by
/// zero.
#[derive(Debug, Clone)]
pub struct StandardizationStats {
    pub means: Array1<f64>,
    pub scales: Array1<f64>,
}

impl StandardizationStats {
    /// Column means and population standard deviations of `op`.
    pub fn from_design(op: &DesignOperator) -> Self {
        let m = op.rows() as f64;
        let n = op.cols();
        let mut means = Array1::<f64>::zeros(n);
        let mut scales = Array1::<f64>::ones(n);
        for j in 0..n {
            let (sum, sumsq) = op.column_sums(j);
            let mean = sum / m;
            let var = (sumsq / m - mean * mean).max(0.0);
            means[j] = mean;
            let sd = var.sqrt();
            scales[j] = if sd > 0.0 { sd } else { 1.0 };
        }
        StandardizationStats { means, scales }
    }
}

#[derive(Debug)]
enum Storage {
    /// Row-major dense matrix.
    Dense(Array2<f64>),
    /// Compressed sparse column.
    Csc {
        nrows: usize,
        ncols: usize,
        colptr: Vec<usize>,
        rowidx: Vec<usize>,
        values: Vec<f64>,
    },
}

impl Storage {
    fn nrows(&self) -> usize {
        match self {
            Storage::Dense(a) => a.nrows(),
            Storage::Csc { nrows, .. } => *nrows,
        }
    }

    fn ncols(&self) -> usize {
        match self {
            Storage::Dense(a) => a.ncols(),
            Storage::Csc { ncols, .. } => *ncols,
        }
    }
}

/// Matrix-free design operator (see module docs).
///
/// Cloning is cheap: storage, standardization stats, and column selections
/// are shared behind `Arc`.
#[derive(Debug, Clone)]
pub struct DesignOperator {
    storage: Arc<Storage>,
    /// Exposed columns as indices into the underlying storage; `None`
    /// exposes all columns in order.
    selection: Option<Arc<Vec<usize>>>,
    /// Standardization stats indexed by underlying storage column.
    stats: Option<Arc<StandardizationStats>>,
}

impl DesignOperator {
    /// Wraps a dense matrix.
    pub fn dense(a: Array2<f64>) -> Self {
        DesignOperator {
            storage: Arc::new(Storage::Dense(a)),
            selection: None,
            stats: None,
        }
    }

    /// Wraps compressed-sparse-column data.
    ///
    /// # Panics
    /// If `colptr` does not have length `ncols + 1`, is not monotone with
    /// `colptr[0] == 0` and `colptr[ncols] == rowidx.len()`, if `rowidx`
    /// and `values` differ in length, or if any row index is out of range.
    pub fn csc(
        nrows: usize,
        ncols: usize,
        colptr: Vec<usize>,
        rowidx: Vec<usize>,
        values: Vec<f64>,
    ) -> Self {
        assert_eq!(colptr.len(), ncols + 1, "csc: colptr length must be ncols+1");
        assert_eq!(colptr[0], 0, "csc: colptr must start at 0");
        assert_eq!(
            colptr[ncols],
            rowidx.len(),
            "csc: colptr must end at the entry count"
        );
        assert_eq!(rowidx.len(), values.len(), "csc: rowidx/values length mismatch");
        for j in 0..ncols {
            assert!(colptr[j] <= colptr[j + 1], "csc: colptr must be monotone");
        }
        assert!(
            rowidx.iter().all(|&i| i < nrows),
            "csc: row index out of range"
        );
        DesignOperator {
            storage: Arc::new(Storage::Csc {
                nrows,
                ncols,
                colptr,
                rowidx,
                values,
            }),
            selection: None,
            stats: None,
        }
    }

    /// Builds CSC storage from (row, col, value) triplets. Duplicate
    /// positions are summed; zeros are kept as stored entries.
    ///
    /// # Panics
    /// If any index is out of range.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        for &(r, c, _) in &sorted {
            assert!(r < nrows && c < ncols, "from_triplets: index out of range");
        }
        sorted.sort_by_key(|&(r, c, _)| (c, r));
        let mut colptr = vec![0usize; ncols + 1];
        let mut rowidx = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        for &(r, c, v) in &sorted {
            if let (Some(&lr), true) = (rowidx.last(), colptr[c + 1] > colptr[c]) {
                if lr == r {
                    *values.last_mut().unwrap() += v;
                    continue;
                }
            }
            rowidx.push(r);
            values.push(v);
            colptr[c + 1] += 1;
        }
        for c in 0..ncols {
            colptr[c + 1] += colptr[c];
        }
        DesignOperator::csc(nrows, ncols, colptr, rowidx, values)
    }

    /// Number of rows `m` (samples).
    pub fn rows(&self) -> usize {
        self.storage.nrows()
    }

    /// Number of exposed columns `n` (features).
    pub fn cols(&self) -> usize {
        match &self.selection {
            Some(sel) => sel.len(),
            None => self.storage.ncols(),
        }
    }

    /// Whether this operator applies standardization on the fly.
    pub fn is_standardized(&self) -> bool {
        self.stats.is_some()
    }

    /// Standardization stats of the exposed columns, if standardized.
    pub fn standardization(&self) -> Option<StandardizationStats> {
        self.stats.as_ref().map(|st| {
            let n = self.cols();
            let mut means = Array1::zeros(n);
            let mut scales = Array1::zeros(n);
            for j in 0..n {
                let c = self.underlying_col(j);
                means[j] = st.means[c];
                scales[j] = st.scales[c];
            }
            StandardizationStats { means, scales }
        })
    }

    /// Returns a lazily standardized wrapper of this operator: each exposed
    /// column is centered by its mean and divided by its population
    /// standard deviation (zero-variance columns divide by 1). The
    /// underlying storage is shared, not rewritten.
    ///
    /// # Panics
    /// If the operator is already standardized.
    pub fn standardized(&self) -> Self {
        assert!(
            self.stats.is_none(),
            "standardized: operator is already standardized"
        );
        let plain = self.clone();
        let local = StandardizationStats::from_design(&plain);
        // Store per underlying column so subsets can share the table.
        let ncols_full = self.storage.ncols();
        let mut means = Array1::<f64>::zeros(ncols_full);
        let mut scales = Array1::<f64>::ones(ncols_full);
        for j in 0..self.cols() {
            let c = self.underlying_col(j);
            means[c] = local.means[j];
            scales[c] = local.scales[j];
        }
        DesignOperator {
            storage: Arc::clone(&self.storage),
            selection: self.selection.clone(),
            stats: Some(Arc::new(StandardizationStats { means, scales })),
        }
    }

    /// Restriction of the operator to the given exposed-column indices, in
    /// order. Indices refer to THIS operator's columns, so subsetting a
    /// subset composes. An empty index set yields the zero operator
    /// `ℝ⁰ → ℝᵐ`. Standardization (if any) is inherited per column.
    ///
    /// # Panics
    /// If any index is `>= self.cols()`.
    pub fn column_subset(&self, indices: &[usize]) -> Self {
        let mapped: Vec<usize> = indices
            .iter()
            .map(|&j| {
                assert!(j < self.cols(), "column_subset: index {j} out of range");
                self.underlying_col(j)
            })
            .collect();
        DesignOperator {
            storage: Arc::clone(&self.storage),
            selection: Some(Arc::new(mapped)),
            stats: self.stats.clone(),
        }
    }

    #[inline]
    fn underlying_col(&self, j: usize) -> usize {
        match &self.selection {
            Some(sel) => sel[j],
            None => j,
        }
    }

    /// `(Σᵢ aᵢⱼ, Σᵢ aᵢⱼ²)` of exposed column `j` of the RAW storage
    /// (standardization is not applied; used to compute stats).
    fn column_sums(&self, j: usize) -> (f64, f64) {
        let c = self.underlying_col(j);
        match &*self.storage {
            Storage::Dense(a) => {
                let col = a.column(c);
                let mut s = 0.0;
                let mut ss = 0.0;
                for &v in col.iter() {
                    s += v;
                    ss += v * v;
                }
                (s, ss)
            }
            Storage::Csc {
                colptr, values, ..
            } => {
                let mut s = 0.0;
                let mut ss = 0.0;
                for v in &values[colptr[c]..colptr[c + 1]] {
                    s += v;
                    ss += v * v;
                }
                (s, ss)
            }
        }
    }

    /// `A v` (or `Ã v` when standardized).
    ///
    /// # Panics
    /// If `v.len() != self.cols()`.
    pub fn apply(&self, v: &Array1<f64>) -> Array1<f64> {
        assert_eq!(v.len(), self.cols(), "apply: input length mismatch");
        let m = self.rows();
        let mut out = Array1::<f64>::zeros(m);
        match (&*self.storage, &self.stats) {
            (Storage::Dense(a), None) if self.selection.is_none() => {
                out = a.dot(v);
            }
            (Storage::Dense(a), _) => {
                let mut shift = 0.0;
                for j in 0..self.cols() {
                    let c = self.underlying_col(j);
                    let (scale, mean) = self.col_affine(c);
                    let coef = v[j] / scale;
                    if coef != 0.0 {
                        let col = a.column(c);
                        for i in 0..m {
                            out[i] += coef * col[i];
                        }
                    }
                    shift += coef * mean;
                }
                if shift != 0.0 {
                    for i in 0..m {
                        out[i] -= shift;
                    }
                }
            }
            (
                Storage::Csc {
                    colptr,
                    rowidx,
                    values,
                    ..
                },
                _,
            ) => {
                let mut shift = 0.0;
                for j in 0..self.cols() {
                    let c = self.underlying_col(j);
                    let (scale, mean) = self.col_affine(c);
                    let coef = v[j] / scale;
                    if coef != 0.0 {
                        for k in colptr[c]..colptr[c + 1] {
                            out[rowidx[k]] += coef * values[k];
                        }
                    }
                    shift += coef * mean;
                }
                if shift != 0.0 {
                    for i in 0..m {
                        out[i] -= shift;
                    }
                }
            }
        }
        out
    }

    /// `Aᵀ u` (or `Ãᵀ u` when standardized).
    ///
    /// # Panics
    /// If `u.len() != self.rows()`.
    pub fn apply_adjoint(&self, u: &Array1<f64>) -> Array1<f64> {
        assert_eq!(u.len(), self.rows(), "apply_adjoint: input length mismatch");
        let n = self.cols();
        let mut out = Array1::<f64>::zeros(n);
        let usum: f64 = if self.stats.is_some() { u.sum() } else { 0.0 };
        match &*self.storage {
            Storage::Dense(a) => {
                if self.selection.is_none() && self.stats.is_none() {
                    return a.t().dot(u);
                }
                for j in 0..n {
                    let c = self.underlying_col(j);
                    let (scale, mean) = self.col_affine(c);
                    let col = a.column(c);
                    let mut dot = 0.0;
                    for i in 0..self.rows() {
                        dot += col[i] * u[i];
                    }
                    out[j] = (dot - mean * usum) / scale;
                }
            }
            Storage::Csc {
                colptr,
                rowidx,
                values,
                ..
            } => {
                for j in 0..n {
                    let c = self.underlying_col(j);
                    let (scale, mean) = self.col_affine(c);
                    let mut dot = 0.0;
                    for k in colptr[c]..colptr[c + 1] {
                        dot += values[k] * u[rowidx[k]];
                    }
                    out[j] = (dot - mean * usum) / scale;
                }
            }
        }
        out
    }

    /// `(scale, mean)` of underlying column `c`; `(1, 0)` when not
    /// standardized.
    #[inline]
    fn col_affine(&self, c: usize) -> (f64, f64) {
        match &self.stats {
            Some(st) => (st.scales[c], st.means[c]),
            None => (1.0, 0.0),
        }
    }

    /// Row-wise squared norms over the exposed columns:
    /// `d_i = Σ_j Ã_{ij}²`. This is the diagonal of `A Aᵀ`, used to build
    /// preconditioners whose cost scales with the stored entries of the
    /// exposed columns.
    pub fn row_squared_norms(&self) -> Array1<f64> {
        let m = self.rows();
        let mut d = Array1::<f64>::zeros(m);
        let mut constant = 0.0; // Σ_j (mean_j/scale_j)² added to every row
        match &*self.storage {
            Storage::Dense(a) => {
                for j in 0..self.cols() {
                    let c = self.underlying_col(j);
                    let (scale, mean) = self.col_affine(c);
                    let col = a.column(c);
                    let inv2 = 1.0 / (scale * scale);
                    for i in 0..m {
                        let v = col[i];
                        d[i] += (v * v - 2.0 * v * mean) * inv2;
                    }
                    constant += mean * mean * inv2;
                }
            }
            Storage::Csc {
                colptr,
                rowidx,
                values,
                ..
            } => {
                for j in 0..self.cols() {
                    let c = self.underlying_col(j);
                    let (scale, mean) = self.col_affine(c);
                    let inv2 = 1.0 / (scale * scale);
                    for k in colptr[c]..colptr[c + 1] {
                        let v = values[k];
                        d[rowidx[k]] += (v * v - 2.0 * v * mean) * inv2;
                    }
                    constant += mean * mean * inv2;
                }
            }
        }
        if constant != 0.0 {
            for i in 0..m {
                d[i] += constant;
            }
        }
        // Roundoff in the centered expansion can leave tiny negatives.
        d.mapv_inplace(|x| x.max(0.0));
        d
    }

    /// Dense materialization of the exposed (and possibly standardized)
    /// operator, built column by column through `apply`. Intended for small
    /// subsets, reference recipes, and tests.
    pub fn materialize(&self) -> Array2<f64> {
        let (m, n) = (self.rows(), self.cols());
        let mut out = Array2::<f64>::zeros((m, n));
        let mut e = Array1::<f64>::zeros(n);
        for j in 0..n {
            e[j] = 1.0;
            let col = self.apply(&e);
            e[j] = 0.0;
            for i in 0..m {
                out[[i, j]] = col[i];
            }
        }
        out
    }
}
