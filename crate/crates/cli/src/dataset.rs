//! Dataset ingestion: sparse text (`<label> <index>:<value> ...`, 1-based
//! indices) and dense CSV (first column is the label, header optional).

use anyhow::{anyhow, bail, Context, Result};
use dal_core::design::DesignOperator;
use ndarray::{Array1, Array2};
use std::fmt::Write as _;
use std::path::Path;

/// A loaded or generated estimation dataset.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub design: DesignOperator,
    pub labels: Array1<f64>,
    /// File path or generator description.
    pub provenance: String,
    /// Non-fatal loader notes (e.g. label remapping).
    pub warnings: Vec<String>,
}

impl Dataset {
    pub fn samples(&self) -> usize {
        self.design.rows()
    }

    pub fn features(&self) -> usize {
        self.design.cols()
    }

    /// True when every label is −1 or +1.
    pub fn has_binary_labels(&self) -> bool {
        self.labels.iter().all(|&v| v == -1.0 || v == 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileFormat {
    /// `<label> <index>:<value> ...`, whitespace separated, 1-based.
    LibsvmText,
    /// Comma separated, first column is the label.
    DenseCsv,
}

/// `λ = λ̄ · ‖Aᵀy‖∞` — the scaling under which the zero solution appears
/// at λ̄ = 1 for the squared loss and λ̄ = ½ for the logistic loss.
pub fn lambda_from_bar(dataset: &Dataset, lambda_bar: f64) -> f64 {
    assert!(lambda_bar >= 0.0, "lambda_bar must be nonnegative");
    let v = dataset.design.apply_adjoint(&dataset.labels);
    lambda_bar * v.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
}

/// Maps {0,1} labels to {−1,+1}; leaves anything else untouched. Returns a
/// warning when a remap happened.
fn normalize_labels(labels: &mut Array1<f64>) -> Option<String> {
    let zero_one = labels.iter().all(|&v| v == 0.0 || v == 1.0);
    let has_zero = labels.iter().any(|&v| v == 0.0);
    if zero_one && has_zero {
        labels.mapv_inplace(|v| if v == 0.0 { -1.0 } else { 1.0 });
        Some("labels in {0,1} remapped to {-1,+1}".to_string())
    } else {
        None
    }
}

/// Loads a dataset file.
///
/// `csv_header` skips the first line of a CSV file; it is ignored for the
/// sparse text format.
pub fn load_dataset(path: &Path, format: FileFormat, csv_header: bool) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut ds = match format {
        FileFormat::LibsvmText => parse_libsvm(&text)?,
        FileFormat::DenseCsv => parse_dense_csv(&text, csv_header)?,
    };
    ds.provenance = path.display().to_string();
    Ok(ds)
}

pub fn parse_libsvm(text: &str) -> Result<Dataset> {
    let mut labels = Vec::new();
    let mut triplets = Vec::new();
    let mut ncols = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = labels.len();
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().unwrap();
        let label: f64 = label_tok
            .parse()
            .map_err(|e| anyhow!("line {}: bad label {label_tok:?}: {e}", lineno + 1))?;
        labels.push(label);
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| anyhow!("line {}: expected index:value, got {tok:?}", lineno + 1))?;
            let idx: usize = idx
                .parse()
                .map_err(|e| anyhow!("line {}: bad index {idx:?}: {e}", lineno + 1))?;
            if idx == 0 {
                bail!("line {}: indices are 1-based, found 0", lineno + 1);
            }
            let val: f64 = val
                .parse()
                .map_err(|e| anyhow!("line {}: bad value {val:?}: {e}", lineno + 1))?;
            ncols = ncols.max(idx);
            triplets.push((row, idx - 1, val));
        }
    }
    if labels.is_empty() {
        bail!("empty dataset");
    }
    let mut labels = Array1::from(labels);
    let warning = normalize_labels(&mut labels);
    Ok(Dataset {
        design: DesignOperator::from_triplets(labels.len(), ncols, &triplets),
        labels,
        provenance: String::new(),
        warnings: warning.into_iter().collect(),
    })
}

pub fn parse_dense_csv(text: &str, header: bool) -> Result<Dataset> {
    let mut labels = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    let mut width: Option<usize> = None;
    for (lineno, line) in text.lines().enumerate() {
        if header && lineno == 0 {
            continue;
        }
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 2 {
            bail!("line {}: need a label and at least one feature", lineno + 1);
        }
        match width {
            None => width = Some(fields.len()),
            Some(w) if w != fields.len() => bail!(
                "line {}: {} fields but earlier rows have {}",
                lineno + 1,
                fields.len(),
                w
            ),
            _ => {}
        }
        let label: f64 = fields[0]
            .parse()
            .map_err(|e| anyhow!("line {}: bad label {:?}: {e}", lineno + 1, fields[0]))?;
        labels.push(label);
        for f in &fields[1..] {
            let v: f64 = f
                .parse()
                .map_err(|e| anyhow!("line {}: bad value {f:?}: {e}", lineno + 1))?;
            values.push(v);
        }
    }
    if labels.is_empty() {
        bail!("empty dataset");
    }
    let n = width.unwrap() - 1;
    let a = Array2::from_shape_vec((labels.len(), n), values).expect("row width enforced");
    let mut labels = Array1::from(labels);
    let warning = normalize_labels(&mut labels);
    Ok(Dataset {
        design: DesignOperator::dense(a),
        labels,
        provenance: String::new(),
        warnings: warning.into_iter().collect(),
    })
}

/// Writes the dataset as sparse text; exact round-trip (full-precision
/// values, zeros skipped).
pub fn write_libsvm(path: &Path, dataset: &Dataset) -> Result<()> {
    let a = dataset.design.materialize();
    let mut out = String::new();
    for i in 0..a.nrows() {
        write!(out, "{}", fmt_full(dataset.labels[i])).unwrap();
        for j in 0..a.ncols() {
            if a[[i, j]] != 0.0 {
                write!(out, " {}:{}", j + 1, fmt_full(a[[i, j]])).unwrap();
            }
        }
        out.push('\n');
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

/// Writes the dataset as dense CSV (no header), label first.
pub fn write_dense_csv(path: &Path, dataset: &Dataset) -> Result<()> {
    let a = dataset.design.materialize();
    let mut out = String::new();
    for i in 0..a.nrows() {
        write!(out, "{}", fmt_full(dataset.labels[i])).unwrap();
        for j in 0..a.ncols() {
            write!(out, ",{}", fmt_full(a[[i, j]])).unwrap();
        }
        out.push('\n');
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

/// Shortest decimal form that parses back to the same f64.
pub fn fmt_full(v: f64) -> String {
    let mut s = format!("{v}");
    if s.parse::<f64>() != Ok(v) {
        s = format!("{v:.17e}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn libsvm_line_parses_labels_and_indices() {
        let ds = parse_libsvm("1 3:0.5 7:-2\n-1 1:1.0\n").unwrap();
        assert_eq!(ds.samples(), 2);
        assert_eq!(ds.features(), 7);
        assert_eq!(ds.labels[0], 1.0);
        assert_eq!(ds.labels[1], -1.0);
        let a = ds.design.materialize();
        assert_eq!(a[[0, 2]], 0.5);
        assert_eq!(a[[0, 6]], -2.0);
        assert_eq!(a[[1, 0]], 1.0);
        assert_eq!(a[[0, 0]], 0.0);
        assert!(ds.warnings.is_empty());
    }

    #[test]
    fn libsvm_rejects_zero_index_and_reports_the_line() {
        let err = parse_libsvm("1 1:2.0\n1 0:3.0\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        let err = parse_libsvm("1 oops\n").unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
    }

    #[test]
    fn empty_input_is_an_error_not_an_empty_dataset() {
        assert!(parse_libsvm("").is_err());
        assert!(parse_libsvm("\n  \n").is_err());
        assert!(parse_dense_csv("", false).is_err());
        // Header-only CSV is still empty.
        assert!(parse_dense_csv("label,x1,x2\n", true).is_err());
    }

    #[test]
    fn csv_parses_with_and_without_header() {
        let body = "1,0.5,-1.5\n0,2.0,0.25\n";
        let ds = parse_dense_csv(body, false).unwrap();
        assert_eq!(ds.samples(), 2);
        assert_eq!(ds.features(), 2);
        // {0,1} labels remap with a warning.
        assert_eq!(ds.labels[0], 1.0);
        assert_eq!(ds.labels[1], -1.0);
        assert_eq!(ds.warnings.len(), 1);

        let with_header = format!("label,x1,x2\n{body}");
        let ds2 = parse_dense_csv(&with_header, true).unwrap();
        assert_eq!(ds2.labels, ds.labels);
    }

    #[test]
    fn csv_dimension_inconsistency_is_reported() {
        let err = parse_dense_csv("1,2,3\n1,2\n", false).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn plus_minus_one_labels_are_left_alone() {
        let ds = parse_dense_csv("1,0.5\n-1,2.0\n", false).unwrap();
        assert!(ds.warnings.is_empty());
        assert_eq!(ds.labels[1], -1.0);
    }

    #[test]
    fn lambda_bar_scaling_on_identity_design() {
        let ds = parse_dense_csv("1,1,0\n-1,0,1\n", false).unwrap();
        // ‖Aᵀy‖∞ = 1 so λ = λ̄.
        assert_eq!(lambda_from_bar(&ds, 0.25), 0.25);
        assert_eq!(lambda_from_bar(&ds, 0.0), 0.0);
    }

    #[test]
    fn full_precision_formatting_round_trips() {
        for &v in &[0.1, 1.0 / 3.0, -2.5e-17, 6.02e23, 1.0, -0.0] {
            assert_eq!(fmt_full(v).parse::<f64>().unwrap(), v);
        }
    }
}
