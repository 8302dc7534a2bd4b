//! Line-delimited trace serialization. One record per solver iteration,
//! fixed column order, empty fields for absent optional values.

use anyhow::{bail, Context, Result};
use dal_core::diagnostics::{Trace, TraceRecord};

use crate::dataset::fmt_full;

pub const TRACE_HEADER: &str =
    "iter,f,dual,rdg,nnz,inner_newton,pcg_steps,eta1,eta2,seconds,dist_to_ref";

pub fn write_trace(trace: &Trace) -> String {
    let mut out = String::with_capacity(64 * (trace.len() + 1));
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in &trace.records {
        let eta2 = r.eta2.map(fmt_full).unwrap_or_default();
        let dist = r.dist_to_ref.map(fmt_full).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.iter,
            fmt_full(r.f),
            fmt_full(r.dual),
            fmt_full(r.rdg),
            r.nnz,
            r.inner_newton,
            r.pcg_steps,
            fmt_full(r.eta1),
            eta2,
            fmt_full(r.seconds),
            dist,
        ));
    }
    out
}

pub fn parse_trace(text: &str) -> Result<Trace> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end() == TRACE_HEADER => {}
        Some(h) => bail!("unexpected trace header {h:?}"),
        None => bail!("empty trace file"),
    }
    let mut trace = Trace::default();
    for (idx, line) in lines.enumerate() {
        let lineno = idx + 2;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 11 {
            bail!("line {lineno}: expected 11 fields, got {}", fields.len());
        }
        let req = |k: usize, name: &str| -> Result<f64> {
            fields[k]
                .parse::<f64>()
                .with_context(|| format!("line {lineno}: bad {name} {:?}", fields[k]))
        };
        let opt = |k: usize, name: &str| -> Result<Option<f64>> {
            if fields[k].is_empty() {
                Ok(None)
            } else {
                req(k, name).map(Some)
            }
        };
        let count = |k: usize, name: &str| -> Result<usize> {
            fields[k]
                .parse::<usize>()
                .with_context(|| format!("line {lineno}: bad {name} {:?}", fields[k]))
        };
        trace.push(TraceRecord {
            iter: count(0, "iter")?,
            f: req(1, "f")?,
            dual: req(2, "dual")?,
            rdg: req(3, "rdg")?,
            nnz: count(4, "nnz")?,
            inner_newton: count(5, "inner_newton")?,
            pcg_steps: count(6, "pcg_steps")?,
            eta1: req(7, "eta1")?,
            eta2: opt(8, "eta2")?,
            seconds: req(9, "seconds")?,
            dist_to_ref: opt(10, "dist_to_ref")?,
        });
    }
    Ok(trace)
}
