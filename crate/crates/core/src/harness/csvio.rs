//! Deterministic CSV artifacts with a provenance header.
//!
//! Every artifact opens with `#`-prefixed provenance lines (experiment id,
//! master seed, library version, and the echo of every result-affecting
//! knob), then one header row, then data rows. Scheduling knobs such as the
//! worker-thread count are deliberately excluded from the echo: a fixed
//! `(spec, seed)` pair must produce byte-identical artifacts at any
//! parallelism level, and no timestamps or machine identifiers are ever
//! recorded. Floats print in Rust's shortest round-trip form, which is
//! platform-independent for finite values; NaN prints as `nan`.

/// One named CSV payload, ready to be written to disk or compared byte for
/// byte in tests.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvArtifact {
    /// File name, including the `.csv` extension.
    pub name: String,
    /// Full file content.
    pub content: String,
}

/// Incremental artifact writer; rows must match the header width.
#[derive(Debug)]
pub struct CsvBuilder {
    name: String,
    columns: usize,
    out: String,
}

impl CsvBuilder {
    pub fn new(name: &str, provenance: &[(String, String)], header: &[&str]) -> Self {
        assert!(!header.is_empty(), "artifacts need at least one column");
        let mut out = String::new();
        for (key, value) in provenance {
            assert!(!key.contains('\n') && !value.contains('\n'), "provenance must be line-free");
            out.push_str(&format!("# {key}={value}\n"));
        }
        out.push_str(&header.join(","));
        out.push('\n');
        Self { name: name.to_string(), columns: header.len(), out }
    }

    pub fn row(&mut self, cells: &[String]) {
        assert_eq!(cells.len(), self.columns, "row width must match the header");
        for (i, cell) in cells.iter().enumerate() {
            assert!(
                !cell.contains(',') && !cell.contains('\n') && !cell.contains('#'),
                "cells must be plain tokens, got {cell:?}"
            );
            if i > 0 {
                self.out.push(',');
            }
            self.out.push_str(cell);
        }
        self.out.push('\n');
    }

    pub fn finish(self) -> CsvArtifact {
        CsvArtifact { name: self.name, content: self.out }
    }
}

/// Shortest round-trip float text; NaN prints as `nan`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        String::from("nan")
    } else {
        format!("{v}")
    }
}

/// Optional value as float text; absent prints as `nan`.
pub fn fmt_opt(v: Option<f64>) -> String {
    fmt_f64(v.unwrap_or(f64::NAN))
}

/// Parsed view of an artifact: provenance pairs, header cells, data rows.
/// The inverse of [`CsvBuilder`]; used by tests and the verify command.
pub fn parse_artifact(content: &str) -> (Vec<(String, String)>, Vec<String>, Vec<Vec<String>>) {
    let mut provenance = Vec::new();
    let mut header: Vec<String> = Vec::new();
    let mut rows = Vec::new();
    for line in content.lines() {
        if let Some(rest) = line.strip_prefix("# ") {
            let (key, value) = rest.split_once('=').expect("provenance lines are key=value");
            provenance.push((key.to_string(), value.to_string()));
        } else if header.is_empty() {
            header = line.split(',').map(str::to_string).collect();
        } else {
            rows.push(line.split(',').map(str::to_string).collect());
        }
    }
    (provenance, header, rows)
}
