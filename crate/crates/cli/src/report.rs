//! Plain-text summary of a run directory.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::artifacts::{sha256_hex, Manifest, MANIFEST};
use crate::CliError;

#[derive(Debug, Clone)]
pub struct Rendered {
    pub text: String,
    pub pass: bool,
}

fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        "-".into()
    } else {
        format!("{x:.3e}")
    }
}

/// Pass/fail table of the manifest's audits, with pointers to the CSV
/// outputs. Missing or altered artifacts are an error that lists them.
pub fn report_render(dir: &Path) -> Result<Rendered, CliError> {
    if !dir.join(MANIFEST).is_file() {
        return Err(CliError::Report(format!(
            "missing artifacts in {}: {MANIFEST}",
            dir.display()
        )));
    }
    let manifest = Manifest::read(dir)?;
    let mut problems = Vec::new();
    for f in &manifest.files {
        match fs::read(dir.join(&f.path)) {
            Err(_) => problems.push(format!("{} (missing)", f.path)),
            Ok(bytes) if sha256_hex(&bytes) != f.sha256 => {
                problems.push(format!("{} (hash mismatch)", f.path))
            }
            Ok(_) => {}
        }
    }
    if !problems.is_empty() {
        return Err(CliError::Report(format!(
            "missing artifacts in {}: {}",
            dir.display(),
            problems.join(", ")
        )));
    }

    let name_w = manifest
        .audits
        .iter()
        .map(|a| a.name.len())
        .max()
        .unwrap_or(5)
        .max(5);
    let op_w = manifest
        .audits
        .iter()
        .map(|a| a.operation.len())
        .max()
        .unwrap_or(9)
        .max(9);
    let mut s = String::new();
    let _ = writeln!(
        s,
        "experiment {} (seed {}, version {})",
        manifest.experiment, manifest.seed, manifest.version
    );
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "{:<6} {:<name_w$}  {:<op_w$}  {:>10}  {:>10}  {:>10}",
        "status", "audit", "operation", "value", "threshold", "margin"
    );
    for a in &manifest.audits {
        let status = if a.pass { "PASS" } else { "FAIL" };
        let _ = writeln!(
            s,
            "{status:<6} {:<name_w$}  {:<op_w$}  {:>10}  {:>10}  {:>10}",
            a.name,
            a.operation,
            fmt_num(a.value),
            fmt_num(a.threshold),
            fmt_num(a.margin)
        );
    }
    let pass = manifest.audits.iter().all(|a| a.pass);
    let failed = manifest.audits.iter().filter(|a| !a.pass).count();
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "{} audits, {failed} failed: {}",
        manifest.audits.len(),
        if pass { "PASS" } else { "FAIL" }
    );
    let tables: Vec<&str> = manifest
        .files
        .iter()
        .map(|f| f.path.as_str())
        .filter(|p| p.ends_with(".csv") && !p.contains('/'))
        .collect();
    let traces = manifest
        .files
        .iter()
        .filter(|f| f.path.starts_with("traces/"))
        .count();
    if !tables.is_empty() || traces > 0 {
        let _ = writeln!(s);
        let _ = writeln!(s, "csv outputs:");
        for t in tables {
            let _ = writeln!(s, "  {}", dir.join(t).display());
        }
        if traces > 0 {
            let _ = writeln!(
                s,
                "  {} ({traces} energy traces)",
                dir.join("traces").display()
            );
        }
    }
    Ok(Rendered { text: s, pass })
}
