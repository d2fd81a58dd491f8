//! Run directories: in-memory outcomes, manifest and content hashes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST: &str = "manifest.json";

/// JSON has no NaN or infinity; they are written as `null` and read back as NaN.
fn nullable<'de, D: serde::Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

/// One pass/fail row of a run, tagged with the operation that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Audit {
    pub name: String,
    /// `module::operation`.
    pub operation: String,
    #[serde(deserialize_with = "nullable")]
    pub value: f64,
    #[serde(deserialize_with = "nullable")]
    pub threshold: f64,
    /// `threshold - value` for upper bounds; positive means slack.
    #[serde(deserialize_with = "nullable")]
    pub margin: f64,
    pub pass: bool,
}

impl Audit {
    /// Passes when `value <= threshold`.
    pub fn upper(name: impl Into<String>, operation: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            operation: operation.into(),
            value,
            threshold,
            margin: threshold - value,
            pass: value <= threshold,
        }
    }

    /// Passes when `value >= threshold`.
    pub fn lower(name: impl Into<String>, operation: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            operation: operation.into(),
            value,
            threshold,
            margin: value - threshold,
            pass: value >= threshold,
        }
    }

    /// Boolean check; `value` is 1 on pass.
    pub fn check(name: impl Into<String>, operation: &str, pass: bool) -> Self {
        let v = if pass { 1.0 } else { 0.0 };
        Self {
            name: name.into(),
            operation: operation.into(),
            value: v,
            threshold: 1.0,
            margin: v - 1.0,
            pass,
        }
    }
}

/// Everything a run produces, before it touches the disk.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub files: Vec<(String, Vec<u8>)>,
    pub audits: Vec<Audit>,
}

impl Outcome {
    pub fn file(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    pub fn json<T: Serialize>(
        &mut self,
        name: impl Into<String>,
        value: &T,
    ) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.file(name, bytes);
        Ok(())
    }

    pub fn audit(&mut self, a: Audit) {
        self.audits.push(a);
    }

    pub fn pass(&self) -> bool {
        self.audits.iter().all(|a| a.pass)
    }

    pub fn audit_named(&self, name: &str) -> Option<&Audit> {
        self.audits.iter().find(|a| a.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: String,
    pub seed: u64,
    pub version: String,
    pub pass: bool,
    pub audits: Vec<Audit>,
    pub files: Vec<FileEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Manifest {
    pub fn new(experiment: &str, seed: u64, outcome: &Outcome) -> Self {
        let mut files: Vec<FileEntry> = outcome
            .files
            .iter()
            .map(|(p, b)| FileEntry {
                path: p.clone(),
                bytes: b.len() as u64,
                sha256: sha256_hex(b),
            })
            .collect();
        files.sort_by(|a, b| a.path.cmp(&b.path));
        Self {
            experiment: experiment.into(),
            seed,
            version: env!("CARGO_PKG_VERSION").into(),
            pass: outcome.pass(),
            audits: outcome.audits.clone(),
            files,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, CliError> {
        let mut b = serde_json::to_vec_pretty(self)?;
        b.push(b'\n');
        Ok(b)
    }

    pub fn read(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(MANIFEST);
        let text = fs::read(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Ok(serde_json::from_slice(&text)?)
    }
}

/// Writes the outcome and its manifest into `dir`, which must be absent or empty.
pub fn write_run(
    dir: &Path,
    experiment: &str,
    seed: u64,
    outcome: &Outcome,
) -> Result<Manifest, CliError> {
    let io = |e: std::io::Error, p: &Path| CliError::Io(format!("{}: {e}", p.display()));
    if dir.exists() && fs::read_dir(dir).map_err(|e| io(e, dir))?.next().is_some() {
        return Err(CliError::Io(format!(
            "{}: output directory is not empty",
            dir.display()
        )));
    }
    fs::create_dir_all(dir).map_err(|e| io(e, dir))?;
    for (name, bytes) in &outcome.files {
        let path = dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| io(e, parent))?;
        }
        fs::write(&path, bytes).map_err(|e| io(e, &path))?;
    }
    let manifest = Manifest::new(experiment, seed, outcome);
    let path = dir.join(MANIFEST);
    fs::write(&path, manifest.to_bytes()?).map_err(|e| io(e, &path))?;
    Ok(manifest)
}

/// CSV text from a header and rows of numbers (shortest round-trip formatting).
pub fn csv(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Vec<u8> {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        let line: Vec<String> = r.iter().map(|x| format!("{x:e}")).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s.into_bytes()
}
