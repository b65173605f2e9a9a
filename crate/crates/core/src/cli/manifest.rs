//! Run manifests: enough to rerun a command and get the same bytes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CliError;

pub const MANIFEST_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    /// Canonical path of the file read.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema: u32,
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    /// Arguments after the program name, input paths made absolute and the
    /// `--out` option removed.
    pub args: Vec<String>,
    pub seed: Option<u64>,
    pub inputs: Vec<InputRecord>,
    /// File name given to `--out` (a file, or a directory for sweeps).
    pub out: String,
    /// Artifacts written, relative to the output's directory.
    pub outputs: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Reads an input file and records its hash.
pub fn read_input(path: &Path, inputs: &mut Vec<InputRecord>) -> Result<(String, String), CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::missing(path, &e))?;
    let canonical = fs::canonicalize(path).unwrap_or_else(|_| path.to_path_buf()).to_string_lossy().into_owned();
    let record = InputRecord { path: canonical.clone(), sha256: sha256_hex(text.as_bytes()) };
    if !inputs.contains(&record) {
        inputs.push(record);
    }
    Ok((text, canonical))
}

/// Rewrites recorded arguments: drops `--out` and its value and swaps every
/// input path for its canonical form.
pub fn normalize_args(argv: &[String], inputs: &[(String, String)]) -> Vec<String> {
    let swap = |s: &str| {
        inputs.iter().find(|(given, _)| given == s).map_or_else(|| s.to_string(), |(_, c)| c.clone())
    };
    let mut out = Vec::new();
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        if a == "--out" {
            it.next();
        } else if a.starts_with("--out=") {
            continue;
        } else if let Some((flag, value)) = a.split_once('=').filter(|(f, _)| f.starts_with("--")) {
            out.push(format!("{flag}={}", swap(value)));
        } else {
            out.push(swap(a));
        }
    }
    out
}

/// `curve.csv` → `curve.manifest.json`; a sweep directory gets
/// `manifest.json` inside it.
pub fn manifest_path(out: &Path, is_dir: bool) -> PathBuf {
    if is_dir {
        return out.join("manifest.json");
    }
    let stem = out.file_stem().map_or_else(|| "output".into(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}.manifest.json"))
}

pub fn load_manifest(path: &Path) -> Result<Manifest, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::missing(path, &e))?;
    let m: Manifest = super::parse_json(&text, &path.display().to_string())?;
    if m.schema != MANIFEST_SCHEMA || m.tool != "xecrel" {
        return Err(CliError::schema(
            &path.display().to_string(),
            "schema",
            format!("not an xecrel manifest of schema {MANIFEST_SCHEMA}"),
        ));
    }
    Ok(m)
}

/// Fails if any recorded input changed since the manifest was written.
pub fn verify_inputs(m: &Manifest) -> Result<(), CliError> {
    for input in &m.inputs {
        let bytes = fs::read(&input.path).map_err(|e| CliError::missing(Path::new(&input.path), &e))?;
        if sha256_hex(&bytes) != input.sha256 {
            return Err(CliError {
                code: 2,
                kind: "input_changed",
                message: format!("{} no longer matches the recorded sha256", input.path),
                file: Some(input.path.clone()),
                path: None,
            });
        }
    }
    Ok(())
}
