//! Command-line front end.
//!
//! [`run`] parses arguments, executes one subcommand, writes its artifacts
//! and a manifest, and returns the process exit code:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success (an infeasible selection is a success with `feasible: false`) |
//! | 1 | the computation failed (infeasible partition, quadrature failure, …) |
//! | 2 | usage error, missing input file, or input that violates its schema |
//! | 3 | numeric non-convergence; artifacts are still written |
//! | 4 | an output path cannot be written |
//!
//! Failures print `{"error": {...}, "exit_code": n}` on stderr. Success prints
//! a JSON line naming the artifacts on stdout.

pub mod commands;
pub mod emit;
pub mod manifest;
pub mod sweeps;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::Parser;
use serde::Serialize;

use self::commands::{Command, Produced};
use self::emit::{json_bytes, write_bytes};
use self::manifest::{manifest_path, normalize_args, InputRecord, Manifest, MANIFEST_SCHEMA};

/// Default output directory when `--out` is not given.
pub const ENV_OUTPUT_DIR: &str = "XECREL_OUTPUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "xecrel", version, about = "Reliability of streaming inference on volatile edge devices")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CliError {
    #[serde(skip)]
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    /// JSON path of the offending field, for schema errors.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

impl CliError {
    fn new(code: i32, kind: &'static str, message: impl Into<String>) -> Self {
        Self { code, kind, message: message.into(), file: None, path: None }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(2, "usage", message)
    }

    pub fn schema(file: &str, path: &str, message: impl Into<String>) -> Self {
        Self { file: Some(file.into()), path: Some(path.into()), ..Self::new(2, "schema", message) }
    }

    pub fn missing(file: &Path, e: &std::io::Error) -> Self {
        let f = file.display().to_string();
        Self { file: Some(f.clone()), ..Self::new(2, "missing_file", format!("cannot read {f}: {e}")) }
    }

    pub fn failed(message: impl Into<String>) -> Self {
        Self::new(1, "computation", message)
    }

    pub fn infeasible(message: impl Into<String>) -> Self {
        Self::new(1, "infeasible", message)
    }

    pub fn non_convergence(message: impl Into<String>) -> Self {
        Self::new(3, "non_convergence", message)
    }

    pub fn unwritable(file: &Path, e: &std::io::Error) -> Self {
        let f = file.display().to_string();
        Self { file: Some(f.clone()), ..Self::new(4, "unwritable", format!("cannot write {f}: {e}")) }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self, "exit_code": self.code }).to_string()
    }
}

macro_rules! computation_errors {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::failed(e.to_string())
            }
        }
    )*};
}

computation_errors!(
    crate::reliability::ReliabilityError,
    crate::probkernel::ModelError,
    crate::mcoracle::McError,
    crate::estimation::FitError,
    crate::simharness::SimError
);

impl From<crate::system::SystemError> for CliError {
    fn from(e: crate::system::SystemError) -> Self {
        use crate::system::SystemError as E;
        match e {
            E::Infeasible(_) => CliError::infeasible(e.to_string()),
            E::NonConvergence { .. } => CliError::non_convergence(e.to_string()),
            other => CliError::failed(other.to_string()),
        }
    }
}

/// Deserializes JSON, reporting the path of the first offending field.
pub fn parse_json<T: serde::de::DeserializeOwned>(text: &str, file: &str) -> Result<T, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::schema(file, &path, e.into_inner().to_string())
    })
}

/// Inputs read during a run, for the manifest.
#[derive(Debug, Default)]
pub struct Ctx {
    pub inputs: Vec<InputRecord>,
    given: Vec<(String, String)>,
    pub seed: Option<u64>,
}

impl Ctx {
    pub fn read(&mut self, path: &Path) -> Result<String, CliError> {
        let (text, canonical) = manifest::read_input(path, &mut self.inputs)?;
        self.given.push((path.to_string_lossy().into_owned(), canonical));
        Ok(text)
    }

    pub fn load<T: serde::de::DeserializeOwned>(&mut self, path: &Path) -> Result<T, CliError> {
        let text = self.read(path)?;
        parse_json(&text, &path.display().to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Success {
    pub status: &'static str,
    pub subcommand: String,
    pub outputs: Vec<String>,
    pub manifest: String,
}

/// Parses `argv` (program name first), runs the command and returns the exit
/// code. Messages go to stdout / stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<String> = argv.into_iter().map(|a| a.into().to_string_lossy().into_owned()).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            let err = CliError::usage(e.render().to_string().trim_end());
            eprintln!("{}", err.to_json());
            return err.code;
        }
    };
    match execute(cli.command, &argv[1..]) {
        Ok((ok, deferred)) => {
            println!("{}", serde_json::to_string(&ok).expect("success serializes"));
            match deferred {
                Some(err) => {
                    eprintln!("{}", err.to_json());
                    err.code
                }
                None => 0,
            }
        }
        Err(err) => {
            eprintln!("{}", err.to_json());
            err.code
        }
    }
}

fn default_out_dir() -> PathBuf {
    std::env::var_os(ENV_OUTPUT_DIR).map_or_else(|| PathBuf::from("."), PathBuf::from)
}

/// Runs a parsed command. `args` are the raw arguments after the program name.
pub fn execute(command: Command, args: &[String]) -> Result<(Success, Option<CliError>), CliError> {
    if let Command::Replay(r) = command {
        return replay(&r.manifest, r.out.as_deref());
    }
    let name = command.name().to_string();
    let is_dir = command.writes_directory();
    let out = command.out().map_or_else(|| default_out_dir().join(command.default_out_name()), Path::to_path_buf);
    let out_name = out
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .ok_or_else(|| CliError::usage(format!("--out {} has no file name", out.display())))?;

    let mut ctx = Ctx::default();
    let Produced { artifacts, deferred } = commands::dispatch(command, &mut ctx, &out_name)?;

    let base = if is_dir { out.clone() } else { out.parent().map(Path::to_path_buf).unwrap_or_default() };
    let mut written = Vec::new();
    for (file, bytes) in &artifacts {
        let p = base.join(file);
        write_bytes(&p, bytes)?;
        written.push(p.display().to_string());
    }
    let m = Manifest {
        schema: MANIFEST_SCHEMA,
        tool: "xecrel".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        subcommand: name.clone(),
        args: normalize_args(args, &ctx.given),
        seed: ctx.seed,
        inputs: ctx.inputs,
        out: out_name,
        outputs: artifacts.into_iter().map(|(f, _)| f).collect(),
    };
    let mp = manifest_path(&out, is_dir);
    write_bytes(&mp, &json_bytes(&m))?;
    Ok((Success { status: "ok", subcommand: name, outputs: written, manifest: mp.display().to_string() }, deferred))
}

/// Reruns a manifest's command into `out_dir` (default: the manifest's own
/// directory) after checking that its inputs are unchanged.
fn replay(manifest_file: &Path, out_dir: Option<&Path>) -> Result<(Success, Option<CliError>), CliError> {
    let m = manifest::load_manifest(manifest_file)?;
    manifest::verify_inputs(&m)?;
    let dir = match out_dir {
        Some(d) => d.to_path_buf(),
        None => {
            let parent = manifest_file.parent().map(Path::to_path_buf).unwrap_or_default();
            // a sweep's manifest sits inside its output directory
            if m.subcommand == "sweep" {
                parent.parent().map(Path::to_path_buf).unwrap_or_default()
            } else {
                parent
            }
        }
    };
    let mut argv = vec!["xecrel".to_string()];
    argv.extend(m.args.iter().cloned());
    argv.push("--out".into());
    argv.push(dir.join(&m.out).display().to_string());
    let cli = Cli::try_parse_from(&argv).map_err(|e| {
        CliError::schema(&manifest_file.display().to_string(), "args", e.render().to_string().trim_end())
    })?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(CliError::usage("a manifest cannot replay another replay"));
    }
    execute(cli.command, &argv[1..])
}
