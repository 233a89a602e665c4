//! Config loading and artifact writing.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use htlcgp_core::protocol::{ProtocolError, ScenarioError};
use htlcgp_experiments::ExperimentError;

pub const SEED_ENV: &str = "HTLCGP_SEED";

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad input file: the message carries the line and column when the
    /// parser reports one.
    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Parses `path` as TOML or JSON: by extension, else JSON when the first
/// non-blank character is `{`.
pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(io(path))?;
    let json = match path.extension().and_then(|e| e.to_str()) {
        Some("json") => true,
        Some("toml") => false,
        _ => text.trim_start().starts_with('{'),
    };
    let message = if json {
        match serde_json::from_str(&text) {
            Ok(v) => return Ok(v),
            // the message already ends with the line and column
            Err(e) => e.to_string(),
        }
    } else {
        match toml::from_str(&text) {
            Ok(v) => return Ok(v),
            Err(e) => match e.span() {
                Some(span) => {
                    let (line, column) = line_col(&text, span.start);
                    format!("line {line} column {column}: {}", e.message())
                }
                None => e.message().to_string(),
            },
        }
    };
    Err(CliError::Config {
        path: path.to_path_buf(),
        message,
    })
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.chars().rev().take_while(|&c| c != '\n').count() + 1;
    (line, column)
}

/// Seed precedence: command-line flag, then `HTLCGP_SEED`, then the config.
pub fn resolve_seed(flag: Option<u64>, configured: u64) -> Result<u64, CliError> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(configured),
    }
}

/// Provenance block embedded in every artifact of a run.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest<C> {
    pub subcommand: &'static str,
    pub config: C,
    pub seed: u64,
    /// Artifact file names inside the output directory. The directory itself
    /// is left out so reruns elsewhere stay byte-identical.
    pub outputs: Vec<String>,
    pub tool_version: &'static str,
}

impl<C> RunManifest<C> {
    pub fn new(subcommand: &'static str, config: C, seed: u64, outputs: &[&str]) -> Self {
        RunManifest {
            subcommand,
            config,
            seed,
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
            tool_version: env!("CARGO_PKG_VERSION"),
        }
    }
}

pub fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io(dir))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(io(path))
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("artifact types serialize")
}

pub fn to_pretty_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("artifact types serialize");
    s.push('\n');
    s
}
