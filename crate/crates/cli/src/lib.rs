//! Command-line front end for `chevron-core`: configuration, run
//! orchestration and output files.

pub mod commands;
pub mod config;
pub mod output;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use commands::Format;
pub use config::Config;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] chevron_core::Error),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("invariant breach: {0}")]
    Invariant(String),
}

impl CliError {
    /// 2 configuration, 3 solver failure, 4 invariant breach.
    pub fn exit_code(&self) -> i32 {
        use chevron_core::Error as E;
        match self {
            CliError::Config(_) | CliError::Io { .. } => 2,
            CliError::Invariant(_) => 4,
            CliError::Core(e) => match e {
                E::Invariant(_) => 4,
                E::Step { source, .. } if matches!(**source, E::Invariant(_)) => 4,
                E::Step { .. } | E::SingularPivot { .. } | E::NotConverged { .. } => 3,
                _ => 2,
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunCommand {
    Simulate,
    Stabilize,
    Track,
}

impl RunCommand {
    pub fn name(self) -> &'static str {
        match self {
            RunCommand::Simulate => "simulate",
            RunCommand::Stabilize => "stabilize",
            RunCommand::Track => "track",
        }
    }
}

/// Runs a time-stepping command and writes the manifest, also when the run
/// fails part way.
pub fn execute(command: RunCommand, cfg: &Config, out: &Path) -> Result<commands::Summary, CliError> {
    let result = match command {
        RunCommand::Simulate => commands::simulate(cfg, out),
        RunCommand::Stabilize => commands::stabilize(cfg, out),
        RunCommand::Track => commands::track(cfg, out),
    };
    if out.is_dir() {
        let bundle = output::Bundle { dir: out.to_path_buf() };
        let (status, summary) = match &result {
            Ok(s) => ("ok".to_string(), s.clone()),
            Err(e) => (format!("failed (exit {}): {e}", e.exit_code()), Vec::new()),
        };
        bundle.write_manifest(command.name(), &status, cfg, &summary)?;
    }
    result
}

/// Expands `section.key=v1,v2,...` into one config and output directory per value.
pub fn sweep_plan(base: &Config, spec: &str, out: &Path) -> Result<Vec<(Config, PathBuf)>, CliError> {
    let (key, values) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("sweep '{spec}' is not key=v1,v2,...")))?;
    let key = key.trim();
    let mut plan = Vec::new();
    for value in values.split(',').map(str::trim).filter(|v| !v.is_empty()) {
        let mut cfg = base.clone();
        cfg.set(key, value)?;
        plan.push((cfg, out.join(format!("{key}={value}"))));
    }
    if plan.is_empty() {
        return Err(CliError::Config(format!("sweep '{spec}' lists no values")));
    }
    Ok(plan)
}
