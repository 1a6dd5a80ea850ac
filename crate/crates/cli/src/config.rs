//! Flat `key = value` configuration with `[section]` headers.
//!
//! Every key has a default; the resolved table (defaults, then the file,
//! then command-line overrides) is echoed into the run manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chevron_core::model::InitialCondition;
use chevron_core::{Grid1D, LinearSolver, Parameters1D, Parameters2D};

use crate::CliError;

pub const DEFAULT_SEED: u64 = 20240611;
pub const DEFAULT_AMPLITUDE: &str = "0.2526";

/// Known keys: `(section.key, default, description)`. `auto` marks values
/// derived at run time.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("model.tau", "1", "relaxation time tau"),
    ("model.d1", "1", "director diffusion D1"),
    ("model.h", "0.1", "director damping h"),
    ("model.length", "100", "domain length L"),
    ("grid.n", "512", "number of intervals (n + 1 nodes)"),
    ("grid.dt", "0.1", "time step"),
    ("run.steps", "5000", "number of time steps"),
    ("run.solver", "direct", "linear solver: direct or cg"),
    ("run.cg_tol", "1e-10", "relative residual tolerance for cg"),
    ("run.cg_max_iter", "auto", "cg iteration cap (auto: 2 (n - 1) + 100)"),
    ("run.snapshot_stride", "1000", "write a snapshot every this many steps"),
    ("run.diagnostics_stride", "10", "write a diagnostics row every this many steps"),
    ("run.dissipative_slack", "0.05", "relative slack on the dissipative bound"),
    ("initial.kind", "oscillatory", "oscillatory, gaussian, zero or file"),
    ("initial.seed", "20240611", "seed of the oscillatory initial condition"),
    ("initial.amplitude", DEFAULT_AMPLITUDE, "amplitude of the initial condition"),
    ("initial.center", "auto", "gaussian center (auto: L/2)"),
    ("initial.width", "1", "gaussian width"),
    ("initial.path", "", "snapshot file for kind = file"),
    ("stabilize.mu", "auto", "feedback gain (auto: max(1, ||A0||^2))"),
    ("stabilize.k_modes", "auto", "number of controlled modes (auto: from the plan)"),
    ("stabilize.epsilon", "1e-6", "full-damping margin epsilon"),
    ("stabilize.stop_below", "1e-6", "stop once both raw norms fall below this (0: never)"),
    ("track.mu1", "auto", "amplitude gain (auto: 1 + 6 M0)"),
    ("track.mu2", "auto", "director gain (auto: max(0, 6 M0 - h))"),
    ("track.n1", "auto", "amplitude mode count (auto: smallest admissible)"),
    ("track.n2", "auto", "director mode count (auto: smallest admissible)"),
    ("track.m0", "auto", "gradient bound M0 (auto: estimated on a reference pre-run)"),
    ("track.prerun_steps", "auto", "steps of the M0 pre-run (auto: run.steps)"),
    ("track.transient_fraction", "0.1", "fraction of the run skipped by the decay check"),
    ("reference.kind", "oscillatory", "reference initial condition kind"),
    ("reference.seed", "20240611", "reference seed"),
    ("reference.amplitude", DEFAULT_AMPLITUDE, "reference amplitude"),
    ("reference.center", "auto", "reference gaussian center"),
    ("reference.width", "1", "reference gaussian width"),
    ("reference.path", "", "reference snapshot file"),
    ("reference.settle_steps", "5000", "free steps applied to the reference before tracking"),
    ("modes.dimension", "1", "1: stabilization plan, 2: two-dimensional mode count"),
    ("modes.d2", "1", "2D: diffusion D2"),
    ("modes.c1", "0.5", "2D: c1"),
    ("modes.c2", "1", "2D: c2"),
    ("modes.beta", "0", "2D: beta"),
    ("modes.lx", "3.141592653589793", "2D: Lx"),
    ("modes.ly", "3.141592653589793", "2D: Ly"),
    ("modes.max_index", "64", "2D: largest mode index enumerated per direction"),
];

/// Help text listing every key.
pub fn keys_help() -> String {
    let mut out = String::from("Configuration keys (section.key = default):\n");
    for (key, default, help) in KEYS {
        let shown = if default.is_empty() { "\"\"" } else { default };
        let _ = writeln!(out, "  {key:<26} {shown:<18} {help}");
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            values: KEYS
                .iter()
                .map(|(k, v, _)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }
}

fn known(key: &str) -> bool {
    KEYS.iter().any(|(k, _, _)| *k == key)
}

fn parse_error(origin: &str, line: usize, message: impl Into<String>) -> CliError {
    CliError::Config(format!("{origin}:{line}: {}", message.into()))
}

impl Config {
    pub fn parse(text: &str, origin: &str) -> Result<Self, CliError> {
        let mut cfg = Config::default();
        let mut section = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| parse_error(origin, line_no, "unterminated section header"))?
                    .trim();
                if !KEYS.iter().any(|(k, _, _)| k.split('.').next() == Some(name)) {
                    return Err(parse_error(origin, line_no, format!("unknown section [{name}]")));
                }
                section = name.to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_error(origin, line_no, "expected key = value"))?;
            let key = key.trim();
            if section.is_empty() {
                return Err(parse_error(origin, line_no, format!("key '{key}' outside a section")));
            }
            let full = format!("{section}.{key}");
            if !known(&full) {
                return Err(parse_error(origin, line_no, format!("unknown key '{full}'")));
            }
            cfg.values.insert(full, value.trim().to_string());
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Applies `section.key=value`.
    pub fn set_override(&mut self, assignment: &str) -> Result<(), CliError> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override '{assignment}' is not key=value")))?;
        self.set(key.trim(), value.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        if !known(key) {
            return Err(CliError::Config(format!("unknown key '{key}'")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    pub fn entries(&self) -> impl Iterator<Item = (&String, &String)> {
        self.values.iter()
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<T, CliError> {
        let raw = self.raw(key);
        raw.parse()
            .map_err(|_| CliError::Config(format!("{key}: cannot parse '{raw}'")))
    }

    /// `None` for `auto`.
    fn get_auto<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        if self.raw(key) == "auto" {
            Ok(None)
        } else {
            self.get(key).map(Some)
        }
    }

    pub fn params(&self) -> Result<Parameters1D, CliError> {
        Ok(Parameters1D::new(
            self.get("model.tau")?,
            self.get("model.d1")?,
            self.get("model.h")?,
            self.get("model.length")?,
        )?)
    }

    pub fn grid(&self) -> Result<Grid1D, CliError> {
        Ok(Grid1D::new(
            self.get("grid.n")?,
            self.get("model.length")?,
            self.get("grid.dt")?,
        )?)
    }

    pub fn steps(&self) -> Result<u64, CliError> {
        self.get("run.steps")
    }

    pub fn solver(&self) -> Result<LinearSolver, CliError> {
        let solver = match self.raw("run.solver") {
            "direct" => LinearSolver::Direct,
            "cg" => {
                let n: usize = self.get("grid.n")?;
                LinearSolver::Cg {
                    tol: self.get("run.cg_tol")?,
                    max_iter: self.get_auto("run.cg_max_iter")?.unwrap_or(2 * n + 100),
                }
            }
            other => {
                return Err(CliError::Config(format!(
                    "run.solver must be direct or cg, got '{other}'"
                )))
            }
        };
        solver.validate()?;
        Ok(solver)
    }

    pub fn stride(&self, key: &str) -> Result<u64, CliError> {
        let v: u64 = self.get(key)?;
        if v == 0 {
            return Err(CliError::Config(format!("{key} must be positive")));
        }
        Ok(v)
    }

    pub fn real(&self, key: &str) -> Result<f64, CliError> {
        self.get(key)
    }

    pub fn real_auto(&self, key: &str) -> Result<Option<f64>, CliError> {
        self.get_auto(key)
    }

    pub fn count_auto(&self, key: &str) -> Result<Option<usize>, CliError> {
        self.get_auto(key)
    }

    pub fn count(&self, key: &str) -> Result<usize, CliError> {
        self.get(key)
    }

    /// Initial condition from the `initial` or `reference` section.
    pub fn initial_condition(&self, section: &str) -> Result<InitialCondition, CliError> {
        let key = |k: &str| format!("{section}.{k}");
        Ok(match self.raw(&key("kind")) {
            "oscillatory" => InitialCondition::Oscillatory {
                seed: self.get(&key("seed"))?,
                amplitude: self.get(&key("amplitude"))?,
            },
            "gaussian" => {
                let length: f64 = self.get("model.length")?;
                InitialCondition::Gaussian {
                    center: self.get_auto(&key("center"))?.unwrap_or(0.5 * length),
                    width: self.get(&key("width"))?,
                    amplitude: self.get(&key("amplitude"))?,
                }
            }
            "zero" => InitialCondition::Zero,
            "file" => {
                let path = self.raw(&key("path"));
                if path.is_empty() {
                    return Err(CliError::Config(format!("{} is required for kind = file", key("path"))));
                }
                InitialCondition::FromFile(PathBuf::from(path))
            }
            other => {
                return Err(CliError::Config(format!(
                    "{}: unknown kind '{other}'",
                    key("kind")
                )))
            }
        })
    }

    pub fn params_2d(&self) -> Result<Parameters2D, CliError> {
        Ok(Parameters2D::new(
            self.get("model.tau")?,
            self.get("model.d1")?,
            self.get("modes.d2")?,
            self.get("model.h")?,
            self.get("modes.c1")?,
            self.get("modes.c2")?,
            self.get("modes.beta")?,
            self.get("modes.lx")?,
            self.get("modes.ly")?,
        )?)
    }

    /// The resolved table as config-file text.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut current = "";
        for (key, value) in &self.values {
            let (section, name) = key.split_once('.').unwrap_or(("", key));
            if section != current {
                if !out.is_empty() {
                    out.push('\n');
                }
                let _ = writeln!(out, "[{section}]");
                current = section;
            }
            let _ = writeln!(out, "{name} = {value}");
        }
        out
    }
}
