//! Output bundle: diagnostics CSV, snapshots and the manifest.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chevron_core::diagnostics::DiagnosticsRecord;
use chevron_core::simulation::TrackingRecord;
use chevron_core::snapshot::{fmt_f64, write_snapshot};
use chevron_core::{Grid1D, State1D};
use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::CliError;

pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const TRACKING_FILE: &str = "tracking.csv";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const SNAPSHOT_DIR: &str = "snapshots";

pub const DIAGNOSTICS_HEADER: &str = "step,time,l2_a,l2_phi,raw_l2_a,raw_l2_phi,h1_a,h1_phi,max_abs_a,lyapunov,\
growth_residual_a,growth_residual_phi,energy_residual_a,energy_residual_phi,control_energy";

pub const TRACKING_HEADER: &str = "step,time,err_a,err_phi,error_functional,control_energy";

pub fn io_error(path: &Path, source: std::io::Error) -> CliError {
    CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn diagnostics_row(r: &DiagnosticsRecord) -> String {
    let vals = [
        r.time,
        r.l2_a,
        r.l2_phi,
        r.raw_l2_a,
        r.raw_l2_phi,
        r.h1_a,
        r.h1_phi,
        r.max_abs_a,
        r.lyapunov,
        r.growth_residual_a,
        r.growth_residual_phi,
        r.energy_residual_a,
        r.energy_residual_phi,
        r.control_energy,
    ];
    let mut row = r.step.to_string();
    for v in vals {
        row.push(',');
        row.push_str(&fmt_f64(v));
    }
    row
}

pub fn tracking_row(r: &TrackingRecord) -> String {
    let vals = [r.time, r.err_a, r.err_phi, r.error_functional, r.control_energy];
    let mut row = r.step.to_string();
    for v in vals {
        row.push(',');
        row.push_str(&fmt_f64(v));
    }
    row
}

/// Line-oriented CSV file that remembers the last step written.
pub struct CsvSink {
    path: PathBuf,
    out: BufWriter<File>,
    last_step: Option<u64>,
}

impl CsvSink {
    pub fn create(path: PathBuf, header: &str) -> Result<Self, CliError> {
        let file = File::create(&path).map_err(|e| io_error(&path, e))?;
        let mut sink = Self {
            out: BufWriter::new(file),
            path,
            last_step: None,
        };
        writeln!(sink.out, "{header}").map_err(|e| io_error(&sink.path, e))?;
        Ok(sink)
    }

    pub fn write(&mut self, step: u64, row: &str) -> Result<(), CliError> {
        writeln!(self.out, "{row}").map_err(|e| io_error(&self.path, e))?;
        self.last_step = Some(step);
        Ok(())
    }

    pub fn last_step(&self) -> Option<u64> {
        self.last_step
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.out.flush().map_err(|e| io_error(&self.path, e))
    }
}

/// Output directory with its snapshot subdirectory.
pub struct Bundle {
    pub dir: PathBuf,
}

impl Bundle {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        let snaps = dir.join(SNAPSHOT_DIR);
        fs::create_dir_all(&snaps).map_err(|e| io_error(&snaps, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
        })
    }

    pub fn csv(&self, name: &str, header: &str) -> Result<CsvSink, CliError> {
        CsvSink::create(self.dir.join(name), header)
    }

    pub fn snapshot(&self, prefix: &str, state: &State1D, grid: &Grid1D) -> Result<(), CliError> {
        let path = self
            .dir
            .join(SNAPSHOT_DIR)
            .join(format!("{prefix}_{:08}.csv", state.step));
        Ok(write_snapshot(&path, state, grid)?)
    }

    /// SHA-256 over every file except the manifest, in path order, each
    /// prefixed by its relative path.
    pub fn checksum(&self) -> Result<String, CliError> {
        let mut files = Vec::new();
        collect_files(&self.dir, &self.dir, &mut files)?;
        files.retain(|p| p != Path::new(MANIFEST_FILE));
        files.sort();
        let mut hasher = Sha256::new();
        for rel in files {
            let path = self.dir.join(&rel);
            let bytes = fs::read(&path).map_err(|e| io_error(&path, e))?;
            hasher.update(rel.to_string_lossy().as_bytes());
            hasher.update(b"\n");
            hasher.update(&bytes);
        }
        Ok(hex::encode(hasher.finalize()))
    }

    pub fn write_manifest(
        &self,
        command: &str,
        status: &str,
        config: &Config,
        summary: &[(String, String)],
    ) -> Result<(), CliError> {
        let checksum = self.checksum()?;
        let mut text = String::from("# chevron run manifest\n");
        text.push_str(&format!("command = {command}\n"));
        text.push_str(&format!("status = {status}\n"));
        text.push_str(&format!("chevron_core_version = {}\n", chevron_core::VERSION));
        text.push_str(&format!("chevron_cli_version = {}\n", env!("CARGO_PKG_VERSION")));
        text.push_str(&format!("checksum_sha256 = {checksum}\n"));
        text.push_str("\n[summary]\n");
        for (k, v) in summary {
            text.push_str(&format!("{k} = {v}\n"));
        }
        for line in config.to_text().lines() {
            match line.strip_prefix('[') {
                Some(section) => text.push_str(&format!("\n[config.{section}\n")),
                None if line.is_empty() => {}
                None => {
                    text.push_str(line);
                    text.push('\n');
                }
            }
        }
        let path = self.dir.join(MANIFEST_FILE);
        fs::write(&path, text).map_err(|e| io_error(&path, e))
    }
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let entries = fs::read_dir(dir).map_err(|e| io_error(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| io_error(dir, e))?;
        let path = entry.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            out.push(path.strip_prefix(root).unwrap_or(&path).to_path_buf());
        }
    }
    Ok(())
}
