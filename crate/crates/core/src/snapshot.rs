//! Snapshot file format: one CSV row per node with columns
//! `x, re_a, im_a, abs_a, phi`, floats written with 17 significant digits.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{Grid1D, State1D};

pub const SNAPSHOT_HEADER: &str = "x,re_a,im_a,abs_a,phi";

/// Formats a float with 17 significant digits, enough to round-trip any f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn format_snapshot(state: &State1D, grid: &Grid1D) -> String {
    let mut out = String::with_capacity((grid.n + 2) * 120);
    out.push_str(SNAPSHOT_HEADER);
    out.push('\n');
    for (i, (a, phi)) in state.a.iter().zip(&state.phi).enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            fmt_f64(grid.x(i)),
            fmt_f64(a.re),
            fmt_f64(a.im),
            fmt_f64(a.norm()),
            fmt_f64(*phi)
        );
    }
    out
}

pub fn write_snapshot(path: &Path, state: &State1D, grid: &Grid1D) -> Result<()> {
    std::fs::write(path, format_snapshot(state, grid)).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn parse_snapshot(text: &str, origin: &str, grid: &Grid1D) -> Result<State1D> {
    let err = |line: usize, message: String| Error::Parse {
        path: origin.to_string(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == SNAPSHOT_HEADER => {}
        Some((_, h)) => return Err(err(1, format!("expected header `{SNAPSHOT_HEADER}`, found `{h}`"))),
        None => return Err(err(1, "empty snapshot".into())),
    }
    let mut a = Vec::with_capacity(grid.n + 1);
    let mut phi = Vec::with_capacity(grid.n + 1);
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 5 {
            return Err(err(lineno, format!("expected 5 columns, found {}", cols.len())));
        }
        let mut vals = [0.0; 5];
        for (v, c) in vals.iter_mut().zip(&cols) {
            *v = c
                .parse::<f64>()
                .map_err(|e| err(lineno, format!("bad number `{c}`: {e}")))?;
        }
        a.push(Complex64::new(vals[1], vals[2]));
        phi.push(vals[4]);
    }
    if a.len() != grid.n + 1 {
        return Err(err(
            text.lines().count(),
            format!("expected {} node rows, found {}", grid.n + 1, a.len()),
        ));
    }
    State1D::from_fields(a, phi, grid).map_err(|e| err(0, e.to_string()))
}

pub fn read_snapshot(path: &Path, grid: &Grid1D) -> Result<State1D> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_snapshot(&text, &path.display().to_string(), grid)
}
