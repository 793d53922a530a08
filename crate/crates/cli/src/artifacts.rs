//! CLI-side artifacts: the dataset manifest, convergence and descent CSVs,
//! and the per-run stamp. Library formats (fields, checkpoints, losses,
//! profiles, bases) live in `latfield::io`; everything here follows the same
//! conventions — versioned headers, 17 significant digits.

use latfield::error::{Error, Result};
use latfield::lattice::StencilKind;
use latfield::solver::ConvergenceReport;

const MANIFEST_HEADER: &str = "# latfield manifest v1";
const CONVERGENCE_HEADER: &str = "# latfield convergence v1";
const DESCENT_HEADER: &str = "# latfield descent v1";
const RUN_HEADER: &str = "# latfield run v1";

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn stencil_label(kind: StencilKind) -> &'static str {
    match kind {
        StencilKind::Pts3Seven => "pts3-seven",
        StencilKind::Pts4Nine => "pts4-nine",
        StencilKind::Pts2Three => "pts2-three",
    }
}

fn parse_stencil(label: &str) -> Result<StencilKind> {
    match label {
        "pts3-seven" => Ok(StencilKind::Pts3Seven),
        "pts4-nine" => Ok(StencilKind::Pts4Nine),
        "pts2-three" => Ok(StencilKind::Pts2Three),
        _ => Err(Error::Parse(format!("`{label}` is not a stencil kind"))),
    }
}

/// What a dataset directory contains and how its tuples were extracted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub stencil: StencilKind,
    pub stride: usize,
    pub tuples: usize,
    pub files: Vec<String>,
}

pub fn write_manifest(m: &Manifest) -> String {
    let mut out = String::new();
    out.push_str(MANIFEST_HEADER);
    out.push('\n');
    out.push_str(&format!("stencil {}\n", stencil_label(m.stencil)));
    out.push_str(&format!("stride {}\n", m.stride));
    out.push_str(&format!("trajectories {}\n", m.files.len()));
    out.push_str(&format!("tuples {}\n", m.tuples));
    for f in &m.files {
        out.push_str(&format!("file {f}\n"));
    }
    out
}

pub fn read_manifest(text: &str) -> Result<Manifest> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != MANIFEST_HEADER {
        return Err(Error::Parse(format!("expected `{MANIFEST_HEADER}`, found `{header}`")));
    }
    let mut keyed = |key: &str| -> Result<String> {
        let line = lines
            .next()
            .ok_or_else(|| Error::Parse(format!("manifest ends before `{key}`")))?;
        match line.split_once(' ') {
            Some((k, v)) if k == key => Ok(v.to_string()),
            _ => Err(Error::Parse(format!("expected a `{key}` line, found `{line}`"))),
        }
    };
    let stencil = parse_stencil(&keyed("stencil")?)?;
    let stride = keyed("stride")?
        .parse()
        .map_err(|_| Error::Parse("manifest stride is not a count".into()))?;
    let trajectories: usize = keyed("trajectories")?
        .parse()
        .map_err(|_| Error::Parse("manifest trajectory count is not a count".into()))?;
    let tuples = keyed("tuples")?
        .parse()
        .map_err(|_| Error::Parse("manifest tuple count is not a count".into()))?;
    let mut files = Vec::with_capacity(trajectories);
    for _ in 0..trajectories {
        files.push(keyed("file")?);
    }
    Ok(Manifest { stencil, stride, tuples, files })
}

/// Newton diagnostics of a propagation run, one row per computed slice.
/// `first_slice` is the time index of the first computed row.
pub fn write_convergence(reports: &[ConvergenceReport], first_slice: usize) -> String {
    let mut out = String::new();
    out.push_str(CONVERGENCE_HEADER);
    out.push('\n');
    out.push_str("slice,iterations,converged,residual,rho_star\n");
    for (k, r) in reports.iter().enumerate() {
        let residual = r.residual_norms.last().copied().unwrap_or(f64::NAN);
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            first_slice + k,
            r.iterations,
            r.converged,
            fmt(residual),
            fmt(r.rho_star)
        ));
    }
    out
}

/// Objective trace of a travelling-wave search.
pub fn write_descent(history: &[f64]) -> String {
    let mut out = String::new();
    out.push_str(DESCENT_HEADER);
    out.push('\n');
    out.push_str("step,objective\n");
    for (k, v) in history.iter().enumerate() {
        out.push_str(&format!("{k},{}\n", fmt(*v)));
    }
    out
}

/// Records the effective command-line knobs next to the verbatim config
/// echo, so a directory documents exactly how to reproduce itself.
pub fn write_run_stamp(command: &str, knobs: &[(&str, String)]) -> String {
    let mut out = String::new();
    out.push_str(RUN_HEADER);
    out.push('\n');
    out.push_str(&format!("command {command}\n"));
    for (k, v) in knobs {
        out.push_str(&format!("{k} {v}\n"));
    }
    out
}
