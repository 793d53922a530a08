//! Text persistence with exact round-trips: fields, density checkpoints,
//! loss histories, wave profiles, and reduction bases.
//!
//! Every format is line-oriented under a versioned `# latfield <kind> v1`
//! header, and every float is written with 17 significant digits — enough to
//! reproduce the exact bit pattern on read-back, so written artifacts are
//! first-class experiment state, not lossy snapshots.

use std::path::Path;

use crate::density::{DensityModel, MlpDensity, Polynomial, SchrodingerDensity, WaveDensity};
use crate::error::{Error, Result};
use crate::lattice::{Field, Grid2D, SpatialBc};
use crate::mlp::{Activation, MlpSpec};
use crate::rom::PcaMap;
use crate::train::EpochStats;
use crate::tw::WaveProfile;
use nalgebra::DMatrix;

const FIELD_HEADER: &str = "# latfield field v1";
const DENSITY_HEADER: &str = "# latfield density v1";
const LOSSES_HEADER: &str = "# latfield losses v1";
const PROFILE_HEADER: &str = "# latfield profile v1";
const BASIS_HEADER: &str = "# latfield basis v1";

/// 17 significant digits: the shortest count that round-trips every f64.
fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_f64(token: &str, what: &str) -> Result<f64> {
    token
        .parse()
        .map_err(|_| Error::Parse(format!("{what}: `{token}` is not a number")))
}

fn parse_usize(token: &str, what: &str) -> Result<usize> {
    token
        .parse()
        .map_err(|_| Error::Parse(format!("{what}: `{token}` is not a count")))
}

fn parse_bool(token: &str, what: &str) -> Result<bool> {
    match token {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Parse(format!("{what}: `{token}` is not a flag"))),
    }
}

fn parse_bc(token: &str) -> Result<SpatialBc> {
    match token {
        "periodic" => Ok(SpatialBc::Periodic),
        "dirichlet" => Ok(SpatialBc::Dirichlet),
        _ => Err(Error::Parse(format!("`{token}` is not a boundary condition"))),
    }
}

fn parse_activation(token: &str) -> Result<Activation> {
    match token {
        "tanh" => Ok(Activation::Tanh),
        "softplus" => Ok(Activation::Softplus),
        _ => Err(Error::Parse(format!("`{token}` is not an activation"))),
    }
}

/// Strict line cursor: formats are fixed sequences of `key values…` lines.
struct Cursor<'a> {
    lines: std::str::Lines<'a>,
    consumed: usize,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str, header: &str) -> Result<Self> {
        let mut c = Cursor { lines: text.lines(), consumed: 0 };
        let first = c.line("header")?;
        if first != header {
            return Err(Error::Parse(format!("expected `{header}`, found `{first}`")));
        }
        Ok(c)
    }

    fn line(&mut self, what: &str) -> Result<&'a str> {
        self.consumed += 1;
        self.lines
            .next()
            .ok_or_else(|| Error::Parse(format!("file ends before {what} (line {})", self.consumed)))
    }

    /// Next line, which must start with `key`; returns the value tokens.
    fn keyed(&mut self, key: &str) -> Result<Vec<&'a str>> {
        let line = self.line(key)?;
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some(k) if k == key => Ok(tokens.collect()),
            _ => Err(Error::Parse(format!("expected a `{key}` line, found `{line}`"))),
        }
    }

    /// Like [`Cursor::keyed`] but demanding exactly one value.
    fn keyed_one(&mut self, key: &str) -> Result<&'a str> {
        let tokens = self.keyed(key)?;
        if tokens.len() != 1 {
            return Err(Error::Parse(format!("`{key}` takes one value, found {}", tokens.len())));
        }
        Ok(tokens[0])
    }

    fn finish(mut self) -> Result<()> {
        match self.lines.next() {
            None => Ok(()),
            Some(extra) if extra.trim().is_empty() => Ok(()),
            Some(extra) => Err(Error::Parse(format!("unexpected trailing content `{extra}`"))),
        }
    }
}

/// Writes a field as CSV: a grid header, then one row per time index with
/// columns j-major and components interleaved.
pub fn write_field(field: &Field) -> String {
    let g = &field.grid;
    let mut out = String::new();
    out.push_str(FIELD_HEADER);
    out.push('\n');
    out.push_str(&format!(
        "# grid {} {} {} {} {} {}\n",
        g.n_t,
        g.n_x,
        fmt(g.dt),
        fmt(g.dx),
        g.bc.label(),
        field.d
    ));
    for i in 0..g.rows() {
        let row: Vec<String> = field.row(i).iter().map(|&v| fmt(v)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn read_field(text: &str) -> Result<Field> {
    let mut c = Cursor::new(text, FIELD_HEADER)?;
    let grid_line = c.line("grid header")?;
    let tokens: Vec<&str> = grid_line.split_whitespace().collect();
    if tokens.len() != 8 || tokens[0] != "#" || tokens[1] != "grid" {
        return Err(Error::Parse(format!("expected `# grid …`, found `{grid_line}`")));
    }
    let n_t = parse_usize(tokens[2], "time steps")?;
    let n_x = parse_usize(tokens[3], "spatial cells")?;
    let dt = parse_f64(tokens[4], "dt")?;
    let dx = parse_f64(tokens[5], "dx")?;
    let bc = parse_bc(tokens[6])?;
    let d = parse_usize(tokens[7], "components")?;
    if !(dt > 0.0 && dt.is_finite() && dx > 0.0 && dx.is_finite()) {
        return Err(Error::Parse(format!("grid spacings must be positive, got {dt} and {dx}")));
    }
    if n_x < 3 || d == 0 {
        return Err(Error::Parse(format!("{n_x} cells with {d} components is not a field")));
    }
    // truncated propagation outputs keep n_t below the simulation minimum,
    // so the raw constructor is the right one here
    let grid = Grid2D::raw(n_t, n_x, dt, dx, bc);
    let want = grid.cols() * d;
    let mut data = Vec::with_capacity(grid.rows() * want);
    for i in 0..grid.rows() {
        let line = c.line(&format!("time row {i}"))?;
        let mut count = 0;
        for tok in line.split(',') {
            data.push(parse_f64(tok.trim(), &format!("row {i}"))?);
            count += 1;
        }
        if count != want {
            return Err(Error::Parse(format!("row {i} holds {count} values, expected {want}")));
        }
    }
    c.finish()?;
    Field::from_data(grid, d, data)
}

/// Serializes a density checkpoint. Analytic theories persist their
/// construction data, networks persist the spec and the flat parameter
/// vector; gauge-wrapped and test-only densities are not experiment
/// artifacts and are refused.
pub fn write_density(model: &DensityModel) -> Result<String> {
    let mut out = String::new();
    out.push_str(DENSITY_HEADER);
    out.push('\n');
    match model {
        DensityModel::Wave(w) => {
            out.push_str("kind wave\n");
            out.push_str(&format!("dt {}\n", fmt(w.dt)));
            out.push_str(&format!("dx {}\n", fmt(w.dx)));
            let coeffs: Vec<String> = w.potential.0.iter().map(|&v| fmt(v)).collect();
            out.push_str(&format!("potential {}\n", coeffs.join(" ")));
        }
        DensityModel::Schrodinger(s) => {
            out.push_str("kind schrodinger\n");
            out.push_str(&format!("dt {}\n", fmt(s.dt)));
            out.push_str(&format!("dx {}\n", fmt(s.dx)));
            out.push_str(&format!("hbar {}\n", fmt(s.hbar)));
            let coeffs: Vec<String> = s.potential.0.iter().map(|&v| fmt(v)).collect();
            out.push_str(&format!("potential {}\n", coeffs.join(" ")));
        }
        DensityModel::Mlp(m) => {
            out.push_str("kind mlp\n");
            out.push_str(&format!("arity {}\n", m.arity));
            out.push_str(&format!("dim {}\n", m.dim));
            let layers: Vec<String> = m.spec.layers.iter().map(usize::to_string).collect();
            out.push_str(&format!("layers {}\n", layers.join(" ")));
            out.push_str(&format!("activation {}\n", m.spec.activation.label()));
            let biases: Vec<&str> =
                m.spec.biases.iter().map(|&b| if b { "true" } else { "false" }).collect();
            out.push_str(&format!("biases {}\n", biases.join(" ")));
            out.push_str(&format!("velocity_linear {}\n", m.velocity_linear));
            out.push_str(&format!("params {}\n", m.params.len()));
            for &p in &m.params {
                out.push_str(&fmt(p));
                out.push('\n');
            }
        }
        _ => {
            return Err(Error::Capability(
                "only wave, Schrödinger and network densities have a checkpoint form".into(),
            ))
        }
    }
    Ok(out)
}

pub fn read_density(text: &str) -> Result<DensityModel> {
    let mut c = Cursor::new(text, DENSITY_HEADER)?;
    let kind = c.keyed_one("kind")?;
    let wrap = |e: Error| Error::Parse(format!("checkpoint: {e}"));
    match kind {
        "wave" => {
            let dt = parse_f64(c.keyed_one("dt")?, "dt")?;
            let dx = parse_f64(c.keyed_one("dx")?, "dx")?;
            let coeffs = c
                .keyed("potential")?
                .iter()
                .map(|t| parse_f64(t, "potential"))
                .collect::<Result<Vec<f64>>>()?;
            c.finish()?;
            Ok(DensityModel::Wave(WaveDensity::new(dt, dx, Polynomial(coeffs)).map_err(wrap)?))
        }
        "schrodinger" => {
            let dt = parse_f64(c.keyed_one("dt")?, "dt")?;
            let dx = parse_f64(c.keyed_one("dx")?, "dx")?;
            let hbar = parse_f64(c.keyed_one("hbar")?, "hbar")?;
            let coeffs = c
                .keyed("potential")?
                .iter()
                .map(|t| parse_f64(t, "potential"))
                .collect::<Result<Vec<f64>>>()?;
            c.finish()?;
            Ok(DensityModel::Schrodinger(
                SchrodingerDensity::new(dt, dx, hbar, Polynomial(coeffs)).map_err(wrap)?,
            ))
        }
        "mlp" => {
            let arity = parse_usize(c.keyed_one("arity")?, "arity")?;
            let dim = parse_usize(c.keyed_one("dim")?, "dim")?;
            let layers = c
                .keyed("layers")?
                .iter()
                .map(|t| parse_usize(t, "layers"))
                .collect::<Result<Vec<usize>>>()?;
            let activation = parse_activation(c.keyed_one("activation")?)?;
            let biases = c
                .keyed("biases")?
                .iter()
                .map(|t| parse_bool(t, "biases"))
                .collect::<Result<Vec<bool>>>()?;
            let velocity_linear = parse_bool(c.keyed_one("velocity_linear")?, "velocity_linear")?;
            let count = parse_usize(c.keyed_one("params")?, "params")?;
            let mut params = Vec::with_capacity(count);
            for k in 0..count {
                params.push(parse_f64(c.line("parameters")?.trim(), &format!("parameter {k}"))?);
            }
            c.finish()?;
            let spec = MlpSpec { layers, activation, biases };
            spec.validate().map_err(wrap)?;
            if params.len() != spec.param_count() {
                return Err(Error::Parse(format!(
                    "checkpoint carries {} parameters, the network needs {}",
                    params.len(),
                    spec.param_count()
                )));
            }
            let mut density = MlpDensity::new(arity, dim, spec, 0).map_err(wrap)?;
            density.params = params;
            density.velocity_linear = velocity_linear;
            Ok(DensityModel::Mlp(density))
        }
        _ => Err(Error::Parse(format!("`{kind}` is not a persistable density kind"))),
    }
}

/// Loss-history CSV: epoch, data term, regularizer term, total, wall time.
/// Everything but the wall column is deterministic under fixed seeds.
pub fn write_losses(stats: &[EpochStats]) -> String {
    let mut out = String::new();
    out.push_str(LOSSES_HEADER);
    out.push('\n');
    out.push_str("epoch,data_loss,reg_loss,total_loss,wall_secs\n");
    for s in stats {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            s.epoch,
            fmt(s.data_loss),
            fmt(s.reg_loss),
            fmt(s.total_loss),
            fmt(s.wall_secs)
        ));
    }
    out
}

pub fn read_losses(text: &str) -> Result<Vec<EpochStats>> {
    let mut c = Cursor::new(text, LOSSES_HEADER)?;
    let columns = c.line("column names")?;
    if columns != "epoch,data_loss,reg_loss,total_loss,wall_secs" {
        return Err(Error::Parse(format!("unexpected loss columns `{columns}`")));
    }
    let mut out = Vec::new();
    for line in c.lines {
        if line.trim().is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split(',').collect();
        if tokens.len() != 5 {
            return Err(Error::Parse(format!("loss row `{line}` does not have 5 columns")));
        }
        out.push(EpochStats {
            epoch: parse_usize(tokens[0], "epoch")?,
            data_loss: parse_f64(tokens[1], "data loss")?,
            reg_loss: parse_f64(tokens[2], "regularizer loss")?,
            total_loss: parse_f64(tokens[3], "total loss")?,
            wall_secs: parse_f64(tokens[4], "wall time")?,
        });
    }
    Ok(out)
}

/// Wave profile as structured text: period, speed, then the coefficient
/// list of every component.
pub fn write_profile(profile: &WaveProfile) -> String {
    let mut out = String::new();
    out.push_str(PROFILE_HEADER);
    out.push('\n');
    out.push_str(&format!("period {}\n", fmt(profile.period)));
    out.push_str(&format!("speed {}\n", fmt(profile.speed)));
    out.push_str(&format!("components {}\n", profile.dim()));
    out.push_str(&format!("modes {}\n", profile.n_modes()));
    for (p, comp) in profile.modes.iter().enumerate() {
        out.push_str(&format!("component {p}\n"));
        for &(re, im) in comp {
            out.push_str(&format!("{} {}\n", fmt(re), fmt(im)));
        }
    }
    out
}

pub fn read_profile(text: &str) -> Result<WaveProfile> {
    let mut c = Cursor::new(text, PROFILE_HEADER)?;
    let period = parse_f64(c.keyed_one("period")?, "period")?;
    let speed = parse_f64(c.keyed_one("speed")?, "speed")?;
    let d = parse_usize(c.keyed_one("components")?, "components")?;
    let n_modes = parse_usize(c.keyed_one("modes")?, "modes")?;
    let mut modes = Vec::with_capacity(d);
    for p in 0..d {
        let tag = c.keyed_one("component")?;
        if parse_usize(tag, "component index")? != p {
            return Err(Error::Parse(format!("expected component {p}, found {tag}")));
        }
        let mut comp = Vec::with_capacity(n_modes);
        for m in 0..n_modes {
            let line = c.line("mode coefficients")?;
            let tokens: Vec<&str> = line.split_whitespace().collect();
            if tokens.len() != 2 {
                return Err(Error::Parse(format!("mode {m} line `{line}` is not `re im`")));
            }
            comp.push((parse_f64(tokens[0], "re")?, parse_f64(tokens[1], "im")?));
        }
        modes.push(comp);
    }
    c.finish()?;
    WaveProfile::new(period, speed, modes).map_err(|e| Error::Parse(format!("profile: {e}")))
}

/// Reduction basis as a structured text matrix, with the fit diagnostics
/// (padding count, singular spectrum) carried along.
pub fn write_basis(map: &PcaMap) -> String {
    let basis = map.basis();
    let mut out = String::new();
    out.push_str(BASIS_HEADER);
    out.push('\n');
    out.push_str(&format!("rows {}\n", basis.nrows()));
    out.push_str(&format!("cols {}\n", basis.ncols()));
    for r in 0..basis.nrows() {
        let row: Vec<String> = (0..basis.ncols()).map(|c| fmt(basis[(r, c)])).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out.push_str(&format!("padded {}\n", map.padded));
    let sv: Vec<String> = map.singular_values.iter().map(|&v| fmt(v)).collect();
    out.push_str(&format!("singular_values {}\n", sv.join(" ")));
    out
}

pub fn read_basis(text: &str) -> Result<PcaMap> {
    let mut c = Cursor::new(text, BASIS_HEADER)?;
    let rows = parse_usize(c.keyed_one("rows")?, "rows")?;
    let cols = parse_usize(c.keyed_one("cols")?, "cols")?;
    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let line = c.line(&format!("basis row {r}"))?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != cols {
            return Err(Error::Parse(format!(
                "basis row {r} holds {} values, expected {cols}",
                tokens.len()
            )));
        }
        for t in tokens {
            data.push(parse_f64(t, &format!("basis row {r}"))?);
        }
    }
    let padded = parse_usize(c.keyed_one("padded")?, "padded")?;
    let singular_values = c
        .keyed("singular_values")?
        .iter()
        .map(|t| parse_f64(t, "singular values"))
        .collect::<Result<Vec<f64>>>()?;
    c.finish()?;
    let matrix = DMatrix::from_row_slice(rows, cols, &data);
    let mut map =
        PcaMap::from_basis(matrix).map_err(|e| Error::Parse(format!("basis: {e}")))?;
    map.padded = padded;
    map.singular_values = singular_values;
    Ok(map)
}

/// Writes an artifact to disk (parent directories included).
pub fn save(path: impl AsRef<Path>, contents: &str) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, contents)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<String> {
    Ok(std::fs::read_to_string(path)?)
}
