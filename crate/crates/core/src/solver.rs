//! Variational integrators: Newton solvers for the discrete field equations.
//!
//! Two complementary drivers advance a field in time. The *stencil* solver
//! treats one vertex equation at a time, solving the discrete Euler–Lagrange
//! residual for the single newest node of a canonical tuple; a sweep over a
//! row turns it into an explicit-like update for seven-point theories. The
//! *time-slice* solver advances a whole row at once through the slice form
//! `D₂𝕃(U^{i−1}, U^i) + D₁𝕃(U^i, U^{i+1}) = 0`, whose Newton matrix is the
//! mixed slice Hessian Λ — this is the mode that works for nine-point
//! theories and is the one the conditioning regularizers keep well-posed.
//!
//! A variational start turns (positions, velocities) — or positions alone
//! for velocity-linear densities — into the second slice, and
//! [`verify_quadratic_rate`] classifies observed convergence histories.

use crate::density::{del_residual, DensityModel};
use crate::error::{Error, Result};
use crate::lattice::{Field, Grid2D, SpatialBc, StencilKind};
use crate::linalg::{lu_solve, sigma_min_svd};
use crate::slice::SliceSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NewtonGuess {
    /// Start from the value at the previous time level.
    PreviousStep,
    /// Start from the linear extrapolation through the last two levels.
    LinearExtrapolation,
}

#[derive(Debug, Clone)]
pub struct NewtonConfig {
    /// Convergence tolerance on the residual ∞-norm.
    pub tol: f64,
    pub max_iter: usize,
    pub guess: NewtonGuess,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig { tol: 1e-12, max_iter: 50, guess: NewtonGuess::LinearExtrapolation }
    }
}

/// Convergence history of one solve.
#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    /// Residual ∞-norm at every visited iterate (including the initial guess).
    pub residual_norms: Vec<f64>,
    /// ∞-distance of every iterate before the last to the final iterate.
    pub errors_vs_final: Vec<f64>,
    /// Newton updates performed.
    pub iterations: usize,
    /// Whether the residual tolerance was met.
    pub converged: bool,
    /// Conditioning of the final Newton matrix: `‖J⁻¹‖₂ = 1/σ_min(J)`.
    pub rho_star: f64,
}

/// Damped-free Newton iteration on a square system. `system` maps an iterate
/// to its residual and row-major Jacobian. Fails with a singular-matrix error
/// when the Jacobian cannot be inverted — including at a converged point, so
/// an everywhere-degenerate system (e.g. a constant density) is reported as
/// ill-posed rather than trivially solved.
pub fn newton_solve(
    x0: &[f64],
    cfg: &NewtonConfig,
    context: &str,
    mut system: impl FnMut(&[f64]) -> Result<(Vec<f64>, Vec<f64>)>,
) -> Result<(Vec<f64>, ConvergenceReport)> {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut iterates = vec![x.clone()];
    let mut residual_norms = Vec::new();
    loop {
        let (r, jac) = system(&x)?;
        if r.len() != n || jac.len() != n * n {
            return Err(Error::Shape(format!(
                "system returned residual {} / jacobian {} for {n} unknowns",
                r.len(),
                jac.len()
            )));
        }
        let norm = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        residual_norms.push(norm);
        if norm <= cfg.tol {
            let sigma = sigma_min_svd(&jac, n, n);
            if sigma <= 0.0 || !sigma.is_finite() {
                return Err(Error::Singular { context: context.into(), sigma_min: sigma });
            }
            let errors_vs_final = iterates[..iterates.len() - 1]
                .iter()
                .map(|it| {
                    it.iter()
                        .zip(&x)
                        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
                })
                .collect();
            return Ok((
                x,
                ConvergenceReport {
                    residual_norms,
                    errors_vs_final,
                    iterations: iterates.len() - 1,
                    converged: true,
                    rho_star: 1.0 / sigma,
                },
            ));
        }
        if iterates.len() > cfg.max_iter || !norm.is_finite() {
            return Err(Error::NonConvergence {
                iterations: iterates.len() - 1,
                last_residual: norm,
                residuals: residual_norms,
            });
        }
        let Some(delta) = lu_solve(&jac, n, &r) else {
            return Err(Error::Singular {
                context: context.into(),
                sigma_min: sigma_min_svd(&jac, n, n),
            });
        };
        for (xi, di) in x.iter_mut().zip(&delta) {
            *xi -= di;
        }
        iterates.push(x.clone());
    }
}

/// Node of a canonical tuple the stencil solver treats as unknown: the newest
/// value in time.
fn stencil_unknown_node(kind: StencilKind) -> Result<usize> {
    match kind {
        StencilKind::Pts2Three => Ok(2),
        StencilKind::Pts3Seven => Ok(1),
        StencilKind::Pts4Nine => Err(Error::Capability(
            "nine-point vertex equations couple a whole row of new values; use a time-slice solve"
                .into(),
        )),
    }
}

fn stencil_default_guess(model: &DensityModel, values: &[f64], guess: NewtonGuess) -> Vec<f64> {
    let d = model.dim();
    let ext = |new: usize, old: usize| -> Vec<f64> {
        (0..d)
            .map(|p| match guess {
                NewtonGuess::PreviousStep => values[new * d + p],
                NewtonGuess::LinearExtrapolation => 2.0 * values[new * d + p] - values[old * d + p],
            })
            .collect()
    };
    match model.arity() {
        // tuple (q⁻, q, q⁺): latest known node is q, one level older is q⁻
        2 => ext(1, 0),
        // canonical seven-point tuple: vertex node 0, one level older node 3
        _ => ext(0, 3),
    }
}

/// Solves one vertex equation for the newest node of a canonical tuple
/// (node `(i+1, j)` of a seven-point tuple, `q⁺` of a three-point tuple),
/// starting from the guess picked by `cfg.guess`. Returns the solved node
/// value; the other tuple entries are taken as data.
pub fn solve_stencil(
    model: &DensityModel,
    values: &[f64],
    cfg: &NewtonConfig,
) -> Result<(Vec<f64>, ConvergenceReport)> {
    let guess = stencil_default_guess(model, values, cfg.guess);
    solve_stencil_from(model, values, &guess, cfg)
}

/// [`solve_stencil`] from an explicit starting value for the unknown node.
pub fn solve_stencil_from(
    model: &DensityModel,
    values: &[f64],
    guess: &[f64],
    cfg: &NewtonConfig,
) -> Result<(Vec<f64>, ConvergenceReport)> {
    let kind = model.stencil_kind();
    let d = model.dim();
    if values.len() != kind.points() * d {
        return Err(Error::Shape(format!(
            "expected {} tuple values, got {}",
            kind.points() * d,
            values.len()
        )));
    }
    if guess.len() != d {
        return Err(Error::Shape(format!("guess must hold {d} values, got {}", guess.len())));
    }
    let unknown = stencil_unknown_node(kind)?;
    let mut work = values.to_vec();
    newton_solve(guess, cfg, "stencil solve", |x| {
        work[unknown * d..(unknown + 1) * d].copy_from_slice(x);
        let r = del_residual(model, &work)?;
        // the unknown enters exactly one adjacent cell, as its second node;
        // the Jacobian is that cell's mixed Hessian block
        let cell = match kind {
            StencilKind::Pts2Three => &work[d..3 * d],
            _ => &work[..3 * d],
        };
        let jac = model.mixed_hessian_block(cell)?;
        Ok((r, jac))
    })
}

/// Packs the unknown columns of a full slice into a Newton vector.
fn pack(sys: &SliceSystem, full: &[f64]) -> Vec<f64> {
    let d = sys.field_dim();
    let mut out = Vec::with_capacity(sys.lambda_dim());
    for j in sys.unknown_columns() {
        out.extend_from_slice(&full[j * d..(j + 1) * d]);
    }
    out
}

/// Writes a Newton vector back into the unknown columns of a full slice.
fn unpack(sys: &SliceSystem, x: &[f64], full: &mut [f64]) {
    let d = sys.field_dim();
    for (k, j) in sys.unknown_columns().enumerate() {
        full[j * d..(j + 1) * d].copy_from_slice(&x[k * d..(k + 1) * d]);
    }
}

/// Advances one time slice: solves the row of field equations
/// `D₂𝕃(U^{i−1}, U^i) + D₁𝕃(U^i, U^{i+1}) = 0` for `U^{i+1}` with Newton
/// matrix Λ. Dirichlet boundary columns are copied from the current slice.
pub fn timestep_solve(
    model: &DensityModel,
    prev: &[f64],
    curr: &[f64],
    bc: SpatialBc,
    cfg: &NewtonConfig,
) -> Result<(Vec<f64>, ConvergenceReport)> {
    let d = model.dim();
    if prev.len() != curr.len() || !curr.len().is_multiple_of(d) {
        return Err(Error::Shape("slices must match and hold whole columns".into()));
    }
    let sys = SliceSystem::new(model, bc, curr.len() / d)?;
    let (_, dv_prev) = sys.slice_grads_with(model.params(), prev, curr)?;
    let fixed = pack(&sys, &dv_prev);

    let mut next = curr.to_vec();
    let x0: Vec<f64> = match cfg.guess {
        NewtonGuess::PreviousStep => pack(&sys, curr),
        NewtonGuess::LinearExtrapolation => {
            let ext: Vec<f64> =
                curr.iter().zip(prev).map(|(c, p)| 2.0 * c - p).collect();
            pack(&sys, &ext)
        }
    };
    let (x, report) = newton_solve(&x0, cfg, "time step", |x| {
        unpack(&sys, x, &mut next);
        let (du_next, _) = sys.slice_grads_with(model.params(), curr, &next)?;
        let r: Vec<f64> =
            pack(&sys, &du_next).iter().zip(&fixed).map(|(a, b)| a + b).collect();
        let jac = sys.lambda(curr, &next)?;
        Ok((r, jac))
    })?;
    unpack(&sys, &x, &mut next);
    Ok((next, report))
}

/// Variational start: determines the second slice `U¹` from initial data on
/// the first. With velocities the discrete momentum condition reads
/// `D₁𝕃(U⁰, U¹) + ½(D₂ − D₁)𝕃(U⁰ − ½ΔtV⁰, U⁰ + ½ΔtV⁰) = 0`; without them
/// the same equation collapses to `(A, B) = (U⁰, U⁰)`, which is well-posed
/// exactly for velocity-linear densities (first-order-in-time dynamics).
pub fn initialize_first_step(
    model: &DensityModel,
    u0: &[f64],
    velocities: Option<&[f64]>,
    dt: f64,
    bc: SpatialBc,
    cfg: &NewtonConfig,
) -> Result<(Vec<f64>, ConvergenceReport)> {
    let d = model.dim();
    if !u0.len().is_multiple_of(d) {
        return Err(Error::Shape("initial slice must hold whole columns".into()));
    }
    let sys = SliceSystem::new(model, bc, u0.len() / d)?;
    let (a, b): (Vec<f64>, Vec<f64>) = match velocities {
        Some(v) => {
            if v.len() != u0.len() {
                return Err(Error::Shape(format!(
                    "expected {} velocity values, got {}",
                    u0.len(),
                    v.len()
                )));
            }
            (
                u0.iter().zip(v).map(|(u, w)| u - 0.5 * dt * w).collect(),
                u0.iter().zip(v).map(|(u, w)| u + 0.5 * dt * w).collect(),
            )
        }
        None => {
            if !model.is_velocity_linear() {
                return Err(Error::Input(
                    "this density is second order in time; initial velocities are required"
                        .into(),
                ));
            }
            (u0.to_vec(), u0.to_vec())
        }
    };
    let (da, db) = sys.slice_grads_with(model.params(), &a, &b)?;
    let fixed: Vec<f64> = pack(&sys, &db)
        .iter()
        .zip(&pack(&sys, &da))
        .map(|(bb, aa)| 0.5 * (bb - aa))
        .collect();

    let mut u1 = u0.to_vec();
    let x0 = match velocities {
        Some(v) => {
            let shifted: Vec<f64> = u0.iter().zip(v).map(|(u, w)| u + dt * w).collect();
            pack(&sys, &shifted)
        }
        None => pack(&sys, u0),
    };
    let (x, report) = newton_solve(&x0, cfg, "first-step initialization", |x| {
        unpack(&sys, x, &mut u1);
        let (du, _) = sys.slice_grads_with(model.params(), u0, &u1)?;
        let r: Vec<f64> =
            pack(&sys, &du).iter().zip(&fixed).map(|(g, f)| g + f).collect();
        let jac = sys.lambda(u0, &u1)?;
        Ok((r, jac))
    })?;
    unpack(&sys, &x, &mut u1);
    Ok((u1, report))
}

/// Advances one time slice by sweeping vertex solves across the row.
/// Seven-point theories have no dependence of a vertex equation on newer
/// values to its right, so one left-to-right pass is exact under Dirichlet
/// data; periodic wrap feeds the last column back into the first vertex, so
/// sweeps repeat (Gauss–Seidel fashion) until the row residual meets the
/// tolerance.
pub fn sweep_step(
    model: &DensityModel,
    prev: &[f64],
    curr: &[f64],
    bc: SpatialBc,
    cfg: &NewtonConfig,
) -> Result<(Vec<f64>, ConvergenceReport)> {
    const MAX_SWEEPS: usize = 60;
    if model.arity() != 3 {
        return Err(Error::Capability(
            "row sweeps need a seven-point theory; use a time-slice solve".into(),
        ));
    }
    let d = model.dim();
    if prev.len() != curr.len() || !curr.len().is_multiple_of(d) || curr.len() < 3 * d {
        return Err(Error::Shape("slices must match and hold at least 3 columns".into()));
    }
    let cols = curr.len() / d;
    let mut next: Vec<f64> = match cfg.guess {
        NewtonGuess::PreviousStep => curr.to_vec(),
        NewtonGuess::LinearExtrapolation => {
            curr.iter().zip(prev).map(|(c, p)| 2.0 * c - p).collect()
        }
    };
    let unknowns: Vec<usize> = match bc {
        SpatialBc::Periodic => (0..cols).collect(),
        SpatialBc::Dirichlet => {
            // boundary columns stay at their current (time-invariant) values
            next[..d].copy_from_slice(&curr[..d]);
            next[(cols - 1) * d..].copy_from_slice(&curr[(cols - 1) * d..]);
            (1..cols - 1).collect()
        }
    };

    let col = |j: usize, off: i64| -> usize {
        match bc {
            SpatialBc::Periodic => (j as i64 + off).rem_euclid(cols as i64) as usize,
            SpatialBc::Dirichlet => (j as i64 + off) as usize,
        }
    };
    let gather = |j: usize, next: &[f64]| -> Vec<f64> {
        let mut tuple = Vec::with_capacity(7 * d);
        for &(ti, sj) in StencilKind::Pts3Seven.offsets() {
            let row: &[f64] = match ti {
                -1 => prev,
                0 => curr,
                _ => next,
            };
            let jj = col(j, sj);
            tuple.extend_from_slice(&row[jj * d..(jj + 1) * d]);
        }
        tuple
    };

    let mut residual_norms = Vec::new();
    let mut rho_star = 0.0f64;
    let mut inner_iterations = 0;
    for sweep in 1..=MAX_SWEEPS {
        for &j in &unknowns {
            let tuple = gather(j, &next);
            let start = next[j * d..(j + 1) * d].to_vec();
            let (value, report) = solve_stencil_from(model, &tuple, &start, cfg)?;
            next[j * d..(j + 1) * d].copy_from_slice(&value);
            rho_star = rho_star.max(report.rho_star);
            inner_iterations += report.iterations;
        }
        let mut worst = 0.0f64;
        for &j in &unknowns {
            let r = del_residual(model, &gather(j, &next))?;
            worst = r.iter().fold(worst, |m, v| m.max(v.abs()));
        }
        residual_norms.push(worst);
        if worst <= cfg.tol {
            return Ok((
                next,
                ConvergenceReport {
                    residual_norms,
                    errors_vs_final: Vec::new(),
                    iterations: sweep,
                    converged: true,
                    rho_star,
                },
            ));
        }
        let _ = inner_iterations;
    }
    let last = *residual_norms.last().unwrap();
    Err(Error::NonConvergence {
        iterations: MAX_SWEEPS,
        last_residual: last,
        residuals: residual_norms,
    })
}

/// Initial data accepted by [`propagate`].
#[derive(Debug, Clone, Copy)]
pub enum InitialData<'a> {
    /// One slice plus nodal velocities; the second slice comes from the
    /// variational start.
    PositionVelocity { positions: &'a [f64], velocities: &'a [f64] },
    /// One slice alone; valid for velocity-linear densities.
    PositionOnly { positions: &'a [f64] },
    /// Two explicit slices.
    TwoSlices { first: &'a [f64], second: &'a [f64] },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PropagationMode {
    /// Whole-row Newton steps on the slice equations.
    Timeslice,
    /// Vertex-by-vertex row sweeps (seven-point theories only).
    StencilSweep,
}

/// A propagated field together with one convergence report per computed
/// slice.
#[derive(Debug)]
pub struct Propagation {
    pub field: Field,
    pub reports: Vec<ConvergenceReport>,
}

/// Integrates the field equations for `steps` new slices. The result holds
/// the given slices followed by the computed ones; `grid` supplies the
/// spatial layout and step sizes, while the stored time extent is derived
/// from `steps`. When only one slice is given, the first step always uses
/// the variational start, whatever the mode.
pub fn propagate(
    model: &DensityModel,
    init: InitialData,
    steps: usize,
    grid: &Grid2D,
    cfg: &NewtonConfig,
    mode: PropagationMode,
) -> Result<Propagation> {
    let d = model.dim();
    let slice_len = grid.cols() * d;
    let check = |name: &str, s: &[f64]| -> Result<()> {
        if s.len() != slice_len {
            return Err(Error::Shape(format!(
                "{name} slice must hold {slice_len} values, got {}",
                s.len()
            )));
        }
        Ok(())
    };
    let given = match init {
        InitialData::PositionVelocity { positions, velocities } => {
            check("position", positions)?;
            check("velocity", velocities)?;
            1
        }
        InitialData::PositionOnly { positions } => {
            check("position", positions)?;
            1
        }
        InitialData::TwoSlices { first, second } => {
            check("first", first)?;
            check("second", second)?;
            2
        }
    };
    let rows = given + steps;
    let out_grid = Grid2D::raw(rows - 1, grid.n_x, grid.dt, grid.dx, grid.bc);
    let mut field = Field::zeros(out_grid, d);
    let mut reports = Vec::with_capacity(steps);

    let mut filled = given;
    match init {
        InitialData::PositionVelocity { positions, velocities } => {
            field.row_mut(0).copy_from_slice(positions);
            if steps > 0 {
                let (u1, report) =
                    initialize_first_step(model, positions, Some(velocities), grid.dt, grid.bc, cfg)?;
                field.row_mut(1).copy_from_slice(&u1);
                reports.push(report);
                filled = 2;
            }
        }
        InitialData::PositionOnly { positions } => {
            field.row_mut(0).copy_from_slice(positions);
            if steps > 0 {
                let (u1, report) =
                    initialize_first_step(model, positions, None, grid.dt, grid.bc, cfg)?;
                field.row_mut(1).copy_from_slice(&u1);
                reports.push(report);
                filled = 2;
            }
        }
        InitialData::TwoSlices { first, second } => {
            field.row_mut(0).copy_from_slice(first);
            field.row_mut(1).copy_from_slice(second);
        }
    }

    for i in filled..rows {
        let (next, report) = match mode {
            PropagationMode::Timeslice => {
                timestep_solve(model, field.row(i - 2), field.row(i - 1), grid.bc, cfg)?
            }
            PropagationMode::StencilSweep => {
                sweep_step(model, field.row(i - 2), field.row(i - 1), grid.bc, cfg)?
            }
        };
        field.row_mut(i).copy_from_slice(&next);
        reports.push(report);
    }
    Ok(Propagation { field, reports })
}

/// Largest field-equation residual component over all interior vertices.
pub fn max_del_residual(model: &DensityModel, field: &Field) -> Result<f64> {
    let tuples = crate::lattice::extract_stencils(field, model.stencil_kind(), 1)?;
    let mut worst = 0.0f64;
    for t in &tuples {
        let r = del_residual(model, &t.values)?;
        worst = r.iter().fold(worst, |m, v| m.max(v.abs()));
    }
    Ok(worst)
}

/// Outcome of a convergence-rate classification.
#[derive(Debug, Clone)]
pub struct RateCheck {
    /// Whether the history is consistent with (at least) quadratic
    /// convergence.
    pub passes: bool,
    /// Fitted log–log slope when enough above-floor pairs exist.
    pub slope: Option<f64>,
    /// Largest observed `e_{n+1}/e_n²` over above-floor steps.
    pub constant: f64,
    /// Consecutive pairs with both entries above the round-off floor.
    pub pairs: usize,
}

/// Classifies an error or residual history as quadratically convergent.
///
/// Entries below a round-off floor (`1e-13` relative to the largest entry)
/// carry no rate information. With at least three informative consecutive
/// pairs the log–log slope of `e_{n+1}` against `e_n` is fitted and must
/// reach 1.5; with fewer, the history still passes when it collapses from
/// above the floor straight to below it — a single-step drop to round-off
/// that no linearly convergent iteration produces. Histories that neither
/// support a fit nor collapse are inconclusive and fail.
pub fn verify_quadratic_rate(errors: &[f64]) -> RateCheck {
    let peak = errors.iter().fold(0.0f64, |m, v| m.max(*v));
    let floor = 1e-13 * peak.max(1.0);
    let fit_pairs: Vec<(f64, f64)> = errors
        .windows(2)
        .filter(|w| w[0] > floor && w[1] > floor)
        .map(|w| (w[0], w[1]))
        .collect();
    let constant = errors
        .windows(2)
        .filter(|w| w[0] > floor)
        .map(|w| w[1] / (w[0] * w[0]))
        .fold(0.0f64, f64::max);
    if fit_pairs.len() >= 3 {
        let n = fit_pairs.len() as f64;
        let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
        for &(e0, e1) in &fit_pairs {
            let (x, y) = (e0.ln(), e1.ln());
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        RateCheck { passes: slope >= 1.5, slope: Some(slope), constant, pairs: fit_pairs.len() }
    } else {
        let started = errors.iter().any(|&e| e > floor);
        let collapsed = errors.last().is_some_and(|&e| e <= floor);
        RateCheck {
            passes: started && collapsed,
            slope: None,
            constant,
            pairs: fit_pairs.len(),
        }
    }
}
