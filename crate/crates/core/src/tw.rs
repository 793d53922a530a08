//! Fourier travelling-wave search in a discrete field theory, plus
//! restricted-action diagnostics: an autonomous density passes its
//! variational structure down to the wave profile, so located waves can be
//! cross-checked against stationarity of the action restricted to the
//! travelling-wave class.

use crate::density::{del_residual_with, DensityModel};
use crate::error::{Error, Result};
use crate::lattice::{Field, Grid2D, SpatialBc};
use crate::scalar::Scalar;
use crate::tape;
use crate::train::{Adam, AdamConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::PI;

/// Periodic profile `f: [0, b)/~ → R^d` as a truncated Fourier series with
/// conjugate symmetry. Entry `m` of a component's list holds the complex
/// coefficient `ĥ_m = (re, im)`; modes `−m` are implied (`ĥ_{−m} = conj ĥ_m`)
/// and the `m = 0` entry is kept real, so evaluations are real:
/// `f(ξ) = ĥ_0 + Σ_{m≥1} 2(re_m cos(2πmξ/b) − im_m sin(2πmξ/b))`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveProfile {
    pub period: f64,
    pub speed: f64,
    /// One coefficient list per field component, all of equal length.
    pub modes: Vec<Vec<(f64, f64)>>,
}

impl WaveProfile {
    pub fn new(period: f64, speed: f64, modes: Vec<Vec<(f64, f64)>>) -> Result<Self> {
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::Input(format!("profile period must be positive, got {period}")));
        }
        let n = modes.first().map_or(0, Vec::len);
        if n == 0 {
            return Err(Error::Sizing("a profile needs at least the constant mode".into()));
        }
        for comp in &modes {
            if comp.len() != n {
                return Err(Error::Shape(format!(
                    "all components must carry {} modes, got {}",
                    n,
                    comp.len()
                )));
            }
            if comp[0].1 != 0.0 {
                return Err(Error::Input(
                    "the constant coefficient must be real for a real-valued profile".into(),
                ));
            }
        }
        Ok(WaveProfile { period, speed, modes })
    }

    pub fn zeros(period: f64, speed: f64, d: usize, n_modes: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::Sizing("profiles need at least one component".into()));
        }
        WaveProfile::new(period, speed, vec![vec![(0.0, 0.0); n_modes]; d])
    }

    /// Single-cosine profile `A·cos(2πmξ/b)` (d = 1), carried in a space of
    /// `n_modes` coefficients so a search can move off the pure mode.
    pub fn cosine_mode(
        period: f64,
        speed: f64,
        mode: usize,
        amplitude: f64,
        n_modes: usize,
    ) -> Result<Self> {
        let mut p = WaveProfile::zeros(period, speed, 1, n_modes)?;
        let slot = p.mode_slot(mode)?;
        p.modes[0][slot] = if mode == 0 { (amplitude, 0.0) } else { (amplitude / 2.0, 0.0) };
        Ok(p)
    }

    /// Complex exponential `A·e^{2πimξ/b}` stored as (re, im) components
    /// (d = 2): the plane-wave ansatz of the Schrödinger theory.
    pub fn plane_wave(
        period: f64,
        speed: f64,
        mode: usize,
        amplitude: f64,
        n_modes: usize,
    ) -> Result<Self> {
        let mut p = WaveProfile::zeros(period, speed, 2, n_modes)?;
        let slot = p.mode_slot(mode)?;
        if mode == 0 {
            p.modes[0][slot] = (amplitude, 0.0);
        } else {
            // Re ψ = A cos θ, Im ψ = A sin θ = A cos shifted by −π/2
            p.modes[0][slot] = (amplitude / 2.0, 0.0);
            p.modes[1][slot] = (0.0, -amplitude / 2.0);
        }
        Ok(p)
    }

    fn mode_slot(&self, mode: usize) -> Result<usize> {
        if mode >= self.n_modes() {
            return Err(Error::Sizing(format!(
                "mode {} does not fit in {} coefficients",
                mode,
                self.n_modes()
            )));
        }
        Ok(mode)
    }

    pub fn dim(&self) -> usize {
        self.modes.len()
    }

    pub fn n_modes(&self) -> usize {
        self.modes[0].len()
    }

    /// Profile value at `ξ`, one entry per component.
    pub fn eval(&self, xi: f64) -> Vec<f64> {
        let layout = Layout::of(self);
        let params = self.pack();
        (0..self.dim()).map(|c| layout.eval(&params, c, xi, 0.0)).collect()
    }

    /// Discrete L² norm squared `Δx·Σ_m |ĥ_{|m|}|²` with both signs of every
    /// nonzero mode counted, summed over components.
    pub fn norm_sq(&self, dx: f64) -> f64 {
        let mut n = 0.0;
        for comp in &self.modes {
            n += comp[0].0 * comp[0].0;
            for &(re, im) in &comp[1..] {
                n += 2.0 * (re * re + im * im);
            }
        }
        dx * n
    }

    /// Coefficients rescaled so that `norm_sq(dx) = 1`.
    pub fn normalized(&self, dx: f64) -> Result<Self> {
        let n = self.norm_sq(dx);
        if n <= 0.0 {
            return Err(Error::Input("cannot normalize a zero profile".into()));
        }
        let s = 1.0 / n.sqrt();
        let mut out = self.clone();
        for comp in &mut out.modes {
            for c in comp.iter_mut() {
                c.0 *= s;
                c.1 *= s;
            }
        }
        Ok(out)
    }

    /// The phase-shifted profile `ξ ↦ f(ξ + delta)`: mode `m` rotates by
    /// `e^{2πim·delta/b}`.
    pub fn shifted(&self, delta: f64) -> Self {
        let mut out = self.clone();
        for comp in &mut out.modes {
            for (m, c) in comp.iter_mut().enumerate() {
                let phi = 2.0 * PI * m as f64 * delta / self.period;
                let (re, im) = *c;
                *c = (re * phi.cos() - im * phi.sin(), re * phi.sin() + im * phi.cos());
            }
        }
        out
    }

    /// Speed and every free coefficient part perturbed by `N(0, sigma²)`
    /// noise; the constant mode stays real.
    pub fn perturbed(&self, sigma: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng);
        let mut out = self.clone();
        out.speed += draw();
        for comp in &mut out.modes {
            for (m, c) in comp.iter_mut().enumerate() {
                c.0 += draw();
                if m > 0 {
                    c.1 += draw();
                }
            }
        }
        out
    }

    /// Flat parameter vector for optimization and gradient reporting:
    /// `[speed, comp-0: re_0, re_1, im_1, …, comp-1: …]` (no imaginary slot
    /// for the constant mode).
    pub fn pack(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(Layout::of(self).param_len());
        out.push(self.speed);
        for comp in &self.modes {
            out.push(comp[0].0);
            for &(re, im) in &comp[1..] {
                out.push(re);
                out.push(im);
            }
        }
        out
    }
}

/// Shape of a packed profile-parameter vector.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Layout {
    d: usize,
    n_modes: usize,
    period: f64,
}

impl Layout {
    pub(crate) fn of(p: &WaveProfile) -> Self {
        Layout { d: p.dim(), n_modes: p.n_modes(), period: p.period }
    }

    fn param_len(self) -> usize {
        1 + self.d * (2 * self.n_modes - 1)
    }

    fn component_start(self, comp: usize) -> usize {
        1 + comp * (2 * self.n_modes - 1)
    }

    pub(crate) fn unpack(self, params: &[f64]) -> WaveProfile {
        let mut modes = Vec::with_capacity(self.d);
        for comp in 0..self.d {
            let base = self.component_start(comp);
            let mut list = Vec::with_capacity(self.n_modes);
            list.push((params[base], 0.0));
            for m in 1..self.n_modes {
                list.push((params[base + 2 * m - 1], params[base + 2 * m]));
            }
            modes.push(list);
        }
        WaveProfile { period: self.period, speed: params[0], modes }
    }

    /// Component value at `ξ = offset + shift·speed`, with the speed read
    /// from `params[0]` so wave-speed sensitivities flow through the trig
    /// arguments.
    pub(crate) fn eval<S: Scalar>(self, params: &[S], comp: usize, offset: f64, shift: f64) -> S {
        let speed = params[0];
        let base = self.component_start(comp);
        let mut acc = params[base];
        for m in 1..self.n_modes {
            let w = 2.0 * PI * m as f64 / self.period;
            let theta = speed.scale(w * shift).add_const(w * offset);
            let re = params[base + 2 * m - 1];
            let im = params[base + 2 * m];
            acc = acc + (re * theta.cos() - im * theta.sin()).scale(2.0);
        }
        acc
    }

    /// `|Δx·Σ|ĥ|² − 1|`, the penalty that rules out the zero profile.
    pub(crate) fn unit_loss<S: Scalar>(self, params: &[S], dx: f64) -> S {
        let mut n = params[0].lift(0.0);
        for comp in 0..self.d {
            let base = self.component_start(comp);
            n = n + params[base].sq();
            for m in 1..self.n_modes {
                n = n + (params[base + 2 * m - 1].sq() + params[base + 2 * m].sq()).scale(2.0);
            }
        }
        let v = n.scale(dx).add_const(-1.0);
        if v.val() >= 0.0 {
            v
        } else {
            -v
        }
    }
}

fn check_compatible(model: &DensityModel, profile: &WaveProfile, grid: &Grid2D) -> Result<()> {
    if model.arity() != 3 && model.arity() != 4 {
        return Err(Error::Capability(format!(
            "travelling-wave objectives cover 3- and 4-point densities, not arity {}",
            model.arity()
        )));
    }
    if model.dim() != profile.dim() {
        return Err(Error::Shape(format!(
            "density has {} components per node, profile has {}",
            model.dim(),
            profile.dim()
        )));
    }
    if grid.bc != SpatialBc::Periodic {
        return Err(Error::Input("travelling-wave search needs a periodic grid".into()));
    }
    if (profile.period - grid.period()).abs() > 1e-9 * grid.period() {
        return Err(Error::Input(format!(
            "profile period {} does not match the grid period {}",
            profile.period,
            grid.period()
        )));
    }
    Ok(())
}

/// Field values of the ansatz `u^i_j = f(jΔx − c·iΔt)` over the whole grid.
pub(crate) fn lattice_values<S: Scalar>(layout: Layout, params: &[S], grid: &Grid2D) -> Vec<S> {
    let (rows, cols) = (grid.rows(), grid.cols());
    let mut out = Vec::with_capacity(rows * cols * layout.d);
    for i in 0..rows {
        let shift = -(i as f64) * grid.dt;
        for j in 0..cols {
            let offset = j as f64 * grid.dx;
            for comp in 0..layout.d {
                out.push(layout.eval(params, comp, offset, shift));
            }
        }
    }
    out
}

/// Sum of squared field-equation residuals over all interior vertices of the
/// grid filled with the travelling-wave ansatz.
fn residual_loss<S: Scalar>(
    model: &DensityModel,
    model_params: &[S],
    layout: Layout,
    params: &[S],
    grid: &Grid2D,
) -> Result<S> {
    let d = model.dim();
    let kind = model.stencil_kind();
    let offsets = kind.offsets();
    let (rows, cols) = (grid.rows(), grid.cols());
    let values = lattice_values(layout, params, grid);
    let mut tuple = vec![params[0]; kind.points() * d];
    let mut total = params[0].lift(0.0);
    for i in 1..rows - 1 {
        for j in 0..cols {
            for (slot, &(di, dj)) in offsets.iter().enumerate() {
                let ii = (i as i64 + di) as usize;
                let jj = (j as i64 + dj).rem_euclid(cols as i64) as usize;
                let base = (ii * cols + jj) * d;
                tuple[slot * d..(slot + 1) * d].copy_from_slice(&values[base..base + d]);
            }
            let r = del_residual_with(model, model_params, &tuple)?;
            for rp in r {
                total = total + rp.sq();
            }
        }
    }
    Ok(total)
}

/// Travelling-wave data-fidelity loss: squared field-equation residuals of
/// the filled lattice, summed over interior vertices and all columns.
pub fn tw_residual_loss(
    model: &DensityModel,
    profile: &WaveProfile,
    grid: &Grid2D,
) -> Result<f64> {
    check_compatible(model, profile, grid)?;
    residual_loss(model, model.params(), Layout::of(profile), &profile.pack(), grid)
}

/// `|‖f‖² − 1|` for the discrete L² norm at spacing `dx`.
pub fn unit_norm_loss(profile: &WaveProfile, dx: f64) -> f64 {
    (profile.norm_sq(dx) - 1.0).abs()
}

/// Worst field-equation residual (∞-norm over components and interior
/// vertices) of the lattice filled with the travelling-wave ansatz.
pub fn max_tw_residual(
    model: &DensityModel,
    profile: &WaveProfile,
    grid: &Grid2D,
) -> Result<f64> {
    check_compatible(model, profile, grid)?;
    let d = model.dim();
    let kind = model.stencil_kind();
    let offsets = kind.offsets();
    let (rows, cols) = (grid.rows(), grid.cols());
    let layout = Layout::of(profile);
    let params = profile.pack();
    let values = lattice_values(layout, &params, grid);
    let mut tuple = vec![0.0; kind.points() * d];
    let mut worst = 0.0f64;
    for i in 1..rows - 1 {
        for j in 0..cols {
            for (slot, &(di, dj)) in offsets.iter().enumerate() {
                let ii = (i as i64 + di) as usize;
                let jj = (j as i64 + dj).rem_euclid(cols as i64) as usize;
                let base = (ii * cols + jj) * d;
                tuple[slot * d..(slot + 1) * d].copy_from_slice(&values[base..base + d]);
            }
            for rp in del_residual_with(model, model.params(), &tuple)? {
                worst = worst.max(rp.abs());
            }
        }
    }
    Ok(worst)
}

/// The grid filled with `u^i_j = f(jΔx − c·iΔt)` as a plain field.
pub fn fill_travelling_wave(profile: &WaveProfile, grid: &Grid2D) -> Result<Field> {
    let layout = Layout::of(profile);
    let params = profile.pack();
    Field::from_data(*grid, profile.dim(), lattice_values(layout, &params, grid))
}

#[derive(Debug, Clone)]
pub struct TwConfig {
    pub steps: usize,
    /// Peak Adam learning rate on the wave speed.
    pub lr_speed: f64,
    /// Peak Adam learning rate on the Fourier coefficients.
    pub lr_modes: f64,
    /// Weight of the unit-norm penalty in the search objective.
    pub unit_weight: f64,
    /// Fraction of the run spent at the peak learning rate before the cosine
    /// decay tail begins. The approach phase needs sustained step sizes (the
    /// noisy start first sheds amplitude, and the speed only feels a
    /// gradient once the profile regrows); the tail gives endgame precision.
    pub hold: f64,
    /// Fraction of the run spent settling the coefficients with the speed
    /// frozen before anything touches the speed. Noise on high modes feels
    /// enormous residual gradients (they amplify like κ⁴) and would otherwise
    /// drag the speed toward the high modes' own wave speeds; with the speed
    /// pinned, Adam parks the noise at zero and keeps the dominant mode.
    pub settle: f64,
    /// Half-width of a deterministic scan over the wave speed after the
    /// settling phase (0 disables it). The residual loss is highly
    /// oscillatory in the speed — finite-lattice interference makes basins
    /// only a few tenths wide — so the speed is snapped to the best value on
    /// a coarse grid before the joint polish.
    pub scan_halfwidth: f64,
    /// Number of speeds evaluated in the scan.
    pub scan_points: usize,
    /// Total objective below which the search parks (an exact wave must not
    /// be walked away from: Adam steps are learning-rate sized even for
    /// vanishing gradients).
    pub stop_tol: f64,
}

impl Default for TwConfig {
    fn default() -> Self {
        TwConfig {
            steps: 5000,
            lr_speed: 0.01,
            lr_modes: 0.005,
            unit_weight: 1.0,
            hold: 0.5,
            settle: 0.1,
            scan_halfwidth: 1.0,
            scan_points: 201,
            stop_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TwRun {
    pub profile: WaveProfile,
    pub residual_loss: f64,
    pub unit_loss: f64,
    pub max_residual: f64,
    /// Steps actually taken; short counts mean the search parked at
    /// `stop_tol` or rolled back a non-finite step.
    pub steps_run: usize,
    /// Total objective before each completed step.
    pub history: Vec<f64>,
}

/// The three-phase wave search on a packed `[speed, coefficients…]` vector —
/// coefficients-only settling at a frozen speed, a coarse scan snapping the
/// speed to the best basin, and a joint Adam polish under a held-then-cosine
/// learning-rate schedule. Works for any objective with that parameter
/// shape; `objective` is the differentiated path, `probe` the plain one the
/// scan evaluates. A non-finite objective aborts the descent and restores
/// the last finite iterate. Returns the steps taken and the objective
/// history.
pub(crate) fn descend(
    params: &mut [f64],
    cfg: &TwConfig,
    objective: impl Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
    probe: impl Fn(&[f64]) -> Result<f64>,
) -> Result<(usize, Vec<f64>)> {
    let settle_steps = (cfg.settle.clamp(0.0, 1.0) * cfg.steps as f64).floor() as usize;
    let mut speed_adam = Adam::new(1, AdamConfig { lr: cfg.lr_speed, ..AdamConfig::default() });
    let mut mode_adam =
        Adam::new(params.len() - 1, AdamConfig { lr: cfg.lr_modes, ..AdamConfig::default() });
    let mut history = Vec::new();
    let mut steps_run = 0;
    let mut prev = params.to_vec();
    for step in 0..cfg.steps {
        if step == settle_steps && cfg.scan_halfwidth > 0.0 && cfg.scan_points > 1 {
            // Residual roots come in near-degenerate pairs when the window
            // straddles a wave and its mirror running the other way; among
            // near-ties the speed closest to the starting guess wins.
            let mut candidates = Vec::with_capacity(cfg.scan_points);
            for k in 0..cfg.scan_points {
                let t = k as f64 / (cfg.scan_points - 1) as f64;
                let c = prev[0] + cfg.scan_halfwidth * (2.0 * t - 1.0);
                params[0] = c;
                let value = probe(params)?;
                if value.is_finite() {
                    candidates.push((value, c));
                }
            }
            let floor = candidates.iter().map(|&(v, _)| v).fold(f64::INFINITY, f64::min);
            params[0] = candidates
                .iter()
                .filter(|&&(v, _)| v <= 10.0 * floor)
                .min_by(|a, b| (a.1 - prev[0]).abs().total_cmp(&(b.1 - prev[0]).abs()))
                .map_or(prev[0], |&(_, c)| c);
            // The scan jumps the iterate, and the settle phase's gradients
            // dwarf the polish phase's; stale second moments would throttle
            // every later step, so the coefficient optimizer restarts here.
            mode_adam =
                Adam::new(params.len() - 1, AdamConfig { lr: cfg.lr_modes, ..AdamConfig::default() });
        }
        let (value, grad) = objective(params)?;
        if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            params.copy_from_slice(&prev);
            break;
        }
        prev.copy_from_slice(params);
        history.push(value);
        if value <= cfg.stop_tol {
            break;
        }
        let (head, tail) = params.split_at_mut(1);
        if step < settle_steps {
            mode_adam.step(tail, &grad[1..]);
        } else {
            let t = (step - settle_steps) as f64;
            let span = (cfg.steps - settle_steps) as f64;
            let hold = (cfg.hold.clamp(0.0, 1.0) * span).floor();
            let decay = if t < hold {
                1.0
            } else {
                0.5 * (1.0 + (PI * (t - hold) / (span - hold).max(1.0)).cos())
            };
            speed_adam.set_lr(cfg.lr_speed * decay);
            mode_adam.set_lr(cfg.lr_modes * decay);
            speed_adam.step(head, &grad[..1]);
            mode_adam.step(tail, &grad[1..]);
        }
        steps_run = step + 1;
    }
    Ok((steps_run, history))
}

/// Search for a travelling wave of the model: minimizes the residual loss
/// plus the unit-norm penalty over speed and coefficients with the
/// three-phase descent.
pub fn locate_travelling_wave(
    model: &DensityModel,
    initial: &WaveProfile,
    grid: &Grid2D,
    cfg: &TwConfig,
) -> Result<TwRun> {
    check_compatible(model, initial, grid)?;
    let layout = Layout::of(initial);
    let mut params = initial.pack();
    let objective = |p: &[f64]| {
        tape::value_and_grad(p, |_, vars| {
            let proto = vars[0];
            let model_params: Vec<_> = model.params().iter().map(|&q| proto.lift(q)).collect();
            let data = residual_loss(model, &model_params, layout, vars, grid)?;
            let unit = layout.unit_loss(vars, grid.dx).scale(cfg.unit_weight);
            Ok(data + unit)
        })
    };
    let probe = |p: &[f64]| {
        Ok(residual_loss(model, model.params(), layout, p, grid)?
            + cfg.unit_weight * layout.unit_loss(p, grid.dx))
    };
    let (steps_run, history) = descend(&mut params, cfg, objective, probe)?;
    let profile = layout.unpack(&params);
    let residual = tw_residual_loss(model, &profile, grid)?;
    let unit = unit_norm_loss(&profile, grid.dx);
    let max_residual = max_tw_residual(model, &profile, grid)?;
    Ok(TwRun { profile, residual_loss: residual, unit_loss: unit, max_residual, steps_run, history })
}

/// Search-objective gradient (residual loss + weighted unit penalty) w.r.t.
/// the packed profile parameters, aligned with [`WaveProfile::pack`].
pub fn tw_objective_gradient(
    model: &DensityModel,
    profile: &WaveProfile,
    grid: &Grid2D,
    unit_weight: f64,
) -> Result<(f64, Vec<f64>)> {
    check_compatible(model, profile, grid)?;
    let layout = Layout::of(profile);
    tape::value_and_grad(&profile.pack(), |_, vars| {
        let proto = vars[0];
        let model_params: Vec<_> = model.params().iter().map(|&p| proto.lift(p)).collect();
        let data = residual_loss(model, &model_params, layout, vars, grid)?;
        let unit = layout.unit_loss(vars, grid.dx).scale(unit_weight);
        Ok(data + unit)
    })
}

/// Action of the model restricted to travelling waves of the profile's
/// speed, integrated over one period by the rectangle rule on a ξ-grid of
/// resolution `Δx` (exact for trigonometric integrands below the grid's
/// aliasing limit). At a wave that solves the field equations this
/// functional is stationary in the coefficients.
pub fn restricted_action(
    model: &DensityModel,
    profile: &WaveProfile,
    grid: &Grid2D,
) -> Result<f64> {
    let layout = Layout::of(profile);
    restricted_action_with(model, model.params(), layout, &profile.pack(), grid)
}

/// Gradient of [`restricted_action`] w.r.t. the packed profile parameters
/// (entry 0 is the speed sensitivity; stationarity statements concern the
/// coefficient entries).
pub fn restricted_action_gradient(
    model: &DensityModel,
    profile: &WaveProfile,
    grid: &Grid2D,
) -> Result<Vec<f64>> {
    let layout = Layout::of(profile);
    let (_, g) = tape::value_and_grad(&profile.pack(), |_, vars| {
        let proto = vars[0];
        let model_params: Vec<_> = model.params().iter().map(|&p| proto.lift(p)).collect();
        restricted_action_with(model, &model_params, layout, vars, grid)
    })?;
    Ok(g)
}

fn restricted_action_with<S: Scalar>(
    model: &DensityModel,
    model_params: &[S],
    layout: Layout,
    params: &[S],
    grid: &Grid2D,
) -> Result<S> {
    if model.dim() != layout.d {
        return Err(Error::Shape(format!(
            "density has {} components per node, profile has {}",
            model.dim(),
            layout.d
        )));
    }
    let n = (layout.period / grid.dx).round().max(1.0) as usize;
    let dxi = layout.period / n as f64;
    let d = layout.d;
    let arity = model.arity();
    // per-cell node positions of the ansatz: ξ-offsets paired with the
    // factor multiplying the speed (time steps move the argument by −cΔt)
    let nodes: &[(f64, f64)] = match arity {
        3 => &[(0.0, 0.0), (0.0, -grid.dt), (grid.dx, 0.0)],
        4 => &[(0.0, 0.0), (0.0, -grid.dt), (grid.dx, 0.0), (grid.dx, -grid.dt)],
        a => {
            return Err(Error::Capability(format!(
                "the travelling-wave action covers 3- and 4-point densities, not arity {a}"
            )))
        }
    };
    let mut cell = vec![params[0]; arity * d];
    let mut total = params[0].lift(0.0);
    for k in 0..n {
        let xi = k as f64 * dxi;
        for (slot, &(off, shift)) in nodes.iter().enumerate() {
            for comp in 0..d {
                cell[slot * d + comp] = layout.eval(params, comp, xi + off, shift);
            }
        }
        total = total + model.eval_with(model_params, &cell)?;
    }
    Ok(total.scale(dxi))
}
