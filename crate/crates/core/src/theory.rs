//! Reference discrete field theories and data generation.
//!
//! Provides the analytic densities for the discrete wave and Schrödinger
//! equations together with independent oracles for their field equations
//! (a five-point explicit wave update, a hand-assembled nine-point
//! Schrödinger residual), lattice dispersion relations with exact
//! travelling-wave and plane-wave builders, and the seeded random initial
//! data + trajectory generation used to create training sets.

use crate::density::{DensityModel, Polynomial, SchrodingerDensity, WaveDensity};
use crate::error::{Error, Result};
use crate::lattice::{Field, Grid2D, SpatialBc};
use crate::seed;
use crate::solver::{propagate, InitialData, NewtonConfig, PropagationMode};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use std::f64::consts::PI;

/// `V(u) = u²/2`.
pub fn quadratic_potential() -> Polynomial {
    Polynomial(vec![0.0, 0.0, 0.5])
}

/// `V(r) = r` for the squared modulus `r = ‖ψ‖²`.
pub fn linear_modulus_potential() -> Polynomial {
    Polynomial(vec![0.0, 1.0])
}

pub fn wave_density(dt: f64, dx: f64) -> Result<DensityModel> {
    wave_density_with(dt, dx, quadratic_potential())
}

pub fn wave_density_with(dt: f64, dx: f64, potential: Polynomial) -> Result<DensityModel> {
    Ok(DensityModel::Wave(WaveDensity::new(dt, dx, potential)?))
}

pub fn schrodinger_density(dt: f64, dx: f64, hbar: f64) -> Result<DensityModel> {
    schrodinger_density_with(dt, dx, hbar, linear_modulus_potential())
}

pub fn schrodinger_density_with(
    dt: f64,
    dx: f64,
    hbar: f64,
    potential: Polynomial,
) -> Result<DensityModel> {
    Ok(DensityModel::Schrodinger(SchrodingerDensity::new(dt, dx, hbar, potential)?))
}

/// Explicit five-point update of the discrete wave equation:
/// `u⁺_j = 2u_j − u⁻_j + (Δt²/Δx²)(u_{j−1} − 2u_j + u_{j+1}) − Δt² V′(u_j)`.
/// Independent oracle for the Newton-based solvers. Dirichlet boundaries are
/// held at their current values.
pub fn wave_explicit_step(
    density: &WaveDensity,
    bc: SpatialBc,
    prev: &[f64],
    curr: &[f64],
) -> Result<Vec<f64>> {
    if prev.len() != curr.len() || curr.len() < 3 {
        return Err(Error::Shape("slices must match and hold at least 3 columns".into()));
    }
    let n = curr.len();
    let r2 = (density.dt / density.dx) * (density.dt / density.dx);
    let dt2 = density.dt * density.dt;
    let mut next = curr.to_vec();
    let (jlo, jhi) = match bc {
        SpatialBc::Periodic => (0, n),
        SpatialBc::Dirichlet => (1, n - 1),
    };
    for j in jlo..jhi {
        let (jm, jp) = match bc {
            SpatialBc::Periodic => ((j + n - 1) % n, (j + 1) % n),
            SpatialBc::Dirichlet => (j - 1, j + 1),
        };
        next[j] = 2.0 * curr[j] - prev[j] + r2 * (curr[jm] - 2.0 * curr[j] + curr[jp])
            - dt2 * density.potential.d1(curr[j]);
    }
    Ok(next)
}

/// Hand-assembled nine-point Schrödinger residual at the central vertex of a
/// canonical tuple (18 values, row-major in time/space, (re, im) per node):
///
/// `−2ħJ⁻¹D_t + 2D̃_x² − ½ Σ_cells V′(‖m‖²) m`
///
/// with `D_t` the (1,2,1)-column-weighted centred time difference over
/// `8Δt`, `D̃_x²` the (1,2,1)-row-weighted second space difference over
/// `4Δx²`, and the potential term summed over the four adjacent cells.
/// Written directly from the difference operators as an independent check on
/// the generic assembly from density gradients.
#[allow(clippy::needless_range_loop)]
pub fn schrodinger_del_vertex(density: &SchrodingerDensity, tuple: &[f64]) -> Result<[f64; 2]> {
    if tuple.len() != 18 {
        return Err(Error::Shape(format!("expected 18 tuple values, got {}", tuple.len())));
    }
    let at = |ti: usize, sj: usize, p: usize| tuple[(ti * 3 + sj) * 2 + p];
    let mut out = [0.0; 2];

    // time difference, columns weighted 1, 2, 1
    let mut dt_op = [0.0; 2];
    for (sj, w) in [(0, 1.0), (1, 2.0), (2, 1.0)] {
        for p in 0..2 {
            dt_op[p] += w * (at(2, sj, p) - at(0, sj, p));
        }
    }
    for p in 0..2 {
        dt_op[p] /= 8.0 * density.dt;
    }
    // −2ħ J⁻¹ D_t with J⁻¹(v₀, v₁) = (v₁, −v₀)
    out[0] += -2.0 * density.hbar * dt_op[1];
    out[1] += 2.0 * density.hbar * dt_op[0];

    // second space difference, rows weighted 1, 2, 1
    for (ti, w) in [(0, 1.0), (1, 2.0), (2, 1.0)] {
        for p in 0..2 {
            out[p] += 2.0 * w * (at(ti, 0, p) - 2.0 * at(ti, 1, p) + at(ti, 2, p))
                / (4.0 * density.dx * density.dx);
        }
    }

    // potential term over the four adjacent cells; each cell's corner is the
    // lower-left of a 2x2 block in the tuple
    for (ti, sj) in [(1, 1), (0, 1), (1, 0), (0, 0)] {
        let m = [
            0.25 * (at(ti, sj, 0) + at(ti + 1, sj, 0) + at(ti, sj + 1, 0) + at(ti + 1, sj + 1, 0)),
            0.25 * (at(ti, sj, 1) + at(ti + 1, sj, 1) + at(ti, sj + 1, 1) + at(ti + 1, sj + 1, 1)),
        ];
        let vp = density.potential.d1(m[0] * m[0] + m[1] * m[1]);
        for p in 0..2 {
            out[p] -= 0.5 * vp * m[p];
        }
    }
    Ok(out)
}

/// Builds a field by sampling `f(t, x)` at the lattice nodes (writing `d`
/// components into the provided slice).
pub fn field_from_fn(
    grid: Grid2D,
    d: usize,
    f: impl Fn(f64, f64, &mut [f64]),
) -> Field {
    let mut field = Field::zeros(grid, d);
    for i in 0..grid.rows() {
        let t = i as f64 * grid.dt;
        for j in 0..grid.cols() {
            let x = j as f64 * grid.dx;
            f(t, x, field.node_mut(i, j));
        }
    }
    field
}

/// Lattice dispersion of the discrete wave equation with a quadratic
/// potential of curvature `beta` (`V″ ≡ beta`): solves
/// `cos(κcΔt) = 1 − βΔt²/2 + (Δt²/Δx²)(cos(κΔx) − 1)`
/// for the travelling-wave speed `c` of spatial mode `mode` on period `b`.
pub fn wave_dispersion_speed(dt: f64, dx: f64, b: f64, mode: usize, beta: f64) -> Result<f64> {
    if mode == 0 || b <= 0.0 {
        return Err(Error::Input("need a positive period and a nonzero mode".into()));
    }
    let kappa = 2.0 * PI * mode as f64 / b;
    let rhs = 1.0 - beta * dt * dt / 2.0 + (dt / dx) * (dt / dx) * ((kappa * dx).cos() - 1.0);
    if !(-1.0..=1.0).contains(&rhs) {
        return Err(Error::Input(format!(
            "mode {mode} does not propagate on this lattice (cos(κcΔt) = {rhs})"
        )));
    }
    Ok(rhs.acos() / (kappa * dt))
}

/// Continuum travelling-wave speed of the wave equation with `V″ = beta`:
/// `c² = 1 + β b²/(4π²m²)`.
pub fn wave_continuum_speed(b: f64, mode: usize, beta: f64) -> f64 {
    let kappa = 2.0 * PI * mode as f64 / b;
    (1.0 + beta / (kappa * kappa)).sqrt()
}

/// Lattice dispersion of the discrete Schrödinger equation with a linear
/// modulus potential of slope `beta` (`V′ ≡ beta`): plane waves
/// `ψ = α e^{iκ(x − ct)}` propagate at
/// `c = (2/(κΔt)) (arctan[(2Δt/(ħΔx²)) tan²(κΔx/2) + βΔt/(2ħ)] + sπ)`
/// for any integer branch `s`.
pub fn schrodinger_dispersion_speed(
    dt: f64,
    dx: f64,
    b: f64,
    hbar: f64,
    beta: f64,
    mode: usize,
    branch: i64,
) -> Result<f64> {
    if mode == 0 || b <= 0.0 {
        return Err(Error::Input("need a positive period and a nonzero mode".into()));
    }
    let kappa = 2.0 * PI * mode as f64 / b;
    let half = kappa * dx / 2.0;
    let rhs = 2.0 * dt / (hbar * dx * dx) * half.tan().powi(2) + beta * dt / (2.0 * hbar);
    Ok(2.0 * (rhs.atan() + branch as f64 * PI) / (kappa * dt))
}

/// Spurious lattice travelling-wave speeds of the discrete Schrödinger
/// equation: at `κcΔt = (2m̃+1)π` the alternating-sign mode makes every term
/// of the field equations vanish, giving `c = b(2m̃+1)/(2mΔt)` independent of
/// the profile amplitude. Artifacts of the discretization, not continuum
/// solutions.
pub fn schrodinger_spurious_speed(dt: f64, b: f64, mode: usize, m_tilde: usize) -> Result<f64> {
    if mode == 0 || b <= 0.0 {
        return Err(Error::Input("need a positive period and a nonzero mode".into()));
    }
    Ok(b * (2 * m_tilde + 1) as f64 / (2.0 * mode as f64 * dt))
}

/// Continuum plane-wave speed of the Schrödinger equation:
/// `c = ħκ/2... ` — for `iħψ_t = −ψ_xx + V′(|ψ|²)ψ` with `V′ ≡ beta`:
/// `ω = (κ² + β)/ħ`, so `c = ω/κ = κ/ħ + β/(κħ)`.
pub fn schrodinger_continuum_speed(b: f64, mode: usize, hbar: f64, beta: f64) -> f64 {
    let kappa = 2.0 * PI * mode as f64 / b;
    kappa / hbar + beta / (kappa * hbar)
}

/// Single-mode travelling wave `u(t, x) = A cos(2πm(x − ct)/b)`.
pub fn wave_travelling_mode(grid: Grid2D, mode: usize, amplitude: f64, speed: f64) -> Field {
    let kappa = 2.0 * PI * mode as f64 / grid.period();
    field_from_fn(grid, 1, |t, x, out| {
        out[0] = amplitude * (kappa * (x - speed * t)).cos();
    })
}

/// Plane wave `ψ(t, x) = A e^{iκ(x − ct)}` stored as (re, im).
pub fn schrodinger_plane_wave(grid: Grid2D, mode: usize, amplitude: f64, speed: f64) -> Field {
    let kappa = 2.0 * PI * mode as f64 / grid.period();
    field_from_fn(grid, 2, |t, x, out| {
        let phase = kappa * (x - speed * t);
        out[0] = amplitude * phase.cos();
        out[1] = amplitude * phase.sin();
    })
}

/// Inverse real FFT with FFTW-style `1/M` normalization, written as a direct
/// cosine sum (the coefficient counts here are tiny):
/// `x_j = (1/M) [γ₀ + 2 Σ_{k=1}^{⌈M/2⌉−1} γ_k cos(2πjk/M) + γ_{M/2} cos(πj)]`
/// with the Nyquist term present only for even `M`. Coefficients are real,
/// so profiles are even cosine series.
pub fn irfft_real(gamma: &[f64], m: usize) -> Result<Vec<f64>> {
    if gamma.len() != m / 2 + 1 {
        return Err(Error::Shape(format!(
            "expected {} spectral coefficients for {} samples, got {}",
            m / 2 + 1,
            m,
            gamma.len()
        )));
    }
    let mut x = vec![0.0; m];
    for (j, xj) in x.iter_mut().enumerate() {
        let mut acc = gamma[0];
        for (k, &g) in gamma.iter().enumerate().skip(1) {
            let w = if m.is_multiple_of(2) && k == m / 2 { 1.0 } else { 2.0 };
            acc += w * g * (2.0 * PI * (j * k) as f64 / m as f64).cos();
        }
        *xj = acc / m as f64;
    }
    Ok(x)
}

/// Forward real FFT (unnormalized cosine part), the inverse of
/// [`irfft_real`] for even real spectra.
pub fn rfft_real(x: &[f64]) -> Vec<f64> {
    let m = x.len();
    (0..=m / 2)
        .map(|k| {
            x.iter()
                .enumerate()
                .map(|(j, &xj)| xj * (2.0 * PI * (j * k) as f64 / m as f64).cos())
                .sum()
        })
        .collect()
}

/// Smooth random periodic profile: spectral coefficients
/// `γ_k = M e^{−2k⁴} η_k` with `η_k` standard normal, transformed by
/// [`irfft_real`]. The sharp spectral decay keeps profiles dominated by the
/// lowest modes.
pub fn random_profile(m: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let gamma: Vec<f64> = (0..=m / 2)
        .map(|k| {
            let eta: f64 = StandardNormal.sample(rng);
            m as f64 * (-2.0 * (k as f64).powi(4)).exp() * eta
        })
        .collect();
    irfft_real(&gamma, m)
}

/// Initial data for second-order-in-time theories: a smooth random profile
/// and i.i.d. standard-normal velocities.
pub fn random_initial_data(m: usize, rng: &mut ChaCha8Rng) -> Result<(Vec<f64>, Vec<f64>)> {
    let positions = random_profile(m, rng)?;
    let velocities = (0..m).map(|_| StandardNormal.sample(rng)).collect();
    Ok((positions, velocities))
}

/// Generates `count` reference trajectories of `model` on `grid`, each from
/// independent seeded random initial data. Second-order models start from
/// (positions, velocities); velocity-linear models from positions alone.
/// Trajectory `k` depends only on `(master_seed, k)`, so subsets are
/// reproducible regardless of `count` or thread scheduling.
pub fn generate_trajectories(
    model: &DensityModel,
    grid: &Grid2D,
    count: usize,
    master_seed: u64,
) -> Result<Vec<Field>> {
    generate_trajectories_scaled(model, grid, count, master_seed, 1.0)
}

/// [`generate_trajectories`] with the random initial data multiplied by
/// `amplitude`; zero amplitude yields the zero solution of homogeneous
/// theories. Unit amplitude reproduces the unscaled generator bit for bit.
pub fn generate_trajectories_scaled(
    model: &DensityModel,
    grid: &Grid2D,
    count: usize,
    master_seed: u64,
    amplitude: f64,
) -> Result<Vec<Field>> {
    let cols = grid.cols();
    let d = model.dim();
    let cfg = NewtonConfig::default();
    (0..count)
        .into_par_iter()
        .map(|k| {
            let mut rng =
                ChaCha8Rng::seed_from_u64(seed::split(master_seed, &format!("trajectory/{k}")));
            let mut positions = Vec::with_capacity(cols * d);
            let mut velocities = Vec::with_capacity(cols * d);
            // one independent profile per component, interleaved node-major
            let mut profiles = Vec::with_capacity(d);
            for _ in 0..d {
                profiles.push(random_profile(cols, &mut rng)?);
            }
            for j in 0..cols {
                for profile in &profiles {
                    positions.push(profile[j] * amplitude);
                }
            }
            if !model.is_velocity_linear() {
                for _ in 0..cols * d {
                    let v: f64 = StandardNormal.sample(&mut rng);
                    velocities.push(v * amplitude);
                }
            }
            let init = if model.is_velocity_linear() {
                InitialData::PositionOnly { positions: &positions }
            } else {
                InitialData::PositionVelocity { positions: &positions, velocities: &velocities }
            };
            let run = propagate(model, init, grid.n_t, grid, &cfg, PropagationMode::Timeslice)?;
            Ok(run.field)
        })
        .collect()
}
