//! Reduced-order baseline: PCA of spatial slices, a two-node latent
//! Lagrangian on the reduced coordinates, latent training and propagation,
//! and a travelling-wave search over the projected lattice fill.
//!
//! The reduction is linear: `pr(u) = A′ᵀu` and `R(q) = A′q` with `A′` the
//! leading left singular vectors of the snapshot matrix, so `pr ∘ R` is the
//! identity on the latent space. Time slices of a trajectory become a chain
//! `q⁰, q¹, …` in the reduced space, and a two-node density `L(qⁱ, qⁱ⁺¹)`
//! plays the role the space-time cell densities play on the full lattice.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::density::{del_residual_with, DensityModel};
use crate::error::{Error, Result};
use crate::lattice::{Field, Grid2D, SpatialBc};
use crate::linalg::inv_norm_sq_estimate;
use crate::scalar::Scalar;
use crate::seed;
use crate::solver::{solve_stencil, NewtonConfig};
use crate::tape;
use crate::train::{Adam, AdamConfig, BatchEval, EpochStats, REG_CAP};
use crate::tw::{self, Layout, TwConfig, TwRun, WaveProfile};

/// Linear projection/reconstruction pair from a principal component
/// analysis of spatial slices.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaMap {
    /// Orthonormal columns, `full_dim × reduced_dim`.
    basis: DMatrix<f64>,
    /// Full singular-value spectrum of the snapshot matrix the basis came
    /// from (empty for bases loaded from elsewhere).
    pub singular_values: Vec<f64>,
    /// Basis columns past the numerical rank of the snapshots. They are
    /// still orthonormal singular directions, but carry no data variance;
    /// a nonzero count flags a rank-deficient fit.
    pub padded: usize,
}

fn orthonormality_defect(basis: &DMatrix<f64>) -> f64 {
    let gram = basis.transpose() * basis;
    let mut worst = 0.0f64;
    for r in 0..gram.nrows() {
        for c in 0..gram.ncols() {
            let want = if r == c { 1.0 } else { 0.0 };
            worst = worst.max((gram[(r, c)] - want).abs());
        }
    }
    worst
}

impl PcaMap {
    /// Wraps an existing basis (e.g. one read back from disk). Columns must
    /// be orthonormal to 1e-12.
    pub fn from_basis(basis: DMatrix<f64>) -> Result<Self> {
        if basis.ncols() == 0 || basis.ncols() > basis.nrows() {
            return Err(Error::Sizing(format!(
                "a {}×{} matrix is not a reduction basis",
                basis.nrows(),
                basis.ncols()
            )));
        }
        let defect = orthonormality_defect(&basis);
        if defect > 1e-12 {
            return Err(Error::Input(format!(
                "basis columns are not orthonormal (defect {defect:.3e})"
            )));
        }
        Ok(PcaMap { basis, singular_values: Vec::new(), padded: 0 })
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn full_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn reduced_dim(&self) -> usize {
        self.basis.ncols()
    }

    /// `pr(u) = A′ᵀu`.
    pub fn project(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.full_dim() {
            return Err(Error::Shape(format!(
                "cannot project a vector of length {} through a {}-dimensional basis",
                u.len(),
                self.full_dim()
            )));
        }
        let v = DVector::from_column_slice(u);
        Ok((self.basis.transpose() * v).iter().copied().collect())
    }

    /// `R(q) = A′q`.
    pub fn lift(&self, q: &[f64]) -> Result<Vec<f64>> {
        if q.len() != self.reduced_dim() {
            return Err(Error::Shape(format!(
                "cannot lift {} latent coordinates from a rank-{} basis",
                q.len(),
                self.reduced_dim()
            )));
        }
        let v = DVector::from_column_slice(q);
        Ok((&self.basis * v).iter().copied().collect())
    }

    /// Projects every time slice of a field, oldest first.
    pub fn project_rows(&self, field: &Field) -> Result<Vec<Vec<f64>>> {
        (0..field.grid.rows()).map(|i| self.project(field.row(i))).collect()
    }

    /// Lifts a latent chain back to a field on `grid` with `d` components
    /// per node.
    pub fn lift_trajectory(&self, latent: &[Vec<f64>], grid: Grid2D, d: usize) -> Result<Field> {
        if latent.len() != grid.rows() {
            return Err(Error::Shape(format!(
                "{} latent points cannot fill {} time levels",
                latent.len(),
                grid.rows()
            )));
        }
        if self.full_dim() != grid.cols() * d {
            return Err(Error::Shape(format!(
                "basis rows {} do not match {} columns × {} components",
                self.full_dim(),
                grid.cols(),
                d
            )));
        }
        let mut field = Field::zeros(grid, d);
        for (i, q) in latent.iter().enumerate() {
            field.row_mut(i).copy_from_slice(&self.lift(q)?);
        }
        Ok(field)
    }
}

/// Stacks the time slices of the given trajectories as columns of one
/// matrix, trajectory by trajectory, oldest slice first.
pub fn snapshot_matrix(fields: &[Field]) -> Result<DMatrix<f64>> {
    let Some(first) = fields.first() else {
        return Err(Error::Sizing("no trajectories to take snapshots from".into()));
    };
    let m = first.grid.cols() * first.d;
    let mut data = Vec::new();
    let mut cols = 0;
    for f in fields {
        if f.grid.cols() * f.d != m {
            return Err(Error::Shape(format!(
                "snapshot slices must all hold {m} values, got {}",
                f.grid.cols() * f.d
            )));
        }
        for i in 0..f.grid.rows() {
            data.extend_from_slice(f.row(i));
            cols += 1;
        }
    }
    Ok(DMatrix::from_column_slice(m, cols, &data))
}

/// Fits the reduction basis: the first `m_red` left singular vectors of the
/// snapshot matrix. The snapshots enter the decomposition as they are — no
/// mean-centering — matching the convention of projecting raw slices. When
/// the snapshots have rank below `m_red`, the basis is padded with further
/// singular directions and [`PcaMap::padded`] records how many.
pub fn fit_pca(snapshots: &DMatrix<f64>, m_red: usize) -> Result<PcaMap> {
    let (m, k) = (snapshots.nrows(), snapshots.ncols());
    if m_red == 0 || m_red > m.min(k) {
        return Err(Error::Sizing(format!(
            "cannot keep {m_red} directions of a {m}×{k} snapshot matrix"
        )));
    }
    let svd = snapshots.clone().svd(true, false);
    let u = svd.u.ok_or_else(|| Error::Misuse("singular vectors were not computed".into()))?;
    let singular_values: Vec<f64> = svd.singular_values.iter().copied().collect();
    let tol = singular_values[0] * m.max(k) as f64 * f64::EPSILON;
    let rank = singular_values.iter().filter(|&&s| s > tol).count();
    let basis = u.columns(0, m_red).into_owned();
    let defect = orthonormality_defect(&basis);
    if defect > 1e-12 {
        return Err(Error::Input(format!(
            "decomposition produced a non-orthonormal basis (defect {defect:.3e})"
        )));
    }
    Ok(PcaMap { basis, singular_values, padded: m_red.saturating_sub(rank) })
}

/// Mean relative two-norm error `‖u − R(pr(u))‖/‖u‖` over snapshot columns.
#[derive(Debug, Clone, Copy)]
pub struct ReconstructionError {
    pub mean: f64,
    /// Zero columns carry no relative error and are left out of the mean.
    pub skipped: usize,
}

pub fn reconstruction_error(map: &PcaMap, snapshots: &DMatrix<f64>) -> Result<ReconstructionError> {
    if snapshots.nrows() != map.full_dim() {
        return Err(Error::Shape(format!(
            "snapshot rows {} do not match the basis dimension {}",
            snapshots.nrows(),
            map.full_dim()
        )));
    }
    let mut sum = 0.0;
    let mut counted = 0usize;
    let mut skipped = 0usize;
    for c in 0..snapshots.ncols() {
        let u = snapshots.column(c);
        let norm = u.norm();
        if norm == 0.0 {
            skipped += 1;
            continue;
        }
        let recon = &map.basis * (map.basis.transpose() * u);
        sum += (u - recon).norm() / norm;
        counted += 1;
    }
    Ok(ReconstructionError { mean: if counted == 0 { 0.0 } else { sum / counted as f64 }, skipped })
}

/// Consecutive latent triples `[qⁱ⁻¹ | qⁱ | qⁱ⁺¹]` of every projected
/// trajectory, concatenated per triple — the training data of the latent
/// chain theory.
pub fn latent_triples(map: &PcaMap, fields: &[Field]) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::new();
    for f in fields {
        let qs = map.project_rows(f)?;
        for i in 1..qs.len().saturating_sub(1) {
            let mut t = Vec::with_capacity(3 * map.reduced_dim());
            t.extend_from_slice(&qs[i - 1]);
            t.extend_from_slice(&qs[i]);
            t.extend_from_slice(&qs[i + 1]);
            out.push(t);
        }
    }
    Ok(out)
}

fn check_chain_model(model: &DensityModel) -> Result<()> {
    if model.arity() != 2 {
        return Err(Error::Misuse(format!(
            "latent chains use two-node densities, got arity {}",
            model.arity()
        )));
    }
    Ok(())
}

/// Field equation of the latent chain at the middle point of a triple:
/// `∂/∂qⁱ (L(qⁱ⁻¹, qⁱ) + L(qⁱ, qⁱ⁺¹))`.
pub fn latent_del_residual(model: &DensityModel, triple: &[f64]) -> Result<Vec<f64>> {
    check_chain_model(model)?;
    crate::density::del_residual(model, triple)
}

fn latent_data_term<S: Scalar>(
    model: &DensityModel,
    params: &[S],
    proto: S,
    triple: &[f64],
) -> Result<S> {
    let x: Vec<S> = triple.iter().map(|&v| proto.lift(v)).collect();
    let r = del_residual_with(model, params, &x)?;
    let mut s = proto.lift(0.0);
    for ri in r {
        s = s + ri.sq();
    }
    Ok(s)
}

/// `‖(∂²L/∂qⁱ∂qⁱ⁺¹)⁻¹‖₂²` on the forward cell of a triple, estimated with a
/// few inverse vector iterations; a Cholesky breakdown of the degenerate
/// block reports the cap instead.
fn latent_reg_term<S: Scalar>(
    model: &DensityModel,
    params: &[S],
    proto: S,
    triple: &[f64],
    iterations: usize,
) -> Result<S> {
    let d = model.dim();
    let cell: Vec<S> = triple[d..3 * d].iter().map(|&v| proto.lift(v)).collect();
    let lam = model.hess_block_with(params, &cell, 0, 1)?;
    let start = vec![1.0; d];
    Ok(inv_norm_sq_estimate(&lam, d, iterations, &start).unwrap_or(proto.lift(REG_CAP)))
}

/// Summed squared chain residual over all triples (plain `f64` path).
pub fn latent_data_loss(model: &DensityModel, triples: &[Vec<f64>]) -> Result<f64> {
    check_chain_model(model)?;
    let terms: Vec<f64> = triples
        .par_iter()
        .map(|t| latent_data_term(model, model.params(), 0.0, t))
        .collect::<Result<_>>()?;
    Ok(terms.iter().sum())
}

/// Mean conditioning penalty over all triples (plain `f64` path); works for
/// untrainable analytic densities too.
pub fn latent_reg_value(
    model: &DensityModel,
    triples: &[Vec<f64>],
    iterations: usize,
) -> Result<f64> {
    check_chain_model(model)?;
    let terms: Vec<f64> = triples
        .par_iter()
        .map(|t| latent_reg_term(model, model.params(), 0.0, t, iterations))
        .collect::<Result<_>>()?;
    Ok(terms.iter().sum::<f64>() / terms.len().max(1) as f64)
}

#[derive(Debug, Clone, Copy)]
pub struct LatentTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    /// Weight of the conditioning penalty against the data term.
    pub reg_weight: f64,
    /// Inverse vector iterations behind the penalty estimate.
    pub reg_iterations: usize,
}

impl Default for LatentTrainConfig {
    fn default() -> Self {
        LatentTrainConfig {
            epochs: 2000,
            batch_size: 10,
            seed: 0,
            adam: AdamConfig::default(),
            reg_weight: 1e-8,
            reg_iterations: 3,
        }
    }
}

fn latent_batch_eval(
    model: &DensityModel,
    triples: &[Vec<f64>],
    batch: &[usize],
    cfg: &LatentTrainConfig,
) -> Result<BatchEval> {
    let at = model.params();
    let mut gradient = vec![0.0; at.len()];
    let data_terms: Vec<(f64, Vec<f64>)> = batch
        .par_iter()
        .map(|&i| tape::value_and_grad(at, |_, p| latent_data_term(model, p, p[0], &triples[i])))
        .collect::<Result<_>>()?;
    let mut data_loss = 0.0;
    for (v, g) in &data_terms {
        data_loss += v;
        for (gi, t) in gradient.iter_mut().zip(g) {
            *gi += t;
        }
    }
    let reg_terms: Vec<(f64, Vec<f64>)> = batch
        .par_iter()
        .map(|&i| {
            tape::value_and_grad(at, |_, p| {
                latent_reg_term(model, p, p[0], &triples[i], cfg.reg_iterations)
            })
        })
        .collect::<Result<_>>()?;
    let mut reg_loss = 0.0;
    let scale = cfg.reg_weight / reg_terms.len() as f64;
    for (v, g) in &reg_terms {
        reg_loss += v / reg_terms.len() as f64;
        for (gi, t) in gradient.iter_mut().zip(g) {
            *gi += scale * t;
        }
    }
    Ok(BatchEval { data_loss, reg_loss, gradient })
}

/// Adam loop on the latent density. The data term is the epoch sum of
/// squared chain residuals, the conditioning penalty an epoch-mean; the loop
/// aborts with the last finite parameters when a batch degenerates.
pub fn train_latent(
    model: &mut DensityModel,
    triples: &[Vec<f64>],
    cfg: &LatentTrainConfig,
) -> Result<Vec<EpochStats>> {
    check_chain_model(model)?;
    let n = model.param_len();
    if n == 0 {
        return Err(Error::Misuse("this density has no trainable parameters".into()));
    }
    if triples.is_empty() {
        return Err(Error::Sizing("cannot train on an empty set of triples".into()));
    }
    let want = 3 * model.dim();
    for t in triples {
        if t.len() != want {
            return Err(Error::Shape(format!(
                "latent triples must hold {want} values, got {}",
                t.len()
            )));
        }
    }
    let mut params = model.params().to_vec();
    let mut last_good = params.clone();
    let mut adam = Adam::new(n, cfg.adam);
    let mut history = Vec::with_capacity(cfg.epochs);
    let clock = std::time::Instant::now();
    for epoch in 0..cfg.epochs {
        let mut idx: Vec<usize> = (0..triples.len()).collect();
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed::split(cfg.seed, &format!("latent-epoch/{epoch}")));
        idx.shuffle(&mut rng);
        let batches: Vec<&[usize]> = idx.chunks(cfg.batch_size.max(1)).collect();
        let mut data_sum = 0.0;
        let mut reg_sum = 0.0;
        for (bi, batch) in batches.iter().enumerate() {
            let eval = latent_batch_eval(model, triples, batch, cfg)?;
            let finite = eval.data_loss.is_finite()
                && eval.reg_loss.is_finite()
                && eval.gradient.iter().all(|g| g.is_finite());
            if !finite {
                let what = if eval.data_loss.is_finite() && eval.reg_loss.is_finite() {
                    "gradient"
                } else {
                    "loss"
                };
                return Err(Error::NonFinite { what: what.into(), epoch, batch: bi, last_good });
            }
            data_sum += eval.data_loss;
            reg_sum += eval.reg_loss;
            adam.step(&mut params, &eval.gradient);
            model.set_params(&params)?;
        }
        let reg_mean = reg_sum / batches.len() as f64;
        history.push(EpochStats {
            epoch,
            data_loss: data_sum,
            reg_loss: reg_mean,
            total_loss: data_sum + cfg.reg_weight * reg_mean,
            wall_secs: clock.elapsed().as_secs_f64(),
        });
        last_good.copy_from_slice(&params);
    }
    Ok(history)
}

/// Marches the latent chain forward: each step solves the chain equation at
/// the newest point by Newton iteration, seeded by linear extrapolation (or
/// the previous point, per `cfg.guess`). Returns the whole chain including
/// the two starting points.
pub fn propagate_latent(
    model: &DensityModel,
    q0: &[f64],
    q1: &[f64],
    steps: usize,
    cfg: &NewtonConfig,
) -> Result<Vec<Vec<f64>>> {
    check_chain_model(model)?;
    let d = model.dim();
    if q0.len() != d || q1.len() != d {
        return Err(Error::Shape(format!(
            "starting points must hold {d} values, got {} and {}",
            q0.len(),
            q1.len()
        )));
    }
    let mut chain = Vec::with_capacity(steps + 2);
    chain.push(q0.to_vec());
    chain.push(q1.to_vec());
    let mut tuple = vec![0.0; 3 * d];
    for _ in 0..steps {
        let n = chain.len();
        tuple[..d].copy_from_slice(&chain[n - 2]);
        tuple[d..2 * d].copy_from_slice(&chain[n - 1]);
        // the third slot is the unknown; the solver overwrites it
        tuple[2 * d..].copy_from_slice(&chain[n - 1]);
        let (next, _) = solve_stencil(model, &tuple, cfg)?;
        chain.push(next);
    }
    Ok(chain)
}

fn check_latent_wave_setup(
    model: &DensityModel,
    map: &PcaMap,
    profile: &WaveProfile,
    grid: &Grid2D,
) -> Result<()> {
    check_chain_model(model)?;
    if model.dim() != map.reduced_dim() {
        return Err(Error::Shape(format!(
            "latent density has {} components, basis keeps {}",
            model.dim(),
            map.reduced_dim()
        )));
    }
    if map.full_dim() != grid.cols() * profile.dim() {
        return Err(Error::Shape(format!(
            "basis rows {} do not match {} columns × {} profile components",
            map.full_dim(),
            grid.cols(),
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

/// Latent chain points of the travelling-wave fill: every time slice of
/// `u^i_j = f(jΔx − c·iΔt)` projected through the basis, differentiable in
/// the packed profile parameters.
fn projected_fill<S: Scalar>(
    map: &PcaMap,
    layout: Layout,
    params: &[S],
    grid: &Grid2D,
) -> Vec<S> {
    let values = tw::lattice_values(layout, params, grid);
    let slice_len = map.full_dim();
    let m_red = map.reduced_dim();
    let rows = grid.rows();
    let zero = params[0].lift(0.0);
    let mut latent = vec![zero; rows * m_red];
    for i in 0..rows {
        let row = &values[i * slice_len..(i + 1) * slice_len];
        for r in 0..m_red {
            let mut acc = zero;
            for (k, &v) in row.iter().enumerate() {
                acc = acc + v.scale(map.basis[(k, r)]);
            }
            latent[i * m_red + r] = acc;
        }
    }
    latent
}

fn latent_chain_loss<S: Scalar>(
    model: &DensityModel,
    model_params: &[S],
    map: &PcaMap,
    layout: Layout,
    params: &[S],
    grid: &Grid2D,
) -> Result<S> {
    let latent = projected_fill(map, layout, params, grid);
    let m = map.reduced_dim();
    let zero = params[0].lift(0.0);
    let mut tuple = vec![zero; 3 * m];
    let mut total = zero;
    for i in 1..grid.rows() - 1 {
        tuple.copy_from_slice(&latent[(i - 1) * m..(i + 2) * m]);
        for r in del_residual_with(model, model_params, &tuple)? {
            total = total + r.sq();
        }
    }
    Ok(total)
}

/// Squared chain residuals of the projected travelling-wave fill, summed
/// over interior time levels.
pub fn latent_tw_residual(
    model: &DensityModel,
    map: &PcaMap,
    profile: &WaveProfile,
    grid: &Grid2D,
) -> Result<f64> {
    check_latent_wave_setup(model, map, profile, grid)?;
    latent_chain_loss(model, model.params(), map, Layout::of(profile), &profile.pack(), grid)
}

/// Worst single chain-residual entry of the projected fill.
pub fn max_latent_tw_residual(
    model: &DensityModel,
    map: &PcaMap,
    profile: &WaveProfile,
    grid: &Grid2D,
) -> Result<f64> {
    check_latent_wave_setup(model, map, profile, grid)?;
    let layout = Layout::of(profile);
    let params = profile.pack();
    let latent = projected_fill(map, layout, &params, grid);
    let m = map.reduced_dim();
    let mut worst = 0.0f64;
    for i in 1..grid.rows() - 1 {
        let tuple = &latent[(i - 1) * m..(i + 2) * m];
        for r in del_residual_with(model, model.params(), tuple)? {
            worst = worst.max(r.abs());
        }
    }
    Ok(worst)
}

/// Travelling-wave search against the latent chain theory: minimizes the
/// projected chain residual plus the unit-norm penalty over speed and
/// profile coefficients, with the same three-phase descent the full-lattice
/// search uses.
pub fn locate_tw_latent(
    model: &DensityModel,
    map: &PcaMap,
    initial: &WaveProfile,
    grid: &Grid2D,
    cfg: &TwConfig,
) -> Result<TwRun> {
    check_latent_wave_setup(model, map, initial, grid)?;
    let layout = Layout::of(initial);
    let mut params = initial.pack();
    let objective = |p: &[f64]| {
        tape::value_and_grad(p, |_, vars| {
            let proto = vars[0];
            let model_params: Vec<_> = model.params().iter().map(|&q| proto.lift(q)).collect();
            let data = latent_chain_loss(model, &model_params, map, layout, vars, grid)?;
            let unit = layout.unit_loss(vars, grid.dx).scale(cfg.unit_weight);
            Ok(data + unit)
        })
    };
    let probe = |p: &[f64]| {
        Ok(latent_chain_loss(model, model.params(), map, layout, p, grid)?
            + cfg.unit_weight * layout.unit_loss(p, grid.dx))
    };
    let (steps_run, history) = tw::descend(&mut params, cfg, objective, probe)?;
    let profile = layout.unpack(&params);
    let residual = latent_tw_residual(model, map, &profile, grid)?;
    let unit = tw::unit_norm_loss(&profile, grid.dx);
    let max_residual = max_latent_tw_residual(model, map, &profile, grid)?;
    Ok(TwRun { profile, residual_loss: residual, unit_loss: unit, max_residual, steps_run, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::MlpDensity;
    use crate::mlp::{Activation, MlpSpec};
    use crate::theory;
    use crate::tw::fill_travelling_wave;
    use rand::Rng;

    fn random_snapshots(m: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(m, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn unit_vector(m: usize, axis: usize) -> DMatrix<f64> {
        DMatrix::from_fn(m, 1, |r, _| if r == axis { 1.0 } else { 0.0 })
    }

    fn wave_grid() -> Grid2D {
        Grid2D::new(20, 20, 0.025, 0.05, SpatialBc::Periodic).unwrap()
    }

    /// A unit-norm single-cosine travelling wave of the discrete wave
    /// equation and the lattice it fills.
    fn travelling_field(grid: &Grid2D) -> (WaveProfile, Field) {
        let speed =
            theory::wave_dispersion_speed(grid.dt, grid.dx, grid.period(), 1, 1.0).unwrap();
        let profile = WaveProfile::cosine_mode(grid.period(), speed, 1, 1.0, 3)
            .unwrap()
            .normalized(grid.dx)
            .unwrap();
        let field = fill_travelling_wave(&profile, grid).unwrap();
        (profile, field)
    }

    #[test]
    fn identical_snapshots_recover_their_direction() {
        let snaps = DMatrix::from_fn(6, 9, |r, _| if r == 2 { 1.0 } else { 0.0 });
        let map = fit_pca(&snaps, 1).unwrap();
        assert_eq!((map.full_dim(), map.reduced_dim()), (6, 1));
        assert!((map.basis()[(2, 0)].abs() - 1.0).abs() <= 1e-12);
        for r in [0, 1, 3, 4, 5] {
            assert!(map.basis()[(r, 0)].abs() <= 1e-12);
        }
        // nine unit columns: σ₁ = 3, everything else vanishes
        assert!((map.singular_values[0] - 3.0).abs() <= 1e-12);
        assert!(map.singular_values[1..].iter().all(|&s| s.abs() <= 1e-12));
    }

    #[test]
    fn pca_maps_invert_on_the_latent_space() {
        let snaps = random_snapshots(12, 30, 5);
        let map = fit_pca(&snaps, 4).unwrap();
        assert!(orthonormality_defect(map.basis()) <= 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let q: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
        let back = map.project(&map.lift(&q).unwrap()).unwrap();
        for (a, b) in q.iter().zip(&back) {
            assert!((a - b).abs() <= 1e-12, "pr∘R moved {a} to {b}");
        }
        // R∘pr is idempotent: projecting a projected vector changes nothing
        let u: Vec<f64> = (0..12).map(|_| rng.random_range(-2.0..2.0)).collect();
        let once = map.lift(&map.project(&u).unwrap()).unwrap();
        let twice = map.lift(&map.project(&once).unwrap()).unwrap();
        for (a, b) in once.iter().zip(&twice) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn reconstruction_error_shrinks_with_more_directions() {
        let snaps = random_snapshots(8, 25, 7);
        let mut last = f64::INFINITY;
        for m_red in 1..=6 {
            let map = fit_pca(&snaps, m_red).unwrap();
            let err = reconstruction_error(&map, &snaps).unwrap();
            assert!(
                err.mean <= last + 1e-12,
                "error grew from {last} to {} at {m_red} directions",
                err.mean
            );
            last = err.mean;
        }
    }

    #[test]
    fn reconstruction_error_matches_a_direct_computation() {
        let snaps = random_snapshots(7, 13, 11);
        let map = fit_pca(&snaps, 3).unwrap();
        let err = reconstruction_error(&map, &snaps).unwrap();
        let mut expect = 0.0;
        for c in 0..13 {
            let u: Vec<f64> = snaps.column(c).iter().copied().collect();
            let recon = map.lift(&map.project(&u).unwrap()).unwrap();
            let diff: f64 = u.iter().zip(&recon).map(|(a, b)| (a - b) * (a - b)).sum();
            let norm: f64 = u.iter().map(|a| a * a).sum();
            expect += (diff / norm).sqrt();
        }
        expect /= 13.0;
        assert_eq!(err.skipped, 0);
        assert!((err.mean - expect).abs() <= 1e-14);
    }

    #[test]
    fn zero_columns_are_skipped_and_orthogonal_data_scores_one() {
        let map = PcaMap::from_basis(unit_vector(4, 0)).unwrap();
        let mut snaps = DMatrix::zeros(4, 3);
        snaps[(0, 0)] = 2.0; // inside the span: error 0
        snaps[(1, 2)] = 1.5; // orthogonal to the span: error 1
        let err = reconstruction_error(&map, &snaps).unwrap();
        assert_eq!(err.skipped, 1);
        assert!((err.mean - 0.5).abs() <= 1e-12);
    }

    #[test]
    fn snapshots_inside_the_span_reconstruct_exactly() {
        let snaps = random_snapshots(9, 4, 13);
        let map = fit_pca(&snaps, 4).unwrap();
        let err = reconstruction_error(&map, &snaps).unwrap();
        assert!(err.mean <= 1e-12, "in-span reconstruction error {}", err.mean);
    }

    #[test]
    fn rank_deficient_fits_are_padded() {
        let snaps = DMatrix::from_fn(5, 8, |r, c| if r == 1 { (c as f64) + 1.0 } else { 0.0 });
        let map = fit_pca(&snaps, 3).unwrap();
        assert_eq!(map.padded, 2);
        assert!(orthonormality_defect(map.basis()) <= 1e-12);
        assert!((map.basis()[(1, 0)].abs() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn snapshot_matrices_stack_time_slices() {
        let grid = Grid2D::new(3, 4, 0.1, 0.25, SpatialBc::Periodic).unwrap();
        let mut f = Field::zeros(grid, 1);
        for i in 0..grid.rows() {
            for j in 0..4 {
                f.node_mut(i, j)[0] = (i * 4 + j) as f64;
            }
        }
        let snaps = snapshot_matrix(std::slice::from_ref(&f)).unwrap();
        assert_eq!((snaps.nrows(), snaps.ncols()), (4, grid.rows()));
        for i in 0..grid.rows() {
            for j in 0..4 {
                assert_eq!(snaps[(j, i)], (i * 4 + j) as f64);
            }
        }
    }

    #[test]
    fn free_particle_chains_have_the_expected_residuals() {
        let model = DensityModel::FreeParticle { dim: 2 };
        // arithmetic progression: a discrete free particle, residual zero
        let line = vec![0.5, -1.0, 0.7, -0.6, 0.9, -0.2];
        let r = latent_del_residual(&model, &line).unwrap();
        assert!(r.iter().all(|v| v.abs() <= 1e-14));
        // bent triple: residual is exactly 2qⁱ − qⁱ⁻¹ − qⁱ⁺¹
        let bent = vec![0.1, 0.0, 0.4, 0.2, 0.3, 0.8];
        let r = latent_del_residual(&model, &bent).unwrap();
        assert!((r[0] - (2.0 * 0.4 - 0.1 - 0.3)).abs() <= 1e-14);
        assert!((r[1] - (2.0 * 0.2 - 0.0 - 0.8)).abs() <= 1e-14);
        assert!(r[0].abs() > 1e-3 || r[1].abs() > 1e-3);
    }

    #[test]
    fn latent_residuals_match_finite_differences() {
        let spec = MlpSpec::new(vec![6, 7, 1], Activation::Softplus).unwrap();
        let model = DensityModel::Mlp(MlpDensity::new(2, 3, spec, 17).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let triple: Vec<f64> = (0..9).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r = latent_del_residual(&model, &triple).unwrap();
        let h = 1e-6;
        let action = |t: &[f64]| {
            model.eval(&t[..6]).unwrap() + model.eval(&t[3..]).unwrap()
        };
        for p in 0..3 {
            let mut tp = triple.clone();
            let mut tm = triple.clone();
            tp[3 + p] += h;
            tm[3 + p] -= h;
            let fd = (action(&tp) - action(&tm)) / (2.0 * h);
            assert!(
                (r[p] - fd).abs() <= 1e-6 * fd.abs().max(1.0),
                "component {p}: {} vs finite difference {fd}",
                r[p]
            );
        }
    }

    #[test]
    fn frozen_quadratic_chains_score_constant_losses() {
        let model = DensityModel::FreeParticle { dim: 2 };
        // straight-line latent chains are exact trajectories
        let triples: Vec<Vec<f64>> = (0..6)
            .map(|k| {
                let (a, v) = (0.1 * k as f64, 0.3 - 0.05 * k as f64);
                vec![a, -a, a + v, -a + 0.2, a + 2.0 * v, -a + 0.4]
            })
            .collect();
        let data = latent_data_loss(&model, &triples).unwrap();
        assert!(data <= 1e-24, "exact chains scored {data}");
        // ∂²L/∂qⁱ∂qⁱ⁺¹ = −Identity, so the penalty is exactly one
        let reg = latent_reg_value(&model, &triples, 3).unwrap();
        assert!((reg - 1.0).abs() <= 1e-12);
        // frozen model: repeated evaluation cannot drift
        assert_eq!(data, latent_data_loss(&model, &triples).unwrap());
        assert_eq!(reg, latent_reg_value(&model, &triples, 3).unwrap());
    }

    #[test]
    fn latent_training_is_deterministic() {
        let grid = wave_grid();
        let (_, field) = travelling_field(&grid);
        let map = fit_pca(&snapshot_matrix(std::slice::from_ref(&field)).unwrap(), 2).unwrap();
        let triples = latent_triples(&map, std::slice::from_ref(&field)).unwrap();
        let cfg = LatentTrainConfig { epochs: 20, seed: 4, ..LatentTrainConfig::default() };
        let spec = MlpSpec::new(vec![4, 6, 1], Activation::Softplus).unwrap();
        let mut a = DensityModel::Mlp(MlpDensity::new(2, 2, spec.clone(), 9).unwrap());
        let mut b = DensityModel::Mlp(MlpDensity::new(2, 2, spec, 9).unwrap());
        let ha = train_latent(&mut a, &triples, &cfg).unwrap();
        let hb = train_latent(&mut b, &triples, &cfg).unwrap();
        assert_eq!(a.params(), b.params());
        for (x, y) in ha.iter().zip(&hb) {
            assert_eq!(x.data_loss, y.data_loss);
            assert_eq!(x.reg_loss, y.reg_loss);
        }
    }

    #[test]
    fn latent_model_learns_the_projected_wave_chain() {
        let grid = wave_grid();
        let (profile, field) = travelling_field(&grid);
        let snaps = snapshot_matrix(std::slice::from_ref(&field)).unwrap();
        let map = fit_pca(&snaps, 2).unwrap();
        // a travelling cosine spans exactly {cos κx, sin κx}
        assert_eq!(map.padded, 0);
        let err = reconstruction_error(&map, &snaps).unwrap();
        assert!(err.mean <= 1e-10, "rank-2 reconstruction error {}", err.mean);

        let triples = latent_triples(&map, std::slice::from_ref(&field)).unwrap();
        assert_eq!(triples.len(), grid.rows() - 2);
        let spec = MlpSpec::new(vec![4, 10, 10, 1], Activation::Softplus).unwrap();
        let mut model = DensityModel::Mlp(MlpDensity::new(2, 2, spec, 7).unwrap());
        let before = latent_data_loss(&model, &triples).unwrap();
        // the latent points sit on a circle of radius ≈ √20; the larger
        // input scale wants a larger step size than the lattice default
        let cfg = LatentTrainConfig {
            epochs: 400,
            seed: 2,
            adam: AdamConfig { lr: 1e-2, ..AdamConfig::default() },
            ..LatentTrainConfig::default()
        };
        let history = train_latent(&mut model, &triples, &cfg).unwrap();
        let after = history.last().unwrap().data_loss;
        assert!(after * 10.0 <= before, "data loss went {before:.3e} -> {after:.3e}");

        // the trained chain theory should pull a detuned profile back toward
        // the wave it was trained on
        let mut start = profile.clone();
        start.speed += 0.15;
        let base = latent_tw_residual(&model, &map, &start, &grid).unwrap();
        let search = TwConfig { steps: 400, settle: 0.15, ..TwConfig::default() };
        let run = locate_tw_latent(&model, &map, &start, &grid, &search).unwrap();
        assert!(
            run.residual_loss * 10.0 <= base,
            "latent residual went {base:.3e} -> {:.3e}",
            run.residual_loss
        );
        assert!(
            (run.profile.speed - profile.speed).abs() <= 0.05,
            "speed off by {:.3e}",
            (run.profile.speed - profile.speed).abs()
        );
    }

    #[test]
    fn zero_profiles_have_zero_latent_residual() {
        let grid = wave_grid();
        let map = fit_pca(&random_snapshots(20, 40, 21), 2).unwrap();
        let model = DensityModel::FreeParticle { dim: 2 };
        let zero = WaveProfile::zeros(grid.period(), 0.8, 1, 4).unwrap();
        assert_eq!(latent_tw_residual(&model, &map, &zero, &grid).unwrap(), 0.0);
        assert_eq!(max_latent_tw_residual(&model, &map, &zero, &grid).unwrap(), 0.0);
    }

    #[test]
    fn free_particle_chains_propagate_along_straight_lines() {
        let model = DensityModel::FreeParticle { dim: 3 };
        let q0 = [0.2, -0.4, 1.0];
        let q1 = [0.5, -0.3, 0.4];
        let chain = propagate_latent(&model, &q0, &q1, 7, &NewtonConfig::default()).unwrap();
        assert_eq!(chain.len(), 9);
        for (k, q) in chain.iter().enumerate() {
            for p in 0..3 {
                let want = q0[p] + k as f64 * (q1[p] - q0[p]);
                assert!((q[p] - want).abs() <= 1e-10, "step {k} component {p}: {}", q[p]);
            }
        }
    }

    #[test]
    fn degenerate_chain_densities_are_reported_singular() {
        let model = DensityModel::Constant { arity: 2, dim: 1, value: 0.3 };
        let err = propagate_latent(&model, &[0.1], &[0.2], 3, &NewtonConfig::default());
        assert!(matches!(err, Err(Error::Singular { .. })), "got {err:?}");
    }

    #[test]
    fn projected_triples_line_up_with_slices() {
        let grid = Grid2D::new(5, 6, 0.1, 0.2, SpatialBc::Periodic).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut f = Field::zeros(grid, 1);
        for i in 0..grid.rows() {
            for v in f.row_mut(i) {
                *v = rng.random_range(-1.0..1.0);
            }
        }
        let map = fit_pca(&snapshot_matrix(std::slice::from_ref(&f)).unwrap(), 3).unwrap();
        let triples = latent_triples(&map, std::slice::from_ref(&f)).unwrap();
        assert_eq!(triples.len(), grid.rows() - 2);
        for (i, t) in triples.iter().enumerate() {
            let mid = map.project(f.row(i + 1)).unwrap();
            assert_eq!(&t[3..6], mid.as_slice());
        }
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let map = PcaMap::from_basis(unit_vector(4, 1)).unwrap();
        assert!(matches!(map.project(&[1.0; 3]), Err(Error::Shape(_))));
        assert!(matches!(map.lift(&[1.0, 2.0]), Err(Error::Shape(_))));
        assert!(matches!(
            PcaMap::from_basis(DMatrix::from_element(3, 2, 0.5)),
            Err(Error::Input(_))
        ));
        assert!(matches!(
            PcaMap::from_basis(DMatrix::<f64>::zeros(2, 3)),
            Err(Error::Sizing(_))
        ));
        assert!(matches!(fit_pca(&random_snapshots(4, 6, 1), 0), Err(Error::Sizing(_))));
        assert!(matches!(fit_pca(&random_snapshots(4, 6, 1), 5), Err(Error::Sizing(_))));
        assert!(matches!(snapshot_matrix(&[]), Err(Error::Sizing(_))));

        let wave = theory::wave_density(0.1, 0.2).unwrap();
        assert!(matches!(latent_del_residual(&wave, &[0.0; 7]), Err(Error::Misuse(_))));
        let free = DensityModel::FreeParticle { dim: 2 };
        let mut trainable = free.clone();
        assert!(matches!(
            train_latent(&mut trainable, &[vec![0.0; 6]], &LatentTrainConfig::default()),
            Err(Error::Misuse(_))
        ));
        assert!(matches!(
            propagate_latent(&free, &[0.0], &[0.0, 1.0], 1, &NewtonConfig::default()),
            Err(Error::Shape(_))
        ));
        let grid = wave_grid();
        let profile = WaveProfile::zeros(grid.period(), 1.0, 1, 2).unwrap();
        let short_map = PcaMap::from_basis(unit_vector(4, 0)).unwrap();
        assert!(matches!(
            latent_tw_residual(&free, &short_map, &profile, &grid),
            Err(Error::Shape(_))
        ));
    }
}
