//! Density learning: losses, conditioning regularizers and the Adam loop.
//!
//! The data loss is the summed squared discrete Euler–Lagrange residual over
//! stencil tuples — zero for any density whose field equations the data
//! satisfies, so minimizing it alone can land on degenerate densities whose
//! equations solve nothing. The regularizers penalize exactly that: the
//! *stencil* variant keeps the per-cell mixed Hessian block invertible, the
//! *slice* variants keep the whole-row Newton matrix Λ away from
//! singularity, either through `‖Λ⁻¹‖²` or through a tamed hinge on σ_min
//! that vanishes once the matrix is safely conditioned.
//!
//! Every term is evaluated twice over: an `f64` path for monitoring and a
//! tape path whose reverse sweep yields parameter gradients, including
//! through Cholesky factors and inverse vector iteration.

use crate::density::{del_residual_with, vertex_cell_nodes, DensityModel};
use crate::error::{Error, Result};
use crate::lattice::{Field, StencilKind, StencilTuple};
use crate::linalg::inv_norm_sq_estimate;
use crate::scalar::Scalar;
use crate::seed;
use crate::slice::SliceSystem;
use crate::tape::value_and_grad;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::{BTreeMap, BTreeSet};

/// Cap on the inverse-conditioning penalties, reached when the controlled
/// matrix is singular to within σ ≈ 1e-8.
pub(crate) const REG_CAP: f64 = 1e16;
const SIGMA_FLOOR_SQ: f64 = 1e-16;

/// Training data: stencil tuples extracted from a set of trajectories, with
/// the source fields retained so slice-level regularizers can rebuild whole
/// rows.
#[derive(Debug)]
pub struct Dataset {
    fields: Vec<Field>,
    tuples: Vec<StencilTuple>,
    /// Source trajectory of each tuple.
    origin: Vec<usize>,
}

impl Dataset {
    pub fn from_fields(fields: Vec<Field>, kind: StencilKind, stride: usize) -> Result<Self> {
        if fields.is_empty() {
            return Err(Error::Sizing("a dataset needs at least one trajectory".into()));
        }
        let mut tuples = Vec::new();
        let mut origin = Vec::new();
        for (k, f) in fields.iter().enumerate() {
            let extracted = crate::lattice::extract_stencils(f, kind, stride)?;
            origin.extend(std::iter::repeat_n(k, extracted.len()));
            tuples.extend(extracted);
        }
        Ok(Dataset { fields, tuples, origin })
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn tuples(&self) -> &[StencilTuple] {
        &self.tuples
    }

    pub fn fields(&self) -> &[Field] {
        &self.fields
    }

    /// Slice pairs `(trajectory, time level)` whose step matrices Λ the
    /// given tuples exercise.
    fn slice_pairs(&self, batch: &[usize]) -> BTreeSet<(usize, usize)> {
        batch.iter().map(|&i| (self.origin[i], self.tuples[i].vertex.0)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regularizer {
    None,
    /// Mean `‖H(0,1)⁻¹‖₂²` of the vertex-cell mixed Hessian block.
    StencilInverse,
    /// Mean `‖Λ⁻¹‖₂²` of the slice Newton matrix, by inverse vector
    /// iteration.
    SliceInverse { iterations: usize },
    /// Mean `relu(1 − taming·σ_min(Λ)²)`: flat zero once Λ is safely
    /// conditioned, so it cannot distort converged models.
    SliceTamed { iterations: usize, taming: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct LossConfig {
    pub regularizer: Regularizer,
    /// Weight of the regularizer against the data term.
    pub weight: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { regularizer: Regularizer::None, weight: 1.0 }
    }
}

/// `‖A⁻¹‖₂²` of a d×d block (d ≤ 2) with a smooth floor: `1/(λ_min(AᵀA) +
/// 1e-16)`, capped at [`REG_CAP`] as the block degenerates while staying
/// differentiable everywhere else.
fn inv_norm_sq_floored<S: Scalar>(a: &[S], d: usize) -> Result<S> {
    let lam_min = match d {
        1 => a[0].sq(),
        2 => {
            let t = crate::linalg::norm_sq(a);
            let det = a[0] * a[3] - a[1] * a[2];
            let disc = (t * t - det.sq().scale(4.0)).relu().sqrt();
            // stable form of the smaller eigenvalue of AᵀA
            (det.sq() + det.sq()) / (t + disc).add_const(SIGMA_FLOOR_SQ)
        }
        _ => {
            return Err(Error::Capability(format!(
                "closed-form block conditioning is defined for fields with d ≤ 2, got {d}"
            )))
        }
    };
    Ok(lam_min.add_const(SIGMA_FLOOR_SQ).recip())
}

/// Squared residual of one tuple, differentiable in the parameters.
/// `proto` supplies the scalar kind for lifted constants (analytic densities
/// have no parameters to borrow one from).
fn tuple_residual_sq<S: Scalar>(
    model: &DensityModel,
    params: &[S],
    proto: S,
    t: &StencilTuple,
) -> Result<S> {
    let x: Vec<S> = t.values.iter().map(|&v| proto.lift(v)).collect();
    let r = del_residual_with(model, params, &x)?;
    let mut s = proto.lift(0.0);
    for ri in r {
        s = s + ri.sq();
    }
    Ok(s)
}

/// Stencil-regularizer term of one tuple.
fn stencil_reg_term<S: Scalar>(
    model: &DensityModel,
    params: &[S],
    proto: S,
    t: &StencilTuple,
) -> Result<S> {
    let d = model.dim();
    let nodes = vertex_cell_nodes(model.arity());
    let mut cell = Vec::with_capacity(nodes.len() * d);
    for &node in nodes {
        for p in 0..d {
            cell.push(proto.lift(t.values[node * d + p]));
        }
    }
    let h = model.hess_block_with(params, &cell, 0, 1)?;
    inv_norm_sq_floored(&h, d)
}

/// Slice-regularizer term of one `(U, V)` pair.
fn slice_reg_term<S: Scalar>(
    params: &[S],
    proto: S,
    sys: &SliceSystem,
    u: &[f64],
    v: &[f64],
    reg: Regularizer,
) -> Result<S> {
    let lift = |c: f64| proto.lift(c);
    let ul: Vec<S> = u.iter().map(|&c| lift(c)).collect();
    let vl: Vec<S> = v.iter().map(|&c| lift(c)).collect();
    let lam = sys.lambda_with(params, &ul, &vl)?;
    let n = sys.lambda_dim();
    let start = vec![1.0; n];
    match reg {
        Regularizer::SliceInverse { iterations } => {
            Ok(inv_norm_sq_estimate(&lam, n, iterations, &start).unwrap_or(lift(REG_CAP)))
        }
        Regularizer::SliceTamed { iterations, taming } => {
            match inv_norm_sq_estimate(&lam, n, iterations, &start) {
                // σ_min² is the reciprocal of the ‖Λ⁻¹‖² estimate
                Some(est) => Ok((lift(1.0) - est.recip().scale(taming)).relu()),
                None => Ok(lift(1.0)),
            }
        }
        _ => Err(Error::Misuse("not a slice regularizer".into())),
    }
}

/// Loss and parameter gradient of one batch (tuple indices into `data`).
/// The data term is the batch *sum* of squared residuals; the regularizer is
/// a batch *mean* (over tuples or slice pairs), scaled by `cfg.weight` in
/// the gradient and the reported total.
pub struct BatchEval {
    pub data_loss: f64,
    pub reg_loss: f64,
    pub gradient: Vec<f64>,
}

impl BatchEval {
    pub fn total(&self, cfg: &LossConfig) -> f64 {
        self.data_loss + cfg.weight * self.reg_loss
    }
}

pub fn batch_loss_grad(
    model: &DensityModel,
    data: &Dataset,
    batch: &[usize],
    cfg: &LossConfig,
) -> Result<BatchEval> {
    let n = model.param_len();
    if n == 0 {
        return Err(Error::Misuse("this density has no trainable parameters".into()));
    }
    if batch.is_empty() {
        return Err(Error::Sizing("empty batch".into()));
    }
    let at = model.params();

    // one tape per tuple, reduced in index order for determinism
    let data_terms: Vec<(f64, Vec<f64>)> = batch
        .par_iter()
        .map(|&i| value_and_grad(at, |_, p| tuple_residual_sq(model, p, p[0], &data.tuples[i])))
        .collect::<Result<_>>()?;
    let mut data_loss = 0.0;
    let mut gradient = vec![0.0; n];
    for (v, g) in &data_terms {
        data_loss += v;
        for (gi, t) in gradient.iter_mut().zip(g) {
            *gi += t;
        }
    }

    let mut reg_loss = 0.0;
    match cfg.regularizer {
        Regularizer::None => {}
        Regularizer::StencilInverse => {
            let terms: Vec<(f64, Vec<f64>)> = batch
                .par_iter()
                .map(|&i| value_and_grad(at, |_, p| stencil_reg_term(model, p, p[0], &data.tuples[i])))
                .collect::<Result<_>>()?;
            let scale = cfg.weight / terms.len() as f64;
            for (v, g) in &terms {
                reg_loss += v / terms.len() as f64;
                for (gi, t) in gradient.iter_mut().zip(g) {
                    *gi += scale * t;
                }
            }
        }
        reg @ (Regularizer::SliceInverse { .. } | Regularizer::SliceTamed { .. }) => {
            let pairs: Vec<(usize, usize)> = data.slice_pairs(batch).into_iter().collect();
            let terms: Vec<(f64, Vec<f64>)> = pairs
                .par_iter()
                .map(|&(traj, i)| {
                    let f = &data.fields[traj];
                    let sys = SliceSystem::new(model, f.grid.bc, f.grid.cols())?;
                    value_and_grad(at, |_, p| {
                        slice_reg_term(p, p[0], &sys, f.row(i), f.row(i + 1), reg)
                    })
                })
                .collect::<Result<_>>()?;
            let scale = cfg.weight / terms.len() as f64;
            for (v, g) in &terms {
                reg_loss += v / terms.len() as f64;
                for (gi, t) in gradient.iter_mut().zip(g) {
                    *gi += scale * t;
                }
            }
        }
    }
    Ok(BatchEval { data_loss, reg_loss, gradient })
}

/// Summed squared residual over the whole dataset (`f64` path, no tape).
pub fn dataset_data_loss(model: &DensityModel, data: &Dataset) -> Result<f64> {
    let terms: Vec<f64> = data
        .tuples
        .par_iter()
        .map(|t| tuple_residual_sq(model, model.params(), 0.0, t))
        .collect::<Result<_>>()?;
    Ok(terms.iter().sum())
}

/// Regularizer value over given tuples (`f64` path, no tape); works for
/// untrainable analytic densities too.
pub fn regularizer_value(
    model: &DensityModel,
    data: &Dataset,
    batch: &[usize],
    reg: Regularizer,
) -> Result<f64> {
    let params = model.params();
    match reg {
        Regularizer::None => Ok(0.0),
        Regularizer::StencilInverse => {
            let terms: Vec<f64> = batch
                .par_iter()
                .map(|&i| stencil_reg_term(model, params, 0.0, &data.tuples[i]))
                .collect::<Result<_>>()?;
            Ok(terms.iter().sum::<f64>() / terms.len().max(1) as f64)
        }
        _ => {
            let pairs: Vec<(usize, usize)> = data.slice_pairs(batch).into_iter().collect();
            let terms: Vec<f64> = pairs
                .par_iter()
                .map(|&(traj, i)| {
                    let f = &data.fields[traj];
                    let sys = SliceSystem::new(model, f.grid.bc, f.grid.cols())?;
                    slice_reg_term(params, 0.0, &sys, f.row(i), f.row(i + 1), reg)
                })
                .collect::<Result<_>>()?;
            Ok(terms.iter().sum::<f64>() / terms.len().max(1) as f64)
        }
    }
}

/// How an epoch is split into gradient batches.
#[derive(Debug, Clone, Copy)]
pub enum BatchMode {
    /// Shuffle individual tuples.
    Tuples { size: usize },
    /// Shuffle blocks of consecutive time levels (per trajectory), keeping
    /// whole rows together so slice regularizers see complete step matrices.
    TimeBlocks { blocks_per_batch: usize, steps_per_block: usize },
}

/// Deterministic batch plan for one epoch.
fn epoch_plan(data: &Dataset, mode: BatchMode, master_seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut rng =
        ChaCha8Rng::seed_from_u64(seed::split(master_seed, &format!("epoch/{epoch}")));
    match mode {
        BatchMode::Tuples { size } => {
            let mut idx: Vec<usize> = (0..data.len()).collect();
            idx.shuffle(&mut rng);
            idx.chunks(size.max(1)).map(<[usize]>::to_vec).collect()
        }
        BatchMode::TimeBlocks { blocks_per_batch, steps_per_block } => {
            let steps = steps_per_block.max(1);
            let mut by_block: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
            for (i, t) in data.tuples.iter().enumerate() {
                // interior vertex times start at 1
                let key = (data.origin[i], (t.vertex.0 - 1) / steps);
                by_block.entry(key).or_default().push(i);
            }
            let mut blocks: Vec<Vec<usize>> = by_block.into_values().collect();
            blocks.shuffle(&mut rng);
            blocks
                .chunks(blocks_per_batch.max(1))
                .map(|c| c.iter().flatten().copied().collect())
                .collect()
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Adam optimizer state (bias-corrected first and second moments).
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u32,
}

impl Adam {
    pub fn new(n: usize, cfg: AdamConfig) -> Self {
        Adam { cfg, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    /// Rescales the learning rate (for schedules); moment state is kept.
    pub fn set_lr(&mut self, lr: f64) {
        self.cfg.lr = lr;
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c = &self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        for ((p, g), (m, v)) in
            params.iter_mut().zip(grad).zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = c.beta1 * *m + (1.0 - c.beta1) * g;
            *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
            *p -= c.lr * (*m / bc1) / ((*v / bc2).sqrt() + c.epsilon);
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: BatchMode,
    pub seed: u64,
    pub adam: AdamConfig,
    pub loss: LossConfig,
}

/// Per-epoch aggregates: the data term sums every tuple exactly once, the
/// regularizer is averaged over the epoch's batches.
#[derive(Debug, Clone, Copy)]
pub struct EpochStats {
    pub epoch: usize,
    pub data_loss: f64,
    pub reg_loss: f64,
    pub total_loss: f64,
    /// Seconds since training started, taken as the epoch completed.
    pub wall_secs: f64,
}

/// Runs the Adam loop on `model` in place and returns the loss history.
/// Aborts with a non-finite-loss error carrying the parameters of the last
/// completed epoch when a batch loss or gradient degenerates.
pub fn train(
    model: &mut DensityModel,
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<Vec<EpochStats>> {
    let n = model.param_len();
    if n == 0 {
        return Err(Error::Misuse("this density has no trainable parameters".into()));
    }
    if data.is_empty() {
        return Err(Error::Sizing("cannot train on an empty dataset".into()));
    }
    let mut params = model.params().to_vec();
    let mut last_good = params.clone();
    let mut adam = Adam::new(n, cfg.adam);
    let mut history = Vec::with_capacity(cfg.epochs);
    let clock = std::time::Instant::now();
    for epoch in 0..cfg.epochs {
        let plan = epoch_plan(data, cfg.batch, cfg.seed, epoch);
        let mut data_sum = 0.0;
        let mut reg_sum = 0.0;
        for (bi, batch) in plan.iter().enumerate() {
            let eval = batch_loss_grad(model, data, batch, &cfg.loss)?;
            let finite = eval.data_loss.is_finite()
                && eval.reg_loss.is_finite()
                && eval.gradient.iter().all(|g| g.is_finite());
            if !finite {
                let what = if eval.data_loss.is_finite() && eval.reg_loss.is_finite() {
                    "gradient"
                } else {
                    "loss"
                };
                return Err(Error::NonFinite {
                    what: what.into(),
                    epoch,
                    batch: bi,
                    last_good,
                });
            }
            data_sum += eval.data_loss;
            reg_sum += eval.reg_loss;
            adam.step(&mut params, &eval.gradient);
            model.set_params(&params)?;
        }
        let reg_mean = reg_sum / plan.len() as f64;
        history.push(EpochStats {
            epoch,
            data_loss: data_sum,
            reg_loss: reg_mean,
            total_loss: data_sum + cfg.loss.weight * reg_mean,
            wall_secs: clock.elapsed().as_secs_f64(),
        });
        last_good.copy_from_slice(&params);
    }
    Ok(history)
}
