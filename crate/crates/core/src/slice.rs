//! Two-time-slice form of the discrete action.
//!
//! Summing a density over all cells between consecutive time slices gives a
//! slice Lagrangian `𝕃(U, V)` with `U` the current and `V` the next slice.
//! Its partial gradients drive implicit time stepping (the field equations at
//! time level `i` read `D₂𝕃(U^{i−1}, U^i) + D₁𝕃(U^i, U^{i+1}) = 0`), and its
//! mixed second derivative `Λ = ∂²𝕃/∂U∂V` is both the Newton matrix of a
//! time step and the degeneracy measure the slice regularizer controls.
//!
//! Everything is generic over [`Scalar`], so Λ and quantities derived from it
//! (Cholesky factors, singular-value estimates) stay differentiable in the
//! model parameters during training.

use crate::density::DensityModel;
use crate::error::{Error, Result};
use crate::lattice::SpatialBc;
use crate::scalar::Scalar;

/// Slice-level view of a density on a fixed spatial grid.
pub struct SliceSystem<'m> {
    model: &'m DensityModel,
    bc: SpatialBc,
    /// Stored columns per time slice.
    cols: usize,
}

impl<'m> SliceSystem<'m> {
    pub fn new(model: &'m DensityModel, bc: SpatialBc, cols: usize) -> Result<Self> {
        let arity = model.arity();
        if !(arity == 3 || arity == 4) {
            return Err(Error::Misuse(format!(
                "slice Lagrangians need a space-time cell density (arity 3 or 4), got {arity}"
            )));
        }
        let min_cols = match bc {
            SpatialBc::Periodic => 3,
            SpatialBc::Dirichlet => 3,
        };
        if cols < min_cols {
            return Err(Error::Sizing(format!(
                "{} columns cannot carry a slice system (need at least {min_cols})",
                cols
            )));
        }
        Ok(SliceSystem { model, bc, cols })
    }

    pub fn model(&self) -> &DensityModel {
        self.model
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn field_dim(&self) -> usize {
        self.model.dim()
    }

    /// Values stored per slice.
    pub fn slice_len(&self) -> usize {
        self.cols * self.model.dim()
    }

    fn n_cells(&self) -> usize {
        match self.bc {
            SpatialBc::Periodic => self.cols,
            SpatialBc::Dirichlet => self.cols - 1,
        }
    }

    fn cell_cols(&self, cell: usize) -> (usize, usize) {
        match self.bc {
            SpatialBc::Periodic => (cell, (cell + 1) % self.cols),
            SpatialBc::Dirichlet => (cell, cell + 1),
        }
    }

    /// Columns that carry field equations (and unknowns of a time step):
    /// every column under periodic wrap, the interior under Dirichlet data.
    pub fn unknown_columns(&self) -> std::ops::Range<usize> {
        match self.bc {
            SpatialBc::Periodic => 0..self.cols,
            SpatialBc::Dirichlet => 1..self.cols - 1,
        }
    }

    fn column_to_unknown(&self, col: usize) -> Option<usize> {
        let range = self.unknown_columns();
        range.contains(&col).then(|| col - range.start)
    }

    /// Side length of the dense Λ matrix.
    pub fn lambda_dim(&self) -> usize {
        self.unknown_columns().len() * self.model.dim()
    }

    fn check_slices<S: Scalar>(&self, u: &[S], v: &[S]) -> Result<()> {
        if u.len() != self.slice_len() || v.len() != self.slice_len() {
            return Err(Error::Shape(format!(
                "slices must hold {} values, got {} and {}",
                self.slice_len(),
                u.len(),
                v.len()
            )));
        }
        Ok(())
    }

    fn gather_cell<S: Scalar>(&self, u: &[S], v: &[S], cell: usize, out: &mut Vec<S>) {
        let d = self.model.dim();
        let (j0, j1) = self.cell_cols(cell);
        out.clear();
        out.extend_from_slice(&u[j0 * d..(j0 + 1) * d]);
        out.extend_from_slice(&v[j0 * d..(j0 + 1) * d]);
        out.extend_from_slice(&u[j1 * d..(j1 + 1) * d]);
        if self.model.arity() == 4 {
            out.extend_from_slice(&v[j1 * d..(j1 + 1) * d]);
        }
    }

    /// The slice Lagrangian `𝕃(U, V)`: cell sum of the density.
    pub fn lagrangian_with<S: Scalar>(&self, params: &[S], u: &[S], v: &[S]) -> Result<S> {
        self.check_slices(u, v)?;
        let mut cell = Vec::new();
        let mut total = u[0].lift(0.0);
        for c in 0..self.n_cells() {
            self.gather_cell(u, v, c, &mut cell);
            total = total + self.model.eval_with(params, &cell)?;
        }
        Ok(total)
    }

    /// Gradients `(D₁𝕃, D₂𝕃)` w.r.t. the two slices, full slice length
    /// (boundary entries included under Dirichlet data; callers mask them).
    pub fn slice_grads_with<S: Scalar>(
        &self,
        params: &[S],
        u: &[S],
        v: &[S],
    ) -> Result<(Vec<S>, Vec<S>)> {
        self.check_slices(u, v)?;
        let d = self.model.dim();
        let arity = self.model.arity();
        let zero = u[0].lift(0.0);
        let mut du = vec![zero; self.slice_len()];
        let mut dv = vec![zero; self.slice_len()];
        let mut cell = Vec::new();
        for c in 0..self.n_cells() {
            let (j0, j1) = self.cell_cols(c);
            self.gather_cell(u, v, c, &mut cell);
            let g = self.model.grad_with(params, &cell)?;
            for p in 0..d {
                du[j0 * d + p] = du[j0 * d + p] + g[p];
                dv[j0 * d + p] = dv[j0 * d + p] + g[d + p];
                du[j1 * d + p] = du[j1 * d + p] + g[2 * d + p];
                if arity == 4 {
                    dv[j1 * d + p] = dv[j1 * d + p] + g[3 * d + p];
                }
            }
        }
        Ok((du, dv))
    }

    /// Dense mixed slice Hessian `Λ(U, V) = ∂²𝕃/∂U∂V`, restricted to unknown
    /// columns: rows index the `U`-equations, columns the `V`-unknowns.
    /// Row-major with side [`Self::lambda_dim`].
    pub fn lambda_with<S: Scalar>(&self, params: &[S], u: &[S], v: &[S]) -> Result<Vec<S>> {
        self.check_slices(u, v)?;
        let d = self.model.dim();
        let n = self.model.input_dim();
        let arity = self.model.arity();
        let m = self.lambda_dim();
        let zero = u[0].lift(0.0);
        let mut lam = vec![zero; m * m];
        let mut cell = Vec::new();
        for c in 0..self.n_cells() {
            let (j0, j1) = self.cell_cols(c);
            self.gather_cell(u, v, c, &mut cell);
            let h = self.model.hess_with(params, &cell)?;
            // (U-column, V-column, U node slot, V node slot) of each block
            let contribs: &[(usize, usize, usize, usize)] = if arity == 3 {
                &[(j0, j0, 0, 1), (j1, j0, 2, 1)]
            } else {
                &[(j0, j0, 0, 1), (j1, j0, 2, 1), (j0, j1, 0, 3), (j1, j1, 2, 3)]
            };
            for &(ucol, vcol, r, s) in contribs {
                let (Some(ru), Some(cu)) = (self.column_to_unknown(ucol), self.column_to_unknown(vcol))
                else {
                    continue;
                };
                for p in 0..d {
                    for q in 0..d {
                        let idx = (ru * d + p) * m + cu * d + q;
                        lam[idx] = lam[idx] + h[(r * d + p) * n + s * d + q];
                    }
                }
            }
        }
        Ok(lam)
    }

    pub fn lambda(&self, u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.lambda_with(self.model.params(), u, v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{del_residual, DensityModel, Polynomial, SchrodingerDensity, WaveDensity};
    use crate::lattice::{extract_stencils, Field, Grid2D};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(grid: Grid2D, d: usize, seed: u64) -> Field {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut f = Field::zeros(grid, d);
        let rows = f.grid.rows();
        for i in 0..rows {
            for k in 0..f.row(0).len() {
                f.row_mut(i)[k] = rng.random_range(-1.0..1.0);
            }
        }
        f
    }

    /// The slice-form equations must agree with the vertex residuals computed
    /// from canonical stencil tuples.
    fn check_slice_del_consistency(model: &DensityModel, bc: SpatialBc, seed: u64) {
        let grid = Grid2D::new(4, 6, 0.025, 0.05, bc).unwrap();
        let d = model.dim();
        let f = random_field(grid, d, seed);
        let sys = SliceSystem::new(model, bc, f.grid.cols()).unwrap();
        let tuples = extract_stencils(&f, model.stencil_kind(), 1).unwrap();
        for t in &tuples {
            let (i, j) = t.vertex;
            let (du_next, _) = sys
                .slice_grads_with(model.params(), f.row(i), f.row(i + 1))
                .unwrap();
            let (_, dv_prev) = sys
                .slice_grads_with(model.params(), f.row(i - 1), f.row(i))
                .unwrap();
            let direct = del_residual(model, &t.values).unwrap();
            for p in 0..d {
                let slice_form = du_next[j * d + p] + dv_prev[j * d + p];
                assert!(
                    (slice_form - direct[p]).abs() < 1e-12,
                    "vertex ({i},{j}) comp {p}: {slice_form} vs {}",
                    direct[p]
                );
            }
        }
    }

    #[test]
    fn slice_gradients_reproduce_vertex_residuals() {
        let wave = DensityModel::Wave(
            WaveDensity::new(0.025, 0.05, Polynomial(vec![0.0, 0.0, 0.5, 0.0, 0.25])).unwrap(),
        );
        check_slice_del_consistency(&wave, SpatialBc::Periodic, 1);
        check_slice_del_consistency(&wave, SpatialBc::Dirichlet, 2);
        let se = DensityModel::Schrodinger(
            SchrodingerDensity::new(0.01, 0.125, 1.0, Polynomial(vec![0.0, 1.0])).unwrap(),
        );
        check_slice_del_consistency(&se, SpatialBc::Periodic, 3);
        check_slice_del_consistency(&se, SpatialBc::Dirichlet, 4);
    }

    /// Λ must be the Jacobian of D₁𝕃(U, ·) restricted to unknown columns.
    fn check_lambda_fd(model: &DensityModel, bc: SpatialBc, cols: usize, seed: u64) {
        let d = model.dim();
        let sys = SliceSystem::new(model, bc, cols).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u: Vec<f64> = (0..cols * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..cols * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let lam = sys.lambda(&u, &v).unwrap();
        let m = sys.lambda_dim();
        let h = 1e-6;
        let unknowns: Vec<usize> = sys.unknown_columns().collect();
        for (cu, &kcol) in unknowns.iter().enumerate() {
            for q in 0..d {
                let mut vp = v.clone();
                let mut vm = v.clone();
                vp[kcol * d + q] += h;
                vm[kcol * d + q] -= h;
                let (dup, _) = sys.slice_grads_with(model.params(), &u, &vp).unwrap();
                let (dum, _) = sys.slice_grads_with(model.params(), &u, &vm).unwrap();
                for (ru, &jcol) in unknowns.iter().enumerate() {
                    for p in 0..d {
                        let fd = (dup[jcol * d + p] - dum[jcol * d + p]) / (2.0 * h);
                        let got = lam[(ru * d + p) * m + cu * d + q];
                        assert!(
                            (got - fd).abs() <= 1e-6 * fd.abs().max(1.0),
                            "Λ[{ru},{cu}] block ({p},{q}): {got} vs {fd}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn lambda_matches_finite_differences() {
        let wave = DensityModel::Wave(
            WaveDensity::new(0.025, 0.05, Polynomial(vec![0.0, 0.0, 0.5, 0.0, 0.25])).unwrap(),
        );
        check_lambda_fd(&wave, SpatialBc::Periodic, 5, 10);
        check_lambda_fd(&wave, SpatialBc::Dirichlet, 5, 11);
        let se = DensityModel::Schrodinger(
            SchrodingerDensity::new(0.01, 0.125, 1.0, Polynomial(vec![0.0, 1.0])).unwrap(),
        );
        check_lambda_fd(&se, SpatialBc::Periodic, 4, 12);
        check_lambda_fd(&se, SpatialBc::Dirichlet, 4, 13);
    }

    #[test]
    fn quadratic_wave_lambda_is_scaled_identity() {
        // For ½(∂u/∂t)² − ½(∂u/∂x)² − u²/2 the mixed block is constant
        // −1/Δt² on the diagonal and zero elsewhere.
        let model = DensityModel::Wave(
            WaveDensity::new(0.025, 0.05, Polynomial(vec![0.0, 0.0, 0.5])).unwrap(),
        );
        let sys = SliceSystem::new(&model, SpatialBc::Periodic, 6).unwrap();
        let u = vec![0.3; 6];
        let v = vec![-0.2; 6];
        let lam = sys.lambda(&u, &v).unwrap();
        let m = sys.lambda_dim();
        assert_eq!(m, 6);
        for r in 0..m {
            for c in 0..m {
                let expect = if r == c { -1600.0 } else { 0.0 };
                assert!((lam[r * m + c] - expect).abs() < 1e-10);
            }
        }
        // smallest singular value and inverse-norm estimate line up with it
        let sv = crate::linalg::sigma_min_svd(&lam, m, m);
        assert!((sv - 1600.0).abs() < 1e-9);
        let est = crate::linalg::inv_norm_sq_estimate(&lam, m, 5, &vec![1.0; m]).unwrap();
        assert!((est - 1.0 / (1600.0 * 1600.0)).abs() < 1e-16);
    }

    #[test]
    fn dirichlet_lambda_has_interior_dimension() {
        let model = DensityModel::Wave(
            WaveDensity::new(0.1, 0.2, Polynomial(vec![0.0, 0.0, 0.5])).unwrap(),
        );
        let sys = SliceSystem::new(&model, SpatialBc::Dirichlet, 7).unwrap();
        assert_eq!(sys.lambda_dim(), 5);
        assert_eq!(sys.unknown_columns(), 1..6);
    }

    #[test]
    fn two_node_densities_are_rejected() {
        let model = DensityModel::FreeParticle { dim: 2 };
        assert!(matches!(
            SliceSystem::new(&model, SpatialBc::Periodic, 5),
            Err(crate::error::Error::Misuse(_))
        ));
    }

    #[test]
    fn lagrangian_is_cell_sum() {
        let model = DensityModel::Wave(
            WaveDensity::new(0.025, 0.05, Polynomial(vec![0.0, 0.0, 0.5])).unwrap(),
        );
        let sys = SliceSystem::new(&model, SpatialBc::Periodic, 4).unwrap();
        let u = [0.1, 0.4, -0.3, 0.2];
        let v = [0.0, -0.1, 0.25, 0.6];
        let mut expect = 0.0;
        for j in 0..4 {
            let jn = (j + 1) % 4;
            expect += model.eval(&[u[j], v[j], u[jn]]).unwrap();
        }
        let got = sys.lagrangian_with(model.params(), &u, &v).unwrap();
        assert!((got - expect).abs() < 1e-14);
    }
}
