//! Space-time lattices, discrete fields and stencil extraction.
//!
//! Time index `i` runs over `0..=n_t`, space index `j` over the stored
//! columns: `n_x` columns for periodic boundaries, `n_x + 1` for Dirichlet
//! (both endpoints stored). Fields carry `d` real components per node;
//! complex fields use `d = 2` with (re, im) interleaved.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpatialBc {
    Periodic,
    Dirichlet,
}

impl SpatialBc {
    pub fn label(self) -> &'static str {
        match self {
            SpatialBc::Periodic => "periodic",
            SpatialBc::Dirichlet => "dirichlet",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    pub n_t: usize,
    pub n_x: usize,
    pub dt: f64,
    pub dx: f64,
    pub bc: SpatialBc,
}

impl Grid2D {
    pub fn new(n_t: usize, n_x: usize, dt: f64, dx: f64, bc: SpatialBc) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0 && dx.is_finite() && dx > 0.0) {
            return Err(Error::Shape(format!("grid spacings must be positive, got dt={dt}, dx={dx}")));
        }
        if n_t < 2 {
            return Err(Error::Sizing(format!("need at least 2 time steps, got {n_t}")));
        }
        if n_x < 3 {
            return Err(Error::Sizing(format!("need at least 3 spatial cells, got {n_x}")));
        }
        Ok(Grid2D { n_t, n_x, dt, dx, bc })
    }

    /// Internal constructor for degenerate outputs (e.g. zero-step
    /// propagation results); skips the size validation of [`Grid2D::new`].
    pub(crate) fn raw(n_t: usize, n_x: usize, dt: f64, dx: f64, bc: SpatialBc) -> Self {
        Grid2D { n_t, n_x, dt, dx, bc }
    }

    /// Number of stored spatial columns.
    pub fn cols(&self) -> usize {
        match self.bc {
            SpatialBc::Periodic => self.n_x,
            SpatialBc::Dirichlet => self.n_x + 1,
        }
    }

    /// Number of stored time rows.
    pub fn rows(&self) -> usize {
        self.n_t + 1
    }

    /// Spatial period (periodic grids).
    pub fn period(&self) -> f64 {
        self.n_x as f64 * self.dx
    }
}

/// Mathematical-modulus index wrapping for periodic grids.
pub fn spatial_wrap(grid: &Grid2D, j: i64) -> Result<usize> {
    match grid.bc {
        SpatialBc::Periodic => {
            let m = grid.n_x as i64;
            Ok((((j % m) + m) % m) as usize)
        }
        SpatialBc::Dirichlet => Err(Error::Misuse(
            "spatial_wrap is only defined on periodic grids".into(),
        )),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub grid: Grid2D,
    /// Real components per node (complex fields: d = 2).
    pub d: usize,
    /// Row-major: time row, then column, then component.
    data: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: Grid2D, d: usize) -> Self {
        let len = grid.rows() * grid.cols() * d;
        Field { grid, d, data: vec![0.0; len] }
    }

    pub fn from_data(grid: Grid2D, d: usize, data: Vec<f64>) -> Result<Self> {
        let want = grid.rows() * grid.cols() * d;
        if data.len() != want {
            return Err(Error::Shape(format!(
                "field data length {} does not match {} rows x {} cols x {} components",
                data.len(),
                grid.rows(),
                grid.cols(),
                d
            )));
        }
        Ok(Field { grid, d, data })
    }

    pub fn node(&self, i: usize, j: usize) -> &[f64] {
        let c = self.grid.cols();
        let base = (i * c + j) * self.d;
        &self.data[base..base + self.d]
    }

    pub fn node_mut(&mut self, i: usize, j: usize) -> &mut [f64] {
        let c = self.grid.cols();
        let base = (i * c + j) * self.d;
        &mut self.data[base..base + self.d]
    }

    /// One full time slice, `cols * d` values.
    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.grid.cols() * self.d;
        &self.data[i * w..(i + 1) * w]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let w = self.grid.cols() * self.d;
        &mut self.data[i * w..(i + 1) * w]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Max-norm distance between two fields; for d = 2 the per-node complex
    /// modulus of the difference is used.
    pub fn linf_distance(&self, other: &Field) -> Result<f64> {
        if self.d != other.d || self.data.len() != other.data.len() {
            return Err(Error::Shape("fields have different shapes".into()));
        }
        let mut worst: f64 = 0.0;
        for (a, b) in self.data.chunks(self.d).zip(other.data.chunks(self.d)) {
            let dist_sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
            worst = worst.max(dist_sq.sqrt());
        }
        Ok(worst)
    }
}

/// Supported stencil families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StencilKind {
    /// 7-point neighborhood of a 3-point density `L_d(u^i_j, u^{i+1}_j, u^i_{j+1})`.
    Pts3Seven,
    /// 9-point neighborhood of a 4-point density
    /// `L_d(u^i_j, u^{i+1}_j, u^i_{j+1}, u^{i+1}_{j+1})`.
    Pts4Nine,
    /// 3-point temporal neighborhood of a 2-point density `L(q^i, q^{i+1})`
    /// (independent chains per column; used by the latent ROM).
    Pts2Three,
}

impl StencilKind {
    /// Number of lattice points in one tuple.
    pub fn points(self) -> usize {
        match self {
            StencilKind::Pts3Seven => 7,
            StencilKind::Pts4Nine => 9,
            StencilKind::Pts2Three => 3,
        }
    }

    /// Density arity this stencil belongs to.
    pub fn arity(self) -> usize {
        match self {
            StencilKind::Pts3Seven => 3,
            StencilKind::Pts4Nine => 4,
            StencilKind::Pts2Three => 2,
        }
    }

    /// (time, space) offsets of the tuple points relative to the vertex, in
    /// the canonical storage order used throughout the crate.
    pub fn offsets(self) -> &'static [(i64, i64)] {
        match self {
            // (u^i_j, u^{i+1}_j, u^i_{j+1}, u^{i-1}_j, u^{i-1}_{j+1}, u^i_{j-1}, u^{i+1}_{j-1})
            StencilKind::Pts3Seven => &[
                (0, 0),
                (1, 0),
                (0, 1),
                (-1, 0),
                (-1, 1),
                (0, -1),
                (1, -1),
            ],
            // full 3x3 block, row-major in (time, space)
            StencilKind::Pts4Nine => &[
                (-1, -1),
                (-1, 0),
                (-1, 1),
                (0, -1),
                (0, 0),
                (0, 1),
                (1, -1),
                (1, 0),
                (1, 1),
            ],
            StencilKind::Pts2Three => &[(-1, 0), (0, 0), (1, 0)],
        }
    }
}

/// One extracted stencil neighborhood: the values of all tuple points in the
/// canonical order of [`StencilKind::offsets`], flattened with `d` components
/// per point.
#[derive(Debug, Clone, PartialEq)]
pub struct StencilTuple {
    pub kind: StencilKind,
    pub stride: usize,
    /// Vertex (time, column) the discrete Euler-Lagrange equation is centred on.
    pub vertex: (usize, usize),
    pub d: usize,
    pub values: Vec<f64>,
}

/// Enumerates all interior stencil tuples of a field at the given stride.
///
/// Vertices are interior in time (`stride <= i <= n_t - stride`); spatially
/// all columns qualify on periodic grids (indices wrap), while Dirichlet
/// grids keep `stride <= j <= n_x - stride`.
pub fn extract_stencils(field: &Field, kind: StencilKind, stride: usize) -> Result<Vec<StencilTuple>> {
    if stride == 0 {
        return Err(Error::Misuse("stride must be >= 1".into()));
    }
    let g = &field.grid;
    let s = stride as i64;
    if 2 * stride > g.n_t {
        return Err(Error::Sizing(format!(
            "grid with {} time steps has no interior vertices at stride {stride}",
            g.n_t
        )));
    }
    let (j_lo, j_hi) = match g.bc {
        SpatialBc::Periodic => (0usize, g.n_x - 1),
        SpatialBc::Dirichlet => {
            if 2 * stride > g.n_x {
                return Err(Error::Sizing(format!(
                    "Dirichlet grid with {} cells has no interior vertices at stride {stride}",
                    g.n_x
                )));
            }
            (stride, g.n_x - stride)
        }
    };
    let offsets = kind.offsets();
    let mut out = Vec::with_capacity((g.n_t + 1 - 2 * stride) * (j_hi - j_lo + 1));
    for i in stride..=g.n_t - stride {
        for j in j_lo..=j_hi {
            let mut values = Vec::with_capacity(offsets.len() * field.d);
            for &(oi, oj) in offsets {
                let ii = (i as i64 + oi * s) as usize;
                let jj = match g.bc {
                    SpatialBc::Periodic => spatial_wrap(g, j as i64 + oj * s)?,
                    SpatialBc::Dirichlet => (j as i64 + oj * s) as usize,
                };
                values.extend_from_slice(field.node(ii, jj));
            }
            out.push(StencilTuple {
                kind,
                stride,
                vertex: (i, j),
                d: field.d,
                values,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo_grid(bc: SpatialBc) -> Grid2D {
        Grid2D::new(20, 20, 0.025, 0.05, bc).unwrap()
    }

    fn ramp_field(grid: Grid2D, d: usize) -> Field {
        let mut f = Field::zeros(grid, d);
        for i in 0..grid.rows() {
            for j in 0..grid.cols() {
                for k in 0..d {
                    f.node_mut(i, j)[k] = (i * 1000 + j * 10 + k) as f64;
                }
            }
        }
        f
    }

    #[test]
    fn wrap_uses_mathematical_modulus() {
        let g = demo_grid(SpatialBc::Periodic);
        assert_eq!(spatial_wrap(&g, -1).unwrap(), 19);
        assert_eq!(spatial_wrap(&g, 20).unwrap(), 0);
        assert_eq!(spatial_wrap(&g, -41).unwrap(), 19);
        assert_eq!(spatial_wrap(&g, 7).unwrap(), 7);
    }

    #[test]
    fn wrap_rejected_on_dirichlet() {
        let g = demo_grid(SpatialBc::Dirichlet);
        assert!(matches!(spatial_wrap(&g, -1), Err(Error::Misuse(_))));
    }

    #[test]
    fn grid_validation() {
        assert!(Grid2D::new(1, 20, 0.1, 0.1, SpatialBc::Periodic).is_err());
        assert!(Grid2D::new(20, 2, 0.1, 0.1, SpatialBc::Periodic).is_err());
        assert!(Grid2D::new(20, 20, 0.0, 0.1, SpatialBc::Periodic).is_err());
        assert!(Grid2D::new(20, 20, 0.1, -0.1, SpatialBc::Periodic).is_err());
    }

    #[test]
    fn tuple_counts_match_interior_formulas() {
        let f = ramp_field(demo_grid(SpatialBc::Periodic), 1);
        // (n_t - 2s + 1) * n_x
        assert_eq!(extract_stencils(&f, StencilKind::Pts3Seven, 1).unwrap().len(), 380);
        assert_eq!(extract_stencils(&f, StencilKind::Pts3Seven, 2).unwrap().len(), 340);

        let g = Grid2D::new(12, 8, 0.01, 0.125, SpatialBc::Periodic).unwrap();
        let f = ramp_field(g, 2);
        assert_eq!(extract_stencils(&f, StencilKind::Pts4Nine, 1).unwrap().len(), 88);

        let f = ramp_field(demo_grid(SpatialBc::Dirichlet), 1);
        assert_eq!(extract_stencils(&f, StencilKind::Pts3Seven, 1).unwrap().len(), 19 * 19);
    }

    #[test]
    fn seven_point_layout_is_canonical() {
        let f = ramp_field(demo_grid(SpatialBc::Periodic), 1);
        let tuples = extract_stencils(&f, StencilKind::Pts3Seven, 1).unwrap();
        let t = tuples.iter().find(|t| t.vertex == (5, 3)).unwrap();
        let v = |i: usize, j: usize| (i * 1000 + j * 10) as f64;
        assert_eq!(
            t.values,
            vec![v(5, 3), v(6, 3), v(5, 4), v(4, 3), v(4, 4), v(5, 2), v(6, 2)]
        );
    }

    #[test]
    fn periodic_tuples_wrap_space() {
        let f = ramp_field(demo_grid(SpatialBc::Periodic), 1);
        let tuples = extract_stencils(&f, StencilKind::Pts3Seven, 1).unwrap();
        let t = tuples.iter().find(|t| t.vertex == (5, 0)).unwrap();
        let v = |i: usize, j: usize| (i * 1000 + j * 10) as f64;
        // u^i_{j-1} and u^{i+1}_{j-1} wrap to column 19
        assert_eq!(t.values[5], v(5, 19));
        assert_eq!(t.values[6], v(6, 19));
    }

    #[test]
    fn stride_two_matches_extraction_on_subsampled_field() {
        let grid = demo_grid(SpatialBc::Periodic);
        let f = ramp_field(grid, 1);
        // Subsample every second row/column into a 10x10 grid.
        let sub_grid = Grid2D::new(10, 10, 2.0 * grid.dt, 2.0 * grid.dx, SpatialBc::Periodic).unwrap();
        let mut sub = Field::zeros(sub_grid, 1);
        for i in 0..=10 {
            for j in 0..10 {
                sub.node_mut(i, j)[0] = f.node(2 * i, 2 * j)[0];
            }
        }
        let coarse = extract_stencils(&sub, StencilKind::Pts3Seven, 1).unwrap();
        let strided = extract_stencils(&f, StencilKind::Pts3Seven, 2).unwrap();
        for c in &coarse {
            let (i, j) = c.vertex;
            let m = strided
                .iter()
                .find(|t| t.vertex == (2 * i, 2 * j))
                .expect("matching strided tuple");
            assert_eq!(m.values, c.values);
        }
    }

    #[test]
    fn nine_point_covers_full_block() {
        let g = Grid2D::new(12, 8, 0.01, 0.125, SpatialBc::Periodic).unwrap();
        let f = ramp_field(g, 2);
        let tuples = extract_stencils(&f, StencilKind::Pts4Nine, 1).unwrap();
        let t = tuples.iter().find(|t| t.vertex == (3, 4)).unwrap();
        assert_eq!(t.values.len(), 18);
        // first point is (i-1, j-1), both components
        assert_eq!(t.values[0], (2 * 1000 + 3 * 10) as f64);
        assert_eq!(t.values[1], (2 * 1000 + 3 * 10 + 1) as f64);
        // centre point sits at index 4
        assert_eq!(t.values[8], (3 * 1000 + 4 * 10) as f64);
    }

    #[test]
    fn sizing_errors_for_small_interiors() {
        let g = Grid2D::new(2, 20, 0.1, 0.1, SpatialBc::Periodic).unwrap();
        let f = Field::zeros(g, 1);
        assert!(extract_stencils(&f, StencilKind::Pts3Seven, 1).is_ok());
        assert!(matches!(
            extract_stencils(&f, StencilKind::Pts3Seven, 2),
            Err(Error::Sizing(_))
        ));
    }

    #[test]
    fn linf_distance_uses_complex_modulus() {
        let g = Grid2D::new(2, 3, 1.0, 1.0, SpatialBc::Periodic).unwrap();
        let mut a = Field::zeros(g, 2);
        let b = Field::zeros(g, 2);
        a.node_mut(0, 0)[0] = 3.0;
        a.node_mut(0, 0)[1] = 4.0;
        assert!((a.linf_distance(&b).unwrap() - 5.0).abs() < 1e-15);
    }
}
