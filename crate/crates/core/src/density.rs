//! Discrete Lagrangian densities and their calculus.
//!
//! A density is a smooth map from the field values on one lattice cell
//! (`arity` nodes, `dim` components each) to a scalar. Everything downstream
//! — Euler–Lagrange residuals, Newton Jacobians, conditioning measures — is
//! built from a density's value, input gradient and input Hessian. All three
//! are implemented generically over [`Scalar`], so the identical code path
//! runs on plain numbers during simulation and on tape variables during
//! training, where the explicit derivative formulas become differentiable
//! expressions in the model parameters.
//!
//! Inputs are packed node-major: `x[r*dim + p]` is component `p` of cell node
//! `r`. Node order follows the conventions in [`crate::lattice`]: for
//! three-node cells `(a, b, c)` = (base, time-advanced, space-advanced); for
//! four-node cells `(a, b, c, e)` additionally `e` = advanced in both.

use crate::error::{Error, Result};
use crate::lattice::StencilKind;
use crate::mlp::MlpSpec;
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};

/// Real polynomial with ascending coefficients: `coeffs[k]` multiplies `x^k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial(pub Vec<f64>);

impl Polynomial {
    pub fn eval<S: Scalar>(&self, x: S) -> S {
        let mut acc = x.lift(0.0);
        for &c in self.0.iter().rev() {
            acc = (acc * x).add_const(c);
        }
        acc
    }

    /// First derivative, evaluated.
    pub fn d1<S: Scalar>(&self, x: S) -> S {
        let mut acc = x.lift(0.0);
        for k in (1..self.0.len()).rev() {
            acc = (acc * x).add_const(k as f64 * self.0[k]);
        }
        acc
    }

    /// Second derivative, evaluated.
    pub fn d2<S: Scalar>(&self, x: S) -> S {
        let mut acc = x.lift(0.0);
        for k in (2..self.0.len()).rev() {
            acc = (acc * x).add_const((k * (k - 1)) as f64 * self.0[k]);
        }
        acc
    }
}

/// Scalar second-order density `½((b−a)/Δt)² − ½((c−a)/Δx)² − V(a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveDensity {
    pub dt: f64,
    pub dx: f64,
    pub potential: Polynomial,
}

impl WaveDensity {
    pub fn new(dt: f64, dx: f64, potential: Polynomial) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite() && dx > 0.0 && dx.is_finite()) {
            return Err(Error::Sizing("step sizes must be positive and finite".into()));
        }
        Ok(WaveDensity { dt, dx, potential })
    }

    fn eval_s<S: Scalar>(&self, x: &[S]) -> S {
        let (a, b, c) = (x[0], x[1], x[2]);
        let rt = (b - a).scale(1.0 / self.dt);
        let rx = (c - a).scale(1.0 / self.dx);
        rt.sq().scale(0.5) - rx.sq().scale(0.5) - self.potential.eval(a)
    }

    fn grad_s<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        let (a, b, c) = (x[0], x[1], x[2]);
        let rt = (b - a).scale(1.0 / self.dt);
        let rx = (c - a).scale(1.0 / self.dx);
        let vp = self.potential.d1(a);
        vec![
            rx.scale(1.0 / self.dx) - rt.scale(1.0 / self.dt) - vp,
            rt.scale(1.0 / self.dt),
            rx.scale(-1.0 / self.dx),
        ]
    }

    fn hess_s<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        let a = x[0];
        let it2 = 1.0 / (self.dt * self.dt);
        let ix2 = 1.0 / (self.dx * self.dx);
        let vpp = self.potential.d2(a);
        let k = |c: f64| a.lift(c);
        vec![
            vpp.scale(-1.0).add_const(it2 - ix2),
            k(-it2),
            k(ix2),
            k(-it2),
            k(it2),
            k(0.0),
            k(ix2),
            k(0.0),
            k(-ix2),
        ]
    }
}

/// First-order two-component density on a four-node cell:
/// `ħ⟨J⁻¹m, q_t⟩ − ‖q_x‖² − V(‖m‖²)` with cell averages
/// `m = (a+b+c+e)/4`, `q_t = ((b−a)+(e−c))/(2Δt)`, `q_x = ((c−a)+(e−b))/(2Δx)`
/// and the symplectic rotation `J⁻¹ = [[0,1],[−1,0]]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchrodingerDensity {
    pub dt: f64,
    pub dx: f64,
    pub hbar: f64,
    /// Potential as a function of the squared modulus `r = ‖m‖²`.
    pub potential: Polynomial,
}

/// Per-node coefficients of the cell averages, node order (a, b, c, e).
const SE_ALPHA: [f64; 4] = [0.25, 0.25, 0.25, 0.25];
const SE_BETA: [f64; 4] = [-1.0, 1.0, -1.0, 1.0];
const SE_GAMMA: [f64; 4] = [-1.0, -1.0, 1.0, 1.0];

impl SchrodingerDensity {
    pub fn new(dt: f64, dx: f64, hbar: f64, potential: Polynomial) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite() && dx > 0.0 && dx.is_finite()) {
            return Err(Error::Sizing("step sizes must be positive and finite".into()));
        }
        if !(hbar > 0.0 && hbar.is_finite()) {
            return Err(Error::Sizing("hbar must be positive and finite".into()));
        }
        Ok(SchrodingerDensity { dt, dx, hbar, potential })
    }

    fn beta(&self, r: usize) -> f64 {
        SE_BETA[r] / (2.0 * self.dt)
    }

    fn gamma(&self, r: usize) -> f64 {
        SE_GAMMA[r] / (2.0 * self.dx)
    }

    /// Cell averages (m, q_t, q_x), each a 2-vector.
    fn averages<S: Scalar>(&self, x: &[S]) -> ([S; 2], [S; 2], [S; 2]) {
        let comp = |p: usize, w: [f64; 4], s: f64| {
            (x[p].scale(w[0]) + x[2 + p].scale(w[1]) + x[4 + p].scale(w[2]) + x[6 + p].scale(w[3]))
                .scale(s)
        };
        let m = [comp(0, SE_ALPHA, 1.0), comp(1, SE_ALPHA, 1.0)];
        let qt = [comp(0, SE_BETA, 1.0 / (2.0 * self.dt)), comp(1, SE_BETA, 1.0 / (2.0 * self.dt))];
        let qx = [comp(0, SE_GAMMA, 1.0 / (2.0 * self.dx)), comp(1, SE_GAMMA, 1.0 / (2.0 * self.dx))];
        (m, qt, qx)
    }

    fn eval_s<S: Scalar>(&self, x: &[S]) -> S {
        let (m, qt, qx) = self.averages(x);
        let rot = (m[1] * qt[0] - m[0] * qt[1]).scale(self.hbar);
        let r2 = m[0].sq() + m[1].sq();
        rot - qx[0].sq() - qx[1].sq() - self.potential.eval(r2)
    }

    #[allow(clippy::needless_range_loop)]
    fn grad_s<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        let (m, qt, qx) = self.averages(x);
        let r2 = m[0].sq() + m[1].sq();
        let vp = self.potential.d1(r2);
        let mut g = Vec::with_capacity(8);
        for r in 0..4 {
            let (al, be, ga) = (SE_ALPHA[r], self.beta(r), self.gamma(r));
            g.push(
                (m[1].scale(be) - qt[1].scale(al)).scale(self.hbar)
                    - qx[0].scale(2.0 * ga)
                    - (vp * m[0]).scale(2.0 * al),
            );
            g.push(
                (qt[0].scale(al) - m[0].scale(be)).scale(self.hbar)
                    - qx[1].scale(2.0 * ga)
                    - (vp * m[1]).scale(2.0 * al),
            );
        }
        g
    }

    #[allow(clippy::needless_range_loop)]
    fn hess_s<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        let (m, _, _) = self.averages(x);
        let r2 = m[0].sq() + m[1].sq();
        let vp = self.potential.d1(r2);
        let vpp = self.potential.d2(r2);
        let mm = [m[0] * m[0], m[0] * m[1], m[1] * m[1]];
        let mut h = vec![x[0].lift(0.0); 64];
        for r in 0..4 {
            for s in 0..4 {
                let rot = self.hbar * (SE_ALPHA[s] * self.beta(r) - SE_ALPHA[r] * self.beta(s));
                let lap = -2.0 * self.gamma(r) * self.gamma(s);
                let pot = -2.0 * SE_ALPHA[r] * SE_ALPHA[s];
                // 2x2 block: rot*J⁻¹ + lap*I + pot*(2V″ mmᵀ + V′ I)
                let diag = |pp: usize| {
                    (mm[2 * pp] * vpp).scale(2.0 * pot) + vp.scale(pot).add_const(lap)
                };
                let off = (mm[1] * vpp).scale(2.0 * pot);
                let base = (r * 2) * 8 + s * 2;
                h[base] = diag(0);
                h[base + 1] = off.add_const(rot);
                h[base + 8] = off.add_const(-rot);
                h[base + 9] = diag(1);
            }
        }
        h
    }
}

/// Neural density over one cell; `spec.input_dim() == arity * dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpDensity {
    pub arity: usize,
    pub dim: usize,
    pub spec: MlpSpec,
    pub params: Vec<f64>,
    /// Marks models of first-order-in-time dynamics: their first step may be
    /// initialized from positions alone.
    #[serde(default)]
    pub velocity_linear: bool,
}

impl MlpDensity {
    pub fn new(arity: usize, dim: usize, spec: MlpSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        if !(2..=4).contains(&arity) {
            return Err(Error::Shape(format!("unsupported cell arity {arity}")));
        }
        if dim == 0 {
            return Err(Error::Shape("field dimension must be positive".into()));
        }
        if spec.input_dim() != arity * dim {
            return Err(Error::Shape(format!(
                "network input width {} does not match cell size {}",
                spec.input_dim(),
                arity * dim
            )));
        }
        let params = spec.init_params(seed);
        Ok(MlpDensity { arity, dim, spec, params, velocity_linear: false })
    }
}

/// Discrete null Lagrangian building block: differences of these functions
/// across cell edges change the density but not its Euler–Lagrange equations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChiFn {
    Zero,
    Linear(f64),
    Square(f64),
    Sin(f64),
    Cos(f64),
    Exp(f64),
}

impl ChiFn {
    fn eval<S: Scalar>(self, u: S) -> S {
        match self {
            ChiFn::Zero => u.lift(0.0),
            ChiFn::Linear(k) => u.scale(k),
            ChiFn::Square(k) => u.sq().scale(k),
            ChiFn::Sin(k) => u.sin().scale(k),
            ChiFn::Cos(k) => u.cos().scale(k),
            ChiFn::Exp(k) => u.exp().scale(k),
        }
    }

    fn d1<S: Scalar>(self, u: S) -> S {
        match self {
            ChiFn::Zero => u.lift(0.0),
            ChiFn::Linear(k) => u.lift(k),
            ChiFn::Square(k) => u.scale(2.0 * k),
            ChiFn::Sin(k) => u.cos().scale(k),
            ChiFn::Cos(k) => u.sin().scale(-k),
            ChiFn::Exp(k) => u.exp().scale(k),
        }
    }

    fn d2<S: Scalar>(self, u: S) -> S {
        match self {
            ChiFn::Zero | ChiFn::Linear(_) => u.lift(0.0),
            ChiFn::Square(k) => u.lift(2.0 * k),
            ChiFn::Sin(k) => u.sin().scale(-k),
            ChiFn::Cos(k) => u.cos().scale(-k),
            ChiFn::Exp(k) => u.exp().scale(k),
        }
    }
}

/// A three-node density shifted by edge differences
/// `χ₁(a)−χ₁(b) + χ₂(a)−χ₂(c) + χ₃(b)−χ₃(c)` (applied componentwise).
/// Shares its Euler–Lagrange equations with `base`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaugeDensity {
    pub base: Box<DensityModel>,
    pub chi: [ChiFn; 3],
}

/// Edge list for the gauge shift: (χ index, node with +, node with −).
const GAUGE_EDGES: [(usize, usize, usize); 3] = [(0, 0, 1), (1, 0, 2), (2, 1, 2)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensityModel {
    Wave(WaveDensity),
    Schrodinger(SchrodingerDensity),
    Mlp(MlpDensity),
    Gauge(GaugeDensity),
    /// Two-node test density `½‖b−a‖²`.
    FreeParticle { dim: usize },
    /// Three-node test density `½‖b−a‖²` that ignores its third node.
    TimeQuadratic { dim: usize },
    /// Constant density; its Euler–Lagrange system is everywhere singular.
    Constant { arity: usize, dim: usize, value: f64 },
}

impl DensityModel {
    pub fn arity(&self) -> usize {
        match self {
            DensityModel::Wave(_) => 3,
            DensityModel::Schrodinger(_) => 4,
            DensityModel::Mlp(m) => m.arity,
            DensityModel::Gauge(g) => g.base.arity(),
            DensityModel::FreeParticle { .. } => 2,
            DensityModel::TimeQuadratic { .. } => 3,
            DensityModel::Constant { arity, .. } => *arity,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DensityModel::Wave(_) => 1,
            DensityModel::Schrodinger(_) => 2,
            DensityModel::Mlp(m) => m.dim,
            DensityModel::Gauge(g) => g.base.dim(),
            DensityModel::FreeParticle { dim } | DensityModel::TimeQuadratic { dim } => *dim,
            DensityModel::Constant { dim, .. } => *dim,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.arity() * self.dim()
    }

    pub fn stencil_kind(&self) -> StencilKind {
        match self.arity() {
            2 => StencilKind::Pts2Three,
            3 => StencilKind::Pts3Seven,
            _ => StencilKind::Pts4Nine,
        }
    }

    /// True when the density is affine in the time difference, i.e. models
    /// first-order-in-time dynamics whose initialization needs no velocities.
    pub fn is_velocity_linear(&self) -> bool {
        match self {
            DensityModel::Schrodinger(_) => true,
            DensityModel::Mlp(m) => m.velocity_linear,
            DensityModel::Gauge(g) => g.base.is_velocity_linear(),
            _ => false,
        }
    }

    /// Number of trainable parameters (zero for analytic models).
    pub fn param_len(&self) -> usize {
        match self {
            DensityModel::Mlp(m) => m.params.len(),
            DensityModel::Gauge(g) => g.base.param_len(),
            _ => 0,
        }
    }

    /// Current parameter values.
    pub fn params(&self) -> &[f64] {
        match self {
            DensityModel::Mlp(m) => &m.params,
            DensityModel::Gauge(g) => g.base.params(),
            _ => &[],
        }
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.param_len() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.param_len(),
                p.len()
            )));
        }
        match self {
            DensityModel::Mlp(m) => m.params.copy_from_slice(p),
            DensityModel::Gauge(g) => g.base.set_params(p)?,
            _ => {}
        }
        Ok(())
    }

    fn check_input<S: Scalar>(&self, params: &[S], x: &[S]) -> Result<()> {
        if params.len() != self.param_len() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.param_len(),
                params.len()
            )));
        }
        if x.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "expected {} cell values, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        Ok(())
    }

    /// Density value with explicit parameters (empty slice for analytic models).
    pub fn eval_with<S: Scalar>(&self, params: &[S], x: &[S]) -> Result<S> {
        self.check_input(params, x)?;
        Ok(match self {
            DensityModel::Wave(w) => w.eval_s(x),
            DensityModel::Schrodinger(s) => s.eval_s(x),
            DensityModel::Mlp(m) => m.spec.value(params, x)?,
            DensityModel::Gauge(g) => {
                let d = g.base.dim();
                let mut l = g.base.eval_with(params, x)?;
                for (ci, plus, minus) in GAUGE_EDGES {
                    for p in 0..d {
                        l = l + g.chi[ci].eval(x[plus * d + p]) - g.chi[ci].eval(x[minus * d + p]);
                    }
                }
                l
            }
            DensityModel::FreeParticle { dim } | DensityModel::TimeQuadratic { dim } => {
                let mut l = x[0].lift(0.0);
                for p in 0..*dim {
                    l = l + (x[dim + p] - x[p]).sq();
                }
                l.scale(0.5)
            }
            DensityModel::Constant { value, .. } => x[0].lift(*value),
        })
    }

    /// Gradient w.r.t. the cell values, packed like the input.
    pub fn grad_with<S: Scalar>(&self, params: &[S], x: &[S]) -> Result<Vec<S>> {
        self.check_input(params, x)?;
        Ok(match self {
            DensityModel::Wave(w) => w.grad_s(x),
            DensityModel::Schrodinger(s) => s.grad_s(x),
            DensityModel::Mlp(m) => m.spec.value_grad(params, x)?.1,
            DensityModel::Gauge(g) => {
                let d = g.base.dim();
                let mut grad = g.base.grad_with(params, x)?;
                for (ci, plus, minus) in GAUGE_EDGES {
                    for p in 0..d {
                        let ip = plus * d + p;
                        let im = minus * d + p;
                        grad[ip] = grad[ip] + g.chi[ci].d1(x[ip]);
                        grad[im] = grad[im] - g.chi[ci].d1(x[im]);
                    }
                }
                grad
            }
            DensityModel::FreeParticle { dim } | DensityModel::TimeQuadratic { dim } => {
                let d = *dim;
                let mut grad = vec![x[0].lift(0.0); self.input_dim()];
                for p in 0..d {
                    let diff = x[d + p] - x[p];
                    grad[p] = -diff;
                    grad[d + p] = diff;
                }
                grad
            }
            DensityModel::Constant { .. } => vec![x[0].lift(0.0); self.input_dim()],
        })
    }

    /// Full symmetric input Hessian, row-major `(arity·dim)²`.
    pub fn hess_with<S: Scalar>(&self, params: &[S], x: &[S]) -> Result<Vec<S>> {
        self.check_input(params, x)?;
        Ok(match self {
            DensityModel::Wave(w) => w.hess_s(x),
            DensityModel::Schrodinger(s) => s.hess_s(x),
            DensityModel::Mlp(m) => m.spec.value_grad_hess(params, x)?.2,
            DensityModel::Gauge(g) => {
                let d = g.base.dim();
                let n = self.input_dim();
                let mut h = g.base.hess_with(params, x)?;
                for (ci, plus, minus) in GAUGE_EDGES {
                    for p in 0..d {
                        let ip = plus * d + p;
                        let im = minus * d + p;
                        h[ip * n + ip] = h[ip * n + ip] + g.chi[ci].d2(x[ip]);
                        h[im * n + im] = h[im * n + im] - g.chi[ci].d2(x[im]);
                    }
                }
                h
            }
            DensityModel::FreeParticle { dim } | DensityModel::TimeQuadratic { dim } => {
                let d = *dim;
                let n = self.input_dim();
                let zero = x[0].lift(0.0);
                let one = x[0].lift(1.0);
                let mut h = vec![zero; n * n];
                for p in 0..d {
                    h[p * n + p] = one;
                    h[(d + p) * n + d + p] = one;
                    h[p * n + d + p] = -one;
                    h[(d + p) * n + p] = -one;
                }
                h
            }
            DensityModel::Constant { .. } => {
                let n = self.input_dim();
                vec![x[0].lift(0.0); n * n]
            }
        })
    }

    /// One `dim x dim` Hessian block `∂²L/∂x_r ∂x_s` between cell nodes.
    pub fn hess_block_with<S: Scalar>(
        &self,
        params: &[S],
        x: &[S],
        r: usize,
        s: usize,
    ) -> Result<Vec<S>> {
        let arity = self.arity();
        if r >= arity || s >= arity {
            return Err(Error::Misuse(format!(
                "node indices ({r}, {s}) out of range for arity {arity}"
            )));
        }
        let full = self.hess_with(params, x)?;
        let (d, n) = (self.dim(), self.input_dim());
        let mut block = Vec::with_capacity(d * d);
        for p in 0..d {
            for q in 0..d {
                block.push(full[(r * d + p) * n + s * d + q]);
            }
        }
        Ok(block)
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.eval_with(self.params(), x)
    }

    pub fn input_grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.grad_with(self.params(), x)
    }

    pub fn input_hess(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.hess_with(self.params(), x)
    }

    /// The block `∂²L/∂x_0 ∂x_1` (base node vs time-advanced node) — the
    /// Newton Jacobian of single-vertex solves and the conditioning measure
    /// of the stencil regularizer.
    pub fn mixed_hessian_block(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.hess_block_with(self.params(), x, 0, 1)
    }
}

/// Wraps a three-node density with edge shifts that leave its discrete
/// Euler–Lagrange equations untouched.
pub fn gauge_modify(base: DensityModel, chi: [ChiFn; 3]) -> Result<DensityModel> {
    if base.arity() != 3 {
        return Err(Error::Misuse(format!(
            "gauge shifts are defined for three-node densities, got arity {}",
            base.arity()
        )));
    }
    Ok(DensityModel::Gauge(GaugeDensity { base: Box::new(base), chi }))
}

/// Cells adjacent to the central vertex of a canonical stencil tuple:
/// node indices into the tuple plus the argument slot the vertex occupies.
fn adjacent_cells(arity: usize) -> &'static [(&'static [usize], usize)] {
    match arity {
        2 => &[(&[0, 1], 1), (&[1, 2], 0)],
        3 => &[(&[0, 1, 2], 0), (&[3, 0, 4], 1), (&[5, 6, 0], 2)],
        4 => &[
            (&[4, 7, 5, 8], 0),
            (&[1, 4, 2, 5], 1),
            (&[3, 6, 4, 7], 2),
            (&[0, 3, 1, 4], 3),
        ],
        _ => unreachable!("arity is validated at construction"),
    }
}

/// Nodes of the adjacent cell in which the central vertex sits in the first
/// argument slot: the Newton cell of a stencil solve, whose mixed Hessian
/// block the stencil regularizer keeps invertible.
pub fn vertex_cell_nodes(arity: usize) -> &'static [usize] {
    adjacent_cells(arity)
        .iter()
        .find(|(_, slot)| *slot == 0)
        .expect("every stencil has a cell anchored at its vertex")
        .0
}

/// Gathers the values of one adjacent cell out of a canonical tuple.
fn gather_cell<S: Scalar>(tuple: &[S], nodes: &[usize], d: usize, out: &mut [S]) {
    for (slot, &node) in nodes.iter().enumerate() {
        out[slot * d..(slot + 1) * d].copy_from_slice(&tuple[node * d..(node + 1) * d]);
    }
}

/// Discrete Euler–Lagrange residual at the central vertex of a canonical
/// stencil tuple: the gradient of the adjacent-cell action sum w.r.t. the
/// field value at that vertex. Returns a `dim`-vector; a solution of the
/// field equations makes it vanish at every interior vertex.
pub fn del_residual_with<S: Scalar>(
    model: &DensityModel,
    params: &[S],
    tuple: &[S],
) -> Result<Vec<S>> {
    let d = model.dim();
    let expected = model.stencil_kind().points() * d;
    if tuple.len() != expected {
        return Err(Error::Shape(format!(
            "expected {} tuple values, got {}",
            expected,
            tuple.len()
        )));
    }
    let arity = model.arity();
    let mut cell = vec![tuple[0]; arity * d];
    let mut out = vec![tuple[0].lift(0.0); d];
    for &(nodes, vertex_slot) in adjacent_cells(arity) {
        gather_cell(tuple, nodes, d, &mut cell);
        let g = model.grad_with(params, &cell)?;
        for p in 0..d {
            out[p] = out[p] + g[vertex_slot * d + p];
        }
    }
    Ok(out)
}

pub fn del_residual(model: &DensityModel, tuple: &[f64]) -> Result<Vec<f64>> {
    del_residual_with(model, model.params(), tuple)
}
