//! Minimal reverse-mode automatic differentiation on a Wengert list.
//!
//! The tape records one node per arithmetic operation with precomputed local
//! partials; a backward sweep accumulates adjoints for every recorded node.
//! `Var` is `Copy` and borrows the tape, so expression code looks like plain
//! arithmetic. Constants created via `lift`/`scale`/`add_const` do not feed
//! gradients back.
//!
//! Higher-order input-derivatives of models are *not* obtained by replaying
//! the tape; they are explicit closed-form recurrences (see `mlp`/`density`)
//! recorded as ordinary first-order expressions, so one backward sweep yields
//! parameter gradients of residuals, curvature blocks and singular-value
//! estimates alike.

use crate::scalar::Scalar;
use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Clone, Copy)]
struct Node {
    p: [u32; 2],
    w: [f64; 2],
}

#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: u32,
    v: f64,
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drops all recorded nodes. Any `Var` created before this call must not
    /// be used afterwards; keep tape lifetimes scoped per loss evaluation.
    pub fn clear(&self) {
        self.nodes.borrow_mut().clear();
    }

    fn push(&self, p: [u32; 2], w: [f64; 2], v: f64) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let idx = nodes.len() as u32;
        nodes.push(Node { p, w });
        Var { tape: self, idx, v }
    }

    /// New independent variable.
    pub fn leaf(&self, v: f64) -> Var<'_> {
        let idx = self.nodes.borrow().len() as u32;
        self.push([idx, idx], [0.0, 0.0], v)
    }

    pub fn leaves(&self, values: &[f64]) -> Vec<Var<'_>> {
        values.iter().map(|&v| self.leaf(v)).collect()
    }

    /// Adjoints of every node w.r.t. `root` (reverse sweep).
    pub fn gradient(&self, root: Var<'_>) -> Gradients {
        let nodes = self.nodes.borrow();
        let mut adj = vec![0.0; root.idx as usize + 1];
        adj[root.idx as usize] = 1.0;
        for i in (0..=root.idx as usize).rev() {
            let a = adj[i];
            if a != 0.0 {
                let n = nodes[i];
                if n.w[0] != 0.0 {
                    adj[n.p[0] as usize] += n.w[0] * a;
                }
                if n.w[1] != 0.0 {
                    adj[n.p[1] as usize] += n.w[1] * a;
                }
            }
        }
        Gradients { adj }
    }
}

pub struct Gradients {
    adj: Vec<f64>,
}

impl Gradients {
    pub fn wrt(&self, v: Var<'_>) -> f64 {
        self.adj.get(v.idx as usize).copied().unwrap_or(0.0)
    }
}

/// Evaluates `f` at `at` on a fresh tape and returns the value together with
/// its gradient w.r.t. `at`. The closure may create further leaves (data it
/// does not want differentiated); only the adjoints of `at` are returned.
pub fn value_and_grad<F>(at: &[f64], f: F) -> crate::error::Result<(f64, Vec<f64>)>
where
    F: for<'t> FnOnce(&'t Tape, &[Var<'t>]) -> crate::error::Result<Var<'t>>,
{
    let tape = Tape::new();
    let vars = tape.leaves(at);
    let y = f(&tape, &vars)?;
    let g = tape.gradient(y);
    Ok((y.value(), vars.iter().map(|&v| g.wrt(v)).collect()))
}

impl<'t> Var<'t> {
    pub fn value(self) -> f64 {
        self.v
    }

    fn unary(self, v: f64, dv: f64) -> Var<'t> {
        self.tape.push([self.idx, self.idx], [dv, 0.0], v)
    }

    fn binary(self, rhs: Var<'t>, v: f64, da: f64, db: f64) -> Var<'t> {
        self.tape.push([self.idx, rhs.idx], [da, db], v)
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Self) -> Self {
        self.binary(rhs, self.v + rhs.v, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Self) -> Self {
        self.binary(rhs, self.v - rhs.v, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Self) -> Self {
        self.binary(rhs, self.v * rhs.v, rhs.v, self.v)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Self) -> Self {
        self.binary(rhs, self.v / rhs.v, 1.0 / rhs.v, -self.v / (rhs.v * rhs.v))
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Self {
        self.unary(-self.v, -1.0)
    }
}

impl<'t> Scalar for Var<'t> {
    fn val(self) -> f64 {
        self.v
    }
    fn lift(self, c: f64) -> Self {
        self.tape.leaf(c)
    }
    fn scale(self, c: f64) -> Self {
        self.unary(self.v * c, c)
    }
    fn add_const(self, c: f64) -> Self {
        self.unary(self.v + c, 1.0)
    }
    fn recip(self) -> Self {
        let r = 1.0 / self.v;
        self.unary(r, -r * r)
    }
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        self.unary(s, 0.5 / s)
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        self.unary(e, e)
    }
    fn ln(self) -> Self {
        self.unary(self.v.ln(), 1.0 / self.v)
    }
    fn sin(self) -> Self {
        self.unary(self.v.sin(), self.v.cos())
    }
    fn cos(self) -> Self {
        self.unary(self.v.cos(), -self.v.sin())
    }
    fn tanh(self) -> Self {
        let t = self.v.tanh();
        self.unary(t, 1.0 - t * t)
    }
    fn sigmoid(self) -> Self {
        let s = Scalar::sigmoid(self.v);
        self.unary(s, s * (1.0 - s))
    }
    fn softplus(self) -> Self {
        self.unary(Scalar::softplus(self.v), Scalar::sigmoid(self.v))
    }
    fn powi(self, n: i32) -> Self {
        self.unary(self.v.powi(n), f64::from(n) * self.v.powi(n - 1))
    }
}
