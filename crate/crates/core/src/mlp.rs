//! Small fully connected networks with closed-form layer recurrences for
//! input gradients and input Hessians.
//!
//! The recurrences are written against [`Scalar`], so the same code produces
//! plain numbers (simulation) or tape expressions (training). Recording the
//! *explicit* derivative recurrence on the tape is what makes parameter
//! gradients of stencil residuals and curvature blocks exact: one reverse
//! sweep differentiates through value, gradient and Hessian paths alike.
//!
//! Parameter layout: per affine layer, the weight matrix row-major
//! (`n_out x n_in`) followed by the bias vector when that layer has one.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Softplus,
}

impl Activation {
    pub fn label(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Softplus => "softplus",
        }
    }

    /// Value with first and second derivative.
    fn with_derivs<S: Scalar>(self, z: S) -> (S, S, S) {
        match self {
            Activation::Tanh => {
                let t = z.tanh();
                let d1 = t.lift(1.0) - t * t;
                let d2 = t.scale(-2.0) * d1;
                (t, d1, d2)
            }
            Activation::Softplus => {
                let a = z.softplus();
                let s = z.sigmoid();
                let d2 = s * (s.scale(-1.0).add_const(1.0));
                (a, s, d2)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    /// Layer widths including input and the scalar output, e.g. `[3, 10, 10, 1]`.
    pub layers: Vec<usize>,
    pub activation: Activation,
    /// One flag per affine layer; the conventional choice is biases on hidden
    /// layers and a bias-free linear output.
    pub biases: Vec<bool>,
}

impl MlpSpec {
    /// Hidden-bias, bias-free-output network.
    pub fn new(layers: Vec<usize>, activation: Activation) -> Result<Self> {
        let n_affine = layers.len().saturating_sub(1);
        let mut biases = vec![true; n_affine];
        if let Some(last) = biases.last_mut() {
            *last = false;
        }
        let spec = MlpSpec { layers, activation, biases };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.len() < 2 {
            return Err(Error::Shape("network needs at least input and output layers".into()));
        }
        if self.layers.contains(&0) {
            return Err(Error::Shape("zero-width layer".into()));
        }
        if *self.layers.last().unwrap() != 1 {
            return Err(Error::Shape("density networks must have scalar output".into()));
        }
        if self.biases.len() != self.layers.len() - 1 {
            return Err(Error::Shape(format!(
                "expected {} bias flags, got {}",
                self.layers.len() - 1,
                self.biases.len()
            )));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0]
    }

    pub fn param_count(&self) -> usize {
        (0..self.layers.len() - 1)
            .map(|k| self.layers[k] * self.layers[k + 1] + if self.biases[k] { self.layers[k + 1] } else { 0 })
            .sum()
    }

    /// Glorot-style uniform initialization, biases zero. Deterministic in the
    /// seed: identical (seed, spec) pairs give bit-identical parameters.
    pub fn init_params(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(self.param_count());
        for k in 0..self.layers.len() - 1 {
            let (n_in, n_out) = (self.layers[k], self.layers[k + 1]);
            let limit = (6.0 / (n_in + n_out) as f64).sqrt();
            for _ in 0..n_in * n_out {
                params.push(rng.random_range(-limit..limit));
            }
            if self.biases[k] {
                params.extend(std::iter::repeat_n(0.0, n_out));
            }
        }
        params
    }

    fn check_shapes<S: Scalar>(&self, params: &[S], x: &[S]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        if x.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "expected {} inputs, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        Ok(())
    }

    /// Forward value only.
    pub fn value<S: Scalar>(&self, params: &[S], x: &[S]) -> Result<S> {
        self.check_shapes(params, x)?;
        let mut a = x.to_vec();
        let mut off = 0;
        for k in 0..self.layers.len() - 1 {
            let (n_in, n_out) = (self.layers[k], self.layers[k + 1]);
            let w = &params[off..off + n_in * n_out];
            off += n_in * n_out;
            let mut z: Vec<S> = (0..n_out)
                .map(|u| crate::linalg::dot(&w[u * n_in..(u + 1) * n_in], &a))
                .collect();
            if self.biases[k] {
                for (zu, &b) in z.iter_mut().zip(&params[off..off + n_out]) {
                    *zu = *zu + b;
                }
                off += n_out;
            }
            let last = k == self.layers.len() - 2;
            a = if last {
                z
            } else {
                z.into_iter().map(|zu| self.activation.with_derivs(zu).0).collect()
            };
        }
        Ok(a[0])
    }

    /// Forward value plus the gradient w.r.t. the inputs.
    pub fn value_grad<S: Scalar>(&self, params: &[S], x: &[S]) -> Result<(S, Vec<S>)> {
        let (v, g, _) = self.propagate(params, x, false)?;
        Ok((v, g))
    }

    /// Forward value, input gradient and the full symmetric input Hessian
    /// (row-major `n_in x n_in`).
    pub fn value_grad_hess<S: Scalar>(&self, params: &[S], x: &[S]) -> Result<(S, Vec<S>, Vec<S>)> {
        let (v, g, h) = self.propagate(params, x, true)?;
        Ok((v, g, h.expect("hessian requested")))
    }

    /// Shared propagation: tracks per-unit values, Jacobians w.r.t. the input
    /// and (optionally) per-unit input Hessians through the layers.
    #[allow(clippy::type_complexity, clippy::needless_range_loop)]
    fn propagate<S: Scalar>(
        &self,
        params: &[S],
        x: &[S],
        want_hess: bool,
    ) -> Result<(S, Vec<S>, Option<Vec<S>>)> {
        self.check_shapes(params, x)?;
        let n_in = self.input_dim();
        let hsize = n_in * n_in;
        let zero = x[0].lift(0.0);

        // State after the current layer: activations, Jacobian rows (one
        // n_in-vector per unit), Hessians (one n_in x n_in matrix per unit).
        let mut a = x.to_vec();
        let mut jac: Vec<S> = Vec::new(); // n_units x n_in, row-major; empty means identity
        let mut hess: Vec<S> = Vec::new(); // n_units x (n_in*n_in)

        let mut off = 0;
        for k in 0..self.layers.len() - 1 {
            let (nl, n_out) = (self.layers[k], self.layers[k + 1]);
            let w = &params[off..off + nl * n_out];
            off += nl * n_out;
            let bias = if self.biases[k] {
                let b = &params[off..off + n_out];
                off += n_out;
                Some(b)
            } else {
                None
            };
            let last = k == self.layers.len() - 2;

            let mut new_a = Vec::with_capacity(n_out);
            let mut new_jac = Vec::with_capacity(n_out * n_in);
            let mut new_hess = if want_hess { Vec::with_capacity(n_out * hsize) } else { Vec::new() };

            for u in 0..n_out {
                let wu = &w[u * nl..(u + 1) * nl];
                let mut z = crate::linalg::dot(wu, &a);
                if let Some(b) = bias {
                    z = z + b[u];
                }

                // dz/dx: either the weight row itself (first layer) or W * jac.
                let zgrad: Vec<S> = if jac.is_empty() {
                    wu.to_vec()
                } else {
                    (0..n_in)
                        .map(|c| {
                            let mut acc = wu[0] * jac[c];
                            for v in 1..nl {
                                acc = acc + wu[v] * jac[v * n_in + c];
                            }
                            acc
                        })
                        .collect()
                };

                // d2z/dx2 = sum_v w_uv * H_{k-1}[v]  (zero through the first layer)
                let zhess: Option<Vec<S>> = if want_hess {
                    if hess.is_empty() {
                        None
                    } else {
                        let mut acc = vec![zero; hsize];
                        for v in 0..nl {
                            let hv = &hess[v * hsize..(v + 1) * hsize];
                            for (t, &hvi) in acc.iter_mut().zip(hv) {
                                *t = *t + wu[v] * hvi;
                            }
                        }
                        Some(acc)
                    }
                } else {
                    None
                };

                if last {
                    new_a.push(z);
                    new_jac.extend_from_slice(&zgrad);
                    if want_hess {
                        match zhess {
                            Some(h) => new_hess.extend_from_slice(&h),
                            None => new_hess.extend(std::iter::repeat_n(zero, hsize)),
                        }
                    }
                } else {
                    let (au, d1, d2) = self.activation.with_derivs(z);
                    new_a.push(au);
                    for c in 0..n_in {
                        new_jac.push(d1 * zgrad[c]);
                    }
                    if want_hess {
                        // H_u = d2 * zgrad zgradᵀ + d1 * zhess
                        for r in 0..n_in {
                            for c in 0..n_in {
                                let mut huv = d2 * zgrad[r] * zgrad[c];
                                if let Some(zh) = &zhess {
                                    huv = huv + d1 * zh[r * n_in + c];
                                }
                                new_hess.push(huv);
                            }
                        }
                    }
                }
            }
            a = new_a;
            jac = new_jac;
            hess = new_hess;
        }

        let value = a[0];
        let grad = jac;
        let h = if want_hess { Some(hess) } else { None };
        Ok((value, grad, h))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_grad(spec: &MlpSpec, params: &[f64], x: &[f64]) -> Vec<f64> {
        let h = 1e-5;
        (0..x.len())
            .map(|i| {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[i] += h;
                xm[i] -= h;
                (spec.value(params, &xp).unwrap() - spec.value(params, &xm).unwrap()) / (2.0 * h)
            })
            .collect()
    }

    fn fd_hess(spec: &MlpSpec, params: &[f64], x: &[f64]) -> Vec<f64> {
        let h = 1e-4;
        let n = x.len();
        let mut out = vec![0.0; n * n];
        for r in 0..n {
            for c in 0..n {
                let mut xs = [x.to_vec(), x.to_vec(), x.to_vec(), x.to_vec()];
                xs[0][r] += h;
                xs[0][c] += h;
                xs[1][r] += h;
                xs[1][c] -= h;
                xs[2][r] -= h;
                xs[2][c] += h;
                xs[3][r] -= h;
                xs[3][c] -= h;
                let f: Vec<f64> = xs.iter().map(|xi| spec.value(params, xi).unwrap()).collect();
                out[r * n + c] = (f[0] - f[1] - f[2] + f[3]) / (4.0 * h * h);
            }
        }
        out
    }

    #[test]
    fn parameter_counts() {
        let wave = MlpSpec::new(vec![3, 10, 10, 1], Activation::Tanh).unwrap();
        assert_eq!(wave.param_count(), 160);
        let se = MlpSpec::new(vec![8, 12, 12, 1], Activation::Softplus).unwrap();
        assert_eq!(se.param_count(), 276);
        let rom = MlpSpec::new(vec![4, 10, 10, 1], Activation::Softplus).unwrap();
        assert_eq!(rom.param_count(), 170);
    }

    #[test]
    fn init_is_deterministic_in_seed() {
        let spec = MlpSpec::new(vec![3, 10, 10, 1], Activation::Tanh).unwrap();
        let a = spec.init_params(42);
        let b = spec.init_params(42);
        let c = spec.init_params(43);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 160);
        // biases land at zero
        let w1 = 30;
        assert!(a[w1..w1 + 10].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn gradient_and_hessian_match_finite_differences() {
        for activation in [Activation::Tanh, Activation::Softplus] {
            let spec = MlpSpec::new(vec![3, 7, 5, 1], activation).unwrap();
            let params = spec.init_params(7);
            let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(11);
            for _ in 0..20 {
                let x: Vec<f64> =
                    (0..3).map(|_| rand::Rng::random_range(&mut rng, -1.5..1.5)).collect();
                let (v, g, h) = spec.value_grad_hess(&params, &x).unwrap();
                assert!((v - spec.value(&params, &x).unwrap()).abs() < 1e-14);
                let gfd = fd_grad(&spec, &params, &x);
                for (gi, ei) in g.iter().zip(&gfd) {
                    assert!((gi - ei).abs() <= 1e-6 * ei.abs().max(1.0), "{gi} vs {ei}");
                }
                let hfd = fd_hess(&spec, &params, &x);
                for (hi, ei) in h.iter().zip(&hfd) {
                    assert!((hi - ei).abs() <= 1e-4 * ei.abs().max(1.0), "{hi} vs {ei}");
                }
                // symmetry of the assembled Hessian
                for r in 0..3 {
                    for c in 0..3 {
                        assert!((h[r * 3 + c] - h[c * 3 + r]).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn derivative_paths_stay_consistent_on_tape() {
        // Running the same recurrence with Var values must give identical
        // numbers to the f64 path.
        use crate::tape::Tape;
        let spec = MlpSpec::new(vec![3, 6, 1], Activation::Tanh).unwrap();
        let params = spec.init_params(3);
        let x = vec![0.3, -0.8, 1.1];
        let (v64, g64, h64) = spec.value_grad_hess(&params, &x).unwrap();

        let tape = Tape::new();
        let pv = tape.leaves(&params);
        let xv = tape.leaves(&x);
        let (v, g, h) = spec.value_grad_hess(&pv, &xv).unwrap();
        assert_eq!(v.val(), v64);
        for (a, b) in g.iter().zip(&g64) {
            assert_eq!(a.val(), *b);
        }
        for (a, b) in h.iter().zip(&h64) {
            assert_eq!(a.val(), *b);
        }
    }
}
