//! Scalar abstraction so the same numeric code runs on plain `f64` (fast
//! simulation path) and on tape variables (training path, reverse-mode AD).
//!
//! Every density evaluation, stencil residual, regularizer and small linear
//! solve in this crate is written against this trait. Instantiated with
//! [`crate::tape::Var`], the whole computation is recorded and a single
//! backward sweep yields exact parameter gradients — including gradients of
//! quantities that are themselves closed-form input-derivatives of a network.

use std::ops::{Add, Div, Mul, Neg, Sub};

pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// Current numeric value (used for branching: ReLU gates, pivot checks).
    fn val(self) -> f64;

    /// A constant in the same computational context as `self`.
    /// For `f64` this is just the constant; for tape variables it is a leaf
    /// with zero adjoint flow.
    fn lift(self, c: f64) -> Self;

    fn scale(self, c: f64) -> Self;
    fn add_const(self, c: f64) -> Self;

    fn recip(self) -> Self;
    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn tanh(self) -> Self;
    /// Logistic function 1/(1+e^{-x}) (derivative of softplus).
    fn sigmoid(self) -> Self;
    /// ln(1 + e^x), evaluated in the overflow-safe form.
    fn softplus(self) -> Self;
    fn powi(self, n: i32) -> Self;

    fn relu(self) -> Self {
        if self.val() > 0.0 {
            self
        } else {
            self.lift(0.0)
        }
    }

    fn sq(self) -> Self {
        self * self
    }
}

impl Scalar for f64 {
    #[inline]
    fn val(self) -> f64 {
        self
    }
    #[inline]
    fn lift(self, c: f64) -> f64 {
        c
    }
    #[inline]
    fn scale(self, c: f64) -> f64 {
        self * c
    }
    #[inline]
    fn add_const(self, c: f64) -> f64 {
        self + c
    }
    #[inline]
    fn recip(self) -> f64 {
        1.0 / self
    }
    #[inline]
    fn sqrt(self) -> f64 {
        f64::sqrt(self)
    }
    #[inline]
    fn exp(self) -> f64 {
        f64::exp(self)
    }
    #[inline]
    fn ln(self) -> f64 {
        f64::ln(self)
    }
    #[inline]
    fn sin(self) -> f64 {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> f64 {
        f64::cos(self)
    }
    #[inline]
    fn tanh(self) -> f64 {
        f64::tanh(self)
    }
    #[inline]
    fn sigmoid(self) -> f64 {
        if self >= 0.0 {
            1.0 / (1.0 + (-self).exp())
        } else {
            let e = self.exp();
            e / (1.0 + e)
        }
    }
    #[inline]
    fn softplus(self) -> f64 {
        // max(x,0) + ln(1 + e^{-|x|}) avoids overflow for large |x|.
        self.max(0.0) + (-self.abs()).exp().ln_1p()
    }
    #[inline]
    fn powi(self, n: i32) -> f64 {
        f64::powi(self, n)
    }
}
