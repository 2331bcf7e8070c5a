//! The scalar abstraction shared by plain evaluation and tape recording.
//!
//! Every solver and forward pass in this crate is written once, generically
//! over [`Real`]. Instantiated with `f64` it runs as ordinary arithmetic;
//! instantiated with [`crate::numerics::Var`] the same code records itself
//! on a tape and becomes differentiable. Losses are real scalars of real
//! parameters throughout, so no complex-derivative calculus is needed.

use std::ops::{Add, Div, Mul, Neg, Sub};

pub trait Real:
    Clone
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Sized
{
    /// Current numeric value (the primal).
    fn value(&self) -> f64;
    /// Multiply by a plain constant.
    fn scale(&self, c: f64) -> Self;
    /// Add a plain constant.
    fn shift(&self, c: f64) -> Self;
    fn recip(&self) -> Self;
    fn sqrt(&self) -> Self;
    fn ln(&self) -> Self;
    fn exp(&self) -> Self;
    fn relu(&self) -> Self;
    fn softplus(&self) -> Self;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;

    /// A zero with the same provenance as `self` (same tape, for `Var`).
    fn zero_like(&self) -> Self {
        self.scale(0.0)
    }

    fn log2(&self) -> Self {
        self.ln().scale(std::f64::consts::LOG2_E)
    }
}

impl Real for f64 {
    fn value(&self) -> f64 {
        *self
    }

    fn scale(&self, c: f64) -> Self {
        self * c
    }

    fn shift(&self, c: f64) -> Self {
        self + c
    }

    fn recip(&self) -> Self {
        1.0 / self
    }

    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }

    fn ln(&self) -> Self {
        f64::ln(*self)
    }

    fn exp(&self) -> Self {
        f64::exp(*self)
    }

    fn relu(&self) -> Self {
        if *self > 0.0 {
            *self
        } else {
            0.0
        }
    }

    fn softplus(&self) -> Self {
        if *self > 0.0 {
            self + (-self).exp().ln_1p()
        } else {
            self.exp().ln_1p()
        }
    }

    fn sin(&self) -> Self {
        f64::sin(*self)
    }

    fn cos(&self) -> Self {
        f64::cos(*self)
    }
}
