//! Complex dense linear algebra and reverse-mode differentiation.

mod cmat;
mod complex;
mod real;
mod tape;

pub use cmat::{solve_hermitian, CMatrix, HERMITIAN_TOL, PIVOT_TOL};
pub use complex::Complex;
pub use real::Real;
pub use tape::{Gradients, OpKind, Tape, Var};
