//! Tape-based reverse-mode automatic differentiation over real scalars.
//!
//! A [`Tape`] records a Wengert list: one node per elementary operation,
//! holding the node value, the indices of its (at most two) parents, and the
//! local partial derivative with respect to each parent, evaluated at forward
//! time. [`Var::backward`] then sweeps the list once in reverse insertion
//! order, accumulating adjoints.
//!
//! Node inputs always reference strictly earlier nodes, so the list is
//! acyclic by construction, and every node is a real scalar, so any node is
//! a valid backward root. Complex quantities are handled one level up by
//! pairing two `Var`s (see [`crate::numerics::Complex`]).
//!
//! A tape is single-writer: clone handles freely within one recording, but do
//! not share one tape across concurrent recorders.
//!
//! ```
//! use papp::numerics::Tape;
//!
//! let tape = Tape::new();
//! let x = tape.var(3.0);
//! let y = x.clone() * x.clone(); // y = x^2
//! let grads = y.backward();
//! assert_eq!(grads.get(&x), 6.0);
//! ```

use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::rc::Rc;

use crate::numerics::real::Real;

/// Identifies the elementary operation that produced a node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpKind {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Scale,
    Shift,
    Recip,
    Sqrt,
    Ln,
    Exp,
    Relu,
    Softplus,
    Sin,
    Cos,
}

const NONE: u32 = u32::MAX;

#[derive(Clone, Copy)]
struct Node {
    op: OpKind,
    parents: [u32; 2],
    partials: [f64; 2],
    val: f64,
}

#[derive(Default)]
struct TapeCore {
    nodes: Vec<Node>,
}

/// Recording tape. Cheap to clone; clones share the same storage.
#[derive(Clone, Default)]
pub struct Tape {
    inner: Rc<RefCell<TapeCore>>,
}

/// A scalar value recorded on a [`Tape`].
#[derive(Clone)]
pub struct Var {
    tape: Tape,
    idx: u32,
}

/// Adjoints produced by one backward sweep.
pub struct Gradients {
    adjoint: Vec<f64>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of nodes recorded so far.
    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Creates an input node. Inputs are the only nodes without parents.
    pub fn var(&self, value: f64) -> Var {
        self.push(OpKind::Leaf, value, NONE, 0.0, NONE, 0.0)
    }

    fn push(&self, op: OpKind, val: f64, p0: u32, d0: f64, p1: u32, d1: f64) -> Var {
        let mut core = self.inner.borrow_mut();
        let idx = core.nodes.len();
        assert!(idx < NONE as usize, "tape overflow");
        core.nodes.push(Node {
            op,
            parents: [p0, p1],
            partials: [d0, d1],
            val,
        });
        Var {
            tape: self.clone(),
            idx: idx as u32,
        }
    }

    fn same_tape(&self, other: &Tape) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }
}

impl Var {
    /// The forward value of this node.
    pub fn val(&self) -> f64 {
        self.tape.inner.borrow().nodes[self.idx as usize].val
    }

    /// Node index in insertion order.
    pub fn index(&self) -> usize {
        self.idx as usize
    }

    pub fn op(&self) -> OpKind {
        self.tape.inner.borrow().nodes[self.idx as usize].op
    }

    fn unary(&self, op: OpKind, val: f64, d: f64) -> Var {
        self.tape.push(op, val, self.idx, d, NONE, 0.0)
    }

    fn binary(&self, other: &Var, op: OpKind, val: f64, dl: f64, dr: f64) -> Var {
        assert!(
            self.tape.same_tape(&other.tape),
            "operands recorded on different tapes"
        );
        self.tape.push(op, val, self.idx, dl, other.idx, dr)
    }

    /// Reverse sweep from this node. Visits each node at most once, in
    /// reverse insertion order, and returns the adjoint of every node.
    pub fn backward(&self) -> Gradients {
        let core = self.tape.inner.borrow();
        let n = self.idx as usize + 1;
        let mut adjoint = vec![0.0; core.nodes.len()];
        adjoint[self.idx as usize] = 1.0;
        for i in (0..n).rev() {
            let a = adjoint[i];
            if a == 0.0 {
                continue;
            }
            let node = &core.nodes[i];
            for s in 0..2 {
                let p = node.parents[s];
                if p != NONE {
                    adjoint[p as usize] += node.partials[s] * a;
                }
            }
        }
        Gradients { adjoint }
    }
}

impl Gradients {
    /// Adjoint of `v` (zero if `v` did not influence the backward root).
    pub fn get(&self, v: &Var) -> f64 {
        self.adjoint.get(v.index()).copied().unwrap_or(0.0)
    }

    /// Adjoints of the first `n` nodes, in insertion order. Callers that
    /// lift parameters onto a fresh tape first can slice their gradient
    /// directly.
    pub fn leading(&self, n: usize) -> &[f64] {
        &self.adjoint[..n]
    }
}

impl Add for Var {
    type Output = Var;
    fn add(self, rhs: Var) -> Var {
        let v = self.val() + rhs.val();
        self.binary(&rhs, OpKind::Add, v, 1.0, 1.0)
    }
}

impl Sub for Var {
    type Output = Var;
    fn sub(self, rhs: Var) -> Var {
        let v = self.val() - rhs.val();
        self.binary(&rhs, OpKind::Sub, v, 1.0, -1.0)
    }
}

impl Mul for Var {
    type Output = Var;
    fn mul(self, rhs: Var) -> Var {
        let (a, b) = (self.val(), rhs.val());
        self.binary(&rhs, OpKind::Mul, a * b, b, a)
    }
}

impl Div for Var {
    type Output = Var;
    fn div(self, rhs: Var) -> Var {
        let (a, b) = (self.val(), rhs.val());
        self.binary(&rhs, OpKind::Div, a / b, 1.0 / b, -a / (b * b))
    }
}

impl Neg for Var {
    type Output = Var;
    fn neg(self) -> Var {
        let v = -self.val();
        self.unary(OpKind::Neg, v, -1.0)
    }
}

impl Real for Var {
    fn value(&self) -> f64 {
        self.val()
    }

    fn scale(&self, c: f64) -> Self {
        self.unary(OpKind::Scale, self.val() * c, c)
    }

    fn shift(&self, c: f64) -> Self {
        self.unary(OpKind::Shift, self.val() + c, 1.0)
    }

    fn recip(&self) -> Self {
        let x = self.val();
        self.unary(OpKind::Recip, 1.0 / x, -1.0 / (x * x))
    }

    fn sqrt(&self) -> Self {
        let y = self.val().sqrt();
        self.unary(OpKind::Sqrt, y, 0.5 / y)
    }

    fn ln(&self) -> Self {
        let x = self.val();
        self.unary(OpKind::Ln, x.ln(), 1.0 / x)
    }

    fn exp(&self) -> Self {
        let y = self.val().exp();
        self.unary(OpKind::Exp, y, y)
    }

    fn relu(&self) -> Self {
        let x = self.val();
        let (v, d) = if x > 0.0 { (x, 1.0) } else { (0.0, 0.0) };
        self.unary(OpKind::Relu, v, d)
    }

    fn softplus(&self) -> Self {
        let x = self.val();
        let v = if x > 0.0 {
            x + (-x).exp().ln_1p()
        } else {
            x.exp().ln_1p()
        };
        let d = 1.0 / (1.0 + (-x).exp());
        self.unary(OpKind::Softplus, v, d)
    }

    fn sin(&self) -> Self {
        let x = self.val();
        self.unary(OpKind::Sin, x.sin(), x.cos())
    }

    fn cos(&self) -> Self {
        let x = self.val();
        self.unary(OpKind::Cos, x.cos(), -x.sin())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_gradient() {
        let tape = Tape::new();
        let x = tape.var(3.0);
        let y = x.clone() * x.clone();
        let g = y.backward();
        assert_eq!(y.val(), 9.0);
        assert_eq!(g.get(&x), 6.0);
    }

    #[test]
    fn product_gradient() {
        let tape = Tape::new();
        let x = tape.var(2.0);
        let y = tape.var(5.0);
        let z = x.clone() * y.clone();
        let g = z.backward();
        assert_eq!(g.get(&x), 5.0);
        assert_eq!(g.get(&y), 2.0);
    }

    #[test]
    fn division_and_shift() {
        let tape = Tape::new();
        let x = tape.var(4.0);
        let y = tape.var(2.0);
        // f = (x / y + 1)^2 at (4, 2): f = 9, df/dx = 2*(x/y+1)/y = 3,
        // df/dy = 2*(x/y+1) * (-x/y^2) = -6
        let r = (x.clone() / y.clone()).shift(1.0);
        let f = r.clone() * r;
        let g = f.backward();
        assert!((f.val() - 9.0).abs() < 1e-12);
        assert!((g.get(&x) - 3.0).abs() < 1e-12);
        assert!((g.get(&y) + 6.0).abs() < 1e-12);
    }

    #[test]
    fn softplus_matches_reference() {
        let tape = Tape::new();
        for &x in &[-40.0, -3.0, 0.0, 2.5, 50.0] {
            let v = tape.var(x);
            let s = v.softplus();
            let expect = if x > 30.0 { x } else { (1.0 + x.exp()).ln() };
            assert!((s.val() - expect).abs() < 1e-12, "x = {x}");
        }
    }

    #[test]
    fn backward_ignores_unrelated_later_nodes() {
        let tape = Tape::new();
        let x = tape.var(1.5);
        let y = x.clone() * x.clone();
        let _later = tape.var(99.0).exp();
        let g = y.backward();
        assert_eq!(g.get(&x), 3.0);
    }
}
