//! Property tests for the numeric core: gradient correctness of random
//! recorded computations against a finite-difference oracle, solver
//! residuals, and product algebra against an independent triple-loop
//! oracle.

use papp::numerics::{solve_hermitian, CMatrix, Complex, Real, Tape, Var};
use proptest::prelude::*;

/// An elementary operation applied while growing a random computation.
#[derive(Clone, Debug)]
enum GraphOp {
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Scale(usize, f64),
    Shift(usize, f64),
    Sqrt(usize),
    Exp(usize),
    Ln(usize),
    Softplus(usize),
    Sin(usize),
    Cos(usize),
}

fn graph_op() -> impl Strategy<Value = GraphOp> {
    let idx = 0..64usize;
    let c = -1.5..1.5f64;
    prop_oneof![
        (idx.clone(), idx.clone()).prop_map(|(a, b)| GraphOp::Add(a, b)),
        (idx.clone(), idx.clone()).prop_map(|(a, b)| GraphOp::Sub(a, b)),
        (idx.clone(), idx.clone()).prop_map(|(a, b)| GraphOp::Mul(a, b)),
        (idx.clone(), idx.clone()).prop_map(|(a, b)| GraphOp::Div(a, b)),
        (idx.clone(), c.clone()).prop_map(|(a, c)| GraphOp::Scale(a, c)),
        (idx.clone(), c).prop_map(|(a, c)| GraphOp::Shift(a, c)),
        idx.clone().prop_map(GraphOp::Sqrt),
        idx.clone().prop_map(GraphOp::Exp),
        idx.clone().prop_map(GraphOp::Ln),
        idx.clone().prop_map(GraphOp::Softplus),
        idx.clone().prop_map(GraphOp::Sin),
        idx.prop_map(GraphOp::Cos),
    ]
}

/// Evaluates the recorded program on explicit inputs. Domain-restricted
/// unary ops (sqrt, ln) and divisions are guarded so the function stays
/// smooth near the evaluation point.
fn eval_graph(inputs: &[f64], ops: &[GraphOp]) -> (Tape, Vec<Var>, Var) {
    let tape = Tape::new();
    let mut nodes: Vec<Var> = inputs.iter().map(|&x| tape.var(x)).collect();
    let input_nodes = nodes.clone();
    for op in ops {
        let pick = |i: &usize| nodes[i % nodes.len()].clone();
        let next = match op {
            GraphOp::Add(a, b) => pick(a) + pick(b),
            GraphOp::Sub(a, b) => pick(a) - pick(b),
            GraphOp::Mul(a, b) => pick(a) * pick(b),
            GraphOp::Div(a, b) => {
                let d = pick(b);
                // Keep the denominator away from zero.
                let safe = (d.clone() * d).shift(0.5);
                pick(a) / safe
            }
            GraphOp::Scale(a, c) => pick(a).scale(*c),
            GraphOp::Shift(a, c) => pick(a).shift(*c),
            GraphOp::Sqrt(a) => {
                let x = pick(a);
                (x.clone() * x).shift(0.3).sqrt()
            }
            GraphOp::Exp(a) => pick(a).scale(0.25).exp(),
            GraphOp::Ln(a) => {
                let x = pick(a);
                (x.clone() * x).shift(0.3).ln()
            }
            GraphOp::Softplus(a) => pick(a).softplus(),
            GraphOp::Sin(a) => pick(a).sin(),
            GraphOp::Cos(a) => pick(a).cos(),
        };
        nodes.push(next);
    }
    // Fold everything into one scalar output so every node contributes.
    let mut out = nodes.last().expect("nonempty").clone();
    for n in &nodes {
        out = out + n.clone().scale(0.01);
    }
    (tape, input_nodes, out)
}

fn graph_value(inputs: &[f64], ops: &[GraphOp]) -> f64 {
    let (_, _, out) = eval_graph(inputs, ops);
    out.val()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Reverse-mode gradients of random 5-50 node programs match central
    /// finite differences within 1e-4 relative wherever the gradient is
    /// meaningfully nonzero.
    #[test]
    fn tape_gradients_match_finite_differences(
        inputs in prop::collection::vec(-1.2..1.2f64, 2..5),
        ops in prop::collection::vec(graph_op(), 5..50),
    ) {
        let (_, input_nodes, out) = eval_graph(&inputs, &ops);
        prop_assume!(out.val().is_finite() && out.val().abs() < 1e6);
        let grads = out.backward();
        let step = 1e-5;
        for (i, node) in input_nodes.iter().enumerate() {
            let analytic = grads.get(node);
            prop_assume!(analytic.is_finite());
            let mut plus = inputs.clone();
            plus[i] += step;
            let mut minus = inputs.clone();
            minus[i] -= step;
            let fd = (graph_value(&plus, &ops) - graph_value(&minus, &ops)) / (2.0 * step);
            if analytic.abs() > 1e-6 && fd.is_finite() {
                let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs());
                prop_assert!(
                    rel < 1e-4,
                    "input {i}: analytic {analytic} vs fd {fd} (rel {rel})"
                );
            }
        }
    }

    /// The ridge solve recovers the right-hand side: for Hermitian PSD `a`
    /// built as `M M^H + d I`, `(a + r I) x = b` has relative residual
    /// below 1e-9.
    #[test]
    fn solve_recovers_rhs(
        seed_entries in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 16),
        diag in 0.01..2.0f64,
        ridge in 0.0..1.5f64,
        rhs_entries in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 8),
    ) {
        let m = CMatrix::from_data(
            4,
            4,
            seed_entries.iter().map(|&(re, im)| Complex::new(re, im)).collect(),
        ).unwrap();
        let mh = m.hermitian();
        let a_raw = m.mul(&mh).unwrap();
        // Symmetrize exactly and add the diagonal floor.
        let a = CMatrix::from_fn(4, 4, |i, j| {
            let z = a_raw.get(i, j).add(&a_raw.get(j, i).conj()).scale(0.5);
            if i == j { Complex::new(z.re + diag, 0.0) } else { z }
        });
        let b = CMatrix::from_data(
            4,
            2,
            rhs_entries.iter().map(|&(re, im)| Complex::new(re, im)).collect(),
        ).unwrap();
        let x = solve_hermitian(&a, &ridge, &b).unwrap();
        let a_ridged = CMatrix::from_fn(4, 4, |i, j| {
            let z = a.get(i, j).clone();
            if i == j { Complex::new(z.re + ridge, z.im) } else { z }
        });
        let residual = a_ridged.mul(&x).unwrap().sub(&b).unwrap().frobenius_sq().sqrt();
        let b_norm = b.frobenius_sq().sqrt().max(1e-12);
        prop_assert!(residual <= 1e-9 * b_norm.max(1.0), "residual {residual} vs ||b|| {b_norm}");
    }

    /// Matrix product matches an independent entry-wise triple-loop oracle.
    #[test]
    fn product_matches_triple_loop_oracle(
        a_entries in prop::collection::vec((-2.0..2.0f64, -2.0..2.0f64), 12),
        b_entries in prop::collection::vec((-2.0..2.0f64, -2.0..2.0f64), 20),
    ) {
        let a = CMatrix::from_data(3, 4, a_entries.iter().map(|&(re, im)| Complex::new(re, im)).collect()).unwrap();
        let b = CMatrix::from_data(4, 5, b_entries.iter().map(|&(re, im)| Complex::new(re, im)).collect()).unwrap();
        let prod = a.mul(&b).unwrap();
        for i in 0..3 {
            for j in 0..5 {
                let (mut re, mut im) = (0.0, 0.0);
                for k in 0..4 {
                    let (ar, ai) = (a.get(i, k).re, a.get(i, k).im);
                    let (br, bi) = (b.get(k, j).re, b.get(k, j).im);
                    re += ar * br - ai * bi;
                    im += ar * bi + ai * br;
                }
                let got = prod.get(i, j);
                let mag = re.hypot(im).max(1.0);
                prop_assert!((got.re - re).abs() <= 1e-12 * mag);
                prop_assert!((got.im - im).abs() <= 1e-12 * mag);
            }
        }
    }

    /// Product associativity on random 4x4 triples.
    #[test]
    fn product_is_associative(
        a_entries in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 16),
        b_entries in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 16),
        c_entries in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 16),
    ) {
        let to_mat = |v: &Vec<(f64, f64)>| {
            CMatrix::from_data(4, 4, v.iter().map(|&(re, im)| Complex::new(re, im)).collect()).unwrap()
        };
        let (a, b, c) = (to_mat(&a_entries), to_mat(&b_entries), to_mat(&c_entries));
        let left = a.mul(&b).unwrap().mul(&c).unwrap();
        let right = a.mul(&b.mul(&c).unwrap()).unwrap();
        let dist = left.distance_sq(&right).sqrt();
        prop_assert!(dist <= 1e-10, "associativity gap {dist}");
    }
}
