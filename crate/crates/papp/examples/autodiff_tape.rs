//! The reverse-mode tape: recording a computation, sweeping gradients, and
//! checking them against central finite differences.
//!
//! ```bash
//! cargo run --example autodiff_tape
//! ```

use papp::numerics::{solve_hermitian, CMatrix, Complex, Real, Tape, Var};

fn f(tape: &Tape, x: f64, y: f64) -> (Var, Var, Var) {
    let vx = tape.var(x);
    let vy = tape.var(y);
    // f(x, y) = softplus(x * y) + sqrt(x^2 + 2) * sin(y)
    let out = (vx.clone() * vy.clone()).softplus()
        + (vx.clone() * vx.clone()).shift(2.0).sqrt() * vy.clone().sin();
    (vx, vy, out)
}

fn main() {
    let (x, y) = (0.8, -1.3);
    let tape = Tape::new();
    let (vx, vy, out) = f(&tape, x, y);
    let grads = out.backward();
    println!(
        "f({x}, {y}) = {:.9}, tape holds {} nodes",
        out.val(),
        tape.len()
    );

    let h = 1e-5;
    for (name, var, lo, hi) in [
        (
            "df/dx",
            &vx,
            f(&Tape::new(), x - h, y).2.val(),
            f(&Tape::new(), x + h, y).2.val(),
        ),
        (
            "df/dy",
            &vy,
            f(&Tape::new(), x, y - h).2.val(),
            f(&Tape::new(), x, y + h).2.val(),
        ),
    ] {
        let fd = (hi - lo) / (2.0 * h);
        let ad = grads.get(var);
        println!("{name}: reverse-mode {ad:.9}, central difference {fd:.9}");
    }

    // Gradients flow through a complex ridge solve as well: the solve is
    // recorded as its elementary operations.
    let tape = Tape::new();
    let r = tape.var(0.5);
    let a = CMatrix::from_fn(2, 2, |i, j| {
        if i == j {
            Complex::new(tape.var(2.0), tape.var(0.0))
        } else {
            Complex::new(tape.var(0.3), tape.var(if i < j { 0.1 } else { -0.1 }))
        }
    });
    let b = CMatrix::from_fn(2, 1, |i, _| {
        Complex::new(tape.var(1.0 + i as f64), tape.var(0.0))
    });
    let x_sol = solve_hermitian(&a, &r, &b).expect("well conditioned");
    let loss = x_sol.frobenius_sq();
    let g = loss.backward();
    println!(
        "\nd ||(A + rI)^-1 b||^2 / dr = {:.9} (solve recorded on the tape)",
        g.get(&r)
    );
}
