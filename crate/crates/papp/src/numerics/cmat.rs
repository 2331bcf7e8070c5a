//! Dense complex matrices and the Hermitian ridge solve.
//!
//! `CMatrix<T>` stores row-major `Complex<T>` entries. With `T = f64` it is
//! the plain workhorse behind the classical solvers; with `T = Var` the same
//! operations record onto a tape, which is how gradients flow through the
//! single weighted-MMSE step inside the teacher head.

use crate::error::{Error, Result};
use crate::numerics::complex::Complex;
use crate::numerics::real::Real;

/// Absolute pivot magnitude below which a factorization is declared singular.
pub const PIVOT_TOL: f64 = 1e-14;

/// Hermitian-deviation tolerance accepted by [`solve_hermitian`], relative to
/// the largest entry magnitude.
pub const HERMITIAN_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix<T = f64> {
    rows: usize,
    cols: usize,
    data: Vec<Complex<T>>,
}

impl<T: Real> CMatrix<T> {
    pub fn from_data(rows: usize, cols: usize, data: Vec<Complex<T>>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimMismatch(format!(
                "{}x{} matrix needs {} entries, got {}",
                rows,
                cols,
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize) -> Complex<T>,
    ) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> &Complex<T> {
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Complex<T>) {
        self.data[i * self.cols + j] = v;
    }

    pub fn entries(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn map(&self, mut f: impl FnMut(&Complex<T>) -> Complex<T>) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(&mut f).collect(),
        }
    }

    /// Standard complex matrix product.
    pub fn mul(&self, other: &CMatrix<T>) -> Result<CMatrix<T>> {
        if self.cols != other.rows {
            return Err(Error::DimMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let out = CMatrix::from_fn(self.rows, other.cols, |i, j| {
            let mut acc = self.get(i, 0).mul(other.get(0, j));
            for k in 1..self.cols {
                acc = acc.add(&self.get(i, k).mul(other.get(k, j)));
            }
            acc
        });
        Ok(out)
    }

    /// Conjugate transpose.
    pub fn hermitian(&self) -> CMatrix<T> {
        CMatrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i).conj())
    }

    pub fn add(&self, other: &CMatrix<T>) -> Result<CMatrix<T>> {
        self.check_same_shape(other)?;
        Ok(CMatrix::from_fn(self.rows, self.cols, |i, j| {
            self.get(i, j).add(other.get(i, j))
        }))
    }

    pub fn sub(&self, other: &CMatrix<T>) -> Result<CMatrix<T>> {
        self.check_same_shape(other)?;
        Ok(CMatrix::from_fn(self.rows, self.cols, |i, j| {
            self.get(i, j).sub(other.get(i, j))
        }))
    }

    pub fn scale(&self, c: f64) -> CMatrix<T> {
        self.map(|z| z.scale(c))
    }

    pub fn scale_real(&self, r: &T) -> CMatrix<T> {
        self.map(|z| z.mul_real(r))
    }

    /// Sum of |entry|^2, i.e. `Tr(M M^H)` (squared Frobenius norm).
    pub fn frobenius_sq(&self) -> T {
        let mut acc = self.data[0].abs_sq();
        for z in &self.data[1..] {
            acc = acc + z.abs_sq();
        }
        acc
    }

    fn check_same_shape(&self, other: &CMatrix<T>) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimMismatch(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }

    /// Forward values as a plain matrix.
    pub fn values(&self) -> CMatrix<f64> {
        CMatrix::from_fn(self.rows, self.cols, |i, j| {
            let (re, im) = self.get(i, j).value();
            Complex::new(re, im)
        })
    }

    /// Largest entry modulus (of the forward values).
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.abs_value()).fold(0.0, f64::max)
    }
}

impl CMatrix<f64> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex::ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(
            n,
            n,
            |i, j| {
                if i == j {
                    Complex::ONE
                } else {
                    Complex::ZERO
                }
            },
        )
    }

    /// Squared Frobenius norm of the difference.
    pub fn distance_sq(&self, other: &CMatrix<f64>) -> f64 {
        assert_eq!(self.rows, other.rows);
        assert_eq!(self.cols, other.cols);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.sub(b).abs_sq())
            .sum()
    }
}

/// Solves `(a + ridge I) X = b` for Hermitian `a` by column-pivoted LU on the
/// ridge-augmented system.
///
/// `a` must be square and Hermitian within [`HERMITIAN_TOL`] (relative to its
/// largest entry), and `ridge` must be nonnegative. Any pivot with modulus
/// below [`PIVOT_TOL`] raises [`Error::Singular`].
pub fn solve_hermitian<T: Real>(a: &CMatrix<T>, ridge: &T, b: &CMatrix<T>) -> Result<CMatrix<T>> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::DimMismatch(format!(
            "coefficient matrix is {}x{}, expected square",
            a.rows(),
            a.cols()
        )));
    }
    if b.rows() != n {
        return Err(Error::DimMismatch(format!(
            "rhs has {} rows, expected {}",
            b.rows(),
            n
        )));
    }
    if ridge.value() < 0.0 {
        return Err(Error::InvalidArg(format!(
            "ridge must be nonnegative, got {}",
            ridge.value()
        )));
    }
    let scale = a.max_abs().max(1.0);
    let mut dev = 0.0f64;
    for i in 0..n {
        for j in 0..=i {
            let d = a.get(i, j).sub(&a.get(j, i).conj()).abs_value();
            dev = dev.max(d);
        }
    }
    if dev > HERMITIAN_TOL * scale {
        return Err(Error::NotHermitian { deviation: dev });
    }

    // m = a + ridge * I, then in-place LU with row interchanges; the pivot
    // search scans the current column for the largest modulus.
    let mut m: Vec<Complex<T>> = a.entries().to_vec();
    for i in 0..n {
        let d = &mut m[i * n + i];
        *d = Complex::new(d.re.clone() + ridge.clone(), d.im.clone());
    }
    let rhs_cols = b.cols();
    let mut x: Vec<Complex<T>> = b.entries().to_vec();

    for k in 0..n {
        let mut pivot_row = k;
        let mut pivot_mag = m[k * n + k].abs_value();
        for r in (k + 1)..n {
            let mag = m[r * n + k].abs_value();
            if mag > pivot_mag {
                pivot_mag = mag;
                pivot_row = r;
            }
        }
        if pivot_mag < PIVOT_TOL {
            return Err(Error::Singular { pivot: pivot_mag });
        }
        if pivot_row != k {
            for j in 0..n {
                m.swap(k * n + j, pivot_row * n + j);
            }
            for j in 0..rhs_cols {
                x.swap(k * rhs_cols + j, pivot_row * rhs_cols + j);
            }
        }
        let pivot = m[k * n + k].clone();
        for r in (k + 1)..n {
            let factor = m[r * n + k].div(&pivot);
            for j in (k + 1)..n {
                let upd = m[r * n + j].sub(&factor.mul(&m[k * n + j]));
                m[r * n + j] = upd;
            }
            for j in 0..rhs_cols {
                let upd = x[r * rhs_cols + j].sub(&factor.mul(&x[k * rhs_cols + j]));
                x[r * rhs_cols + j] = upd;
            }
        }
    }

    // Back substitution.
    for k in (0..n).rev() {
        let pivot = m[k * n + k].clone();
        for j in 0..rhs_cols {
            let mut acc = x[k * rhs_cols + j].clone();
            for c in (k + 1)..n {
                acc = acc.sub(&m[k * n + c].mul(&x[c * rhs_cols + j]));
            }
            x[k * rhs_cols + j] = acc.div(&pivot);
        }
    }

    CMatrix::from_data(n, rhs_cols, x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn identity_times_matrix_is_identity_map() {
        let x = CMatrix::from_fn(2, 3, |i, j| Complex::new(i as f64 + 0.5, j as f64 - 1.0));
        let prod = CMatrix::identity(2).mul(&x).unwrap();
        assert_eq!(prod, x);
    }

    #[test]
    fn i_times_i_entry() {
        let a = CMatrix::from_data(1, 1, vec![Complex::I]).unwrap();
        let p = a.mul(&a).unwrap();
        approx(p.get(0, 0).re, -1.0, 0.0);
        approx(p.get(0, 0).im, 0.0, 0.0);
    }

    #[test]
    fn mul_dimension_mismatch() {
        let a = CMatrix::zeros(2, 3);
        let b = CMatrix::zeros(2, 3);
        assert!(matches!(a.mul(&b), Err(Error::DimMismatch(_))));
    }

    #[test]
    fn solve_identity_returns_rhs() {
        let a = CMatrix::identity(3);
        let b = CMatrix::from_fn(3, 2, |i, j| Complex::new(i as f64, -(j as f64)));
        let x = solve_hermitian(&a, &0.0, &b).unwrap();
        assert!(x.distance_sq(&b) < 1e-28);
    }

    #[test]
    fn solve_pure_ridge_scales_rhs() {
        let a = CMatrix::zeros(4, 4);
        let b = CMatrix::identity(4);
        let x = solve_hermitian(&a, &2.0, &b).unwrap();
        assert!(x.distance_sq(&CMatrix::identity(4).scale(0.5)) < 1e-28);
    }

    #[test]
    fn solve_singular_reports_pivot() {
        let a = CMatrix::zeros(3, 3);
        let b = CMatrix::identity(3);
        match solve_hermitian(&a, &0.0, &b) {
            Err(Error::Singular { pivot }) => assert!(pivot < PIVOT_TOL),
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn solve_rejects_non_hermitian() {
        let mut a = CMatrix::identity(2);
        a.set(0, 1, Complex::new(1.0, 0.0));
        a.set(1, 0, Complex::new(0.5, 0.0));
        assert!(matches!(
            solve_hermitian(&a, &0.0, &CMatrix::identity(2)),
            Err(Error::NotHermitian { .. })
        ));
    }
}
