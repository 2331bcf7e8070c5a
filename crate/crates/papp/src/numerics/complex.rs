//! Complex scalars as (real, imaginary) pairs over a generic [`Real`].

use crate::numerics::real::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct Complex<T = f64> {
    pub re: T,
    pub im: T,
}

impl<T: Real> Complex<T> {
    pub fn new(re: T, im: T) -> Self {
        Self { re, im }
    }

    pub fn zero_like(&self) -> Self {
        Self::new(self.re.zero_like(), self.im.zero_like())
    }

    pub fn add(&self, o: &Self) -> Self {
        Self::new(
            self.re.clone() + o.re.clone(),
            self.im.clone() + o.im.clone(),
        )
    }

    pub fn sub(&self, o: &Self) -> Self {
        Self::new(
            self.re.clone() - o.re.clone(),
            self.im.clone() - o.im.clone(),
        )
    }

    pub fn mul(&self, o: &Self) -> Self {
        Self::new(
            self.re.clone() * o.re.clone() - self.im.clone() * o.im.clone(),
            self.re.clone() * o.im.clone() + self.im.clone() * o.re.clone(),
        )
    }

    /// `self * conj(o)`.
    pub fn mul_conj(&self, o: &Self) -> Self {
        Self::new(
            self.re.clone() * o.re.clone() + self.im.clone() * o.im.clone(),
            self.im.clone() * o.re.clone() - self.re.clone() * o.im.clone(),
        )
    }

    pub fn conj(&self) -> Self {
        Self::new(self.re.clone(), -self.im.clone())
    }

    pub fn neg(&self) -> Self {
        Self::new(-self.re.clone(), -self.im.clone())
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::new(self.re.scale(c), self.im.scale(c))
    }

    pub fn mul_real(&self, r: &T) -> Self {
        Self::new(self.re.clone() * r.clone(), self.im.clone() * r.clone())
    }

    pub fn div_real(&self, r: &T) -> Self {
        Self::new(self.re.clone() / r.clone(), self.im.clone() / r.clone())
    }

    /// |z|^2 as a real scalar.
    pub fn abs_sq(&self) -> T {
        self.re.clone() * self.re.clone() + self.im.clone() * self.im.clone()
    }

    /// Complex division via the textbook formula; fine for the well-scaled
    /// systems this crate produces.
    pub fn div(&self, o: &Self) -> Self {
        let d = o.abs_sq();
        self.mul_conj(o).div_real(&d)
    }

    /// Forward value as an `(re, im)` pair of plain floats.
    pub fn value(&self) -> (f64, f64) {
        (self.re.value(), self.im.value())
    }

    /// Modulus of the forward value.
    pub fn abs_value(&self) -> f64 {
        let (re, im) = self.value();
        re.hypot(im)
    }
}

impl Complex<f64> {
    pub const ZERO: Complex<f64> = Complex { re: 0.0, im: 0.0 };
    pub const ONE: Complex<f64> = Complex { re: 1.0, im: 0.0 };
    pub const I: Complex<f64> = Complex { re: 0.0, im: 1.0 };

    pub fn from_polar(r: f64, theta: f64) -> Self {
        Self::new(r * theta.cos(), r * theta.sin())
    }

    pub fn arg(&self) -> f64 {
        self.im.atan2(self.re)
    }

    pub fn abs(&self) -> f64 {
        self.re.hypot(self.im)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn i_squared_is_minus_one() {
        let z = Complex::I.mul(&Complex::I);
        assert_eq!(z, Complex::new(-1.0, 0.0));
    }

    #[test]
    fn division_roundtrip() {
        let a = Complex::new(3.0, -2.0);
        let b = Complex::new(-1.5, 0.25);
        let q = a.div(&b).mul(&b);
        assert!((q.re - a.re).abs() < 1e-12 && (q.im - a.im).abs() < 1e-12);
    }

    #[test]
    fn mul_conj_matches_expanded_form() {
        let a = Complex::new(1.0, 2.0);
        let b = Complex::new(-3.0, 0.5);
        assert_eq!(a.mul_conj(&b), a.mul(&b.conj()));
    }
}
