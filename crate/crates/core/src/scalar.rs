//! Scalar abstraction shared by every numerical module.
//!
//! All math is written against [`Real`], which is implemented for `f32` and
//! `f64`. Complex quantities are `num_complex::Complex<T>` and dense complex
//! matrices are nalgebra `DMatrix<Complex<T>>`.

use std::fmt;

use nalgebra::{DMatrix, DVector, RealField};
use num_complex::Complex;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real floating point scalar: f32 or f64.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Default + fmt::Debug + fmt::Display + Send + Sync + 'static
{
    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    /// Converts a count into this scalar type.
    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

pub type C<T> = Complex<T>;
pub type CMatrix<T> = DMatrix<Complex<T>>;
pub type CVector<T> = DVector<Complex<T>>;

#[inline]
pub fn c<T: Real>(re: T, im: T) -> C<T> {
    Complex::new(re, im)
}

#[inline]
pub fn re<T: Real>(x: T) -> C<T> {
    Complex::new(x, T::zero())
}

/// Imaginary unit times `x`.
#[inline]
pub fn jm<T: Real>(x: T) -> C<T> {
    Complex::new(T::zero(), x)
}

/// `e^{j theta}`.
#[inline]
pub fn cis<T: Real>(theta: T) -> C<T> {
    Complex::new(theta.cos(), theta.sin())
}

#[inline]
pub fn abs<T: Real>(z: C<T>) -> T {
    z.re.hypot(z.im)
}

#[inline]
pub fn arg<T: Real>(z: C<T>) -> T {
    z.im.atan2(z.re)
}

#[inline]
pub fn abs2<T: Real>(z: C<T>) -> T {
    z.re * z.re + z.im * z.im
}

/// Frobenius norm of a complex matrix.
pub fn fro<T: Real>(m: &CMatrix<T>) -> T {
    m.iter().fold(T::zero(), |acc, z| acc + abs2(*z)).sqrt()
}

pub fn identity<T: Real>(n: usize) -> CMatrix<T> {
    CMatrix::identity(n, n)
}

pub fn zeros<T: Real>(rows: usize, cols: usize) -> CMatrix<T> {
    CMatrix::zeros(rows, cols)
}

/// Entry-wise real part, returned as a complex matrix with zero imaginary part.
pub fn real_part<T: Real>(m: &CMatrix<T>) -> CMatrix<T> {
    m.map(|z| re(z.re))
}

/// Entry-wise imaginary part as a real matrix.
pub fn imag_part<T: Real>(m: &CMatrix<T>) -> DMatrix<T> {
    m.map(|z| z.im)
}

/// Promotes a real matrix to complex.
pub fn complexify<T: Real>(m: &DMatrix<T>) -> CMatrix<T> {
    m.map(re)
}

/// Residual comparison used throughout: relative to `scale` unless the scale
/// itself is below `1e-12`, where an absolute `1e-12` applies.
pub fn within<T: Real>(residual: T, scale: T, tol: T) -> bool {
    let floor = T::lit(1e-12);
    if scale < floor {
        residual <= floor
    } else {
        residual <= tol * scale
    }
}

/// Neumaier compensated summation; order-dependent only at the level of the
/// final rounding.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Self::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::new();
        s.add(1e16);
        for _ in 0..10 {
            s.add(1.0);
        }
        s.add(-1e16);
        assert_eq!(s.value(), 10.0);
    }

    #[test]
    fn cis_is_unit_modulus() {
        for k in 0..16 {
            let z: C<f64> = cis(k as f64 * 0.4);
            assert!((abs(z) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn within_switches_to_absolute_near_zero() {
        assert!(within(5e-13, 0.0, 1e-10));
        assert!(!within(5e-12, 0.0, 1e-10));
        assert!(within(1e-9, 100.0, 1e-10));
    }
}
