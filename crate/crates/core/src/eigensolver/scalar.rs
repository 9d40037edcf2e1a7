use std::ops::{Mul, Neg, Sub};

use faer::c64;
use rand::Rng;

use crate::linalg;
use crate::tb::Amplitude;

/// Real or complex field the iterative solver works over.
pub trait Scalar:
    Amplitude + faer::traits::ComplexField + Mul<Output = Self> + Sub<Output = Self> + Neg<Output = Self> + PartialEq
{
    fn conjugate(self) -> Self;
    fn real(self) -> f64;
    fn from_real(x: f64) -> Self;
    fn abs2(self) -> f64;
    fn random<R: Rng>(rng: &mut R) -> Self;
    /// Dense Hermitian eigendecomposition, column-major.
    fn eigh(n: usize, a: &[Self]) -> (Vec<f64>, Vec<Self>);
    fn to_c64(self) -> c64;
    /// Real instances keep only the real part.
    fn from_c64(c: c64) -> Self;
}

impl Scalar for f64 {
    fn conjugate(self) -> Self {
        self
    }
    fn real(self) -> f64 {
        self
    }
    fn from_real(x: f64) -> Self {
        x
    }
    fn abs2(self) -> f64 {
        self * self
    }
    fn random<R: Rng>(rng: &mut R) -> Self {
        rng.random::<f64>() - 0.5
    }
    fn eigh(n: usize, a: &[Self]) -> (Vec<f64>, Vec<Self>) {
        linalg::symmetric_eigh(n, a)
    }
    fn to_c64(self) -> c64 {
        c64::new(self, 0.0)
    }
    fn from_c64(c: c64) -> Self {
        c.re
    }
}

impl Scalar for c64 {
    fn conjugate(self) -> Self {
        self.conj()
    }
    fn real(self) -> f64 {
        self.re
    }
    fn from_real(x: f64) -> Self {
        c64::new(x, 0.0)
    }
    fn abs2(self) -> f64 {
        self.norm_sqr()
    }
    fn random<R: Rng>(rng: &mut R) -> Self {
        c64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
    }
    fn eigh(n: usize, a: &[Self]) -> (Vec<f64>, Vec<Self>) {
        linalg::hermitian_eigh(n, a)
    }
    fn to_c64(self) -> c64 {
        self
    }
    fn from_c64(c: c64) -> Self {
        c
    }
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = T::default();
    for (x, y) in a.iter().zip(b) {
        acc += x.conjugate() * *y;
    }
    acc
}

pub fn norm<T: Scalar>(a: &[T]) -> f64 {
    a.iter().map(|x| x.abs2()).sum::<f64>().sqrt()
}

/// y ← y − α x
pub fn axpy_neg<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi -= alpha * *xi;
    }
}

pub fn scale<T: Scalar>(s: f64, x: &mut [T]) {
    for v in x.iter_mut() {
        *v = *v * s;
    }
}
