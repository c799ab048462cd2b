//! Forward-mode dual numbers with a single tangent.
//!
//! A Jacobian is assembled from one pass per seeded direction, which also
//! gives Jacobian-vector products directly for the variational equations.

use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::scalar::Real;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Dual<T> {
    pub re: T,
    pub eps: T,
}

impl<T: Real> Dual<T> {
    #[inline]
    pub fn new(re: T, eps: T) -> Self {
        Dual { re, eps }
    }

    #[inline]
    pub fn constant(re: T) -> Self {
        Dual { re, eps: T::zero() }
    }

    #[inline]
    pub fn variable(re: T) -> Self {
        Dual { re, eps: T::one() }
    }

    #[inline]
    pub fn recip(self) -> Self {
        let inv = self.re.recip();
        Dual { re: inv, eps: -self.eps * inv * inv }
    }

    #[inline]
    pub fn exp(self) -> Self {
        let e = self.re.exp();
        Dual { re: e, eps: self.eps * e }
    }

    #[inline]
    pub fn tanh(self) -> Self {
        let t = self.re.tanh();
        Dual { re: t, eps: self.eps * (T::one() - t * t) }
    }

    #[inline]
    pub fn powi(self, k: i32) -> Self {
        if k == 0 {
            return Dual::constant(T::one());
        }
        let d = T::lit(k as f64) * self.re.powi(k - 1);
        Dual { re: self.re.powi(k), eps: self.eps * d }
    }
}

impl<T: Real> Add for Dual<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Dual { re: self.re + o.re, eps: self.eps + o.eps }
    }
}

impl<T: Real> Sub for Dual<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Dual { re: self.re - o.re, eps: self.eps - o.eps }
    }
}

impl<T: Real> Mul for Dual<T> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Dual { re: self.re * o.re, eps: self.eps * o.re + self.re * o.eps }
    }
}

impl<T: Real> Div for Dual<T> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let q = self.re / o.re;
        Dual { re: q, eps: (self.eps - q * o.eps) / o.re }
    }
}

impl<T: Real> Neg for Dual<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Dual { re: -self.re, eps: -self.eps }
    }
}
