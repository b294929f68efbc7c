//! Scalars for the Gaussian algebra: real fields (`f64` and forward-mode
//! dual numbers) and complex numbers over them.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

/// Real scalar field closed under the elementary functions used by the
/// Gaussian calculus.
pub trait Real:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn from_f64(x: f64) -> Self;
    /// Primal value.
    fn value(&self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn atan2(self, x: Self) -> Self;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }
    fn one() -> Self {
        Self::from_f64(1.0)
    }
}

impl Real for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn value(&self) -> f64 {
        *self
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn atan2(self, x: Self) -> Self {
        f64::atan2(self, x)
    }
}

/// First-order dual number `v + Σ dᵢ εᵢ` with `N` independent infinitesimals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<const N: usize> {
    pub v: f64,
    pub d: [f64; N],
}

impl<const N: usize> Dual<N> {
    pub fn constant(v: f64) -> Self {
        Self { v, d: [0.0; N] }
    }

    /// `v + ε_i`.
    pub fn variable(v: f64, i: usize) -> Self {
        let mut d = [0.0; N];
        d[i] = 1.0;
        Self { v, d }
    }

    #[inline]
    fn chain(self, v: f64, dv: f64) -> Self {
        let mut d = self.d;
        for x in d.iter_mut() {
            *x *= dv;
        }
        Self { v, d }
    }
}

impl<const N: usize> Add for Dual<N> {
    type Output = Self;
    #[inline]
    fn add(mut self, o: Self) -> Self {
        self.v += o.v;
        for (a, b) in self.d.iter_mut().zip(o.d.iter()) {
            *a += b;
        }
        self
    }
}

impl<const N: usize> Sub for Dual<N> {
    type Output = Self;
    #[inline]
    fn sub(mut self, o: Self) -> Self {
        self.v -= o.v;
        for (a, b) in self.d.iter_mut().zip(o.d.iter()) {
            *a -= b;
        }
        self
    }
}

impl<const N: usize> Mul for Dual<N> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        let mut d = [0.0; N];
        for i in 0..N {
            d[i] = self.v * o.d[i] + o.v * self.d[i];
        }
        Self { v: self.v * o.v, d }
    }
}

impl<const N: usize> Div for Dual<N> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let inv = 1.0 / o.v;
        let v = self.v * inv;
        let mut d = [0.0; N];
        for i in 0..N {
            d[i] = (self.d[i] - v * o.d[i]) * inv;
        }
        Self { v, d }
    }
}

impl<const N: usize> Neg for Dual<N> {
    type Output = Self;
    #[inline]
    fn neg(mut self) -> Self {
        self.v = -self.v;
        for a in self.d.iter_mut() {
            *a = -*a;
        }
        self
    }
}

impl<const N: usize> AddAssign for Dual<N> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<const N: usize> SubAssign for Dual<N> {
    #[inline]
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl<const N: usize> MulAssign for Dual<N> {
    #[inline]
    fn mul_assign(&mut self, o: Self) {
        *self = *self * o;
    }
}

impl<const N: usize> Add<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn add(mut self, o: f64) -> Self {
        self.v += o;
        self
    }
}

impl<const N: usize> Sub<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn sub(mut self, o: f64) -> Self {
        self.v -= o;
        self
    }
}

impl<const N: usize> Mul<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn mul(mut self, o: f64) -> Self {
        self.v *= o;
        for a in self.d.iter_mut() {
            *a *= o;
        }
        self
    }
}

impl<const N: usize> Div<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn div(self, o: f64) -> Self {
        self * (1.0 / o)
    }
}

impl<const N: usize> Real for Dual<N> {
    fn from_f64(x: f64) -> Self {
        Self::constant(x)
    }
    fn value(&self) -> f64 {
        self.v
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e)
    }
    fn ln(self) -> Self {
        self.chain(self.v.ln(), 1.0 / self.v)
    }
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        self.chain(s, 0.5 / s)
    }
    fn sin(self) -> Self {
        self.chain(self.v.sin(), self.v.cos())
    }
    fn cos(self) -> Self {
        self.chain(self.v.cos(), -self.v.sin())
    }
    fn atan2(self, x: Self) -> Self {
        let r2 = self.v * self.v + x.v * x.v;
        let mut d = [0.0; N];
        for i in 0..N {
            d[i] = (x.v * self.d[i] - self.v * x.d[i]) / r2;
        }
        Self { v: self.v.atan2(x.v), d }
    }
}

/// Complex number over a real field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cx<R> {
    pub re: R,
    pub im: R,
}

pub type C64 = Cx<f64>;

impl<R: Real> Cx<R> {
    #[inline]
    pub fn new(re: R, im: R) -> Self {
        Self { re, im }
    }

    #[inline]
    pub fn real(re: R) -> Self {
        Self { re, im: R::zero() }
    }

    pub fn from_f64(re: f64, im: f64) -> Self {
        Self { re: R::from_f64(re), im: R::from_f64(im) }
    }

    pub fn zero() -> Self {
        Self::from_f64(0.0, 0.0)
    }

    pub fn one() -> Self {
        Self::from_f64(1.0, 0.0)
    }

    pub fn i() -> Self {
        Self::from_f64(0.0, 1.0)
    }

    #[inline]
    pub fn conj(self) -> Self {
        Self { re: self.re, im: -self.im }
    }

    #[inline]
    pub fn norm_sqr(self) -> R {
        self.re * self.re + self.im * self.im
    }

    pub fn abs(self) -> R {
        self.norm_sqr().sqrt()
    }

    #[inline]
    pub fn scale(self, s: R) -> Self {
        Self { re: self.re * s, im: self.im * s }
    }

    #[inline]
    pub fn scale_f(self, s: f64) -> Self {
        Self { re: self.re * s, im: self.im * s }
    }

    /// Multiplication by `i`.
    #[inline]
    pub fn mul_i(self) -> Self {
        Self { re: -self.im, im: self.re }
    }

    pub fn exp(self) -> Self {
        let m = self.re.exp();
        Self { re: m * self.im.cos(), im: m * self.im.sin() }
    }

    /// Principal logarithm.
    pub fn ln(self) -> Self {
        Self { re: self.norm_sqr().ln() * 0.5, im: self.im.atan2(self.re) }
    }

    /// Principal square root (branch cut on the negative real axis).
    pub fn sqrt(self) -> Self {
        let r = self.abs();
        if r.value() == 0.0 {
            return Self::zero();
        }
        if self.re.value() >= 0.0 {
            let s = ((r + self.re) * 0.5).sqrt();
            Self { re: s, im: self.im / (s * 2.0) }
        } else {
            let s = ((r - self.re) * 0.5).sqrt();
            let s = if self.im.value() < 0.0 { -s } else { s };
            Self { re: self.im / (s * 2.0), im: s }
        }
    }

    pub fn inv(self) -> Self {
        let n = self.norm_sqr();
        Self { re: self.re / n, im: -self.im / n }
    }

    /// Primal value.
    pub fn value(&self) -> C64 {
        Cx { re: self.re.value(), im: self.im.value() }
    }

    pub fn to_complex64(&self) -> num_complex::Complex64 {
        num_complex::Complex64::new(self.re.value(), self.im.value())
    }
}

impl<R: Real> Add for Cx<R> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self { re: self.re + o.re, im: self.im + o.im }
    }
}

impl<R: Real> Sub for Cx<R> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self { re: self.re - o.re, im: self.im - o.im }
    }
}

impl<R: Real> Mul for Cx<R> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Self { re: self.re * o.re - self.im * o.im, im: self.re * o.im + self.im * o.re }
    }
}

impl<R: Real> Div for Cx<R> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        self * o.inv()
    }
}

impl<R: Real> Neg for Cx<R> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self { re: -self.re, im: -self.im }
    }
}

impl<R: Real> AddAssign for Cx<R> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<R: Real> SubAssign for Cx<R> {
    #[inline]
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl<R: Real> MulAssign for Cx<R> {
    #[inline]
    fn mul_assign(&mut self, o: Self) {
        *self = *self * o;
    }
}

/// Constant lift of an `f64` complex number.
pub fn lift_c<R: Real>(z: C64) -> Cx<R> {
    Cx { re: R::from_f64(z.re), im: R::from_f64(z.im) }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd(f: impl Fn(f64) -> f64, x: f64) -> f64 {
        let h = 1e-6;
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn dual_elementary_derivatives() {
        let x = Dual::<1>::variable(0.7, 0);
        let cases: Vec<(Dual<1>, f64)> = vec![
            (x.exp(), fd(f64::exp, 0.7)),
            (x.ln(), fd(f64::ln, 0.7)),
            (x.sqrt(), fd(f64::sqrt, 0.7)),
            (x.sin(), fd(f64::sin, 0.7)),
            (x.cos(), fd(f64::cos, 0.7)),
            (x.atan2(Dual::constant(-0.3)), fd(|t| t.atan2(-0.3), 0.7)),
            (Dual::constant(0.4).atan2(x), fd(|t| 0.4f64.atan2(t), 0.7)),
            (x * x / (x + 1.0), fd(|t| t * t / (t + 1.0), 0.7)),
        ];
        for (got, want) in cases {
            assert!((got.d[0] - want).abs() < 1e-8, "{got:?} vs {want}");
        }
    }

    #[test]
    fn complex_sqrt_is_principal() {
        for &(re, im) in &[(1.0, 0.0), (-1.0, 1e-300), (-1.0, -1e-300), (0.0, 2.0), (3.0, -4.0), (-4.0, 3.0)] {
            let z = C64::from_f64(re, im);
            let s = z.sqrt();
            let back = s * s;
            assert!((back.re - re).abs() < 1e-12 && (back.im - im).abs() < 1e-12);
            assert!(s.re >= 0.0);
            let w = num_complex::Complex64::new(re, im).sqrt();
            assert!((s.re - w.re).abs() < 1e-12 && (s.im - w.im).abs() < 1e-12);
        }
    }

    #[test]
    fn complex_exp_ln_roundtrip() {
        let z = C64::from_f64(0.3, -2.1);
        let w = z.exp().ln();
        assert!((w.re - 0.3).abs() < 1e-14 && (w.im + 2.1).abs() < 1e-14);
    }

    #[test]
    fn dual_complex_derivative_matches_fd() {
        // d/dx sqrt(exp(i x) + 2)
        let f = |x: f64| {
            let z = C64::from_f64(x.cos() + 2.0, x.sin()).sqrt();
            (z.re, z.im)
        };
        let x = Dual::<1>::variable(0.9, 0);
        let z = (Cx::new(x.cos(), x.sin()) + Cx::from_f64(2.0, 0.0)).sqrt();
        let h = 1e-6;
        let (a, b) = (f(0.9 + h), f(0.9 - h));
        assert!((z.re.d[0] - (a.0 - b.0) / (2.0 * h)).abs() < 1e-8);
        assert!((z.im.d[0] - (a.1 - b.1) / (2.0 * h)).abs() < 1e-8);
    }
}
