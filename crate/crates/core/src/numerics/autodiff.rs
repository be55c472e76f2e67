//! Forward-mode dual numbers, nestable to any depth.
//!
//! A `Dual<Dual<f64>>` carries a mixed second derivative, a
//! `Dual<Dual<Dual<f64>>>` a third, and so on. Every closed-form evaluator in
//! the crate is written generically over [`Real`] so that gradients, Hessians
//! and the third derivatives needed by the Pohozaev traces are exact to
//! rounding.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

pub trait Real:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn cst(x: f64) -> Self;
    /// Underlying scalar value (all infinitesimal parts dropped).
    fn re(self) -> f64;
    fn ln(self) -> Self;
    fn ln_1p(self) -> Self;
    fn exp(self) -> Self;
    fn sqrt(self) -> Self;
    fn powi(self, n: i32) -> Self;
    fn powf(self, k: f64) -> Self;

    fn recip(self) -> Self {
        Self::cst(1.0) / self
    }
    fn scale(self, k: f64) -> Self {
        self * Self::cst(k)
    }
    fn add_f(self, k: f64) -> Self {
        self + Self::cst(k)
    }
}

impl Real for f64 {
    fn cst(x: f64) -> Self {
        x
    }
    fn re(self) -> f64 {
        self
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn ln_1p(self) -> Self {
        f64::ln_1p(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    fn powf(self, k: f64) -> Self {
        f64::powf(self, k)
    }
    fn scale(self, k: f64) -> Self {
        self * k
    }
    fn add_f(self, k: f64) -> Self {
        self + k
    }
}

/// `v + d·ε` with `ε² = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<T> {
    pub v: T,
    pub d: T,
}

impl<T: Real> Dual<T> {
    pub fn new(v: T, d: T) -> Self {
        Dual { v, d }
    }

    /// Seed a variable with unit tangent scaled by `dir`.
    pub fn var(v: T, dir: f64) -> Self {
        Dual { v, d: T::cst(dir) }
    }

    fn chain(self, f: T, df: T) -> Self {
        Dual { v: f, d: self.d * df }
    }
}

impl<T: Real> Add for Dual<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Dual { v: self.v + o.v, d: self.d + o.d }
    }
}

impl<T: Real> Sub for Dual<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Dual { v: self.v - o.v, d: self.d - o.d }
    }
}

impl<T: Real> Mul for Dual<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Dual { v: self.v * o.v, d: self.v * o.d + self.d * o.v }
    }
}

impl<T: Real> Div for Dual<T> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let inv = o.v.recip();
        let q = self.v * inv;
        Dual { v: q, d: (self.d - q * o.d) * inv }
    }
}

impl<T: Real> Neg for Dual<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Dual { v: -self.v, d: -self.d }
    }
}

impl<T: Real> Real for Dual<T> {
    fn cst(x: f64) -> Self {
        Dual { v: T::cst(x), d: T::cst(0.0) }
    }
    fn re(self) -> f64 {
        self.v.re()
    }
    fn ln(self) -> Self {
        self.chain(self.v.ln(), self.v.recip())
    }
    fn ln_1p(self) -> Self {
        self.chain(self.v.ln_1p(), self.v.add_f(1.0).recip())
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e)
    }
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        self.chain(s, s.recip().scale(0.5))
    }
    fn powi(self, n: i32) -> Self {
        if n == 0 {
            return Self::cst(1.0);
        }
        self.chain(self.v.powi(n), self.v.powi(n - 1).scale(n as f64))
    }
    fn powf(self, k: f64) -> Self {
        self.chain(self.v.powf(k), self.v.powf(k - 1.0).scale(k))
    }
    fn scale(self, k: f64) -> Self {
        Dual { v: self.v.scale(k), d: self.d.scale(k) }
    }
    fn add_f(self, k: f64) -> Self {
        Dual { v: self.v.add_f(k), d: self.d }
    }
}

/// Promote a point to the next dual level with tangent `dir`.
pub fn lift<T: Real, const N: usize>(x: [T; N], dir: [f64; N]) -> [Dual<T>; N] {
    std::array::from_fn(|i| Dual::new(x[i], T::cst(dir[i])))
}

/// Promote a point to the next dual level with zero tangent.
pub fn lift_const<T: Real, const N: usize>(x: [T; N]) -> [Dual<T>; N] {
    std::array::from_fn(|i| Dual::new(x[i], T::cst(0.0)))
}

pub fn consts<T: Real, const N: usize>(x: [f64; N]) -> [T; N] {
    std::array::from_fn(|i| T::cst(x[i]))
}

pub fn dot<T: Real, const N: usize>(a: &[T; N], b: &[T; N]) -> T {
    let mut s = T::cst(0.0);
    for i in 0..N {
        s = s + a[i] * b[i];
    }
    s
}

/// A scalar field on `R⁴` that can be evaluated on any [`Real`] type.
pub trait ScalarField4: Sync {
    fn eval<T: Real>(&self, x: [T; 4]) -> T;

    fn value(&self, x: [f64; 4]) -> f64 {
        self.eval(x)
    }

    /// Directional derivative `∂_a f(x)`.
    fn d1(&self, x: [f64; 4], a: [f64; 4]) -> f64 {
        self.eval(lift(x, a)).d
    }

    /// Returns `(∂_b f, ∂_a ∂_b f)`.
    fn d2(&self, x: [f64; 4], a: [f64; 4], b: [f64; 4]) -> (f64, f64) {
        let r = self.eval(lift(lift(x, b), a));
        (r.v.d, r.d.d)
    }

    /// Third directional derivative `∂_a ∂_b ∂_c f`.
    fn d3(&self, x: [f64; 4], a: [f64; 4], b: [f64; 4], c: [f64; 4]) -> f64 {
        self.eval(lift(lift(lift(x, c), b), a)).d.d.d
    }

    fn gradient(&self, x: [f64; 4]) -> [f64; 4] {
        std::array::from_fn(|k| self.d1(x, unit(k)))
    }

    fn hessian(&self, x: [f64; 4]) -> [[f64; 4]; 4] {
        let mut h = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in i..4 {
                let (_, v) = self.d2(x, unit(i), unit(j));
                h[i][j] = v;
                h[j][i] = v;
            }
        }
        h
    }

    fn laplacian(&self, x: [f64; 4]) -> f64 {
        (0..4).map(|k| self.d2(x, unit(k), unit(k)).1).sum()
    }
}

pub fn unit(k: usize) -> [f64; 4] {
    let mut e = [0.0; 4];
    e[k] = 1.0;
    e
}

/// `∂_dir F` as a field in its own right (one extra dual level).
#[derive(Clone, Copy, Debug)]
pub struct Directional<F> {
    pub inner: F,
    pub dir: [f64; 4],
}

impl<F: ScalarField4> ScalarField4 for Directional<F> {
    fn eval<T: Real>(&self, x: [T; 4]) -> T {
        self.inner.eval(lift(x, self.dir)).d
    }
}

/// `x·∇F + c F`, the generator of the scaling `F(x) ↦ λ^c F(λx)`.
#[derive(Clone, Copy, Debug)]
pub struct Dilation<F> {
    pub inner: F,
    pub c: f64,
}

impl<F: ScalarField4> ScalarField4 for Dilation<F> {
    fn eval<T: Real>(&self, x: [T; 4]) -> T {
        let radial = x.map(|xk| Dual::new(xk, xk));
        self.inner.eval(radial).d + self.inner.eval(x).scale(self.c)
    }
}

/// `Σ cᵢ Fᵢ` for two fields; enough for the bilinearity checks.
#[derive(Clone, Copy, Debug)]
pub struct Combination<F, G> {
    pub a: F,
    pub ca: f64,
    pub b: G,
    pub cb: f64,
}

impl<F: ScalarField4, G: ScalarField4> ScalarField4 for Combination<F, G> {
    fn eval<T: Real>(&self, x: [T; 4]) -> T {
        self.a.eval(x).scale(self.ca) + self.b.eval(x).scale(self.cb)
    }
}
