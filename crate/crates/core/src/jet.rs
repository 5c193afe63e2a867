//! Scalars for coefficient functions: plain `f64` and truncated multivariate
//! jets in `k` nilpotent infinitesimals `ε_1, …, ε_k` (`ε_i² = 0`).
//!
//! Evaluating a map at `x + Σ ε_i u_i` and reading the coefficient of
//! `ε_1⋯ε_k` gives the mixed directional derivative `D^k g(x)[u_1, …, u_k]`
//! exactly, with no step-size error. A jet in `k` infinitesimals stores
//! `2^k` coefficients indexed by subsets; multiplication is subset convolution.

use std::ops::{Add, Mul, Neg, Sub};

pub trait Scalar: Clone + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Neg<Output = Self> {
    /// A constant of the same kind as `self`.
    fn constant(&self, c: f64) -> Self;
    fn value(&self) -> f64;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn exp(&self) -> Self;
    fn recip(&self) -> Self;

    fn scale(&self, c: f64) -> Self {
        self.clone() * self.constant(c)
    }

    fn powi(&self, n: u32) -> Self {
        let mut out = self.constant(1.0);
        for _ in 0..n {
            out = out * self.clone();
        }
        out
    }
}

impl Scalar for f64 {
    fn constant(&self, c: f64) -> f64 {
        c
    }
    fn value(&self) -> f64 {
        *self
    }
    fn sin(&self) -> f64 {
        f64::sin(*self)
    }
    fn cos(&self) -> f64 {
        f64::cos(*self)
    }
    fn exp(&self) -> f64 {
        f64::exp(*self)
    }
    fn recip(&self) -> f64 {
        1.0 / self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Jet {
    coeffs: Vec<f64>,
}

impl Jet {
    pub fn constant_in(order: usize, c: f64) -> Jet {
        let mut coeffs = vec![0.0; 1 << order];
        coeffs[0] = c;
        Jet { coeffs }
    }

    /// `x + Σ_i ε_i · du[i]`.
    pub fn seeded(x: f64, du: &[f64]) -> Jet {
        let mut j = Jet::constant_in(du.len(), x);
        for (i, d) in du.iter().enumerate() {
            j.coeffs[1 << i] = *d;
        }
        j
    }

    pub fn order(&self) -> usize {
        self.coeffs.len().trailing_zeros() as usize
    }

    /// Coefficient of `ε_1⋯ε_k`.
    pub fn top(&self) -> f64 {
        *self.coeffs.last().unwrap()
    }

    /// Coefficient of the product of the infinitesimals in `mask`.
    pub fn coeff(&self, mask: usize) -> f64 {
        self.coeffs[mask]
    }

    /// `f(self)` from the derivatives `f^{(j)}(x_0)`, `j = 0..=k`.
    fn lift(&self, derivs: &[f64]) -> Jet {
        let k = self.order();
        let mut nil = self.clone();
        nil.coeffs[0] = 0.0;
        let mut out = Jet::constant_in(k, derivs[0]);
        let mut power = Jet::constant_in(k, 1.0);
        let mut fact = 1.0;
        for (j, d) in derivs.iter().enumerate().skip(1).take(k) {
            power = power * nil.clone();
            fact *= j as f64;
            let c = d / fact;
            for (o, p) in out.coeffs.iter_mut().zip(&power.coeffs) {
                *o += c * p;
            }
        }
        out
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(mut self, rhs: Jet) -> Jet {
        for (a, b) in self.coeffs.iter_mut().zip(rhs.coeffs) {
            *a += b;
        }
        self
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(mut self, rhs: Jet) -> Jet {
        for (a, b) in self.coeffs.iter_mut().zip(rhs.coeffs) {
            *a -= b;
        }
        self
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(mut self) -> Jet {
        self.coeffs.iter_mut().for_each(|a| *a = -*a);
        self
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        let n = self.coeffs.len();
        let mut out = vec![0.0; n];
        for (s, o) in out.iter_mut().enumerate() {
            // Enumerate the subsets t of s.
            let mut t = s;
            loop {
                *o += self.coeffs[t] * rhs.coeffs[s ^ t];
                if t == 0 {
                    break;
                }
                t = (t - 1) & s;
            }
        }
        Jet { coeffs: out }
    }
}

impl Scalar for Jet {
    fn constant(&self, c: f64) -> Jet {
        Jet::constant_in(self.order(), c)
    }
    fn value(&self) -> f64 {
        self.coeffs[0]
    }
    fn sin(&self) -> Jet {
        let (s, c) = self.coeffs[0].sin_cos();
        let cycle = [s, c, -s, -c];
        let d: Vec<f64> = (0..=self.order()).map(|j| cycle[j % 4]).collect();
        self.lift(&d)
    }
    fn cos(&self) -> Jet {
        let (s, c) = self.coeffs[0].sin_cos();
        let cycle = [c, -s, -c, s];
        let d: Vec<f64> = (0..=self.order()).map(|j| cycle[j % 4]).collect();
        self.lift(&d)
    }
    fn exp(&self) -> Jet {
        let e = self.coeffs[0].exp();
        self.lift(&vec![e; self.order() + 1])
    }
    fn recip(&self) -> Jet {
        let x = self.coeffs[0];
        let mut d = Vec::with_capacity(self.order() + 1);
        let mut v = 1.0 / x;
        for j in 0..=self.order() {
            d.push(v);
            v *= -((j + 1) as f64) / x;
        }
        self.lift(&d)
    }
}
