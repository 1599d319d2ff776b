//! Second-order forward-mode Taylor numbers over `K` real coordinates.

use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::dsl::eval::{integer_exponent, Scalar};
use crate::tensor::C64;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Value, gradient and Hessian with respect to `K` real coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct T2<const K: usize> {
    pub v: C64,
    pub g: [C64; K],
    pub h: [[C64; K]; K],
}

impl<const K: usize> T2<K> {
    pub fn constant(v: C64) -> Self {
        T2 {
            v,
            g: [ZERO; K],
            h: [[ZERO; K]; K],
        }
    }

    /// Complex variable `x + iy` seeded on real coordinates `2a` and `2a+1`.
    pub fn complex_var(v: C64, a: usize) -> Self {
        let mut t = Self::constant(v);
        t.g[2 * a] = C64::new(1.0, 0.0);
        t.g[2 * a + 1] = C64::new(0.0, 1.0);
        t
    }

    /// Applies a scalar function given its value and first two derivatives.
    fn chain(&self, f0: C64, f1: C64, f2: C64) -> Self {
        let mut out = Self::constant(f0);
        for i in 0..K {
            out.g[i] = f1 * self.g[i];
            for j in 0..K {
                out.h[i][j] = f1 * self.h[i][j] + f2 * self.g[i] * self.g[j];
            }
        }
        out
    }

    fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        let mut out = Self::constant(f(self.v));
        for i in 0..K {
            out.g[i] = f(self.g[i]);
            for j in 0..K {
                out.h[i][j] = f(self.h[i][j]);
            }
        }
        out
    }

    fn recip(&self) -> Self {
        let inv = C64::new(1.0, 0.0) / self.v;
        self.chain(inv, -inv * inv, 2.0 * inv * inv * inv)
    }

    fn scale(&self, s: C64) -> Self {
        self.map(|x| x * s)
    }
}

impl<const K: usize> Add for T2<K> {
    type Output = Self;
    fn add(mut self, o: Self) -> Self {
        self.v += o.v;
        for i in 0..K {
            self.g[i] += o.g[i];
            for j in 0..K {
                self.h[i][j] += o.h[i][j];
            }
        }
        self
    }
}

impl<const K: usize> Sub for T2<K> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self + (-o)
    }
}

impl<const K: usize> Neg for T2<K> {
    type Output = Self;
    fn neg(self) -> Self {
        self.map(|x| -x)
    }
}

impl<const K: usize> Mul for T2<K> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        if o.is_constant() {
            return self.scale(o.v);
        }
        if self.is_constant() {
            return o.scale(self.v);
        }
        let mut out = Self::constant(self.v * o.v);
        for i in 0..K {
            out.g[i] = self.g[i] * o.v + self.v * o.g[i];
            for j in 0..K {
                out.h[i][j] = self.h[i][j] * o.v + self.v * o.h[i][j] + self.g[i] * o.g[j] + o.g[i] * self.g[j];
            }
        }
        out
    }
}

impl<const K: usize> Div for T2<K> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        if o.is_constant() {
            return self.scale(C64::new(1.0, 0.0) / o.v);
        }
        self * o.recip()
    }
}

impl<const K: usize> Scalar for T2<K> {
    fn constant(c: C64) -> Self {
        T2::constant(c)
    }
    fn value(&self) -> C64 {
        self.v
    }
    fn is_constant(&self) -> bool {
        self.g.iter().all(|x| *x == ZERO) && self.h.iter().flatten().all(|x| *x == ZERO)
    }
    fn exp(&self) -> Self {
        let e = self.v.exp();
        self.chain(e, e, e)
    }
    fn ln(&self) -> Self {
        let inv = C64::new(1.0, 0.0) / self.v;
        self.chain(self.v.ln(), inv, -inv * inv)
    }
    fn sqrt(&self) -> Self {
        let s = self.v.sqrt();
        self.chain(s, 0.5 / s, -0.25 / (s * self.v))
    }
    fn sin(&self) -> Self {
        let (s, c) = (self.v.sin(), self.v.cos());
        self.chain(s, c, -s)
    }
    fn cos(&self) -> Self {
        let (s, c) = (self.v.sin(), self.v.cos());
        self.chain(c, -s, -c)
    }
    fn conj(&self) -> Self {
        self.map(|x| x.conj())
    }
    fn re(&self) -> Self {
        self.map(|x| C64::new(x.re, 0.0))
    }
    fn im(&self) -> Self {
        self.map(|x| C64::new(x.im, 0.0))
    }
    fn powc(&self, p: C64) -> Self {
        match integer_exponent(p) {
            Some(0) => T2::constant(C64::new(1.0, 0.0)),
            Some(1) => *self,
            Some(k) => {
                let k2 = self.v.powi(k - 2);
                let k1 = k2 * self.v;
                let kf = k as f64;
                self.chain(k1 * self.v, kf * k1, kf * (kf - 1.0) * k2)
            }
            None => {
                let f0 = self.v.powc(p);
                let f1 = p * f0 / self.v;
                let f2 = (p - 1.0) * f1 / self.v;
                self.chain(f0, f1, f2)
            }
        }
    }
}

/// Wirtinger first derivatives from real gradient: `(d, dbar)`.
pub fn wirtinger_first(g: &[C64], a: usize) -> (C64, C64) {
    let (gx, gy) = (g[2 * a], g[2 * a + 1]);
    let i = C64::new(0.0, 1.0);
    ((gx - i * gy) * 0.5, (gx + i * gy) * 0.5)
}

/// Mixed Wirtinger derivative `d_a dbar_b` from a real Hessian accessor.
pub fn wirtinger_mixed(h: impl Fn(usize, usize) -> C64, a: usize, b: usize) -> C64 {
    let i = C64::new(0.0, 1.0);
    (h(2 * a, 2 * b) + i * h(2 * a, 2 * b + 1) - i * h(2 * a + 1, 2 * b) + h(2 * a + 1, 2 * b + 1)) * 0.25
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule() {
        // f = z * conj(z) = x^2 + y^2
        let z = T2::<2>::complex_var(C64::new(0.3, -0.2), 0);
        let f = z * z.conj();
        assert!((f.v.re - 0.13).abs() < 1e-15);
        assert!((f.g[0].re - 0.6).abs() < 1e-15 && (f.g[1].re + 0.4).abs() < 1e-15);
        assert!((f.h[0][0].re - 2.0).abs() < 1e-15 && f.h[0][1].norm() < 1e-15);
        assert!((wirtinger_mixed(|i, j| f.h[i][j], 0, 0).re - 1.0).abs() < 1e-15);
        let (d, dbar) = wirtinger_first(&f.g, 0);
        assert!((d - C64::new(0.3, 0.2)).norm() < 1e-15);
        assert!((dbar - C64::new(0.3, -0.2)).norm() < 1e-15);
    }

    #[test]
    fn holomorphic_has_no_dbar() {
        let z = T2::<2>::complex_var(C64::new(0.7, 0.1), 0);
        let f = (z * z).exp() / (z + T2::constant(C64::new(2.0, 0.0)));
        let (_, dbar) = wirtinger_first(&f.g, 0);
        assert!(dbar.norm() < 1e-14);
        assert!(wirtinger_mixed(|i, j| f.h[i][j], 0, 0).norm() < 1e-13);
    }

    #[test]
    fn fractional_power() {
        let z = T2::<2>::complex_var(C64::new(0.5, 0.0), 0);
        let f = (z * z.conj()).powc(C64::new(1.5, 0.0));
        // |z|^3 has d dbar = (9/4)|z|
        assert!((wirtinger_mixed(|i, j| f.h[i][j], 0, 0).re - 2.25 * 0.5).abs() < 1e-14);
    }
}
