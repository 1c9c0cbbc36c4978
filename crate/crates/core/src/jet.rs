//! Truncated Taylor arithmetic.
//!
//! A [`Jet`] carries the Taylor coefficients of a scalar function of time
//! around an expansion point, `c[k] = f^(k)(t0) / k!`. The number of stored
//! coefficients is the amount of derivative information that is known; binary
//! operations keep the shorter of the two operands, so information is never
//! invented. A [`SigmaSeries`] is a power series in the front-fixed coordinate
//! whose coefficients are jets; rows of higher spatial degree typically carry
//! fewer time coefficients, which is what the parabolic recursions produce.

use std::ops::{Add, Mul, Neg, Sub};

#[derive(Clone, Debug, PartialEq)]
pub struct Jet {
    c: Vec<f64>,
}

impl Jet {
    pub fn from_coeffs(c: Vec<f64>) -> Self {
        Jet { c }
    }

    pub fn constant(value: f64, len: usize) -> Self {
        let mut c = vec![0.0; len];
        if len > 0 {
            c[0] = value;
        }
        Jet { c }
    }

    pub fn zero(len: usize) -> Self {
        Jet { c: vec![0.0; len] }
    }

    /// Jet of the identity `t` around `t0`.
    pub fn variable(t0: f64, len: usize) -> Self {
        let mut c = vec![0.0; len];
        if len > 0 {
            c[0] = t0;
        }
        if len > 1 {
            c[1] = 1.0;
        }
        Jet { c }
    }

    /// Build from derivative values `f, f', f'', ...`.
    pub fn from_derivatives(d: &[f64]) -> Self {
        let mut fact = 1.0;
        let c = d
            .iter()
            .enumerate()
            .map(|(k, v)| {
                if k > 0 {
                    fact *= k as f64;
                }
                v / fact
            })
            .collect();
        Jet { c }
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.c
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// `n`-th time derivative at the expansion point.
    pub fn deriv(&self, n: usize) -> f64 {
        let fact: f64 = (1..=n).map(|k| k as f64).product();
        self.c[n] * fact
    }

    pub fn truncated(&self, len: usize) -> Jet {
        Jet {
            c: self.c[..len.min(self.c.len())].to_vec(),
        }
    }

    /// Time derivative; one coefficient shorter.
    pub fn dt(&self) -> Jet {
        Jet {
            c: (1..self.c.len()).map(|k| k as f64 * self.c[k]).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Jet {
        Jet {
            c: self.c.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add_const(&self, s: f64) -> Jet {
        let mut c = self.c.clone();
        if let Some(v) = c.first_mut() {
            *v += s;
        }
        Jet { c }
    }

    pub fn recip(&self) -> Jet {
        let n = self.c.len();
        let mut b = vec![0.0; n];
        if n == 0 {
            return Jet { c: b };
        }
        let a0 = self.c[0];
        b[0] = 1.0 / a0;
        for k in 1..n {
            let s: f64 = (1..=k).map(|i| self.c[i] * b[k - i]).sum();
            b[k] = -s / a0;
        }
        Jet { c: b }
    }

    pub fn exp(&self) -> Jet {
        let n = self.c.len();
        let mut b = vec![0.0; n];
        if n == 0 {
            return Jet { c: b };
        }
        b[0] = self.c[0].exp();
        for k in 1..n {
            let s: f64 = (1..=k).map(|i| i as f64 * self.c[i] * b[k - i]).sum();
            b[k] = s / k as f64;
        }
        Jet { c: b }
    }

    pub fn ln(&self) -> Jet {
        let n = self.c.len();
        let mut b = vec![0.0; n];
        if n == 0 {
            return Jet { c: b };
        }
        let a0 = self.c[0];
        b[0] = a0.ln();
        for k in 1..n {
            let s: f64 = (1..k).map(|i| i as f64 * b[i] * self.c[k - i]).sum();
            b[k] = (self.c[k] - s / k as f64) / a0;
        }
        Jet { c: b }
    }

    pub fn powf(&self, p: f64) -> Jet {
        self.ln().scale(p).exp()
    }

    pub fn powi(&self, p: u32) -> Jet {
        let mut out = Jet::constant(1.0, self.len());
        for _ in 0..p {
            out = &out * self;
        }
        out
    }
}

impl Add for &Jet {
    type Output = Jet;
    fn add(self, o: &Jet) -> Jet {
        let n = self.c.len().min(o.c.len());
        Jet {
            c: (0..n).map(|k| self.c[k] + o.c[k]).collect(),
        }
    }
}

impl Sub for &Jet {
    type Output = Jet;
    fn sub(self, o: &Jet) -> Jet {
        let n = self.c.len().min(o.c.len());
        Jet {
            c: (0..n).map(|k| self.c[k] - o.c[k]).collect(),
        }
    }
}

impl Mul for &Jet {
    type Output = Jet;
    fn mul(self, o: &Jet) -> Jet {
        let n = self.c.len().min(o.c.len());
        Jet {
            c: (0..n)
                .map(|k| (0..=k).map(|i| self.c[i] * o.c[k - i]).sum())
                .collect(),
        }
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

macro_rules! forward_owned {
    ($tr:ident, $f:ident) => {
        impl $tr for Jet {
            type Output = Jet;
            fn $f(self, o: Jet) -> Jet {
                (&self).$f(&o)
            }
        }
        impl $tr<&Jet> for Jet {
            type Output = Jet;
            fn $f(self, o: &Jet) -> Jet {
                (&self).$f(o)
            }
        }
        impl $tr<Jet> for &Jet {
            type Output = Jet;
            fn $f(self, o: Jet) -> Jet {
                self.$f(&o)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

/// Power series `sum_p coeffs[p] * sigma^p` with time-jet coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct SigmaSeries {
    pub coeffs: Vec<Jet>,
}

impl SigmaSeries {
    pub fn new(coeffs: Vec<Jet>) -> Self {
        SigmaSeries { coeffs }
    }

    /// The polynomial `a + b*sigma`, known exactly to spatial degree `degree`.
    pub fn linear(a: f64, b: f64, degree: usize, len: usize) -> Self {
        let mut coeffs = vec![Jet::zero(len); degree + 1];
        coeffs[0] = Jet::constant(a, len);
        if degree >= 1 {
            coeffs[1] = Jet::constant(b, len);
        }
        SigmaSeries { coeffs }
    }

    pub fn constant(j: &Jet, degree: usize) -> Self {
        let mut coeffs = vec![Jet::zero(j.len()); degree + 1];
        coeffs[0] = j.clone();
        SigmaSeries { coeffs }
    }

    pub fn zero(degree: usize, len: usize) -> Self {
        SigmaSeries { coeffs: vec![Jet::zero(len); degree + 1] }
    }

    /// Keep rows up to `degree`.
    pub fn truncated(&self, degree: usize) -> SigmaSeries {
        SigmaSeries { coeffs: self.coeffs.iter().take(degree + 1).cloned().collect() }
    }

    /// Every row cut to at most `len` time coefficients.
    pub fn with_time_len(&self, len: usize) -> SigmaSeries {
        SigmaSeries { coeffs: self.coeffs.iter().map(|c| c.truncated(len)).collect() }
    }

    /// Shortest row length.
    pub fn time_len(&self) -> usize {
        self.coeffs.iter().map(Jet::len).min().unwrap_or(0)
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn mul(&self, o: &SigmaSeries) -> SigmaSeries {
        let n = self.coeffs.len().min(o.coeffs.len());
        let coeffs = (0..n)
            .map(|p| {
                let mut acc = &self.coeffs[0] * &o.coeffs[p];
                for q in 1..=p {
                    acc = acc + &self.coeffs[q] * &o.coeffs[p - q];
                }
                acc
            })
            .collect();
        SigmaSeries { coeffs }
    }

    pub fn add(&self, o: &SigmaSeries) -> SigmaSeries {
        let n = self.coeffs.len().min(o.coeffs.len());
        SigmaSeries {
            coeffs: (0..n).map(|p| &self.coeffs[p] + &o.coeffs[p]).collect(),
        }
    }

    pub fn sub(&self, o: &SigmaSeries) -> SigmaSeries {
        let n = self.coeffs.len().min(o.coeffs.len());
        SigmaSeries {
            coeffs: (0..n).map(|p| &self.coeffs[p] - &o.coeffs[p]).collect(),
        }
    }

    pub fn scale_jet(&self, j: &Jet) -> SigmaSeries {
        SigmaSeries {
            coeffs: self.coeffs.iter().map(|c| c * j).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> SigmaSeries {
        SigmaSeries {
            coeffs: self.coeffs.iter().map(|c| c.scale(s)).collect(),
        }
    }

    pub fn d_sigma(&self) -> SigmaSeries {
        SigmaSeries {
            coeffs: (1..self.coeffs.len())
                .map(|p| self.coeffs[p].scale(p as f64))
                .collect(),
        }
    }

    /// Antiderivative vanishing at `sigma = 0`.
    pub fn integrate(&self) -> SigmaSeries {
        let len0 = self.coeffs.first().map_or(0, Jet::len);
        let mut coeffs = vec![Jet::zero(len0)];
        coeffs.extend(
            self.coeffs
                .iter()
                .enumerate()
                .map(|(p, c)| c.scale(1.0 / (p as f64 + 1.0))),
        );
        SigmaSeries { coeffs }
    }

    /// Row-wise time derivative.
    pub fn d_t(&self) -> SigmaSeries {
        SigmaSeries {
            coeffs: self.coeffs.iter().map(Jet::dt).collect(),
        }
    }

    /// Series of `exp(self)`; requires a vanishing constant row only for accuracy
    /// of the truncation, not for correctness of the recursion.
    pub fn exp(&self) -> SigmaSeries {
        let n = self.coeffs.len();
        let mut out: Vec<Jet> = Vec::with_capacity(n);
        out.push(self.coeffs[0].exp());
        for p in 1..n {
            let mut acc = (&self.coeffs[1] * &out[p - 1]).scale(1.0);
            for k in 2..=p {
                acc = acc + (&self.coeffs[k] * &out[p - k]).scale(k as f64);
            }
            out.push(acc.scale(1.0 / p as f64));
        }
        SigmaSeries { coeffs: out }
    }

    /// Value at `sigma` (time derivative order 0).
    pub fn eval(&self, sigma: f64) -> f64 {
        self.coeffs
            .iter()
            .rev()
            .fold(0.0, |acc, c| acc * sigma + c.value())
    }

    /// `n`-th time derivative at `sigma`; rows lacking that information are
    /// an error of the caller and panic.
    pub fn eval_dt(&self, sigma: f64, n: usize) -> f64 {
        self.coeffs
            .iter()
            .rev()
            .fold(0.0, |acc, c| acc * sigma + c.deriv(n))
    }

    /// Jet at `sigma`, as long as the shortest row allows.
    pub fn eval_jet(&self, sigma: f64) -> Jet {
        let mut acc = Jet::zero(self.coeffs.iter().map(Jet::len).min().unwrap_or(0));
        for c in self.coeffs.iter().rev() {
            acc = acc.scale(sigma) + c;
        }
        acc
    }

    /// Plain value coefficients, lowest degree first.
    pub fn values(&self) -> Vec<f64> {
        self.coeffs.iter().map(Jet::value).collect()
    }
}

/// Horner evaluation of a plain polynomial.
pub fn poly_eval(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, v| acc * x + v)
}

pub fn poly_deriv(c: &[f64]) -> Vec<f64> {
    (1..c.len()).map(|p| p as f64 * c[p]).collect()
}

pub fn poly_integral(c: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0];
    out.extend(c.iter().enumerate().map(|(p, v)| v / (p as f64 + 1.0)));
    out
}
