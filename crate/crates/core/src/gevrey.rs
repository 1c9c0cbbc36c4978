//! Smooth Gevrey-class transitions.
//!
//! The step is the normalized integral of the bump
//! `b(s) = exp(-(s (1 - s))^(-w))`, `w = 1 / (order - 1)`, which is identically
//! zero outside `(0, 1)` and belongs to the Gevrey class of the given order.
//! Derivatives are obtained by truncated Taylor arithmetic on the bump, so all
//! of them are exact up to rounding.

use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::numerics::gauss_legendre;

/// Largest time derivative of a flat output that the planner provides.
pub const MAX_DERIVATIVE_ORDER: usize = 14;

const PANELS: usize = 48;

#[derive(Clone, Debug)]
pub struct GevreyStep {
    pub t0: f64,
    pub t1: f64,
    order: f64,
    exponent: f64,
    norm: f64,
    max_order: usize,
}

impl GevreyStep {
    pub fn new(t0: f64, t1: f64, order: f64) -> Result<Self> {
        Self::with_max_order(t0, t1, order, MAX_DERIVATIVE_ORDER)
    }

    pub fn with_max_order(t0: f64, t1: f64, order: f64, max_order: usize) -> Result<Self> {
        if !(t0 < t1) {
            return Err(Error::Config(format!("transition window [{t0}, {t1}] is empty")));
        }
        if !(order > 1.0 && order <= 2.0) {
            return Err(Error::Config(format!("Gevrey order {order} outside (1, 2]")));
        }
        let exponent = 1.0 / (order - 1.0);
        let mut step = GevreyStep {
            t0,
            t1,
            order,
            exponent,
            norm: 1.0,
            max_order,
        };
        step.norm = 2.0 * gauss_legendre(|s| step.bump(s), 0.0, 0.5, PANELS);
        Ok(step)
    }

    pub fn order(&self) -> f64 {
        self.order
    }

    pub fn duration(&self) -> f64 {
        self.t1 - self.t0
    }

    fn bump(&self, s: f64) -> f64 {
        if s <= 0.0 || s >= 1.0 {
            return 0.0;
        }
        (-(s * (1.0 - s)).powf(-self.exponent)).exp()
    }

    /// Taylor coefficients of the bump in the normalized variable.
    fn bump_jet(&self, s: f64, len: usize) -> Jet {
        if s <= 0.0 || s >= 1.0 {
            return Jet::zero(len);
        }
        let u = s * (1.0 - s);
        let v0 = u.powf(-self.exponent);
        if v0 > 700.0 {
            return Jet::zero(len);
        }
        let sj = Jet::variable(s, len);
        let one_minus = sj.scale(-1.0).add_const(1.0);
        let uj = &sj * &one_minus;
        uj.powf(-self.exponent).scale(-1.0).exp()
    }

    /// Normalized step value on `[0, 1]`.
    fn unit_value(&self, s: f64) -> f64 {
        if s <= 0.0 {
            0.0
        } else if s >= 1.0 {
            1.0
        } else if s <= 0.5 {
            gauss_legendre(|x| self.bump(x), 0.0, s, PANELS) / self.norm
        } else {
            1.0 - gauss_legendre(|x| self.bump(x), 0.0, 1.0 - s, PANELS) / self.norm
        }
    }

    /// Value and the first `n` time derivatives at `t`.
    pub fn evaluate(&self, t: f64, n: usize) -> Result<Vec<f64>> {
        if n > self.max_order {
            return Err(Error::Capability {
                requested: n,
                max: self.max_order,
            });
        }
        let big_t = self.duration();
        let s = (t - self.t0) / big_t;
        let mut out = Vec::with_capacity(n + 1);
        out.push(self.unit_value(s));
        if n > 0 {
            let b = self.bump_jet(s, n);
            for k in 1..=n {
                out.push(b.deriv(k - 1) / self.norm / big_t.powi(k as i32));
            }
        }
        Ok(out)
    }

    /// Time derivatives as a jet of `len` coefficients.
    pub fn jet(&self, t: f64, len: usize) -> Result<Jet> {
        Ok(Jet::from_derivatives(&self.evaluate(t, len.saturating_sub(1))?))
    }

    /// `int_{-inf}^{t} step(t') dt'`.
    pub fn integral(&self, t: f64) -> f64 {
        let big_t = self.duration();
        let s = (t - self.t0) / big_t;
        if s <= 0.0 {
            return 0.0;
        }
        if s >= 1.0 {
            // the step is point-symmetric about its midpoint
            return big_t * (s - 0.5);
        }
        let first = gauss_legendre(|x| x * self.bump(x), 0.0, s, PANELS) / self.norm;
        big_t * (s * self.unit_value(s) - first)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn left_edge_and_midpoint() {
        let g = GevreyStep::new(10.0, 20.0, 1.9).unwrap();
        let left = g.evaluate(10.0, 14).unwrap();
        assert!(left.iter().all(|v| *v == 0.0));
        let mid = g.evaluate(15.0, 0).unwrap();
        assert!((mid[0] - 0.5).abs() < 1e-13);
        let right = g.evaluate(20.0, 14).unwrap();
        assert_eq!(right[0], 1.0);
        assert!(right[1..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn first_derivative_matches_finite_differences() {
        let g = GevreyStep::new(0.0, 1000.0, 1.9).unwrap();
        let h = 1e-2;
        let peak = g.evaluate(500.0, 1).unwrap()[1];
        for k in 1..=20 {
            let t = 1000.0 * (k as f64 - 0.5) / 20.0;
            let d = g.evaluate(t, 1).unwrap()[1];
            let fd = (g.evaluate(t + h, 0).unwrap()[0] - g.evaluate(t - h, 0).unwrap()[0]) / (2.0 * h);
            assert!((d - fd).abs() < 1e-6 * peak, "t={t} d={d} fd={fd}");
        }
    }

    #[test]
    fn higher_derivatives_match_finite_differences() {
        let g = GevreyStep::new(0.0, 10.0, 1.5).unwrap();
        let h = 1e-4;
        for &t in &[3.0, 5.5, 7.0] {
            let d = g.evaluate(t, 5).unwrap();
            for k in 1..5 {
                let fd = (g.evaluate(t + h, k).unwrap()[k] - g.evaluate(t - h, k).unwrap()[k]) / (2.0 * h);
                assert!((d[k + 1] - fd).abs() < 1e-5 * d[k + 1].abs().max(1e-3), "k={k}");
            }
        }
    }

    #[test]
    fn integral_matches_quadrature() {
        let g = GevreyStep::new(2.0, 6.0, 1.9).unwrap();
        for &t in &[1.0, 3.0, 4.0, 5.5, 9.0] {
            let q = gauss_legendre(|x| g.evaluate(x, 0).unwrap()[0], 0.0, t, 400);
            assert!((g.integral(t) - q).abs() < 1e-9, "t={t}");
        }
    }

    #[test]
    fn rejects_bad_orders_and_capability() {
        assert!(GevreyStep::new(0.0, 1.0, 1.0).is_err());
        assert!(GevreyStep::new(0.0, 1.0, 2.5).is_err());
        assert!(GevreyStep::new(1.0, 1.0, 1.5).is_err());
        let g = GevreyStep::new(0.0, 1.0, 1.9).unwrap();
        assert!(matches!(g.evaluate(0.5, 15), Err(Error::Capability { .. })));
    }
}
