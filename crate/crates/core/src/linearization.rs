//! Linearization about the reference, Hopf-Cole transform and the extended
//! PDE-ODE system.
//!
//! All coefficients are σ-series with time-jet rows, built from the reference
//! series. Spatial integrals and derivatives act on the series exactly; time
//! derivatives are read from the jets.

use crate::error::{Error, Result};
use crate::jet::{Jet, SigmaSeries};
use crate::physics::{GeometryParams, MaterialParams, Phase};
use crate::reference::ReferenceSample;

/// Length used for structurally zero jets so they never shorten a product.
pub const ZERO_LEN: usize = 64;

pub type JetMat = [[Jet; 2]; 2];
pub type SeriesMat = [[SigmaSeries; 2]; 2];

pub fn jet_zero() -> Jet {
    Jet::zero(ZERO_LEN)
}

pub fn jet_const(v: f64) -> Jet {
    Jet::constant(v, ZERO_LEN)
}

pub fn mat_values(m: &JetMat) -> [[f64; 2]; 2] {
    [[m[0][0].value(), m[0][1].value()], [m[1][0].value(), m[1][1].value()]]
}

pub fn mat_mul(a: &JetMat, b: &JetMat) -> JetMat {
    let e = |i: usize, j: usize| &a[i][0] * &b[0][j] + &a[i][1] * &b[1][j];
    [[e(0, 0), e(0, 1)], [e(1, 0), e(1, 1)]]
}

pub fn mat_sub(a: &JetMat, b: &JetMat) -> JetMat {
    let e = |i: usize, j: usize| &a[i][j] - &b[i][j];
    [[e(0, 0), e(0, 1)], [e(1, 0), e(1, 1)]]
}

pub fn series_mat_eval(m: &SeriesMat, sigma: f64) -> [[f64; 2]; 2] {
    [[m[0][0].eval(sigma), m[0][1].eval(sigma)], [m[1][0].eval(sigma), m[1][1].eval(sigma)]]
}

/// Coefficients of one phase of the linearized fixed-domain system.
#[derive(Clone, Debug)]
pub struct PhaseCoefficients {
    pub phase: Phase,
    /// `Gamma_i - gamma_r`.
    pub extent: Jet,
    pub lambda: Jet,
    pub psi: SigmaSeries,
    pub f: SigmaSeries,
    pub g: SigmaSeries,
    /// `c_{i,j}` for `j = 1, 2`.
    pub c: [SigmaSeries; 2],
    pub r: SigmaSeries,
    pub q: Jet,
    pub p: Jet,
    pub s_hat: Jet,
}

#[derive(Clone, Debug)]
pub struct LinearizedCoefficients {
    pub t: f64,
    pub gamma: Jet,
    pub gamma_dot: Jet,
    pub d: Jet,
    pub phases: [PhaseCoefficients; 2],
}

impl LinearizedCoefficients {
    pub fn phase(&self, p: Phase) -> &PhaseCoefficients {
        &self.phases[p.index()]
    }

    pub fn lambdas(&self) -> [f64; 2] {
        [self.phases[0].lambda.value(), self.phases[1].lambda.value()]
    }
}

pub fn assemble_coefficients(
    sample: &ReferenceSample,
    params: &MaterialParams,
    geometry: &GeometryParams,
) -> Result<LinearizedCoefficients> {
    geometry.check_interface(sample.gamma.value())?;
    let gamma_dot = sample.gamma.dt();
    let partial: Vec<_> = Phase::BOTH
        .iter()
        .map(|&ph| {
            let r = sample.phase(ph);
            let ell = r.extent.clone();
            let inv = ell.recip();
            let trs = r.field.d_sigma();
            let trss = trs.d_sigma();
            let degree = trss.degree();
            let trs = trs.truncated(degree);
            let one_minus = SigmaSeries::linear(1.0, -1.0, degree, ZERO_LEN);
            let alpha = params.alpha(ph);
            let lambda = (&inv * &inv).scale(alpha);
            let psi = SigmaSeries::linear(1.0, -1.0, r.field.degree(), ZERO_LEN).scale_jet(&(&gamma_dot * &inv));
            let inv2 = &inv * &inv;
            let f = trss
                .scale_jet(&(&inv2 * &inv).scale(2.0 * alpha))
                .add(&one_minus.mul(&trs).scale_jet(&(&gamma_dot * &inv2)));
            let g = one_minus.mul(&trs).scale_jet(&inv);
            let s_hat = inv.scale(-ph.beta() * params.k(ph) / params.latent());
            let q = ell.scale(ph.beta() / params.k(ph));
            let p = sample.input_jet(ph, params).scale(-ph.beta() / params.k(ph));
            let trs0 = trs.coeffs[0].clone();
            (ph, ell, lambda, psi, f, g, s_hat, q, p, trs0)
        })
        .collect();
    let d = partial
        .iter()
        .map(|(_, ell, _, _, _, _, s_hat, _, _, trs0)| &(s_hat * &ell.recip()) * trs0)
        .reduce(|a, b| a + b)
        .expect("two phases");
    let s_hats = [partial[0].6.clone(), partial[1].6.clone()];
    let phases = partial
        .into_iter()
        .map(|(phase, extent, lambda, psi, f, g, s_hat, q, p, _)| {
            let c = [g.scale_jet(&s_hats[0]), g.scale_jet(&s_hats[1])];
            let r = f.add(&g.scale_jet(&d));
            PhaseCoefficients { phase, extent, lambda, psi, f, g, c, r, q, p, s_hat }
        })
        .collect::<Vec<_>>();
    let [p1, p2]: [PhaseCoefficients; 2] = phases.try_into().expect("two phases");
    Ok(LinearizedCoefficients {
        t: sample.t,
        gamma: sample.gamma.clone(),
        gamma_dot,
        d,
        phases: [p1, p2],
    })
}

/// Hopf-Cole data of one phase; `h = exp(-exponent)`.
#[derive(Clone, Debug)]
pub struct HopfColePhase {
    pub exponent: SigmaSeries,
    pub h: SigmaSeries,
    pub h_inv: SigmaSeries,
    pub a_check: SigmaSeries,
    pub c_check: [SigmaSeries; 2],
    pub r_check: SigmaSeries,
    pub b_check: Jet,
    pub q_check: Jet,
    pub p_check: Jet,
}

impl HopfColePhase {
    /// `v = h^-1 * dT` on a uniform grid.
    pub fn forward(&self, field: &[f64]) -> Vec<f64> {
        let n = field.len();
        field
            .iter()
            .enumerate()
            .map(|(k, v)| v * self.h_inv.eval(k as f64 / (n - 1) as f64))
            .collect()
    }

    pub fn inverse(&self, field: &[f64]) -> Vec<f64> {
        let n = field.len();
        field
            .iter()
            .enumerate()
            .map(|(k, v)| v * self.h.eval(k as f64 / (n - 1) as f64))
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct HopfColeFactors {
    pub phases: [HopfColePhase; 2],
}

impl HopfColeFactors {
    pub fn phase(&self, p: Phase) -> &HopfColePhase {
        &self.phases[p.index()]
    }
}

pub fn hopf_cole(coeffs: &LinearizedCoefficients) -> HopfColeFactors {
    let phases = Phase::BOTH.map(|ph| {
        let c = coeffs.phase(ph);
        let degree = c.psi.degree();
        let phi = c.psi.scale_jet(&c.lambda.recip().scale(0.5));
        let exponent = phi.integrate().truncated(degree);
        let h = exponent.scale(-1.0).exp();
        let h_inv = exponent.exp();
        // with h = exp(-E): h'/h = -phi, h''/h = phi^2 - phi', h_t/h = -E_t
        let dphi = phi.d_sigma();
        let a_check = phi
            .mul(&phi)
            .truncated(degree)
            .sub(&dphi)
            .scale_jet(&c.lambda)
            .sub(&c.psi.mul(&phi))
            .add(&exponent.d_t());
        let c_check = [h_inv.mul(&c.c[0]), h_inv.mul(&c.c[1])];
        let r_check = h_inv.mul(&c.r);
        let h_inv_1 = h_inv.eval_jet(1.0);
        let b_check = phi.eval_jet(1.0);
        HopfColePhase {
            q_check: &h_inv_1 * &c.q,
            p_check: &h_inv_1 * &c.p,
            exponent,
            h,
            h_inv,
            a_check,
            c_check,
            r_check,
            b_check,
        }
    });
    HopfColeFactors { phases }
}

/// Matrices of the extended PDE-ODE system in the Hopf-Cole coordinates.
#[derive(Clone, Debug)]
pub struct ExtendedSystemMatrices {
    pub t: f64,
    pub f: JetMat,
    pub s: JetMat,
    pub b: [Jet; 2],
    pub p: JetMat,
    pub q: [Jet; 2],
    pub lambda: [Jet; 2],
    pub a: [SigmaSeries; 2],
    pub c: SeriesMat,
    pub r: SeriesMat,
}

impl ExtendedSystemMatrices {
    pub fn lambdas(&self) -> [f64; 2] {
        [self.lambda[0].value(), self.lambda[1].value()]
    }

    pub fn s_values(&self) -> [[f64; 2]; 2] {
        mat_values(&self.s)
    }

    /// `S^-1` as jets; `S = [[s1, s2], [1, 0]]`.
    pub fn s_inverse(&self) -> Result<JetMat> {
        let s2 = &self.s[0][1];
        if s2.value() == 0.0 || !s2.value().is_finite() {
            return Err(Error::Synthesis(format!("S(t) singular at t = {}", self.t)));
        }
        let inv = s2.recip();
        Ok([[jet_zero(), jet_const(1.0)], [inv.clone(), (&self.s[0][0] * &inv).scale(-1.0)]])
    }

    /// Highest sigma degree known for all of `A`, `C` and `R`.
    pub fn degree(&self) -> usize {
        self.a
            .iter()
            .chain(self.c.iter().flatten())
            .chain(self.r.iter().flatten())
            .map(SigmaSeries::degree)
            .min()
            .unwrap_or(0)
    }
}

pub fn assemble_extended(hc: &HopfColeFactors, coeffs: &LinearizedCoefficients) -> Result<ExtendedSystemMatrices> {
    let q = Phase::BOTH.map(|p| hc.phase(p).q_check.clone());
    for (i, qi) in q.iter().enumerate() {
        if qi.value() == 0.0 || !qi.value().is_finite() {
            return Err(Error::Synthesis(format!("Q(t) singular in phase {} at t = {}", i + 1, coeffs.t)));
        }
    }
    let [c1, c2] = &coeffs.phases;
    let [h1, h2] = &hc.phases;
    let degree = h1.r_check.degree();
    let zero_series = SigmaSeries::zero(degree, ZERO_LEN);
    Ok(ExtendedSystemMatrices {
        t: coeffs.t,
        f: [[coeffs.d.clone(), jet_zero()], [jet_zero(), jet_zero()]],
        s: [[c1.s_hat.clone(), c2.s_hat.clone()], [jet_const(1.0), jet_zero()]],
        b: [h1.b_check.clone(), h2.b_check.clone()],
        p: [[h1.p_check.clone(), jet_zero()], [h2.p_check.clone(), jet_zero()]],
        q,
        lambda: [c1.lambda.clone(), c2.lambda.clone()],
        a: [h1.a_check.clone(), h2.a_check.clone()],
        c: [
            [h1.c_check[0].clone(), h1.c_check[1].clone()],
            [h2.c_check[0].clone(), h2.c_check[1].clone()],
        ],
        r: [[h1.r_check.clone(), zero_series.clone()], [h2.r_check.clone(), zero_series]],
    })
}

/// Full chain from a reference sample to the extended matrices.
pub fn extended_at(
    sample: &ReferenceSample,
    params: &MaterialParams,
    geometry: &GeometryParams,
) -> Result<(LinearizedCoefficients, HopfColeFactors, ExtendedSystemMatrices)> {
    let coeffs = assemble_coefficients(sample, params, geometry)?;
    let hc = hopf_cole(&coeffs);
    let m = assemble_extended(&hc, &coeffs)?;
    Ok((coeffs, hc, m))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum LambdaOrdering {
    CrystalSlower,
    MeltSlower,
    Equal,
}

/// Ordering of the two diffusion coefficients; equality within `rel_tol`.
pub fn lambda_ordering(lambdas: [f64; 2], rel_tol: f64) -> LambdaOrdering {
    let [l1, l2] = lambdas;
    if (l1 - l2).abs() <= rel_tol * l1.max(l2) {
        LambdaOrdering::Equal
    } else if l1 < l2 {
        LambdaOrdering::CrystalSlower
    } else {
        LambdaOrdering::MeltSlower
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::{plan_flat_output, reference_sample, ScenarioConfig};

    fn setup(steady: bool) -> (crate::reference::FlatOutputTrajectory, MaterialParams, GeometryParams) {
        let g = GeometryParams::default();
        let s = if steady { ScenarioConfig::steady(0.2, 3600.0, 1700.0) } else { ScenarioConfig::vgf_default() };
        (plan_flat_output(&s, &g).unwrap(), MaterialParams::gaas(), g)
    }

    #[test]
    fn steady_reference_has_no_convection() {
        let (flat, p, g) = setup(true);
        for t in [0.0, 1800.0] {
            let s = reference_sample(&flat, &p, &g, 20, t).unwrap();
            let (c, hc, m) = extended_at(&s, &p, &g).unwrap();
            for ph in Phase::BOTH {
                let pc = c.phase(ph);
                assert!(pc.psi.values().iter().all(|v| *v == 0.0));
                assert!(pc.f.values().iter().all(|v| *v == 0.0));
                let h = hc.phase(ph);
                assert_eq!(h.h.eval(0.7), 1.0);
                assert!(h.a_check.values().iter().all(|v| *v == 0.0));
                assert_eq!(h.b_check.value(), 0.0);
                assert_eq!(h.q_check.value(), pc.q.value());
            }
            let l1 = p.alpha(Phase::Crystal) / 0.2f64.powi(2);
            assert!((c.lambdas()[0] - l1).abs() < 1e-18);
            assert_eq!(m.s_values()[1], [1.0, 0.0]);
        }
    }

    #[test]
    fn definitional_identities() {
        let (flat, p, g) = setup(false);
        for t in [0.0, 5.0 * 3600.0, 14.0 * 3600.0, 21.0 * 3600.0] {
            let s = reference_sample(&flat, &p, &g, 20, t).unwrap();
            let c = assemble_coefficients(&s, &p, &g).unwrap();
            for ph in Phase::BOTH {
                let pc = c.phase(ph);
                let scale_r = (0..=50).map(|k| pc.r.eval(k as f64 / 50.0).abs()).fold(0.0, f64::max);
                let scale_g = (0..=50).map(|k| pc.g.eval(k as f64 / 50.0).abs()).fold(0.0, f64::max);
                for k in 0..=50 {
                    let x = k as f64 / 50.0;
                    let lhs = pc.r.eval(x);
                    let rhs = pc.f.eval(x) + pc.g.eval(x) * c.d.value();
                    assert!((lhs - rhs).abs() <= 1e-14 * scale_r, "{lhs} {rhs}");
                    for j in 0..2 {
                        let cij = pc.c[j].eval(x);
                        let other = pc.g.eval(x) * c.phases[j].s_hat.value();
                        let sj = c.phases[j].s_hat.value().abs();
                        assert!((cij - other).abs() <= 1e-14 * scale_g * sj);
                    }
                }
                assert!(pc.lambda.value() > 0.0);
            }
        }
    }

    #[test]
    fn hopf_cole_factor_matches_closed_form() {
        let (flat, p, g) = setup(false);
        let t = 14.0 * 3600.0;
        let s = reference_sample(&flat, &p, &g, 20, t).unwrap();
        let (c, hc, _) = extended_at(&s, &p, &g).unwrap();
        for ph in Phase::BOTH {
            let ell = g.extent(ph, s.gamma.value());
            let kappa = s.gamma_dot() * ell / (2.0 * p.alpha(ph));
            for k in 0..=10 {
                let x = k as f64 / 10.0;
                let h = (-kappa * (x - 0.5 * x * x)).exp();
                let got = hc.phase(ph).h.eval(x);
                assert!((got - h).abs() < 1e-14, "{got} {h}");
            }
            assert_eq!(hc.phase(ph).h.eval(0.0), 1.0);
            assert!(hc.phase(ph).b_check.value().abs() < 1e-18);
            assert!(c.phase(ph).q.value() != 0.0);
        }
    }

    #[test]
    fn a_check_matches_pointwise_formula() {
        let (flat, p, g) = setup(false);
        for &t in &[3.3 * 3600.0, 9.1 * 3600.0, 19.7 * 3600.0] {
            let s = reference_sample(&flat, &p, &g, 20, t).unwrap();
            let (_, _, m) = extended_at(&s, &p, &g).unwrap();
            for ph in Phase::BOTH {
                let ell = g.extent(ph, s.gamma.value());
                let alpha = p.alpha(ph);
                let (v, a) = (s.gamma.deriv(1), s.gamma.deriv(2));
                // d/dt (v * ell) = a * ell - v^2
                let lambda = alpha / (ell * ell);
                for &x in &[0.1, 0.45, 0.9] {
                    let phi = (1.0 - x) * v * ell / (2.0 * alpha);
                    let dphi = -v * ell / (2.0 * alpha);
                    let psi = (1.0 - x) * v / ell;
                    let e_t = (a * ell - v * v) / (2.0 * alpha) * (x - 0.5 * x * x);
                    let want = lambda * (phi * phi - dphi) - psi * phi + e_t;
                    let got = m.a[ph.index()].eval(x);
                    assert!((got - want).abs() < 1e-12 * want.abs().max(1e-12), "{got} {want}");
                }
            }
        }
    }

    #[test]
    fn hopf_cole_roundtrip() {
        let (flat, p, g) = setup(false);
        let s = reference_sample(&flat, &p, &g, 20, 6.0 * 3600.0).unwrap();
        let (_, hc, _) = extended_at(&s, &p, &g).unwrap();
        let field: Vec<f64> = (0..101).map(|k| ((k * 37 % 101) as f64 / 10.0).sin()).collect();
        for ph in Phase::BOTH {
            let h = hc.phase(ph);
            let back = h.forward(&h.inverse(&field));
            for (a, b) in field.iter().zip(&back) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn default_ordering_is_crystal_slower() {
        let (flat, p, g) = setup(false);
        for k in 0..=30 {
            let s = reference_sample(&flat, &p, &g, 20, k as f64 * 3600.0).unwrap();
            let c = assemble_coefficients(&s, &p, &g).unwrap();
            assert_eq!(lambda_ordering(c.lambdas(), 1e-6), LambdaOrdering::CrystalSlower);
        }
        assert_eq!(lambda_ordering([2.0, 1.0], 1e-6), LambdaOrdering::MeltSlower);
        assert_eq!(lambda_ordering([1.0, 1.0], 1e-6), LambdaOrdering::Equal);
    }
}
