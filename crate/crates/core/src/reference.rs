//! Flatness-based feedforward.
//!
//! The flat output is the interface position together with the crystal-side
//! temperature gradient at the interface. Around the moving interface each
//! phase temperature is the power series
//!
//! ```text
//! T_i(z, t) = sum_k a_{i,k}(t) (z - gamma_r(t))^k / k!
//! ```
//!
//! and inserting it into the heat equation gives the recursion
//! `alpha_i a_{k+2} = d/dt a_k - gamma_r' a_{k+1}` with `a_0 = T_m`. The first
//! coefficient of the crystal is the planned gradient; for the melt it follows
//! from the Stefan condition. All coefficients are carried as jets so the time
//! derivatives needed by the recursion and later by the linearization are
//! exact.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gevrey::{GevreyStep, MAX_DERIVATIVE_ORDER};
use crate::jet::{Jet, SigmaSeries};
use crate::numerics::{hermite, locate, unit_grid};
use crate::physics::{linear_state, GeometryParams, MaterialParams, Phase, PhaseField, PlantState};

/// Transition from the previous level to `target` over `[t_start_s, t_end_s]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionWindow {
    pub t_start_s: f64,
    pub t_end_s: f64,
    pub target: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GevreySpec {
    pub order: f64,
    pub windows: Vec<TransitionWindow>,
}

impl GevreySpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.order > 1.0 && self.order <= 2.0) {
            return Err(Error::Config(format!("Gevrey order {} outside (1, 2]", self.order)));
        }
        for w in &self.windows {
            if !(w.t_start_s < w.t_end_s) {
                return Err(Error::Config("transition windows must have positive length".into()));
            }
        }
        for pair in self.windows.windows(2) {
            if pair[1].t_start_s < pair[0].t_end_s {
                return Err(Error::Config("transition windows overlap or are out of order".into()));
            }
        }
        Ok(())
    }
}

/// Trajectory specification of the growth scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub seed_length_m: f64,
    pub duration_s: f64,
    pub gradient_setpoint_k_per_m: f64,
    /// Velocity transitions of the interface; the velocity starts at zero.
    pub velocity: GevreySpec,
    /// Optional transitions of the interface gradient away from the setpoint.
    #[serde(default)]
    pub gradient_windows: Vec<TransitionWindow>,
}

impl ScenarioConfig {
    /// 30 h growth run: 0 -> 7 mm/h over [2 h, 10 h], back to 0 over [18 h, 26 h].
    pub fn vgf_default() -> Self {
        let h = 3600.0;
        let v = 7e-3 / h;
        ScenarioConfig {
            seed_length_m: 0.2,
            duration_s: 30.0 * h,
            gradient_setpoint_k_per_m: 1700.0,
            velocity: GevreySpec {
                order: 1.9,
                windows: vec![
                    TransitionWindow { t_start_s: 2.0 * h, t_end_s: 10.0 * h, target: v },
                    TransitionWindow { t_start_s: 18.0 * h, t_end_s: 26.0 * h, target: 0.0 },
                ],
            },
            gradient_windows: Vec::new(),
        }
    }

    /// Interface at rest for the whole run.
    pub fn steady(seed_length_m: f64, duration_s: f64, gradient: f64) -> Self {
        ScenarioConfig {
            seed_length_m,
            duration_s,
            gradient_setpoint_k_per_m: gradient,
            velocity: GevreySpec { order: 1.9, windows: Vec::new() },
            gradient_windows: Vec::new(),
        }
    }

    pub fn plateau_velocity(&self) -> f64 {
        self.velocity.windows.iter().map(|w| w.target).fold(0.0, f64::max)
    }
}

/// Smooth profile `initial + sum_w (target_w - previous) step_w(t)`.
#[derive(Clone, Debug)]
pub struct SmoothProfile {
    pub initial: f64,
    steps: Vec<(GevreyStep, f64)>,
}

impl SmoothProfile {
    pub fn new(initial: f64, windows: &[TransitionWindow], order: f64) -> Result<Self> {
        let mut prev = initial;
        let mut steps = Vec::with_capacity(windows.len());
        for w in windows {
            steps.push((GevreyStep::new(w.t_start_s, w.t_end_s, order)?, w.target - prev));
            prev = w.target;
        }
        Ok(SmoothProfile { initial, steps })
    }

    pub fn value(&self, t: f64) -> f64 {
        self.initial
            + self
                .steps
                .iter()
                .map(|(s, d)| d * s.evaluate(t, 0).map(|v| v[0]).unwrap_or(0.0))
                .sum::<f64>()
    }

    pub fn jet(&self, t: f64, len: usize) -> Result<Jet> {
        let mut acc = Jet::constant(self.initial, len);
        for (s, d) in &self.steps {
            acc = acc + s.jet(t, len)?.scale(*d);
        }
        Ok(acc)
    }

    /// `int_0^t value`.
    pub fn integral(&self, t: f64) -> f64 {
        self.initial * t
            + self
                .steps
                .iter()
                .map(|(s, d)| d * (s.integral(t) - s.integral(0.0)))
                .sum::<f64>()
    }
}

/// Planned flat output `[gamma_r, dT_1/dz(gamma_r)]`.
#[derive(Clone, Debug)]
pub struct FlatOutputTrajectory {
    pub gamma0: f64,
    pub velocity: SmoothProfile,
    pub gradient: SmoothProfile,
    pub order: f64,
    pub duration: f64,
    pub max_order: usize,
}

impl FlatOutputTrajectory {
    pub fn gamma(&self, t: f64) -> f64 {
        self.gamma0 + self.velocity.integral(t)
    }

    pub fn gamma_dot(&self, t: f64) -> f64 {
        self.velocity.value(t)
    }

    pub fn gradient(&self, t: f64) -> f64 {
        self.gradient.value(t)
    }

    /// Jet of `gamma_r` with `len` coefficients (derivatives up to `len - 1`).
    pub fn gamma_jet(&self, t: f64, len: usize) -> Result<Jet> {
        if len > self.max_order + 1 {
            return Err(Error::Capability { requested: len - 1, max: self.max_order });
        }
        if len == 0 {
            return Ok(Jet::zero(0));
        }
        let v = self.velocity.jet(t, len - 1)?;
        let mut c = Vec::with_capacity(len);
        c.push(self.gamma(t));
        c.extend(v.coeffs().iter().enumerate().map(|(k, x)| x / (k as f64 + 1.0)));
        Ok(Jet::from_coeffs(c))
    }

    pub fn gradient_jet(&self, t: f64, len: usize) -> Result<Jet> {
        if len > self.max_order + 1 {
            return Err(Error::Capability { requested: len - 1, max: self.max_order });
        }
        self.gradient.jet(t, len)
    }
}

/// Plan the flat output of a scenario and check it against the geometry.
pub fn plan_flat_output(scenario: &ScenarioConfig, geometry: &GeometryParams) -> Result<FlatOutputTrajectory> {
    scenario.velocity.validate()?;
    let order = scenario.velocity.order;
    let flat = FlatOutputTrajectory {
        gamma0: scenario.seed_length_m + geometry.gamma_1_m,
        velocity: SmoothProfile::new(0.0, &scenario.velocity.windows, order)?,
        gradient: SmoothProfile::new(scenario.gradient_setpoint_k_per_m, &scenario.gradient_windows, order)?,
        order,
        duration: scenario.duration_s,
        max_order: MAX_DERIVATIVE_ORDER,
    };
    // gamma_r is monotone between windows; sampling the window edges is enough
    // for monotone pieces, a dense scan covers the rest.
    let n = 2000;
    for i in 0..=n {
        let t = scenario.duration_s * i as f64 / n as f64;
        let g = flat.gamma(t);
        if !(g > geometry.gamma_1_m && g < geometry.gamma_2_m) {
            return Err(Error::Planning(format!(
                "reference interface {g:.4} m at t = {t:.0} s leaves ({}, {})",
                geometry.gamma_1_m, geometry.gamma_2_m
            )));
        }
        if flat.gradient(t) <= 0.0 {
            return Err(Error::Planning(format!("gradient reference not positive at t = {t:.0} s")));
        }
    }
    Ok(flat)
}

/// Jet length of the lowest coefficients for a truncation order `j`.
pub fn base_len(truncation: usize) -> usize {
    truncation / 2 + 2
}

/// Series coefficients `a_{phase,k}(t)`, `k = 0..=truncation`, as jets.
pub fn parametrize_phase(
    flat: &FlatOutputTrajectory,
    params: &MaterialParams,
    phase: Phase,
    truncation: usize,
    t: f64,
) -> Result<Vec<Jet>> {
    let len = base_len(truncation);
    let gamma = flat.gamma_jet(t, len + 1)?;
    let grad = flat.gradient_jet(t, len)?;
    Ok(parametrize_from_jets(&gamma, &grad, params, phase, truncation))
}

/// Recursion on given flat-output jets.
pub fn parametrize_from_jets(
    gamma: &Jet,
    grad: &Jet,
    params: &MaterialParams,
    phase: Phase,
    truncation: usize,
) -> Vec<Jet> {
    let len = grad.len();
    let gamma_dot = gamma.dt();
    let alpha = params.alpha(phase);
    let a1 = match phase {
        Phase::Crystal => grad.clone(),
        Phase::Melt => (grad.scale(params.k_1_w_per_m_k) - gamma_dot.scale(params.latent()))
            .scale(1.0 / params.k_2_w_per_m_k),
    };
    let mut a = vec![Jet::constant(params.t_m_kelvin, len), a1];
    for k in 0..truncation.saturating_sub(1) {
        let next = (a[k].dt() - &gamma_dot * &a[k + 1]).scale(1.0 / alpha);
        a.push(next);
    }
    a.truncate(truncation + 1);
    a
}

/// Reference of one phase at one time: series in `sigma` on the fixed domain.
#[derive(Clone, Debug)]
pub struct PhaseReference {
    pub phase: Phase,
    pub coeffs: Vec<Jet>,
    /// `Gamma_i - gamma_r` as a jet.
    pub extent: Jet,
    pub field: SigmaSeries,
}

impl PhaseReference {
    fn new(phase: Phase, coeffs: Vec<Jet>, gamma: &Jet, geometry: &GeometryParams) -> Self {
        let extent = gamma.scale(-1.0).add_const(geometry.boundary(phase));
        let mut power = Jet::constant(1.0, extent.len());
        let mut fact = 1.0;
        let mut rows = Vec::with_capacity(coeffs.len());
        for (k, a) in coeffs.iter().enumerate() {
            if k > 0 {
                power = &power * &extent;
                fact *= k as f64;
            }
            rows.push((a * &power).scale(1.0 / fact));
        }
        PhaseReference { phase, coeffs, extent, field: SigmaSeries::new(rows) }
    }

    /// Physical temperature at `z` from the `z`-series.
    pub fn temperature_at(&self, z: f64, gamma: f64) -> f64 {
        let x = z - gamma;
        let mut fact = 1.0;
        let mut pow = 1.0;
        let mut acc = 0.0;
        for (k, a) in self.coeffs.iter().enumerate() {
            if k > 0 {
                fact *= k as f64;
                pow *= x;
            }
            acc += a.value() * pow / fact;
        }
        acc
    }
}

/// Everything the feedforward provides at one instant.
#[derive(Clone, Debug)]
pub struct ReferenceSample {
    pub t: f64,
    pub gamma: Jet,
    pub gradient: Jet,
    pub phases: [PhaseReference; 2],
}

impl ReferenceSample {
    pub fn phase(&self, p: Phase) -> &PhaseReference {
        &self.phases[p.index()]
    }

    pub fn gamma_dot(&self) -> f64 {
        self.gamma.deriv(1)
    }

    /// Reference heater flux as a jet.
    pub fn input_jet(&self, p: Phase, params: &MaterialParams) -> Jet {
        let r = self.phase(p);
        let d1 = r.field.d_sigma().eval_jet(1.0);
        let dz = &d1 * &r.extent.recip();
        match p {
            Phase::Crystal => dz.scale(-params.k_1_w_per_m_k),
            Phase::Melt => dz.scale(params.k_2_w_per_m_k),
        }
    }

    pub fn inputs(&self, params: &MaterialParams) -> [f64; 2] {
        Phase::BOTH.map(|p| self.input_jet(p, params).value())
    }

    pub fn field_values(&self, p: Phase, sigma: &[f64]) -> Vec<f64> {
        let f = &self.phase(p).field;
        sigma.iter().map(|&s| f.eval(s)).collect()
    }

    /// Reference state sampled on `nodes` equidistant nodes.
    pub fn plant_state(&self, nodes: usize) -> PlantState {
        let grid = unit_grid(nodes);
        PlantState {
            fields: Phase::BOTH.map(|p| PhaseField { phase: p, values: self.field_values(p, &grid) }),
            interface: crate::physics::InterfaceState { gamma: self.gamma.value(), gamma_dot: self.gamma_dot() },
            time: self.t,
        }
    }
}

/// Time-resolved references. Samples on a uniform time grid are kept for
/// interpolation and persistence; full samples are evaluated on demand.
#[derive(Clone, Debug)]
pub struct ReferenceBundle {
    pub flat: FlatOutputTrajectory,
    pub params: MaterialParams,
    pub geometry: GeometryParams,
    pub truncation: usize,
    pub sigma: Vec<f64>,
    pub t0: f64,
    pub dt: f64,
    pub gamma: Vec<f64>,
    pub gamma_dot: Vec<f64>,
    pub gamma_ddot: Vec<f64>,
    pub inputs: [Vec<f64>; 2],
    pub inputs_dot: [Vec<f64>; 2],
}

impl ReferenceBundle {
    pub fn sample(&self, t: f64) -> Result<ReferenceSample> {
        reference_sample(&self.flat, &self.params, &self.geometry, self.truncation, t)
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.gamma.len()).map(|i| self.t0 + i as f64 * self.dt).collect()
    }

    fn interp(&self, y: &[f64], dy: &[f64], t: f64) -> f64 {
        let (i, _) = locate(self.t0, self.dt, y.len(), t);
        let ta = self.t0 + i as f64 * self.dt;
        hermite(ta, y[i], dy[i], ta + self.dt, y[i + 1], dy[i + 1], t)
    }

    pub fn gamma_at(&self, t: f64) -> f64 {
        self.interp(&self.gamma, &self.gamma_dot, t)
    }

    pub fn gamma_dot_at(&self, t: f64) -> f64 {
        self.interp(&self.gamma_dot, &self.gamma_ddot, t)
    }

    pub fn inputs_at(&self, t: f64) -> [f64; 2] {
        [0, 1].map(|i| self.interp(&self.inputs[i], &self.inputs_dot[i], t))
    }

    pub fn duration(&self) -> f64 {
        self.flat.duration
    }
}

pub fn reference_sample(
    flat: &FlatOutputTrajectory,
    params: &MaterialParams,
    geometry: &GeometryParams,
    truncation: usize,
    t: f64,
) -> Result<ReferenceSample> {
    let len = base_len(truncation);
    let gamma = flat.gamma_jet(t, len + 1)?;
    let gradient = flat.gradient_jet(t, len)?;
    let phases = Phase::BOTH.map(|p| {
        let a = parametrize_from_jets(&gamma, &gradient, params, p, truncation);
        PhaseReference::new(p, a, &gamma, geometry)
    });
    Ok(ReferenceSample { t, gamma, gradient, phases })
}

/// Sample the references on a uniform time grid.
pub fn build_references(
    flat: &FlatOutputTrajectory,
    params: &MaterialParams,
    geometry: &GeometryParams,
    n_sigma: usize,
    dt: f64,
    truncation: usize,
) -> Result<ReferenceBundle> {
    let n_t = (flat.duration / dt).round() as usize + 1;
    let rows: Vec<Result<[f64; 7]>> = (0..n_t)
        .into_par_iter()
        .map(|i| {
            let s = reference_sample(flat, params, geometry, truncation, i as f64 * dt)?;
            let u = Phase::BOTH.map(|p| s.input_jet(p, params));
            Ok([
                s.gamma.value(),
                s.gamma.deriv(1),
                s.gamma.deriv(2),
                u[0].value(),
                u[1].value(),
                u[0].deriv(1),
                u[1].deriv(1),
            ])
        })
        .collect();
    let mut cols: [Vec<f64>; 7] = Default::default();
    for r in rows {
        let r = r?;
        for (c, v) in cols.iter_mut().zip(r) {
            c.push(v);
        }
    }
    let [gamma, gamma_dot, gamma_ddot, u1, u2, du1, du2] = cols;
    Ok(ReferenceBundle {
        flat: flat.clone(),
        params: params.clone(),
        geometry: geometry.clone(),
        truncation,
        sigma: unit_grid(n_sigma),
        t0: 0.0,
        dt,
        gamma,
        gamma_dot,
        gamma_ddot,
        inputs: [u1, u2],
        inputs_dot: [du1, du2],
    })
}

/// Perturbed initial state: interface offset, velocity offset realized via the
/// melt gradient, and crystal gradient offset. Profiles are linear in `z`.
pub fn perturbed_initial_state(
    sample: &ReferenceSample,
    params: &MaterialParams,
    geometry: &GeometryParams,
    nodes: usize,
    delta_gamma: f64,
    delta_gamma_dot: f64,
    delta_grad: f64,
) -> PlantState {
    if delta_gamma == 0.0 && delta_gamma_dot == 0.0 && delta_grad == 0.0 {
        return sample.plant_state(nodes);
    }
    let gamma = sample.gamma.value() + delta_gamma;
    let g1 = sample.gradient.value() + delta_grad;
    let v = sample.gamma_dot() + delta_gamma_dot;
    let g2 = (params.k_1_w_per_m_k * g1 - params.latent() * v) / params.k_2_w_per_m_k;
    linear_state(gamma, [g1, g2], nodes, params, geometry, sample.t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_flat() -> (FlatOutputTrajectory, MaterialParams, GeometryParams) {
        let g = GeometryParams::default();
        let flat = plan_flat_output(&ScenarioConfig::vgf_default(), &g).unwrap();
        (flat, MaterialParams::gaas(), g)
    }

    #[test]
    fn default_scenario_values() {
        let (flat, _, _) = default_flat();
        assert_eq!(flat.gamma(0.0), 0.2);
        assert!((flat.gamma_dot(14.0 * 3600.0) - 7e-3 / 3600.0).abs() < 1e-18);
        assert_eq!(flat.gradient(5.0 * 3600.0), 1700.0);
        let growth = flat.gamma(30.0 * 3600.0) - flat.gamma(0.0);
        assert!((growth - 0.112).abs() < 1e-9, "{growth}");
    }

    #[test]
    fn growth_matches_quadrature_of_velocity() {
        let (flat, _, _) = default_flat();
        let q = crate::numerics::gauss_legendre(|t| flat.gamma_dot(t), 0.0, 30.0 * 3600.0, 600);
        let growth = flat.gamma(30.0 * 3600.0) - flat.gamma(0.0);
        assert!((growth - q).abs() < 1e-9);
    }

    #[test]
    fn zero_velocity_keeps_interface() {
        let g = GeometryParams::default();
        let flat = plan_flat_output(&ScenarioConfig::steady(0.2, 3600.0, 1700.0), &g).unwrap();
        for t in [0.0, 100.0, 3600.0] {
            assert_eq!(flat.gamma(t), 0.2);
            assert_eq!(flat.gamma_dot(t), 0.0);
        }
    }

    #[test]
    fn planning_rejects_assumption_violation() {
        let g = GeometryParams::default();
        let mut s = ScenarioConfig::vgf_default();
        s.velocity.windows[0].target = 0.05 / 3600.0;
        assert!(matches!(plan_flat_output(&s, &g), Err(Error::Planning(_))));
    }

    #[test]
    fn stationary_recursion_gives_linear_profile() {
        let g = GeometryParams::default();
        let p = MaterialParams::gaas();
        let flat = plan_flat_output(&ScenarioConfig::steady(0.2, 3600.0, 1700.0), &g).unwrap();
        for phase in Phase::BOTH {
            let a = parametrize_phase(&flat, &p, phase, 20, 100.0).unwrap();
            assert_eq!(a[0].value(), p.t_m_kelvin);
            assert!(a[2..].iter().all(|j| j.coeffs().iter().all(|c| *c == 0.0)));
        }
        let s = reference_sample(&flat, &p, &g, 20, 0.0).unwrap();
        let u = s.inputs(&p);
        assert!((u[0] + p.k_1_w_per_m_k * 1700.0).abs() < 1e-9);
        assert!((u[1] - p.k_1_w_per_m_k * 1700.0).abs() < 1e-9);
    }

    #[test]
    fn dirichlet_value_and_stefan_balance_along_reference() {
        let (flat, p, g) = default_flat();
        let vmax = 7e-3 / 3600.0;
        for k in 0..=30 {
            let t = k as f64 * 3600.0;
            let s = reference_sample(&flat, &p, &g, 20, t).unwrap();
            for ph in Phase::BOTH {
                assert_eq!(s.phase(ph).field.eval(0.0), p.t_m_kelvin);
            }
            let g1 = s.phase(Phase::Crystal).coeffs[1].value();
            let g2 = s.phase(Phase::Melt).coeffs[1].value();
            let res = p.latent() * s.gamma_dot() - p.k_1_w_per_m_k * g1 + p.k_2_w_per_m_k * g2;
            assert!(res.abs() < 1e-6 * p.latent() * vmax);
        }
    }

    fn sample_times() -> Vec<f64> {
        (0..=120).map(|k| k as f64 * 900.0).collect()
    }

    fn phase_z(g: &GeometryParams, ph: Phase, gamma: f64, n: usize) -> Vec<f64> {
        let b = g.boundary(ph);
        (0..=n).map(|i| gamma + (b - gamma) * i as f64 / n as f64).collect()
    }

    fn truncation_change(flat: &FlatOutputTrajectory, p: &MaterialParams, g: &GeometryParams, hi: usize, lo: usize) -> f64 {
        let mut worst: f64 = 0.0;
        for t in sample_times() {
            let a = reference_sample(flat, p, g, hi, t).unwrap();
            let b = reference_sample(flat, p, g, lo, t).unwrap();
            let gamma = a.gamma.value();
            for ph in Phase::BOTH {
                for z in phase_z(g, ph, gamma, 40) {
                    let d = a.phase(ph).temperature_at(z, gamma) - b.phase(ph).temperature_at(z, gamma);
                    worst = worst.max(d.abs());
                }
            }
        }
        worst
    }

    #[test]
    fn truncation_converges() {
        let (flat, p, g) = default_flat();
        let d = [12, 16, 20, 24].map(|j| truncation_change(&flat, &p, &g, j, j - 4));
        assert!(d.windows(2).all(|w| w[1] < 0.5 * w[0]), "{d:?}");
        assert!(d[2] < 1e-6 * p.t_m_kelvin, "{d:?}");
    }

    /// `dT/dt - alpha d2T/dz2` of the truncated series at fixed `z`.
    fn heat_residual(r: &PhaseReference, gamma: &Jet, alpha: f64, z: f64) -> f64 {
        let x = z - gamma.value();
        let gd = gamma.deriv(1);
        let n = r.coeffs.len();
        let mut acc = 0.0;
        let mut fact = 1.0;
        let mut pow = 1.0;
        for k in 0..n {
            if k > 0 {
                fact *= k as f64;
                pow *= x;
            }
            let adot = if r.coeffs[k].len() > 1 { r.coeffs[k].deriv(1) } else { 0.0 };
            let next = r.coeffs.get(k + 1).map_or(0.0, |a| a.value());
            let next2 = r.coeffs.get(k + 2).map_or(0.0, |a| a.value());
            acc += (adot - gd * next - alpha * next2) * pow / fact;
        }
        acc
    }

    #[test]
    fn series_satisfies_heat_equation() {
        let (flat, p, g) = default_flat();
        let mut worst: f64 = 0.0;
        for t in sample_times() {
            let s = reference_sample(&flat, &p, &g, 20, t).unwrap();
            let gamma = s.gamma.value();
            for ph in Phase::BOTH {
                for z in phase_z(&g, ph, gamma, 40) {
                    worst = worst.max(heat_residual(s.phase(ph), &s.gamma, p.alpha(ph), z).abs());
                }
            }
        }
        assert!(worst < 1e-3, "{worst}");
    }
}
