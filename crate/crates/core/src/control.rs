//! Tracking controller: error pipeline, integrator and boundary feedback.

use serde::{Deserialize, Serialize};

use crate::decoupling::mat2_vec;
use crate::error::{Error, Result};
use crate::kernel::{KernelSet, KernelTraces};
use crate::numerics::{d_left, d_right, resample_unit};
use crate::physics::PlantState;
use crate::synthesis::{ControllerTables, TableSample};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    pub epsilon: f64,
    /// Gradient error of the previous controller step.
    pub last_grad_error: Option<f64>,
}

impl ControllerState {
    pub fn with_epsilon(epsilon: f64) -> Self {
        ControllerState { epsilon, last_grad_error: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorSignals {
    /// Decoupled error field on the controller grid.
    pub w_tilde: [Vec<f64>; 2],
    /// `[delta_gamma, epsilon]`.
    pub x: [f64; 2],
    pub grad_error_at_0: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ControlOutput {
    pub u: [f64; 2],
    pub u_r: [f64; 2],
    pub u_e: [f64; 2],
    pub integral_term: [f64; 2],
    pub jump_term: [f64; 2],
    pub boundary_term: [f64; 2],
    pub ode_term: [f64; 2],
}

/// Fixed-domain error, Hopf-Cole and decoupling on the controller grid.
/// `epsilon` is taken from `ctrl` as is.
pub fn error_pipeline(plant: &PlantState, sample: &TableSample, ctrl: &ControllerState) -> Result<ErrorSignals> {
    let n = sample.field_r[0].len();
    if plant.nodes() < 3 {
        return Err(Error::Interface(format!("plant grid with {} nodes cannot be resampled", plant.nodes())));
    }
    let v: [Vec<f64>; 2] = std::array::from_fn(|i| {
        let f = resample_unit(&plant.fields[i].values, n);
        f.iter()
            .zip(&sample.field_r[i])
            .zip(&sample.h_inv[i])
            .map(|((t, r), h)| h * (t - r))
            .collect()
    });
    let x = [plant.interface.gamma - sample.gamma_r, ctrl.epsilon];
    let grad_error_at_0 = d_left(&v[0], 1.0 / (n - 1) as f64);
    let mut w_tilde = v;
    for a in 0..n {
        let nx = mat2_vec(&sample.n_matrix(a), x);
        w_tilde[0][a] -= nx[0];
        w_tilde[1][a] -= nx[1];
    }
    Ok(ErrorSignals { w_tilde, x, grad_error_at_0 })
}

/// Trapezoidal update of the integrator state.
pub fn integrator_step(ctrl: &ControllerState, grad_error_at_0: f64, dt: f64) -> ControllerState {
    let inc = match ctrl.last_grad_error {
        Some(prev) => 0.5 * dt * (prev + grad_error_at_0),
        None => 0.0,
    };
    ControllerState { epsilon: ctrl.epsilon + inc, last_grad_error: Some(grad_error_at_0) }
}

/// `u = u_r + Q^-1 [int dK/dsigma(1, .) w~ + jump + (K(1,1) - B) w~(1) - P_bar x]`.
pub fn control_law(err: &ErrorSignals, sample: &TableSample, traces: &KernelTraces) -> Result<ControlOutput> {
    let (integral_term, jump_term, k_end) = traces.boundary_operator(&err.w_tilde);
    let n = err.w_tilde[0].len();
    let px = mat2_vec(&sample.p_bar, err.x);
    let mut out = ControlOutput { u_r: sample.u_r, integral_term, jump_term, ..Default::default() };
    for i in 0..2 {
        let q = sample.q[i];
        if q == 0.0 || !q.is_finite() {
            return Err(Error::Synthesis(format!("Q singular at t = {}", sample.t)));
        }
        out.boundary_term[i] = k_end[i] - sample.b[i] * err.w_tilde[i][n - 1];
        out.ode_term[i] = -px[i];
        out.u_e[i] = (integral_term[i] + jump_term[i] + out.boundary_term[i] + out.ode_term[i]) / q;
        out.u[i] = out.u_r[i] + out.u_e[i];
    }
    Ok(out)
}

/// `d w_bar / dsigma (1)` of the target coordinates from the measured
/// boundary slope of `w~`, relative to the sup norm of `w~`.
pub fn target_boundary_residual(err: &ErrorSignals, traces: &KernelTraces) -> f64 {
    let w = &err.w_tilde;
    let n = w[0].len();
    let sup = w.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    if sup == 0.0 {
        return 0.0;
    }
    let (integral, jump, end) = traces.boundary_operator(w);
    let h = 1.0 / (n - 1) as f64;
    (0..2)
        .map(|i| (d_right(&w[i], h) - integral[i] - jump[i] - end[i]).abs())
        .fold(0.0, f64::max)
        / sup
}

/// Controller with its tables; one owner advances the state.
#[derive(Clone, Debug)]
pub struct Controller<'a> {
    pub tables: &'a ControllerTables,
    pub kernels: &'a KernelSet,
    pub state: ControllerState,
}

impl<'a> Controller<'a> {
    pub fn new(tables: &'a ControllerTables, kernels: &'a KernelSet, state: ControllerState) -> Self {
        Controller { tables, kernels, state }
    }

    /// One controller step at the plant time; `dt` is the time since the previous step.
    pub fn step(&mut self, plant: &PlantState, dt: f64) -> Result<(ControlOutput, ErrorSignals)> {
        let sample = self.tables.at(plant.time);
        let mut err = error_pipeline(plant, &sample, &self.state)?;
        let before = self.state.epsilon;
        self.state = integrator_step(&self.state, err.grad_error_at_0, dt);
        let d_eps = self.state.epsilon - before;
        if d_eps != 0.0 {
            for a in 0..err.w_tilde[0].len() {
                err.w_tilde[0][a] -= sample.n[0][1][a] * d_eps;
                err.w_tilde[1][a] -= sample.n[1][1][a] * d_eps;
            }
            err.x[1] = self.state.epsilon;
        }
        let traces = self.kernels.traces_at(plant.time);
        let out = control_law(&err, &sample, &traces)?;
        Ok((out, err))
    }

    /// Reference input only.
    pub fn feedforward(&self, t: f64) -> ControlOutput {
        let s = self.tables.at(t);
        ControlOutput { u: s.u_r, u_r: s.u_r, ..Default::default() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::{InterfaceState, Phase, PhaseField};

    fn sample(n: usize) -> TableSample {
        let field = |base: f64, slope: f64| (0..n).map(|a| base + slope * a as f64 / (n - 1) as f64).collect::<Vec<_>>();
        TableSample {
            t: 0.0,
            gamma_r: 0.2,
            gamma_dot_r: 0.0,
            gradient_r: 1700.0,
            u_r: [-12070.0, 12070.0],
            field_r: [field(1511.0, 340.0), field(1511.0, 170.0)],
            h_inv: [vec![1.0; n], vec![1.0; n]],
            n: [[field(0.0, 3.0), field(0.0, 0.5)], [field(0.0, -1.0), field(0.0, 2.0)]],
            p_bar: [[4.0, 1.0], [-2.0, 0.5]],
            q: [0.02, -0.014],
            b: [0.0, 0.0],
            k_gain: [[0.0; 2]; 2],
            lambda: [7e-5, 1e-4],
        }
    }

    fn traces(n: usize) -> KernelTraces {
        KernelTraces {
            t: 0.0,
            dk_dsigma_1: std::array::from_fn(|_| std::array::from_fn(|_| vec![0.0; n])),
            k_end: [[0.0; 2]; 2],
            jump: [[None; 2]; 2],
        }
    }

    fn plant_from(s: &TableSample, gamma: f64) -> PlantState {
        PlantState {
            fields: Phase::BOTH.map(|p| PhaseField { phase: p, values: s.field_r[p.index()].clone() }),
            interface: InterfaceState { gamma, gamma_dot: 0.0 },
            time: 0.0,
        }
    }

    #[test]
    fn zero_error_gives_reference_input() {
        let s = sample(11);
        let err = error_pipeline(&plant_from(&s, s.gamma_r), &s, &ControllerState::default()).unwrap();
        assert!(err.w_tilde.iter().flatten().all(|v| v.abs() < 1e-12));
        let out = control_law(&err, &s, &traces(11)).unwrap();
        assert_eq!(out.u, s.u_r);
    }

    #[test]
    fn ode_state_only() {
        let s = sample(11);
        let x = [1e-3, 0.5];
        let err = ErrorSignals { w_tilde: [vec![0.0; 11], vec![0.0; 11]], x, grad_error_at_0: 0.0 };
        let out = control_law(&err, &s, &traces(11)).unwrap();
        for i in 0..2 {
            let want = -(s.p_bar[i][0] * x[0] + s.p_bar[i][1] * x[1]) / s.q[i];
            assert!((out.u_e[i] - want).abs() < 1e-12 * want.abs());
        }
    }

    #[test]
    fn interface_offset_is_decoupled() {
        let s = sample(11);
        let err = error_pipeline(&plant_from(&s, s.gamma_r + 0.01), &s, &ControllerState::with_epsilon(0.3)).unwrap();
        assert!((err.x[0] - 0.01).abs() < 1e-15);
        assert_eq!(err.x[1], 0.3);
        for a in 0..11 {
            let nx = mat2_vec(&s.n_matrix(a), err.x);
            assert!((err.w_tilde[0][a] + nx[0]).abs() < 1e-12);
            assert!((err.w_tilde[1][a] + nx[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_q_rejected() {
        let mut s = sample(11);
        s.q[1] = 0.0;
        let err = ErrorSignals { w_tilde: [vec![0.0; 11], vec![0.0; 11]], x: [0.0; 2], grad_error_at_0: 0.0 };
        assert!(matches!(control_law(&err, &s, &traces(11)), Err(Error::Synthesis(_))));
    }

    #[test]
    fn integrator_constant_input() {
        let mut c = ControllerState::default();
        for _ in 0..11 {
            c = integrator_step(&c, 2.0, 10.0);
        }
        assert!((c.epsilon - 200.0).abs() < 1e-12);
    }

    #[test]
    fn integrator_second_order() {
        let run = |dt: f64| {
            let mut c = ControllerState::default();
            let n = (std::f64::consts::PI / dt).round() as usize;
            for k in 0..=n {
                c = integrator_step(&c, (k as f64 * dt).sin(), dt);
            }
            (c.epsilon - 2.0).abs()
        };
        let (e1, e2) = (run(std::f64::consts::PI / 50.0), run(std::f64::consts::PI / 100.0));
        let order = (e1 / e2).log2();
        assert!((order - 2.0).abs() < 0.05, "order {order}");
    }
}
