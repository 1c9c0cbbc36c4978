//! Front-fixed plant simulator, scenario runner and trajectory metrics.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::control::{target_boundary_residual, ControlOutput, Controller, ControllerState};
use crate::error::{Error, Result};
use crate::numerics::{solve_tridiagonal, unit_grid};
use crate::physics::{
    interface_velocity, lambda_bar, psi_bar, q_bar, GeometryParams, InterfaceState, MaterialParams, Phase, PhaseField,
    PlantState,
};
use crate::reference::{perturbed_initial_state, ReferenceBundle};
use crate::synthesis::ControllerSynthesis;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stepper {
    /// Backward Euler for diffusion, explicit convection and interface update.
    ImplicitDiffusion,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    ClosedLoop,
    Feedforward,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::ClosedLoop => "closed-loop",
            Mode::Feedforward => "feedforward",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub elements_per_phase: usize,
    pub dt_plant_s: f64,
    pub dt_controller_s: f64,
    /// Defaults to the reference duration.
    pub duration_s: Option<f64>,
    pub snapshot_interval_s: f64,
    pub stepper: Stepper,
    pub delta_gamma_0_m: f64,
    pub delta_gamma_dot_0_m_per_s: f64,
    pub delta_grad_0_k_per_m: f64,
    pub epsilon_0: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            elements_per_phase: 256,
            dt_plant_s: 0.1,
            dt_controller_s: 10.0,
            duration_s: None,
            snapshot_interval_s: 300.0,
            stepper: Stepper::ImplicitDiffusion,
            delta_gamma_0_m: -0.01,
            delta_gamma_dot_0_m_per_s: -3e-3 / 3600.0,
            delta_grad_0_k_per_m: 500.0,
            epsilon_0: 0.0,
        }
    }
}

impl SimConfig {
    pub fn unperturbed() -> Self {
        SimConfig { delta_gamma_0_m: 0.0, delta_gamma_dot_0_m_per_s: 0.0, delta_grad_0_k_per_m: 0.0, ..Default::default() }
    }

    pub fn steps_per_control(&self) -> usize {
        (self.dt_controller_s / self.dt_plant_s).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.elements_per_phase < 4 {
            return Err(Error::Config(format!("elements_per_phase must be >= 4, got {}", self.elements_per_phase)));
        }
        if !(self.dt_plant_s > 0.0 && self.dt_controller_s > 0.0 && self.snapshot_interval_s > 0.0) {
            return Err(Error::Config("time steps must be positive".into()));
        }
        let ratio = self.dt_controller_s / self.dt_plant_s;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 1.0 {
            return Err(Error::Config(format!(
                "dt_controller ({}) must be an integer multiple of dt_plant ({})",
                self.dt_controller_s, self.dt_plant_s
            )));
        }
        let snaps = self.snapshot_interval_s / self.dt_controller_s;
        if (snaps - snaps.round()).abs() > 1e-9 || snaps.round() < 1.0 {
            return Err(Error::Config("snapshot interval must be a multiple of dt_controller".into()));
        }
        if let Some(d) = self.duration_s {
            if !(d > 0.0) {
                return Err(Error::Config(format!("duration must be positive, got {d}")));
            }
        }
        Ok(())
    }
}

/// One plant step of length `dt` with inputs held constant.
pub fn step_plant(
    state: &PlantState,
    u: [f64; 2],
    dt: f64,
    params: &MaterialParams,
    geometry: &GeometryParams,
) -> Result<PlantState> {
    let gamma = state.interface.gamma;
    geometry.check_interface(gamma).map_err(|e| abort(state.time, e))?;
    let gamma_dot = interface_velocity(state, params, geometry);
    let fields = Phase::BOTH.map(|p| -> Result<PhaseField> {
        let v = &state.field(p).values;
        let n = v.len() - 1;
        let h = 1.0 / n as f64;
        let r = dt * lambda_bar(p, gamma, params, geometry) / (h * h);
        let ghost_flux = 2.0 * h * q_bar(p, gamma, params, geometry) * u[p.index()];
        // unknowns: nodes 1..=n
        let mut lower = vec![-r; n];
        let diag = vec![1.0 + 2.0 * r; n];
        let mut upper = vec![-r; n];
        let mut rhs = vec![0.0; n];
        for j in 1..=n {
            let sigma = j as f64 * h;
            let right = if j == n { v[n - 1] + ghost_flux } else { v[j + 1] };
            let conv = psi_bar(p, sigma, gamma, gamma_dot, geometry) * (right - v[j - 1]) / (2.0 * h);
            rhs[j - 1] = v[j] + dt * conv;
        }
        rhs[0] += r * v[0];
        lower[0] = 0.0;
        // ghost node: T_{n+1} = T_{n-1} + ghost_flux
        lower[n - 1] = -2.0 * r;
        rhs[n - 1] += r * ghost_flux;
        upper[n - 1] = 0.0;
        let sol = solve_tridiagonal(&lower, &diag, &upper, &rhs)
            .ok_or_else(|| Error::SimulationAbort { t: state.time, reason: format!("implicit solve failed in {p:?}") })?;
        let mut values = Vec::with_capacity(n + 1);
        values.push(v[0]);
        values.extend(sol);
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::SimulationAbort { t: state.time, reason: format!("non-finite temperature in {p:?}") });
        }
        Ok(PhaseField { phase: p, values })
    });
    let [f1, f2] = fields;
    let new_gamma = gamma + dt * gamma_dot;
    let mut next = PlantState {
        fields: [f1?, f2?],
        interface: InterfaceState { gamma: new_gamma, gamma_dot },
        time: state.time + dt,
    };
    geometry.check_interface(new_gamma).map_err(|e| abort(next.time, e))?;
    next.interface.gamma_dot = interface_velocity(&next, params, geometry);
    Ok(next)
}

fn abort(t: f64, e: Error) -> Error {
    Error::SimulationAbort { t, reason: e.to_string() }
}

/// Total enthalpy relative to solid at `T_m`: sensible heat plus latent heat of the melt (J/m^2).
pub fn enthalpy(state: &PlantState, params: &MaterialParams, geometry: &GeometryParams) -> f64 {
    let melt_len = geometry.extent(Phase::Melt, state.interface.gamma).abs();
    state.sensible_heat(params, geometry) + params.latent() * melt_len
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub t: f64,
    pub gamma: f64,
    pub gamma_dot: f64,
    pub gamma_r: f64,
    pub grad_1: f64,
    pub grad_r: f64,
    pub u: [f64; 2],
    pub u_r: [f64; 2],
    pub x: [f64; 2],
    pub epsilon: f64,
    pub boundary_residual: f64,
}

impl LogRow {
    pub fn delta_gamma(&self) -> f64 {
        self.gamma - self.gamma_r
    }

    pub fn grad_error(&self) -> f64 {
        self.grad_1 - self.grad_r
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSnapshot {
    pub t: f64,
    pub fields: [Vec<f64>; 2],
    /// `log10 |(T - T_r) / T_r|`, floored.
    pub log_error: [Vec<f64>; 2],
    pub max_abs_error: f64,
    pub enthalpy: f64,
    /// Heat supplied through both heaters since the start (J/m^2).
    pub heat_input: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub mode: Mode,
    pub config_hash: String,
    pub rows: Vec<LogRow>,
    pub snapshots: Vec<FieldSnapshot>,
}

pub const LOG_ERROR_FLOOR: f64 = -16.0;

pub fn log_relative_error(t: f64, t_r: f64) -> f64 {
    let rel = ((t - t_r) / t_r).abs();
    if rel == 0.0 {
        LOG_ERROR_FLOOR
    } else {
        rel.log10().max(LOG_ERROR_FLOOR)
    }
}

/// Run a scenario from the (perturbed) reference initial state.
pub fn run_scenario(
    config: &SimConfig,
    mode: Mode,
    bundle: &ReferenceBundle,
    synthesis: &ControllerSynthesis,
    config_hash: &str,
) -> Result<TrajectoryLog> {
    config.validate()?;
    let params = &bundle.params;
    let geometry = &bundle.geometry;
    let nodes = config.elements_per_phase + 1;
    let duration = config.duration_s.unwrap_or(bundle.duration()).min(bundle.duration());
    let s0 = bundle.sample(0.0)?;
    let mut plant = perturbed_initial_state(
        &s0,
        params,
        geometry,
        nodes,
        config.delta_gamma_0_m,
        config.delta_gamma_dot_0_m_per_s,
        config.delta_grad_0_k_per_m,
    );
    let mut controller = Controller::new(&synthesis.tables, &synthesis.kernels, ControllerState::with_epsilon(config.epsilon_0));
    let sub = config.steps_per_control();
    let n_ctrl = (duration / config.dt_controller_s).round() as usize;
    let snap_every = (config.snapshot_interval_s / config.dt_controller_s).round() as usize;
    let sigma = unit_grid(nodes);
    let mut heat_input = 0.0;
    let mut log = TrajectoryLog { mode, config_hash: config_hash.to_string(), rows: Vec::new(), snapshots: Vec::new() };
    for k in 0..=n_ctrl {
        let t = plant.time;
        let (out, x, eps, residual) = match mode {
            Mode::ClosedLoop => {
                let (out, err) = controller.step(&plant, if k == 0 { 0.0 } else { config.dt_controller_s })?;
                let residual = target_boundary_residual(&err, &synthesis.kernels.traces_at(t));
                (out, err.x, controller.state.epsilon, residual)
            }
            Mode::Feedforward => {
                let out = controller.feedforward(t);
                let ts = synthesis.tables.at(t);
                (out, [plant.interface.gamma - ts.gamma_r, 0.0], 0.0, 0.0)
            }
        };
        log.rows.push(LogRow {
            t,
            gamma: plant.interface.gamma,
            gamma_dot: plant.interface.gamma_dot,
            gamma_r: bundle.gamma_at(t),
            grad_1: plant.interface_gradient(Phase::Crystal, geometry),
            grad_r: bundle.flat.gradient(t),
            u: out.u,
            u_r: out.u_r,
            x,
            epsilon: eps,
            boundary_residual: residual,
        });
        if k % snap_every == 0 {
            log.snapshots.push(snapshot(&plant, bundle, &sigma, heat_input)?);
        }
        if k == n_ctrl {
            break;
        }
        plant = advance(&plant, &out, sub, config.dt_plant_s, params, geometry, &mut heat_input)?;
    }
    Ok(log)
}

fn advance(
    plant: &PlantState,
    out: &ControlOutput,
    steps: usize,
    dt: f64,
    params: &MaterialParams,
    geometry: &GeometryParams,
    heat_input: &mut f64,
) -> Result<PlantState> {
    let mut p = plant.clone();
    for _ in 0..steps {
        p = step_plant(&p, out.u, dt, params, geometry)?;
        *heat_input += dt * (out.u[0] + out.u[1]);
    }
    Ok(p)
}

fn snapshot(plant: &PlantState, bundle: &ReferenceBundle, sigma: &[f64], heat_input: f64) -> Result<FieldSnapshot> {
    let r = bundle.sample(plant.time)?;
    let mut max_abs_error = 0.0f64;
    let log_error = Phase::BOTH.map(|p| {
        let tr = r.field_values(p, sigma);
        plant
            .field(p)
            .values
            .iter()
            .zip(&tr)
            .map(|(t, t_r)| {
                max_abs_error = max_abs_error.max((t - t_r).abs());
                log_relative_error(*t, *t_r)
            })
            .collect()
    });
    Ok(FieldSnapshot {
        t: plant.time,
        fields: [plant.fields[0].values.clone(), plant.fields[1].values.clone()],
        log_error,
        max_abs_error,
        enthalpy: enthalpy(plant, &bundle.params, &bundle.geometry),
        heat_input,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mode: Option<Mode>,
    pub settling_time_s: Option<f64>,
    pub undershoot_k_per_m: f64,
    pub max_abs_delta_gamma_m: f64,
    pub final_delta_gamma_m: f64,
    pub max_abs_grad_error_k_per_m: f64,
    pub max_field_error_k: f64,
    pub max_input_deviation_rel: f64,
    pub max_enthalpy_error_rel: f64,
}

pub const SETTLE_GAMMA_M: f64 = 1e-3;
pub const SETTLE_GRAD_K_PER_M: f64 = 50.0;

/// First time after which both errors stay inside the bands for good.
pub fn settling_time(t: &[f64], delta_gamma: &[f64], grad_error: &[f64], gamma_band: f64, grad_band: f64) -> Option<f64> {
    let mut settle = None;
    for k in (0..t.len()).rev() {
        if delta_gamma[k].abs() < gamma_band && grad_error[k].abs() < grad_band {
            settle = Some(t[k]);
        } else {
            break;
        }
    }
    settle
}

/// Largest relative enthalpy balance error over consecutive snapshot intervals.
pub fn enthalpy_errors(snapshots: &[FieldSnapshot], rows: &[LogRow]) -> Vec<f64> {
    snapshots
        .windows(2)
        .map(|w| {
            let d_e = w[1].enthalpy - w[0].enthalpy;
            let d_q = w[1].heat_input - w[0].heat_input;
            let throughput: f64 = rows
                .windows(2)
                .filter(|r| r[0].t >= w[0].t && r[1].t <= w[1].t)
                .map(|r| (r[1].t - r[0].t) * (r[0].u[0].abs() + r[0].u[1].abs()))
                .sum();
            let scale = d_e.abs().max(throughput).max(f64::MIN_POSITIVE);
            (d_e - d_q).abs() / scale
        })
        .collect()
}

pub fn metrics(log: &TrajectoryLog) -> Metrics {
    let t: Vec<f64> = log.rows.iter().map(|r| r.t).collect();
    let dg: Vec<f64> = log.rows.iter().map(LogRow::delta_gamma).collect();
    let ge: Vec<f64> = log.rows.iter().map(LogRow::grad_error).collect();
    let u_scale = log.rows.iter().flat_map(|r| r.u_r).fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    Metrics {
        mode: Some(log.mode),
        settling_time_s: settling_time(&t, &dg, &ge, SETTLE_GAMMA_M, SETTLE_GRAD_K_PER_M),
        undershoot_k_per_m: ge.iter().copied().fold(0.0, f64::min),
        max_abs_delta_gamma_m: dg.iter().fold(0.0, |m, v| m.max(v.abs())),
        final_delta_gamma_m: dg.last().copied().unwrap_or(0.0),
        max_abs_grad_error_k_per_m: ge.iter().fold(0.0, |m, v| m.max(v.abs())),
        max_field_error_k: log.snapshots.iter().map(|s| s.max_abs_error).fold(0.0, f64::max),
        max_input_deviation_rel: log
            .rows
            .iter()
            .flat_map(|r| [(r.u[0] - r.u_r[0]).abs(), (r.u[1] - r.u_r[1]).abs()])
            .fold(0.0, f64::max)
            / u_scale,
        max_enthalpy_error_rel: enthalpy_errors(&log.snapshots, &log.rows).into_iter().fold(0.0, f64::max),
    }
}

pub const LOG_HEADER: &str = "# vgf-track trajectory-log v1";
pub const FIELD_HEADER: &str = "# vgf-track field-log v1";
const ROW_COLUMNS: &str = "t_s,gamma_m,gamma_dot_m_per_s,gamma_r_m,grad_1_k_per_m,grad_r_k_per_m,u_1_w_per_m2,u_2_w_per_m2,u_1r_w_per_m2,u_2r_w_per_m2,x_1_m,x_2,epsilon,boundary_residual";

fn fmt_f(v: f64) -> String {
    format!("{v:e}")
}

impl TrajectoryLog {
    /// Scalar series as CSV.
    pub fn rows_csv(&self) -> String {
        let mut s = format!("{LOG_HEADER} config={} mode={}\n{ROW_COLUMNS}\n", self.config_hash, self.mode.name());
        for r in &self.rows {
            let vals = [
                r.t, r.gamma, r.gamma_dot, r.gamma_r, r.grad_1, r.grad_r, r.u[0], r.u[1], r.u_r[0], r.u_r[1], r.x[0], r.x[1], r.epsilon,
                r.boundary_residual,
            ];
            let line: Vec<String> = vals.iter().map(|v| fmt_f(*v)).collect();
            let _ = writeln!(s, "{}", line.join(","));
        }
        s
    }

    /// Field snapshots as CSV: one line per snapshot, phase and quantity.
    pub fn fields_csv(&self) -> String {
        let mut s = format!("{FIELD_HEADER} config={} mode={}\n", self.config_hash, self.mode.name());
        s.push_str("t_s,kind,phase,enthalpy_j_per_m2,heat_input_j_per_m2,max_abs_error_k,values...\n");
        for snap in &self.snapshots {
            for (kind, data) in [("temperature", &snap.fields), ("log_error", &snap.log_error)] {
                for (p, vals) in data.iter().enumerate() {
                    let body: Vec<String> = vals.iter().map(|v| fmt_f(*v)).collect();
                    let _ = writeln!(
                        s,
                        "{},{kind},{},{},{},{},{}",
                        fmt_f(snap.t),
                        p + 1,
                        fmt_f(snap.enthalpy),
                        fmt_f(snap.heat_input),
                        fmt_f(snap.max_abs_error),
                        body.join(",")
                    );
                }
            }
        }
        s
    }

    pub fn parse(rows_csv: &str, fields_csv: &str) -> Result<TrajectoryLog> {
        let (hash, mode) = parse_header(rows_csv.lines().next().unwrap_or(""), LOG_HEADER, 1)?;
        let mut rows = Vec::new();
        for (k, line) in rows_csv.lines().enumerate().skip(2) {
            if line.trim().is_empty() {
                continue;
            }
            let v = parse_numbers(line, k + 1)?;
            if v.len() != 14 {
                return Err(Error::Artifact(format!("line {}: expected 14 columns, found {}", k + 1, v.len())));
            }
            rows.push(LogRow {
                t: v[0],
                gamma: v[1],
                gamma_dot: v[2],
                gamma_r: v[3],
                grad_1: v[4],
                grad_r: v[5],
                u: [v[6], v[7]],
                u_r: [v[8], v[9]],
                x: [v[10], v[11]],
                epsilon: v[12],
                boundary_residual: v[13],
            });
        }
        for w in rows.windows(2) {
            if !(w[1].t > w[0].t) {
                return Err(Error::Artifact(format!("non-monotone time stamps at t = {}", w[1].t)));
            }
        }
        let (fhash, _) = parse_header(fields_csv.lines().next().unwrap_or(""), FIELD_HEADER, 1)?;
        if fhash != hash {
            return Err(Error::Artifact(format!("field log hash {fhash} does not match trajectory log hash {hash}")));
        }
        let mut snapshots: Vec<FieldSnapshot> = Vec::new();
        for (k, line) in fields_csv.lines().enumerate().skip(2) {
            if line.trim().is_empty() {
                continue;
            }
            let lineno = k + 1;
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() < 7 {
                return Err(Error::Artifact(format!("line {lineno}: truncated field record")));
            }
            let num = |s: &str| s.trim().parse::<f64>().map_err(|_| Error::Artifact(format!("line {lineno}: bad number {s:?}")));
            let t = num(parts[0])?;
            let kind = parts[1];
            let phase: usize = parts[2].parse().map_err(|_| Error::Artifact(format!("line {lineno}: bad phase")))?;
            if !(1..=2).contains(&phase) {
                return Err(Error::Artifact(format!("line {lineno}: bad phase {phase}")));
            }
            let values = parts[6..].iter().map(|s| num(s)).collect::<Result<Vec<_>>>()?;
            if snapshots.last().map(|s| s.t) != Some(t) {
                snapshots.push(FieldSnapshot {
                    t,
                    fields: [Vec::new(), Vec::new()],
                    log_error: [Vec::new(), Vec::new()],
                    max_abs_error: num(parts[5])?,
                    enthalpy: num(parts[3])?,
                    heat_input: num(parts[4])?,
                });
            }
            let snap = snapshots.last_mut().expect("pushed");
            match kind {
                "temperature" => snap.fields[phase - 1] = values,
                "log_error" => snap.log_error[phase - 1] = values,
                other => return Err(Error::Artifact(format!("line {lineno}: unknown kind {other:?}"))),
            }
        }
        Ok(TrajectoryLog { mode, config_hash: hash, rows, snapshots })
    }
}

fn parse_header(line: &str, prefix: &str, lineno: usize) -> Result<(String, Mode)> {
    let rest = line
        .strip_prefix(prefix)
        .ok_or_else(|| Error::Artifact(format!("line {lineno}: missing header {prefix:?}")))?;
    let mut hash = None;
    let mut mode = None;
    for tok in rest.split_whitespace() {
        if let Some(h) = tok.strip_prefix("config=") {
            hash = Some(h.to_string());
        } else if let Some(m) = tok.strip_prefix("mode=") {
            mode = Some(match m {
                "closed-loop" => Mode::ClosedLoop,
                "feedforward" => Mode::Feedforward,
                _ => return Err(Error::Artifact(format!("line {lineno}: unknown mode {m:?}"))),
            });
        }
    }
    match (hash, mode) {
        (Some(h), Some(m)) => Ok((h, m)),
        _ => Err(Error::Artifact(format!("line {lineno}: header lacks config hash or mode"))),
    }
}

fn parse_numbers(line: &str, lineno: usize) -> Result<Vec<f64>> {
    line.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| Error::Artifact(format!("line {lineno}: bad number {s:?}"))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::steady_state;

    fn setup() -> (MaterialParams, GeometryParams) {
        (MaterialParams::gaas(), GeometryParams::default())
    }

    #[test]
    fn steady_state_is_preserved() {
        let (p, g) = setup();
        let s = steady_state(0.2, 1700.0, 65, &p, &g).unwrap();
        let u = [-p.k_1_w_per_m_k * 1700.0, p.k_1_w_per_m_k * 1700.0];
        let mut st = s.clone();
        for _ in 0..100 {
            st = step_plant(&st, u, 1.0, &p, &g).unwrap();
        }
        for ph in 0..2 {
            for (a, b) in st.fields[ph].values.iter().zip(&s.fields[ph].values) {
                assert!((a - b).abs() < 1e-9 * 100.0, "{a} {b}");
            }
        }
        assert!((st.interface.gamma - 0.2).abs() < 1e-15);
        assert!(st.interface.gamma_dot.abs() < 1e-15);
    }

    #[test]
    fn interface_leaving_domain_aborts() {
        let (p, g) = setup();
        let mut s = steady_state(0.2, 1700.0, 17, &p, &g).unwrap();
        s.interface.gamma = 0.46;
        assert!(matches!(step_plant(&s, [0.0, 0.0], 1.0, &p, &g), Err(Error::SimulationAbort { .. })));
    }

    #[test]
    fn settling_time_of_exponential_decay() {
        let tau = 3600.0;
        let t: Vec<f64> = (0..=3000).map(|k| k as f64 * 10.0).collect();
        let dg: Vec<f64> = t.iter().map(|t| 0.01 * (-t / tau).exp()).collect();
        let ge = vec![0.0; t.len()];
        let got = settling_time(&t, &dg, &ge, 1e-3, 50.0).unwrap();
        let want = tau * 10f64.ln();
        assert!((got - want).abs() <= 10.0, "{got} {want}");
        assert_eq!(settling_time(&t, &vec![0.0; t.len()], &ge, 1e-3, 50.0), Some(0.0));
        assert_eq!(settling_time(&t, &vec![1.0; t.len()], &ge, 1e-3, 50.0), None);
    }

    #[test]
    fn log_error_floor() {
        assert_eq!(log_relative_error(1500.0, 1500.0), LOG_ERROR_FLOOR);
        assert!((log_relative_error(1515.0, 1500.0) + 2.0).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::default().validate().is_ok());
        assert!(SimConfig { dt_controller_s: 2.55, ..Default::default() }.validate().is_err());
        assert!(SimConfig { dt_plant_s: 3.0, ..Default::default() }.validate().is_err());
        assert!(SimConfig { elements_per_phase: 2, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn csv_roundtrip() {
        let row = |t: f64| LogRow {
            t,
            gamma: 0.2 + t * 1e-6,
            gamma_dot: 1e-6,
            gamma_r: 0.2,
            grad_1: 1700.0,
            grad_r: 1700.0,
            u: [-12070.0, 12070.0],
            u_r: [-12070.0, 12070.0],
            x: [t * 1e-6, 0.5],
            epsilon: 0.5,
            boundary_residual: 0.1,
        };
        let snap = |t: f64| FieldSnapshot {
            t,
            fields: [vec![1511.0, 1400.0 + 1.0 / 3.0], vec![1511.0, 1600.0]],
            log_error: [vec![-16.0, -3.25], vec![-16.0, -1.0]],
            max_abs_error: 0.25,
            enthalpy: 1e9,
            heat_input: t,
        };
        let log = TrajectoryLog {
            mode: Mode::ClosedLoop,
            config_hash: "abc123".into(),
            rows: vec![row(0.0), row(10.0)],
            snapshots: vec![snap(0.0), snap(300.0)],
        };
        let back = TrajectoryLog::parse(&log.rows_csv(), &log.fields_csv()).unwrap();
        assert_eq!(back, log);
        assert_eq!(metrics(&back), metrics(&log));
        let bad = log.rows_csv().replace("1e1,", "zz,");
        match TrajectoryLog::parse(&bad, &log.fields_csv()) {
            Err(Error::Artifact(m)) => assert!(m.contains("line 4"), "{m}"),
            other => panic!("{other:?}"),
        }
    }
}
