#![allow(dead_code)]

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use vgf_track::config::RunConfig;
use vgf_track::physics::{GeometryParams, MaterialParams, Phase, PlantState};
use vgf_track::reference::ReferenceBundle;
use vgf_track::sim::{run_scenario, Mode, SimConfig, TrajectoryLog};
use vgf_track::synthesis::{precompute, ControllerSynthesis};

pub struct Fixture {
    pub config: RunConfig,
    pub hash: String,
    pub bundle: ReferenceBundle,
    pub synthesis: ControllerSynthesis,
    /// Perturbed closed loop and its wall-clock time.
    pub closed_loop: TrajectoryLog,
    pub closed_loop_runtime: Duration,
    pub feedforward: TrajectoryLog,
    /// Unperturbed feedforward replay.
    pub replay: TrajectoryLog,
    pub unperturbed_closed_loop: TrajectoryLog,
}

pub fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let config = RunConfig::default();
        config.validate().unwrap();
        let hash = config.hash();
        let bundle = config.build_references().unwrap();
        let synthesis = precompute(&bundle, &config.synthesis_options()).unwrap();
        let run = |sim: &SimConfig, mode| {
            let start = Instant::now();
            (run_scenario(sim, mode, &bundle, &synthesis, &hash).unwrap(), start.elapsed())
        };
        let cases = [
            (config.simulation.clone(), Mode::ClosedLoop),
            (config.simulation.clone(), Mode::Feedforward),
            (SimConfig::unperturbed(), Mode::Feedforward),
            (SimConfig::unperturbed(), Mode::ClosedLoop),
        ];
        let mut logs: Vec<(TrajectoryLog, Duration)> = cases.par_iter().map(|(sim, mode)| run(sim, *mode)).collect();
        let unperturbed_closed_loop = logs.pop().unwrap().0;
        let replay = logs.pop().unwrap().0;
        let feedforward = logs.pop().unwrap().0;
        let (closed_loop, closed_loop_runtime) = logs.pop().unwrap();
        Fixture {
            config,
            hash,
            bundle,
            synthesis,
            closed_loop,
            closed_loop_runtime,
            feedforward,
            replay,
            unperturbed_closed_loop,
        }
    })
}

/// Print one result line and return the verdict.
pub fn verdict(id: &str, name: &str, pass: bool, detail: &str) -> bool {
    println!("{id} {name}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
    pass
}

/// 4-point Lagrange interpolation on a uniform grid `x_k = k h`; extrapolates
/// with the end stencils.
pub fn lagrange4(values: &[f64], h: f64, x: f64) -> f64 {
    let n = values.len();
    let s = x / h;
    let start = ((s.floor() as isize) - 1).clamp(0, n as isize - 4) as usize;
    let mut acc = 0.0;
    for a in start..start + 4 {
        let mut w = 1.0;
        for b in start..start + 4 {
            if a != b {
                w *= (s - b as f64) / (a as f64 - b as f64);
            }
        }
        acc += w * values[a];
    }
    acc
}

/// Two-phase Stefan problem in physical coordinates. Each phase lives on a
/// uniform grid in the distance `s` from the interface; every step runs
/// Crank-Nicolson on the frozen grid, moves the interface with the averaged
/// Stefan velocity and remaps onto the new grid.
pub struct MovingGridOracle {
    pub params: MaterialParams,
    pub geometry: GeometryParams,
    pub gamma: f64,
    /// `T_i(s_k)`, `s_k = k |Gamma_i - gamma| / n`, `k = 0` at the interface.
    pub fields: [Vec<f64>; 2],
    pub time: f64,
}

impl MovingGridOracle {
    /// Resample a plant state (front-fixed nodes) onto `elements` intervals.
    pub fn from_plant(state: &PlantState, elements: usize, params: &MaterialParams, geometry: &GeometryParams) -> Self {
        let fields = [0, 1].map(|i| {
            let v = &state.fields[i].values;
            let h = 1.0 / (v.len() - 1) as f64;
            (0..=elements).map(|k| lagrange4(v, h, k as f64 / elements as f64)).collect()
        });
        MovingGridOracle {
            params: params.clone(),
            geometry: geometry.clone(),
            gamma: state.interface.gamma,
            fields,
            time: state.time,
        }
    }

    fn length(&self, p: Phase, gamma: f64) -> f64 {
        (self.geometry.boundary(p) - gamma).abs()
    }

    /// `dT_i/dz` at the interface.
    fn interface_gradients(&self, fields: &[Vec<f64>; 2], gamma: f64) -> [f64; 2] {
        Phase::BOTH.map(|p| {
            let v = &fields[p.index()];
            let hs = self.length(p, gamma) / (v.len() - 1) as f64;
            let ds = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * hs);
            match p {
                Phase::Crystal => -ds,
                Phase::Melt => ds,
            }
        })
    }

    fn velocity(&self, fields: &[Vec<f64>; 2], gamma: f64) -> f64 {
        let g = self.interface_gradients(fields, gamma);
        (self.params.k_1_w_per_m_k * g[0] - self.params.k_2_w_per_m_k * g[1]) / self.params.latent()
    }

    pub fn step(&mut self, u: [f64; 2], dt: f64) {
        let v_old = self.velocity(&self.fields, self.gamma);
        let diffused: [Vec<f64>; 2] = Phase::BOTH.map(|p| {
            let v = &self.fields[p.index()];
            let n = v.len() - 1;
            let hs = self.length(p, self.gamma) / n as f64;
            let r = self.params.alpha(p) * dt / (hs * hs);
            let flux = u[p.index()] / self.params.k(p);
            // (I - r/2 L) T' = (I + r/2 L) T on k = 1..n, Neumann ghost at k = n
            let mut a = vec![0.0; n];
            let mut b = vec![0.0; n];
            let mut c = vec![0.0; n];
            let mut d = vec![0.0; n];
            for k in 1..=n {
                let row = k - 1;
                let (left, right) = if k == n { (2.0 * v[n - 1], 2.0 * hs * flux) } else { (v[k - 1], v[k + 1]) };
                let lap = if k == n { left - 2.0 * v[n] + right } else { left - 2.0 * v[k] + right };
                b[row] = 1.0 + r;
                d[row] = v[k] + 0.5 * r * lap;
                if k == n {
                    a[row] = -r;
                    d[row] += r * hs * flux;
                } else {
                    a[row] = -0.5 * r;
                    c[row] = -0.5 * r;
                }
            }
            d[0] += 0.5 * r * v[0];
            a[0] = 0.0;
            let mut out = vec![v[0]];
            out.extend(thomas(&a, &b, &c, &d));
            out
        });
        let v_new = self.velocity(&diffused, self.gamma);
        let gamma_new = self.gamma + 0.5 * dt * (v_old + v_new);
        let shift = gamma_new - self.gamma;
        self.fields = Phase::BOTH.map(|p| {
            let v = &diffused[p.index()];
            let n = v.len() - 1;
            let h_old = self.length(p, self.gamma) / n as f64;
            let h_new = self.length(p, gamma_new) / n as f64;
            let mut out: Vec<f64> = (0..=n)
                .map(|k| {
                    let s_new = k as f64 * h_new;
                    let s_old = match p {
                        Phase::Crystal => s_new - shift,
                        Phase::Melt => s_new + shift,
                    };
                    lagrange4(v, h_old, s_old)
                })
                .collect();
            out[0] = self.params.t_m_kelvin;
            out
        });
        self.gamma = gamma_new;
        self.time += dt;
    }

    /// Temperature at physical `z` in phase `p`.
    pub fn temperature(&self, p: Phase, z: f64) -> f64 {
        let v = &self.fields[p.index()];
        let hs = self.length(p, self.gamma) / (v.len() - 1) as f64;
        lagrange4(v, hs, (z - self.gamma).abs())
    }
}

fn thomas(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    cp[0] = c[0] / b[0];
    dp[0] = d[0] / b[0];
    for i in 1..n {
        let m = b[i] - a[i] * cp[i - 1];
        cp[i] = c[i] / m;
        dp[i] = (d[i] - a[i] * dp[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = dp[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = dp[i] - cp[i] * x[i + 1];
    }
    x
}
