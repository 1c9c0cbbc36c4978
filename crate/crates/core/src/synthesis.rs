//! Offline synthesis: per-time tables of the decoupling and boundary data on
//! the controller grid, and the kernel snapshots.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decoupling::{check_divergence, choose_gain, check_hurwitz, divergence_ratios, mat2_mul, solve_decoupling, DecouplingSolution, Mat2};
use crate::error::{Error, Result};
use crate::kernel::{build_kernel_set, pde_residual, snapshot_times, trace_identity_error, KernelOptions, KernelProblem, KernelSet, TargetParams};
use crate::linearization::{extended_at, series_mat_eval, ExtendedSystemMatrices, HopfColeFactors, LambdaOrdering};
use crate::numerics::unit_grid;
use crate::physics::Phase;
use crate::reference::ReferenceBundle;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthesisOptions {
    pub truncation: usize,
    pub f_bar: Mat2,
    pub target: TargetParams,
    pub table_dt_s: f64,
    pub n_snapshots: usize,
    pub kernel: KernelOptions,
    pub divergence_j_min: usize,
    pub divergence_threshold: f64,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        SynthesisOptions {
            truncation: 20,
            f_bar: [[-2e-4, 0.0], [0.0, -2e-4]],
            target: TargetParams::default(),
            table_dt_s: 60.0,
            n_snapshots: 10,
            kernel: KernelOptions::default(),
            divergence_j_min: 10,
            divergence_threshold: 50.0,
        }
    }
}

impl SynthesisOptions {
    pub fn validate(&self) -> Result<()> {
        check_hurwitz(&self.f_bar)?;
        self.target.validate()?;
        if self.truncation < 4 || self.truncation % 2 != 0 {
            return Err(Error::Config(format!("truncation must be even and >= 4, got {}", self.truncation)));
        }
        if !(self.table_dt_s > 0.0) || self.n_snapshots == 0 || self.kernel.n_sigma < 5 || self.kernel.refine == 0 {
            return Err(Error::Config("synthesis grids must be positive".into()));
        }
        Ok(())
    }
}

/// Linearization, Hopf-Cole and decoupling at one instant.
pub struct InstantSynthesis {
    pub hc: HopfColeFactors,
    pub m: ExtendedSystemMatrices,
    pub dec: DecouplingSolution,
}

pub fn synthesize_at(bundle: &ReferenceBundle, options: &SynthesisOptions, t: f64) -> Result<InstantSynthesis> {
    let sample = bundle.sample(t)?;
    let (_, hc, m) = extended_at(&sample, &bundle.params, &bundle.geometry)?;
    let gain = choose_gain(&m, &options.f_bar)?;
    let dec = solve_decoupling(&m, &gain, options.truncation)?;
    Ok(InstantSynthesis { hc, m, dec })
}

/// Everything the controller reads at one table time, on the controller grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TableSample {
    pub t: f64,
    pub gamma_r: f64,
    pub gamma_dot_r: f64,
    pub gradient_r: f64,
    pub u_r: [f64; 2],
    /// `T_i,r(sigma_a)`.
    pub field_r: [Vec<f64>; 2],
    pub h_inv: [Vec<f64>; 2],
    /// `N_ij(sigma_a)`.
    pub n: [[Vec<f64>; 2]; 2],
    pub p_bar: Mat2,
    pub q: [f64; 2],
    pub b: [f64; 2],
    pub k_gain: Mat2,
    pub lambda: [f64; 2],
}

impl TableSample {
    fn build(bundle: &ReferenceBundle, options: &SynthesisOptions, t: f64) -> Result<TableSample> {
        let sample = bundle.sample(t)?;
        let (_, hc, m) = extended_at(&sample, &bundle.params, &bundle.geometry)?;
        let gain = choose_gain(&m, &options.f_bar)?;
        let dec = solve_decoupling(&m, &gain, options.truncation)?;
        let sigma = unit_grid(options.kernel.n_sigma);
        let nv: Vec<Mat2> = sigma.iter().map(|&s| dec.n_at(s)).collect();
        Ok(TableSample {
            t,
            gamma_r: sample.gamma.value(),
            gamma_dot_r: sample.gamma_dot(),
            gradient_r: sample.gradient.value(),
            u_r: sample.inputs(&bundle.params),
            field_r: Phase::BOTH.map(|p| sample.field_values(p, &sigma)),
            h_inv: Phase::BOTH.map(|p| sigma.iter().map(|&s| hc.phase(p).h_inv.eval(s)).collect()),
            n: std::array::from_fn(|i| std::array::from_fn(|j| nv.iter().map(|v| v[i][j]).collect())),
            p_bar: dec.p_bar(&m),
            q: [m.q[0].value(), m.q[1].value()],
            b: [m.b[0].value(), m.b[1].value()],
            k_gain: gain.values(),
            lambda: m.lambdas(),
        })
    }

    pub fn n_matrix(&self, a: usize) -> Mat2 {
        [[self.n[0][0][a], self.n[0][1][a]], [self.n[1][0][a], self.n[1][1][a]]]
    }
}

fn lerp(a: f64, b: f64, s: f64) -> f64 {
    a + s * (b - a)
}

fn lerp_vec(a: &[f64], b: &[f64], s: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| lerp(*x, *y, s)).collect()
}

fn lerp_mat(a: &Mat2, b: &Mat2, s: f64) -> Mat2 {
    std::array::from_fn(|i| std::array::from_fn(|j| lerp(a[i][j], b[i][j], s)))
}

/// Table samples on a uniform time grid, linearly interpolated.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ControllerTables {
    pub t0: f64,
    pub dt: f64,
    pub samples: Vec<TableSample>,
}

impl ControllerTables {
    pub fn n_sigma(&self) -> usize {
        self.samples[0].field_r[0].len()
    }

    pub fn at(&self, t: f64) -> TableSample {
        let n = self.samples.len();
        let pos = ((t - self.t0) / self.dt).clamp(0.0, (n - 1) as f64);
        let i = (pos.floor() as usize).min(n.saturating_sub(2));
        if n == 1 {
            return self.samples[0].clone();
        }
        let s = pos - i as f64;
        let (a, b) = (&self.samples[i], &self.samples[i + 1]);
        if s == 0.0 {
            return a.clone();
        }
        TableSample {
            t,
            gamma_r: lerp(a.gamma_r, b.gamma_r, s),
            gamma_dot_r: lerp(a.gamma_dot_r, b.gamma_dot_r, s),
            gradient_r: lerp(a.gradient_r, b.gradient_r, s),
            u_r: [0, 1].map(|k| lerp(a.u_r[k], b.u_r[k], s)),
            field_r: [0, 1].map(|k| lerp_vec(&a.field_r[k], &b.field_r[k], s)),
            h_inv: [0, 1].map(|k| lerp_vec(&a.h_inv[k], &b.h_inv[k], s)),
            n: std::array::from_fn(|i| std::array::from_fn(|j| lerp_vec(&a.n[i][j], &b.n[i][j], s))),
            p_bar: lerp_mat(&a.p_bar, &b.p_bar, s),
            q: [0, 1].map(|k| lerp(a.q[k], b.q[k], s)),
            b: [0, 1].map(|k| lerp(a.b[k], b.b[k], s)),
            k_gain: lerp_mat(&a.k_gain, &b.k_gain, s),
            lambda: [0, 1].map(|k| lerp(a.lambda[k], b.lambda[k], s)),
        }
    }
}

/// Per-snapshot diagnostics of the kernel solve.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SnapshotReport {
    pub t: f64,
    pub ordering: LambdaOrdering,
    pub lambda: [f64; 2],
    pub iterations: usize,
    pub pde_residual: f64,
    pub trace_error: f64,
    pub d_upper: bool,
    pub d_lower: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SynthesisReport {
    pub decoupling_residual: f64,
    pub divergence_ratios: Vec<(usize, f64)>,
    pub max_gain_error: f64,
    pub snapshots: Vec<SnapshotReport>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ControllerSynthesis {
    pub options: SynthesisOptions,
    pub tables: ControllerTables,
    pub kernels: KernelSet,
    pub problems: Vec<KernelProblem>,
    pub report: SynthesisReport,
}

/// Residual of the decoupling PDE on `n_sigma x times`, relative to the largest
/// term per sample. Time derivatives by central differences over `dt_fd`.
pub fn decoupling_residual(bundle: &ReferenceBundle, options: &SynthesisOptions, times: &[f64], n_sigma: usize, dt_fd: f64) -> Result<f64> {
    let worst = times
        .par_iter()
        .map(|&t| -> Result<f64> {
            let c = synthesize_at(bundle, options, t)?;
            let tp = synthesize_at(bundle, options, t + dt_fd)?;
            let tm = synthesize_at(bundle, options, t - dt_fd)?;
            let k = c.dec.gain.values();
            let fb = options.f_bar;
            let lam = c.m.lambdas();
            let mut res = 0.0f64;
            let mut scale = 0.0f64;
            for s in unit_grid(n_sigma) {
                let (n, dd) = (c.dec.n_at(s), c.dec.ddn_at(s));
                let (np, nm) = (tp.dec.n_at(s), tm.dec.n_at(s));
                let cm = series_mat_eval(&c.m.c, s);
                let r = series_mat_eval(&c.m.r, s);
                let a = [c.m.a[0].eval(s), c.m.a[1].eval(s)];
                let ck = mat2_mul(&cm, &k);
                let nf = mat2_mul(&n, &fb);
                for i in 0..2 {
                    for j in 0..2 {
                        let dot = (np[i][j] - nm[i][j]) / (2.0 * dt_fd);
                        let terms = [lam[i] * dd[i][j], a[i] * n[i][j], -nf[i][j], -ck[i][j], r[i][j]];
                        res = res.max((dot - terms.iter().sum::<f64>()).abs());
                        scale = scale.max(terms.iter().fold(0.0, |m, v| m.max(v.abs())));
                    }
                }
            }
            Ok(if scale > 0.0 { res / scale } else { 0.0 })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(worst.into_iter().fold(0.0, f64::max))
}

pub fn kernel_problems(bundle: &ReferenceBundle, options: &SynthesisOptions) -> Result<Vec<KernelProblem>> {
    snapshot_times(bundle.duration(), options.n_snapshots)
        .par_iter()
        .map(|&t| {
            let s = synthesize_at(bundle, options, t)?;
            Ok(KernelProblem::from_decoupled(&s.m, &s.dec))
        })
        .collect()
}

pub fn precompute(bundle: &ReferenceBundle, options: &SynthesisOptions) -> Result<ControllerSynthesis> {
    options.validate()?;
    let duration = bundle.duration();
    let n_t = (duration / options.table_dt_s).round() as usize + 1;
    let dt = if n_t > 1 { duration / (n_t - 1) as f64 } else { options.table_dt_s };
    log::info!("building {n_t} controller table samples");
    let samples = (0..n_t)
        .into_par_iter()
        .map(|k| TableSample::build(bundle, options, k as f64 * dt))
        .collect::<Result<Vec<_>>>()?;
    let tables = ControllerTables { t0: 0.0, dt, samples };

    let hourly: Vec<f64> = {
        let n = (duration / 3600.0).floor() as usize;
        (0..=n).map(|h| h as f64 * 3600.0).collect()
    };
    let solutions = hourly
        .par_iter()
        .map(|&t| synthesize_at(bundle, options, t).map(|s| s.dec))
        .collect::<Result<Vec<_>>>()?;
    check_divergence(&solutions, options.divergence_j_min, options.divergence_threshold)?;
    let ratios = divergence_ratios(&solutions, options.divergence_j_min);

    let max_gain_error = hourly
        .par_iter()
        .map(|&t| -> Result<f64> {
            let s = synthesize_at(bundle, options, t)?;
            let f = crate::linearization::mat_values(&s.m.f);
            let sk = mat2_mul(&s.m.s_values(), &s.dec.gain.values());
            let mut e = 0.0f64;
            for i in 0..2 {
                for j in 0..2 {
                    e = e.max((f[i][j] - sk[i][j] - options.f_bar[i][j]).abs());
                }
            }
            Ok(e)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);

    let interior: Vec<f64> = (0..50).map(|k| 100.0 + k as f64 * (duration - 200.0).max(0.0) / 49.0).collect();
    let decoupling_residual = if duration > 200.0 { decoupling_residual(bundle, options, &interior, 51, 5.0)? } else { 0.0 };

    log::info!("solving {} kernel snapshots", options.n_snapshots);
    let problems = kernel_problems(bundle, options)?;
    let kernels = build_kernel_set(&problems, &options.target, &options.kernel)?;
    let snapshots = kernels
        .snapshots
        .iter()
        .zip(&problems)
        .map(|(k, p)| {
            let zero = |v: &Vec<f64>| v.iter().all(|x| *x == 0.0);
            SnapshotReport {
                t: k.t,
                ordering: k.ordering,
                lambda: k.lambda,
                iterations: k.iterations,
                pde_residual: pde_residual(k, p),
                trace_error: trace_identity_error(k, p),
                d_upper: zero(&k.d[1][0]) && zero(&k.d[0][0]) && zero(&k.d[1][1]),
                d_lower: zero(&k.d[0][1]) && zero(&k.d[0][0]) && zero(&k.d[1][1]),
            }
        })
        .collect();
    Ok(ControllerSynthesis {
        options: options.clone(),
        tables,
        kernels,
        problems,
        report: SynthesisReport { decoupling_residual, divergence_ratios: ratios, max_gain_error, snapshots },
    })
}
