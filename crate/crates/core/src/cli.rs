//! Command-line pipeline: plan, precompute, simulate, report.
//!
//! Files in the output directory:
//!
//! | file | written by |
//! |---|---|
//! | `reference.vgft`, `plan_summary.json` | `plan` |
//! | `controller.vgft`, `synthesis_report.json` | `precompute` |
//! | `log_<mode>.csv`, `fields_<mode>.csv` | `simulate` |
//! | `metrics.json`, `errors_<mode>.csv`, `epsilon_<mode>.csv` | `report` |

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use serde::{Deserialize, Serialize};

use crate::artifact::{pack, unpack, Container, ReferenceRecord, CONTROLLER_KIND, REFERENCE_KIND};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::reference::ReferenceBundle;
use crate::sim::{metrics, run_scenario, Metrics, Mode, TrajectoryLog};
use crate::synthesis::{precompute, ControllerSynthesis};

pub const REFERENCE_FILE: &str = "reference.vgft";
pub const CONTROLLER_FILE: &str = "controller.vgft";

#[derive(Debug, Parser)]
#[command(name = "vgf-track", version, about = "Tracking control of vertical gradient freeze crystal growth")]
pub struct Cli {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` of the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Accepted for interface stability; every command is deterministic.
    #[arg(long, global = true)]
    pub seedless: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    ClosedLoop,
    Feedforward,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::ClosedLoop => Mode::ClosedLoop,
            ModeArg::Feedforward => Mode::Feedforward,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Plan the reference trajectory and write the reference artifact.
    Plan,
    /// Synthesize decoupling, gains and kernels from the reference artifact.
    Precompute,
    /// Run the growth scenario; repeat `--mode` or separate by commas for both.
    Simulate {
        #[arg(long, value_enum, value_delimiter = ',', default_value = "closed-loop")]
        mode: Vec<ModeArg>,
    },
    /// Metrics and plot-ready series from the simulation logs.
    Report,
}

/// Resolved configuration and output directory.
pub struct Context {
    pub config: RunConfig,
    pub hash: String,
    pub out: PathBuf,
}

impl Context {
    pub fn new(config: Option<&Path>, out: Option<&Path>) -> Result<Context> {
        let config = match config {
            Some(p) => RunConfig::load(p)?,
            None => {
                let c = RunConfig::default();
                c.validate()?;
                c
            }
        };
        let out = out
            .map(Path::to_path_buf)
            .or_else(|| config.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        std::fs::create_dir_all(&out)
            .map_err(|e| Error::Config(format!("cannot create output directory {}: {e}", out.display())))?;
        let hash = config.hash();
        Ok(Context { config, hash, out })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write(&self, name: &str, contents: &str) -> Result<()> {
        std::fs::write(self.path(name), contents)?;
        info!("wrote {}", self.path(name).display());
        Ok(())
    }

    pub fn load_reference(&self) -> Result<ReferenceBundle> {
        let c = Container::load_verified(&self.path(REFERENCE_FILE), REFERENCE_KIND, &self.hash)?;
        unpack::<ReferenceRecord>(&c)?.into_bundle()
    }

    pub fn load_controller(&self) -> Result<ControllerSynthesis> {
        let c = Container::load_verified(&self.path(CONTROLLER_FILE), CONTROLLER_KIND, &self.hash)?;
        unpack(&c)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanSummary {
    pub config_hash: String,
    pub duration_h: f64,
    pub growth_length_mm: f64,
    pub plateau_velocity_mm_per_h: f64,
    pub gradient_k_per_cm: f64,
    pub gevrey_order: f64,
    pub u_r_start_w_per_m2: [f64; 2],
    pub u_r_end_w_per_m2: [f64; 2],
}

impl PlanSummary {
    pub fn new(bundle: &ReferenceBundle, hash: &str) -> PlanSummary {
        let n = bundle.gamma.len();
        let v_max = bundle.gamma_dot.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        PlanSummary {
            config_hash: hash.into(),
            duration_h: bundle.duration() / 3600.0,
            growth_length_mm: (bundle.gamma[n - 1] - bundle.gamma[0]) * 1e3,
            plateau_velocity_mm_per_h: v_max * 3.6e6,
            gradient_k_per_cm: bundle.flat.gradient(0.0) / 100.0,
            gevrey_order: bundle.flat.order,
            u_r_start_w_per_m2: [bundle.inputs[0][0], bundle.inputs[1][0]],
            u_r_end_w_per_m2: [bundle.inputs[0][n - 1], bundle.inputs[1][n - 1]],
        }
    }

    pub fn text(&self) -> String {
        format!(
            "growth length      {:.2} mm over {:.1} h\n\
             plateau velocity   {:.3} mm/h\n\
             gradient setpoint  {:.2} K/cm\n\
             Gevrey order       {}\n\
             u_r start          [{:.1}, {:.1}] W/m^2\n\
             u_r end            [{:.1}, {:.1}] W/m^2\n\
             config             {}",
            self.growth_length_mm,
            self.duration_h,
            self.plateau_velocity_mm_per_h,
            self.gradient_k_per_cm,
            self.gevrey_order,
            self.u_r_start_w_per_m2[0],
            self.u_r_start_w_per_m2[1],
            self.u_r_end_w_per_m2[0],
            self.u_r_end_w_per_m2[1],
            self.config_hash
        )
    }
}

pub fn cmd_plan(ctx: &Context) -> Result<PlanSummary> {
    let bundle = ctx.config.build_references()?;
    let record = ReferenceRecord::new(&bundle, &ctx.config.scenario);
    pack(REFERENCE_KIND, &ctx.hash, &record)?.save(&ctx.path(REFERENCE_FILE))?;
    let summary = PlanSummary::new(&bundle, &ctx.hash);
    ctx.write("plan_summary.json", &serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

pub fn cmd_precompute(ctx: &Context) -> Result<ControllerSynthesis> {
    let bundle = ctx.load_reference()?;
    let synthesis = precompute(&bundle, &ctx.config.synthesis_options())?;
    pack(CONTROLLER_KIND, &ctx.hash, &synthesis)?.save(&ctx.path(CONTROLLER_FILE))?;
    ctx.write("synthesis_report.json", &serde_json::to_string_pretty(&synthesis.report)?)?;
    Ok(synthesis)
}

pub fn log_file(mode: Mode) -> String {
    format!("log_{}.csv", mode.name())
}

pub fn fields_file(mode: Mode) -> String {
    format!("fields_{}.csv", mode.name())
}

pub fn cmd_simulate(ctx: &Context, modes: &[Mode]) -> Result<Vec<TrajectoryLog>> {
    let bundle = ctx.load_reference()?;
    let synthesis = ctx.load_controller()?;
    let mut logs = Vec::new();
    for &mode in modes {
        info!("simulating {}", mode.name());
        let log = run_scenario(&ctx.config.simulation, mode, &bundle, &synthesis, &ctx.hash)?;
        ctx.write(&log_file(mode), &log.rows_csv())?;
        ctx.write(&fields_file(mode), &log.fields_csv())?;
        logs.push(log);
    }
    Ok(logs)
}

/// Logs present in the output directory.
pub fn read_logs(ctx: &Context) -> Result<Vec<TrajectoryLog>> {
    let mut logs = Vec::new();
    for mode in [Mode::ClosedLoop, Mode::Feedforward] {
        let rows = ctx.path(&log_file(mode));
        if !rows.exists() {
            continue;
        }
        let fields = ctx.path(&fields_file(mode));
        let log = TrajectoryLog::parse(&std::fs::read_to_string(&rows)?, &std::fs::read_to_string(&fields)?)?;
        if log.config_hash != ctx.hash {
            return Err(Error::Artifact(format!(
                "{} was produced by config {}, current config is {}",
                rows.display(),
                log.config_hash,
                ctx.hash
            )));
        }
        logs.push(log);
    }
    if logs.is_empty() {
        return Err(Error::Artifact(format!("no simulation logs in {}", ctx.out.display())));
    }
    Ok(logs)
}

/// `t, delta_gamma, gradient error, input deviations`.
pub fn error_series_csv(log: &TrajectoryLog) -> String {
    let mut s = String::from("t_s,delta_gamma_m,grad_error_k_per_m,delta_u_1_w_per_m2,delta_u_2_w_per_m2\n");
    for r in &log.rows {
        let _ = writeln!(
            s,
            "{:e},{:e},{:e},{:e},{:e}",
            r.t,
            r.delta_gamma(),
            r.grad_error(),
            r.u[0] - r.u_r[0],
            r.u[1] - r.u_r[1]
        );
    }
    s
}

/// Logarithmic relative error of both phases: one row per snapshot, the
/// crystal nodes followed by the melt nodes.
pub fn epsilon_matrix_csv(log: &TrajectoryLog) -> String {
    let mut s = String::new();
    if let Some(first) = log.snapshots.first() {
        let mut head = vec!["t_s".to_string()];
        for (p, vals) in first.log_error.iter().enumerate() {
            let n = vals.len();
            head.extend((0..n).map(|a| format!("eps_{}(sigma={:.6})", p + 1, a as f64 / (n - 1) as f64)));
        }
        let _ = writeln!(s, "{}", head.join(","));
    }
    for snap in &log.snapshots {
        let vals: Vec<String> =
            std::iter::once(snap.t).chain(snap.log_error.iter().flatten().copied()).map(|v| format!("{v:e}")).collect();
        let _ = writeln!(s, "{}", vals.join(","));
    }
    s
}

pub fn cmd_report(ctx: &Context) -> Result<Vec<Metrics>> {
    let logs = read_logs(ctx)?;
    let all: Vec<Metrics> = logs.iter().map(metrics).collect();
    for log in &logs {
        ctx.write(&format!("errors_{}.csv", log.mode.name()), &error_series_csv(log))?;
        ctx.write(&format!("epsilon_{}.csv", log.mode.name()), &epsilon_matrix_csv(log))?;
    }
    ctx.write("metrics.json", &serde_json::to_string_pretty(&all)?)?;
    Ok(all)
}

pub fn run(cli: &Cli) -> Result<()> {
    let ctx = Context::new(cli.config.as_deref(), cli.out.as_deref())?;
    match &cli.command {
        Command::Plan => {
            let summary = cmd_plan(&ctx)?;
            println!("{}", summary.text());
        }
        Command::Precompute => {
            let s = cmd_precompute(&ctx)?;
            let r = &s.report;
            println!("decoupling residual  {:.3e}", r.decoupling_residual);
            println!("gain error           {:.3e}", r.max_gain_error);
            for snap in &r.snapshots {
                println!(
                    "t = {:7.0} s  {:?}  kernel residual {:.2e}  trace error {:.2e}  D upper {}  iterations {}",
                    snap.t, snap.ordering, snap.pde_residual, snap.trace_error, snap.d_upper, snap.iterations
                );
            }
        }
        Command::Simulate { mode } => {
            let mut modes: Vec<Mode> = mode.iter().map(|&m| m.into()).collect();
            modes.dedup();
            for log in cmd_simulate(&ctx, &modes)? {
                let m = metrics(&log);
                println!(
                    "{}: final delta_gamma {:.3} mm, settling {}",
                    log.mode.name(),
                    m.final_delta_gamma_m * 1e3,
                    m.settling_time_s.map_or("not reached".to_string(), |t| format!("{:.2} h", t / 3600.0))
                );
            }
        }
        Command::Report => {
            for m in cmd_report(&ctx)? {
                println!("{}", serde_json::to_string(&m)?);
            }
        }
    }
    Ok(())
}
