//! End-to-end runs of the command-line pipeline on a short scenario.

use std::path::Path;
use std::process::Command;

use vgf_track::cli::{cmd_plan, cmd_precompute, cmd_report, cmd_simulate, read_logs, Context};
use vgf_track::sim::{metrics, Mode, TrajectoryLog};

const BIN: &str = env!("CARGO_BIN_EXE_vgf-track");

/// Ten-hour scenario with a single velocity ramp and a coarse plant.
fn short_config(dir: &Path, perturbed: bool) -> std::path::PathBuf {
    let h = 3600.0;
    let perturb = if perturbed { "" } else { r#", "delta_gamma_0_m": 0.0, "delta_gamma_dot_0_m_per_s": 0.0, "delta_grad_0_k_per_m": 0.0"# };
    let text = format!(
        r#"{{
  "scenario": {{
    "seed_length_m": 0.2,
    "duration_s": {d},
    "gradient_setpoint_k_per_m": 1700.0,
    "velocity": {{"order": 1.9, "windows": [{{"t_start_s": {a}, "t_end_s": {b}, "target": 1.9444444444444444e-6}}]}}
  }},
  "numerics": {{"table_dt_s": 60.0, "kernel_snapshots": 3}},
  "simulation": {{"elements_per_phase": 64, "dt_plant_s": 1.0{perturb}}}
}}"#,
        d = 10.0 * h,
        a = 1.0 * h,
        b = 9.0 * h
    );
    let path = dir.join(if perturbed { "perturbed.json" } else { "steady.json" });
    std::fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str]) -> std::process::Output {
    Command::new(BIN).args(args).env("RUST_LOG", "warn").output().unwrap()
}

#[test]
fn pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path(), true);
    let out = dir.path().join("out");
    let (c, o) = (cfg.to_str().unwrap(), out.to_str().unwrap());

    let plan = run(&["plan", "--config", c, "--out", o, "--seedless"]);
    assert!(plan.status.success(), "{}", String::from_utf8_lossy(&plan.stderr));
    let text = String::from_utf8_lossy(&plan.stdout);
    assert!(text.contains("plateau velocity   7.000 mm/h"), "{text}");
    assert!(text.contains("gradient setpoint  17.00 K/cm"), "{text}");
    assert!(text.contains("Gevrey order       1.9"), "{text}");
    let first = std::fs::read(out.join("reference.vgft")).unwrap();
    assert!(run(&["plan", "--config", c, "--out", o]).status.success());
    assert_eq!(first, std::fs::read(out.join("reference.vgft")).unwrap(), "plan is not deterministic");

    let pre = run(&["precompute", "--config", c, "--out", o]);
    assert!(pre.status.success(), "{}", String::from_utf8_lossy(&pre.stderr));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("synthesis_report.json")).unwrap()).unwrap();
    assert!(report["decoupling_residual"].as_f64().unwrap() < 1e-3);
    assert!(report["max_gain_error"].as_f64().unwrap() < 1e-12);
    for s in report["snapshots"].as_array().unwrap() {
        assert!(s["pde_residual"].as_f64().unwrap() < 1e-3);
    }

    let sim = run(&["simulate", "--mode", "closed-loop", "--mode", "feedforward", "--config", c, "--out", o]);
    assert!(sim.status.success(), "{}", String::from_utf8_lossy(&sim.stderr));
    let rep = run(&["report", "--config", c, "--out", o]);
    assert!(rep.status.success(), "{}", String::from_utf8_lossy(&rep.stderr));
    for name in ["metrics.json", "errors_closed-loop.csv", "epsilon_closed-loop.csv", "errors_feedforward.csv", "epsilon_feedforward.csv"] {
        assert!(out.join(name).exists(), "{name} missing");
    }
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(m[0]["mode"], "closed-loop");
    assert!(m[0]["undershoot_k_per_m"].as_f64().unwrap() < 0.0);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().to_str().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"gains": {"f_bar_per_s": [[2e-4, 0.0], [0.0, 2e-4]]}}"#).unwrap();
    assert_eq!(run(&["plan", "--config", bad.to_str().unwrap(), "--out", o]).status.code(), Some(2));
    std::fs::write(&bad, "{ not json").unwrap();
    assert_eq!(run(&["plan", "--config", bad.to_str().unwrap(), "--out", o]).status.code(), Some(2));
    std::fs::write(&bad, r#"{"scenario": {"seed_length_m": 0.44, "duration_s": 108000.0, "gradient_setpoint_k_per_m": 1700.0,
        "velocity": {"order": 1.9, "windows": [{"t_start_s": 7200.0, "t_end_s": 36000.0, "target": 1.9444444444444444e-6}]}}}"#)
        .unwrap();
    let planning = run(&["plan", "--config", bad.to_str().unwrap(), "--out", o]);
    assert_eq!(planning.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&planning.stderr).contains("leaves"));
    std::fs::write(&bad, r#"{"numerics": {"divergence_threshold": 1e-6}, "scenario": {"seed_length_m": 0.2, "duration_s": 7200.0,
        "gradient_setpoint_k_per_m": 1700.0, "velocity": {"order": 1.9, "windows": []}}}"#)
        .unwrap();
    let c = bad.to_str().unwrap();
    assert!(run(&["plan", "--config", c, "--out", o]).status.success());
    assert_eq!(run(&["precompute", "--config", c, "--out", o]).status.code(), Some(3));
}

#[test]
fn hash_mismatch_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path(), false);
    let ctx = Context::new(Some(&cfg), Some(dir.path())).unwrap();
    cmd_plan(&ctx).unwrap();
    let mut other = ctx.config.clone();
    other.gains.mu_1_per_s = 5e-4;
    let path = dir.path().join("other.json");
    std::fs::write(&path, other.to_json()).unwrap();
    let e = run(&["precompute", "--config", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(e.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&e.stderr).contains("produced by config"));
}

#[test]
fn unperturbed_run_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path(), false);
    let ctx = Context::new(Some(&cfg), Some(dir.path())).unwrap();
    cmd_plan(&ctx).unwrap();
    let synthesis = cmd_precompute(&ctx).unwrap();
    assert!(synthesis.report.max_gain_error < 1e-12);
    let loaded = ctx.load_controller().unwrap();
    assert_eq!(serde_json::to_value(&loaded).unwrap(), serde_json::to_value(&synthesis).unwrap());
    let bundle = ctx.load_reference().unwrap();
    assert_eq!(bundle.gamma, ctx.config.build_references().unwrap().gamma);
    let logs = cmd_simulate(&ctx, &[Mode::ClosedLoop, Mode::Feedforward]).unwrap();
    // both logs share the reference columns
    let (cl, ff) = (&logs[0], &logs[1]);
    assert_eq!(cl.rows.len(), ff.rows.len());
    for (a, b) in cl.rows.iter().zip(&ff.rows) {
        assert_eq!((a.t, a.gamma_r, a.grad_r, a.u_r), (b.t, b.gamma_r, b.grad_r, b.u_r));
    }
    let ffm = metrics(ff);
    assert!(ffm.max_abs_delta_gamma_m < 1e-4);
    let all = cmd_report(&ctx).unwrap();
    assert_eq!(all[0].settling_time_s, Some(0.0));
    assert_eq!(all[1].settling_time_s, Some(0.0));

    // parse(write(log)) reproduces the report
    let parsed = read_logs(&ctx).unwrap();
    for (p, orig) in parsed.iter().zip(&logs) {
        let reparsed = TrajectoryLog::parse(&p.rows_csv(), &p.fields_csv()).unwrap();
        assert_eq!(&reparsed, p);
        assert_eq!(metrics(p).settling_time_s, metrics(orig).settling_time_s);
        assert!((metrics(p).max_abs_delta_gamma_m - metrics(orig).max_abs_delta_gamma_m).abs() < 1e-15);
    }
}

#[test]
fn malformed_log_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path(), false);
    let ctx = Context::new(Some(&cfg), Some(dir.path())).unwrap();
    let log = TrajectoryLog { mode: Mode::Feedforward, config_hash: ctx.hash.clone(), rows: Vec::new(), snapshots: Vec::new() };
    let mut rows = log.rows_csv();
    rows.push_str("1.0,2.0,oops\n");
    std::fs::write(dir.path().join("log_feedforward.csv"), rows).unwrap();
    std::fs::write(dir.path().join("fields_feedforward.csv"), log.fields_csv()).unwrap();
    let e = run(&["report", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(e.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&e.stderr).contains("line 3"), "{}", String::from_utf8_lossy(&e.stderr));
}
