//! Subcommand execution and output writing.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use ifront_core::asymptotics::{sharp_curve, sharp_front_distance};
use ifront_core::pdesim::{run_with, RunOptions};
use ifront_core::{
    calibrate_alpha, compute_rates, default_y_max, effective_diffusion, find_alpha1, heaviside_initial,
    phi0_flatness, reconstruct, with_alpha, FrontError, FrontProfile, Grid1D, ModelParams, ShootingResult,
    SlowFrontApprox,
};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::plan::{Command, Format, RunPlan};

/// Environment variable bounding the worker threads of `scan`.
pub const THREADS_VAR: &str = "IFRONT_THREADS";
/// Tracking interval of the PDE front position.
const TRACK_DT: f64 = 0.5;

/// A failure with the stage it happened in.
#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub message: String,
}

impl StageError {
    fn new(stage: &'static str, e: impl std::fmt::Display) -> Self {
        Self { stage, message: e.to_string() }
    }
}

type Staged<T> = std::result::Result<T, StageError>;

fn io_stage(path: &Path) -> impl Fn(io::Error) -> StageError + '_ {
    move |e| StageError::new("output", format!("{}: {e}", path.display()))
}

/// Run a plan; 0 on success, 1 on numerical or output failure.
pub fn execute(plan: &RunPlan) -> i32 {
    match dispatch(plan) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}: {}", e.stage, e.message);
            1
        }
    }
}

fn dispatch(plan: &RunPlan) -> Staged<()> {
    let p = &plan.params;
    match &plan.command {
        Command::Rates => rates(p, plan.out.as_deref()),
        Command::Front { y_max, alpha_tol } => front(plan, *y_max, *alpha_tol),
        Command::Scan { c_min, c_max, n, y_max, alpha_tol } => {
            scan(p, *c_min, *c_max, *n, *y_max, *alpha_tol, plan.out.as_deref())
        }
        Command::Asym { alpha, compare, points, y_max, alpha_tol } => {
            asym(plan, *alpha, *compare, *points, *y_max, *alpha_tol)
        }
        Command::Effdiff { y_max, alpha_tol, approx } => effdiff(plan, *y_max, *alpha_tol, *approx),
        Command::Pde { half_width, nx, t_end, frame_dt } => pde(plan, *half_width, *nx, *t_end, *frame_dt),
    }
}

fn emit_json(value: &Value, out: Option<&Path>) -> Staged<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| StageError::new("output", e))? + "\n";
    match out {
        Some(path) => fs::write(path, text).map_err(io_stage(path)),
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| StageError::new("output", e)),
    }
}

/// Shortest round-trip decimal, with an exponent outside `[1e-5, 1e16)`.
fn num(x: f64) -> String {
    format!("{x:?}")
}

fn write_table(path: &Path, format: Format, header: &[&str], columns: &[Vec<f64>]) -> Staged<()> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_path(path).map_err(|e| StageError::new("output", format!("{}: {e}", path.display())))?;
            let err = |e: csv::Error| StageError::new("output", format!("{}: {e}", path.display()));
            w.write_record(header).map_err(err)?;
            let rows = columns.first().map_or(0, Vec::len);
            for i in 0..rows {
                w.write_record(columns.iter().map(|c| num(c[i]))).map_err(err)?;
            }
            w.flush().map_err(io_stage(path))
        }
        Format::Json => {
            let obj: serde_json::Map<String, Value> = header
                .iter()
                .zip(columns)
                .map(|(h, c)| (h.to_string(), json!(c)))
                .collect();
            emit_json(&Value::Object(obj), Some(path))
        }
    }
}

fn default_path(plan: &RunPlan, stem: &str) -> PathBuf {
    plan.out.clone().unwrap_or_else(|| {
        PathBuf::from(match plan.format {
            Format::Csv => format!("{stem}.csv"),
            Format::Json => format!("{stem}.json"),
        })
    })
}

fn sidecar(path: &Path, tag: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    path.with_file_name(format!("{stem}.{tag}.json"))
}

fn rates(p: &ModelParams, out: Option<&Path>) -> Staged<()> {
    let rt = compute_rates(p);
    emit_json(
        &json!({
            "d": p.d(), "r": p.r(), "c": p.c(),
            "lambda": rt.lambda, "mu": rt.mu, "gamma": rt.gamma, "zeta": rt.zeta,
            "eta": rt.eta, "delta": rt.delta, "degenerate": rt.degenerate,
        }),
        out,
    )
}

fn solve(p: &ModelParams, y_max: Option<f64>, alpha_tol: f64) -> Staged<(ShootingResult, FrontProfile)> {
    let y_max = y_max.unwrap_or_else(|| default_y_max(p.c()));
    let res = find_alpha1(p, alpha_tol, y_max).map_err(|e| StageError::new("shooting", e))?;
    let prof = reconstruct(&res.trajectory, p).map_err(|e| StageError::new("profile", e))?;
    Ok((res, prof))
}

/// Field list of the `front` diagnostics document.
#[derive(Debug, Serialize)]
pub struct FrontDiagnostics {
    pub d: f64,
    pub r: f64,
    pub c: f64,
    pub alpha1: f64,
    pub bracket_width: f64,
    pub speed_residual: Option<f64>,
    pub tail_gamma_fit: Option<f64>,
    pub tail_lambda_fit: Option<f64>,
    pub tail_mu_fit: Option<f64>,
    pub tail_ratio_fit: Option<f64>,
    pub center_manifold_residual: Option<f64>,
}

fn diagnostics(p: &ModelParams, res: &ShootingResult, prof: &FrontProfile) -> FrontDiagnostics {
    let dg = &prof.diagnostics;
    FrontDiagnostics {
        d: p.d(),
        r: p.r(),
        c: p.c(),
        alpha1: res.alpha1,
        bracket_width: res.relative_width(),
        speed_residual: dg.speed_residual,
        tail_gamma_fit: dg.tail_gamma_fit.map(|f| f.rate),
        tail_lambda_fit: dg.tail_lambda_fit.map(|f| f.rate),
        tail_mu_fit: dg.tail_mu_fit.map(|f| f.rate),
        tail_ratio_fit: dg.tail_ratio_fit,
        center_manifold_residual: dg.center_manifold_residual,
    }
}

fn to_value<T: Serialize>(v: &T) -> Staged<Value> {
    serde_json::to_value(v).map_err(|e| StageError::new("output", e))
}

fn front(plan: &RunPlan, y_max: Option<f64>, alpha_tol: f64) -> Staged<()> {
    let p = &plan.params;
    let (res, prof) = solve(p, y_max, alpha_tol)?;
    let path = default_path(plan, "front");
    write_table(
        &path,
        plan.format,
        &["xi", "U", "V", "y"],
        &[prof.xi.clone(), prof.u.clone(), prof.v.clone(), prof.y.clone()],
    )?;
    let diag = to_value(&diagnostics(p, &res, &prof))?;
    emit_json(&diag, Some(&sidecar(&path, "diagnostics")))?;
    emit_json(&diag, None)
}

fn scan_record(base: &ModelParams, c: f64, y_max: Option<f64>, alpha_tol: f64) -> Value {
    let run = || -> Staged<Value> {
        let p = base.with_speed(c).map_err(|e| StageError::new("parameters", e))?;
        let (res, prof) = solve(&p, y_max, alpha_tol)?;
        let dg = diagnostics(&p, &res, &prof);
        Ok(json!({
            "c": c, "alpha1": dg.alpha1, "bracket_width": dg.bracket_width,
            "speed_residual": dg.speed_residual, "tail_gamma_fit": dg.tail_gamma_fit,
            "tail_lambda_fit": dg.tail_lambda_fit, "tail_mu_fit": dg.tail_mu_fit,
            "tail_ratio_fit": dg.tail_ratio_fit,
        }))
    };
    run().unwrap_or_else(|e| json!({ "c": c, "error": format!("{}: {}", e.stage, e.message) }))
}

fn thread_count() -> Option<usize> {
    std::env::var(THREADS_VAR).ok()?.parse().ok().filter(|&n| n > 0)
}

fn scan(
    p: &ModelParams,
    c_min: f64,
    c_max: f64,
    n: usize,
    y_max: Option<f64>,
    alpha_tol: f64,
    out: Option<&Path>,
) -> Staged<()> {
    let speeds: Vec<f64> = (0..n)
        .map(|i| if n == 1 { c_min } else { c_min + (c_max - c_min) * i as f64 / (n - 1) as f64 })
        .collect();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(k) = thread_count() {
        builder = builder.num_threads(k);
    }
    let pool = builder.build().map_err(|e| StageError::new("scan", e))?;
    let records: Vec<Value> =
        pool.install(|| speeds.par_iter().map(|&c| scan_record(p, c, y_max, alpha_tol)).collect());
    let mut text = String::new();
    for r in &records {
        text += &serde_json::to_string(r).map_err(|e| StageError::new("output", e))?;
        text.push('\n');
    }
    match out {
        Some(path) => fs::write(path, text).map_err(io_stage(path))?,
        None => io::stdout().write_all(text.as_bytes()).map_err(|e| StageError::new("output", e))?,
    }
    let failed: Vec<String> = records
        .iter()
        .filter(|r| r.get("error").is_some())
        .map(|r| r["c"].to_string())
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(StageError::new("scan", format!("no front for c in [{}]", failed.join(", "))))
    }
}

fn approximation(p: &ModelParams, alpha: Option<f64>) -> Staged<SlowFrontApprox> {
    match alpha {
        Some(a) => with_alpha(p, a),
        None => calibrate_alpha(p),
    }
    .map_err(|e| StageError::new("calibration", e))
}

fn asym(
    plan: &RunPlan,
    alpha: Option<f64>,
    compare: bool,
    points: usize,
    y_max: Option<f64>,
    alpha_tol: f64,
) -> Staged<()> {
    let p = &plan.params;
    let approx = approximation(p, alpha)?;
    let curve = sharp_curve(&approx, points);
    let mut header = vec!["xi", "U0", "V0"];
    let mut cols = vec![
        curve.iter().map(|q| q.xi).collect::<Vec<_>>(),
        curve.iter().map(|q| q.u0).collect(),
        curve.iter().map(|q| q.v0).collect(),
    ];
    let mut summary = json!({
        "d": p.d(), "r": p.r(), "c": p.c(), "b": approx.b, "alpha": approx.alpha_cal,
        "kappa": approx.kappa, "xi_star": approx.xi_star, "xi_half": approx.xi_half(),
    });
    if compare {
        let (_, prof) = solve(p, y_max, alpha_tol)?;
        let offset = approx.xi_half();
        let (u, v): (Vec<f64>, Vec<f64>) = curve.iter().map(|q| prof.interpolate(q.xi - offset)).unzip();
        header.extend(["U", "V"]);
        cols.extend([u, v]);
        summary["comparison"] = to_value(&sharp_front_distance(&approx, &prof, p.c()))?;
    }
    write_table(&default_path(plan, "asym"), plan.format, &header, &cols)?;
    emit_json(&summary, None)
}

fn effdiff(plan: &RunPlan, y_max: Option<f64>, alpha_tol: f64, approx: bool) -> Staged<()> {
    let p = &plan.params;
    let pairs = if approx {
        phi0_flatness(&approximation(p, None)?).curve
    } else {
        effective_diffusion(&solve(p, y_max, alpha_tol)?.1)
    };
    let (v, phi): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    write_table(&default_path(plan, "effdiff"), plan.format, &["V", "phi"], &[v, phi])
}

fn pde(plan: &RunPlan, half_width: f64, nx: usize, t_end: f64, frame_dt: f64) -> Staged<()> {
    let p = &plan.params;
    let grid = Grid1D::new(-half_width, half_width, nx).map_err(|e| StageError::new("grid", e))?;
    let init = heaviside_initial(&grid, p, 0.0);
    let opts = RunOptions {
        frame_dt: TRACK_DT,
        snapshot_every: ((frame_dt / TRACK_DT).round() as usize).max(1),
        ..RunOptions::default()
    };
    let run = run_with(&init, t_end, &grid, p, &opts).map_err(|e| StageError::new("simulation", e))?;
    let dir = plan.out.clone().unwrap_or_else(|| PathBuf::from("pde"));
    fs::create_dir_all(&dir).map_err(io_stage(&dir))?;
    let x: Vec<f64> = (0..grid.nx).map(|i| grid.x(i)).collect();
    let ext = match plan.format {
        Format::Csv => "csv",
        Format::Json => "json",
    };
    let mut frame_times = Vec::new();
    for (k, f) in run.frames.iter().enumerate() {
        let path = dir.join(format!("frame_{k:04}.{ext}"));
        write_table(&path, plan.format, &["x", "U", "V"], &[x.clone(), f.u.clone(), f.v.clone()])?;
        frame_times.push(f.t);
    }
    let meta = json!({
        "d": p.d(), "r": p.r(), "L": half_width, "nx": nx, "t_end": t_end,
        "frame_t": frame_times, "t": run.times, "front_position": run.positions,
        "measured_speed": run.measured_speed,
    });
    emit_json(&meta, Some(&dir.join("pde.json")))?;
    if !run.measured_speed.is_finite() {
        return Err(StageError::new(
            "simulation",
            FrontError::InvalidInput("too few front positions to measure a speed".into()),
        ));
    }
    emit_json(&json!({ "measured_speed": run.measured_speed }), None)
}
