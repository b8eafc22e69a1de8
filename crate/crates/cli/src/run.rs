//! Subcommand implementations and artifact emission.
//!
//! Every command produces an [`Outcome`]: a JSON summary, optional CSV
//! artifacts and a pass flag. [`write_outcome`] writes them together with a
//! manifest. Nothing time- or host-dependent enters any artifact, so equal
//! configurations give byte-identical files.

use std::path::Path;

use qbsde::constants::{certified_log_epsilon, global_parameters, local_parameters, StructuralConstants};
use qbsde::globalsolve::{
    global_solve, replicate_seed, replicate_y0, uniqueness_probe, z_bmo_report, GlobalOptions, GlobalSolution,
};
use qbsde::instances::Instance;
use qbsde::paths::{make_grid, simulate_brownian, PathEnsemble, TerminalValues};
use qbsde::picard::{certified_parameters, local_solve, IterationTrace, LocalOptions, SolveMode};
use qbsde::scalarq::{ScalarOptions, ZCap};
use qbsde::AdaptedField;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{CliError, Result};
use crate::lemmas::{bmo_battery, girsanov_battery, scalar_battery, BatterySettings};
use crate::registry::{builtins, resolve, Battery, Kind, Resolved, RunConfig, BATTERY_HORIZON};

/// Result of one command.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub command: &'static str,
    pub summary: Value,
    /// Extra files (name, contents) besides `summary.json` and `manifest.json`.
    pub files: Vec<(String, String)>,
    /// All enforced checks passed.
    pub passed: bool,
    pub config: Value,
    pub grid: Value,
}

pub fn to_json_bytes<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn manifest(outcome: &Outcome) -> Value {
    let mut files: Vec<&str> = vec!["summary.json"];
    files.extend(outcome.files.iter().map(|(n, _)| n.as_str()));
    json!({
        "tool": "qbsde",
        "cli_version": env!("CARGO_PKG_VERSION"),
        "core_version": qbsde::VERSION,
        "command": outcome.command,
        "config": outcome.config,
        "grid": outcome.grid,
        "files": files,
    })
}

/// Writes `summary.json`, the extra files and `manifest.json` into `dir`.
pub fn write_outcome(outcome: &Outcome, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("summary.json"), to_json_bytes(&outcome.summary)?)?;
    for (name, contents) in &outcome.files {
        std::fs::write(dir.join(name), contents)?;
    }
    std::fs::write(dir.join("manifest.json"), to_json_bytes(&manifest(outcome))?)?;
    Ok(())
}

/// Writes `error.json` into `dir`.
pub fn write_error(err: &CliError, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("error.json"), to_json_bytes(&error_json(err))?)?;
    Ok(())
}

pub fn error_json(err: &CliError) -> Value {
    let mut v = json!({ "error": { "code": err.code(), "message": err.to_string() } });
    if let CliError::Solver(qbsde::Error::NotConverged { distances, .. }) = err {
        v["error"]["distances"] = json!(distances);
    }
    v
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

fn grid_json(t0: f64, t_end: f64, steps: usize, paths: usize, seed: u64) -> Value {
    json!({ "t0": t0, "t_end": t_end, "steps": steps, "dt": (t_end - t0) / steps as f64, "paths": paths, "seed": seed })
}

fn problem(config: &RunConfig) -> Result<Instance> {
    match resolve(&config.instance)? {
        Resolved::Problem(i) => Ok(*i),
        Resolved::Battery(_) => Err(CliError::Config(format!(
            "'{}' is a check battery; use verify-lemmas",
            config.instance
        ))),
    }
}

fn local_options(config: &RunConfig, mode: SolveMode) -> LocalOptions {
    LocalOptions {
        tol: config.tol,
        max_iter: config.max_iter,
        mode,
        scalar: ScalarOptions {
            z_cap: config.z_cap.map_or(ZCap::Auto, ZCap::Fixed),
            ..Default::default()
        },
        ..Default::default()
    }
}

// ---------------------------------------------------------------- constants

/// The local ledger, the certified `log epsilon` and (for `alpha = 0`) the
/// global constants; failures are reported in place.
pub fn constants_report(s: &StructuralConstants) -> Result<Value> {
    s.validate()?;
    let section = |r: qbsde::Result<Value>| match r {
        Ok(v) => v,
        Err(e) => json!({ "error": { "code": e.code(), "message": e.to_string() } }),
    };
    let local = section(local_parameters(s).and_then(|p| serde_json::to_value(p).map_err(|e| qbsde::Error::Io(e.to_string()))));
    let global = if s.alpha == 0.0 {
        section(global_parameters(s).and_then(|p| serde_json::to_value(p).map_err(|e| qbsde::Error::Io(e.to_string()))))
    } else {
        Value::Null
    };
    Ok(json!({
        "constants": s,
        "certified_log_epsilon": certified_log_epsilon(s)?,
        "local": local,
        "global": global,
    }))
}

pub fn constants_command(s: &StructuralConstants, source: &str) -> Result<Outcome> {
    let report = constants_report(s)?;
    let passed = report["local"].get("error").is_none();
    Ok(Outcome {
        command: "constants",
        summary: json!({ "command": "constants", "source": source, "ledger": report }),
        files: Vec::new(),
        passed,
        config: json!({ "source": source, "constants": s }),
        grid: Value::Null,
    })
}

// ------------------------------------------------------------------ solution CSV

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `node,time` then per component `i`: `Y` mean and 5/50/95% quantiles
/// across paths, and the root-mean-square of `|Z^i|`.
pub fn solution_csv(ensemble: &PathEnsemble, y: &AdaptedField, z: &AdaptedField) -> String {
    let n = y.width();
    let d = z.width() / n;
    let mut out = String::from("node,time");
    for i in 1..=n {
        out.push_str(&format!(",y{i}_mean,y{i}_q05,y{i}_q50,y{i}_q95,z{i}_rms"));
    }
    out.push('\n');
    let paths = y.n_paths() as f64;
    for k in 0..y.nodes() {
        out.push_str(&format!("{k},{}", ensemble.grid().time(k)));
        for i in 0..n {
            let mut col = y.component(k, i);
            col.sort_by(f64::total_cmp);
            let mean = y.mean(k, i);
            let z2: f64 = (0..y.n_paths())
                .map(|p| z.get(k, p)[i * d..(i + 1) * d].iter().map(|v| v * v).sum::<f64>())
                .sum();
            out.push_str(&format!(
                ",{mean},{},{},{},{}",
                quantile(&col, 0.05),
                quantile(&col, 0.5),
                quantile(&col, 0.95),
                (z2 / paths).sqrt()
            ));
        }
        out.push('\n');
    }
    out
}

fn trace_csv(trace: &IterationTrace) -> Result<String> {
    let mut buf = Vec::new();
    trace.write_csv(&mut buf)?;
    Ok(String::from_utf8(buf).expect("csv is ascii"))
}

// ------------------------------------------------------------------ solve-local

fn certified_interval(inst: &Instance, config: &RunConfig) -> Result<(PathEnsemble, TerminalValues, f64)> {
    let gen = &inst.generator;
    let t_end = gen.constants.horizon;
    let mut eps = certified_log_epsilon(&gen.constants)?.exp();
    if let Some(e) = config.epsilon {
        eps = eps.min(e);
    }
    // the certified epsilon depends on the realized |xi|_inf; shrink until consistent
    for _ in 0..8 {
        let t0 = t_end - eps.min(t_end);
        if !(t0 < t_end) || eps < t_end * 1e-12 {
            return Err(qbsde::Error::StepBelowFloor {
                eta: eps,
                floor: t_end * 1e-12,
            }
            .into());
        }
        let ens = simulate_brownian(make_grid(t0, t_end, config.steps)?, config.paths, gen.d(), config.seed)?;
        let xi = inst.terminal_values(&ens)?;
        let p = certified_parameters(gen, &xi, t_end)?;
        if ens.grid().horizon() <= p.epsilon {
            return Ok((ens, xi, t0));
        }
        eps = p.epsilon;
    }
    Err(CliError::Config("certified epsilon did not stabilize".into()))
}

pub fn solve_local_command(config: &RunConfig) -> Result<Outcome> {
    let inst = problem(config)?;
    let gen = &inst.generator;
    let t_end = gen.constants.horizon;
    let (ens, xi, t0) = match config.mode {
        SolveMode::Certified => certified_interval(&inst, config)?,
        SolveMode::Working => {
            let t0 = t_end - config.epsilon.unwrap_or(t_end).min(t_end);
            let ens = simulate_brownian(make_grid(t0, t_end, config.steps)?, config.paths, gen.d(), config.seed)?;
            let xi = inst.terminal_values(&ens)?;
            (ens, xi, t0)
        }
    };
    let basis = config.basis.build();
    let (sol, trace) = local_solve(gen, &xi, &ens, &basis, &local_options(config, config.mode))?;
    let certified = match certified_parameters(gen, &xi, t_end) {
        Ok(p) => json!({ "epsilon": p.epsilon, "log_epsilon": p.log_epsilon, "binding": p.epsilon_binding }),
        Err(e) => json!({ "error": { "code": e.code(), "message": e.to_string() } }),
    };
    let distances: Vec<f64> = trace.rows.iter().map(|r| r.y_dist_sup.max(r.z_dist_bmo)).collect();
    let monotone = distances.windows(2).all(|w| w[1] <= w[0]);
    let residual_ok = sol.residual <= 2.0 * config.tol;
    let closed_form = if t0 == 0.0 { inst.closed_form_y0.clone() } else { None };
    let summary = json!({
        "command": "solve-local",
        "instance": inst.id,
        "description": inst.description,
        "mode": config.mode,
        "interval": [t0, t_end],
        "constants": gen.constants.with_xi_bound(xi.sup_norm()),
        "certified": certified,
        "converged": true,
        "iterations": sol.iterations,
        "tol": config.tol,
        "residual": sol.residual,
        "residual_within_2tol": residual_ok,
        "monotone_decay": monotone,
        "mean_ratio": trace.mean_ratio(),
        "non_contraction": trace.non_contraction,
        "y0": sol.y0(),
        "y0_projection_se": sol.y_se[0],
        "closed_form_y0": closed_form,
        "cap_hits": sol.cap_hits,
        "trace": to_value(&trace.rows)?,
    });
    Ok(Outcome {
        command: "solve-local",
        summary,
        files: vec![
            ("trace.csv".into(), trace_csv(&trace)?),
            ("solution.csv".into(), solution_csv(&ens, &sol.y, &sol.z)),
        ],
        passed: residual_ok,
        config: to_value(config)?,
        grid: grid_json(t0, t_end, config.steps, config.paths, config.seed),
    })
}

// ------------------------------------------------------------------ solve-global

fn global_options(config: &RunConfig) -> GlobalOptions {
    GlobalOptions {
        mode: config.mode,
        segment_length: config.segment_length,
        local: local_options(config, SolveMode::Working),
        ..Default::default()
    }
}

fn global_certificate(sol: &GlobalSolution) -> Result<Value> {
    let z = z_bmo_report(sol)?;
    let seams_ok = sol.seams.iter().all(|s| s.jump_sup <= s.tolerance);
    Ok(json!({
        "lambda": sol.lambda,
        "lambda_slack": sol.lambda_slack,
        "lambda_holds": sol.lambda_slack >= 0.0,
        "seams": to_value(&sol.seams)?,
        "worst_seam_ratio": sol.worst_seam_ratio(),
        "seams_hold": seams_ok,
        "z_bmo": to_value(&z)?,
    }))
}

pub fn solve_global_command(config: &RunConfig) -> Result<Outcome> {
    let inst = problem(config)?;
    let gen = &inst.generator;
    let t_end = gen.constants.horizon;
    let grid = make_grid(0.0, t_end, config.steps)?;
    let ens = simulate_brownian(grid, config.paths, gen.d(), config.seed)?;
    let xi = inst.terminal_values(&ens)?;
    let basis = config.basis.build();
    let opts = global_options(config);
    let sol = global_solve(gen, &xi, &ens, &basis, &opts)?;
    let certificate = global_certificate(&sol)?;
    let mut passed = certificate["lambda_holds"] == true
        && certificate["seams_hold"] == true
        && certificate["z_bmo"]["holds"] == true;

    let mut y0_sd = None;
    let replicates = if config.replicates >= 2 {
        let r = replicate_y0(gen, &inst.terminal, &grid, config.paths, config.replicates, config.seed, &basis, &opts)?;
        let check = inst.closed_form_y0.as_ref().map(|cf| {
            let z: Vec<f64> = cf.iter().zip(r.mean.iter().zip(&r.se)).map(|(c, (m, s))| (m - c) / s).collect();
            let holds = z.iter().all(|v| v.abs() <= 3.0);
            json!({ "closed_form_y0": cf, "z_scores": z, "holds": holds })
        });
        if let Some(c) = &check {
            passed &= c["holds"] == true;
        }
        let root = (config.replicates as f64).sqrt();
        y0_sd = Some(r.se.iter().map(|s| s * root).collect::<Vec<f64>>());
        json!({ "estimate": to_value(&r)?, "closed_form": check })
    } else {
        Value::Null
    };

    let uniqueness = if config.uniqueness {
        let ens_b = simulate_brownian(grid, config.paths, gen.d(), replicate_seed(config.seed, 1))?;
        let xi_b = inst.terminal_values(&ens_b)?;
        let u = uniqueness_probe(gen, gen, &xi, &xi_b, &ens, &ens_b, &basis, &opts, y0_sd.as_deref())?;
        passed &= u.holds;
        to_value(&u)?
    } else {
        Value::Null
    };

    let summary = json!({
        "command": "solve-global",
        "instance": inst.id,
        "description": inst.description,
        "mode": config.mode,
        "constants": sol.constants,
        "plan": to_value(&sol.plan)?,
        "segments": to_value(&sol.segments)?,
        "y0": sol.y0(),
        "y0_projection_se": sol.y_se[0],
        "certificate": certificate,
        "replicates": replicates,
        "uniqueness": uniqueness,
        "passed": passed,
    });
    let mut trace = String::from("iteration,y_dist_sup,z_dist_bmo,ratio,in_ball,segment\n");
    for (s, t) in sol.traces.iter().enumerate() {
        for line in trace_csv(t)?.lines().skip(1) {
            trace.push_str(&format!("{line},{s}\n"));
        }
    }
    Ok(Outcome {
        command: "solve-global",
        summary,
        files: vec![
            ("trace.csv".into(), trace),
            ("solution.csv".into(), solution_csv(&ens, &sol.y, &sol.z)),
        ],
        passed,
        config: to_value(config)?,
        grid: grid_json(0.0, t_end, config.steps, config.paths, config.seed),
    })
}

// ------------------------------------------------------------------ verify-lemmas

pub fn battery_settings(config: &RunConfig) -> BatterySettings {
    BatterySettings {
        horizon: BATTERY_HORIZON,
        steps: config.steps,
        paths: config.paths,
        seed: config.seed,
    }
}

pub fn run_battery(battery: Battery, config: &RunConfig) -> Result<(Value, bool)> {
    let s = battery_settings(config);
    Ok(match battery {
        Battery::Scalar => {
            let r = scalar_battery(&s)?;
            (to_value(&r)?, r.holds)
        }
        Battery::Bmo => {
            let r = bmo_battery(&s)?;
            (to_value(&r)?, r.holds)
        }
        Battery::Girsanov => {
            let r = girsanov_battery(&s)?;
            (to_value(&r)?, r.holds)
        }
    })
}

/// Runs the given batteries, each with its own configuration.
pub fn verify_lemmas_command(batteries: &[(Battery, RunConfig)]) -> Result<Outcome> {
    let mut reports = serde_json::Map::new();
    let mut configs = serde_json::Map::new();
    let mut passed = true;
    for (b, config) in batteries {
        let (report, holds) = run_battery(*b, config)?;
        let key = to_value(b)?.as_str().expect("kebab-case name").to_string();
        passed &= holds;
        reports.insert(key.clone(), json!({ "holds": holds, "report": report }));
        configs.insert(key, to_value(config)?);
    }
    Ok(Outcome {
        command: "verify-lemmas",
        summary: json!({ "command": "verify-lemmas", "batteries": reports, "holds": passed }),
        files: Vec::new(),
        passed,
        config: Value::Object(configs),
        grid: Value::Null,
    })
}

// ------------------------------------------------------------------ list-instances

pub fn list_instances_command() -> Outcome {
    let list: Vec<Value> = builtins()
        .iter()
        .map(|b| {
            let kind = match b.kind {
                Kind::Problem(_) => "problem",
                Kind::Battery(_) => "battery",
            };
            json!({ "id": b.id, "kind": kind, "description": b.description })
        })
        .collect();
    Outcome {
        command: "list-instances",
        summary: json!({ "command": "list-instances", "instances": list }),
        files: Vec::new(),
        passed: true,
        config: Value::Null,
        grid: Value::Null,
    }
}
