use pestctl_core::bifurcation::{hopf_analysis_checked, saddle_node_normal_form};
use pestctl_core::equilibria::{
    dulac_certificate, equilibria_no_release, equilibria_with_release,
    equilibria_with_release_original, thresholds, Equilibrium, THRESHOLD_TOL,
};
use pestctl_core::planner::{regime_label, release_plan, sweep_u};
use pestctl_core::simulator::{
    integrate, nullclines, phase_portrait_batch, AttractorKind, Trajectory,
};
use pestctl_core::{Error, Model, OriginalParams, ScaleMap, State};
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::{
    AnalyzeArgs, OutputArgs, PlanArgs, PortraitArgs, SimulateArgs, SweepArgs, TableFormat,
};
use crate::error::CliError;
use crate::output::{
    canonical_json, csv_table, fmt_float, trajectory_csv, write_stdout, OutDir, RunManifest,
};
use crate::svg::{render, PhasePlot};

/// Closed-form and normal-form focus quantities must agree this closely.
pub const HOPF_CHECK_TOL: f64 = 1e-6;
/// Direct and mapped-back equilibrium coordinates must agree this closely.
pub const UNIT_CHECK_TOL: f64 = 1e-10;
const DULAC_SAMPLES: usize = 1000;
const DULAC_SEED: u64 = 0;
const NULLCLINE_SAMPLES: usize = 400;

fn emit_json<T: Serialize>(
    output: &OutputArgs,
    command: &str,
    file: &str,
    doc: &T,
    params: Value,
) -> Result<(), CliError> {
    let text = canonical_json(doc)?;
    match &output.out_dir {
        Some(dir) => {
            let mut out = OutDir::create(dir, RunManifest::new(command, params, None))?;
            out.write(file, text.as_bytes())?;
            out.finish()
        }
        None => write_stdout(text.as_bytes()),
    }
}

fn model_params(model: &Model) -> Value {
    serde_json::to_value(model).unwrap_or(Value::Null)
}

pub fn analyze(a: &AnalyzeArgs) -> Result<(), CliError> {
    let model = a.params.model(a.u)?;
    let doc = analyze_report(&model)?;
    emit_json(
        &a.output,
        "analyze",
        "analyze.json",
        &doc,
        model_params(&model),
    )
}

pub fn analyze_report(model: &Model) -> Result<Value, CliError> {
    let (np, sm) = model.normalized();
    let th = thresholds(&np);
    let normalized = equilibria_with_release(&np)?;
    let hopf = hopf_analysis_checked(&np, HOPF_CHECK_TOL)?;
    let saddle_node = saddle_node_normal_form(&np.with_u(th.u0))?;
    let mut doc = json!({
        "units": model.units(),
        "params": model,
        "normalized_params": np,
        "scale_map": sm,
        "thresholds": th,
        "regime": regime_label(&np, THRESHOLD_TOL).as_str(),
        "equilibria": normalized,
        "hopf": hopf,
        "saddle_node": saddle_node,
    });
    let no_release = match model {
        Model::Original(p) => {
            let direct = equilibria_with_release_original(p)?;
            check_units(&normalized, &direct, &sm, p)?;
            doc["equilibria"] = json!(direct);
            doc["normalized_image"] = json!({ "equilibria": normalized });
            doc["thresholds_original"] = json!({
                "y3": sm.state_to_original(State::new(0.0, th.y3)).y,
                "u0": sm.release_to_original(th.u0),
                "u_hopf": sm.release_to_original(th.u_hopf),
            });
            *p
        }
        Model::Normalized(p) => OriginalParams::new(1.0, p.k, 1.0, p.m, p.u)?,
    };
    if no_release.u == 0.0 {
        doc["no_release"] = json!({
            "equilibria": equilibria_no_release(&no_release)?,
            "dulac": dulac_certificate(&no_release, DULAC_SAMPLES, DULAC_SEED)?,
        });
    }
    Ok(doc)
}

/// Equilibria located in original units must match the normalized ones
/// mapped back.
fn check_units(
    normalized: &[Equilibrium],
    direct: &[Equilibrium],
    sm: &ScaleMap,
    p: &OriginalParams,
) -> Result<(), CliError> {
    let fail = |msg: String| Err(CliError::Core(Error::Consistency(msg)));
    if normalized.len() != direct.len() {
        return fail(format!(
            "{} vs {} equilibria",
            normalized.len(),
            direct.len()
        ));
    }
    for (n, d) in normalized.iter().zip(direct) {
        let mapped = sm.state_to_original(n.location);
        // x of E3 is a difference that cancels near u0; measure it against
        // its value without release
        let x_scale = if d.location.y > 0.0 {
            p.m / (p.c * d.location.y)
        } else {
            0.0
        };
        let close = |a: f64, b: f64, floor: f64| {
            (a - b).abs() <= UNIT_CHECK_TOL * a.abs().max(b.abs()).max(floor)
        };
        if n.label != d.label
            || n.class != d.class
            || !close(mapped.x, d.location.x, x_scale)
            || !close(mapped.y, d.location.y, 0.0)
        {
            return fail(format!(
                "{:?}: normalized {:?} ({}) maps to {:?}, direct {:?} ({})",
                n.label,
                n.location,
                n.class.as_str(),
                mapped,
                d.location,
                d.class.as_str()
            ));
        }
    }
    Ok(())
}

/// Separates a truncated trajectory from the error that produced it.
fn split_failure(
    result: Result<Trajectory, Error>,
) -> Result<(Trajectory, Option<Error>), CliError> {
    match result {
        Ok(traj) => Ok((traj, None)),
        Err(Error::IntegrationFailure { t, reason, partial }) => {
            let traj = (*partial).clone();
            Ok((traj, Some(Error::IntegrationFailure { t, reason, partial })))
        }
        Err(e) => Err(e.into()),
    }
}

fn axis_labels(model: &Model) -> (&'static str, &'static str) {
    match model {
        Model::Original(_) => ("x (pests)", "y (nematodes)"),
        Model::Normalized(_) => ("x (pests)", "y (nematodes, normalized)"),
    }
}

/// Nullclines and equilibria in the units of `model`, sized for `trajs`.
fn plot_svg(model: &Model, trajs: Vec<&[State]>) -> Result<String, CliError> {
    let (np, sm) = model.normalized();
    let equilibria = match model {
        Model::Original(p) => equilibria_with_release_original(p)?,
        Model::Normalized(p) => equilibria_with_release(p)?,
    };
    let top = trajs
        .iter()
        .flat_map(|t| t.iter())
        .chain(equilibria.iter().map(|e| &e.location))
        .filter(|s| s.is_finite())
        .fold(State::new(1e-6, 1e-6), |acc, s| {
            State::new(acc.x.max(s.x), acc.y.max(s.y))
        });
    let y_top_normalized = sm.state_to_normalized(top).y * 2.5;
    let nc = nullclines(&np, (0.0, y_top_normalized), NULLCLINE_SAMPLES)?;
    let to_units = |v: &[State]| {
        v.iter()
            .map(|s| sm.state_to_original(*s))
            .collect::<Vec<_>>()
    };
    let level = sm
        .state_to_original(State::new(0.0, nc.x_nullcline_level))
        .y;
    let horizontal: Vec<State> = (0..NULLCLINE_SAMPLES)
        .map(|i| {
            State::new(
                2.5 * top.x * i as f64 / (NULLCLINE_SAMPLES - 1) as f64,
                level,
            )
        })
        .collect();
    let plot = PhasePlot {
        trajectories: trajs,
        nullclines: vec![
            to_units(&nc.x_nullcline_axis),
            horizontal,
            to_units(&nc.y_nullcline),
        ],
        equilibria: &equilibria,
    };
    let (xl, yl) = axis_labels(model);
    Ok(render(&plot, xl, yl))
}

pub fn simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let model = a.params.model(a.u)?;
    let cfg = a.solver.config()?;
    let s0 = State::first_quadrant(a.x0, a.y0).map_err(CliError::usage)?;
    if a.svg && a.output.out_dir.is_none() {
        return Err(CliError::Usage("--svg needs --out-dir".into()));
    }
    let (traj, failure) = split_failure(integrate(&model, s0, &cfg))?;
    let csv = trajectory_csv(&traj)?;
    match &a.output.out_dir {
        Some(dir) => {
            let mut params = model_params(&model);
            params["x0"] = json!(s0.x);
            params["y0"] = json!(s0.y);
            let mut out = OutDir::create(dir, RunManifest::new("simulate", params, Some(cfg)))?;
            out.write("trajectory.csv", &csv)?;
            if let Some(e) = &failure {
                out.manifest_mut().mark_partial("trajectory.csv", e);
            }
            if a.svg {
                out.write(
                    "trajectory.svg",
                    plot_svg(&model, vec![&traj.states])?.as_bytes(),
                )?;
            }
            out.finish()?;
        }
        None => write_stdout(&csv)?,
    }
    failure.map_or(Ok(()), |e| Err(e.into()))
}

pub fn portrait(a: &PortraitArgs) -> Result<(), CliError> {
    let model = a.params.model(a.u)?;
    let cfg = a.solver.config()?;
    let Some(dir) = &a.output.out_dir else {
        return Err(CliError::Usage(
            "portrait needs --out-dir or PESTCTL_OUT_DIR".into(),
        ));
    };
    let initial = a.initial_conditions();
    let mut params = model_params(&model);
    params["initial_conditions"] = json!(initial);
    let mut out = OutDir::create(dir, RunManifest::new("portrait", params, Some(cfg)))?;

    let width = initial.len().saturating_sub(1).to_string().len().max(3);
    let mut trajs = Vec::with_capacity(initial.len());
    let mut index = Vec::with_capacity(initial.len());
    let mut first_failure = None;
    for (i, (s0, result)) in initial
        .iter()
        .zip(phase_portrait_batch(&model, &initial, &cfg))
        .enumerate()
    {
        let file = format!("trajectory_{i:0width$}.csv");
        let (traj, failure) = split_failure(result)?;
        out.write(&file, &trajectory_csv(&traj)?)?;
        let status = match &failure {
            Some(e) => {
                out.manifest_mut().mark_partial(&file, e);
                "partial"
            }
            None => "complete",
        };
        index.push(vec![
            i.to_string(),
            fmt_float(s0.x),
            fmt_float(s0.y),
            file,
            status.to_string(),
            traj.len().to_string(),
            traj.times.last().map_or(String::new(), |t| fmt_float(*t)),
        ]);
        if first_failure.is_none() {
            first_failure = failure;
        }
        trajs.push(traj);
    }
    out.write(
        "index.csv",
        &csv_table(
            &["id", "x0", "y0", "file", "status", "samples", "t_final"],
            index,
        )?,
    )?;
    if a.svg {
        let paths = trajs.iter().map(|t| t.states.as_slice()).collect();
        out.write("portrait.svg", plot_svg(&model, paths)?.as_bytes())?;
    }
    out.finish()?;
    first_failure.map_or(Ok(()), |e| Err(e.into()))
}

fn attractor_name(kind: &AttractorKind) -> String {
    match kind {
        AttractorKind::Equilibrium { label, .. } => format!("equilibrium_{label:?}"),
        AttractorKind::LimitCycle { .. } => "limit_cycle".to_string(),
        AttractorKind::Undecided => "undecided".to_string(),
    }
}

fn sweep_params(model: &Model, us: &[f64]) -> Value {
    let mut v = model_params(model);
    if let Some(obj) = v.as_object_mut() {
        obj.remove("u");
    }
    v["u_values"] = json!(us);
    v
}

pub fn sweep(a: &SweepArgs) -> Result<(), CliError> {
    let model = a.params.model(0.0)?;
    let mut us = a.release_rates();
    if us.is_empty() {
        return Err(CliError::Usage("no release rates given".into()));
    }
    if let Some(bad) = us.iter().find(|u| !(u.is_finite() && **u > 0.0)) {
        return Err(CliError::Usage(format!(
            "release rates must be positive, got {bad}"
        )));
    }
    us.sort_by(f64::total_cmp);
    let cfg = if a.spot_check {
        Some(a.solver.config()?)
    } else {
        None
    };
    let (np, sm) = model.normalized();
    let normalized_us: Vec<f64> = us.iter().map(|&u| sm.release_to_normalized(u)).collect();
    let table = sweep_u(np.k, np.m, &normalized_us, cfg.as_ref()).map_err(CliError::usage)?;

    let to_units = |s: State| sm.state_to_original(s);
    let (text, file) = match a.format {
        TableFormat::Csv => {
            let mut header = vec![
                "u",
                "u_normalized",
                "regime",
                "e2_x",
                "e2_y",
                "e2_class",
                "e3_exists",
                "e3_x",
                "e3_y",
                "e3_class",
                "consistent",
            ];
            if a.spot_check {
                header.extend(["spot_attractor", "spot_agrees"]);
            }
            let rows = us.iter().zip(&table.rows).map(|(u, row)| {
                let e2 = to_units(row.e2().location);
                let e3 = row.e3();
                let e3_loc = e3.map(|e| to_units(e.location));
                let mut cells = vec![
                    fmt_float(*u),
                    fmt_float(row.u),
                    row.regime.as_str().to_string(),
                    fmt_float(e2.x),
                    fmt_float(e2.y),
                    row.e2().class.as_str().to_string(),
                    e3.is_some().to_string(),
                    e3_loc.map_or(String::new(), |s| fmt_float(s.x)),
                    e3_loc.map_or(String::new(), |s| fmt_float(s.y)),
                    e3.map_or(String::new(), |e| e.class.as_str().to_string()),
                    row.is_consistent().to_string(),
                ];
                if let Some(sc) = &row.spot_check {
                    cells.push(attractor_name(&sc.attractor));
                    cells.push(sc.agrees.to_string());
                }
                cells
            });
            let bytes = csv_table(&header, rows)?;
            (bytes, "sweep.csv")
        }
        TableFormat::Json => {
            let rows: Vec<Value> = us
                .iter()
                .zip(&table.rows)
                .map(|(u, row)| {
                    let eq = |e: &Equilibrium| {
                        json!({
                            "label": e.label,
                            "location": to_units(e.location),
                            "class": e.class,
                        })
                    };
                    json!({
                        "u": u,
                        "u_normalized": row.u,
                        "regime": row.regime.as_str(),
                        "e2": eq(row.e2()),
                        "e3": row.e3().map(eq),
                        "consistent": row.is_consistent(),
                        "spot_check": row.spot_check,
                    })
                })
                .collect();
            let doc = json!({
                "units": model.units(),
                "k": table.k,
                "m": table.m,
                "labels_monotone": table.labels_monotone(),
                "rows": rows,
            });
            (canonical_json(&doc)?.into_bytes(), "sweep.json")
        }
    };
    match &a.output.out_dir {
        Some(dir) => {
            let params = sweep_params(&model, &us);
            let mut out = OutDir::create(dir, RunManifest::new("sweep", params, cfg))?;
            out.write(file, &text)?;
            out.finish()
        }
        None => write_stdout(&text),
    }
}

pub fn plan(a: &PlanArgs) -> Result<(), CliError> {
    let p = OriginalParams::new(a.r, a.k, a.c, a.m, 0.0).map_err(CliError::usage)?;
    let plan = release_plan(&p)?;
    let params = json!({ "r": p.r, "k": p.k, "c": p.c, "m": p.m });
    let doc = json!({ "params": params, "plan": plan });
    emit_json(&a.output, "plan", "plan.json", &doc, params)
}
