//! Pipeline orchestration: evolve → verify → fibration scans, with run
//! manifests. Outputs are deterministic for a given scenario and thread
//! count (reductions run in fixed index order, per-column parallelism
//! writes disjoint slices).

use std::path::Path;
use std::time::Instant;

use serde_json::{json, Value};

use slfib_core::ansatz::{self, AnsatzState, HitchinMode};
use slfib_core::evolve::{self, Trajectory, VerifyOptions};
use slfib_core::fibration;
use slfib_core::grid::SpectralOps;

use crate::output::{fnv1a_hash, CsvTable};
use crate::scenario::{build_evolution_config, build_initial_state, ScenarioConfig};
use crate::CliError;

pub fn cartan_report_json(n: usize) -> Result<Value, CliError> {
    let report = slfib_core::cartan::cartan_report(n)?;
    Ok(serde_json::to_value(&report).expect("serializable report"))
}

fn initial_state(config: &ScenarioConfig) -> Result<AnsatzState, CliError> {
    build_initial_state(config).map_err(CliError::Validation)
}

/// Runs the scenario's evolution (when configured) and returns the
/// trajectory; a scenario without [evolution] yields the single t = 0
/// state as a degenerate trajectory of one point.
pub fn evolve_scenario(config: &ScenarioConfig) -> Result<Trajectory, CliError> {
    let state = initial_state(config)?;
    match &config.evolution {
        Some(_) => {
            let core = build_evolution_config(config).map_err(CliError::Validation)?;
            Ok(evolve::evolve(&state, &core)?)
        }
        None => Ok(single_point_trajectory(state)),
    }
}

fn single_point_trajectory(state: AnsatzState) -> Trajectory {
    let t1 = vec![state.t.first().copied().unwrap_or(0.0)];
    let t2 = vec![state.t.get(1).copied().unwrap_or(0.0)];
    Trajectory::from_states(state.m, t1, t2, vec![state])
}

/// Residual report of a scenario as JSON: trajectory verification when an
/// evolution is configured, otherwise the pointwise report at t = 0.
pub fn verify_report(config: &ScenarioConfig) -> Result<Value, CliError> {
    let traj = evolve_scenario(config)?;
    verify_report_for(config, &traj)
}

/// Same, over an already-computed trajectory.
pub fn verify_report_for(config: &ScenarioConfig, traj: &Trajectory) -> Result<Value, CliError> {
    let started = Instant::now();
    let report = if config.evolution.is_some() {
        let verification = evolve::verify_trajectory(traj, &VerifyOptions::full())?;
        let pass = verification.max_equation_residual <= config.tolerances.verify_tol;
        json!({
            "scenario": config.name,
            "mode": "trajectory",
            "t1_points": traj.t1,
            "t2_points": traj.t2,
            "verification": verification,
            "verify_tol": config.tolerances.verify_tol,
            "pass": pass,
        })
    } else {
        let state = traj.state(0, 0);
        let report = ansatz::verify_structure(state, None, HitchinMode::Full)?;
        let pass = report.max_equation_residual <= config.tolerances.verify_tol;
        json!({
            "scenario": config.name,
            "mode": "pointwise",
            "report": report,
            "verify_tol": config.tolerances.verify_tol,
            "pass": pass,
        })
    };
    let mut value = report;
    value["elapsed_seconds"] = json!(started.elapsed().as_secs_f64());
    Ok(value)
}

/// Per-node residual fields at the worst trajectory point, as CSV
/// (columns x, y, then one magnitude column per equation).
pub fn verify_csv(_config: &ScenarioConfig, traj: &Trajectory) -> Result<CsvTable, CliError> {
    let verification = evolve::verify_trajectory(traj, &VerifyOptions::equations_only())?;
    // locate the worst point again to dump its fields
    let (t1w, t2w) = verification.worst_point;
    let it1 = traj
        .t1
        .iter()
        .position(|&t| (t - t1w).abs() <= 1e-12 * (1.0 + t.abs()))
        .unwrap_or(0);
    let it2 = traj
        .t2
        .iter()
        .position(|&t| (t - t2w).abs() <= 1e-12 * (1.0 + t.abs()))
        .unwrap_or(0);
    let state = traj.state(it1, it2);
    let ops = SpectralOps::new(&state.grid);
    let derivs = if traj.t1.len() > 1 || traj.t2.len() > 1 {
        Some(evolve::time_derivs_at(traj, it1, it2))
    } else {
        None
    };
    let fields = ansatz::residual_magnitude_fields(state, derivs.as_ref(), &ops)?;
    let mut header = vec!["x".to_string(), "y".to_string()];
    header.extend(fields.iter().map(|(label, _)| label.clone()));
    let mut table = CsvTable::new(header);
    let g = &state.grid;
    for iy in 0..g.ny {
        for ix in 0..g.nx {
            let mut row = vec![g.x(ix), g.y(iy)];
            for (_, field) in &fields {
                row.push(field[g.idx(ix, iy)]);
            }
            table.push_row(row);
        }
    }
    Ok(table)
}

/// Writes one snapshot CSV per stored t-point plus a JSON manifest.
/// Columns: x, y, w11, w12, w22, Re α₁, Im α₁, Re α₂, Im α₂ (m = 1 leaves
/// the absent fields at zero).
pub fn evolve_to_dir(config: &ScenarioConfig, out_dir: &Path) -> Result<Value, CliError> {
    std::fs::create_dir_all(out_dir)?;
    let started = Instant::now();
    let traj = evolve_scenario(config)?;
    let evolve_seconds = started.elapsed().as_secs_f64();

    let mut files = Vec::new();
    for (it1, it2, state) in traj.iter_indexed() {
        let name = format!("state_t1_{it1:03}_t2_{it2:03}.csv");
        let path = out_dir.join(&name);
        snapshot_csv(state).write_to(&path)?;
        files.push(json!({
            "file": name,
            "t1": traj.t1[it1],
            "t2": traj.t2[it2],
            "stage": traj.stage(it1, it2),
        }));
    }

    let verify_started = Instant::now();
    let verification = evolve::verify_trajectory(&traj, &VerifyOptions::full())?;
    let manifest = json!({
        "tool": "slfib",
        "version": env!("CARGO_PKG_VERSION"),
        "scenario": config.name,
        "grid": config.grid,
        "m": config.m,
        "t1_points": traj.t1,
        "t2_points": traj.t2,
        "snapshots": files,
        "residual_summary": verification,
        "timings_seconds": {
            "evolve": evolve_seconds,
            "verify": verify_started.elapsed().as_secs_f64(),
        },
    });
    std::fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).expect("serializable"),
    )?;
    Ok(manifest)
}

fn snapshot_csv(state: &AnsatzState) -> CsvTable {
    let mut table = CsvTable::new([
        "x", "y", "w11", "w12", "w22", "re_alpha1", "im_alpha1", "re_alpha2", "im_alpha2",
    ]);
    let g = &state.grid;
    for iy in 0..g.ny {
        for ix in 0..g.nx {
            let k = g.idx(ix, iy);
            let [w11, w12, w22] = state.winv_at(k);
            let a1 = state.alpha[0][k];
            let a2 = if state.m == 2 {
                state.alpha[1][k]
            } else {
                slfib_core::C64::new(0.0, 0.0)
            };
            table.push_row([g.x(ix), g.y(iy), w11, w12, w22, a1.re, a1.im, a2.re, a2.im]);
        }
    }
    table
}

/// Locates a requested scan value on the stored trajectory axis.
fn axis_index(axis: &[f64], value: f64, label: &str) -> Result<usize, CliError> {
    axis.iter()
        .position(|&t| (t - value).abs() <= 1e-9 * (1.0 + value.abs()))
        .ok_or_else(|| {
            CliError::Validation(format!(
                "{label} scan value {value} is not on the stored trajectory grid; \
                 align scan points with dt*store_every"
            ))
        })
}

/// Φ-scan over the requested (t₁, t₂) grid at the scan y row. Columns:
/// t1, t2, y, phi, vol, g11, g12, g22, g33, p31, p32, p33.
pub fn phi_scan_table(
    config: &ScenarioConfig,
    traj: &Trajectory,
) -> Result<CsvTable, CliError> {
    if config.m != 2 {
        return Err(CliError::Validation(
            "phi scans require the 2-torus model (m = 2)".to_string(),
        ));
    }
    let t1_values = match config.outputs.scan_t1 {
        Some(r) => r.values(),
        None => traj.t1.clone(),
    };
    let t2_values = match config.outputs.scan_t2 {
        Some(r) => r.values(),
        None => traj.t2.clone(),
    };
    let y = config.outputs.scan_y;
    let mut table = CsvTable::new([
        "t1", "t2", "y", "phi", "vol", "g11", "g12", "g22", "g33", "p31", "p32", "p33",
    ]);
    for &t2 in &t2_values {
        let it2 = axis_index(&traj.t2, t2, "t2")?;
        for &t1 in &t1_values {
            let it1 = axis_index(&traj.t1, t1, "t1")?;
            let state = traj.state(it1, it2);
            let phi = fibration::semiflat_volume(state, y)?;
            let vol = fibration::fiber_volume(state, y)?;
            let g = fibration::mclean_metric(state, y)?;
            let p = fibration::period_matrix(state, y)?;
            table.push_row([
                t1,
                t2,
                y,
                phi,
                vol.per_unit_angle,
                g[0][0],
                g[0][1],
                g[1][1],
                g[2][2],
                p[2][0],
                p[2][1],
                p[2][2],
            ]);
        }
    }
    Ok(table)
}

/// Full geometry dump at one requested base point.
pub fn geometry_json(
    traj: &Trajectory,
    point: (f64, f64, f64),
) -> Result<Value, CliError> {
    let it1 = axis_index(&traj.t1, point.0, "t1")?;
    let it2 = axis_index(&traj.t2, point.1, "t2")?;
    let state = traj.state(it1, it2);
    let geometry = fibration::geometry(state, point.2)?;
    Ok(serde_json::to_value(&geometry).expect("serializable"))
}

/// Executes the requested pipelines in dependency order and writes a run
/// manifest. Returns the manifest.
pub fn run_all(
    config: &ScenarioConfig,
    out_dir: &Path,
    scenario_bytes: &[u8],
) -> Result<Value, CliError> {
    std::fs::create_dir_all(out_dir)?;
    let mut outputs: Vec<String> = Vec::new();
    let mut timings = serde_json::Map::new();

    let started = Instant::now();
    let traj = evolve_scenario(config)?;
    timings.insert("evolve".into(), json!(started.elapsed().as_secs_f64()));

    let mut residual_summary = Value::Null;
    if config.outputs.residual_report {
        let started = Instant::now();
        let verification = evolve::verify_trajectory(&traj, &VerifyOptions::full())?;
        residual_summary = serde_json::to_value(&verification).expect("serializable");
        let path = out_dir.join("residuals.json");
        std::fs::write(
            &path,
            serde_json::to_string_pretty(&json!({
                "scenario": config.name,
                "verification": residual_summary,
                "verify_tol": config.tolerances.verify_tol,
            }))
            .expect("serializable"),
        )?;
        outputs.push("residuals.json".into());
        timings.insert("verify".into(), json!(started.elapsed().as_secs_f64()));
    }

    if config.outputs.phi_scan {
        let started = Instant::now();
        let table = phi_scan_table(config, &traj)?;
        let path = out_dir.join("phi_scan.csv");
        table.write_to(&path)?;
        outputs.push("phi_scan.csv".into());
        timings.insert("phi_scan".into(), json!(started.elapsed().as_secs_f64()));
    }

    for (idx, &point) in config.outputs.geometry_points.iter().enumerate() {
        let value = geometry_json(&traj, point)?;
        let name = format!("geometry_{idx:02}.json");
        std::fs::write(
            out_dir.join(&name),
            serde_json::to_string_pretty(&value).expect("serializable"),
        )?;
        outputs.push(name);
    }

    if config.outputs.trajectory_csv {
        let started = Instant::now();
        let dir = out_dir.join("trajectory");
        std::fs::create_dir_all(&dir)?;
        for (it1, it2, state) in traj.iter_indexed() {
            let name = format!("state_t1_{it1:03}_t2_{it2:03}.csv");
            snapshot_csv(state).write_to(&dir.join(name))?;
        }
        outputs.push("trajectory/".into());
        timings.insert("trajectory_csv".into(), json!(started.elapsed().as_secs_f64()));
    }

    let manifest = json!({
        "tool": "slfib",
        "version": env!("CARGO_PKG_VERSION"),
        "scenario": config.name,
        "scenario_hash": fnv1a_hash(scenario_bytes),
        "grid": config.grid,
        "m": config.m,
        "t1_points": traj.t1,
        "t2_points": traj.t2,
        "residual_summary": residual_summary,
        "timings_seconds": Value::Object(timings),
        "outputs": outputs,
    });
    std::fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).expect("serializable"),
    )?;
    Ok(manifest)
}

