//! Declarative scenario files: a flat sectioned key-value format
//! (TOML-compatible subset) describing the grid, initial data expressions,
//! evolution settings and requested outputs. Parsing reports every
//! validation problem, not just the first.
//!
//! ```text
//! name = "sinusoidal-m2"
//!
//! [grid]
//! kappa = 1.0
//! nx = 64
//! y_min = 0.0
//! y_max = 1.0
//! ny = 4
//!
//! [initial]
//! m = 2
//! w11 = "1 + 0.2*sin(2*pi*x/kappa)"
//! w12 = "0"
//! w22 = "1"
//! alpha1_re = "0"
//! alpha1_im = "0"
//!
//! [evolution]
//! dt = 0.005
//! t1_max = 0.1
//! t2_max = 0.1
//! residual_ceiling = 1e-6
//! store_every = 1
//!
//! [outputs]
//! residual_report = true
//! phi_scan = true
//! scan_t1 = "0:0.1:5"
//! scan_t2 = "0:0.1:5"
//! scan_y = 0.0
//! geometry_points = "0,0,0; 0.05,0.05,0"
//!
//! [tolerances]
//! verify_tol = 1e-10
//! ```

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

use slfib_core::ansatz::AnsatzState;
use slfib_core::C64;
use slfib_core::evolve::EvolutionConfig;
use slfib_core::grid::BaseGrid;

use crate::expr::{Bindings, Expr};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid scenario:\n{}", .0.join("\n"))]
    Validation(Vec<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialData {
    pub w11: Expr,
    pub w12: Option<Expr>,
    pub w22: Option<Expr>,
    pub alpha_re: [Option<Expr>; 2],
    pub alpha_im: [Option<Expr>; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionSettings {
    pub dt: f64,
    pub t_max: Vec<f64>,
    pub residual_ceiling: Option<f64>,
    pub store_every: usize,
    pub t1_line_every: usize,
    pub free_w12: Option<Expr>,
    pub free_w22: Option<Expr>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanRange {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl ScanRange {
    pub fn values(&self) -> Vec<f64> {
        if self.count <= 1 {
            return vec![self.start];
        }
        let step = (self.stop - self.start) / (self.count - 1) as f64;
        (0..self.count).map(|i| self.start + i as f64 * step).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outputs {
    pub residual_report: bool,
    pub phi_scan: bool,
    pub scan_t1: Option<ScanRange>,
    pub scan_t2: Option<ScanRange>,
    pub scan_y: f64,
    pub geometry_points: Vec<(f64, f64, f64)>,
    pub trajectory_csv: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tolerances {
    pub verify_tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub grid: BaseGrid,
    pub m: usize,
    pub initial: InitialData,
    pub evolution: Option<EvolutionSettings>,
    pub outputs: Outputs,
    pub tolerances: Tolerances,
}

pub fn parse_scenario(path: &Path) -> Result<ScenarioConfig, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenario_str(&text)
}

/// Raw `section.key -> value` table in file order.
fn raw_table(text: &str, errors: &mut Vec<String>) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let mut section = String::new();
    for (lineno, raw_line) in text.lines().enumerate() {
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line.starts_with('[') {
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                section = name.trim().to_string();
            } else {
                errors.push(format!("line {}: malformed section header `{line}`", lineno + 1));
            }
            continue;
        }
        match line.split_once('=') {
            Some((key, value)) => {
                let key = key.trim();
                let mut value = value.trim().to_string();
                if let Some(idx) = find_comment(&value) {
                    value.truncate(idx);
                    value = value.trim().to_string();
                }
                let full = if section.is_empty() {
                    key.to_string()
                } else {
                    format!("{section}.{key}")
                };
                if out.insert(full.clone(), value).is_some() {
                    errors.push(format!("line {}: duplicate key `{full}`", lineno + 1));
                }
            }
            None => errors.push(format!("line {}: expected `key = value`, got `{line}`", lineno + 1)),
        }
    }
    out
}

fn find_comment(value: &str) -> Option<usize> {
    let mut in_string = false;
    for (i, c) in value.char_indices() {
        match c {
            '"' => in_string = !in_string,
            '#' if !in_string => return Some(i),
            _ => {}
        }
    }
    None
}

fn unquote(value: &str) -> String {
    let v = value.trim();
    if v.len() >= 2 && v.starts_with('"') && v.ends_with('"') {
        v[1..v.len() - 1].to_string()
    } else {
        v.to_string()
    }
}

struct Reader<'a> {
    table: &'a BTreeMap<String, String>,
    errors: Vec<String>,
}

impl Reader<'_> {
    fn f64(&mut self, key: &str) -> Option<f64> {
        let raw = self.table.get(key)?;
        match raw.parse::<f64>() {
            Ok(v) => Some(v),
            Err(_) => {
                self.errors.push(format!("{key}: `{raw}` is not a number"));
                None
            }
        }
    }

    fn f64_or(&mut self, key: &str, default: f64) -> f64 {
        self.f64(key).unwrap_or(default)
    }

    fn usize(&mut self, key: &str) -> Option<usize> {
        let raw = self.table.get(key)?;
        match raw.parse::<i64>() {
            // negative counts clamp to zero so the range checks downstream
            // report the canonical message (e.g. "grid.Nx must be ≥ 8")
            Ok(v) => Some(v.max(0) as usize),
            Err(_) => {
                self.errors.push(format!("{key}: `{raw}` is not an integer"));
                None
            }
        }
    }

    fn bool_or(&mut self, key: &str, default: bool) -> bool {
        match self.table.get(key).map(|s| s.as_str()) {
            None => default,
            Some("true") => true,
            Some("false") => false,
            Some(other) => {
                self.errors.push(format!("{key}: `{other}` is not a boolean"));
                default
            }
        }
    }

    fn expr(&mut self, key: &str) -> Option<Expr> {
        let raw = unquote(self.table.get(key)?);
        match Expr::parse(&raw) {
            Ok(e) => Some(e),
            Err(e) => {
                self.errors.push(format!("{key}: {e}"));
                None
            }
        }
    }

    fn scan_range(&mut self, key: &str) -> Option<ScanRange> {
        let raw = unquote(self.table.get(key)?);
        let parts: Vec<&str> = raw.split(':').collect();
        if parts.len() != 3 {
            self.errors.push(format!("{key}: expected `start:stop:count`, got `{raw}`"));
            return None;
        }
        let start = parts[0].parse::<f64>().ok();
        let stop = parts[1].parse::<f64>().ok();
        let count = parts[2].parse::<usize>().ok();
        match (start, stop, count) {
            (Some(start), Some(stop), Some(count)) if count >= 1 => {
                Some(ScanRange { start, stop, count })
            }
            _ => {
                self.errors.push(format!("{key}: expected `start:stop:count`, got `{raw}`"));
                None
            }
        }
    }
}

pub fn parse_scenario_str(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    let mut errors = Vec::new();
    let table = raw_table(text, &mut errors);
    let mut r = Reader { table: &table, errors };

    let name = unquote(r.table.get("name").map(String::as_str).unwrap_or("unnamed"));

    // [grid]
    let kappa = r.f64_or("grid.kappa", 1.0);
    let nx = r.usize("grid.nx").unwrap_or(64);
    let y_min = r.f64_or("grid.y_min", 0.0);
    let y_max = r.f64_or("grid.y_max", 1.0);
    let ny = r.usize("grid.ny").unwrap_or(4);
    let grid = BaseGrid { kappa, nx, y_min, y_max, ny };
    for e in grid.validate_all() {
        r.errors.push(e.to_string());
    }

    // [initial]
    let m = r.usize("initial.m").unwrap_or(2);
    if m != 1 && m != 2 {
        r.errors.push(format!("initial.m must be 1 or 2 (got {m})"));
    }
    let w11 = r.expr("initial.w11");
    if w11.is_none() && !r.table.contains_key("initial.w11") {
        r.errors.push("initial.w11 is required".to_string());
    }
    let w12 = r.expr("initial.w12");
    let w22 = r.expr("initial.w22");
    if m == 2 {
        if w12.is_none() && !r.table.contains_key("initial.w12") {
            r.errors.push("initial.w12 is required for m = 2".to_string());
        }
        if w22.is_none() && !r.table.contains_key("initial.w22") {
            r.errors.push("initial.w22 is required for m = 2".to_string());
        }
    }
    let alpha_re = [r.expr("initial.alpha1_re"), r.expr("initial.alpha2_re")];
    let alpha_im = [r.expr("initial.alpha1_im"), r.expr("initial.alpha2_im")];

    // [evolution]
    let has_evolution = r.table.keys().any(|k| k.starts_with("evolution."));
    let evolution = if has_evolution {
        let dt = r.f64_or("evolution.dt", 0.005);
        let mut t_max = vec![r.f64_or("evolution.t1_max", 0.1)];
        if m == 2 {
            t_max.push(r.f64_or("evolution.t2_max", 0.1));
        }
        let residual_ceiling = r.f64("evolution.residual_ceiling");
        let store_every = r.usize("evolution.store_every").unwrap_or(1);
        let t1_line_every = r.usize("evolution.t1_line_every").unwrap_or(1);
        let free_w12 = r.expr("evolution.free_w12");
        let free_w22 = r.expr("evolution.free_w22");
        Some(EvolutionSettings {
            dt,
            t_max,
            residual_ceiling,
            store_every,
            t1_line_every,
            free_w12,
            free_w22,
        })
    } else {
        None
    };

    // [outputs]
    let outputs = Outputs {
        residual_report: r.bool_or("outputs.residual_report", true),
        phi_scan: r.bool_or("outputs.phi_scan", false),
        scan_t1: r.scan_range("outputs.scan_t1"),
        scan_t2: r.scan_range("outputs.scan_t2"),
        scan_y: r.f64_or("outputs.scan_y", y_min),
        geometry_points: parse_points(
            r.table.get("outputs.geometry_points").map(String::as_str),
            &mut r.errors,
        ),
        trajectory_csv: r.bool_or("outputs.trajectory_csv", true),
    };

    // [tolerances]
    let tolerances = Tolerances { verify_tol: r.f64_or("tolerances.verify_tol", 1e-10) };

    // validate evolution settings against the core config rules
    if let Some(ev) = &evolution {
        let core = EvolutionConfig {
            m,
            t_max: ev.t_max.clone(),
            dt: ev.dt,
            residual_ceiling: ev.residual_ceiling,
            free_w12: None,
            free_w22: None,
            store_every: ev.store_every,
            t1_line_every: ev.t1_line_every,
        };
        if let Err(e) = core.validate() {
            r.errors.push(e.to_string());
        }
    }

    let mut errors = r.errors;

    // initial data must parse into an admissible state (SPD at every node)
    let provisional = ScenarioConfig {
        name: name.clone(),
        grid: grid.clone(),
        m,
        initial: InitialData {
            w11: w11.clone().unwrap_or_else(|| Expr::parse("1").unwrap()),
            w12: w12.clone(),
            w22: w22.clone(),
            alpha_re: alpha_re.clone(),
            alpha_im: alpha_im.clone(),
        },
        evolution: evolution.clone(),
        outputs: outputs.clone(),
        tolerances: tolerances.clone(),
    };
    if errors.is_empty() {
        if let Err(e) = build_initial_state(&provisional) {
            errors.push(format!("initial data rejected: {e}"));
        }
    }

    if errors.is_empty() {
        Ok(provisional)
    } else {
        Err(ScenarioError::Validation(errors))
    }
}

fn parse_points(raw: Option<&str>, errors: &mut Vec<String>) -> Vec<(f64, f64, f64)> {
    let Some(raw) = raw else { return Vec::new() };
    let raw = unquote(raw);
    if raw.trim().is_empty() {
        return Vec::new();
    }
    let mut out = Vec::new();
    for chunk in raw.split(';') {
        let parts: Vec<&str> = chunk.split(',').map(str::trim).collect();
        let parsed: Option<Vec<f64>> =
            parts.iter().map(|p| p.parse::<f64>().ok()).collect();
        match parsed {
            Some(v) if v.len() == 3 => out.push((v[0], v[1], v[2])),
            _ => errors.push(format!(
                "outputs.geometry_points: expected `t1,t2,y` triples separated by `;`, got `{chunk}`"
            )),
        }
    }
    out
}

/// Canonical serialisation; `parse(serialize(parse(text)))` equals
/// `parse(text)`.
pub fn serialize_scenario(config: &ScenarioConfig) -> String {
    let mut out = String::new();
    let push = |out: &mut String, line: String| {
        out.push_str(&line);
        out.push('\n');
    };
    push(&mut out, format!("name = \"{}\"", config.name));
    push(&mut out, String::new());
    push(&mut out, "[grid]".into());
    push(&mut out, format!("kappa = {}", fmt_f64(config.grid.kappa)));
    push(&mut out, format!("nx = {}", config.grid.nx));
    push(&mut out, format!("y_min = {}", fmt_f64(config.grid.y_min)));
    push(&mut out, format!("y_max = {}", fmt_f64(config.grid.y_max)));
    push(&mut out, format!("ny = {}", config.grid.ny));
    push(&mut out, String::new());
    push(&mut out, "[initial]".into());
    push(&mut out, format!("m = {}", config.m));
    push(&mut out, format!("w11 = \"{}\"", config.initial.w11.source()));
    if let Some(e) = &config.initial.w12 {
        push(&mut out, format!("w12 = \"{}\"", e.source()));
    }
    if let Some(e) = &config.initial.w22 {
        push(&mut out, format!("w22 = \"{}\"", e.source()));
    }
    for (i, field) in config.initial.alpha_re.iter().enumerate() {
        if let Some(e) = field {
            push(&mut out, format!("alpha{}_re = \"{}\"", i + 1, e.source()));
        }
    }
    for (i, field) in config.initial.alpha_im.iter().enumerate() {
        if let Some(e) = field {
            push(&mut out, format!("alpha{}_im = \"{}\"", i + 1, e.source()));
        }
    }
    if let Some(ev) = &config.evolution {
        push(&mut out, String::new());
        push(&mut out, "[evolution]".into());
        push(&mut out, format!("dt = {}", fmt_f64(ev.dt)));
        push(&mut out, format!("t1_max = {}", fmt_f64(ev.t_max[0])));
        if ev.t_max.len() > 1 {
            push(&mut out, format!("t2_max = {}", fmt_f64(ev.t_max[1])));
        }
        if let Some(c) = ev.residual_ceiling {
            push(&mut out, format!("residual_ceiling = {}", fmt_f64(c)));
        }
        push(&mut out, format!("store_every = {}", ev.store_every));
        push(&mut out, format!("t1_line_every = {}", ev.t1_line_every));
        if let Some(e) = &ev.free_w12 {
            push(&mut out, format!("free_w12 = \"{}\"", e.source()));
        }
        if let Some(e) = &ev.free_w22 {
            push(&mut out, format!("free_w22 = \"{}\"", e.source()));
        }
    }
    push(&mut out, String::new());
    push(&mut out, "[outputs]".into());
    push(&mut out, format!("residual_report = {}", config.outputs.residual_report));
    push(&mut out, format!("phi_scan = {}", config.outputs.phi_scan));
    if let Some(s) = config.outputs.scan_t1 {
        push(
            &mut out,
            format!("scan_t1 = \"{}:{}:{}\"", fmt_f64(s.start), fmt_f64(s.stop), s.count),
        );
    }
    if let Some(s) = config.outputs.scan_t2 {
        push(
            &mut out,
            format!("scan_t2 = \"{}:{}:{}\"", fmt_f64(s.start), fmt_f64(s.stop), s.count),
        );
    }
    push(&mut out, format!("scan_y = {}", fmt_f64(config.outputs.scan_y)));
    if !config.outputs.geometry_points.is_empty() {
        let pts: Vec<String> = config
            .outputs
            .geometry_points
            .iter()
            .map(|(a, b, c)| format!("{},{},{}", fmt_f64(*a), fmt_f64(*b), fmt_f64(*c)))
            .collect();
        push(&mut out, format!("geometry_points = \"{}\"", pts.join("; ")));
    }
    push(&mut out, format!("trajectory_csv = {}", config.outputs.trajectory_csv));
    push(&mut out, String::new());
    push(&mut out, "[tolerances]".into());
    push(&mut out, format!("verify_tol = {}", fmt_f64(config.tolerances.verify_tol)));
    out
}

fn fmt_f64(v: f64) -> String {
    // shortest representation that round-trips
    let s = format!("{v}");
    if s.parse::<f64>() == Ok(v) {
        s
    } else {
        format!("{v:.17e}")
    }
}

/// Evaluates the initial-data expressions on the grid at t = 0 and builds
/// the admissible state (ρ := det W⁻¹).
pub fn build_initial_state(config: &ScenarioConfig) -> Result<AnsatzState, String> {
    let g = &config.grid;
    let n = g.node_count();
    let t0 = vec![0.0; config.m];
    let eval_field = |expr: &Option<Expr>, name: &str| -> Result<Vec<f64>, String> {
        let mut out = vec![0.0; n];
        if let Some(e) = expr {
            for iy in 0..g.ny {
                for ix in 0..g.nx {
                    let b = Bindings::at(g.x(ix), g.y(iy), &t0, g.kappa);
                    out[g.idx(ix, iy)] =
                        e.eval(&b).map_err(|err| format!("{name}: {err}"))?;
                }
            }
        }
        Ok(out)
    };
    let w11 = eval_field(&Some(config.initial.w11.clone()), "w11")?;
    let winv = if config.m == 2 {
        let w12 = eval_field(&config.initial.w12, "w12")?;
        let w22 = eval_field(&config.initial.w22, "w22")?;
        vec![w11, w12, w22]
    } else {
        vec![w11]
    };
    let mut alpha = Vec::with_capacity(config.m);
    for i in 0..config.m {
        let re = eval_field(&config.initial.alpha_re[i], &format!("alpha{}_re", i + 1))?;
        let im = eval_field(&config.initial.alpha_im[i], &format!("alpha{}_im", i + 1))?;
        alpha.push(
            re.iter()
                .zip(&im)
                .map(|(&a, &b)| C64::new(a, b))
                .collect::<Vec<C64>>(),
        );
    }
    let rho: Vec<f64> = (0..n)
        .map(|k| {
            if config.m == 1 {
                winv[0][k]
            } else {
                winv[0][k] * winv[2][k] - winv[1][k] * winv[1][k]
            }
        })
        .collect();
    AnsatzState::new(g.clone(), config.m, winv, alpha, rho, t0).map_err(|e| e.to_string())
}

/// Core evolution config with the free-choice expressions compiled into
/// callbacks.
pub fn build_evolution_config(config: &ScenarioConfig) -> Result<EvolutionConfig, String> {
    let Some(ev) = &config.evolution else {
        return Err("scenario has no [evolution] section".to_string());
    };
    let kappa = config.grid.kappa;
    let as_free = |expr: &Option<Expr>| -> Option<slfib_core::evolve::FreeField> {
        expr.as_ref().map(|e| {
            let e = e.clone();
            Arc::new(move |x: f64, y: f64, t: &[f64]| {
                let b = Bindings::at(x, y, t, kappa);
                // expression errors surface as NaN and trip the finiteness
                // checks with a positional diagnostic
                e.eval(&b).unwrap_or(f64::NAN)
            }) as slfib_core::evolve::FreeField
        })
    };
    let cfg = EvolutionConfig {
        m: config.m,
        t_max: ev.t_max.clone(),
        dt: ev.dt,
        residual_ceiling: ev.residual_ceiling,
        free_w12: as_free(&ev.free_w12),
        free_w22: as_free(&ev.free_w22),
        store_every: ev.store_every,
        t1_line_every: ev.t1_line_every,
    };
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "flat"

[grid]
kappa = 1.0
nx = 16
y_min = 0.0
y_max = 1.0
ny = 4

[initial]
m = 2
w11 = "1"
w12 = "0"
w22 = "1"
"#;

    #[test]
    fn minimal_scenario_fills_defaults() {
        let config = parse_scenario_str(MINIMAL).unwrap();
        assert_eq!(config.name, "flat");
        assert_eq!(config.m, 2);
        assert!(config.evolution.is_none());
        assert!(config.outputs.residual_report);
        assert_eq!(config.tolerances.verify_tol, 1e-10);
        let state = build_initial_state(&config).unwrap();
        assert_eq!(state.winv[0][0], 1.0);
    }

    #[test]
    fn expression_evaluates_at_origin() {
        let text = MINIMAL.replace("w11 = \"1\"", "w11 = \"1 + 0.2*sin(2*pi*x)\"");
        let config = parse_scenario_str(&text).unwrap();
        let state = build_initial_state(&config).unwrap();
        assert!((state.winv[0][0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn all_validation_errors_are_listed() {
        let bad = r#"
[grid]
kappa = -1.0
nx = -4
ny = 4

[initial]
m = 3
w11 = "1 +"
"#;
        match parse_scenario_str(bad) {
            Err(ScenarioError::Validation(errors)) => {
                let joined = errors.join("\n");
                assert!(joined.contains("grid.Nx must be ≥ 8"), "{joined}");
                assert!(joined.contains("grid.kappa must be > 0"), "{joined}");
                assert!(joined.contains("initial.m must be 1 or 2"), "{joined}");
                assert!(joined.contains("initial.w11"), "{joined}");
                assert!(errors.len() >= 4, "{joined}");
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn non_spd_initial_data_is_rejected() {
        let text = MINIMAL.replace("w12 = \"0\"", "w12 = \"2\""); // det = 1 − 4 < 0
        match parse_scenario_str(&text) {
            Err(ScenarioError::Validation(errors)) => {
                assert!(errors[0].contains("positive definite"), "{errors:?}");
            }
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn roundtrip_parse_serialize_parse() {
        let text = r#"
name = "roundtrip"

[grid]
kappa = 2.0
nx = 32
y_min = -0.5
y_max = 0.5
ny = 5

[initial]
m = 2
w11 = "1 + 0.2*sin(2*pi*x/kappa)"
w12 = "0"
w22 = "2 + cos(2*pi*x/kappa)"
alpha1_im = "0.1*sin(2*pi*x/kappa)"

[evolution]
dt = 0.01
t1_max = 0.1
t2_max = 0.1
residual_ceiling = 1e-6
store_every = 2

[outputs]
phi_scan = true
scan_t1 = "0:0.1:5"
scan_t2 = "0:0.05:3"
scan_y = 0.25
geometry_points = "0,0,0.25; 0.1,0.05,0.25"

[tolerances]
verify_tol = 1e-9
"#;
        let config = parse_scenario_str(text).unwrap();
        let serialized = serialize_scenario(&config);
        let reparsed = parse_scenario_str(&serialized).unwrap();
        assert_eq!(config, reparsed);
    }
}
