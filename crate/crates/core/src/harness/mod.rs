//! Scenario files, experiment dispatch, persistence and the acceptance
//! checks behind the `jmflow` command line.

mod record;
mod scenario;
mod store;
pub mod verify;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use crate::action::phi_free;
use crate::dynamics::{integrate, Outcome};
use crate::error::{JmError, Result};
use crate::horofunction::{
    busemann_estimate, busemann_on_lattice, viscosity_residual, HorofunctionField, Lattice,
};
use crate::model::PhaseState;
use crate::rays::{compactness_experiment, gr_membership, CompactnessOptions, RayOptions};
use crate::shape::{limit_shape, solve_velocity_field, ConeSpec, ShapeFitOptions};
use crate::slice::{
    box_counting_dimension, characteristic_time, differential_of_field, dyadic_scales,
    flow_saturate, hausdorff_measure_patch, patch_graph, phase_coordinates, ShootingField,
};

pub use record::{
    append_record, num, opt_num, read_ledger, read_numeric_csv, save_json, RunRecord, Table,
    LEDGER_FILE,
};
pub use scenario::{
    load_scenario, rehash, sha256_hex, Grid, GridSpec, NamedShape, Scenario, Tolerances,
    SCHEMA_VERSION,
};
pub use store::{PhiStore, PhiSummary, CACHE_ENV};

/// One experiment with its parameters.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "experiment", rename_all = "kebab-case")]
pub enum Experiment {
    Integrate {
        state: String,
        t_end: f64,
    },
    Phi {
        h: f64,
        from: Option<String>,
        to: Option<String>,
        batch: Option<PathBuf>,
    },
    Ray {
        state: String,
        t_max: f64,
    },
    Busemann {
        ray: String,
        grid: String,
        tol: f64,
    },
    Viscosity {
        field: PathBuf,
    },
    LimitShape {
        state: String,
        horizon: f64,
    },
    ShapeSolve {
        a: String,
        points: String,
        alpha: Option<f64>,
        r: Option<f64>,
    },
    Slice {
        a: String,
        alpha: Option<f64>,
        r: Option<f64>,
        grid_spec: String,
        flow: usize,
    },
    Dimension {
        cloud: PathBuf,
        scales: usize,
    },
    Compactness {
        sequence: PathBuf,
        grid: String,
    },
    VerifyAll {
        determinism: bool,
        only: Vec<u32>,
    },
}

pub const EXPERIMENTS: [&str; 11] = [
    "integrate",
    "phi",
    "ray",
    "busemann",
    "viscosity",
    "limit-shape",
    "shape-solve",
    "slice",
    "dimension",
    "compactness",
    "verify-all",
];

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Integrate { .. } => "integrate",
            Experiment::Phi { .. } => "phi",
            Experiment::Ray { .. } => "ray",
            Experiment::Busemann { .. } => "busemann",
            Experiment::Viscosity { .. } => "viscosity",
            Experiment::LimitShape { .. } => "limit-shape",
            Experiment::ShapeSolve { .. } => "shape-solve",
            Experiment::Slice { .. } => "slice",
            Experiment::Dimension { .. } => "dimension",
            Experiment::Compactness { .. } => "compactness",
            Experiment::VerifyAll { .. } => "verify-all",
        }
    }

    fn needs_scenario(&self) -> bool {
        !matches!(self, Experiment::Dimension { .. } | Experiment::VerifyAll { .. })
    }
}

#[derive(Debug, Clone)]
pub struct RunContext {
    pub out_dir: PathBuf,
    pub seed: u64,
    pub scenario: Option<Scenario>,
}

/// Result of a run: the ledger record and the main result for display.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub record: RunRecord,
    pub result: Value,
    /// False when a check-style experiment ran but did not pass.
    pub passed: bool,
}

struct Outputs {
    dir: PathBuf,
    paths: Vec<PathBuf>,
}

impl Outputs {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn table(&mut self, name: &str, t: &Table) -> Result<()> {
        let p = self.path(name);
        t.save(&p)?;
        self.paths.push(p);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, v: &T) -> Result<()> {
        let p = self.path(name);
        save_json(&p, v)?;
        self.paths.push(p);
        Ok(())
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

/// Runs one experiment, writes its outputs under `ctx.out_dir` and appends a
/// record to the run ledger there.
pub fn run_experiment(exp: &Experiment, ctx: &RunContext) -> Result<RunOutput> {
    let t0 = Instant::now();
    let sc = match (&ctx.scenario, exp.needs_scenario()) {
        (Some(s), _) => Some(s),
        (None, true) => {
            return Err(JmError::Precondition(format!(
                "`{}` needs --scenario",
                exp.name()
            )))
        }
        (None, false) => None,
    };
    let mut out = Outputs {
        dir: ctx.out_dir.clone(),
        paths: Vec::new(),
    };
    std::fs::create_dir_all(&out.dir)?;
    let (result, passed) = match exp {
        Experiment::Integrate { state, t_end } => (run_integrate(sc.unwrap(), state, *t_end, &mut out)?, true),
        Experiment::Phi { h, from, to, batch } => {
            (run_phi(sc.unwrap(), *h, from.as_deref(), to.as_deref(), batch.as_deref(), &mut out)?, true)
        }
        Experiment::Ray { state, t_max } => (run_ray(sc.unwrap(), state, *t_max, &mut out)?, true),
        Experiment::Busemann { ray, grid, tol } => (run_busemann(sc.unwrap(), ray, grid, *tol, &mut out)?, true),
        Experiment::Viscosity { field } => (run_viscosity(sc.unwrap(), field, &mut out)?, true),
        Experiment::LimitShape { state, horizon } => {
            let s = resolve_state(sc.unwrap(), state)?;
            let est = limit_shape(&sc.unwrap().system, &s, *horizon, &ShapeFitOptions::default())?;
            out.json("limit_shape.json", &est)?;
            (to_value(&est), true)
        }
        Experiment::ShapeSolve { a, points, alpha, r } => {
            (run_shape_solve(sc.unwrap(), a, points, *alpha, *r, &mut out)?, true)
        }
        Experiment::Slice {
            a,
            alpha,
            r,
            grid_spec,
            flow,
        } => (run_slice(sc.unwrap(), a, *alpha, *r, grid_spec, *flow, &mut out)?, true),
        Experiment::Dimension { cloud, scales } => {
            let (_, rows) = read_numeric_csv(cloud)?;
            let sc_list = dyadic_scales(&rows, *scales)?;
            let est = box_counting_dimension(&rows, &sc_list)?;
            out.json("dimension.json", &est)?;
            (to_value(&est), true)
        }
        Experiment::Compactness { sequence, grid } => {
            (run_compactness(sc.unwrap(), sequence, grid, &mut out)?, true)
        }
        Experiment::VerifyAll { determinism, only } => run_verify(ctx, *determinism, only, &mut out)?,
    };
    let record = RunRecord {
        command: exp.name().into(),
        scenario: sc.map(|s| s.source.clone()),
        scenario_hash: sc.map(|s| s.hash.clone()),
        parameters: to_value(exp),
        outputs: out.paths.iter().map(|p| p.display().to_string()).collect(),
        wall_time_s: t0.elapsed().as_secs_f64(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: ctx.seed,
    };
    append_record(&ctx.out_dir, &record)?;
    Ok(RunOutput {
        record,
        result,
        passed,
    })
}

/// A state by name, by position in name order, or from a CSV file whose
/// first row holds `q` then `v`.
fn resolve_state(sc: &Scenario, key: &str) -> Result<PhaseState> {
    if let Some(s) = sc.states.get(key) {
        return Ok(s.clone());
    }
    if let Ok(k) = key.parse::<usize>() {
        return sc.states.values().nth(k).cloned().ok_or_else(|| JmError::Schema {
            field: format!("states[{k}]"),
            message: format!("only {} states", sc.states.len()),
        });
    }
    if Path::new(key).is_file() {
        let (_, rows) = read_numeric_csv(Path::new(key))?;
        let row = rows.first().ok_or_else(|| JmError::Io(format!("{key}: no rows")))?;
        let n = sc.system.ndof();
        // trajectory exports carry a leading time column
        let flat = match row.len() {
            l if l == 2 * n => &row[..],
            l if l > 2 * n => &row[1..=2 * n],
            _ => {
                return Err(JmError::ShapeMismatch {
                    expected: 2 * n,
                    got: row.len(),
                })
            }
        };
        let s = PhaseState::from_flat(&sc.system, flat)?;
        if let Some((i, j, distance)) = sc.system.collision(&s.q) {
            return Err(JmError::StateCollision {
                state: key.into(),
                i,
                j,
                distance,
            });
        }
        return Ok(s);
    }
    sc.state(key).cloned()
}

/// A grid by name, a TOML lattice spec file, or a CSV file of points.
fn resolve_grid(sc: &Scenario, key: &str) -> Result<Grid> {
    if let Some(g) = sc.grids.get(key) {
        return Ok(g.clone());
    }
    let p = Path::new(key);
    if p.is_file() {
        if key.ends_with(".toml") {
            let text = std::fs::read_to_string(p)?;
            let spec: GridSpec = toml::from_str(&text).map_err(|e| JmError::Schema {
                field: key.into(),
                message: e.message().trim().into(),
            })?;
            let (Some(center), Some(spacing), Some(w)) = (spec.center, spec.spacing, spec.half_width) else {
                return Err(JmError::Schema {
                    field: key.into(),
                    message: "lattice spec needs center, spacing and half_width".into(),
                });
            };
            sc.system.check_shape(&center)?;
            return Ok(Grid::Lattice(Lattice::reduced(&sc.system, center, spacing, w)));
        }
        let (_, rows) = read_numeric_csv(p)?;
        for r in &rows {
            sc.system.check_shape(r)?;
        }
        return Ok(Grid::Points(rows));
    }
    sc.grid(key).cloned()
}

fn resolve_shape(sc: &Scenario, key: &str) -> Result<(Vec<f64>, Option<f64>, Option<f64>)> {
    if let Some(s) = sc.shapes.get(key) {
        return Ok((s.a.clone(), s.alpha, s.r));
    }
    let p = Path::new(key);
    if p.is_file() {
        let (_, rows) = read_numeric_csv(p)?;
        let a = rows.into_iter().next().ok_or_else(|| JmError::Io(format!("{key}: no rows")))?;
        sc.system.check_shape(&a)?;
        return Ok((a, None, None));
    }
    sc.shape(key).map(|s| (s.a.clone(), s.alpha, s.r))
}

fn cone_for(sc: &Scenario, a: &str, alpha: Option<f64>, r: Option<f64>) -> Result<ConeSpec> {
    let (a, da, dr) = resolve_shape(sc, a)?;
    ConeSpec::new(&sc.system, a, alpha.or(da).unwrap_or(0.9), r.or(dr).unwrap_or(1.0))
}

fn run_integrate(sc: &Scenario, state: &str, t_end: f64, out: &mut Outputs) -> Result<Value> {
    let s = resolve_state(sc, state)?;
    let o = sc.integration_options();
    match integrate(&sc.system, &s, t_end, &o)? {
        Outcome::Complete(t) => {
            let p = out.path("trajectory.csv");
            t.write_csv(std::io::BufWriter::new(std::fs::File::create(&p)?))?;
            out.paths.push(p);
            let meta = t.metadata();
            out.json("trajectory.json", &meta)?;
            Ok(meta)
        }
        Outcome::Singular(rep) => Err(match rep.classification {
            crate::dynamics::SingularityKind::StepFailure => JmError::StepFailure { t: rep.last_time },
            _ => JmError::CollisionApproach { t_star: rep.t_star },
        }),
    }
}

fn phi_summary(sc: &Scenario, h: f64, x: &[f64], y: &[f64], store: Option<&PhiStore>) -> Result<PhiSummary> {
    let o = sc.action_options();
    if let Some(st) = store {
        if let Some(v) = st.get(&sc.system, h, x, y, &o) {
            return Ok(v);
        }
    }
    let r = phi_free(&sc.system, h, x, y, &o)?;
    let s = PhiSummary {
        value: r.value,
        t_star: r.t_star,
        status: r.inner.status,
        segments: r.inner.minimizer.segments(),
        gradient_norm: r.inner.gradient_norm,
        polished: r.inner.polished,
    };
    if let Some(st) = store {
        st.insert(&sc.system, h, x, y, &o, s.clone());
    }
    Ok(s)
}

fn run_phi(
    sc: &Scenario,
    h: f64,
    from: Option<&str>,
    to: Option<&str>,
    batch: Option<&Path>,
    out: &mut Outputs,
) -> Result<Value> {
    if !(h >= 0.0) {
        return Err(JmError::Precondition(format!("energy h = {h} must be nonnegative")));
    }
    let store = PhiStore::from_env()?;
    let n = sc.system.ndof();
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = match (batch, from, to) {
        (Some(b), None, None) => {
            let (_, rows) = read_numeric_csv(b)?;
            rows.into_iter()
                .map(|r| {
                    if r.len() != 2 * n {
                        return Err(JmError::ShapeMismatch {
                            expected: 2 * n,
                            got: r.len(),
                        });
                    }
                    Ok((r[..n].to_vec(), r[n..].to_vec()))
                })
                .collect::<Result<_>>()?
        }
        (None, Some(f), Some(t)) => vec![
            (resolve_state(sc, f)?.q.to_vec(), resolve_state(sc, t)?.q.to_vec()),
        ],
        _ => {
            return Err(JmError::Precondition(
                "give either --from and --to or --batch".into(),
            ))
        }
    };
    let mut table = Table::new(&["pair", "value", "t_star", "status", "segments", "gradient_norm"]);
    let mut results = Vec::new();
    for (k, (x, y)) in pairs.iter().enumerate() {
        let s = phi_summary(sc, h, x, y, store.as_ref())?;
        table.push(vec![
            k.to_string(),
            num(s.value),
            num(s.t_star),
            to_value(&s.status).as_str().unwrap_or("").to_string(),
            s.segments.to_string(),
            num(s.gradient_norm),
        ]);
        results.push(s);
    }
    if let Some(st) = &store {
        st.save()?;
    }
    out.table("phi.csv", &table)?;
    let result = if batch.is_some() {
        to_value(&results)
    } else {
        let s = &results[0];
        json!({
            "value": s.value,
            "T_star": s.t_star,
            "status": s.status,
            "M": s.segments,
            "gradient_norm": s.gradient_norm,
        })
    };
    out.json("phi.json", &result)?;
    Ok(result)
}

fn run_ray(sc: &Scenario, state: &str, t_max: f64, out: &mut Outputs) -> Result<Value> {
    let s = resolve_state(sc, state)?;
    let opts = RayOptions {
        t_max,
        ..sc.ray_options()
    };
    let cert = gr_membership(&sc.system, &s, &opts)?;
    let mut t = Table::new(&["a", "b", "action", "phi", "gap", "note"]);
    for w in &cert.windows {
        t.push(vec![
            num(w.a),
            num(w.b),
            num(w.action),
            opt_num(w.phi),
            opt_num(w.gap),
            w.note.clone().unwrap_or_default(),
        ]);
    }
    out.table("ray_windows.csv", &t)?;
    out.json("ray.json", &cert)?;
    Ok(to_value(&cert))
}

fn field_table(f: &HorofunctionField) -> Table {
    let n = f.grid.first().map(Vec::len).unwrap_or(0);
    let mut header: Vec<String> = vec!["point".into()];
    header.extend((0..n).map(|k| format!("x{k}")));
    header.extend(["value".into(), "last_increment".into(), "valid".into()]);
    let mut t = Table::new(&header);
    for (k, x) in f.grid.iter().enumerate() {
        let mut row = vec![k.to_string()];
        row.extend(x.iter().map(|v| num(*v)));
        row.push(num(f.values[k]));
        row.push(num(f.increments[k]));
        row.push(f.valid[k].to_string());
        t.push(row);
    }
    t
}

fn run_busemann(sc: &Scenario, ray: &str, grid: &str, tol: f64, out: &mut Outputs) -> Result<Value> {
    let s = resolve_state(sc, ray)?;
    let ms = &sc.system;
    let h = s.energy(ms)?;
    if h < -1e-9 {
        return Err(JmError::Precondition(format!("ray energy {h} is negative")));
    }
    let h = h.max(0.0);
    let bo = crate::horofunction::BusemannOptions {
        buse_tol: tol,
        ..sc.busemann_options()
    };
    let t_end = bo.schedule.iter().copied().fold(0.0, f64::max);
    let traj = integrate(ms, &s, t_end, &sc.integration_options())?.into_result()?;
    let field = match resolve_grid(sc, grid)? {
        Grid::Lattice(l) => busemann_on_lattice(ms, &traj, h, &l, &bo)?,
        Grid::Points(p) => busemann_estimate(ms, &traj, h, &p, &bo)?,
    };
    out.table("busemann.csv", &field_table(&field))?;
    out.json("busemann_field.json", &field)?;
    Ok(json!({
        "h": field.h,
        "points": field.grid.len(),
        "truncation_times": field.truncation_times,
        "max_increment": field.max_increment(),
        "converged": field.converged,
    }))
}

fn run_viscosity(sc: &Scenario, field: &Path, out: &mut Outputs) -> Result<Value> {
    let text = std::fs::read_to_string(field)?;
    let f: HorofunctionField = serde_json::from_str(&text).map_err(|e| JmError::Schema {
        field: field.display().to_string(),
        message: e.to_string(),
    })?;
    let rep = viscosity_residual(&sc.system, &f, f.h)?;
    let k = rep.points.first().map(|p| p.gradient.len()).unwrap_or(0);
    let mut header: Vec<String> = vec!["point".into()];
    header.extend((0..k).map(|j| format!("grad{j}")));
    header.extend(["residual".into(), "masked".into()]);
    let mut t = Table::new(&header);
    for p in &rep.points {
        let mut row = vec![p.index.to_string()];
        row.extend(p.gradient.iter().map(|v| num(*v)));
        row.push(num(p.residual));
        row.push(p.masked.to_string());
        t.push(row);
    }
    out.table("viscosity.csv", &t)?;
    Ok(json!({
        "spacing": rep.spacing,
        "median_abs": rep.median_abs,
        "p90_abs": rep.p90_abs,
        "max_abs": rep.max_abs,
        "masked": rep.masked,
    }))
}

fn run_shape_solve(
    sc: &Scenario,
    a: &str,
    points: &str,
    alpha: Option<f64>,
    r: Option<f64>,
    out: &mut Outputs,
) -> Result<Value> {
    use rayon::prelude::*;
    let ms = &sc.system;
    let cone = cone_for(sc, a, alpha, r)?;
    let pts = resolve_grid(sc, points)?.points();
    let opts = sc.shape_options();
    let sols: Vec<Result<_>> = pts
        .par_iter()
        .map(|x| solve_velocity_field(ms, &cone, x, None, &opts))
        .collect();
    let n = ms.ndof();
    let mut header: Vec<String> = vec!["point".into()];
    header.extend((0..n).map(|k| format!("x{k}")));
    header.extend((0..n).map(|k| format!("v{k}")));
    header.extend(["residual".into(), "status".into()]);
    let mut t = Table::new(&header);
    let mut converged = 0;
    for (k, (x, s)) in pts.iter().zip(&sols).enumerate() {
        let mut row = vec![k.to_string()];
        row.extend(x.iter().map(|v| num(*v)));
        match s {
            Ok(s) => {
                converged += 1;
                row.extend(s.v.iter().map(|v| num(*v)));
                row.push(num(s.residual));
                row.push("converged".into());
            }
            Err(e) => {
                row.extend(std::iter::repeat_n(String::new(), n + 1));
                row.push(e.code().into());
            }
        }
        t.push(row);
    }
    out.table("shape_solve.csv", &t)?;
    Ok(json!({ "points": pts.len(), "converged": converged, "energy": cone.energy(ms) }))
}

fn run_slice(
    sc: &Scenario,
    a: &str,
    alpha: Option<f64>,
    r: Option<f64>,
    grid_spec: &str,
    flow: usize,
    out: &mut Outputs,
) -> Result<Value> {
    let ms = &sc.system;
    let cone = cone_for(sc, a, alpha, r)?;
    let lat = match resolve_grid(sc, grid_spec)? {
        Grid::Lattice(l) => l,
        Grid::Points(_) => {
            return Err(JmError::Precondition("slice needs a lattice grid spec".into()))
        }
    };
    let field = ShootingField {
        ms,
        cone: &cone,
        opts: sc.shape_options(),
    };
    let patch = differential_of_field(ms, &lat, 1e-3, &field)?;
    let k = patch.dim();
    let n = ms.ndof();
    let mut header: Vec<String> = vec!["point".into()];
    header.extend((0..n).map(|j| format!("x{j}")));
    header.extend((0..n).map(|j| format!("v{j}")));
    header.extend((0..k * k).map(|j| format!("dv{}{}", j / k, j % k)));
    header.extend(["jacobian".into(), "asymmetry".into(), "dropped".into()]);
    let mut t = Table::new(&header);
    for (i, p) in patch.points.iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(p.x.iter().map(|v| num(*v)));
        match &p.v {
            Some(v) => row.extend(v.iter().map(|x| num(*x))),
            None => row.extend(std::iter::repeat_n(String::new(), n)),
        }
        match &p.dv {
            Some(dv) => row.extend(dv.iter().map(|x| num(*x))),
            None => row.extend(std::iter::repeat_n(String::new(), k * k)),
        }
        row.push(opt_num(p.jacobian));
        row.push(opt_num(p.asymmetry));
        row.push(p.dropped.clone().unwrap_or_default());
        t.push(row);
    }
    out.table("slice_patch.csv", &t)?;
    let m = hausdorff_measure_patch(&patch, lat.spacing.powi(k as i32));

    let cloud = flow_saturate(ms, &patch_graph(&patch), flow);
    let tau = characteristic_time(ms, &lat, &cone);
    let pc = phase_coordinates(ms, &cloud, tau);
    let mut ct = Table::new(&(0..2 * k).map(|j| format!("c{j}")).collect::<Vec<_>>());
    for p in &pc {
        ct.push(p.iter().map(|v| num(*v)).collect());
    }
    out.table("slice_cloud.csv", &ct)?;
    out.json("slice_measure.json", &m)?;
    Ok(json!({
        "points": patch.points.len(),
        "dropped": patch.dropped(),
        "measure": to_value(&m),
        "cloud_points": pc.len(),
        "flow_failures": cloud.failures.len(),
        "tau": tau,
    }))
}

fn run_compactness(sc: &Scenario, sequence: &Path, grid: &str, out: &mut Outputs) -> Result<Value> {
    let ms = &sc.system;
    let (_, rows) = read_numeric_csv(sequence)?;
    if rows.len() < 2 {
        return Err(JmError::Precondition(
            "sequence file needs members and a final limit row".into(),
        ));
    }
    let states: Vec<PhaseState> = rows
        .iter()
        .map(|r| PhaseState::from_flat(ms, r))
        .collect::<Result<_>>()?;
    let (s0, members) = states.split_last().unwrap();
    let pts = resolve_grid(sc, grid)?.points();
    let opts = CompactnessOptions {
        ray: sc.ray_options(),
        busemann: sc.busemann_options(),
        ..CompactnessOptions::default()
    };
    let rep = compactness_experiment(ms, members, s0, &pts, None, &opts)?;
    let mut t = Table::new(&["member", "point", "value"]);
    for (m, f) in rep.fields.iter().enumerate() {
        for (i, v) in f.values.iter().enumerate() {
            t.push(vec![m.to_string(), i.to_string(), num(*v)]);
        }
    }
    out.table("compactness_fields.csv", &t)?;
    let summary = json!({
        "energies": rep.energies,
        "limit_energy": rep.limit_energy,
        "energy_gaps": rep.energy_gaps,
        "min_distances": rep.min_distances,
        "limit_min_distance": rep.limit_min_distance,
        "energy_distance_bounds": rep.energy_distance_bounds,
        "cauchy": rep.cauchy,
        "verdicts": rep.verdicts,
        "limit_calibration": rep.limit_calibration,
    });
    out.json("compactness.json", &summary)?;
    Ok(summary)
}

fn run_verify(ctx: &RunContext, determinism: bool, only: &[u32], out: &mut Outputs) -> Result<(Value, bool)> {
    let vo = verify::VerifyOptions {
        seed: ctx.seed,
        extra: ctx.scenario.clone(),
        only: only.to_vec(),
    };
    let dir = out.path("verify");
    let mut checks = verify::run_checks(&vo);
    out.paths.extend(verify::write_outputs(&dir, &checks, ctx.seed)?);
    if determinism {
        let again = out.path("verify-repeat");
        let second = verify::run_checks(&vo);
        out.paths.extend(verify::write_outputs(&again, &second, ctx.seed)?);
        checks.push(verify::determinism_check(&dir, &again));
    }
    let passed = checks.iter().all(|c| c.ok());
    let lines: Vec<String> = checks.iter().map(|c| c.line()).collect();
    Ok((json!({ "passed": passed, "checks": lines }), passed))
}
