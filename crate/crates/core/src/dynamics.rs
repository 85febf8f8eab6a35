//! Integration of Newton's equations, the Hamiltonian flow map and
//! singularity diagnostics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{JmError, Result};
use crate::integrator::Dopri5;
use crate::model::{MassSystem, PhaseState};

/// Consecutive shrinking steps required before a close approach counts as a
/// collision.
const COLLISION_STREAK: usize = 10;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntegrationOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Bound on `|h(t) - h(0)| / max(1, |h(0)|)`.
    pub drift_bound: f64,
    /// Retries with a 100x tighter tolerance when the drift bound is missed.
    pub max_refinements: usize,
    /// When false an over-drifting run is returned with `valid = false`
    /// instead of failing.
    pub strict_drift: bool,
    pub max_steps: usize,
    /// Step cap as a fraction of the two-body time scale of the closest pair.
    pub kepler_step_factor: f64,
    /// Keep every accepted step (otherwise only `sample_times` and the end).
    pub record_steps: bool,
    /// Times the integrator lands on exactly.
    pub sample_times: Vec<f64>,
    /// Also integrate the state transition matrix.
    pub with_stm: bool,
}

impl Default for IntegrationOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-12,
            atol: 1e-14,
            drift_bound: 1e-8,
            max_refinements: 2,
            strict_drift: true,
            max_steps: 5_000_000,
            kepler_step_factor: 0.1,
            record_steps: true,
            sample_times: Vec::new(),
            with_stm: false,
        }
    }
}

impl IntegrationOptions {
    pub fn sampled(times: Vec<f64>) -> Self {
        Self {
            record_steps: false,
            sample_times: times,
            ..Self::default()
        }
    }
}

/// A sampled solution of Newton's equations.
///
/// Times are strictly increasing; a backward integration is stored reversed.
/// `action[k]` is the Lagrangian action `int 1/2||v||^2 + U` accumulated from
/// `times[0]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<PhaseState>,
    pub energies: Vec<f64>,
    pub action: Vec<f64>,
    pub max_drift: f64,
    pub drift_bound: f64,
    pub steps: usize,
    pub valid: bool,
    /// State transition matrix (row-major `2n x 2n`) from the initial to the
    /// final time, when requested.
    #[serde(skip)]
    pub stm: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SingularityKind {
    None,
    CollisionApproach,
    StepFailure,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SingularityReport {
    pub classification: SingularityKind,
    /// Extrapolated time at which the closest distance vanishes.
    pub t_star: f64,
    pub last_time: f64,
    pub min_distance: f64,
    pub pair: (usize, usize),
    /// `(t, I(t))` over the final steps.
    pub inertia_tail: Vec<(f64, f64)>,
    /// Least-squares slope of `I` over the tail.
    pub inertia_trend: f64,
}

impl From<SingularityReport> for JmError {
    fn from(r: SingularityReport) -> Self {
        match r.classification {
            SingularityKind::CollisionApproach => JmError::CollisionApproach { t_star: r.t_star },
            _ => JmError::StepFailure { t: r.last_time },
        }
    }
}

#[derive(Debug, Clone)]
pub enum Outcome {
    Complete(Trajectory),
    Singular(SingularityReport),
}

impl Outcome {
    pub fn into_result(self) -> Result<Trajectory> {
        match self {
            Outcome::Complete(t) => Ok(t),
            Outcome::Singular(r) => Err(r.into()),
        }
    }

    pub fn trajectory(&self) -> Option<&Trajectory> {
        match self {
            Outcome::Complete(t) => Some(t),
            Outcome::Singular(_) => None,
        }
    }
}

/// Integrates `s0` from time 0 to `t_end` (which may be negative).
pub fn integrate(
    ms: &MassSystem,
    s0: &PhaseState,
    t_end: f64,
    opts: &IntegrationOptions,
) -> Result<Outcome> {
    integrate_from(ms, s0, 0.0, t_end, opts)
}

/// Integrates `s0` given at time `t0` to `t_end`.
pub fn integrate_from(
    ms: &MassSystem,
    s0: &PhaseState,
    t0: f64,
    t_end: f64,
    opts: &IntegrationOptions,
) -> Result<Outcome> {
    ms.check_shape(&s0.q)?;
    ms.check_shape(&s0.v)?;
    ms.potential(&s0.q)?;
    if !t_end.is_finite() || !t0.is_finite() {
        return Err(JmError::Precondition("integration times must be finite".into()));
    }
    let mut rtol = opts.rtol;
    let mut attempt = 0;
    loop {
        match run(ms, s0, t0, t_end, opts, rtol)? {
            Outcome::Complete(mut traj) => {
                if traj.max_drift <= opts.drift_bound {
                    return Ok(Outcome::Complete(traj));
                }
                if attempt < opts.max_refinements && rtol > 1e-14 {
                    attempt += 1;
                    rtol = (rtol * 1e-2).max(1e-14);
                    continue;
                }
                if opts.strict_drift {
                    return Err(JmError::EnergyDrift {
                        drift: traj.max_drift,
                        bound: opts.drift_bound,
                    });
                }
                traj.valid = false;
                return Ok(Outcome::Complete(traj));
            }
            singular => return Ok(singular),
        }
    }
}

/// The time-`t` map of the Newtonian flow.
pub fn flow_map(ms: &MassSystem, s0: &PhaseState, t: f64) -> Result<PhaseState> {
    if t == 0.0 {
        return Ok(s0.clone());
    }
    let opts = IntegrationOptions {
        record_steps: false,
        ..IntegrationOptions::default()
    };
    flow_map_with(ms, s0, t, &opts)
}

pub fn flow_map_with(
    ms: &MassSystem,
    s0: &PhaseState,
    t: f64,
    opts: &IntegrationOptions,
) -> Result<PhaseState> {
    if t == 0.0 {
        return Ok(s0.clone());
    }
    let traj = integrate(ms, s0, t, opts)?.into_result()?;
    let idx = if t > 0.0 { traj.states.len() - 1 } else { 0 };
    Ok(traj.states[idx].clone())
}

fn kepler_timescale(ms: &MassSystem, q: &[f64]) -> (f64, f64, usize, usize) {
    let (r, i, j) = ms.min_pair_distance(q);
    let m = ms.masses()[i] + ms.masses()[j];
    ((r * r * r / m).sqrt(), r, i, j)
}

struct Recorder {
    times: Vec<f64>,
    states: Vec<PhaseState>,
    energies: Vec<f64>,
    action: Vec<f64>,
    e0: f64,
    max_drift: f64,
}

impl Recorder {
    fn observe(&mut self, ms: &MassSystem, y: &[f64], n: usize) -> f64 {
        let e = ms.kinetic(&y[n..2 * n]) - ms.potential_raw(&y[..n]);
        let drift = (e - self.e0).abs() / self.e0.abs().max(1.0);
        if drift > self.max_drift {
            self.max_drift = drift;
        }
        e
    }

    fn push(&mut self, ms: &MassSystem, t: f64, y: &[f64], n: usize) {
        let q = &y[..n];
        let v = &y[n..2 * n];
        let e = self.observe(ms, y, n);
        self.times.push(t);
        self.states.push(PhaseState {
            q: q.to_vec().into(),
            v: v.to_vec(),
        });
        self.energies.push(e);
        self.action.push(y[2 * n]);
    }
}

fn rhs(ms: &MassSystem, n: usize, with_stm: bool, hess: &mut [f64], y: &[f64], dy: &mut [f64]) {
    let (q, rest) = y.split_at(n);
    let v = &rest[..n];
    dy[..n].copy_from_slice(v);
    ms.acceleration(q, &mut dy[n..2 * n]);
    dy[2 * n] = ms.kinetic(v) + ms.potential_raw(q);
    if with_stm {
        let m2 = 2 * n;
        let phi = &y[2 * n + 1..];
        let dphi = &mut dy[2 * n + 1..];
        ms.potential_hessian(q, hess);
        // rows 0..n of dPhi are rows n..2n of Phi
        dphi[..n * m2].copy_from_slice(&phi[n * m2..2 * n * m2]);
        for i in 0..n {
            let inv_m = 1.0 / ms.coord_mass(i);
            for c in 0..m2 {
                let mut s = 0.0;
                for k in 0..n {
                    s += hess[i * n + k] * phi[k * m2 + c];
                }
                dphi[(n + i) * m2 + c] = s * inv_m;
            }
        }
    }
}

fn run(
    ms: &MassSystem,
    s0: &PhaseState,
    t0: f64,
    t_end: f64,
    opts: &IntegrationOptions,
    rtol: f64,
) -> Result<Outcome> {
    let n = ms.ndof();
    let dir = if t_end >= t0 { 1.0 } else { -1.0 };
    let stm_len = if opts.with_stm { 4 * n * n } else { 0 };
    let mut y = vec![0.0; 2 * n + 1 + stm_len];
    y[..n].copy_from_slice(&s0.q);
    y[n..2 * n].copy_from_slice(&s0.v);
    if opts.with_stm {
        for i in 0..2 * n {
            y[2 * n + 1 + i * 2 * n + i] = 1.0;
        }
    }
    let mut hess = vec![0.0; n * n];
    let mut f = |_t: f64, y: &[f64], dy: &mut [f64]| rhs(ms, n, opts.with_stm, &mut hess, y, dy);

    // samples within rounding distance of an endpoint would force an underflow step
    let eps = 1e-12 * t0.abs().max(t_end.abs()).max(1.0);
    let mut targets: Vec<f64> = opts
        .sample_times
        .iter()
        .copied()
        .filter(|t| (t - t0) * dir > eps && (t_end - t) * dir > eps)
        .collect();
    targets.push(t_end);
    targets.sort_by(|a, b| (dir * a).partial_cmp(&(dir * b)).unwrap());
    targets.dedup();

    let e0 = ms.kinetic(&s0.v) - ms.potential_raw(&s0.q);
    let mut rec = Recorder {
        times: Vec::new(),
        states: Vec::new(),
        energies: Vec::new(),
        action: Vec::new(),
        e0,
        max_drift: 0.0,
    };
    rec.push(ms, t0, &y, n);
    if t_end == t0 {
        return Ok(Outcome::Complete(finish(rec, 0, opts, None, dir)));
    }

    let char_len = ms.max_pair_distance(&s0.q);
    let mut stepper = Dopri5::new(y.len(), 2 * n + 1, rtol, opts.atol);
    let (tau0, _, _, _) = kepler_timescale(ms, &s0.q);
    let mut h = dir * (1e-3 * tau0).min((t_end - t0).abs());
    let mut t = t0;
    let mut steps = 0usize;
    let mut target_idx = 0;
    let mut prev_rmin = ms.min_pair_distance(&s0.q).0;
    let mut streak = 0usize;
    let mut tail: Vec<(f64, f64)> = Vec::new();

    loop {
        let target = targets[target_idx];
        let (tau, rmin_now, pi, pj) = kepler_timescale(ms, &y[..n]);
        let cap = opts.kepler_step_factor * tau;
        if h.abs() > cap {
            h = dir * cap;
        }
        let mut landing = false;
        if (t + h - target) * dir >= 0.0 {
            h = target - t;
            landing = true;
        }
        let underflow = h.abs() <= 4.0 * f64::EPSILON * t.abs().max(1e-300) || h == 0.0;
        if underflow || steps >= opts.max_steps {
            let kind = if streak >= COLLISION_STREAK {
                SingularityKind::CollisionApproach
            } else {
                SingularityKind::StepFailure
            };
            return Ok(Outcome::Singular(report(ms, &y, n, t, kind, rmin_now, (pi, pj), tail)));
        }
        let ok = stepper.attempt(&mut f, t, &y, h);
        if !ok || stepper.err_new > 1.0 {
            h = if ok { stepper.next_step(h) } else { 0.25 * h };
            if !ok {
                stepper.invalidate();
            }
            continue;
        }
        let h_next = stepper.next_step(h);
        stepper.accept(&mut y);
        steps += 1;
        t = if landing { target } else { t + h };

        let (rmin, _, _) = ms.min_pair_distance(&y[..n]);
        if rmin < prev_rmin {
            streak += 1;
        } else {
            streak = 0;
        }
        prev_rmin = rmin;
        tail.push((t, ms.moment_of_inertia(&y[..n])));
        if tail.len() > COLLISION_STREAK {
            tail.remove(0);
        }
        if streak >= COLLISION_STREAK && (rmin <= 1e-10 * char_len || rmin == 0.0) {
            let (_, r, i, j) = kepler_timescale(ms, &y[..n]);
            return Ok(Outcome::Singular(report(
                ms,
                &y,
                n,
                t,
                SingularityKind::CollisionApproach,
                r,
                (i, j),
                tail,
            )));
        }

        if landing {
            rec.push(ms, t, &y, n);
            target_idx += 1;
            if target_idx == targets.len() {
                break;
            }
            h = h_next.abs().max(h.abs()) * dir;
        } else {
            if opts.record_steps {
                rec.push(ms, t, &y, n);
            } else {
                rec.observe(ms, &y, n);
            }
            h = h_next;
        }
    }
    let stm = opts.with_stm.then(|| y[2 * n + 1..].to_vec());
    Ok(Outcome::Complete(finish(rec, steps, opts, stm, dir)))
}

fn finish(
    mut rec: Recorder,
    steps: usize,
    opts: &IntegrationOptions,
    stm: Option<Vec<f64>>,
    dir: f64,
) -> Trajectory {
    if dir < 0.0 {
        rec.times.reverse();
        rec.states.reverse();
        rec.energies.reverse();
        rec.action.reverse();
        let a0 = rec.action[0];
        // the accumulator decreases backwards in time; re-anchor at the earliest sample
        rec.action.iter_mut().for_each(|a| *a -= a0);
    }
    Trajectory {
        times: rec.times,
        states: rec.states,
        energies: rec.energies,
        action: rec.action,
        max_drift: rec.max_drift,
        drift_bound: opts.drift_bound,
        steps,
        valid: true,
        stm,
    }
}

#[allow(clippy::too_many_arguments)]
fn report(
    ms: &MassSystem,
    y: &[f64],
    n: usize,
    t: f64,
    kind: SingularityKind,
    rmin: f64,
    pair: (usize, usize),
    tail: Vec<(f64, f64)>,
) -> SingularityReport {
    let (i, j) = pair;
    let d = ms.dim();
    let q = &y[..n];
    let v = &y[n..2 * n];
    let mut rdot = 0.0;
    for c in 0..d {
        let dr = q[j * d + c] - q[i * d + c];
        let dv = v[j * d + c] - v[i * d + c];
        rdot += dr * dv;
    }
    rdot /= rmin.max(f64::MIN_POSITIVE);
    // r ~ (t* - t)^{2/3} near a collision
    let t_star = if rdot < 0.0 { t - 1.5 * rmin / rdot } else { t };
    let trend = slope(&tail);
    SingularityReport {
        classification: kind,
        t_star,
        last_time: t,
        min_distance: rmin,
        pair,
        inertia_tail: tail,
        inertia_trend: trend,
    }
}

fn slope(pts: &[(f64, f64)]) -> f64 {
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx > 0.0 {
        sxy / sxx
    } else {
        0.0
    }
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn t_start(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn first(&self) -> &PhaseState {
        &self.states[0]
    }

    pub fn last(&self) -> &PhaseState {
        self.states.last().unwrap()
    }

    /// Fixed-energy action `A_h = A + h (t - t0)` at sample `k`.
    pub fn action_h(&self, k: usize, h: f64) -> f64 {
        self.action[k] + h * (self.times[k] - self.times[0])
    }

    fn bracket(&self, t: f64) -> Option<usize> {
        if t < self.times[0] || t > self.t_end() || self.len() < 2 {
            return if self.len() == 1 && t == self.times[0] {
                Some(0)
            } else {
                None
            };
        }
        let k = self.times.partition_point(|&s| s <= t);
        Some(k.saturating_sub(1).min(self.len() - 2))
    }

    /// State at time `t` by quintic Hermite interpolation between samples.
    pub fn state_at(&self, ms: &MassSystem, t: f64) -> Option<PhaseState> {
        let k = self.bracket(t)?;
        if self.len() == 1 {
            return Some(self.states[0].clone());
        }
        if t == self.times[k] {
            return Some(self.states[k].clone());
        }
        if t == self.times[k + 1] {
            return Some(self.states[k + 1].clone());
        }
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let hh = t1 - t0;
        let s = (t - t0) / hh;
        let (a, b) = (&self.states[k], &self.states[k + 1]);
        let n = ms.ndof();
        let mut a0 = vec![0.0; n];
        let mut a1 = vec![0.0; n];
        ms.acceleration(&a.q, &mut a0);
        ms.acceleration(&b.q, &mut a1);
        let s2 = s * s;
        let s3 = s2 * s;
        let s4 = s3 * s;
        let s5 = s4 * s;
        let h0 = 1.0 - 10.0 * s3 + 15.0 * s4 - 6.0 * s5;
        let h1 = s - 6.0 * s3 + 8.0 * s4 - 3.0 * s5;
        let h2 = 0.5 * s2 - 1.5 * s3 + 1.5 * s4 - 0.5 * s5;
        let h3 = 0.5 * s3 - s4 + 0.5 * s5;
        let h4 = -4.0 * s3 + 7.0 * s4 - 3.0 * s5;
        let h5 = 10.0 * s3 - 15.0 * s4 + 6.0 * s5;
        let d0 = -30.0 * s2 + 60.0 * s3 - 30.0 * s4;
        let d1 = 1.0 - 18.0 * s2 + 32.0 * s3 - 15.0 * s4;
        let d2 = s - 4.5 * s2 + 6.0 * s3 - 2.5 * s4;
        let d3 = 1.5 * s2 - 4.0 * s3 + 2.5 * s4;
        let d4 = -12.0 * s2 + 28.0 * s3 - 15.0 * s4;
        let d5 = 30.0 * s2 - 60.0 * s3 + 30.0 * s4;
        let mut q = vec![0.0; n];
        let mut v = vec![0.0; n];
        for i in 0..n {
            q[i] = h0 * a.q[i]
                + h1 * hh * a.v[i]
                + h2 * hh * hh * a0[i]
                + h5 * b.q[i]
                + h4 * hh * b.v[i]
                + h3 * hh * hh * a1[i];
            v[i] = (d0 * a.q[i]
                + d1 * hh * a.v[i]
                + d2 * hh * hh * a0[i]
                + d5 * b.q[i]
                + d4 * hh * b.v[i]
                + d3 * hh * hh * a1[i])
                / hh;
        }
        Some(PhaseState { q: q.into(), v })
    }

    /// Accumulated Lagrangian action at time `t` (cubic Hermite in the
    /// Lagrangian).
    pub fn action_at(&self, ms: &MassSystem, t: f64) -> Option<f64> {
        let k = self.bracket(t)?;
        if self.len() == 1 {
            return Some(self.action[0]);
        }
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let hh = t1 - t0;
        let s = (t - t0) / hh;
        let lag = |st: &PhaseState| ms.kinetic(&st.v) + ms.potential_raw(&st.q);
        let (l0, l1) = (lag(&self.states[k]), lag(&self.states[k + 1]));
        let (y0, y1) = (self.action[k], self.action[k + 1]);
        let s2 = s * s;
        let s3 = s2 * s;
        Some(
            (2.0 * s3 - 3.0 * s2 + 1.0) * y0
                + (s3 - 2.0 * s2 + s) * hh * l0
                + (-2.0 * s3 + 3.0 * s2) * y1
                + (s3 - s2) * hh * l1,
        )
    }

    /// `A_h` over `[a, b]` using interpolation where needed.
    pub fn action_between(&self, ms: &MassSystem, a: f64, b: f64, h: f64) -> Option<f64> {
        Some(self.action_at(ms, b)? - self.action_at(ms, a)? + h * (b - a))
    }

    /// Writes the CSV export: `t`, positions, velocities, energy.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        let n = self.states.first().map(|s| s.q.len()).unwrap_or(0);
        let mut header = vec!["t".to_string()];
        header.extend((0..n).map(|k| format!("q{k}")));
        header.extend((0..n).map(|k| format!("v{k}")));
        header.push("energy".into());
        writeln!(w, "{}", header.join(","))?;
        for ((t, s), e) in self.times.iter().zip(&self.states).zip(&self.energies) {
            let mut row = vec![fmt_num(*t)];
            row.extend(s.q.iter().map(|x| fmt_num(*x)));
            row.extend(s.v.iter().map(|x| fmt_num(*x)));
            row.push(fmt_num(*e));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// JSON metadata sidecar for the CSV export.
    pub fn metadata(&self) -> serde_json::Value {
        serde_json::json!({
            "samples": self.len(),
            "t_start": self.t_start(),
            "t_end": self.t_end(),
            "steps": self.steps,
            "max_drift": self.max_drift,
            "drift_bound": self.drift_bound,
            "valid": self.valid,
            "classification": SingularityKind::None,
        })
    }
}

pub(crate) fn fmt_num(x: f64) -> String {
    format!("{x:.17e}")
}

/// One row of a continuous-dependence probe.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeRow {
    pub perturbation_norm: f64,
    pub sup_position: Option<f64>,
    pub sup_velocity: Option<f64>,
    pub error: Option<String>,
}

/// For each perturbation `(dq, dv)` of `s0`, the sup over `[0, T]` of the
/// mass-norm distances between perturbed and base positions and velocities.
pub fn continuous_dependence_probe(
    ms: &MassSystem,
    s0: &PhaseState,
    perturbations: &[(Vec<f64>, Vec<f64>)],
    t_max: f64,
    samples: usize,
) -> Result<Vec<ProbeRow>> {
    let times: Vec<f64> = (1..=samples)
        .map(|k| t_max * k as f64 / samples as f64)
        .collect();
    let opts = IntegrationOptions::sampled(times.clone());
    let base = integrate(ms, s0, t_max, &opts)?.into_result()?;
    let rows = perturbations
        .par_iter()
        .map(|(dq, dv)| {
            let pert_norm = (ms.inner(dq, dq) + ms.inner(dv, dv)).sqrt();
            let s = PhaseState {
                q: s0.q.iter().zip(dq).map(|(a, b)| a + b).collect::<Vec<_>>().into(),
                v: s0.v.iter().zip(dv).map(|(a, b)| a + b).collect(),
            };
            let res = integrate(ms, &s, t_max, &opts).and_then(Outcome::into_result);
            match res {
                Ok(tr) => {
                    let mut sq: f64 = 0.0;
                    let mut sv: f64 = 0.0;
                    for (a, b) in tr.states.iter().zip(&base.states) {
                        sq = sq.max(ms.distance(&a.q, &b.q));
                        sv = sv.max(ms.distance(&a.v, &b.v));
                    }
                    ProbeRow {
                        perturbation_norm: pert_norm,
                        sup_position: Some(sq),
                        sup_velocity: Some(sv),
                        error: None,
                    }
                }
                Err(e) => ProbeRow {
                    perturbation_norm: pert_norm,
                    sup_position: None,
                    sup_velocity: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

    fn pair() -> MassSystem {
        MassSystem::new(vec![1.0, 1.0], 2).unwrap()
    }

    fn circular() -> PhaseState {
        PhaseState::new(
            &pair(),
            vec![-0.5, 0.0, 0.5, 0.0],
            vec![0.0, -FRAC_1_SQRT_2, 0.0, FRAC_1_SQRT_2],
        )
        .unwrap()
    }

    #[test]
    fn circular_orbit_returns_after_one_period() {
        let ms = pair();
        let period = PI * SQRT_2;
        let s = flow_map(&ms, &circular(), period).unwrap();
        let err = ms.distance(&s.q, &circular().q) + ms.distance(&s.v, &circular().v);
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn flow_identity_and_group_property() {
        let ms = pair();
        let s0 = circular();
        assert_eq!(flow_map(&ms, &s0, 0.0).unwrap(), s0);
        let a = flow_map(&ms, &s0, 1.0).unwrap();
        let back = flow_map(&ms, &a, -1.0).unwrap();
        assert!(ms.distance(&back.q, &s0.q) < 1e-6);
        let ab = flow_map(&ms, &a, 0.7).unwrap();
        let direct = flow_map(&ms, &s0, 1.7).unwrap();
        assert!(ms.distance(&ab.q, &direct.q) < 1e-8);
    }

    #[test]
    fn head_on_collapse_is_detected() {
        let ms = pair();
        let s = PhaseState::new(&ms, vec![-0.5, 0.0, 0.5, 0.0], vec![0.0; 4]).unwrap();
        match integrate(&ms, &s, 5.0, &IntegrationOptions::default()).unwrap() {
            Outcome::Singular(r) => {
                assert_eq!(r.classification, SingularityKind::CollisionApproach);
                // radial free fall from rest: t = pi/2 sqrt(r0^3 / (2 G M))
                assert!((r.t_star - PI / 4.0).abs() < 1e-6, "t* = {}", r.t_star);
                assert!(r.inertia_trend < 0.0);
            }
            Outcome::Complete(_) => panic!("collision not detected"),
        }
    }

    #[test]
    fn hyperbolic_escape_conserves_energy_and_momenta() {
        let ms = pair();
        let s = PhaseState::new(
            &ms,
            vec![-1.0, 0.0, 1.0, 0.0],
            vec![-0.3, -0.9, 0.3, 0.9],
        )
        .unwrap();
        let h = s.energy(&ms).unwrap();
        assert!(h > 0.0);
        let tr = integrate(&ms, &s, 100.0, &IntegrationOptions::default())
            .unwrap()
            .into_result()
            .unwrap();
        assert!(tr.valid && tr.max_drift <= 1e-8);
        let l0 = ms.angular_momentum(&s.q, &s.v)[0];
        let last = tr.last();
        let l1 = ms.angular_momentum(&last.q, &last.v)[0];
        assert_relative_eq!(l0, l1, max_relative = 1e-8);
        let p = ms.linear_momentum(&last.v);
        assert!(p.iter().all(|x| x.abs() < 1e-10));
        // speed settles toward sqrt(2h / mu) in the relative coordinate
        let speeds: Vec<f64> = tr.states.iter().map(|s| ms.norm(&s.v)).collect();
        assert!(speeds.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert!((ms.norm(&last.v) - (2.0 * h).sqrt()).abs() < 0.05);
    }

    #[test]
    fn backward_integration_is_reversed_and_consistent() {
        let ms = pair();
        let tr = integrate(&ms, &circular(), -2.0, &IntegrationOptions::default())
            .unwrap()
            .into_result()
            .unwrap();
        assert!(tr.times.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(tr.t_end(), 0.0);
        assert_relative_eq!(tr.t_start(), -2.0);
        assert!(tr.action.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn interpolation_matches_exact_landing() {
        let ms = pair();
        let tr = integrate(&ms, &circular(), 3.0, &IntegrationOptions::default())
            .unwrap()
            .into_result()
            .unwrap();
        let exact = integrate(
            &ms,
            &circular(),
            3.0,
            &IntegrationOptions::sampled(vec![1.2345]),
        )
        .unwrap()
        .into_result()
        .unwrap();
        let s = tr.state_at(&ms, 1.2345).unwrap();
        assert!(ms.distance(&s.q, &exact.states[1].q) < 1e-9);
        assert!(ms.distance(&s.v, &exact.states[1].v) < 1e-8);
        let a = tr.action_at(&ms, 1.2345).unwrap();
        assert_relative_eq!(a, exact.action[1], max_relative = 1e-9);
    }

    #[test]
    fn stm_matches_finite_differences() {
        let ms = pair();
        let s0 = PhaseState::new(&ms, vec![-1.0, 0.0, 1.0, 0.0], vec![-0.3, -0.9, 0.3, 0.9]).unwrap();
        let opts = IntegrationOptions {
            with_stm: true,
            record_steps: false,
            ..Default::default()
        };
        let tr = integrate(&ms, &s0, 3.0, &opts).unwrap().into_result().unwrap();
        let stm = tr.stm.as_ref().unwrap();
        let eps = 1e-6;
        let col = 5; // derivative with respect to v[1]
        let mut sp = s0.clone();
        sp.v[1] += eps;
        let mut sm = s0.clone();
        sm.v[1] -= eps;
        let fp = flow_map(&ms, &sp, 3.0).unwrap().to_flat();
        let fm = flow_map(&ms, &sm, 3.0).unwrap().to_flat();
        for r in 0..8 {
            let fd = (fp[r] - fm[r]) / (2.0 * eps);
            assert!((stm[r * 8 + col] - fd).abs() < 1e-5 * (1.0 + fd.abs()), "row {r}");
        }
    }

    #[test]
    fn probe_distances_shrink_with_perturbation() {
        let ms = pair();
        let s0 = PhaseState::new(&ms, vec![-1.0, 0.0, 1.0, 0.0], vec![-0.3, -0.9, 0.3, 0.9]).unwrap();
        let zero = (vec![0.0; 4], vec![0.0; 4]);
        let mk = |e: f64| (vec![0.0; 4], vec![e, 0.0, 0.0, 0.0]);
        let collide = (vec![1.0, 0.0, -1.0, 0.0], vec![0.0; 4]);
        let rows = continuous_dependence_probe(
            &ms,
            &s0,
            &[zero, mk(1e-4), mk(5e-5), mk(2.5e-5), collide],
            10.0,
            100,
        )
        .unwrap();
        assert_eq!(rows[0].sup_position, Some(0.0));
        let d: Vec<f64> = rows[1..4].iter().map(|r| r.sup_position.unwrap()).collect();
        assert!(d[1] <= 0.5 * d[0] * 1.01 && d[2] <= 0.5 * d[1] * 1.01, "{d:?}");
        assert!(rows[4].error.is_some());
    }
}
