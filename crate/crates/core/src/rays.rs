//! Numerical certificates for geodesic rays, calibration residuals and the
//! compactness experiment for sequences of rays.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::action::{phi_free, ActionOptions, MadernaFit};
use crate::dynamics::{integrate, IntegrationOptions, Outcome, SingularityKind, Trajectory};
use crate::error::{JmError, Result};
use crate::horofunction::{
    busemann_estimate, sup_diff, BusemannEvaluator, BusemannOptions, HorofunctionField,
    ScalarField,
};
use crate::model::{MassSystem, PhaseState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Minimizing,
    NonMinimizing,
    Inconclusive,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindowGap {
    pub a: f64,
    pub b: f64,
    /// `A_h` of the trajectory over `[a, b]`.
    pub action: f64,
    pub phi: Option<f64>,
    /// `|A_h - phi_h| / phi_h`.
    pub gap: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RayCertificate {
    pub windows: Vec<WindowGap>,
    pub verdict: Verdict,
    pub t_max: f64,
    pub gap_tol: f64,
    pub reason: Option<String>,
}

impl RayCertificate {
    pub fn max_gap(&self) -> f64 {
        self.windows
            .iter()
            .filter_map(|w| w.gap)
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RayOptions {
    pub t_max: f64,
    pub gap_tol: f64,
    /// Shortest dyadic window.
    pub min_window: f64,
    /// Energies down to `-h_slack` are treated as zero.
    pub h_slack: f64,
    pub action: ActionOptions,
}

impl Default for RayOptions {
    fn default() -> Self {
        Self {
            t_max: 100.0,
            gap_tol: 1e-4,
            min_window: 0.5,
            h_slack: 1e-9,
            action: ActionOptions::default(),
        }
    }
}

/// `[0, T]`, `[T/2, T]`, `[T/4, T/2]`, ... down to windows of length
/// `min_len`.
pub fn dyadic_windows(t_max: f64, min_len: f64) -> Vec<(f64, f64)> {
    let mut out = vec![(0.0, t_max)];
    let mut b = t_max;
    while b / 2.0 >= min_len {
        out.push((b / 2.0, b));
        b /= 2.0;
    }
    out
}

fn window_gap(
    ms: &MassSystem,
    traj: &Trajectory,
    h: f64,
    (a, b): (f64, f64),
    opts: &ActionOptions,
) -> WindowGap {
    let mut w = WindowGap {
        a,
        b,
        action: f64::NAN,
        phi: None,
        gap: None,
        note: None,
    };
    let (Some(sa), Some(sb), Some(action)) = (
        traj.state_at(ms, a),
        traj.state_at(ms, b),
        traj.action_between(ms, a, b, h),
    ) else {
        w.note = Some("window outside the trajectory".into());
        return w;
    };
    w.action = action;
    match phi_free(ms, h, &sa.q, &sb.q, opts) {
        Ok(r) => {
            w.phi = Some(r.value);
            w.gap = Some((action - r.value).abs() / r.value.abs().max(f64::MIN_POSITIVE));
            if !r.inner.polished {
                w.note = Some("unpolished potential".into());
            }
        }
        Err(e) => w.note = Some(e.to_string()),
    }
    w
}

/// Compares the trajectory's action on each window with the free-time
/// potential between the window's endpoints.
pub fn verify_minimizing(
    ms: &MassSystem,
    traj: &Trajectory,
    h: f64,
    windows: &[(f64, f64)],
    gap_tol: f64,
    opts: &ActionOptions,
) -> Result<RayCertificate> {
    if !(h >= 0.0) {
        return Err(JmError::Precondition(format!(
            "rays need nonnegative energy, got {h}"
        )));
    }
    let e0 = traj.energies[0];
    let tol = traj.drift_bound.max(1e-8) * e0.abs().max(1.0);
    if (e0 - h).abs() > tol.max(1e-6) {
        return Err(JmError::Precondition(format!(
            "trajectory energy {e0} does not match h = {h}"
        )));
    }
    if !traj.valid {
        return Err(JmError::Precondition("trajectory failed its drift check".into()));
    }
    let gaps: Vec<WindowGap> = windows
        .par_iter()
        .map(|&w| window_gap(ms, traj, h, w, opts))
        .collect();
    let t_max = windows.iter().map(|w| w.1).fold(0.0, f64::max);
    let mut verdict = if gaps.iter().all(|g| g.gap.is_some_and(|v| v <= gap_tol)) {
        Verdict::Minimizing
    } else {
        Verdict::Inconclusive
    };
    let mut reason = None;
    // a large gap counts only if it survives a refined potential with the
    // same sign (action above the potential)
    let refined = ActionOptions {
        segments: opts.segments * 2,
        outer_segments: opts.outer_segments * 2,
        ..opts.clone()
    };
    for g in &gaps {
        let (Some(gap), Some(phi)) = (g.gap, g.phi) else {
            continue;
        };
        if gap > 10.0 * gap_tol && g.action > phi {
            let w = window_gap(ms, traj, h, (g.a, g.b), &refined);
            if let (Some(gap2), Some(phi2)) = (w.gap, w.phi) {
                if gap2 > 10.0 * gap_tol && w.action > phi2 {
                    verdict = Verdict::NonMinimizing;
                    reason = Some(format!(
                        "action exceeds the potential on [{}, {}] by {:.3e} (relative)",
                        g.a, g.b, gap2
                    ));
                    break;
                }
            }
        }
    }
    Ok(RayCertificate {
        windows: gaps,
        verdict,
        t_max,
        gap_tol,
        reason,
    })
}

/// Integrates the datum to `opts.t_max` and certifies the dyadic windows.
pub fn gr_membership(ms: &MassSystem, s: &PhaseState, opts: &RayOptions) -> Result<RayCertificate> {
    ms.check_shape(&s.q)?;
    ms.check_shape(&s.v)?;
    if let Some((i, j, distance)) = ms.collision(&s.q) {
        return Err(JmError::Collision { i, j, distance });
    }
    let e = s.energy(ms)?;
    if e < -opts.h_slack {
        return Err(JmError::Precondition(format!(
            "energy {e} is negative; rays have nonnegative energy"
        )));
    }
    let h = e.max(0.0);
    let io = IntegrationOptions::default();
    match integrate(ms, s, opts.t_max, &io)? {
        Outcome::Singular(r) => Ok(RayCertificate {
            windows: Vec::new(),
            verdict: Verdict::NonMinimizing,
            t_max: opts.t_max,
            gap_tol: opts.gap_tol,
            reason: Some(match r.classification {
                SingularityKind::CollisionApproach => {
                    format!("collision-approach at t* = {:.6}", r.t_star)
                }
                _ => format!("step failure at t = {:.6}", r.last_time),
            }),
        }),
        Outcome::Complete(traj) => {
            let traj = with_energy(traj, h);
            verify_minimizing(
                ms,
                &traj,
                h,
                &dyadic_windows(opts.t_max, opts.min_window),
                opts.gap_tol,
                &opts.action,
            )
        }
    }
}

/// Clamps a slightly negative recorded energy to the certified `h`.
fn with_energy(mut traj: Trajectory, h: f64) -> Trajectory {
    if traj.energies[0] < 0.0 && h == 0.0 {
        let shift = -traj.energies[0];
        traj.energies.iter_mut().for_each(|e| *e += shift);
    }
    traj
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub times: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Sample times where the field could not be evaluated.
    pub excluded: Vec<f64>,
    pub max_residual: f64,
}

/// Residuals `|u(gamma(t)) - u(gamma(t0)) - A_h(gamma|[t0, t])|` at the given
/// sample times (the trajectory's own samples when `times` is `None`).
pub fn calibration_check(
    u: &dyn ScalarField,
    ms: &MassSystem,
    traj: &Trajectory,
    h: f64,
    times: Option<&[f64]>,
) -> Result<CalibrationReport> {
    let t0 = traj.t_start();
    let sample: Vec<f64> = match times {
        Some(t) => t.to_vec(),
        None => traj.times.clone(),
    };
    let u0 = u
        .value(&traj.first().q)
        .ok_or_else(|| JmError::Precondition("field undefined at the start of the curve".into()))?;
    let rows: Vec<(f64, Option<f64>)> = sample
        .par_iter()
        .map(|&t| {
            let r = traj.state_at(ms, t).and_then(|s| {
                let a = traj.action_between(ms, t0, t, h)?;
                let v = u.value(&s.q)?;
                Some((v - u0 - a).abs())
            });
            (t, r)
        })
        .collect();
    let mut rep = CalibrationReport {
        times: Vec::new(),
        residuals: Vec::new(),
        excluded: Vec::new(),
        max_residual: 0.0,
    };
    for (t, r) in rows {
        match r {
            Some(r) => {
                rep.times.push(t);
                rep.residuals.push(r);
                rep.max_residual = rep.max_residual.max(r);
            }
            None => rep.excluded.push(t),
        }
    }
    Ok(rep)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompactnessOptions {
    pub ray: RayOptions,
    pub busemann: BusemannOptions,
    /// Times along the limit ray for the calibration check.
    pub calibration_times: Vec<f64>,
    /// Check GR membership of every member first.
    pub certify_members: bool,
}

impl Default for CompactnessOptions {
    fn default() -> Self {
        Self {
            ray: RayOptions::default(),
            busemann: BusemannOptions::default(),
            calibration_times: vec![0.0, 1.0, 2.0, 5.0, 10.0, 20.0],
            certify_members: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompactnessReport {
    pub energies: Vec<f64>,
    pub limit_energy: f64,
    /// `|h_n - h(s0)|`.
    pub energy_gaps: Vec<f64>,
    pub min_distances: Vec<f64>,
    pub limit_min_distance: f64,
    /// Lower bound on the closest pair from `U(x_n) <= 1/2 ||v_n||^2`.
    pub energy_distance_bounds: Vec<f64>,
    /// `sup_grid |u_n - u_{n+1}|` for consecutive members.
    pub cauchy: Vec<f64>,
    /// `mu(||x_n - x_{n+1}||)` for the same pairs, when a modulus is given.
    pub modulus: Vec<f64>,
    pub fields: Vec<HorofunctionField>,
    pub verdicts: Vec<Verdict>,
    pub limit_calibration: CalibrationReport,
}

/// Runs the compactness experiment on a sequence of ray data converging to
/// `s0`. The limit calibration runs along the ray of `s0` itself.
pub fn compactness_experiment(
    ms: &MassSystem,
    sequence: &[PhaseState],
    s0: &PhaseState,
    grid: &[Vec<f64>],
    modulus: Option<&MadernaFit>,
    opts: &CompactnessOptions,
) -> Result<CompactnessReport> {
    if sequence.is_empty() {
        return Err(JmError::Precondition("empty sequence".into()));
    }
    let limit_energy = s0.energy(ms)?;
    let t_ray = opts
        .busemann
        .schedule
        .iter()
        .copied()
        .fold(opts.ray.t_max, f64::max);
    let members: Vec<Result<(f64, Trajectory, Verdict)>> = sequence
        .par_iter()
        .enumerate()
        .map(|(k, s)| {
            let h = s.energy(ms)?;
            let verdict = if opts.certify_members {
                let cert = gr_membership(ms, s, &opts.ray)?;
                if cert.verdict != Verdict::Minimizing {
                    return Err(JmError::Precondition(format!(
                        "sequence member {k} failed the ray certificate ({:?})",
                        cert.verdict
                    )));
                }
                cert.verdict
            } else {
                Verdict::Inconclusive
            };
            let traj = integrate(ms, s, t_ray, &IntegrationOptions::default())?.into_result()?;
            Ok((h.max(0.0), traj, verdict))
        })
        .collect();
    let mut energies = Vec::new();
    let mut rays = Vec::new();
    let mut verdicts = Vec::new();
    for m in members {
        let (h, t, v) = m?;
        energies.push(h);
        rays.push(t);
        verdicts.push(v);
    }
    let mut fields = Vec::with_capacity(rays.len());
    for (h, ray) in energies.iter().zip(&rays) {
        fields.push(busemann_estimate(ms, ray, *h, grid, &opts.busemann)?);
    }
    let cauchy: Vec<f64> = fields
        .windows(2)
        .map(|w| {
            let valid: Vec<bool> = w[0].valid.iter().zip(&w[1].valid).map(|(a, b)| *a && *b).collect();
            sup_diff(&w[0].values, &w[1].values, &valid)
        })
        .collect();
    let modulus_vals: Vec<f64> = match modulus {
        Some(fit) => sequence
            .windows(2)
            .map(|w| fit.mu(ms.distance(&w[0].q, &w[1].q)))
            .collect(),
        None => Vec::new(),
    };
    let min_distances: Vec<f64> = sequence.iter().map(|s| ms.min_pair_distance(&s.q).0).collect();
    let min_mm = min_pair_mass_product(ms);
    let energy_distance_bounds: Vec<f64> = sequence
        .iter()
        .map(|s| min_mm / ms.kinetic(&s.v).max(f64::MIN_POSITIVE))
        .collect();

    // the limit field is the truncated Busemann function of the limit ray
    let limit_ray = integrate(ms, s0, t_ray, &IntegrationOptions::default())?.into_result()?;
    let t_field = fields
        .last()
        .unwrap()
        .truncation_times
        .last()
        .copied()
        .unwrap_or(t_ray);
    let h0 = limit_energy.max(0.0);
    let eval = BusemannEvaluator::on_ray(ms, &limit_ray, h0, t_field, opts.busemann.action.clone())?;
    let limit_calibration =
        calibration_check(&eval, ms, &limit_ray, h0, Some(&opts.calibration_times))?;

    Ok(CompactnessReport {
        energy_gaps: energies.iter().map(|h| (h - limit_energy).abs()).collect(),
        energies,
        limit_energy,
        min_distances,
        limit_min_distance: ms.min_pair_distance(&s0.q).0,
        energy_distance_bounds,
        cauchy,
        modulus: modulus_vals,
        fields,
        verdicts,
        limit_calibration,
    })
}

/// `min_{i<j} m_i m_j`, the smallest pair coefficient of `U`.
fn min_pair_mass_product(ms: &MassSystem) -> f64 {
    let m = ms.masses();
    let mut best = f64::INFINITY;
    for i in 0..m.len() {
        for j in i + 1..m.len() {
            best = best.min(m[i] * m[j]);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair() -> MassSystem {
        MassSystem::new(vec![1.0, 1.0], 2).unwrap()
    }

    fn escape() -> PhaseState {
        PhaseState {
            q: vec![-1.0, 0.0, 1.0, 0.0].into(),
            v: vec![-1.0, 0.0, 1.0, 0.0],
        }
    }

    #[test]
    fn dyadic_family() {
        let w = dyadic_windows(100.0, 0.5);
        assert_eq!(w[0], (0.0, 100.0));
        assert_eq!(w[1], (50.0, 100.0));
        assert!(w.iter().all(|(a, b)| b - a >= 0.5));
        assert_eq!(w.last().unwrap().1, 2.0 * w.last().unwrap().0);
        assert!(w.last().unwrap().0 < 1.0);
    }

    #[test]
    fn radial_escape_is_minimizing() {
        let ms = pair();
        let opts = RayOptions {
            t_max: 50.0,
            ..RayOptions::default()
        };
        let cert = gr_membership(&ms, &escape(), &opts).unwrap();
        assert_eq!(cert.verdict, Verdict::Minimizing, "{:?}", cert.windows);
        assert!(cert.max_gap() <= 1e-4);
        // nested windows: inner gap at most outer gap plus slack
        let outer = cert.windows[0].gap.unwrap();
        assert!(cert.windows[1..].iter().all(|w| w.gap.unwrap() <= outer + 1e-6));
    }

    #[test]
    fn negative_energy_is_rejected() {
        let ms = pair();
        // circular orbit: h = -1/4
        let s = PhaseState {
            q: vec![-1.0, 0.0, 1.0, 0.0].into(),
            v: vec![0.0, -0.5, 0.0, 0.5],
        };
        assert!(matches!(
            gr_membership(&ms, &s, &RayOptions::default()),
            Err(JmError::Precondition(_))
        ));
    }

    #[test]
    fn head_on_datum_is_not_a_ray() {
        let ms = pair();
        let s = PhaseState {
            q: vec![-1.0, 0.0, 1.0, 0.0].into(),
            v: vec![1.0, 0.0, -1.0, 0.0],
        };
        let cert = gr_membership(&ms, &s, &RayOptions::default()).unwrap();
        assert_eq!(cert.verdict, Verdict::NonMinimizing);
        assert!(cert.reason.unwrap().contains("collision-approach"));
    }

    #[test]
    fn broken_curve_is_not_minimizing() {
        // escape for 2 time units, then turn the velocity by 90 degrees
        let ms = pair();
        let io = IntegrationOptions::default();
        let a = integrate(&ms, &escape(), 2.0, &io).unwrap().into_result().unwrap();
        let end = a.last().clone();
        let speed = (end.v[2] * end.v[2] + end.v[3] * end.v[3]).sqrt();
        let turned = PhaseState {
            q: end.q.clone(),
            v: vec![0.0, -speed, 0.0, speed],
        };
        let b = integrate(&ms, &turned, 2.0, &io).unwrap().into_result().unwrap();
        let mut joined = a.clone();
        let a_end = *a.action.last().unwrap();
        for k in 1..b.times.len() {
            joined.times.push(2.0 + b.times[k]);
            joined.states.push(b.states[k].clone());
            joined.energies.push(b.energies[k]);
            joined.action.push(a_end + b.action[k]);
        }
        let h = a.energies[0];
        let cert = verify_minimizing(
            &ms,
            &joined,
            h,
            &[(1.0, 3.0)],
            1e-4,
            &ActionOptions::default(),
        )
        .unwrap();
        assert_eq!(cert.verdict, Verdict::NonMinimizing, "{:?}", cert.windows);
    }

    #[test]
    fn zero_field_residual_is_the_action() {
        let ms = pair();
        let traj = integrate(&ms, &escape(), 4.0, &IntegrationOptions::default())
            .unwrap()
            .into_result()
            .unwrap();
        let zero = |_: &[f64]| Some(0.0);
        let rep = calibration_check(&zero, &ms, &traj, 0.5, Some(&[1.0, 2.0, 4.0])).unwrap();
        for (t, r) in rep.times.iter().zip(&rep.residuals) {
            let a = traj.action_between(&ms, 0.0, *t, 0.5).unwrap();
            assert!((r - a).abs() < 1e-12 && *r > 0.0);
        }
        assert!(rep.residuals.windows(2).all(|w| w[1] > w[0]));
    }
}
