//! Newton shooting on the initial velocity (and duration) to turn a discrete
//! minimizer into an integrated solution of Newton's equations.

use nalgebra::{DMatrix, DVector};

use super::discrete::DiscreteCurve;
use crate::dynamics::{integrate, IntegrationOptions, Outcome, Trajectory};
use crate::model::{MassSystem, PhaseState};

pub(crate) struct Shot {
    pub traj: Trajectory,
    pub duration: f64,
    /// `int 1/2||v||^2 + U` over the shot, without the `hT` term.
    pub action: f64,
}

/// Velocity at the first node implied by the discrete curve.
pub(crate) fn initial_velocity(ms: &MassSystem, curve: &DiscreteCurve) -> Vec<f64> {
    let n = ms.ndof();
    let dt = curve.times[1] - curve.times[0];
    let mut acc = vec![0.0; n];
    ms.acceleration(curve.start(), &mut acc);
    (0..n)
        .map(|a| (curve.nodes[1][a] - curve.nodes[0][a]) / dt - 0.5 * dt * acc[a])
        .collect()
}

fn shoot(ms: &MassSystem, x: &[f64], v0: &[f64], t: f64) -> Option<Trajectory> {
    if !(t > 0.0) || !t.is_finite() || v0.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let opts = IntegrationOptions {
        with_stm: true,
        ..IntegrationOptions::default()
    };
    let s0 = PhaseState {
        q: x.to_vec().into(),
        v: v0.to_vec(),
    };
    match integrate(ms, &s0, t, &opts) {
        Ok(Outcome::Complete(tr)) if tr.valid => Some(tr),
        _ => None,
    }
}

struct Eval {
    traj: Trajectory,
    res: DVector<f64>,
    merit: f64,
}

/// Residual layout: `q(T) - y` in mass-orthonormal scaling, then (free time
/// only) the energy defect.
fn evaluate(
    ms: &MassSystem,
    x: &[f64],
    y: &[f64],
    v0: &[f64],
    t: f64,
    energy: Option<f64>,
    scales: (f64, f64),
) -> Option<Eval> {
    let traj = shoot(ms, x, v0, t)?;
    let n = ms.ndof();
    let last = traj.last();
    let mut res = DVector::zeros(n + usize::from(energy.is_some()));
    for a in 0..n {
        res[a] = ms.coord_mass(a).sqrt() * (last.q[a] - y[a]) / scales.0;
    }
    if let Some(h) = energy {
        let e = ms.kinetic(v0) - ms.potential_raw(x);
        res[n] = (e - h) / scales.1;
    }
    let merit = res.norm();
    Some(Eval { traj, res, merit })
}

fn jacobian(ms: &MassSystem, ev: &Eval, v0: &[f64], free: bool, scales: (f64, f64)) -> DMatrix<f64> {
    let n = ms.ndof();
    let m2 = 2 * n;
    let stm = ev.traj.stm.as_ref().expect("stm requested");
    let size = n + usize::from(free);
    let mut j = DMatrix::zeros(size, size);
    let vt = &ev.traj.last().v;
    for a in 0..n {
        let w = ms.coord_mass(a).sqrt() / scales.0;
        for b in 0..n {
            // d q_a(T) / d v_b
            j[(a, b)] = w * stm[a * m2 + n + b];
        }
        if free {
            j[(a, n)] = w * vt[a];
        }
    }
    if free {
        for b in 0..n {
            j[(n, b)] = ms.coord_mass(b) * v0[b] / scales.1;
        }
    }
    j
}

/// Solves the two-point problem `q(0) = x`, `q(T) = y` by Newton on `v0`
/// (and on `T` when `energy` is given). Returns `None` when Newton fails.
pub(crate) fn polish(
    ms: &MassSystem,
    x: &[f64],
    y: &[f64],
    v0: Vec<f64>,
    t: f64,
    energy: Option<f64>,
    tol: f64,
) -> Option<Shot> {
    let n = ms.ndof();
    let free = energy.is_some();
    let len_scale = ms.distance(x, y).max(1e-3 * ms.norm(&ms.remove_center(x)).max(1e-300));
    let e_scale = energy.unwrap_or(0.0).abs() + ms.potential_raw(x) + ms.kinetic(&v0);
    let scales = (len_scale, e_scale.max(1e-300));
    let mut v = v0;
    let mut t = t;
    let mut cur = evaluate(ms, x, y, &v, t, energy, scales)?;
    for _ in 0..40 {
        if cur.merit <= tol {
            let action = *cur.traj.action.last().unwrap();
            return Some(Shot {
                traj: cur.traj,
                duration: t,
                action,
            });
        }
        let jac = jacobian(ms, &cur, &v, free, scales);
        let step = jac.lu().solve(&(-&cur.res))?;
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..12 {
            let vt: Vec<f64> = (0..n).map(|a| v[a] + lambda * step[a]).collect();
            let tt = if free { t + lambda * step[n] } else { t };
            // keep the duration from collapsing or exploding in one step
            if free && !(tt > 0.2 * t && tt < 5.0 * t) {
                lambda *= 0.5;
                continue;
            }
            if let Some(ev) = evaluate(ms, x, y, &vt, tt, energy, scales) {
                if ev.merit < (1.0 - 1e-4 * lambda) * cur.merit {
                    accepted = Some((vt, tt, ev));
                    break;
                }
            }
            lambda *= 0.5;
        }
        let (vn, tn, ev) = accepted?;
        v = vn;
        t = tn;
        cur = ev;
    }
    (cur.merit <= tol).then(|| {
        let action = *cur.traj.action.last().unwrap();
        Shot {
            traj: cur.traj,
            duration: t,
            action,
        }
    })
}

/// Largest distance between the shot and the discrete nodes, with node times
/// rescaled to the shot's duration, relative to the curve's size.
pub(crate) fn deviation_from(ms: &MassSystem, shot: &Shot, curve: &DiscreteCurve) -> f64 {
    let scale = curve
        .nodes
        .iter()
        .map(|x| ms.distance(x, curve.start()))
        .fold(0.0, f64::max)
        .max(ms.distance(curve.start(), curve.end()))
        .max(1e-300);
    let f = shot.duration / curve.duration();
    let t0 = curve.times[0];
    let mut worst: f64 = 0.0;
    for (t, x) in curve.times.iter().zip(&curve.nodes) {
        let ts = ((t - t0) * f).clamp(0.0, shot.duration);
        let Some(s) = shot.traj.state_at(ms, ts) else {
            return f64::INFINITY;
        };
        worst = worst.max(ms.distance(&s.q, x));
    }
    worst / scale
}
