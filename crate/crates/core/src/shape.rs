//! Asymptotic limit shapes of expanding motions, cones around a shape and the
//! fixed-shape velocity field obtained by shooting.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{integrate, IntegrationOptions, Outcome, SingularityKind};
use crate::error::{JmError, Result};
use crate::model::{MassSystem, PhaseState};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LimitShapeEstimate {
    /// Asymptotic velocity `lim gamma(t)/t`.
    pub a: Vec<f64>,
    /// Exponent of the fitted remainder `gamma(t) - gamma(0) - a t ~ c t^p`.
    pub p: Option<f64>,
    pub c: Option<f64>,
    /// RMS of the log-log fit.
    pub fit_residual: f64,
    /// Log-log slope of `||gamma(t) - cm(t)||` on the fit window.
    pub growth_exponent: f64,
    pub horizon: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShapeFitOptions {
    /// Log-spaced samples on `[T/2, T]`.
    pub samples: usize,
    /// Energies down to `-h_slack` count as zero.
    pub h_slack: f64,
    pub rtol: f64,
}

impl Default for ShapeFitOptions {
    fn default() -> Self {
        Self {
            samples: 24,
            h_slack: 1e-9,
            rtol: 1e-12,
        }
    }
}

const TAIL_INTERVALS: usize = 256;

/// `v + int_0^inf acc(q + v s) ds`: the velocity at infinity if the motion
/// continued along its tangent line from here on.
fn tail_velocity(ms: &MassSystem, q: &[f64], v: &[f64]) -> Option<Vec<f64>> {
    let n = ms.ndof();
    let speed = ms.norm(v);
    if !(speed > 0.0) {
        return None;
    }
    let len = ms.norm(&ms.remove_center(q)).max(1e-12) / speed;
    let mut acc = vec![0.0; n];
    let mut total = vec![0.0; n];
    let mut at_infinity = vec![0.0; n];
    // s = len u / (1 - u); the integrand tends to acc(v) / len at u = 1
    if !ms.is_collision_free(v) {
        return None;
    }
    ms.acceleration(v, &mut at_infinity);
    let hstep = 1.0 / TAIL_INTERVALS as f64;
    let mut x = vec![0.0; n];
    for k in 0..=TAIL_INTERVALS {
        let w = if k == 0 || k == TAIL_INTERVALS {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let u = k as f64 * hstep;
        if k == TAIL_INTERVALS {
            for a in 0..n {
                total[a] += w * at_infinity[a] / len;
            }
            continue;
        }
        let s = len * u / (1.0 - u);
        let jac = len / ((1.0 - u) * (1.0 - u));
        for a in 0..n {
            x[a] = q[a] + v[a] * s;
        }
        if !ms.is_collision_free(&x) {
            return None;
        }
        ms.acceleration(&x, &mut acc);
        for a in 0..n {
            total[a] += w * acc[a] * jac;
        }
    }
    let out: Vec<f64> = (0..n).map(|a| v[a] + total[a] * hstep / 3.0).collect();
    out.iter().all(|x| x.is_finite()).then_some(out)
}

/// Least-squares line through `(x, y)`: slope, intercept, RMS residual.
fn line_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - icpt - slope * a).powi(2))
        .sum();
    (slope, icpt, (rss / n).sqrt())
}

pub(crate) fn log_spaced(a: f64, b: f64, n: usize) -> Vec<f64> {
    let (la, lb) = (a.ln(), b.ln());
    let mut out: Vec<f64> = (0..n)
        .map(|k| (la + (lb - la) * k as f64 / (n - 1) as f64).exp())
        .collect();
    out[0] = a;
    out[n - 1] = b;
    out
}

/// Estimates the limit shape `a` of the motion through `s` from its behavior
/// on `[horizon/2, horizon]`.
pub fn limit_shape(
    ms: &MassSystem,
    s: &PhaseState,
    horizon: f64,
    opts: &ShapeFitOptions,
) -> Result<LimitShapeEstimate> {
    let energy = s.energy(ms)?;
    if energy < -opts.h_slack {
        return Err(JmError::Precondition(format!(
            "limit shapes need nonnegative energy, got {energy}"
        )));
    }
    if !(horizon > 0.0) {
        return Err(JmError::Precondition("horizon must be positive".into()));
    }
    let samples = opts.samples.max(4);
    let times = log_spaced(horizon / 2.0, horizon, samples);
    let io = IntegrationOptions {
        rtol: opts.rtol,
        ..IntegrationOptions::sampled(times.clone())
    };
    let traj = match integrate(ms, s, horizon, &io)? {
        Outcome::Complete(t) => t,
        Outcome::Singular(r) => {
            return Err(match r.classification {
                SingularityKind::CollisionApproach => JmError::CollisionApproach { t_star: r.t_star },
                _ => JmError::StepFailure { t: r.last_time },
            })
        }
    };
    let at = |t: f64| traj.state_at(ms, t).expect("sampled time");
    let first = at(times[0]);
    let last = at(horizon);
    let a = match (
        tail_velocity(ms, &first.q, &first.v),
        tail_velocity(ms, &last.q, &last.v),
    ) {
        // tail-corrected estimates err by O(1/t^2)
        (Some(a1), Some(a2)) => a1
            .iter()
            .zip(&a2)
            .map(|(x1, x2)| (4.0 * x2 - x1) / 3.0)
            .collect(),
        _ => last.q.iter().map(|x| x / horizon).collect::<Vec<_>>(),
    };

    let lt: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let growth: Vec<f64> = times
        .iter()
        .map(|&t| ms.norm(&ms.remove_center(&at(t).q)).ln())
        .collect();
    let (growth_exponent, _, _) = line_fit(&lt, &growth);

    let scale = ms.norm(&ms.remove_center(&last.q)).max(1e-300);
    let rem: Vec<f64> = times
        .iter()
        .map(|&t| {
            let q = at(t).q;
            let r: Vec<f64> = (0..ms.ndof()).map(|k| q[k] - s.q[k] - a[k] * t).collect();
            ms.norm(&r)
        })
        .collect();
    let degenerate = rem.iter().any(|r| !(*r > 1e-12 * scale) || !r.is_finite());
    let (p, c, fit_residual) = if degenerate {
        (None, None, f64::NAN)
    } else {
        let lr: Vec<f64> = rem.iter().map(|r| r.ln()).collect();
        let (p, ic, res) = line_fit(&lt, &lr);
        if p.is_finite() {
            (Some(p), Some(ic.exp()), res)
        } else {
            (None, None, f64::NAN)
        }
    };
    Ok(LimitShapeEstimate {
        a,
        p,
        c,
        fit_residual,
        growth_exponent,
        horizon,
        energy,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeSpec {
    pub a: Vec<f64>,
    pub alpha: f64,
    pub r: f64,
}

impl ConeSpec {
    pub fn new(ms: &MassSystem, a: Vec<f64>, alpha: f64, r: f64) -> Result<Self> {
        ms.check_shape(&a)?;
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(JmError::Precondition(format!("cone angle {alpha} not in (0, 1)")));
        }
        if !(r > 0.0) {
            return Err(JmError::Precondition(format!("cone radius {r} not positive")));
        }
        if !ms.is_collision_free(&a) {
            return Err(JmError::Precondition("cone axis must be collision-free".into()));
        }
        Ok(Self { a, alpha, r })
    }

    /// `1/2 ||a||^2`.
    pub fn energy(&self, ms: &MassSystem) -> f64 {
        ms.kinetic(&self.a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeTest {
    pub inside: bool,
    /// `<x, a> / (||x|| ||a||)`, undefined at `x = 0`.
    pub cosine: Option<f64>,
}

pub fn cone_contains(ms: &MassSystem, cone: &ConeSpec, x: &[f64]) -> ConeTest {
    let nx = ms.norm(x);
    let na = ms.norm(&cone.a);
    if nx == 0.0 || na == 0.0 {
        return ConeTest {
            inside: false,
            cosine: None,
        };
    }
    let cosine = ms.inner(x, &cone.a) / (nx * na);
    ConeTest {
        inside: cosine >= cone.alpha && nx > cone.r,
        cosine: Some(cosine),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShapeSolveOptions {
    pub shoot_tol: f64,
    pub horizon: f64,
    pub max_iter: usize,
    /// Relative finite-difference step, scaled by `1 + ||v||`.
    pub fd_step: f64,
    /// Times at which cone confinement is sampled.
    pub cone_samples: usize,
    pub fit: ShapeFitOptions,
}

impl Default for ShapeSolveOptions {
    fn default() -> Self {
        Self {
            shoot_tol: 1e-6,
            horizon: 200.0,
            max_iter: 30,
            fd_step: 1e-6,
            cone_samples: 64,
            fit: ShapeFitOptions {
                samples: 4,
                ..ShapeFitOptions::default()
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Converged,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShapeSolve {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub status: SolveStatus,
    /// `1/2 ||v||^2 - U(x)`.
    pub energy: f64,
}

fn shape_defect(
    ms: &MassSystem,
    x: &[f64],
    v: &[f64],
    a: &[f64],
    opts: &ShapeSolveOptions,
) -> Option<DVector<f64>> {
    let s = PhaseState {
        q: x.to_vec().into(),
        v: v.to_vec(),
    };
    if s.energy(ms).ok()? < 0.0 {
        return None;
    }
    let est = limit_shape(ms, &s, opts.horizon, &opts.fit).ok()?;
    // mass-orthonormal scaling so the Euclidean norm is the mass norm
    let d = DVector::from_iterator(
        a.len(),
        (0..a.len()).map(|k| ms.coord_mass(k).sqrt() * (est.a[k] - a[k])),
    );
    d.iter().all(|x| x.is_finite()).then_some(d)
}

/// Finds `v` with limit shape `cone.a` from the cone point `x`, starting from
/// `seed` (default: along `a` with energy `1/2 ||a||^2`).
pub fn solve_velocity_field(
    ms: &MassSystem,
    cone: &ConeSpec,
    x: &[f64],
    seed: Option<&[f64]>,
    opts: &ShapeSolveOptions,
) -> Result<ShapeSolve> {
    solve_with_jacobian(ms, cone, x, seed, None, opts).map(|(s, _)| s)
}

fn fd_jacobian(
    ms: &MassSystem,
    x: &[f64],
    v: &[f64],
    f: &DVector<f64>,
    a: &[f64],
    opts: &ShapeSolveOptions,
) -> Result<DMatrix<f64>> {
    let n = ms.ndof();
    let eps = opts.fd_step * (1.0 + ms.norm(v));
    let mut jac = DMatrix::zeros(n, n);
    for b in 0..n {
        let mut vp = v.to_vec();
        let step = eps / ms.coord_mass(b).sqrt();
        vp[b] += step;
        let fp = shape_defect(ms, x, &vp, a, opts).ok_or_else(|| {
            JmError::NonConvergence("limit shape undefined near the iterate".into())
        })?;
        jac.set_column(b, &((fp - f) / step));
    }
    Ok(jac)
}

/// Newton solve that starts with chord steps on `hint` (typically the
/// Jacobian of a neighboring point) and returns the last Jacobian used.
pub(crate) fn solve_with_jacobian(
    ms: &MassSystem,
    cone: &ConeSpec,
    x: &[f64],
    seed: Option<&[f64]>,
    hint: Option<&DMatrix<f64>>,
    opts: &ShapeSolveOptions,
) -> Result<(ShapeSolve, Option<DMatrix<f64>>)> {
    ms.check_shape(x)?;
    if ms.norm(&cone.a) == 0.0 {
        return Err(JmError::Precondition("limit shape a = 0 is not hyperbolic".into()));
    }
    if !cone_contains(ms, cone, x).inside {
        return Err(JmError::Precondition("point is outside the cone".into()));
    }
    ms.potential(x)?;
    let n = ms.ndof();
    let a = &cone.a;
    let mut v: Vec<f64> = match seed {
        Some(s) => s.to_vec(),
        None => {
            let h = cone.energy(ms);
            let f = ((h + ms.potential_raw(x)) / h).sqrt();
            a.iter().map(|c| f * c).collect()
        }
    };
    ms.check_shape(&v)?;
    let mut f = shape_defect(ms, x, &v, a, opts).ok_or_else(|| {
        JmError::NonConvergence("limit shape undefined at the seed velocity".into())
    })?;
    let mut jac = hint.cloned();
    let mut fresh = false;
    let mut iterations = 0;
    while f.norm() > opts.shoot_tol {
        if iterations == opts.max_iter {
            return Err(JmError::NonConvergence(format!(
                "shape residual {:.3e} after {} iterations",
                f.norm(),
                iterations
            )));
        }
        iterations += 1;
        let j = match jac.take() {
            Some(j) => j,
            None => {
                fresh = true;
                fd_jacobian(ms, x, &v, &f, a, opts)?
            }
        };
        let delta = j
            .clone()
            .lu()
            .solve(&(-&f))
            .ok_or_else(|| JmError::NonConvergence("singular shooting Jacobian".into()))?;
        if !fresh {
            // chord step: keep it only if it contracts well
            let vt: Vec<f64> = (0..n).map(|k| v[k] + delta[k]).collect();
            match shape_defect(ms, x, &vt, a, opts) {
                Some(ft) if ft.norm() < 0.5 * f.norm() => {
                    v = vt;
                    f = ft;
                    jac = Some(j);
                }
                _ => {}
            }
            continue;
        }
        let mut lambda = 1.0;
        let mut next = None;
        for _ in 0..12 {
            let vt: Vec<f64> = (0..n).map(|k| v[k] + lambda * delta[k]).collect();
            if let Some(ft) = shape_defect(ms, x, &vt, a, opts) {
                if ft.norm() < (1.0 - 1e-4 * lambda) * f.norm() {
                    next = Some((vt, ft));
                    break;
                }
            }
            lambda *= 0.5;
        }
        let Some((vn, fnext)) = next else {
            return Err(JmError::NonConvergence(format!(
                "shape residual stalled at {:.3e}",
                f.norm()
            )));
        };
        // a full step that contracted well earns a chord reuse
        let reuse = lambda == 1.0 && fnext.norm() < 0.5 * f.norm();
        v = vn;
        f = fnext;
        if reuse {
            jac = Some(j);
            fresh = false;
        } else {
            jac = None;
        }
    }
    check_confinement(ms, cone, x, &v, opts)?;
    let energy = ms.kinetic(&v) - ms.potential_raw(x);
    let last = jac.or_else(|| hint.cloned());
    Ok((
        ShapeSolve {
            x: x.to_vec(),
            v,
            residual: f.norm(),
            iterations,
            status: SolveStatus::Converged,
            energy,
        },
        last,
    ))
}

fn check_confinement(
    ms: &MassSystem,
    cone: &ConeSpec,
    x: &[f64],
    v: &[f64],
    opts: &ShapeSolveOptions,
) -> Result<()> {
    let k = opts.cone_samples.max(2);
    let times: Vec<f64> = (1..=k).map(|i| opts.horizon * i as f64 / k as f64).collect();
    let s = PhaseState {
        q: x.to_vec().into(),
        v: v.to_vec(),
    };
    let traj = integrate(ms, &s, opts.horizon, &IntegrationOptions::sampled(times.clone()))?
        .into_result()?;
    for t in times {
        let st = traj.state_at(ms, t).expect("sampled time");
        if !cone_contains(ms, cone, &st.q).inside {
            return Err(JmError::ConeExit { t });
        }
    }
    Ok(())
}

/// `|1/2 ||v||^2 - U(x) - 1/2 ||a||^2|`.
pub fn energy_consistency(ms: &MassSystem, solve: &ShapeSolve, cone: &ConeSpec) -> f64 {
    (ms.kinetic(&solve.v) - ms.potential_raw(&solve.x) - cone.energy(ms)).abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair() -> MassSystem {
        MassSystem::new(vec![1.0, 1.0], 2).unwrap()
    }

    fn state(q: Vec<f64>, v: Vec<f64>) -> PhaseState {
        PhaseState { q: q.into(), v }
    }

    /// Radial two-body: separation `rho`, relative speed `w` along the x
    /// axis, equal unit masses.
    fn radial(rho: f64, w: f64) -> PhaseState {
        state(
            vec![-rho / 2.0, 0.0, rho / 2.0, 0.0],
            vec![-w / 2.0, 0.0, w / 2.0, 0.0],
        )
    }

    #[test]
    fn hyperbolic_kepler_speed() {
        let ms = pair();
        // relative energy 1/2 w^2 - 2/rho per unit reduced mass, v_inf^2 = w^2 - 4/rho
        let (rho, w) = (2.0, 2.0);
        let s = radial(rho, w);
        let h = s.energy(&ms).unwrap();
        let est = limit_shape(&ms, &s, 200.0, &ShapeFitOptions::default()).unwrap();
        let v_inf = (w * w - 4.0 / rho).sqrt();
        // each body escapes at v_inf/2, so ||a|| = v_inf / sqrt(2)
        let na = ms.norm(&est.a);
        assert!((na - v_inf / 2f64.sqrt()).abs() < 1e-4, "{na}");
        assert!((ms.kinetic(&est.a) - h).abs() < 1e-4);
        assert!(est.a[1].abs() < 1e-12 && est.a[0] < 0.0);
        let p = est.p.unwrap();
        assert!(p < 2.0 / 3.0 + 0.15, "{p}");
        assert!((est.growth_exponent - 1.0).abs() < 0.05);
    }

    #[test]
    fn parabolic_growth() {
        let ms = pair();
        // zero energy: w^2 = 4 / rho
        let s = radial(2.0, 2f64.sqrt());
        let est = limit_shape(&ms, &s, 200.0, &ShapeFitOptions::default()).unwrap();
        assert!((est.growth_exponent - 2.0 / 3.0).abs() < 0.05, "{}", est.growth_exponent);
        // the velocity estimate decays like t^{-1/3}
        let far = limit_shape(&ms, &s, 1600.0, &ShapeFitOptions::default()).unwrap();
        let ratio = ms.norm(&far.a) / ms.norm(&est.a);
        assert!((ratio - 0.5).abs() < 0.05, "{ratio}");
    }

    #[test]
    fn nearly_free_motion() {
        let ms = MassSystem::new(vec![1e-6, 1e-6], 2).unwrap();
        let s = state(vec![-100.0, 0.0, 100.0, 0.0], vec![0.0, 1.0, 0.0, -1.0]);
        let est = limit_shape(&ms, &s, 5.0, &ShapeFitOptions::default()).unwrap();
        for k in 0..4 {
            assert!((est.a[k] - s.v[k]).abs() < 1e-6);
        }
    }

    #[test]
    fn negative_energy_rejected() {
        let ms = pair();
        let s = radial(2.0, 0.5);
        assert!(matches!(
            limit_shape(&ms, &s, 10.0, &ShapeFitOptions::default()),
            Err(JmError::Precondition(_))
        ));
    }

    #[test]
    fn head_on_is_an_error() {
        let ms = pair();
        let s = radial(2.0, -2.0);
        assert!(matches!(
            limit_shape(&ms, &s, 10.0, &ShapeFitOptions::default()),
            Err(JmError::CollisionApproach { .. })
        ));
    }

    #[test]
    fn cone_membership() {
        let ms = pair();
        let a = vec![-0.5, 0.0, 0.5, 0.0];
        let cone = ConeSpec::new(&ms, a.clone(), 0.9, 1.0).unwrap();
        let on_axis: Vec<f64> = a.iter().map(|x| 5.0 * x).collect();
        let t = cone_contains(&ms, &cone, &on_axis);
        assert!(t.inside && (t.cosine.unwrap() - 1.0).abs() < 1e-15);
        let perp = vec![0.0, -1.0, 0.0, 1.0];
        let t = cone_contains(&ms, &cone, &perp);
        assert!(!t.inside && t.cosine.unwrap().abs() < 1e-15);
        let short: Vec<f64> = a.iter().map(|x| 0.5 * x).collect();
        assert!(!cone_contains(&ms, &cone, &short).inside);
        let zero = cone_contains(&ms, &cone, &[0.0; 4]);
        assert!(!zero.inside && zero.cosine.is_none());
    }

    #[test]
    fn axis_solve_is_radial() {
        let ms = pair();
        let a = vec![-0.5, 0.0, 0.5, 0.0];
        let cone = ConeSpec::new(&ms, a.clone(), 0.9, 1.0).unwrap();
        let x: Vec<f64> = a.iter().map(|c| 4.0 * c).collect();
        let sol = solve_velocity_field(&ms, &cone, &x, None, &ShapeSolveOptions::default()).unwrap();
        assert!(sol.residual <= 1e-6);
        // parallel to a
        let cos = ms.inner(&sol.v, &a) / (ms.norm(&sol.v) * ms.norm(&a));
        assert!((1.0 - cos).abs() < 1e-10);
        // radial Kepler: relative speed w with w^2 = v_inf^2 + 4/rho
        let rho = 4.0;
        let w = ((2.0f64 * 0.5).powi(2) + 4.0 / rho).sqrt();
        assert!((sol.v[2] - w / 2.0).abs() < 1e-5, "{} vs {}", sol.v[2], w / 2.0);
        assert!(energy_consistency(&ms, &sol, &cone) < 1e-4);
    }

    #[test]
    fn zero_shape_rejected() {
        let ms = pair();
        let cone = ConeSpec {
            a: vec![0.0; 4],
            alpha: 0.9,
            r: 1.0,
        };
        let x = vec![-2.0, 0.0, 2.0, 0.0];
        assert!(matches!(
            solve_velocity_field(&ms, &cone, &x, None, &ShapeSolveOptions::default()),
            Err(JmError::Precondition(_))
        ));
    }
}
