//! Fixed-time and free-time action potentials.

use serde::{Deserialize, Serialize};

use super::discrete::{
    arc_direction, arc_start, discrete_action, equidistributed_grid, graded_grid, minimize,
    uniform_grid, DiscreteCurve, MinimizeOptions, MinimizeStatus, Minimized,
};
use super::shooting::{deviation_from, initial_velocity, polish, Shot};
use crate::error::{JmError, Result};
use crate::model::MassSystem;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActionOptions {
    /// Cells of the final discrete solve.
    pub segments: usize,
    /// Cells used while searching over the duration.
    pub outer_segments: usize,
    /// Force-residual tolerance of the discrete minimizer.
    pub gtol: f64,
    pub max_iter: usize,
    pub descent_iters: usize,
    /// One pass of Jacobi–Maupertuis re-equidistribution of the time grid.
    pub regrid: bool,
    /// Newton shooting polish of the discrete minimizer.
    pub polish: bool,
    pub polish_tol: f64,
    /// Largest accepted node deviation (relative) between the polished
    /// trajectory and the discrete minimizer.
    pub polish_accept: f64,
    /// Relative tolerance of the golden-section search in `T`.
    pub t_rel_tol: f64,
    pub scan_points: usize,
}

impl Default for ActionOptions {
    fn default() -> Self {
        Self {
            segments: 128,
            outer_segments: 48,
            gtol: 1e-9,
            max_iter: 200,
            descent_iters: 50,
            regrid: true,
            polish: true,
            polish_tol: 1e-11,
            polish_accept: 0.05,
            t_rel_tol: 1e-3,
            scan_points: 12,
        }
    }
}

impl ActionOptions {
    /// Discrete values only, no shooting polish.
    pub fn discrete(segments: usize) -> Self {
        Self {
            segments,
            polish: false,
            ..Self::default()
        }
    }

    fn minimize_options(&self) -> MinimizeOptions {
        MinimizeOptions {
            gtol: self.gtol,
            max_iter: self.max_iter,
            descent_iters: self.descent_iters,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActionResult {
    /// `A_h` of the minimizer; the integrated value when polished.
    pub value: f64,
    pub minimizer: DiscreteCurve,
    pub gradient_norm: f64,
    /// Number of cells of the discrete solve.
    pub refinement: usize,
    pub status: MinimizeStatus,
    /// Value of the discrete minimizer itself.
    pub discrete_value: f64,
    pub polished: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub t: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FreeTimeResult {
    pub value: f64,
    pub t_star: f64,
    pub inner: ActionResult,
    /// Every duration probed by the outer search with its discrete objective.
    pub bracket: Vec<Probe>,
    /// Smallest probed objective.
    pub probe_min: f64,
    /// The probed objective was not unimodal; the result comes from the best
    /// grid cell.
    pub scan_fallback: bool,
}

fn check_endpoints(ms: &MassSystem, x: &[f64], y: &[f64]) -> Result<()> {
    ms.check_shape(x)?;
    ms.check_shape(y)?;
    if let Some(k) = x.iter().chain(y).position(|v| !v.is_finite()) {
        return Err(JmError::NonFinite(k));
    }
    Ok(())
}

fn same_point(ms: &MassSystem, x: &[f64], y: &[f64]) -> bool {
    let scale = ms.norm(x).max(ms.norm(y)).max(1.0);
    ms.distance(x, y) <= 1e-14 * scale
}

/// Best of several minimizations: smallest value, then smallest gradient.
fn best_of(results: Vec<Minimized>) -> Option<Minimized> {
    results
        .into_iter()
        .filter(|r| r.status != MinimizeStatus::NearCollision)
        .min_by(|a, b| {
            a.value
                .partial_cmp(&b.value)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(
                    a.gradient_norm
                        .partial_cmp(&b.gradient_norm)
                        .unwrap_or(std::cmp::Ordering::Equal),
                )
        })
}

fn grid_for(ms: &MassSystem, x: &[f64], y: &[f64], t: f64, m: usize) -> Vec<f64> {
    let a = ms.is_total_collision(x);
    let b = ms.is_total_collision(y);
    if a || b {
        graded_grid(t, m, a, b)
    } else {
        uniform_grid(t, m)
    }
}

fn starts(
    ms: &MassSystem,
    x: &[f64],
    y: &[f64],
    times: &[f64],
    warm: Option<&DiscreteCurve>,
) -> Vec<DiscreteCurve> {
    let mut out = vec![DiscreteCurve::straight(x, y, times.to_vec())];
    if let Some(dir) = arc_direction(ms, x, y) {
        let l = ms.distance(x, y);
        let r = ms
            .norm(&ms.remove_center(x))
            .max(ms.norm(&ms.remove_center(y)));
        let amp = 0.3 * l.max(0.5 * r);
        for sign in [1.0, -1.0] {
            out.push(arc_start(x, y, times.to_vec(), &dir, sign * amp));
        }
    }
    if let Some(w) = warm {
        out.push(w.rescaled(times[times.len() - 1]).resampled(times.to_vec()));
    }
    out
}

/// Discrete minimization over all starts, followed by an optional regrid.
fn discrete_solve(
    ms: &MassSystem,
    x: &[f64],
    y: &[f64],
    t: f64,
    h: f64,
    m: usize,
    warm: Option<&DiscreteCurve>,
    multistart: bool,
    regrid: bool,
    opts: &ActionOptions,
) -> Result<Minimized> {
    let times = grid_for(ms, x, y, t, m);
    let mo = opts.minimize_options();
    let candidates = if multistart || warm.is_none() {
        starts(ms, x, y, &times, warm)
    } else {
        let w = warm.unwrap();
        vec![w.rescaled(t).resampled(times.clone())]
    };
    let results: Vec<Minimized> = candidates
        .into_iter()
        .map(|c| minimize(ms, c, h, &mo))
        .collect();
    let mut best = match best_of(results) {
        Some(b) => b,
        None if !multistart => {
            // warm start failed, fall back to the full start set
            return discrete_solve(ms, x, y, t, h, m, warm, true, regrid, opts);
        }
        None => return Err(JmError::AllStartsFailed),
    };
    let collision_end = ms.is_total_collision(x) || ms.is_total_collision(y);
    if regrid && !collision_end {
        let grid = equidistributed_grid(ms, &best.curve, h);
        let again = minimize(ms, best.curve.resampled(grid), h, &mo);
        if again.status != MinimizeStatus::NearCollision {
            best = again;
        }
    }
    Ok(best)
}

fn result_from(best: Minimized, polished: Option<f64>) -> ActionResult {
    ActionResult {
        value: polished.unwrap_or(best.value),
        refinement: best.curve.segments(),
        gradient_norm: best.gradient_norm,
        status: best.status,
        discrete_value: best.value,
        polished: polished.is_some(),
        minimizer: best.curve,
    }
}

fn try_polish(
    ms: &MassSystem,
    curve: &DiscreteCurve,
    energy: Option<f64>,
    opts: &ActionOptions,
) -> Option<Shot> {
    let v0 = initial_velocity(ms, curve);
    let shot = polish(
        ms,
        curve.start(),
        curve.end(),
        v0,
        curve.duration(),
        energy,
        opts.polish_tol,
    )?;
    (deviation_from(ms, &shot, curve) <= opts.polish_accept).then_some(shot)
}

/// `phi(x, y, T)`: minimal Lagrangian action over curves from `x` to `y` in
/// time `T`.
pub fn phi_fixed_time(
    ms: &MassSystem,
    x: &[f64],
    y: &[f64],
    t: f64,
    opts: &ActionOptions,
) -> Result<ActionResult> {
    phi_fixed_time_warm(ms, x, y, t, opts, None)
}

pub fn phi_fixed_time_warm(
    ms: &MassSystem,
    x: &[f64],
    y: &[f64],
    t: f64,
    opts: &ActionOptions,
    warm: Option<&DiscreteCurve>,
) -> Result<ActionResult> {
    check_endpoints(ms, x, y)?;
    if !(t > 0.0) || !t.is_finite() {
        return Err(JmError::Precondition("duration must be positive".into()));
    }
    if opts.segments < 2 {
        return Err(JmError::Precondition("at least two segments required".into()));
    }
    let cx = ms.is_total_collision(x);
    let cy = ms.is_total_collision(y);
    if cy && !cx {
        let mut r = phi_fixed_time_warm(ms, y, x, t, opts, warm.map(|w| w.reversed()).as_ref())?;
        r.minimizer = r.minimizer.reversed();
        return Ok(r);
    }
    let best = discrete_solve(ms, x, y, t, 0.0, opts.segments, warm, true, opts.regrid, opts)?;
    if !opts.polish {
        return Ok(result_from(best, None));
    }
    if cx && cy {
        let v = collision_richardson(ms, &best.curve, 0.0, opts)?;
        return Ok(result_from(best, Some(v)));
    }
    if cx {
        let v = collision_split(ms, &best.curve, None, opts);
        return Ok(result_from(best, v));
    }
    let v = try_polish(ms, &best.curve, None, opts).map(|s| s.action);
    Ok(result_from(best, v))
}

/// Action of a curve that starts at a total collision, computed as a
/// Richardson-extrapolated discrete value on the collision piece plus a
/// shooting-polished regular piece. Returns `None` if the regular piece does
/// not polish.
fn collision_split(
    ms: &MassSystem,
    curve: &DiscreteCurve,
    energy: Option<f64>,
    opts: &ActionOptions,
) -> Option<f64> {
    let t_end = curve.duration();
    let j = curve.times.iter().position(|&t| t >= t_end / 64.0)?;
    let j = j.clamp(1, curve.segments() - 1);
    let tj = curve.times[j];
    let regular = DiscreteCurve {
        times: curve.times[j..].iter().map(|t| t - tj).collect(),
        nodes: curve.nodes[j..].to_vec(),
    };
    let shot = try_polish(ms, &regular, energy, opts)?;
    let head = DiscreteCurve {
        times: curve.times[..=j].to_vec(),
        nodes: curve.nodes[..=j].to_vec(),
    };
    let h = energy.unwrap_or(0.0);
    let vc = collision_richardson(ms, &head, h, opts).ok()?;
    Some(vc + shot.action + h * shot.duration)
}

fn homothetic_start(x: &[f64], y: &[f64], times: Vec<f64>) -> DiscreteCurve {
    let t_end = *times.last().unwrap();
    let nodes = times
        .iter()
        .map(|t| {
            let s = (t / t_end).powf(2.0 / 3.0);
            x.iter().zip(y).map(|(a, b)| a + s * (b - a)).collect()
        })
        .collect();
    DiscreteCurve { times, nodes }
}

/// Discrete `A_h` from a total collision on an `s^3`-graded grid. The
/// collision layer leaves an `a/M + b/M^2` error, removed by extrapolating
/// from `M/4`, `M/2` and `M` cells.
fn collision_richardson(
    ms: &MassSystem,
    guess: &DiscreteCurve,
    h: f64,
    opts: &ActionOptions,
) -> Result<f64> {
    let x = guess.start();
    let y = guess.end();
    let t = guess.duration();
    let mo = opts.minimize_options();
    let m = opts.segments.max(32);
    let both = ms.is_total_collision(y);
    let solve = |m: usize, warm: Option<&DiscreteCurve>| -> Result<Minimized> {
        let times = graded_grid(t, m, true, both);
        let mut cands = vec![homothetic_start(x, y, times.clone())];
        cands.push(guess.resampled(times.clone()));
        if let Some(w) = warm {
            cands.push(w.resampled(times));
        }
        best_of(cands.into_iter().map(|c| minimize(ms, c, h, &mo)).collect())
            .ok_or(JmError::AllStartsFailed)
    };
    let v1 = solve(m / 4, None)?;
    let v2 = solve(m / 2, Some(&v1.curve))?;
    let v4 = solve(m, Some(&v2.curve))?;
    Ok((v1.value - 6.0 * v2.value + 8.0 * v4.value) / 3.0)
}

/// Outer objective: discrete `A_h` minimized at fixed duration.
struct Outer<'a> {
    ms: &'a MassSystem,
    x: &'a [f64],
    y: &'a [f64],
    h: f64,
    opts: &'a ActionOptions,
    probes: Vec<(f64, f64, DiscreteCurve)>,
}

impl Outer<'_> {
    fn eval(&mut self, t: f64) -> Result<f64> {
        let warm = self
            .probes
            .iter()
            .min_by(|a, b| {
                (a.0.ln() - t.ln())
                    .abs()
                    .partial_cmp(&(b.0.ln() - t.ln()).abs())
                    .unwrap()
            })
            .map(|p| p.2.clone());
        let multistart = warm.is_none();
        let r = discrete_solve(
            self.ms,
            self.x,
            self.y,
            t,
            self.h,
            self.opts.outer_segments,
            warm.as_ref(),
            multistart,
            false,
            self.opts,
        )?;
        self.probes.push((t, r.value, r.curve));
        Ok(r.value)
    }

    fn best(&self) -> (f64, f64, DiscreteCurve) {
        self.probes
            .iter()
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .cloned()
            .unwrap()
    }
}

/// `phi_h(x, y)`: infimum of `A_h` over curves from `x` to `y` of any
/// duration.
pub fn phi_free(
    ms: &MassSystem,
    h: f64,
    x: &[f64],
    y: &[f64],
    opts: &ActionOptions,
) -> Result<FreeTimeResult> {
    check_endpoints(ms, x, y)?;
    if !(h >= 0.0) || !h.is_finite() {
        return Err(JmError::Precondition(format!(
            "energy must be nonnegative, got {h}"
        )));
    }
    if same_point(ms, x, y) {
        let curve = DiscreteCurve {
            times: vec![0.0, 0.0, 0.0],
            nodes: vec![x.to_vec(), x.to_vec(), x.to_vec()],
        };
        return Ok(FreeTimeResult {
            value: 0.0,
            t_star: 0.0,
            inner: ActionResult {
                value: 0.0,
                minimizer: curve,
                gradient_norm: 0.0,
                refinement: 2,
                status: MinimizeStatus::Converged,
                discrete_value: 0.0,
                polished: false,
            },
            bracket: Vec::new(),
            probe_min: 0.0,
            scan_fallback: false,
        });
    }
    let cx = ms.is_total_collision(x);
    let cy = ms.is_total_collision(y);
    if cy && !cx {
        let mut r = phi_free(ms, h, y, x, opts)?;
        r.inner.minimizer = r.inner.minimizer.reversed();
        return Ok(r);
    }

    let l = ms.distance(x, y);
    let u_max = if cx {
        4.0 * ms.potential_raw(y)
    } else {
        ms.potential_raw(x).max(ms.potential_raw(y))
    };
    let mut lo = l / (2.0 * (2.0 * (h + u_max)).sqrt());
    let mut hi = 10.0 * l / (2.0 * h + 1e-6).sqrt();
    if !(lo > 0.0 && hi > lo) {
        return Err(JmError::BracketFailure("degenerate duration range".into()));
    }
    let mut outer = Outer {
        ms,
        x,
        y,
        h,
        opts,
        probes: Vec::new(),
    };
    let k = opts.scan_points.max(4);
    let ratio = (hi / lo).powf(1.0 / (k - 1) as f64);
    let mut grid: Vec<f64> = (0..k).map(|i| lo * ratio.powi(i as i32)).collect();
    let mut vals = Vec::with_capacity(k);
    for &t in &grid {
        vals.push(outer.eval(t)?);
    }
    // expand while the minimum sits on an edge
    for _ in 0..12 {
        let i = argmin(&vals);
        if i == 0 {
            lo /= ratio;
            grid.insert(0, lo);
            vals.insert(0, outer.eval(lo)?);
        } else if i == grid.len() - 1 {
            hi *= ratio;
            grid.push(hi);
            vals.push(outer.eval(hi)?);
        } else {
            break;
        }
    }
    let i = argmin(&vals);
    if i == 0 || i == grid.len() - 1 {
        return Err(JmError::BracketFailure(
            "minimum over durations not bracketed".into(),
        ));
    }
    let scan_fallback = !unimodal(&vals);
    golden(&mut outer, grid[i - 1].ln(), grid[i + 1].ln(), opts.t_rel_tol)?;
    let (t_best, probe_min, warm) = outer.best();

    let best = discrete_solve(
        ms,
        x,
        y,
        t_best,
        h,
        opts.segments,
        Some(&warm),
        true,
        opts.regrid,
        opts,
    )?;
    let bracket: Vec<Probe> = outer
        .probes
        .iter()
        .map(|p| Probe { t: p.0, value: p.1 })
        .collect();

    let mut polished = None;
    let mut t_star = t_best;
    if opts.polish {
        if cx && ms.is_total_collision(y) {
            polished = Some(collision_richardson(ms, &best.curve, h, opts)?);
        } else if cx {
            polished = collision_split(ms, &best.curve, Some(h), opts);
        } else if let Some(shot) = try_polish(ms, &best.curve, Some(h), opts) {
            t_star = shot.duration;
            polished = Some(shot.action + h * shot.duration);
        }
    }
    let inner = result_from(best, polished);
    Ok(FreeTimeResult {
        value: inner.value,
        t_star,
        inner,
        bracket,
        probe_min,
        scan_fallback,
    })
}

fn argmin(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|p| p.0)
        .unwrap()
}

/// Decreasing then increasing, up to relative noise.
fn unimodal(v: &[f64]) -> bool {
    let i = argmin(v);
    let tol = 1e-9 * v[i].abs().max(1.0);
    v[..=i].windows(2).all(|w| w[1] <= w[0] + tol) && v[i..].windows(2).all(|w| w[1] + tol >= w[0])
}

fn golden(outer: &mut Outer<'_>, mut a: f64, mut b: f64, rel_tol: f64) -> Result<()> {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = outer.eval(c.exp())?;
    let mut fd = outer.eval(d.exp())?;
    while b - a > rel_tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = outer.eval(c.exp())?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = outer.eval(d.exp())?;
        }
    }
    Ok(())
}

/// Discrete `A_h` of the straight segment, an upper bound used in tests and
/// diagnostics.
pub fn straight_action(ms: &MassSystem, x: &[f64], y: &[f64], t: f64, h: f64, m: usize) -> f64 {
    discrete_action(ms, &DiscreteCurve::straight(x, y, uniform_grid(t, m)), h).value
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::euler_lagrange_residual;
    use approx::assert_relative_eq;

    fn pair() -> MassSystem {
        MassSystem::new(vec![1.0, 1.0], 2).unwrap()
    }

    /// Composite Simpson rule with `n` (even) panels.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + k as f64 * h);
        }
        s * h / 3.0
    }

    /// Radial two-body value: the Jacobi–Maupertuis length
    /// `int sqrt(2 mu (h + k/r)) dr` with reduced mass `mu = 1/2`, `k = 1`.
    fn radial(h: f64, r0: f64, r1: f64) -> f64 {
        // r = u^2 removes the endpoint singularity at r = 0
        simpson(
            |u: f64| 2.0 * (h * u * u + 1.0).sqrt(),
            r0.sqrt(),
            r1.sqrt(),
            20_000,
        )
    }

    fn config(r: f64) -> Vec<f64> {
        vec![-0.5 * r, 0.0, 0.5 * r, 0.0]
    }

    #[test]
    fn radial_pair_matches_closed_form() {
        let ms = pair();
        for h in [0.0, 0.5, 2.0] {
            let r = phi_free(&ms, h, &config(2.0), &config(4.0), &ActionOptions::default()).unwrap();
            assert!(r.inner.polished);
            assert_relative_eq!(r.value, radial(h, 2.0, 4.0), max_relative = 1e-8);
        }
    }

    #[test]
    fn from_total_collision_matches_closed_form() {
        let ms = pair();
        for h in [0.0, 0.5] {
            let r = phi_free(&ms, h, &[0.0; 4], &config(2.0), &ActionOptions::default()).unwrap();
            assert!(r.inner.polished);
            assert_relative_eq!(r.value, radial(h, 0.0, 2.0), max_relative = 1e-7);
            let back =
                phi_free(&ms, h, &config(2.0), &[0.0; 4], &ActionOptions::default()).unwrap();
            assert_relative_eq!(back.value, r.value, max_relative = 1e-12);
        }
    }

    #[test]
    fn brute_force_duration_scan() {
        // dense scan over T of the M = 512 discrete minimum
        let ms = pair();
        let (x, y) = (config(2.0), config(4.0));
        let h = 0.5;
        let fine = ActionOptions {
            polish: false,
            regrid: false,
            ..ActionOptions::discrete(512)
        };
        let mut warm: Option<DiscreteCurve> = None;
        let mut scan = |t: f64| {
            let r = phi_fixed_time_warm(&ms, &x, &y, t, &fine, warm.as_ref()).unwrap();
            warm = Some(r.minimizer.clone());
            r.value + h * t
        };
        let coarse: Vec<(f64, f64)> = (0..30)
            .map(|k| 0.5 + 0.1 * k as f64)
            .map(|t| (t, scan(t)))
            .collect();
        let t0 = coarse
            .iter()
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap()
            .0;
        let brute = (0..41)
            .map(|k| t0 - 0.1 + 0.005 * k as f64)
            .map(&mut scan)
            .fold(f64::INFINITY, f64::min);
        let r = phi_free(&ms, h, &x, &y, &ActionOptions::default()).unwrap();
        assert_relative_eq!(r.value, brute, max_relative = 1e-4);
    }

    #[test]
    fn coincident_endpoints_and_symmetry() {
        let ms = MassSystem::new(vec![1.0, 2.0, 0.5], 2).unwrap();
        let x = [0.0, 0.0, 1.0, 0.3, -0.4, 1.2];
        let y = [0.4, -0.2, 1.5, 0.6, 0.2, 1.9];
        let o = ActionOptions::default();
        let r = phi_free(&ms, 0.5, &x, &x, &o).unwrap();
        assert_eq!(r.value, 0.0);
        let a = phi_free(&ms, 0.5, &x, &y, &o).unwrap();
        let b = phi_free(&ms, 0.5, &y, &x, &o).unwrap();
        assert!(a.inner.polished && b.inner.polished);
        assert_relative_eq!(a.value, b.value, max_relative = 1e-6);
        assert!(a.probe_min <= a.bracket.iter().map(|p| p.value).fold(f64::INFINITY, f64::min));
        let lo = phi_free(&ms, 0.0, &x, &y, &o).unwrap();
        assert!(lo.value <= a.value);
        assert!(phi_free(&ms, -0.1, &x, &y, &o).is_err());
    }

    #[test]
    fn fixed_time_bounds() {
        let ms = pair();
        let x = config(2.0);
        let y = vec![-1.2, 0.5, 1.1, 0.3];
        let o = ActionOptions::default();
        for t in [0.3, 1.0, 3.0] {
            let r = phi_fixed_time(&ms, &x, &y, t, &o).unwrap();
            assert_eq!(r.status, MinimizeStatus::Converged);
            assert!(r.value >= ms.distance(&x, &y).powi(2) / (2.0 * t));
            assert!(r.value <= straight_action(&ms, &x, &y, t, 0.0, 512) + 1e-9);
        }
        // standing still for a short time costs about U T
        let t = 1e-3;
        let r = phi_fixed_time(&ms, &x, &x, t, &o).unwrap();
        assert_relative_eq!(r.value, ms.potential_raw(&x) * t, max_relative = 1e-6);
    }

    #[test]
    fn euler_lagrange_residual_is_second_order() {
        let ms = MassSystem::new(vec![1.0, 2.0, 0.5], 2).unwrap();
        let x = [0.0, 0.0, 1.0, 0.3, -0.4, 1.2];
        let y = [0.4, -0.2, 1.5, 0.6, 0.2, 1.9];
        let res = |m: usize| {
            let o = ActionOptions {
                gtol: 1e-12,
                ..ActionOptions::discrete(m)
            };
            let r = phi_free(&ms, 0.5, &x, &y, &o).unwrap();
            euler_lagrange_residual(&ms, &r.inner.minimizer)
        };
        let (a, b) = (res(64), res(128));
        assert!((a / b).log2() >= 1.8, "{a} {b}");
    }
}
