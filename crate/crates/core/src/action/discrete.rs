//! Fixed-time action of piecewise-linear curves on a time grid, with its
//! gradient, block-tridiagonal Hessian and a local minimizer.
//!
//! Each cell contributes `1/2 ||dx||^2 / dt + dt U(midpoint) + h dt`. A cell
//! touching a total-collision endpoint uses the homothetic ejection profile
//! `x(t) - x_c ~ (t / dt)^{2/3}` instead, which keeps the cell finite and
//! exact to leading order.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{JmError, Result};
use crate::linalg::solve_block_tridiagonal;
use crate::model::MassSystem;

/// Value returned for curves that touch the collision set.
pub const BARRIER_VALUE: f64 = 1e100;

/// A curve sampled at node times `0 = t_0 < ... < t_M = T` with pinned
/// endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteCurve {
    pub times: Vec<f64>,
    pub nodes: Vec<Vec<f64>>,
}

impl DiscreteCurve {
    pub fn new(times: Vec<f64>, nodes: Vec<Vec<f64>>) -> Result<Self> {
        if times.len() != nodes.len() || times.len() < 3 {
            return Err(JmError::Precondition(
                "a discrete curve needs at least two segments and one node per time".into(),
            ));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(JmError::Precondition("node times must increase".into()));
        }
        Ok(Self { times, nodes })
    }

    /// Straight segment from `x` to `y` sampled at `times`.
    pub fn straight(x: &[f64], y: &[f64], times: Vec<f64>) -> Self {
        let t_end = *times.last().unwrap();
        let t0 = times[0];
        let nodes = times
            .iter()
            .map(|t| {
                let s = (t - t0) / (t_end - t0);
                x.iter().zip(y).map(|(a, b)| a + s * (b - a)).collect()
            })
            .collect();
        Self { times, nodes }
    }

    pub fn segments(&self) -> usize {
        self.times.len() - 1
    }

    pub fn duration(&self) -> f64 {
        self.times[self.times.len() - 1] - self.times[0]
    }

    pub fn start(&self) -> &[f64] {
        &self.nodes[0]
    }

    pub fn end(&self) -> &[f64] {
        self.nodes.last().unwrap()
    }

    /// Same nodes on the grid rescaled to duration `t_new`.
    pub fn rescaled(&self, t_new: f64) -> Self {
        let t0 = self.times[0];
        let f = t_new / self.duration();
        Self {
            times: self.times.iter().map(|t| (t - t0) * f).collect(),
            nodes: self.nodes.clone(),
        }
    }

    /// Piecewise-linear interpolation at time `t`.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let k = self
            .times
            .partition_point(|&s| s <= t)
            .saturating_sub(1)
            .min(self.segments() - 1);
        let (ta, tb) = (self.times[k], self.times[k + 1]);
        let s = ((t - ta) / (tb - ta)).clamp(0.0, 1.0);
        self.nodes[k]
            .iter()
            .zip(&self.nodes[k + 1])
            .map(|(a, b)| a + s * (b - a))
            .collect()
    }

    /// Resamples the curve on a new grid of the same duration.
    pub fn resampled(&self, times: Vec<f64>) -> Self {
        let mut nodes: Vec<Vec<f64>> = times.iter().map(|t| self.eval(*t)).collect();
        let last = nodes.len() - 1;
        nodes[0] = self.start().to_vec();
        nodes[last] = self.end().to_vec();
        Self { times, nodes }
    }

    /// Reversed curve `t -> gamma(T - t)`.
    pub fn reversed(&self) -> Self {
        let t_end = *self.times.last().unwrap();
        let t0 = self.times[0];
        Self {
            times: self.times.iter().rev().map(|t| t0 + t_end - t).collect(),
            nodes: self.nodes.iter().rev().cloned().collect(),
        }
    }

    /// Checks `M >= 2`, increasing times and collision-free interior nodes.
    pub fn validate(&self, ms: &MassSystem) -> Result<()> {
        Self::new(self.times.clone(), self.nodes.clone())?;
        for x in &self.nodes {
            ms.check_shape(x)?;
        }
        let tol = curve_collision_tol(ms, &self.nodes);
        for x in &self.nodes[1..self.nodes.len() - 1] {
            let (r, i, j) = ms.min_pair_distance(x);
            if r <= tol {
                return Err(JmError::Collision { i, j, distance: r });
            }
        }
        Ok(())
    }
}

/// Uniform grid with `m` cells on `[0, t]`.
pub fn uniform_grid(t: f64, m: usize) -> Vec<f64> {
    (0..=m).map(|k| t * k as f64 / m as f64).collect()
}

/// Grid refined like `s^3` toward collision endpoints, where the motion
/// behaves like `t^{2/3}`.
pub fn graded_grid(t: f64, m: usize, start: bool, end: bool) -> Vec<f64> {
    (0..=m)
        .map(|k| {
            let s = k as f64 / m as f64;
            let g = match (start, end) {
                (true, true) => {
                    let a = s * s * s;
                    let b = (1.0 - s).powi(3);
                    a / (a + b)
                }
                (true, false) => s * s * s,
                (false, true) => 1.0 - (1.0 - s).powi(3),
                (false, false) => s,
            };
            t * g
        })
        .collect()
}

/// Collision cutoff for a whole curve: relative tolerance times the largest
/// pairwise distance over all nodes.
pub(crate) fn curve_collision_tol(ms: &MassSystem, nodes: &[Vec<f64>]) -> f64 {
    let scale = nodes
        .iter()
        .map(|x| ms.max_pair_distance(x))
        .fold(0.0, f64::max);
    crate::model::COLLISION_REL_TOL * scale
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CellKind {
    Regular,
    FromCollision,
    ToCollision,
}

/// Action value with a flag for curves hitting the collision barrier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionValue {
    pub value: f64,
    pub near_collision: bool,
}

pub(crate) struct Layout {
    pub start_collision: bool,
    pub end_collision: bool,
    tol: f64,
    /// `C[(i,c),(j,c)] = m_i m_j / M`, the center-of-mass part of the mass matrix.
    cm: Vec<f64>,
}

impl Layout {
    pub fn new(ms: &MassSystem, curve: &DiscreteCurve) -> Self {
        let n = ms.ndof();
        let d = ms.dim();
        let mt = ms.total_mass();
        let mut cm = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                if a % d == b % d {
                    cm[a * n + b] = ms.coord_mass(a) * ms.coord_mass(b) / mt;
                }
            }
        }
        Self {
            start_collision: ms.is_total_collision(curve.start()),
            end_collision: ms.is_total_collision(curve.end()),
            tol: curve_collision_tol(ms, &curve.nodes),
            cm,
        }
    }

    fn kind(&self, cell: usize, cells: usize) -> CellKind {
        if cell == 0 && self.start_collision {
            CellKind::FromCollision
        } else if cell + 1 == cells && self.end_collision {
            CellKind::ToCollision
        } else {
            CellKind::Regular
        }
    }
}

fn collides(ms: &MassSystem, x: &[f64], tol: f64) -> bool {
    let r = ms.min_pair_distance(x).0;
    r <= tol || r == 0.0 || !r.is_finite()
}

/// Splits `delta` into its center-of-mass and relative kinetic parts,
/// returning `(||P_cm delta||^2, ||P_rel delta||^2)`.
fn split_kinetic(ms: &MassSystem, delta: &[f64]) -> (f64, f64) {
    let total = ms.inner(delta, delta);
    let c = ms.center_of_mass(delta);
    let cm = ms.total_mass() * c.iter().map(|x| x * x).sum::<f64>();
    (cm, (total - cm).max(0.0))
}

fn cell_value(ms: &MassSystem, xa: &[f64], xb: &[f64], dt: f64, kind: CellKind) -> f64 {
    match kind {
        CellKind::Regular => {
            let dx: Vec<f64> = xb.iter().zip(xa).map(|(b, a)| b - a).collect();
            let mid: Vec<f64> = xa.iter().zip(xb).map(|(a, b)| 0.5 * (a + b)).collect();
            0.5 * ms.inner(&dx, &dx) / dt + dt * ms.potential_raw(&mid)
        }
        CellKind::FromCollision | CellKind::ToCollision => {
            let (xc, xr) = if kind == CellKind::FromCollision {
                (xa, xb)
            } else {
                (xb, xa)
            };
            let delta: Vec<f64> = xr.iter().zip(xc).map(|(r, c)| r - c).collect();
            let (k_cm, k_rel) = split_kinetic(ms, &delta);
            0.5 * k_cm / dt + (2.0 / 3.0) * k_rel / dt + 3.0 * dt * ms.potential_raw(xr)
        }
    }
}

/// Discrete action `A_h` of `curve`.
pub fn discrete_action(ms: &MassSystem, curve: &DiscreteCurve, h: f64) -> ActionValue {
    let layout = Layout::new(ms, curve);
    action_with_layout(ms, curve, h, &layout)
}

pub(crate) fn action_with_layout(
    ms: &MassSystem,
    curve: &DiscreteCurve,
    h: f64,
    layout: &Layout,
) -> ActionValue {
    let cells = curve.segments();
    let mut total = 0.0;
    for k in 0..cells {
        let (xa, xb) = (&curve.nodes[k], &curve.nodes[k + 1]);
        let kind = layout.kind(k, cells);
        if k > 0 && collides(ms, xa, layout.tol) {
            return barrier();
        }
        if kind == CellKind::Regular {
            let mid: Vec<f64> = xa.iter().zip(xb).map(|(a, b)| 0.5 * (a + b)).collect();
            if collides(ms, &mid, layout.tol) {
                return barrier();
            }
        }
        let dt = curve.times[k + 1] - curve.times[k];
        let c = cell_value(ms, xa, xb, dt, kind);
        if !c.is_finite() {
            return barrier();
        }
        total += c;
    }
    ActionValue {
        value: total + h * curve.duration(),
        near_collision: false,
    }
}

fn barrier() -> ActionValue {
    ActionValue {
        value: BARRIER_VALUE,
        near_collision: true,
    }
}

/// Gradient and block-tridiagonal Hessian over the interior nodes.
pub(crate) struct Assembly {
    pub grad: Vec<DVector<f64>>,
    pub diag: Vec<DMatrix<f64>>,
    pub off: Vec<DMatrix<f64>>,
    /// Kinetic part only; positive definite, used as preconditioner and
    /// damping metric.
    pub kin_diag: Vec<DMatrix<f64>>,
    pub kin_off: Vec<DMatrix<f64>>,
}

pub(crate) fn assemble(ms: &MassSystem, curve: &DiscreteCurve, layout: &Layout) -> Assembly {
    let n = ms.ndof();
    let cells = curve.segments();
    let interior = cells - 1;
    let mut grad = vec![DVector::zeros(n); interior];
    let mut diag = vec![DMatrix::zeros(n, n); interior];
    let mut off = vec![DMatrix::zeros(n, n); interior.saturating_sub(1)];
    let mut kin_diag = vec![DMatrix::zeros(n, n); interior];
    let mut kin_off = vec![DMatrix::zeros(n, n); interior.saturating_sub(1)];
    let mut gu = vec![0.0; n];
    let mut hu = vec![0.0; n * n];
    let mass: Vec<f64> = (0..n).map(|a| ms.coord_mass(a)).collect();

    for k in 0..cells {
        let dt = curve.times[k + 1] - curve.times[k];
        let (xa, xb) = (&curve.nodes[k], &curve.nodes[k + 1]);
        // interior index of node k is k - 1
        let ia = k.checked_sub(1).filter(|i| *i < interior);
        let ib = if k < interior { Some(k) } else { None };
        match layout.kind(k, cells) {
            CellKind::Regular => {
                let mid: Vec<f64> = xa.iter().zip(xb).map(|(a, b)| 0.5 * (a + b)).collect();
                ms.potential_gradient(&mid, &mut gu);
                ms.potential_hessian(&mid, &mut hu);
                for a in 0..n {
                    let kin = mass[a] * (xb[a] - xa[a]) / dt;
                    let pot = 0.5 * dt * gu[a];
                    if let Some(i) = ia {
                        grad[i][a] += -kin + pot;
                    }
                    if let Some(i) = ib {
                        grad[i][a] += kin + pot;
                    }
                }
                for a in 0..n {
                    for b in 0..n {
                        let kab = if a == b { mass[a] / dt } else { 0.0 };
                        let pab = 0.25 * dt * hu[a * n + b];
                        if let Some(i) = ia {
                            diag[i][(a, b)] += kab + pab;
                            kin_diag[i][(a, b)] += kab;
                        }
                        if let Some(i) = ib {
                            diag[i][(a, b)] += kab + pab;
                            kin_diag[i][(a, b)] += kab;
                        }
                        if let (Some(i), Some(_)) = (ia, ib) {
                            off[i][(a, b)] += -kab + pab;
                            kin_off[i][(a, b)] += -kab;
                        }
                    }
                }
            }
            kind => {
                let (xc, xr, idx) = if kind == CellKind::FromCollision {
                    (xa, xb, ib)
                } else {
                    (xb, xa, ia)
                };
                let Some(i) = idx else { continue };
                let delta: Vec<f64> = xr.iter().zip(xc).map(|(r, c)| r - c).collect();
                ms.potential_gradient(xr, &mut gu);
                ms.potential_hessian(xr, &mut hu);
                for a in 0..n {
                    let mut cd = 0.0;
                    for b in 0..n {
                        cd += layout.cm[a * n + b] * delta[b];
                    }
                    let md = mass[a] * delta[a];
                    grad[i][a] += (cd + (4.0 / 3.0) * (md - cd)) / dt + 3.0 * dt * gu[a];
                    for b in 0..n {
                        let c = layout.cm[a * n + b];
                        let m = if a == b { mass[a] } else { 0.0 };
                        let kab = (c + (4.0 / 3.0) * (m - c)) / dt;
                        diag[i][(a, b)] += kab + 3.0 * dt * hu[a * n + b];
                        kin_diag[i][(a, b)] += kab;
                    }
                }
            }
        }
    }
    Assembly {
        grad,
        diag,
        off,
        kin_diag,
        kin_off,
    }
}

/// Largest per-node force residual `||g_k||_* / dt_k`, relative to
/// `1 + ||grad U(x_k)||_*`, with `dt_k` the average of the adjacent cells.
pub(crate) fn gradient_norm(ms: &MassSystem, curve: &DiscreteCurve, grad: &[DVector<f64>]) -> f64 {
    let mut gu = vec![0.0; ms.ndof()];
    grad.iter()
        .enumerate()
        .map(|(i, g)| {
            let k = i + 1;
            let dt = 0.5 * (curve.times[k + 1] - curve.times[k - 1]);
            ms.potential_gradient(&curve.nodes[k], &mut gu);
            let force = ms.dual_norm_sq(&gu).sqrt();
            ms.dual_norm_sq(g.as_slice()).sqrt() / (dt * (1.0 + force))
        })
        .fold(0.0, f64::max)
}

/// Largest dual-norm residual of Newton's equations `M x'' = grad U(x)` at the
/// interior nodes, using the three-point second difference.
pub fn euler_lagrange_residual(ms: &MassSystem, curve: &DiscreteCurve) -> f64 {
    let n = ms.ndof();
    let mut gu = vec![0.0; n];
    let mut worst: f64 = 0.0;
    for k in 1..curve.segments() {
        let (t0, t1, t2) = (curve.times[k - 1], curve.times[k], curve.times[k + 1]);
        let (ha, hb) = (t1 - t0, t2 - t1);
        let (xa, x, xb) = (&curve.nodes[k - 1], &curve.nodes[k], &curve.nodes[k + 1]);
        ms.potential_gradient(x, &mut gu);
        let r: Vec<f64> = (0..n)
            .map(|a| {
                let acc = 2.0 * ((xb[a] - x[a]) / hb - (x[a] - xa[a]) / ha) / (ha + hb);
                ms.coord_mass(a) * acc - gu[a]
            })
            .collect();
        worst = worst.max(ms.dual_norm_sq(&r).sqrt());
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MinimizeStatus {
    Converged,
    MaxIter,
    NearCollision,
}

#[derive(Debug, Clone)]
pub(crate) struct Minimized {
    pub curve: DiscreteCurve,
    pub value: f64,
    pub gradient_norm: f64,
    pub status: MinimizeStatus,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct MinimizeOptions {
    pub gtol: f64,
    pub max_iter: usize,
    pub descent_iters: usize,
}

fn apply_step(curve: &DiscreteCurve, step: &[DVector<f64>], alpha: f64) -> DiscreteCurve {
    let mut out = curve.clone();
    for (i, s) in step.iter().enumerate() {
        out.nodes[i + 1]
            .iter_mut()
            .zip(s.iter())
            .for_each(|(x, d)| *x += alpha * d);
    }
    out
}

fn dot(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

/// Backtracking Armijo search rejecting steps that reach the collision set.
fn line_search(
    ms: &MassSystem,
    curve: &DiscreteCurve,
    layout: &Layout,
    f0: f64,
    step: &[DVector<f64>],
    slope: f64,
) -> Option<(DiscreteCurve, f64, f64)> {
    let mut alpha = 1.0;
    for _ in 0..40 {
        let trial = apply_step(curve, step, alpha);
        let v = action_with_layout(ms, &trial, 0.0, layout);
        if !v.near_collision && v.value <= f0 + 1e-4 * alpha * slope {
            return Some((trial, v.value, alpha));
        }
        alpha *= 0.5;
    }
    None
}

/// Minimizes the discrete action over interior nodes: preconditioned
/// gradient descent first, then damped Newton.
pub(crate) fn minimize(
    ms: &MassSystem,
    start: DiscreteCurve,
    h: f64,
    opts: &MinimizeOptions,
) -> Minimized {
    let layout = Layout::new(ms, &start);
    let hc = h * start.duration();
    let mut curve = start;
    let mut f = action_with_layout(ms, &curve, 0.0, &layout);
    if f.near_collision {
        return Minimized {
            value: BARRIER_VALUE,
            curve,
            gradient_norm: f64::INFINITY,
            status: MinimizeStatus::NearCollision,
        };
    }
    if curve.segments() < 2 {
        return Minimized {
            value: f.value + hc,
            curve,
            gradient_norm: 0.0,
            status: MinimizeStatus::Converged,
        };
    }
    let mut fval = f.value;
    let mut asm = assemble(ms, &curve, &layout);
    let mut gnorm = gradient_norm(ms, &curve, &asm.grad);
    let g_start = gnorm;
    let mut hit_barrier = false;

    // Sobolev-preconditioned descent
    for _ in 0..opts.descent_iters {
        if gnorm <= opts.gtol || gnorm <= 1e-2 * g_start {
            break;
        }
        let rhs: Vec<DVector<f64>> = asm.grad.iter().map(|g| -g).collect();
        let Some(step) = solve_block_tridiagonal(&asm.kin_diag, &asm.kin_off, &rhs) else {
            break;
        };
        let slope = dot(&asm.grad, &step);
        match line_search(ms, &curve, &layout, fval, &step, slope) {
            Some((c, v, _)) => {
                curve = c;
                fval = v;
            }
            None => {
                hit_barrier = true;
                break;
            }
        }
        asm = assemble(ms, &curve, &layout);
        gnorm = gradient_norm(ms, &curve, &asm.grad);
    }

    // damped Newton in the kinetic metric
    let mut lambda: f64 = 0.0;
    let mut iter = 0;
    let mut stalled = 0;
    while gnorm > opts.gtol && iter < opts.max_iter {
        iter += 1;
        let diag: Vec<DMatrix<f64>> = asm
            .diag
            .iter()
            .zip(&asm.kin_diag)
            .map(|(d, k)| d + k * lambda)
            .collect();
        let off: Vec<DMatrix<f64>> = asm
            .off
            .iter()
            .zip(&asm.kin_off)
            .map(|(d, k)| d + k * lambda)
            .collect();
        let rhs: Vec<DVector<f64>> = asm.grad.iter().map(|g| -g).collect();
        let Some(step) = solve_block_tridiagonal(&diag, &off, &rhs) else {
            lambda = if lambda == 0.0 { 1e-3 } else { lambda * 10.0 };
            if lambda > 1e8 {
                break;
            }
            continue;
        };
        let slope = dot(&asm.grad, &step);
        if slope >= 0.0 {
            lambda = if lambda == 0.0 { 1e-3 } else { lambda * 10.0 };
            continue;
        }
        match line_search(ms, &curve, &layout, fval, &step, slope) {
            Some((c, v, alpha)) => {
                let decrease = fval - v;
                curve = c;
                fval = v;
                if alpha == 1.0 {
                    lambda *= 0.1;
                    if lambda < 1e-8 {
                        lambda = 0.0;
                    }
                } else {
                    lambda = if lambda == 0.0 { 1e-3 } else { lambda * 2.0 };
                }
                asm = assemble(ms, &curve, &layout);
                gnorm = gradient_norm(ms, &curve, &asm.grad);
                if decrease <= 1e-15 * fval.abs().max(1.0) {
                    stalled += 1;
                    if stalled >= 3 {
                        break;
                    }
                } else {
                    stalled = 0;
                }
            }
            None => {
                // no acceptable step even at tiny lengths: roundoff floor or barrier
                let tiny = -slope <= 1e-14 * fval.abs().max(1.0);
                if tiny {
                    break;
                }
                lambda = if lambda == 0.0 { 1e-3 } else { lambda * 10.0 };
                if lambda > 1e8 {
                    hit_barrier = true;
                    break;
                }
            }
        }
    }
    let status = if gnorm <= opts.gtol {
        MinimizeStatus::Converged
    } else if hit_barrier {
        MinimizeStatus::NearCollision
    } else {
        MinimizeStatus::MaxIter
    };
    f.value = fval + hc;
    Minimized {
        curve,
        value: f.value,
        gradient_norm: gnorm,
        status,
    }
}

/// Cumulative Jacobi–Maupertuis length `int sqrt(2(h + U)) ||dx||` at the
/// nodes.
pub(crate) fn jm_arclength(ms: &MassSystem, curve: &DiscreteCurve, h: f64) -> Vec<f64> {
    let layout = Layout::new(ms, curve);
    let cells = curve.segments();
    let mut s = vec![0.0; cells + 1];
    for k in 0..cells {
        let (xa, xb) = (&curve.nodes[k], &curve.nodes[k + 1]);
        let dx: Vec<f64> = xb.iter().zip(xa).map(|(b, a)| b - a).collect();
        let len = ms.norm(&dx);
        let seg = match layout.kind(k, cells) {
            CellKind::Regular => {
                let mid: Vec<f64> = xa.iter().zip(xb).map(|(a, b)| 0.5 * (a + b)).collect();
                (2.0 * (h + ms.potential_raw(&mid))).sqrt() * len
            }
            // int_0^1 sqrt(2 U(x)/s) ds = 2 sqrt(2 U(x)) for a homothetic cell
            CellKind::FromCollision => 2.0 * (2.0 * ms.potential_raw(xb)).sqrt() * len,
            CellKind::ToCollision => 2.0 * (2.0 * ms.potential_raw(xa)).sqrt() * len,
        };
        s[k + 1] = s[k] + seg;
    }
    s
}

/// Time grid whose cells carry equal Jacobi–Maupertuis length along `curve`.
pub(crate) fn equidistributed_grid(ms: &MassSystem, curve: &DiscreteCurve, h: f64) -> Vec<f64> {
    let s = jm_arclength(ms, curve, h);
    let m = curve.segments();
    let total = s[m];
    if !(total > 0.0) || !total.is_finite() {
        return curve.times.clone();
    }
    let mut times = Vec::with_capacity(m + 1);
    times.push(curve.times[0]);
    let mut k = 0;
    for j in 1..m {
        let target = total * j as f64 / m as f64;
        while k < m - 1 && s[k + 1] < target {
            k += 1;
        }
        let ds = s[k + 1] - s[k];
        let frac = if ds > 0.0 { (target - s[k]) / ds } else { 0.0 };
        times.push(curve.times[k] + frac * (curve.times[k + 1] - curve.times[k]));
    }
    times.push(curve.times[m]);
    // keep cells from degenerating
    let min_dt = 1e-6 * curve.duration() / m as f64;
    for j in 1..=m {
        if times[j] < times[j - 1] + min_dt {
            times[j] = times[j - 1] + min_dt;
        }
    }
    let last = times[m];
    let t_end = curve.times[m];
    if last > t_end {
        let t0 = curve.times[0];
        times
            .iter_mut()
            .for_each(|t| *t = t0 + (*t - t0) * (t_end - t0) / (last - t0));
    }
    times
}

/// Mass-orthonormal direction for bent initial guesses: body displacements
/// rotated by 90 degrees in the first coordinate plane, center of mass removed.
pub(crate) fn arc_direction(ms: &MassSystem, x: &[f64], y: &[f64]) -> Option<Vec<f64>> {
    let d = ms.dim();
    let rot = |src: &[f64]| -> Vec<f64> {
        let mut w = vec![0.0; src.len()];
        for i in 0..ms.bodies() {
            w[i * d] = -src[i * d + 1];
            w[i * d + 1] = src[i * d];
        }
        w
    };
    let disp: Vec<f64> = y.iter().zip(x).map(|(b, a)| b - a).collect();
    let mut w = ms.remove_center(&rot(&ms.remove_center(&disp)));
    if ms.norm(&w) < 1e-12 * (1.0 + ms.norm(&disp)) {
        let mid: Vec<f64> = x.iter().zip(y).map(|(a, b)| 0.5 * (a + b)).collect();
        w = ms.remove_center(&rot(&ms.remove_center(&mid)));
    }
    let nrm = ms.norm(&w);
    if !(nrm > 0.0) {
        return None;
    }
    Some(w.into_iter().map(|v| v / nrm).collect())
}

/// Straight segment plus a `sin(pi t / T)` bump of size `amplitude` along `dir`.
pub(crate) fn arc_start(
    x: &[f64],
    y: &[f64],
    times: Vec<f64>,
    dir: &[f64],
    amplitude: f64,
) -> DiscreteCurve {
    let mut c = DiscreteCurve::straight(x, y, times);
    let t_end = c.duration();
    let m = c.segments();
    for k in 1..m {
        let s = (std::f64::consts::PI * c.times[k] / t_end).sin();
        c.nodes[k]
            .iter_mut()
            .zip(dir)
            .for_each(|(v, w)| *v += amplitude * s * w);
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn pair() -> MassSystem {
        MassSystem::new(vec![1.0, 1.0], 2).unwrap()
    }

    #[test]
    fn parallel_translation_action() {
        // U stays 1/2 while both bodies move up one unit in time 1
        let ms = pair();
        let c = DiscreteCurve::straight(
            &[-1.0, 0.0, 1.0, 0.0],
            &[-1.0, 1.0, 1.0, 1.0],
            uniform_grid(1.0, 64),
        );
        let a0 = discrete_action(&ms, &c, 0.0);
        assert!(!a0.near_collision);
        assert_relative_eq!(a0.value, 1.5, epsilon = 1e-12);
        let a1 = discrete_action(&ms, &c, 1.0);
        assert_relative_eq!(a1.value - a0.value, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn quadrature_is_second_order() {
        // a curved path through varying U
        let ms = pair();
        let path = |m: usize| {
            let times = uniform_grid(2.0, m);
            let nodes = times
                .iter()
                .map(|t| {
                    let r = 1.0 + 0.5 * t;
                    let a = 0.4 * t;
                    vec![-r * a.cos(), -r * a.sin(), r * a.cos(), r * a.sin()]
                })
                .collect();
            DiscreteCurve { times, nodes }
        };
        let exact = {
            // Richardson limit from very fine grids
            let f = discrete_action(&ms, &path(4096), 0.0).value;
            let g = discrete_action(&ms, &path(8192), 0.0).value;
            g + (g - f) / 3.0
        };
        let e64 = (discrete_action(&ms, &path(64), 0.0).value - exact).abs();
        let e128 = (discrete_action(&ms, &path(128), 0.0).value - exact).abs();
        let order = (e64 / e128).log2();
        assert!(order > 1.9 && order < 2.1, "order {order}");
    }

    #[test]
    fn collision_nodes_hit_barrier() {
        let ms = pair();
        let c = DiscreteCurve::straight(
            &[-1.0, 0.0, 1.0, 0.0],
            &[1.0, 0.0, -1.0, 0.0],
            uniform_grid(1.0, 4),
        );
        let v = discrete_action(&ms, &c, 0.0);
        assert!(v.near_collision);
        assert!(v.value.is_finite() && v.value >= BARRIER_VALUE);
    }

    #[test]
    fn gradient_and_hessian_match_finite_differences() {
        let ms = MassSystem::new(vec![1.0, 2.0, 0.7], 2).unwrap();
        let x = [0.0, 0.0, 1.0, 0.2, -0.3, 1.1];
        let y = [0.5, 0.4, 1.7, -0.3, 0.1, 1.9];
        let dir = arc_direction(&ms, &x, &y).unwrap();
        let c = arc_start(&x, &y, uniform_grid(1.3, 5), &dir, 0.2);
        let layout = Layout::new(&ms, &c);
        let asm = assemble(&ms, &c, &layout);
        let eps = 1e-6;
        for node in 1..4 {
            for a in 0..6 {
                let mut cp = c.clone();
                let mut cm = c.clone();
                cp.nodes[node][a] += eps;
                cm.nodes[node][a] -= eps;
                let fd = (discrete_action(&ms, &cp, 0.0).value
                    - discrete_action(&ms, &cm, 0.0).value)
                    / (2.0 * eps);
                assert_relative_eq!(asm.grad[node - 1][a], fd, epsilon = 1e-6);
                let gp = assemble(&ms, &cp, &layout);
                let gm = assemble(&ms, &cm, &layout);
                for other in 1..4 {
                    for b in 0..6 {
                        let fd2 = (gp.grad[other - 1][b] - gm.grad[other - 1][b]) / (2.0 * eps);
                        let (i, j) = (other - 1, node - 1);
                        let an = if i == j {
                            asm.diag[i][(b, a)]
                        } else if j == i + 1 {
                            asm.off[i][(b, a)]
                        } else if i == j + 1 {
                            asm.off[j][(a, b)]
                        } else {
                            0.0
                        };
                        assert!((an - fd2).abs() < 1e-5, "H[{other},{b}][{node},{a}]");
                    }
                }
            }
        }
    }

    #[test]
    fn collision_cell_derivatives() {
        let ms = MassSystem::new(vec![1.0, 3.0], 2).unwrap();
        let x = [0.0; 4];
        let y = [-1.5, 0.5, 0.5, 0.3];
        let c = DiscreteCurve::straight(&x, &y, graded_grid(2.0, 6, true, false));
        let layout = Layout::new(&ms, &c);
        assert!(layout.start_collision);
        let asm = assemble(&ms, &c, &layout);
        let eps = 1e-7;
        for a in 0..4 {
            let mut cp = c.clone();
            let mut cm = c.clone();
            cp.nodes[1][a] += eps;
            cm.nodes[1][a] -= eps;
            let fd = (discrete_action(&ms, &cp, 0.0).value - discrete_action(&ms, &cm, 0.0).value)
                / (2.0 * eps);
            assert_relative_eq!(asm.grad[0][a], fd, epsilon = 1e-5, max_relative = 1e-6);
        }
    }

    #[test]
    fn minimizer_satisfies_discrete_equations() {
        let ms = pair();
        let x = [-1.0, 0.0, 1.0, 0.0];
        let y = [-2.0, 0.5, 2.0, -0.5];
        let c = DiscreteCurve::straight(&x, &y, uniform_grid(2.0, 64));
        let out = minimize(
            &ms,
            c,
            0.0,
            &MinimizeOptions {
                gtol: 1e-10,
                max_iter: 100,
                descent_iters: 20,
            },
        );
        assert_eq!(out.status, MinimizeStatus::Converged);
        assert!(out.gradient_norm <= 1e-10);
        let straight = discrete_action(
            &ms,
            &DiscreteCurve::straight(&x, &y, uniform_grid(2.0, 64)),
            0.0,
        );
        assert!(out.value < straight.value);
    }

    #[test]
    fn equidistribution_refines_near_collision_endpoint() {
        let ms = pair();
        let x = [0.0; 4];
        let y = [-2.0, 0.0, 2.0, 0.0];
        let c = DiscreteCurve::straight(&x, &y, uniform_grid(3.0, 32));
        let g = equidistributed_grid(&ms, &c, 0.5);
        assert!(g[1] - g[0] < g[32] - g[31]);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        assert_relative_eq!(g[32], 3.0);
    }
}
