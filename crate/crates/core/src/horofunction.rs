//! Normalized Busemann functions along rays, horofunction grid fields and
//! the Hamilton–Jacobi checks they must pass.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::action::{phi_free, ActionOptions};
use crate::dynamics::Trajectory;
use crate::error::{JmError, Result};
use crate::model::MassSystem;

/// Something that can be evaluated at a configuration. `None` marks points the
/// field cannot represent (outside a grid, failed evaluation).
pub trait ScalarField: Sync {
    fn value(&self, x: &[f64]) -> Option<f64>;
}

impl<F> ScalarField for F
where
    F: Fn(&[f64]) -> Option<f64> + Sync,
{
    fn value(&self, x: &[f64]) -> Option<f64> {
        self(x)
    }
}

/// Regular lattice `center + spacing * sum_j i_j e_j`, `i_j in [-w, w]`, with
/// mass-orthonormal directions. Points are enumerated with the last direction
/// varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub center: Vec<f64>,
    pub directions: Vec<Vec<f64>>,
    pub spacing: f64,
    pub half_width: usize,
}

impl Lattice {
    /// Lattice spanned by the mass-orthonormal basis of the center-of-mass
    /// free subspace.
    pub fn reduced(ms: &MassSystem, center: Vec<f64>, spacing: f64, half_width: usize) -> Self {
        Self {
            center,
            directions: ms.reduced_basis().vectors().to_vec(),
            spacing,
            half_width,
        }
    }

    pub fn side(&self) -> usize {
        2 * self.half_width + 1
    }

    pub fn len(&self) -> usize {
        self.side().pow(self.directions.len() as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn multi_index(&self, mut idx: usize) -> Vec<i64> {
        let s = self.side();
        let k = self.directions.len();
        let mut out = vec![0i64; k];
        for j in (0..k).rev() {
            out[j] = (idx % s) as i64 - self.half_width as i64;
            idx /= s;
        }
        out
    }

    pub fn flat_index(&self, mi: &[i64]) -> Option<usize> {
        let s = self.side() as i64;
        let w = self.half_width as i64;
        let mut idx = 0i64;
        for &i in mi {
            if i < -w || i > w {
                return None;
            }
            idx = idx * s + (i + w);
        }
        Some(idx as usize)
    }

    pub fn point(&self, mi: &[i64]) -> Vec<f64> {
        let mut x = self.center.clone();
        for (dir, &i) in self.directions.iter().zip(mi) {
            for (xa, da) in x.iter_mut().zip(dir) {
                *xa += self.spacing * i as f64 * da;
            }
        }
        x
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len())
            .map(|k| self.point(&self.multi_index(k)))
            .collect()
    }

    pub(crate) fn check_orthonormal(&self, ms: &MassSystem) -> Result<()> {
        for (i, a) in self.directions.iter().enumerate() {
            ms.check_shape(a)?;
            for (j, b) in self.directions.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                if (ms.inner(a, b) - want).abs() > 1e-9 {
                    return Err(JmError::Precondition(
                        "lattice directions must be mass-orthonormal".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HorofunctionField {
    pub grid: Vec<Vec<f64>>,
    pub lattice: Option<Lattice>,
    pub values: Vec<f64>,
    /// False where evaluation failed; such values are meaningless.
    pub valid: Vec<bool>,
    pub h: f64,
    pub truncation_times: Vec<f64>,
    /// `|u_{t_k} - u_{t_{k-1}}|` for the last two truncations.
    pub increments: Vec<f64>,
    /// Values at every truncation.
    pub history: Vec<Vec<f64>>,
    pub converged: bool,
}

impl HorofunctionField {
    pub fn max_increment(&self) -> f64 {
        self.increments
            .iter()
            .zip(&self.valid)
            .filter(|(_, v)| **v)
            .map(|(d, _)| *d)
            .fold(0.0, f64::max)
    }

    /// Value at a grid point given by coordinates, matched exactly up to
    /// `1e-12` relative.
    fn lookup(&self, x: &[f64]) -> Option<f64> {
        let scale = 1e-12 * (1.0 + x.iter().map(|v| v.abs()).fold(0.0, f64::max));
        self.grid
            .iter()
            .position(|g| g.iter().zip(x).all(|(a, b)| (a - b).abs() <= scale))
            .filter(|&k| self.valid[k])
            .map(|k| self.values[k])
    }

    /// Multilinear interpolation inside the lattice patch.
    fn interpolate(&self, ms: &MassSystem, x: &[f64]) -> Option<f64> {
        let lat = self.lattice.as_ref()?;
        let k = lat.directions.len();
        let d: Vec<f64> = x.iter().zip(&lat.center).map(|(a, b)| a - b).collect();
        let coords: Vec<f64> = lat
            .directions
            .iter()
            .map(|e| ms.inner(&d, e) / lat.spacing)
            .collect();
        // reject points off the patch's affine span
        let mut back = lat.center.clone();
        for (e, c) in lat.directions.iter().zip(&coords) {
            for (b, ea) in back.iter_mut().zip(e) {
                *b += lat.spacing * c * ea;
            }
        }
        if ms.distance(&back, x) > 1e-9 * (1.0 + ms.norm(x)) {
            return None;
        }
        let w = lat.half_width as f64;
        if coords.iter().any(|c| c.abs() > w + 1e-12) {
            return None;
        }
        let base: Vec<i64> = coords
            .iter()
            .map(|c| (c.floor() as i64).clamp(-(lat.half_width as i64), lat.half_width as i64 - 1))
            .collect();
        let mut acc = 0.0;
        for corner in 0..(1usize << k) {
            let mut wgt = 1.0;
            let mut mi = base.clone();
            for j in 0..k {
                let f = coords[j] - base[j] as f64;
                if corner >> j & 1 == 1 {
                    mi[j] += 1;
                    wgt *= f;
                } else {
                    wgt *= 1.0 - f;
                }
            }
            if wgt == 0.0 {
                continue;
            }
            let idx = lat.flat_index(&mi)?;
            if !self.valid[idx] {
                return None;
            }
            acc += wgt * self.values[idx];
        }
        Some(acc)
    }

    /// The field as a [`ScalarField`], exact on grid points and interpolated
    /// inside a lattice patch.
    pub fn as_field<'a>(&'a self, ms: &'a MassSystem) -> impl ScalarField + 'a {
        move |x: &[f64]| self.lookup(x).or_else(|| self.interpolate(ms, x))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BusemannOptions {
    /// Truncation times `t_0 2^k`.
    pub schedule: Vec<f64>,
    pub buse_tol: f64,
    /// Stop at the first truncation whose increments are below `buse_tol`.
    pub stop_when_converged: bool,
    pub action: ActionOptions,
}

impl Default for BusemannOptions {
    fn default() -> Self {
        Self {
            schedule: (0..6).map(|k| 5.0 * 2f64.powi(k)).collect(),
            buse_tol: 1e-4,
            stop_when_converged: false,
            action: ActionOptions::default(),
        }
    }
}

fn origin(ms: &MassSystem) -> Vec<f64> {
    vec![0.0; ms.ndof()]
}

fn is_origin(x: &[f64]) -> bool {
    x.iter().all(|v| *v == 0.0)
}

/// `u_t(x) = phi_h(0, p) - phi_h(x, p)` evaluated lazily for one target `p`.
pub struct BusemannEvaluator<'a> {
    ms: &'a MassSystem,
    h: f64,
    target: Vec<f64>,
    anchor_value: f64,
    opts: ActionOptions,
}

impl<'a> BusemannEvaluator<'a> {
    pub fn new(ms: &'a MassSystem, h: f64, target: Vec<f64>, opts: ActionOptions) -> Result<Self> {
        let anchor_value = phi_free(ms, h, &origin(ms), &target, &opts)?.value;
        Ok(Self {
            ms,
            h,
            target,
            anchor_value,
            opts,
        })
    }

    /// Evaluator for the ray point at time `t`.
    pub fn on_ray(
        ms: &'a MassSystem,
        ray: &Trajectory,
        h: f64,
        t: f64,
        opts: ActionOptions,
    ) -> Result<Self> {
        let p = ray
            .state_at(ms, t)
            .ok_or_else(|| JmError::Precondition(format!("ray does not reach t = {t}")))?;
        Self::new(ms, h, p.q.to_vec(), opts)
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn anchor_value(&self) -> f64 {
        self.anchor_value
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if is_origin(x) {
            return Ok(0.0);
        }
        Ok(self.anchor_value - phi_free(self.ms, self.h, x, &self.target, &self.opts)?.value)
    }
}

impl ScalarField for BusemannEvaluator<'_> {
    fn value(&self, x: &[f64]) -> Option<f64> {
        self.eval(x).ok()
    }
}

fn evaluate_grid(eval: &BusemannEvaluator<'_>, grid: &[Vec<f64>]) -> Vec<Option<f64>> {
    grid.par_iter().map(|x| eval.eval(x).ok()).collect()
}

fn check_grid(ms: &MassSystem, grid: &[Vec<f64>]) -> Result<()> {
    for x in grid {
        ms.check_shape(x)?;
        if !is_origin(x) {
            if let Some((i, j, distance)) = ms.collision(x) {
                return Err(JmError::Collision { i, j, distance });
            }
        }
    }
    Ok(())
}

/// Truncated normalized Busemann function of `ray` on `grid` for the times of
/// `opts.schedule` that the ray reaches.
pub fn busemann_estimate(
    ms: &MassSystem,
    ray: &Trajectory,
    h: f64,
    grid: &[Vec<f64>],
    opts: &BusemannOptions,
) -> Result<HorofunctionField> {
    check_grid(ms, grid)?;
    let times: Vec<f64> = opts
        .schedule
        .iter()
        .copied()
        .filter(|t| *t > ray.t_start() && *t <= ray.t_end() + 1e-9)
        .collect();
    if times.is_empty() {
        return Err(JmError::Precondition(
            "ray horizon shorter than the first truncation".into(),
        ));
    }
    let mut field = HorofunctionField {
        grid: grid.to_vec(),
        lattice: None,
        values: vec![0.0; grid.len()],
        valid: vec![true; grid.len()],
        h,
        truncation_times: Vec::new(),
        increments: vec![f64::INFINITY; grid.len()],
        history: Vec::new(),
        converged: false,
    };
    for &t in &times {
        let eval = BusemannEvaluator::on_ray(ms, ray, h, t.min(ray.t_end()), opts.action.clone())?;
        let vals = evaluate_grid(&eval, grid);
        let first = field.history.is_empty();
        for (k, v) in vals.iter().enumerate() {
            match v {
                Some(v) => {
                    if !first {
                        field.increments[k] = (v - field.values[k]).abs();
                    }
                    field.values[k] = *v;
                }
                None => field.valid[k] = false,
            }
        }
        field.truncation_times.push(t);
        field.history.push(field.values.clone());
        field.converged = !first && field.max_increment() <= opts.buse_tol;
        if field.converged && opts.stop_when_converged {
            break;
        }
    }
    Ok(field)
}

/// Busemann estimate on a lattice patch, keeping the lattice for
/// interpolation and the viscosity check.
pub fn busemann_on_lattice(
    ms: &MassSystem,
    ray: &Trajectory,
    h: f64,
    lattice: &Lattice,
    opts: &BusemannOptions,
) -> Result<HorofunctionField> {
    lattice.check_orthonormal(ms)?;
    let mut f = busemann_estimate(ms, ray, h, &lattice.points(), opts)?;
    f.lattice = Some(lattice.clone());
    Ok(f)
}

/// Field of a single truncation `u_t` on a lattice.
pub fn truncated_on_lattice(
    ms: &MassSystem,
    ray: &Trajectory,
    h: f64,
    t: f64,
    lattice: &Lattice,
    opts: &ActionOptions,
) -> Result<HorofunctionField> {
    lattice.check_orthonormal(ms)?;
    let bo = BusemannOptions {
        schedule: vec![t],
        action: opts.clone(),
        ..BusemannOptions::default()
    };
    let mut f = busemann_estimate(ms, ray, h, &lattice.points(), &bo)?;
    f.lattice = Some(lattice.clone());
    Ok(f)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SequenceField {
    pub field: HorofunctionField,
    /// `sup_grid |u_n - u_{n-1}|` for consecutive members.
    pub cauchy: Vec<f64>,
}

/// Normalized potentials `u_n(x) = phi_{h_n}(0, p_n) - phi_{h_n}(x, p_n)` on a
/// grid with their Cauchy diagnostics.
pub fn horofunction_from_sequence(
    ms: &MassSystem,
    hs: &[f64],
    ps: &[Vec<f64>],
    grid: &[Vec<f64>],
    opts: &ActionOptions,
) -> Result<SequenceField> {
    if hs.len() != ps.len() || hs.is_empty() {
        return Err(JmError::Precondition(
            "energy and target sequences must have equal nonzero length".into(),
        ));
    }
    if hs.iter().any(|h| !(*h >= 0.0)) {
        return Err(JmError::Precondition("energies must be nonnegative".into()));
    }
    check_grid(ms, grid)?;
    let mut history: Vec<Vec<f64>> = Vec::new();
    let mut valid = vec![true; grid.len()];
    let mut cauchy = Vec::new();
    for (h, p) in hs.iter().zip(ps) {
        let eval = BusemannEvaluator::new(ms, *h, p.clone(), opts.clone())?;
        let vals = evaluate_grid(&eval, grid);
        let row: Vec<f64> = vals
            .iter()
            .enumerate()
            .map(|(k, v)| {
                if v.is_none() {
                    valid[k] = false;
                }
                v.unwrap_or(0.0)
            })
            .collect();
        if let Some(prev) = history.last() {
            cauchy.push(sup_diff(prev, &row, &valid));
        }
        history.push(row);
    }
    let values = history.last().unwrap().clone();
    let increments = if history.len() >= 2 {
        let prev = &history[history.len() - 2];
        values.iter().zip(prev).map(|(a, b)| (a - b).abs()).collect()
    } else {
        vec![f64::INFINITY; grid.len()]
    };
    Ok(SequenceField {
        field: HorofunctionField {
            grid: grid.to_vec(),
            lattice: None,
            values,
            valid,
            h: *hs.last().unwrap(),
            truncation_times: Vec::new(),
            increments,
            history,
            converged: false,
        },
        cauchy,
    })
}

pub(crate) fn sup_diff(a: &[f64], b: &[f64], valid: &[bool]) -> f64 {
    a.iter()
        .zip(b)
        .zip(valid)
        .filter(|(_, v)| **v)
        .map(|((x, y), _)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Largest `u(y) - u(x) - phi_h(x, y)` over the sampled index pairs.
pub fn domination_check(
    ms: &MassSystem,
    field: &HorofunctionField,
    pairs: &[(usize, usize)],
    opts: &ActionOptions,
) -> Result<f64> {
    let out: Vec<Result<f64>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            if i >= field.grid.len() || j >= field.grid.len() {
                return Err(JmError::Precondition(format!("pair ({i}, {j}) out of range")));
            }
            if !field.valid[i] || !field.valid[j] {
                return Ok(f64::NEG_INFINITY);
            }
            let phi = phi_free(ms, field.h, &field.grid[i], &field.grid[j], opts)?.value;
            Ok(field.values[j] - field.values[i] - phi)
        })
        .collect();
    let mut worst = f64::NEG_INFINITY;
    for r in out {
        worst = worst.max(r?);
    }
    Ok(worst)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ViscosityPoint {
    pub index: usize,
    /// Components of `D(-u)` along the lattice directions.
    pub gradient: Vec<f64>,
    pub residual: f64,
    pub masked: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ViscosityReport {
    pub spacing: f64,
    pub points: Vec<ViscosityPoint>,
    pub median_abs: f64,
    pub p90_abs: f64,
    pub max_abs: f64,
    pub masked: usize,
}

/// Largest allowed ratio of gradient norms between lattice neighbours before
/// a point is treated as lying on the singular set.
const SPIKE_RATIO: f64 = 3.0;

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Central-difference residual `1/2 ||D(-u)||_*^2 - U(x) - h` at interior
/// lattice points. The lattice directions must span the center-of-mass-free
/// configurations for the dual norm to be exact there.
pub fn viscosity_residual(
    ms: &MassSystem,
    field: &HorofunctionField,
    h: f64,
) -> Result<ViscosityReport> {
    let lat = field
        .lattice
        .as_ref()
        .ok_or_else(|| JmError::Precondition("viscosity check needs a lattice field".into()))?;
    lat.check_orthonormal(ms)?;
    let k = lat.directions.len();
    let n = lat.len();
    let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
    for (idx, g) in grads.iter_mut().enumerate() {
        let mi = lat.multi_index(idx);
        if !field.valid[idx] || !ms.is_collision_free(&field.grid[idx]) {
            continue;
        }
        let mut comp = Vec::with_capacity(k);
        for j in 0..k {
            let mut p = mi.clone();
            let mut m = mi.clone();
            p[j] += 1;
            m[j] -= 1;
            match (lat.flat_index(&p), lat.flat_index(&m)) {
                (Some(ip), Some(im)) if field.valid[ip] && field.valid[im] => {
                    comp.push(-(field.values[ip] - field.values[im]) / (2.0 * lat.spacing));
                }
                _ => break,
            }
        }
        if comp.len() == k {
            *g = Some(comp);
        }
    }
    let norms: Vec<Option<f64>> = grads
        .iter()
        .map(|g| g.as_ref().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()))
        .collect();
    let mut points = Vec::new();
    for idx in 0..n {
        let (Some(g), Some(gn)) = (&grads[idx], norms[idx]) else {
            continue;
        };
        let mi = lat.multi_index(idx);
        let mut masked = false;
        for j in 0..k {
            for s in [-1, 1] {
                let mut q = mi.clone();
                q[j] += s;
                if let Some(Some(other)) = lat.flat_index(&q).map(|i| norms[i]) {
                    let (lo, hi) = if gn < other { (gn, other) } else { (other, gn) };
                    if hi > SPIKE_RATIO * lo {
                        masked = true;
                    }
                }
            }
        }
        let x = &field.grid[idx];
        let residual = 0.5 * gn * gn - ms.potential_raw(x) - h;
        points.push(ViscosityPoint {
            index: idx,
            gradient: g.clone(),
            residual,
            masked,
        });
    }
    let mut abs: Vec<f64> = points
        .iter()
        .filter(|p| !p.masked)
        .map(|p| p.residual.abs())
        .collect();
    abs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(ViscosityReport {
        spacing: lat.spacing,
        median_abs: quantile(&abs, 0.5),
        p90_abs: quantile(&abs, 0.9),
        max_abs: abs.last().copied().unwrap_or(f64::NAN),
        masked: points.iter().filter(|p| p.masked).count(),
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn pair() -> MassSystem {
        MassSystem::new(vec![1.0, 1.0], 2).unwrap()
    }

    fn lattice(ms: &MassSystem, center: Vec<f64>, spacing: f64) -> Lattice {
        Lattice {
            center,
            directions: ms.reduced_basis().vectors().to_vec(),
            spacing,
            half_width: 1,
        }
    }

    fn field_from(lat: &Lattice, u: impl Fn(&[f64]) -> f64) -> HorofunctionField {
        let grid = lat.points();
        HorofunctionField {
            values: grid.iter().map(|x| u(x)).collect(),
            valid: vec![true; grid.len()],
            increments: vec![0.0; grid.len()],
            lattice: Some(lat.clone()),
            grid,
            h: 0.5,
            truncation_times: Vec::new(),
            history: Vec::new(),
            converged: true,
        }
    }

    #[test]
    fn lattice_indexing_round_trips() {
        let ms = pair();
        let lat = Lattice {
            half_width: 2,
            ..lattice(&ms, vec![-1.0, 0.0, 1.0, 0.0], 0.1)
        };
        assert_eq!(lat.len(), 25);
        for k in 0..lat.len() {
            assert_eq!(lat.flat_index(&lat.multi_index(k)), Some(k));
        }
        assert_eq!(lat.flat_index(&[3, 0]), None);
        assert_eq!(lat.point(&[0, 0]), lat.center);
    }

    #[test]
    fn constant_field_is_not_a_solution() {
        let ms = pair();
        let lat = lattice(&ms, vec![-1.0, 0.0, 1.0, 0.0], 0.05);
        let f = field_from(&lat, |_| 3.0);
        let rep = viscosity_residual(&ms, &f, 0.5).unwrap();
        assert_eq!(rep.points.len(), 1);
        let p = &rep.points[0];
        assert_relative_eq!(p.residual, -ms.potential_raw(&lat.center) - 0.5, epsilon = 1e-14);
    }

    #[test]
    fn linear_field_residual_by_hand() {
        // w = -u = <c, x>; with c along the relative direction and
        // ||c||^2 = 4: residual = 2 - U(x) - h
        let ms = pair();
        let c = [-1.0, 0.0, 1.0, 0.0];
        assert_relative_eq!(ms.inner(&c, &c), 2.0);
        let c2: Vec<f64> = c.iter().map(|v| v * 2f64.sqrt()).collect();
        for (r, expect) in [(2.0, 2.0 - 0.5 - 0.5), (4.0, 2.0 - 0.25 - 0.5), (1.0, 2.0 - 1.0 - 0.5)] {
            let center = vec![-0.5 * r, 0.0, 0.5 * r, 0.0];
            let lat = lattice(&ms, center, 0.01);
            let f = field_from(&lat, |x| -ms.inner(&c2, x));
            let rep = viscosity_residual(&ms, &f, 0.5).unwrap();
            assert_relative_eq!(rep.points[0].residual, expect, epsilon = 1e-10);
        }
    }

    #[test]
    fn interpolation_is_exact_for_affine_fields() {
        let ms = pair();
        let lat = Lattice {
            half_width: 2,
            ..lattice(&ms, vec![-1.0, 0.0, 1.0, 0.0], 0.1)
        };
        let c = [0.3, -0.2, 0.1, 0.4];
        let f = field_from(&lat, |x| 1.0 + ms.inner(&c, x));
        let sf = f.as_field(&ms);
        let e = &lat.directions;
        let x: Vec<f64> = (0..4)
            .map(|a| lat.center[a] + 0.137 * e[0][a] - 0.061 * e[1][a])
            .collect();
        assert_relative_eq!(sf.value(&x).unwrap(), 1.0 + ms.inner(&c, &x), epsilon = 1e-12);
        // outside the patch
        let far: Vec<f64> = (0..4).map(|a| lat.center[a] + 0.5 * e[0][a]).collect();
        assert!(sf.value(&far).is_none());
    }

    #[test]
    fn origin_is_normalized_to_zero() {
        let ms = pair();
        let ev = BusemannEvaluator::new(
            &ms,
            0.5,
            vec![-3.0, 0.0, 3.0, 0.0],
            ActionOptions::default(),
        )
        .unwrap();
        assert_eq!(ev.eval(&[0.0; 4]).unwrap(), 0.0);
        // the value at the target is phi_h(0, p)
        assert_relative_eq!(ev.eval(ev.target()).unwrap(), ev.anchor_value());
    }

    #[test]
    fn sequence_cauchy_diagnostics() {
        let ms = pair();
        let grid = vec![vec![0.0; 4], vec![-1.0, 0.2, 1.0, -0.2]];
        let ps = vec![vec![-4.0, 0.0, 4.0, 0.0], vec![-8.0, 0.0, 8.0, 0.0]];
        let s = horofunction_from_sequence(&ms, &[0.5, 0.5], &ps, &grid, &ActionOptions::default())
            .unwrap();
        assert_eq!(s.field.values[0], 0.0);
        assert_eq!(s.cauchy.len(), 1);
        assert!(s.cauchy[0].is_finite());
    }
}
