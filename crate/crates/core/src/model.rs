//! Configuration-space primitives: masses, the mass inner product, the
//! Newtonian potential and its derivatives, energies and center-of-mass
//! reduction.
//!
//! Configurations are stored flat and interleaved: body `i`, coordinate `c`
//! lives at index `i * dim + c`. The gravitational constant is 1.

use serde::{Deserialize, Serialize};
use std::ops::Deref;

use crate::error::{JmError, Result};

/// Relative collision cutoff, scaled by the largest pairwise distance.
pub const COLLISION_REL_TOL: f64 = 1e-10;

/// Tolerance for the center-of-mass constraint of reduced configurations.
pub const CM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MassSystemRepr", into = "MassSystemRepr")]
pub struct MassSystem {
    masses: Vec<f64>,
    dim: usize,
}

#[derive(Serialize, Deserialize)]
struct MassSystemRepr {
    masses: Vec<f64>,
    dim: usize,
}

impl TryFrom<MassSystemRepr> for MassSystem {
    type Error = JmError;
    fn try_from(r: MassSystemRepr) -> Result<Self> {
        MassSystem::new(r.masses, r.dim)
    }
}

impl From<MassSystem> for MassSystemRepr {
    fn from(m: MassSystem) -> Self {
        MassSystemRepr {
            masses: m.masses,
            dim: m.dim,
        }
    }
}

impl MassSystem {
    pub fn new(masses: Vec<f64>, dim: usize) -> Result<Self> {
        if masses.len() < 2 {
            return Err(JmError::InvalidMassSystem(format!(
                "need at least two bodies, got {}",
                masses.len()
            )));
        }
        if dim < 2 {
            return Err(JmError::InvalidMassSystem(format!(
                "dimension must be at least 2, got {dim}"
            )));
        }
        if let Some((i, m)) = masses
            .iter()
            .enumerate()
            .find(|(_, m)| !(m.is_finite() && **m > 0.0))
        {
            return Err(JmError::InvalidMassSystem(format!(
                "mass {i} must be positive and finite, got {m}"
            )));
        }
        Ok(Self { masses, dim })
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn bodies(&self) -> usize {
        self.masses.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of configuration coordinates, `N * d`.
    pub fn ndof(&self) -> usize {
        self.masses.len() * self.dim
    }

    /// Dimension of the reduced configuration space, `d * (N - 1)`.
    pub fn reduced_dim(&self) -> usize {
        self.dim * (self.masses.len() - 1)
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Mass of the body owning flat coordinate `k`.
    #[inline]
    pub fn coord_mass(&self, k: usize) -> f64 {
        self.masses[k / self.dim]
    }

    pub fn check_shape(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.ndof() {
            return Err(JmError::ShapeMismatch {
                expected: self.ndof(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// `<x, y> = sum_i m_i (x_i, y_i)`.
    pub fn mass_inner(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_shape(x)?;
        self.check_shape(y)?;
        Ok(self.inner(x, y))
    }

    /// Unchecked mass inner product.
    #[inline]
    pub fn inner(&self, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.ndof());
        debug_assert_eq!(y.len(), self.ndof());
        let d = self.dim;
        self.masses
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let s: f64 = (0..d).map(|c| x[i * d + c] * y[i * d + c]).sum();
                m * s
            })
            .sum()
    }

    #[inline]
    pub fn norm(&self, x: &[f64]) -> f64 {
        self.inner(x, x).max(0.0).sqrt()
    }

    pub fn distance(&self, x: &[f64], y: &[f64]) -> f64 {
        let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        self.norm(&diff)
    }

    /// Squared dual norm `||p||_*^2 = sum_i |p_i|^2 / m_i` of a covector.
    pub fn dual_norm_sq(&self, p: &[f64]) -> f64 {
        p.iter()
            .enumerate()
            .map(|(k, pk)| pk * pk / self.coord_mass(k))
            .sum()
    }

    /// Kinetic energy `1/2 <v, v>`.
    pub fn kinetic(&self, v: &[f64]) -> f64 {
        0.5 * self.inner(v, v)
    }

    /// Minimum pairwise distance and the pair attaining it.
    pub fn min_pair_distance(&self, q: &[f64]) -> (f64, usize, usize) {
        let n = self.bodies();
        let d = self.dim;
        let mut best = (f64::INFINITY, 0, 1);
        for i in 0..n {
            for j in (i + 1)..n {
                let r = pair_dist(q, i, j, d);
                if r < best.0 {
                    best = (r, i, j);
                }
            }
        }
        best
    }

    pub fn max_pair_distance(&self, q: &[f64]) -> f64 {
        let n = self.bodies();
        let d = self.dim;
        let mut best: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                best = best.max(pair_dist(q, i, j, d));
            }
        }
        best
    }

    /// Collision cutoff for `q`: relative tolerance times the largest
    /// pairwise distance.
    pub fn collision_tolerance(&self, q: &[f64]) -> f64 {
        COLLISION_REL_TOL * self.max_pair_distance(q)
    }

    /// Returns the colliding pair if some pairwise distance falls below the
    /// collision cutoff.
    pub fn collision(&self, q: &[f64]) -> Option<(usize, usize, f64)> {
        let tol = self.collision_tolerance(q);
        let (r, i, j) = self.min_pair_distance(q);
        if r <= tol || r == 0.0 {
            Some((i, j, r))
        } else {
            None
        }
    }

    pub fn is_collision_free(&self, q: &[f64]) -> bool {
        self.collision(q).is_none()
    }

    /// True when every body sits at the same point.
    pub fn is_total_collision(&self, q: &[f64]) -> bool {
        self.max_pair_distance(q) == 0.0
    }

    /// Newtonian potential `U(q) = sum_{i<j} m_i m_j / |q_i - q_j|`.
    pub fn potential(&self, q: &[f64]) -> Result<f64> {
        self.check_shape(q)?;
        if let Some(k) = q.iter().position(|x| !x.is_finite()) {
            return Err(JmError::NonFinite(k));
        }
        if let Some((i, j, distance)) = self.collision(q) {
            return Err(JmError::Collision { i, j, distance });
        }
        Ok(self.potential_raw(q))
    }

    /// Potential without collision checks; `+inf` on exact collisions.
    pub fn potential_raw(&self, q: &[f64]) -> f64 {
        let n = self.bodies();
        let d = self.dim;
        let mut u = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                u += self.masses[i] * self.masses[j] / pair_dist(q, i, j, d);
            }
        }
        u
    }

    /// Writes the Euclidean gradient `dU/dq` into `grad` and returns `U`.
    pub fn potential_gradient(&self, q: &[f64], grad: &mut [f64]) -> f64 {
        let n = self.bodies();
        let d = self.dim;
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut u = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let mut r2 = 0.0;
                for c in 0..d {
                    let dx = q[j * d + c] - q[i * d + c];
                    r2 += dx * dx;
                }
                let r = r2.sqrt();
                let mm = self.masses[i] * self.masses[j];
                u += mm / r;
                let f = mm / (r2 * r);
                for c in 0..d {
                    let dx = q[j * d + c] - q[i * d + c];
                    grad[i * d + c] += f * dx;
                    grad[j * d + c] -= f * dx;
                }
            }
        }
        u
    }

    /// Newtonian acceleration `a_i = sum_{j != i} m_j (q_j - q_i) / |q_j - q_i|^3`.
    pub fn acceleration(&self, q: &[f64], acc: &mut [f64]) {
        let n = self.bodies();
        let d = self.dim;
        acc.iter_mut().for_each(|a| *a = 0.0);
        for i in 0..n {
            for j in (i + 1)..n {
                let mut r2 = 0.0;
                for c in 0..d {
                    let dx = q[j * d + c] - q[i * d + c];
                    r2 += dx * dx;
                }
                let inv_r3 = 1.0 / (r2 * r2.sqrt());
                for c in 0..d {
                    let dx = (q[j * d + c] - q[i * d + c]) * inv_r3;
                    acc[i * d + c] += self.masses[j] * dx;
                    acc[j * d + c] -= self.masses[i] * dx;
                }
            }
        }
    }

    /// Row-major Hessian of `U` (size `ndof x ndof`) written into `hess`.
    pub fn potential_hessian(&self, q: &[f64], hess: &mut [f64]) {
        let n = self.bodies();
        let d = self.dim;
        let nd = self.ndof();
        hess.iter_mut().for_each(|h| *h = 0.0);
        let mut r = vec![0.0; d];
        for i in 0..n {
            for j in (i + 1)..n {
                let mut r2 = 0.0;
                for c in 0..d {
                    r[c] = q[i * d + c] - q[j * d + c];
                    r2 += r[c] * r[c];
                }
                let rn = r2.sqrt();
                let mm = self.masses[i] * self.masses[j];
                let a = 3.0 * mm / (r2 * r2 * rn);
                let b = mm / (r2 * rn);
                for c in 0..d {
                    for e in 0..d {
                        let mut blk = a * r[c] * r[e];
                        if c == e {
                            blk -= b;
                        }
                        hess[(i * d + c) * nd + (i * d + e)] += blk;
                        hess[(j * d + c) * nd + (j * d + e)] += blk;
                        hess[(i * d + c) * nd + (j * d + e)] -= blk;
                        hess[(j * d + c) * nd + (i * d + e)] -= blk;
                    }
                }
            }
        }
    }

    /// Total energy `1/2 ||v||^2 - U(q)`.
    pub fn energy(&self, q: &[f64], v: &[f64]) -> Result<f64> {
        self.check_shape(v)?;
        let u = self.potential(q)?;
        Ok(self.kinetic(v) - u)
    }

    pub fn moment_of_inertia(&self, q: &[f64]) -> f64 {
        self.inner(q, q)
    }

    /// Mass-weighted mean of the body vectors of `x` (length `dim`).
    pub fn center_of_mass(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut c = vec![0.0; d];
        for (i, m) in self.masses.iter().enumerate() {
            for k in 0..d {
                c[k] += m * x[i * d + k];
            }
        }
        let mt = self.total_mass();
        c.iter_mut().for_each(|v| *v /= mt);
        c
    }

    /// Subtracts the mass-weighted mean from every body vector.
    pub fn remove_center(&self, x: &[f64]) -> Vec<f64> {
        let c = self.center_of_mass(x);
        let d = self.dim;
        x.iter()
            .enumerate()
            .map(|(k, v)| v - c[k % d])
            .collect()
    }

    /// Linear momentum `sum_i m_i v_i`.
    pub fn linear_momentum(&self, v: &[f64]) -> Vec<f64> {
        let mut p = self.center_of_mass(v);
        let mt = self.total_mass();
        p.iter_mut().for_each(|x| *x *= mt);
        p
    }

    /// Angular momentum bivector components `L_{ab} = sum_i m_i (q_a v_b - q_b v_a)`
    /// for `a < b`.
    pub fn angular_momentum(&self, q: &[f64], v: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut out = Vec::with_capacity(d * (d - 1) / 2);
        for a in 0..d {
            for b in (a + 1)..d {
                let mut l = 0.0;
                for (i, m) in self.masses.iter().enumerate() {
                    l += m * (q[i * d + a] * v[i * d + b] - q[i * d + b] * v[i * d + a]);
                }
                out.push(l);
            }
        }
        out
    }

    /// Mass-orthonormal basis of the reduced space `{x : sum m_i x_i = 0}`.
    pub fn reduced_basis(&self) -> ReducedBasis {
        ReducedBasis::new(self)
    }
}

#[inline]
fn pair_dist(q: &[f64], i: usize, j: usize, d: usize) -> f64 {
    let mut r2 = 0.0;
    for c in 0..d {
        let dx = q[j * d + c] - q[i * d + c];
        r2 += dx * dx;
    }
    r2.sqrt()
}

/// A point of configuration space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Configuration(Vec<f64>);

impl Configuration {
    pub fn new(ms: &MassSystem, coords: Vec<f64>) -> Result<Self> {
        ms.check_shape(&coords)?;
        if let Some(k) = coords.iter().position(|x| !x.is_finite()) {
            return Err(JmError::NonFinite(k));
        }
        Ok(Self(coords))
    }

    /// Builds a configuration from per-body position vectors.
    pub fn from_bodies(ms: &MassSystem, bodies: &[Vec<f64>]) -> Result<Self> {
        if bodies.len() != ms.bodies() || bodies.iter().any(|b| b.len() != ms.dim()) {
            return Err(JmError::ShapeMismatch {
                expected: ms.ndof(),
                got: bodies.iter().map(Vec::len).sum(),
            });
        }
        Self::new(ms, bodies.concat())
    }

    pub fn zeros(ms: &MassSystem) -> Self {
        Self(vec![0.0; ms.ndof()])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn is_collision_free(&self, ms: &MassSystem) -> bool {
        ms.is_collision_free(&self.0)
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        Self(self.0.iter().map(|x| x * lambda).collect())
    }
}

impl Deref for Configuration {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for Configuration {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// A point `(q, v)` of the tangent bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    pub q: Configuration,
    pub v: Vec<f64>,
}

impl PhaseState {
    pub fn new(ms: &MassSystem, q: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        let q = Configuration::new(ms, q)?;
        ms.check_shape(&v)?;
        if let Some(k) = v.iter().position(|x| !x.is_finite()) {
            return Err(JmError::NonFinite(q.len() + k));
        }
        Ok(Self { q, v })
    }

    pub fn energy(&self, ms: &MassSystem) -> Result<f64> {
        ms.energy(&self.q, &self.v)
    }

    /// Flat `[q, v]` vector of length `2 N d`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = self.q.to_vec();
        out.extend_from_slice(&self.v);
        out
    }

    pub fn from_flat(ms: &MassSystem, flat: &[f64]) -> Result<Self> {
        let n = ms.ndof();
        if flat.len() != 2 * n {
            return Err(JmError::ShapeMismatch {
                expected: 2 * n,
                got: flat.len(),
            });
        }
        Self::new(ms, flat[..n].to_vec(), flat[n..].to_vec())
    }

    /// Shifts positions and velocities into the center-of-mass frame.
    pub fn reduce_to_center_of_mass(&self, ms: &MassSystem) -> PhaseState {
        PhaseState {
            q: Configuration(ms.remove_center(&self.q)),
            v: ms.remove_center(&self.v),
        }
    }
}

/// Free-function form of [`PhaseState::reduce_to_center_of_mass`].
pub fn reduce_to_center_of_mass(ms: &MassSystem, s: &PhaseState) -> PhaseState {
    s.reduce_to_center_of_mass(ms)
}

/// A configuration whose mass-weighted sum vanishes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ReducedConfiguration(Vec<f64>);

impl ReducedConfiguration {
    /// Validates the center-of-mass constraint
    /// `|sum m_i r_i| <= CM_TOL * sum m_i |r_i|`.
    pub fn new(ms: &MassSystem, coords: Vec<f64>) -> Result<Self> {
        ms.check_shape(&coords)?;
        let d = ms.dim();
        let mut weighted = vec![0.0; d];
        let mut scale = 0.0;
        for (i, m) in ms.masses().iter().enumerate() {
            let body = &coords[i * d..(i + 1) * d];
            scale += m * body.iter().map(|x| x * x).sum::<f64>().sqrt();
            for c in 0..d {
                weighted[c] += m * body[c];
            }
        }
        let err = weighted.iter().map(|x| x * x).sum::<f64>().sqrt();
        if err > CM_TOL * scale.max(f64::MIN_POSITIVE) && err > 0.0 {
            return Err(JmError::Precondition(format!(
                "center of mass not at origin (residual {err:e})"
            )));
        }
        Ok(Self(coords))
    }

    /// Projects an arbitrary configuration onto the reduced space.
    pub fn project(ms: &MassSystem, x: &[f64]) -> Self {
        Self(ms.remove_center(x))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ReducedConfiguration {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Fixed, deterministic mass-orthonormal basis of the reduced space.
#[derive(Debug, Clone)]
pub struct ReducedBasis {
    vectors: Vec<Vec<f64>>,
    ms: MassSystem,
}

impl ReducedBasis {
    fn new(ms: &MassSystem) -> Self {
        let d = ms.dim();
        let n = ms.bodies();
        let m0 = ms.masses()[0];
        let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(ms.reduced_dim());
        for i in 1..n {
            for c in 0..d {
                let mut e = vec![0.0; ms.ndof()];
                e[i * d + c] = 1.0;
                e[c] = -ms.masses()[i] / m0;
                for prev in &vectors {
                    let proj = ms.inner(&e, prev);
                    e.iter_mut().zip(prev).for_each(|(x, p)| *x -= proj * p);
                }
                let nrm = ms.norm(&e);
                e.iter_mut().for_each(|x| *x /= nrm);
                vectors.push(e);
            }
        }
        Self {
            vectors,
            ms: ms.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.vectors.len()
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    /// Coordinates of `x` (projected onto the reduced space).
    pub fn coords(&self, x: &[f64]) -> Vec<f64> {
        self.vectors.iter().map(|e| self.ms.inner(x, e)).collect()
    }

    pub fn embed(&self, c: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.ms.ndof()];
        for (ck, e) in c.iter().zip(&self.vectors) {
            x.iter_mut().zip(e).for_each(|(xi, ei)| *xi += ck * ei);
        }
        x
    }

    /// Converts a covector `p` to coordinates `p(e_j)`.
    pub fn covector_coords(&self, p: &[f64]) -> Vec<f64> {
        self.vectors
            .iter()
            .map(|e| e.iter().zip(p).map(|(a, b)| a * b).sum())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn two(m1: f64, m2: f64) -> MassSystem {
        MassSystem::new(vec![m1, m2], 2).unwrap()
    }

    #[test]
    fn mass_inner_examples() {
        let ms = two(1.0, 1.0);
        let x = [1.0, 0.0, 0.0, 0.0];
        assert_eq!(ms.mass_inner(&x, &x).unwrap(), 1.0);
        let ms = two(2.0, 3.0);
        let x = [1.0, 0.0, 1.0, 0.0];
        let y = [1.0, 0.0, -1.0, 0.0];
        assert_eq!(ms.mass_inner(&x, &y).unwrap(), -1.0);
        assert!(matches!(
            ms.mass_inner(&x, &[1.0]),
            Err(JmError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn rejects_bad_systems() {
        assert!(MassSystem::new(vec![1.0, -1.0], 2).is_err());
        assert!(MassSystem::new(vec![1.0, 1.0], 1).is_err());
        assert!(MassSystem::new(vec![1.0], 2).is_err());
    }

    #[test]
    fn potential_examples() {
        let ms = two(1.0, 1.0);
        let q = [-0.5, 0.0, 0.5, 0.0];
        assert_relative_eq!(ms.potential(&q).unwrap(), 1.0, epsilon = 1e-15);
        let q2: Vec<f64> = q.iter().map(|x| 2.0 * x).collect();
        assert_relative_eq!(ms.potential(&q2).unwrap(), 0.5, epsilon = 1e-15);
        assert!(matches!(
            ms.potential(&[0.3, 0.1, 0.3, 0.1]),
            Err(JmError::Collision { i: 0, j: 1, .. })
        ));
        // total collision has zero characteristic length
        assert!(ms.potential(&[0.0; 4]).is_err());
    }

    #[test]
    fn energy_examples() {
        let ms = two(1.0, 1.0);
        let q = [-0.5, 0.0, 0.5, 0.0];
        assert_relative_eq!(
            ms.energy(&q, &[0.0, -1.0, 0.0, 1.0]).unwrap(),
            0.0,
            epsilon = 1e-15
        );
        assert_relative_eq!(ms.energy(&q, &[0.0; 4]).unwrap(), -1.0, epsilon = 1e-15);
        let shifted = [2.5, -1.0, 3.5, -1.0];
        assert_relative_eq!(
            ms.potential(&shifted).unwrap(),
            ms.potential(&q).unwrap(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn inertia_examples() {
        let ms = two(1.0, 1.0);
        assert_relative_eq!(ms.moment_of_inertia(&[-0.5, 0.0, 0.5, 0.0]), 0.5);
        assert_eq!(ms.moment_of_inertia(&[0.0; 4]), 0.0);
        assert_relative_eq!(ms.moment_of_inertia(&[-1.5, 0.0, 1.5, 0.0]), 4.5);
    }

    #[test]
    fn center_of_mass_reduction() {
        let ms = two(1.0, 1.0);
        let s = PhaseState::new(&ms, vec![0.0, 0.0, 1.0, 0.0], vec![0.0; 4]).unwrap();
        let r = s.reduce_to_center_of_mass(&ms);
        assert_eq!(r.q.as_slice(), &[-0.5, 0.0, 0.5, 0.0]);
        assert_eq!(r.reduce_to_center_of_mass(&ms), r);
        assert_relative_eq!(
            ms.potential(&r.q).unwrap(),
            ms.potential(&s.q).unwrap(),
            epsilon = 1e-15
        );
        assert!(ReducedConfiguration::new(&ms, r.q.to_vec()).is_ok());
        assert!(ReducedConfiguration::new(&ms, s.q.to_vec()).is_err());
    }

    #[test]
    fn gradient_and_hessian_match_finite_differences() {
        let ms = MassSystem::new(vec![1.0, 2.0, 0.5], 2).unwrap();
        let q = [0.1, 0.2, 1.3, -0.4, -0.7, 0.9];
        let mut g = vec![0.0; 6];
        ms.potential_gradient(&q, &mut g);
        let mut h = vec![0.0; 36];
        ms.potential_hessian(&q, &mut h);
        let eps = 1e-6;
        for k in 0..6 {
            let mut qp = q;
            let mut qm = q;
            qp[k] += eps;
            qm[k] -= eps;
            let fd = (ms.potential_raw(&qp) - ms.potential_raw(&qm)) / (2.0 * eps);
            assert_relative_eq!(g[k], fd, epsilon = 1e-7);
            let mut gp = vec![0.0; 6];
            let mut gm = vec![0.0; 6];
            ms.potential_gradient(&qp, &mut gp);
            ms.potential_gradient(&qm, &mut gm);
            for l in 0..6 {
                assert_relative_eq!(h[l * 6 + k], (gp[l] - gm[l]) / (2.0 * eps), epsilon = 1e-6);
            }
        }
        let mut acc = vec![0.0; 6];
        ms.acceleration(&q, &mut acc);
        for k in 0..6 {
            assert_relative_eq!(acc[k], g[k] / ms.coord_mass(k), epsilon = 1e-13);
        }
    }

    #[test]
    fn reduced_basis_is_orthonormal_and_centered() {
        let ms = MassSystem::new(vec![1.0, 2.0, 0.5], 3).unwrap();
        let b = ms.reduced_basis();
        assert_eq!(b.dim(), 6);
        for (i, e) in b.vectors().iter().enumerate() {
            for (j, f) in b.vectors().iter().enumerate() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_relative_eq!(ms.inner(e, f), expect, epsilon = 1e-13);
            }
            let c = ms.center_of_mass(e);
            assert!(c.iter().all(|x| x.abs() < 1e-14));
        }
    }

    fn vec_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-10.0..10.0f64, n)
    }

    proptest! {
        #[test]
        fn mass_inner_is_symmetric_bilinear_positive(
            x in vec_strategy(6), y in vec_strategy(6), z in vec_strategy(6), a in -3.0..3.0f64
        ) {
            let ms = MassSystem::new(vec![0.7, 1.3, 2.1], 2).unwrap();
            let xy = ms.inner(&x, &y);
            prop_assert!((xy - ms.inner(&y, &x)).abs() <= 1e-12 * (1.0 + xy.abs()));
            let ax_z: Vec<f64> = x.iter().zip(&z).map(|(u, w)| a * u + w).collect();
            let lhs = ms.inner(&ax_z, &y);
            let rhs = a * xy + ms.inner(&z, &y);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs() + rhs.abs()) * 10.0);
            let xx = ms.inner(&x, &x);
            prop_assert!(xx >= 0.0);
            if x.iter().any(|v| *v != 0.0) { prop_assert!(xx > 0.0); }
        }

        #[test]
        fn potential_translation_invariant_and_homogeneous(
            q in vec_strategy(6), shift in vec_strategy(2), lambda in 0.1..10.0f64
        ) {
            let ms = MassSystem::new(vec![0.7, 1.3, 2.1], 2).unwrap();
            prop_assume!(ms.min_pair_distance(&q).0 > 1e-2);
            let u = ms.potential(&q).unwrap();
            let moved: Vec<f64> = q.iter().enumerate().map(|(k, v)| v + shift[k % 2]).collect();
            prop_assert!((ms.potential(&moved).unwrap() - u).abs() <= 1e-12 * u);
            let scaled: Vec<f64> = q.iter().map(|v| v * lambda).collect();
            prop_assert!((ms.potential(&scaled).unwrap() * lambda - u).abs() <= 1e-12 * u);
        }

        #[test]
        fn reduction_lowers_energy_by_momentum_part(
            q in vec_strategy(6), v in vec_strategy(6)
        ) {
            let ms = MassSystem::new(vec![0.7, 1.3, 2.1], 2).unwrap();
            prop_assume!(ms.min_pair_distance(&q).0 > 1e-2);
            let s = PhaseState::new(&ms, q, v).unwrap();
            let r = s.reduce_to_center_of_mass(&ms);
            let e = s.energy(&ms).unwrap();
            let er = r.energy(&ms).unwrap();
            let p = ms.linear_momentum(&s.v);
            let p2: f64 = p.iter().map(|x| x * x).sum();
            let expect = p2 / (2.0 * ms.total_mass());
            prop_assert!(er <= e + 1e-12 * (1.0 + e.abs()));
            prop_assert!(((e - er) - expect).abs() <= 1e-10 * (1.0 + e.abs()));
        }
    }
}
