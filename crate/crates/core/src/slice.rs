//! Geometry of the fixed-shape slice: differential of the velocity field,
//! graph Jacobians, flow-saturated point clouds and box-counting dimension.

use std::collections::HashSet;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::flow_map;
use crate::error::{JmError, Result};
use crate::horofunction::Lattice;
use crate::model::{MassSystem, PhaseState};
use crate::shape::{solve_with_jacobian, ConeSpec, ShapeSolveOptions};

/// Warm start handed from one solve to the next.
#[derive(Debug, Clone, Default)]
pub struct Warm {
    pub v: Option<Vec<f64>>,
    pub jacobian: Option<DMatrix<f64>>,
}

/// A velocity field on configuration space.
pub trait VelocityField: Sync {
    fn velocity(&self, x: &[f64], warm: &Warm) -> Result<(Vec<f64>, Warm)>;
}

/// `V_a` computed by shooting.
pub struct ShootingField<'a> {
    pub ms: &'a MassSystem,
    pub cone: &'a ConeSpec,
    pub opts: ShapeSolveOptions,
}

impl VelocityField for ShootingField<'_> {
    fn velocity(&self, x: &[f64], warm: &Warm) -> Result<(Vec<f64>, Warm)> {
        let (sol, jac) = solve_with_jacobian(
            self.ms,
            self.cone,
            x,
            warm.v.as_deref(),
            warm.jacobian.as_ref(),
            &self.opts,
        )?;
        let next = Warm {
            v: Some(sol.v.clone()),
            jacobian: jac,
        };
        Ok((sol.v, next))
    }
}

impl<F> VelocityField for F
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    fn velocity(&self, x: &[f64], _warm: &Warm) -> Result<(Vec<f64>, Warm)> {
        Ok((self(x)?, Warm::default()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlicePoint {
    pub x: Vec<f64>,
    pub v: Option<Vec<f64>>,
    /// Row-major `k x k` differential in the lattice basis.
    pub dv: Option<Vec<f64>>,
    /// `max_j ||V(x + h e_j) - 2 V(x) + V(x - h e_j)|| / h`.
    pub asymmetry: Option<f64>,
    pub jacobian: Option<f64>,
    pub dropped: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlicePatch {
    pub lattice: Lattice,
    pub fd_step: f64,
    pub points: Vec<SlicePoint>,
}

impl SlicePatch {
    pub fn dim(&self) -> usize {
        self.lattice.directions.len()
    }

    pub fn dv_matrix(&self, i: usize) -> Option<DMatrix<f64>> {
        let k = self.dim();
        self.points[i]
            .dv
            .as_ref()
            .map(|d| DMatrix::from_row_slice(k, k, d))
    }

    pub fn dropped(&self) -> usize {
        self.points.iter().filter(|p| p.dropped.is_some()).count()
    }
}

/// `sqrt(det(I + DV^T DV))` from a Cholesky factor.
pub fn graph_jacobian(dv: &DMatrix<f64>) -> Result<f64> {
    if !dv.is_square() {
        return Err(JmError::Precondition("differential must be square".into()));
    }
    if let Some(i) = dv.iter().position(|x| !x.is_finite()) {
        return Err(JmError::NonFinite(i));
    }
    let k = dv.nrows();
    let g = DMatrix::identity(k, k) + dv.transpose() * dv;
    let chol = g
        .cholesky()
        .ok_or_else(|| JmError::NonConvergence("Gram matrix not positive definite".into()))?;
    Ok(chol.l().diagonal().iter().product())
}

fn shifted(x: &[f64], dir: &[f64], h: f64) -> Vec<f64> {
    x.iter().zip(dir).map(|(a, b)| a + h * b).collect()
}

fn point_differential(
    ms: &MassSystem,
    lattice: &Lattice,
    x: Vec<f64>,
    h: f64,
    field: &dyn VelocityField,
    warm: &Warm,
) -> (SlicePoint, Warm) {
    let mut pt = SlicePoint {
        x: x.clone(),
        v: None,
        dv: None,
        asymmetry: None,
        jacobian: None,
        dropped: None,
    };
    let (v, w) = match field.velocity(&x, warm) {
        Ok(r) => r,
        Err(e) => {
            pt.dropped = Some(format!("center: {e}"));
            return (pt, Warm::default());
        }
    };
    pt.v = Some(v.clone());
    let k = lattice.directions.len();
    let mut dv = DMatrix::zeros(k, k);
    let mut asym: f64 = 0.0;
    for (j, e) in lattice.directions.iter().enumerate() {
        let plus = field.velocity(&shifted(&x, e, h), &w);
        let minus = field.velocity(&shifted(&x, e, -h), &w);
        let (vp, vm) = match (plus, minus) {
            (Ok((vp, _)), Ok((vm, _))) => (vp, vm),
            (Err(e), _) | (_, Err(e)) => {
                pt.dropped = Some(format!("neighbor {j}: {e}"));
                return (pt, w);
            }
        };
        let col: Vec<f64> = vp.iter().zip(&vm).map(|(a, b)| (a - b) / (2.0 * h)).collect();
        for (i, ei) in lattice.directions.iter().enumerate() {
            dv[(i, j)] = ms.inner(ei, &col);
        }
        let second: Vec<f64> = (0..v.len()).map(|a| vp[a] - 2.0 * v[a] + vm[a]).collect();
        asym = asym.max(ms.norm(&second) / h);
    }
    pt.asymmetry = Some(asym);
    match graph_jacobian(&dv) {
        Ok(jv) => pt.jacobian = Some(jv),
        Err(e) => pt.dropped = Some(e.to_string()),
    }
    pt.dv = Some(dv.transpose().as_slice().to_vec());
    (pt, w)
}

/// Central-difference differential of `field` at every lattice point.
///
/// Lattice rows (runs along the last direction) are solved in parallel; each
/// row is swept in order, warm-starting from the previous point.
pub fn differential_of_field(
    ms: &MassSystem,
    lattice: &Lattice,
    fd_step: f64,
    field: &dyn VelocityField,
) -> Result<SlicePatch> {
    lattice.check_orthonormal(ms)?;
    if !(fd_step > 0.0) {
        return Err(JmError::Precondition("finite-difference step must be positive".into()));
    }
    let side = lattice.side();
    let rows = lattice.len() / side;
    let points: Vec<SlicePoint> = (0..rows)
        .into_par_iter()
        .flat_map_iter(|r| {
            let mut warm = Warm::default();
            let mut out = Vec::with_capacity(side);
            for c in 0..side {
                let x = lattice.point(&lattice.multi_index(r * side + c));
                let (pt, w) = point_differential(ms, lattice, x, fd_step, field, &warm);
                warm = w;
                out.push(pt);
            }
            out
        })
        .collect();
    Ok(SlicePatch {
        lattice: lattice.clone(),
        fd_step,
        points,
    })
}

/// Solves the field on the lattice points without differentials. With
/// `even_block` only the `2w`-per-side block of indices `< w` is solved,
/// so that dyadic box sizes tile it exactly. Returns lattice indices with
/// the outcome.
pub fn solve_on_lattice(
    lattice: &Lattice,
    field: &dyn VelocityField,
    even_block: bool,
) -> Vec<(usize, Result<Vec<f64>>)> {
    let side = lattice.side();
    let rows = lattice.len() / side;
    let w = lattice.half_width as i64;
    let keep = |mi: &[i64]| !even_block || mi.iter().all(|&i| i < w);
    (0..rows)
        .into_par_iter()
        .flat_map_iter(|r| {
            let mut warm = Warm::default();
            let mut out = Vec::with_capacity(side);
            for c in 0..side {
                let idx = r * side + c;
                let mi = lattice.multi_index(idx);
                if !keep(&mi) {
                    continue;
                }
                match field.velocity(&lattice.point(&mi), &warm) {
                    Ok((v, next)) => {
                        warm = next;
                        out.push((idx, Ok(v)));
                    }
                    Err(e) => {
                        warm = Warm::default();
                        out.push((idx, Err(e)));
                    }
                }
            }
            out
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasureReport {
    /// Riemann sum of `J` over the retained points.
    pub measure: f64,
    /// Volume of the retained cells.
    pub volume: f64,
    pub min_jacobian: f64,
    pub max_jacobian: f64,
    pub dropped: usize,
    pub total: usize,
    /// False when more than 10% of the points were dropped.
    pub reliable: bool,
}

pub fn hausdorff_measure_patch(patch: &SlicePatch, cell_volume: f64) -> MeasureReport {
    let js: Vec<f64> = patch.points.iter().filter_map(|p| p.jacobian).collect();
    let total = patch.points.len();
    let dropped = total - js.len();
    MeasureReport {
        measure: js.iter().sum::<f64>() * cell_volume,
        volume: js.len() as f64 * cell_volume,
        min_jacobian: js.iter().copied().fold(f64::INFINITY, f64::min),
        max_jacobian: js.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        dropped,
        total,
        reliable: dropped * 10 <= total,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CloudPoint {
    /// Index of the base point.
    pub base: usize,
    /// Backward flow time.
    pub n: usize,
    pub state: PhaseState,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowFailure {
    pub base: usize,
    pub n: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SliceCloud {
    pub points: Vec<CloudPoint>,
    pub failures: Vec<FlowFailure>,
}

/// `Phi_{-n}(x, V(x))` for `n = 0..=n_max` over the solved graph points.
pub fn flow_saturate(ms: &MassSystem, graph: &[(Vec<f64>, Vec<f64>)], n_max: usize) -> SliceCloud {
    let per: Vec<(Vec<CloudPoint>, Option<FlowFailure>)> = graph
        .par_iter()
        .enumerate()
        .map(|(base, (x, v))| {
            let mut s = PhaseState {
                q: x.clone().into(),
                v: v.clone(),
            };
            let mut pts = vec![CloudPoint {
                base,
                n: 0,
                state: s.clone(),
            }];
            for n in 1..=n_max {
                match flow_map(ms, &s, -1.0) {
                    Ok(next) => {
                        s = next;
                        pts.push(CloudPoint {
                            base,
                            n,
                            state: s.clone(),
                        });
                    }
                    Err(e) => {
                        return (
                            pts,
                            Some(FlowFailure {
                                base,
                                n,
                                reason: e.to_string(),
                            }),
                        )
                    }
                }
            }
            (pts, None)
        })
        .collect();
    let mut cloud = SliceCloud {
        points: Vec::new(),
        failures: Vec::new(),
    };
    for (p, f) in per {
        cloud.points.extend(p);
        cloud.failures.extend(f);
    }
    cloud
}

/// Graph points `(x, V(x))` of the solved lattice points of a patch.
pub fn patch_graph(patch: &SlicePatch) -> Vec<(Vec<f64>, Vec<f64>)> {
    patch
        .points
        .iter()
        .filter(|p| p.dropped.is_none())
        .filter_map(|p| p.v.clone().map(|v| (p.x.clone(), v)))
        .collect()
}

/// Characteristic time `diam(K) / ||a||` that makes velocities commensurate
/// with positions.
pub fn characteristic_time(ms: &MassSystem, lattice: &Lattice, cone: &ConeSpec) -> f64 {
    let k = lattice.directions.len() as f64;
    let diam = 2.0 * lattice.half_width as f64 * lattice.spacing * k.sqrt();
    diam / ms.norm(&cone.a)
}

/// Reduced coordinates of the cloud: positions, then velocities times `tau`.
pub fn phase_coordinates(ms: &MassSystem, cloud: &SliceCloud, tau: f64) -> Vec<Vec<f64>> {
    let basis = ms.reduced_basis();
    cloud
        .points
        .iter()
        .map(|p| {
            let mut c = basis.coords(&p.state.q);
            c.extend(basis.coords(&p.state.v).into_iter().map(|x| x * tau));
            c
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DimensionEstimate {
    pub scales: Vec<f64>,
    pub counts: Vec<usize>,
    pub slope: f64,
    pub intercept: f64,
    /// Two standard errors of the slope.
    pub band: f64,
}

pub const MIN_CLOUD: usize = 1000;

/// Number of occupied boxes of side `eps`, anchored at `origin`.
fn box_count(cloud: &[Vec<f64>], origin: &[f64], eps: f64) -> usize {
    cloud
        .par_iter()
        .fold(HashSet::new, |mut set, p| {
            let key: Vec<i64> = p
                .iter()
                .zip(origin)
                .map(|(x, o)| ((x - o) / eps).floor() as i64)
                .collect();
            set.insert(key);
            set
        })
        .reduce(HashSet::new, |mut a, b| {
            if a.len() < b.len() {
                return b.into_iter().chain(a).collect();
            }
            a.extend(b);
            a
        })
        .len()
}

/// Slope of `log N(eps)` against `log(1/eps)`. Boxes are anchored half the
/// finest scale below the cloud's lower corner.
pub fn box_counting_dimension(cloud: &[Vec<f64>], scales: &[f64]) -> Result<DimensionEstimate> {
    if cloud.len() < MIN_CLOUD {
        return Err(JmError::Precondition(format!(
            "cloud has {} points, at least {MIN_CLOUD} needed",
            cloud.len()
        )));
    }
    if scales.len() < 4 {
        return Err(JmError::Precondition("at least 4 scales needed".into()));
    }
    if scales.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
        return Err(JmError::Precondition("scales must be positive".into()));
    }
    let dim = cloud[0].len();
    if cloud.iter().any(|p| p.len() != dim || p.iter().any(|x| !x.is_finite())) {
        return Err(JmError::Precondition("cloud points must be finite and of equal length".into()));
    }
    let mut scales = scales.to_vec();
    scales.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let finest = scales[0];
    let origin: Vec<f64> = (0..dim)
        .map(|c| cloud.iter().map(|p| p[c]).fold(f64::INFINITY, f64::min) - 0.5 * finest)
        .collect();
    let counts: Vec<usize> = scales.iter().map(|&e| box_count(cloud, &origin, e)).collect();
    if counts[0] <= 1 {
        return Err(JmError::Precondition(
            "degenerate cloud: one box at the finest scale".into(),
        ));
    }
    let x: Vec<f64> = scales.iter().map(|e| -e.ln()).collect();
    let y: Vec<f64> = counts.iter().map(|&c| (c as f64).ln()).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let slope = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x
        .iter()
        .zip(&y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let se = (rss / (n - 2.0) / sxx).sqrt();
    Ok(DimensionEstimate {
        scales,
        counts,
        slope,
        intercept,
        band: 2.0 * se,
    })
}

/// `count` dyadic scales. The finest is the first doubling of the median
/// nearest-neighbor distance (of a deterministic subsample) at which boxes
/// hold four points on average, so the counts are not saturated by sampling.
pub fn dyadic_scales(cloud: &[Vec<f64>], count: usize) -> Result<Vec<f64>> {
    if cloud.len() < 2 {
        return Err(JmError::Precondition("cloud too small".into()));
    }
    let stride = (cloud.len() / 512).max(1);
    let mut nn: Vec<f64> = (0..cloud.len())
        .step_by(stride)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&i| {
            cloud
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, q)| {
                    cloud[i]
                        .iter()
                        .zip(q)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect();
    nn.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let med = nn[nn.len() / 2];
    if !(med > 0.0) {
        return Err(JmError::Precondition("cloud has repeated points".into()));
    }
    let dim = cloud[0].len();
    let origin: Vec<f64> = (0..dim)
        .map(|c| cloud.iter().map(|p| p[c]).fold(f64::INFINITY, f64::min))
        .collect();
    let mut finest = med;
    for _ in 0..30 {
        if 4 * box_count(cloud, &origin, finest) <= cloud.len() {
            break;
        }
        finest *= 2.0;
    }
    Ok((0..count).map(|j| finest * 2f64.powi(j as i32)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ms2() -> MassSystem {
        MassSystem::new(vec![1.0, 1.0], 2).unwrap()
    }

    #[test]
    fn jacobian_identities() {
        assert!((graph_jacobian(&DMatrix::zeros(4, 4)).unwrap() - 1.0).abs() < 1e-15);
        assert!((graph_jacobian(&DMatrix::identity(4, 4)).unwrap() - 4.0).abs() < 1e-14);
        // matrix determinant lemma for sigma u v^T
        let u = nalgebra::DVector::<f64>::from_vec(vec![1.0, 2.0, -1.0]);
        let v = nalgebra::DVector::<f64>::from_vec(vec![0.5, 0.0, 3.0]);
        let sigma: f64 = 0.7;
        let dv = &u * v.transpose() * sigma;
        let want = (1.0 + sigma * sigma * u.norm_squared() * v.norm_squared()).sqrt();
        assert!((graph_jacobian(&dv).unwrap() - want).abs() < 1e-12);
        let mut bad = DMatrix::zeros(2, 2);
        bad[(0, 1)] = f64::NAN;
        assert!(graph_jacobian(&bad).is_err());
    }

    fn unit_lattice(ms: &MassSystem) -> Lattice {
        Lattice::reduced(ms, vec![-1.0, 0.0, 1.0, 0.0], 0.25, 2)
    }

    #[test]
    fn synthetic_fields() {
        let ms = ms2();
        let lat = unit_lattice(&ms);
        let constant = |_: &[f64]| -> Result<Vec<f64>> { Ok(vec![0.1, 0.2, -0.1, -0.2]) };
        let p = differential_of_field(&ms, &lat, 1e-3, &constant).unwrap();
        assert!(p.points.iter().all(|q| q.jacobian.unwrap() == 1.0));
        assert!(p.points.iter().all(|q| q.dv.as_ref().unwrap().iter().all(|x| *x == 0.0)));
        let m = hausdorff_measure_patch(&p, 1.0 / p.points.len() as f64);
        assert!((m.measure - 1.0).abs() < 1e-12 && m.reliable);

        // V(x) = x on a 4-dimensional reduced space: DV = I, J = 4
        let ms3 = MassSystem::new(vec![1.0, 1.0, 1.0], 2).unwrap();
        let lat3 = Lattice::reduced(&ms3, vec![0.0; 6], 0.25, 1);
        let ident = |x: &[f64]| -> Result<Vec<f64>> { Ok(x.to_vec()) };
        let p = differential_of_field(&ms3, &lat3, 1e-3, &ident).unwrap();
        for q in &p.points {
            assert!((q.jacobian.unwrap() - 4.0).abs() < 1e-9);
            assert!(q.asymmetry.unwrap() < 1e-9);
        }
        let m = hausdorff_measure_patch(&p, 1.0 / p.points.len() as f64);
        assert!((m.measure - 4.0).abs() < 1e-9);
    }

    #[test]
    fn dropped_points_flag_the_measure() {
        let ms = ms2();
        let lat = unit_lattice(&ms);
        let f = |x: &[f64]| -> Result<Vec<f64>> {
            if x[0] < -1.3 {
                Err(JmError::NonConvergence("synthetic".into()))
            } else {
                Ok(vec![0.0; 4])
            }
        };
        let p = differential_of_field(&ms, &lat, 1e-3, &f).unwrap();
        let m = hausdorff_measure_patch(&p, 1.0);
        assert!(m.dropped > 0 && !m.reliable);
        assert_eq!(m.volume as usize, m.total - m.dropped);
    }

    #[test]
    fn box_counts_of_flat_sets() {
        // segment in 8 dimensions
        let seg: Vec<Vec<f64>> = (0..4096)
            .map(|i| {
                let t = i as f64 / 4096.0;
                vec![t, 2.0 * t, -t, 0.5 * t, 0.0, t, 1.0, -3.0 * t]
            })
            .collect();
        let scales = dyadic_scales(&seg, 5).unwrap();
        let d = box_counting_dimension(&seg, &scales).unwrap();
        assert!((d.slope - 1.0).abs() < 0.1, "{d:?}");
        assert!(d.counts.windows(2).all(|w| w[0] >= w[1]));

        // lattice on a 4-dimensional coordinate subspace of R^8
        let mut flat = Vec::new();
        for i in 0..16usize.pow(4) {
            let c = [i % 16, (i / 16) % 16, (i / 256) % 16, i / 4096];
            let mut p = vec![0.0; 8];
            p[1] = c[0] as f64;
            p[3] = c[1] as f64;
            p[4] = c[2] as f64;
            p[6] = c[3] as f64;
            flat.push(p);
        }
        let d = box_counting_dimension(&flat, &[1.0, 2.0, 4.0, 8.0]).unwrap();
        assert!((d.slope - 4.0).abs() < 0.2, "{d:?}");
    }

    #[test]
    fn degenerate_clouds_rejected() {
        let pts = vec![vec![0.0, 0.0]; 2000];
        assert!(box_counting_dimension(&pts, &[1.0, 2.0, 4.0, 8.0]).is_err());
        let few = vec![vec![0.0, 1.0]; 10];
        assert!(box_counting_dimension(&few, &[1.0, 2.0, 4.0, 8.0]).is_err());
        let line: Vec<Vec<f64>> = (0..2000).map(|i| vec![i as f64]).collect();
        assert!(box_counting_dimension(&line, &[1.0, 2.0, 4.0]).is_err());
    }

    fn axis_cone(ms: &MassSystem) -> ConeSpec {
        ConeSpec::new(ms, vec![-0.5, 0.0, 0.5, 0.0], 0.9, 1.0).unwrap()
    }

    #[test]
    fn axis_differential_respects_reflection() {
        let ms = ms2();
        let cone = axis_cone(&ms);
        let field = ShootingField {
            ms: &ms,
            cone: &cone,
            opts: ShapeSolveOptions::default(),
        };
        let lat = Lattice::reduced(&ms, vec![-2.0, 0.0, 2.0, 0.0], 0.1, 0);
        let p = differential_of_field(&ms, &lat, 1e-3, &field).unwrap();
        let dv = p.dv_matrix(0).unwrap();
        // the reflection y -> -y fixes a; express it in the lattice basis
        let refl = |x: &[f64]| vec![x[0], -x[1], x[2], -x[3]];
        let basis = &lat.directions;
        let r = DMatrix::from_fn(2, 2, |i, j| ms.inner(&basis[i], &refl(&basis[j])));
        let comm = &r * &dv - &dv * &r;
        assert!(comm.norm() <= 1e-3, "{comm}");
        assert!(p.points[0].jacobian.unwrap() >= 1.0);

        // halving the step changes DV at second order
        let p2 = differential_of_field(&ms, &lat, 5e-4, &field).unwrap();
        let p4 = differential_of_field(&ms, &lat, 2e-3, &field).unwrap();
        let d1 = (p.dv_matrix(0).unwrap() - p4.dv_matrix(0).unwrap()).norm();
        let d2 = (p2.dv_matrix(0).unwrap() - p.dv_matrix(0).unwrap()).norm();
        assert!(d2 <= 0.5 * d1 + 1e-7, "{d1} {d2}");
    }

    #[test]
    fn flow_saturation_round_trip() {
        let ms = ms2();
        let cone = axis_cone(&ms);
        let field = ShootingField {
            ms: &ms,
            cone: &cone,
            opts: ShapeSolveOptions::default(),
        };
        let lat = Lattice::reduced(&ms, vec![-2.0, 0.0, 2.0, 0.0], 0.1, 1);
        let p = differential_of_field(&ms, &lat, 1e-3, &field).unwrap();
        let graph = patch_graph(&p);
        let none = flow_saturate(&ms, &graph, 0);
        assert_eq!(none.points.len(), graph.len());
        let cloud = flow_saturate(&ms, &graph, 3);
        for cp in cloud.points.iter().filter(|c| c.n == 3) {
            let back = flow_map(&ms, &cp.state, 3.0).unwrap();
            let (x, v) = &graph[cp.base];
            assert!(ms.distance(&back.q, x) < 1e-4);
            assert!(ms.norm(&back.v.iter().zip(v).map(|(a, b)| a - b).collect::<Vec<_>>()) < 1e-4);
        }
    }
}
