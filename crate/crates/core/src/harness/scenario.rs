//! Scenario files: a mass system with named states, grids and shapes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::action::ActionOptions;
use crate::dynamics::IntegrationOptions;
use crate::error::{JmError, Result};
use crate::horofunction::{BusemannOptions, Lattice};
use crate::model::{MassSystem, PhaseState};
use crate::rays::RayOptions;
use crate::shape::{ConeSpec, ShapeSolveOptions};

pub const SCHEMA_VERSION: u32 = 1;

const BUNDLED: [(&str, &str); 4] = [
    (
        "kepler-hyperbolic",
        include_str!("../../scenarios/kepler-hyperbolic.toml"),
    ),
    (
        "kepler-parabolic",
        include_str!("../../scenarios/kepler-parabolic.toml"),
    ),
    (
        "three-body-lagrange-expanding",
        include_str!("../../scenarios/three-body-lagrange-expanding.toml"),
    ),
    (
        "collision-headon",
        include_str!("../../scenarios/collision-headon.toml"),
    ),
];

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    jmflow_schema: u32,
    name: Option<String>,
    masses: Vec<f64>,
    dim: usize,
    #[serde(default)]
    reduced: bool,
    #[serde(default)]
    states: BTreeMap<String, StateSpec>,
    #[serde(default)]
    grids: BTreeMap<String, GridSpec>,
    #[serde(default)]
    shapes: BTreeMap<String, ShapeSpec>,
    #[serde(default)]
    tolerances: Tolerances,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateSpec {
    q: Vec<f64>,
    v: Vec<f64>,
}

/// A grid is either an explicit point list or a lattice patch spanned by the
/// reduced basis.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub points: Option<Vec<Vec<f64>>>,
    pub center: Option<Vec<f64>>,
    pub spacing: Option<f64>,
    pub half_width: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ShapeSpec {
    a: Vec<f64>,
    alpha: Option<f64>,
    r: Option<f64>,
}

/// Optional overrides of the numerical defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub rtol: Option<f64>,
    pub drift_bound: Option<f64>,
    pub segments: Option<usize>,
    pub gap_tol: Option<f64>,
    pub buse_tol: Option<f64>,
    pub shoot_tol: Option<f64>,
    pub horizon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Grid {
    Points(Vec<Vec<f64>>),
    Lattice(Lattice),
}

impl Grid {
    pub fn points(&self) -> Vec<Vec<f64>> {
        match self {
            Grid::Points(p) => p.clone(),
            Grid::Lattice(l) => l.points(),
        }
    }

    pub fn lattice(&self) -> Option<&Lattice> {
        match self {
            Grid::Lattice(l) => Some(l),
            Grid::Points(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NamedShape {
    pub a: Vec<f64>,
    pub alpha: Option<f64>,
    pub r: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Scenario {
    pub name: String,
    pub system: MassSystem,
    pub reduced: bool,
    pub states: BTreeMap<String, PhaseState>,
    pub grids: BTreeMap<String, Grid>,
    pub shapes: BTreeMap<String, NamedShape>,
    pub tolerances: Tolerances,
    /// Where the scenario came from: a file path or `bundled:NAME`.
    pub source: String,
    /// SHA-256 of the scenario text.
    pub hash: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn schema(field: impl Into<String>, message: impl Into<String>) -> JmError {
    JmError::Schema {
        field: field.into(),
        message: message.into(),
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.len() - before.rfind('\n').map(|k| k + 1).unwrap_or(0) + 1;
    (line, col)
}

fn check_len(field: &str, x: &[f64], n: usize) -> Result<()> {
    if x.len() != n {
        return Err(schema(field, format!("expected {n} numbers, got {}", x.len())));
    }
    if let Some(k) = x.iter().position(|v| !v.is_finite()) {
        return Err(schema(format!("{field}[{k}]"), "not a finite number"));
    }
    Ok(())
}

impl Scenario {
    /// Parses and validates scenario text. `source` is only recorded.
    pub fn from_str(text: &str, source: &str) -> Result<Self> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| {
            let field = match e.span() {
                Some(span) => {
                    let (l, c) = line_col(text, span.start);
                    format!("line {l}, column {c}")
                }
                None => "document".into(),
            };
            schema(field, e.message().trim())
        })?;
        if file.jmflow_schema != SCHEMA_VERSION {
            return Err(schema(
                "jmflow_schema",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", file.jmflow_schema),
            ));
        }
        if file.masses.len() < 2 {
            return Err(schema("masses", "need at least two bodies"));
        }
        for (k, m) in file.masses.iter().enumerate() {
            if !(m.is_finite() && *m > 0.0) {
                return Err(schema(format!("masses[{k}]"), format!("mass must be positive, got {m}")));
            }
        }
        if file.dim == 0 {
            return Err(schema("dim", "dimension must be at least 1"));
        }
        let system = MassSystem::new(file.masses.clone(), file.dim)?;
        let n = system.ndof();

        let mut states = BTreeMap::new();
        for (name, st) in &file.states {
            check_len(&format!("states.{name}.q"), &st.q, n)?;
            check_len(&format!("states.{name}.v"), &st.v, n)?;
            let mut s = PhaseState::new(&system, st.q.clone(), st.v.clone())?;
            if file.reduced {
                s = s.reduce_to_center_of_mass(&system);
            }
            if let Some((i, j, distance)) = system.collision(&s.q) {
                return Err(JmError::StateCollision {
                    state: name.clone(),
                    i,
                    j,
                    distance,
                });
            }
            states.insert(name.clone(), s);
        }

        let mut grids = BTreeMap::new();
        for (name, g) in &file.grids {
            let field = format!("grids.{name}");
            let grid = match (&g.points, &g.center) {
                (Some(pts), None) => {
                    if g.spacing.is_some() || g.half_width.is_some() {
                        return Err(schema(field, "`points` excludes `spacing` and `half_width`"));
                    }
                    if pts.is_empty() {
                        return Err(schema(format!("{field}.points"), "empty point list"));
                    }
                    let mut out = Vec::with_capacity(pts.len());
                    for (k, p) in pts.iter().enumerate() {
                        check_len(&format!("{field}.points[{k}]"), p, n)?;
                        out.push(if file.reduced { system.remove_center(p) } else { p.clone() });
                    }
                    Grid::Points(out)
                }
                (None, Some(c)) => {
                    check_len(&format!("{field}.center"), c, n)?;
                    let spacing = g
                        .spacing
                        .ok_or_else(|| schema(format!("{field}.spacing"), "missing"))?;
                    if !(spacing.is_finite() && spacing > 0.0) {
                        return Err(schema(format!("{field}.spacing"), "must be positive"));
                    }
                    let w = g
                        .half_width
                        .ok_or_else(|| schema(format!("{field}.half_width"), "missing"))?;
                    let center = if file.reduced { system.remove_center(c) } else { c.clone() };
                    Grid::Lattice(Lattice::reduced(&system, center, spacing, w))
                }
                _ => return Err(schema(field, "give either `points` or `center`")),
            };
            grids.insert(name.clone(), grid);
        }

        let mut shapes = BTreeMap::new();
        for (name, s) in &file.shapes {
            let field = format!("shapes.{name}");
            check_len(&format!("{field}.a"), &s.a, n)?;
            if s.a.iter().all(|v| *v == 0.0) {
                return Err(schema(format!("{field}.a"), "zero limit shape"));
            }
            if system.is_total_collision(&s.a) || system.collision(&s.a).is_some() {
                return Err(schema(format!("{field}.a"), "limit shape has a collision"));
            }
            if let Some(al) = s.alpha {
                if !(al > 0.0 && al < 1.0) {
                    return Err(schema(format!("{field}.alpha"), "must lie in (0, 1)"));
                }
            }
            if let Some(r) = s.r {
                if !(r >= 0.0 && r.is_finite()) {
                    return Err(schema(format!("{field}.r"), "must be nonnegative"));
                }
            }
            shapes.insert(
                name.clone(),
                NamedShape {
                    a: s.a.clone(),
                    alpha: s.alpha,
                    r: s.r,
                },
            );
        }

        let t = &file.tolerances;
        for (k, v) in [
            ("rtol", t.rtol),
            ("drift_bound", t.drift_bound),
            ("gap_tol", t.gap_tol),
            ("buse_tol", t.buse_tol),
            ("shoot_tol", t.shoot_tol),
            ("horizon", t.horizon),
        ] {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    return Err(schema(format!("tolerances.{k}"), "must be positive"));
                }
            }
        }
        if t.segments.is_some_and(|m| m < 4) {
            return Err(schema("tolerances.segments", "need at least 4 segments"));
        }

        Ok(Self {
            name: file.name.unwrap_or_else(|| "unnamed".into()),
            system,
            reduced: file.reduced,
            states,
            grids,
            shapes,
            tolerances: file.tolerances,
            source: source.to_string(),
            hash: sha256_hex(text.as_bytes()),
        })
    }

    pub fn bundled(name: &str) -> Option<Self> {
        BUNDLED
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(n, text)| Self::from_str(text, &format!("bundled:{n}")).expect("bundled scenario"))
    }

    pub fn bundled_names() -> Vec<&'static str> {
        BUNDLED.iter().map(|(n, _)| *n).collect()
    }

    /// Text of a bundled scenario.
    pub fn bundled_text(name: &str) -> Option<&'static str> {
        BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
    }

    pub fn state(&self, name: &str) -> Result<&PhaseState> {
        self.states.get(name).ok_or_else(|| {
            schema(
                format!("states.{name}"),
                format!("no such state (have: {})", keys(&self.states)),
            )
        })
    }

    pub fn grid(&self, name: &str) -> Result<&Grid> {
        self.grids.get(name).ok_or_else(|| {
            schema(
                format!("grids.{name}"),
                format!("no such grid (have: {})", keys(&self.grids)),
            )
        })
    }

    pub fn shape(&self, name: &str) -> Result<&NamedShape> {
        self.shapes.get(name).ok_or_else(|| {
            schema(
                format!("shapes.{name}"),
                format!("no such shape (have: {})", keys(&self.shapes)),
            )
        })
    }

    /// Cone for a named shape, with command-line overrides.
    pub fn cone(&self, name: &str, alpha: Option<f64>, r: Option<f64>) -> Result<ConeSpec> {
        let s = self.shape(name)?;
        ConeSpec::new(
            &self.system,
            s.a.clone(),
            alpha.or(s.alpha).unwrap_or(0.9),
            r.or(s.r).unwrap_or(1.0),
        )
    }

    pub fn integration_options(&self) -> IntegrationOptions {
        let d = IntegrationOptions::default();
        IntegrationOptions {
            rtol: self.tolerances.rtol.unwrap_or(d.rtol),
            drift_bound: self.tolerances.drift_bound.unwrap_or(d.drift_bound),
            ..d
        }
    }

    pub fn action_options(&self) -> ActionOptions {
        let d = ActionOptions::default();
        ActionOptions {
            segments: self.tolerances.segments.unwrap_or(d.segments),
            ..d
        }
    }

    pub fn ray_options(&self) -> RayOptions {
        let d = RayOptions::default();
        RayOptions {
            gap_tol: self.tolerances.gap_tol.unwrap_or(d.gap_tol),
            action: self.action_options(),
            ..d
        }
    }

    pub fn busemann_options(&self) -> BusemannOptions {
        let d = BusemannOptions::default();
        BusemannOptions {
            buse_tol: self.tolerances.buse_tol.unwrap_or(d.buse_tol),
            action: self.action_options(),
            ..d
        }
    }

    pub fn shape_options(&self) -> ShapeSolveOptions {
        let d = ShapeSolveOptions::default();
        ShapeSolveOptions {
            shoot_tol: self.tolerances.shoot_tol.unwrap_or(d.shoot_tol),
            horizon: self.tolerances.horizon.unwrap_or(d.horizon),
            ..d
        }
    }
}

fn keys<V>(m: &BTreeMap<String, V>) -> String {
    if m.is_empty() {
        return "none".into();
    }
    m.keys().cloned().collect::<Vec<_>>().join(", ")
}

/// Loads a scenario from a file, or a bundled one when `path` names it.
pub fn load_scenario(path: &str) -> Result<Scenario> {
    if let Some(s) = Scenario::bundled(path) {
        return Ok(s);
    }
    let p = Path::new(path);
    let text = std::fs::read_to_string(p)
        .map_err(|e| JmError::Io(format!("cannot read scenario {path}: {e}")))?;
    Scenario::from_str(&text, path)
}

/// Re-hashes the scenario a record points to.
pub fn rehash(source: &str) -> Result<String> {
    if let Some(name) = source.strip_prefix("bundled:") {
        let text = Scenario::bundled_text(name)
            .ok_or_else(|| JmError::Io(format!("unknown bundled scenario {name}")))?;
        return Ok(sha256_hex(text.as_bytes()));
    }
    Ok(sha256_hex(&std::fs::read(source)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "jmflow_schema = 1\nmasses = [1.0, 1.0]\ndim = 2\n\n[states.a]\nq = [-1.0, 0.0, 1.0, 0.0]\nv = [0.0, 0.0, 0.0, 0.0]\n";

    #[test]
    fn minimal_two_body() {
        let s = Scenario::from_str(MINIMAL, "mem").unwrap();
        assert_eq!(s.system.bodies(), 2);
        assert_eq!(s.system.dim(), 2);
        assert_eq!(s.states.len(), 1);
        assert_eq!(s.hash, sha256_hex(MINIMAL.as_bytes()));
    }

    #[test]
    fn negative_mass_names_the_field() {
        let text = MINIMAL.replace("[1.0, 1.0]", "[1.0, -2.0]");
        match Scenario::from_str(&text, "mem") {
            Err(JmError::Schema { field, .. }) => assert_eq!(field, "masses[1]"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn colliding_state_names_the_state() {
        let text = MINIMAL.replace("[-1.0, 0.0, 1.0, 0.0]", "[1.0, 0.0, 1.0, 0.0]");
        match Scenario::from_str(&text, "mem") {
            Err(JmError::StateCollision { state, .. }) => assert_eq!(state, "a"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn schema_version_and_unknown_keys() {
        let text = MINIMAL.replace("jmflow_schema = 1", "jmflow_schema = 2");
        assert!(matches!(
            Scenario::from_str(&text, "mem"),
            Err(JmError::Schema { field, .. }) if field == "jmflow_schema"
        ));
        let text = format!("{MINIMAL}\n[tolerances]\nbogus = 1.0\n");
        match Scenario::from_str(&text, "mem") {
            Err(JmError::Schema { field, message }) => {
                assert!(field.starts_with("line 10"), "{field}");
                assert!(message.contains("bogus"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn wrong_state_length() {
        let text = MINIMAL.replace("v = [0.0, 0.0, 0.0, 0.0]", "v = [0.0, 0.0]");
        assert!(matches!(
            Scenario::from_str(&text, "mem"),
            Err(JmError::Schema { field, .. }) if field == "states.a.v"
        ));
    }

    #[test]
    fn reduced_mode_centers_states() {
        let text = MINIMAL
            .replace("dim = 2", "dim = 2\nreduced = true")
            .replace("[-1.0, 0.0, 1.0, 0.0]", "[0.0, 0.0, 2.0, 0.0]");
        let s = Scenario::from_str(&text, "mem").unwrap();
        assert_eq!(s.state("a").unwrap().q.to_vec(), vec![-1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn bundled_library_loads() {
        for name in Scenario::bundled_names() {
            let s = Scenario::bundled(name).unwrap();
            assert_eq!(s.name, name);
            assert!(!s.states.is_empty());
            assert_eq!(rehash(&s.source).unwrap(), s.hash);
        }
        let k = Scenario::bundled("kepler-hyperbolic").unwrap();
        assert_eq!(k.grid("near-ray").unwrap().points().len(), 9);
        assert!(k.cone("axis", None, None).is_ok());
        assert!(matches!(k.state("nope"), Err(JmError::Schema { .. })));
    }
}
