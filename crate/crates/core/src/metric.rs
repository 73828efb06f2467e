//! Metric-space side of the construction: sampled distance matrices with
//! uniform comparison, Euclidean comparison triangles and angle excesses,
//! singular flat surfaces built from glued triangles with exact geodesic
//! tracing, comparison-angle spot checks, the quotient cone metric induced
//! by an orbit hull, the flattening map that replaces geodesic triangles by
//! their comparison triangles, and a refinement ladder driving hull metrics
//! toward their smooth limit.

use crate::bounds::{BoundReport, MarginTally};
use crate::fuchsian::{genus2_octagon_group, FuchsianError, FuchsianGroup, Isometry};
use crate::hull::{fuchsian_hull, HullComplex, HullError};
use crate::intrinsic::{surface_point_at, IntrinsicError, SurfaceGraph, SurfacePoint};
use crate::lorentz::{hyp_dist, HyperboloidPoint, LorentzError, LorentzVec};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::{HashMap, HashSet, VecDeque};
use std::f64::consts::{PI, TAU};
use thiserror::Error;

/// Slack for the triangle-inequality audit of sampled distance matrices:
/// entries come from shortest-path sums whose rounding never exceeds this.
pub const TRIANGLE_AUDIT_TOL: f64 = 1e-9;

/// Quantities the construction pins exactly (matrix symmetry, the zero
/// diagonal, glued side lengths) may differ only at rounding level.
const EXACT_TOL: f64 = 1e-12;

/// Relative margin below which three lengths are rejected as a degenerate
/// triangle; at this margin the half-angle formula still returns angle sums
/// flat to 1e-12, thinner slivers lose that guarantee.
const DEGENERATE_REL: f64 = 1e-6;

/// Cone angles of a non-positively curved surface may fall below a full
/// turn only by accumulated rounding of the corner angles.
const NPC_ANGLE_TOL: f64 = 1e-9;

/// Slack for the discrete curvature sum against its combinatorial value.
const GAUSS_BONNET_TOL: f64 = 1e-6;

/// Comparison-angle slack for spot checks: traced lengths are exact within
/// a sleeve, so only angle arithmetic enters the margins.
const CAT_TOL: f64 = 1e-6;

/// Finite proxies for the shrinking-triangle limit in upper-angle
/// estimates: the largest value over these scales is reported.
pub const DEFAULT_ANGLE_SCALES: [f64; 3] = [0.2, 0.1, 0.05];

/// Cap on the triangle count of one traced sleeve; local queries stay well
/// under it.
const TRACE_HOPS: usize = 12;

/// Cap on sleeve-enumeration work per trace before the search reports
/// failure instead of silently dropping candidates.
const SLEEVE_BUDGET: usize = 200_000;

/// Two orbit copies of a face land on the same coordinates up to group
/// closure noise (about 1e-7 at window scale), while distinct vertices stay
/// farther than 1e-2 apart; this band separates the two regimes.
const FACE_CLASS_TOL: f64 = 1e-5;

/// Band for component ties in lexicographic vertex comparisons when
/// rotating a face cycle to its canonical start.
const LEX_BAND: f64 = 1e-4;

/// Largest discrepancy the quotient assembly may absorb when snapping the
/// two traced copies of one glued edge to a single length.
const GLUE_CANON_TOL: f64 = 1e-7;

/// Relative height improvement a domain-reduction step must achieve;
/// below this the walk has reached the fundamental domain.
const REDUCE_STEP_TOL: f64 = 1e-13;

/// Cap on domain-reduction steps; the greedy walk on a cocompact orbit
/// settles in far fewer.
const REDUCE_MAX_STEPS: usize = 200;

/// A geodesic chain may pass an interior vertex only where the surface is
/// flat and the angles on both sides balance; this absorbs corner rounding.
const FLAT_JUNCTION_TOL: f64 = 1e-9;

/// Rejection attempts per spot-check sample before the sampler gives up.
const SPOT_ATTEMPTS: usize = 64;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("sample id sets differ")]
    IdMismatch,
    #[error("empty input")]
    EmptyInput,
    #[error("degenerate triangle sides ({a}, {b}, {c})")]
    DegenerateTriangle { a: f64, b: f64, c: f64 },
    #[error("distance matrix audit failed: {0}")]
    InvalidMetric(String),
    #[error("cone metric structure invalid: {0}")]
    InvalidConeMetric(String),
    #[error("invalid surface point: {0}")]
    InvalidPoint(String),
    #[error("target edge is not a geodesic: {0}")]
    NonGeodesicEdge(String),
    #[error("cone angle {angle} falls below a full turn")]
    ConeAngleViolation { angle: f64 },
    #[error("geodesic trace failed: {0}")]
    TraceFailed(String),
    #[error("csv parse failed: {0}")]
    Csv(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Lorentz(#[from] LorentzError),
    #[error(transparent)]
    Fuchsian(#[from] FuchsianError),
    #[error(transparent)]
    Hull(#[from] HullError),
    #[error(transparent)]
    Intrinsic(#[from] IntrinsicError),
}

// ---------------------------------------------------------------------------
// Sampled distance matrices
// ---------------------------------------------------------------------------

/// A finite metric space: labelled points with their pairwise distances.
/// Construction audits symmetry, the zero diagonal, nonnegativity and the
/// triangle inequality.
#[derive(Debug, Clone)]
pub struct SampledMetric {
    ids: Vec<String>,
    d: DMatrix<f64>,
}

impl SampledMetric {
    pub fn new(ids: Vec<String>, d: DMatrix<f64>) -> Result<Self, MetricError> {
        let n = ids.len();
        if n == 0 {
            return Err(MetricError::EmptyInput);
        }
        if d.nrows() != n || d.ncols() != n {
            return Err(MetricError::InvalidMetric(format!(
                "{} ids against a {}x{} matrix",
                n,
                d.nrows(),
                d.ncols()
            )));
        }
        let m = SampledMetric { ids, d };
        m.audit()?;
        Ok(m)
    }

    fn audit(&self) -> Result<(), MetricError> {
        let n = self.len();
        for i in 0..n {
            if self.d[(i, i)].abs() > EXACT_TOL {
                return Err(MetricError::InvalidMetric(format!(
                    "nonzero diagonal at {}",
                    self.ids[i]
                )));
            }
            for j in 0..n {
                let v = self.d[(i, j)];
                if !v.is_finite() || v < 0.0 {
                    return Err(MetricError::InvalidMetric(format!(
                        "negative or non-finite entry at ({}, {})",
                        self.ids[i], self.ids[j]
                    )));
                }
                if (v - self.d[(j, i)]).abs() > EXACT_TOL {
                    return Err(MetricError::InvalidMetric(format!(
                        "asymmetric pair ({}, {})",
                        self.ids[i], self.ids[j]
                    )));
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if self.d[(i, k)] > self.d[(i, j)] + self.d[(j, k)] + TRIANGLE_AUDIT_TOL {
                        return Err(MetricError::InvalidMetric(format!(
                            "triangle inequality fails on ({}, {}, {})",
                            self.ids[i], self.ids[j], self.ids[k]
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.d[(i, j)]
    }

    pub fn max_entry(&self) -> f64 {
        self.d.iter().fold(0.0f64, |m, &v| m.max(v))
    }

    /// One row per point, `id` column first, 12 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id");
        for id in &self.ids {
            out.push(',');
            out.push_str(id);
        }
        out.push('\n');
        for i in 0..self.len() {
            out.push_str(&self.ids[i]);
            for j in 0..self.len() {
                out.push_str(&format!(",{:.11e}", self.d[(i, j)]));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, MetricError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or(MetricError::EmptyInput)?;
        let mut cells = header.split(',');
        let tag = cells.next().unwrap_or("");
        if tag != "id" {
            return Err(MetricError::Csv(format!(
                "header starts with {tag:?}, expected \"id\""
            )));
        }
        let ids: Vec<String> = cells.map(str::to_string).collect();
        let n = ids.len();
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
        for (i, line) in lines.enumerate() {
            let mut cells = line.split(',');
            let label = cells.next().unwrap_or("");
            if i >= n || label != ids[i] {
                return Err(MetricError::Csv(format!(
                    "row label {label:?} does not match the header order"
                )));
            }
            let row: Vec<f64> = cells
                .map(|c| {
                    c.trim()
                        .parse::<f64>()
                        .map_err(|e| MetricError::Csv(format!("bad number {c:?}: {e}")))
                })
                .collect::<Result<_, _>>()?;
            if row.len() != n {
                return Err(MetricError::Csv(format!(
                    "row {label} has {} values, expected {n}",
                    row.len()
                )));
            }
            rows.push(row);
        }
        if rows.len() != n {
            return Err(MetricError::Csv(format!(
                "{} rows for {n} header ids",
                rows.len()
            )));
        }
        SampledMetric::new(ids, DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }
}

fn index_map<'a>(m: &'a SampledMetric) -> HashMap<&'a str, usize> {
    m.ids()
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect()
}

/// Largest pointwise gap between two metrics over the same id set; the ids
/// are aligned by name, not by position.
pub fn uniform_distance(a: &SampledMetric, b: &SampledMetric) -> Result<f64, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::IdMismatch);
    }
    let bmap = index_map(b);
    let mut gap = 0.0f64;
    for i in 0..a.len() {
        let bi = *bmap.get(a.ids[i].as_str()).ok_or(MetricError::IdMismatch)?;
        for j in 0..a.len() {
            let bj = *bmap.get(a.ids[j].as_str()).ok_or(MetricError::IdMismatch)?;
            gap = gap.max((a.value(i, j) - b.value(bi, bj)).abs());
        }
    }
    Ok(gap)
}

/// Pointwise maximum of metrics over the same id set, which is again a
/// metric; ids are aligned by name and reported in the first input's order.
pub fn sup_metric(metrics: &[SampledMetric]) -> Result<SampledMetric, MetricError> {
    let first = metrics.first().ok_or(MetricError::EmptyInput)?;
    let n = first.len();
    let mut d = first.d.clone();
    for m in &metrics[1..] {
        if m.len() != n {
            return Err(MetricError::IdMismatch);
        }
        let map = index_map(m);
        for i in 0..n {
            let mi = *map
                .get(first.ids[i].as_str())
                .ok_or(MetricError::IdMismatch)?;
            for j in 0..n {
                let mj = *map
                    .get(first.ids[j].as_str())
                    .ok_or(MetricError::IdMismatch)?;
                d[(i, j)] = d[(i, j)].max(m.value(mi, mj));
            }
        }
    }
    SampledMetric::new(first.ids.clone(), d)
}

// ---------------------------------------------------------------------------
// Comparison triangles
// ---------------------------------------------------------------------------

/// Angles of the Euclidean triangle with sides `(a, b, c)`, returned
/// opposite each side in argument order. Uses the half-angle form
/// `2 atan2(sqrt((s-b)(s-c)), sqrt(s(s-a)))`, which keeps the angle sum
/// flat to 1e-12 even for thin admissible triangles.
pub fn comparison_triangle(a: f64, b: f64, c: f64) -> Result<[f64; 3], MetricError> {
    let p = a + b + c;
    if !(a > 0.0 && b > 0.0 && c > 0.0) || !p.is_finite() {
        return Err(MetricError::DegenerateTriangle { a, b, c });
    }
    let guard = DEGENERATE_REL * p;
    if a >= b + c - guard || b >= a + c - guard || c >= a + b - guard {
        return Err(MetricError::DegenerateTriangle { a, b, c });
    }
    let s = 0.5 * p;
    let angle = |opp: f64, adj1: f64, adj2: f64| {
        2.0 * f64::atan2(
            ((s - adj1) * (s - adj2)).max(0.0).sqrt(),
            (s * (s - opp)).max(0.0).sqrt(),
        )
    };
    Ok([angle(a, b, c), angle(b, a, c), angle(c, a, b)])
}

/// Angle sum of a triangle relative to its flat value.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TriangleExcess {
    pub angles: [f64; 3],
    pub excess: f64,
}

impl TriangleExcess {
    pub fn new(angles: [f64; 3]) -> Self {
        TriangleExcess {
            angles,
            excess: angles.iter().sum::<f64>() - PI,
        }
    }

    pub fn from_sides(a: f64, b: f64, c: f64) -> Result<Self, MetricError> {
        Ok(TriangleExcess::new(comparison_triangle(a, b, c)?))
    }
}

// ---------------------------------------------------------------------------
// Cone metrics: Euclidean triangles glued along equal-length edges
// ---------------------------------------------------------------------------

/// Serialized form: side-length triples and gluings `[t1, e1, t2, e2]`
/// identifying edge `e1` of triangle `t1` with edge `e2` of triangle `t2`,
/// traversed oppositely so that orientations agree. Edge `k` of a triangle
/// joins its corners `k` and `k+1 (mod 3)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ConeMetricData {
    triangles: Vec<[f64; 3]>,
    gluing: Vec<[usize; 4]>,
}

/// A surface flat away from finitely many cone points, presented as
/// oriented Euclidean triangles with some edge pairs identified. Unglued
/// edges are boundary.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "ConeMetricData", into = "ConeMetricData")]
pub struct ConeMetric {
    tris: Vec<[f64; 3]>,
    gluing: Vec<[usize; 4]>,
    partner: Vec<[Option<(usize, usize)>; 3]>,
    angles: Vec<[f64; 3]>,
    class_of: Vec<[usize; 3]>,
    classes: Vec<Vec<(usize, usize)>>,
    class_boundary: Vec<bool>,
}

impl TryFrom<ConeMetricData> for ConeMetric {
    type Error = MetricError;

    fn try_from(data: ConeMetricData) -> Result<Self, MetricError> {
        ConeMetric::new(data.triangles, data.gluing)
    }
}

impl From<ConeMetric> for ConeMetricData {
    fn from(cm: ConeMetric) -> Self {
        ConeMetricData {
            triangles: cm.tris,
            gluing: cm.gluing,
        }
    }
}

fn uf_find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

impl ConeMetric {
    pub fn new(triangles: Vec<[f64; 3]>, gluing: Vec<[usize; 4]>) -> Result<Self, MetricError> {
        if triangles.is_empty() {
            return Err(MetricError::EmptyInput);
        }
        let n = triangles.len();
        let mut angles = Vec::with_capacity(n);
        for &[a, b, c] in &triangles {
            let opp = comparison_triangle(a, b, c)?;
            // corner k lies between sides k and k+2, opposite side k+1
            angles.push([opp[1], opp[2], opp[0]]);
        }
        let mut partner: Vec<[Option<(usize, usize)>; 3]> = vec![[None; 3]; n];
        for &[t1, e1, t2, e2] in &gluing {
            if t1 >= n || t2 >= n || e1 >= 3 || e2 >= 3 {
                return Err(MetricError::InvalidConeMetric(format!(
                    "gluing [{t1}, {e1}, {t2}, {e2}] out of range"
                )));
            }
            if (t1, e1) == (t2, e2) {
                return Err(MetricError::InvalidConeMetric(format!(
                    "edge ({t1}, {e1}) glued to itself"
                )));
            }
            let (l1, l2) = (triangles[t1][e1], triangles[t2][e2]);
            if (l1 - l2).abs() > EXACT_TOL * l1.max(1.0) {
                return Err(MetricError::InvalidConeMetric(format!(
                    "glued sides of lengths {l1} and {l2} differ"
                )));
            }
            for (t, e) in [(t1, e1), (t2, e2)] {
                if partner[t][e].is_some() {
                    return Err(MetricError::InvalidConeMetric(format!(
                        "edge ({t}, {e}) glued twice"
                    )));
                }
            }
            partner[t1][e1] = Some((t2, e2));
            partner[t2][e2] = Some((t1, e1));
        }
        let mut parent: Vec<usize> = (0..3 * n).collect();
        for &[t1, e1, t2, e2] in &gluing {
            for (x, y) in [
                (3 * t1 + e1, 3 * t2 + (e2 + 1) % 3),
                (3 * t1 + (e1 + 1) % 3, 3 * t2 + e2),
            ] {
                let rx = uf_find(&mut parent, x);
                let ry = uf_find(&mut parent, y);
                parent[rx.max(ry)] = rx.min(ry);
            }
        }
        let mut root_id: HashMap<usize, usize> = HashMap::new();
        let mut class_of = vec![[usize::MAX; 3]; n];
        let mut classes: Vec<Vec<(usize, usize)>> = Vec::new();
        for t in 0..n {
            for k in 0..3 {
                let root = uf_find(&mut parent, 3 * t + k);
                let next = classes.len();
                let id = *root_id.entry(root).or_insert(next);
                if id == classes.len() {
                    classes.push(Vec::new());
                }
                class_of[t][k] = id;
                classes[id].push((t, k));
            }
        }
        let mut class_boundary = vec![false; classes.len()];
        for t in 0..n {
            for k in 0..3 {
                // corner k touches its two incident edges k and k+2
                if partner[t][k].is_none() || partner[t][(k + 2) % 3].is_none() {
                    class_boundary[class_of[t][k]] = true;
                }
            }
        }
        Ok(ConeMetric {
            tris: triangles,
            gluing,
            partner,
            angles,
            class_of,
            classes,
            class_boundary,
        })
    }

    pub fn n_triangles(&self) -> usize {
        self.tris.len()
    }

    pub fn sides(&self, t: usize) -> [f64; 3] {
        self.tris[t]
    }

    pub fn side(&self, t: usize, e: usize) -> f64 {
        self.tris[t][e]
    }

    pub fn corner_angle(&self, t: usize, k: usize) -> f64 {
        self.angles[t][k]
    }

    pub fn partner(&self, t: usize, e: usize) -> Option<(usize, usize)> {
        self.partner[t][e]
    }

    pub fn gluing(&self) -> &[[usize; 4]] {
        &self.gluing
    }

    pub fn vertex_class(&self, t: usize, k: usize) -> usize {
        self.class_of[t][k]
    }

    pub fn n_vertex_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_corners(&self, v: usize) -> &[(usize, usize)] {
        &self.classes[v]
    }

    pub fn class_is_boundary(&self, v: usize) -> bool {
        self.class_boundary[v]
    }

    /// Total angle of the surface around the vertex class `v`.
    pub fn cone_angle(&self, v: usize) -> f64 {
        self.classes[v]
            .iter()
            .map(|&(t, k)| self.angles[t][k])
            .sum()
    }

    pub fn is_closed(&self) -> bool {
        self.partner
            .iter()
            .all(|p| p.iter().all(|e| e.is_some()))
    }

    pub fn euler_characteristic(&self) -> i64 {
        let v = self.classes.len() as i64;
        let e = 3 * self.tris.len() as i64 - self.gluing.len() as i64;
        let f = self.tris.len() as i64;
        v - e + f
    }

    /// Sum of the angle deficits `2 pi - theta` over interior vertices; for
    /// a closed surface this equals `2 pi` times the Euler characteristic.
    pub fn gauss_bonnet_sum(&self) -> f64 {
        (0..self.classes.len())
            .filter(|&v| !self.class_boundary[v])
            .map(|v| TAU - self.cone_angle(v))
            .sum()
    }

    /// Checks that every interior vertex carries at least a full turn of
    /// angle, and that a closed surface's deficit sum matches its Euler
    /// characteristic.
    pub fn audit_nonpositive(&self) -> Result<(), MetricError> {
        for v in 0..self.classes.len() {
            if self.class_boundary[v] {
                continue;
            }
            let angle = self.cone_angle(v);
            if angle < TAU - NPC_ANGLE_TOL {
                return Err(MetricError::ConeAngleViolation { angle });
            }
        }
        if self.is_closed() {
            let expected = TAU * self.euler_characteristic() as f64;
            let got = self.gauss_bonnet_sum();
            if (got - expected).abs() > GAUSS_BONNET_TOL {
                return Err(MetricError::InvalidConeMetric(format!(
                    "deficit sum {got} against the combinatorial value {expected}"
                )));
            }
        }
        Ok(())
    }

    /// Plane coordinates of triangle `t`: corner 0 at the origin, corner 1
    /// on the positive axis, corner 2 in the upper half plane.
    fn layout(&self, t: usize) -> [[f64; 2]; 3] {
        let [l0, l1, l2] = self.tris[t];
        let x = (l0 * l0 + l2 * l2 - l1 * l1) / (2.0 * l0);
        let y = (l2 * l2 - x * x).max(0.0).sqrt();
        [[0.0, 0.0], [l0, 0.0], [x, y]]
    }

    pub fn to_json_string(&self) -> Result<String, MetricError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json_str(text: &str) -> Result<Self, MetricError> {
        Ok(serde_json::from_str(text)?)
    }
}

// ---------------------------------------------------------------------------
// Exact geodesics on cone metrics: unfolding plus funnel
// ---------------------------------------------------------------------------

/// A point of a cone metric in barycentric coordinates of one triangle.
#[derive(Debug, Clone, Copy)]
pub struct ConePoint {
    pub tri: usize,
    pub bary: [f64; 3],
}

impl ConePoint {
    pub fn new(tri: usize, bary: [f64; 3]) -> Result<Self, MetricError> {
        if bary.iter().any(|b| !b.is_finite() || *b < -1e-9) {
            return Err(MetricError::InvalidPoint(format!(
                "barycentric coordinates {bary:?}"
            )));
        }
        let s: f64 = bary.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(MetricError::InvalidPoint(format!(
                "barycentric coordinates {bary:?} sum to {s}"
            )));
        }
        let clamped = [bary[0].max(0.0), bary[1].max(0.0), bary[2].max(0.0)];
        let t: f64 = clamped.iter().sum();
        Ok(ConePoint {
            tri,
            bary: [clamped[0] / t, clamped[1] / t, clamped[2] / t],
        })
    }
}

fn vsub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn vcross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn vdist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    let d = vsub(a, b);
    d[0] * d[0] + d[1] * d[1]
}

fn vdist(a: [f64; 2], b: [f64; 2]) -> f64 {
    vdist2(a, b).sqrt()
}

/// One triangle placed in the unfolding plane, corners in index order.
#[derive(Debug, Clone, Copy)]
struct Placement {
    tri: usize,
    pts: [[f64; 2]; 3],
}

fn bary_point(p: &Placement, bary: [f64; 3]) -> [f64; 2] {
    [
        bary[0] * p.pts[0][0] + bary[1] * p.pts[1][0] + bary[2] * p.pts[2][0],
        bary[0] * p.pts[0][1] + bary[1] * p.pts[1][1] + bary[2] * p.pts[2][1],
    ]
}

fn bary_in(pts: &[[f64; 2]; 3], q: [f64; 2]) -> [f64; 3] {
    let area = vcross(vsub(pts[1], pts[0]), vsub(pts[2], pts[0]));
    let b0 = vcross(vsub(pts[2], pts[1]), vsub(q, pts[1])) / area;
    let b1 = vcross(vsub(pts[0], pts[2]), vsub(q, pts[2])) / area;
    [b0, b1, 1.0 - b0 - b1]
}

impl ConeMetric {
    fn base_placement(&self, t: usize) -> Placement {
        Placement {
            tri: t,
            pts: self.layout(t),
        }
    }

    /// Places the triangle across edge `e` of `from` in the same plane, by
    /// the orientation-preserving rigid map matching the shared edge.
    fn unfold_across(&self, from: &Placement, e: usize) -> Result<Placement, MetricError> {
        let (t2, e2) = self.partner[from.tri][e].ok_or_else(|| {
            MetricError::TraceFailed(format!("edge ({}, {e}) is boundary", from.tri))
        })?;
        // the shared edge runs corner e -> e+1 on one side and is traversed
        // oppositely on the other
        let a = from.pts[e];
        let b = from.pts[(e + 1) % 3];
        let local = self.layout(t2);
        let la = local[(e2 + 1) % 3];
        let lb = local[e2];
        // rigid map z -> p + (c + i s)(z - la) sending la -> a, lb -> b
        let u = vsub(lb, la);
        let v = vsub(b, a);
        let n2 = u[0] * u[0] + u[1] * u[1];
        let c = (u[0] * v[0] + u[1] * v[1]) / n2;
        let s = vcross(u, v) / n2;
        let map = |z: [f64; 2]| {
            let w = vsub(z, la);
            [
                a[0] + c * w[0] - s * w[1],
                a[1] + s * w[0] + c * w[1],
            ]
        };
        Ok(Placement {
            tri: t2,
            pts: [map(local[0]), map(local[1]), map(local[2])],
        })
    }
}

/// Breadth-first dual-graph distances to triangle `to`.
fn dual_distances(cm: &ConeMetric, to: usize) -> Vec<u32> {
    let mut dist = vec![u32::MAX; cm.n_triangles()];
    dist[to] = 0;
    let mut queue = VecDeque::from([to]);
    while let Some(t) = queue.pop_front() {
        for e in 0..3 {
            if let Some((t2, _)) = cm.partner(t, e) {
                if dist[t2] == u32::MAX {
                    dist[t2] = dist[t] + 1;
                    queue.push_back(t2);
                }
            }
        }
    }
    dist
}

#[allow(clippy::too_many_arguments)]
fn sleeve_dfs(
    cm: &ConeMetric,
    cur: usize,
    to: usize,
    hops_left: usize,
    dist: &[u32],
    visited: &mut [bool],
    path: &mut Vec<(usize, usize)>,
    out: &mut Vec<Vec<(usize, usize)>>,
    budget: &mut usize,
) -> Result<(), MetricError> {
    if *budget == 0 {
        return Err(MetricError::TraceFailed(
            "sleeve search budget exhausted".into(),
        ));
    }
    *budget -= 1;
    if cur == to {
        out.push(path.clone());
        return Ok(());
    }
    if hops_left == 0 {
        return Ok(());
    }
    for e in 0..3 {
        if let Some((t2, _)) = cm.partner(cur, e) {
            if !visited[t2] && (dist[t2] as usize) <= hops_left - 1 {
                visited[t2] = true;
                path.push((e, t2));
                sleeve_dfs(cm, t2, to, hops_left - 1, dist, visited, path, out, budget)?;
                path.pop();
                visited[t2] = false;
            }
        }
    }
    Ok(())
}

/// All simple triangle sleeves from `from` to `to` with at most `max_hops`
/// edge crossings, as lists of `(exit edge, next triangle)` steps.
fn enumerate_sleeves(
    cm: &ConeMetric,
    from: usize,
    to: usize,
    max_hops: usize,
) -> Result<Vec<Vec<(usize, usize)>>, MetricError> {
    let dist = dual_distances(cm, to);
    if dist[from] == u32::MAX || dist[from] as usize > max_hops {
        return Err(MetricError::TraceFailed(format!(
            "no sleeve within {max_hops} crossings"
        )));
    }
    let mut visited = vec![false; cm.n_triangles()];
    visited[from] = true;
    let mut path = Vec::new();
    let mut out = Vec::new();
    let mut budget = SLEEVE_BUDGET;
    sleeve_dfs(
        cm, from, to, max_hops, &dist, &mut visited, &mut path, &mut out, &mut budget,
    )?;
    Ok(out)
}

/// A taut-string vertex in the unfolding plane. `ports_idx` indexes the
/// augmented portal list (start point, the real portals, goal point), so
/// real portal `j` has index `j + 1`.
#[derive(Debug, Clone, Copy)]
struct Bend {
    p: [f64; 2],
    ports_idx: usize,
}

fn tri2(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    let (ax, ay) = (b[0] - a[0], b[1] - a[1]);
    let (bx, by) = (c[0] - a[0], c[1] - a[1]);
    bx * ay - ax * by
}

fn veq(a: [f64; 2], b: [f64; 2]) -> bool {
    let s = 1e-9 * (1.0 + a[0].abs() + a[1].abs());
    vdist2(a, b) <= s * s
}

/// Pulls the string taut through a portal sequence: the funnel algorithm.
/// Portals are `(left, right)` pairs as seen walking toward the goal.
fn funnel(start: [f64; 2], portals: &[([f64; 2], [f64; 2])], goal: [f64; 2]) -> Vec<Bend> {
    let mut ports = Vec::with_capacity(portals.len() + 2);
    ports.push((start, start));
    ports.extend_from_slice(portals);
    ports.push((goal, goal));
    let mut bends = vec![Bend {
        p: start,
        ports_idx: 0,
    }];
    let (mut apex, mut left, mut right) = (start, start, start);
    let (mut left_i, mut right_i) = (0usize, 0usize);
    let mut i = 1;
    while i < ports.len() {
        let (l, r) = ports[i];
        // the crossover guards are lax so that exactly collinear candidates
        // (a query point on a portal line) tighten instead of bending
        if tri2(apex, right, r) <= 0.0 {
            if veq(apex, right) || tri2(apex, left, r) >= 0.0 {
                right = r;
                right_i = i;
            } else {
                bends.push(Bend {
                    p: left,
                    ports_idx: left_i,
                });
                apex = left;
                right = apex;
                right_i = left_i;
                i = left_i + 1;
                continue;
            }
        }
        if tri2(apex, left, l) >= 0.0 {
            if veq(apex, left) || tri2(apex, right, l) <= 0.0 {
                left = l;
                left_i = i;
            } else {
                bends.push(Bend {
                    p: right,
                    ports_idx: right_i,
                });
                apex = right;
                left = apex;
                left_i = right_i;
                i = right_i + 1;
                continue;
            }
        }
        i += 1;
    }
    bends.push(Bend {
        p: goal,
        ports_idx: ports.len() - 1,
    });
    bends
}

/// A traced geodesic: its length, bend points, and the unfolded triangle
/// placements it runs through, enabling exact arclength queries.
#[derive(Debug, Clone)]
pub struct GeodesicTrace {
    pub length: f64,
    bends: Vec<Bend>,
    placements: Vec<Placement>,
    portals: Vec<([f64; 2], [f64; 2])>,
}

impl GeodesicTrace {
    /// The surface point at arclength `s` from the start.
    pub fn point_at(&self, s: f64) -> Result<ConePoint, MetricError> {
        if s < -1e-9 || s > self.length + 1e-9 {
            return Err(MetricError::TraceFailed(format!(
                "arclength {s} outside [0, {}]",
                self.length
            )));
        }
        let s = s.clamp(0.0, self.length);
        let mut cum = 0.0;
        for k in 0..self.bends.len() - 1 {
            let (a, b) = (self.bends[k], self.bends[k + 1]);
            let seg = vdist(a.p, b.p);
            let last = k + 2 == self.bends.len();
            if seg <= 1e-15 {
                if last {
                    return Ok(self.locate_on_segment(k, 0.0));
                }
                continue;
            }
            if s <= cum + seg || last {
                let u = ((s - cum) / seg).clamp(0.0, 1.0);
                return Ok(self.locate_on_segment(k, u));
            }
            cum += seg;
        }
        Err(MetricError::TraceFailed("empty trace".into()))
    }

    /// Finds the placement containing parameter `u` of bend segment `k` by
    /// walking the portal crossings in order, then converts to barycentric
    /// coordinates there.
    fn locate_on_segment(&self, k: usize, u: f64) -> ConePoint {
        let (a, b) = (self.bends[k], self.bends[k + 1]);
        let pos = [
            a.p[0] + u * (b.p[0] - a.p[0]),
            a.p[1] + u * (b.p[1] - a.p[1]),
        ];
        // ports index j corresponds to real portal j-1; the segment can
        // cross real portals a.ports_idx .. b.ports_idx-2
        let mut place = a.ports_idx.min(self.placements.len() - 1);
        let hi = b.ports_idx.saturating_sub(1);
        for rp in a.ports_idx..hi {
            let (l, r) = self.portals[rp];
            let d = vsub(r, l);
            let den = vcross(d, vsub(b.p, a.p));
            let scale = 1.0 + d[0].abs() + d[1].abs();
            if den.abs() <= 1e-15 * scale {
                // segment runs along the portal line: both sides describe
                // the same surface points
                place = rp + 1;
                continue;
            }
            let ucross = vcross(d, vsub(l, a.p)) / den;
            if u + 1e-12 >= ucross {
                place = rp + 1;
            } else {
                break;
            }
        }
        let pl = &self.placements[place];
        let raw = bary_in(&pl.pts, pos);
        let clamped = [raw[0].max(0.0), raw[1].max(0.0), raw[2].max(0.0)];
        let t: f64 = clamped.iter().sum();
        ConePoint {
            tri: pl.tri,
            bary: [clamped[0] / t, clamped[1] / t, clamped[2] / t],
        }
    }
}

/// Shortest geodesic between two points over all simple sleeves of at most
/// `max_hops` crossings. Exact within each sleeve (unfold, pull taut);
/// valid as a distance whenever the minimizing path is simple, which holds
/// for the local queries this module makes.
pub fn trace_geodesic(
    cm: &ConeMetric,
    a: ConePoint,
    b: ConePoint,
    max_hops: usize,
) -> Result<GeodesicTrace, MetricError> {
    for p in [a, b] {
        if p.tri >= cm.n_triangles() {
            return Err(MetricError::InvalidPoint(format!(
                "triangle {} out of range",
                p.tri
            )));
        }
    }
    let mut best: Option<GeodesicTrace> = None;
    for hops in enumerate_sleeves(cm, a.tri, b.tri, max_hops)? {
        let mut placements = Vec::with_capacity(hops.len() + 1);
        placements.push(cm.base_placement(a.tri));
        let mut portals = Vec::with_capacity(hops.len());
        for &(e, _) in &hops {
            let cur = *placements.last().expect("nonempty placements");
            portals.push((cur.pts[(e + 1) % 3], cur.pts[e]));
            placements.push(cm.unfold_across(&cur, e)?);
        }
        let start = bary_point(&placements[0], a.bary);
        let goal = bary_point(placements.last().expect("nonempty placements"), b.bary);
        let bends = funnel(start, &portals, goal);
        let length: f64 = bends.windows(2).map(|w| vdist(w[0].p, w[1].p)).sum();
        if best.as_ref().map_or(true, |t| length < t.length) {
            best = Some(GeodesicTrace {
                length,
                bends,
                placements,
                portals,
            });
        }
    }
    best.ok_or_else(|| MetricError::TraceFailed("no sleeve reached the target triangle".into()))
}

/// Length of the shortest traced geodesic between two points.
pub fn cone_distance(
    cm: &ConeMetric,
    a: ConePoint,
    b: ConePoint,
    max_hops: usize,
) -> Result<f64, MetricError> {
    Ok(trace_geodesic(cm, a, b, max_hops)?.length)
}

// ---------------------------------------------------------------------------
// Upper angles and comparison spot checks
// ---------------------------------------------------------------------------

/// Angle opposite `a` in the Euclidean triangle `(a, b, c)`, clamped to the
/// degenerate limits when the sides do not form a triangle.
fn clamped_angle(a: f64, b: f64, c: f64) -> f64 {
    if b <= 0.0 || c <= 0.0 {
        return 0.0;
    }
    let guard = DEGENERATE_REL * (a + b + c);
    if a >= b + c - guard {
        return PI;
    }
    if b >= a + c - guard || c >= a + b - guard {
        return 0.0;
    }
    let s = 0.5 * (a + b + c);
    2.0 * f64::atan2(
        ((s - b) * (s - c)).max(0.0).sqrt(),
        (s * (s - a)).max(0.0).sqrt(),
    )
}

/// Upper angle at `p` between the geodesics to `q` and to `r`: the largest
/// comparison angle over rescaled copies of the triangle, with both far
/// points slid toward `p` along their traced geodesics.
pub fn upper_angle_estimate(
    cm: &ConeMetric,
    p: ConePoint,
    q: ConePoint,
    r: ConePoint,
    scales: &[f64],
) -> Result<f64, MetricError> {
    if scales.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    for &sc in scales {
        if !(sc > 0.0 && sc <= 1.0) {
            return Err(MetricError::InvalidPoint(format!(
                "scale {sc} outside (0, 1]"
            )));
        }
    }
    let tq = trace_geodesic(cm, p, q, TRACE_HOPS)?;
    let tr = trace_geodesic(cm, p, r, TRACE_HOPS)?;
    if tq.length <= 0.0 || tr.length <= 0.0 {
        return Ok(0.0);
    }
    let dqr = cone_distance(cm, q, r, TRACE_HOPS)?;
    if dqr <= EXACT_TOL * (1.0 + tq.length + tr.length) {
        return Ok(0.0);
    }
    let mut largest = 0.0f64;
    for &sc in scales {
        let qs = tq.point_at(sc * tq.length)?;
        let rs = tr.point_at(sc * tr.length)?;
        let across = cone_distance(cm, qs, rs, TRACE_HOPS)?;
        largest = largest.max(clamped_angle(across, sc * tq.length, sc * tr.length));
    }
    Ok(largest)
}

fn dirichlet_bary(rng: &mut ChaCha8Rng) -> [f64; 3] {
    let mut b = [0.0f64; 3];
    let mut total = 0.0;
    for v in &mut b {
        *v = -(rng.gen::<f64>().max(1e-300)).ln();
        total += *v;
    }
    [b[0] / total, b[1] / total, b[2] / total]
}

/// Three points inside one triangle: a uniform base point plus small plane
/// offsets, all within `0.45 * max_side` of the base.
fn patch_sample(cm: &ConeMetric, max_side: f64, rng: &mut ChaCha8Rng) -> Option<[ConePoint; 3]> {
    let t = rng.gen_range(0..cm.n_triangles());
    let pts = cm.layout(t);
    let base = bary_point(
        &Placement { tri: t, pts },
        dirichlet_bary(rng),
    );
    let radius = 0.45 * max_side;
    let mut out = [ConePoint {
        tri: t,
        bary: [0.0; 3],
    }; 3];
    for slot in &mut out {
        let mut placed = false;
        for _ in 0..8 {
            let theta = rng.gen::<f64>() * TAU;
            let rho = radius * rng.gen::<f64>().sqrt();
            let pos = [base[0] + rho * theta.cos(), base[1] + rho * theta.sin()];
            let bary = bary_in(&pts, pos);
            if bary.iter().all(|&v| v >= 1e-9) {
                *slot = ConePoint { tri: t, bary };
                placed = true;
                break;
            }
        }
        if !placed {
            return None;
        }
    }
    Some(out)
}

/// Three points scattered around one interior vertex class, each placed a
/// short way into a random incident corner sector.
fn fan_sample(
    cm: &ConeMetric,
    interior: &[usize],
    max_side: f64,
    rng: &mut ChaCha8Rng,
) -> Option<[ConePoint; 3]> {
    let v = interior[rng.gen_range(0..interior.len())];
    let corners = cm.class_corners(v);
    let mut out = [ConePoint {
        tri: 0,
        bary: [0.0; 3],
    }; 3];
    for slot in &mut out {
        let (t, k) = corners[rng.gen_range(0..corners.len())];
        let lay = cm.layout(t);
        let lim = cm
            .side(t, k)
            .min(cm.side(t, (k + 2) % 3))
            .min(0.8 * max_side);
        let rho = (0.05 + 0.2 * rng.gen::<f64>()) * lim;
        let e1 = vsub(lay[(k + 1) % 3], lay[k]);
        let e2 = vsub(lay[(k + 2) % 3], lay[k]);
        let n1 = (e1[0] * e1[0] + e1[1] * e1[1]).sqrt();
        let n2 = (e2[0] * e2[0] + e2[1] * e2[1]).sqrt();
        let w = rng.gen::<f64>();
        let dir = [
            (1.0 - w) * e1[0] / n1 + w * e2[0] / n2,
            (1.0 - w) * e1[1] / n1 + w * e2[1] / n2,
        ];
        let dn = (dir[0] * dir[0] + dir[1] * dir[1]).sqrt();
        if dn <= 1e-12 {
            return None;
        }
        let pos = [lay[k][0] + rho * dir[0] / dn, lay[k][1] + rho * dir[1] / dn];
        let bary = bary_in(&lay, pos);
        if bary.iter().any(|&v| v < 1e-9) {
            return None;
        }
        *slot = ConePoint { tri: t, bary };
    }
    Some(out)
}

/// Samples small geodesic triangles and checks the comparison property on
/// each: every upper angle at most its comparison angle, and the upper
/// angle sum at most flat. Margins below `-1e-6` count as violations.
pub fn cat0_spot_check(
    cm: &ConeMetric,
    n_triangles: usize,
    max_side: f64,
    rng_seed: u64,
) -> Result<BoundReport, MetricError> {
    if n_triangles == 0 {
        return Err(MetricError::EmptyInput);
    }
    if !(max_side > 0.0) {
        return Err(MetricError::InvalidPoint(format!(
            "side bound {max_side} must be positive"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let interior: Vec<usize> = (0..cm.n_vertex_classes())
        .filter(|&v| !cm.class_is_boundary(v))
        .collect();
    let mut tally = MarginTally::new(CAT_TOL);
    for _ in 0..n_triangles {
        let mut found = None;
        'attempt: for _ in 0..SPOT_ATTEMPTS {
            let sampled = if !interior.is_empty() && rng.gen_bool(0.5) {
                fan_sample(cm, &interior, max_side, &mut rng)
            } else {
                patch_sample(cm, max_side, &mut rng)
            };
            let Some([p, q, r]) = sampled else {
                continue;
            };
            let mut d = [0.0f64; 3];
            for (slot, (x, y)) in d.iter_mut().zip([(q, r), (p, r), (p, q)]) {
                match cone_distance(cm, x, y, TRACE_HOPS) {
                    Ok(v) => *slot = v,
                    Err(_) => continue 'attempt,
                }
            }
            if d.iter()
                .any(|&v| !(v > 1e-3 * max_side && v <= max_side))
            {
                continue;
            }
            if comparison_triangle(d[0], d[1], d[2]).is_err() {
                continue;
            }
            found = Some((p, q, r, d));
            break;
        }
        let (p, q, r, d) =
            found.ok_or_else(|| MetricError::TraceFailed("spot-check sampler starved".into()))?;
        let comp = comparison_triangle(d[0], d[1], d[2])?;
        let upper = [
            upper_angle_estimate(cm, p, q, r, &DEFAULT_ANGLE_SCALES)?,
            upper_angle_estimate(cm, q, p, r, &DEFAULT_ANGLE_SCALES)?,
            upper_angle_estimate(cm, r, p, q, &DEFAULT_ANGLE_SCALES)?,
        ];
        for k in 0..3 {
            tally.add(comp[k] - upper[k]);
        }
        tally.add(PI - upper.iter().sum::<f64>());
    }
    Ok(tally.report("comparison angle spot check", Some(rng_seed)))
}

// ---------------------------------------------------------------------------
// Midpoint subdivision
// ---------------------------------------------------------------------------

/// Splits every triangle into four at its edge midpoints. The metric is
/// unchanged: corner children are half-scale copies and edge midpoints are
/// flat by construction.
pub fn midpoint_subdivide(cm: &ConeMetric) -> Result<ConeMetric, MetricError> {
    let n = cm.n_triangles();
    let mut tris = Vec::with_capacity(4 * n);
    for t in 0..n {
        let [l0, l1, l2] = cm.sides(t);
        let h = [l0 / 2.0, l1 / 2.0, l2 / 2.0];
        // child k keeps corner k; its other corners are the midpoints of
        // sides k and k+2
        for k in 0..3 {
            tris.push([h[k], h[(k + 1) % 3], h[(k + 2) % 3]]);
        }
        // central child on the three midpoints
        tris.push([h[2], h[0], h[1]]);
    }
    let mut gluing = Vec::with_capacity(3 * n + 2 * cm.gluing().len());
    for t in 0..n {
        let c = 4 * t + 3;
        gluing.push([c, 0, 4 * t + 1, 1]);
        gluing.push([c, 1, 4 * t + 2, 1]);
        gluing.push([c, 2, 4 * t, 1]);
    }
    for &[t1, e1, t2, e2] in cm.gluing() {
        gluing.push([4 * t1 + e1, 0, 4 * t2 + (e2 + 1) % 3, 2]);
        gluing.push([4 * t1 + (e1 + 1) % 3, 2, 4 * t2 + e2, 0]);
    }
    ConeMetric::new(tris, gluing)
}

// ---------------------------------------------------------------------------
// Flattening a geodesic triangulation
// ---------------------------------------------------------------------------

/// A triangulation drawn on a cone metric: each target triangle names its
/// three sides as chains of darts `(triangle, edge)`, each dart running
/// from corner `e` to corner `e+1`, and the target gluing identifies target
/// sides pairwise in the usual opposite orientation.
#[derive(Debug, Clone)]
pub struct TargetTriangulation {
    pub sides: Vec<[Vec<(usize, usize)>; 3]>,
    pub gluing: Vec<[usize; 4]>,
}

impl TargetTriangulation {
    /// The tautological target: every triangle of the metric, each side a
    /// single dart.
    pub fn identity(cm: &ConeMetric) -> Self {
        TargetTriangulation {
            sides: (0..cm.n_triangles())
                .map(|t| [vec![(t, 0)], vec![(t, 1)], vec![(t, 2)]])
                .collect(),
            gluing: cm.gluing().to_vec(),
        }
    }
}

fn edge_eq(cm: &ConeMetric, x: (usize, usize), y: (usize, usize)) -> bool {
    x == y || cm.partner(x.0, x.1) == Some(y)
}

/// Angle sums on the two sides of a chain junction: the corners swept from
/// the outgoing dart to the incoming one around their shared vertex, going
/// one way and then the other. A straight passage has `pi` on both sides.
fn junction_side_sums(
    cm: &ConeMetric,
    incoming: (usize, usize),
    outgoing: (usize, usize),
) -> Result<(f64, f64), MetricError> {
    let cap = 3 * cm.n_triangles() + 1;
    let mut sum_a = 0.0;
    let mut cur = outgoing;
    let mut closed = false;
    for _ in 0..cap {
        sum_a += cm.corner_angle(cur.0, cur.1);
        let cross = (cur.0, (cur.1 + 2) % 3);
        if edge_eq(cm, cross, incoming) {
            closed = true;
            break;
        }
        let Some((t2, e2)) = cm.partner(cross.0, cross.1) else {
            return Err(MetricError::NonGeodesicEdge(
                "chain junction runs into the boundary".into(),
            ));
        };
        cur = (t2, e2);
    }
    if !closed {
        return Err(MetricError::NonGeodesicEdge(
            "chain junction does not close around its vertex".into(),
        ));
    }
    let mut sum_b = 0.0;
    let mut cur = outgoing;
    closed = false;
    for _ in 0..cap {
        if edge_eq(cm, cur, incoming) {
            closed = true;
            break;
        }
        let Some((t2, e2)) = cm.partner(cur.0, cur.1) else {
            return Err(MetricError::NonGeodesicEdge(
                "chain junction runs into the boundary".into(),
            ));
        };
        cur = (t2, (e2 + 1) % 3);
        sum_b += cm.corner_angle(cur.0, cur.1);
    }
    if !closed {
        return Err(MetricError::NonGeodesicEdge(
            "chain junction does not close around its vertex".into(),
        ));
    }
    Ok((sum_a, sum_b))
}

/// Replaces each geodesic triangle of the target triangulation by its
/// Euclidean comparison triangle, glued the same way. Every target side
/// must be a geodesic chain (flat, balanced junctions), and every cone
/// point of the input must appear among the target corners, so that the
/// output is again a cone metric and stays non-positively curved.
pub fn az_flatten(
    cm: &ConeMetric,
    target: &TargetTriangulation,
) -> Result<ConeMetric, MetricError> {
    if target.sides.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let nt = target.sides.len();
    let mut lengths = vec![[0.0f64; 3]; nt];
    let mut corner_class = vec![[0usize; 3]; nt];
    let mut end_class = vec![[0usize; 3]; nt];
    for (ti, chains) in target.sides.iter().enumerate() {
        for k in 0..3 {
            let chain = &chains[k];
            if chain.is_empty() {
                return Err(MetricError::NonGeodesicEdge("empty edge chain".into()));
            }
            let mut len = 0.0;
            for (j, &(t, e)) in chain.iter().enumerate() {
                if t >= cm.n_triangles() || e >= 3 {
                    return Err(MetricError::InvalidPoint(format!(
                        "dart ({t}, {e}) out of range"
                    )));
                }
                len += cm.side(t, e);
                if j > 0 {
                    let prev = chain[j - 1];
                    if cm.vertex_class(t, e) != cm.vertex_class(prev.0, (prev.1 + 1) % 3) {
                        return Err(MetricError::NonGeodesicEdge(
                            "consecutive darts do not share a vertex".into(),
                        ));
                    }
                    let (sa, sb) = junction_side_sums(cm, prev, (t, e))?;
                    if (sa - PI).abs() > FLAT_JUNCTION_TOL || (sb - PI).abs() > FLAT_JUNCTION_TOL {
                        return Err(MetricError::NonGeodesicEdge(format!(
                            "chain bends at an interior vertex (side angles {sa}, {sb})"
                        )));
                    }
                }
            }
            lengths[ti][k] = len;
            corner_class[ti][k] = cm.vertex_class(chain[0].0, chain[0].1);
            let last = chain[chain.len() - 1];
            end_class[ti][k] = cm.vertex_class(last.0, (last.1 + 1) % 3);
        }
        for k in 0..3 {
            if end_class[ti][k] != corner_class[ti][(k + 1) % 3] {
                return Err(MetricError::NonGeodesicEdge(
                    "edge chains do not close around the target triangle".into(),
                ));
            }
        }
    }
    let used: HashSet<usize> = corner_class.iter().flatten().copied().collect();
    for v in 0..cm.n_vertex_classes() {
        if !cm.class_is_boundary(v) && cm.cone_angle(v) > TAU + NPC_ANGLE_TOL && !used.contains(&v)
        {
            return Err(MetricError::NonGeodesicEdge(format!(
                "cone point of angle {} is not a target vertex",
                cm.cone_angle(v)
            )));
        }
    }
    for &[t1, e1, t2, e2] in &target.gluing {
        if t1 >= nt || t2 >= nt || e1 >= 3 || e2 >= 3 {
            return Err(MetricError::InvalidConeMetric(format!(
                "target gluing [{t1}, {e1}, {t2}, {e2}] out of range"
            )));
        }
        let (l1, l2) = (lengths[t1][e1], lengths[t2][e2]);
        if (l1 - l2).abs() > GLUE_CANON_TOL * l1.max(1.0) {
            return Err(MetricError::NonGeodesicEdge(format!(
                "glued target sides trace different lengths {l1} and {l2}"
            )));
        }
        // snap the identified pair to one stored length
        let keep = if (t1, e1) <= (t2, e2) { l1 } else { l2 };
        lengths[t1][e1] = keep;
        lengths[t2][e2] = keep;
        if corner_class[t1][e1] != corner_class[t2][(e2 + 1) % 3]
            || corner_class[t1][(e1 + 1) % 3] != corner_class[t2][e2]
        {
            return Err(MetricError::NonGeodesicEdge(
                "glued target corners sit at different vertices".into(),
            ));
        }
    }
    let out = ConeMetric::new(lengths, target.gluing.clone())?;
    out.audit_nonpositive()?;
    Ok(out)
}

// ---------------------------------------------------------------------------
// The quotient cone metric induced by an orbit hull
// ---------------------------------------------------------------------------

/// Chord length of a hull edge; hull edges are spacelike, so the Minkowski
/// norm is a genuine length.
fn chord(a: LorentzVec, b: LorentzVec) -> Result<f64, MetricError> {
    let q = (b - a).mink_norm2();
    if q <= 0.0 {
        return Err(MetricError::InvalidConeMetric(
            "face edge is not spacelike".into(),
        ));
    }
    Ok(q.sqrt())
}

fn banded_lex(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        if (x - y).abs() > LEX_BAND {
            return x.partial_cmp(y).unwrap_or(Ordering::Equal);
        }
    }
    Ordering::Equal
}

fn allclose(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

/// Flattens a vertex cycle starting at the rotation that is banded-lex
/// smallest, so congruent copies of a face produce matching keys.
fn canonical_rotation(coords: &[LorentzVec]) -> Vec<f64> {
    let n = coords.len();
    let flat = |r: usize| {
        let mut key = Vec::with_capacity(3 * n);
        for i in 0..n {
            let v = coords[(r + i) % n];
            key.extend_from_slice(&[v.x1, v.x2, v.x3]);
        }
        key
    };
    let mut best = flat(0);
    for r in 1..n {
        let cand = flat(r);
        if banded_lex(&cand, &best) == Ordering::Less {
            best = cand;
        }
    }
    best
}

/// Greedy walk into the fundamental domain: composes wall neighbors while
/// the orbit point's height strictly drops. The returned isometry maps `x`
/// to its domain representative.
fn reduce_to_domain(
    x: HyperboloidPoint,
    neighbors: &[Isometry],
) -> Result<Isometry, MetricError> {
    let mut iso = Isometry::identity();
    let mut cur = x;
    for _ in 0..REDUCE_MAX_STEPS {
        let h0 = cur.as_vec().x3;
        let mut best: Option<(f64, usize)> = None;
        for (i, g) in neighbors.iter().enumerate() {
            let h = g.apply_hyp(cur).as_vec().x3;
            if best.map_or(true, |(bh, _)| h < bh) {
                best = Some((h, i));
            }
        }
        match best {
            Some((h, i)) if h < h0 * (1.0 - REDUCE_STEP_TOL) => {
                iso = neighbors[i].compose(&iso);
                cur = neighbors[i].apply_hyp(cur);
            }
            _ => return Ok(iso),
        }
    }
    Err(MetricError::InvalidConeMetric(
        "fundamental-domain reduction did not settle".into(),
    ))
}

/// The quotient surface of an orbit hull as a cone metric: one face per
/// orbit class, fan-triangulated, with the class representatives and the
/// hull vertex ids behind each cone-metric triangle.
#[derive(Debug, Clone)]
pub struct InducedConeMetric {
    pub metric: ConeMetric,
    /// Hull face index of each orbit class's kept representative.
    pub representatives: Vec<usize>,
    /// Per cone-metric triangle: its face class and the hull vertex ids at
    /// its three corners.
    pub corners: Vec<(usize, [usize; 3])>,
}

fn fan_slot(base: usize, n: usize, k: usize) -> (usize, usize) {
    if k == 0 {
        (base, 0)
    } else if k == n - 1 {
        (base + n - 3, 2)
    } else {
        (base + k - 1, 1)
    }
}

struct RepFan {
    cycle: Vec<usize>,
    base: usize,
}

/// Builds the quotient cone metric of a hull: groups faces into orbit
/// classes by canonical position, fan-triangulates one representative per
/// class from its lowest vertex id, and glues fan boundary edges by
/// matching each neighbor face's image on its own representative.
pub fn induced_cone_metric(hc: &HullComplex) -> Result<InducedConeMetric, MetricError> {
    let group = hc.group();
    let neighbors: Vec<Isometry> = group
        .dirichlet_neighbors()?
        .into_iter()
        .map(|(_, g)| g)
        .collect();
    let mut vertex_red: Vec<Option<Isometry>> = vec![None; hc.vertices.len()];
    let mut keys: Vec<Vec<f64>> = Vec::new();
    let mut face_class = Vec::with_capacity(hc.faces.len());
    let mut face_red = Vec::with_capacity(hc.faces.len());
    for face in &hc.faces {
        let coords: Vec<LorentzVec> = face.cycle.iter().map(|&v| hc.vertices[v]).collect();
        let mut best: Option<(Vec<f64>, Isometry)> = None;
        for &v in &face.cycle {
            if vertex_red[v].is_none() {
                let dir = hc.vertices[v].radial_project()?;
                vertex_red[v] = Some(reduce_to_domain(dir, &neighbors)?);
            }
            let red = vertex_red[v].expect("reduction just stored");
            let moved: Vec<LorentzVec> = coords.iter().map(|&c| red.apply(c)).collect();
            let key = canonical_rotation(&moved);
            if best
                .as_ref()
                .map_or(true, |(bk, _)| banded_lex(&key, bk) == Ordering::Less)
            {
                best = Some((key, red));
            }
        }
        let (key, red) = best.expect("faces have vertices");
        let cid = keys
            .iter()
            .position(|k| allclose(k, &key, FACE_CLASS_TOL))
            .unwrap_or_else(|| {
                keys.push(key.clone());
                keys.len() - 1
            });
        face_class.push(cid);
        face_red.push(red);
    }

    // keep the most central face of each class
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); keys.len()];
    let mut reps: Vec<usize> = vec![usize::MAX; keys.len()];
    let mut rep_score = vec![f64::INFINITY; keys.len()];
    for (f, face) in hc.faces.iter().enumerate() {
        let c = face_class[f];
        members[c].push(f);
        let mut score = 0.0f64;
        for &v in &face.cycle {
            let w = hc.vertices[v];
            score = score.max(w.x3 / w.timelike_radius()?);
        }
        if score < rep_score[c] {
            rep_score[c] = score;
            reps[c] = f;
        }
    }
    let representatives = reps;
    // the two reductions send a face and its class rep onto the same
    // canonical position, so their quotient carries the face onto the rep
    let to_rep: Vec<Isometry> = (0..hc.faces.len())
        .map(|f| {
            face_red[representatives[face_class[f]]]
                .inverse()
                .compose(&face_red[f])
        })
        .collect();

    let mut tris: Vec<[f64; 3]> = Vec::new();
    let mut corners = Vec::new();
    let mut fans: Vec<RepFan> = Vec::new();
    for (c, &rf) in representatives.iter().enumerate() {
        let face = &hc.faces[rf];
        let n = face.cycle.len();
        let off = (0..n)
            .min_by_key(|&i| face.cycle[i])
            .expect("nonempty cycle");
        let cycle: Vec<usize> = (0..n).map(|i| face.cycle[(off + i) % n]).collect();
        let base = tris.len();
        for j in 1..n - 1 {
            let (a, b, d) = (cycle[0], cycle[j], cycle[j + 1]);
            tris.push([
                chord(hc.vertices[a], hc.vertices[b])?,
                chord(hc.vertices[b], hc.vertices[d])?,
                chord(hc.vertices[d], hc.vertices[a])?,
            ]);
            corners.push((c, [a, b, d]));
        }
        fans.push(RepFan { cycle, base });
    }

    // coordinates of every face carried onto its class representative
    let mapped: Vec<Vec<LorentzVec>> = hc
        .faces
        .iter()
        .enumerate()
        .map(|(f, face)| {
            face.cycle
                .iter()
                .map(|&v| to_rep[f].apply(hc.vertices[v]))
                .collect()
        })
        .collect();
    let close = |a: LorentzVec, b: LorentzVec| {
        allclose(&[a.x1, a.x2, a.x3], &[b.x1, b.x2, b.x3], FACE_CLASS_TOL)
    };

    let mut pair_map: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
    let mut fan_glue = Vec::new();
    for (c, fan) in fans.iter().enumerate() {
        let n = fan.cycle.len();
        for j in 1..n - 2 {
            fan_glue.push([fan.base + j - 1, 2, fan.base + j, 0]);
        }
        for k in 0..n {
            let (ta, ea) = fan_slot(fan.base, n, k);
            let pa = hc.vertices[fan.cycle[k]];
            let pb = hc.vertices[fan.cycle[(k + 1) % n]];
            // the representative may sit at the window edge, but some orbit
            // copy of the face exposes the neighbor across this edge
            let mut exposed: Option<(usize, usize)> = None;
            'copies: for &f in &members[c] {
                let cyc = &hc.faces[f].cycle;
                for i in 0..cyc.len() {
                    if close(mapped[f][i], pa)
                        && close(mapped[f][(i + 1) % cyc.len()], pb)
                        && hc.faces[f].neighbors[i].is_some()
                    {
                        exposed = Some((f, i));
                        break 'copies;
                    }
                }
            }
            let (f, i) = exposed.ok_or_else(|| {
                MetricError::InvalidConeMetric(
                    "no orbit copy exposes the neighbor across a face edge".into(),
                )
            })?;
            let nb_face = hc.faces[f].neighbors[i].expect("neighbor just checked");
            let red = to_rep[nb_face];
            let c2 = face_class[nb_face];
            let fan2 = &fans[c2];
            let cyc = &hc.faces[f].cycle;
            let qa = red.apply(hc.vertices[cyc[i]]);
            let qb = red.apply(hc.vertices[cyc[(i + 1) % cyc.len()]]);
            let n2 = fan2.cycle.len();
            let mut k2 = None;
            for j in 0..n2 {
                let ra = hc.vertices[fan2.cycle[j]];
                let rb = hc.vertices[fan2.cycle[(j + 1) % n2]];
                if close(ra, qb) && close(rb, qa) {
                    k2 = Some(j);
                    break;
                }
            }
            let k2 = k2.ok_or_else(|| {
                MetricError::InvalidConeMetric(
                    "edge image missing from its class representative".into(),
                )
            })?;
            let (tb, eb) = fan_slot(fan2.base, n2, k2);
            if (ta, ea) == (tb, eb) {
                return Err(MetricError::InvalidConeMetric(
                    "edge identified with itself".into(),
                ));
            }
            match pair_map.get(&(ta, ea)) {
                None => {
                    if let Some(&back) = pair_map.get(&(tb, eb)) {
                        if back != (ta, ea) {
                            return Err(MetricError::InvalidConeMetric(
                                "inconsistent edge pairing".into(),
                            ));
                        }
                    }
                    pair_map.insert((ta, ea), (tb, eb));
                    pair_map.insert((tb, eb), (ta, ea));
                }
                Some(&fwd) if fwd == (tb, eb) => {}
                Some(_) => {
                    return Err(MetricError::InvalidConeMetric(
                        "inconsistent edge pairing".into(),
                    ));
                }
            }
        }
    }
    let mut pairs: Vec<((usize, usize), (usize, usize))> = pair_map
        .iter()
        .filter(|(a, b)| a < b)
        .map(|(&a, &b)| (a, b))
        .collect();
    pairs.sort_unstable();
    let mut gluing = fan_glue;
    for (a, b) in pairs {
        let (la, lb) = (tris[a.0][a.1], tris[b.0][b.1]);
        if (la - lb).abs() > GLUE_CANON_TOL * la.max(1.0) {
            return Err(MetricError::InvalidConeMetric(format!(
                "identified edges with lengths {la} and {lb}"
            )));
        }
        // snap the pair to one stored length: orbit copies agree only up to
        // group closure noise, the gluing audit demands exact equality
        tris[b.0][b.1] = la;
        gluing.push([a.0, a.1, b.0, b.1]);
    }

    let metric = ConeMetric::new(tris, gluing)?;
    if !metric.is_closed() {
        return Err(MetricError::InvalidConeMetric(
            "quotient surface has boundary".into(),
        ));
    }
    metric.audit_nonpositive()?;
    let chi = metric.euler_characteristic();
    let expected = 2 - 2 * group.genus() as i64;
    if chi != expected {
        return Err(MetricError::InvalidConeMetric(format!(
            "Euler characteristic {chi}, expected {expected}"
        )));
    }
    Ok(InducedConeMetric {
        metric,
        representatives,
        corners,
    })
}

// ---------------------------------------------------------------------------
// Refinement ladder: hull metrics against the smooth limit
// ---------------------------------------------------------------------------

/// Configuration of a refinement run: hulls of increasing seed density,
/// all sampled at the same points and compared uniformly against the
/// scaled smooth quotient metric.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceLadder {
    pub scale: f64,
    pub densities: Vec<usize>,
    pub n_points: usize,
    pub segments: usize,
    pub word_cap: usize,
    pub domain_radius: f64,
    pub sample_radius: f64,
    pub rng_seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LadderStep {
    pub density: usize,
    pub faces: usize,
    pub gap_to_reference: f64,
    pub gap_to_previous: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub steps: Vec<LadderStep>,
    pub reference_max: f64,
    pub final_gap: f64,
    pub monotone_to_reference: bool,
    pub cauchy: bool,
}

fn seed_cloud(group: &FuchsianGroup, scale: f64, n: usize, rng_seed: u64) -> Vec<LorentzVec> {
    let cosh_max = group.covering_radius().cosh();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    (0..n)
        .map(|_| {
            let r = (1.0 + rng.gen::<f64>() * (cosh_max - 1.0)).acosh();
            let theta = rng.gen::<f64>() * TAU;
            scale * HyperboloidPoint::from_polar(r, theta).as_vec()
        })
        .collect()
}

/// Runs the ladder: for each density, builds the orbit hull, samples its
/// quotient distances at fixed directions, and measures the uniform gap to
/// the scaled smooth quotient metric and to the previous rung.
pub fn convergence_experiment(ladder: &ConvergenceLadder) -> Result<ConvergenceReport, MetricError> {
    if ladder.densities.is_empty() || ladder.n_points < 2 {
        return Err(MetricError::EmptyInput);
    }
    let group = genus2_octagon_group();
    let mut rng = ChaCha8Rng::seed_from_u64(ladder.rng_seed);
    let dirs: Vec<HyperboloidPoint> = (0..ladder.n_points)
        .map(|_| {
            let r = ladder.sample_radius * rng.gen::<f64>().sqrt();
            let theta = rng.gen::<f64>() * TAU;
            HyperboloidPoint::from_polar(r, theta)
        })
        .collect();
    let n = dirs.len();
    let ids: Vec<String> = (0..n).map(|i| format!("p{i}")).collect();

    // smooth reference: quotient distances of the rescaled hyperboloid,
    // minimized over every element that could shorten a pair this close
    let elements = group.enumerate_elements(4.0 * ladder.sample_radius + 0.5)?;
    let mut ref_d = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let mut best = f64::INFINITY;
            for (_, g) in &elements {
                best = best.min(hyp_dist(dirs[i], g.apply_hyp(dirs[j]))?);
            }
            ref_d[(i, j)] = ladder.scale * best;
            ref_d[(j, i)] = ladder.scale * best;
        }
    }
    let reference = SampledMetric::new(ids.clone(), ref_d)?;

    let mut steps: Vec<LadderStep> = Vec::new();
    let mut previous: Option<SampledMetric> = None;
    let mut monotone = true;
    let mut cauchy = true;
    let mut final_gap = f64::NAN;
    for &density in &ladder.densities {
        // every rung draws from the same stream, so a coarser cloud is a
        // prefix of a denser one and refinement only ever adds vertices
        let seeds = seed_cloud(&group, ladder.scale, density, ladder.rng_seed.wrapping_add(1));
        let hull = fuchsian_hull(&group, &seeds, ladder.domain_radius)?;
        let graph = SurfaceGraph::new(&hull, ladder.segments)?;
        let pts: Vec<SurfacePoint> = dirs
            .iter()
            .map(|&d| surface_point_at(graph.radial(), d))
            .collect::<Result<_, _>>()?;
        let mut d = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let v = graph.quotient_taut_distance(&pts[i], &pts[j], ladder.word_cap)?;
                d[(i, j)] = v;
                d[(j, i)] = v;
            }
        }
        let sampled = SampledMetric::new(ids.clone(), d)?;
        let gap = uniform_distance(&sampled, &reference)?;
        let gap_prev = previous
            .as_ref()
            .map(|p| uniform_distance(&sampled, p))
            .transpose()?;
        if let Some(last) = steps.last() {
            if gap >= last.gap_to_reference {
                monotone = false;
            }
            if let (Some(cur), Some(prev)) = (gap_prev, last.gap_to_previous) {
                if cur > prev {
                    cauchy = false;
                }
            }
        }
        final_gap = gap;
        steps.push(LadderStep {
            density,
            faces: hull.faces.len(),
            gap_to_reference: gap,
            gap_to_previous: gap_prev,
        });
        previous = Some(sampled);
    }
    Ok(ConvergenceReport {
        steps,
        reference_max: reference.max_entry(),
        final_gap,
        monotone_to_reference: monotone,
        cauchy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testfix::{dense_hull, disk_sample, octagon_hull};
    use std::f64::consts::FRAC_PI_2;
    use std::sync::OnceLock;

    /// A unit square split along its diagonal: two flat triangles, one
    /// glued edge, everything else boundary.
    fn square_patch(scale: f64) -> ConeMetric {
        let s = scale;
        let d = std::f64::consts::SQRT_2 * scale;
        ConeMetric::new(vec![[s, s, d], [d, s, s]], vec![[0, 2, 1, 0]]).expect("square patch")
    }

    /// A wheel of `k` wedges of tip angle `phi` and spoke length `rad`:
    /// one interior vertex of cone angle `k * phi`, rim boundary.
    fn wheel(k: usize, phi: f64, rad: f64) -> ConeMetric {
        let chordlen = 2.0 * rad * (phi / 2.0).sin();
        let tris = vec![[rad, chordlen, rad]; k];
        let gluing: Vec<[usize; 4]> = (0..k).map(|j| [j, 2, (j + 1) % k, 0]).collect();
        ConeMetric::new(tris, gluing).expect("wheel")
    }

    fn spoke_point(tri: usize, rho: f64) -> ConePoint {
        ConePoint::new(tri, [1.0 - rho, rho, 0.0]).expect("spoke point")
    }

    fn octagon_quotient() -> &'static InducedConeMetric {
        static ICM: OnceLock<InducedConeMetric> = OnceLock::new();
        ICM.get_or_init(|| induced_cone_metric(octagon_hull()).expect("octagon quotient"))
    }

    #[test]
    fn sampled_metric_audit_flags_bad_matrices() {
        let ids = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let good = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 2.0, 1.0, 0.0, 1.5, 2.0, 1.5, 0.0]);
        assert!(SampledMetric::new(ids.clone(), good).is_ok());

        let asym = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 2.0, 1.1, 0.0, 1.5, 2.0, 1.5, 0.0]);
        assert!(matches!(
            SampledMetric::new(ids.clone(), asym),
            Err(MetricError::InvalidMetric(_))
        ));

        let broken = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 9.0, 1.0, 0.0, 1.5, 9.0, 1.5, 0.0]);
        assert!(matches!(
            SampledMetric::new(ids.clone(), broken),
            Err(MetricError::InvalidMetric(_))
        ));

        let diag = DMatrix::from_row_slice(3, 3, &[0.1, 1.0, 2.0, 1.0, 0.0, 1.5, 2.0, 1.5, 0.0]);
        assert!(SampledMetric::new(ids, diag).is_err());
    }

    #[test]
    fn uniform_distance_aligns_ids_and_scales() {
        let ids = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let d1 = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 2.0, 1.0, 0.0, 1.5, 2.0, 1.5, 0.0]);
        let m1 = SampledMetric::new(ids.clone(), d1.clone()).unwrap();
        let m2 = SampledMetric::new(ids.clone(), 1.25 * d1.clone()).unwrap();
        let gap = uniform_distance(&m1, &m2).unwrap();
        assert!((gap - 0.5).abs() <= 1e-15, "gap {gap}");
        assert_eq!(uniform_distance(&m1, &m1).unwrap(), 0.0);

        // same space with rows permuted: alignment is by id, so the gap
        // against the scaled copy is unchanged
        let perm_ids = vec!["c".to_string(), "a".to_string(), "b".to_string()];
        let dp = DMatrix::from_row_slice(
            3,
            3,
            &[0.0, 2.5, 1.875, 2.5, 0.0, 1.25, 1.875, 1.25, 0.0],
        );
        let mp = SampledMetric::new(perm_ids, dp).unwrap();
        let gap_p = uniform_distance(&m1, &mp).unwrap();
        assert!((gap_p - 0.5).abs() <= 1e-15, "permuted gap {gap_p}");

        let other = SampledMetric::new(
            vec!["a".to_string(), "b".to_string(), "x".to_string()],
            d1.clone(),
        )
        .unwrap();
        assert!(matches!(
            uniform_distance(&m1, &other),
            Err(MetricError::IdMismatch)
        ));

        let sup = sup_metric(&[m1.clone(), m2]).unwrap();
        assert!((sup.value(0, 2) - 2.5).abs() <= 1e-15);
        assert!(sup_metric(&[]).is_err());
        let self_sup = sup_metric(&[m1.clone(), m1.clone()]).unwrap();
        assert_eq!(uniform_distance(&self_sup, &m1).unwrap(), 0.0);
    }

    #[test]
    fn csv_round_trip_keeps_twelve_digits() {
        let ids = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let d = DMatrix::from_row_slice(
            3,
            3,
            &[
                0.0,
                1.2345678901234567,
                2.7182818284590452,
                1.2345678901234567,
                0.0,
                1.6180339887498949,
                2.7182818284590452,
                1.6180339887498949,
                0.0,
            ],
        );
        let m = SampledMetric::new(ids, d).unwrap();
        let text = m.to_csv();
        let back = SampledMetric::from_csv(&text).unwrap();
        assert_eq!(back.ids(), m.ids());
        for i in 0..3 {
            for j in 0..3 {
                let (x, y) = (m.value(i, j), back.value(i, j));
                assert!((x - y).abs() <= 1e-10 * (1.0 + x.abs()), "({i},{j}): {x} vs {y}");
            }
        }
        assert!(SampledMetric::from_csv("nope\n").is_err());
    }

    #[test]
    fn comparison_triangle_matches_reference_angles() {
        let eq = comparison_triangle(1.0, 1.0, 1.0).unwrap();
        for a in eq {
            assert!((a - PI / 3.0).abs() <= 1e-15, "equilateral angle {a}");
        }

        // right triangle with legs 3 and 4
        let right = comparison_triangle(3.0, 4.0, 5.0).unwrap();
        assert!((right[0] - 0.6435011087932844).abs() <= 1e-12);
        assert!((right[1] - 0.9272952180016122).abs() <= 1e-12);
        assert!((right[2] - FRAC_PI_2).abs() <= 1e-12);

        assert!(matches!(
            comparison_triangle(1.0, 1.0, 2.0 - 1e-15),
            Err(MetricError::DegenerateTriangle { .. })
        ));
        assert!(comparison_triangle(1.0, 2.0, 3.2).is_err());
        assert!(comparison_triangle(0.0, 1.0, 1.0).is_err());

        let excess = TriangleExcess::from_sides(3.0, 4.0, 5.0).unwrap();
        assert!(excess.excess.abs() <= 1e-12, "flat excess {}", excess.excess);
    }

    #[test]
    fn comparison_triangle_angle_sums_stay_flat() {
        let mut rng = ChaCha8Rng::seed_from_u64(1301);
        for _ in 0..1000 {
            let a = 10f64.powf(rng.gen::<f64>() * 4.0 - 2.0);
            let b = 10f64.powf(rng.gen::<f64>() * 4.0 - 2.0);
            // third side inside the admissible interval
            let lo = (a - b).abs();
            let hi = a + b;
            let c = lo + (hi - lo) * (0.05 + 0.9 * rng.gen::<f64>());
            let Ok(angles) = comparison_triangle(a, b, c) else {
                continue;
            };
            let sum: f64 = angles.iter().sum();
            assert!(
                (sum - PI).abs() <= 1e-12,
                "angle sum off by {} for ({a}, {b}, {c})",
                sum - PI
            );
            // cross-check each angle against the law of cosines
            let cosgamma = (a * a + b * b - c * c) / (2.0 * a * b);
            if cosgamma.abs() < 0.999 {
                assert!((angles[2] - cosgamma.acos()).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn cone_metric_audits_structure_and_angles() {
        let w = wheel(10, PI / 4.0, 1.0);
        assert_eq!(w.n_triangles(), 10);
        let tip = w.vertex_class(0, 0);
        assert!(!w.class_is_boundary(tip));
        assert!((w.cone_angle(tip) - 2.5 * PI).abs() <= 1e-12);
        assert!(w.audit_nonpositive().is_ok());
        assert!(!w.is_closed());

        // a deficit wheel fails the full-turn audit
        let deficit = wheel(6, PI / 6.0, 1.0);
        let tip = deficit.vertex_class(0, 0);
        assert!((deficit.cone_angle(tip) - PI).abs() <= 1e-12);
        assert!(matches!(
            deficit.audit_nonpositive(),
            Err(MetricError::ConeAngleViolation { angle }) if (angle - PI).abs() <= 1e-9
        ));

        // structural rejections
        assert!(matches!(
            ConeMetric::new(vec![[1.0, 1.0, 1.0], [2.0, 2.0, 2.0]], vec![[0, 0, 1, 0]]),
            Err(MetricError::InvalidConeMetric(_))
        ));
        assert!(matches!(
            ConeMetric::new(
                vec![[1.0, 1.0, 1.0], [1.0, 1.0, 1.0]],
                vec![[0, 0, 1, 0], [0, 0, 1, 1]]
            ),
            Err(MetricError::InvalidConeMetric(_))
        ));
        assert!(ConeMetric::new(vec![[1.0, 1.0, 1.0]], vec![[0, 0, 0, 0]]).is_err());
        assert!(ConeMetric::new(vec![[1.0, 1.0, 2.0]], vec![]).is_err());

        // serialization round trip preserves the building data
        let text = w.to_json_string().unwrap();
        assert!(text.contains("\"triangles\""));
        assert!(text.contains("\"gluing\""));
        let back = ConeMetric::from_json_str(&text).unwrap();
        assert_eq!(back.n_triangles(), w.n_triangles());
        for t in 0..w.n_triangles() {
            assert_eq!(back.sides(t), w.sides(t));
        }
        assert!(ConeMetric::from_json_str(
            "{\"triangles\": [[1.0, 1.0, 1.0]], \"gluing\": [[0, 0, 7, 0]]}"
        )
        .is_err());
    }

    #[test]
    fn traces_cross_wedges_exactly() {
        let w = wheel(10, PI / 4.0, 1.0);
        let rho = 0.6;

        // three wedges apart: the unfolded angle is 3 pi / 4, below the
        // straightness threshold, so the geodesic is the developed chord
        let d03 = cone_distance(&w, spoke_point(0, rho), spoke_point(3, rho), TRACE_HOPS).unwrap();
        assert!((d03 - 1.1086554390135441).abs() <= 1e-12, "d03 {d03}");

        // five apart: both ways around give 5 pi / 4, past straight, so the
        // path bends at the tip and the length is two spokes
        let d05 = cone_distance(&w, spoke_point(0, rho), spoke_point(5, rho), TRACE_HOPS).unwrap();
        assert!((d05 - 1.2).abs() <= 1e-12, "d05 {d05}");

        // symmetry of the traced length
        let back = cone_distance(&w, spoke_point(3, rho), spoke_point(0, rho), TRACE_HOPS).unwrap();
        assert!((d03 - back).abs() <= 1e-12);

        // flat patch: distance across the diagonal is the plane distance
        let patch = square_patch(1.0);
        let p = ConePoint::new(0, [0.3, 0.5, 0.2]).unwrap();
        let q = ConePoint::new(1, [0.2, 0.2, 0.6]).unwrap();
        let d = cone_distance(&patch, p, q, TRACE_HOPS).unwrap();
        assert!((d - 0.7810249675906654).abs() <= 1e-12, "patch d {d}");
    }

    #[test]
    fn trace_points_parametrize_by_arclength() {
        let w = wheel(10, PI / 4.0, 1.0);
        let rho = 0.6;
        let a = spoke_point(0, rho);
        let b = spoke_point(3, rho);
        let trace = trace_geodesic(&w, a, b, TRACE_HOPS).unwrap();
        for frac in [0.0, 0.25, 0.5, 0.8, 1.0] {
            let s = frac * trace.length;
            let mid = trace.point_at(s).unwrap();
            let da = cone_distance(&w, a, mid, TRACE_HOPS).unwrap();
            let db = cone_distance(&w, mid, b, TRACE_HOPS).unwrap();
            assert!((da - s).abs() <= 1e-9, "arclength {s}: got {da}");
            assert!((da + db - trace.length).abs() <= 1e-9);
        }

        // a trace that bends at the tip still parametrizes exactly
        let c = spoke_point(5, rho);
        let bent = trace_geodesic(&w, a, c, TRACE_HOPS).unwrap();
        let mid = bent.point_at(0.5 * bent.length).unwrap();
        let da = cone_distance(&w, a, mid, TRACE_HOPS).unwrap();
        assert!((da - 0.6).abs() <= 1e-9, "bend midpoint at {da}");
        assert!(bent.point_at(2.0 * bent.length).is_err());
    }

    #[test]
    fn upper_angles_match_flat_geometry() {
        let patch = square_patch(1.0);
        // plane positions: p = (0.7, 0.2), q = (0.9, 0.3), r = (0.2, 0.8)
        let p = ConePoint::new(0, [0.3, 0.5, 0.2]).unwrap();
        let q = ConePoint::new(0, [0.1, 0.6, 0.3]).unwrap();
        let r = ConePoint::new(1, [0.2, 0.2, 0.6]).unwrap();
        let est = upper_angle_estimate(&patch, p, q, r, &DEFAULT_ANGLE_SCALES).unwrap();
        let u: [f64; 2] = [0.2, 0.1];
        let v: [f64; 2] = [-0.5, 0.6];
        let expected = ((u[0] * v[0] + u[1] * v[1])
            / ((u[0] * u[0] + u[1] * u[1]).sqrt() * (v[0] * v[0] + v[1] * v[1]).sqrt()))
        .acos();
        assert!((est - expected).abs() <= 1e-6, "est {est} vs {expected}");

        let zero = upper_angle_estimate(&patch, p, q, q, &DEFAULT_ANGLE_SCALES).unwrap();
        assert_eq!(zero, 0.0);
        assert!(upper_angle_estimate(&patch, p, q, r, &[]).is_err());
    }

    #[test]
    fn upper_angle_at_a_cone_tip_respects_comparison() {
        let w = wheel(10, PI / 4.0, 1.0);
        let tip = ConePoint::new(0, [1.0, 0.0, 0.0]).unwrap();
        let rho = 0.6;

        // wedge separation 3 pi / 4 below straight: the tip angle is the
        // developed angle and equals the comparison angle exactly
        let est = upper_angle_estimate(&w, tip, spoke_point(0, rho), spoke_point(3, rho),
            &DEFAULT_ANGLE_SCALES)
        .unwrap();
        assert!((est - 2.356194490192345).abs() <= 1e-9, "tip angle {est}");
        let d03 = cone_distance(&w, spoke_point(0, rho), spoke_point(3, rho), TRACE_HOPS).unwrap();
        let comp = comparison_triangle(d03, rho, rho).unwrap();
        assert!(est <= comp[0] + CAT_TOL, "est {est} vs comparison {}", comp[0]);

        // separation 5 pi / 4 past straight on both sides: the geodesics
        // leave the tip in opposite directions
        let est_pi = upper_angle_estimate(&w, tip, spoke_point(0, rho), spoke_point(5, rho),
            &DEFAULT_ANGLE_SCALES)
        .unwrap();
        assert!((est_pi - PI).abs() <= 1e-9, "straight tip angle {est_pi}");
    }

    #[test]
    fn spot_check_passes_on_flat_and_hull_surfaces() {
        let patch = square_patch(4.0);
        let report = cat0_spot_check(&patch, 15, 1.0, 2024).unwrap();
        assert_eq!(report.violations, 0, "flat patch worst {}", report.worst_margin);
        assert_eq!(report.samples, 60);

        // determinism under a fixed seed
        let again = cat0_spot_check(&patch, 15, 1.0, 2024).unwrap();
        assert_eq!(report.worst_margin, again.worst_margin);

        let octagon = &octagon_quotient().metric;
        let report = cat0_spot_check(octagon, 15, 1.4, 77).unwrap();
        assert_eq!(
            report.violations, 0,
            "octagon quotient worst {}",
            report.worst_margin
        );
    }

    #[test]
    fn spot_check_flags_a_deficit_cone() {
        // cone angle pi: a triangle of points around the tip measures
        // angles 2 pi / 3 while its comparison triangle is equilateral
        let deficit = wheel(6, PI / 6.0, 1.0);
        let rho = 0.3;
        let pts = [spoke_point(0, rho), spoke_point(2, rho), spoke_point(4, rho)];
        for (i, j) in [(0, 1), (1, 2), (2, 0)] {
            let d = cone_distance(&deficit, pts[i], pts[j], TRACE_HOPS).unwrap();
            assert!((d - 0.3).abs() <= 1e-12, "side {d}");
        }
        for (p, q, r) in [(0, 1, 2), (1, 0, 2), (2, 0, 1)] {
            let est = upper_angle_estimate(&deficit, pts[p], pts[q], pts[r],
                &DEFAULT_ANGLE_SCALES)
            .unwrap();
            assert!(
                (est - 2.0 * PI / 3.0).abs() <= 1e-9,
                "enclosing angle {est}"
            );
            // comparison angle pi / 3: the margin is a clear violation
            assert!(est - PI / 3.0 > 1.0);
        }
        let report = cat0_spot_check(&deficit, 25, 0.8, 4097).unwrap();
        assert!(report.violations > 0, "worst margin {}", report.worst_margin);
        assert!(report.worst_margin < -CAT_TOL);
    }

    #[test]
    fn octagon_hull_induces_the_one_vertex_quotient() {
        let icm = octagon_quotient();
        assert_eq!(icm.representatives.len(), 1, "one face class");
        let cm = &icm.metric;
        assert_eq!(cm.n_triangles(), 6);
        assert!(cm.is_closed());
        assert_eq!(cm.n_vertex_classes(), 1);
        assert_eq!(cm.euler_characteristic(), -2);
        assert!((cm.cone_angle(0) - 6.0 * PI).abs() <= 1e-9);
        assert!((cm.gauss_bonnet_sum() + 4.0 * PI).abs() <= GAUSS_BONNET_TOL);
        assert!(cm.audit_nonpositive().is_ok());

        // cross-check the quotient cone angle against the angle measured
        // directly on the hull around a lift of the vertex
        let hull = octagon_hull();
        let v = icm.corners[0].1[0];
        let on_hull = crate::intrinsic::cone_angle(hull, v).unwrap();
        assert!(
            (on_hull.total_angle - cm.cone_angle(0)).abs() <= 1e-9,
            "hull angle {} vs quotient {}",
            on_hull.total_angle,
            cm.cone_angle(0)
        );
    }

    #[test]
    fn cone_deficits_shrink_with_seed_density() {
        let group = genus2_octagon_group();
        // same stream as the dense fixture, so the coarse seeds are a
        // prefix subset and densifying only ever adds hull vertices
        let coarse_hull =
            fuchsian_hull(&group, &disk_sample(2.0, 120, 7001), 5.0).expect("coarse hull");
        let coarse = induced_cone_metric(&coarse_hull).unwrap();
        let dense = induced_cone_metric(dense_hull()).unwrap();
        for icm in [&coarse, &dense] {
            assert!(icm.metric.is_closed());
            assert_eq!(icm.metric.euler_characteristic(), -2);
            assert!(icm.metric.audit_nonpositive().is_ok());
        }
        let max_excess = |cm: &ConeMetric| {
            (0..cm.n_vertex_classes())
                .map(|v| cm.cone_angle(v) - TAU)
                .fold(0.0f64, f64::max)
        };
        // a single orbit concentrates all curvature at one vertex
        let single = max_excess(&octagon_quotient().metric);
        assert!((single - 4.0 * PI).abs() <= 1e-9);
        let (ce, de) = (max_excess(&coarse.metric), max_excess(&dense.metric));
        assert!(ce > 0.0 && de > 0.0);
        assert!(ce < single && de < single);
        assert!(
            de < ce,
            "densifying seeds did not spread curvature: {de} vs {ce}"
        );
    }

    #[test]
    fn flattening_its_own_triangulation_is_the_identity() {
        let cm = &octagon_quotient().metric;
        let target = TargetTriangulation::identity(cm);
        let out = az_flatten(cm, &target).unwrap();
        assert_eq!(out.n_triangles(), cm.n_triangles());
        for t in 0..cm.n_triangles() {
            assert_eq!(out.sides(t), cm.sides(t));
        }
        assert_eq!(out.gluing(), cm.gluing());
        assert_eq!(out.n_vertex_classes(), cm.n_vertex_classes());
    }

    #[test]
    fn flattening_a_subdivision_recovers_the_coarse_metric() {
        let cm = &octagon_quotient().metric;
        let sub = midpoint_subdivide(cm).unwrap();
        assert_eq!(sub.n_triangles(), 4 * cm.n_triangles());
        assert!(sub.audit_nonpositive().is_ok());
        assert_eq!(sub.euler_characteristic(), -2);

        // each coarse side is the chain of its two halves
        let sides: Vec<[Vec<(usize, usize)>; 3]> = (0..cm.n_triangles())
            .map(|t| {
                [0, 1, 2].map(|k| vec![(4 * t + k, 0), (4 * t + (k + 1) % 3, 2)])
            })
            .collect();
        let target = TargetTriangulation {
            sides,
            gluing: cm.gluing().to_vec(),
        };
        let out = az_flatten(&sub, &target).unwrap();
        assert_eq!(out.n_triangles(), cm.n_triangles());
        for t in 0..cm.n_triangles() {
            let (a, b) = (out.sides(t), cm.sides(t));
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() <= 1e-12, "side ({t}, {k})");
            }
        }
        assert_eq!(out.n_vertex_classes(), cm.n_vertex_classes());
        assert!((out.gauss_bonnet_sum() - cm.gauss_bonnet_sum()).abs() <= GAUSS_BONNET_TOL);

        // distances sampled on the subdivision match the coarse surface
        let centroid = [1.0 / 3.0; 3];
        let p_sub = ConePoint::new(3, centroid).unwrap();
        let q_sub = ConePoint::new(7, centroid).unwrap();
        let p = ConePoint::new(0, centroid).unwrap();
        let q = ConePoint::new(1, centroid).unwrap();
        let d_sub = cone_distance(&sub, p_sub, q_sub, TRACE_HOPS).unwrap();
        let d = cone_distance(&out, p, q, TRACE_HOPS).unwrap();
        assert!((d_sub - d).abs() <= 1e-9, "sub {d_sub} vs coarse {d}");
    }

    #[test]
    fn flattening_rejects_bent_chains_and_deficit_cones() {
        let cm = &octagon_quotient().metric;
        let sub = midpoint_subdivide(cm).unwrap();
        // corner 0 to midpoint 0 then a turn toward midpoint 1
        let bent = TargetTriangulation {
            sides: vec![[
                vec![(0, 0), (3, 0)],
                vec![(3, 1)],
                vec![(3, 2)],
            ]],
            gluing: vec![],
        };
        assert!(matches!(
            az_flatten(&sub, &bent),
            Err(MetricError::NonGeodesicEdge(_))
        ));

        // the double of a triangle is a sphere: positive curvature at all
        // three vertices, rejected by the output audit
        let pillow = ConeMetric::new(
            vec![[3.0, 4.0, 5.0], [5.0, 4.0, 3.0]],
            vec![[0, 0, 1, 2], [0, 1, 1, 1], [0, 2, 1, 0]],
        )
        .unwrap();
        assert!(pillow.is_closed());
        assert_eq!(pillow.euler_characteristic(), 2);
        let target = TargetTriangulation::identity(&pillow);
        assert!(matches!(
            az_flatten(&pillow, &target),
            Err(MetricError::ConeAngleViolation { .. })
        ));
    }

    #[test]
    fn quotient_distances_converge_up_the_ladder() {
        let ladder = ConvergenceLadder {
            scale: 2.0,
            densities: vec![120, 400],
            n_points: 4,
            segments: 3,
            word_cap: 12,
            domain_radius: 5.0,
            sample_radius: 0.25,
            rng_seed: 90210,
        };
        let report = convergence_experiment(&ladder).unwrap();
        assert_eq!(report.steps.len(), 2);
        assert!(report.steps[1].faces > report.steps[0].faces);
        assert!(
            report.monotone_to_reference,
            "gaps {:?}",
            report
                .steps
                .iter()
                .map(|s| s.gap_to_reference)
                .collect::<Vec<_>>()
        );
        assert!(report.steps[0].gap_to_previous.is_none());
        assert!(report.steps[1].gap_to_previous.is_some());
        assert!(report.final_gap < report.reference_max);
        assert!(report.cauchy);

        // configuration survives a serialization round trip
        let text = serde_json::to_string(&ladder).unwrap();
        let back: ConvergenceLadder = serde_json::from_str(&text).unwrap();
        assert_eq!(back.densities, ladder.densities);

        // a single rung is trivially monotone with no previous gap
        let single = ConvergenceLadder {
            densities: vec![120],
            ..ladder
        };
        let report = convergence_experiment(&single).unwrap();
        assert_eq!(report.steps.len(), 1);
        assert!(report.monotone_to_reference && report.cauchy);
        assert_eq!(report.final_gap, report.steps[0].gap_to_reference);
    }
}
