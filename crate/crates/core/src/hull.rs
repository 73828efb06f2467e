//! Future-convex polyhedral surfaces spanned by group orbits in Minkowski
//! 3-space.
//!
//! The surface is the boundary of the convex hull of the orbits of finitely
//! many future-timelike seed points under a cocompact hyperbolic isometry
//! group. The hull is computed in the projective chart
//! `(xi1, xi2, h) = (y1/y3, y2/y3, 1/y3)`, where future-convex boundaries
//! become upper Euclidean hulls and central planes become affine graphs, so a
//! standard Euclidean convex hull does all the combinatorial work. A face is
//! kept when its support-plane normal direction lies within `domain_radius`
//! of the axis point `(0,0,1)`; the orbit is enumerated out to a padded
//! window, and the truncation is certified by recomputing with a wider
//! window and demanding the identical kept-face set.

mod quickhull;

use crate::fuchsian::{FuchsianError, FuchsianGroup};
use crate::lorentz::{
    hyp_dist, mink_inner, HyperboloidPoint, LorentzError, LorentzVec,
};
use quickhull::{convex_hull_3d, HullTriangle, QuickhullError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use thiserror::Error;

/// Depth of the deterministic downward perturbation applied to the chart
/// height before the Euclidean hull: far above predicate round-off (~1e-16
/// on unit-box coordinates), far below any genuine corner gap.
const JITTER_SCALE: f64 = 1e-12;

/// Independent jitter draws attempted before a degenerate orbit cloud is
/// reported as an error.
const JITTER_SALTS: u64 = 8;

/// Minimum height component of a chart face normal for the face to count as
/// part of the future boundary. Genuine spacelike faces inside the kept
/// window stay orders of magnitude above this.
const UPWARD_MIN: f64 = 1e-7;

/// Two adjacent chart triangles are glued into one face when their unit
/// normals differ by less than this (cross-product norm). Coplanar splits
/// from triangulating a polygonal face agree to ~1e-12; genuinely distinct
/// neighbor faces differ by at least the mesh angle, ~1e-3 and up.
const MERGE_ANGLE: f64 = 1e-7;

/// Allowed residual of a merged face's vertices against its fitted plane.
const PLANAR_TOL: f64 = 1e-9;

/// Allowed slack for vertices on the past side of a face plane.
const CONVEXITY_TOL: f64 = 1e-9;

/// Relative accuracy to which the stored group matrices satisfy the surface
/// relations. Orbit points reached by different words for the same exact
/// isometry agree only to this times their magnitude, which sets the floor
/// for coplanarity and convexity residuals far from the axis.
const GROUP_CLOSURE_REL: f64 = 3e-11;

/// Vertex coordinates are quantized at this resolution to build the
/// face keys compared between the two truncation passes.
const KEY_QUANTUM: f64 = 1e9;

/// Relative window within which competing support faces count as tied
/// (lowest index wins).
const TIE_REL: f64 = 1e-12;

/// Hard cap on the orbit cloud fed to the Euclidean hull.
const POINT_CAP: usize = 2_000_000;

#[derive(Debug, Error)]
pub enum HullError {
    #[error("seed list is empty")]
    EmptySeeds,
    #[error("seed {0} is not future timelike")]
    SeedNotTimelike(usize),
    #[error("domain radius {given} is below the Dirichlet-domain diameter {needed}")]
    DomainRadiusTooSmall { given: f64, needed: f64 },
    #[error(
        "kept faces changed when the orbit window grew ({first} vs {second} faces); \
         the truncation is not certified"
    )]
    TruncationUnstable { first: usize, second: usize },
    #[error("face inside the domain has a non-timelike normal (norm^2 {norm2:.3e})")]
    NotSpacelikeFace { norm2: f64 },
    #[error("hull edge is not spacelike (norm^2 {norm2:.3e})")]
    EdgeNotSpacelike { norm2: f64 },
    #[error("merged face is not planar (residual {residual:.3e})")]
    FaceNotPlanar { residual: f64 },
    #[error("future-convexity violated (slack {slack:.3e})")]
    ConvexityViolation { slack: f64 },
    #[error("orbit cloud too large for hull construction ({0} points)")]
    OrbitTooLarge(usize),
    #[error("query direction is outside the kept surface region")]
    OutsideKeptRegion,
    #[error("planar section left the kept surface region")]
    SectionLeftDomain,
    #[error("internal hull invariant failed: {0}")]
    Internal(String),
    #[error(transparent)]
    Quickhull(#[from] QuickhullError),
    #[error(transparent)]
    Fuchsian(#[from] FuchsianError),
    #[error(transparent)]
    Lorentz(#[from] LorentzError),
}

/// Support plane `{ y : <y, eta> = c }` of a face, with `eta` the future unit
/// timelike normal (`<eta,eta> = -1`, `eta3 > 0`) and `c < 0`.
#[derive(Debug, Clone, Copy)]
pub struct FacePlane {
    pub eta: LorentzVec,
    pub c: f64,
}

impl FacePlane {
    /// Radial coordinate at which the ray through `x` meets the plane.
    pub fn radial_value(&self, x: HyperboloidPoint) -> f64 {
        self.c / mink_inner(x.as_vec(), self.eta)
    }
}

/// One polygonal face: support plane, counterclockwise vertex cycle (in the
/// projective chart seen from the future), and the neighbor face across each
/// cycle edge (`None` on the truncation rim).
#[derive(Debug, Clone)]
pub struct HullFace {
    pub plane: FacePlane,
    pub cycle: Vec<usize>,
    pub neighbors: Vec<Option<usize>>,
}

/// One edge of the kept surface with its incident faces and the hyperbolic
/// gap between their normal directions (0 would mean coplanar).
#[derive(Debug, Clone, Copy)]
pub struct HullEdge {
    pub ends: [usize; 2],
    pub left: usize,
    pub right: Option<usize>,
    pub normal_gap: Option<f64>,
}

/// The kept part of the orbit-hull boundary.
#[derive(Debug, Clone)]
pub struct HullComplex {
    pub vertices: Vec<LorentzVec>,
    pub faces: Vec<HullFace>,
    pub edges: Vec<HullEdge>,
    group: FuchsianGroup,
    pub seeds: Vec<LorentzVec>,
    pub domain_radius: f64,
}

/// Extremes of the radial function: `alpha` is exact (the radial function
/// attains its minimum at hull vertices), `beta` is a certified upper bound
/// (face tangency radii dominate every face's values), and the mesh scan
/// provides the matching attained witnesses.
#[derive(Debug, Clone, Copy)]
pub struct AlphaBeta {
    pub alpha: f64,
    pub beta: f64,
    pub mesh_min: f64,
    pub mesh_max: f64,
}

fn klein_chart(y: LorentzVec) -> [f64; 3] {
    [y.x1 / y.x3, y.x2 / y.x3, 1.0 / y.x3]
}

fn klein_dir(y: LorentzVec) -> [f64; 2] {
    [y.x1 / y.x3, y.x2 / y.x3]
}

fn unklein_dir(k: [f64; 2]) -> Result<HyperboloidPoint, LorentzError> {
    let s = (1.0 - k[0] * k[0] - k[1] * k[1]).max(1e-300).sqrt();
    HyperboloidPoint::new(LorentzVec { x1: k[0] / s, x2: k[1] / s, x3: 1.0 / s })
}

/// Deterministic per-point perturbation size in [0.5, 1), keyed on the
/// quantized original coordinates so reruns and window changes agree; the
/// salt switches to an independent draw when a previous draw corrupted the
/// hull state (salt zero reproduces the unsalted hash).
fn jitter_unit(y: LorentzVec, salt: u64) -> f64 {
    let q = |v: f64| (v * 1e9).round() as i64 as u64;
    let mut h = q(y.x1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    h ^= q(y.x2).wrapping_mul(0xBF58_476D_1CE4_E5B9).rotate_left(17);
    h ^= q(y.x3).wrapping_mul(0x94D0_49BB_1331_11EB).rotate_left(31);
    h ^= salt.wrapping_mul(0xD6E8_FEB8_6659_FD93);
    h ^= h >> 29;
    h = h.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    h ^= h >> 32;
    0.5 + 0.5 * ((h >> 11) as f64 / (1u64 << 53) as f64)
}

/// Distance from the axis point to the projection of a future-timelike `y`.
fn projection_radius(y: LorentzVec) -> Result<f64, LorentzError> {
    let r = y.timelike_radius()?;
    Ok((y.x3 / r).max(1.0).acosh())
}

/// Orbit window padding beyond the kept radius: three typical seed spacings
/// plus slack, clamped between 1.4 (face caps of a dense cloud are narrow)
/// and covering_radius + 0.5 (a single orbit's face caps have hyperbolic
/// radius arccosh of the tangency-to-vertex radius ratio, which is at most
/// the covering radius).
fn orbit_padding(group: &FuchsianGroup, n_seeds: usize) -> f64 {
    let spacing = (group.quotient_area() / n_seeds as f64).sqrt();
    (3.0 * spacing + 0.4)
        .max(1.4)
        .min(group.covering_radius() + 0.5)
}

struct OrbitCloud {
    points: Vec<LorentzVec>,
    chart: Vec<[f64; 3]>,
}

/// Orbit points of all seeds whose projections lie within `radius` of the
/// axis point, drawn from a precomputed element list.
fn collect_cloud(
    elements: &[(crate::fuchsian::GroupWord, crate::fuchsian::Isometry)],
    seeds: &[LorentzVec],
    radius: f64,
    salt: u64,
) -> Result<OrbitCloud, HullError> {
    let mut points = Vec::new();
    let mut chart = Vec::new();
    for (_, g) in elements {
        for &s in seeds {
            let y = g.apply(s);
            if projection_radius(y)? <= radius {
                if points.len() >= POINT_CAP {
                    return Err(HullError::OrbitTooLarge(points.len() + 1));
                }
                let mut k = klein_chart(y);
                k[2] -= jitter_unit(y, salt) * JITTER_SCALE * (1.0 + k[2].abs());
                points.push(y);
                chart.push(k);
            }
        }
    }
    Ok(OrbitCloud { points, chart })
}

struct PassFaces {
    /// cycles as indices into the pass cloud
    cycles: Vec<Vec<usize>>,
    planes: Vec<FacePlane>,
}

/// Euclidean hull of the chart cloud, upward faces merged into maximal
/// coplanar polygons, refit in Minkowski coordinates, filtered to the kept
/// window.
fn build_pass(cloud: &OrbitCloud, domain_radius: f64) -> Result<PassFaces, HullError> {
    let tris = convex_hull_3d(&cloud.chart)?;
    let upward: Vec<&HullTriangle> =
        tris.iter().filter(|t| t.normal[2] > UPWARD_MIN).collect();
    if upward.is_empty() {
        return Err(HullError::Internal("no upward hull faces".into()));
    }

    // adjacency among upward triangles through shared directed edges
    let mut owner: HashMap<(usize, usize), usize> = HashMap::new();
    for (i, t) in upward.iter().enumerate() {
        for k in 0..3 {
            owner.insert((t.v[k], t.v[(k + 1) % 3]), i);
        }
    }
    let mut dsu: Vec<usize> = (0..upward.len()).collect();
    fn find(dsu: &mut Vec<usize>, mut i: usize) -> usize {
        while dsu[i] != i {
            dsu[i] = dsu[dsu[i]];
            i = dsu[i];
        }
        i
    }
    for (i, t) in upward.iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (t.v[k], t.v[(k + 1) % 3]);
            if let Some(&j) = owner.get(&(b, a)) {
                let (ni, nj) = (t.normal, upward[j].normal);
                let cx = [
                    ni[1] * nj[2] - ni[2] * nj[1],
                    ni[2] * nj[0] - ni[0] * nj[2],
                    ni[0] * nj[1] - ni[1] * nj[0],
                ];
                let cross = (cx[0] * cx[0] + cx[1] * cx[1] + cx[2] * cx[2]).sqrt();
                if cross < MERGE_ANGLE {
                    let (ri, rj) = (find(&mut dsu, i), find(&mut dsu, j));
                    dsu[ri] = rj;
                }
            }
        }
    }
    let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
    for i in 0..upward.len() {
        let r = find(&mut dsu, i);
        groups.entry(r).or_default().push(i);
    }
    let mut components: Vec<Vec<usize>> = groups.into_values().collect();
    components.sort_by_key(|c| c.iter().copied().min());
    let cosh_keep = domain_radius.cosh();
    let mut cycles = Vec::new();
    let mut planes = Vec::new();
    for tri_ids in components {
        let in_comp = |edge: (usize, usize)| -> bool {
            owner
                .get(&edge)
                .is_some_and(|&j| tri_ids.contains(&j))
        };
        // boundary = directed edges whose reverse is not in the component
        let mut succ: HashMap<usize, usize> = HashMap::new();
        for &i in &tri_ids {
            let t = upward[i];
            for k in 0..3 {
                let (a, b) = (t.v[k], t.v[(k + 1) % 3]);
                if !in_comp((b, a)) && succ.insert(a, b).is_some() {
                    return Err(HullError::Internal("merged face is not a disk".into()));
                }
            }
        }
        let start = *succ
            .keys()
            .min()
            .ok_or_else(|| HullError::Internal("empty face boundary".into()))?;
        let mut cycle = vec![start];
        let mut at = succ[&start];
        while at != start {
            cycle.push(at);
            at = *succ
                .get(&at)
                .ok_or_else(|| HullError::Internal("open face boundary".into()))?;
            if cycle.len() > succ.len() {
                return Err(HullError::Internal("face boundary does not close".into()));
            }
        }
        if cycle.len() != succ.len() {
            return Err(HullError::Internal("face boundary splits".into()));
        }

        // plane refit from the unperturbed Minkowski coordinates: the
        // Euclidean area normal of the polygon, flipped into Minkowski form;
        // computed about the centroid, where the cross terms are face-sized
        // instead of radius-squared and do not cancel catastrophically
        let inv = 1.0 / cycle.len() as f64;
        let mut m = [0.0f64; 3];
        for &v in &cycle {
            let p = cloud.points[v];
            m[0] += p.x1 * inv;
            m[1] += p.x2 * inv;
            m[2] += p.x3 * inv;
        }
        let mut n = [0.0f64; 3];
        for i in 0..cycle.len() {
            let p = cloud.points[cycle[i]];
            let q = cloud.points[cycle[(i + 1) % cycle.len()]];
            let a = [p.x1 - m[0], p.x2 - m[1], p.x3 - m[2]];
            let b = [q.x1 - m[0], q.x2 - m[1], q.x3 - m[2]];
            n[0] += a[1] * b[2] - a[2] * b[1];
            n[1] += a[2] * b[0] - a[0] * b[2];
            n[2] += a[0] * b[1] - a[1] * b[0];
        }
        let eta_raw = LorentzVec { x1: n[0], x2: n[1], x3: -n[2] };
        let m2 = eta_raw.mink_norm2();
        let e2 = n[0] * n[0] + n[1] * n[1] + n[2] * n[2];
        if m2 >= -1e-12 * e2 {
            // not a spacelike face: an artifact on the truncation rim is
            // dropped, anything fully inside the window is a real violation
            let mut inside = true;
            for &v in &cycle {
                if projection_radius(cloud.points[v])? > domain_radius - 0.05 {
                    inside = false;
                    break;
                }
            }
            if inside {
                return Err(HullError::NotSpacelikeFace { norm2: m2 / e2 });
            }
            continue;
        }
        let scale = (-m2).sqrt();
        let mut eta = LorentzVec {
            x1: eta_raw.x1 / scale,
            x2: eta_raw.x2 / scale,
            x3: eta_raw.x3 / scale,
        };
        let mean: f64 = cycle
            .iter()
            .map(|&v| mink_inner(cloud.points[v], eta))
            .sum::<f64>()
            / cycle.len() as f64;
        let mut c = mean;
        if c > 0.0 {
            eta = -eta;
            c = -c;
        }
        if eta.x3 <= 0.0 {
            return Err(HullError::Internal("face normal is past-directed".into()));
        }
        // distance from the axis point to the normal direction is
        // arccosh(eta3); faces outside the kept window are discarded before
        // any further validation
        if eta.x3 > cosh_keep {
            continue;
        }
        let residual = cycle
            .iter()
            .map(|&v| (mink_inner(cloud.points[v], eta) - c).abs())
            .fold(0.0f64, f64::max);
        let vmax = cycle
            .iter()
            .map(|&v| cloud.points[v].x3)
            .fold(0.0f64, f64::max);
        if residual > PLANAR_TOL.max(GROUP_CLOSURE_REL * vmax) {
            return Err(HullError::FaceNotPlanar { residual });
        }
        cycles.push(cycle);
        planes.push(FacePlane { eta, c });
    }
    Ok(PassFaces { cycles, planes })
}

/// Euclidean-hull pass over the chart cloud, retried with fresh jitter
/// salts when a draw leaves the degeneracy threshold astride a predicate
/// and corrupts the incremental hull state. The retry is deterministic
/// (salts are tried in order) and invisible to the truncation certificate,
/// which compares faces by their unjittered coordinates.
fn build_pass_salted(
    elements: &[(crate::fuchsian::GroupWord, crate::fuchsian::Isometry)],
    seeds: &[LorentzVec],
    radius: f64,
    domain_radius: f64,
) -> Result<(OrbitCloud, PassFaces), HullError> {
    let mut last = None;
    for salt in 0..JITTER_SALTS {
        let cloud = collect_cloud(elements, seeds, radius, salt)?;
        match build_pass(&cloud, domain_radius) {
            Ok(pass) => return Ok((cloud, pass)),
            Err(HullError::Quickhull(e)) => last = Some(HullError::Quickhull(e)),
            Err(e) => return Err(e),
        }
    }
    Err(last.unwrap_or_else(|| HullError::Internal("no jitter salt tried".into())))
}

/// Canonical comparison key for a face: the quantized vertex cycle rotated
/// to start at its lexicographic minimum.
fn face_key(cloud: &OrbitCloud, cycle: &[usize]) -> Vec<[i64; 3]> {
    let quant: Vec<[i64; 3]> = cycle
        .iter()
        .map(|&v| {
            let p = cloud.points[v];
            [
                (p.x1 * KEY_QUANTUM).round() as i64,
                (p.x2 * KEY_QUANTUM).round() as i64,
                (p.x3 * KEY_QUANTUM).round() as i64,
            ]
        })
        .collect();
    let pivot = (0..quant.len())
        .min_by_key(|&i| quant[i])
        .unwrap_or(0);
    let mut out = Vec::with_capacity(quant.len());
    for i in 0..quant.len() {
        out.push(quant[(pivot + i) % quant.len()]);
    }
    out
}

/// Boundary of the convex hull of the seeds' orbits, truncated to faces
/// whose normal directions lie within `domain_radius` of the axis point.
///
/// The truncation is certified by recomputing with a 50% wider orbit padding
/// and requiring the identical kept-face set; the orbit's element list is
/// enumerated once so both passes see bitwise-equal coordinates.
pub fn fuchsian_hull(
    group: &FuchsianGroup,
    seeds: &[LorentzVec],
    domain_radius: f64,
) -> Result<HullComplex, HullError> {
    if seeds.is_empty() {
        return Err(HullError::EmptySeeds);
    }
    let mut d_max = 0.0f64;
    for (i, &s) in seeds.iter().enumerate() {
        if !s.is_future_timelike() {
            return Err(HullError::SeedNotTimelike(i));
        }
        d_max = d_max.max(projection_radius(s)?);
    }
    let needed = 2.0 * group.covering_radius();
    if !(domain_radius >= needed) {
        return Err(HullError::DomainRadiusTooSmall { given: domain_radius, needed });
    }

    let pad = orbit_padding(group, seeds.len());
    let r1 = domain_radius + pad;
    let r2 = domain_radius + 1.5 * pad;
    let elements = group.enumerate_elements(r2 + d_max)?;

    let (cloud1, pass1) = build_pass_salted(&elements, seeds, r1, domain_radius)?;
    let (cloud2, pass2) = build_pass_salted(&elements, seeds, r2, domain_radius)?;

    let keys1: std::collections::HashSet<Vec<[i64; 3]>> = pass1
        .cycles
        .iter()
        .map(|c| face_key(&cloud1, c))
        .collect();
    let keys2: std::collections::HashSet<Vec<[i64; 3]>> = pass2
        .cycles
        .iter()
        .map(|c| face_key(&cloud2, c))
        .collect();
    if keys1 != keys2 {
        return Err(HullError::TruncationUnstable {
            first: keys1.len(),
            second: keys2.len(),
        });
    }

    assemble(cloud2, pass2, group, seeds, domain_radius)
}

fn assemble(
    cloud: OrbitCloud,
    pass: PassFaces,
    group: &FuchsianGroup,
    seeds: &[LorentzVec],
    domain_radius: f64,
) -> Result<HullComplex, HullError> {
    // compact vertex set in deterministic order
    let mut used: Vec<usize> = pass.cycles.iter().flatten().copied().collect();
    used.sort_unstable();
    used.dedup();
    let mut index: HashMap<usize, usize> = HashMap::with_capacity(used.len());
    for (new, &old) in used.iter().enumerate() {
        index.insert(old, new);
    }
    let vertices: Vec<LorentzVec> = used.iter().map(|&o| cloud.points[o]).collect();

    // deterministic face order: by quantized plane direction
    let mut order: Vec<usize> = (0..pass.cycles.len()).collect();
    order.sort_by_key(|&f| {
        let e = pass.planes[f].eta;
        [
            (e.x1 * KEY_QUANTUM).round() as i64,
            (e.x2 * KEY_QUANTUM).round() as i64,
            (e.x3 * KEY_QUANTUM).round() as i64,
        ]
    });

    let mut faces: Vec<HullFace> = Vec::with_capacity(order.len());
    for &f in &order {
        let cycle: Vec<usize> = pass.cycles[f].iter().map(|o| index[o]).collect();
        let n = cycle.len();
        faces.push(HullFace {
            plane: pass.planes[f],
            cycle,
            neighbors: vec![None; n],
        });
    }

    // edges and face adjacency
    let mut edge_map: HashMap<(usize, usize), Vec<(usize, usize)>> = HashMap::new();
    for (fi, face) in faces.iter().enumerate() {
        for k in 0..face.cycle.len() {
            let (a, b) = (face.cycle[k], face.cycle[(k + 1) % face.cycle.len()]);
            let key = (a.min(b), a.max(b));
            edge_map.entry(key).or_default().push((fi, k));
        }
    }
    let mut edge_keys: Vec<(usize, usize)> = edge_map.keys().copied().collect();
    edge_keys.sort_unstable();
    let mut edges = Vec::with_capacity(edge_keys.len());
    for key in edge_keys {
        let inc = &edge_map[&key];
        if inc.len() > 2 {
            return Err(HullError::Internal("edge with more than two faces".into()));
        }
        let w = vertices[key.1] - vertices[key.0];
        let n2 = w.mink_norm2();
        if n2 <= 0.0 {
            return Err(HullError::EdgeNotSpacelike { norm2: n2 });
        }
        let (f0, k0) = inc[0];
        let mut right = None;
        let mut gap = None;
        if inc.len() == 2 {
            let (f1, k1) = inc[1];
            right = Some(f1);
            let ip = -mink_inner(faces[f0].plane.eta, faces[f1].plane.eta);
            gap = Some(ip.max(1.0).acosh());
            faces[f0].neighbors[k0] = Some(f1);
            faces[f1].neighbors[k1] = Some(f0);
        }
        edges.push(HullEdge { ends: [key.0, key.1], left: f0, right, normal_gap: gap });
    }

    let hull = HullComplex {
        vertices,
        faces,
        edges,
        group: group.clone(),
        seeds: seeds.to_vec(),
        domain_radius,
    };
    hull.validate_convexity()?;
    Ok(hull)
}

impl HullComplex {
    pub fn group(&self) -> &FuchsianGroup {
        &self.group
    }

    /// Every vertex must lie on or future of every face plane. Checked in
    /// full against adjacent faces (the binding constraints) and against a
    /// seeded global sample.
    fn validate_convexity(&self) -> Result<(), HullError> {
        let check = |v: LorentzVec, plane: &FacePlane| -> Result<(), HullError> {
            let slack = plane.c - mink_inner(v, plane.eta);
            if slack < -CONVEXITY_TOL.max(GROUP_CLOSURE_REL * v.x3) {
                return Err(HullError::ConvexityViolation { slack });
            }
            Ok(())
        };
        for face in &self.faces {
            for (k, &nb) in face.neighbors.iter().enumerate() {
                let _ = k;
                if let Some(nb) = nb {
                    for &v in &self.faces[nb].cycle {
                        check(self.vertices[v], &face.plane)?;
                    }
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x4855_4C4C);
        let samples = 50_000.min(self.faces.len() * self.vertices.len());
        for _ in 0..samples {
            let f = rng.gen_range(0..self.faces.len());
            let v = rng.gen_range(0..self.vertices.len());
            check(self.vertices[v], &self.faces[f].plane)?;
        }
        Ok(())
    }

    /// Exact minimum vertex radius and maximum face tangency radius, the
    /// certified extremes of the radial function.
    pub fn radial_extremes(&self) -> Result<(f64, f64), HullError> {
        let alpha = self
            .vertices
            .iter()
            .map(|v| v.timelike_radius())
            .try_fold(f64::INFINITY, |acc, r| r.map(|r| acc.min(r)))?;
        let beta = self
            .faces
            .iter()
            .map(|f| f.plane.c.abs())
            .fold(0.0f64, f64::max);
        Ok((alpha, beta))
    }

    pub fn radial_fn(&self) -> HConvexFn<'_> {
        HConvexFn::new(self)
    }
}

struct FaceGrid {
    min: [f64; 2],
    cell: f64,
    nx: usize,
    ny: usize,
    bins: Vec<Vec<u32>>,
}

impl FaceGrid {
    fn build(polys: &[Vec<[f64; 2]>]) -> FaceGrid {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        let mut mean_dim = 0.0;
        for poly in polys {
            let mut plo = [f64::INFINITY; 2];
            let mut phi = [f64::NEG_INFINITY; 2];
            for p in poly {
                for k in 0..2 {
                    plo[k] = plo[k].min(p[k]);
                    phi[k] = phi[k].max(p[k]);
                    lo[k] = lo[k].min(p[k]);
                    hi[k] = hi[k].max(p[k]);
                }
            }
            mean_dim += (phi[0] - plo[0]) + (phi[1] - plo[1]);
        }
        mean_dim /= (2 * polys.len().max(1)) as f64;
        let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-6);
        let cell = mean_dim.max(extent / 512.0);
        let nx = ((hi[0] - lo[0]) / cell).ceil() as usize + 1;
        let ny = ((hi[1] - lo[1]) / cell).ceil() as usize + 1;
        let mut bins = vec![Vec::new(); nx * ny];
        for (fi, poly) in polys.iter().enumerate() {
            let mut plo = [f64::INFINITY; 2];
            let mut phi = [f64::NEG_INFINITY; 2];
            for p in poly {
                for k in 0..2 {
                    plo[k] = plo[k].min(p[k]);
                    phi[k] = phi[k].max(p[k]);
                }
            }
            let ix0 = (((plo[0] - lo[0]) / cell).floor() as isize).max(0) as usize;
            let iy0 = (((plo[1] - lo[1]) / cell).floor() as isize).max(0) as usize;
            let ix1 = (((phi[0] - lo[0]) / cell).floor() as usize).min(nx - 1);
            let iy1 = (((phi[1] - lo[1]) / cell).floor() as usize).min(ny - 1);
            for ix in ix0..=ix1 {
                for iy in iy0..=iy1 {
                    bins[iy * nx + ix].push(fi as u32);
                }
            }
        }
        FaceGrid { min: lo, cell, nx, ny, bins }
    }

    fn candidates(&self, k: [f64; 2]) -> &[u32] {
        let ix = ((k[0] - self.min[0]) / self.cell).floor();
        let iy = ((k[1] - self.min[1]) / self.cell).floor();
        if ix < 0.0 || iy < 0.0 || !ix.is_finite() || !iy.is_finite() {
            return &[];
        }
        let (ix, iy) = (ix as usize, iy as usize);
        if ix >= self.nx || iy >= self.ny {
            return &[];
        }
        &self.bins[iy * self.nx + ix]
    }
}

fn poly_contains(poly: &[[f64; 2]], p: [f64; 2]) -> bool {
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        let cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
        if cross < -1e-13 {
            return false;
        }
    }
    true
}

/// The radial function of the hull: `radial_function(x)` is the factor by
/// which the direction `x` must be scaled to reach the surface.
pub struct HConvexFn<'a> {
    hull: &'a HullComplex,
    polys: Vec<Vec<[f64; 2]>>,
    grid: FaceGrid,
}

impl<'a> HConvexFn<'a> {
    fn new(hull: &'a HullComplex) -> Self {
        let polys: Vec<Vec<[f64; 2]>> = hull
            .faces
            .iter()
            .map(|f| {
                f.cycle
                    .iter()
                    .map(|&v| klein_dir(hull.vertices[v]))
                    .collect()
            })
            .collect();
        let grid = FaceGrid::build(&polys);
        HConvexFn { hull, polys, grid }
    }

    pub fn hull(&self) -> &HullComplex {
        self.hull
    }

    /// Whether the direction `x` lies in the projected cell of a kept face,
    /// which certifies that `radial_function(x)` equals the value of the
    /// untruncated hull.
    pub fn is_covered(&self, x: HyperboloidPoint) -> bool {
        self.containing_face(x).is_some()
    }

    /// Index of the face whose projected cell contains `x`, if any.
    fn containing_face(&self, x: HyperboloidPoint) -> Option<usize> {
        let k = klein_dir(x.as_vec());
        self.grid
            .candidates(k)
            .iter()
            .map(|&f| f as usize)
            .find(|&f| poly_contains(&self.polys[f], k))
    }

    /// Support face and radial value at direction `x` (ties resolve to the
    /// lowest face index). Exact within the kept window: the maximizing face
    /// is the one whose projected cell contains `x`, so when a containing
    /// candidate exists the local maximum is global; otherwise all faces are
    /// scanned.
    pub fn support_face_at(&self, x: HyperboloidPoint) -> (usize, f64) {
        let k = klein_dir(x.as_vec());
        let candidates = self.grid.candidates(k);
        let mut contained = false;
        let mut best = f64::NEG_INFINITY;
        for &f in candidates {
            let f = f as usize;
            if poly_contains(&self.polys[f], k) {
                contained = true;
                best = best.max(self.hull.faces[f].plane.radial_value(x));
            }
        }
        let scan: Box<dyn Iterator<Item = usize>> = if contained {
            Box::new(candidates.iter().map(|&f| f as usize))
        } else {
            best = f64::NEG_INFINITY;
            for f in 0..self.hull.faces.len() {
                best = best.max(self.hull.faces[f].plane.radial_value(x));
            }
            Box::new(0..self.hull.faces.len())
        };
        for f in scan {
            let v = self.hull.faces[f].plane.radial_value(x);
            if v >= best * (1.0 - TIE_REL) {
                return (f, v);
            }
        }
        unreachable!("support maximum not re-attained");
    }

    pub fn radial_function(&self, x: HyperboloidPoint) -> f64 {
        self.support_face_at(x).1
    }

    /// The point where the ray through `x` meets the surface.
    pub fn surface_point(&self, x: HyperboloidPoint) -> LorentzVec {
        let u = self.radial_function(x);
        u * x.as_vec()
    }

    /// Degree -1 homogeneous extension: `radial_function` of the projected
    /// direction divided by the timelike radius.
    pub fn homogeneous_radial(&self, y: LorentzVec) -> Result<f64, HullError> {
        let r = y.timelike_radius()?;
        Ok(self.radial_function(y.radial_project()?) / r)
    }

    /// Exact minimum and certified maximum of the radial function, with
    /// attained witnesses from a mesh scan of the group's Dirichlet region.
    ///
    /// The radial function restricted to one face's cell is the tangency
    /// radius `|c|` divided by cosh of the distance to the tangency
    /// direction, so it is largest at tangency directions (bounded by
    /// `max |c|`) and smallest at cell corners (vertex radii, where the
    /// minimum is attained exactly).
    pub fn alpha_beta(&self, mesh: f64) -> Result<AlphaBeta, HullError> {
        let (alpha, beta) = self.hull.radial_extremes()?;

        let neighbors = self.hull.group.dirichlet_neighbors()?;
        let apex = HyperboloidPoint::apex();
        let r_max = self.hull.group.covering_radius();
        let mut mesh_min = f64::INFINITY;
        let mut mesh_max = f64::NEG_INFINITY;
        let mut consider = |x: HyperboloidPoint| -> Result<(), HullError> {
            for (_, g) in &neighbors {
                let moved = g.apply_hyp(x);
                if hyp_dist(x, apex)? > hyp_dist(moved, apex)? + 1e-12 {
                    return Ok(());
                }
            }
            let u = self.radial_function(x);
            mesh_min = mesh_min.min(u);
            mesh_max = mesh_max.max(u);
            Ok(())
        };
        let steps = (r_max / mesh).ceil() as usize;
        consider(apex)?;
        for i in 1..=steps {
            let r = i as f64 * mesh;
            let n_theta = ((2.0 * std::f64::consts::PI * r.sinh()) / mesh).ceil() as usize;
            for j in 0..n_theta.max(8) {
                let theta = 2.0 * std::f64::consts::PI * j as f64 / n_theta.max(8) as f64;
                consider(HyperboloidPoint::from_polar(r, theta))?;
            }
        }
        Ok(AlphaBeta { alpha, beta, mesh_min, mesh_max })
    }

    /// Vertices of the section of the surface by the timelike plane through
    /// the origin and the two given directions, walked exactly from cell to
    /// cell (the section projects onto the geodesic between the directions,
    /// which is a straight chord in the projective chart).
    pub fn planar_section(
        &self,
        from: HyperboloidPoint,
        to: HyperboloidPoint,
    ) -> Result<Vec<LorentzVec>, HullError> {
        let ka = klein_dir(from.as_vec());
        let kb = klein_dir(to.as_vec());
        let mut cur = self.containing_face(from).ok_or(HullError::OutsideKeptRegion)?;
        if self.containing_face(to).is_none() {
            return Err(HullError::OutsideKeptRegion);
        }
        let mut out = vec![self.hull.faces[cur].plane.radial_value(from) * from.as_vec()];
        let mut t_cur = 0.0f64;
        let dir = [kb[0] - ka[0], kb[1] - ka[1]];
        for _ in 0..4 * self.hull.faces.len() + 16 {
            let poly = &self.polys[cur];
            let mut t_exit = f64::INFINITY;
            let mut exit_edge = usize::MAX;
            for i in 0..poly.len() {
                let a = poly[i];
                let b = poly[(i + 1) % poly.len()];
                let e = [b[0] - a[0], b[1] - a[1]];
                let rate = e[0] * dir[1] - e[1] * dir[0];
                if rate >= -1e-300 {
                    continue;
                }
                let s0 = e[0] * (ka[1] - a[1]) - e[1] * (ka[0] - a[0]);
                let t = -s0 / rate;
                if t >= t_cur - 1e-12 && t < t_exit {
                    t_exit = t;
                    exit_edge = i;
                }
            }
            if t_exit >= 1.0 - 1e-12 {
                let u = self.hull.faces[cur].plane.radial_value(to);
                out.push(u * to.as_vec());
                return Ok(out);
            }
            let kx = [ka[0] + t_exit * dir[0], ka[1] + t_exit * dir[1]];
            let x = unklein_dir(kx)?;
            out.push(self.hull.faces[cur].plane.radial_value(x) * x.as_vec());
            cur = self.hull.faces[cur].neighbors[exit_edge]
                .ok_or(HullError::SectionLeftDomain)?;
            t_cur = t_exit.max(t_cur);
        }
        Err(HullError::Internal("planar section did not terminate".into()))
    }
}
