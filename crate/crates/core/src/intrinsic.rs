//! Intrinsic geometry of the polyhedral surface: geodesic distances through
//! a subdivided chord graph, isometric development of faces into the
//! Euclidean plane, cone angles at vertices, the length functional of radial
//! graphs, and the profile of the height `f(y) = -<y,y>` along piecewise
//! straight surface paths.
//!
//! Distances are measured in the path metric induced by the Minkowski form
//! on the spacelike faces. Shortest paths are approximated from above by a
//! graph whose nodes are the hull vertices together with evenly spaced
//! subdivision nodes on every edge, and whose arcs connect every pair of
//! nodes on a common face by the straight chord between them. Refining the
//! subdivision can only add arcs, so the approximation decreases
//! monotonically toward the true induced distance.

use crate::fuchsian::{FuchsianError, GroupWord, Isometry};
use crate::hull::{HConvexFn, HullComplex, HullError};
use crate::lorentz::{hyp_dist, mink_inner, HyperboloidPoint, LorentzError, LorentzVec};
use nalgebra::{Matrix3, Vector3};
use std::cell::OnceCell;
use std::collections::{BinaryHeap, HashMap};
use thiserror::Error;

/// Edge subdivision count used when no density is specified.
pub const DEFAULT_SEGMENTS: usize = 8;

/// Barycentric weights may dip this far below zero before a point is
/// rejected as lying outside its face.
const BARY_TOL: f64 = 1e-9;

/// Relative mismatch between a point's radius and the surface radius in its
/// direction beyond which the point does not count as a surface point.
const ON_FACE_TOL: f64 = 1e-9;

/// Floor for the squared integrand of the length functional: values below
/// it are a genuinely non-spacelike graph, values in `[floor, 0)` are
/// roundoff and clamp to zero.
const INTEGRAND_FLOOR: f64 = -1e-9;

/// Path segments shorter than this times the coordinate size are duplicate
/// points and are skipped by the height profile.
const SEGMENT_FLOOR: f64 = 1e-13;

#[derive(Debug, Error)]
pub enum IntrinsicError {
    #[error("point is not on the surface: {0}")]
    PointOffSurface(String),
    #[error("word cap {given} is below the safe search depth {needed}")]
    WordCapTooSmall { given: usize, needed: usize },
    #[error("vertex {0} has no closed fan of incident faces")]
    DanglingVertex(usize),
    #[error("length integrand squared dips to {0}")]
    ImaginaryIntegrand(f64),
    #[error("surface graph is disconnected at node {0}")]
    Disconnected(usize),
    #[error(
        "a translate at projected distance {0} is close enough to compete \
         for the minimum but left the kept window"
    )]
    CoverageIncomplete(f64),
    #[error(transparent)]
    Hull(#[from] HullError),
    #[error(transparent)]
    Fuchsian(#[from] FuchsianError),
    #[error(transparent)]
    Lorentz(#[from] LorentzError),
}

/// A point of the surface, referenced by a face index and barycentric
/// weights over that face's vertex cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfacePoint {
    pub face: usize,
    pub bary: Vec<f64>,
}

impl SurfacePoint {
    /// The hull vertex `v` as a surface point of its lowest incident face.
    pub fn at_vertex(hull: &HullComplex, v: usize) -> Result<Self, IntrinsicError> {
        for (fi, face) in hull.faces.iter().enumerate() {
            if let Some(k) = face.cycle.iter().position(|&w| w == v) {
                let mut bary = vec![0.0; face.cycle.len()];
                bary[k] = 1.0;
                return Ok(SurfacePoint { face: fi, bary });
            }
        }
        Err(IntrinsicError::PointOffSurface(format!(
            "vertex {v} is not on any face"
        )))
    }

    /// The ambient position `sum_i bary_i * vertex_i`.
    pub fn position(&self, hull: &HullComplex) -> LorentzVec {
        let cycle = &hull.faces[self.face].cycle;
        let mut p = LorentzVec::zero();
        for (&v, &w) in cycle.iter().zip(&self.bary) {
            p = p + w * hull.vertices[v];
        }
        p
    }

    fn validate(&self, hull: &HullComplex) -> Result<(), IntrinsicError> {
        if self.face >= hull.faces.len() {
            return Err(IntrinsicError::PointOffSurface(format!(
                "face index {} out of range",
                self.face
            )));
        }
        let cycle = &hull.faces[self.face].cycle;
        if self.bary.len() != cycle.len() {
            return Err(IntrinsicError::PointOffSurface(format!(
                "{} weights for a {}-gon",
                self.bary.len(),
                cycle.len()
            )));
        }
        let sum: f64 = self.bary.iter().sum();
        if (sum - 1.0).abs() > BARY_TOL || self.bary.iter().any(|&w| w < -BARY_TOL) {
            return Err(IntrinsicError::PointOffSurface(format!(
                "weights sum to {sum} or go negative"
            )));
        }
        Ok(())
    }
}

/// Barycentric reference of an ambient point `y` known to lie on `face`,
/// found by scanning the triangle fan of the vertex cycle.
fn face_barycentric(
    hull: &HullComplex,
    face: usize,
    y: LorentzVec,
) -> Result<SurfacePoint, IntrinsicError> {
    let cycle = &hull.faces[face].cycle;
    let col = |v: usize| {
        let p = hull.vertices[v];
        Vector3::new(p.x1, p.x2, p.x3)
    };
    let target = Vector3::new(y.x1, y.x2, y.x3);
    for i in 1..cycle.len() - 1 {
        let m = Matrix3::from_columns(&[col(cycle[0]), col(cycle[i]), col(cycle[i + 1])]);
        let Some(lam) = m.lu().solve(&target) else {
            continue;
        };
        if lam.iter().all(|&l| l >= -BARY_TOL) {
            let mut bary = vec![0.0; cycle.len()];
            bary[0] += lam[0];
            bary[i] += lam[1];
            bary[i + 1] += lam[2];
            return Ok(SurfacePoint { face, bary });
        }
    }
    Err(IntrinsicError::PointOffSurface(
        "point misses the triangle fan of its face".into(),
    ))
}

/// The surface point hit by the ray through direction `x`, referenced to
/// the face supporting the radial function there. Fails when `x` is outside
/// the window certified by the kept faces.
pub fn surface_point_at(
    radial: &HConvexFn<'_>,
    x: HyperboloidPoint,
) -> Result<SurfacePoint, IntrinsicError> {
    if !radial.is_covered(x) {
        return Err(IntrinsicError::PointOffSurface(
            "direction outside the certified window".into(),
        ));
    }
    let (face, u) = radial.support_face_at(x);
    face_barycentric(radial.hull(), face, u * x.as_vec())
}

/// References an explicit ambient point of the surface to the face that
/// contains it.
pub fn surface_point_at_position(
    radial: &HConvexFn<'_>,
    y: LorentzVec,
) -> Result<SurfacePoint, IntrinsicError> {
    let r = y.timelike_radius()?;
    let x = y.radial_project()?;
    if !radial.is_covered(x) {
        return Err(IntrinsicError::PointOffSurface(
            "direction outside the certified window".into(),
        ));
    }
    let (face, u) = radial.support_face_at(x);
    if (u - r).abs() > ON_FACE_TOL * u.max(1.0) {
        return Err(IntrinsicError::PointOffSurface(format!(
            "radius {r} off the surface radius {u}"
        )));
    }
    face_barycentric(radial.hull(), face, y)
}

/// The image of a surface point under an isometry, referenced to the kept
/// face containing it.
pub fn translate_point(
    radial: &HConvexFn<'_>,
    p: &SurfacePoint,
    g: &Isometry,
) -> Result<SurfacePoint, IntrinsicError> {
    surface_point_at_position(radial, g.apply(p.position(radial.hull())))
}

/// Length of the chord between two surface points, zero when they coincide
/// up to roundoff.
fn chord_len(a: LorentzVec, b: LorentzVec) -> Result<f64, IntrinsicError> {
    let d = b - a;
    let q = d.mink_norm2();
    if q > 0.0 {
        return Ok(q.sqrt());
    }
    let scale = (a.x3 * a.x3).max(b.x3 * b.x3).max(1.0);
    if -q <= f64::EPSILON * scale {
        return Ok(0.0);
    }
    Ok(d.spacelike_norm()?)
}

/// Isometric development of a face into the Euclidean plane: planar
/// coordinates for the vertex cycle whose distances equal the chord norms.
pub fn face_euclidean_embed(
    hull: &HullComplex,
    face: usize,
) -> Result<Vec<[f64; 2]>, IntrinsicError> {
    let pts: Vec<LorentzVec> = hull.faces[face]
        .cycle
        .iter()
        .map(|&v| hull.vertices[v])
        .collect();
    embed_in_plane(&pts)
}

/// Development of points of one spacelike plane onto orthonormal in-plane
/// coordinates; the restriction of the Minkowski form to such a plane is
/// positive definite, so Gram-Schmidt in that form produces a Euclidean
/// isometry.
fn embed_in_plane(pts: &[LorentzVec]) -> Result<Vec<[f64; 2]>, IntrinsicError> {
    if pts.len() < 3 {
        return Err(IntrinsicError::Hull(HullError::Internal(
            "fewer than three points to develop".into(),
        )));
    }
    let origin = pts[0];
    let spacelike = |v: LorentzVec| -> Result<(f64, LorentzVec), IntrinsicError> {
        let q = v.mink_norm2();
        if q <= 0.0 {
            return Err(IntrinsicError::Hull(HullError::NotSpacelikeFace { norm2: q }));
        }
        let n = q.sqrt();
        Ok((n, (1.0 / n) * v))
    };
    let longest = pts[1..]
        .iter()
        .map(|&p| (p - origin).mink_norm2())
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i + 1)
        .expect("at least two points");
    let (_, e1) = spacelike(pts[longest] - origin)?;
    let mut best_residual: Option<(f64, LorentzVec)> = None;
    for &p in &pts[1..] {
        let w = p - origin;
        let r = w - mink_inner(w, e1) * e1;
        let q = r.mink_norm2();
        if best_residual.as_ref().is_none_or(|(bq, _)| q > *bq) {
            best_residual = Some((q, r));
        }
    }
    let (rq, r) = best_residual.expect("at least two points");
    let scale = pts.iter().map(|p| p.x3 * p.x3).fold(1.0f64, f64::max);
    if rq <= f64::EPSILON * scale {
        return Err(IntrinsicError::Hull(HullError::Internal(
            "collinear points cannot be developed".into(),
        )));
    }
    let (_, e2) = spacelike(r)?;
    Ok(pts
        .iter()
        .map(|&p| {
            let w = p - origin;
            [mink_inner(w, e1), mink_inner(w, e2)]
        })
        .collect())
}

/// Total angle of the surface around one of its vertices.
#[derive(Debug, Clone)]
pub struct ConeAngleReport {
    pub vertex: LorentzVec,
    pub total_angle: f64,
    pub incident_faces: usize,
}

/// Face indices incident to each vertex, in face order.
pub fn vertex_face_incidence(hull: &HullComplex) -> Vec<Vec<u32>> {
    let mut incidence = vec![Vec::new(); hull.vertices.len()];
    for (fi, face) in hull.faces.iter().enumerate() {
        for &v in &face.cycle {
            incidence[v].push(fi as u32);
        }
    }
    incidence
}

/// Total cone angle at a hull vertex: the sum of the wedge angles of the
/// incident faces. Fails with [`IntrinsicError::DanglingVertex`] when the
/// incident faces do not close up around the vertex, as at the rim of the
/// kept window.
pub fn cone_angle(hull: &HullComplex, vertex: usize) -> Result<ConeAngleReport, IntrinsicError> {
    let incident: Vec<u32> = hull
        .faces
        .iter()
        .enumerate()
        .filter(|(_, f)| f.cycle.contains(&vertex))
        .map(|(fi, _)| fi as u32)
        .collect();
    cone_angle_of(hull, vertex, &incident)
}

/// Cone angles of every vertex, sharing one incidence sweep; vertices
/// without a closed fan report `None`.
pub fn cone_angle_sweep(hull: &HullComplex) -> Vec<Option<ConeAngleReport>> {
    let incidence = vertex_face_incidence(hull);
    (0..hull.vertices.len())
        .map(|v| cone_angle_of(hull, v, &incidence[v]).ok())
        .collect()
}

fn cone_angle_of(
    hull: &HullComplex,
    vertex: usize,
    incident: &[u32],
) -> Result<ConeAngleReport, IntrinsicError> {
    if incident.is_empty() {
        return Err(IntrinsicError::DanglingVertex(vertex));
    }
    let mut wedge_edges: HashMap<usize, u32> = HashMap::new();
    let mut total = 0.0;
    for &f in incident {
        let cycle = &hull.faces[f as usize].cycle;
        let k = cycle
            .iter()
            .position(|&w| w == vertex)
            .expect("incident face lists the vertex");
        let prev = cycle[(k + cycle.len() - 1) % cycle.len()];
        let next = cycle[(k + 1) % cycle.len()];
        *wedge_edges.entry(prev).or_insert(0) += 1;
        *wedge_edges.entry(next).or_insert(0) += 1;
        let a = hull.vertices[prev] - hull.vertices[vertex];
        let b = hull.vertices[next] - hull.vertices[vertex];
        let na = a.spacelike_norm()?;
        let nb = b.spacelike_norm()?;
        total += (mink_inner(a, b) / (na * nb)).clamp(-1.0, 1.0).acos();
    }
    if wedge_edges.values().any(|&c| c != 2) {
        return Err(IntrinsicError::DanglingVertex(vertex));
    }
    Ok(ConeAngleReport {
        vertex: hull.vertices[vertex],
        total_angle: total,
        incident_faces: incident.len(),
    })
}

/// A piecewise straight path on the surface; consecutive points share a
/// face, so every segment lies in the surface.
#[derive(Debug, Clone)]
pub struct GeodesicPath {
    pub points: Vec<LorentzVec>,
    pub length: f64,
    /// Hull edges whose subdivision nodes the path passes through.
    pub crossed_edges: Vec<usize>,
}

/// The chord graph of the surface: hull vertices plus evenly spaced
/// subdivision nodes on every edge, with complete visibility within each
/// face.
pub struct SurfaceGraph<'a> {
    radial: HConvexFn<'a>,
    segments: usize,
    node_pos: Vec<LorentzVec>,
    /// Owning hull edge of each subdivision node; `u32::MAX` for vertices.
    node_edge: Vec<u32>,
    face_nodes: Vec<Vec<u32>>,
    node_faces: Vec<Vec<u32>>,
    systole: OnceCell<f64>,
}

struct ShortestPaths {
    start_face: usize,
    start_pos: LorentzVec,
    dist: Vec<f64>,
    pred: Vec<u32>,
}

#[derive(PartialEq)]
struct HeapEntry {
    dist: f64,
    node: u32,
}

impl Eq for HeapEntry {}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl<'a> SurfaceGraph<'a> {
    pub fn new(hull: &'a HullComplex, segments: usize) -> Result<Self, IntrinsicError> {
        let segments = segments.max(1);
        let radial = hull.radial_fn();
        let nv = hull.vertices.len();
        let mut node_pos = hull.vertices.clone();
        let mut node_edge = vec![u32::MAX; nv];
        let mut edge_first = Vec::with_capacity(hull.edges.len());
        let mut edge_of: HashMap<(usize, usize), usize> = HashMap::new();
        for (ei, e) in hull.edges.iter().enumerate() {
            edge_first.push(node_pos.len() as u32);
            let a = hull.vertices[e.ends[0]];
            let b = hull.vertices[e.ends[1]];
            for j in 1..segments {
                let t = j as f64 / segments as f64;
                node_pos.push(a + t * (b - a));
                node_edge.push(ei as u32);
            }
            edge_of.insert((e.ends[0].min(e.ends[1]), e.ends[0].max(e.ends[1])), ei);
        }
        let mut face_nodes: Vec<Vec<u32>> = Vec::with_capacity(hull.faces.len());
        for face in &hull.faces {
            let mut nodes: Vec<u32> = face.cycle.iter().map(|&v| v as u32).collect();
            for i in 0..face.cycle.len() {
                let a = face.cycle[i];
                let b = face.cycle[(i + 1) % face.cycle.len()];
                let ei = edge_of[&(a.min(b), a.max(b))];
                let first = edge_first[ei];
                nodes.extend(first..first + (segments - 1) as u32);
            }
            face_nodes.push(nodes);
        }
        let mut node_faces: Vec<Vec<u32>> = vec![Vec::new(); node_pos.len()];
        for (fi, nodes) in face_nodes.iter().enumerate() {
            for &n in nodes {
                node_faces[n as usize].push(fi as u32);
            }
        }
        let sg = SurfaceGraph {
            radial,
            segments,
            node_pos,
            node_edge,
            face_nodes,
            node_faces,
            systole: OnceCell::new(),
        };
        sg.check_connected()?;
        Ok(sg)
    }

    pub fn hull(&self) -> &HullComplex {
        self.radial.hull()
    }

    pub fn radial(&self) -> &HConvexFn<'a> {
        &self.radial
    }

    pub fn segments(&self) -> usize {
        self.segments
    }

    pub fn node_count(&self) -> usize {
        self.node_pos.len()
    }

    /// Pessimistic relative overestimate of graph distances against the true
    /// induced distances at this subdivision density. Observed convergence
    /// is roughly quadratic in the density; this linear budget is the slack
    /// used by downstream inequality checks.
    pub fn overestimate_budget(&self) -> f64 {
        2.0 / self.segments as f64
    }

    fn check_connected(&self) -> Result<(), IntrinsicError> {
        if self.node_pos.is_empty() {
            return Ok(());
        }
        let mut node_seen = vec![false; self.node_pos.len()];
        let mut face_seen = vec![false; self.face_nodes.len()];
        let mut stack = vec![0u32];
        node_seen[0] = true;
        while let Some(n) = stack.pop() {
            for &f in &self.node_faces[n as usize] {
                if face_seen[f as usize] {
                    continue;
                }
                face_seen[f as usize] = true;
                for &m in &self.face_nodes[f as usize] {
                    if !node_seen[m as usize] {
                        node_seen[m as usize] = true;
                        stack.push(m);
                    }
                }
            }
        }
        match node_seen.iter().position(|&s| !s) {
            Some(i) => Err(IntrinsicError::Disconnected(i)),
            None => Ok(()),
        }
    }

    /// Dijkstra sweep from `p`; with a goal the sweep stops once the goal
    /// distance is settled and reports it with its entry node (`u32::MAX`
    /// when the goal is reached straight from the start point).
    fn sweep(
        &self,
        p: &SurfacePoint,
        goal: Option<&SurfacePoint>,
    ) -> Result<(ShortestPaths, Option<(f64, u32)>), IntrinsicError> {
        let hull = self.hull();
        p.validate(hull)?;
        let start_pos = p.position(hull);
        let goal_data = match goal {
            Some(q) => {
                q.validate(hull)?;
                Some((q.face, q.position(hull)))
            }
            None => None,
        };
        let n = self.node_pos.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut pred = vec![u32::MAX; n];
        let mut done = vec![false; n];
        let mut heap = BinaryHeap::new();
        let mut best_goal = f64::INFINITY;
        let mut goal_entry = u32::MAX;
        if let Some((gface, gpos)) = goal_data {
            if gface == p.face {
                best_goal = chord_len(start_pos, gpos)?;
            }
        }
        for &m in &self.face_nodes[p.face] {
            let w = chord_len(start_pos, self.node_pos[m as usize])?;
            if w < dist[m as usize] {
                dist[m as usize] = w;
                heap.push(HeapEntry { dist: w, node: m });
            }
        }
        while let Some(HeapEntry { dist: d0, node }) = heap.pop() {
            if done[node as usize] || d0 > dist[node as usize] {
                continue;
            }
            if d0 >= best_goal {
                break;
            }
            done[node as usize] = true;
            if let Some((gface, gpos)) = goal_data {
                if self.node_faces[node as usize].contains(&(gface as u32)) {
                    let cand = d0 + chord_len(self.node_pos[node as usize], gpos)?;
                    if cand < best_goal {
                        best_goal = cand;
                        goal_entry = node;
                    }
                }
            }
            for &f in &self.node_faces[node as usize] {
                for &m in &self.face_nodes[f as usize] {
                    if m == node || done[m as usize] {
                        continue;
                    }
                    let nd =
                        d0 + chord_len(self.node_pos[node as usize], self.node_pos[m as usize])?;
                    if nd < dist[m as usize] {
                        dist[m as usize] = nd;
                        pred[m as usize] = node;
                        heap.push(HeapEntry { dist: nd, node: m });
                    }
                }
            }
        }
        let run = ShortestPaths {
            start_face: p.face,
            start_pos,
            dist,
            pred,
        };
        let goal_result = goal_data.map(|_| (best_goal, goal_entry));
        Ok((run, goal_result))
    }

    /// Best distance from the sweep's start to an arbitrary point of the
    /// given face, with the settled node the best route enters the face
    /// through (`u32::MAX` for the direct chord from the start point).
    fn relax_entry(
        &self,
        run: &ShortestPaths,
        face: usize,
        pos: LorentzVec,
    ) -> Result<(f64, u32), IntrinsicError> {
        let mut best = if face == run.start_face {
            chord_len(run.start_pos, pos)?
        } else {
            f64::INFINITY
        };
        let mut entry = u32::MAX;
        for &m in &self.face_nodes[face] {
            let d = run.dist[m as usize];
            if d.is_finite() {
                let cand = d + chord_len(self.node_pos[m as usize], pos)?;
                if cand < best {
                    best = cand;
                    entry = m;
                }
            }
        }
        Ok((best, entry))
    }

    /// Distance from the sweep's start to a point on a face, optionally
    /// with the settled route pulled taut across the faces it crosses.
    fn settle(
        &self,
        run: &ShortestPaths,
        face: usize,
        pos: LorentzVec,
        taut: bool,
    ) -> Result<f64, IntrinsicError> {
        let (d, entry) = self.relax_entry(run, face, pos)?;
        if !taut || !d.is_finite() {
            return Ok(d);
        }
        let chain = backtrack(run, entry);
        Ok(self.tauten(&chain, run.start_pos, pos)?.length.min(d))
    }

    /// Graph distance between two surface points: an upper approximation of
    /// the induced intrinsic distance, within [`Self::overestimate_budget`]
    /// relatively.
    pub fn induced_distance(
        &self,
        p: &SurfacePoint,
        q: &SurfacePoint,
    ) -> Result<f64, IntrinsicError> {
        Ok(self.shortest_path(p, q)?.length)
    }

    /// Shortest graph path between two surface points.
    pub fn shortest_path(
        &self,
        p: &SurfacePoint,
        q: &SurfacePoint,
    ) -> Result<GeodesicPath, IntrinsicError> {
        let (chain, start_pos, goal_pos) = self.goal_chain(p, q)?;
        self.chain_to_path(&chain, start_pos, goal_pos)
    }

    /// Shortest graph paths from one base point to many targets, reusing a
    /// single sweep of the graph across all of them.
    pub fn shortest_paths_from(
        &self,
        p: &SurfacePoint,
        qs: &[SurfacePoint],
    ) -> Result<Vec<GeodesicPath>, IntrinsicError> {
        let hull = self.hull();
        p.validate(hull)?;
        if qs.is_empty() {
            return Ok(Vec::new());
        }
        let (run, _) = self.sweep(p, None)?;
        qs.iter()
            .map(|q| {
                q.validate(hull)?;
                let q_pos = q.position(hull);
                let (d, entry) = self.relax_entry(&run, q.face, q_pos)?;
                if !d.is_finite() {
                    return Err(IntrinsicError::Disconnected(q.face));
                }
                self.chain_to_path(&backtrack(&run, entry), run.start_pos, q_pos)
            })
            .collect()
    }

    fn chain_to_path(
        &self,
        chain: &[u32],
        start_pos: LorentzVec,
        goal_pos: LorentzVec,
    ) -> Result<GeodesicPath, IntrinsicError> {
        let mut points = Vec::with_capacity(chain.len() + 2);
        let mut crossed = Vec::new();
        points.push(start_pos);
        for &n in chain {
            points.push(self.node_pos[n as usize]);
            let e = self.node_edge[n as usize];
            if e != u32::MAX {
                crossed.push(e as usize);
            }
        }
        points.push(goal_pos);
        points.dedup_by(|a, b| *a == *b);
        let mut length = 0.0;
        for w in points.windows(2) {
            length += chord_len(w[0], w[1])?;
        }
        Ok(GeodesicPath {
            points,
            length,
            crossed_edges: crossed,
        })
    }

    /// Graph distances from one base point to many targets from a single
    /// sweep; each value equals the corresponding shortest-path length.
    pub fn induced_distances_from(
        &self,
        p: &SurfacePoint,
        qs: &[SurfacePoint],
    ) -> Result<Vec<f64>, IntrinsicError> {
        let hull = self.hull();
        p.validate(hull)?;
        if qs.is_empty() {
            return Ok(Vec::new());
        }
        let (run, _) = self.sweep(p, None)?;
        qs.iter()
            .map(|q| {
                q.validate(hull)?;
                self.settle(&run, q.face, q.position(hull), false)
            })
            .collect()
    }

    /// The shortest graph path pulled taut across the faces it crosses:
    /// every crossing point slides along its hull edge to the position
    /// minimizing its two segments, swept until the path stops moving. The
    /// result is the shortest surface path through the same face strip, so
    /// it is never longer than the graph path, and its creases satisfy the
    /// refraction condition of true surface geodesics.
    pub fn taut_path(
        &self,
        p: &SurfacePoint,
        q: &SurfacePoint,
    ) -> Result<GeodesicPath, IntrinsicError> {
        let (chain, start_pos, goal_pos) = self.goal_chain(p, q)?;
        self.tauten(&chain, start_pos, goal_pos)
    }

    /// Pulls a settled node chain taut between two fixed endpoints.
    fn tauten(
        &self,
        chain: &[u32],
        start_pos: LorentzVec,
        goal_pos: LorentzVec,
    ) -> Result<GeodesicPath, IntrinsicError> {
        let hull = self.hull();
        // a crossing point is `a + t * e` on its hull edge; hull vertices on
        // the chain stay fixed
        struct Waypoint {
            a: LorentzVec,
            e: LorentzVec,
            t: f64,
            edge: Option<usize>,
        }
        let mut way: Vec<Waypoint> = Vec::with_capacity(chain.len() + 2);
        way.push(Waypoint {
            a: start_pos,
            e: LorentzVec::zero(),
            t: 0.0,
            edge: None,
        });
        for &n in chain {
            let ei = self.node_edge[n as usize];
            if ei == u32::MAX {
                way.push(Waypoint {
                    a: self.node_pos[n as usize],
                    e: LorentzVec::zero(),
                    t: 0.0,
                    edge: None,
                });
            } else {
                let edge = &hull.edges[ei as usize];
                let a = hull.vertices[edge.ends[0]];
                let e = hull.vertices[edge.ends[1]] - a;
                let pos = self.node_pos[n as usize];
                let t = (mink_inner(pos - a, e) / e.mink_norm2()).clamp(0.0, 1.0);
                way.push(Waypoint {
                    a,
                    e,
                    t,
                    edge: Some(ei as usize),
                });
            }
        }
        way.push(Waypoint {
            a: goal_pos,
            e: LorentzVec::zero(),
            t: 0.0,
            edge: None,
        });
        let pos_of = |w: &Waypoint| w.a + w.t * w.e;
        // signed length derivative along the edge at parameter t
        let slide = |prev: LorentzVec, w: &Waypoint, next: LorentzVec| -> f64 {
            let rate = |t: f64| {
                let y = w.a + t * w.e;
                let mut g = 0.0;
                for other in [prev, next] {
                    let seg = y - other;
                    let n2 = seg.mink_norm2();
                    if n2 > 0.0 {
                        g += mink_inner(w.e, seg) / n2.sqrt();
                    }
                }
                g
            };
            if rate(0.0) >= 0.0 {
                return 0.0;
            }
            if rate(1.0) <= 0.0 {
                return 1.0;
            }
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if rate(mid) >= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            0.5 * (lo + hi)
        };
        let scale = way
            .iter()
            .map(|w| pos_of(w).x3.abs())
            .fold(1.0f64, f64::max);
        for _ in 0..200 {
            let mut moved = 0.0f64;
            for i in 1..way.len() - 1 {
                if way[i].edge.is_none() {
                    continue;
                }
                let prev = pos_of(&way[i - 1]);
                let next = pos_of(&way[i + 1]);
                let t = slide(prev, &way[i], next);
                moved = moved.max((t - way[i].t).abs() * way[i].e.x3.abs().max(1.0));
                way[i].t = t;
            }
            if moved <= 1e-14 * scale {
                break;
            }
        }
        let mut points = Vec::with_capacity(way.len());
        let mut crossed = Vec::new();
        for w in &way {
            let pos = pos_of(w);
            if points.last() == Some(&pos) {
                continue;
            }
            points.push(pos);
            if let Some(e) = w.edge {
                crossed.push(e);
            }
        }
        let mut length = 0.0;
        for w in points.windows(2) {
            length += chord_len(w[0], w[1])?;
        }
        Ok(GeodesicPath {
            points,
            length,
            crossed_edges: crossed,
        })
    }

    /// Settled node chain from `p` to `q` together with the endpoint
    /// positions.
    fn goal_chain(
        &self,
        p: &SurfacePoint,
        q: &SurfacePoint,
    ) -> Result<(Vec<u32>, LorentzVec, LorentzVec), IntrinsicError> {
        let (run, goal) = self.sweep(p, Some(q))?;
        let (best, entry) = goal.expect("goal sweep reports goal data");
        if !best.is_finite() {
            return Err(IntrinsicError::Disconnected(q.face));
        }
        Ok((backtrack(&run, entry), run.start_pos, q.position(self.hull())))
    }

    /// Distance between the group orbits of `p` and `q`: the minimum of the
    /// graph distance from `p` to a translate of `q` over words no longer
    /// than `word_cap`. The cap is validated against twice the surface
    /// diameter of the fundamental region over the group's systole, so the
    /// capped minimum is the true orbit distance.
    pub fn quotient_distance(
        &self,
        p: &SurfacePoint,
        q: &SurfacePoint,
        word_cap: usize,
    ) -> Result<f64, IntrinsicError> {
        Ok(self.orbit_minimum(p, q, word_cap, true, false)?.0)
    }

    /// [`Self::quotient_distance`] with every competitive route pulled taut
    /// across the faces it crosses, so the subdivision density only affects
    /// the choice of face strip, not the measured length.
    pub fn quotient_taut_distance(
        &self,
        p: &SurfacePoint,
        q: &SurfacePoint,
        word_cap: usize,
    ) -> Result<f64, IntrinsicError> {
        Ok(self.orbit_minimum(p, q, word_cap, true, true)?.0)
    }

    /// Minimum of the graph distance from `p` to a nontrivial translate of
    /// itself: the systolic displacement of the surface at `p`.
    pub fn orbit_gap(
        &self,
        p: &SurfacePoint,
        word_cap: usize,
    ) -> Result<(f64, GroupWord), IntrinsicError> {
        self.orbit_minimum(p, p, word_cap, false, false)
    }

    /// [`Self::orbit_gap`] with every competitive route pulled taut.
    pub fn taut_orbit_gap(
        &self,
        p: &SurfacePoint,
        word_cap: usize,
    ) -> Result<(f64, GroupWord), IntrinsicError> {
        self.orbit_minimum(p, p, word_cap, false, true)
    }

    /// Quotient distances from one base point to many targets, reusing a
    /// single sweep of the graph across all of them.
    pub fn quotient_distances_from(
        &self,
        p: &SurfacePoint,
        qs: &[SurfacePoint],
        word_cap: usize,
    ) -> Result<Vec<f64>, IntrinsicError> {
        self.orbit_minima_from(p, qs, word_cap, false)
    }

    /// [`Self::quotient_distances_from`] with taut route lengths.
    pub fn quotient_taut_distances_from(
        &self,
        p: &SurfacePoint,
        qs: &[SurfacePoint],
        word_cap: usize,
    ) -> Result<Vec<f64>, IntrinsicError> {
        self.orbit_minima_from(p, qs, word_cap, true)
    }

    fn orbit_minima_from(
        &self,
        p: &SurfacePoint,
        qs: &[SurfacePoint],
        word_cap: usize,
        taut: bool,
    ) -> Result<Vec<f64>, IntrinsicError> {
        p.validate(self.hull())?;
        self.validate_word_cap(word_cap)?;
        if qs.is_empty() {
            return Ok(Vec::new());
        }
        let (run, _) = self.sweep(p, None)?;
        qs.iter()
            .map(|q| Ok(self.orbit_eval(&run, q, word_cap, true, taut)?.0))
            .collect()
    }

    /// Feasibility bound for the word-length cap: twice the surface
    /// diameter of the fundamental region over the group's systole.
    fn validate_word_cap(&self, word_cap: usize) -> Result<(), IntrinsicError> {
        let hull = self.hull();
        let group = hull.group();
        let (_, beta) = hull.radial_extremes()?;
        let systole = match self.systole.get() {
            Some(&s) => s,
            None => {
                let s = group.systole()?;
                let _ = self.systole.set(s);
                s
            }
        };
        let diam = beta * 2.0 * group.covering_radius();
        let needed = (2.0 * diam / systole).ceil() as usize;
        if word_cap < needed {
            return Err(IntrinsicError::WordCapTooSmall {
                given: word_cap,
                needed,
            });
        }
        Ok(())
    }

    fn orbit_minimum(
        &self,
        p: &SurfacePoint,
        q: &SurfacePoint,
        word_cap: usize,
        include_identity: bool,
        taut: bool,
    ) -> Result<(f64, GroupWord), IntrinsicError> {
        p.validate(self.hull())?;
        self.validate_word_cap(word_cap)?;
        let (run, _) = self.sweep(p, None)?;
        self.orbit_eval(&run, q, word_cap, include_identity, taut)
    }

    /// The orbit search proper, against an already settled sweep.
    fn orbit_eval(
        &self,
        run: &ShortestPaths,
        q: &SurfacePoint,
        word_cap: usize,
        include_identity: bool,
        taut: bool,
    ) -> Result<(f64, GroupWord), IntrinsicError> {
        let hull = self.hull();
        q.validate(hull)?;
        let group = hull.group();
        let (alpha, beta) = hull.radial_extremes()?;
        let q_pos = q.position(hull);
        let apex = HyperboloidPoint::apex();
        let p_dir = run.start_pos.radial_project()?;
        let q_dir = q_pos.radial_project()?;
        let d_p = hyp_dist(p_dir, apex)?;
        let d_q = hyp_dist(q_dir, apex)?;
        // any unit-speed surface path projects to a curve at hyperbolic
        // speed at least 1/stretch, so translates beyond stretch times the
        // current minimum cannot improve it
        let stretch = 1.0 / alpha + (beta * beta - alpha * alpha).max(0.0).sqrt() / (alpha * alpha);

        let mut best = f64::INFINITY;
        let mut best_word = GroupWord::identity();
        if include_identity {
            best = self.settle(run, q.face, q_pos, taut)?;
        } else {
            for (i, g) in group.generators().iter().enumerate() {
                if let Some(d) = self.eval_translate(run, g, q_pos, taut)? {
                    if d < best {
                        best = d;
                        best_word = GroupWord::from_letters([i as i16 + 1])?;
                    }
                }
            }
            if !best.is_finite() {
                return Err(IntrinsicError::CoverageIncomplete(d_q));
            }
        }

        let reach = d_p + d_q + stretch * best + 0.1;
        let elements = group.enumerate_elements(reach)?;
        let mut candidates: Vec<(f64, &GroupWord, &Isometry)> = Vec::new();
        for (w, g) in &elements {
            if w.is_empty() {
                continue;
            }
            candidates.push((hyp_dist(p_dir, g.apply_hyp(q_dir))?, w, g));
        }
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.letters().cmp(b.1.letters())));
        for (dh, w, g) in candidates {
            if dh > stretch * best + 1e-12 {
                break;
            }
            if w.len() > word_cap {
                return Err(IntrinsicError::WordCapTooSmall {
                    given: word_cap,
                    needed: w.len(),
                });
            }
            match self.eval_translate(run, g, q_pos, taut)? {
                Some(d) => {
                    if d < best {
                        best = d;
                        best_word = w.clone();
                    }
                }
                None => return Err(IntrinsicError::CoverageIncomplete(dh)),
            }
        }
        Ok((best, best_word))
    }

    /// Distance from the sweep's start to the image of `q_pos` under `g`,
    /// or `None` when the image leaves the kept window.
    fn eval_translate(
        &self,
        run: &ShortestPaths,
        g: &Isometry,
        q_pos: LorentzVec,
        taut: bool,
    ) -> Result<Option<f64>, IntrinsicError> {
        let y = g.apply(q_pos);
        let x = y.radial_project()?;
        if !self.radial.is_covered(x) {
            return Ok(None);
        }
        let (face, u) = self.radial.support_face_at(x);
        let r = y.timelike_radius()?;
        if (u - r).abs() > ON_FACE_TOL * u.max(1.0) {
            return Ok(None);
        }
        Ok(Some(self.settle(run, face, y, taut)?))
    }
}

/// Settled node chain ending at `entry`, in sweep order.
fn backtrack(run: &ShortestPaths, entry: u32) -> Vec<u32> {
    let mut chain = Vec::new();
    let mut cur = entry;
    while cur != u32::MAX {
        chain.push(cur);
        cur = run.pred[cur as usize];
    }
    chain.reverse();
    chain
}

/// Length of the radial graph of `u` over a sampled curve of directions:
/// the composite trapezoid rule applied to
/// `sqrt(u^2 |c'|^2 - ((u of c)')^2)` with centered difference quotients
/// (one-sided at the ends), in the sample-index parameter.
pub fn length_functional<U>(u: U, samples: &[HyperboloidPoint]) -> Result<f64, IntrinsicError>
where
    U: Fn(HyperboloidPoint) -> f64,
{
    let n = samples.len();
    if n < 2 {
        return Ok(0.0);
    }
    let vals: Vec<f64> = samples.iter().map(|&x| u(x)).collect();
    let mut integrand = Vec::with_capacity(n);
    for i in 0..n {
        let (speed, du) = if i == 0 {
            (hyp_dist(samples[0], samples[1])?, vals[1] - vals[0])
        } else if i == n - 1 {
            (
                hyp_dist(samples[n - 2], samples[n - 1])?,
                vals[n - 1] - vals[n - 2],
            )
        } else {
            (
                hyp_dist(samples[i - 1], samples[i + 1])? / 2.0,
                (vals[i + 1] - vals[i - 1]) / 2.0,
            )
        };
        let q = vals[i] * vals[i] * speed * speed - du * du;
        if q < INTEGRAND_FLOOR {
            return Err(IntrinsicError::ImaginaryIntegrand(q));
        }
        integrand.push(q.max(0.0).sqrt());
    }
    Ok(integrand.windows(2).map(|w| 0.5 * (w[0] + w[1])).sum())
}

/// One straight piece of a surface path: the quadratic profile of the
/// height `f(y) = -<y,y>` restricted to it, in the arclength parameter.
#[derive(Debug, Clone)]
pub struct HeightSegment {
    pub len: f64,
    pub f_start: f64,
    pub f_end: f64,
    pub slope_start: f64,
    pub slope_end: f64,
    /// Second derivative of the profile, `-2` for unit spacelike directions.
    pub curvature: f64,
}

/// The height `f(y) = -<y,y>` along a piecewise straight path.
#[derive(Debug, Clone)]
pub struct HeightProfile {
    pub segments: Vec<HeightSegment>,
    /// Jumps of the arclength derivative at the interior break points.
    pub slope_jumps: Vec<f64>,
    /// Exact integral of `|<c, c'>| = |f'| / 2` along the path, from the
    /// per-segment antiderivative split at the critical point.
    pub integral_abs: f64,
    pub f_max: f64,
}

pub fn f_along_path(path: &GeodesicPath) -> Result<HeightProfile, IntrinsicError> {
    let mut segments: Vec<HeightSegment> = Vec::new();
    let mut integral = 0.0;
    let mut f_max = match path.points.first() {
        Some(p) => -p.mink_norm2(),
        None => 0.0,
    };
    for w in path.points.windows(2) {
        let scale = w[0].x3.abs().max(w[1].x3.abs()).max(1.0);
        let len = chord_len(w[0], w[1])?;
        if len <= SEGMENT_FLOOR * scale {
            continue;
        }
        let dir = (1.0 / len) * (w[1] - w[0]);
        let f_start = -w[0].mink_norm2();
        let slope_start = -2.0 * mink_inner(w[0], dir);
        let curvature = -2.0 * mink_inner(dir, dir);
        let f_end = f_start + slope_start * len + 0.5 * curvature * len * len;
        let slope_end = slope_start + curvature * len;
        let crit = -slope_start / curvature;
        if crit > 0.0 && crit < len {
            let f_crit = f_start + slope_start * crit + 0.5 * curvature * crit * crit;
            integral += 0.5 * ((f_crit - f_start).abs() + (f_end - f_crit).abs());
            f_max = f_max.max(f_crit);
        } else {
            integral += 0.5 * (f_end - f_start).abs();
        }
        f_max = f_max.max(f_start).max(f_end);
        segments.push(HeightSegment {
            len,
            f_start,
            f_end,
            slope_start,
            slope_end,
            curvature,
        });
    }
    let slope_jumps = segments
        .windows(2)
        .map(|s| s[1].slope_start - s[0].slope_end)
        .collect();
    Ok(HeightProfile {
        segments,
        slope_jumps,
        integral_abs: integral,
        f_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fuchsian::genus2_octagon_group;
    use crate::testfix::{dense_hull, octagon_hull};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{PI, TAU};

    fn sample_direction(rng: &mut ChaCha8Rng, r_max: f64) -> HyperboloidPoint {
        let r = (1.0 + rng.gen::<f64>() * (r_max.cosh() - 1.0)).acosh();
        HyperboloidPoint::from_polar(r, rng.gen::<f64>() * TAU)
    }

    fn manual_path(points: Vec<LorentzVec>) -> GeodesicPath {
        let length = points
            .windows(2)
            .map(|w| chord_len(w[0], w[1]).unwrap())
            .sum();
        GeodesicPath {
            points,
            length,
            crossed_edges: Vec::new(),
        }
    }

    fn vec3(x1: f64, x2: f64, x3: f64) -> LorentzVec {
        LorentzVec { x1, x2, x3 }
    }

    #[test]
    fn height_profile_matches_the_closed_form() {
        // f(s) = 4 - (1-s)^2 along the chord: 3 at the ends, 4 at the
        // middle, and the integral of |f'|/2 is half the total variation
        let path = manual_path(vec![vec3(1.0, 0.0, 2.0), vec3(-1.0, 0.0, 2.0)]);
        let prof = f_along_path(&path).unwrap();
        assert_eq!(prof.segments.len(), 1);
        let seg = &prof.segments[0];
        assert!((seg.len - 2.0).abs() < 1e-12);
        assert!((seg.f_start - 3.0).abs() < 1e-12);
        assert!((seg.f_end - 3.0).abs() < 1e-12);
        assert!((seg.slope_start - 2.0).abs() < 1e-12);
        assert!((seg.slope_end + 2.0).abs() < 1e-12);
        assert!((seg.curvature + 2.0).abs() < 1e-12);
        assert!((prof.f_max - 4.0).abs() < 1e-12);
        assert!((prof.integral_abs - 1.0).abs() < 1e-12);
        assert!(prof.slope_jumps.is_empty());
    }

    #[test]
    fn height_profile_handles_breaks() {
        let path = manual_path(vec![
            vec3(1.0, 0.0, 2.0),
            vec3(0.5, 0.0, 2.0),
            vec3(0.5, 1.0, 2.0),
        ]);
        let prof = f_along_path(&path).unwrap();
        assert_eq!(prof.segments.len(), 2);
        assert!((prof.segments[0].f_end - 3.75).abs() < 1e-12);
        assert!((prof.segments[0].slope_end - 1.0).abs() < 1e-12);
        assert!((prof.segments[1].slope_start - 0.0).abs() < 1e-12);
        assert!((prof.segments[1].f_end - 2.75).abs() < 1e-12);
        assert_eq!(prof.slope_jumps.len(), 1);
        assert!((prof.slope_jumps[0] + 1.0).abs() < 1e-12);
        assert!((prof.f_max - 3.75).abs() < 1e-12);
        assert!((prof.integral_abs - 0.875).abs() < 1e-12);
    }

    #[test]
    fn height_profile_skips_duplicate_points() {
        let a = vec3(1.0, 0.0, 2.0);
        let b = vec3(-1.0, 0.0, 2.0);
        let prof = f_along_path(&manual_path(vec![a, a, b, b])).unwrap();
        assert_eq!(prof.segments.len(), 1);
        assert!((prof.integral_abs - 1.0).abs() < 1e-12);
    }

    #[test]
    fn face_development_preserves_chord_distances() {
        let hull = dense_hull();
        let mut rng = ChaCha8Rng::seed_from_u64(0x454d4245);
        for _ in 0..40 {
            let f = rng.gen_range(0..hull.faces.len());
            let coords = face_euclidean_embed(hull, f).unwrap();
            let cycle = &hull.faces[f].cycle;
            for i in 0..cycle.len() {
                for j in i + 1..cycle.len() {
                    let chord = (hull.vertices[cycle[j]] - hull.vertices[cycle[i]])
                        .spacelike_norm()
                        .unwrap();
                    let dx = coords[j][0] - coords[i][0];
                    let dy = coords[j][1] - coords[i][1];
                    let planar = dx.hypot(dy);
                    assert!(
                        (planar - chord).abs() <= 1e-12 * (1.0 + chord),
                        "face {f}: {planar} vs {chord}"
                    );
                }
            }
        }
    }

    #[test]
    fn cone_angle_at_the_axis_orbit_vertex_is_six_pi() {
        // all vertices of this surface are equivalent under the group, so
        // the combinatorial Gauss-Bonnet sum over the genus-2 quotient puts
        // the whole angle defect 2*pi*chi = -4*pi at the single vertex class
        let hull = octagon_hull();
        let apex = vec3(0.0, 0.0, 1.0);
        let v = (0..hull.vertices.len())
            .find(|&v| {
                let d = hull.vertices[v] - apex;
                d.x1.abs() + d.x2.abs() + d.x3.abs() < 1e-6
            })
            .expect("axis point is a hull vertex");
        let report = cone_angle(hull, v).unwrap();
        assert_eq!(report.incident_faces, 8);
        assert!(
            (report.total_angle - 6.0 * PI).abs() < 1e-6,
            "cone angle {} vs {}",
            report.total_angle,
            6.0 * PI
        );
    }

    #[test]
    fn cone_angles_exceed_two_pi_at_interior_vertices() {
        let hull = dense_hull();
        let reports = cone_angle_sweep(hull);
        let mut excesses: Vec<f64> = Vec::new();
        for report in reports.iter().flatten() {
            assert!(
                report.total_angle >= 2.0 * PI - 1e-9,
                "cone angle {} below 2*pi",
                report.total_angle
            );
            excesses.push(report.total_angle - 2.0 * PI);
        }
        assert!(excesses.len() > 100, "too few interior vertices");
        excesses.sort_by(f64::total_cmp);
        let median = excesses[excesses.len() / 2];
        assert!(median < 0.2, "median excess {median}");
        println!(
            "cone angles: {} interior vertices, median excess {:.3e}, max {:.3e}",
            excesses.len(),
            median,
            excesses.last().unwrap()
        );
    }

    #[test]
    fn rim_vertices_have_no_closed_fan() {
        let hull = octagon_hull();
        let rim = hull
            .edges
            .iter()
            .find(|e| e.right.is_none())
            .expect("kept window has a rim");
        assert!(matches!(
            cone_angle(hull, rim.ends[0]),
            Err(IntrinsicError::DanglingVertex(_))
        ));
    }

    #[test]
    fn cone_angles_are_equivariant() {
        let hull = dense_hull();
        let group = genus2_octagon_group();
        let g = &group.generators()[0];
        let quantize = |p: LorentzVec| {
            [
                (p.x1 * 1e6).round() as i64,
                (p.x2 * 1e6).round() as i64,
                (p.x3 * 1e6).round() as i64,
            ]
        };
        let index: HashMap<[i64; 3], usize> = hull
            .vertices
            .iter()
            .enumerate()
            .map(|(i, &p)| (quantize(p), i))
            .collect();
        let mut checked = 0;
        for v in 0..hull.vertices.len() {
            let Some(&w) = index.get(&quantize(g.apply(hull.vertices[v]))) else {
                continue;
            };
            let (Ok(a), Ok(b)) = (cone_angle(hull, v), cone_angle(hull, w)) else {
                continue;
            };
            assert!(
                (a.total_angle - b.total_angle).abs() < 1e-8,
                "angles {} vs {} at vertices {v}, {w}",
                a.total_angle,
                b.total_angle
            );
            checked += 1;
        }
        assert!(checked > 30, "only {checked} translated vertices matched");
    }

    #[test]
    fn surface_points_round_trip_through_barycentric_coordinates() {
        let hull = dense_hull();
        let radial = hull.radial_fn();
        let mut rng = ChaCha8Rng::seed_from_u64(0x42415259);
        for _ in 0..200 {
            let x = sample_direction(&mut rng, 1.4);
            let sp = surface_point_at(&radial, x).unwrap();
            let pos = sp.position(hull);
            let want = radial.surface_point(x);
            let err = (pos - want).spacelike_norm().unwrap_or(0.0);
            assert!(err <= 1e-9, "round trip drifted by {err}");
            let again = surface_point_at_position(&radial, pos).unwrap();
            let err2 = (again.position(hull) - pos).spacelike_norm().unwrap_or(0.0);
            assert!(err2 <= 1e-9, "position round trip drifted by {err2}");
        }
        let inside = 0.8 * radial.surface_point(HyperboloidPoint::apex());
        assert!(matches!(
            surface_point_at_position(&radial, inside),
            Err(IntrinsicError::PointOffSurface(_))
        ));
    }

    #[test]
    fn induced_distance_vanishes_exactly_at_coinciding_points() {
        let hull = octagon_hull();
        let sg = SurfaceGraph::new(hull, 4).unwrap();
        let radial = hull.radial_fn();
        let p = surface_point_at(&radial, HyperboloidPoint::from_polar(0.7, 1.1)).unwrap();
        assert_eq!(sg.induced_distance(&p, &p).unwrap(), 0.0);

        // the same vertex referenced through two different incident faces
        let v = hull.faces[0].cycle[0];
        let via_first = SurfacePoint::at_vertex(hull, v).unwrap();
        let other_face = hull
            .faces
            .iter()
            .enumerate()
            .skip(via_first.face + 1)
            .find(|(_, f)| f.cycle.contains(&v))
            .map(|(fi, _)| fi)
            .expect("hull vertices have several incident faces");
        let k = hull.faces[other_face]
            .cycle
            .iter()
            .position(|&w| w == v)
            .unwrap();
        let mut bary = vec![0.0; hull.faces[other_face].cycle.len()];
        bary[k] = 1.0;
        let via_second = SurfacePoint {
            face: other_face,
            bary,
        };
        let d = sg.induced_distance(&via_first, &via_second).unwrap();
        assert!(d <= 1e-12, "same point at distance {d}");
    }

    #[test]
    fn graph_distances_are_symmetric_and_satisfy_the_triangle_inequality() {
        let hull = octagon_hull();
        let radial = hull.radial_fn();
        let sg = SurfaceGraph::new(hull, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0x54524941);
        let points: Vec<SurfacePoint> = (0..12)
            .map(|_| surface_point_at(&radial, sample_direction(&mut rng, 2.0)).unwrap())
            .collect();
        let n = points.len();
        let mut d = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                d[i][j] = sg.induced_distance(&points[i], &points[j]).unwrap();
            }
        }
        for i in 0..n {
            assert_eq!(d[i][i], 0.0);
            for j in 0..n {
                assert!(
                    (d[i][j] - d[j][i]).abs() <= 1e-9,
                    "asymmetry {} vs {}",
                    d[i][j],
                    d[j][i]
                );
                for k in 0..n {
                    assert!(
                        d[i][j] <= d[i][k] + d[k][j] + 1e-9,
                        "triangle violation at ({i},{j},{k})"
                    );
                }
            }
        }
    }

    #[test]
    fn distances_shrink_when_the_graph_refines() {
        // doubling the subdivision keeps every old node, so the arc set
        // grows and shortest paths can only shrink
        let hull = octagon_hull();
        let radial = hull.radial_fn();
        let coarse = SurfaceGraph::new(hull, 4).unwrap();
        let fine = SurfaceGraph::new(hull, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0x5245464e);
        let mut worst_gain = 0.0f64;
        for _ in 0..10 {
            let p = surface_point_at(&radial, sample_direction(&mut rng, 2.0)).unwrap();
            let q = surface_point_at(&radial, sample_direction(&mut rng, 2.0)).unwrap();
            let dc = coarse.induced_distance(&p, &q).unwrap();
            let df = fine.induced_distance(&p, &q).unwrap();
            assert!(df <= dc + 1e-12, "refinement grew {dc} to {df}");
            if dc > 0.0 {
                worst_gain = worst_gain.max((dc - df) / dc);
            }
        }
        println!("refinement 4 -> 8 shrank distances by up to {worst_gain:.3e}");
    }

    #[test]
    fn distances_approximate_the_scaled_hyperbolic_metric() {
        // the dense fixture hugs the radius-2 hyperboloid, whose induced
        // metric is twice the hyperbolic one; the fixture's 200 seeds bound
        // how closely graph distances can track it
        let hull = dense_hull();
        let radial = hull.radial_fn();
        let sg = SurfaceGraph::new(hull, DEFAULT_SEGMENTS).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0x48595042);
        let mut worst = 0.0f64;
        for _ in 0..6 {
            let x = sample_direction(&mut rng, 1.2);
            let y = sample_direction(&mut rng, 1.2);
            let p = surface_point_at(&radial, x).unwrap();
            let q = surface_point_at(&radial, y).unwrap();
            let d = sg.induced_distance(&p, &q).unwrap();
            let want = 2.0 * hyp_dist(x, y).unwrap();
            if want > 0.1 {
                worst = worst.max((d - want).abs() / want);
            }
        }
        println!("graph vs scaled hyperbolic distance: worst relative gap {worst:.3e}");
        assert!(worst < 0.08, "relative gap {worst} at fixture density");
    }

    #[test]
    fn quotient_distance_never_exceeds_the_direct_distance() {
        let hull = dense_hull();
        let radial = hull.radial_fn();
        let sg = SurfaceGraph::new(hull, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0x51554f54);
        for _ in 0..4 {
            let p = surface_point_at(&radial, sample_direction(&mut rng, 1.0)).unwrap();
            let q = surface_point_at(&radial, sample_direction(&mut rng, 1.0)).unwrap();
            let direct = sg.induced_distance(&p, &q).unwrap();
            let quotient = sg.quotient_distance(&p, &q, 24).unwrap();
            assert!(
                quotient <= direct + 1e-12,
                "quotient {quotient} above direct {direct}"
            );
            assert_eq!(sg.quotient_distance(&p, &p, 24).unwrap(), 0.0);
        }
        let p = surface_point_at(&radial, HyperboloidPoint::apex()).unwrap();
        assert!(matches!(
            sg.quotient_distance(&p, &p, 2),
            Err(IntrinsicError::WordCapTooSmall { .. })
        ));
    }

    #[test]
    fn quotient_distance_matches_the_scaled_hyperbolic_quotient() {
        let hull = dense_hull();
        let radial = hull.radial_fn();
        let group = genus2_octagon_group();
        let sg = SurfaceGraph::new(hull, DEFAULT_SEGMENTS).unwrap();
        let elements = group.enumerate_elements(8.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0x514f5243);
        let mut worst = 0.0f64;
        for _ in 0..4 {
            let x = sample_direction(&mut rng, 1.0);
            let y = sample_direction(&mut rng, 1.0);
            let p = surface_point_at(&radial, x).unwrap();
            let q = surface_point_at(&radial, y).unwrap();
            let got = sg.quotient_distance(&p, &q, 24).unwrap();
            let want = elements
                .iter()
                .map(|(_, g)| hyp_dist(x, g.apply_hyp(y)).unwrap())
                .fold(f64::INFINITY, f64::min)
                * 2.0;
            if want > 0.1 {
                worst = worst.max((got - want).abs() / want);
            }
        }
        println!("quotient vs scaled hyperbolic quotient: worst relative gap {worst:.3e}");
        assert!(worst < 0.08, "relative gap {worst} at fixture density");
    }

    #[test]
    fn orbit_gap_is_positive() {
        // feasible only where the radial spread is small: ruling out distant
        // translates costs an enumeration radius proportional to the spread
        // times the candidate distance
        let hull = dense_hull();
        let radial = hull.radial_fn();
        let sg = SurfaceGraph::new(hull, 4).unwrap();
        let p = surface_point_at(&radial, HyperboloidPoint::apex()).unwrap();
        let (gap, word) = sg.orbit_gap(&p, 24).unwrap();
        assert!(!word.is_empty());
        assert!(gap > 1.0, "orbit gap {gap} below the displacement scale");
        println!(
            "orbit gap over the axis: {gap:.6} via word length {}",
            word.len()
        );
    }

    #[test]
    fn length_functional_recovers_scaled_geodesic_lengths() {
        let samples: Vec<HyperboloidPoint> = (0..=2000)
            .map(|i| HyperboloidPoint::from_polar(1.5 * i as f64 / 2000.0, 0.3))
            .collect();
        let plain = length_functional(|_| 1.0, &samples).unwrap();
        assert!((plain - 1.5).abs() < 1e-5, "unit graph length {plain}");
        let scaled = length_functional(|_| 3.7, &samples).unwrap();
        assert!(
            (scaled - 3.7 * 1.5).abs() < 4e-5,
            "scaled graph length {scaled}"
        );
        let apex = HyperboloidPoint::apex();
        let err = length_functional(
            |x| (-10.0 * hyp_dist(x, apex).unwrap()).exp(),
            &samples,
        );
        assert!(matches!(err, Err(IntrinsicError::ImaginaryIntegrand(_))));
    }

    #[test]
    fn length_functional_agrees_with_the_polyline_lift() {
        let samples: Vec<HyperboloidPoint> = (0..=10_000)
            .map(|i| HyperboloidPoint::from_polar(2.0 * i as f64 / 10_000.0, 1.9))
            .collect();
        let functional = length_functional(|_| 2.0, &samples).unwrap();
        let lift: f64 = samples
            .windows(2)
            .map(|w| {
                (2.0 * w[1].as_vec() - 2.0 * w[0].as_vec())
                    .spacelike_norm()
                    .unwrap()
            })
            .sum();
        assert!(
            (functional - lift).abs() < 1e-6,
            "functional {functional} vs lift {lift}"
        );
    }

    #[test]
    fn shortest_paths_stay_on_the_surface() {
        let hull = dense_hull();
        let radial = hull.radial_fn();
        let sg = SurfaceGraph::new(hull, DEFAULT_SEGMENTS).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0x50415448);
        let mut total_jumps = 0usize;
        for _ in 0..5 {
            let p = surface_point_at(&radial, sample_direction(&mut rng, 1.2)).unwrap();
            let q = surface_point_at(&radial, sample_direction(&mut rng, 1.2)).unwrap();
            let path = sg.shortest_path(&p, &q).unwrap();
            let total: f64 = path
                .points
                .windows(2)
                .map(|w| chord_len(w[0], w[1]).unwrap())
                .sum();
            assert!((total - path.length).abs() <= 1e-12 * (1.0 + total));
            let start_err = (path.points[0] - p.position(hull)).spacelike_norm().unwrap_or(0.0);
            let end_err = (*path.points.last().unwrap() - q.position(hull))
                .spacelike_norm()
                .unwrap_or(0.0);
            assert!(start_err <= 1e-12 && end_err <= 1e-12);
            assert!(path.crossed_edges.len() <= path.points.len());
            let taut = sg.taut_path(&p, &q).unwrap();
            assert!(
                taut.length <= path.length + 1e-12,
                "taut {} above graph {}",
                taut.length,
                path.length
            );
            // consecutive points share a face, so segment midpoints lie on
            // the surface
            for w in path.points.windows(2).chain(taut.points.windows(2)) {
                let mid = 0.5 * (w[0] + w[1]);
                let ratio = radial.homogeneous_radial(mid).unwrap();
                assert!(
                    (ratio - 1.0).abs() <= 1e-9,
                    "midpoint left the surface by {ratio}"
                );
            }
            // the height law holds at the creases of taut paths: graph
            // paths kink at subdivision nodes and are exempt
            let prof = f_along_path(&taut).unwrap();
            for seg in &prof.segments {
                assert!((seg.curvature + 2.0).abs() <= 1e-9);
            }
            for &j in &prof.slope_jumps {
                assert!(j >= -1e-9, "concave crease in the height profile: {j}");
                total_jumps += 1;
            }
        }
        println!("checked {total_jumps} crease jumps for convexity");
    }

    #[test]
    fn bad_surface_points_are_rejected() {
        let hull = octagon_hull();
        let sg = SurfaceGraph::new(hull, 2).unwrap();
        let good = SurfacePoint::at_vertex(hull, 0).unwrap();
        let bad_face = SurfacePoint {
            face: hull.faces.len(),
            bary: vec![1.0],
        };
        assert!(matches!(
            sg.induced_distance(&good, &bad_face),
            Err(IntrinsicError::PointOffSurface(_))
        ));
        let bad_sum = SurfacePoint {
            face: 0,
            bary: vec![0.3; hull.faces[0].cycle.len()],
        };
        assert!(matches!(
            sg.induced_distance(&good, &bad_sum),
            Err(IntrinsicError::PointOffSurface(_))
        ));
    }
}
