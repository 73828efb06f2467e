//! Euclidean 3D convex hull via quickhull with conflict lists.
//!
//! Input points are expected in general position (the caller applies a
//! deterministic symbolic perturbation); exactly-degenerate leftovers are
//! resolved by the `ABOVE_EPS` threshold, under which a point counts as
//! interior and is dropped, which at worst turns a flat vertex into an
//! interior point.

use thiserror::Error;

/// A point strictly farther than this above a face plane (unit normal) is
/// outside it. Sits well below the caller's perturbation scale (~1e-12) and
/// well above the predicate round-off for unit-box coordinates (~1e-16).
const ABOVE_EPS: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuickhullError {
    #[error("need at least 4 points affinely spanning 3-space, got {0}")]
    Degenerate(&'static str),
    #[error("hull construction lost face connectivity: {0}")]
    Inconsistent(&'static str),
}

/// One triangle of the hull boundary, with outward unit normal and plane
/// offset (`normal . x = offset`), vertices in counterclockwise order seen
/// from outside.
#[derive(Debug, Clone, Copy)]
pub struct HullTriangle {
    pub v: [usize; 3],
    pub normal: [f64; 3],
    #[allow(dead_code)]
    pub offset: f64,
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

struct Face {
    v: [usize; 3],
    n: [f64; 3],
    d: f64,
    /// neighbor across the directed edge (v[i], v[i+1])
    nbr: [usize; 3],
    conflicts: Vec<usize>,
    alive: bool,
}

impl Face {
    fn signed(&self, p: [f64; 3]) -> f64 {
        dot(self.n, p) - self.d
    }

    fn edge(&self, k: usize) -> (usize, usize) {
        (self.v[k], self.v[(k + 1) % 3])
    }
}

fn make_plane(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> Option<([f64; 3], f64)> {
    let n = cross(sub(b, a), sub(c, a));
    let len = norm(n);
    if len < 1e-300 {
        return None;
    }
    let n = [n[0] / len, n[1] / len, n[2] / len];
    let d = (dot(n, a) + dot(n, b) + dot(n, c)) / 3.0;
    Some((n, d))
}

/// Computes the convex hull of `pts`, returning its triangles.
pub fn convex_hull_3d(pts: &[[f64; 3]]) -> Result<Vec<HullTriangle>, QuickhullError> {
    if pts.len() < 4 {
        return Err(QuickhullError::Degenerate("fewer than 4 points"));
    }
    let (mut lo, mut hi) = (pts[0], pts[0]);
    for p in pts {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let diag = norm(sub(hi, lo)).max(1e-300);
    let flat = 1e-12 * diag;

    // initial simplex: lexicographic extreme, farthest point, farthest from
    // the line, farthest from the plane
    let i0 = (0..pts.len())
        .min_by(|&a, &b| pts[a].partial_cmp(&pts[b]).unwrap())
        .unwrap();
    let i1 = (0..pts.len())
        .max_by(|&a, &b| {
            norm(sub(pts[a], pts[i0]))
                .partial_cmp(&norm(sub(pts[b], pts[i0])))
                .unwrap()
        })
        .unwrap();
    if norm(sub(pts[i1], pts[i0])) < flat {
        return Err(QuickhullError::Degenerate("all points coincide"));
    }
    let axis = sub(pts[i1], pts[i0]);
    let line_dist = |p: [f64; 3]| norm(cross(sub(p, pts[i0]), axis)) / norm(axis);
    let i2 = (0..pts.len())
        .max_by(|&a, &b| line_dist(pts[a]).partial_cmp(&line_dist(pts[b])).unwrap())
        .unwrap();
    if line_dist(pts[i2]) < flat {
        return Err(QuickhullError::Degenerate("all points collinear"));
    }
    let (n0, d0) = make_plane(pts[i0], pts[i1], pts[i2]).unwrap();
    let plane_dist = |p: [f64; 3]| (dot(n0, p) - d0).abs();
    let i3 = (0..pts.len())
        .max_by(|&a, &b| plane_dist(pts[a]).partial_cmp(&plane_dist(pts[b])).unwrap())
        .unwrap();
    if plane_dist(pts[i3]) < flat {
        return Err(QuickhullError::Degenerate("all points coplanar"));
    }

    let interior = {
        let mut c = [0.0; 3];
        for i in [i0, i1, i2, i3] {
            for k in 0..3 {
                c[k] += pts[i][k] / 4.0;
            }
        }
        c
    };

    let mut faces: Vec<Face> = Vec::new();
    for tri in [[i0, i1, i2], [i0, i1, i3], [i0, i2, i3], [i1, i2, i3]] {
        let (mut v, mut plane) = (
            tri,
            make_plane(pts[tri[0]], pts[tri[1]], pts[tri[2]])
                .ok_or(QuickhullError::Degenerate("flat simplex face"))?,
        );
        if dot(plane.0, interior) - plane.1 > 0.0 {
            v.swap(1, 2);
            plane = (
                [-plane.0[0], -plane.0[1], -plane.0[2]],
                -plane.1,
            );
        }
        faces.push(Face { v, n: plane.0, d: plane.1, nbr: [usize::MAX; 3], conflicts: Vec::new(), alive: true });
    }
    // link the four simplex faces through their shared directed edges
    link_all(&mut faces)?;

    for (i, p) in pts.iter().enumerate() {
        if i == i0 || i == i1 || i == i2 || i == i3 {
            continue;
        }
        for f in 0..4 {
            if faces[f].signed(*p) > ABOVE_EPS {
                faces[f].conflicts.push(i);
                break;
            }
        }
    }

    let mut queue: std::collections::VecDeque<usize> = (0..4).collect();
    let mut stamp: Vec<u32> = vec![0; 4];
    let mut epoch = 0u32;
    let mut steps = 0usize;
    let max_steps = 20 * pts.len() + 1000;

    while let Some(fi) = queue.pop_front() {
        if !faces[fi].alive || faces[fi].conflicts.is_empty() {
            continue;
        }
        steps += 1;
        if steps > max_steps {
            return Err(QuickhullError::Inconsistent("no convergence"));
        }
        let p_idx = *faces[fi]
            .conflicts
            .iter()
            .max_by(|&&a, &&b| {
                faces[fi]
                    .signed(pts[a])
                    .partial_cmp(&faces[fi].signed(pts[b]))
                    .unwrap()
            })
            .unwrap();
        let p = pts[p_idx];

        // flood the faces visible from p; edges to hidden faces form the horizon
        epoch += 1;
        let mut visible = vec![fi];
        stamp[fi] = epoch;
        let mut horizon: Vec<(usize, usize, usize)> = Vec::new();
        let mut walk = 0;
        while walk < visible.len() {
            let f = visible[walk];
            walk += 1;
            for k in 0..3 {
                let g = faces[f].nbr[k];
                if g == usize::MAX {
                    return Err(QuickhullError::Inconsistent("open boundary"));
                }
                if stamp[g] == epoch {
                    continue;
                }
                if faces[g].signed(p) > ABOVE_EPS {
                    stamp[g] = epoch;
                    visible.push(g);
                } else {
                    let (a, b) = faces[f].edge(k);
                    horizon.push((a, b, g));
                }
            }
        }

        // chain the horizon into a single cycle
        let mut next: std::collections::HashMap<usize, (usize, usize)> =
            std::collections::HashMap::with_capacity(horizon.len());
        for &(a, b, g) in &horizon {
            if next.insert(a, (b, g)).is_some() {
                return Err(QuickhullError::Inconsistent("branching horizon"));
            }
        }
        let start = horizon[0].0;
        let mut cycle: Vec<(usize, usize, usize)> = Vec::with_capacity(horizon.len());
        let mut a = start;
        loop {
            let (b, g) = *next
                .get(&a)
                .ok_or(QuickhullError::Inconsistent("broken horizon"))?;
            cycle.push((a, b, g));
            a = b;
            if a == start {
                break;
            }
        }
        if cycle.len() != horizon.len() {
            return Err(QuickhullError::Inconsistent("split horizon"));
        }

        // new faces (a, b, p) inherit the outward orientation of the visible
        // side; neighbors: across (a,b) the hidden face, across the p-edges
        // the adjacent new faces in cycle order
        let base = faces.len();
        let m = cycle.len();
        for (j, &(a, b, hidden)) in cycle.iter().enumerate() {
            let (n, d) = make_plane(pts[a], pts[b], p)
                .ok_or(QuickhullError::Degenerate("flat horizon face"))?;
            if dot(n, interior) - d >= ABOVE_EPS {
                return Err(QuickhullError::Inconsistent("interior above a new face"));
            }
            let prev = base + (j + m - 1) % m;
            let nxt = base + (j + 1) % m;
            faces.push(Face {
                v: [a, b, p_idx],
                n,
                d,
                nbr: [hidden, nxt, prev],
                conflicts: Vec::new(),
                alive: true,
            });
            stamp.push(0);
            // fix the hidden face's pointer to the replaced visible face
            let h = &mut faces[hidden];
            let mut fixed = false;
            for k in 0..3 {
                if h.edge(k) == (b, a) {
                    h.nbr[k] = base + j;
                    fixed = true;
                }
            }
            if !fixed {
                return Err(QuickhullError::Inconsistent("edge not shared"));
            }
        }

        // redistribute the conflicts of the removed faces
        for &f in &visible {
            faces[f].alive = false;
            let orphans = std::mem::take(&mut faces[f].conflicts);
            for o in orphans {
                if o == p_idx {
                    continue;
                }
                for j in 0..m {
                    if faces[base + j].signed(pts[o]) > ABOVE_EPS {
                        faces[base + j].conflicts.push(o);
                        break;
                    }
                }
            }
        }
        for j in 0..m {
            queue.push_back(base + j);
        }
    }

    Ok(faces
        .into_iter()
        .filter(|f| f.alive)
        .map(|f| HullTriangle { v: f.v, normal: f.n, offset: f.d })
        .collect())
}

fn link_all(faces: &mut [Face]) -> Result<(), QuickhullError> {
    let mut by_edge: std::collections::HashMap<(usize, usize), (usize, usize)> =
        std::collections::HashMap::new();
    for (i, f) in faces.iter().enumerate() {
        for k in 0..3 {
            if by_edge.insert(f.edge(k), (i, k)).is_some() {
                return Err(QuickhullError::Inconsistent("duplicate directed edge"));
            }
        }
    }
    for i in 0..faces.len() {
        for k in 0..3 {
            let (a, b) = faces[i].edge(k);
            let (j, _) = *by_edge
                .get(&(b, a))
                .ok_or(QuickhullError::Inconsistent("unmatched edge"))?;
            faces[i].nbr[k] = j;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn hull_vertex_set(tris: &[HullTriangle]) -> HashSet<usize> {
        tris.iter().flat_map(|t| t.v).collect()
    }

    fn check_watertight(tris: &[HullTriangle]) {
        // every directed edge appears exactly once, and its reverse exists
        let mut edges = HashSet::new();
        for t in tris {
            for k in 0..3 {
                assert!(edges.insert((t.v[k], t.v[(k + 1) % 3])), "duplicate edge");
            }
        }
        for &(a, b) in &edges {
            assert!(edges.contains(&(b, a)), "unmatched edge ({a},{b})");
        }
    }

    fn check_all_below(pts: &[[f64; 3]], tris: &[HullTriangle]) {
        for t in tris {
            for p in pts {
                let s = dot(t.normal, *p) - t.offset;
                assert!(s <= 1e-12, "point {s:.3e} above a hull face");
            }
        }
    }

    #[test]
    fn cube_with_interior_points() {
        let mut pts: Vec<[f64; 3]> = Vec::new();
        for x in [0.0, 1.0] {
            for y in [0.0, 1.0] {
                for z in [0.0, 1.0] {
                    pts.push([x, y, z]);
                }
            }
        }
        pts.push([0.5, 0.5, 0.5]);
        pts.push([0.25, 0.75, 0.5]);
        let tris = convex_hull_3d(&pts).unwrap();
        assert_eq!(tris.len(), 12);
        let verts = hull_vertex_set(&tris);
        assert_eq!(verts.len(), 8);
        assert!(!verts.contains(&8) && !verts.contains(&9));
        check_watertight(&tris);
        check_all_below(&pts, &tris);
    }

    #[test]
    fn random_sphere_points_are_all_vertices() {
        let mut rng = ChaCha8Rng::seed_from_u64(90301);
        let n = 400;
        let pts: Vec<[f64; 3]> = (0..n)
            .map(|_| {
                let v = [
                    rng.gen::<f64>() - 0.5,
                    rng.gen::<f64>() - 0.5,
                    rng.gen::<f64>() - 0.5,
                ];
                let r = norm(v).max(1e-9);
                [v[0] / r, v[1] / r, v[2] / r]
            })
            .collect();
        let tris = convex_hull_3d(&pts).unwrap();
        assert_eq!(hull_vertex_set(&tris).len(), n);
        // triangulated sphere: F = 2V - 4
        assert_eq!(tris.len(), 2 * n - 4);
        check_watertight(&tris);
        check_all_below(&pts, &tris);
    }

    #[test]
    fn random_cloud_hull_contains_cloud() {
        let mut rng = ChaCha8Rng::seed_from_u64(90302);
        let pts: Vec<[f64; 3]> = (0..2000)
            .map(|_| [rng.gen::<f64>(), rng.gen::<f64>() * 2.0, rng.gen::<f64>() - 3.0])
            .collect();
        let tris = convex_hull_3d(&pts).unwrap();
        check_watertight(&tris);
        check_all_below(&pts, &tris);
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        assert!(convex_hull_3d(&[[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]).is_err());
        let coplanar: Vec<[f64; 3]> = (0..10)
            .map(|i| [i as f64, (i * i) as f64, 0.0])
            .collect();
        assert!(matches!(
            convex_hull_3d(&coplanar),
            Err(QuickhullError::Degenerate(_))
        ));
        let collinear: Vec<[f64; 3]> = (0..5).map(|i| [i as f64, 0.0, 0.0]).collect();
        assert!(matches!(
            convex_hull_3d(&collinear),
            Err(QuickhullError::Degenerate(_))
        ));
    }
}
