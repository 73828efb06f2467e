//! Margin reports for the metric inequalities a radial-graph surface
//! satisfies against the hyperbolic plane: two-sided distance comparison,
//! the pointwise tangent-height cap, the projection length estimate, and
//! the displacement bounds for the acting group.

use crate::fuchsian::{translation_length, FuchsianError, FuchsianGroup, GroupWord};
use crate::hull::{HullComplex, HullError};
use crate::intrinsic::{
    f_along_path, surface_point_at, translate_point, GeodesicPath, IntrinsicError, SurfaceGraph,
    SurfacePoint,
};
use crate::lorentz::{hyp_dist, HyperboloidPoint, LorentzError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

/// Floor for inequality margins: absorbs f64 rounding of the distance sums
/// and inner products entering either side, which stay far below this at
/// the coordinate scales of genus-two hulls.
const ANALYTIC_TOL: f64 = 1e-9;

/// Rejection attempts per sampled direction before the sampler reports the
/// certified window as too small.
const SAMPLE_ATTEMPTS: usize = 64;

/// Slack for fundamental-domain membership so walls do not exclude their
/// own boundary vertices.
const DOMAIN_SLACK: f64 = 1e-12;

/// Sampling radius for displacement base points. The orbit-gap search must
/// evaluate every translate within `stretch` times the running minimum, so
/// base points stay near the apex to keep that whole window inside the
/// certified face coverage.
const GAP_SAMPLE_RADIUS: f64 = 0.1;

#[derive(Debug, Error)]
pub enum BoundsError {
    #[error("no certified direction found after {0} attempts")]
    SamplerStarved(usize),
    #[error("hull has no vertex inside the fundamental domain")]
    NoDomainVertex,
    #[error(transparent)]
    Lorentz(#[from] LorentzError),
    #[error(transparent)]
    Fuchsian(#[from] FuchsianError),
    #[error(transparent)]
    Hull(#[from] HullError),
    #[error(transparent)]
    Intrinsic(#[from] IntrinsicError),
}

/// Outcome of one inequality check: the worst margin `RHS - LHS` over the
/// samples and how many samples fell below the tolerance.
#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub name: String,
    pub samples: usize,
    pub worst_margin: f64,
    pub violations: usize,
    pub tolerance: f64,
    /// Seed of the direction sampler, recorded for reproducibility; absent
    /// for checks with no random input.
    pub rng_seed: Option<u64>,
}

pub(crate) struct MarginTally {
    samples: usize,
    worst: f64,
    violations: usize,
    tolerance: f64,
}

impl MarginTally {
    pub(crate) fn new(tolerance: f64) -> Self {
        MarginTally {
            samples: 0,
            worst: f64::INFINITY,
            violations: 0,
            tolerance,
        }
    }

    pub(crate) fn add(&mut self, margin: f64) {
        self.samples += 1;
        if margin < self.worst {
            self.worst = margin;
        }
        if margin < -self.tolerance {
            self.violations += 1;
        }
    }

    pub(crate) fn report(self, name: &str, rng_seed: Option<u64>) -> BoundReport {
        BoundReport {
            name: name.to_string(),
            samples: self.samples,
            worst_margin: self.worst,
            violations: self.violations,
            tolerance: self.tolerance,
            rng_seed,
        }
    }
}

/// Area-uniform direction in the disk of radius `r_max` around the apex,
/// rejected until it lies in the window certified by the kept faces.
fn sample_covered_direction(
    sg: &SurfaceGraph<'_>,
    rng: &mut ChaCha8Rng,
    r_max: f64,
) -> Result<HyperboloidPoint, BoundsError> {
    let cosh_max = r_max.cosh();
    for _ in 0..SAMPLE_ATTEMPTS {
        let r = (1.0 + rng.gen::<f64>() * (cosh_max - 1.0)).acosh();
        let theta = rng.gen::<f64>() * std::f64::consts::TAU;
        let x = HyperboloidPoint::from_polar(r, theta);
        if sg.radial().is_covered(x) {
            return Ok(x);
        }
    }
    Err(BoundsError::SamplerStarved(SAMPLE_ATTEMPTS))
}

/// Two-sided comparison of the graph distance with the hyperbolic distance
/// of the projected directions: for sampled pairs,
/// `d_h / stretch <= d_u * (1 + eps)` and `d_u / (1 + eps) <= beta * d_h`,
/// where `stretch = 1/alpha + sqrt(beta^2 - alpha^2)/alpha^2` and `eps` is
/// the graph overestimate budget. Each sample's margin is the smaller of
/// the two sides.
pub fn bilipschitz_check(
    sg: &SurfaceGraph<'_>,
    n_pairs: usize,
    rng_seed: u64,
) -> Result<BoundReport, BoundsError> {
    let (alpha, beta) = sg.hull().radial_extremes()?;
    let stretch = 1.0 / alpha + (beta * beta - alpha * alpha).max(0.0).sqrt() / (alpha * alpha);
    let eps = sg.overestimate_budget();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let r_max = sg.hull().group().covering_radius();
    let mut tally = MarginTally::new(ANALYTIC_TOL * beta.max(1.0));
    // pairs grouped by a shared base point, so a group costs one sweep
    let per_start = (n_pairs as f64).sqrt().ceil() as usize;
    let mut remaining = n_pairs;
    while remaining > 0 {
        let k = per_start.min(remaining);
        remaining -= k;
        let x = sample_covered_direction(sg, &mut rng, r_max)?;
        let p = surface_point_at(sg.radial(), x)?;
        let mut dirs = Vec::with_capacity(k);
        let mut qs = Vec::with_capacity(k);
        for _ in 0..k {
            let y = sample_covered_direction(sg, &mut rng, r_max)?;
            qs.push(surface_point_at(sg.radial(), y)?);
            dirs.push(y);
        }
        for (y, du) in dirs.iter().zip(sg.induced_distances_from(&p, &qs)?) {
            let dh = hyp_dist(x, *y)?;
            let lower = du * (1.0 + eps) - dh / stretch;
            let upper = beta * dh - du / (1.0 + eps);
            tally.add(lower.min(upper));
        }
    }
    Ok(tally.report("bilipschitz", Some(rng_seed)))
}

/// Pointwise cap on the height slope along a path: on every segment the
/// squared inner product of position and unit tangent stays below
/// `beta^2 - alpha^2`. The inner product is affine per segment, so its
/// extremes sit at the segment endpoints.
pub fn chord_tangent_check(
    path: &GeodesicPath,
    alpha: f64,
    beta: f64,
) -> Result<BoundReport, BoundsError> {
    let profile = f_along_path(path)?;
    let cap = beta * beta - alpha * alpha;
    let mut tally = MarginTally::new(ANALYTIC_TOL * (beta * beta).max(1.0));
    for seg in &profile.segments {
        let worst = seg.slope_start.abs().max(seg.slope_end.abs());
        tally.add(cap - worst * worst / 4.0);
    }
    Ok(tally.report("chord_tangent", None))
}

/// Pathwise projection estimate: the hyperbolic distance of the projected
/// endpoints is at most `L/alpha + I/alpha^2`, with `L` the graph path
/// length and `I` the exact integral of `|<c, c'>|` along that path. The
/// estimate holds per path, so the graph approximation is already inside
/// the right-hand side.
pub fn projection_estimate_check(
    sg: &SurfaceGraph<'_>,
    n_pairs: usize,
    rng_seed: u64,
) -> Result<BoundReport, BoundsError> {
    let (alpha, _) = sg.hull().radial_extremes()?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let r_max = sg.hull().group().covering_radius();
    let mut tally = MarginTally::new(ANALYTIC_TOL * (1.0 / alpha).max(1.0));
    for _ in 0..n_pairs {
        let x = sample_covered_direction(sg, &mut rng, r_max)?;
        let y = sample_covered_direction(sg, &mut rng, r_max)?;
        let p = surface_point_at(sg.radial(), x)?;
        let q = surface_point_at(sg.radial(), y)?;
        let path = sg.shortest_path(&p, &q)?;
        let profile = f_along_path(&path)?;
        let rhs = path.length / alpha + profile.integral_abs / (alpha * alpha);
        tally.add(rhs - hyp_dist(x, y)?);
    }
    Ok(tally.report("projection_estimate", Some(rng_seed)))
}

/// Highest hull vertex (by the height `f(y) = -<y,y>`) whose direction lies
/// in the fundamental domain around the apex, lowest index among ties: the
/// deterministic base point of the displacement estimates.
pub fn height_max_vertex(hull: &HullComplex) -> Result<usize, BoundsError> {
    let neighbors = hull.group().dirichlet_neighbors()?;
    let apex = HyperboloidPoint::apex();
    let mut best: Option<(f64, usize)> = None;
    'vertices: for (v, &y) in hull.vertices.iter().enumerate() {
        let x = y.radial_project()?;
        let d0 = hyp_dist(x, apex)?;
        for (_, g) in &neighbors {
            if d0 > hyp_dist(x, g.apply_hyp(apex))? + DOMAIN_SLACK {
                continue 'vertices;
            }
        }
        let f = -y.mink_norm2();
        if best.map_or(true, |(bf, _)| f > bf) {
            best = Some((f, v));
        }
    }
    best.map(|(_, v)| v).ok_or(BoundsError::NoDomainVertex)
}

/// Quadratic cap on the height variation along a taut shortest path from
/// the base vertex to its image under `gamma`: the exact integral of
/// `|<c, c'>|` is at most half the squared path length. Taut paths carry
/// the crease law (non-negative slope jumps) that the cap rests on.
pub fn fmax_integral_check(
    sg: &SurfaceGraph<'_>,
    group: &FuchsianGroup,
    gamma: &GroupWord,
) -> Result<BoundReport, BoundsError> {
    let hull = sg.hull();
    let p = SurfacePoint::at_vertex(hull, height_max_vertex(hull)?)?;
    let g = group.evaluate(gamma)?;
    let q = translate_point(sg.radial(), &p, &g)?;
    let path = sg.taut_path(&p, &q)?;
    let profile = f_along_path(&path)?;
    let l = path.length;
    let mut tally = MarginTally::new(ANALYTIC_TOL * (l * l).max(1.0));
    tally.add(l * l / 2.0 - profile.integral_abs);
    Ok(tally.report("fmax_integral", None))
}

/// Displacement bound per generator: the hyperbolic translation length is
/// at most `B/alpha + B^2/(2 alpha^2)`, with `B` the graph distance from
/// the base vertex to its image. The graph overestimates `B`, and the
/// right-hand side grows with `B`, so the graph error only adds slack.
pub fn translation_length_bound_check(
    sg: &SurfaceGraph<'_>,
    group: &FuchsianGroup,
) -> Result<BoundReport, BoundsError> {
    let (alpha, _) = sg.hull().radial_extremes()?;
    translation_length_bound_with_alpha(sg, group, alpha)
}

/// Same displacement bound with the lower radial bound supplied by the
/// caller, so the check can run as its own negative control with a
/// deliberately corrupted value.
pub fn translation_length_bound_with_alpha(
    sg: &SurfaceGraph<'_>,
    group: &FuchsianGroup,
    alpha: f64,
) -> Result<BoundReport, BoundsError> {
    let hull = sg.hull();
    let p = SurfacePoint::at_vertex(hull, height_max_vertex(hull)?)?;
    let mut tally = MarginTally::new(ANALYTIC_TOL);
    for g in group.generators() {
        let q = translate_point(sg.radial(), &p, g)?;
        let b = sg.induced_distance(&p, &q)?;
        let rhs = b / alpha + b * b / (2.0 * alpha * alpha);
        tally.add(rhs - translation_length(g)?);
    }
    Ok(tally.report("translation_length", None))
}

/// Consistency of the displacement chain: the smallest sampled nontrivial
/// displacement `G` on the surface must stay positive and below
/// `sqrt(2) * alpha * sqrt(cosh(R) - 1)`, where `R` is the radius at which
/// the group is guaranteed to displace every direction. A non-positive `G`
/// counts as a violation.
pub fn lower_bound_argument_check(
    sg: &SurfaceGraph<'_>,
    group: &FuchsianGroup,
    n_points: usize,
    word_cap: usize,
    rng_seed: u64,
) -> Result<BoundReport, BoundsError> {
    let (alpha, _) = sg.hull().radial_extremes()?;
    let r = group.guaranteed_displacement_radius();
    let rhs = std::f64::consts::SQRT_2 * alpha * (r.cosh() - 1.0).sqrt();
    let tolerance = ANALYTIC_TOL * rhs.max(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut g_min = f64::INFINITY;
    for _ in 0..n_points {
        let x = sample_covered_direction(sg, &mut rng, GAP_SAMPLE_RADIUS)?;
        let p = surface_point_at(sg.radial(), x)?;
        let (gap, _) = sg.orbit_gap(&p, word_cap)?;
        g_min = g_min.min(gap);
    }
    let margin = rhs - g_min;
    let violations = usize::from(margin < -tolerance || !(g_min > 0.0));
    Ok(BoundReport {
        name: "lower_bound".to_string(),
        samples: n_points,
        worst_margin: margin,
        violations,
        tolerance,
        rng_seed: Some(rng_seed),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fuchsian::genus2_octagon_group;
    use crate::hull::fuchsian_hull;
    use crate::lorentz::LorentzVec;
    use crate::testfix::{dense_hull, octagon_hull};
    use std::sync::OnceLock;

    fn doubled_octagon_hull() -> &'static HullComplex {
        static HULL: OnceLock<HullComplex> = OnceLock::new();
        HULL.get_or_init(|| {
            let group = genus2_octagon_group();
            let apex = LorentzVec { x1: 0.0, x2: 0.0, x3: 2.0 };
            fuchsian_hull(&group, &[apex], 5.0).expect("doubled octagon hull")
        })
    }

    #[test]
    fn bilipschitz_holds_on_the_single_orbit_hull() {
        let sg = SurfaceGraph::new(octagon_hull(), 4).unwrap();
        let report = bilipschitz_check(&sg, 40, 4242).unwrap();
        assert_eq!(report.samples, 40);
        assert_eq!(report.violations, 0);
        assert!(report.worst_margin > 0.0);
    }

    #[test]
    fn bilipschitz_holds_on_the_scaled_hyperboloid_hull() {
        let sg = SurfaceGraph::new(dense_hull(), 4).unwrap();
        let report = bilipschitz_check(&sg, 12, 99).unwrap();
        assert_eq!(report.violations, 0);
        assert!(report.worst_margin > 0.0);
    }

    #[test]
    fn bilipschitz_margins_scale_with_the_hull() {
        let sg1 = SurfaceGraph::new(octagon_hull(), 4).unwrap();
        let sg2 = SurfaceGraph::new(doubled_octagon_hull(), 4).unwrap();
        let r1 = bilipschitz_check(&sg1, 10, 7).unwrap();
        let r2 = bilipschitz_check(&sg2, 10, 7).unwrap();
        assert_eq!(r1.violations, r2.violations);
        assert!(
            (r2.worst_margin - 2.0 * r1.worst_margin).abs()
                <= 1e-9 * (1.0 + 2.0 * r1.worst_margin.abs())
        );
    }

    #[test]
    fn reports_are_deterministic_for_a_fixed_seed() {
        let sg = SurfaceGraph::new(octagon_hull(), 4).unwrap();
        let a = bilipschitz_check(&sg, 8, 31).unwrap();
        let b = bilipschitz_check(&sg, 8, 31).unwrap();
        assert_eq!(a.worst_margin.to_bits(), b.worst_margin.to_bits());
        assert_eq!(a.violations, b.violations);
        assert_eq!(a.rng_seed, Some(31));
    }

    #[test]
    fn chord_tangent_holds_along_shortest_paths() {
        for hull in [octagon_hull(), dense_hull()] {
            let sg = SurfaceGraph::new(hull, 4).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(17);
            let r_max = hull.group().covering_radius();
            let x = sample_covered_direction(&sg, &mut rng, r_max).unwrap();
            let y = sample_covered_direction(&sg, &mut rng, r_max).unwrap();
            let p = surface_point_at(sg.radial(), x).unwrap();
            let q = surface_point_at(sg.radial(), y).unwrap();
            let path = sg.shortest_path(&p, &q).unwrap();
            let (alpha, beta) = hull.radial_extremes().unwrap();
            let report = chord_tangent_check(&path, alpha, beta).unwrap();
            assert!(report.samples > 0);
            assert_eq!(report.violations, 0);
        }
    }

    #[test]
    fn chord_tangent_flags_an_understated_bound() {
        let sg = SurfaceGraph::new(octagon_hull(), 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let r_max = sg.hull().group().covering_radius();
        let x = sample_covered_direction(&sg, &mut rng, r_max).unwrap();
        let y = sample_covered_direction(&sg, &mut rng, r_max).unwrap();
        let p = surface_point_at(sg.radial(), x).unwrap();
        let q = surface_point_at(sg.radial(), y).unwrap();
        let path = sg.shortest_path(&p, &q).unwrap();
        let (alpha, _) = sg.hull().radial_extremes().unwrap();
        let report = chord_tangent_check(&path, alpha, alpha).unwrap();
        assert!(report.violations > 0);
        assert!(report.worst_margin < 0.0);
    }

    #[test]
    fn projection_estimate_holds_for_sampled_pairs() {
        let sg = SurfaceGraph::new(octagon_hull(), 4).unwrap();
        let report = projection_estimate_check(&sg, 25, 11).unwrap();
        assert_eq!(report.samples, 25);
        assert_eq!(report.violations, 0);
        assert!(report.worst_margin >= 0.0);
    }

    #[test]
    fn height_max_vertex_stays_in_the_fundamental_domain() {
        let hull = octagon_hull();
        let v = height_max_vertex(hull).unwrap();
        let y = hull.vertices[v];
        assert!(y.x1.abs() < 1e-9 && y.x2.abs() < 1e-9 && (y.x3 - 1.0).abs() < 1e-9);

        let dense = dense_hull();
        let w = height_max_vertex(dense).unwrap();
        let x = dense.vertices[w].radial_project().unwrap();
        let apex = HyperboloidPoint::apex();
        let d0 = hyp_dist(x, apex).unwrap();
        for (_, g) in dense.group().dirichlet_neighbors().unwrap() {
            assert!(d0 <= hyp_dist(x, g.apply_hyp(apex)).unwrap() + DOMAIN_SLACK);
        }
    }

    #[test]
    fn fmax_integral_bound_holds_for_every_generator() {
        let group = genus2_octagon_group();
        let sg = SurfaceGraph::new(octagon_hull(), 4).unwrap();
        let id = fmax_integral_check(&sg, &group, &GroupWord::identity()).unwrap();
        assert_eq!(id.violations, 0);
        assert_eq!(id.worst_margin, 0.0);
        for i in 1..=4 {
            let gamma = GroupWord::from_letters([i as i16]).unwrap();
            let report = fmax_integral_check(&sg, &group, &gamma).unwrap();
            assert_eq!(report.violations, 0, "generator {i}");
            assert!(report.worst_margin >= 0.0, "generator {i}");
        }
    }

    #[test]
    fn fmax_integral_margin_scales_quadratically() {
        let group = genus2_octagon_group();
        let gamma = GroupWord::from_letters([1]).unwrap();
        let sg1 = SurfaceGraph::new(octagon_hull(), 4).unwrap();
        let sg2 = SurfaceGraph::new(doubled_octagon_hull(), 4).unwrap();
        let m1 = fmax_integral_check(&sg1, &group, &gamma).unwrap().worst_margin;
        let m2 = fmax_integral_check(&sg2, &group, &gamma).unwrap().worst_margin;
        assert!((m2 - 4.0 * m1).abs() <= 1e-6 * (1.0 + 4.0 * m1.abs()));
    }

    #[test]
    fn translation_length_bound_holds_for_the_generators() {
        let group = genus2_octagon_group();
        let sg1 = SurfaceGraph::new(octagon_hull(), 4).unwrap();
        let r1 = translation_length_bound_check(&sg1, &group).unwrap();
        assert_eq!(r1.samples, group.generators().len());
        assert_eq!(r1.violations, 0);
        assert!(r1.worst_margin > 0.0);

        let sg2 = SurfaceGraph::new(doubled_octagon_hull(), 4).unwrap();
        let r2 = translation_length_bound_check(&sg2, &group).unwrap();
        assert_eq!(r2.violations, 0);
        assert!((r2.worst_margin - r1.worst_margin).abs() <= 1e-9 * (1.0 + r1.worst_margin.abs()));
    }

    #[test]
    fn translation_length_bound_fires_with_an_overstated_alpha() {
        let group = genus2_octagon_group();
        let sg = SurfaceGraph::new(octagon_hull(), 4).unwrap();
        let (alpha, _) = sg.hull().radial_extremes().unwrap();
        let report = translation_length_bound_with_alpha(&sg, &group, 10.0 * alpha).unwrap();
        assert!(report.violations > 0);
        assert!(report.worst_margin < 0.0);
    }

    #[test]
    fn displacement_chain_is_consistent_on_the_dense_hull() {
        let group = genus2_octagon_group();
        let sg = SurfaceGraph::new(dense_hull(), 4).unwrap();
        let report = lower_bound_argument_check(&sg, &group, 2, 12, 5).unwrap();
        assert_eq!(report.violations, 0);
        let (alpha, _) = sg.hull().radial_extremes().unwrap();
        let rhs = std::f64::consts::SQRT_2
            * alpha
            * (group.guaranteed_displacement_radius().cosh() - 1.0).sqrt();
        assert!(report.worst_margin > 0.0 && report.worst_margin < rhs);
    }
}
