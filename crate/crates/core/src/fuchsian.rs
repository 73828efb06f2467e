//! Discrete groups of hyperbolic-plane isometries, represented as linear
//! maps of Minkowski space preserving the future hyperboloid.
//!
//! The concrete group shipped here is the genus-2 surface group generated by
//! four boosts through the corners of a regular hyperbolic octagon; all
//! orbit enumeration, translation lengths and normalization work through
//! the 3x3 matrix representation.

use crate::lorentz::{hyp_dist, HyperboloidPoint, LorentzError, LorentzVec};
use nalgebra::{Matrix2, Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, VecDeque};
use std::f64::consts::{FRAC_PI_8, PI};
use thiserror::Error;

/// Frobenius distance below which a matrix counts as the identity.
pub const IDENTITY_TOL: f64 = 1e-8;

/// Largest acceptable Frobenius residual for the defining relator.
pub const RELATOR_TOL: f64 = 1e-8;

/// Base tolerance for the quadratic-form invariance check `m^T J m = J`.
/// The check product itself rounds at ulp(|m|^2), so the effective
/// tolerance scales with the squared magnitude of the matrix entries.
pub const FORM_TOL: f64 = 1e-9;

/// Trace band around 3 inside which a non-identity element is parabolic.
const PARABOLIC_BAND: f64 = 1e-9;

/// Determinant tolerance for 2x2 inputs to the double-cover map.
const SL2_DET_TOL: f64 = 1e-12;

/// Default cap on enumerated orbit size.
pub const DEFAULT_ORBIT_CAP: usize = 1_000_000;

/// Extra exploration slack added to the covering radius during breadth-first
/// enumeration, absorbing round-off in displacement comparisons.
const BFS_MARGIN_SLACK: f64 = 0.3;

/// Side length of the hash cells (in the unit-disk chart) used to bucket
/// orbit points during enumeration.
const DEDUPE_CELL: f64 = 1e-6;

/// Two enumerated orbit points closer than this (hyperbolic distance) are
/// the same point: round-off separates duplicates by at most ~1e-8, while
/// distinct orbit points are at least a systole (~3) apart.
const DEDUPE_DIST: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FuchsianError {
    #[error("matrix does not preserve the Minkowski form: residual {0:.3e}")]
    NonIsometry(f64),
    #[error("matrix determinant {0} is not +1")]
    BadDeterminant(f64),
    #[error("matrix reverses time orientation (bottom-right entry {0})")]
    NotTimeOriented(f64),
    #[error("matrix has a non-finite entry")]
    NonFiniteMatrix,
    #[error("elliptic isometry (trace {0}) has no translation length")]
    Elliptic(f64),
    #[error("parabolic isometry (trace {0}) has no translation length")]
    Parabolic(f64),
    #[error("the identity has no axis")]
    NoAxis,
    #[error("relator word does not evaluate to the identity: residual {0:.3e}")]
    RelatorNotIdentity(f64),
    #[error("generator {index} is not hyperbolic: trace {trace}")]
    NotHyperbolicGenerator { index: usize, trace: f64 },
    #[error("genus {0} is below 2")]
    GenusTooSmall(usize),
    #[error("expected {expected} generators for genus {genus}, got {got}")]
    WrongGeneratorCount { expected: usize, genus: usize, got: usize },
    #[error("covering radius {0} must be positive and finite")]
    BadCoveringRadius(f64),
    #[error("word letter {0} does not index a generator")]
    LetterOutOfRange(i16),
    #[error("estimated orbit size {estimate:.3e} exceeds the cap {cap}")]
    RadiusTooLarge { estimate: f64, cap: usize },
    #[error("enumeration radius {0} must be nonnegative and finite")]
    BadRadius(f64),
    #[error("seed point must be future timelike")]
    SeedNotTimelike,
    #[error("the two reference generators share a fixed point")]
    DegenerateAxes,
    #[error("target boundary triple has the opposite cyclic orientation from the source")]
    OrientationMismatch,
    #[error("boundary points must be pairwise distinct lightlike directions")]
    BadNormalizationData,
    #[error(transparent)]
    Lorentz(#[from] LorentzError),
}

fn minkowski_j() -> Matrix3<f64> {
    Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0))
}

/// An orientation- and time-orientation-preserving linear isometry of
/// Minkowski (2+1)-space.
#[derive(Clone, Copy, Debug)]
pub struct Isometry {
    m: Matrix3<f64>,
}

impl Isometry {
    /// Validates form preservation, determinant +1 and time orientation.
    pub fn new(m: Matrix3<f64>) -> Result<Self, FuchsianError> {
        if m.iter().any(|x| !x.is_finite()) {
            return Err(FuchsianError::NonFiniteMatrix);
        }
        let j = minkowski_j();
        let scale = m.amax().powi(2).max(1.0);
        let residual = (m.transpose() * j * m - j).amax();
        if residual > FORM_TOL * scale {
            return Err(FuchsianError::NonIsometry(residual));
        }
        let det = m.determinant();
        if (det - 1.0).abs() > 1e-6 {
            return Err(FuchsianError::BadDeterminant(det));
        }
        if m[(2, 2)] <= 0.0 {
            return Err(FuchsianError::NotTimeOriented(m[(2, 2)]));
        }
        Ok(Self { m })
    }

    pub fn identity() -> Self {
        Self { m: Matrix3::identity() }
    }

    /// Rotation by `theta` about the timelike axis.
    pub fn rotation(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self { m: Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0) }
    }

    /// Boost of rapidity `t` along the first spacelike axis; translates the
    /// hyperboloid geodesic through the apex by hyperbolic distance `t`.
    pub fn boost_x1(t: f64) -> Self {
        let (s, c) = (t.sinh(), t.cosh());
        Self { m: Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, s, 0.0, c) }
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    pub fn compose(&self, other: &Isometry) -> Isometry {
        // a plain product is already at the round-off floor: its form
        // residual grows like (word length) * eps * |m|^2, the same order as
        // the noise in any correction step one could apply
        Isometry { m: self.m * other.m }
    }

    /// Exact inverse `J m^T J` of a form-preserving matrix.
    pub fn inverse(&self) -> Isometry {
        let j = minkowski_j();
        Isometry { m: j * self.m.transpose() * j }
    }

    pub fn apply(&self, v: LorentzVec) -> LorentzVec {
        let w = self.m * Vector3::new(v.x1, v.x2, v.x3);
        LorentzVec { x1: w[0], x2: w[1], x3: w[2] }
    }

    pub fn apply_hyp(&self, p: HyperboloidPoint) -> HyperboloidPoint {
        self.apply(p.as_vec())
            .radial_project()
            .expect("isometries preserve the future hyperboloid")
    }

    pub fn distance_to_identity(&self) -> f64 {
        (self.m - Matrix3::identity()).norm()
    }

    pub fn is_identity(&self) -> bool {
        self.distance_to_identity() <= IDENTITY_TOL
    }

    pub fn frobenius_distance(&self, other: &Isometry) -> f64 {
        (self.m - other.m).norm()
    }

    /// Hyperbolic distance by which this isometry moves the apex: the apex
    /// image's height is the bottom-right entry, so the distance is its
    /// arccosh. Stays finite-accurate for long words whose apex image is
    /// too far out to renormalize onto the hyperboloid.
    pub fn apex_displacement(&self) -> f64 {
        self.m[(2, 2)].max(1.0).acosh()
    }
}

/// Translation length along the axis: `arccosh((trace - 1)/2)` for a
/// hyperbolic element, 0 for the identity.
pub fn translation_length(g: &Isometry) -> Result<f64, FuchsianError> {
    if g.is_identity() {
        return Ok(0.0);
    }
    let t = g.matrix().trace();
    if t > 3.0 + PARABOLIC_BAND {
        Ok(((t - 1.0) / 2.0).acosh())
    } else if t > 3.0 - PARABOLIC_BAND {
        Err(FuchsianError::Parabolic(t))
    } else {
        Err(FuchsianError::Elliptic(t))
    }
}

/// The two lightlike fixed directions of a hyperbolic isometry, scaled so
/// the timelike coordinate is 1.
#[derive(Clone, Copy, Debug)]
pub struct AxisEndpoints {
    pub attractive: LorentzVec,
    pub repulsive: LorentzVec,
}

/// Computes the axis endpoints as the lightlike eigenvectors, with
/// eigenvalues `exp(translation_length)` (attractive) and its reciprocal.
pub fn fixed_points(g: &Isometry) -> Result<AxisEndpoints, FuchsianError> {
    let len = translation_length(g)?;
    if len == 0.0 {
        return Err(FuchsianError::NoAxis);
    }
    Ok(AxisEndpoints {
        attractive: lightlike_eigenvector(g.matrix(), len.exp()),
        repulsive: lightlike_eigenvector(g.matrix(), (-len).exp()),
    })
}

fn lightlike_eigenvector(m: &Matrix3<f64>, lambda: f64) -> LorentzVec {
    let a = m - Matrix3::identity() * lambda;
    let rows = [
        Vector3::new(a[(0, 0)], a[(0, 1)], a[(0, 2)]),
        Vector3::new(a[(1, 0)], a[(1, 1)], a[(1, 2)]),
        Vector3::new(a[(2, 0)], a[(2, 1)], a[(2, 2)]),
    ];
    // the null direction is orthogonal to every row; take the best-conditioned
    // pair of rows
    let mut best = Vector3::zeros();
    let mut best_norm = -1.0;
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        let c = rows[i].cross(&rows[j]);
        if c.norm() > best_norm {
            best_norm = c.norm();
            best = c;
        }
    }
    if best[2] < 0.0 {
        best = -best;
    }
    LorentzVec { x1: best[0] / best[2], x2: best[1] / best[2], x3: 1.0 }
}

/// Adjoint representation of a determinant-1 2x2 matrix as a Minkowski
/// isometry, acting on the trace-free forms `x1*E1 + x2*E2 + x3*E3` with
/// `E1 = [[1,0],[0,-1]]`, `E2 = [[0,1],[1,0]]`, `E3 = [[0,1],[-1,0]]`.
pub fn sl2_to_so21(m: Matrix2<f64>) -> Result<Isometry, FuchsianError> {
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    if (det - 1.0).abs() > SL2_DET_TOL {
        return Err(FuchsianError::BadDeterminant(det));
    }
    let minv = Matrix2::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)]);
    let basis = [
        Matrix2::new(1.0, 0.0, 0.0, -1.0),
        Matrix2::new(0.0, 1.0, 1.0, 0.0),
        Matrix2::new(0.0, 1.0, -1.0, 0.0),
    ];
    let mut a = Matrix3::zeros();
    for (j, e) in basis.iter().enumerate() {
        let x = m * e * minv;
        a[(0, j)] = x[(0, 0)];
        a[(1, j)] = (x[(0, 1)] + x[(1, 0)]) / 2.0;
        a[(2, j)] = (x[(0, 1)] - x[(1, 0)]) / 2.0;
    }
    Isometry::new(a)
}

/// Future lightlike vector spanned by the boundary direction `(p : q)`.
#[cfg(test)]
fn rp1_to_lightlike(p: f64, q: f64) -> LorentzVec {
    LorentzVec { x1: -p * q, x2: (p * p - q * q) / 2.0, x3: (p * p + q * q) / 2.0 }
}

/// Boundary direction of a future lightlike vector, inverse of
/// `rp1_to_lightlike` up to scale.
fn lightlike_to_rp1(v: LorentzVec) -> (f64, f64) {
    if v.x2 >= 0.0 {
        let p = (v.x3 + v.x2).sqrt();
        (p, -v.x1 / p)
    } else {
        let q = (v.x3 - v.x2).sqrt();
        (-v.x1 / q, q)
    }
}

/// A word in the group generators: letter `+k` is generator `k-1`,
/// letter `-k` its inverse. Always stored reduced.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GroupWord {
    letters: Vec<i16>,
}

impl GroupWord {
    pub fn identity() -> Self {
        Self::default()
    }

    /// Builds a word, cancelling adjacent inverse pairs.
    pub fn from_letters(letters: impl IntoIterator<Item = i16>) -> Result<Self, FuchsianError> {
        let mut w = Self::default();
        for l in letters {
            if l == 0 {
                return Err(FuchsianError::LetterOutOfRange(0));
            }
            w.push_reduced(l);
        }
        Ok(w)
    }

    fn push_reduced(&mut self, l: i16) {
        if self.letters.last() == Some(&-l) {
            self.letters.pop();
        } else {
            self.letters.push(l);
        }
    }

    pub fn letters(&self) -> &[i16] {
        &self.letters
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn inverse(&self) -> Self {
        Self { letters: self.letters.iter().rev().map(|l| -l).collect() }
    }

    pub fn concat(&self, other: &Self) -> Self {
        let mut w = self.clone();
        for &l in &other.letters {
            w.push_reduced(l);
        }
        w
    }

    fn extended(&self, l: i16) -> Self {
        let mut w = self.clone();
        w.push_reduced(l);
        w
    }
}

/// A cocompact discrete group of hyperbolic isometries with one defining
/// relator, acting freely on the future hyperboloid.
#[derive(Clone, Debug)]
pub struct FuchsianGroup {
    generators: Vec<Isometry>,
    inverses: Vec<Isometry>,
    genus: usize,
    relator: GroupWord,
    covering_radius: f64,
}

impl FuchsianGroup {
    /// Validates the generator count, hyperbolicity of every generator and
    /// the relator, and stores the covering radius used to certify orbit
    /// enumeration.
    ///
    /// `covering_radius` must be at least the circumradius of the Dirichlet
    /// region of the apex; enumeration completeness additionally relies on
    /// the generators pairing the sides of that region, which holds for
    /// [`genus2_octagon_group`] and is preserved under conjugation.
    pub fn new(
        generators: Vec<Isometry>,
        genus: usize,
        relator: GroupWord,
        covering_radius: f64,
    ) -> Result<Self, FuchsianError> {
        if genus < 2 {
            return Err(FuchsianError::GenusTooSmall(genus));
        }
        if generators.len() != 2 * genus {
            return Err(FuchsianError::WrongGeneratorCount {
                expected: 2 * genus,
                genus,
                got: generators.len(),
            });
        }
        if !(covering_radius.is_finite() && covering_radius > 0.0) {
            return Err(FuchsianError::BadCoveringRadius(covering_radius));
        }
        for (index, g) in generators.iter().enumerate() {
            let trace = g.matrix().trace();
            if !(trace > 3.0 + PARABOLIC_BAND) {
                return Err(FuchsianError::NotHyperbolicGenerator { index, trace });
            }
        }
        let inverses = generators.iter().map(Isometry::inverse).collect();
        let group = Self { generators, inverses, genus, relator, covering_radius };
        let residual = group.evaluate(&group.relator)?.distance_to_identity();
        if residual > RELATOR_TOL {
            return Err(FuchsianError::RelatorNotIdentity(residual));
        }
        Ok(group)
    }

    pub fn generators(&self) -> &[Isometry] {
        &self.generators
    }

    pub fn genus(&self) -> usize {
        self.genus
    }

    pub fn relator(&self) -> &GroupWord {
        &self.relator
    }

    pub fn covering_radius(&self) -> f64 {
        self.covering_radius
    }

    fn letter(&self, l: i16) -> Result<&Isometry, FuchsianError> {
        let idx = l.unsigned_abs() as usize;
        if l == 0 || idx > self.generators.len() {
            return Err(FuchsianError::LetterOutOfRange(l));
        }
        Ok(if l > 0 { &self.generators[idx - 1] } else { &self.inverses[idx - 1] })
    }

    pub fn evaluate(&self, w: &GroupWord) -> Result<Isometry, FuchsianError> {
        let mut m = Isometry::identity();
        for &l in w.letters() {
            m = m.compose(self.letter(l)?);
        }
        Ok(m)
    }

    /// Area of the quotient surface, `2 pi (2 genus - 2)`.
    pub fn quotient_area(&self) -> f64 {
        2.0 * PI * (2.0 * self.genus as f64 - 2.0)
    }

    /// Radius below which every point of the plane is guaranteed to be
    /// displaced by some nontrivial element: a disk of half this radius has
    /// the area of the whole quotient, so it cannot embed.
    pub fn guaranteed_displacement_radius(&self) -> f64 {
        2.0 * (self.quotient_area() / (2.0 * PI) + 1.0).acosh()
    }

    /// All group elements whose apex displacement is at most `radius`,
    /// paired with a shortest-found word, sorted by word length then letters.
    ///
    /// Breadth-first generator expansion is complete for this cutoff: an
    /// element at displacement `d` is reached through the chain of Dirichlet
    /// tiles crossed by the geodesic from the apex to its image, every
    /// prefix of which stays within `d + covering_radius` (distance to the
    /// apex is convex along the geodesic and tile centers lie within the
    /// covering radius of it), so pruning at `radius + covering_radius +
    /// slack` discards nothing below `radius`.
    pub fn enumerate_elements(
        &self,
        radius: f64,
    ) -> Result<Vec<(GroupWord, Isometry)>, FuchsianError> {
        self.enumerate_elements_capped(radius, DEFAULT_ORBIT_CAP)
    }

    pub fn enumerate_elements_capped(
        &self,
        radius: f64,
        cap: usize,
    ) -> Result<Vec<(GroupWord, Isometry)>, FuchsianError> {
        if !radius.is_finite() || radius < 0.0 {
            return Err(FuchsianError::BadRadius(radius));
        }
        let margin = self.covering_radius + BFS_MARGIN_SLACK;
        let explore = radius + margin;
        let estimate = (explore.cosh() - 1.0) * 2.0 * PI / self.quotient_area();
        if estimate > cap as f64 {
            return Err(FuchsianError::RadiusTooLarge { estimate, cap });
        }

        let mut letters = Vec::with_capacity(2 * self.generators.len());
        for i in 1..=self.generators.len() as i16 {
            letters.push(i);
            letters.push(-i);
        }

        let apex = HyperboloidPoint::apex();
        let mut words: Vec<GroupWord> = vec![GroupWord::identity()];
        let mut mats: Vec<Isometry> = vec![Isometry::identity()];
        let mut points: Vec<HyperboloidPoint> = vec![apex];
        let mut disps: Vec<f64> = vec![0.0];
        let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        buckets.insert(klein_cell(apex), vec![0]);
        let mut queue: VecDeque<usize> = VecDeque::from([0]);

        while let Some(idx) = queue.pop_front() {
            for &l in &letters {
                if words[idx].letters().last() == Some(&-l) {
                    continue;
                }
                let m = mats[idx].compose(self.letter(l)?);
                // prune on the matrix entry before renormalizing: apex
                // images past the cutoff may be too far out to project
                let disp = m.apex_displacement();
                if disp > explore {
                    continue;
                }
                let y = m.apply(apex.as_vec()).radial_project()?;
                let cell = klein_cell(y);
                let mut duplicate = false;
                'probe: for di in -1..=1 {
                    for dj in -1..=1 {
                        if let Some(ids) = buckets.get(&(cell.0 + di, cell.1 + dj)) {
                            for &c in ids {
                                if hyp_dist(y, points[c])? < DEDUPE_DIST {
                                    duplicate = true;
                                    break 'probe;
                                }
                            }
                        }
                    }
                }
                if duplicate {
                    continue;
                }
                if words.len() >= cap {
                    return Err(FuchsianError::RadiusTooLarge {
                        estimate: words.len() as f64 + 1.0,
                        cap,
                    });
                }
                let id = words.len();
                words.push(words[idx].extended(l));
                mats.push(m);
                points.push(y);
                disps.push(disp);
                buckets.entry(cell).or_default().push(id);
                queue.push_back(id);
            }
        }

        let mut out: Vec<(GroupWord, Isometry)> = words
            .into_iter()
            .zip(mats)
            .zip(disps)
            .filter(|(_, d)| *d <= radius)
            .map(|((w, m), _)| (w, m))
            .collect();
        out.sort_by(|a, b| {
            (a.0.len(), a.0.letters()).cmp(&(b.0.len(), b.0.letters()))
        });
        Ok(out)
    }

    /// All distinct orbit points of `p` whose projections lie within
    /// `radius` of the projection of `p`.
    pub fn enumerate_orbit(
        &self,
        p: LorentzVec,
        radius: f64,
    ) -> Result<Vec<(GroupWord, LorentzVec)>, FuchsianError> {
        self.enumerate_orbit_capped(p, radius, DEFAULT_ORBIT_CAP)
    }

    pub fn enumerate_orbit_capped(
        &self,
        p: LorentzVec,
        radius: f64,
        cap: usize,
    ) -> Result<Vec<(GroupWord, LorentzVec)>, FuchsianError> {
        let ph = p.radial_project().map_err(|_| FuchsianError::SeedNotTimelike)?;
        let d0 = hyp_dist(HyperboloidPoint::apex(), ph)?;
        // displacement of p differs from apex displacement by at most 2*d0
        let elements = self.enumerate_elements_capped(radius + 2.0 * d0, cap)?;
        let mut out = Vec::new();
        for (w, g) in elements {
            let q = g.apply(p);
            if hyp_dist(ph, g.apply_hyp(ph))? <= radius {
                out.push((w, q));
            }
        }
        Ok(out)
    }

    /// Shortest translation length over all nontrivial elements.
    ///
    /// Certified search: any element at least as short as the best generator
    /// has a conjugate whose axis crosses the Dirichlet region, hence apex
    /// displacement at most `2 asinh(sinh(len/2) cosh(covering_radius))`.
    pub fn systole(&self) -> Result<f64, FuchsianError> {
        let mut best = f64::INFINITY;
        for g in &self.generators {
            best = best.min(translation_length(g)?);
        }
        let reach = 2.0 * ((best / 2.0).sinh() * self.covering_radius.cosh()).asinh() + 0.1;
        for (w, g) in self.enumerate_elements(reach)? {
            if w.is_empty() || g.is_identity() {
                continue;
            }
            best = best.min(translation_length(&g)?);
        }
        Ok(best)
    }

    /// Nontrivial elements close enough to contribute a side of the
    /// Dirichlet region of the apex (apex displacement at most twice the
    /// covering radius).
    pub fn dirichlet_neighbors(&self) -> Result<Vec<(GroupWord, Isometry)>, FuchsianError> {
        let mut els = self.enumerate_elements(2.0 * self.covering_radius + 1e-9)?;
        els.retain(|(w, _)| !w.is_empty());
        Ok(els)
    }

    /// Translation lengths of the given words.
    pub fn length_spectrum(&self, words: &[GroupWord]) -> Result<Vec<f64>, FuchsianError> {
        words
            .iter()
            .map(|w| translation_length(&self.evaluate(w)?))
            .collect()
    }
}

fn klein_cell(p: HyperboloidPoint) -> (i64, i64) {
    let v = p.as_vec();
    (
        ((v.x1 / v.x3) / DEDUPE_CELL).floor() as i64,
        ((v.x2 / v.x3) / DEDUPE_CELL).floor() as i64,
    )
}

/// Apothem of the regular hyperbolic octagon whose eight corner angles sum
/// to one full turn, found by bisection.
fn octagon_apothem() -> f64 {
    // the interior angle of the regular octagon with apothem b is
    // 2*arccos(cosh(b) sin(pi/8)); all eight corners meet at one point of
    // the quotient, so the angles must sum to 2 pi
    let angle_sum = |b: f64| {
        let s = b.cosh() * FRAC_PI_8.sin();
        if s >= 1.0 {
            0.0
        } else {
            16.0 * s.acos()
        }
    };
    let (mut lo, mut hi) = (0.1_f64, 3.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if angle_sum(mid) > 2.0 * PI {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// The genus-2 surface group generated by four boosts through the sides of
/// a regular hyperbolic octagon centered at the apex.
///
/// Generator `k` (0..4) translates by twice the apothem along the direction
/// at angle `k pi/4`; opposite octagon sides are paired. The defining
/// relator is `g0 g1^-1 g2 g3^-1 g0^-1 g1 g2^-1 g3`.
pub fn genus2_octagon_group() -> FuchsianGroup {
    let b = octagon_apothem();
    let t0 = 2.0 * b;
    // circumradius from the right triangle (center, side midpoint, corner)
    let covering_radius = (b.tanh() / FRAC_PI_8.cos()).atanh();
    let mut gens = Vec::with_capacity(4);
    for k in 0..4 {
        let th = k as f64 * PI / 4.0;
        let g = Isometry::rotation(th)
            .compose(&Isometry::boost_x1(t0))
            .compose(&Isometry::rotation(-th));
        gens.push(g);
    }
    let relator =
        GroupWord::from_letters([1, -2, 3, -4, -1, 2, -3, 4]).expect("letters are nonzero");
    FuchsianGroup::new(gens, 2, relator, covering_radius)
        .expect("the octagon group satisfies the group axioms")
}

/// Three prescribed boundary directions: the attractive and repulsive fixed
/// points for the last generator and the attractive fixed point for the one
/// before it.
#[derive(Clone, Copy, Debug)]
pub struct NormalizationData {
    a: LorentzVec,
    b: LorentzVec,
    c: LorentzVec,
}

impl NormalizationData {
    /// Accepts three future lightlike vectors with pairwise distinct
    /// directions and rescales them onto the unit circle at height 1.
    pub fn new(a: LorentzVec, b: LorentzVec, c: LorentzVec) -> Result<Self, FuchsianError> {
        let snap = |v: LorentzVec| -> Result<LorentzVec, FuchsianError> {
            if v.x3 <= 0.0 {
                return Err(FuchsianError::BadNormalizationData);
            }
            let (x1, x2) = (v.x1 / v.x3, v.x2 / v.x3);
            let r = x1.hypot(x2);
            if (r - 1.0).abs() > 1e-6 {
                return Err(FuchsianError::BadNormalizationData);
            }
            Ok(LorentzVec { x1: x1 / r, x2: x2 / r, x3: 1.0 })
        };
        let (a, b, c) = (snap(a)?, snap(b)?, snap(c)?);
        for (u, v) in [(a, b), (a, c), (b, c)] {
            if (u.x1 - v.x1).hypot(u.x2 - v.x2) < 1e-9 {
                return Err(FuchsianError::BadNormalizationData);
            }
        }
        Ok(Self { a, b, c })
    }

    pub fn points(&self) -> (LorentzVec, LorentzVec, LorentzVec) {
        (self.a, self.b, self.c)
    }
}

/// Matrix sending the boundary triple to (0 : 1), (1 : 0), (1 : 1).
fn triple_map(w: [(f64, f64); 3]) -> Matrix2<f64> {
    let [(p1, q1), (p2, q2), (p3, q3)] = w;
    let alpha = p3 * q2 - q3 * p2;
    let beta = p3 * q1 - q3 * p1;
    let m = Matrix2::new(alpha * q1, -alpha * p1, beta * q2, -beta * p2);
    m / m.norm()
}

/// Conjugates the group so the axis endpoints of the last generator are
/// `nd.a` (attractive) and `nd.b` (repulsive) and the attractive endpoint
/// of the second-to-last generator is `nd.c`. Returns the conjugated group
/// and the conjugator.
pub fn normalize_representation(
    g: &FuchsianGroup,
    nd: &NormalizationData,
) -> Result<(FuchsianGroup, Isometry), FuchsianError> {
    let n = g.generators().len();
    let last = fixed_points(&g.generators()[n - 1])?;
    let prev = fixed_points(&g.generators()[n - 2])?;
    let close = |u: LorentzVec, v: LorentzVec| (u.x1 - v.x1).hypot(u.x2 - v.x2) < 1e-9;
    for u in [last.attractive, last.repulsive] {
        for v in [prev.attractive, prev.repulsive] {
            if close(u, v) {
                return Err(FuchsianError::DegenerateAxes);
            }
        }
    }
    let src = triple_map([
        lightlike_to_rp1(last.attractive),
        lightlike_to_rp1(last.repulsive),
        lightlike_to_rp1(prev.attractive),
    ]);
    let (a, b, c) = nd.points();
    let dst = triple_map([lightlike_to_rp1(a), lightlike_to_rp1(b), lightlike_to_rp1(c)]);
    // dst^-1 src up to scale: the adjugate avoids dividing by the determinant
    let adj = Matrix2::new(dst[(1, 1)], -dst[(0, 1)], -dst[(1, 0)], dst[(0, 0)]);
    let mut h2 = adj * src;
    h2 /= h2.norm();
    let det = h2[(0, 0)] * h2[(1, 1)] - h2[(0, 1)] * h2[(1, 0)];
    if det.abs() < 1e-12 {
        return Err(FuchsianError::DegenerateAxes);
    }
    if det < 0.0 {
        return Err(FuchsianError::OrientationMismatch);
    }
    h2 /= det.sqrt();
    let h = sl2_to_so21(h2)?;
    let hinv = h.inverse();
    let conj: Vec<Isometry> =
        g.generators().iter().map(|x| h.compose(x).compose(&hinv)).collect();
    // the Dirichlet region of the apex can grow under conjugation, but its
    // circumradius at any basepoint is at most twice the optimal one
    let out = FuchsianGroup::new(conj, g.genus(), g.relator().clone(), 2.0 * g.covering_radius())?;
    Ok((out, h))
}
