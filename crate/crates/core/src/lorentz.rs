//! Minkowski (2+1)-space primitives.
//!
//! Coordinates are (x1, x2, x3) with the bilinear form
//! `<x,y> = x1*y1 + x2*y2 - x3*y3`, so x3 is the timelike direction. The
//! future hyperboloid `{<x,x> = -1, x3 > 0}` carries the hyperbolic plane;
//! distances on it come from `cosh d = -<x,y>`.

use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Neg, Sub};
use thiserror::Error;

/// Half-width of the lightlike band: |<v,v>| below this classifies as lightlike.
pub const CAUSAL_EPS: f64 = 1e-12;

/// How far below 1 the product -<x,y> of two unit timelike vectors may fall
/// (round-off only) before `hyp_dist` refuses to clamp.
pub const ACOSH_CLAMP: f64 = 1e-9;

/// Switch point between the arccosh evaluation of hyperbolic distance and the
/// cancellation-free 2*asinh(sqrt(q/2)) form, in terms of q = -<x,y> - 1.
const HYP_DIST_SMALL_Q: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LorentzError {
    #[error("coordinates must be finite, got ({0}, {1}, {2})")]
    NonFinite(f64, f64, f64),
    #[error("vector is not spacelike: <v,v> = {0}")]
    NotSpacelike(f64),
    #[error("vector is not future timelike: <v,v> = {0}, x3 = {1}")]
    NotFutureTimelike(f64, f64),
    #[error("point is off the future hyperboloid: <x,x> = {0}, x3 = {1}")]
    OffHyperboloid(f64, f64),
    #[error("inner product -<x,y> = {0} is below the hyperboloid range")]
    HypDistDomain(f64),
}

/// A vector of Minkowski (2+1)-space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LorentzVec {
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
}

/// Sign class of `<v,v>`, with a `CAUSAL_EPS`-band around zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CausalClass {
    Spacelike,
    Timelike,
    Lightlike,
}

impl LorentzVec {
    /// Builds a vector, rejecting NaN and infinite coordinates.
    pub fn new(x1: f64, x2: f64, x3: f64) -> Result<Self, LorentzError> {
        if x1.is_finite() && x2.is_finite() && x3.is_finite() {
            Ok(Self { x1, x2, x3 })
        } else {
            Err(LorentzError::NonFinite(x1, x2, x3))
        }
    }

    pub const fn zero() -> Self {
        Self { x1: 0.0, x2: 0.0, x3: 0.0 }
    }

    pub fn mink_norm2(self) -> f64 {
        mink_inner(self, self)
    }

    pub fn causal_class(self) -> CausalClass {
        let q = self.mink_norm2();
        if q > CAUSAL_EPS {
            CausalClass::Spacelike
        } else if q < -CAUSAL_EPS {
            CausalClass::Timelike
        } else {
            CausalClass::Lightlike
        }
    }

    /// `sqrt(<v,v>)` for spacelike v.
    pub fn spacelike_norm(self) -> Result<f64, LorentzError> {
        let q = self.mink_norm2();
        if q <= 0.0 {
            return Err(LorentzError::NotSpacelike(q));
        }
        Ok(q.sqrt())
    }

    pub fn is_future_timelike(self) -> bool {
        self.mink_norm2() < 0.0 && self.x3 > 0.0
    }

    /// Lorentz radius `sqrt(-<v,v>)` of a timelike vector.
    pub fn timelike_radius(self) -> Result<f64, LorentzError> {
        let q = self.mink_norm2();
        if q >= 0.0 || self.x3 <= 0.0 {
            return Err(LorentzError::NotFutureTimelike(q, self.x3));
        }
        Ok((-q).sqrt())
    }

    /// Projects a future timelike vector radially onto the hyperboloid.
    pub fn radial_project(self) -> Result<HyperboloidPoint, LorentzError> {
        let r = self.timelike_radius()?;
        Ok(HyperboloidPoint(Self {
            x1: self.x1 / r,
            x2: self.x2 / r,
            x3: self.x3 / r,
        }))
    }
}

impl Add for LorentzVec {
    type Output = LorentzVec;
    fn add(self, o: LorentzVec) -> LorentzVec {
        LorentzVec { x1: self.x1 + o.x1, x2: self.x2 + o.x2, x3: self.x3 + o.x3 }
    }
}

impl Sub for LorentzVec {
    type Output = LorentzVec;
    fn sub(self, o: LorentzVec) -> LorentzVec {
        LorentzVec { x1: self.x1 - o.x1, x2: self.x2 - o.x2, x3: self.x3 - o.x3 }
    }
}

impl Mul<LorentzVec> for f64 {
    type Output = LorentzVec;
    fn mul(self, v: LorentzVec) -> LorentzVec {
        LorentzVec { x1: self * v.x1, x2: self * v.x2, x3: self * v.x3 }
    }
}

impl Neg for LorentzVec {
    type Output = LorentzVec;
    fn neg(self) -> LorentzVec {
        LorentzVec { x1: -self.x1, x2: -self.x2, x3: -self.x3 }
    }
}

/// The Minkowski bilinear form `x1*y1 + x2*y2 - x3*y3`.
pub fn mink_inner(u: LorentzVec, v: LorentzVec) -> f64 {
    u.x1 * v.x1 + u.x2 * v.x2 - u.x3 * v.x3
}

/// A point of the hyperbolic plane in the hyperboloid model.
///
/// Construction normalizes the radius, so `<x,x> = -1` holds to round-off
/// and `x3 >= 1` afterwards.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperboloidPoint(LorentzVec);

impl HyperboloidPoint {
    /// Accepts a vector within `ACOSH_CLAMP` of the unit hyperboloid and
    /// renormalizes it onto the sheet. The band scales with the round-off of
    /// the norm evaluation itself (~eps * x3^2 for far-out points).
    pub fn new(v: LorentzVec) -> Result<Self, LorentzError> {
        let q = v.mink_norm2();
        if (q + 1.0).abs() > ACOSH_CLAMP * (v.x3 * v.x3).max(1.0) || v.x3 <= 0.0 {
            return Err(LorentzError::OffHyperboloid(q, v.x3));
        }
        v.radial_project()
    }

    /// The point at hyperbolic polar coordinates (r, theta) around the apex.
    pub fn from_polar(r: f64, theta: f64) -> Self {
        HyperboloidPoint(LorentzVec {
            x1: r.sinh() * theta.cos(),
            x2: r.sinh() * theta.sin(),
            x3: r.cosh(),
        })
    }

    pub fn apex() -> Self {
        HyperboloidPoint(LorentzVec { x1: 0.0, x2: 0.0, x3: 1.0 })
    }

    pub fn as_vec(self) -> LorentzVec {
        self.0
    }
}

/// Hyperbolic distance `arccosh(-<x,y>)` between two hyperboloid points.
///
/// For nearby points the arccosh argument sits just above 1 where the naive
/// formula loses half the significant digits, so q = -<x,y> - 1 below
/// `HYP_DIST_SMALL_Q` is routed through `2*asinh(sqrt(q/2))` (an exact
/// rewrite via cosh d - 1 = 2 sinh^2(d/2)). Round-off can push q slightly
/// negative; the rejection band scales with the size of the products summed
/// by the inner product (for far-out coincident points the cancellation
/// noise is ~eps * x3 * y3), and anything below it means an input was not
/// actually on the hyperboloid and is reported rather than clamped.
pub fn hyp_dist(x: HyperboloidPoint, y: HyperboloidPoint) -> Result<f64, LorentzError> {
    let p = -mink_inner(x.0, y.0);
    let q = p - 1.0;
    if q < -ACOSH_CLAMP * (x.0.x3 * y.0.x3).max(1.0) {
        return Err(LorentzError::HypDistDomain(p));
    }
    let q = q.max(0.0);
    Ok(if q < HYP_DIST_SMALL_Q {
        2.0 * (q / 2.0).sqrt().asinh()
    } else {
        p.acosh()
    })
}

/// Minkowski gap between a point and its boost image.
///
/// In a Minkowski 2-plane with coordinates (a, b) and form a^2 - b^2, the
/// boost I_t maps x = (0, 1) to (sinh t, cosh t). This returns the spacelike
/// norm of eps*(I_t x - x). Expanding the difference of squares,
/// sinh^2 t - (cosh t - 1)^2 = (e^t - 1)(1 - e^{-t}), which evaluates
/// without cancellation through expm1 and equals 2(cosh t - 1) exactly.
pub fn figure1_gap(eps: f64, t: f64) -> f64 {
    let a = t.exp_m1();
    let b = -(-t).exp_m1();
    eps * (a * b).sqrt()
}
