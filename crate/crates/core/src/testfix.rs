//! Shared fixtures for the test suite: the heavyweight hulls are built once
//! per binary and reused across tests.

use crate::fuchsian::genus2_octagon_group;
use crate::hull::{fuchsian_hull, HullComplex};
use crate::lorentz::{HyperboloidPoint, LorentzVec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::OnceLock;

/// Area-uniform sample of the disk of the group's covering radius around the
/// axis point, scaled to the given timelike radius.
pub fn disk_sample(scale: f64, n: usize, rng_seed: u64) -> Vec<LorentzVec> {
    let group = genus2_octagon_group();
    let cosh_max = group.covering_radius().cosh();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    (0..n)
        .map(|_| {
            let r = (1.0 + rng.gen::<f64>() * (cosh_max - 1.0)).acosh();
            let theta = rng.gen::<f64>() * std::f64::consts::TAU;
            scale * HyperboloidPoint::from_polar(r, theta).as_vec()
        })
        .collect()
}

/// Orbit hull of the single axis point: faces are congruent octagons.
pub fn octagon_hull() -> &'static HullComplex {
    static HULL: OnceLock<HullComplex> = OnceLock::new();
    HULL.get_or_init(|| {
        let group = genus2_octagon_group();
        let apex = LorentzVec { x1: 0.0, x2: 0.0, x3: 1.0 };
        fuchsian_hull(&group, &[apex], 5.0).expect("octagon fixture hull")
    })
}

/// Orbit hull of 200 seeds scattered at timelike radius 2: a polyhedral
/// approximation of the rescaled hyperboloid.
pub fn dense_hull() -> &'static HullComplex {
    static HULL: OnceLock<HullComplex> = OnceLock::new();
    HULL.get_or_init(|| {
        let group = genus2_octagon_group();
        let seeds = disk_sample(2.0, 200, 7001);
        fuchsian_hull(&group, &seeds, 5.0).expect("dense fixture hull")
    })
}
