//! Convex polyhedral surfaces in Minkowski (2+1)-space built from Fuchsian
//! group orbits.
//!
//! The pipeline: [`lorentz`] provides the bilinear form and the hyperboloid
//! model, [`fuchsian`] builds cocompact surface groups acting on it,
//! [`hull`] takes the convex hull of a group orbit and extracts the
//! spacelike boundary faces over a fundamental domain, [`intrinsic`]
//! measures the induced path metric on that boundary, [`bounds`] checks the
//! quantitative estimates relating the intrinsic metric to the hyperbolic
//! one, and [`metric`] holds the singular-flat-surface toolbox (cone
//! metrics, comparison angles, flattening) plus the convergence experiment.
//! [`experiment`] wires configs to runs and serializes the artifacts the
//! `minksurf` binary writes.

pub mod bounds;
pub mod experiment;
pub mod fuchsian;
pub mod hull;
pub mod intrinsic;
pub mod lorentz;
pub mod metric;
#[cfg(test)]
pub(crate) mod testfix;

/// Crate version, embedded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
