//! Discrete Monge-Ampere measures on planar node sets, extremal solutions for
//! point-mass perturbations, obstacle problems and Alexandrov-type estimates.

pub mod estimates;
pub mod geometry;
pub mod harness;
pub mod measures;
pub mod obstacle;
pub mod radial;
pub mod solver;
