//! Node sets, lower convex hulls and piecewise-linear convex functions.

mod hull;
mod legendre;
mod nodes;
mod plfunc;
pub mod polygon;

pub use legendre::{facet_gradient_nodes, legendre_transform};
pub use nodes::NodeSet;
pub use plfunc::{
    convex_envelope, halfplane_cell, interior_slope_bound, Facet, NodeStatus, PLConvexFunction, PLFunctionDoc,
    SubdifferentialCell,
};

pub type Point = [f64; 2];

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("input is degenerate (fewer than three affinely independent nodes)")]
    DegenerateInput,
    #[error("expected {expected} entries, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite value at node {index}")]
    NonFinite { index: usize },
    #[error("domain polygon is not convex and counter-clockwise")]
    NonConvexDomain,
    #[error("node {index} lies outside the domain")]
    OutsideDomain { index: usize },
    #[error("boundary node {index} is not on the domain border")]
    BoundaryNotOnBorder { index: usize },
    #[error("nodes {first} and {second} coincide")]
    DuplicateNodes { first: usize, second: usize },
    #[error("node set has no boundary nodes")]
    NoBoundary,
    #[error("hull construction lost consistency")]
    HullFailure,
}
