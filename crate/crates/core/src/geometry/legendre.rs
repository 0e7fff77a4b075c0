use std::sync::Arc;

use super::polygon::{convex_hull, dot, inner_margin};
use super::{GeometryError, NodeSet, NodeStatus, PLConvexFunction};

/// Discrete Legendre transform `f*(p) = max_i (p . x_i - f(x_i))` on `slopes`, hulled.
pub fn legendre_transform(f: &PLConvexFunction, slopes: Arc<NodeSet>) -> Result<PLConvexFunction, GeometryError> {
    let xs = f.nodes().points();
    let active: Vec<usize> = (0..xs.len()).filter(|&i| f.status(i) == NodeStatus::Vertex).collect();
    let vals: Vec<f64> = slopes
        .points()
        .iter()
        .map(|p| active.iter().map(|&i| dot(*p, xs[i]) - f.value(i)).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    PLConvexFunction::lower_hull(slopes, vals)
}

/// Facet gradients of `f` as a node set (hull-border gradients flagged boundary).
pub fn facet_gradient_nodes(f: &PLConvexFunction) -> Result<NodeSet, GeometryError> {
    let mut pts: Vec<[f64; 2]> = f.facets().iter().map(|fc| fc.gradient).collect();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup_by(|a, b| (a[0] - b[0]).abs() <= 1e-12 && (a[1] - b[1]).abs() <= 1e-12);
    let hull = convex_hull(&pts);
    if hull.len() < 3 {
        return Err(GeometryError::DegenerateInput);
    }
    let scale = super::polygon::diameter(&hull).max(1.0);
    let boundary = pts.iter().map(|p| inner_margin(&hull, *p) <= 1e-10 * scale).collect();
    NodeSet::new(pts, boundary, hull)
}
