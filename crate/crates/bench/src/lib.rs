//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use mongeamp::geometry::polygon::dot;
use mongeamp::geometry::{NodeSet, PLConvexFunction};

/// `|x|^2 / 2` sampled on a disk lattice with `boundary` nodes on the unit circle.
pub fn quadratic_disk(lattice: usize, boundary: usize) -> PLConvexFunction {
    let ns = Arc::new(NodeSet::disk(lattice, boundary, 1.0).expect("valid disk parameters"));
    let v = ns.points().iter().map(|p| 0.5 * dot(*p, *p)).collect();
    PLConvexFunction::lower_hull(ns, v).expect("hull of a strictly convex sample")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_is_uniformly_convex() {
        let phi = quadratic_disk(9, 32);
        let w = phi.interior_ma_weights();
        assert!(phi.nodes().interior_indices().iter().all(|&i| w[i] > 0.0));
    }
}
