use std::collections::HashMap;

use super::polygon::{self, convex_hull, inner_margin, is_convex_ccw, regular_polygon};
use super::{GeometryError, Point};

/// A finite node set inside a convex polygonal domain, with boundary flags.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSet {
    points: Vec<Point>,
    boundary: Vec<bool>,
    domain: Vec<Point>,
}

impl NodeSet {
    /// Validates points against a ccw convex `domain`. Boundary nodes must lie on its border.
    pub fn new(points: Vec<Point>, boundary: Vec<bool>, domain: Vec<Point>) -> Result<Self, GeometryError> {
        if points.len() != boundary.len() {
            return Err(GeometryError::LengthMismatch { expected: points.len(), got: boundary.len() });
        }
        if !is_convex_ccw(&domain) {
            return Err(GeometryError::NonConvexDomain);
        }
        let scale = polygon::diameter(&domain).max(1.0);
        let tol = 1e-9 * scale;
        for (i, p) in points.iter().enumerate() {
            if !(p[0].is_finite() && p[1].is_finite()) {
                return Err(GeometryError::NonFinite { index: i });
            }
            let m = inner_margin(&domain, *p);
            if m < -tol {
                return Err(GeometryError::OutsideDomain { index: i });
            }
            if boundary[i] && m > tol {
                return Err(GeometryError::BoundaryNotOnBorder { index: i });
            }
        }
        if let Some((i, j)) = find_duplicate(&points, 1e-12 * scale) {
            return Err(GeometryError::DuplicateNodes { first: i, second: j });
        }
        if !boundary.iter().any(|&b| b) {
            return Err(GeometryError::NoBoundary);
        }
        Ok(Self { points, boundary, domain })
    }

    /// Domain is the convex hull of the points; boundary flags as given.
    pub fn with_hull_domain(points: Vec<Point>, boundary: Vec<bool>) -> Result<Self, GeometryError> {
        let domain = convex_hull(&points);
        if domain.len() < 3 {
            return Err(GeometryError::DegenerateInput);
        }
        Self::new(points, boundary, domain)
    }

    /// Square lattice of `lattice` points per side clipped to the inscribed regular
    /// `boundary_nodes`-gon of radius `radius`; boundary nodes sit at the polygon vertices.
    pub fn disk(lattice: usize, boundary_nodes: usize, radius: f64) -> Result<Self, GeometryError> {
        if lattice < 3 || boundary_nodes < 3 || !(radius > 0.0) {
            return Err(GeometryError::DegenerateInput);
        }
        let domain = regular_polygon(boundary_nodes, radius);
        let h = 2.0 * radius / (lattice - 1) as f64;
        let mut points = Vec::new();
        let mut boundary = Vec::new();
        for i in 0..lattice {
            for j in 0..lattice {
                let p = [-radius + h * i as f64, -radius + h * j as f64];
                if inner_margin(&domain, p) > 0.25 * h {
                    points.push(p);
                    boundary.push(false);
                }
            }
        }
        for v in &domain {
            points.push(*v);
            boundary.push(true);
        }
        Self::new(points, boundary, domain)
    }

    /// Square lattice over the bounding box of a ccw convex `domain`, `lattice` points across
    /// its wider side, plus about `boundary_nodes` border nodes spread by arc length. Every
    /// vertex is a boundary node.
    pub fn polygon(domain: &[Point], lattice: usize, boundary_nodes: usize) -> Result<Self, GeometryError> {
        if lattice < 3 || !is_convex_ccw(domain) {
            return Err(if lattice < 3 { GeometryError::DegenerateInput } else { GeometryError::NonConvexDomain });
        }
        let (lo, hi) = domain.iter().fold(([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]), |(lo, hi), p| {
            ([lo[0].min(p[0]), lo[1].min(p[1])], [hi[0].max(p[0]), hi[1].max(p[1])])
        });
        let h = (hi[0] - lo[0]).max(hi[1] - lo[1]) / (lattice - 1) as f64;
        let mut points = Vec::new();
        let mut boundary = Vec::new();
        let steps = |len: f64| ((len / h).floor() as usize).max(1) + 2;
        for i in 0..steps(hi[0] - lo[0]) {
            for j in 0..steps(hi[1] - lo[1]) {
                let p = [lo[0] + h * i as f64, lo[1] + h * j as f64];
                if inner_margin(domain, p) > 0.25 * h {
                    points.push(p);
                    boundary.push(false);
                }
            }
        }
        let m = domain.len();
        let perimeter: f64 = (0..m).map(|k| polygon::dist(domain[k], domain[(k + 1) % m])).sum();
        let spacing = perimeter / boundary_nodes.max(m) as f64;
        for k in 0..m {
            let (a, b) = (domain[k], domain[(k + 1) % m]);
            let pieces = ((polygon::dist(a, b) / spacing).round() as usize).max(1);
            for t in 0..pieces {
                let s = t as f64 / pieces as f64;
                points.push([a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]);
                boundary.push(true);
            }
        }
        Self::new(points, boundary, domain.to_vec())
    }

    /// Full `n x n` grid on `[lo, hi]^2`; the outer ring is boundary.
    pub fn square_grid(n: usize, lo: f64, hi: f64) -> Result<Self, GeometryError> {
        if n < 3 || !(hi > lo) {
            return Err(GeometryError::DegenerateInput);
        }
        let h = (hi - lo) / (n - 1) as f64;
        let mut points = Vec::with_capacity(n * n);
        let mut boundary = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                points.push([lo + h * i as f64, lo + h * j as f64]);
                boundary.push(i == 0 || j == 0 || i == n - 1 || j == n - 1);
            }
        }
        let domain = vec![[lo, lo], [hi, lo], [hi, hi], [lo, hi]];
        Self::new(points, boundary, domain)
    }

    /// Image under `x -> m x + shift`. Orientation-reversing maps are rejected.
    pub fn map_affine(&self, m: [[f64; 2]; 2], shift: Point) -> Result<Self, GeometryError> {
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        if !(det > 0.0) {
            return Err(GeometryError::DegenerateInput);
        }
        let f = |p: &Point| [m[0][0] * p[0] + m[0][1] * p[1] + shift[0], m[1][0] * p[0] + m[1][1] * p[1] + shift[1]];
        Self::new(self.points.iter().map(f).collect(), self.boundary.clone(), self.domain.iter().map(f).collect())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn point(&self, i: usize) -> Point {
        self.points[i]
    }

    pub fn boundary_flags(&self) -> &[bool] {
        &self.boundary
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        self.boundary[i]
    }

    pub fn domain(&self) -> &[Point] {
        &self.domain
    }

    pub fn interior_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.boundary[i]).collect()
    }

    pub fn boundary_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.boundary[i]).collect()
    }

    pub fn nearest(&self, x: Point) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (i, p) in self.points.iter().enumerate() {
            let d = polygon::dist(*p, x);
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }

    /// Distance from node `i` to the domain border.
    pub fn border_distance(&self, i: usize) -> f64 {
        polygon::distance_to_boundary(&self.domain, self.points[i])
    }

    pub fn diameter(&self) -> f64 {
        polygon::diameter(&self.domain)
    }
}

fn find_duplicate(points: &[Point], tol: f64) -> Option<(usize, usize)> {
    let cell = tol.max(f64::MIN_POSITIVE) * 4.0;
    let key = |p: &Point| ((p[0] / cell).floor() as i64, (p[1] / cell).floor() as i64);
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        let (kx, ky) = key(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(list) = grid.get(&(kx + dx, ky + dy)) {
                    for &j in list {
                        if polygon::dist(points[j], *p) <= tol {
                            return Some((j, i));
                        }
                    }
                }
            }
        }
        grid.entry((kx, ky)).or_default().push(i);
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polygon_nodes_cover_the_border() {
        let tri = vec![[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]];
        let ns = NodeSet::polygon(&tri, 11, 30).unwrap();
        let b = ns.boundary_indices();
        assert!((28..=32).contains(&b.len()), "{}", b.len());
        for v in &tri {
            assert!(ns.points().contains(v));
        }
        assert!(ns.interior_indices().iter().all(|&i| inner_margin(&tri, ns.point(i)) > 0.05));
        assert!(NodeSet::polygon(&[[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]], 11, 30).is_err());
    }

    #[test]
    fn disk_has_center_and_boundary_ring() {
        let ns = NodeSet::disk(17, 64, 1.0).unwrap();
        assert_eq!(ns.boundary_indices().len(), 64);
        let c = ns.nearest([0.0, 0.0]);
        assert_eq!(ns.point(c), [0.0, 0.0]);
        assert!(!ns.is_boundary(c));
    }

    #[test]
    fn rejects_duplicates_and_outside_points() {
        let dom = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let r = NodeSet::new(vec![[0.0, 0.0], [0.0, 0.0]], vec![true, true], dom.clone());
        assert!(matches!(r, Err(GeometryError::DuplicateNodes { .. })));
        let r = NodeSet::new(vec![[0.0, 0.0], [2.0, 0.0]], vec![true, false], dom.clone());
        assert!(matches!(r, Err(GeometryError::OutsideDomain { index: 1 })));
        let r = NodeSet::new(vec![[0.5, 0.5]], vec![true], dom);
        assert!(matches!(r, Err(GeometryError::BoundaryNotOnBorder { index: 0 })));
    }

    #[test]
    fn square_grid_boundary_count() {
        let ns = NodeSet::square_grid(5, -1.0, 1.0).unwrap();
        assert_eq!(ns.len(), 25);
        assert_eq!(ns.boundary_indices().len(), 16);
    }
}
