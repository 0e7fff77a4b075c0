use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::hull::{lower_triangulation, NONE};
use super::polygon::{self, clip_halfplane, convex_hull, dot, norm, orient, sub};
use super::{GeometryError, NodeSet, Point};

/// How a node relates to the convex hull of the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeStatus {
    /// Vertex of the lower hull.
    Vertex,
    /// On the hull but not a vertex; carries no measure.
    OnHull,
    /// Strictly above the hull.
    Above,
}

/// A maximal planar piece of the graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Facet {
    pub gradient: Point,
    pub triangles: Vec<usize>,
    pub vertices: Vec<usize>,
}

/// Subdifferential of the hull at a node, as a polygon in slope space.
#[derive(Debug, Clone, PartialEq)]
pub struct SubdifferentialCell {
    pub node: usize,
    pub polygon: Vec<Point>,
    pub area: f64,
}

/// Convex piecewise-linear function: the lower convex envelope of node data.
#[derive(Debug, Clone)]
pub struct PLConvexFunction {
    nodes: Arc<NodeSet>,
    data: Vec<f64>,
    values: Vec<f64>,
    status: Vec<NodeStatus>,
    triangles: Vec<[usize; 3]>,
    neighbors: Vec<[usize; 3]>,
    gradients: Vec<Point>,
    offsets: Vec<f64>,
    inc_start: Vec<usize>,
    inc: Vec<usize>,
    border_vertex: Vec<bool>,
}

/// Serialized form of a function on a node set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PLFunctionDoc {
    pub points: Vec<Point>,
    pub values: Vec<f64>,
    pub boundary: Vec<bool>,
}

const ON_HULL_REL: f64 = 1e-12;

impl PLConvexFunction {
    /// Lower convex hull of `(x_i, values_i)`.
    pub fn lower_hull(nodes: Arc<NodeSet>, values: Vec<f64>) -> Result<Self, GeometryError> {
        let include = vec![true; nodes.len()];
        Self::build(nodes, values, &include)
    }

    /// Hull over the nodes flagged in `include`; other nodes get hull values.
    pub(crate) fn build(nodes: Arc<NodeSet>, data: Vec<f64>, include: &[bool]) -> Result<Self, GeometryError> {
        if data.len() != nodes.len() {
            return Err(GeometryError::LengthMismatch { expected: nodes.len(), got: data.len() });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite { index: i });
        }
        let pts = nodes.points();
        let lt = lower_triangulation(pts, &data, include)?;
        let nt = lt.triangles.len();
        let mut gradients = Vec::with_capacity(nt);
        let mut offsets = Vec::with_capacity(nt);
        for t in &lt.triangles {
            let (g, c) = plane(pts[t[0]], pts[t[1]], pts[t[2]], data[t[0]], data[t[1]], data[t[2]]);
            gradients.push(g);
            offsets.push(c);
        }
        let n = nodes.len();
        let mut count = vec![0usize; n + 1];
        for t in &lt.triangles {
            for &v in t {
                count[v + 1] += 1;
            }
        }
        for i in 0..n {
            count[i + 1] += count[i];
        }
        let inc_start = count.clone();
        let mut fill = count;
        let mut inc = vec![0usize; inc_start[n]];
        for (ti, t) in lt.triangles.iter().enumerate() {
            for &v in t {
                inc[fill[v]] = ti;
                fill[v] += 1;
            }
        }
        let mut border_vertex = vec![false; n];
        for (ti, nb) in lt.neighbors.iter().enumerate() {
            for k in 0..3 {
                if nb[k] == NONE {
                    border_vertex[lt.triangles[ti][(k + 1) % 3]] = true;
                    border_vertex[lt.triangles[ti][(k + 2) % 3]] = true;
                }
            }
        }
        let mut f = Self {
            nodes,
            values: data.clone(),
            data,
            status: vec![NodeStatus::Vertex; n],
            triangles: lt.triangles,
            neighbors: lt.neighbors,
            gradients,
            offsets,
            inc_start,
            inc,
            border_vertex,
        };
        let mut hint = 0usize;
        for i in 0..n {
            if lt.is_vertex[i] {
                continue;
            }
            let x = f.nodes.point(i);
            let v = match f.locate_from(x, hint) {
                Some(t) => {
                    hint = t;
                    f.plane_value(t, x)
                }
                None => f.max_plane(x),
            };
            f.values[i] = v;
            let tol = ON_HULL_REL * (1.0 + v.abs());
            f.status[i] = if f.data[i] - v > tol { NodeStatus::Above } else { NodeStatus::OnHull };
        }
        Ok(f)
    }

    pub fn from_doc(doc: &PLFunctionDoc) -> Result<Self, GeometryError> {
        let nodes = NodeSet::with_hull_domain(doc.points.clone(), doc.boundary.clone())?;
        Self::lower_hull(Arc::new(nodes), doc.values.clone())
    }

    pub fn to_doc(&self) -> PLFunctionDoc {
        PLFunctionDoc {
            points: self.nodes.points().to_vec(),
            values: self.values.clone(),
            boundary: self.nodes.boundary_flags().to_vec(),
        }
    }

    pub fn nodes(&self) -> &Arc<NodeSet> {
        &self.nodes
    }

    /// Hull values at the nodes.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    /// Data the hull was built from.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn status(&self, i: usize) -> NodeStatus {
        self.status[i]
    }

    pub fn is_vertex(&self, i: usize) -> bool {
        self.status[i] == NodeStatus::Vertex
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn triangle_gradients(&self) -> &[Point] {
        &self.gradients
    }

    /// Nodes where the data touches its envelope.
    pub fn contact_set(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| self.status[i] != NodeStatus::Above).collect()
    }

    pub fn incident_triangles(&self, i: usize) -> &[usize] {
        &self.inc[self.inc_start[i]..self.inc_start[i + 1]]
    }

    /// Triangulation neighbours of a vertex, sorted.
    pub fn vertex_neighbors(&self, i: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .incident_triangles(i)
            .iter()
            .flat_map(|&t| self.triangles[t])
            .filter(|&j| j != i)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    #[inline]
    fn plane_value(&self, t: usize, x: Point) -> f64 {
        dot(self.gradients[t], x) + self.offsets[t]
    }

    fn max_plane(&self, x: Point) -> f64 {
        (0..self.triangles.len()).map(|t| self.plane_value(t, x)).fold(f64::NEG_INFINITY, f64::max)
    }

    fn contains(&self, t: usize, x: Point) -> bool {
        let p = self.nodes.points();
        let [a, b, c] = self.triangles[t];
        orient(p[a], p[b], x) >= 0.0 && orient(p[b], p[c], x) >= 0.0 && orient(p[c], p[a], x) >= 0.0
    }

    /// Triangle containing `x`, by a visibility walk with a linear-scan fallback.
    pub fn locate(&self, x: Point) -> Option<usize> {
        self.locate_from(x, 0)
    }

    fn locate_from(&self, x: Point, hint: usize) -> Option<usize> {
        let nt = self.triangles.len();
        if nt == 0 {
            return None;
        }
        let p = self.nodes.points();
        let mut t = hint.min(nt - 1);
        let mut rot = 0usize;
        'walk: for _ in 0..4 * nt + 16 {
            rot = (rot + 1) % 3;
            let tri = self.triangles[t];
            for s in 0..3 {
                let k = (s + rot) % 3;
                let a = p[tri[(k + 1) % 3]];
                let b = p[tri[(k + 2) % 3]];
                if orient(a, b, x) < 0.0 {
                    let u = self.neighbors[t][k];
                    if u == NONE {
                        break 'walk;
                    }
                    t = u;
                    continue 'walk;
                }
            }
            return Some(t);
        }
        (0..nt).find(|&t| self.contains(t, x))
    }

    /// Value of the convex hull at an arbitrary point of the domain.
    pub fn evaluate(&self, x: Point) -> f64 {
        match self.locate(x) {
            Some(t) => self.plane_value(t, x),
            None => self.max_plane(x),
        }
    }

    /// Gradient at `x` (of one containing triangle).
    pub fn gradient_at(&self, x: Point) -> Option<Point> {
        self.locate(x).map(|t| self.gradients[t])
    }

    /// Triangles merged into maximal planar facets.
    pub fn facets(&self) -> Vec<Facet> {
        let nt = self.triangles.len();
        let mut parent: Vec<usize> = (0..nt).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for t in 0..nt {
            for &u in &self.neighbors[t] {
                if u == NONE || u < t {
                    continue;
                }
                let (g, h) = (self.gradients[t], self.gradients[u]);
                let scale = 1.0 + norm(g).max(norm(h));
                if norm(sub(g, h)) <= 1e-10 * scale {
                    let (a, b) = (find(&mut parent, t), find(&mut parent, u));
                    if a != b {
                        parent[a.max(b)] = a.min(b);
                    }
                }
            }
        }
        let mut index = vec![NONE; nt];
        let mut out: Vec<Facet> = Vec::new();
        for t in 0..nt {
            let r = find(&mut parent, t);
            if index[r] == NONE {
                index[r] = out.len();
                out.push(Facet { gradient: self.gradients[r], triangles: Vec::new(), vertices: Vec::new() });
            }
            let f = &mut out[index[r]];
            f.triangles.push(t);
            f.vertices.extend_from_slice(&self.triangles[t]);
        }
        for f in &mut out {
            f.vertices.sort_unstable();
            f.vertices.dedup();
        }
        out
    }

    /// Convex hull of all triangle gradients: the total subgradient image.
    pub fn gradient_hull(&self) -> Vec<Point> {
        convex_hull(&self.gradients)
    }

    /// Subdifferential polygon at node `i` (clipped to the gradient hull on the border).
    pub fn cell(&self, i: usize) -> SubdifferentialCell {
        let poly = if self.status[i] != NodeStatus::Vertex {
            Vec::new()
        } else if !self.border_vertex[i] {
            convex_hull(&self.incident_triangles(i).iter().map(|&t| self.gradients[t]).collect::<Vec<_>>())
        } else {
            self.border_cell(i, self.gradient_hull())
        };
        let area = polygon::area(&poly);
        SubdifferentialCell { node: i, polygon: poly, area }
    }

    fn border_cell(&self, i: usize, g: Vec<Point>) -> Vec<Point> {
        let xi = self.nodes.point(i);
        let mut poly = g;
        for j in self.vertex_neighbors(i) {
            let d = sub(self.nodes.point(j), xi);
            poly = clip_halfplane(&poly, d, self.values[j] - self.values[i]);
            if poly.is_empty() {
                break;
            }
        }
        poly
    }

    /// Monge-Ampere weights at every node (zero off the vertex set).
    pub fn ma_weights(&self) -> Vec<f64> {
        let n = self.nodes.len();
        let mut g: Option<Vec<Point>> = None;
        let mut w = vec![0.0; n];
        for i in 0..n {
            if self.status[i] != NodeStatus::Vertex {
                continue;
            }
            w[i] = if self.border_vertex[i] {
                let gh = g.get_or_insert_with(|| self.gradient_hull()).clone();
                polygon::area(&self.border_cell(i, gh))
            } else {
                let pts: Vec<Point> = self.incident_triangles(i).iter().map(|&t| self.gradients[t]).collect();
                polygon::area(&convex_hull(&pts))
            };
        }
        w
    }

    /// Interior-node weights only: the measure relevant for Dirichlet problems.
    pub fn interior_ma_weights(&self) -> Vec<f64> {
        let n = self.nodes.len();
        let mut w = vec![0.0; n];
        for i in 0..n {
            if self.nodes.is_boundary(i) || self.status[i] != NodeStatus::Vertex {
                continue;
            }
            if self.border_vertex[i] {
                let gh = self.gradient_hull();
                w[i] = polygon::area(&self.border_cell(i, gh));
            } else {
                let pts: Vec<Point> = self.incident_triangles(i).iter().map(|&t| self.gradients[t]).collect();
                w[i] = polygon::area(&convex_hull(&pts));
            }
        }
        w
    }

    /// Linearization of the interior cell areas: `(i, j, w_ij)` per interior mesh edge,
    /// where `dF_i/du_j = w_ij` and `dF_i/du_i = -sum_j w_ij`.
    pub fn edge_weights(&self) -> Vec<(usize, usize, f64)> {
        let p = self.nodes.points();
        let mut out = Vec::with_capacity(3 * self.triangles.len() / 2 + 1);
        for t in 0..self.triangles.len() {
            for k in 0..3 {
                let u = self.neighbors[t][k];
                if u == NONE || u < t {
                    continue;
                }
                let i = self.triangles[t][(k + 1) % 3];
                let j = self.triangles[t][(k + 2) % 3];
                let w = norm(sub(self.gradients[t], self.gradients[u])) / polygon::dist(p[i], p[j]);
                out.push((i, j, w));
            }
        }
        out
    }
}

/// Plane through three lifted points: gradient and offset.
pub(crate) fn plane(a: Point, b: Point, c: Point, ua: f64, ub: f64, uc: f64) -> (Point, f64) {
    let (e1, e2) = (sub(b, a), sub(c, a));
    let det = e1[0] * e2[1] - e1[1] * e2[0];
    let (d1, d2) = (ub - ua, uc - ua);
    let gx = (d1 * e2[1] - d2 * e1[1]) / det;
    let gy = (e1[0] * d2 - e2[0] * d1) / det;
    let g = [gx, gy];
    (g, ua - dot(g, a))
}

/// Lower convex envelope of node data; `contact_set` gives the touching nodes.
pub fn convex_envelope(nodes: Arc<NodeSet>, values: Vec<f64>) -> Result<PLConvexFunction, GeometryError> {
    PLConvexFunction::lower_hull(nodes, values)
}

/// Subdifferential of the hull at node `i` computed directly from all half-planes
/// `p . (x_j - x_i) <= u_j - u_i`, inside the square `|p|_inf <= bound`.
pub fn halfplane_cell(nodes: &NodeSet, values: &[f64], i: usize, bound: f64) -> Vec<Point> {
    let mut poly = vec![[-bound, -bound], [bound, -bound], [bound, bound], [-bound, bound]];
    let xi = nodes.point(i);
    for j in 0..nodes.len() {
        if j == i {
            continue;
        }
        poly = clip_halfplane(&poly, sub(nodes.point(j), xi), values[j] - values[i]);
        if poly.is_empty() {
            break;
        }
    }
    poly
}

/// Slope bound enclosing every interior subdifferential of the hull of `values`.
pub fn interior_slope_bound(nodes: &NodeSet, values: &[f64]) -> f64 {
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let mut dmin = f64::INFINITY;
    for i in nodes.interior_indices() {
        dmin = dmin.min(nodes.border_distance(i));
    }
    2.0 * (hi - lo) / dmin.max(f64::MIN_POSITIVE) + 1.0
}

/// Two functions are equal when they share node sets and nodal values.
impl PartialEq for PLConvexFunction {
    fn eq(&self, other: &Self) -> bool {
        self.values() == other.values() && self.nodes() == other.nodes()
    }
}
