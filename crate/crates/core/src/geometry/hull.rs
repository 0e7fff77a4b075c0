//! Lower convex hull of lifted planar points.
//!
//! Randomized incremental 3-D hull with a conflict graph. All orientation tests go through
//! exact predicates. A synthetic apex above the data closes the hull so coplanar and
//! collinear configurations need no special casing; faces touching it are never lower.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use robust::{orient3d, Coord3D};

use super::polygon::orient;
use super::{GeometryError, Point};

pub(crate) const NONE: usize = usize::MAX;

const SHUFFLE_SEED: u64 = 0x6d61_6c65_7861_7470;

/// Projected lower faces. Triangles are ccw in the plane; `neighbors[t][k]` is the
/// triangle across the edge opposite vertex `k`, or `NONE` on the border.
#[derive(Debug, Clone)]
pub(crate) struct LowerTriangulation {
    pub triangles: Vec<[usize; 3]>,
    pub neighbors: Vec<[usize; 3]>,
    pub is_vertex: Vec<bool>,
}

struct Face {
    v: [usize; 3],
    n: [usize; 3],
    alive: bool,
}

struct Lifted {
    p: Vec<[f64; 3]>,
}

impl Lifted {
    #[inline]
    fn o3(&self, f: &[usize; 3], q: usize) -> f64 {
        let c = |i: usize| Coord3D { x: self.p[i][0], y: self.p[i][1], z: self.p[i][2] };
        orient3d(c(f[0]), c(f[1]), c(f[2]), c(q))
    }
}

/// Lower hull of `(points[i], heights[i])` over the indices with `include[i]`.
pub(crate) fn lower_triangulation(
    points: &[Point],
    heights: &[f64],
    include: &[bool],
) -> Result<LowerTriangulation, GeometryError> {
    let mut ids: Vec<usize> = (0..points.len()).filter(|&i| include[i]).collect();
    if ids.len() < 3 {
        return Err(GeometryError::DegenerateInput);
    }
    for &i in &ids {
        if !heights[i].is_finite() {
            return Err(GeometryError::NonFinite { index: i });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(SHUFFLE_SEED);
    ids.shuffle(&mut rng);

    let p0 = points[ids[0]];
    let i1 = (1..ids.len()).find(|&k| points[ids[k]] != p0).ok_or(GeometryError::DegenerateInput)?;
    ids.swap(1, i1);
    let p1 = points[ids[1]];
    let i2 = (2..ids.len())
        .find(|&k| orient(p0, p1, points[ids[k]]) != 0.0)
        .ok_or(GeometryError::DegenerateInput)?;
    ids.swap(2, i2);

    let m = ids.len();
    let mut lifted = Lifted { p: Vec::with_capacity(m + 1) };
    let (mut zmin, mut zmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for &g in &ids {
        let z = heights[g];
        zmin = zmin.min(z);
        zmax = zmax.max(z);
        lifted.p.push([points[g][0], points[g][1], z]);
    }
    let apex = m;
    let cx = (lifted.p[0][0] + lifted.p[1][0] + lifted.p[2][0]) / 3.0;
    let cy = (lifted.p[0][1] + lifted.p[1][1] + lifted.p[2][1]) / 3.0;
    lifted.p.push([cx, cy, zmax + (zmax - zmin) + 1.0]);

    let mut faces: Vec<Face> = Vec::with_capacity(8 * m);
    let init = [([0, 1, 2], apex), ([0, 1, apex], 2), ([1, 2, apex], 0), ([2, 0, apex], 1)];
    for (mut v, opp) in init {
        if lifted.o3(&v, opp) < 0.0 {
            v.swap(1, 2);
        }
        faces.push(Face { v, n: [NONE; 3], alive: true });
    }
    for f in 0..4 {
        for k in 0..3 {
            let a = faces[f].v[(k + 1) % 3];
            let b = faces[f].v[(k + 2) % 3];
            for g in 0..4 {
                if g == f {
                    continue;
                }
                let gv = faces[g].v;
                if (0..3).any(|j| gv[j] == b && gv[(j + 1) % 3] == a) {
                    faces[f].n[k] = g;
                }
            }
        }
    }

    let mut face_conf: Vec<Vec<usize>> = vec![Vec::new(); 4];
    let mut pt_conf: Vec<Vec<usize>> = vec![Vec::new(); m];
    for p in 3..m {
        for f in 0..4 {
            if lifted.o3(&faces[f].v, p) < 0.0 {
                face_conf[f].push(p);
                pt_conf[p].push(f);
            }
        }
    }

    let mut vis_mark: Vec<usize> = vec![0; 4];
    let mut pt_mark: Vec<usize> = vec![0; m];
    let mut stamp = 0usize;
    let mut horizon: Vec<(usize, usize, usize, usize)> = Vec::new();
    let mut visible: Vec<usize> = Vec::new();
    // Horizon edge leaving each vertex; indexed by lifted vertex id, apex included.
    let mut next_of: Vec<usize> = vec![NONE; m + 1];

    for q in 3..m {
        visible.clear();
        let list = std::mem::take(&mut pt_conf[q]);
        for &f in &list {
            if faces[f].alive {
                visible.push(f);
            }
        }
        if visible.is_empty() {
            continue;
        }
        let tag = q + 1;
        for &f in &visible {
            vis_mark[f] = tag;
        }
        horizon.clear();
        for &f in &visible {
            for e in 0..3 {
                let g = faces[f].n[e];
                if vis_mark[g] != tag {
                    horizon.push((faces[f].v[(e + 1) % 3], faces[f].v[(e + 2) % 3], f, g));
                }
            }
        }
        for (idx, h) in horizon.iter().enumerate() {
            next_of[h.0] = idx;
        }
        let hl = horizon.len();
        let mut ordered = Vec::with_capacity(hl);
        let mut cur = 0usize;
        for _ in 0..hl {
            ordered.push(cur);
            let b = horizon[cur].1;
            cur = next_of[b];
            if cur == NONE {
                return Err(GeometryError::HullFailure);
            }
        }
        for h in &horizon {
            next_of[h.0] = NONE;
        }
        if cur != 0 {
            return Err(GeometryError::HullFailure);
        }

        let base = faces.len();
        for (s, &hi) in ordered.iter().enumerate() {
            let (a, b, _, g) = horizon[hi];
            let next = base + (s + 1) % hl;
            let prev = base + (s + hl - 1) % hl;
            faces.push(Face { v: [a, b, q], n: [next, prev, g], alive: true });
            vis_mark.push(0);
            face_conf.push(Vec::new());
        }
        for (s, &hi) in ordered.iter().enumerate() {
            let (_, _, vf, g) = horizon[hi];
            let nf = base + s;
            if let Some(slot) = faces[g].n.iter().position(|&x| x == vf) {
                faces[g].n[slot] = nf;
            }
            stamp += 1;
            let fv = faces[nf].v;
            for src in [vf, g] {
                for idx in 0..face_conf[src].len() {
                    let p = face_conf[src][idx];
                    if p <= q || pt_mark[p] == stamp {
                        continue;
                    }
                    pt_mark[p] = stamp;
                    if lifted.o3(&fv, p) < 0.0 {
                        face_conf[nf].push(p);
                        pt_conf[p].push(nf);
                    }
                }
            }
        }
        for &f in &visible {
            faces[f].alive = false;
            face_conf[f] = Vec::new();
        }
    }

    let mut lower_id = vec![NONE; faces.len()];
    let mut triangles = Vec::new();
    for (fi, f) in faces.iter().enumerate() {
        if !f.alive || f.v.contains(&apex) {
            continue;
        }
        let [a, b, c] = f.v;
        let pa = [lifted.p[a][0], lifted.p[a][1]];
        let pb = [lifted.p[b][0], lifted.p[b][1]];
        let pc = [lifted.p[c][0], lifted.p[c][1]];
        if orient(pa, pb, pc) < 0.0 {
            lower_id[fi] = triangles.len();
            triangles.push(fi);
        }
    }
    let mut tris = Vec::with_capacity(triangles.len());
    let mut nbrs = Vec::with_capacity(triangles.len());
    for &fi in &triangles {
        let f = &faces[fi];
        tris.push([ids[f.v[0]], ids[f.v[2]], ids[f.v[1]]]);
        let map = |x: usize| if x == NONE { NONE } else { lower_id[x] };
        nbrs.push([map(f.n[0]), map(f.n[2]), map(f.n[1])]);
    }
    let mut is_vertex = vec![false; points.len()];
    for t in &tris {
        for &v in t {
            is_vertex[v] = true;
        }
    }
    let mut lt = LowerTriangulation { triangles: tris, neighbors: nbrs, is_vertex };
    flip_slivers(points, &mut lt);
    Ok(lt)
}

/// Height over longest edge below which a triangle counts as a sliver.
const SLIVER: f64 = 1e-10;

/// Lattice nodes that are collinear up to rounding produce sliver faces whose gradients are
/// rounding noise. Each sliver is flipped across its longest edge when the surrounding quad
/// allows it; the function changes by rounding-level amounts only.
fn flip_slivers(points: &[Point], lt: &mut LowerTriangulation) {
    let d2 = |a: usize, b: usize| {
        let (p, q) = (points[a], points[b]);
        (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)
    };
    let longest = |t: &[usize; 3]| (0..3).max_by(|&i, &j| d2(t[(i + 1) % 3], t[(i + 2) % 3]).total_cmp(&d2(t[(j + 1) % 3], t[(j + 2) % 3]))).unwrap();
    let is_sliver = |t: &[usize; 3]| {
        let k = longest(t);
        let l2 = d2(t[(k + 1) % 3], t[(k + 2) % 3]);
        orient(points[t[0]], points[t[1]], points[t[2]]).abs() < SLIVER * l2
    };
    let mut queue: Vec<usize> = (0..lt.triangles.len()).filter(|&t| is_sliver(&lt.triangles[t])).collect();
    let mut budget = 8 * lt.triangles.len() + 16;
    while let Some(t) = queue.pop() {
        if budget == 0 {
            break;
        }
        budget -= 1;
        let tv = lt.triangles[t];
        if !is_sliver(&tv) {
            continue;
        }
        let k = longest(&tv);
        let u = lt.neighbors[t][k];
        if u == NONE {
            continue;
        }
        let (c, a, b) = (tv[k], tv[(k + 1) % 3], tv[(k + 2) % 3]);
        let uv = lt.triangles[u];
        let Some(ku) = (0..3).find(|&j| uv[j] != a && uv[j] != b) else { continue };
        let d = uv[ku];
        let (pa, pb, pc, pd) = (points[a], points[b], points[c], points[d]);
        if !(orient(pa, pd, pc) > 0.0 && orient(pd, pb, pc) > 0.0) {
            continue;
        }
        let across = |tri: usize, x: usize, y: usize| {
            let v = lt.triangles[tri];
            let j = (0..3).find(|&j| v[j] != x && v[j] != y).expect("edge of triangle");
            lt.neighbors[tri][j]
        };
        let t_ca = across(t, c, a);
        let t_bc = across(t, b, c);
        let u_ad = across(u, a, d);
        let u_db = across(u, d, b);
        lt.triangles[t] = [a, d, c];
        lt.neighbors[t] = [u, t_ca, u_ad];
        lt.triangles[u] = [d, b, c];
        lt.neighbors[u] = [t_bc, t, u_db];
        for (ext, from, to) in [(t_bc, t, u), (u_ad, u, t)] {
            if ext != NONE {
                for s in lt.neighbors[ext].iter_mut() {
                    if *s == from {
                        *s = to;
                    }
                }
            }
        }
        for x in [t, u] {
            if is_sliver(&lt.triangles[x]) {
                queue.push(x);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::polygon::area;

    #[test]
    fn orient3d_sign_convention() {
        let c = |x, y, z| Coord3D { x, y, z };
        // d below the plane of a ccw (viewed from above) triangle gives a positive value.
        let v = orient3d(c(0.0, 0.0, 0.0), c(1.0, 0.0, 0.0), c(0.0, 1.0, 0.0), c(0.0, 0.0, -1.0));
        assert!(v > 0.0);
    }

    fn check_cover(points: &[Point], lt: &LowerTriangulation, hull_area: f64) {
        let mut s = 0.0;
        for t in &lt.triangles {
            let tri = [points[t[0]], points[t[1]], points[t[2]]];
            assert!(orient(tri[0], tri[1], tri[2]) > 0.0, "triangle not ccw");
            s += area(&tri);
        }
        assert!((s - hull_area).abs() < 1e-12 * hull_area.max(1.0), "area {s} vs {hull_area}");
        for (ti, nb) in lt.neighbors.iter().enumerate() {
            for k in 0..3 {
                let u = nb[k];
                if u == NONE {
                    continue;
                }
                assert!(lt.neighbors[u].contains(&ti));
                let a = lt.triangles[ti][(k + 1) % 3];
                let b = lt.triangles[ti][(k + 2) % 3];
                assert!(lt.triangles[u].contains(&a) && lt.triangles[u].contains(&b));
            }
        }
    }

    #[test]
    fn paraboloid_on_grid_uses_every_node() {
        let mut pts = Vec::new();
        for i in 0..9 {
            for j in 0..9 {
                pts.push([i as f64 * 0.25 - 1.0, j as f64 * 0.25 - 1.0 + i as f64 / 32.0]);
            }
        }
        let h: Vec<f64> = pts.iter().map(|p| p[0] * p[0] + p[1] * p[1]).collect();
        let lt = lower_triangulation(&pts, &h, &vec![true; pts.len()]).unwrap();
        assert!(lt.is_vertex.iter().all(|&v| v));
        check_cover(&pts, &lt, area(&crate::geometry::polygon::convex_hull(&pts)));
        assert_eq!(lt.triangles.len(), 2 * 64);
    }

    #[test]
    fn raised_center_is_dropped() {
        let pts = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]];
        let h = vec![0.0, 0.0, 0.0, 0.0, 1.0];
        let lt = lower_triangulation(&pts, &h, &[true; 5]).unwrap();
        assert!(!lt.is_vertex[4]);
        check_cover(&pts, &lt, 1.0);
    }

    #[test]
    fn planar_data_still_triangulates() {
        let mut pts = Vec::new();
        for i in 0..6 {
            for j in 0..6 {
                pts.push([i as f64, j as f64]);
            }
        }
        let h: Vec<f64> = pts.iter().map(|p| 2.0 * p[0] - p[1] + 3.0).collect();
        let lt = lower_triangulation(&pts, &h, &vec![true; pts.len()]).unwrap();
        check_cover(&pts, &lt, 25.0);
    }

    #[test]
    fn rounding_slivers_are_flipped() {
        // Lattice diagonals are collinear only up to rounding; planar data lets the hull put
        // slivers there.
        let h = 2.0 / 7.0;
        let mut pts = Vec::new();
        for i in 0..8 {
            for j in 0..8 {
                pts.push([-1.0 + i as f64 * h, -1.0 + j as f64 * h]);
            }
        }
        let z: Vec<f64> = pts.iter().map(|p| p[0] + p[1] + 0.1).collect();
        let lt = lower_triangulation(&pts, &z, &vec![true; pts.len()]).unwrap();
        for t in &lt.triangles {
            assert!(orient(pts[t[0]], pts[t[1]], pts[t[2]]) > 1e-8 * h * h);
        }
        check_cover(&pts, &lt, 4.0);
    }

    #[test]
    fn collinear_input_is_rejected() {
        let pts = vec![[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]];
        let r = lower_triangulation(&pts, &[0.0; 3], &[true; 3]);
        assert!(matches!(r, Err(GeometryError::DegenerateInput)));
    }

    #[test]
    fn random_points_cover_hull() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        use rand::Rng;
        let pts: Vec<Point> = (0..400).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
        let h: Vec<f64> = pts.iter().map(|_| rng.random::<f64>()).collect();
        let lt = lower_triangulation(&pts, &h, &vec![true; pts.len()]).unwrap();
        check_cover(&pts, &lt, area(&crate::geometry::polygon::convex_hull(&pts)));
    }
}
