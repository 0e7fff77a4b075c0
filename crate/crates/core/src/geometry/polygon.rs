//! Planar polygon helpers. Polygons are vertex lists in counter-clockwise order.

use super::Point;
use robust::{orient2d, Coord};

#[inline]
pub fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub fn norm(a: Point) -> f64 {
    a[0].hypot(a[1])
}

#[inline]
pub fn dist(a: Point, b: Point) -> f64 {
    norm(sub(a, b))
}

#[inline]
pub fn orient(a: Point, b: Point, c: Point) -> f64 {
    orient2d(
        Coord { x: a[0], y: a[1] },
        Coord { x: b[0], y: b[1] },
        Coord { x: c[0], y: c[1] },
    )
}

/// Signed shoelace area; positive for counter-clockwise input.
pub fn signed_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        s += a[0] * b[1] - a[1] * b[0];
    }
    0.5 * s
}

pub fn area(poly: &[Point]) -> f64 {
    signed_area(poly).abs()
}

pub fn centroid(poly: &[Point]) -> Point {
    let n = poly.len();
    let a = signed_area(poly);
    if n < 3 || a.abs() < f64::MIN_POSITIVE {
        let mut c = [0.0, 0.0];
        for p in poly {
            c[0] += p[0];
            c[1] += p[1];
        }
        let k = n.max(1) as f64;
        return [c[0] / k, c[1] / k];
    }
    let (mut cx, mut cy) = (0.0, 0.0);
    for i in 0..n {
        let p = poly[i];
        let q = poly[(i + 1) % n];
        let cr = p[0] * q[1] - p[1] * q[0];
        cx += (p[0] + q[0]) * cr;
        cy += (p[1] + q[1]) * cr;
    }
    [cx / (6.0 * a), cy / (6.0 * a)]
}

/// Counter-clockwise convex hull with collinear points removed (monotone chain).
pub fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts: Vec<Point> = points.iter().copied().filter(|p| p[0].is_finite() && p[1].is_finite()).collect();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Point> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && orient(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len && orient(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Keeps the part of a convex polygon where `n . p <= c`.
pub fn clip_halfplane(poly: &[Point], n: Point, c: f64) -> Vec<Point> {
    let m = poly.len();
    if m == 0 {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(m + 1);
    for i in 0..m {
        let p = poly[i];
        let q = poly[(i + 1) % m];
        let fp = dot(n, p) - c;
        let fq = dot(n, q) - c;
        if fp <= 0.0 {
            out.push(p);
        }
        if (fp < 0.0 && fq > 0.0) || (fp > 0.0 && fq < 0.0) {
            let t = fp / (fp - fq);
            out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
        }
    }
    out
}

/// Euclidean distance from `x` to the boundary of a convex polygon.
pub fn distance_to_boundary(poly: &[Point], x: Point) -> f64 {
    let m = poly.len();
    let mut best = f64::INFINITY;
    for i in 0..m {
        best = best.min(segment_distance(poly[i], poly[(i + 1) % m], x));
    }
    best
}

pub fn segment_distance(a: Point, b: Point, x: Point) -> f64 {
    let ab = sub(b, a);
    let l2 = dot(ab, ab);
    let t = if l2 > 0.0 { (dot(sub(x, a), ab) / l2).clamp(0.0, 1.0) } else { 0.0 };
    dist(x, [a[0] + t * ab[0], a[1] + t * ab[1]])
}

/// Nearest point of a ccw convex polygon to `x`; `x` itself when inside.
pub fn closest_point(poly: &[Point], x: Point) -> Point {
    if poly.len() >= 3 && inner_margin(poly, x) >= 0.0 {
        return x;
    }
    let m = poly.len();
    let mut best = (f64::INFINITY, x);
    for i in 0..m {
        let (a, b) = (poly[i], poly[(i + 1) % m]);
        let ab = sub(b, a);
        let l2 = dot(ab, ab);
        let t = if l2 > 0.0 { (dot(sub(x, a), ab) / l2).clamp(0.0, 1.0) } else { 0.0 };
        let q = [a[0] + t * ab[0], a[1] + t * ab[1]];
        let d = dist(x, q);
        if d < best.0 {
            best = (d, q);
        }
    }
    best.1
}

/// Signed distance to the supporting lines: positive inside a ccw convex polygon.
pub fn inner_margin(poly: &[Point], x: Point) -> f64 {
    let m = poly.len();
    let mut best = f64::INFINITY;
    for i in 0..m {
        let a = poly[i];
        let b = poly[(i + 1) % m];
        let e = sub(b, a);
        let len = norm(e);
        if len == 0.0 {
            continue;
        }
        let s = (e[0] * (x[1] - a[1]) - e[1] * (x[0] - a[0])) / len;
        best = best.min(s);
    }
    best
}

/// Radius of the largest disk inside a ccw convex polygon, by nested ternary search on the
/// concave function `inner_margin`.
pub fn inradius(poly: &[Point]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let (lo, hi) = poly.iter().fold(([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]), |(lo, hi), p| {
        ([lo[0].min(p[0]), lo[1].min(p[1])], [hi[0].max(p[0]), hi[1].max(p[1])])
    });
    let ternary = |f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64| {
        for _ in 0..100 {
            let m1 = a + (b - a) / 3.0;
            let m2 = b - (b - a) / 3.0;
            if f(m1) < f(m2) {
                a = m1;
            } else {
                b = m2;
            }
        }
        f(0.5 * (a + b))
    };
    let column = |x: f64| ternary(&|y| inner_margin(poly, [x, y]), lo[1], hi[1]);
    ternary(&column, lo[0], hi[0]).max(0.0)
}

pub fn diameter(points: &[Point]) -> f64 {
    let hull = convex_hull(points);
    let mut d: f64 = 0.0;
    for i in 0..hull.len() {
        for j in i + 1..hull.len() {
            d = d.max(dist(hull[i], hull[j]));
        }
    }
    d
}

/// Regular polygon of `m` vertices on the circle of radius `r`, ccw.
pub fn regular_polygon(m: usize, r: f64) -> Vec<Point> {
    (0..m)
        .map(|k| {
            let t = std::f64::consts::TAU * k as f64 / m as f64;
            [r * t.cos(), r * t.sin()]
        })
        .collect()
}

pub fn is_convex_ccw(poly: &[Point]) -> bool {
    let m = poly.len();
    if m < 3 {
        return false;
    }
    (0..m).all(|i| orient(poly[i], poly[(i + 1) % m], poly[(i + 2) % m]) > 0.0)
}
