//! Hyperplane obstacle problems `v >= l_p + h` with `M v = M phi` off the coincidence set,
//! calibration of the height against a mass budget, and the pointwise upper envelope.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::polygon::{centroid, closest_point, dot, inner_margin};
use crate::geometry::{PLConvexFunction, Point};
use crate::measures::MassScale;
use crate::solver::engine::{self, EngineInput};
use crate::solver::{SolverConfig, SolverError};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ObstacleError {
    #[error("invalid obstacle: {0}")]
    InvalidObstacle(String),
    #[error("mass budget exceeds the discrepancy at the maximal height {h_max:e}")]
    BudgetExceedsRange { h_max: f64, fallback: Box<ObstacleSolution> },
    #[error(transparent)]
    Solver(#[from] SolverError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObstacleConfig {
    pub solver: SolverConfig,
    /// Absolute tolerance on `v - (l_p + h)` for coincidence.
    pub contact_tol: f64,
    /// Relative tolerance on the calibrated discrepancy.
    pub calib_tol: f64,
    pub max_calib_steps: usize,
}

impl Default for ObstacleConfig {
    fn default() -> Self {
        Self { solver: SolverConfig::default(), contact_tol: 1e-9, calib_tol: 1e-4, max_calib_steps: 80 }
    }
}

/// Obstacle `l_p(x) + h` with `l_p(x) = offset + p . x` supporting `phi` at node `x_p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstacleSpec {
    pub p: Point,
    pub x_p: usize,
    pub offset: f64,
    pub h: f64,
}

impl ObstacleSpec {
    /// Support plane of slope `p`, anchored at the node minimizing `phi - p . x`.
    pub fn supporting(phi: &PLConvexFunction, p: Point) -> Self {
        let xs = phi.nodes().points();
        let mut best = (f64::INFINITY, 0usize);
        for (i, x) in xs.iter().enumerate() {
            let g = phi.value(i) - dot(p, *x);
            if g < best.0 {
                best = (g, i);
            }
        }
        Self { p, x_p: best.1, offset: best.0, h: 0.0 }
    }

    pub fn with_height(self, h: f64) -> Self {
        Self { h, ..self }
    }

    pub fn plane(&self, x: Point) -> f64 {
        self.offset + dot(self.p, x)
    }

    pub fn obstacle(&self, x: Point) -> f64 {
        self.plane(x) + self.h
    }

    /// Largest admissible height: `min` over boundary nodes of `phi - l_p`.
    pub fn max_height(&self, phi: &PLConvexFunction) -> f64 {
        let ns = phi.nodes();
        ns.boundary_indices()
            .into_iter()
            .map(|j| phi.value(j) - self.plane(ns.point(j)))
            .fold(f64::INFINITY, f64::min)
            .max(0.0)
    }

    pub fn validate(&self, phi: &PLConvexFunction) -> Result<(), ObstacleError> {
        let ns = phi.nodes();
        let scale = 1e-11 * (1.0 + phi.values().iter().fold(0.0f64, |m, v| m.max(v.abs())));
        if self.x_p >= ns.len() {
            return Err(ObstacleError::InvalidObstacle(format!("anchor {} out of range", self.x_p)));
        }
        for i in 0..ns.len() {
            if self.plane(ns.point(i)) > phi.value(i) + scale {
                return Err(ObstacleError::InvalidObstacle(format!("plane exceeds phi at node {i}")));
            }
        }
        let hmax = self.max_height(phi);
        if !(self.h >= 0.0 && self.h <= hmax + scale) {
            return Err(ObstacleError::InvalidObstacle(format!("height {} outside [0, {hmax}]", self.h)));
        }
        Ok(())
    }
}

/// Interior nodes where the solution sits on the obstacle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceSet {
    pub nodes: Vec<usize>,
    /// Mass removed from the background on the set, `sum (M phi - M v)`.
    pub mass: f64,
    pub h: f64,
    /// Background atoms carried by the set.
    #[serde(skip)]
    pub background_mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleSolution {
    pub function: PLConvexFunction,
    pub spec: ObstacleSpec,
    pub coincidence: CoincidenceSet,
    /// Total variation of `M v - M phi` over interior nodes.
    pub discrepancy: f64,
    pub iters: usize,
    pub max_raise: f64,
}

pub fn solve_obstacle_at_height(phi: &PLConvexFunction, spec: &ObstacleSpec, cfg: &ObstacleConfig) -> Result<ObstacleSolution, ObstacleError> {
    spec.validate(phi)?;
    solve_unchecked(phi, spec, cfg)
}

fn solve_unchecked(phi: &PLConvexFunction, spec: &ObstacleSpec, cfg: &ObstacleConfig) -> Result<ObstacleSolution, ObstacleError> {
    let nodes = phi.nodes();
    let n = nodes.len();
    let target = phi.interior_ma_weights();
    let psi: Vec<f64> = (0..n).map(|i| spec.obstacle(nodes.point(i))).collect();
    let include = engine::include_mask(nodes, &target);
    let input = EngineInput { nodes, target: &target, obstacle: Some(&psi) };
    let boundary: Vec<f64> = (0..n).map(|i| if nodes.is_boundary(i) { phi.value(i) } else { 0.0 }).collect();
    // Earlier solutions at larger heights are admissible seeds but flat on their coincidence
    // sets, which makes the iteration crawl; a cold start is faster.
    let start = if spec.h == 0.0 && engine::admissible_start(&input, &boundary, &include, phi.values(), &cfg.solver)? {
        phi.values().to_vec()
    } else {
        engine::initial_guess(&input, &boundary, &include, &cfg.solver)?
    };
    let out = engine::run(&input, &cfg.solver, start, &include)?;
    let v = out.function;
    let w = out.weights;
    let mut k = Vec::new();
    let (mut mass, mut bg) = (0.0, 0.0);
    for i in nodes.interior_indices() {
        if v.value(i) - psi[i] <= cfg.contact_tol {
            k.push(i);
            mass += target[i] - w[i];
            bg += target[i];
        }
    }
    let discrepancy = nodes.interior_indices().iter().map(|&i| (w[i] - target[i]).abs()).sum();
    Ok(ObstacleSolution {
        function: v,
        spec: *spec,
        coincidence: CoincidenceSet { nodes: k, mass, h: spec.h, background_mass: bg },
        discrepancy,
        iters: out.iters,
        max_raise: out.max_raise,
    })
}

/// Height whose obstacle solution has discrepancy `omega_n a^n`, by bracketed regula falsi
/// (Illinois variant) on the monotone map `h -> discrepancy(h)`.
pub fn calibrate_height(phi: &PLConvexFunction, p: Point, a: MassScale, cfg: &ObstacleConfig) -> Result<ObstacleSolution, ObstacleError> {
    calibrate_height_from(phi, p, a, cfg, None)
}

/// [`calibrate_height`] started at `guess`, which saves most of the bracketing solves when the
/// guess is close. The result depends on the guess only within the calibration tolerance.
pub fn calibrate_height_from(phi: &PLConvexFunction, p: Point, a: MassScale, cfg: &ObstacleConfig, guess: Option<f64>) -> Result<ObstacleSolution, ObstacleError> {
    let base = ObstacleSpec::supporting(phi, p);
    let budget = a.total_variation;
    if budget <= 0.0 {
        return solve_unchecked(phi, &base, cfg);
    }
    let h_max = base.max_height(phi);
    let Some(mut h) = guess.filter(|g| *g > 0.0 && *g < h_max) else {
        let zero = solve_unchecked(phi, &base, cfg)?;
        let top = solve_unchecked(phi, &base.with_height(h_max), cfg)?;
        if top.discrepancy < budget * (1.0 - cfg.calib_tol) {
            return Err(ObstacleError::BudgetExceedsRange { h_max, fallback: Box::new(top) });
        }
        let (g_lo, g_hi) = (zero.discrepancy - budget, top.discrepancy - budget);
        return illinois(phi, &base, budget, cfg, (0.0, g_lo), (h_max, g_hi), top);
    };
    // The flat start has no discrepancy, so h = 0 brackets from below.
    let (mut lo, mut g_lo) = (0.0, -budget);
    for _ in 0..cfg.max_calib_steps {
        let sol = solve_unchecked(phi, &base.with_height(h), cfg)?;
        let g = sol.discrepancy - budget;
        if g.abs() <= cfg.calib_tol * budget {
            return Ok(sol);
        }
        if g > 0.0 {
            return illinois(phi, &base, budget, cfg, (lo, g_lo), (h, g), sol);
        }
        if h >= h_max {
            return Err(ObstacleError::BudgetExceedsRange { h_max, fallback: Box::new(sol) });
        }
        (lo, g_lo) = (h, g);
        let grow = if sol.discrepancy > 0.0 { (1.02 * budget / sol.discrepancy).min(4.0) } else { 2.0 };
        h = (h * grow).min(h_max);
    }
    Err(ObstacleError::Solver(SolverError::NotSolvable(format!("no upper bracket for the height at slope {p:?}"))))
}

fn illinois(
    phi: &PLConvexFunction,
    base: &ObstacleSpec,
    budget: f64,
    cfg: &ObstacleConfig,
    (mut lo, mut g_lo): (f64, f64),
    (mut hi, mut g_hi): (f64, f64),
    mut best_hi: ObstacleSolution,
) -> Result<ObstacleSolution, ObstacleError> {
    let mut side = 0i32;
    for _ in 0..cfg.max_calib_steps {
        if g_hi.abs() <= cfg.calib_tol * budget {
            return Ok(best_hi);
        }
        let w = hi - lo;
        let mut h = (lo * g_hi - hi * g_lo) / (g_hi - g_lo);
        if !(h > lo + 1e-3 * w && h < hi - 1e-3 * w) {
            h = 0.5 * (lo + hi);
        }
        if w <= 1e-15 * (1.0 + hi) {
            break;
        }
        let sol = solve_unchecked(phi, &base.with_height(h), cfg)?;
        let g = sol.discrepancy - budget;
        if g.abs() <= cfg.calib_tol * budget {
            return Ok(sol);
        }
        if g > 0.0 {
            hi = h;
            g_hi = g;
            best_hi = sol;
            if side == 1 {
                g_lo *= 0.5;
            }
            side = 1;
        } else {
            lo = h;
            g_lo = g;
            if side == -1 {
                g_hi *= 0.5;
            }
            side = -1;
        }
    }
    Ok(best_hi)
}

/// Smallest `t` with `K` inside the section `{phi - l_p < t}`, against the bound `c2 a^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InclusionReport {
    pub t: f64,
    pub bound: f64,
    pub within: bool,
}

pub fn coincidence_geometry(k: &CoincidenceSet, phi: &PLConvexFunction, spec: &ObstacleSpec, a: MassScale, c2: f64) -> InclusionReport {
    let ns = phi.nodes();
    let t = k
        .nodes
        .iter()
        .map(|&i| phi.value(i) - spec.plane(ns.point(i)))
        .fold(0.0f64, f64::max);
    let bound = c2 * a.a * a.a;
    InclusionReport { t, bound, within: t <= bound }
}

/// Calibrated obstacle solution for one slope, as cached by [`EnvelopeFamily`].
#[derive(Debug, Clone)]
pub struct EnvelopeMember {
    pub spec: ObstacleSpec,
    pub values: Vec<f64>,
    pub saturated: bool,
}

impl EnvelopeMember {
    pub fn touches(&self, phi: &PLConvexFunction, y: usize, contact_tol: f64) -> bool {
        self.values[y] - self.spec.obstacle(phi.nodes().point(y)) <= contact_tol
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeResult {
    pub value: f64,
    pub spec: ObstacleSpec,
    pub y_in_coincidence: bool,
    /// Spacing of the last refinement stage, in frame coordinates.
    pub resolution: f64,
    pub slopes_evaluated: usize,
}

/// Calibrated obstacle solutions `v_a(., p)` for a fixed background and mass scale,
/// cached by slope so that many query points can share them.
pub struct EnvelopeFamily<'a> {
    phi: &'a PLConvexFunction,
    a: MassScale,
    cfg: ObstacleConfig,
    gradient_image: Vec<Point>,
    frame: [[f64; 2]; 2],
    cache: Mutex<HashMap<(u64, u64), Arc<EnvelopeMember>>>,
    /// Height at the centroid of the gradient image, the starting guess for every other slope.
    reference: OnceLock<Option<f64>>,
}

fn apply(m: &[[f64; 2]; 2], q: Point) -> Point {
    [m[0][0] * q[0] + m[0][1] * q[1], m[1][0] * q[0] + m[1][1] * q[1]]
}

fn inverse(m: &[[f64; 2]; 2]) -> Option<[[f64; 2]; 2]> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    (det != 0.0 && det.is_finite()).then(|| [[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]])
}

/// Lattice cells per coarse step in the local search.
const FINE: f64 = 16.0;

impl<'a> EnvelopeFamily<'a> {
    pub fn new(phi: &'a PLConvexFunction, a: MassScale, cfg: ObstacleConfig) -> Self {
        Self {
            phi,
            a,
            cfg,
            gradient_image: phi.gradient_hull(),
            frame: [[1.0, 0.0], [0.0, 1.0]],
            cache: Mutex::new(HashMap::new()),
            reference: OnceLock::new(),
        }
    }

    /// Slopes are sampled as `F q` with `q` on a grid over the bounding box of `F^-1 G`.
    /// After an affine change of variables `x -> M x + b`, passing `F = M^-T` samples exactly
    /// the transformed slopes of the untransformed run.
    pub fn with_slope_frame(mut self, frame: [[f64; 2]; 2]) -> Result<Self, ObstacleError> {
        inverse(&frame).ok_or_else(|| ObstacleError::InvalidObstacle("singular slope frame".into()))?;
        self.frame = frame;
        Ok(self)
    }

    pub fn gradient_image(&self) -> &[Point] {
        &self.gradient_image
    }

    /// Nearest slope of the gradient image to `p`, measured in frame coordinates.
    pub fn project_slope(&self, p: Point) -> Point {
        let finv = inverse(&self.frame).expect("frame checked on construction");
        let g: Vec<Point> = self.gradient_image.iter().map(|q| apply(&finv, *q)).collect();
        apply(&self.frame, closest_point(&g, apply(&finv, p)))
    }

    pub fn contains_slope(&self, p: Point) -> bool {
        self.gradient_image.len() >= 3 && inner_margin(&self.gradient_image, p) >= -1e-12
    }

    fn calibrate(&self, p: Point, guess: Option<f64>) -> Result<Arc<EnvelopeMember>, ObstacleError> {
        let (sol, saturated) = match calibrate_height_from(self.phi, p, self.a, &self.cfg, guess) {
            Ok(s) => (s, false),
            Err(ObstacleError::BudgetExceedsRange { fallback, .. }) => (*fallback, true),
            Err(e) => return Err(e),
        };
        Ok(Arc::new(EnvelopeMember { spec: sol.spec, values: sol.function.values().to_vec(), saturated }))
    }

    fn reference_height(&self) -> Result<Option<f64>, ObstacleError> {
        if let Some(h) = self.reference.get() {
            return Ok(*h);
        }
        let h = if self.gradient_image.len() >= 3 {
            let m = self.calibrate(centroid(&self.gradient_image), None)?;
            (!m.saturated).then_some(m.spec.h)
        } else {
            None
        };
        Ok(*self.reference.get_or_init(|| h))
    }

    pub fn member(&self, p: Point) -> Result<Arc<EnvelopeMember>, ObstacleError> {
        let key = (p[0].to_bits(), p[1].to_bits());
        if let Some(m) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(m.clone());
        }
        let m = self.calibrate(p, self.reference_height()?)?;
        self.cache.lock().expect("cache lock").insert(key, m.clone());
        Ok(m)
    }

    pub fn cached(&self) -> usize {
        self.cache.lock().expect("cache lock").len()
    }

    /// Maximum of `v_a(y, p)` over a `samples x samples` grid on the gradient image, the
    /// centre of `dphi(y)` and any `extra` slopes, followed by a compass search from the
    /// incumbent on a lattice 16 times finer than the grid.
    pub fn upper_envelope(&self, y: usize, samples: usize, extra: &[Point]) -> Result<EnvelopeResult, ObstacleError> {
        let phi = self.phi;
        if self.a.total_variation <= 0.0 || self.gradient_image.len() < 3 {
            let spec = ObstacleSpec::supporting(phi, phi.gradient_at(phi.nodes().point(y)).unwrap_or([0.0, 0.0]));
            return Ok(EnvelopeResult { value: phi.value(y), spec, y_in_coincidence: false, resolution: 0.0, slopes_evaluated: 0 });
        }
        let g = &self.gradient_image;
        let f = self.frame;
        let finv = inverse(&f).expect("frame checked on construction");
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for q in g.iter().map(|p| apply(&finv, *p)) {
            for k in 0..2 {
                lo[k] = lo[k].min(q[k]);
                hi[k] = hi[k].max(q[k]);
            }
        }
        let k = samples.max(2);
        let step = [(hi[0] - lo[0]) / (k - 1) as f64, (hi[1] - lo[1]) / (k - 1) as f64];
        let mut slopes = Vec::new();
        for i in 0..k {
            for j in 0..k {
                slopes.push(apply(&f, [lo[0] + step[0] * i as f64, lo[1] + step[1] * j as f64]));
            }
        }
        if !slopes.iter().any(|p| self.contains_slope(*p)) {
            slopes.push(centroid(g));
        }
        let own = phi.cell(y).polygon;
        if !own.is_empty() {
            slopes.push(centroid(&own));
        }
        slopes.extend(extra.iter().copied());
        let mut evaluated = 0usize;
        let mut best = self.best_of(y, &slopes, &mut evaluated)?.expect("coarse set meets the gradient image");

        // Lattice point (i, j) is the frame slope lo + (i, j) * step / FINE.
        let fine = [step[0] / FINE, step[1] / FINE];
        let at = |c: [i64; 2]| apply(&f, [lo[0] + fine[0] * c[0] as f64, lo[1] + fine[1] * c[1] as f64]);
        let q = apply(&finv, best.1.spec.p);
        let mut c = [((q[0] - lo[0]) / fine[0]).round() as i64, ((q[1] - lo[1]) / fine[1]).round() as i64];
        let mut fc = match self.best_of(y, &[at(c)], &mut evaluated)? {
            Some(m) => {
                if m.0 > best.0 {
                    best = m.clone();
                }
                m.0
            }
            None => f64::NEG_INFINITY,
        };
        let mut s = (FINE / 2.0) as i64;
        let mut moves = 0;
        while s >= 1 {
            let nbrs = [[c[0] + s, c[1]], [c[0] - s, c[1]], [c[0], c[1] + s], [c[0], c[1] - s]];
            let pts: Vec<Point> = nbrs.iter().map(|n| at(*n)).collect();
            let cand = self.best_of(y, &pts, &mut evaluated)?;
            match cand {
                Some(m) if m.0 > fc && moves < 64 => {
                    let idx = pts.iter().position(|p| *p == m.1.spec.p).expect("candidate slope is one of the neighbours");
                    c = nbrs[idx];
                    fc = m.0;
                    moves += 1;
                    if m.0 > best.0 {
                        best = m;
                    }
                }
                _ => s /= 2,
            }
        }
        let (value, member) = best;
        Ok(EnvelopeResult {
            value,
            spec: member.spec,
            y_in_coincidence: member.touches(phi, y, self.cfg.contact_tol),
            resolution: fine[0].max(fine[1]),
            slopes_evaluated: evaluated,
        })
    }

    /// Largest `v(y)` over the slopes inside the gradient image; ties go to the earliest.
    fn best_of(&self, y: usize, slopes: &[Point], evaluated: &mut usize) -> Result<Option<(f64, Arc<EnvelopeMember>)>, ObstacleError> {
        let inside: Vec<Point> = slopes.iter().copied().filter(|p| self.contains_slope(*p)).collect();
        *evaluated += inside.len();
        let members: Vec<Arc<EnvelopeMember>> = inside.par_iter().map(|p| self.member(*p)).collect::<Result<_, _>>()?;
        let mut best: Option<(f64, Arc<EnvelopeMember>)> = None;
        for m in members {
            let v = m.values[y];
            if best.as_ref().is_none_or(|b| v > b.0) {
                best = Some((v, m));
            }
        }
        Ok(best)
    }
}

/// Sampled `sup_p v_a(y, p)`; see [`EnvelopeFamily::upper_envelope`].
pub fn pointwise_upper_envelope(phi: &PLConvexFunction, y: usize, a: MassScale, slope_samples: usize, cfg: &ObstacleConfig) -> Result<EnvelopeResult, ObstacleError> {
    EnvelopeFamily::new(phi, a, *cfg).upper_envelope(y, slope_samples, &[])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::NodeSet;

    fn quad(lattice: usize) -> PLConvexFunction {
        let ns = Arc::new(NodeSet::disk(lattice, 64, 1.0).unwrap());
        let v = ns.points().iter().map(|p| 0.5 * dot(*p, *p)).collect();
        PLConvexFunction::lower_hull(ns, v).unwrap()
    }

    #[test]
    fn zero_height_returns_background() {
        let phi = quad(15);
        let spec = ObstacleSpec::supporting(&phi, [0.0, 0.0]);
        let sol = solve_obstacle_at_height(&phi, &spec, &ObstacleConfig::default()).unwrap();
        assert_eq!(sol.function.values(), phi.values());
        assert_eq!(sol.coincidence.nodes, vec![spec.x_p]);
        assert_eq!(sol.coincidence.mass, 0.0);
    }

    #[test]
    fn raised_obstacle_is_a_supersolution_above_phi() {
        let phi = quad(15);
        let spec = ObstacleSpec::supporting(&phi, [0.1, 0.0]).with_height(0.05);
        let cfg = ObstacleConfig::default();
        let sol = solve_obstacle_at_height(&phi, &spec, &cfg).unwrap();
        let ns = phi.nodes();
        let bg = phi.interior_ma_weights();
        let w = sol.function.interior_ma_weights();
        assert_eq!(sol.max_raise, 0.0);
        for i in ns.interior_indices() {
            let v = sol.function.value(i);
            assert!(v >= phi.value(i) - 1e-12);
            assert!(v >= spec.obstacle(ns.point(i)) - 1e-12);
            if sol.coincidence.nodes.contains(&i) {
                assert!(w[i] <= bg[i] * (1.0 + 1e-7));
            } else {
                assert!((w[i] - bg[i]).abs() <= 1e-7 * bg[i].max(1e-3));
            }
        }
        assert!((sol.function.value(spec.x_p) - phi.value(spec.x_p) - 0.05).abs() <= cfg.contact_tol);
    }

    #[test]
    fn heights_are_validated() {
        let phi = quad(9);
        let spec = ObstacleSpec::supporting(&phi, [0.0, 0.0]);
        let too_high = spec.with_height(spec.max_height(&phi) + 0.1);
        assert!(matches!(solve_obstacle_at_height(&phi, &too_high, &ObstacleConfig::default()), Err(ObstacleError::InvalidObstacle(_))));
        let bad_plane = ObstacleSpec { offset: spec.offset + 0.1, ..spec };
        assert!(bad_plane.validate(&phi).is_err());
    }

    #[test]
    fn calibration_hits_budget_and_grows_with_a() {
        let phi = quad(15);
        let cfg = ObstacleConfig::default();
        let mut last = 0.0;
        for a in [0.1, 0.2] {
            let m = MassScale::from_a(a, 2).unwrap();
            let sol = calibrate_height(&phi, [0.0, 0.0], m, &cfg).unwrap();
            assert!((sol.discrepancy - m.total_variation).abs() <= 1e-4 * m.total_variation);
            assert!(sol.spec.h > last);
            last = sol.spec.h;
        }
        let zero = calibrate_height(&phi, [0.0, 0.0], MassScale::from_a(0.0, 2).unwrap(), &cfg).unwrap();
        assert_eq!(zero.spec.h, 0.0);
    }

    #[test]
    fn oversized_budget_falls_back_to_max_height() {
        let phi = quad(9);
        let r = calibrate_height(&phi, [0.0, 0.0], MassScale::from_a(2.0, 2).unwrap(), &ObstacleConfig::default());
        match r {
            Err(ObstacleError::BudgetExceedsRange { h_max, fallback }) => assert_eq!(fallback.spec.h, h_max),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn coincidence_set_serializes_three_fields() {
        let k = CoincidenceSet { nodes: vec![1, 4], mass: 0.5, h: 0.25, background_mass: 0.7 };
        assert_eq!(serde_json::to_string(&k).unwrap(), r#"{"nodes":[1,4],"mass":0.5,"h":0.25}"#);
    }

    #[test]
    fn height_ladder_is_monotone_with_nested_contact() {
        let phi = quad(13);
        let cfg = ObstacleConfig::default();
        let base = ObstacleSpec::supporting(&phi, [0.05, -0.1]);
        let hmax = base.max_height(&phi);
        let sols: Vec<ObstacleSolution> = [0.05, 0.1, 0.2, 0.4]
            .iter()
            .map(|f| solve_obstacle_at_height(&phi, &base.with_height(f * hmax), &cfg).unwrap())
            .collect();
        for w in sols.windows(2) {
            let (lo, hi) = (&w[0], &w[1]);
            let dh = hi.spec.h - lo.spec.h;
            for i in 0..phi.nodes().len() {
                let (a, b) = (lo.function.value(i), hi.function.value(i));
                assert!(b >= a - 1e-9 && a >= b - dh - 1e-9, "node {i}");
            }
            assert!(lo.coincidence.nodes.iter().all(|i| hi.coincidence.nodes.contains(i)));
            assert!(hi.discrepancy >= lo.discrepancy);
        }
    }

    #[test]
    fn contact_section_is_quadratic_in_a() {
        let phi = quad(15);
        let cfg = ObstacleConfig::default();
        let a = MassScale::from_a(0.3, 2).unwrap();
        let sol = calibrate_height(&phi, [0.0, 0.0], a, &cfg).unwrap();
        let rep = coincidence_geometry(&sol.coincidence, &phi, &sol.spec, a, 1.0);
        assert!(rep.t > 0.2 * 0.09 && rep.t < 0.09, "t = {}", rep.t);
        assert!(rep.within);
        let zero = solve_obstacle_at_height(&phi, &ObstacleSpec::supporting(&phi, [0.0, 0.0]), &cfg).unwrap();
        assert_eq!(coincidence_geometry(&zero.coincidence, &phi, &zero.spec, a, 1.0).t, 0.0);
    }

    #[test]
    fn envelope_with_zero_mass_is_background() {
        let phi = quad(9);
        let y = phi.nodes().interior_indices()[3];
        let r = pointwise_upper_envelope(&phi, y, MassScale::from_a(0.0, 2).unwrap(), 5, &ObstacleConfig::default()).unwrap();
        assert_eq!(r.value, phi.value(y));
    }

    #[test]
    fn envelope_at_centre_uses_central_slope() {
        let phi = quad(11);
        let a = MassScale::from_a(0.2, 2).unwrap();
        let cfg = ObstacleConfig::default();
        let y = phi.nodes().nearest([0.0, 0.0]);
        let fam = EnvelopeFamily::new(&phi, a, cfg);
        let r = fam.upper_envelope(y, 3, &[]).unwrap();
        let h0 = calibrate_height(&phi, [0.0, 0.0], a, &cfg).unwrap().spec.h;
        assert!(r.y_in_coincidence);
        assert!(r.value >= phi.value(y) + h0 - 1e-12);
        assert!(r.value <= phi.value(y) + 1.1 * h0, "{} vs {}", r.value, h0);
        assert!(r.spec.p[0].abs() <= r.resolution * 4.0 && r.spec.p[1].abs() <= r.resolution * 4.0);
    }
}
