//! Monotone damped Newton iteration for discrete Monge-Ampere problems.
//!
//! Iterates only ever decrease. Every iterate keeps `F_i <= T_i` (up to tolerance) on the
//! unknown nodes, so the scheme approaches the solution from above and an optional lower
//! obstacle can be enforced by clipping: a clipped node stays on the obstacle.

use std::sync::Arc;

use crate::geometry::{NodeSet, PLConvexFunction};

use super::sparse::{pcg, Csr};
use super::{SolverConfig, SolverError};

/// Targets at or below this are treated as zero-mass nodes and left out of the hull.
pub(crate) const PASSIVE: f64 = 1e-14;

pub(crate) struct EngineInput<'a> {
    pub nodes: &'a Arc<NodeSet>,
    pub target: &'a [f64],
    pub obstacle: Option<&'a [f64]>,
}

#[derive(Debug, Clone)]
pub(crate) struct EngineOutput {
    pub function: PLConvexFunction,
    pub iters: usize,
    pub residual: f64,
    pub max_raise: f64,
    pub weights: Vec<f64>,
}

struct State {
    values: Vec<f64>,
    weights: Vec<f64>,
    func: PLConvexFunction,
}

fn evaluate(nodes: &Arc<NodeSet>, values: &[f64], include: &[bool]) -> Result<State, SolverError> {
    let func = PLConvexFunction::build(nodes.clone(), values.to_vec(), include)?;
    let weights = func.interior_ma_weights();
    Ok(State { values: values.to_vec(), weights, func })
}

pub(crate) fn include_mask(nodes: &NodeSet, target: &[f64]) -> Vec<bool> {
    (0..nodes.len()).map(|i| nodes.is_boundary(i) || target[i] > PASSIVE).collect()
}

struct Tolerances {
    per_node: Vec<f64>,
    global: f64,
}

fn tolerances(nodes: &NodeSet, target: &[f64], include: &[bool], mass_tol: f64) -> Tolerances {
    let active: Vec<usize> = (0..nodes.len()).filter(|&i| !nodes.is_boundary(i) && include[i]).collect();
    let total: f64 = active.iter().map(|&i| target[i]).sum();
    let mean = if active.is_empty() { 0.0 } else { total / active.len() as f64 };
    let per_node = (0..nodes.len()).map(|i| mass_tol * target[i].max(mean)).collect();
    Tolerances { per_node, global: mass_tol * total }
}

/// Envelope of the boundary data evaluated at every node, plus a strictly convex bowl that
/// vanishes on the boundary nodes.
pub(crate) fn envelope_and_bowl(nodes: &Arc<NodeSet>, boundary: &[f64]) -> Result<(Vec<f64>, Vec<f64>), SolverError> {
    let bmask: Vec<bool> = (0..nodes.len()).map(|i| nodes.is_boundary(i)).collect();
    let mut data = boundary.to_vec();
    for i in 0..nodes.len() {
        if !bmask[i] {
            data[i] = 0.0;
        }
    }
    let env = PLConvexFunction::build(nodes.clone(), data, &bmask)?;
    for i in nodes.boundary_indices() {
        if env.status(i) == crate::geometry::NodeStatus::Above {
            return Err(SolverError::NotSolvable(format!("boundary data at node {i} lies above its convex envelope")));
        }
    }
    let sq: Vec<f64> = nodes.points().iter().map(|p| -(p[0] * p[0] + p[1] * p[1])).collect();
    let cap = PLConvexFunction::build(nodes.clone(), sq.clone(), &bmask)?;
    // |x|^2 minus its concave envelope over the boundary: convex, <= 0, zero on the boundary.
    let bowl: Vec<f64> = (0..nodes.len()).map(|i| if bmask[i] { 0.0 } else { (cap.value(i) - sq[i]).min(0.0) }).collect();
    Ok((env.values().to_vec(), bowl))
}

/// Largest `t = 2^-k` such that `E + t q` (clipped to the obstacle) has `F <= T`.
pub(crate) fn initial_guess(input: &EngineInput, boundary: &[f64], include: &[bool], cfg: &SolverConfig) -> Result<Vec<f64>, SolverError> {
    let nodes = input.nodes;
    let (env, bowl) = envelope_and_bowl(nodes, boundary)?;
    let tol = tolerances(nodes, input.target, include, cfg.mass_tol);
    let scale = {
        let lo = bowl.iter().copied().fold(0.0f64, f64::min);
        let spread = env.iter().copied().fold(f64::NEG_INFINITY, f64::max) - env.iter().copied().fold(f64::INFINITY, f64::min);
        if lo < 0.0 { (spread.max(1.0)) / (-lo) } else { 1.0 }
    };
    let mut t = scale;
    for _ in 0..200 {
        let mut u: Vec<f64> = (0..nodes.len())
            .map(|i| if nodes.is_boundary(i) { boundary[i] } else { env[i] + t * bowl[i] })
            .collect();
        if let Some(ob) = input.obstacle {
            for i in 0..u.len() {
                if !nodes.is_boundary(i) && u[i] < ob[i] {
                    u[i] = ob[i];
                }
            }
        }
        let st = evaluate(nodes, &u, include)?;
        let ok = (0..nodes.len())
            .filter(|&i| !nodes.is_boundary(i) && include[i])
            .all(|i| st.weights[i] <= input.target[i] + tol.per_node[i]);
        if ok {
            return Ok(u);
        }
        t *= 0.5;
    }
    Err(SolverError::NotSolvable("no admissible starting point found".into()))
}

/// Checks that `values` can seed the iteration: matching boundary, above the obstacle, `F <= T`.
pub(crate) fn admissible_start(input: &EngineInput, boundary: &[f64], include: &[bool], values: &[f64], cfg: &SolverConfig) -> Result<bool, SolverError> {
    let nodes = input.nodes;
    if values.len() != nodes.len() {
        return Ok(false);
    }
    for i in nodes.boundary_indices() {
        if (values[i] - boundary[i]).abs() > 1e-14 * (1.0 + boundary[i].abs()) {
            return Ok(false);
        }
    }
    if let Some(ob) = input.obstacle {
        if (0..nodes.len()).any(|i| !nodes.is_boundary(i) && values[i] < ob[i]) {
            return Ok(false);
        }
    }
    let tol = tolerances(nodes, input.target, include, cfg.mass_tol);
    let st = evaluate(nodes, values, include)?;
    Ok((0..nodes.len())
        .filter(|&i| !nodes.is_boundary(i) && include[i])
        .all(|i| st.weights[i] <= input.target[i] + tol.per_node[i]))
}

pub(crate) fn run(input: &EngineInput, cfg: &SolverConfig, start: Vec<f64>, include: &[bool]) -> Result<EngineOutput, SolverError> {
    let nodes = input.nodes;
    let n = nodes.len();
    let target = input.target;
    let tol = tolerances(nodes, target, include, cfg.mass_tol);
    let mut clipped: Vec<bool> = match input.obstacle {
        Some(ob) => (0..n).map(|i| !nodes.is_boundary(i) && include[i] && start[i] <= ob[i]).collect(),
        None => vec![false; n],
    };
    let unknown: Vec<usize> = (0..n).filter(|&i| !nodes.is_boundary(i) && include[i]).collect();
    let mut state = evaluate(nodes, &start, include)?;
    let mut max_raise = 0.0f64;
    let mut iters = 0usize;
    let mut free: Vec<usize>;
    let mut row = vec![usize::MAX; n];
    // The line search resumes from twice the last accepted step.
    let mut step = cfg.damping;
    loop {
        free = unknown.iter().copied().filter(|&i| !clipped[i]).collect();
        let resid: f64 = free.iter().map(|&i| (state.weights[i] - target[i]).abs()).sum();
        let pointwise = free.iter().all(|&i| (state.weights[i] - target[i]).abs() <= tol.per_node[i]);
        if pointwise && resid <= tol.global {
            break;
        }
        if iters >= cfg.max_iters {
            return Err(SolverError::MaxItersExceeded { iters, residual: resid, profile: profile(&state.weights, target, nodes, include) });
        }
        iters += 1;

        for r in row.iter_mut() {
            *r = usize::MAX;
        }
        for (k, &i) in free.iter().enumerate() {
            row[i] = k;
        }
        let m = free.len();
        let tiny = 1e-14 * tol.global.max(f64::MIN_POSITIVE) / cfg.mass_tol.max(f64::MIN_POSITIVE);
        // Nodes with (almost) no mass have a singular linearization. They take the step of an
        // isolated cone instead, `F ~ 2 (d / r)^2`, and enter the solve as fixed values.
        let mut fixed: Vec<Option<f64>> = vec![None; m];
        for (k, &i) in free.iter().enumerate() {
            if state.weights[i] <= tiny {
                let r = state
                    .func
                    .vertex_neighbors(i)
                    .into_iter()
                    .map(|j| crate::geometry::polygon::dist(nodes.point(i), nodes.point(j)))
                    .fold(f64::INFINITY, f64::min);
                let r = if r.is_finite() { r } else { nodes.border_distance(i) };
                fixed[k] = Some(r * (0.5 * target[i]).sqrt());
            }
        }
        let mut diag = vec![0.0; m];
        let mut b = vec![0.0; m];
        let mut trip = Vec::with_capacity(8 * m);
        for (k, &i) in free.iter().enumerate() {
            let (f, t) = (state.weights[i], target[i]);
            b[k] = match fixed[k] {
                Some(dk) => dk,
                None => 2.0 * f.sqrt() * (t.sqrt() - f.sqrt()),
            };
        }
        for (i, j, w) in state.func.edge_weights() {
            let (ri, rj) = (row[i], row[j]);
            if ri != usize::MAX {
                diag[ri] += w;
            }
            if rj != usize::MAX {
                diag[rj] += w;
            }
            if ri != usize::MAX && rj != usize::MAX {
                match (fixed[ri], fixed[rj]) {
                    (None, None) => {
                        trip.push((ri, rj, -w));
                        trip.push((rj, ri, -w));
                    }
                    (None, Some(dj)) => b[ri] += w * dj,
                    (Some(di), None) => b[rj] += w * di,
                    (Some(_), Some(_)) => {}
                }
            }
        }
        for k in 0..m {
            let dk = if fixed[k].is_some() { 1.0 } else { diag[k] + 1e-12 * diag[k].max(f64::MIN_POSITIVE) };
            trip.push((k, k, dk));
        }
        let a = Csr::from_triplets(m, trip);
        let mut d = vec![0.0; m];
        pcg(&a, &b, &mut d, 1e-12, 4 * m + 200);

        // Nodes lifted off the hull first drop back onto it.
        for (k, &i) in free.iter().enumerate() {
            let gap = state.values[i] - state.func.value(i);
            if gap > 0.0 {
                d[k] = d[k].max(0.0) + gap;
            }
        }
        let mut s = step;
        let accepted = loop {
            let mut trial = state.values.clone();
            let mut newly = Vec::new();
            for (k, &i) in free.iter().enumerate() {
                trial[i] = state.values[i] - s * d[k].max(0.0);
                if let Some(ob) = input.obstacle {
                    if trial[i] <= ob[i] {
                        trial[i] = ob[i];
                        newly.push(i);
                    }
                }
            }
            let st = evaluate(nodes, &trial, include)?;
            if unknown.iter().all(|&i| st.weights[i] <= target[i] + tol.per_node[i]) {
                step = (2.0 * s).min(cfg.damping);
                break Some((st, newly));
            }
            s *= 0.5;
            if s < 1e-12 {
                break None;
            }
        };
        let Some((st, newly)) = accepted else {
            return Err(SolverError::Stagnated { iters, residual: resid });
        };
        for i in 0..n {
            max_raise = max_raise.max(st.values[i] - state.values[i]);
        }
        for i in newly {
            clipped[i] = true;
        }
        state = st;
    }

    let resid: f64 = free.iter().map(|&i| (state.weights[i] - target[i]).abs()).sum();
    let mut values = state.func.values().to_vec();
    for i in 0..n {
        if include[i] {
            values[i] = state.values[i];
        }
    }
    let function = PLConvexFunction::lower_hull(nodes.clone(), values)?;
    let weights = function.interior_ma_weights();
    Ok(EngineOutput { function, iters, residual: resid, max_raise, weights })
}

fn profile(weights: &[f64], target: &[f64], nodes: &NodeSet, include: &[bool]) -> Vec<f64> {
    (0..nodes.len())
        .map(|i| if nodes.is_boundary(i) || !include[i] { 0.0 } else { weights[i] - target[i] })
        .collect()
}
