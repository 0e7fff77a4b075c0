//! Single-node relaxation: lower one node at a time until its cell carries its target mass.
//! Slow but simple; used to cross-check the Newton solver on small problems.

use crate::geometry::polygon::area;
use crate::geometry::{halfplane_cell, NodeSet, PLConvexFunction};

use super::engine::{self, EngineInput};
use super::{DirichletProblem, SolveOutcome, SolverConfig, SolverError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateOrder {
    /// Always relax the node with the largest relative mass deficit.
    LargestDeficit,
    /// Sweep the unknown nodes in index order.
    Cyclic,
}

fn cell_area(nodes: &NodeSet, values: &[f64], include: &[bool], i: usize, ui: f64) -> f64 {
    let mut v = values.to_vec();
    v[i] = ui;
    let idx: Vec<usize> = (0..nodes.len()).filter(|&j| include[j]).collect();
    let pts: Vec<[f64; 2]> = idx.iter().map(|&j| nodes.point(j)).collect();
    let vals: Vec<f64> = idx.iter().map(|&j| v[j]).collect();
    let bflags: Vec<bool> = idx.iter().map(|&j| nodes.is_boundary(j)).collect();
    let local = idx.iter().position(|&j| j == i).expect("node is included");
    let (lo, hi) = vals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let dmin = nodes.border_distance(i).max(f64::MIN_POSITIVE);
    let bound = 2.0 * (hi - lo) / dmin + 1.0;
    let sub = NodeSet::new(pts, bflags, nodes.domain().to_vec()).expect("subset of a valid node set");
    area(&halfplane_cell(&sub, &vals, local, bound))
}

/// Lowers `u_i` so that the cell of `i` has area `t`, by bracketing and bisection.
fn relax(nodes: &NodeSet, values: &[f64], include: &[bool], i: usize, t: f64) -> f64 {
    let u0 = values[i];
    if cell_area(nodes, values, include, i, u0) >= t {
        return u0;
    }
    let mut lo = 0.0;
    let mut hi = t.sqrt().max(1e-12);
    while cell_area(nodes, values, include, i, u0 - hi) < t {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if cell_area(nodes, values, include, i, u0 - mid) < t {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    u0 - lo
}

pub fn solve_dirichlet_reference(problem: &DirichletProblem, cfg: &SolverConfig, order: UpdateOrder) -> Result<SolveOutcome, SolverError> {
    cfg.validate()?;
    let target = problem.validate()?;
    let nodes = &problem.nodes;
    let include = engine::include_mask(nodes, &target);
    let input = EngineInput { nodes, target: &target, obstacle: None };
    let mut boundary = problem.boundary_values.clone();
    for i in nodes.interior_indices() {
        boundary[i] = 0.0;
    }
    let mut u = engine::initial_guess(&input, &boundary, &include, cfg)?;
    let unknown: Vec<usize> = (0..nodes.len()).filter(|&i| !nodes.is_boundary(i) && include[i]).collect();
    let total: f64 = unknown.iter().map(|&i| target[i]).sum();
    let mean = total / unknown.len().max(1) as f64;
    let scale = |i: usize| target[i].max(mean);
    let budget = cfg.max_iters.max(1) * 1000 * unknown.len().max(1);
    let mut updates = 0usize;
    let mut cursor = 0usize;
    let mut max_raise = 0.0f64;
    loop {
        let f = PLConvexFunction::build(nodes.clone(), u.clone(), &include)?;
        let w = f.interior_ma_weights();
        let resid: f64 = unknown.iter().map(|&i| (w[i] - target[i]).abs()).sum();
        let worst = unknown
            .iter()
            .map(|&i| ((target[i] - w[i]) / scale(i), i))
            .fold((f64::NEG_INFINITY, usize::MAX), |a, b| if b.0 > a.0 { b } else { a });
        if worst.0.abs() <= cfg.mass_tol && resid <= cfg.mass_tol * total {
            let mut vals = f.values().to_vec();
            for i in 0..nodes.len() {
                if include[i] {
                    vals[i] = u[i];
                }
            }
            let function = PLConvexFunction::lower_hull(nodes.clone(), vals)?;
            return Ok(SolveOutcome { function, iters: updates, residual: resid, max_raise, warm_start_used: false });
        }
        if updates >= budget {
            let profile = (0..nodes.len()).map(|i| if include[i] && !nodes.is_boundary(i) { w[i] - target[i] } else { 0.0 }).collect();
            return Err(SolverError::MaxItersExceeded { iters: updates, residual: resid, profile });
        }
        let i = match order {
            UpdateOrder::LargestDeficit => worst.1,
            UpdateOrder::Cyclic => {
                let i = unknown[cursor % unknown.len()];
                cursor += 1;
                i
            }
        };
        let new = relax(nodes, &u, &include, i, target[i]);
        max_raise = max_raise.max(new - u[i]);
        u[i] = new;
        updates += 1;
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::measures::SignedDiscreteMeasure;
    use crate::solver::{background_measure, solve_dirichlet};

    #[test]
    fn reference_agrees_with_newton_in_both_orders() {
        let ns = Arc::new(NodeSet::square_grid(6, -1.0, 1.0).unwrap());
        let phi_vals: Vec<f64> = ns.points().iter().map(|p| 0.5 * (p[0] * p[0] + p[1] * p[1]) + 0.1 * p[0].powi(4)).collect();
        let phi = PLConvexFunction::lower_hull(ns.clone(), phi_vals).unwrap();
        let y = ns.nearest([0.2, -0.2]);
        let target = background_measure(&phi).add(&SignedDiscreteMeasure::dirac(y, 0.3));
        let problem = DirichletProblem { nodes: ns.clone(), boundary_values: phi.values().to_vec(), target };
        let cfg = SolverConfig { mass_tol: 1e-10, ..Default::default() };
        let newton = solve_dirichlet(&problem, &cfg).unwrap();
        for order in [UpdateOrder::LargestDeficit, UpdateOrder::Cyclic] {
            let r = solve_dirichlet_reference(&problem, &cfg, order).unwrap();
            assert_eq!(r.max_raise, 0.0);
            for i in 0..ns.len() {
                assert!((r.function.value(i) - newton.function.value(i)).abs() < 1e-7, "{order:?} node {i}");
            }
        }
    }
}
