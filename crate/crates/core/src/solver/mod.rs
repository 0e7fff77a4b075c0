//! Dirichlet problems for the discrete Monge-Ampere operator.

pub(crate) mod engine;
mod reference;
mod sparse;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::geometry::{GeometryError, NodeSet, PLConvexFunction, PLFunctionDoc};
use crate::measures::{MassScale, SignedDiscreteMeasure};

pub use reference::{solve_dirichlet_reference, UpdateOrder};

use engine::{EngineInput, PASSIVE};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("problem is not solvable: {0}")]
    NotSolvable(String),
    #[error("no convergence after {iters} iterations (residual {residual:e})")]
    MaxItersExceeded { iters: usize, residual: f64, profile: Vec<f64> },
    #[error("line search stalled after {iters} iterations (residual {residual:e})")]
    Stagnated { iters: usize, residual: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Relative mass tolerance, per node and in total variation.
    pub mass_tol: f64,
    pub max_iters: usize,
    /// Initial step length of the line search, in `(0, 1]`.
    pub damping: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { mass_tol: 1e-8, max_iters: 200, damping: 1.0 }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<(), SolverError> {
        if !(self.mass_tol > 0.0 && self.mass_tol < 1.0) {
            return Err(SolverError::InvalidConfig(format!("mass_tol {}", self.mass_tol)));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(SolverError::InvalidConfig(format!("damping {}", self.damping)));
        }
        Ok(())
    }
}

/// Find convex `u` with `u = g` on boundary nodes and `M u = target` at interior nodes.
#[derive(Debug, Clone)]
pub struct DirichletProblem {
    pub nodes: Arc<NodeSet>,
    /// Indexed by node; only boundary entries are read.
    pub boundary_values: Vec<f64>,
    pub target: SignedDiscreteMeasure,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub function: PLConvexFunction,
    pub iters: usize,
    /// Total variation of `M u - target` over the unknown nodes.
    pub residual: f64,
    /// Largest increase of any node value between iterates; zero for a monotone run.
    pub max_raise: f64,
    pub warm_start_used: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveDoc {
    #[serde(flatten)]
    pub function: PLFunctionDoc,
    pub residual: f64,
    pub iters: usize,
}

impl SolveOutcome {
    pub fn to_doc(&self) -> SolveDoc {
        SolveDoc { function: self.function.to_doc(), residual: self.residual, iters: self.iters }
    }
}

impl DirichletProblem {
    pub(crate) fn validate(&self) -> Result<Vec<f64>, SolverError> {
        let n = self.nodes.len();
        if self.boundary_values.len() != n {
            return Err(SolverError::Geometry(GeometryError::LengthMismatch { expected: n, got: self.boundary_values.len() }));
        }
        if let Some(i) = self.nodes.boundary_indices().into_iter().find(|&i| !self.boundary_values[i].is_finite()) {
            return Err(SolverError::Geometry(GeometryError::NonFinite { index: i }));
        }
        if self.target.max_node().is_some_and(|m| m >= n) {
            return Err(SolverError::NotSolvable("target references a node outside the set".into()));
        }
        let mut dense = vec![0.0; n];
        for (i, w) in self.target.iter() {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(SolverError::NotSolvable(format!("target weight {w} at node {i} is not a nonnegative number")));
            }
            if self.nodes.is_boundary(i) && w > PASSIVE {
                return Err(SolverError::NotSolvable(format!("target places mass on boundary node {i}")));
            }
            if !self.nodes.is_boundary(i) {
                dense[i] = w;
            }
        }
        Ok(dense)
    }
}

pub fn solve_dirichlet(problem: &DirichletProblem, cfg: &SolverConfig) -> Result<SolveOutcome, SolverError> {
    solve_inner(problem, cfg, None)
}

/// Like [`solve_dirichlet`], seeded by `warm` when it is an admissible starting point
/// (boundary values match and no interior node carries more mass than its target).
pub fn solve_dirichlet_warm(problem: &DirichletProblem, cfg: &SolverConfig, warm: &[f64]) -> Result<SolveOutcome, SolverError> {
    solve_inner(problem, cfg, Some(warm))
}

fn solve_inner(problem: &DirichletProblem, cfg: &SolverConfig, warm: Option<&[f64]>) -> Result<SolveOutcome, SolverError> {
    cfg.validate()?;
    let target = problem.validate()?;
    let nodes = &problem.nodes;
    let include = engine::include_mask(nodes, &target);
    let input = EngineInput { nodes, target: &target, obstacle: None };
    let mut boundary = problem.boundary_values.clone();
    for i in nodes.interior_indices() {
        boundary[i] = 0.0;
    }
    engine::envelope_and_bowl(nodes, &boundary)?;
    let (start, used) = match warm {
        Some(w) if engine::admissible_start(&input, &boundary, &include, w, cfg)? => (w.to_vec(), true),
        _ => (engine::initial_guess(&input, &boundary, &include, cfg)?, false),
    };
    let out = engine::run(&input, cfg, start, &include)?;
    Ok(SolveOutcome { function: out.function, iters: out.iters, residual: out.residual, max_raise: out.max_raise, warm_start_used: used })
}

/// Zero boundary data with a unit atom at node `y`.
pub fn cone_function(nodes: Arc<NodeSet>, y: usize, cfg: &SolverConfig) -> Result<PLConvexFunction, SolverError> {
    if y >= nodes.len() || nodes.is_boundary(y) {
        return Err(SolverError::NotSolvable(format!("cone vertex {y} must be an interior node")));
    }
    let problem = DirichletProblem {
        boundary_values: vec![0.0; nodes.len()],
        target: SignedDiscreteMeasure::dirac(y, 1.0),
        nodes,
    };
    Ok(solve_dirichlet(&problem, cfg)?.function)
}

/// Interior Monge-Ampere measure of `phi` as a target.
pub fn background_measure(phi: &PLConvexFunction) -> SignedDiscreteMeasure {
    SignedDiscreteMeasure::from_dense(&phi.interior_ma_weights())
}

/// Solves `M u = M phi + mu` with `u = phi` on the boundary. Requires the sum to be nonnegative.
pub fn solve_perturbed(phi: &PLConvexFunction, mu: &SignedDiscreteMeasure, cfg: &SolverConfig) -> Result<SolveOutcome, SolverError> {
    let target = background_measure(phi).add(mu);
    let problem = DirichletProblem { nodes: phi.nodes().clone(), boundary_values: phi.values().to_vec(), target };
    if mu.is_nonnegative() {
        solve_dirichlet_warm(&problem, cfg, phi.values())
    } else {
        solve_dirichlet(&problem, cfg)
    }
}

/// Extremal solution for a point mass `omega_n a^n` at node `y`.
pub fn isolated_singularity(phi: &PLConvexFunction, y: usize, a: MassScale, cfg: &SolverConfig) -> Result<SolveOutcome, SolverError> {
    if y >= phi.nodes().len() || phi.nodes().is_boundary(y) {
        return Err(SolverError::NotSolvable(format!("singularity {y} must be an interior node")));
    }
    solve_perturbed(phi, &SignedDiscreteMeasure::dirac(y, a.total_variation), cfg)
}
