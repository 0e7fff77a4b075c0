//! Signed discrete measures supported on nodes, mass scales and background assembly.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::geometry::polygon::{self, clip_halfplane, dot, sub};
use crate::geometry::{GeometryError, NodeSet, PLConvexFunction, Point};

/// Atoms with magnitude below this are dropped.
pub const PRUNE: f64 = 1e-14;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("density is negative or not finite at node {index}")]
    InvalidDensity { index: usize },
    #[error("density has no positive mass on the domain")]
    NonPositiveDensity,
    #[error("dimension must be at least 1, got {0}")]
    BadDimension(usize),
    #[error("mass scale must be nonnegative and finite, got {0}")]
    BadScale(f64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Finite signed combination of node Diracs; at most one atom per node.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "MeasureDoc", into = "MeasureDoc")]
pub struct SignedDiscreteMeasure {
    atoms: BTreeMap<usize, f64>,
}

#[derive(Serialize, Deserialize)]
struct MeasureDoc {
    atoms: Vec<(usize, f64)>,
}

impl From<MeasureDoc> for SignedDiscreteMeasure {
    fn from(d: MeasureDoc) -> Self {
        Self::from_atoms(d.atoms)
    }
}

impl From<SignedDiscreteMeasure> for MeasureDoc {
    fn from(m: SignedDiscreteMeasure) -> Self {
        MeasureDoc { atoms: m.atoms.into_iter().collect() }
    }
}

impl SignedDiscreteMeasure {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn dirac(node: usize, weight: f64) -> Self {
        Self::from_atoms([(node, weight)])
    }

    /// Sums repeated nodes and prunes negligible atoms.
    pub fn from_atoms<I: IntoIterator<Item = (usize, f64)>>(atoms: I) -> Self {
        let mut map = BTreeMap::new();
        for (i, w) in atoms {
            *map.entry(i).or_insert(0.0) += w;
        }
        map.retain(|_, w: &mut f64| w.abs() >= PRUNE);
        Self { atoms: map }
    }

    pub fn from_dense(weights: &[f64]) -> Self {
        Self::from_atoms(weights.iter().copied().enumerate())
    }

    pub fn to_dense(&self, n: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        for (&i, &w) in &self.atoms {
            if i < n {
                v[i] = w;
            }
        }
        v
    }

    pub fn weight(&self, node: usize) -> f64 {
        self.atoms.get(&node).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.atoms.iter().map(|(&i, &w)| (i, w))
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.atoms.values().sum()
    }

    pub fn total_variation(&self) -> f64 {
        self.atoms.values().map(|w| w.abs()).sum()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.atoms.values().all(|&w| w >= 0.0)
    }

    pub fn max_node(&self) -> Option<usize> {
        self.atoms.keys().next_back().copied()
    }

    /// Jordan decomposition `(mu+, mu-)` with `mu = mu+ - mu-`.
    pub fn jordan(&self) -> (Self, Self) {
        let pos = self.iter().filter(|&(_, w)| w > 0.0);
        let neg = self.iter().filter(|&(_, w)| w < 0.0).map(|(i, w)| (i, -w));
        (Self::from_atoms(pos), Self::from_atoms(neg))
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::from_atoms(self.iter().chain(other.iter()))
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self::from_atoms(self.iter().chain(other.iter().map(|(i, w)| (i, -w))))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::from_atoms(self.iter().map(|(i, w)| (i, s * w)))
    }

    pub fn restrict<F: Fn(usize) -> bool>(&self, keep: F) -> Self {
        Self { atoms: self.atoms.iter().filter(|(&i, _)| keep(i)).map(|(&i, &w)| (i, w)).collect() }
    }
}

/// Volume of the unit ball in `R^n`.
pub fn omega(n: usize) -> f64 {
    use std::f64::consts::PI;
    match n {
        1 => 2.0,
        2 => PI,
        3 => 4.0 * PI / 3.0,
        _ => PI.powf(n as f64 / 2.0) / gamma(n as f64 / 2.0 + 1.0),
    }
}

/// Perturbation size `a`, defined by `|mu|(Omega) = omega_n a^n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassScale {
    pub a: f64,
    pub n: usize,
    pub total_variation: f64,
}

impl MassScale {
    pub fn from_a(a: f64, n: usize) -> Result<Self, MeasureError> {
        if n == 0 {
            return Err(MeasureError::BadDimension(n));
        }
        if !(a >= 0.0 && a.is_finite()) {
            return Err(MeasureError::BadScale(a));
        }
        Ok(Self { a, n, total_variation: omega(n) * a.powi(n as i32) })
    }

    pub fn from_total_variation(tv: f64, n: usize) -> Result<Self, MeasureError> {
        if n == 0 {
            return Err(MeasureError::BadDimension(n));
        }
        if !(tv >= 0.0 && tv.is_finite()) {
            return Err(MeasureError::BadScale(tv));
        }
        Ok(Self { a: (tv / omega(n)).powf(1.0 / n as f64), n, total_variation: tv })
    }
}

pub fn mass_scale(mu: &SignedDiscreteMeasure, n: usize) -> Result<MassScale, MeasureError> {
    MassScale::from_total_variation(mu.total_variation(), n)
}

/// Voronoi cells of the nodes clipped to the domain.
pub fn voronoi_cells(nodes: &Arc<NodeSet>) -> Result<Vec<Vec<Point>>, MeasureError> {
    let lift: Vec<f64> = nodes.points().iter().map(|p| dot(*p, *p)).collect();
    let del = PLConvexFunction::lower_hull(nodes.clone(), lift)?;
    let mut cells = Vec::with_capacity(nodes.len());
    for i in 0..nodes.len() {
        let xi = nodes.point(i);
        let mut poly = nodes.domain().to_vec();
        for j in del.vertex_neighbors(i) {
            let d = sub(nodes.point(j), xi);
            let mid = [0.5 * (xi[0] + nodes.point(j)[0]), 0.5 * (xi[1] + nodes.point(j)[1])];
            poly = clip_halfplane(&poly, d, dot(d, mid));
        }
        cells.push(poly);
    }
    Ok(cells)
}

/// Lumps a nonnegative density onto the nodes by centroid quadrature on Voronoi cells.
pub fn assemble_background<F: Fn(Point) -> f64>(
    density: F,
    nodes: &Arc<NodeSet>,
) -> Result<SignedDiscreteMeasure, MeasureError> {
    let cells = voronoi_cells(nodes)?;
    let mut w = vec![0.0; nodes.len()];
    for (i, cell) in cells.iter().enumerate() {
        let rho = density(polygon::centroid(cell));
        if !(rho >= 0.0 && rho.is_finite()) {
            return Err(MeasureError::InvalidDensity { index: i });
        }
        w[i] = rho * polygon::area(cell);
    }
    if !(w.iter().sum::<f64>() > 0.0) {
        return Err(MeasureError::NonPositiveDensity);
    }
    Ok(SignedDiscreteMeasure::from_dense(&w))
}
