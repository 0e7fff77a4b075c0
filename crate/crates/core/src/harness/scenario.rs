use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::estimates::EstimateConfig;
use crate::geometry::polygon::{dot, inradius, is_convex_ccw, regular_polygon};
use crate::geometry::{NodeSet, PLConvexFunction, Point};
use crate::measures::assemble_background;
use crate::obstacle::ObstacleConfig;
use crate::solver::{solve_dirichlet, DirichletProblem, SolverConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Background {
    /// `|x|^2 / 2`.
    Quadratic,
    /// `(l0 x^2 + l1 y^2) / 2`.
    AnisotropicQuadratic { eigenvalues: [f64; 2] },
    /// Solution of `M phi = f dx` with `phi = |x|^2 / 2` on the boundary, where
    /// `f = c0 + c1 x + c2 y + c3 x^2 + c4 x y + c5 y^2` must stay positive.
    CustomDensity { coefficients: [f64; 6] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Domain {
    /// Disk centred at the origin, approximated by an inscribed regular polygon.
    Ball { radius: f64 },
    /// Convex polygon, counter-clockwise.
    Polygon { vertices: Vec<Point> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Perturbation {
    /// Point mass `omega_n a^n` at the scenario centre.
    Singularity,
    /// Calibrated obstacle at the slope of the background at the centre.
    Obstacle,
    /// Random one-signed bumps of total variation `omega_n a^n`, one instance per seed.
    RandomAdmissible,
    /// Point masses with the given shares of `omega_n a^n`.
    MultiDirac { points: Vec<Point>, fractions: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Grid in the plane, radial quadrature otherwise.
    #[default]
    Auto,
    Grid,
    Radial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Lattice points across the domain.
    pub lattice: usize,
    pub boundary_nodes: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { lattice: 65, boundary_nodes: 256 }
    }
}

fn default_queries() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub n: usize,
    pub background: Background,
    pub domain: Domain,
    pub perturbation: Perturbation,
    pub a_ladder: Vec<f64>,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub method: Method,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub center: Point,
    /// Query nodes per random instance.
    #[serde(default = "default_queries")]
    pub queries: usize,
    #[serde(default)]
    pub estimates: EstimateConfig,
}

/// Concrete node set and background of a planar scenario.
#[derive(Debug, Clone)]
pub struct Instance {
    pub phi: PLConvexFunction,
    /// Node nearest to the scenario centre.
    pub center: usize,
}

impl Scenario {
    /// Minimal scenario with default grid and estimate settings.
    pub fn new(name: &str, n: usize, background: Background, domain: Domain, perturbation: Perturbation, a_ladder: Vec<f64>) -> Self {
        Self {
            name: name.to_string(),
            n,
            background,
            domain,
            perturbation,
            a_ladder,
            seeds: vec![0],
            method: Method::Auto,
            grid: GridSpec::default(),
            center: [0.0, 0.0],
            queries: default_queries(),
            estimates: EstimateConfig::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| HarnessError::InvalidScenario(format!("malformed scenario: {e}")))?;
        s.validate()?;
        Ok(s)
    }

    pub fn resolved_method(&self) -> Method {
        match self.method {
            Method::Auto if self.n == 2 => Method::Grid,
            Method::Auto => Method::Radial,
            m => m,
        }
    }

    pub fn domain_polygon(&self) -> Vec<Point> {
        match &self.domain {
            Domain::Ball { radius } => regular_polygon(self.grid.boundary_nodes.max(3), *radius),
            Domain::Polygon { vertices } => vertices.clone(),
        }
    }

    pub fn inradius(&self) -> f64 {
        match &self.domain {
            Domain::Ball { radius } => *radius,
            Domain::Polygon { vertices } => inradius(vertices),
        }
    }

    pub fn solver_config(&self) -> SolverConfig {
        self.estimates.obstacle.solver
    }

    pub fn obstacle_config(&self) -> ObstacleConfig {
        self.estimates.obstacle
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::InvalidScenario(format!("{}: {m}", self.name)));
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return bad("name must be a nonempty file-name-safe string".into());
        }
        if self.n < 2 {
            return bad(format!("dimension {} < 2", self.n));
        }
        if let Domain::Ball { radius } = self.domain {
            if !(radius > 0.0 && radius.is_finite()) {
                return bad(format!("ball radius {radius}"));
            }
        }
        if let Domain::Polygon { vertices } = &self.domain {
            if !is_convex_ccw(vertices) {
                return bad("polygon must be convex and counter-clockwise".into());
            }
        }
        let r = self.inradius();
        for (k, &a) in self.a_ladder.iter().enumerate() {
            if !(a > 0.0 && a.is_finite()) {
                return bad(format!("mass scale {a} is not positive"));
            }
            if a >= r / 4.0 {
                return bad(format!("mass scale {a} is not below inradius / 4 = {}", r / 4.0));
            }
            if k > 0 && a >= self.a_ladder[k - 1] {
                return bad("a_ladder must be strictly decreasing".into());
            }
        }
        match self.resolved_method() {
            Method::Radial => {
                if !matches!(self.domain, Domain::Ball { .. }) || self.background != Background::Quadratic {
                    return bad("radial runs need a ball and the quadratic background".into());
                }
                if !matches!(self.perturbation, Perturbation::Singularity | Perturbation::Obstacle) {
                    return bad("radial runs support singularity and obstacle perturbations".into());
                }
                if self.center != [0.0, 0.0] {
                    return bad("radial runs are centred at the origin".into());
                }
            }
            _ => {
                if self.n != 2 {
                    return bad("grid runs are planar".into());
                }
                if self.grid.lattice < 5 || self.grid.boundary_nodes < 8 {
                    return bad(format!("grid {:?} too coarse", self.grid));
                }
            }
        }
        if let Background::AnisotropicQuadratic { eigenvalues } = self.background {
            if !eigenvalues.iter().all(|l| *l > 0.0 && l.is_finite()) {
                return bad(format!("eigenvalues {eigenvalues:?} must be positive"));
            }
        }
        if let Perturbation::MultiDirac { points, fractions } = &self.perturbation {
            if points.is_empty() || points.len() != fractions.len() {
                return bad("multi-dirac needs one fraction per point".into());
            }
            if fractions.iter().any(|f| !(*f > 0.0)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return bad("multi-dirac fractions must be positive and sum to 1".into());
            }
        }
        if matches!(self.perturbation, Perturbation::RandomAdmissible) && (self.seeds.is_empty() || self.queries == 0) {
            return bad("random-admissible needs seeds and at least one query".into());
        }
        let e = &self.estimates;
        if !(e.obstacle.solver.mass_tol > 0.0 && e.obstacle.solver.mass_tol < 1e-2) || !(e.dilation >= 1.0) || e.slope_samples < 2 {
            return bad("estimate configuration out of range".into());
        }
        Ok(())
    }

    /// Node set and background of a grid scenario.
    pub fn instance(&self) -> Result<Instance, HarnessError> {
        let nodes = Arc::new(match &self.domain {
            Domain::Ball { radius } => NodeSet::disk(self.grid.lattice, self.grid.boundary_nodes, *radius)?,
            Domain::Polygon { vertices } => NodeSet::polygon(vertices, self.grid.lattice, self.grid.boundary_nodes)?,
        });
        let half_sq = |p: &Point| 0.5 * dot(*p, *p);
        let phi = match &self.background {
            Background::Quadratic => PLConvexFunction::lower_hull(nodes.clone(), nodes.points().iter().map(half_sq).collect())?,
            Background::AnisotropicQuadratic { eigenvalues: [l0, l1] } => {
                let v = nodes.points().iter().map(|p| 0.5 * (l0 * p[0] * p[0] + l1 * p[1] * p[1])).collect();
                PLConvexFunction::lower_hull(nodes.clone(), v)?
            }
            Background::CustomDensity { coefficients: c } => {
                let f = |p: Point| c[0] + c[1] * p[0] + c[2] * p[1] + c[3] * p[0] * p[0] + c[4] * p[0] * p[1] + c[5] * p[1] * p[1];
                let mu = assemble_background(f, &nodes)?;
                let problem = DirichletProblem {
                    nodes: nodes.clone(),
                    boundary_values: nodes.points().iter().map(half_sq).collect(),
                    target: mu.restrict(|i| !nodes.is_boundary(i)),
                };
                solve_dirichlet(&problem, &self.solver_config()).map_err(|e| HarnessError::compute(format!("{}: background", self.name), e))?.function
            }
        };
        let center = nodes.nearest(self.center);
        if nodes.is_boundary(center) {
            return Err(HarnessError::InvalidScenario(format!("{}: centre is on the boundary", self.name)));
        }
        Ok(Instance { phi, center })
    }

    /// Slope of the background at the centre node.
    pub fn center_slope(&self, inst: &Instance) -> Point {
        let x = inst.phi.nodes().point(inst.center);
        match &self.background {
            Background::Quadratic => x,
            Background::AnisotropicQuadratic { eigenvalues: [l0, l1] } => [l0 * x[0], l1 * x[1]],
            Background::CustomDensity { .. } => crate::geometry::polygon::centroid(&inst.phi.cell(inst.center).polygon),
        }
    }

    /// Mass scale seen after normalizing the background Hessian at the centre to the identity.
    pub fn normalized_scale(&self, a: f64) -> f64 {
        match &self.background {
            Background::Quadratic => a,
            Background::AnisotropicQuadratic { eigenvalues: [l0, l1] } => a / (l0 * l1).powf(0.25),
            Background::CustomDensity { coefficients: c } => {
                let [x, y] = self.center;
                let f = c[0] + c[1] * x + c[2] * y + c[3] * x * x + c[4] * x * y + c[5] * y * y;
                a / f.max(f64::MIN_POSITIVE).powf(0.25)
            }
        }
    }
}
