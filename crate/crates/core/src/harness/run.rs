use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fit::{rate_fit, RateFit};
use super::scenario::{Domain, Instance, Method, Perturbation, Scenario};
use super::HarnessError;
use crate::estimates::{alexandrov_bounds, EstimateConfig, ExtremalContext, ExtremalReport};
use crate::geometry::polygon::dist;
use crate::geometry::PLConvexFunction;
use crate::measures::{MassScale, SignedDiscreteMeasure};
use crate::obstacle::calibrate_height;
use crate::radial::{asymptotic_record, predicted_offset, records_to_csv, AsymptoticRecord, ProfileKind};
use crate::solver::{isolated_singularity, solve_perturbed, SolveOutcome};

pub const GAPS_HEADER: &str = "a,seed,gap,classical,improved,residual";
pub const OBSTACLE_HEADER: &str = "a,h,mass,target,relative_error";

/// Sup-norm gap of one solved instance against its Alexandrov bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub a: f64,
    pub seed: u64,
    pub gap: f64,
    pub classical: f64,
    pub improved: Option<f64>,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstacleRow {
    pub a: f64,
    pub h: f64,
    pub mass: f64,
    pub target: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeededReport {
    pub seed: u64,
    #[serde(flatten)]
    pub report: ExtremalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub name: String,
    pub n: usize,
    pub records: Vec<AsymptoticRecord>,
    pub reports: Vec<SeededReport>,
    pub gaps: Vec<GapRow>,
    pub obstacles: Vec<ObstacleRow>,
    pub fit: Option<RateFit>,
}

impl ScenarioResult {
    fn empty(s: &Scenario) -> Self {
        Self { name: s.name.clone(), n: s.n, records: vec![], reports: vec![], gaps: vec![], obstacles: vec![], fit: None }
    }

    pub fn records_csv(&self) -> String {
        records_to_csv(&self.records)
    }

    pub fn reports_csv(&self) -> String {
        let mut s = format!("{}\n", ExtremalReport::CSV_HEADER);
        for r in &self.reports {
            let _ = writeln!(s, "{}", r.report.csv_row());
        }
        s
    }

    pub fn gaps_csv(&self) -> String {
        let mut s = format!("{GAPS_HEADER}\n");
        for g in &self.gaps {
            let _ = writeln!(
                s,
                "{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e}",
                g.a,
                g.seed,
                g.gap,
                g.classical,
                g.improved.unwrap_or(f64::NAN),
                g.residual
            );
        }
        s
    }

    pub fn obstacles_csv(&self) -> String {
        let mut s = format!("{OBSTACLE_HEADER}\n");
        for o in &self.obstacles {
            let _ = writeln!(s, "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}", o.a, o.h, o.mass, o.target, o.relative_error);
        }
        s
    }

    /// Output file names and contents, in write order.
    pub fn files(&self) -> Vec<(&'static str, String)> {
        let json = serde_json::to_string_pretty(self).expect("results serialize");
        vec![
            ("records.csv", self.records_csv()),
            ("reports.csv", self.reports_csv()),
            ("gaps.csv", self.gaps_csv()),
            ("obstacle.csv", self.obstacles_csv()),
            ("results.json", json),
        ]
    }
}

/// Command-line overrides applied on top of a scenario file.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub mass_tol: Option<f64>,
}

impl RunOptions {
    pub fn apply(&self, s: &Scenario) -> Result<Scenario, HarnessError> {
        let mut s = s.clone();
        if let Some(seed) = self.seed {
            s.seeds = vec![seed];
        }
        if let Some(t) = self.mass_tol {
            s.estimates.obstacle.solver.mass_tol = t;
        }
        s.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    Nonnegative,
    Nonpositive,
}

/// Sum of one to three Gaussian bumps on interior nodes with total variation exactly
/// `omega_2 a^2`. Nonpositive bumps remove at most half of the background mass at any node,
/// so `M phi + mu` stays positive.
pub fn random_admissible_measure<R: Rng>(phi: &PLConvexFunction, a: MassScale, sign: Sign, rng: &mut R) -> Result<SignedDiscreteMeasure, HarnessError> {
    let ns = phi.nodes();
    let interior = ns.interior_indices();
    let depth = interior.iter().map(|&i| ns.border_distance(i)).fold(0.0, f64::max);
    let centres: Vec<usize> = interior.iter().copied().filter(|&i| ns.border_distance(i) >= 0.4 * depth).collect();
    if centres.is_empty() || a.total_variation <= 0.0 {
        return Err(HarnessError::InvalidScenario("no room for a random perturbation".into()));
    }
    let background = phi.interior_ma_weights();
    let k = rng.random_range(1..=3usize);
    let shares: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = shares.iter().sum();
    let diam = ns.diameter();
    let mut dense = vec![0.0; ns.len()];
    for share in shares {
        let mass = a.total_variation * share / total;
        let c = ns.point(centres[rng.random_range(0..centres.len())]);
        let mut sigma = a.a * rng.random_range(0.5..1.5);
        loop {
            let g: Vec<(usize, f64)> = interior
                .iter()
                .map(|&i| (i, (-dist(ns.point(i), c).powi(2) / (2.0 * sigma * sigma)).exp()))
                .filter(|&(_, g)| g >= 1e-8)
                .collect();
            let scale = match sign {
                Sign::Nonnegative => g.iter().map(|&(_, g)| g).sum::<f64>(),
                Sign::Nonpositive => g.iter().map(|&(i, g)| g * background[i]).sum::<f64>(),
            };
            let theta = mass / scale;
            if sign == Sign::Nonnegative || theta * k as f64 <= 0.5 {
                for (i, g) in g {
                    dense[i] += match sign {
                        Sign::Nonnegative => theta * g,
                        Sign::Nonpositive => -theta * g * background[i],
                    };
                }
                break;
            }
            sigma *= 1.25;
            if sigma > diam {
                return Err(HarnessError::InvalidScenario(format!("mass scale {} too large for a nonpositive perturbation", a.a)));
            }
        }
    }
    let mu = SignedDiscreteMeasure::from_dense(&dense);
    // Renormalize after pruning so the total variation is exact to rounding.
    Ok(mu.scale(a.total_variation / mu.total_variation()))
}

fn cell_rng(seed: u64, a: f64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ a.to_bits().rotate_left(17))
}

/// Query nodes for one random instance: the heaviest atom, then random deep interior nodes.
fn query_nodes<R: Rng>(phi: &PLConvexFunction, mu: &SignedDiscreteMeasure, count: usize, rng: &mut R) -> Vec<usize> {
    let ns = phi.nodes();
    let interior = ns.interior_indices();
    let depth = interior.iter().map(|&i| ns.border_distance(i)).fold(0.0, f64::max);
    let pool: Vec<usize> = interior.into_iter().filter(|&i| ns.border_distance(i) >= 0.25 * depth).collect();
    let mut out = Vec::with_capacity(count);
    if let Some((i, _)) = mu.iter().max_by(|x, y| x.1.abs().total_cmp(&y.1.abs()).then(y.0.cmp(&x.0))) {
        out.push(i);
    }
    let mut guard = 0;
    while out.len() < count.min(pool.len()) && guard < 100 * count {
        let i = pool[rng.random_range(0..pool.len())];
        if !out.contains(&i) {
            out.push(i);
        }
        guard += 1;
    }
    out
}

/// The measure and query nodes of the random-admissible cell `(a, seed)`: a fair coin picks
/// the sign, then [`random_admissible_measure`] and the queries draw from the same stream.
pub fn random_cell(phi: &PLConvexFunction, a: MassScale, seed: u64, queries: usize) -> Result<(SignedDiscreteMeasure, Vec<usize>), HarnessError> {
    let mut rng = cell_rng(seed, a.a);
    let sign = if rng.random_bool(0.5) { Sign::Nonnegative } else { Sign::Nonpositive };
    let mu = random_admissible_measure(phi, a, sign, &mut rng)?;
    let q = query_nodes(phi, &mu, queries, &mut rng);
    Ok((mu, q))
}

fn gap_row(a: f64, seed: u64, u: &SolveOutcome, phi: &PLConvexFunction, cfg: &EstimateConfig, ctx: &str) -> Result<GapRow, HarnessError> {
    let b = alexandrov_bounds(&u.function, phi, cfg).map_err(|e| HarnessError::compute(ctx, e))?;
    let row = GapRow { a, seed, gap: b.observed, classical: b.classical, improved: b.improved, residual: u.residual };
    if !b.classical_holds(u.residual) {
        return Err(HarnessError::Assertion(format!(
            "{ctx}: sup gap {:.16e} exceeds classical bound {:.16e} + residual {:.3e}",
            b.observed, b.classical, u.residual
        )));
    }
    Ok(row)
}

#[derive(Default)]
struct CellOutput {
    records: Vec<AsymptoticRecord>,
    reports: Vec<SeededReport>,
    gaps: Vec<GapRow>,
    obstacles: Vec<ObstacleRow>,
}

fn radial_cell(s: &Scenario, a: f64) -> Result<CellOutput, HarnessError> {
    let Domain::Ball { radius } = s.domain else { unreachable!("validated") };
    let kind = match s.perturbation {
        Perturbation::Obstacle => ProfileKind::Obstacle,
        _ => ProfileKind::Singularity,
    };
    let rec = asymptotic_record(s.n, radius, a, kind).map_err(|e| HarnessError::compute(format!("{} a={a}", s.name), e))?;
    Ok(CellOutput { records: vec![rec], ..Default::default() })
}

fn grid_cell(s: &Scenario, inst: &Instance, ctx: Option<&ExtremalContext>, a: f64, seed: u64) -> Result<CellOutput, HarnessError> {
    let phi = &inst.phi;
    let label = format!("{} a={a} seed={seed}", s.name);
    let err = |e: crate::estimates::EstimateError| HarnessError::Compute { context: label.clone(), source: e };
    let scale = MassScale::from_a(a, 2)?;
    let cfg = &s.estimates;
    let r_pred = s.inradius();
    let a_pred = s.normalized_scale(a);
    let mut out = CellOutput::default();
    match &s.perturbation {
        Perturbation::Singularity => {
            let y = inst.center;
            let u = isolated_singularity(phi, y, scale, &cfg.obstacle.solver).map_err(|e| err(e.into()))?;
            let predicted = predicted_offset(2, r_pred, a_pred, ProfileKind::Singularity).map_err(|e| err(e.into()))?;
            out.records.push(AsymptoticRecord::new(2, a, u.function.value(y) - phi.value(y), predicted));
            out.gaps.push(gap_row(a, seed, &u, phi, cfg, &label)?);
        }
        Perturbation::Obstacle => {
            let sol = calibrate_height(phi, s.center_slope(inst), scale, &cfg.obstacle).map_err(|e| err(e.into()))?;
            let y = sol.spec.x_p;
            let predicted = predicted_offset(2, r_pred, a_pred, ProfileKind::Obstacle).map_err(|e| err(e.into()))?;
            out.records.push(AsymptoticRecord::new(2, a, sol.function.value(y) - phi.value(y), predicted));
            let target = scale.total_variation;
            out.obstacles.push(ObstacleRow {
                a,
                h: sol.spec.h,
                mass: sol.coincidence.mass,
                target,
                relative_error: (sol.coincidence.mass - target) / target,
            });
            let as_outcome = SolveOutcome { function: sol.function, iters: sol.iters, residual: 0.0, max_raise: sol.max_raise, warm_start_used: false };
            out.gaps.push(gap_row(a, seed, &as_outcome, phi, cfg, &label)?);
        }
        Perturbation::MultiDirac { points, fractions } => {
            let ns = phi.nodes();
            let atoms: Vec<(usize, f64)> = points.iter().zip(fractions).map(|(p, f)| (ns.nearest(*p), *f)).collect();
            if let Some(&(i, _)) = atoms.iter().find(|(i, _)| ns.is_boundary(*i)) {
                return Err(HarnessError::InvalidScenario(format!("{label}: atom lands on boundary node {i}")));
            }
            let mu = SignedDiscreteMeasure::from_atoms(atoms.iter().map(|&(i, f)| (i, f * scale.total_variation)));
            let u = solve_perturbed(phi, &mu, &cfg.obstacle.solver).map_err(|e| err(e.into()))?;
            for &(i, f) in &atoms {
                let ak = a_pred * f.sqrt();
                let predicted = predicted_offset(2, r_pred, ak, ProfileKind::Singularity).map_err(|e| err(e.into()))?;
                out.records.push(AsymptoticRecord::new(2, a * f.sqrt(), u.function.value(i) - phi.value(i), predicted));
            }
            out.gaps.push(gap_row(a, seed, &u, phi, cfg, &label)?);
        }
        Perturbation::RandomAdmissible => {
            let ctx = ctx.expect("context per mass scale");
            let (mu, queries) = random_cell(phi, scale, seed, s.queries)?;
            let u = solve_perturbed(phi, &mu, &cfg.obstacle.solver).map_err(|e| err(e.into()))?;
            out.gaps.push(gap_row(a, seed, &u, phi, cfg, &label)?);
            for y in queries {
                let report = ctx.report(&u.function, y).map_err(err)?;
                if let Some(diff) = report.violation() {
                    return Err(HarnessError::Assertion(format!("{label} y={y}: {diff}")));
                }
                out.reports.push(SeededReport { seed, report });
            }
        }
    }
    Ok(out)
}

/// Runs every `(a, seed)` cell of a validated scenario. Cells run in parallel on the current
/// rayon pool; results are merged in ladder and seed order.
pub fn run_scenario(s: &Scenario) -> Result<ScenarioResult, HarnessError> {
    s.validate()?;
    let mut result = ScenarioResult::empty(s);
    if s.a_ladder.is_empty() {
        return Ok(result);
    }
    let seeds: Vec<u64> = match s.perturbation {
        Perturbation::RandomAdmissible => s.seeds.clone(),
        _ => vec![s.seeds.first().copied().unwrap_or(0)],
    };
    let cells: Vec<(usize, u64)> = (0..s.a_ladder.len()).flat_map(|k| seeds.iter().map(move |&seed| (k, seed))).collect();
    let outputs: Vec<Result<CellOutput, HarnessError>> = if s.resolved_method() == Method::Radial {
        cells.par_iter().map(|&(k, _)| radial_cell(s, s.a_ladder[k])).collect()
    } else {
        let inst = s.instance()?;
        let random = matches!(s.perturbation, Perturbation::RandomAdmissible);
        let mut contexts = Vec::with_capacity(s.a_ladder.len());
        for &a in &s.a_ladder {
            contexts.push(if random { Some(ExtremalContext::new(&inst.phi, MassScale::from_a(a, 2)?, s.estimates)) } else { None });
        }
        cells.par_iter().map(|&(k, seed)| grid_cell(s, &inst, contexts[k].as_ref(), s.a_ladder[k], seed)).collect()
    };
    for out in outputs {
        let out = out?;
        result.records.extend(out.records);
        result.reports.extend(out.reports);
        result.gaps.extend(out.gaps);
        result.obstacles.extend(out.obstacles);
    }
    let points: Vec<(f64, f64)> = match (&s.perturbation, result.gaps.is_empty()) {
        (Perturbation::Singularity | Perturbation::Obstacle, true) => result.records.iter().map(|r| (r.a, r.offset.abs())).collect(),
        (Perturbation::Singularity | Perturbation::Obstacle, false) => result.gaps.iter().map(|g| (g.a, g.gap)).collect(),
        _ => vec![],
    };
    result.fit = rate_fit(&points).ok();
    Ok(result)
}

/// Writes the result tables into `dir`, creating it if needed.
pub fn write_outputs(result: &ScenarioResult, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut written = Vec::new();
    for (name, body) in result.files() {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| HarnessError::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

/// Runs every `*.json` scenario in `dir` in file-name order, writing each into `out/<name>`.
/// Stops at the first failure.
pub fn sweep(dir: &Path, out: &Path, opts: &RunOptions) -> Result<Vec<ScenarioResult>, HarnessError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| HarnessError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    let mut scenarios = Vec::with_capacity(files.len());
    for f in &files {
        let text = fs::read_to_string(f).map_err(|e| HarnessError::io(f, e))?;
        let s = Scenario::from_json(&text).map_err(|e| HarnessError::InvalidScenario(format!("{}: {e}", f.display())))?;
        scenarios.push(opts.apply(&s)?);
    }
    let mut names: Vec<&str> = scenarios.iter().map(|s| s.name.as_str()).collect();
    names.sort_unstable();
    if names.windows(2).any(|w| w[0] == w[1]) {
        return Err(HarnessError::InvalidScenario("scenario names in a sweep must be unique".into()));
    }
    let mut results = Vec::with_capacity(scenarios.len());
    for s in &scenarios {
        let r = run_scenario(s)?;
        write_outputs(&r, &out.join(&s.name))?;
        results.push(r);
    }
    Ok(results)
}
