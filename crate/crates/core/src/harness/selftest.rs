use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::fit::rate_fit;
use super::run::run_scenario;
use super::scenario::{Background, Domain, GridSpec, Perturbation, Scenario};
use crate::estimates::{alexandrov_bounds, extremal_report, stability_diagnostic, EstimateConfig};
use crate::geometry::polygon::dot;
use crate::geometry::{NodeSet, PLConvexFunction};
use crate::measures::{MassScale, SignedDiscreteMeasure};
use crate::obstacle::{solve_obstacle_at_height, ObstacleConfig, ObstacleSpec};
use crate::radial::{asymptotic_record, dn0, dn0_quadrature, records_to_csv, ProfileKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfTestCase {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type Check = fn() -> Result<(), String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn quadratic(lattice: usize) -> Result<PLConvexFunction, String> {
    let ns = Arc::new(NodeSet::disk(lattice, 48, 1.0).map_err(|e| e.to_string())?);
    let v = ns.points().iter().map(|p| 0.5 * dot(*p, *p)).collect();
    PLConvexFunction::lower_hull(ns, v).map_err(|e| e.to_string())
}

fn gamma_constant() -> Result<(), String> {
    for n in 3..=5 {
        let (g, q) = (dn0(n).map_err(|e| e.to_string())?, dn0_quadrature(n, 1e4).map_err(|e| e.to_string())?);
        ensure((g - q).abs() <= 1e-8, || format!("n={n}: {g} vs {q}"))?;
    }
    Ok(())
}

fn exact_power_law() -> Result<(), String> {
    let pts: Vec<(f64, f64)> = [0.2f64, 0.1, 0.05].iter().map(|&a| (a, a * a * a)).collect();
    let f = rate_fit(&pts).map_err(|e| e.to_string())?;
    ensure((f.exponent - 3.0).abs() < 1e-10 && !f.log_correction, || format!("{f:?}"))
}

fn empty_ladder() -> Result<(), String> {
    let s = Scenario::new("empty", 2, Background::Quadratic, Domain::Ball { radius: 1.0 }, Perturbation::Singularity, vec![]);
    let r = run_scenario(&s).map_err(|e| e.to_string())?;
    ensure(r.records.is_empty() && r.gaps.is_empty(), || "rows produced".into())
}

fn zero_measure_bounds() -> Result<(), String> {
    let phi = quadratic(9)?;
    let b = alexandrov_bounds(&phi, &phi, &EstimateConfig::default()).map_err(|e| e.to_string())?;
    ensure(b.classical == 0.0 && b.improved == Some(0.0) && b.observed == 0.0, || format!("{b:?}"))
}

fn background_report_collapses() -> Result<(), String> {
    let phi = quadratic(9)?;
    let y = phi.nodes().nearest([0.1, 0.1]);
    let r = extremal_report(&phi, &phi, y, &EstimateConfig::default()).map_err(|e| e.to_string())?;
    ensure(r.lower == r.observed && r.observed == r.upper, || format!("{} {} {}", r.lower, r.observed, r.upper))
}

fn zero_height_obstacle() -> Result<(), String> {
    let phi = quadratic(9)?;
    let spec = ObstacleSpec::supporting(&phi, [0.0, 0.0]).with_height(0.0);
    let sol = solve_obstacle_at_height(&phi, &spec, &ObstacleConfig::default()).map_err(|e| e.to_string())?;
    let diff = sol.function.values().iter().zip(phi.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure(diff <= 1e-12, || format!("max difference {diff:e}"))
}

fn concentration_bookkeeping() -> Result<(), String> {
    let phi = quadratic(15)?;
    let ns = phi.nodes();
    let (x0, far) = (ns.nearest([0.0, 0.0]), ns.nearest([0.6, 0.0]));
    let a = MassScale::from_a(0.1, 2).map_err(|e| e.to_string())?;
    let id = [[1.0, 0.0], [0.0, 1.0]];
    let full = SignedDiscreteMeasure::dirac(x0, a.total_variation);
    let d0 = stability_diagnostic(&phi, &phi, &full, x0, 0.5, id).map_err(|e| e.to_string())?;
    let half = SignedDiscreteMeasure::from_atoms([(x0, 0.5 * a.total_variation), (far, 0.5 * a.total_variation)]);
    let d1 = stability_diagnostic(&phi, &phi, &half, x0, 0.5, id).map_err(|e| e.to_string())?;
    ensure(d0.normalized_deficit == 0.0 && (d1.normalized_deficit - 0.5).abs() < 1e-15, || {
        format!("{} {}", d0.normalized_deficit, d1.normalized_deficit)
    })
}

fn record_format() -> Result<(), String> {
    let r = asymptotic_record(3, 1.0, 0.1, ProfileKind::Singularity).map_err(|e| e.to_string())?;
    let csv = records_to_csv(&[r]);
    ensure(csv.starts_with("n,a,offset,predicted,error\n") && csv.lines().count() == 2, || csv.clone())
}

fn scenario_round_trip() -> Result<(), String> {
    let mut s = Scenario::new("rt", 2, Background::Quadratic, Domain::Ball { radius: 1.0 }, Perturbation::RandomAdmissible, vec![0.1]);
    s.grid = GridSpec { lattice: 9, boundary_nodes: 32 };
    let text = serde_json::to_string(&s).map_err(|e| e.to_string())?;
    let back = Scenario::from_json(&text).map_err(|e| e.to_string())?;
    ensure(back == s, || text.clone())
}

const CASES: [(&str, Check); 9] = [
    ("dn0-gamma-vs-quadrature", gamma_constant),
    ("rate-fit-exact-power-law", exact_power_law),
    ("empty-ladder-no-op", empty_ladder),
    ("zero-measure-bounds", zero_measure_bounds),
    ("background-report-collapses", background_report_collapses),
    ("zero-height-obstacle", zero_height_obstacle),
    ("concentration-bookkeeping", concentration_bookkeeping),
    ("record-csv-format", record_format),
    ("scenario-json-round-trip", scenario_round_trip),
];

/// Quick consistency checks with exact expected outcomes.
pub fn selftest() -> Vec<SelfTestCase> {
    CASES
        .iter()
        .map(|(name, check)| {
            let r = check();
            SelfTestCase { name, passed: r.is_ok(), detail: r.err().unwrap_or_default() }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    #[test]
    fn selftest_passes() {
        for c in super::selftest() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
