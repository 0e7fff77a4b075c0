//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits non-zero on failure.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;
use std::time::{Duration, Instant};

use mongeamp::estimates::{alexandrov_bounds, stability_diagnostic, EstimateConfig, ExtremalContext};
use mongeamp::geometry::polygon::dot;
use mongeamp::geometry::{NodeSet, PLConvexFunction};
use mongeamp::harness::{random_cell, run_scenario, Background, Domain, GridSpec, Perturbation, Scenario};
use mongeamp::measures::{MassScale, SignedDiscreteMeasure};
use mongeamp::obstacle::{calibrate_height, solve_obstacle_at_height, ObstacleConfig, ObstacleSpec};
use mongeamp::radial::{dn0, dn0_quadrature, obstacle_offset_2d_unit, radial_dirichlet_offset, radial_obstacle_offset};
use mongeamp::solver::{isolated_singularity, solve_perturbed, SolverConfig};

type Outcome = Result<String, String>;

/// Sup-norm gap against the classical bound for one solved instance.
struct Solved {
    label: String,
    observed: f64,
    classical: f64,
    residual: f64,
}

#[derive(Default)]
struct Ledger {
    solved: Vec<Solved>,
}

impl Ledger {
    fn record(&mut self, label: impl Into<String>, u: &PLConvexFunction, phi: &PLConvexFunction, residual: f64) -> Result<(), String> {
        let b = alexandrov_bounds(u, phi, &EstimateConfig::default()).map_err(|e| e.to_string())?;
        self.solved.push(Solved { label: label.into(), observed: b.observed, classical: b.classical, residual });
        Ok(())
    }
}

fn quadratic(lattice: usize, boundary: usize) -> PLConvexFunction {
    let ns = Arc::new(NodeSet::disk(lattice, boundary, 1.0).expect("disk nodes"));
    let v = ns.points().iter().map(|p| 0.5 * dot(*p, *p)).collect();
    PLConvexFunction::lower_hull(ns, v).expect("quadratic hull")
}

fn e<T: std::fmt::Display>(x: T) -> String {
    x.to_string()
}

fn c1() -> Outcome {
    let mut worst = 0.0f64;
    for n in [3, 4, 5] {
        let d = (dn0(n).map_err(e)? - dn0_quadrature(n, 1e4).map_err(e)?).abs();
        if d > 1e-8 {
            return Err(format!("n = {n}: |gamma - quadrature| = {d:.3e}"));
        }
        worst = worst.max(d);
    }
    Ok(format!("max |gamma - quadrature| = {worst:.2e}"))
}

fn c2() -> Outcome {
    let d = dn0(3).map_err(e)?;
    let mut worst = 0.0f64;
    for a in [0.1, 0.05, 0.025] {
        let lim = 2.0 * a * a * a;
        let du = (radial_dirichlet_offset(3, 1.0, a).map_err(e)? + d * a * a).abs();
        let dv = (radial_obstacle_offset(3, 1.0, a).map_err(e)? - d * a * a).abs();
        if du > lim || dv > lim {
            return Err(format!("a = {a}: errors {du:.3e}, {dv:.3e} exceed {lim:.3e}"));
        }
        worst = worst.max(du / lim).max(dv / lim);
    }
    Ok(format!("worst error / 2a^3 = {worst:.3}"))
}

fn c3() -> Outcome {
    let mut ratios = Vec::new();
    for a in [0.1f64, 0.05, 0.025, 0.0125] {
        let scale = 0.5 * a * a * a.ln().abs();
        let band = 3.0 / a.ln().abs();
        for off in [-radial_dirichlet_offset(2, 1.0, a).map_err(e)?, radial_obstacle_offset(2, 1.0, a).map_err(e)?] {
            let r = off / scale;
            if (r - 1.0).abs() > band {
                return Err(format!("a = {a}: ratio {r:.4} outside 1 +- {band:.4}"));
            }
            ratios.push(r);
        }
    }
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().copied().fold(0.0, f64::max);
    Ok(format!("ratios in [{lo:.4}, {hi:.4}]"))
}

/// `u - phi` of the radial point-mass solution on the unit disk at radius `r`.
fn singular_profile(a: f64, r: f64) -> f64 {
    let prim = |s: f64| {
        let q = (s * s + a * a).sqrt();
        0.5 * (s * q + a * a * (s + q).ln()) - 0.5 * s * s
    };
    -(prim(1.0) - prim(r.min(1.0)))
}

fn singularity_error(lattice: usize, boundary: usize, a: f64, ledger: &mut Ledger) -> Result<f64, String> {
    let phi = quadratic(lattice, boundary);
    let ns = phi.nodes().clone();
    let y = ns.nearest([0.0, 0.0]);
    let u = isolated_singularity(&phi, y, MassScale::from_a(a, 2).map_err(e)?, &SolverConfig::default()).map_err(e)?;
    ledger.record(format!("singularity {lattice}/{boundary} a={a}"), &u.function, &phi, u.residual)?;
    Ok((0..ns.len())
        .map(|i| (u.function.value(i) - phi.value(i) - singular_profile(a, dot(ns.point(i), ns.point(i)).sqrt())).abs())
        .fold(0.0, f64::max))
}

fn c4(ledger: &mut Ledger) -> Outcome {
    let coarse = singularity_error(65, 256, 0.2, ledger)?;
    let fine = singularity_error(129, 512, 0.2, ledger)?;
    if !(fine < coarse) {
        return Err(format!("error does not decrease: {coarse:.3e} -> {fine:.3e}"));
    }
    if coarse > 1e-2 {
        return Err(format!("default-resolution error {coarse:.3e} > 1e-2"));
    }
    Ok(format!("L-inf error {coarse:.3e} (65/256) -> {fine:.3e} (129/512)"))
}

fn c5(ledger: &mut Ledger) -> Outcome {
    let phi = quadratic(45, 180);
    let a = 0.2;
    let cfg = ObstacleConfig::default();
    let sol = calibrate_height(&phi, [0.0, 0.0], MassScale::from_a(a, 2).map_err(e)?, &cfg).map_err(e)?;
    ledger.record("obstacle 45/180 a=0.2", &sol.function, &phi, 0.0)?;
    let exact = obstacle_offset_2d_unit(a);
    let h_err = (sol.spec.h - exact).abs() / exact;
    let target = PI * a * a;
    let m_err = (sol.coincidence.mass - target).abs() / target;
    if h_err > 0.01 || m_err > 0.01 {
        return Err(format!("h {:.6} vs {exact:.6} ({h_err:.2e}), mass {:.6} vs {target:.6} ({m_err:.2e})", sol.spec.h, sol.coincidence.mass));
    }
    let base = ObstacleSpec::supporting(&phi, [0.0, 0.0]);
    let mut scales = Vec::new();
    for f in [0.25, 0.5, 1.0, 1.5, 2.0] {
        let s = solve_obstacle_at_height(&phi, &base.with_height(f * sol.spec.h), &cfg).map_err(e)?;
        ledger.record(format!("obstacle 45/180 h={:.5}", s.spec.h), &s.function, &phi, 0.0)?;
        scales.push(MassScale::from_total_variation(s.discrepancy, 2).map_err(e)?.a);
    }
    if !scales.windows(2).all(|w| w[0] < w[1]) {
        return Err(format!("a(h) not increasing: {scales:?}"));
    }
    Ok(format!("h rel. error {h_err:.2e}, mass rel. error {m_err:.2e}, a(h) = {scales:.4?}"))
}

fn random_scenario() -> Scenario {
    let mut s = Scenario::new("sandwich", 2, Background::Quadratic, Domain::Ball { radius: 1.0 }, Perturbation::RandomAdmissible, vec![0.15]);
    s.grid = GridSpec { lattice: 15, boundary_nodes: 48 };
    s.seeds = (0..20).collect();
    s.queries = 5;
    s
}

type Reports = HashMap<(u64, usize), mongeamp::estimates::ExtremalReport>;

fn c6(ledger: &mut Ledger, store: &mut Reports) -> Outcome {
    let s = random_scenario();
    let r = run_scenario(&s).map_err(e)?;
    for g in &r.gaps {
        ledger.solved.push(Solved { label: format!("random seed={}", g.seed), observed: g.gap, classical: g.classical, residual: g.residual });
    }
    let bad: Vec<String> = r.reports.iter().filter_map(|sr| sr.report.violation().map(|v| format!("seed {} y {}: {v}", sr.seed, sr.report.y))).collect();
    if !bad.is_empty() {
        return Err(format!("{} violations; first: {}", bad.len(), bad[0]));
    }
    if r.reports.len() != 100 {
        return Err(format!("{} reports instead of 100", r.reports.len()));
    }
    let low = r.reports.iter().map(|x| x.report.observed - x.report.lower).fold(f64::INFINITY, f64::min);
    let up = r.reports.iter().map(|x| x.report.upper - x.report.observed).fold(f64::INFINITY, f64::min);
    for sr in r.reports {
        store.insert((sr.seed, sr.report.y), sr.report);
    }
    Ok(format!("100 reports, 0 violations; min observed-lower {low:.3e}, min upper-observed {up:.3e}"))
}

fn c7(ledger: &mut Ledger) -> Outcome {
    let mut s = Scenario::new("ladder", 2, Background::Quadratic, Domain::Ball { radius: 1.0 }, Perturbation::Singularity, vec![0.2, 0.1, 0.05]);
    s.grid = GridSpec { lattice: 65, boundary_nodes: 256 };
    let r = run_scenario(&s).map_err(e)?;
    for g in &r.gaps {
        ledger.solved.push(Solved { label: format!("ladder a={}", g.a), observed: g.gap, classical: g.classical, residual: g.residual });
    }
    let fit = r.fit.ok_or("no fit on the grid ladder")?;
    if !(1.8..=2.2).contains(&fit.exponent) || !fit.log_correction {
        return Err(format!("grid fit: exponent {:.4}, log model selected {}", fit.exponent, fit.log_correction));
    }
    let radial = Scenario::new("radial", 3, Background::Quadratic, Domain::Ball { radius: 1.0 }, Perturbation::Singularity, vec![0.2, 0.1, 0.05, 0.025]);
    let rf = run_scenario(&radial).map_err(e)?.fit.ok_or("no fit on the radial ladder")?;
    if rf.log_correction {
        return Err(format!("radial n = 3 selects the log model (rss {:.3e} vs {:.3e})", rf.rss_log, rf.rss_plain));
    }
    Ok(format!(
        "grid exponent {:.4} with log model (rss {:.2e} vs plain {:.2e}); radial n = 3 plain exponent {:.4}",
        fit.exponent, fit.rss_log, fit.rss_plain, rf.exponent
    ))
}

fn c8(ledger: &Ledger) -> Outcome {
    let bad: Vec<&Solved> = ledger.solved.iter().filter(|s| s.observed > s.classical + s.residual).collect();
    if let Some(b) = bad.first() {
        return Err(format!("{} violations; first {}: {:.6e} > {:.6e} + {:.1e}", bad.len(), b.label, b.observed, b.classical, b.residual));
    }
    let worst = ledger.solved.iter().map(|s| s.observed / s.classical).filter(|r| r.is_finite()).fold(0.0, f64::max);
    Ok(format!("{} instances, max gap / bound = {worst:.4}", ledger.solved.len()))
}

fn c9(ledger: &mut Ledger, store: &Reports) -> Outcome {
    let s = random_scenario();
    let phi = s.instance().map_err(e)?.phi;
    let m = [[1.0, 0.5], [0.0, 1.0]];
    // Slopes transform by M^-T.
    let frame = [[1.0, 0.0], [-0.5, 1.0]];
    let nodes = Arc::new(phi.nodes().map_affine(m, [0.0, 0.0]).map_err(e)?);
    let phi_t = PLConvexFunction::lower_hull(nodes.clone(), phi.values().to_vec()).map_err(e)?;
    let diam_ratio = nodes.diameter() / phi.nodes().diameter();
    let a = MassScale::from_a(0.15, 2).map_err(e)?;
    let ctx = ExtremalContext::new(&phi_t, a, s.estimates).with_slope_frame(frame).map_err(e)?;
    let mut worst = 0.0f64;
    let mut count = 0;
    for &seed in &s.seeds {
        let (mu, queries) = random_cell(&phi, a, seed, s.queries).map_err(e)?;
        // det M = 1, so the measure carries over atom by atom.
        let u = solve_perturbed(&phi_t, &mu, &s.estimates.obstacle.solver).map_err(e)?;
        ledger.record(format!("sheared seed={seed}"), &u.function, &phi_t, u.residual)?;
        for y in queries {
            let r0 = store.get(&(seed, y)).ok_or_else(|| format!("no original report for seed {seed} y {y}"))?;
            let r1 = ctx.report(&u.function, y).map_err(e)?;
            let pairs = [
                ("lower", r0.lower, r1.lower),
                ("upper", r0.upper, r1.upper),
                ("observed", r0.observed, r1.observed),
                ("phi", r0.phi_y, r1.phi_y),
                ("classical", r0.classical_bound * diam_ratio, r1.classical_bound),
            ];
            for (name, x0, x1) in pairs {
                let d = (x0 - x1).abs();
                if d > 1e-9 {
                    return Err(format!("seed {seed} y {y}: {name} {x0:.12e} vs {x1:.12e}"));
                }
                worst = worst.max(d);
            }
            count += 1;
        }
    }
    Ok(format!("{count} reports reproduced under x -> (x + y/2, y), max deviation {worst:.2e}"))
}

fn c10(ledger: &mut Ledger) -> Outcome {
    let phi = quadratic(33, 128);
    let ns = phi.nodes().clone();
    let (a, rho) = (0.2, 0.25);
    let x0 = ns.nearest([0.0, 0.0]);
    // Far enough that the moved mass leaves the ellipse of radius rho a.
    let x1 = ns.nearest([10.0 * rho * a, 0.0]);
    let total = MassScale::from_a(a, 2).map_err(e)?.total_variation;
    let mut ratios = Vec::new();
    let mut deficits = Vec::new();
    for t in [0.0, 0.25, 0.5] {
        let mu = SignedDiscreteMeasure::from_atoms([(x0, (1.0 - t) * total), (x1, t * total)]);
        let u = solve_perturbed(&phi, &mu, &SolverConfig::default()).map_err(e)?;
        ledger.record(format!("split t={t}"), &u.function, &phi, u.residual)?;
        let d = stability_diagnostic(&u.function, &phi, &mu, x0, rho, [[1.0, 0.0], [0.0, 1.0]]).map_err(e)?;
        ratios.push(d.pointwise_ratio);
        deficits.push(d.normalized_deficit);
    }
    if !ratios.windows(2).all(|w| w[0] < w[1]) {
        return Err(format!("pointwise ratio not increasing: {ratios:?}"));
    }
    Ok(format!("pointwise ratio {:.4} -> {:.4} -> {:.4} at deficits {deficits:.3?}", ratios[0], ratios[1], ratios[2]))
}

fn main() {
    let mut ledger = Ledger::default();
    let mut store = Reports::new();
    let mut lines: Vec<(usize, bool, String)> = Vec::new();
    let mut report = |k: usize, budget: Option<Duration>, f: &mut dyn FnMut() -> Outcome| {
        eprintln!("running criterion {k}");
        let t = Instant::now();
        let out = f();
        let dt = t.elapsed();
        let out = match (out, budget) {
            (Ok(m), Some(b)) if dt > b => Err(format!("{m}; took {dt:.1?}, budget {b:.0?}")),
            (o, _) => o,
        };
        let (ok, m) = match out {
            Ok(m) => (true, m),
            Err(m) => (false, m),
        };
        lines.push((k, ok, format!("{m} [{dt:.1?}]")));
    };
    let s = Duration::from_secs;
    report(1, Some(s(1)), &mut c1);
    report(2, Some(s(1)), &mut c2);
    report(3, Some(s(1)), &mut c3);
    report(4, Some(s(120)), &mut || c4(&mut ledger));
    report(5, Some(s(120)), &mut || c5(&mut ledger));
    report(6, Some(s(600)), &mut || c6(&mut ledger, &mut store));
    report(7, Some(s(600)), &mut || c7(&mut ledger));
    report(9, None, &mut || c9(&mut ledger, &store));
    report(10, None, &mut || c10(&mut ledger));
    // Last, so that it sees every instance solved above.
    report(8, None, &mut || c8(&ledger));
    lines.sort_by_key(|l| l.0);
    for (k, ok, m) in &lines {
        println!("criterion {k:>2}: {}  {m}", if *ok { "PASS" } else { "FAIL" });
    }
    let failed = lines.iter().filter(|l| !l.1).count();
    if failed > 0 {
        println!("{failed} of {} criteria failed", lines.len());
        std::process::exit(1);
    }
    println!("all {} criteria passed", lines.len());
}
