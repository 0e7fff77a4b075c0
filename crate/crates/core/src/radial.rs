//! Radially symmetric model solutions on balls in dimension `n >= 2`.
//!
//! With `phi = |x|^2 / 2` on `B_R`, the point-mass solution has radial profile
//! `rho(r) = int_0^r (s^n + a^n)^(1/n) ds` and the flat-core obstacle solution has
//! `rho(r) = int_0^r max(s^n - a^n, 0)^(1/n) ds`. Everything here reduces to 1-D quadrature.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum RadialError {
    #[error("d_n0 needs n >= 3 (got {0}); in two dimensions the expansion has a log term")]
    DimensionTooLow(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileKind {
    Singularity,
    Obstacle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    pub n: usize,
    pub r_max: f64,
    pub a: f64,
    pub kind: ProfileKind,
    /// `(r, rho(r))` on a uniform grid starting at `r = 0`.
    pub samples: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticRecord {
    pub n: usize,
    pub a: f64,
    pub offset: f64,
    pub predicted: f64,
    pub error: f64,
}

impl AsymptoticRecord {
    pub fn new(n: usize, a: f64, offset: f64, predicted: f64) -> Self {
        Self { n, a, offset, predicted, error: offset - predicted }
    }

    pub const CSV_HEADER: &'static str = "n,a,offset,predicted,error";

    pub fn csv_row(&self) -> String {
        format!("{},{:.16e},{:.16e},{:.16e},{:.16e}", self.n, self.a, self.offset, self.predicted, self.error)
    }
}

pub fn records_to_csv(records: &[AsymptoticRecord]) -> String {
    let mut s = String::from(AsymptoticRecord::CSV_HEADER);
    s.push('\n');
    for r in records {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

// Gauss-Kronrod 7/15 nodes and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> (f64, f64) {
    let c = 0.5 * (lo + hi);
    let h = 0.5 * (hi - lo);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive Gauss-Kronrod quadrature to absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> f64 {
    if hi <= lo {
        return if hi == lo { 0.0 } else { -integrate(f, hi, lo, tol) };
    }
    let mut total = 0.0;
    let mut stack = vec![(lo, hi, tol, 0u32)];
    while let Some((a, b, t, depth)) = stack.pop() {
        let (v, err) = gk15(&f, a, b);
        if err <= t.max(1e-300) || depth >= 60 || b - a <= 1e-15 * (1.0 + a.abs()) {
            total += v;
        } else {
            let m = 0.5 * (a + b);
            stack.push((a, m, 0.5 * t, depth + 1));
            stack.push((m, b, 0.5 * t, depth + 1));
        }
    }
    total
}

const QUAD_TOL: f64 = 1e-13;

/// `(s^n + a^n)^(1/n) - s` without cancellation.
fn excess(n: usize, a: f64, s: f64) -> f64 {
    let nf = n as f64;
    if s > a {
        s * ((a / s).powf(nf).ln_1p() / nf).exp_m1()
    } else {
        (s.powf(nf) + a.powf(nf)).powf(1.0 / nf) - s
    }
}

/// `s - max(s^n - a^n, 0)^(1/n)` without cancellation.
fn deficit(n: usize, a: f64, s: f64) -> f64 {
    let nf = n as f64;
    if s <= a {
        s
    } else if s > 2.0 * a {
        -s * ((-(a / s).powf(nf)).ln_1p() / nf).exp_m1()
    } else {
        s - (s.powf(nf) - a.powf(nf)).powf(1.0 / nf)
    }
}

fn check(n: usize, a: f64) -> Result<(), RadialError> {
    if n < 2 {
        return Err(RadialError::InvalidArgument(format!("dimension {n} < 2")));
    }
    if !(a >= 0.0 && a.is_finite()) {
        return Err(RadialError::InvalidArgument(format!("scale {a}")));
    }
    Ok(())
}

/// `int_0^r (s^n + a^n)^(1/n) ds`, or the obstacle profile, at a single radius.
pub fn model_value(n: usize, a: f64, kind: ProfileKind, r: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    match kind {
        ProfileKind::Singularity => 0.5 * r * r + integrate(|s| excess(n, a, s), 0.0, r, QUAD_TOL),
        ProfileKind::Obstacle => {
            if r <= a {
                return 0.0;
            }
            let core = integrate(|s| deficit(n, a, s), a, r, QUAD_TOL);
            0.5 * r * r - 0.5 * a * a - core
        }
    }
}

/// Slope `rho'(r)` of the model profile.
pub fn model_slope(n: usize, a: f64, kind: ProfileKind, r: f64) -> f64 {
    let nf = n as f64;
    match kind {
        ProfileKind::Singularity => r + excess(n, a, r),
        ProfileKind::Obstacle => (r.powf(nf) - a.powf(nf)).max(0.0).powf(1.0 / nf),
    }
}

pub fn model_profile(n: usize, a: f64, kind: ProfileKind, r_max: f64, grid: usize) -> Result<RadialProfile, RadialError> {
    check(n, a)?;
    if !(r_max > 0.0 && r_max.is_finite()) || grid < 2 {
        return Err(RadialError::InvalidArgument(format!("r_max {r_max}, grid {grid}")));
    }
    let dr = r_max / (grid - 1) as f64;
    let samples = (0..grid)
        .map(|k| {
            let r = if k + 1 == grid { r_max } else { k as f64 * dr };
            (r, model_value(n, a, kind, r))
        })
        .collect();
    Ok(RadialProfile { n, r_max, a, kind, samples })
}

impl RadialProfile {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("r,rho\n");
        for (r, v) in &self.samples {
            let _ = writeln!(s, "{r:.16e},{v:.16e}");
        }
        s
    }

    /// Conjugate `sup_r (r s - rho(r))` of the sampled profile.
    pub fn legendre(&self, s: f64) -> f64 {
        self.samples.iter().map(|(r, v)| r * s - v).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `Gamma(1/n) Gamma((n-2)/n) / (2 n Gamma((n-1)/n))`.
pub fn dn0(n: usize) -> Result<f64, RadialError> {
    if n < 3 {
        return Err(RadialError::DimensionTooLow(n));
    }
    let nf = n as f64;
    Ok(gamma(1.0 / nf) * gamma((nf - 2.0) / nf) / (2.0 * nf * gamma((nf - 1.0) / nf)))
}

/// `int_0^r_max ((r^n + 1)^(1/n) - r) dr` plus the leading tail `r_max^(2-n) / (n (n-2))`.
pub fn dn0_quadrature(n: usize, r_max: f64) -> Result<f64, RadialError> {
    if n < 3 {
        return Err(RadialError::DimensionTooLow(n));
    }
    let nf = n as f64;
    // Split at 1 and then geometrically so each panel sees a smooth, comparable integrand.
    let mut s = integrate(|r| excess(n, 1.0, r), 0.0, 1.0, 1e-15);
    let mut lo = 1.0;
    while lo < r_max {
        let hi = (2.0 * lo).min(r_max);
        s += integrate(|r| excess(n, 1.0, r), lo, hi, 1e-16);
        lo = hi;
    }
    Ok(s + r_max.powf(2.0 - nf) / (nf * (nf - 2.0)))
}

fn offsets_check(n: usize, r: f64, a: f64) -> Result<(), RadialError> {
    check(n, a)?;
    if !(r > 0.0 && a < r) {
        return Err(RadialError::InvalidArgument(format!("need 0 <= a < R (a = {a}, R = {r})")));
    }
    Ok(())
}

/// `u_a(0) - phi(0) = -int_0^R ((s^n + a^n)^(1/n) - s) ds` for the point mass at the centre.
pub fn radial_dirichlet_offset(n: usize, r: f64, a: f64) -> Result<f64, RadialError> {
    offsets_check(n, r, a)?;
    if a == 0.0 {
        return Ok(0.0);
    }
    let split = (4.0 * a).min(r);
    Ok(-(integrate(|s| excess(n, a, s), 0.0, split, QUAD_TOL) + integrate(|s| excess(n, a, s), split, r, QUAD_TOL)))
}

/// `v_a(0) - phi(0) = int_0^R (s - max(s^n - a^n, 0)^(1/n)) ds` for the flat obstacle at `p = 0`.
pub fn radial_obstacle_offset(n: usize, r: f64, a: f64) -> Result<f64, RadialError> {
    offsets_check(n, r, a)?;
    if a == 0.0 {
        return Ok(0.0);
    }
    let split = (4.0 * a).min(r);
    Ok(0.5 * a * a + integrate(|s| deficit(n, a, s), a, split, QUAD_TOL) + integrate(|s| deficit(n, a, s), split, r, QUAD_TOL))
}

/// Closed form of the two-dimensional obstacle offset on the unit disk.
pub fn obstacle_offset_2d_unit(a: f64) -> f64 {
    let c = (1.0 - a * a).sqrt();
    0.5 - 0.5 * (c - a * a * ((1.0 + c) / a).ln())
}

/// Leading-order prediction: `-/+ d_n0 a^2` for `n >= 3`, `-/+ a^2 log(R/a) / 2` for `n = 2`.
pub fn predicted_offset(n: usize, r: f64, a: f64, kind: ProfileKind) -> Result<f64, RadialError> {
    let mag = if n == 2 { 0.5 * a * a * (r / a).ln() } else { dn0(n)? * a * a };
    Ok(match kind {
        ProfileKind::Singularity => -mag,
        ProfileKind::Obstacle => mag,
    })
}

pub fn asymptotic_record(n: usize, r: f64, a: f64, kind: ProfileKind) -> Result<AsymptoticRecord, RadialError> {
    let offset = match kind {
        ProfileKind::Singularity => radial_dirichlet_offset(n, r, a)?,
        ProfileKind::Obstacle => radial_obstacle_offset(n, r, a)?,
    };
    Ok(AsymptoticRecord::new(n, a, offset, predicted_offset(n, r, a, kind)?))
}

/// Two-dimensional ratio band `[1 - c/|log a|, 1 + c/|log a|]`.
pub fn log_band(a: f64, c: f64) -> (f64, f64) {
    let l = a.ln().abs();
    (1.0 - c / l, 1.0 + c / l)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_integrates_smooth_and_kinked() {
        assert!((integrate(|x| x.sin(), 0.0, std::f64::consts::PI, 1e-13) - 2.0).abs() < 1e-13);
        assert!((integrate(|x: f64| x.abs().sqrt(), -1.0, 1.0, 1e-12) - 4.0 / 3.0).abs() < 1e-11);
        assert_eq!(integrate(|x| x, 1.0, 1.0, 1e-12), 0.0);
    }

    #[test]
    fn profiles_at_the_origin_and_in_the_core() {
        assert_eq!(model_value(3, 0.4, ProfileKind::Singularity, 0.0), 0.0);
        for r in [0.1, 0.25, 0.4] {
            assert_eq!(model_value(2, 0.4, ProfileKind::Obstacle, r), 0.0);
        }
        for kind in [ProfileKind::Singularity, ProfileKind::Obstacle] {
            for r in [0.3, 1.0, 2.5] {
                assert!((model_value(4, 0.0, kind, r) - 0.5 * r * r).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn unit_singularity_in_the_plane() {
        let exact = 0.5 * (2f64.sqrt() + (1.0 + 2f64.sqrt()).ln());
        assert!((model_value(2, 1.0, ProfileKind::Singularity, 1.0) - exact).abs() < 1e-13);
    }

    #[test]
    fn scaling_identity() {
        for n in [2, 3, 5] {
            for a in [0.05, 0.3, 2.0] {
                for x in [0.2, 1.0, 3.7] {
                    let lhs = model_value(n, a, ProfileKind::Singularity, a * x);
                    let rhs = a * a * model_value(n, 1.0, ProfileKind::Singularity, x);
                    assert!((lhs - rhs).abs() < 1e-10, "n {n} a {a} x {x}");
                }
            }
        }
    }

    #[test]
    fn mass_law_by_finite_differences() {
        let h = 1e-5;
        for n in [2, 3, 4] {
            let a: f64 = 0.3;
            let nf = n as f64;
            for r in [0.1, 0.5, 0.9] {
                let d = |k| (model_value(n, a, k, r + h) - model_value(n, a, k, r - h)) / (2.0 * h);
                let ds = d(ProfileKind::Singularity);
                assert!((ds.powf(nf) - (r.powf(nf) + a.powf(nf))).abs() < 1e-6);
                if r > a + h {
                    let dob = d(ProfileKind::Obstacle);
                    assert!((dob.powf(nf) - (r.powf(nf) - a.powf(nf))).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn profile_is_convex_nondecreasing_and_serializes() {
        let p = model_profile(3, 0.2, ProfileKind::Obstacle, 1.0, 41).unwrap();
        assert_eq!(p.samples.len(), 41);
        for w in p.samples.windows(3) {
            assert!(w[1].1 >= w[0].1);
            assert!(w[2].1 - 2.0 * w[1].1 + w[0].1 >= -1e-14);
        }
        let csv = p.to_csv();
        assert!(csv.starts_with("r,rho\n"));
        assert_eq!(csv.lines().count(), 42);
        assert!(model_profile(1, 0.2, ProfileKind::Obstacle, 1.0, 5).is_err());
    }

    #[test]
    fn conjugate_of_singular_profile_is_obstacle_profile() {
        for n in [2, 3] {
            let a = 0.3;
            let p = model_profile(n, a, ProfileKind::Singularity, 1.0, 20001).unwrap();
            let s_max = model_slope(n, a, ProfileKind::Singularity, 1.0);
            for k in 0..=50 {
                let s = s_max * k as f64 / 50.0;
                let lhs = p.legendre(s);
                let rhs = model_value(n, a, ProfileKind::Obstacle, s);
                assert!((lhs - rhs).abs() < 1e-8, "n {n} s {s}: {lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn dn0_matches_quadrature() {
        for n in 3..=5 {
            let g = dn0(n).unwrap();
            let q = dn0_quadrature(n, 1e4).unwrap();
            assert!((g / q - 1.0).abs() < 1e-8, "n {n}: {g} vs {q}");
        }
        let g3 = statrs::function::gamma::gamma(1.0 / 3.0);
        assert!((dn0(3).unwrap() - g3 * g3 / (6.0 * statrs::function::gamma::gamma(2.0 / 3.0))).abs() < 1e-14);
        assert_eq!(dn0(2), Err(RadialError::DimensionTooLow(2)));
    }

    #[test]
    fn three_dimensional_offsets() {
        let d = dn0(3).unwrap();
        for a in [0.1, 0.05, 0.025] {
            assert!((radial_dirichlet_offset(3, 1.0, a).unwrap() + d * a * a).abs() <= 2.0 * a.powi(3));
            assert!((radial_obstacle_offset(3, 1.0, a).unwrap() - d * a * a).abs() <= 2.0 * a.powi(3));
        }
        assert_eq!(radial_dirichlet_offset(3, 1.0, 0.0).unwrap(), 0.0);
        assert_eq!(radial_obstacle_offset(3, 1.0, 0.0).unwrap(), 0.0);
        assert!(radial_obstacle_offset(3, 1.0, 1.5).is_err());
    }

    #[test]
    fn planar_offsets_follow_log_law() {
        let a = 0.05f64;
        let l = a.ln().abs();
        let (lo, hi) = log_band(a, 2.0);
        let v = radial_dirichlet_offset(2, 1.0, a).unwrap() / (-0.5 * a * a * l);
        assert!(v >= lo && v <= hi, "{v}");
        for a in [0.2, 0.1, 0.01] {
            let q = radial_obstacle_offset(2, 1.0, a).unwrap();
            assert!((q - obstacle_offset_2d_unit(a)).abs() < 1e-10, "a {a}");
        }
    }

    #[test]
    fn offsets_converge_together() {
        let d = dn0(3).unwrap();
        let mut last = f64::INFINITY;
        for k in 0..5 {
            let a = 0.1 * 0.5f64.powi(k);
            let u = radial_dirichlet_offset(3, 1.0, a).unwrap().abs();
            let v = radial_obstacle_offset(3, 1.0, a).unwrap();
            let err = (u / v - 1.0).abs();
            assert!(err < last);
            assert!(((u / (d * a * a)) - 1.0).abs() < 3.0 * a);
            last = err;
        }
    }

    #[test]
    fn stable_under_rescaling_of_a() {
        // Constant measured once on this grid and frozen.
        const C3: f64 = 2.0;
        let a = 0.2;
        for sigma in [0.1, -0.1] {
            for k in 0..=20 {
                let x = k as f64 * 0.1;
                let w1 = model_value(3, (1.0 + sigma) * a, ProfileKind::Singularity, x);
                let w0 = model_value(3, a, ProfileKind::Singularity, x);
                assert!((w1 - w0).abs() <= C3 * sigma.abs() * a * a);
            }
        }
    }

    #[test]
    fn records_and_csv() {
        let r = asymptotic_record(3, 1.0, 0.1, ProfileKind::Singularity).unwrap();
        assert_eq!(r.error, r.offset - r.predicted);
        let csv = records_to_csv(&[r]);
        assert!(csv.starts_with("n,a,offset,predicted,error\n3,1.0000000000000001e-1,"));
        let two = asymptotic_record(2, 1.0, 0.1, ProfileKind::Obstacle).unwrap();
        assert!((two.predicted - 0.5 * 0.01 * 10f64.ln()).abs() < 1e-15);
    }
}
