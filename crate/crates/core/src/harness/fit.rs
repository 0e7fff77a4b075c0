use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::radial::AsymptoticRecord;

/// Power-law fits of `gap` against `a`, with and without the planar log factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// Exponent of the selected model.
    pub exponent: f64,
    /// The model `C a^e (|log a| + 1)` fits better than `C a^e`.
    pub log_correction: bool,
    pub rss_plain: f64,
    pub rss_log: f64,
    pub exponent_plain: f64,
    pub exponent_log: f64,
}

/// Least-squares line through `(x, y)`; returns slope, intercept, residual sum of squares.
fn line_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let m = x.len() as f64;
    let mx = x.iter().sum::<f64>() / m;
    let my = y.iter().sum::<f64>() / m;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let rss = x.iter().zip(y).map(|(a, b)| (b - icpt - slope * a).powi(2)).sum();
    (slope, icpt, rss)
}

/// Fits `log gap` against `log a` over `(a, gap)` points. Needs three points whose scales
/// span a factor of at least 4 and positive gaps.
pub fn rate_fit(points: &[(f64, f64)]) -> Result<RateFit, HarnessError> {
    if points.len() < 3 {
        return Err(HarnessError::InsufficientData(format!("{} points, need 3", points.len())));
    }
    if points.iter().any(|&(a, g)| !(a > 0.0 && a < 1.0 && g > 0.0 && g.is_finite())) {
        return Err(HarnessError::InsufficientData("scales must lie in (0, 1) with positive gaps".into()));
    }
    let lo = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.0).fold(0.0, f64::max);
    if hi < 4.0 * lo * (1.0 - 1e-12) {
        return Err(HarnessError::InsufficientData(format!("scales span a factor {} < 4", hi / lo)));
    }
    let x: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let ylog: Vec<f64> = points.iter().map(|p| p.1.ln() - (p.0.ln().abs() + 1.0).ln()).collect();
    let (exponent_plain, _, rss_plain) = line_fit(&x, &y);
    let (exponent_log, _, rss_log) = line_fit(&x, &ylog);
    let log_correction = rss_log < rss_plain;
    Ok(RateFit {
        exponent: if log_correction { exponent_log } else { exponent_plain },
        log_correction,
        rss_plain,
        rss_log,
        exponent_plain,
        exponent_log,
    })
}

/// [`rate_fit`] on `|offset|` of radial or grid records.
pub fn rate_fit_records(records: &[AsymptoticRecord]) -> Result<RateFit, HarnessError> {
    rate_fit(&records.iter().map(|r| (r.a, r.offset.abs())).collect::<Vec<_>>())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_laws() {
        for n in [2.0, 3.0] {
            let pts: Vec<_> = [0.2, 0.1, 0.05, 0.025].iter().map(|&a: &f64| (a, a.powf(n))).collect();
            let f = rate_fit(&pts).unwrap();
            assert!((f.exponent - n).abs() < 1e-10);
            assert!(!f.log_correction);
            assert!(f.rss_plain < 1e-25);
        }
    }

    #[test]
    fn log_factor_is_detected() {
        let pts: Vec<_> = [0.2, 0.1, 0.05].iter().map(|&a: &f64| (a, 0.7 * a * a * (a.ln().abs() + 1.0))).collect();
        let f = rate_fit(&pts).unwrap();
        assert!(f.log_correction);
        assert!((f.exponent - 2.0).abs() < 1e-10);
        assert!(f.exponent_plain < 1.8);
    }

    #[test]
    fn insufficient_data() {
        assert!(rate_fit(&[(0.2, 1.0), (0.1, 0.5)]).is_err());
        assert!(rate_fit(&[(0.2, 1.0), (0.15, 0.5), (0.1, 0.2)]).is_err());
        assert!(rate_fit(&[(0.2, 1.0), (0.1, 0.0), (0.05, 0.2)]).is_err());
    }
}
