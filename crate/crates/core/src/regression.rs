//! Least-squares exponent fits on log-log data.

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub max_residual: f64,
}

/// Fits `log2(value) = slope * log2(R) + intercept` over `(R, value)` pairs.
pub fn fit_exponent(samples: &[(f64, f64)]) -> Result<ExponentFit> {
    let mut xs: Vec<f64> = samples.iter().map(|s| s.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if samples.len() < 3 || xs.len() < samples.len() || samples.iter().any(|s| !(s.0 > 0.0)) {
        return Err(Error::TooFewSamples(xs.len()));
    }
    if let Some(&(r, value)) = samples.iter().find(|s| !(s.1 > 0.0) || !s.1.is_finite()) {
        return Err(Error::NonPositive { r, value });
    }
    let pts: Vec<(f64, f64)> = samples.iter().map(|&(r, v)| (r.log2(), v.log2())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let max_residual = pts.iter().map(|p| (p.1 - slope * p.0 - intercept).abs()).fold(0.0, f64::max);
    Ok(ExponentFit { slope, intercept, max_residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scales(lo: i32, hi: i32) -> Vec<f64> {
        (lo..=hi).map(|k| 2f64.powi(k)).collect()
    }

    #[test]
    fn exact_power_law() {
        let s: Vec<_> = scales(6, 10).into_iter().map(|r| (r, r.sqrt())).collect();
        let fit = fit_exponent(&s).unwrap();
        assert_abs_diff_eq!(fit.slope, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.max_residual, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn constant_has_zero_slope() {
        let s: Vec<_> = scales(6, 10).into_iter().map(|r| (r, 3.7)).collect();
        assert_abs_diff_eq!(fit_exponent(&s).unwrap().slope, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn log_factor_inflates_slope() {
        // the log factor adds the least-squares slope of log2(k) on k = 6..12
        let ks: Vec<f64> = (6..=12).map(f64::from).collect();
        let mk = ks.iter().sum::<f64>() / 7.0;
        let ml = ks.iter().map(|k| k.log2()).sum::<f64>() / 7.0;
        let extra = ks.iter().map(|k| (k - mk) * (k.log2() - ml)).sum::<f64>()
            / ks.iter().map(|k| (k - mk).powi(2)).sum::<f64>();
        let s: Vec<_> = scales(6, 12).into_iter().map(|r| (r, r.sqrt() * r.log2())).collect();
        let slope = fit_exponent(&s).unwrap().slope;
        assert_abs_diff_eq!(slope, 0.5 + extra, epsilon = 1e-12);
        assert_abs_diff_eq!(slope, 0.66522, epsilon = 1e-5);
    }

    #[test]
    fn errors() {
        assert!(matches!(fit_exponent(&[(2.0, 1.0), (4.0, 1.0)]), Err(Error::TooFewSamples(_))));
        assert!(matches!(fit_exponent(&[(2.0, 1.0), (4.0, 1.0), (4.0, 2.0)]), Err(Error::TooFewSamples(_))));
        assert!(matches!(fit_exponent(&[(2.0, 1.0), (4.0, 0.0), (8.0, 2.0)]), Err(Error::NonPositive { .. })));
    }
}
