//! Least-squares rate fitting for time series.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub exponent: f64,
    pub log_prefactor: f64,
    pub fit_window: (f64, f64),
    /// Coefficient of determination, clamped to [0, 1].
    pub goodness: f64,
    pub boundedness_ratio: f64,
}

/// Ordinary least squares y ≈ a + b x; returns (a, b, r²).
pub fn linear_regression(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let a = my - b * mx;
    let ss_res: f64 = x.iter().zip(y).map(|(p, q)| (q - a - b * p).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    (a, b, r2.clamp(0.0, 1.0))
}

fn window_samples(series: &[(f64, f64)], window: (f64, f64)) -> Vec<(f64, f64)> {
    series.iter().copied().filter(|&(t, _)| t >= window.0 && t <= window.1).collect()
}

/// Fit y ≈ C (1+t)^p on the window in log–log coordinates.
pub fn fit_algebraic_decay(series: &[(f64, f64)], window: (f64, f64)) -> Result<RateFit> {
    if series.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::InvalidInput("sample times must be strictly increasing".into()));
    }
    if (1.0 + window.1) / (1.0 + window.0) < 10.0 - 1e-12 {
        return Err(Error::InvalidInput("fit window spans less than one decade in 1+t".into()));
    }
    let pts = window_samples(series, window);
    if pts.len() < 8 {
        return Err(Error::InvalidInput(format!("fit window has {} < 8 samples", pts.len())));
    }
    if pts.iter().any(|&(_, y)| !(y > 0.0) || !y.is_finite()) {
        return Err(Error::InvalidInput("series not positive on the fit window".into()));
    }
    let x: Vec<f64> = pts.iter().map(|&(t, _)| (1.0 + t).ln()).collect();
    let y: Vec<f64> = pts.iter().map(|&(_, v)| v.ln()).collect();
    let (a, b, r2) = linear_regression(&x, &y);
    Ok(RateFit {
        exponent: b,
        log_prefactor: a,
        fit_window: window,
        goodness: r2,
        boundedness_ratio: boundedness_ratio(&pts),
    })
}

/// sup over the last decade of (1+t) divided by sup over the first decade.
pub fn boundedness_ratio(pts: &[(f64, f64)]) -> f64 {
    let t0 = pts.first().map_or(0.0, |p| p.0);
    let t1 = pts.last().map_or(0.0, |p| p.0);
    let first_end = (1.0 + t0) * 10.0 - 1.0;
    let last_start = (1.0 + t1) / 10.0 - 1.0;
    let sup = |lo: f64, hi: f64| {
        pts.iter()
            .filter(|&&(t, _)| t >= lo && t <= hi)
            .map(|&(_, y)| y.abs())
            .fold(0.0, f64::max)
    };
    let a = sup(t0, first_end);
    let b = sup(last_start, t1);
    if a > 0.0 {
        b / a
    } else if b == 0.0 {
        1.0
    } else {
        f64::INFINITY
    }
}

/// Fit y ≈ C e^{r t} on the window; returns (r, ln C, r²).
pub fn fit_exponential_rate(series: &[(f64, f64)], window: (f64, f64)) -> Result<(f64, f64, f64)> {
    let pts = window_samples(series, window);
    if pts.len() < 3 {
        return Err(Error::InvalidInput("too few samples for exponential fit".into()));
    }
    if pts.iter().any(|&(_, y)| !(y > 0.0)) {
        return Err(Error::InvalidInput("series not positive on the fit window".into()));
    }
    let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let (a, b, r2) = linear_regression(&x, &y);
    Ok((b, a, r2))
}

/// Log-spaced sample times on [t0, t1].
pub fn log_times(t0: f64, t1: f64, count: usize) -> Vec<f64> {
    let (a, b) = ((1.0 + t0).ln(), (1.0 + t1).ln());
    (0..count)
        .map(|k| (a + (b - a) * k as f64 / (count - 1) as f64).exp() - 1.0)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn series(f: impl Fn(f64) -> f64) -> Vec<(f64, f64)> {
        log_times(10.0, 1000.0, 60).into_iter().map(|t| (t, f(t))).collect()
    }

    #[test]
    fn inverse_square_root() {
        let r = fit_algebraic_decay(&series(|t| (1.0 + t).powf(-0.5)), (10.0, 1000.0)).unwrap();
        assert!((r.exponent + 0.5).abs() < 0.01);
        assert!(r.goodness > 0.999);
    }

    #[test]
    fn constant_series() {
        let r = fit_algebraic_decay(&series(|_| 3.0), (10.0, 1000.0)).unwrap();
        assert!(r.exponent.abs() < 0.01);
        assert!((r.boundedness_ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn oscillatory_contamination() {
        // Dense sampling; the oscillation averages out in least squares.
        let s: Vec<(f64, f64)> = (0..4000)
            .map(|k| 10.0 + k as f64 * 990.0 / 3999.0)
            .map(|t| (t, (1.0 + t).powf(-0.25) * (1.0 + 0.1 * t.sin())))
            .collect();
        let r = fit_algebraic_decay(&s, (10.0, 1000.0)).unwrap();
        assert!((r.exponent + 0.25).abs() < 0.03);
    }

    #[test]
    fn rejects_short_windows() {
        let s = series(|t| 1.0 / (1.0 + t));
        assert!(fit_algebraic_decay(&s, (10.0, 50.0)).is_err());
        let few: Vec<(f64, f64)> = log_times(10.0, 1000.0, 5).into_iter().map(|t| (t, 1.0)).collect();
        assert!(fit_algebraic_decay(&few, (10.0, 1000.0)).is_err());
        let neg = series(|t| t.sin());
        assert!(fit_algebraic_decay(&neg, (10.0, 1000.0)).is_err());
    }

    #[test]
    fn exponential_rate() {
        let s: Vec<(f64, f64)> = (0..50).map(|k| k as f64 * 0.2).map(|t| (t, 2.0 * (-0.7 * t).exp())).collect();
        let (r, _, g) = fit_exponential_rate(&s, (0.0, 10.0)).unwrap();
        assert!((r + 0.7).abs() < 1e-12);
        assert!(g > 0.999);
    }

    proptest! {
        #[test]
        fn planted_exponent(p in -2.0f64..1.0, c in 0.1f64..10.0) {
            let r = fit_algebraic_decay(&series(|t| c * (1.0 + t).powf(p)), (10.0, 1000.0)).unwrap();
            prop_assert!((r.exponent - p).abs() < 0.01);
            prop_assert!((r.log_prefactor - c.ln()).abs() < 1e-8);
            prop_assert!((0.0..=1.0).contains(&r.goodness));
        }
    }
}
