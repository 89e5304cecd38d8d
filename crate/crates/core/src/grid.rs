//! Periodic grids, sampled fields and Fourier-side operations.

use crate::error::{Error, Result};
use crate::linalg::{c64, cr};
use rustfft::FftPlanner;
use std::cell::RefCell;
use std::f64::consts::PI;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Forward DFT normalized so that coefficient k satisfies f(x_m) = Σ_k ĉ_k e^{2πikm/N}.
pub fn fft_forward(data: &mut [c64]) {
    let n = data.len();
    let plan = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n));
    plan.process(data);
    let s = 1.0 / n as f64;
    for z in data.iter_mut() {
        *z *= s;
    }
}

/// Inverse of [`fft_forward`].
pub fn fft_inverse(data: &mut [c64]) {
    let n = data.len();
    let plan = PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n));
    plan.process(data);
}

/// Signed wavenumber index of FFT slot `i` on `n` points; the Nyquist slot maps to −n/2.
pub fn wavenumber(i: usize, n: usize) -> i64 {
    if i < n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PeriodicGrid {
    pub num_points: usize,
    pub period: f64,
}

impl PeriodicGrid {
    pub fn new(num_points: usize, period: f64) -> Result<Self> {
        if num_points == 0 || num_points % 2 != 0 {
            return Err(Error::InvalidInput(format!("num_points must be even and positive, got {num_points}")));
        }
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::InvalidInput(format!("period must be positive, got {period}")));
        }
        Ok(Self { num_points, period })
    }

    pub fn spacing(&self) -> f64 {
        self.period / self.num_points as f64
    }

    pub fn node(&self, m: usize) -> f64 {
        m as f64 * self.spacing()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.num_points).map(|m| self.node(m)).collect()
    }

    /// Fundamental wavenumber 2π/X.
    pub fn kappa(&self) -> f64 {
        2.0 * PI / self.period
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    pub grid: PeriodicGrid,
    /// values[c][m] is component c at node m.
    pub values: Vec<Vec<c64>>,
}

impl SpectralField {
    pub fn new(grid: PeriodicGrid, values: Vec<Vec<c64>>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| v.len() != grid.num_points) {
            return Err(Error::InvalidInput("field shape does not match grid".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn from_real(grid: PeriodicGrid, values: Vec<Vec<f64>>) -> Result<Self> {
        let v = values.into_iter().map(|c| c.into_iter().map(cr).collect()).collect();
        Self::new(grid, v)
    }

    pub fn from_fn(grid: PeriodicGrid, n: usize, f: impl Fn(usize, f64) -> f64) -> Self {
        let values = (0..n)
            .map(|c| grid.nodes().into_iter().map(|x| cr(f(c, x))).collect())
            .collect();
        Self { grid, values }
    }

    pub fn components(&self) -> usize {
        self.values.len()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().flatten().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn real(&self, c: usize) -> Vec<f64> {
        self.values[c].iter().map(|z| z.re).collect()
    }

    /// Fourier coefficients per component (FFT slot order).
    pub fn coefficients(&self) -> Vec<Vec<c64>> {
        self.values
            .iter()
            .map(|v| {
                let mut w = v.clone();
                fft_forward(&mut w);
                w
            })
            .collect()
    }

    pub fn from_coefficients(grid: PeriodicGrid, coeffs: Vec<Vec<c64>>) -> Self {
        let values = coeffs
            .into_iter()
            .map(|mut w| {
                fft_inverse(&mut w);
                w
            })
            .collect();
        Self { grid, values }
    }

    /// Discrete L² norm over one period (all components).
    pub fn l2_norm(&self) -> f64 {
        let h = self.grid.spacing();
        (h * self.values.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>()).sqrt()
    }

    /// L² norm computed from the Fourier coefficients (Parseval).
    pub fn l2_norm_spectral(&self) -> f64 {
        let x = self.grid.period;
        (x * self.coefficients().iter().flatten().map(|z| z.norm_sqr()).sum::<f64>()).sqrt()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Evaluate component c at an arbitrary point by trigonometric interpolation.
    pub fn eval(&self, c: usize, x: f64) -> c64 {
        let coeffs = {
            let mut w = self.values[c].clone();
            fft_forward(&mut w);
            w
        };
        eval_trig(&coeffs, self.grid.kappa(), x)
    }

    /// Resample onto `m` points by zero padding / truncation in Fourier space.
    pub fn resample(&self, m: usize) -> Result<SpectralField> {
        let grid = PeriodicGrid::new(m, self.grid.period)?;
        let coeffs = self.coefficients().iter().map(|w| resample_coeffs(w, m)).collect();
        Ok(SpectralField::from_coefficients(grid, coeffs))
    }

    pub fn map(&self, f: impl Fn(usize, usize, c64) -> c64) -> SpectralField {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(c, v)| v.iter().enumerate().map(|(m, &z)| f(c, m, z)).collect())
            .collect();
        SpectralField { grid: self.grid.clone(), values }
    }

    pub fn sub(&self, other: &SpectralField) -> SpectralField {
        self.map(|c, m, z| z - other.values[c][m])
    }
}

/// Evaluate Σ ĉ_k e^{iκkx} with symmetric handling of the Nyquist slot.
pub fn eval_trig(coeffs: &[c64], kappa: f64, x: f64) -> c64 {
    let n = coeffs.len();
    let mut s = cr(0.0);
    for (i, &ck) in coeffs.iter().enumerate() {
        if n % 2 == 0 && i == n / 2 {
            let k = (n / 2) as f64;
            s += ck * cr((kappa * k * x).cos());
        } else {
            let k = wavenumber(i, n) as f64;
            s += ck * c64::from_polar(1.0, kappa * k * x);
        }
    }
    s
}

/// Zero-pad or truncate FFT-ordered coefficients to length `m` (Nyquist split symmetrically).
pub fn resample_coeffs(w: &[c64], m: usize) -> Vec<c64> {
    let n = w.len();
    let mut out = vec![cr(0.0); m];
    let half = n.min(m) / 2;
    for k in 0..half {
        out[k] = w[k];
    }
    for k in 1..half {
        out[m - k] = w[n - k];
    }
    if n == m {
        out[m / 2] = w[n / 2];
    } else if n < m {
        out[half] += 0.5 * w[n / 2];
        out[m - half] += 0.5 * w[n / 2];
    } else {
        out[m / 2] = w[m / 2] + w[n - m / 2];
    }
    out
}

/// Spectral derivative of the given order (0..=4).
pub fn fourier_diff(f: &SpectralField, order: u32) -> Result<SpectralField> {
    if order > 4 {
        return Err(Error::InvalidInput(format!("derivative order {order} > 4")));
    }
    if !f.is_finite() {
        return Err(Error::NonFinite("field"));
    }
    let n = f.grid.num_points;
    let kappa = f.grid.kappa();
    let coeffs = f
        .coefficients()
        .into_iter()
        .map(|mut w| {
            for (i, z) in w.iter_mut().enumerate() {
                if i == n / 2 && order % 2 == 1 {
                    *z = cr(0.0);
                    continue;
                }
                let k = if i == n / 2 { (n / 2) as f64 } else { wavenumber(i, n) as f64 };
                *z *= c64::new(0.0, kappa * k).powu(order);
            }
            w
        })
        .collect();
    Ok(SpectralField::from_coefficients(f.grid.clone(), coeffs))
}

/// Mean-zero antiderivative of a mean-zero field.
pub fn antiderivative(f: &SpectralField) -> SpectralField {
    let n = f.grid.num_points;
    let kappa = f.grid.kappa();
    let coeffs = f
        .coefficients()
        .into_iter()
        .map(|mut w| {
            for (i, z) in w.iter_mut().enumerate() {
                if i == 0 || i == n / 2 {
                    *z = cr(0.0);
                } else {
                    *z /= c64::new(0.0, kappa * wavenumber(i, n) as f64);
                }
            }
            w
        })
        .collect();
    SpectralField::from_coefficients(f.grid.clone(), coeffs)
}

/// (1/X)∫₀ˣ f dx per component, via the zeroth Fourier coefficient.
pub fn periodic_average(f: &SpectralField) -> Result<Vec<c64>> {
    if !f.is_finite() {
        return Err(Error::NonFinite("field"));
    }
    let n = f.grid.num_points as f64;
    Ok(f.values.iter().map(|v| v.iter().sum::<c64>() / n).collect())
}

/// Sobolev H^K norm computed from Fourier coefficients: Σ_k (1 + k²)^K |ĉ_k|² · X.
pub fn hk_norm(f: &SpectralField, k_index: u32) -> f64 {
    let n = f.grid.num_points;
    let kappa = f.grid.kappa();
    let x = f.grid.period;
    let mut s = 0.0;
    for w in f.coefficients() {
        for (i, z) in w.iter().enumerate() {
            let k = kappa * wavenumber(i, n) as f64;
            s += (1.0 + k * k).powi(k_index as i32) * z.norm_sqr();
        }
    }
    (s * x).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn diff_of_sine_is_cosine() {
        let x = 3.7;
        let g = PeriodicGrid::new(32, x).unwrap();
        let k = 2.0 * PI / x;
        let f = SpectralField::from_fn(g.clone(), 1, |_, t| (k * t).sin());
        let d = fourier_diff(&f, 1).unwrap();
        for (m, t) in g.nodes().iter().enumerate() {
            assert!((d.values[0][m].re - k * (k * t).cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn diff_of_constant_vanishes() {
        let g = PeriodicGrid::new(16, 1.0).unwrap();
        let f = SpectralField::from_fn(g, 2, |c, _| 3.0 + c as f64);
        assert!(fourier_diff(&f, 1).unwrap().sup_norm() < 1e-14);
    }

    #[test]
    fn diff_rejects_bad_input() {
        let g = PeriodicGrid::new(16, 1.0).unwrap();
        let f = SpectralField::from_fn(g.clone(), 1, |_, x| x);
        assert!(fourier_diff(&f, 5).is_err());
        let bad = SpectralField::from_fn(g, 1, |_, _| f64::NAN);
        assert!(fourier_diff(&bad, 1).is_err());
    }

    #[test]
    fn grid_rejects_odd() {
        assert!(PeriodicGrid::new(15, 1.0).is_err());
        assert!(PeriodicGrid::new(16, -1.0).is_err());
    }

    #[test]
    fn second_derivative_converges_spectrally() {
        // Independent route: the same function on twice the resolution.
        let f = |n: usize| {
            let g = PeriodicGrid::new(n, 1.0).unwrap();
            let s = SpectralField::from_fn(g, 1, |_, x| (2.0 * PI * x).sin().exp());
            fourier_diff(&s, 2).unwrap()
        };
        let a = f(128);
        let b = f(256);
        for m in 0..128 {
            assert!((a.values[0][m] - b.values[0][2 * m]).norm() < 1e-9 * (1.0 + b.values[0][2 * m].norm()));
        }
    }

    #[test]
    fn average_of_constant_and_harmonic() {
        let g = PeriodicGrid::new(24, 2.5).unwrap();
        let k = g.kappa();
        let f = SpectralField::from_fn(g, 2, |c, x| if c == 0 { 1.75 } else { (k * x).sin() });
        let a = periodic_average(&f).unwrap();
        assert!((a[0].re - 1.75).abs() < 1e-15);
        assert!(a[1].norm() < 1e-14);
    }

    #[test]
    fn interpolation_and_resampling() {
        let g = PeriodicGrid::new(32, 2.0).unwrap();
        let k = g.kappa();
        let f = SpectralField::from_fn(g, 1, |_, x| (k * x).cos() + 0.3 * (3.0 * k * x).sin());
        let x0 = 0.4321;
        let exact = (k * x0).cos() + 0.3 * (3.0 * k * x0).sin();
        assert!((f.eval(0, x0).re - exact).abs() < 1e-13);
        let up = f.resample(64).unwrap();
        assert!((up.values[0][1].re - ((k * 2.0 / 64.0).cos() + 0.3 * (3.0 * k * 2.0 / 64.0).sin())).abs() < 1e-13);
        let back = up.resample(32).unwrap();
        assert!(back.sub(&f).sup_norm() < 1e-13);
    }

    fn random_field(seed: u64, n: usize, x: f64) -> SpectralField {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let g = PeriodicGrid::new(n, x).unwrap();
        let v = (0..2).map(|_| (0..n).map(|_| c64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect()).collect();
        SpectralField::new(g, v).unwrap()
    }

    proptest! {
        #[test]
        fn parseval(seed in 0u64..1000, half in 4usize..64, x in 0.5f64..20.0) {
            let f = random_field(seed, 2 * half, x);
            let a = f.l2_norm();
            let b = f.l2_norm_spectral();
            prop_assert!((a - b).abs() <= 1e-12 * a);
        }

        #[test]
        fn fft_round_trip(seed in 0u64..1000, half in 4usize..64) {
            let f = random_field(seed, 2 * half, 1.0);
            let g = SpectralField::from_coefficients(f.grid.clone(), f.coefficients());
            prop_assert!(g.sub(&f).sup_norm() <= 1e-12 * f.sup_norm());
        }

        #[test]
        fn diff_inverts_antiderivative(seed in 0u64..500, half in 4usize..40) {
            // Band-limited, mean-zero, no Nyquist content.
            let f = random_field(seed, 2 * half, 3.0);
            let n = f.grid.num_points;
            let mut c = f.coefficients();
            for w in c.iter_mut() { w[0] = cr(0.0); w[n / 2] = cr(0.0); }
            let f = SpectralField::from_coefficients(f.grid.clone(), c);
            let back = fourier_diff(&antiderivative(&f), 1).unwrap();
            prop_assert!(back.sub(&f).sup_norm() <= 1e-12 * f.sup_norm().max(1.0));
        }
    }
}
