//! Linearized evolution e^{Lt} through the Bloch representation: low/high-frequency
//! splitting, Green-kernel columns with the phase kernel e, and the cancellation identity.

use crate::bloch::{
    assemble_with_table, bloch_transform, field_from_window, inverse_bloch_transform, window_coeffs, BlochOperator,
    CoefficientTable, JordanStructure, StabilityVerdict,
};
use crate::error::{Error, Result};
use crate::fit::{fit_algebraic_decay, fit_exponential_rate, RateFit};
use crate::grid::{fourier_diff, PeriodicGrid, SpectralField};
use crate::linalg::{self, c64, cr, CMat};
use crate::lowfreq::{dual_bases_with, zero_bases, DualBases};
use crate::profile::ProfileSolution;
use crate::quad::gauss_legendre_on;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// exp(1 − 1/(1 − r²)) on [0, 1), zero beyond.
pub fn bump(r: f64) -> f64 {
    let r = r.clamp(0.0, 1.0);
    if r >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - r * r)).exp()
    }
}

/// Frequency cutoff: 1 on |ξ| ≤ ε, 0 on |ξ| ≥ 2ε.
pub fn phi(xi: f64, eps: f64) -> f64 {
    bump((xi.abs() - eps) / eps)
}

/// Temporal cutoff: 0 on t ≤ 1, 1 on t ≥ 2.
pub fn chi(t: f64) -> f64 {
    if t <= 1.0 {
        0.0
    } else {
        bump(2.0 - t)
    }
}

enum Propagator {
    Eigen { values: Vec<c64>, vectors: CMat, inverse: CMat },
    Dense(CMat),
}

pub struct SemigroupSampler {
    pub profile: ProfileSolution,
    pub m: usize,
    pub modes: usize,
    pub xis: Vec<f64>,
    pub channel_index: Vec<i64>,
    pub eps: Option<f64>,
    pub notes: Vec<String>,
    ops: Vec<BlochOperator>,
    props: Vec<Propagator>,
    low: Vec<Option<DualBases>>,
}

impl SemigroupSampler {
    /// Channels on m periods with N Fourier modes (and N nodes) per period.
    pub fn new(profile: &ProfileSolution, m: usize, modes: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidInput("m must be positive".into()));
        }
        let table = CoefficientTable::new(profile, modes)?;
        let channel_index = crate::bloch::channel_indices(m);
        let xis: Vec<f64> = channel_index.iter().map(|&j| 2.0 * PI * j as f64 / (m as f64 * profile.period)).collect();
        let mut ops = vec![];
        let mut props = vec![];
        for &xi in &xis {
            let op = assemble_with_table(profile.period, &table, xi, 0.0, modes)?;
            let e = linalg::eig_dense(&op.matrix, false)?;
            let cond = linalg::cond(&e.right_vectors);
            let p = if cond < 1e6 {
                let inverse = linalg::inverse(&e.right_vectors);
                Propagator::Eigen { values: e.eigenvalues, vectors: e.right_vectors, inverse }
            } else {
                Propagator::Dense(op.matrix.clone())
            };
            ops.push(op);
            props.push(p);
        }
        let low = (0..xis.len()).map(|_| None).collect();
        Ok(Self { profile: profile.clone(), m, modes, xis, channel_index, eps: None, notes: vec![], ops, props, low })
    }

    /// Attach projectors of the critical group for |ξ| ≤ 2ε. Without `eps`, ε is half the
    /// largest probed |ξ| = π/X·2^{−k} at which the group stays separated.
    pub fn with_low_frequency(mut self, jordan: &JordanStructure, eps: Option<f64>) -> Result<Self> {
        let p = &self.profile;
        let table = CoefficientTable::new(p, self.modes)?;
        let zb = zero_bases(p, jordan)?;
        let zone = PI / p.period;
        let eps = match eps {
            Some(e) => e,
            None => {
                let mut found = None;
                for k in 1..30 {
                    let xi = zone / 2f64.powi(k);
                    if dual_bases_with(p.period, &table, &zb, jordan, xi).is_ok()
                        && dual_bases_with(p.period, &table, &zb, jordan, -xi).is_ok()
                    {
                        found = Some(xi);
                        break;
                    }
                }
                found.ok_or(Error::ClusterDimension { found: 0, expected: p.n() + 1, xi: 0.0 })? / 2.0
            }
        };
        for (j, &xi) in self.xis.iter().enumerate() {
            if xi.abs() < 2.0 * eps {
                match dual_bases_with(p.period, &table, &zb, jordan, xi) {
                    Ok(b) => self.low[j] = Some(b),
                    Err(e) => {
                        self.notes.push(format!("projector unavailable at xi = {xi:.3e}: {e}"));
                        return Err(e);
                    }
                }
            }
        }
        self.eps = Some(eps);
        Ok(self)
    }

    pub fn period(&self) -> f64 {
        self.profile.period
    }

    pub fn n(&self) -> usize {
        self.profile.n()
    }

    /// Grid of the m-period domain.
    pub fn grid(&self) -> PeriodicGrid {
        PeriodicGrid::new(self.m * self.modes, self.m as f64 * self.period()).expect("valid grid")
    }

    pub fn has_low_frequency(&self) -> bool {
        self.eps.is_some()
    }

    pub fn operator(&self, j: usize) -> &BlochOperator {
        &self.ops[j]
    }

    pub fn bases(&self, j: usize) -> Option<&DualBases> {
        self.low[j].as_ref()
    }

    fn check_field(&self, u: &SpectralField) -> Result<()> {
        let g = self.grid();
        if u.grid.num_points != g.num_points || (u.grid.period - g.period).abs() > 1e-9 * g.period || u.components() != self.n() {
            return Err(Error::InvalidInput("field does not live on the sampler's m-period grid".into()));
        }
        Ok(())
    }

    /// Channel coefficient vectors of u.
    pub fn decompose(&self, u: &SpectralField) -> Result<Vec<Vec<c64>>> {
        self.check_field(u)?;
        let b = bloch_transform(u, self.period())?;
        Ok(b.channels.iter().zip(&self.ops).map(|(q, op)| window_coeffs(&q.coefficients(), &op.modes)).collect())
    }

    pub fn compose(&self, coeffs: &[Vec<c64>]) -> SpectralField {
        let channels = coeffs
            .iter()
            .zip(&self.ops)
            .map(|(c, op)| field_from_window(c, &op.modes, self.n(), self.period(), self.modes))
            .collect();
        inverse_bloch_transform(&crate::bloch::BlochTransform {
            m: self.m,
            period: self.period(),
            xis: self.xis.clone(),
            channel_index: self.channel_index.clone(),
            channels,
        })
    }

    /// e^{L_ξ t} applied to a channel coefficient vector.
    pub fn propagate_channel(&self, j: usize, c: &[c64], t: f64) -> Vec<c64> {
        match &self.props[j] {
            Propagator::Eigen { values, vectors, inverse } => {
                let mut w = linalg::matvec(inverse, c);
                for (wi, l) in w.iter_mut().zip(values) {
                    *wi *= (l * t).exp();
                }
                linalg::matvec(vectors, &w)
            }
            Propagator::Dense(l) => {
                let e = linalg::expm(&(l * faer::Scale(cr(t))));
                linalg::matvec(&e, c)
            }
        }
    }

    /// Full channel propagator matrix (for semigroup checks).
    pub fn channel_propagator(&self, j: usize, t: f64) -> CMat {
        match &self.props[j] {
            Propagator::Eigen { values, vectors, inverse } => {
                let d = CMat::from_fn(values.len(), values.len(), |a, b| if a == b { (values[a] * t).exp() } else { cr(0.0) });
                vectors * d * inverse
            }
            Propagator::Dense(l) => linalg::expm(&(l * faer::Scale(cr(t)))),
        }
    }

    pub fn apply_semigroup(&self, u0: &SpectralField, t: f64) -> Result<SpectralField> {
        if !(t >= 0.0) {
            return Err(Error::InvalidInput("t must be nonnegative".into()));
        }
        let cs = self.decompose(u0)?;
        let out: Vec<Vec<c64>> = cs.iter().enumerate().map(|(j, c)| self.propagate_channel(j, c, t)).collect();
        Ok(self.compose(&out))
    }

    /// L u through the channel operators.
    pub fn apply_generator(&self, u: &SpectralField) -> Result<SpectralField> {
        let cs = self.decompose(u)?;
        let out: Vec<Vec<c64>> = cs.iter().zip(&self.ops).map(|(c, op)| op.apply(c)).collect();
        Ok(self.compose(&out))
    }

    fn low_part(&self, j: usize, c: &[c64]) -> Option<Vec<c64>> {
        let eps = self.eps?;
        let b = self.low[j].as_ref()?;
        let w = phi(self.xis[j], eps);
        if w == 0.0 {
            return None;
        }
        let pc = linalg::matvec(&b.projector, c);
        Some(pc.into_iter().map(|z| z * w).collect())
    }

    /// (S_I u₀, S_II u₀) with S_I = φ P e^{Lt} per channel and S_II the complement.
    pub fn split_low_high(&self, u0: &SpectralField, t: f64) -> Result<(SpectralField, SpectralField)> {
        if self.eps.is_none() {
            return Err(Error::InvalidInput("sampler has no low-frequency projectors".into()));
        }
        let cs = self.decompose(u0)?;
        let mut lo = vec![];
        let mut hi = vec![];
        for (j, c) in cs.iter().enumerate() {
            let full = self.propagate_channel(j, c, t);
            let low = self.low_part(j, &full).unwrap_or_else(|| vec![cr(0.0); full.len()]);
            hi.push(full.iter().zip(&low).map(|(a, b)| a - b).collect());
            lo.push(low);
        }
        Ok((self.compose(&lo), self.compose(&hi)))
    }

    /// Discrete delta 1/h at node `node` of component `comp`.
    pub fn delta(&self, comp: usize, node: usize) -> SpectralField {
        let g = self.grid();
        let h = g.spacing();
        let np = g.num_points;
        let values = (0..self.n()).map(|c| (0..np).map(|m| if c == comp && m == node { cr(1.0 / h) } else { cr(0.0) }).collect()).collect();
        SpectralField { grid: g, values }
    }

    /// −δ′ (initial datum whose evolution is ∂_y G).
    pub fn delta_derivative(&self, comp: usize, node: usize) -> Result<SpectralField> {
        let d = fourier_diff(&self.delta(comp, node), 1)?;
        Ok(d.map(|_, _, z| -z))
    }

    /// ẽ(·, t) from channel coefficients c₀ of the initial datum: coefficient of the ū′ direction
    /// in φ V e^{Mt} Ṽ* c₀, summed over channels.
    pub fn phase_kernel(&self, c0: &[Vec<c64>], t: f64) -> Option<Vec<f64>> {
        let eps = self.eps?;
        let n = self.n();
        let p = n - 1;
        let g = self.grid();
        let xs = g.nodes();
        let mut e = vec![0.0; xs.len()];
        for (j, c) in c0.iter().enumerate() {
            let Some(b) = self.low[j].as_ref() else { continue };
            let w = phi(self.xis[j], eps);
            if w == 0.0 {
                continue;
            }
            let beta0 = linalg::matvec(&b.vt.adjoint().to_owned(), c);
            // M_ξ = Ṽ* L_ξ V is exact on the invariant subspace.
            let mxi = b.vt.adjoint() * &self.ops[j].matrix * &b.v;
            let em = linalg::expm(&(mxi * faer::Scale(cr(t))));
            let beta = linalg::matvec(&em, &beta0)[p] * w;
            let xi = self.xis[j];
            for (k, &x) in xs.iter().enumerate() {
                e[k] += (c64::from_polar(1.0, xi * x) * beta).re;
            }
        }
        Some(e)
    }
}

#[derive(Debug, Clone)]
pub struct GreenSplit {
    pub t: f64,
    pub y0: f64,
    pub component: usize,
    pub g_column: SpectralField,
    pub e_part: Option<SpectralField>,
    pub g_tilde: SpectralField,
    pub e_column: Option<Vec<f64>>,
    pub chi_cutoff: f64,
    pub warnings: Vec<String>,
}

/// G(·, t; y₀) for a delta in component `comp` at node `node`, with the split G = ū′e + G̃.
pub fn green_column(s: &SemigroupSampler, comp: usize, node: usize, t: f64) -> Result<GreenSplit> {
    green_from_datum(s, &s.delta(comp, node), comp, node, t)
}

pub fn green_from_datum(s: &SemigroupSampler, datum: &SpectralField, comp: usize, node: usize, t: f64) -> Result<GreenSplit> {
    if !(t > 0.0) {
        return Err(Error::InvalidInput("t must be positive".into()));
    }
    let g = s.grid();
    let mut warnings = vec![];
    // Channel spacing must resolve the Gaussian width √t in ξ.
    let dxi = 2.0 * PI / g.period;
    if dxi * t.sqrt() > 1.0 {
        warnings.push(format!("xi grid under-resolves the kernel width at t = {t}"));
    }
    let c0 = s.decompose(datum)?;
    let out: Vec<Vec<c64>> = c0.iter().enumerate().map(|(j, c)| s.propagate_channel(j, c, t)).collect();
    let g_column = s.compose(&out);
    let chi_t = chi(t);
    let (e_column, e_part, g_tilde) = match s.phase_kernel(&c0, t) {
        Some(et) => {
            let e: Vec<f64> = et.iter().map(|v| v * chi_t).collect();
            let ud = periodic_extension(&s.profile.derivative, s.m);
            let ep = ud.map(|_, k, z| z * e[k]);
            let gt = g_column.sub(&ep);
            (Some(e), Some(ep), gt)
        }
        None => (None, None, g_column.clone()),
    };
    Ok(GreenSplit { t, y0: g.node(node), component: comp, g_column, e_part, g_tilde, e_column, chi_cutoff: chi_t, warnings })
}

/// A one-period field repeated over m periods.
pub fn periodic_extension(f: &SpectralField, m: usize) -> SpectralField {
    let np = f.grid.num_points;
    let grid = PeriodicGrid::new(np * m, f.grid.period * m as f64).expect("valid grid");
    let values = f.values.iter().map(|v| (0..np * m).map(|k| v[k % np]).collect()).collect();
    SpectralField { grid, values }
}

/// Discrete L^p norm on the field's domain (p = ∞ allowed).
pub fn lp_norm(values: &[f64], h: f64, p: f64) -> f64 {
    if p.is_infinite() {
        values.iter().map(|v| v.abs()).fold(0.0, f64::max)
    } else {
        (h * values.iter().map(|v| v.abs().powf(p)).sum::<f64>()).powf(1.0 / p)
    }
}

pub fn field_lp(f: &SpectralField, p: f64) -> f64 {
    let h = f.grid.spacing();
    let np = f.grid.num_points;
    let mag: Vec<f64> = (0..np).map(|k| f.values.iter().map(|c| c[k].norm_sqr()).sum::<f64>().sqrt()).collect();
    lp_norm(&mag, h, p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelQuantity {
    G,
    GTilde,
    GTildeY,
    GTildeT,
    E,
    EX,
    ET,
    EY,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayFit {
    pub quantity: KernelQuantity,
    pub p: f64,
    pub predicted: f64,
    pub fit: RateFit,
}

/// Predicted exponent in d = 1 for sup_y ‖·‖_{L^p}.
pub fn predicted_exponent(q: KernelQuantity, p: f64) -> f64 {
    let base = -0.5 * (1.0 - 1.0 / p);
    match q {
        KernelQuantity::G | KernelQuantity::GTilde => base,
        KernelQuantity::GTildeY | KernelQuantity::GTildeT => base - 0.5,
        // ψ-level kernel e is bounded in L^∞; its x, t and y derivatives carry the heat rates.
        KernelQuantity::E => base + 0.5,
        KernelQuantity::EX | KernelQuantity::ET | KernelQuantity::EY => base,
    }
}

/// Time series of sup over sampled source nodes of the requested kernel norms (ungated).
pub fn kernel_norm_series(
    s: &SemigroupSampler,
    nodes: &[usize],
    times: &[f64],
    quantity: KernelQuantity,
    p: f64,
) -> Result<Vec<(f64, f64)>> {
    let n = s.n();
    let mut series = vec![];
    for &t in times {
        let mut sup: f64 = 0.0;
        for &node in nodes {
            for comp in 0..n {
                let v = kernel_quantity(s, comp, node, t, quantity)?;
                sup = sup.max(lp_norm(&v, s.grid().spacing(), p));
            }
        }
        series.push((t, sup));
    }
    Ok(series)
}

/// Pointwise magnitude of the requested kernel quantity at time t.
pub fn kernel_quantity(s: &SemigroupSampler, comp: usize, node: usize, t: f64, q: KernelQuantity) -> Result<Vec<f64>> {
    let mag = |f: &SpectralField| -> Vec<f64> {
        (0..f.grid.num_points).map(|k| f.values.iter().map(|c| c[k].norm_sqr()).sum::<f64>().sqrt()).collect()
    };
    let need_e = || -> Result<()> {
        if s.has_low_frequency() {
            Ok(())
        } else {
            Err(Error::InvalidInput("phase kernel requires low-frequency projectors".into()))
        }
    };
    let dt = 1e-3 * t.max(1.0);
    Ok(match q {
        KernelQuantity::G => mag(&green_column(s, comp, node, t)?.g_column),
        KernelQuantity::GTilde => mag(&green_column(s, comp, node, t)?.g_tilde),
        KernelQuantity::GTildeY => {
            let d = s.delta_derivative(comp, node)?;
            mag(&green_from_datum(s, &d, comp, node, t)?.g_tilde)
        }
        KernelQuantity::GTildeT => {
            let a = green_column(s, comp, node, t + dt)?.g_tilde;
            let b = green_column(s, comp, node, t - dt)?.g_tilde;
            mag(&a.sub(&b).map(|_, _, z| z / (2.0 * dt)))
        }
        KernelQuantity::E => {
            need_e()?;
            green_column(s, comp, node, t)?.e_column.unwrap().iter().map(|v| v.abs()).collect()
        }
        KernelQuantity::EX => {
            need_e()?;
            let e = green_column(s, comp, node, t)?.e_column.unwrap();
            let f = SpectralField::from_real(s.grid(), vec![e])?;
            mag(&fourier_diff(&f, 1)?)
        }
        KernelQuantity::ET => {
            need_e()?;
            let a = green_column(s, comp, node, t + dt)?.e_column.unwrap();
            let b = green_column(s, comp, node, t - dt)?.e_column.unwrap();
            a.iter().zip(&b).map(|(x, y)| ((x - y) / (2.0 * dt)).abs()).collect()
        }
        KernelQuantity::EY => {
            need_e()?;
            let d = s.delta_derivative(comp, node)?;
            green_from_datum(s, &d, comp, node, t)?.e_column.unwrap().iter().map(|v| v.abs()).collect()
        }
    })
}

/// Decay exponents of Green-kernel norms; runs only when the stability verdict passes.
pub fn verify_green_decay(
    s: &SemigroupSampler,
    verdict: &StabilityVerdict,
    nodes: &[usize],
    times: &[f64],
    p_exponents: &[f64],
    window: (f64, f64),
) -> Result<Vec<DecayFit>> {
    if !verdict.overall {
        return Err(Error::NotApplicable("wave unstable".into()));
    }
    let tmax = times.iter().cloned().fold(0.0, f64::max);
    if tmax.sqrt() * 8.0 > 0.5 * s.grid().period {
        return Err(Error::InvalidInput("domain too short for the requested horizon".into()));
    }
    let mut out = vec![];
    use KernelQuantity::*;
    for &q in &[GTilde, GTildeY, GTildeT, E, EX, ET, EY] {
        for &p in p_exponents {
            let series = kernel_norm_series(s, nodes, times, q, p)?;
            let fit = fit_algebraic_decay(&series, window)?;
            out.push(DecayFit { quantity: q, p, predicted: predicted_exponent(q, p), fit });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HighFrequencyReport {
    pub slope: f64,
    pub theta_gap: f64,
    pub derivative_envelope: f64,
}

/// Exponential slope of ‖S_II(t)u₀‖ and the constant C in ‖∂ₓS_II u₀‖ ≤ C t^{−1/2}e^{−θt}‖u₀‖.
pub fn high_frequency_decay(s: &SemigroupSampler, u0: &SpectralField, times: &[f64], theta_gap: f64) -> Result<HighFrequencyReport> {
    let n0 = field_lp(u0, 2.0);
    let mut series = vec![];
    let mut env: f64 = 0.0;
    for &t in times {
        let (_, hi) = s.split_low_high(u0, t)?;
        series.push((t, field_lp(&hi, 2.0)));
        let dx = fourier_diff(&hi, 1)?;
        env = env.max(field_lp(&dx, 2.0) * t.sqrt() * (theta_gap * t).exp() / n0);
    }
    let window = (series[0].0, series[series.len() - 1].0);
    let (slope, _, _) = fit_exponential_rate(&series, window)?;
    Ok(HighFrequencyReport { slope, theta_gap, derivative_envelope: env })
}

/// Spectral gap outside the low-frequency group: −max Re λ over channel eigenvalues, excluding
/// the critical group on channels inside the cutoff.
pub fn high_frequency_gap(s: &SemigroupSampler) -> Result<f64> {
    let mut worst = f64::NEG_INFINITY;
    let k = s.n() + 1;
    for j in 0..s.xis.len() {
        let ev = linalg::eig_dense(&s.ops[j].matrix, false)?.eigenvalues;
        let mut sorted = ev.clone();
        if s.low[j].is_some() && phi(s.xis[j], s.eps.unwrap_or(0.0)) > 0.0 {
            sorted.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
            sorted.drain(..k);
        }
        worst = worst.max(sorted.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max));
    }
    Ok(-worst)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CancellationReport {
    pub t: f64,
    pub nodes: usize,
    pub relative_residual: f64,
    pub lhs_norm: f64,
}

/// ∫₀ᵗ e^{L(t−s)}(∂ₛ − L)f(s) ds against f(t), by Gauss–Legendre quadrature in s.
/// `f` and `f_s` give the field and its s-derivative on the sampler grid.
pub fn verify_cancellation(
    s: &SemigroupSampler,
    f: &dyn Fn(f64) -> SpectralField,
    f_s: &dyn Fn(f64) -> SpectralField,
    t: f64,
    nodes: usize,
) -> Result<CancellationReport> {
    let (ss, ws) = gauss_legendre_on(nodes, 0.0, t);
    let grid = s.grid();
    let mut acc = SpectralField::new(grid.clone(), vec![vec![cr(0.0); grid.num_points]; s.n()])?;
    for (&si, &wi) in ss.iter().zip(&ws) {
        let src = f_s(si).sub(&s.apply_generator(&f(si))?);
        let prop = s.apply_semigroup(&src, t - si)?;
        acc = acc.map(|c, k, z| z + prop.values[c][k] * wi);
    }
    let target = f(t);
    let lhs_norm = field_lp(&acc, 2.0);
    let tn = field_lp(&target, 2.0);
    let rel = if tn == 0.0 { field_lp(&acc.sub(&target), 2.0) } else { field_lp(&acc.sub(&target), 2.0) / tn };
    Ok(CancellationReport { t, nodes, relative_residual: rel, lhs_norm })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bloch::{analyze_jordan_at_zero, ClusterPolicy, Verdict};
    use crate::grid::fft_forward;
    use crate::model::scalar_law;
    use crate::testing::tilted_wave;

    fn wave_sampler(m: usize, modes: usize) -> SemigroupSampler {
        let p = tilted_wave(modes);
        SemigroupSampler::new(&p, m, modes).unwrap()
    }

    fn bump_field(g: &PeriodicGrid, n: usize, center: f64, width: f64) -> SpectralField {
        SpectralField::from_fn(g.clone(), n, |c, x| (1.0 + 0.5 * c as f64) * (-((x - center) / width).powi(2)).exp())
    }

    fn rel(a: &SpectralField, b: &SpectralField) -> f64 {
        field_lp(&a.sub(b), 2.0) / field_lp(b, 2.0)
    }

    #[test]
    fn cutoffs_have_plateaus() {
        assert_eq!(phi(0.3, 0.5), 1.0);
        assert_eq!(phi(-0.5, 0.5), 1.0);
        assert_eq!(phi(1.0, 0.5), 0.0);
        assert!(phi(0.75, 0.5) > 0.0 && phi(0.75, 0.5) < 1.0);
        assert_eq!(chi(0.5), 0.0);
        assert_eq!(chi(1.0), 0.0);
        assert_eq!(chi(2.0), 1.0);
        assert_eq!(chi(7.0), 1.0);
    }

    #[test]
    fn identity_at_zero_and_translation_mode() {
        let s = wave_sampler(4, 32);
        let g = s.grid();
        let u0 = bump_field(&g, 2, 0.5 * g.period, 3.0);
        assert!(rel(&s.apply_semigroup(&u0, 0.0).unwrap(), &u0) < 1e-12);
        let ud = periodic_extension(&s.profile.derivative, s.m);
        for t in [1.0, 3.0] {
            assert!(rel(&s.apply_semigroup(&ud, t).unwrap(), &ud) < 1e-8);
        }
    }

    #[test]
    fn semigroup_property_per_channel() {
        let s = wave_sampler(4, 32);
        for j in 0..s.m {
            let a = s.channel_propagator(j, 0.7);
            let b = s.channel_propagator(j, 0.4);
            let ab = s.channel_propagator(j, 1.1);
            let err = linalg::fro(&(&a * &b - &ab)) / linalg::fro(&ab);
            assert!(err < 1e-8, "channel {j}: {err}");
        }
    }

    /// Pseudo-spectral RK4 for v_t = v_xx − ((df(ū) − s)v)_x on the full domain.
    fn time_stepper(s: &SemigroupSampler, u0: &SpectralField, t: f64, steps: usize) -> SpectralField {
        let g = u0.grid.clone();
        let np = g.num_points;
        let ub = periodic_extension(&s.profile.profile, s.m);
        let jac: Vec<Vec<f64>> = (0..np).map(|k| s.profile.system.jacobian(&[ub.values[0][k].re, ub.values[1][k].re])).collect();
        let kappa = 2.0 * PI / g.period;
        let wn = |i: usize| {
            let i = i as i64;
            let n = np as i64;
            let k = if i < n / 2 { i } else { i - n };
            if i == n / 2 { 0.0 } else { kappa * k as f64 }
        };
        let deriv = |v: &[c64], order: u32| -> Vec<c64> {
            let mut w = v.to_vec();
            fft_forward(&mut w);
            for (i, z) in w.iter_mut().enumerate() {
                *z *= c64::new(0.0, wn(i)).powu(order);
            }
            crate::grid::fft_inverse(&mut w);
            w
        };
        let rhs = |v: &[Vec<c64>]| -> Vec<Vec<c64>> {
            let av: Vec<Vec<c64>> = (0..2)
                .map(|a| (0..np).map(|k| (0..2).map(|b| v[b][k] * (jac[k][a * 2 + b] - if a == b { s.profile.speed } else { 0.0 })).sum()).collect())
                .collect();
            (0..2)
                .map(|a| {
                    let d2 = deriv(&v[a], 2);
                    let d1 = deriv(&av[a], 1);
                    d2.iter().zip(&d1).map(|(x, y)| x - y).collect()
                })
                .collect()
        };
        let dt = t / steps as f64;
        let mut v = u0.values.clone();
        let axpy = |v: &[Vec<c64>], k: &[Vec<c64>], h: f64| -> Vec<Vec<c64>> {
            v.iter().zip(k).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y * h).collect()).collect()
        };
        for _ in 0..steps {
            let k1 = rhs(&v);
            let k2 = rhs(&axpy(&v, &k1, dt / 2.0));
            let k3 = rhs(&axpy(&v, &k2, dt / 2.0));
            let k4 = rhs(&axpy(&v, &k3, dt));
            for a in 0..2 {
                for k in 0..np {
                    v[a][k] += (k1[a][k] + k2[a][k] * 2.0 + k3[a][k] * 2.0 + k4[a][k]) * (dt / 6.0);
                }
            }
        }
        SpectralField { grid: g, values: v }
    }

    #[test]
    fn semigroup_matches_time_stepper() {
        let s = wave_sampler(4, 32);
        let g = s.grid();
        let u0 = bump_field(&g, 2, 0.5 * g.period, 4.0);
        let a = s.apply_semigroup(&u0, 1.0).unwrap();
        let b = time_stepper(&s, &u0, 1.0, 2000);
        assert!(rel(&a, &b) < 1e-6, "{}", rel(&a, &b));
    }

    fn low_sampler(m: usize, modes: usize) -> SemigroupSampler {
        let p = tilted_wave(modes);
        let j = analyze_jordan_at_zero(&p, modes, &ClusterPolicy::default()).unwrap();
        SemigroupSampler::new(&p, m, modes).unwrap().with_low_frequency(&j, None).unwrap()
    }

    #[test]
    fn splitting_is_additive() {
        let s = low_sampler(64, 32);
        let eps = s.eps.unwrap();
        assert!(s.xis.iter().filter(|x| x.abs() < 2.0 * eps).count() >= 3, "eps/zone = {}", eps * s.period() / PI);
        let g = s.grid();
        let u0 = bump_field(&g, 2, 0.5 * g.period, 6.0);
        for t in [0.0, 0.5, 2.0] {
            let (lo, hi) = s.split_low_high(&u0, t).unwrap();
            let full = s.apply_semigroup(&u0, t).unwrap();
            let sum = lo.map(|c, k, z| z + hi.values[c][k]);
            assert!(field_lp(&sum.sub(&full), 2.0) < 1e-10 * field_lp(&full, 2.0));
        }
    }

    #[test]
    fn green_column_split_and_conservation() {
        let s = low_sampler(64, 32);
        let node = 3;
        let g0 = green_column(&s, 0, node, 0.5).unwrap();
        assert!(g0.e_column.as_ref().unwrap().iter().all(|&v| v == 0.0));
        let mass = |f: &SpectralField, c: usize| f.values[c].iter().sum::<c64>() * f.grid.spacing();
        for t in [0.5, 1.5, 3.0] {
            let gs = green_column(&s, 0, node, t).unwrap();
            assert!((mass(&gs.g_column, 0) - cr(1.0)).norm() < 1e-8);
            assert!(mass(&gs.g_column, 1).norm() < 1e-8);
            let recon = gs.g_tilde.map(|c, k, z| z + gs.e_part.as_ref().unwrap().values[c][k]);
            assert!(field_lp(&recon.sub(&gs.g_column), 2.0) <= 1e-14 * field_lp(&gs.g_column, 2.0));
        }
        let gs = green_column(&s, 0, node, 3.0).unwrap();
        assert!(gs.e_column.unwrap().iter().any(|&v| v != 0.0));
    }

    fn heat_sampler() -> SemigroupSampler {
        let sys = scalar_law(0.0, 0.0);
        let p = ProfileSolution::constant_state(&sys, &[0.0], 2.0 * PI, 16).unwrap();
        SemigroupSampler::new(&p, 64, 16).unwrap()
    }

    #[test]
    fn heat_kernel_baseline() {
        let s = heat_sampler();
        let g = s.grid();
        let node = 100;
        let y0 = g.node(node);
        let t = 1.0;
        let col = green_column(&s, 0, node, t).unwrap();
        let mut worst: f64 = 0.0;
        for (k, &x) in g.nodes().iter().enumerate() {
            let mut exact = 0.0;
            for r in -2..=2 {
                let d = x - y0 - r as f64 * g.period;
                exact += (-d * d / (4.0 * t)).exp() / (4.0 * PI * t).sqrt();
            }
            worst = worst.max((col.g_column.values[0][k] - cr(exact)).norm());
        }
        assert!(worst < 1e-8, "{worst}");
        let times = crate::fit::log_times(10.0, 1000.0, 16);
        let series = kernel_norm_series(&s, &[node], &times, KernelQuantity::G, 2.0).unwrap();
        let fit = fit_algebraic_decay(&series, (10.0, 1000.0)).unwrap();
        assert!((fit.exponent + 0.25).abs() < 0.02, "{}", fit.exponent);
    }

    #[test]
    fn cancellation_identity() {
        let s = wave_sampler(4, 32);
        let g = s.grid();
        let bump = bump_field(&g, 2, 0.5 * g.period, 3.0);
        let b2 = bump.clone();
        let r = verify_cancellation(&s, &move |t| bump.map(|_, _, z| z * t), &move |_| b2.clone(), 1.0, 64).unwrap();
        assert!(r.relative_residual < 1e-6, "{}", r.relative_residual);
        let ud = periodic_extension(&s.profile.derivative, s.m);
        let ud2 = ud.clone();
        let r = verify_cancellation(
            &s,
            &move |t| ud.map(|_, _, z| z * (1.0 - (-t).exp())),
            &move |t| ud2.map(|_, _, z| z * (-t).exp()),
            1.0,
            64,
        )
        .unwrap();
        assert!(r.relative_residual < 1e-6, "{}", r.relative_residual);
        let zero = g.nodes().iter().map(|_| cr(0.0)).collect::<Vec<_>>();
        let zf = SpectralField { grid: g.clone(), values: vec![zero.clone(), zero] };
        let z2 = zf.clone();
        let r = verify_cancellation(&s, &move |_| zf.clone(), &move |_| z2.clone(), 1.0, 8).unwrap();
        assert_eq!(r.lhs_norm, 0.0);
    }

    #[test]
    fn decay_check_gated() {
        let s = heat_sampler();
        let v = StabilityVerdict {
            d1: Verdict::Fail,
            d1_max_re: 0.2,
            d1_argmax_xi: 0.4,
            d2: Verdict::Fail,
            d2_theta: -1.0,
            d2_fit_range: 0.1,
            d3_prime: Verdict::Pass,
            d3_multiplicity: 3,
            h3: Verdict::Pass,
            h3_min_gap: 1.0,
            a_coeffs: vec![],
            overall: false,
        };
        let r = verify_green_decay(&s, &v, &[0], &[10.0, 100.0], &[2.0], (10.0, 100.0));
        assert!(matches!(r, Err(Error::NotApplicable(_))));
    }

    #[test]
    fn rejects_foreign_grid() {
        let s = wave_sampler(2, 32);
        let g = PeriodicGrid::new(48, s.grid().period).unwrap();
        let u = bump_field(&g, 2, 1.0, 1.0);
        assert!(s.apply_semigroup(&u, 1.0).is_err());
        assert!(s.apply_semigroup(&bump_field(&s.grid(), 2, 1.0, 1.0), -1.0).is_err());
    }
}
