//! Bloch operators L_ξ, Bloch transform, spectra and the Jordan structure at ξ = 0.

use crate::error::{Error, Result};
use crate::grid::{fft_forward, PeriodicGrid, SpectralField};
use crate::linalg::{self, c, c64, cr, CMat};
use crate::profile::ProfileSolution;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Fourier coefficients of A(x) = df(ū(x)) − sI, indexed by wavenumber.
#[derive(Debug, Clone)]
pub struct CoefficientTable {
    pub n: usize,
    m: usize,
    /// data[a][b] in FFT slot order on m points.
    data: Vec<Vec<Vec<c64>>>,
}

impl CoefficientTable {
    pub fn new(profile: &ProfileSolution, modes: usize) -> Result<Self> {
        let n = profile.n();
        let mut m = (4 * modes).max(profile.num_points());
        if m % 2 == 1 {
            m += 1;
        }
        let fine = profile.profile.resample(m)?;
        let mut data = vec![vec![vec![cr(0.0); m]; n]; n];
        let mut u = vec![0.0; n];
        for p in 0..m {
            for k in 0..n {
                u[k] = fine.values[k][p].re;
            }
            let j = profile.system.jacobian(&u);
            for a in 0..n {
                for b in 0..n {
                    let mut v = j[a * n + b];
                    if a == b {
                        v -= profile.speed;
                    }
                    data[a][b][p] = cr(v);
                }
            }
        }
        for row in data.iter_mut() {
            for w in row.iter_mut() {
                fft_forward(w);
            }
        }
        Ok(Self { n, m, data })
    }

    pub fn get(&self, a: usize, b: usize, k: i64) -> c64 {
        let m = self.m as i64;
        if k.abs() >= m / 2 {
            return cr(0.0);
        }
        let slot = ((k % m) + m) % m;
        self.data[a][b][slot as usize]
    }
}

/// Galerkin mode window for quasimomentum ξ.
pub fn mode_window(xi: f64, modes: usize) -> Vec<i64> {
    let h = (modes / 2) as i64;
    if xi >= 0.0 {
        (-h..h).collect()
    } else {
        (-h + 1..=h).collect()
    }
}

#[derive(Debug, Clone)]
pub struct BlochOperator {
    pub xi1: f64,
    pub xi_transverse_sq: f64,
    pub n: usize,
    pub period: f64,
    pub modes: Vec<i64>,
    pub matrix: CMat,
}

impl BlochOperator {
    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn kappa(&self) -> f64 {
        2.0 * PI / self.period
    }

    /// Coefficient vector of an X-periodic field in this operator's mode window.
    pub fn coeffs_from_field(&self, f: &SpectralField) -> Vec<c64> {
        window_coeffs(&f.coefficients(), &self.modes)
    }

    /// X-periodic field (the factor e^{iξx} omitted) from a coefficient vector.
    pub fn field_from_coeffs(&self, v: &[c64], num_points: usize) -> SpectralField {
        field_from_window(v, &self.modes, self.n, self.period, num_points)
    }

    pub fn apply(&self, v: &[c64]) -> Vec<c64> {
        linalg::matvec(&self.matrix, v)
    }
}

/// Pick window modes out of FFT-ordered coefficient arrays (one per component).
pub fn window_coeffs(coeffs: &[Vec<c64>], modes: &[i64]) -> Vec<c64> {
    let nm = modes.len();
    let mut out = vec![cr(0.0); coeffs.len() * nm];
    for (comp, w) in coeffs.iter().enumerate() {
        let np = w.len() as i64;
        for (i, &l) in modes.iter().enumerate() {
            if l.abs() > np / 2 {
                continue;
            }
            if l.abs() == np / 2 {
                // Nyquist slot is shared by ±np/2; the window contains only one of them.
                out[comp * nm + i] = w[(np / 2) as usize];
            } else {
                out[comp * nm + i] = w[(((l % np) + np) % np) as usize];
            }
        }
    }
    out
}

pub fn field_from_window(v: &[c64], modes: &[i64], n: usize, period: f64, num_points: usize) -> SpectralField {
    let nm = modes.len();
    let np = num_points as i64;
    let grid = PeriodicGrid::new(num_points, period).expect("valid grid");
    let coeffs = (0..n)
        .map(|comp| {
            let mut w = vec![cr(0.0); num_points];
            for (i, &l) in modes.iter().enumerate() {
                if l.abs() > np / 2 {
                    continue;
                }
                let slot = (((l % np) + np) % np) as usize;
                w[slot] += v[comp * nm + i];
            }
            w
        })
        .collect();
    SpectralField::from_coefficients(grid, coeffs)
}

/// Galerkin matrix of L_ξ v = (∂+iξ)²v − (∂+iξ)(A v) − |ξ̃|²v.
pub fn assemble_l_xi(profile: &ProfileSolution, xi1: f64, xi_transverse_sq: f64, modes: usize) -> Result<BlochOperator> {
    let table = CoefficientTable::new(profile, modes)?;
    assemble_with_table(profile.period, &table, xi1, xi_transverse_sq, modes)
}

pub fn assemble_with_table(
    period: f64,
    table: &CoefficientTable,
    xi1: f64,
    xi_transverse_sq: f64,
    modes: usize,
) -> Result<BlochOperator> {
    if modes < 16 || modes % 2 != 0 {
        return Err(Error::InvalidInput(format!("truncation N = {modes} must be even and >= 16")));
    }
    let zone = PI / period;
    if !xi1.is_finite() || xi1.abs() > zone * (1.0 + 1e-12) {
        return Err(Error::InvalidInput(format!("xi1 = {xi1} outside the Brillouin zone [-{zone}, {zone}]")));
    }
    if !(xi_transverse_sq >= 0.0) {
        return Err(Error::InvalidInput("xi_transverse_sq must be nonnegative".into()));
    }
    let n = table.n;
    let window = mode_window(xi1, modes);
    let kappa = 2.0 * PI / period;
    let size = n * modes;
    let mut mat = linalg::zeros(size, size);
    for (i, &li) in window.iter().enumerate() {
        let mu = xi1 + kappa * li as f64;
        for a in 0..n {
            let row = a * modes + i;
            mat[(row, row)] += cr(-mu * mu - xi_transverse_sq);
            for (j, &lj) in window.iter().enumerate() {
                for b in 0..n {
                    let ah = table.get(a, b, li - lj);
                    if ah != cr(0.0) {
                        mat[(row, b * modes + j)] += c(0.0, -mu) * ah;
                    }
                }
            }
        }
    }
    if !linalg::is_finite(&mat) {
        return Err(Error::NonFinite("profile data"));
    }
    Ok(BlochOperator { xi1, xi_transverse_sq, n, period, modes: window, matrix: mat })
}

/// Bloch decomposition of a field on m periods: u(x) = Σ_j e^{iξ_j x} q_j(x).
#[derive(Debug, Clone)]
pub struct BlochTransform {
    pub m: usize,
    pub period: f64,
    pub xis: Vec<f64>,
    pub channel_index: Vec<i64>,
    /// q_j sampled on one period.
    pub channels: Vec<SpectralField>,
}

pub fn channel_indices(m: usize) -> Vec<i64> {
    let m = m as i64;
    if m % 2 == 0 {
        (-m / 2..m / 2).collect()
    } else {
        (-(m - 1) / 2..=(m - 1) / 2).collect()
    }
}

pub fn bloch_transform(u: &SpectralField, period: f64) -> Result<BlochTransform> {
    let ratio = u.grid.period / period;
    let m = ratio.round();
    if m < 1.0 || (ratio - m).abs() > 1e-9 * ratio {
        return Err(Error::InvalidInput(format!("domain is {ratio} periods, not an integer multiple")));
    }
    let m = m as usize;
    let total = u.grid.num_points;
    if total % m != 0 || (total / m) % 2 != 0 {
        return Err(Error::InvalidInput("nodes per period must be an even integer".into()));
    }
    let np = total / m;
    let grid = PeriodicGrid::new(np, period)?;
    let idx = channel_indices(m);
    let xis: Vec<f64> = idx.iter().map(|&j| 2.0 * PI * j as f64 / (m as f64 * period)).collect();
    let h = grid.spacing();
    let mut channels = Vec::with_capacity(m);
    for (ji, &j) in idx.iter().enumerate() {
        let xi = xis[ji];
        let values = u
            .values
            .iter()
            .map(|comp| {
                (0..np)
                    .map(|p| {
                        let mut s = cr(0.0);
                        for r in 0..m {
                            let phase = -2.0 * PI * (j as f64) * (r as f64) / m as f64;
                            s += c64::from_polar(1.0, phase) * comp[p + r * np];
                        }
                        s * c64::from_polar(1.0 / m as f64, -xi * p as f64 * h)
                    })
                    .collect()
            })
            .collect();
        channels.push(SpectralField::new(grid.clone(), values)?);
    }
    Ok(BlochTransform { m, period, xis, channel_index: idx, channels })
}

pub fn inverse_bloch_transform(b: &BlochTransform) -> SpectralField {
    let np = b.channels[0].grid.num_points;
    let n = b.channels[0].components();
    let h = b.period / np as f64;
    let total = np * b.m;
    let grid = PeriodicGrid::new(total, b.period * b.m as f64).expect("valid grid");
    let mut values = vec![vec![cr(0.0); total]; n];
    for (ji, q) in b.channels.iter().enumerate() {
        let xi = b.xis[ji];
        for comp in 0..n {
            for r in 0..b.m {
                for p in 0..np {
                    let x = (p + r * np) as f64 * h;
                    values[comp][p + r * np] += c64::from_polar(1.0, xi * x) * q.values[comp][p];
                }
            }
        }
    }
    SpectralField { grid, values }
}

/// Aggregated Bloch norm (m Σ_j ‖q_j‖²)^{1/2}; equals ‖u‖ on the m-period domain.
pub fn bloch_norm(b: &BlochTransform) -> f64 {
    (b.m as f64 * b.channels.iter().map(|q| q.l2_norm().powi(2)).sum::<f64>()).sqrt()
}

/// Deterministic pseudo-random start block.
pub(crate) fn start_block(rows: usize, cols: usize, salt: u64) -> CMat {
    let f = |i: usize, j: usize, k: u64| {
        let v = ((i as u64).wrapping_mul(2654435761) ^ (j as u64).wrapping_mul(40503) ^ k.wrapping_mul(97531)) as f64;
        (v * 0.6180339887498949).fract() - 0.5
    };
    CMat::from_fn(rows, cols, |i, j| c(f(i, j, salt), f(j, i, salt + 17)))
}

/// Orthonormal basis of the invariant subspace for the k eigenvalues closest to `shift`,
/// by subspace iteration with (L − shift)^{-1}. Returns the basis and the invariance residual.
pub fn invariant_subspace(l: &CMat, k: usize, shift: c64, iterations: usize) -> (CMat, f64) {
    let size = l.nrows();
    let mut shifted = l.clone();
    for i in 0..size {
        shifted[(i, i)] -= shift;
    }
    let lu = linalg::inverse(&shifted);
    let mut q = linalg::orthonormalize(&start_block(size, k, 1));
    for _ in 0..iterations {
        let y = &lu * &q;
        q = linalg::orthonormalize(&y);
    }
    let b = q.adjoint() * l * &q;
    let r = l * &q - &q * &b;
    let res = linalg::fro(&r) / linalg::fro(l).max(1.0);
    (q, res)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterPolicy {
    pub min_radius: f64,
    pub relative_radius: f64,
    pub separation_factor: f64,
    pub singular_value_tol: f64,
}

impl Default for ClusterPolicy {
    fn default() -> Self {
        Self { min_radius: 1e-6, relative_radius: 1e-3, separation_factor: 10.0, singular_value_tol: 1e-6 }
    }
}

#[derive(Debug, Clone)]
pub struct ZeroCluster {
    pub eigenvalues: Vec<c64>,
    pub radius: f64,
    /// Distance from 0 to the nearest non-cluster eigenvalue.
    pub gap: f64,
    /// −max Re over non-cluster eigenvalues.
    pub real_gap: f64,
}

/// Locate the eigenvalue group at 0 from a full list of eigenvalues.
pub fn find_zero_cluster(eigs: &[c64], policy: &ClusterPolicy) -> Result<ZeroCluster> {
    let mut sorted: Vec<c64> = eigs.to_vec();
    sorted.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    let limit = sorted.len().min(12);
    let mut best = (0.0, 1);
    for k in 1..limit {
        let lo = sorted[k - 1].norm().max(1e-300);
        let ratio = sorted[k].norm() / lo;
        if ratio > best.0 {
            best = (ratio, k);
        }
    }
    let k = best.1;
    let gap = sorted[k].norm();
    let radius = policy.min_radius.max(policy.relative_radius * gap);
    let outer = sorted[k - 1].norm();
    if outer > radius || gap < policy.separation_factor * radius {
        return Err(Error::ClusterNotSeparable { radius, separation: gap });
    }
    let real_gap = -sorted[k..].iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    Ok(ZeroCluster { eigenvalues: sorted[..k].to_vec(), radius, gap, real_gap })
}

#[derive(Debug, Clone)]
pub struct JordanStructure {
    pub modes: usize,
    pub kernel_dim: usize,
    /// Heights of the nontrivial (height ≥ 2) chains.
    pub chain_heights: Vec<usize>,
    pub multiplicity: usize,
    pub cluster: Option<ZeroCluster>,
    /// Coefficient vectors (mode window of ξ = 0).
    pub right_kernel: Vec<Vec<c64>>,
    pub left_kernel: Vec<Vec<c64>>,
    pub chain_base: Option<Vec<c64>>,
    /// g with L₀g = ū′ (chain top), when a chain exists.
    pub generalized: Option<Vec<c64>>,
    pub chain_base_angle: f64,
    pub translation_residual: f64,
    pub generalized_residual: f64,
    pub left_constant_residual: f64,
    pub right_subspace: Option<CMat>,
    pub left_subspace: Option<CMat>,
    pub singular_values: Vec<f64>,
}

impl JordanStructure {
    pub fn to_fields(&self, v: &[c64], n: usize, period: f64, num_points: usize) -> SpectralField {
        field_from_window(v, &mode_window(0.0, self.modes), n, period, num_points)
    }
}

/// Coefficient vector of ū′ in the ξ = 0 window.
pub fn derivative_coeffs(profile: &ProfileSolution, modes: usize) -> Vec<c64> {
    window_coeffs(&profile.derivative.coefficients(), &mode_window(0.0, modes))
}

pub fn angle(a: &[c64], b: &[c64]) -> f64 {
    let cosv = linalg::dot(a, b).norm() / (linalg::vnorm(a) * linalg::vnorm(b));
    cosv.min(1.0).acos()
}

fn rank_with_tol(s: &[f64], tol: f64) -> usize {
    s.iter().filter(|&&x| x > tol).count()
}

fn matpow_rank(b: &CMat, p: usize, tol: f64) -> Result<usize> {
    let mut m = linalg::identity(b.nrows());
    for _ in 0..p {
        m = &m * b;
    }
    Ok(rank_with_tol(&linalg::singular_values(&m)?, tol))
}

/// Kernel dimension, Jordan chains, dual kernels and the generalized eigenvector of L₀.
pub fn analyze_jordan_at_zero(profile: &ProfileSolution, modes: usize, policy: &ClusterPolicy) -> Result<JordanStructure> {
    let op = assemble_l_xi(profile, 0.0, 0.0, modes)?;
    let l0 = &op.matrix;
    let eig = linalg::eig_dense(l0, false)?;
    let cluster = find_zero_cluster(&eig.eigenvalues, policy)?;
    let k = cluster.eigenvalues.len();
    let shift = c(0.37 * cluster.radius, 0.61 * cluster.radius);
    let (q, _) = invariant_subspace(l0, k, shift, 8);
    let lh = linalg::adjoint(l0);
    let (qt, _) = invariant_subspace(&lh, k, shift.conj(), 8);
    let b = q.adjoint() * l0 * &q;
    let sv = linalg::svd(&b)?;
    let scale = sv.s.first().copied().unwrap_or(0.0).max(cluster.gap);
    let tol = policy.singular_value_tol * scale;
    let rank = rank_with_tol(&sv.s, tol);
    if sv.s.iter().any(|&x| x > tol / 10.0 && x < tol * 10.0) {
        let alt = rank_with_tol(&sv.s, tol * 10.0);
        return Err(Error::KernelAmbiguous(k - rank, k - alt));
    }
    let kernel_dim = k - rank;
    let mut ranks = vec![k];
    for p in 1..=k {
        ranks.push(matpow_rank(&b, p, tol)?);
    }
    let at_least = |p: usize| ranks[p - 1] - ranks[p];
    let mut chain_heights = vec![];
    for h in 2..=k {
        let exact = at_least(h) - if h < k { at_least(h + 1) } else { 0 };
        for _ in 0..exact {
            chain_heights.push(h);
        }
    }
    chain_heights.sort_unstable_by(|a, b| b.cmp(a));
    let ud = derivative_coeffs(profile, modes);
    let right_kernel: Vec<Vec<c64>> = (rank..k).map(|j| linalg::matvec(&q, &linalg::col(&sv.v, j))).collect();
    let (chain_base, generalized, generalized_residual) = if rank > 0 {
        let top = linalg::col(&sv.v, 0);
        let base = linalg::matvec(&q, &linalg::matvec(&b, &top));
        // Least-squares solve of B y = Q*ū′ on the nonzero singular subspace.
        let rhs = linalg::matvec(&q.adjoint().to_owned(), &ud);
        let ut_rhs = linalg::matvec(&sv.u.adjoint().to_owned(), &rhs);
        let mut y = vec![cr(0.0); k];
        for j in 0..rank {
            let coef = ut_rhs[j] / cr(sv.s[j]);
            for i in 0..k {
                y[i] += sv.v[(i, j)] * coef;
            }
        }
        let g = linalg::matvec(&q, &y);
        let lg = linalg::matvec(l0, &g);
        let res = linalg::vnorm(&lg.iter().zip(&ud).map(|(a, b)| a - b).collect::<Vec<_>>()) / linalg::vnorm(&g);
        (Some(base), Some(g), res)
    } else {
        (None, None, f64::NAN)
    };
    let chain_base_angle = chain_base.as_ref().map_or(f64::NAN, |cb| angle(cb, &ud));
    let lud = linalg::matvec(l0, &ud);
    let translation_residual = linalg::vnorm(&lud) / linalg::vnorm(&ud);
    let bt = qt.adjoint() * &lh * &qt;
    let svt = linalg::svd(&bt)?;
    let rank_t = rank_with_tol(&svt.s, tol);
    let left_kernel: Vec<Vec<c64>> = (rank_t..k).map(|j| linalg::matvec(&qt, &linalg::col(&svt.v, j))).collect();
    let zero_slot = modes / 2;
    let n = profile.n();
    let left_constant_residual = left_kernel
        .iter()
        .map(|w| {
            let mut off = 0.0;
            for comp in 0..n {
                for i in 0..modes {
                    if i != zero_slot {
                        off += w[comp * modes + i].norm_sqr();
                    }
                }
            }
            off.sqrt() / linalg::vnorm(w)
        })
        .fold(0.0, f64::max);
    let multiplicity = kernel_dim + chain_heights.iter().map(|h| h - 1).sum::<usize>();
    Ok(JordanStructure {
        modes,
        kernel_dim,
        chain_heights,
        multiplicity,
        cluster: Some(cluster),
        right_kernel,
        left_kernel,
        chain_base,
        generalized,
        chain_base_angle,
        translation_residual,
        generalized_residual,
        left_constant_residual,
        right_subspace: Some(q),
        left_subspace: Some(qt),
        singular_values: sv.s,
    })
}

#[derive(Debug, Clone)]
pub struct BranchAmbiguity {
    pub xi: f64,
    pub branch: usize,
    pub overlap: f64,
}

#[derive(Debug, Clone)]
pub struct BlochSpectrum {
    pub n: usize,
    pub period: f64,
    pub modes: usize,
    pub xi_grid: Vec<f64>,
    /// All eigenvalues per grid point.
    pub eigenvalues: Vec<Vec<c64>>,
    /// surfaces[b][k] = λ_b(ξ_k) for tracked branches.
    pub surfaces: Vec<Vec<c64>>,
    /// Indices of the n+1 tracked branches through 0.
    pub critical: Vec<usize>,
    pub ambiguities: Vec<BranchAmbiguity>,
    /// Right eigenvectors of the critical branches, [branch][k].
    pub critical_vectors: Vec<Vec<Vec<c64>>>,
}

impl BlochSpectrum {
    pub fn max_re(&self, k: usize) -> f64 {
        self.eigenvalues[k].iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Geometric refinement toward 0 plus a uniform grid over the zone, symmetric, including 0.
pub fn refined_xi_grid(period: f64, uniform: usize, refined: usize, smallest: f64) -> Vec<f64> {
    let zone = PI / period;
    let mut pos: Vec<f64> = (1..=uniform).map(|k| zone * k as f64 / uniform as f64).collect();
    let first = zone / uniform as f64;
    if refined > 0 {
        let ratio = (smallest / first).powf(1.0 / refined as f64);
        for k in 1..=refined {
            pos.push(first * ratio.powi(k as i32));
        }
    }
    pos.sort_by(f64::total_cmp);
    let mut grid: Vec<f64> = pos.iter().rev().map(|x| -x).collect();
    grid.push(0.0);
    grid.extend(pos);
    grid
}

/// Map an eigenvector at ξ to the conjugate-symmetric eigenvector at −ξ (coefficient l ↦ −l, conj).
fn mirror(v: &[c64], n: usize, modes: usize) -> Vec<c64> {
    let mut out = vec![cr(0.0); v.len()];
    // window(ξ ≥ 0)[i] = −N/2 + i, window(ξ < 0)[i'] = −N/2 + 1 + i'; −l maps i ↦ N − 1 − i.
    for comp in 0..n {
        for i in 0..modes {
            out[comp * modes + (modes - 1 - i)] = v[comp * modes + i].conj();
        }
    }
    out
}

struct Eigs {
    values: Vec<c64>,
    vectors: CMat,
}

fn eig_at(profile_period: f64, table: &CoefficientTable, xi: f64, modes: usize) -> Result<Eigs> {
    let op = assemble_with_table(profile_period, table, xi, 0.0, modes)?;
    let e = linalg::eig_dense(&op.matrix, false)?;
    Ok(Eigs { values: e.eigenvalues, vectors: e.right_vectors })
}

fn track(
    start_vecs: &[Vec<c64>],
    order: &[usize],
    all: &[Eigs],
    surfaces: &mut [Vec<c64>],
    vecs: &mut [Vec<Vec<c64>>],
    xi_grid: &[f64],
    amb: &mut Vec<BranchAmbiguity>,
) {
    let mut prev: Vec<Vec<c64>> = start_vecs.to_vec();
    for &k in order {
        let e = &all[k];
        let size = e.values.len();
        let mut pairs: Vec<(f64, usize, usize)> = vec![];
        for (b, pv) in prev.iter().enumerate() {
            for j in 0..size {
                let col = e.vectors.col(j);
                let mut s = cr(0.0);
                for i in 0..pv.len() {
                    s += pv[i].conj() * col[i];
                }
                pairs.push((s.norm(), b, j));
            }
        }
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut assigned = vec![usize::MAX; prev.len()];
        let mut best = vec![0.0; prev.len()];
        let mut used = vec![false; size];
        for (o, b, j) in pairs {
            if assigned[b] == usize::MAX && !used[j] {
                assigned[b] = j;
                best[b] = o;
                used[j] = true;
            }
        }
        for b in 0..prev.len() {
            let j = assigned[b];
            if best[b] < 0.5 {
                amb.push(BranchAmbiguity { xi: xi_grid[k], branch: b, overlap: best[b] });
            }
            surfaces[b][k] = e.values[j];
            let v = linalg::col(&e.vectors, j);
            vecs[b][k] = v.clone();
            prev[b] = v;
        }
    }
}

/// Per-ξ dense eigensolves with branch tracking by eigenvector overlap.
pub fn spectrum_sweep(profile: &ProfileSolution, xi_grid: &[f64], modes: usize, num_branches: usize) -> Result<BlochSpectrum> {
    let n = profile.n();
    if xi_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("xi grid must be sorted and distinct".into()));
    }
    let table = CoefficientTable::new(profile, modes)?;
    let all: Vec<Eigs> = xi_grid.iter().map(|&xi| eig_at(profile.period, &table, xi, modes)).collect::<Result<_>>()?;
    let nb = num_branches.max(n + 1).min(n * modes);
    let npts = xi_grid.len();
    let mut surfaces = vec![vec![cr(f64::NAN); npts]; nb];
    let mut vecs = vec![vec![vec![]; npts]; nb];
    let mut amb = vec![];
    let pos: Vec<usize> = (0..npts).filter(|&k| xi_grid[k] > 0.0).collect();
    let neg: Vec<usize> = (0..npts).filter(|&k| xi_grid[k] < 0.0).rev().collect();
    let zero: Option<usize> = (0..npts).find(|&k| xi_grid[k] == 0.0);
    let pick_start = |k: usize| -> Vec<Vec<c64>> {
        let e = &all[k];
        let mut idx: Vec<usize> = (0..e.values.len()).collect();
        idx.sort_by(|&a, &b| e.values[b].re.total_cmp(&e.values[a].re));
        idx.truncate(nb);
        idx.iter().map(|&j| linalg::col(&e.vectors, j)).collect()
    };
    let mut start_pos: Option<Vec<Vec<c64>>> = None;
    if let Some(&k0) = pos.first() {
        let s = pick_start(k0);
        start_pos = Some(s.clone());
        track(&s, &pos, &all, &mut surfaces, &mut vecs, xi_grid, &mut amb);
    }
    if let Some(&k0) = neg.first() {
        let s = match &start_pos {
            Some(sp) => sp.iter().map(|v| mirror(v, n, modes)).collect(),
            None => pick_start(k0),
        };
        track(&s, &neg, &all, &mut surfaces, &mut vecs, xi_grid, &mut amb);
    }
    if let Some(kz) = zero {
        let near = pos.first().or(neg.first()).copied();
        let e = &all[kz];
        let targets: Vec<c64> = match near {
            Some(kn) => (0..nb).map(|b| surfaces[b][kn]).collect(),
            None => {
                let mut v = e.values.clone();
                v.sort_by(|a, b| b.re.total_cmp(&a.re));
                v.truncate(nb);
                v
            }
        };
        let perm = linalg::match_nearest(&targets, &e.values);
        for b in 0..nb {
            surfaces[b][kz] = e.values[perm[b]];
            vecs[b][kz] = linalg::col(&e.vectors, perm[b]);
        }
    }
    // Critical branches: the n+1 smallest |λ| at the grid point nearest 0 (excluding 0).
    let knear = (0..npts)
        .filter(|&k| xi_grid[k] != 0.0)
        .min_by(|&a, &b| xi_grid[a].abs().total_cmp(&xi_grid[b].abs()))
        .or(zero)
        .unwrap_or(0);
    let mut order: Vec<usize> = (0..nb).collect();
    order.sort_by(|&a, &b| surfaces[a][knear].norm().total_cmp(&surfaces[b][knear].norm()));
    let mut critical: Vec<usize> = order[..(n + 1).min(nb)].to_vec();
    critical.sort_unstable();
    let critical_vectors = critical.iter().map(|&b| vecs[b].clone()).collect();
    Ok(BlochSpectrum {
        n,
        period: profile.period,
        modes,
        xi_grid: xi_grid.to_vec(),
        eigenvalues: all.into_iter().map(|e| e.values).collect(),
        surfaces,
        critical,
        ambiguities: amb,
        critical_vectors,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Pass,
    Fail,
    Marginal,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub d1: Verdict,
    pub d1_max_re: f64,
    pub d1_argmax_xi: f64,
    pub d2: Verdict,
    pub d2_theta: f64,
    pub d2_fit_range: f64,
    pub d3_prime: Verdict,
    pub d3_multiplicity: usize,
    pub h3: Verdict,
    pub h3_min_gap: f64,
    pub a_coeffs: Vec<(f64, f64)>,
    pub overall: bool,
}

/// (D1), (D2), (D3′) and (H3) from a sweep and the Jordan analysis.
pub fn stability_verdict(spectrum: &BlochSpectrum, jordan: &JordanStructure) -> StabilityVerdict {
    let n = spectrum.n;
    let tol = 1e-10;
    let zone = PI / spectrum.period;
    let grid = &spectrum.xi_grid;
    // First |ξ| > 0 at which two critical branches come together.
    let mut crossing = f64::INFINITY;
    for (k, &xi) in grid.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        for (ia, &a) in spectrum.critical.iter().enumerate() {
            for &b in &spectrum.critical[ia + 1..] {
                let d = (spectrum.surfaces[a][k] - spectrum.surfaces[b][k]).norm();
                if d < 1e-8 * (1.0 + spectrum.surfaces[a][k].norm()) {
                    crossing = crossing.min(xi.abs());
                }
            }
        }
    }
    let xi_fit = (0.2 * zone).min(0.5 * crossing);
    let mut d1_max = f64::NEG_INFINITY;
    let mut d1_arg = f64::NAN;
    for (k, &xi) in grid.iter().enumerate() {
        if xi == 0.0 || xi.abs() < xi_fit {
            continue;
        }
        let m = spectrum.max_re(k);
        if m > d1_max {
            d1_max = m;
            d1_arg = xi;
        }
    }
    let d1 = if d1_max.is_nan() || d1_max == f64::NEG_INFINITY {
        Verdict::Marginal
    } else if d1_max > tol {
        Verdict::Fail
    } else if d1_max > -tol {
        Verdict::Marginal
    } else {
        Verdict::Pass
    };
    let mut theta = f64::INFINITY;
    let mut any = false;
    for (k, &xi) in grid.iter().enumerate() {
        if xi == 0.0 || xi.abs() > xi_fit {
            continue;
        }
        for &b in &spectrum.critical {
            let re = spectrum.surfaces[b][k].re;
            theta = theta.min(-re / (xi * xi));
            any = true;
        }
    }
    let d2 = if !any {
        Verdict::Marginal
    } else if theta > 1e-8 {
        Verdict::Pass
    } else if theta > -1e-8 {
        Verdict::Marginal
    } else {
        Verdict::Fail
    };
    let chain_ok = jordan.chain_heights == vec![2];
    let d3 = if jordan.multiplicity == n + 1 && chain_ok { Verdict::Pass } else { Verdict::Fail };
    // a_j = i λ_j(ξ)/ξ at the smallest positive grid point.
    let kmin = (0..grid.len()).filter(|&k| grid[k] > 0.0).min_by(|&a, &b| grid[a].total_cmp(&grid[b]));
    let mut a_coeffs = vec![];
    if let Some(k) = kmin {
        for &b in &spectrum.critical {
            let a = c(0.0, 1.0) * spectrum.surfaces[b][k] / cr(grid[k]);
            a_coeffs.push((a.re, a.im));
        }
    }
    let mut gap = f64::INFINITY;
    for i in 0..a_coeffs.len() {
        for j in i + 1..a_coeffs.len() {
            let d = ((a_coeffs[i].0 - a_coeffs[j].0).powi(2) + (a_coeffs[i].1 - a_coeffs[j].1).powi(2)).sqrt();
            gap = gap.min(d);
        }
    }
    let h3 = if a_coeffs.len() < n + 1 {
        Verdict::Marginal
    } else if gap > 1e-6 {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    let overall = [d1, d2, d3, h3].iter().all(|v| *v == Verdict::Pass);
    StabilityVerdict {
        d1,
        d1_max_re: d1_max,
        d1_argmax_xi: d1_arg,
        d2,
        d2_theta: theta,
        d2_fit_range: xi_fit,
        d3_prime: d3,
        d3_multiplicity: jordan.multiplicity,
        h3,
        h3_min_gap: gap,
        a_coeffs,
        overall,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_viscous_psystem, tilted_viscous_psystem};
    use crate::testing::{duffing_wave, tilted_wave};
    use proptest::prelude::*;

    fn constant(state: [f64; 2], period: f64) -> ProfileSolution {
        let sys = tilted_viscous_psystem(1.0, -1.0, 0.0, 0.5).unwrap();
        ProfileSolution::constant_state(&sys, &state, period, 32).unwrap()
    }

    /// Eigenvalues of the 2×2 flux Jacobian by the quadratic formula.
    fn jac_eigs(p: &ProfileSolution, u: &[f64]) -> [c64; 2] {
        let j = p.system.jacobian(u);
        let tr = j[0] + j[3];
        let det = j[0] * j[3] - j[1] * j[2];
        let disc = cr(tr * tr - 4.0 * det).sqrt();
        [(cr(tr) + disc) / 2.0, (cr(tr) - disc) / 2.0]
    }

    fn closed_form(p: &ProfileSolution, xi: f64, xt2: f64, modes: usize) -> Vec<c64> {
        let mus = jac_eigs(p, &p.base_point);
        let kappa = 2.0 * PI / p.period;
        let mut out = vec![];
        for l in mode_window(xi, modes) {
            let k = xi + kappa * l as f64;
            for mu in mus {
                out.push(cr(-k * k - xt2) - c(0.0, k) * mu);
            }
        }
        out
    }

    fn max_mismatch(a: &[c64], b: &[c64]) -> f64 {
        let perm = linalg::match_nearest(a, b);
        a.iter().zip(&perm).map(|(x, &j)| (x - b[j]).norm() / (1.0 + x.norm())).fold(0.0, f64::max)
    }

    #[test]
    fn constant_state_closed_form() {
        let p = constant([0.3, -0.2], 5.0);
        for (xi, xt2) in [(0.0, 0.0), (0.31, 0.0), (-0.5, 0.07)] {
            let op = assemble_l_xi(&p, xi, xt2, 16).unwrap();
            let ev = linalg::eig_dense(&op.matrix, false).unwrap().eigenvalues;
            assert!(max_mismatch(&closed_form(&p, xi, xt2, 16), &ev) < 1e-10);
        }
    }

    #[test]
    fn assembly_rejects_bad_input() {
        let p = constant([0.3, -0.2], 5.0);
        assert!(assemble_l_xi(&p, 0.0, 0.0, 14).is_err());
        assert!(assemble_l_xi(&p, 0.0, 0.0, 18 + 1).is_err());
        assert!(assemble_l_xi(&p, 1.01 * PI / 5.0, 0.0, 16).is_err());
        assert!(assemble_l_xi(&p, 0.0, -1.0, 16).is_err());
    }

    #[test]
    fn adjoint_matches_direct_assembly() {
        let p = tilted_wave(48);
        let modes = 32;
        let op = assemble_l_xi(&p, 0.0, 0.0, modes).unwrap();
        // Independent route: Fourier coefficients of A* by a direct DFT, then ∂² + A*∂.
        let m = 256;
        let fine = p.profile.resample(m).unwrap();
        let kappa = 2.0 * PI / p.period;
        let coef = |a: usize, b: usize, k: i64| {
            let mut s = cr(0.0);
            for q in 0..m {
                let u = [fine.values[0][q].re, fine.values[1][q].re];
                let j = p.system.jacobian(&u);
                let mut v = j[b * 2 + a];
                if a == b {
                    v -= p.speed;
                }
                s += cr(v) * c64::from_polar(1.0, -2.0 * PI * (k * q as i64) as f64 / m as f64);
            }
            s / m as f64
        };
        let win = mode_window(0.0, modes);
        let mut worst: f64 = 0.0;
        for a in 0..2 {
            for (i, &li) in win.iter().enumerate() {
                for b in 0..2 {
                    for (j, &lj) in win.iter().enumerate() {
                        let mut v = coef(a, b, li - lj) * c(0.0, kappa * lj as f64);
                        if a == b && i == j {
                            v -= cr(kappa * kappa * (li * li) as f64);
                        }
                        let w = op.matrix[(b * modes + j, a * modes + i)].conj();
                        worst = worst.max((v - w).norm());
                    }
                }
            }
        }
        assert!(worst < 1e-10, "{worst}");
    }

    fn random_field(seed: u64, m: usize, np: usize) -> SpectralField {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let grid = PeriodicGrid::new(m * np, 1.7 * m as f64).unwrap();
        let values = (0..2).map(|_| (0..m * np).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect()).collect();
        SpectralField::new(grid, values).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]
        #[test]
        fn bloch_isometry(seed in 0u64..1_000_000, m in 1usize..9) {
            let u = random_field(seed, m, 16);
            let b = bloch_transform(&u, 1.7).unwrap();
            let rel = (bloch_norm(&b) - u.l2_norm()).abs() / u.l2_norm();
            prop_assert!(rel < 1e-12);
        }

        #[test]
        fn bloch_round_trip(seed in 0u64..1_000_000, m in 1usize..9) {
            let u = random_field(seed, m, 8);
            let back = inverse_bloch_transform(&bloch_transform(&u, 1.7).unwrap());
            prop_assert!(back.sub(&u).sup_norm() < 1e-12);
        }
    }

    #[test]
    fn single_channel_stays_single() {
        let (m, np, x) = (6usize, 16usize, 2.0);
        let grid = PeriodicGrid::new(m * np, x * m as f64).unwrap();
        let xi = 2.0 * PI * 2.0 / (m as f64 * x);
        let values = vec![grid
            .nodes()
            .iter()
            .map(|&y| c64::from_polar(1.0, xi * y) * cr(1.0 + 0.5 * (2.0 * PI * y / x).cos()))
            .collect()];
        let u = SpectralField::new(grid, values).unwrap();
        let b = bloch_transform(&u, x).unwrap();
        for (j, q) in b.channels.iter().enumerate() {
            if b.channel_index[j] == 2 {
                assert!(q.sup_norm() > 0.5);
            } else {
                assert!(q.sup_norm() < 1e-12);
            }
        }
    }

    #[test]
    fn non_integer_multiple_rejected() {
        let u = random_field(1, 3, 8);
        assert!(bloch_transform(&u, 1.7 * 1.1).is_err());
    }

    #[test]
    fn tilted_wave_jordan_structure() {
        let p = tilted_wave(64);
        let pol = ClusterPolicy::default();
        let j = analyze_jordan_at_zero(&p, 64, &pol).unwrap();
        assert_eq!(j.kernel_dim, 2);
        assert_eq!(j.chain_heights, vec![2]);
        assert_eq!(j.multiplicity, 3);
        assert!(j.chain_base_angle < 1e-4);
        assert!(j.translation_residual < 1e-8);
        assert!(j.left_constant_residual < 1e-8);
        assert!(j.generalized_residual < 1e-6);
        let j2 = analyze_jordan_at_zero(&p, 128, &pol).unwrap();
        assert_eq!(j2.multiplicity, 3);
        assert_eq!(j2.chain_heights, vec![2]);
    }

    #[test]
    fn untilted_duffing_is_semisimple() {
        // Without the tilt the zero eigenvalue is still triple, but with no chain.
        let p = duffing_wave(0.5, 64);
        let j = analyze_jordan_at_zero(&p, 64, &ClusterPolicy::default()).unwrap();
        assert_eq!(j.multiplicity, 3);
        assert_eq!(j.kernel_dim, 3);
        assert!(j.chain_heights.is_empty());
    }

    #[test]
    fn constant_sweep_matches_closed_form() {
        let p = constant([0.2, 0.4], 4.0);
        let grid = refined_xi_grid(4.0, 4, 2, 1e-3);
        let sp = spectrum_sweep(&p, &grid, 16, 4).unwrap();
        for (k, &xi) in grid.iter().enumerate() {
            assert!(max_mismatch(&closed_form(&p, xi, 0.0, 16), &sp.eigenvalues[k]) < 1e-10);
        }
    }

    #[test]
    fn sweep_conjugate_symmetry_and_gap() {
        let p = tilted_wave(64);
        let grid = refined_xi_grid(p.period, 6, 3, 1e-3 * PI / p.period);
        let sp = spectrum_sweep(&p, &grid, 64, 5).unwrap();
        let nk = grid.len();
        for k in 0..nk / 2 {
            let mirror: Vec<c64> = sp.eigenvalues[nk - 1 - k].iter().map(|z| z.conj()).collect();
            assert!(max_mismatch(&sp.eigenvalues[k], &mirror) < 1e-8);
            for &b in &sp.critical {
                assert!((sp.surfaces[b][k] - sp.surfaces[b][nk - 1 - k].conj()).norm() < 1e-8);
            }
        }
        assert_eq!(sp.critical.len(), 3);
        let pol = ClusterPolicy::default();
        let zero = grid.iter().position(|&x| x == 0.0).unwrap();
        let c1 = find_zero_cluster(&sp.eigenvalues[zero], &pol).unwrap();
        assert_eq!(c1.eigenvalues.len(), 3);
        let op = assemble_l_xi(&p, 0.0, 0.0, 128).unwrap();
        let c2 = find_zero_cluster(&linalg::eig_dense(&op.matrix, false).unwrap().eigenvalues, &pol).unwrap();
        assert!(c1.real_gap > 0.0);
        assert!((c1.real_gap - c2.real_gap).abs() < 1e-2 * c2.real_gap);
    }

    #[test]
    fn constant_state_fails_d3() {
        let p = constant([0.2, 0.4], 4.0);
        let j = analyze_jordan_at_zero(&p, 16, &ClusterPolicy::default()).unwrap();
        assert_eq!(j.multiplicity, 2);
        let grid = refined_xi_grid(4.0, 4, 2, 1e-3);
        let sp = spectrum_sweep(&p, &grid, 16, 4).unwrap();
        let v = stability_verdict(&sp, &j);
        assert_eq!(v.d3_prime, Verdict::Fail);
        assert!(!v.overall);
    }

    #[test]
    fn planted_unstable_branch_fails_d1() {
        let grid = vec![-1.0, -0.5, 0.0, 0.5, 1.0];
        let stable = |xi: f64| cr(-xi * xi - 1.0);
        let mut eigenvalues: Vec<Vec<c64>> = grid.iter().map(|&x| vec![stable(x), c(-x * x, -x), c(-x * x, x), cr(-2.0 * x * x)]).collect();
        eigenvalues[3][0] = cr(1e-3);
        let surfaces = (0..4).map(|b| (0..5).map(|k| eigenvalues[k][b]).collect()).collect();
        let sp = BlochSpectrum {
            n: 2,
            period: PI,
            modes: 2,
            xi_grid: grid,
            eigenvalues,
            surfaces,
            critical: vec![1, 2, 3],
            ambiguities: vec![],
            critical_vectors: vec![],
        };
        let j = JordanStructure {
            modes: 2,
            kernel_dim: 2,
            chain_heights: vec![2],
            multiplicity: 3,
            cluster: None,
            right_kernel: vec![],
            left_kernel: vec![],
            chain_base: None,
            generalized: None,
            chain_base_angle: 0.0,
            translation_residual: 0.0,
            generalized_residual: 0.0,
            left_constant_residual: 0.0,
            right_subspace: None,
            left_subspace: None,
            singular_values: vec![],
        };
        let v = stability_verdict(&sp, &j);
        assert_eq!(v.d1, Verdict::Fail);
        assert!((v.d1_max_re - 1e-3).abs() < 1e-15);
        assert_eq!(v.d1_argmax_xi, 0.5);
        assert!(!v.overall);
    }

    #[test]
    fn builtin_system_constant_block_structure() {
        let sys = builtin_viscous_psystem(1.0, -1.0, 0.0).unwrap();
        let p = ProfileSolution::constant_state(&sys, &[0.1, 0.0], 3.0, 16).unwrap();
        let op = assemble_l_xi(&p, 0.0, 0.0, 16).unwrap();
        // Block-diagonal in Fourier modes.
        for i in 0..32 {
            for j in 0..32 {
                if i % 16 != j % 16 {
                    assert_eq!(op.matrix[(i, j)], cr(0.0));
                }
            }
        }
    }
}
