//! Low-frequency reduction: dual bases of the critical eigenspace, the reduced matrices
//! M₀, M₁, M₂, the singular rescaling and comparison with the averaged (Whitham) system.

use crate::bloch::{self, assemble_with_table, CoefficientTable, JordanStructure};
use crate::error::{Error, Result};
use crate::linalg::{self, c, cr, c64, CMat};
use crate::profile::{ProfileFamily, ProfileSolution};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NormalizationCertificate {
    /// Largest non-constant fraction of ṽ_j, j ≠ n, at ξ = 0.
    pub left_constant_residual: f64,
    /// Angle between v_n and ū′ at ξ = 0.
    pub derivative_angle: f64,
    pub biorthogonality: f64,
}

/// Fixed ξ = 0 bases: columns [kernel ⊥ ū′ …, ū′, g] and their duals.
#[derive(Debug, Clone)]
pub struct ZeroBases {
    pub modes: usize,
    pub n: usize,
    pub v0: CMat,
    pub vt0: CMat,
    pub certificate: NormalizationCertificate,
}

#[derive(Debug, Clone)]
pub struct DualBases {
    pub xi1: f64,
    pub modes: Vec<i64>,
    pub v: CMat,
    pub vt: CMat,
    pub projector: CMat,
    pub invariance_residual: f64,
    pub certificate: NormalizationCertificate,
}

fn remove_component(v: &[c64], along: &[c64]) -> Vec<c64> {
    let d = linalg::dot(along, v) / cr(linalg::dot(along, along).re);
    v.iter().zip(along).map(|(x, a)| x - d * a).collect()
}

pub fn zero_bases(profile: &ProfileSolution, jordan: &JordanStructure) -> Result<ZeroBases> {
    let n = profile.n();
    let modes = jordan.modes;
    let k = n + 1;
    let ud = bloch::derivative_coeffs(profile, modes);
    let q = jordan.right_subspace.as_ref().ok_or(Error::InvalidInput("Jordan analysis carries no subspace".into()))?;
    let qt = jordan.left_subspace.as_ref().ok_or(Error::InvalidInput("Jordan analysis carries no subspace".into()))?;
    if q.ncols() != k {
        return Err(Error::ClusterDimension { found: q.ncols(), expected: k, xi: 0.0 });
    }
    let mut others: Vec<Vec<c64>> = vec![];
    for kv in &jordan.right_kernel {
        let mut w = remove_component(kv, &ud);
        for o in &others {
            w = remove_component(&w, o);
        }
        if linalg::vnorm(&w) > 1e-6 * linalg::vnorm(kv) {
            let nw = linalg::vnorm(&w);
            others.push(w.into_iter().map(|z| z / nw).collect());
        }
    }
    let mut cols: Vec<Vec<c64>> = vec![];
    match &jordan.generalized {
        Some(g) => {
            if others.len() < n - 1 {
                return Err(Error::ClusterDimension { found: others.len() + 2, expected: k, xi: 0.0 });
            }
            cols.extend(others.iter().take(n - 1).cloned());
            cols.push(ud.clone());
            cols.push(g.clone());
        }
        None => {
            if others.len() < n {
                return Err(Error::ClusterDimension { found: others.len() + 1, expected: k, xi: 0.0 });
            }
            cols.extend(others.iter().take(n - 1).cloned());
            cols.push(ud.clone());
            cols.push(others[n - 1].clone());
        }
    }
    let v0 = linalg::from_cols(&cols);
    let vt0 = qt * linalg::inverse(&(v0.adjoint() * qt));
    let zero_slot = modes / 2;
    let mut left_res: f64 = 0.0;
    for j in (0..k).filter(|&j| j != n - 1) {
        let w = linalg::col(&vt0, j);
        let mut off = 0.0;
        for comp in 0..n {
            for i in (0..modes).filter(|&i| i != zero_slot) {
                off += w[comp * modes + i].norm_sqr();
            }
        }
        left_res = left_res.max(off.sqrt() / linalg::vnorm(&w));
    }
    let bi = linalg::fro(&(vt0.adjoint() * &v0 - linalg::identity(k)));
    Ok(ZeroBases {
        modes,
        n,
        certificate: NormalizationCertificate {
            left_constant_residual: left_res,
            derivative_angle: bloch::angle(&linalg::col(&v0, n - 1), &ud),
            biorthogonality: bi,
        },
        v0,
        vt0,
    })
}

/// Move coefficient columns from the ξ ≥ 0 window to the ξ < 0 window (drop l = −N/2, zero l = N/2).
fn to_negative_window(m: &CMat, n: usize, modes: usize) -> CMat {
    let mut out = linalg::zeros(m.nrows(), m.ncols());
    for j in 0..m.ncols() {
        for comp in 0..n {
            for i in 0..modes - 1 {
                out[(comp * modes + i, j)] = m[(comp * modes + i + 1, j)];
            }
        }
    }
    out
}

/// Total eigenprojection of the critical group at ξ₁ and the projected, re-biorthonormalized bases.
pub fn build_dual_bases(profile: &ProfileSolution, jordan: &JordanStructure, xi1: f64, modes: usize) -> Result<DualBases> {
    let table = CoefficientTable::new(profile, modes)?;
    let zb = zero_bases(profile, jordan)?;
    dual_bases_with(profile.period, &table, &zb, jordan, xi1)
}

pub fn dual_bases_with(period: f64, table: &CoefficientTable, zb: &ZeroBases, jordan: &JordanStructure, xi1: f64) -> Result<DualBases> {
    let modes = zb.modes;
    let n = zb.n;
    let k = n + 1;
    let radius0 = jordan.cluster.as_ref().map_or(1e-6, |c| c.radius);
    let gap = jordan.cluster.as_ref().map_or(f64::INFINITY, |c| c.gap);
    let op = assemble_with_table(period, table, xi1, 0.0, modes)?;
    let l = &op.matrix;
    let shift = c(0.37, 0.61) * radius0.max(0.5 * xi1.abs());
    let (q, res) = bloch::invariant_subspace(l, k, shift, 10);
    let lh = linalg::adjoint(l);
    let (qt, res_t) = bloch::invariant_subspace(&lh, k, shift.conj(), 10);
    let bq = q.adjoint() * l * &q;
    let cluster_eigs = linalg::eig_dense(&bq, false)?.eigenvalues;
    let spread = cluster_eigs.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let residual = res.max(res_t);
    if residual > 1e-6 || spread > 0.5 * gap {
        return Err(Error::ClusterDimension { found: 0, expected: k, xi: xi1 });
    }
    let projector = &q * linalg::inverse(&(qt.adjoint() * &q)) * qt.adjoint();
    let (v0, vt0) = if xi1 < 0.0 {
        (to_negative_window(&zb.v0, n, modes), to_negative_window(&zb.vt0, n, modes))
    } else {
        (zb.v0.clone(), zb.vt0.clone())
    };
    let v = &projector * &v0;
    let vt_raw = projector.adjoint() * &vt0;
    let vt = &vt_raw * linalg::inverse(&(v.adjoint() * &vt_raw));
    let bi = linalg::fro(&(vt.adjoint() * &v - linalg::identity(k)));
    let mut certificate = zb.certificate;
    certificate.biorthogonality = bi;
    Ok(DualBases { xi1, modes: op.modes, v, vt, projector, invariance_residual: residual, certificate })
}

/// Reduced matrix M_ξ = Ṽ* L_ξ V.
pub fn reduced_matrix(period: f64, table: &CoefficientTable, bases: &DualBases) -> Result<CMat> {
    let modes = bases.modes.len();
    let op = assemble_with_table(period, table, bases.xi1, 0.0, modes)?;
    Ok(bases.vt.adjoint() * &op.matrix * &bases.v)
}

/// Geometric ladder (ratio 2) of |ξ| values starting at `top`·π/X.
pub fn default_ladder(period: f64, top: f64, points: usize) -> Vec<f64> {
    (0..points).map(|k| top * PI / period / 2f64.powi(k as i32)).collect()
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct StructureResiduals {
    /// ‖M₀^{n+1}‖/‖M₀‖ (or ‖M₀‖ when M₀ vanishes).
    pub nilpotency: f64,
    /// Deviation of M₀ from the single superdiagonal unit pattern.
    pub pattern: f64,
    /// max |M₁[i, n]| over i ≠ n (1-based column n).
    pub m1_zeros: f64,
    pub semisimple: bool,
}

#[derive(Debug, Clone)]
pub struct DirectionFit {
    pub omega: f64,
    pub samples: Vec<CMat>,
    /// Polynomial coefficients C_0, C_1, … of M_ξ in |ξ|.
    pub coefficients: Vec<CMat>,
    pub fit_residual: f64,
    pub structure: StructureResiduals,
    /// Eigenvalues of M_ξ at each ladder point.
    pub eigenvalues: Vec<Vec<c64>>,
}

#[derive(Debug, Clone)]
pub struct ReducedPencil {
    pub n: usize,
    pub ladder: Vec<f64>,
    pub v: CMat,
    pub v_tilde: CMat,
    pub certificate: NormalizationCertificate,
    pub m0: CMat,
    pub m1: CMat,
    pub m2: CMat,
    pub positive: DirectionFit,
    pub negative: Option<DirectionFit>,
}

/// Least-squares polynomial fit of matrix samples in t, degree `deg`.
pub fn fit_matrix_polynomial(ts: &[f64], samples: &[CMat], deg: usize) -> Result<(Vec<CMat>, f64)> {
    let np = ts.len();
    if np < deg + 1 {
        return Err(Error::InvalidInput("not enough ladder points for the fit degree".into()));
    }
    let tmax = ts.iter().cloned().fold(0.0, f64::max);
    let vand = CMat::from_fn(np, deg + 1, |i, j| cr((ts[i] / tmax).powi(j as i32)));
    let q = linalg::orthonormalize(&vand);
    let r = q.adjoint() * &vand;
    let (rows, cols) = (samples[0].nrows(), samples[0].ncols());
    let mut coeffs = vec![linalg::zeros(rows, cols); deg + 1];
    let mut worst: f64 = 0.0;
    let scale = samples.iter().map(linalg::fro).fold(1e-300, f64::max);
    for a in 0..rows {
        for b in 0..cols {
            let y = CMat::from_fn(np, 1, |i, _| samples[i][(a, b)]);
            let cvec = linalg::solve(&r, &(q.adjoint() * &y));
            for j in 0..=deg {
                coeffs[j][(a, b)] = cvec[(j, 0)] / cr(tmax.powi(j as i32));
            }
            let fitted = &vand * &cvec;
            for i in 0..np {
                worst = worst.max((fitted[(i, 0)] - y[(i, 0)]).norm() / scale);
            }
        }
    }
    Ok((coeffs, worst))
}

fn structure_residuals(m0: &CMat, m1: &CMat, n: usize) -> StructureResiduals {
    let k = n + 1;
    let p = n - 1;
    let norm0 = linalg::fro(m0);
    let semisimple = norm0 < 1e-8;
    let mut pw = linalg::identity(k);
    for _ in 0..k {
        pw = &pw * m0;
    }
    let nilpotency = if semisimple { norm0 } else { linalg::fro(&pw) / norm0 };
    let mut pattern = linalg::zeros(k, k);
    if !semisimple {
        pattern[(p, n)] = cr(1.0);
    }
    let pattern = linalg::fro(&(m0 - pattern));
    let m1_zeros = (0..k).filter(|&i| i != p).map(|i| m1[(i, p)].norm()).fold(0.0, f64::max);
    StructureResiduals { nilpotency, pattern, m1_zeros, semisimple }
}

fn direction_fit(
    period: f64,
    table: &CoefficientTable,
    zb: &ZeroBases,
    jordan: &JordanStructure,
    ladder: &[f64],
    omega: f64,
    deg: usize,
) -> Result<DirectionFit> {
    let n = zb.n;
    let mut samples = vec![];
    let mut eigenvalues = vec![];
    for &t in ladder {
        let b = dual_bases_with(period, table, zb, jordan, omega * t)?;
        let m = reduced_matrix(period, table, &b)?;
        eigenvalues.push(linalg::eig_dense(&m, false)?.eigenvalues);
        samples.push(m);
    }
    let deg = deg.min(ladder.len() - 1);
    let (coefficients, fit_residual) = fit_matrix_polynomial(ladder, &samples, deg)?;
    let structure = structure_residuals(&coefficients[0], &coefficients[1], n);
    Ok(DirectionFit { omega, samples, coefficients, fit_residual, structure, eigenvalues })
}

/// M_ξ on the ladder for ω = ±1 and the fitted M₀, M₁, M₂ (ω = +1).
pub fn reduced_matrices(profile: &ProfileSolution, jordan: &JordanStructure, ladder: &[f64], both: bool) -> Result<ReducedPencil> {
    if ladder.len() < 4 || ladder.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::InvalidInput("ladder needs at least 4 positive |xi| values".into()));
    }
    let modes = jordan.modes;
    let table = CoefficientTable::new(profile, modes)?;
    let zb = zero_bases(profile, jordan)?;
    let deg = 5;
    let positive = direction_fit(profile.period, &table, &zb, jordan, ladder, 1.0, deg)?;
    if positive.fit_residual > 1e-6 {
        return Err(Error::FitResidual(positive.fit_residual));
    }
    let negative = if both {
        Some(direction_fit(profile.period, &table, &zb, jordan, ladder, -1.0, deg)?)
    } else {
        None
    };
    let co = &positive.coefficients;
    Ok(ReducedPencil {
        n: zb.n,
        ladder: ladder.to_vec(),
        v: zb.v0.clone(),
        v_tilde: zb.vt0.clone(),
        certificate: zb.certificate,
        m0: co[0].clone(),
        m1: co[1].clone(),
        m2: co.get(2).cloned().unwrap_or_else(|| linalg::zeros(zb.n + 1, zb.n + 1)),
        positive,
        negative,
    })
}

/// M̌ = |ξ|⁻¹ S M S⁻¹ with S = diag(I_{n−1}, |ξ|, 1).
pub fn rescale(m: &CMat, t: f64, n: usize) -> CMat {
    let p = n - 1;
    let w = |i: usize| if i == p { t } else { 1.0 };
    CMat::from_fn(n + 1, n + 1, |i, j| m[(i, j)] * cr(w(i) / (w(j) * t)))
}

/// Leading terms (M̌₀, M̌₁) of the rescaled pencil from the polynomial coefficients.
pub fn rescaled_leading(coeffs: &[CMat], n: usize) -> (CMat, CMat) {
    let p = n - 1;
    let k = n + 1;
    let get = |d: usize, i: usize, j: usize| coeffs.get(d).map_or(cr(0.0), |m| m[(i, j)]);
    // Entry (i,j) of M̌ is Σ_d C_d[i,j] t^{d-1+e} with e = [i=p] − [j=p].
    let lead = |order: usize| {
        CMat::from_fn(k, k, |i, j| {
            let e = (i == p) as i64 - (j == p) as i64;
            let d = order as i64 + 1 - e;
            if d < 0 {
                cr(0.0)
            } else {
                get(d as usize, i, j)
            }
        })
    };
    (lead(0), lead(1))
}

#[derive(Debug, Clone)]
pub struct RescaledPencil {
    pub omega: f64,
    pub s_weight_index: usize,
    pub m_check_0: CMat,
    pub m_check_1: CMat,
    /// m_branches[j][k] = m_j(|ξ_k|).
    pub m_branches: Vec<Vec<c64>>,
    pub m_limit: Vec<c64>,
    pub m_check_eigenvalues: Vec<c64>,
    /// |m_j(0) − eig(M̌₀)| after matching.
    pub limit_vs_direct: f64,
    pub cauchy: f64,
    /// a_j with λ_j = −i a_j ξ; ω = −1 yields the conjugate set.
    pub a_coeffs: Vec<c64>,
}

fn richardson(values: &[c64], ratio: f64) -> (c64, f64) {
    let nl = values.len();
    let mut table: Vec<Vec<c64>> = vec![values.to_vec()];
    let mut diag = vec![values[0]];
    for l in 1..nl {
        let f = ratio.powi(l as i32);
        let prev = &table[l - 1];
        let next: Vec<c64> = (1..prev.len()).map(|k| (prev[k] * f - prev[k - 1]) / (f - 1.0)).collect();
        diag.push(*next.last().unwrap());
        table.push(next);
        if table[l].len() == 1 {
            break;
        }
    }
    let best = *diag.last().unwrap();
    let cauchy = if diag.len() >= 2 { (diag[diag.len() - 1] - diag[diag.len() - 2]).norm() } else { f64::INFINITY };
    (best, cauchy)
}

/// Rescale the ladder samples of one direction and extrapolate the branch eigenvalues to 0.
pub fn rescale_direction(fit: &DirectionFit, ladder: &[f64], n: usize) -> Result<RescaledPencil> {
    let nl = ladder.len();
    if nl < 3 {
        return Err(Error::InvalidInput("ladder too short".into()));
    }
    let ratio = ladder[0] / ladder[1];
    if ladder.windows(2).any(|w| ((w[0] / w[1]) - ratio).abs() > 1e-9 * ratio) || ratio <= 1.0 {
        return Err(Error::InvalidInput("ladder must be geometric and decreasing".into()));
    }
    let (mc0, mc1) = rescaled_leading(&fit.coefficients, n);
    let direct = linalg::eig_dense(&mc0, false)?.eigenvalues;
    let mut branches: Vec<Vec<c64>> = vec![vec![]; n + 1];
    let mut prev: Vec<c64> = vec![];
    for (k, &t) in ladder.iter().enumerate() {
        let mc = rescale(&fit.samples[k], t, n);
        let ev = linalg::eig_dense(&mc, false)?.eigenvalues;
        let ordered: Vec<c64> = if k == 0 {
            let perm = linalg::match_nearest(&direct, &ev);
            perm.iter().map(|&j| ev[j]).collect()
        } else {
            let perm = linalg::match_nearest(&prev, &ev);
            perm.iter().map(|&j| ev[j]).collect()
        };
        for j in 0..=n {
            branches[j].push(ordered[j]);
        }
        prev = ordered;
    }
    let mut limits = vec![];
    let mut cauchy: f64 = 0.0;
    for b in &branches {
        let (lim, cc) = richardson(b, ratio);
        limits.push(lim);
        cauchy = cauchy.max(cc);
    }
    let perm = linalg::match_nearest(&limits, &direct);
    let limit_vs_direct = limits.iter().zip(&perm).map(|(l, &j)| (l - direct[j]).norm()).fold(0.0, f64::max);
    let iu = c(0.0, 1.0);
    let a_coeffs = limits.iter().map(|m| if fit.omega > 0.0 { iu * m } else { -iu * m }).collect();
    Ok(RescaledPencil {
        omega: fit.omega,
        s_weight_index: n - 1,
        m_check_0: mc0,
        m_check_1: mc1,
        m_branches: branches,
        m_limit: limits,
        m_check_eigenvalues: direct,
        limit_vs_direct,
        cauchy,
        a_coeffs,
    })
}

pub fn rescale_and_extract(pencil: &ReducedPencil) -> Result<RescaledPencil> {
    let s = &pencil.positive.structure;
    if !s.semisimple && s.m1_zeros > 1e-6 {
        return Err(Error::Numerical(format!("structural zeros violated ({:.3e}); rescaling is singular", s.m1_zeros)));
    }
    let r = rescale_direction(&pencil.positive, &pencil.ladder, pencil.n)?;
    if r.cauchy > 1e-3 {
        return Err(Error::Extrapolation(r.cauchy));
    }
    Ok(r)
}

/// One evaluation of the averaged quantities at a family member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhithamSample {
    pub mean: Vec<f64>,
    pub flux_mean: Vec<f64>,
    pub frequency: f64,
    pub speed: f64,
}

impl WhithamSample {
    pub fn from_profile(p: &ProfileSolution) -> Self {
        let n = p.n();
        let np = p.num_points();
        let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let mean: Vec<f64> = (0..n).map(|c| avg(&p.profile.real(c))).collect();
        let mut fl = vec![vec![0.0; np]; n];
        let mut u = vec![0.0; n];
        for m in 0..np {
            for k in 0..n {
                u[k] = p.profile.values[k][m].re;
            }
            let f = p.system.flux(&u);
            for k in 0..n {
                fl[k][m] = f[k];
            }
        }
        let flux_mean = fl.iter().map(|v| avg(v)).collect();
        Self { mean, flux_mean, frequency: 1.0 / p.period, speed: p.speed }
    }

    fn state(&self) -> Vec<f64> {
        let mut v = self.mean.clone();
        v.push(self.frequency);
        v
    }

    fn fluxes(&self) -> Vec<f64> {
        let mut v = self.flux_mean.clone();
        v.push(self.frequency * self.speed);
        v
    }
}

#[derive(Debug, Clone)]
pub struct WhithamData {
    pub base: WhithamSample,
    /// ∂(M, Ω)/∂a and ∂(F, Ωs)/∂a along the family directions.
    pub a0: Vec<Vec<f64>>,
    pub a1: Vec<Vec<f64>>,
    pub condition: f64,
    pub characteristic_speeds: Vec<c64>,
    /// max |F − (q + sM)| over the patch.
    pub flux_identity_residual: f64,
}

/// Eigenvalues of A₀⁻¹A₁ for the linearized system A₀ ∂ₜa + A₁ ∂ₓa = 0.
pub fn whitham_speeds(a0: &[Vec<f64>], a1: &[Vec<f64>]) -> Result<(Vec<c64>, f64)> {
    let k = a0.len();
    let m0 = linalg::real_to_cmat(k, k, |i, j| a0[i][j]);
    let m1 = linalg::real_to_cmat(k, k, |i, j| a1[i][j]);
    let cond = linalg::cond(&m0);
    if !(cond < 1e8) {
        return Err(Error::IllConditioned(cond));
    }
    let ev = linalg::eig_dense(&linalg::solve(&m0, &m1), false)?.eigenvalues;
    Ok((ev, cond))
}

/// Centered-difference Jacobians from samples at a ± h_i d_i.
pub fn whitham_from_samples(base: WhithamSample, plus: &[WhithamSample], minus: &[WhithamSample], steps: &[f64]) -> Result<WhithamData> {
    let k = base.mean.len() + 1;
    if plus.len() != k || minus.len() != k || steps.len() != k {
        return Err(Error::InvalidInput(format!("need {k} directions for the averaged system")));
    }
    let mut a0 = vec![vec![0.0; k]; k];
    let mut a1 = vec![vec![0.0; k]; k];
    for j in 0..k {
        let (sp, sm, fp, fm) = (plus[j].state(), minus[j].state(), plus[j].fluxes(), minus[j].fluxes());
        for i in 0..k {
            a0[i][j] = (sp[i] - sm[i]) / (2.0 * steps[j]);
            a1[i][j] = (fp[i] - fm[i]) / (2.0 * steps[j]);
        }
    }
    let (speeds, cond) = whitham_speeds(&a0, &a1)?;
    Ok(WhithamData { base, a0, a1, condition: cond, characteristic_speeds: speeds, flux_identity_residual: 0.0 })
}

/// Linearized averaged system from a family patch with one ± member per direction.
pub fn whitham_characteristics(family: &ProfileFamily) -> Result<WhithamData> {
    let base = family.base();
    let k = base.n() + 1;
    let mut plus = vec![];
    let mut minus = vec![];
    let mut steps = vec![];
    let mut resid: f64 = 0.0;
    for d in 0..k {
        let members: Vec<_> = family.members.iter().filter(|m| m.direction == Some(d)).collect();
        let h = members.iter().map(|m| m.offset.abs()).filter(|&x| x > 0.0).fold(f64::INFINITY, f64::min);
        let p = family.find(d, h);
        let m = family.find(d, -h);
        let (Some(p), Some(m)) = (p, m) else {
            return Err(Error::InvalidInput(format!("family lacks a centered pair along direction {d}")));
        };
        for sol in [p, m] {
            let w = WhithamSample::from_profile(sol);
            for i in 0..base.n() {
                resid = resid.max((w.flux_mean[i] - (sol.flux_constant[i] + sol.speed * w.mean[i])).abs());
            }
        }
        plus.push(WhithamSample::from_profile(p));
        minus.push(WhithamSample::from_profile(m));
        steps.push(h);
    }
    let mut data = whitham_from_samples(WhithamSample::from_profile(base), &plus, &minus, &steps)?;
    data.flux_identity_residual = resid;
    Ok(data)
}

/// Largest distance between two sets after nearest matching.
pub fn set_distance(a: &[c64], b: &[c64]) -> f64 {
    let perm = linalg::match_nearest(a, b);
    a.iter().zip(&perm).map(|(x, &j)| (x - b[j]).norm()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bloch::{analyze_jordan_at_zero, spectrum_sweep, ClusterPolicy};
    use crate::testing::tilted_wave;

    struct Setup {
        p: ProfileSolution,
        j: JordanStructure,
    }

    fn setup() -> Setup {
        let p = tilted_wave(64);
        let j = analyze_jordan_at_zero(&p, 64, &ClusterPolicy::default()).unwrap();
        Setup { p, j }
    }

    #[test]
    fn zero_bases_normalization() {
        let s = setup();
        let b = build_dual_bases(&s.p, &s.j, 0.0, 64).unwrap();
        assert!(b.certificate.left_constant_residual < 1e-8);
        assert!(b.certificate.derivative_angle < 1e-6);
        assert!(b.certificate.biorthogonality < 1e-10);
    }

    #[test]
    fn projected_bases_biorthogonal_and_projector_idempotent() {
        let s = setup();
        for xi in [1e-3, -1e-3] {
            let b = build_dual_bases(&s.p, &s.j, xi, 64).unwrap();
            let bi = linalg::fro(&(b.vt.adjoint() * &b.v - linalg::identity(3)));
            assert!(bi < 1e-10, "{bi}");
            let pp = &b.projector * &b.projector - &b.projector;
            assert!(linalg::fro(&pp) < 1e-8 * linalg::fro(&b.projector));
        }
    }

    #[test]
    fn reduced_matrix_structure() {
        let s = setup();
        let ladder = default_ladder(s.p.period, 2e-2, 6);
        let pen = reduced_matrices(&s.p, &s.j, &ladder, false).unwrap();
        let st = &pen.positive.structure;
        assert!(!st.semisimple);
        assert!(st.pattern < 1e-8);
        assert!(st.m1_zeros < 1e-8);
        let m0sq = &pen.m0 * &pen.m0;
        assert!(linalg::fro(&m0sq) / linalg::fro(&pen.m0) < 1e-6);
    }

    #[test]
    fn reduced_eigenvalues_match_full_operator() {
        let s = setup();
        let ladder = default_ladder(s.p.period, 2e-2, 4);
        let pen = reduced_matrices(&s.p, &s.j, &ladder, false).unwrap();
        let mut grid: Vec<f64> = ladder.clone();
        grid.reverse();
        let sp = spectrum_sweep(&s.p, &grid, 64, 5).unwrap();
        for (k, &t) in ladder.iter().enumerate() {
            let kk = grid.iter().position(|&x| x == t).unwrap();
            let full: Vec<c64> = sp.critical.iter().map(|&b| sp.surfaces[b][kk]).collect();
            assert!(set_distance(&full, &pen.positive.eigenvalues[k]) < 1e-8);
        }
    }

    #[test]
    fn extrapolated_limits_match_direct_rescaled_matrix() {
        let s = setup();
        let ladder = default_ladder(s.p.period, 2e-2, 6);
        let pen = reduced_matrices(&s.p, &s.j, &ladder, true).unwrap();
        let r = rescale_and_extract(&pen).unwrap();
        assert!(r.cauchy < 1e-4);
        assert!(r.limit_vs_direct < 1e-4);
        for (k, &t) in ladder.iter().enumerate() {
            let lam: Vec<c64> = pen.positive.eigenvalues[k].clone();
            let m: Vec<c64> = r.m_branches.iter().map(|b| b[k] * t).collect();
            assert!(set_distance(&lam, &m) < 1e-10);
        }
        let rn = rescale_direction(pen.negative.as_ref().unwrap(), &ladder, 2).unwrap();
        let conj: Vec<c64> = r.a_coeffs.iter().map(|a| a.conj()).collect();
        assert!(set_distance(&conj, &rn.a_coeffs) < 1e-8);
    }

    #[test]
    fn planted_pencil_recovered() {
        // M̌₀ with eigenvalues {−i, 0, i}; M_ξ = S⁻¹ (t M̌₀ + t² M̌₁) S.
        let mc0 = CMat::from_fn(3, 3, |i, j| match (i, j) {
            (0, 2) => c(0.0, 1.0),
            (2, 0) => c(0.0, 1.0),
            (1, 1) => cr(0.0),
            _ => cr(0.0),
        });
        let mc1 = CMat::from_fn(3, 3, |i, j| cr(0.1 * (i as f64 - j as f64) + 0.05));
        let ladder = default_ladder(1.0, 1e-2, 6);
        let samples: Vec<CMat> = ladder
            .iter()
            .map(|&t| {
                let w = |i: usize| if i == 1 { t } else { 1.0 };
                CMat::from_fn(3, 3, |i, j| (mc0[(i, j)] * t + mc1[(i, j)] * t * t) * cr(w(j) / w(i)))
            })
            .collect();
        let (coefficients, fit_residual) = fit_matrix_polynomial(&ladder, &samples, 5).unwrap();
        assert!(fit_residual < 1e-10);
        let fit = DirectionFit {
            omega: 1.0,
            eigenvalues: vec![],
            samples,
            coefficients,
            fit_residual,
            structure: StructureResiduals::default(),
        };
        let r = rescale_direction(&fit, &ladder, 2).unwrap();
        let want = [c(0.0, -1.0), cr(0.0), c(0.0, 1.0)];
        assert!(set_distance(&want, &r.m_check_eigenvalues) < 1e-8);
        assert!(set_distance(&want, &r.m_limit) < 1e-8);
    }

    #[test]
    fn decoupled_transport_speeds() {
        // M = (a₁, a₂), F = c·M, Ω = 1 + a₃, s fixed: speeds {c, c, s}.
        let (cc, s) = (0.7, -0.3);
        let sample = |a: [f64; 3]| WhithamSample {
            mean: vec![a[0], a[1]],
            flux_mean: vec![cc * a[0], cc * a[1]],
            frequency: 1.0 + a[2],
            speed: s,
        };
        let h = 1e-3;
        let unit = |k: usize, sgn: f64| {
            let mut a = [0.0; 3];
            a[k] = sgn * h;
            sample(a)
        };
        let plus: Vec<_> = (0..3).map(|k| unit(k, 1.0)).collect();
        let minus: Vec<_> = (0..3).map(|k| unit(k, -1.0)).collect();
        let w = whitham_from_samples(sample([0.0; 3]), &plus, &minus, &[h; 3]).unwrap();
        assert!(set_distance(&[cr(cc), cr(cc), cr(s)], &w.characteristic_speeds) < 1e-10);
    }

    #[test]
    fn singular_change_of_variables_reported() {
        let a0 = vec![vec![1.0, 0.0], vec![0.0, 0.0]];
        let a1 = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert!(matches!(whitham_speeds(&a0, &a1), Err(Error::IllConditioned(_))));
    }

    #[test]
    fn short_ladder_rejected() {
        let s = setup();
        assert!(reduced_matrices(&s.p, &s.j, &[1e-3, 5e-4, 2.5e-4], false).is_err());
    }
}
