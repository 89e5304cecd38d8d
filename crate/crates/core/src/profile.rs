//! Periodic solutions of the profile ODE ū′ = f(ū) − sū − q.

use crate::error::{Error, Result};
use crate::grid::{fourier_diff, PeriodicGrid, SpectralField};
use crate::linalg::cr;
use crate::model::FluxSystem;
use faer::prelude::*;
use faer::Mat;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PhaseCondition {
    /// First component has its maximum at x = 0.
    FixMaxAtZero,
    /// ∫⟨ū − ū_ref, ū_ref′⟩ = 0 against the initial guess.
    IntegralPhase,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FreeParam {
    Speed,
    Flux(usize),
}

/// Extra condition fixing which member of the family is computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Closure {
    /// (s, q) fixed, X free.
    FixedParams,
    /// ū_component(0) = value, with one of (s, q) free.
    Amplitude { component: usize, value: f64, free: FreeParam },
    /// X = period, with one of (s, q) free.
    FixedPeriod { period: f64, free: FreeParam },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { max_iterations: 60, tolerance: 1e-12 }
    }
}

#[derive(Debug, Clone)]
pub struct ProfileSolution {
    pub system: FluxSystem,
    pub period: f64,
    pub speed: f64,
    pub flux_constant: Vec<f64>,
    pub base_point: Vec<f64>,
    pub profile: SpectralField,
    pub derivative: SpectralField,
    pub residual: f64,
    pub phase: PhaseCondition,
    pub closure: Closure,
    /// Condition number of the converged Newton matrix (NaN when not computed).
    pub jacobian_condition: f64,
    pub constant_state: bool,
}

impl ProfileSolution {
    /// A constant background state u ≡ c viewed as an X-periodic "wave".
    /// Used for constant-coefficient baselines; never produced by the BVP solver.
    pub fn constant_state(system: &FluxSystem, state: &[f64], period: f64, num_points: usize) -> Result<Self> {
        let grid = PeriodicGrid::new(num_points, period)?;
        let profile = SpectralField::from_fn(grid.clone(), system.n, |c, _| state[c]);
        let derivative = SpectralField::from_fn(grid, system.n, |_, _| 0.0);
        let q = system.flux(state);
        Ok(Self {
            system: system.clone(),
            period,
            speed: 0.0,
            flux_constant: q,
            base_point: state.to_vec(),
            profile,
            derivative,
            residual: 0.0,
            phase: PhaseCondition::IntegralPhase,
            closure: Closure::FixedParams,
            jacobian_condition: f64::NAN,
            constant_state: true,
        })
    }

    pub fn n(&self) -> usize {
        self.system.n
    }

    pub fn num_points(&self) -> usize {
        self.profile.grid.num_points
    }

    /// Parameter vector (s, q₁, …, q_n).
    pub fn params(&self) -> Vec<f64> {
        let mut p = vec![self.speed];
        p.extend_from_slice(&self.flux_constant);
        p
    }

    /// Right-hand side f(u) − s u − q.
    pub fn rhs(&self, u: &[f64]) -> Vec<f64> {
        profile_rhs(&self.system, u, self.speed, &self.flux_constant)
    }

    /// Same wave on a different number of nodes (spectral interpolation).
    pub fn resampled(&self, num_points: usize) -> Result<Self> {
        let mut out = self.clone();
        out.profile = self.profile.resample(num_points)?;
        out.derivative = self.derivative.resample(num_points)?;
        Ok(out)
    }
}

pub fn profile_rhs(system: &FluxSystem, u: &[f64], s: f64, q: &[f64]) -> Vec<f64> {
    let f = system.flux(u);
    (0..system.n).map(|c| f[c] - s * u[c] - q[c]).collect()
}

/// Spectral differentiation matrix on N equispaced points of [0, 1).
pub fn diff_matrix(n: usize) -> Mat<f64> {
    Mat::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            let d = i as f64 - j as f64;
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            PI * sign / (PI * d / n as f64).tan()
        }
    })
}

struct Layout {
    n: usize,
    np: usize,
    free: Option<FreeParam>,
}

impl Layout {
    fn size(&self) -> usize {
        self.n * self.np + 1 + usize::from(self.free.is_some())
    }
    fn x_index(&self) -> usize {
        self.n * self.np
    }
}

#[allow(clippy::too_many_arguments)]
fn residual_and_jacobian(
    system: &FluxSystem,
    lay: &Layout,
    d: &Mat<f64>,
    z: &[f64],
    s0: f64,
    q0: &[f64],
    phase: PhaseCondition,
    closure: Closure,
    reference: &[f64],
    reference_deriv: &[f64],
    want_jac: bool,
) -> (Vec<f64>, Option<Mat<f64>>) {
    let (n, np) = (lay.n, lay.np);
    let size = lay.size();
    let x = z[lay.x_index()];
    let mut s = s0;
    let mut q = q0.to_vec();
    if let Some(fp) = lay.free {
        let p = z[size - 1];
        match fp {
            FreeParam::Speed => s = p,
            FreeParam::Flux(i) => q[i] = p,
        }
    }
    let mut res = vec![0.0; size];
    let mut jac = if want_jac { Some(Mat::<f64>::zeros(size, size)) } else { None };
    let mut u = vec![0.0; n];
    for m in 0..np {
        for c in 0..n {
            u[c] = z[c * np + m];
        }
        let f = system.flux(&u);
        let df = system.jacobian(&u);
        for c in 0..n {
            let row = c * np + m;
            let mut du = 0.0;
            for k in 0..np {
                du += d[(m, k)] * z[c * np + k];
            }
            let g = f[c] - s * u[c] - q[c];
            res[row] = du - x * g;
            if let Some(j) = jac.as_mut() {
                for k in 0..np {
                    j[(row, c * np + k)] += d[(m, k)];
                }
                for e in 0..n {
                    let mut a = df[c * n + e];
                    if e == c {
                        a -= s;
                    }
                    j[(row, e * np + m)] -= x * a;
                }
                j[(row, lay.x_index())] = -g;
                if let Some(fp) = lay.free {
                    j[(row, size - 1)] = match fp {
                        FreeParam::Speed => x * u[c],
                        FreeParam::Flux(i) => {
                            if i == c {
                                x
                            } else {
                                0.0
                            }
                        }
                    };
                }
            }
        }
    }
    let prow = n * np;
    match phase {
        PhaseCondition::FixMaxAtZero => {
            res[prow] = (0..np).map(|k| d[(0, k)] * z[k]).sum();
            if let Some(j) = jac.as_mut() {
                for k in 0..np {
                    j[(prow, k)] = d[(0, k)];
                }
            }
        }
        PhaseCondition::IntegralPhase => {
            let mut r = 0.0;
            for i in 0..n * np {
                r += (z[i] - reference[i]) * reference_deriv[i];
                if let Some(j) = jac.as_mut() {
                    j[(prow, i)] = reference_deriv[i];
                }
            }
            res[prow] = r / np as f64;
            if let Some(j) = jac.as_mut() {
                for i in 0..n * np {
                    j[(prow, i)] /= np as f64;
                }
            }
        }
    }
    if lay.free.is_some() {
        let crow = size - 1;
        match closure {
            Closure::Amplitude { component, value, .. } => {
                res[crow] = z[component * np] - value;
                if let Some(j) = jac.as_mut() {
                    j[(crow, component * np)] = 1.0;
                }
            }
            Closure::FixedPeriod { period, .. } => {
                res[crow] = x - period;
                if let Some(j) = jac.as_mut() {
                    j[(crow, lay.x_index())] = 1.0;
                }
            }
            Closure::FixedParams => unreachable!(),
        }
    }
    (res, jac)
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, b| a.max(b.abs()))
}

fn condition(j: &Mat<f64>) -> f64 {
    match j.singular_values() {
        Ok(s) if !s.is_empty() => s[0] / s[s.len() - 1],
        _ => f64::INFINITY,
    }
}

/// Newton–spectral-collocation solve of the periodic profile BVP with (s, q) fixed and X free.
pub fn solve_profile_bvp(
    system: &FluxSystem,
    guess: &SpectralField,
    s: f64,
    q: &[f64],
    phase: PhaseCondition,
) -> Result<ProfileSolution> {
    solve_profile_bvp_with(system, guess, s, q, phase, Closure::FixedParams, NewtonOptions::default())
}

/// General form: `closure` selects which of (X, s, q) are unknown.
pub fn solve_profile_bvp_with(
    system: &FluxSystem,
    guess: &SpectralField,
    s: f64,
    q: &[f64],
    phase: PhaseCondition,
    closure: Closure,
    opts: NewtonOptions,
) -> Result<ProfileSolution> {
    let n = system.n;
    if guess.components() != n || q.len() != n {
        return Err(Error::InvalidInput("guess or flux constant has wrong dimension".into()));
    }
    if !guess.is_finite() || !s.is_finite() || q.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("profile guess"));
    }
    let np = guess.grid.num_points;
    let mean: Vec<f64> = (0..n).map(|c| guess.real(c).iter().sum::<f64>() / np as f64).collect();
    let spread = (0..n)
        .flat_map(|c| guess.real(c).into_iter().map(move |v| (c, v)))
        .map(|(c, v)| (v - mean[c]).abs())
        .fold(0.0, f64::max);
    if spread < 1e-6 {
        return Err(Error::ConstantState);
    }
    let free = match closure {
        Closure::FixedParams => None,
        Closure::Amplitude { free, .. } | Closure::FixedPeriod { free, .. } => Some(free),
    };
    if let Some(FreeParam::Flux(i)) = free {
        if i >= n {
            return Err(Error::InvalidInput("free flux index out of range".into()));
        }
    }
    let lay = Layout { n, np, free };
    let d = diff_matrix(np);
    let mut z = vec![0.0; lay.size()];
    for c in 0..n {
        for (m, v) in guess.real(c).into_iter().enumerate() {
            z[c * np + m] = v;
        }
    }
    z[lay.x_index()] = guess.grid.period;
    if let Some(fp) = free {
        z[lay.size() - 1] = match fp {
            FreeParam::Speed => s,
            FreeParam::Flux(i) => q[i],
        };
    }
    let reference: Vec<f64> = z[..n * np].to_vec();
    let mut reference_deriv = vec![0.0; n * np];
    for c in 0..n {
        for m in 0..np {
            reference_deriv[c * np + m] = (0..np).map(|k| d[(m, k)] * reference[c * np + k]).sum();
        }
    }
    let eval = |z: &[f64], jac: bool| {
        residual_and_jacobian(system, &lay, &d, z, s, q, phase, closure, &reference, &reference_deriv, jac)
    };
    let mut converged = false;
    let mut last_res = f64::INFINITY;
    let mut cond_est = f64::NAN;
    for _ in 0..opts.max_iterations {
        let (r, j) = eval(&z, true);
        let j = j.unwrap();
        let rn = inf_norm(&r);
        last_res = rn;
        if rn < opts.tolerance {
            converged = true;
            cond_est = condition(&j);
            break;
        }
        let rhs = Mat::from_fn(r.len(), 1, |i, _| -r[i]);
        let dz = j.partial_piv_lu().solve(&rhs);
        let dz: Vec<f64> = (0..r.len()).map(|i| dz[(i, 0)]).collect();
        if dz.iter().any(|x| !x.is_finite()) {
            return Err(Error::SingularJacobian { condition: condition(&j) });
        }
        let mut lam = 1.0;
        loop {
            let trial: Vec<f64> = z.iter().zip(&dz).map(|(a, b)| a + lam * b).collect();
            let (rt, _) = eval(&trial, false);
            if inf_norm(&rt) < rn || lam < 1.0 / 64.0 {
                z = trial;
                break;
            }
            lam *= 0.5;
        }
        if inf_norm(&dz) * lam < 1e-15 * (1.0 + inf_norm(&z)) {
            let (r, j) = eval(&z, true);
            last_res = inf_norm(&r);
            if last_res < 1e3 * opts.tolerance {
                converged = true;
                cond_est = condition(&j.unwrap());
            }
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence { iterations: opts.max_iterations, residual: last_res });
    }
    let x = z[lay.x_index()];
    if !(x > 0.0) {
        return Err(Error::Numerical(format!("non-positive period {x}")));
    }
    let mut s_out = s;
    let mut q_out = q.to_vec();
    if let Some(fp) = free {
        let p = z[lay.size() - 1];
        match fp {
            FreeParam::Speed => s_out = p,
            FreeParam::Flux(i) => q_out[i] = p,
        }
    }
    let grid = PeriodicGrid::new(np, x)?;
    let values: Vec<Vec<f64>> = (0..n).map(|c| z[c * np..(c + 1) * np].to_vec()).collect();
    let profile = SpectralField::from_real(grid, values)?;
    let sol = finish_solution(system, profile, s_out, q_out, phase, closure, cond_est)?;
    Ok(sol)
}

fn finish_solution(
    system: &FluxSystem,
    profile: SpectralField,
    s: f64,
    q: Vec<f64>,
    phase: PhaseCondition,
    closure: Closure,
    jacobian_condition: f64,
) -> Result<ProfileSolution> {
    let n = system.n;
    let np = profile.grid.num_points;
    let spread = (0..n)
        .map(|c| {
            let v = profile.real(c);
            let mean = v.iter().sum::<f64>() / np as f64;
            v.iter().map(|x| (x - mean).abs()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    if spread < 1e-6 {
        return Err(Error::ConstantState);
    }
    let mut derivative = fourier_diff(&profile, 1)?;
    for c in 0..n {
        for z in derivative.values[c].iter_mut() {
            *z = cr(z.re);
        }
    }
    let mut residual: f64 = 0.0;
    let mut u = vec![0.0; n];
    for m in 0..np {
        for c in 0..n {
            u[c] = profile.values[c][m].re;
        }
        let g = profile_rhs(system, &u, s, &q);
        for c in 0..n {
            residual = residual.max((derivative.values[c][m].re - g[c]).abs());
        }
    }
    let base_point = (0..n).map(|c| profile.values[c][0].re).collect();
    Ok(ProfileSolution {
        system: system.clone(),
        period: profile.grid.period,
        speed: s,
        flux_constant: q,
        base_point,
        profile,
        derivative,
        residual,
        phase,
        closure,
        jacobian_condition,
        constant_state: false,
    })
}

/// Harmonic initial guess u₁ = a cos(κx), u₂ chosen so the first profile equation holds at leading order.
pub fn harmonic_guess(system: &FluxSystem, amplitude: f64, period: f64, num_points: usize) -> Result<SpectralField> {
    let grid = PeriodicGrid::new(num_points, period)?;
    let k = grid.kappa();
    let tilt = match system.kind {
        crate::model::FluxKind::PSystem { tilt, .. } => tilt,
        _ => 0.0,
    };
    Ok(SpectralField::from_fn(grid, system.n, |c, x| {
        let u = amplitude * (k * x).cos();
        if c == 0 {
            u
        } else {
            amplitude * k * (k * x).sin() + tilt * u * u * u / 3.0
        }
    }))
}

/// Re-solve the base wave with its own closure at new parameters (s, q), using the base as guess.
pub fn resolve_at(base: &ProfileSolution, params: &[f64], closure: Closure) -> Result<ProfileSolution> {
    let guess = base.profile.clone();
    solve_profile_bvp_with(&base.system, &guess, params[0], &params[1..], base.phase, closure, NewtonOptions::default())
}

#[derive(Debug, Clone)]
pub struct FamilyMember {
    /// Continuation parameters (s, q₁, …, q_n) requested for this member.
    pub params: Vec<f64>,
    pub direction: Option<usize>,
    pub offset: f64,
    pub solution: ProfileSolution,
}

#[derive(Debug, Clone)]
pub struct ProfileFamily {
    pub members: Vec<FamilyMember>,
    /// −∂ₛū at the base member (fixed period), when available.
    pub speed_variation: Option<SpectralField>,
    pub notes: Vec<String>,
}

impl ProfileFamily {
    pub fn base(&self) -> &ProfileSolution {
        &self.members[0].solution
    }

    /// Member at direction index `dir` and signed offset (in steps of the continuation).
    pub fn find(&self, dir: usize, offset: f64) -> Option<&ProfileSolution> {
        self.members
            .iter()
            .find(|m| m.direction == Some(dir) && (m.offset - offset).abs() < 1e-14 * offset.abs().max(1.0))
            .map(|m| &m.solution)
    }
}

/// Natural-parameter continuation in (s, q) along each direction, both senses, keeping the
/// base closure. Populates f⋆ = −∂ₛū when at least one step is taken.
pub fn continue_family(
    base: &ProfileSolution,
    directions: &[Vec<f64>],
    steps: usize,
    step_size: f64,
) -> Result<ProfileFamily> {
    if base.constant_state || base.residual >= 1e-9 {
        return Err(Error::InvalidInput(format!("base residual {:.3e} too large", base.residual)));
    }
    let p0 = base.params();
    let mut family = ProfileFamily {
        members: vec![FamilyMember { params: p0.clone(), direction: None, offset: 0.0, solution: base.clone() }],
        speed_variation: None,
        notes: vec![],
    };
    if steps == 0 {
        return Ok(family);
    }
    let closure = base.closure;
    let floor = step_size / 64.0;
    for (di, dir) in directions.iter().enumerate() {
        if dir.len() != p0.len() {
            return Err(Error::InvalidInput("direction length must be n + 1".into()));
        }
        for sense in [1.0, -1.0] {
            let mut prev = base.clone();
            let mut prev_cond = base.jacobian_condition;
            let mut reached = 0.0;
            let target_total = steps as f64 * step_size;
            let mut h = step_size;
            while reached < target_total - 1e-15 * target_total {
                let step = h.min(target_total - reached);
                let off = reached + step;
                let params: Vec<f64> = p0.iter().zip(dir).map(|(p, d)| p + sense * off * d).collect();
                match resolve_at(&prev, &params, closure) {
                    Ok(sol) => {
                        let fold = sol.jacobian_condition > 1e10
                            || (prev_cond.is_finite() && sol.jacobian_condition > 1e4 * prev_cond);
                        if fold {
                            family.notes.push(format!(
                                "fold suspected along direction {di} at offset {:.3e} (condition {:.3e})",
                                sense * off,
                                sol.jacobian_condition
                            ));
                            break;
                        }
                        prev_cond = sol.jacobian_condition;
                        reached = off;
                        prev = sol.clone();
                        let on_grid = ((reached / step_size) - (reached / step_size).round()).abs() < 1e-9;
                        if on_grid {
                            family.members.push(FamilyMember {
                                params,
                                direction: Some(di),
                                offset: sense * reached,
                                solution: sol,
                            });
                        }
                        h = step_size;
                    }
                    Err(e) => {
                        h *= 0.5;
                        if h < floor {
                            family.notes.push(format!("step failure along direction {di}: {e}"));
                            return Err(Error::StepFailure { step: h });
                        }
                    }
                }
            }
        }
    }
    match speed_variation(base, 1e-4) {
        Ok(f) => family.speed_variation = Some(f),
        Err(e) => family.notes.push(format!("speed variation unavailable: {e}")),
    }
    Ok(family)
}

/// f⋆ = −∂ₛū at fixed period by centered differences, last flux component free.
/// The step starts at `h_s` and is halved until the spectral check L₀f⋆ = ū′ passes.
pub fn speed_variation(base: &ProfileSolution, h_s: f64) -> Result<SpectralField> {
    let n = base.n();
    let closure = Closure::FixedPeriod { period: base.period, free: FreeParam::Flux(n - 1) };
    let centered = |h: f64| -> Result<SpectralField> {
        let mut p = base.params();
        p[0] = base.speed + h;
        let plus = resolve_at(base, &p, closure)?;
        p[0] = base.speed - h;
        let minus = resolve_at(base, &p, closure)?;
        Ok(plus.profile.map(|c, m, z| -(z - minus.profile.values[c][m]) / (2.0 * h)))
    };
    let mut h = h_s;
    let mut best: Option<(f64, SpectralField)> = None;
    for _ in 0..12 {
        if let Ok(f) = centered(h) {
            let r = generalized_residual(base, &f)?;
            if best.as_ref().map_or(true, |b| r < b.0) {
                best = Some((r, f));
            }
            if r < 1e-6 {
                break;
            }
        }
        h *= 0.5;
    }
    match best {
        Some((r, f)) if r < 1e-4 => Ok(f),
        Some((r, _)) => Err(Error::Numerical(format!("speed variation residual {r:.3e}"))),
        None => Err(Error::StepFailure { step: h }),
    }
}

/// ‖L₀f − ū′‖/‖ū′‖ with L₀f = f″ − ((df(ū) − s)f)′, spectrally.
pub fn generalized_residual(base: &ProfileSolution, f: &SpectralField) -> Result<f64> {
    let n = base.n();
    let mut af = f.map(|_, _, _| cr(0.0));
    let mut u = vec![0.0; n];
    for m in 0..base.num_points() {
        for c in 0..n {
            u[c] = base.profile.values[c][m].re;
        }
        let j = base.system.jacobian(&u);
        for a in 0..n {
            let mut acc = cr(0.0);
            for b in 0..n {
                acc += f.values[b][m] * (j[a * n + b] - if a == b { base.speed } else { 0.0 });
            }
            af.values[a][m] = acc;
        }
    }
    let fxx = fourier_diff(f, 2)?;
    let afx = fourier_diff(&af, 1)?;
    let r = fxx.map(|c, m, z| z - afx.values[c][m] - base.derivative.values[c][m]);
    Ok(r.l2_norm() / base.derivative.l2_norm())
}

#[derive(Debug, Clone)]
pub struct H2Report {
    /// Row-major n × (2n+2) Jacobian of H over (X, a, s, q).
    pub jacobian: Vec<Vec<f64>>,
    pub column_labels: Vec<String>,
    pub rank: usize,
    pub singular_values: Vec<f64>,
    /// Flow endpoint mismatch |u(X; u₀) − u₀|.
    pub closure_error: f64,
}

/// RK4 integration of u′ = f(u) − su − q together with its variational equations
/// in (a, s, q). Returns (u(X), Φ(X), ∂ₛu(X), ∂_q u(X)).
pub fn variational_flow(
    system: &FluxSystem,
    a: &[f64],
    s: f64,
    q: &[f64],
    x_end: f64,
    steps: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = system.n;
    // state: u (n), Φ (n×n), w_s (n), W_q (n×n), all row-major
    let dim = n + n * n + n + n * n;
    let mut y = vec![0.0; dim];
    y[..n].copy_from_slice(a);
    for i in 0..n {
        y[n + i * n + i] = 1.0;
    }
    let rhs = |y: &[f64]| -> Vec<f64> {
        let u = &y[..n];
        let g = profile_rhs(system, u, s, q);
        let df = system.jacobian(u);
        let amat = |i: usize, j: usize| df[i * n + j] - if i == j { s } else { 0.0 };
        let mut out = vec![0.0; dim];
        out[..n].copy_from_slice(&g);
        let phi = &y[n..n + n * n];
        let ws = &y[n + n * n..2 * n + n * n];
        let wq = &y[2 * n + n * n..];
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                let mut accq = 0.0;
                for k in 0..n {
                    acc += amat(i, k) * phi[k * n + j];
                    accq += amat(i, k) * wq[k * n + j];
                }
                out[n + i * n + j] = acc;
                out[2 * n + n * n + i * n + j] = accq - if i == j { 1.0 } else { 0.0 };
            }
            let mut acc = 0.0;
            for k in 0..n {
                acc += amat(i, k) * ws[k];
            }
            out[n + n * n + i] = acc - u[i];
        }
        out
    };
    let h = x_end / steps as f64;
    for _ in 0..steps {
        let k1 = rhs(&y);
        let y2: Vec<f64> = y.iter().zip(&k1).map(|(a, b)| a + 0.5 * h * b).collect();
        let k2 = rhs(&y2);
        let y3: Vec<f64> = y.iter().zip(&k2).map(|(a, b)| a + 0.5 * h * b).collect();
        let k3 = rhs(&y3);
        let y4: Vec<f64> = y.iter().zip(&k3).map(|(a, b)| a + h * b).collect();
        let k4 = rhs(&y4);
        for i in 0..dim {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    let u = y[..n].to_vec();
    let phi = y[n..n + n * n].to_vec();
    let ws = y[n + n * n..2 * n + n * n].to_vec();
    let wq = y[2 * n + n * n..].to_vec();
    (u, phi, ws, wq)
}

/// Jacobian of H(X; a, s, q) = u(X; a, s, q) − a at the base wave and its numeric rank.
pub fn check_h2_rank(base: &ProfileSolution) -> Result<H2Report> {
    if base.constant_state || base.residual >= 1e-9 {
        return Err(Error::InvalidInput("H2 check needs a nonconstant converged profile".into()));
    }
    let n = base.n();
    let steps = 4096;
    let (u, phi, ws, wq) = variational_flow(&base.system, &base.base_point, base.speed, &base.flux_constant, base.period, steps);
    if u.iter().chain(&phi).chain(&ws).chain(&wq).any(|x| !x.is_finite()) {
        return Err(Error::Numerical("variational integration produced non-finite values".into()));
    }
    let closure_error = u.iter().zip(&base.base_point).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let g = base.rhs(&u);
    let mut jac = vec![vec![0.0; 2 * n + 2]; n];
    for i in 0..n {
        jac[i][0] = g[i];
        for j in 0..n {
            jac[i][1 + j] = phi[i * n + j] - if i == j { 1.0 } else { 0.0 };
            jac[i][n + 2 + j] = wq[i * n + j];
        }
        jac[i][n + 1] = ws[i];
    }
    let mut labels = vec!["X".to_string()];
    labels.extend((0..n).map(|j| format!("a{}", j + 1)));
    labels.push("s".into());
    labels.extend((0..n).map(|j| format!("q{}", j + 1)));
    let m = crate::linalg::real_to_cmat(n, 2 * n + 2, |i, j| jac[i][j]);
    let rr = crate::linalg::numeric_rank(&m, 1e-8)?;
    Ok(H2Report { jacobian: jac, column_labels: labels, rank: rr.rank, singular_values: rr.singular_values, closure_error })
}
