//! Acceptance checks 1–16 grouped into the `identities`, `structure` and `rates` suites.
//! Gated checks run only for a wave whose spectral gate passes; otherwise they are skipped
//! with the reason and the fallback result recorded.

use crate::config::RunConfig;
use crate::oracles;
use crate::pipeline::{
    bump_on, cancellation_residuals, gate_reason, gated_rate_run, reduced_vs_full, solve_base, spectrum_grid, splitting_residual,
    whitham_comparison,
};
use anyhow::{anyhow, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::OnceLock;
use wavetrain::bloch::{
    analyze_jordan_at_zero, assemble_l_xi, bloch_norm, bloch_transform, inverse_bloch_transform, spectrum_sweep, stability_verdict,
    JordanStructure, StabilityVerdict,
};
use wavetrain::fit::{boundedness_ratio, fit_algebraic_decay, fit_exponential_rate, log_times};
use wavetrain::grid::{PeriodicGrid, SpectralField};
use wavetrain::linalg::{c64, eig_dense, fro};
use wavetrain::linear::{
    green_column, high_frequency_decay, high_frequency_gap, kernel_norm_series, periodic_extension, verify_green_decay,
    KernelQuantity, SemigroupSampler,
};
use wavetrain::lowfreq::{default_ladder, reduced_matrices, rescale_and_extract};
use wavetrain::model::scalar_law;
use wavetrain::nonlinear::{linear_growth_rate, residual_identity_check};
use wavetrain::profile::{check_h2_rank, speed_variation, ProfileSolution};

pub const TILTED_CONFIG: &str = include_str!("../../../configs/tilted.toml");
pub const DUFFING_CONFIG: &str = include_str!("../../../configs/duffing.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub id: u8,
    pub name: String,
    pub status: Status,
    pub detail: String,
    pub fallback: Option<String>,
}

impl CheckOutcome {
    pub fn line(&self) -> String {
        let tag = match self.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skipped => "SKIP",
        };
        let mut s = format!("[{tag}] {:>2} {}: {}", self.id, self.name, self.detail);
        if let Some(f) = &self.fallback {
            s += &format!(" | fallback: {f}");
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Identities,
    Structure,
    Rates,
}

impl Suite {
    pub fn parse(s: &str) -> Option<Suite> {
        match s {
            "identities" => Some(Suite::Identities),
            "structure" => Some(Suite::Structure),
            "rates" => Some(Suite::Rates),
            _ => None,
        }
    }

    pub fn members(self) -> &'static [u8] {
        match self {
            Suite::Identities => &[1, 8, 9, 10],
            Suite::Structure => &[2, 3, 4, 5, 6, 7],
            Suite::Rates => &[11, 12, 13, 14, 15, 16],
        }
    }
}

pub const NAMES: [&str; 16] = [
    "Bloch isometry",
    "profile residual and period",
    "H2 rank and variational Jacobian",
    "Jordan structure at zero",
    "reduced matrix structural zeros",
    "rescaled pencil consistency",
    "Whitham agreement",
    "cancellation identity",
    "perturbation residual identity",
    "splitting additivity and time stepper",
    "heat-kernel baseline",
    "rate fitter self-test",
    "linear-regime growth match",
    "high-frequency bound",
    "Green kernel decay",
    "nonlinear decay rates",
];

struct Fixture {
    cfg: RunConfig,
    wave: ProfileSolution,
    jordan: JordanStructure,
}

fn fixture() -> Result<&'static Fixture> {
    static F: OnceLock<std::result::Result<Fixture, String>> = OnceLock::new();
    F.get_or_init(|| {
        let build = || -> Result<Fixture> {
            let cfg = RunConfig::from_toml(TILTED_CONFIG)?;
            let wave = solve_base(&cfg)?;
            let jordan = analyze_jordan_at_zero(&wave, cfg.spectral.modes, &cfg.cluster_policy())?;
            Ok(Fixture { cfg, wave, jordan })
        };
        build().map_err(|e| e.to_string())
    })
    .as_ref()
    .map_err(|e| anyhow!("fixture: {e}"))
}

fn name_of(id: u8) -> String {
    NAMES.get((id as usize).wrapping_sub(1)).copied().unwrap_or("unknown criterion").into()
}

fn verdict(id: u8, pass: bool, detail: String) -> CheckOutcome {
    CheckOutcome {
        id,
        name: name_of(id),
        status: if pass { Status::Pass } else { Status::Fail },
        detail,
        fallback: None,
    }
}

fn sci(v: f64) -> String {
    format!("{v:.3e}")
}

pub fn run_check(id: u8) -> CheckOutcome {
    let r = match id {
        1 => bloch_isometry(),
        2 => profile_residual(),
        3 => h2_rank(),
        4 => jordan_structure(),
        5 => structural_zeros(),
        6 => rescaled_pencil(),
        7 => whitham_agreement(),
        8 => cancellation(),
        9 => residual_identity(),
        10 => splitting(),
        11 => heat_baseline(),
        12 => fitter_self_test(),
        13 => growth_match(),
        14..=16 => return gated(id),
        _ => Err(anyhow!("no criterion {id}")),
    };
    match r {
        Ok((pass, detail)) => verdict(id, pass, detail),
        Err(e) => verdict(id, false, format!("error: {e}")),
    }
}

pub fn run_suite(suite: Suite) -> Vec<CheckOutcome> {
    suite.members().iter().map(|&id| run_check(id)).collect()
}

/// Exit status of a set of outcomes: 1 when anything failed.
pub fn exit_code(outcomes: &[CheckOutcome]) -> i32 {
    i32::from(outcomes.iter().any(|o| o.status == Status::Fail))
}

/// Ledger note for a suite whose gated checks were all skipped.
pub fn ledger_note(outcomes: &[CheckOutcome]) -> Option<String> {
    let gated: Vec<_> = outcomes.iter().filter(|o| o.id >= 14).collect();
    if gated.is_empty() || gated.iter().any(|o| o.status != Status::Skipped) {
        return None;
    }
    let fallback = outcomes.iter().find(|o| o.id == 13).map(|o| o.status);
    Some(match fallback {
        Some(Status::Pass) | None => "rate checks skipped: gate failed; fallback growth-match ran and passed".into(),
        Some(_) => "rate checks skipped: gate failed; fallback growth-match ran and failed".into(),
    })
}

type Check = Result<(bool, String)>;

fn bloch_isometry() -> Check {
    let f = fixture()?;
    let (m, np) = (8, 32);
    let grid = PeriodicGrid::new(m * np, m as f64 * f.wave.period)?;
    let h = grid.spacing();
    let mut worst_norm: f64 = 0.0;
    let mut worst_inv: f64 = 0.0;
    for seed in 0..20 {
        let values = oracles::random_field(seed, 2, m * np);
        let u = SpectralField::from_real(grid.clone(), values.clone())?;
        let b = bloch_transform(&u, f.wave.period)?;
        let direct = oracles::grid_l2(&values, h);
        worst_norm = worst_norm.max((bloch_norm(&b) - direct).abs() / direct);
        let back = inverse_bloch_transform(&b);
        let diff: Vec<Vec<f64>> =
            (0..2).map(|c| (0..m * np).map(|k| (back.values[c][k] - c64::new(values[c][k], 0.0)).norm()).collect()).collect();
        worst_inv = worst_inv.max(oracles::grid_l2(&diff, h) / direct);
    }
    Ok((worst_norm < 1e-12 && worst_inv < 1e-12, format!("norm error {}, inverse error {} over 20 fields", sci(worst_norm), sci(worst_inv))))
}

fn profile_residual() -> Check {
    let f = fixture()?;
    let duffing = RunConfig::from_toml(DUFFING_CONFIG)?;
    let d = solve_base(&duffing)?;
    let oracle = oracles::duffing_period(duffing.profile.amplitude, 512);
    let period_err = (d.period - oracle).abs();
    let mut small = duffing.clone();
    small.profile.amplitude = 1e-3;
    small.profile.num_points = 32;
    let s = solve_base(&small)?;
    let harmonic = (s.period - 2.0 * PI).abs();
    let pass = f.wave.residual < 1e-9 && d.residual < 1e-9 && period_err < 1e-8 && harmonic < 1e-3;
    Ok((
        pass,
        format!(
            "residuals {} / {}, Duffing period error {}, harmonic limit error {}",
            sci(f.wave.residual),
            sci(d.residual),
            sci(period_err),
            sci(harmonic)
        ),
    ))
}

fn h2_rank() -> Check {
    let f = fixture()?;
    let p = &f.wave;
    let r = check_h2_rank(p)?;
    let fd = oracles::flow_jacobian_fd(&p.system, &p.base_point, p.speed, &p.flux_constant, p.period, 4096, 1e-5);
    let scale = r.jacobian.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max);
    let diff = r.jacobian.iter().flatten().zip(fd.iter().flatten()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale;
    Ok((r.rank == p.n() && diff < 1e-5, format!("rank {} (n = {}), variational vs FD {}", r.rank, p.n(), sci(diff))))
}

fn jordan_structure() -> Check {
    let f = fixture()?;
    let n = f.wave.n();
    let modes = f.cfg.spectral.modes;
    let fine = analyze_jordan_at_zero(&f.wave.resampled(2 * modes)?, 2 * modes, &f.cfg.cluster_policy())?;
    let shape_ok = |j: &JordanStructure| j.kernel_dim == n && j.chain_heights == vec![2] && j.multiplicity == n + 1;
    let j = &f.jordan;
    let fstar = speed_variation(&f.wave, 1e-4)?;
    let l0 = assemble_l_xi(&f.wave, 0.0, 0.0, modes)?;
    let lf = l0.apply(&l0.coeffs_from_field(&fstar));
    let ud = l0.coeffs_from_field(&f.wave.derivative);
    let num: f64 = lf.iter().zip(&ud).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
    let chain = num / ud.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let pass = shape_ok(j)
        && shape_ok(&fine)
        && j.translation_residual < 1e-8
        && j.left_constant_residual < 1e-8
        && chain < 1e-4;
    Ok((
        pass,
        format!(
            "kernel {} chains {:?} multiplicity {} (2N: {} {:?} {}), translation {}, left constants {}, chain {}",
            j.kernel_dim,
            j.chain_heights,
            j.multiplicity,
            fine.kernel_dim,
            fine.chain_heights,
            fine.multiplicity,
            sci(j.translation_residual),
            sci(j.left_constant_residual),
            sci(chain)
        ),
    ))
}

fn ladder(f: &Fixture) -> Vec<f64> {
    default_ladder(f.wave.period, f.cfg.lowfreq.ladder_top, f.cfg.lowfreq.ladder_points)
}

fn structural_zeros() -> Check {
    let f = fixture()?;
    let pencil = reduced_matrices(&f.wave, &f.jordan, &ladder(f), false)?;
    let st = &pencil.positive.structure;
    let m0 = &pencil.m0;
    let nil = fro(&(m0 * m0)) / fro(m0);
    let pass = st.pattern < 1e-6 && st.m1_zeros < 1e-6 && nil < 1e-6;
    Ok((pass, format!("pattern {}, M1 zeros {}, |M0^2|/|M0| {}", sci(st.pattern), sci(st.m1_zeros), sci(nil))))
}

fn rescaled_pencil() -> Check {
    let f = fixture()?;
    let l = ladder(f);
    let pencil = reduced_matrices(&f.wave, &f.jordan, &l, false)?;
    let r = rescale_and_extract(&pencil)?;
    let agreement = reduced_vs_full(&f.wave, &f.jordan, &l)?;
    let pass = r.cauchy < 1e-4 && r.limit_vs_direct < 1e-4 && agreement < 1e-8;
    Ok((pass, format!("Cauchy {}, limit vs eig {}, reduced vs full {}", sci(r.cauchy), sci(r.limit_vs_direct), sci(agreement))))
}

fn whitham_agreement() -> Check {
    let f = fixture()?;
    let pencil = reduced_matrices(&f.wave, &f.jordan, &ladder(f), false)?;
    let r = rescale_and_extract(&pencil)?;
    let bloch: Vec<c64> = r.a_coeffs.iter().map(|a| a + f.wave.speed).collect();
    let mut errors = vec![];
    for (h, e) in whitham_comparison(&f.wave, &bloch, &f.cfg.lowfreq.fd_steps)? {
        let (_, err) = e.map_err(|e| anyhow!("step {h}: {e}"))?;
        errors.push(err);
    }
    let last = *errors.last().ok_or_else(|| anyhow!("no FD steps"))?;
    let improving = errors.windows(2).all(|w| w[1] < w[0]);
    Ok((last < 1e-2 && improving, format!("relative errors {:?} under step halving", errors.iter().map(|e| sci(*e)).collect::<Vec<_>>())))
}

fn small_sampler(f: &Fixture, m: usize) -> Result<SemigroupSampler> {
    Ok(SemigroupSampler::new(&f.wave.resampled(32)?, m, 32)?)
}

fn cancellation() -> Check {
    let f = fixture()?;
    let s = small_sampler(f, 4)?;
    let [a, b] = cancellation_residuals(&s, 1.0, 64)?;
    Ok((a < 1e-6 && b < 1e-6, format!("residuals {} (linear ramp), {} (translation ramp)", sci(a), sci(b))))
}

fn residual_identity() -> Check {
    let f = fixture()?;
    let p = &f.wave;
    let m = 2;
    let l = m as f64 * p.period;
    let run = |npp: usize| {
        let pp = p.clone();
        let ut = move |_t: f64| {
            let g = PeriodicGrid::new(m * npp, l).expect("grid");
            SpectralField::from_fn(g, 2, |c, y| pp.profile.eval(c, y).re + 0.01 * (2.0 * PI * y / l).cos() * pp.derivative.eval(c, y).re)
        };
        let psi = move |x: f64, t: f64| 0.01 * (2.0 * PI * x / l).sin() * (-t).exp();
        residual_identity_check(p, m, npp, &ut, &psi, 1.0)
    };
    let coarse = run(16)?;
    let fine = run(32)?;
    let ratio = coarse.relative_mismatch / fine.relative_mismatch;
    let pass = fine.relative_mismatch < 1e-8 && ratio >= 1e2;
    Ok((pass, format!("mismatch {} at 32 nodes/period, ratio {} from 16", sci(fine.relative_mismatch), sci(ratio))))
}

fn splitting() -> Check {
    let f = fixture()?;
    let p32 = f.wave.resampled(32)?;
    let j = analyze_jordan_at_zero(&p32, 32, &f.cfg.cluster_policy())?;
    let s = SemigroupSampler::new(&p32, 64, 32)?.with_low_frequency(&j, None)?;
    let split = splitting_residual(&s, &[0.0, 0.5, 2.0])?;
    let small = small_sampler(f, 4)?;
    let g = small.grid();
    let u0 = bump_on(&small, 0.5, 4.0);
    let semigroup = small.apply_semigroup(&u0, 1.0)?;
    let base = periodic_extension(&small.profile.profile, small.m);
    let real = |f: &SpectralField| f.values.iter().map(|c| c.iter().map(|z| z.re).collect()).collect::<Vec<Vec<f64>>>();
    let stepped = oracles::linearized_rk4(&p32.system, p32.speed, &real(&base), g.period, &real(&u0), 1.0, 2000);
    let diff: Vec<Vec<f64>> = real(&semigroup).iter().zip(&stepped).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect()).collect();
    let h = g.spacing();
    let stepper = oracles::grid_l2(&diff, h) / oracles::grid_l2(&stepped, h);
    Ok((split < 1e-10 && stepper < 1e-6, format!("S_I + S_II vs e^Lt {}, semigroup vs RK4 {}", sci(split), sci(stepper))))
}

fn heat_baseline() -> Check {
    let sys = scalar_law(0.0, 0.0);
    let p = ProfileSolution::constant_state(&sys, &[0.0], 2.0 * PI, 16)?;
    let s = SemigroupSampler::new(&p, 64, 16)?;
    let g = s.grid();
    let node = 100;
    let col = green_column(&s, 0, node, 1.0)?;
    let worst = g
        .nodes()
        .iter()
        .enumerate()
        .map(|(k, &x)| (col.g_column.values[0][k].re - oracles::periodized_gaussian(x, g.node(node), 1.0, g.period, 2)).abs())
        .fold(0.0, f64::max);
    let series = kernel_norm_series(&s, &[node], &log_times(10.0, 1000.0, 16), KernelQuantity::G, 2.0)?;
    let fit = fit_algebraic_decay(&series, (10.0, 1000.0))?;
    let pass = worst < 1e-8 && (fit.exponent + 0.25).abs() < 0.02;
    Ok((pass, format!("kernel error {}, L2 exponent {:.4}", sci(worst), fit.exponent)))
}

fn fitter_self_test() -> Check {
    let mut worst: f64 = 0.0;
    for alpha in [-0.25, -0.5, -0.75, -1.0] {
        let series = oracles::planted_algebraic(alpha, 0.1, 10.0, 1000.0, 24);
        let fit = fit_algebraic_decay(&series, (10.0, 1000.0))?;
        worst = worst.max((fit.exponent - alpha).abs());
    }
    let exp_series: Vec<(f64, f64)> = (0..40).map(|k| k as f64 * 0.5).map(|t| (t, 3.0 * (-0.3 * t).exp())).collect();
    let (rate, _, _) = fit_exponential_rate(&exp_series, (0.0, 19.5))?;
    worst = worst.max((rate + 0.3).abs());
    let bounded: Vec<(f64, f64)> = (0..40).map(|k| 10.0 + k as f64 * 25.0).map(|t| (t, 1.0 + 0.3 * (t / 50.0).sin())).collect();
    let ratio = boundedness_ratio(&bounded);
    Ok((worst < 0.01 && ratio <= 2.0, format!("worst planted exponent error {}, boundedness ratio {:.3}", sci(worst), ratio)))
}

/// Max Re λ over the Bloch frequencies carried by an m-period domain, by dense eigenvalues.
fn channel_max_re(p: &ProfileSolution, periods: usize, modes: usize) -> Result<f64> {
    let mut best = f64::NEG_INFINITY;
    for j in 0..periods {
        let xi = 2.0 * PI * j as f64 / (periods as f64 * p.period);
        let op = assemble_l_xi(p, xi, 0.0, modes)?;
        for z in eig_dense(&op.matrix, false)?.eigenvalues {
            best = best.max(z.re);
        }
    }
    Ok(best)
}

fn growth_match() -> Check {
    let f = fixture()?;
    let sim = f.cfg.sim_config();
    let w = f.cfg.nonlinear.growth_window;
    let (rate, r2) = linear_growth_rate(&f.wave, &sim, (w[0], w[1]))?;
    let oracle = channel_max_re(&f.wave, sim.periods, 32)?;
    let rel = (rate - oracle).abs() / oracle.abs().max(1e-12);
    Ok((rel < 0.05, format!("fitted {rate:.6} (r2 {r2:.4}) vs max Re {oracle:.6}, relative {}", sci(rel))))
}

struct GateScan {
    /// Members with their verdicts; `None` when the solve failed.
    members: Vec<(String, std::result::Result<StabilityVerdict, String>)>,
    passing: Option<(RunConfig, ProfileSolution, StabilityVerdict)>,
}

fn gate_scan() -> &'static GateScan {
    static S: OnceLock<GateScan> = OnceLock::new();
    S.get_or_init(|| {
        let mut candidates = vec![];
        if let Ok(base) = RunConfig::from_toml(TILTED_CONFIG) {
            for amp in [0.3, 0.5, 0.7] {
                let mut c = base.clone();
                c.profile.amplitude = amp;
                candidates.push((format!("tilted a={amp}"), c));
            }
        }
        if let Ok(d) = RunConfig::from_toml(DUFFING_CONFIG) {
            candidates.push(("duffing a=0.5".into(), d));
        }
        let mut scan = GateScan { members: vec![], passing: None };
        for (label, cfg) in candidates {
            let r = (|| -> Result<(ProfileSolution, StabilityVerdict)> {
                let p = solve_base(&cfg)?;
                let j = analyze_jordan_at_zero(&p, cfg.spectral.modes, &cfg.cluster_policy())?;
                let sp = spectrum_sweep(&p, &spectrum_grid(&cfg, p.period), cfg.spectral.modes, cfg.spectral.branches)?;
                let v = stability_verdict(&sp, &j);
                Ok((p, v))
            })();
            match r {
                Ok((p, v)) => {
                    if v.overall && scan.passing.is_none() {
                        scan.passing = Some((cfg.clone(), p, v.clone()));
                    }
                    scan.members.push((label, Ok(v)));
                }
                Err(e) => scan.members.push((label, Err(e.to_string()))),
            }
        }
        scan
    })
}

fn gated(id: u8) -> CheckOutcome {
    let scan = gate_scan();
    let Some((cfg, p, v)) = &scan.passing else {
        let reasons: Vec<String> = scan
            .members
            .iter()
            .map(|(label, r)| match r {
                Ok(v) => format!("{label}: {}", gate_reason(v)),
                Err(e) => format!("{label}: {e}"),
            })
            .collect();
        let fb = run_check(13);
        return CheckOutcome {
            id,
            name: name_of(id),
            status: Status::Skipped,
            detail: format!("no scanned wave passes the spectral gate [{}]", reasons.join("; ")),
            fallback: Some(format!("growth match {}: {}", if fb.status == Status::Pass { "passed" } else { "failed" }, fb.detail)),
        };
    };
    let r = match id {
        14 => high_frequency(cfg, p),
        15 => green_decay(cfg, p, v),
        _ => nonlinear_rates(cfg, p, v),
    };
    match r {
        Ok((pass, detail)) => verdict(id, pass, detail),
        Err(e) => verdict(id, false, format!("error: {e}")),
    }
}

fn gated_sampler(cfg: &RunConfig, p: &ProfileSolution) -> Result<SemigroupSampler> {
    let modes = cfg.linear.modes;
    let pm = p.resampled(modes)?;
    let j = analyze_jordan_at_zero(&pm, modes, &cfg.cluster_policy())?;
    Ok(SemigroupSampler::new(&pm, cfg.linear.periods, modes)?.with_low_frequency(&j, cfg.linear.eps)?)
}

fn high_frequency(cfg: &RunConfig, p: &ProfileSolution) -> Check {
    let s = gated_sampler(cfg, p)?;
    let gap = high_frequency_gap(&s)?;
    let hf = high_frequency_decay(&s, &bump_on(&s, 0.5, 3.0), &[1.0, 2.0, 4.0, 8.0, 16.0], gap)?;
    Ok((hf.slope <= -gap + 0.05, format!("slope {:.4} vs gap {:.4}", hf.slope, gap)))
}

fn green_decay(cfg: &RunConfig, p: &ProfileSolution, v: &StabilityVerdict) -> Check {
    let s = gated_sampler(cfg, p)?;
    let node = s.grid().num_points / 2;
    let times = log_times(10.0, 1000.0, 12);
    let fits = verify_green_decay(&s, v, &[node], &times, &[2.0, f64::INFINITY], (10.0, 1000.0))?;
    let mut worst = String::new();
    let mut pass = true;
    for f in &fits {
        let ok = match f.quantity {
            KernelQuantity::E if f.p.is_infinite() => f.fit.boundedness_ratio <= 2.0,
            KernelQuantity::G | KernelQuantity::GTilde => (f.fit.exponent - f.predicted).abs() <= 0.05,
            _ => (f.fit.exponent - f.predicted).abs() <= 0.08,
        };
        if !ok {
            pass = false;
            worst += &format!("{:?} p={} fitted {:.3} predicted {:.3}; ", f.quantity, f.p, f.fit.exponent, f.predicted);
        }
    }
    Ok((pass, if pass { format!("{} kernel fits within tolerance", fits.len()) } else { worst }))
}

fn nonlinear_rates(cfg: &RunConfig, p: &ProfileSolution, v: &StabilityVerdict) -> Check {
    let mut long = cfg.clone();
    long.nonlinear.horizon = long.nonlinear.horizon.max(long.nonlinear.rate_window[1]);
    let (pass, detail) = gated_rate_run(p, &long, v)?;
    Ok((pass, detail.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_partition_the_criteria() {
        let mut all: Vec<u8> = [Suite::Identities, Suite::Structure, Suite::Rates].iter().flat_map(|s| s.members().to_vec()).collect();
        all.sort();
        assert_eq!(all, (1..=16).collect::<Vec<u8>>());
        assert_eq!(Suite::parse("rates"), Some(Suite::Rates));
        assert_eq!(Suite::parse("all"), None);
    }

    #[test]
    fn exit_code_ignores_skips() {
        let mk = |id, status| CheckOutcome { id, name: String::new(), status, detail: String::new(), fallback: None };
        let skipped = vec![mk(13, Status::Pass), mk(14, Status::Skipped), mk(15, Status::Skipped), mk(16, Status::Skipped)];
        assert_eq!(exit_code(&skipped), 0);
        assert_eq!(ledger_note(&skipped).unwrap(), "rate checks skipped: gate failed; fallback growth-match ran and passed");
        let failed = vec![mk(13, Status::Fail), mk(14, Status::Skipped)];
        assert_eq!(exit_code(&failed), 1);
        assert!(ledger_note(&[mk(13, Status::Pass), mk(14, Status::Pass)]).is_none());
    }

    #[test]
    fn unknown_criterion_fails() {
        assert_eq!(run_check(17).status, Status::Fail);
    }
}
