//! Reference computations used by the acceptance checks. Nothing here calls into the routines
//! being checked; transforms are dense sums or matrices, integrals are trapezoid or RK4.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use wavetrain::model::FluxSystem;

/// Period of u″ = u³ − u through amplitude a: periodic trapezoid in θ with u = a sin θ.
pub fn duffing_period(a: f64, points: usize) -> f64 {
    let h = 2.0 * PI / points as f64;
    (0..points)
        .map(|k| {
            let s = (k as f64 * h).sin();
            h / (1.0 - a * a * (1.0 + s * s) / 2.0).sqrt()
        })
        .sum()
}

/// Heat kernel of u_t = u_xx on a ring of length `period`, summed over `images` copies each side.
pub fn periodized_gaussian(x: f64, y: f64, t: f64, period: f64, images: i32) -> f64 {
    (-images..=images)
        .map(|r| {
            let d = x - y - r as f64 * period;
            (-d * d / (4.0 * t)).exp() / (4.0 * PI * t).sqrt()
        })
        .sum()
}

/// sqrt(h Σ|u|²) over all components.
pub fn grid_l2(values: &[Vec<f64>], h: f64) -> f64 {
    (h * values.iter().flatten().map(|v| v * v).sum::<f64>()).sqrt()
}

/// Seeded uniform random samples in [−1, 1].
pub fn random_field(seed: u64, components: usize, points: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..components).map(|_| (0..points).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
}

/// Dense Fourier differentiation matrices (first, second) on `n` equispaced nodes, n even.
pub fn fourier_matrices(n: usize, period: f64) -> (Vec<f64>, Vec<f64>) {
    let h = 2.0 * PI / n as f64;
    let k = 2.0 * PI / period;
    let mut d1 = vec![0.0; n * n];
    let mut d2 = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let sign = if (i + n - j) % 2 == 0 { 1.0 } else { -1.0 };
            if i == j {
                d2[i * n + j] = k * k * (-PI * PI / (3.0 * h * h) - 1.0 / 6.0);
            } else {
                let half = (i as f64 - j as f64) * h / 2.0;
                d1[i * n + j] = k * 0.5 * sign / half.tan();
                d2[i * n + j] = -k * k * 0.5 * sign / (half.sin() * half.sin());
            }
        }
    }
    (d1, d2)
}

fn matvec(a: &[f64], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n).map(|i| a[i * n..(i + 1) * n].iter().zip(x).map(|(p, q)| p * q).sum()).collect()
}

/// RK4 for v_t = v_xx − ((df(ū) − s)v)_x with dense differentiation matrices.
/// `base` holds ū per component on the nodes of a ring of length `length`.
pub fn linearized_rk4(sys: &FluxSystem, speed: f64, base: &[Vec<f64>], length: f64, v0: &[Vec<f64>], t: f64, steps: usize) -> Vec<Vec<f64>> {
    let n = sys.n;
    let np = v0[0].len();
    let (d1, d2) = fourier_matrices(np, length);
    let jac: Vec<Vec<f64>> = (0..np).map(|k| sys.jacobian(&(0..n).map(|c| base[c][k]).collect::<Vec<_>>())).collect();
    let rhs = |v: &[Vec<f64>]| -> Vec<Vec<f64>> {
        (0..n)
            .map(|a| {
                let flux: Vec<f64> = (0..np)
                    .map(|k| (0..n).map(|b| (jac[k][a * n + b] - if a == b { speed } else { 0.0 }) * v[b][k]).sum())
                    .collect();
                let diff = matvec(&d2, &v[a]);
                let conv = matvec(&d1, &flux);
                diff.iter().zip(&conv).map(|(p, q)| p - q).collect()
            })
            .collect()
    };
    let axpy = |v: &[Vec<f64>], k: &[Vec<f64>], h: f64| -> Vec<Vec<f64>> {
        v.iter().zip(k).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + h * y).collect()).collect()
    };
    let dt = t / steps as f64;
    let mut v = v0.to_vec();
    for _ in 0..steps {
        let k1 = rhs(&v);
        let k2 = rhs(&axpy(&v, &k1, dt / 2.0));
        let k3 = rhs(&axpy(&v, &k2, dt / 2.0));
        let k4 = rhs(&axpy(&v, &k3, dt));
        for a in 0..n {
            for k in 0..np {
                v[a][k] += dt / 6.0 * (k1[a][k] + 2.0 * k2[a][k] + 2.0 * k3[a][k] + k4[a][k]);
            }
        }
    }
    v
}

/// u(X) for u′ = f(u) − su − q, u(0) = a, classical RK4.
pub fn profile_flow(sys: &FluxSystem, a: &[f64], s: f64, q: &[f64], x_end: f64, steps: usize) -> Vec<f64> {
    let g = |u: &[f64]| -> Vec<f64> { sys.flux(u).iter().zip(u).zip(q).map(|((f, u), q)| f - s * u - q).collect() };
    let h = x_end / steps as f64;
    let mut u = a.to_vec();
    let step = |u: &[f64], k: &[f64], c: f64| -> Vec<f64> { u.iter().zip(k).map(|(x, y)| x + c * y).collect() };
    for _ in 0..steps {
        let k1 = g(&u);
        let k2 = g(&step(&u, &k1, h / 2.0));
        let k3 = g(&step(&u, &k2, h / 2.0));
        let k4 = g(&step(&u, &k3, h));
        for i in 0..u.len() {
            u[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    u
}

/// Central-difference Jacobian of H = u(X; a, s, q) − a in the columns (X, a, s, q).
pub fn flow_jacobian_fd(sys: &FluxSystem, a: &[f64], s: f64, q: &[f64], x: f64, steps: usize, h: f64) -> Vec<Vec<f64>> {
    let n = sys.n;
    let eval = |p: &[f64]| -> Vec<f64> {
        let (xx, aa, ss, qq) = (p[0], &p[1..1 + n], p[1 + n], &p[2 + n..]);
        profile_flow(sys, aa, ss, qq, xx, steps).iter().zip(aa).map(|(u, a)| u - a).collect()
    };
    let mut p0 = vec![x];
    p0.extend_from_slice(a);
    p0.push(s);
    p0.extend_from_slice(q);
    let mut jac = vec![vec![0.0; p0.len()]; n];
    for col in 0..p0.len() {
        let (mut pp, mut pm) = (p0.clone(), p0.clone());
        pp[col] += h;
        pm[col] -= h;
        let (fp, fm) = (eval(&pp), eval(&pm));
        for i in 0..n {
            jac[i][col] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    jac
}

/// C (1+t)^α (1 + c/(1+t)) on log-spaced times, the correction fading inside the window.
pub fn planted_algebraic(alpha: f64, correction: f64, t0: f64, t1: f64, count: usize) -> Vec<(f64, f64)> {
    let (a, b) = (t0.ln(), t1.ln());
    (0..count)
        .map(|k| {
            let t = (a + (b - a) * k as f64 / (count - 1) as f64).exp();
            (t, 2.0 * (1.0 + t).powf(alpha) * (1.0 + correction / (1.0 + t)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_period_limit() {
        assert!((duffing_period(0.0, 64) - 2.0 * PI).abs() < 1e-14);
        // Trapezoid is spectrally accurate for a periodic integrand.
        assert!((duffing_period(0.5, 256) - duffing_period(0.5, 512)).abs() < 1e-13);
    }

    #[test]
    fn differentiation_matrices_are_exact_on_trig_modes() {
        let n = 32;
        let l = 5.0;
        let (d1, d2) = fourier_matrices(n, l);
        let k = 2.0 * PI * 3.0 / l;
        let x: Vec<f64> = (0..n).map(|i| i as f64 * l / n as f64).collect();
        let u: Vec<f64> = x.iter().map(|x| (k * x).sin()).collect();
        let du = matvec(&d1, &u);
        let ddu = matvec(&d2, &u);
        for i in 0..n {
            assert!((du[i] - k * (k * x[i]).cos()).abs() < 1e-11);
            assert!((ddu[i] + k * k * u[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn gaussian_has_unit_mass() {
        let l = 10.0;
        let n = 400;
        let mass: f64 = (0..n).map(|i| periodized_gaussian(i as f64 * l / n as f64, 3.0, 0.7, l, 3)).sum::<f64>() * l / n as f64;
        assert!((mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn random_fields_are_reproducible() {
        assert_eq!(random_field(7, 2, 5), random_field(7, 2, 5));
        assert_ne!(random_field(7, 2, 5), random_field(8, 2, 5));
    }
}
