//! Conservation-law systems u_t + f(u)_x = u_xx.

use crate::error::{Error, Result};
use crate::grid::{PeriodicGrid, SpectralField};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FluxKind {
    /// f(u, v) = (−v + b u³/3, −σ(u)), σ(u) = c₃u³ + c₁u + offset.
    PSystem { c3: f64, c1: f64, offset: f64, tilt: f64 },
    /// Scalar f(u) = a u + b u²/2.
    Scalar { speed: f64, quadratic: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxSystem {
    pub name: String,
    pub n: usize,
    pub parameters: BTreeMap<String, f64>,
    pub kind: FluxKind,
}

pub fn builtin_viscous_psystem(c3: f64, c1: f64, offset: f64) -> Result<FluxSystem> {
    tilted_viscous_psystem(c3, c1, offset, 0.0)
}

/// The p-system with an extra cubic term b u³/3 in the first flux component.
pub fn tilted_viscous_psystem(c3: f64, c1: f64, offset: f64, tilt: f64) -> Result<FluxSystem> {
    if c3 == 0.0 {
        return Err(Error::InvalidInput("c3 = 0 gives a linear wave system without Duffing orbits".into()));
    }
    if ![c3, c1, offset, tilt].iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("sigma parameters"));
    }
    let parameters = [("c3", c3), ("c1", c1), ("offset", offset), ("tilt", tilt)]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    Ok(FluxSystem {
        name: "viscous_psystem".into(),
        n: 2,
        parameters,
        kind: FluxKind::PSystem { c3, c1, offset, tilt },
    })
}

pub fn scalar_law(speed: f64, quadratic: f64) -> FluxSystem {
    let parameters = [("speed", speed), ("quadratic", quadratic)]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    FluxSystem { name: "scalar".into(), n: 1, parameters, kind: FluxKind::Scalar { speed, quadratic } }
}

/// Look up a built-in system by name.
pub fn system_by_name(name: &str, p: &BTreeMap<String, f64>) -> Result<FluxSystem> {
    let get = |k: &str, d: f64| p.get(k).copied().unwrap_or(d);
    match name {
        "viscous_psystem" => tilted_viscous_psystem(get("c3", 1.0), get("c1", -1.0), get("offset", 0.0), get("tilt", 0.0)),
        "scalar" => Ok(scalar_law(get("speed", 0.0), get("quadratic", 0.0))),
        _ => Err(Error::InvalidInput(format!("unknown system '{name}'"))),
    }
}

impl FluxSystem {
    pub fn flux(&self, u: &[f64]) -> Vec<f64> {
        match self.kind {
            FluxKind::PSystem { c3, c1, offset, tilt } => {
                let (a, b) = (u[0], u[1]);
                vec![-b + tilt * a * a * a / 3.0, -(c3 * a * a * a + c1 * a + offset)]
            }
            FluxKind::Scalar { speed, quadratic } => vec![speed * u[0] + 0.5 * quadratic * u[0] * u[0]],
        }
    }

    /// Row-major n×n Jacobian.
    pub fn jacobian(&self, u: &[f64]) -> Vec<f64> {
        match self.kind {
            FluxKind::PSystem { c3, c1, tilt, .. } => {
                let a = u[0];
                vec![tilt * a * a, -1.0, -(3.0 * c3 * a * a + c1), 0.0]
            }
            FluxKind::Scalar { speed, quadratic } => vec![speed + quadratic * u[0]],
        }
    }

    /// hessian[(i·n + j)·n + k] = ∂²f_i/∂u_j∂u_k.
    pub fn hessian(&self, u: &[f64]) -> Vec<f64> {
        match self.kind {
            FluxKind::PSystem { c3, tilt, .. } => {
                let a = u[0];
                let mut h = vec![0.0; 8];
                h[0] = 2.0 * tilt * a;
                h[4] = -6.0 * c3 * a;
                h
            }
            FluxKind::Scalar { quadratic, .. } => vec![quadratic],
        }
    }
}

/// Pointwise matrix-valued field A(x) = df(ū(x)).
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixField {
    pub grid: PeriodicGrid,
    pub n: usize,
    /// entries[i][j][m]
    pub entries: Vec<Vec<Vec<f64>>>,
}

pub fn linearized_coefficient(system: &FluxSystem, profile: &SpectralField) -> Result<MatrixField> {
    if profile.components() != system.n {
        return Err(Error::InvalidInput("profile components differ from system dimension".into()));
    }
    let n = system.n;
    let np = profile.grid.num_points;
    let mut entries = vec![vec![vec![0.0; np]; n]; n];
    let mut u = vec![0.0; n];
    for m in 0..np {
        for c in 0..n {
            u[c] = profile.values[c][m].re;
        }
        let j = system.jacobian(&u);
        for a in 0..n {
            for b in 0..n {
                entries[a][b][m] = j[a * n + b];
            }
        }
    }
    Ok(MatrixField { grid: profile.grid.clone(), n, entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_jacobians() {
        let s = builtin_viscous_psystem(1.0, -1.0, 0.0).unwrap();
        assert_eq!(s.flux(&[0.0, 0.0]), vec![0.0, 0.0]);
        assert_eq!(s.jacobian(&[0.0, 0.0]), vec![0.0, -1.0, 1.0, 0.0]);
        assert_eq!(s.jacobian(&[1.0, 0.0]), vec![0.0, -1.0, -2.0, 0.0]);
        assert!(builtin_viscous_psystem(0.0, -1.0, 0.0).is_err());
    }

    #[test]
    fn constant_profile_coefficient() {
        let s = builtin_viscous_psystem(1.0, -1.0, 0.0).unwrap();
        let g = PeriodicGrid::new(8, 1.0).unwrap();
        let p = SpectralField::from_fn(g, 2, |c, _| if c == 0 { 0.5 } else { -1.0 });
        let a = linearized_coefficient(&s, &p).unwrap();
        let j = s.jacobian(&[0.5, -1.0]);
        for m in 0..8 {
            for i in 0..2 {
                for k in 0..2 {
                    assert_eq!(a.entries[i][k][m], j[i * 2 + k]);
                }
            }
        }
    }

    #[test]
    fn entry_21_closed_form() {
        let s = builtin_viscous_psystem(1.0, -1.0, 0.0).unwrap();
        let g = PeriodicGrid::new(16, 6.0).unwrap();
        let p = SpectralField::from_fn(g, 2, |c, x| if c == 0 { 0.4 * x.cos() } else { 0.4 * x.sin() });
        let a = linearized_coefficient(&s, &p).unwrap();
        for m in 0..16 {
            let u = p.values[0][m].re;
            assert!((a.entries[1][0][m] + (3.0 * u * u - 1.0)).abs() < 1e-15);
        }
    }

    fn fd_jac(s: &FluxSystem, u: &[f64], h: f64) -> Vec<f64> {
        let n = s.n;
        let mut j = vec![0.0; n * n];
        for b in 0..n {
            let mut up = u.to_vec();
            let mut um = u.to_vec();
            up[b] += h;
            um[b] -= h;
            let (fp, fm) = (s.flux(&up), s.flux(&um));
            for a in 0..n {
                j[a * n + b] = (fp[a] - fm[a]) / (2.0 * h);
            }
        }
        j
    }

    fn rel(a: &[f64], b: &[f64]) -> f64 {
        let d = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let s = b.iter().map(|x| x.abs()).fold(1.0, f64::max);
        d / s
    }

    proptest! {
        #[test]
        fn jacobian_matches_fd(u in -2.0f64..2.0, v in -2.0f64..2.0, tilt in -1.0f64..1.0, off in -0.5f64..0.5) {
            let s = tilted_viscous_psystem(1.0, -1.0, off, tilt).unwrap();
            prop_assert!(rel(&fd_jac(&s, &[u, v], 1e-5), &s.jacobian(&[u, v])) < 1e-6);
        }

        #[test]
        fn hessian_matches_fd(u in -2.0f64..2.0, v in -2.0f64..2.0, tilt in -1.0f64..1.0) {
            let s = tilted_viscous_psystem(1.3, -0.7, 0.1, tilt).unwrap();
            let h = 1e-5;
            let hs = s.hessian(&[u, v]);
            for k in 0..2 {
                let mut up = vec![u, v];
                let mut um = vec![u, v];
                up[k] += h;
                um[k] -= h;
                let (jp, jm) = (s.jacobian(&up), s.jacobian(&um));
                for i in 0..2 {
                    for j in 0..2 {
                        let fd = (jp[i * 2 + j] - jm[i * 2 + j]) / (2.0 * h);
                        let an = hs[(i * 2 + j) * 2 + k];
                        prop_assert!((fd - an).abs() < 1e-6 * an.abs().max(1.0));
                    }
                }
            }
        }
    }
}
