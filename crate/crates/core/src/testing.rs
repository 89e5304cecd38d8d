//! Shared fixtures for unit tests.

use crate::model::{builtin_viscous_psystem, tilted_viscous_psystem};
use crate::profile::*;
use std::f64::consts::PI;

pub fn tilted_wave(num_points: usize) -> ProfileSolution {
    let sys = tilted_viscous_psystem(1.0, -1.0, 0.0, 1.0).unwrap();
    let guess = harmonic_guess(&sys, 0.5, 6.85, num_points).unwrap();
    let closure = Closure::Amplitude { component: 0, value: 0.5, free: FreeParam::Speed };
    solve_profile_bvp_with(&sys, &guess, 0.0, &[0.0, 0.1], PhaseCondition::FixMaxAtZero, closure, NewtonOptions::default())
        .unwrap()
}

pub fn duffing_wave(amplitude: f64, num_points: usize) -> ProfileSolution {
    let sys = builtin_viscous_psystem(1.0, -1.0, 0.0).unwrap();
    let guess = harmonic_guess(&sys, amplitude, 2.0 * PI, num_points).unwrap();
    let closure = Closure::Amplitude { component: 0, value: amplitude, free: FreeParam::Speed };
    solve_profile_bvp_with(&sys, &guess, 0.0, &[0.0, 0.0], PhaseCondition::FixMaxAtZero, closure, NewtonOptions::default())
        .unwrap()
}
