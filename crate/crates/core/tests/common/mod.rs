#![allow(dead_code)]

use dissipeuler_core::forcing::{ForcingMode, ForcingOperator, ModeKind};
use dissipeuler_core::rng::standard_normal;
use dissipeuler_core::spectral::leray_project;
use dissipeuler_core::{InitialLaw, PhysicalField, SolverConfig, SpectralField, TorusGrid};

/// Stream reserved for test fixtures so they never alias solver noise.
const FIXTURE_STREAM: u32 = 0x7E57_0000;

/// Physical field with i.i.d. standard normal values, as a spectral field.
pub fn random_field(grid: TorusGrid, seed: u64) -> SpectralField {
    let d = grid.dim();
    let components = (0..d)
        .map(|i| {
            (0..grid.len())
                .map(|p| standard_normal(seed, FIXTURE_STREAM, i as u64, 0, p as u64))
                .collect()
        })
        .collect();
    SpectralField::from_physical(&PhysicalField::from_components(grid, components))
}

/// Random divergence-free field supported in the dealiased band.
pub fn random_solenoidal(grid: TorusGrid, seed: u64) -> SpectralField {
    leray_project(&random_field(grid, seed)).dealiased()
}

pub fn mode(k: &[i64], direction: &[f64], sigma: f64, kind: ModeKind) -> ForcingMode {
    let norm = direction.iter().map(|a| a * a).sum::<f64>().sqrt();
    ForcingMode {
        k: k.to_vec(),
        direction: direction.iter().map(|a| a / norm).collect(),
        sigma,
        kind,
    }
}

/// Four low 2D modes with amplitude `sigma`.
pub fn forcing_2d(sigma: f64) -> ForcingOperator {
    ForcingOperator::new(vec![
        mode(&[1, 0], &[0.0, 1.0], sigma, ModeKind::Cos),
        mode(&[0, 1], &[1.0, 0.0], sigma, ModeKind::Sin),
        mode(&[1, 1], &[1.0, -1.0], sigma, ModeKind::Cos),
        mode(&[1, -1], &[1.0, 1.0], sigma, ModeKind::Sin),
    ])
    .unwrap()
}

pub fn config_2d(n: usize, viscosity: f64, dt: f64, horizon: f64, sigma: f64) -> SolverConfig {
    SolverConfig {
        grid: TorusGrid::new(2, n).unwrap(),
        viscosity,
        dt,
        horizon,
        forcing: forcing_2d(sigma),
        initial: InitialLaw::RandomPhase {
            energy: 0.5,
            k_min: 1.0,
            k_max: 3.0,
            slope: -1.0,
        },
        path_level: 0,
        transport: true,
        cfl: 0.5,
        speed_ceiling: 1e3,
        snapshot_times: Vec::new(),
    }
}
