//! Shared fixtures for the benchmarks.

use dissipeuler_core::solver::InitialLaw;
use dissipeuler_core::{
    ForcingMode, ForcingOperator, ModeKind, SolverConfig, SpectralField, TorusGrid,
};

/// Random-phase field of unit energy on the `n`-point grid in `dim` dimensions.
pub fn field(dim: usize, n: usize) -> SpectralField {
    let grid = TorusGrid::new(dim, n).expect("valid grid");
    InitialLaw::RandomPhase {
        energy: 1.0,
        k_min: 1.0,
        k_max: 4.0,
        slope: 0.0,
    }
    .sample(grid, 1, 0)
    .expect("valid initial law")
}

/// Two-mode forced configuration used by the stepping benchmarks.
pub fn config(dim: usize, n: usize) -> SolverConfig {
    let grid = TorusGrid::new(dim, n).expect("valid grid");
    let mut k = vec![0; dim];
    k[0] = 1;
    let mut direction = vec![0.0; dim];
    direction[1] = 1.0;
    let forcing = ForcingOperator::new(vec![ForcingMode {
        k,
        direction,
        sigma: 0.1,
        kind: ModeKind::Cos,
    }])
    .expect("valid forcing");
    SolverConfig {
        grid,
        viscosity: 0.01,
        dt: 0.01,
        horizon: 0.1,
        forcing,
        initial: InitialLaw::RandomPhase {
            energy: 1.0,
            k_min: 1.0,
            k_max: 4.0,
            slope: 0.0,
        },
        path_level: 0,
        transport: true,
        cfl: 0.5,
        speed_ceiling: 1e3,
        snapshot_times: Vec::new(),
    }
}
