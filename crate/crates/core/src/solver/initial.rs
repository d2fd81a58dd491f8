use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::SolverError;
use crate::forcing::{ForcingMode, ForcingOperator, NoiseBasis};
use crate::rng::{CounterNormal, STREAM_INITIAL};
use crate::spectral::{leray_project, SpectralField, TorusGrid};

/// Law of the initial velocity.
///
/// All options produce a divergence-free, dealiased field. The random-phase
/// law has deterministic energy, so every moment of `||u_0||_{L^2}` is finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialLaw {
    Zero,
    /// `(A sin(k x_2), 0, 0)`, a steady solution of the Euler equations.
    Shear {
        amplitude: f64,
        k: i64,
    },
    /// `A (sin x_1 cos x_2, -cos x_1 sin x_2)` in 2D; in 3D the third factor
    /// `cos x_3` multiplies both components and the third component vanishes.
    TaylorGreen {
        amplitude: f64,
    },
    /// Sum of unit-norm trigonometric modes weighted by `sigma`.
    Modes {
        modes: Vec<ForcingMode>,
    },
    /// Gaussian coefficients on the shell `k_min <= |k| <= k_max` with
    /// amplitude `|k|^slope`, projected and rescaled to `energy`.
    RandomPhase {
        energy: f64,
        k_min: f64,
        k_max: f64,
        slope: f64,
    },
}

impl InitialLaw {
    pub fn sample(
        &self,
        grid: TorusGrid,
        seed: u64,
        path_id: u64,
    ) -> Result<SpectralField, SolverError> {
        let dim = grid.dim();
        let field = match self {
            InitialLaw::Zero => SpectralField::zeros(grid),
            InitialLaw::Shear { amplitude, k } => {
                let (a, k) = (*amplitude, *k as f64);
                SpectralField::from_fn(grid, |x| [a * (k * x[1]).sin(), 0.0, 0.0])
            }
            InitialLaw::TaylorGreen { amplitude } => {
                let a = *amplitude;
                SpectralField::from_fn(grid, |x| {
                    let z = if dim == 3 { x[2].cos() } else { 1.0 };
                    [
                        a * x[0].sin() * x[1].cos() * z,
                        -a * x[0].cos() * x[1].sin() * z,
                        0.0,
                    ]
                })
            }
            InitialLaw::Modes { modes } => {
                let op = ForcingOperator::new(modes.clone())
                    .map_err(|e| SolverError::InvalidConfig(format!("initial modes: {e}")))?;
                let basis = NoiseBasis::new(&op, grid)?;
                basis.apply(&vec![1.0; op.rank()])
            }
            InitialLaw::RandomPhase {
                energy,
                k_min,
                k_max,
                slope,
            } => random_phase(grid, seed, path_id, *energy, *k_min, *k_max, *slope)?,
        };
        let mut u = leray_project(&field);
        u.dealias();
        Ok(u)
    }
}

fn random_phase(
    grid: TorusGrid,
    seed: u64,
    path_id: u64,
    energy: f64,
    k_min: f64,
    k_max: f64,
    slope: f64,
) -> Result<SpectralField, SolverError> {
    if !(energy >= 0.0 && k_min >= 0.0 && k_max >= k_min) {
        return Err(SolverError::InvalidConfig(
            "random_phase needs energy >= 0 and 0 <= k_min <= k_max".into(),
        ));
    }
    let dim = grid.dim();
    let cut = grid.dealias_cutoff();
    let mut gen = CounterNormal::new(seed, STREAM_INITIAL, path_id);
    let mut u = SpectralField::zeros(grid);
    for idx in 0..grid.len() {
        let k = grid.wavevector(idx);
        let k = &k[..dim];
        // Representative of each conjugate pair: first nonzero entry positive.
        let lead = k.iter().find(|&&c| c != 0);
        if !matches!(lead, Some(&c) if c > 0) || k.iter().any(|c| c.abs() > cut) {
            continue;
        }
        let kk = (k.iter().map(|&c| (c * c) as f64).sum::<f64>()).sqrt();
        if kk < k_min || kk > k_max {
            continue;
        }
        let neg: Vec<i64> = k.iter().map(|c| -c).collect();
        let partner = grid
            .index_of(&neg)
            .expect("dealiased modes are inside the Nyquist band");
        let amp = kk.powf(slope);
        for i in 0..dim {
            let re = gen.normal(2 * i as u32, idx as u64);
            let im = gen.normal(2 * i as u32 + 1, idx as u64);
            let c = Complex64::new(re, im) * amp;
            u.component_mut(i)[idx] = c;
            u.component_mut(i)[partner] = c.conj();
        }
    }
    let mut u = leray_project(&u);
    let e = u.energy();
    if e > 0.0 {
        u.scale((energy / e).sqrt());
    } else if energy > 0.0 {
        return Err(SolverError::InvalidConfig(
            "random_phase shell contains no resolved modes".into(),
        ));
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::PhysicalField;

    #[test]
    fn random_phase_is_real_solenoidal_and_normalized() {
        let grid = TorusGrid::new(2, 32).unwrap();
        let law = InitialLaw::RandomPhase {
            energy: 2.5,
            k_min: 1.0,
            k_max: 4.0,
            slope: -1.0,
        };
        let u = law.sample(grid, 3, 7).unwrap();
        assert!((u.energy() - 2.5).abs() < 1e-12);
        assert!(u.divergence_residual() < 1e-14);
        // Hermitian symmetry: the physical field round-trips through a real transform.
        let back = SpectralField::from_physical(&u.to_physical());
        for i in 0..2 {
            for (a, b) in u.component(i).iter().zip(back.component(i)) {
                assert!((a - b).norm() < 1e-14);
            }
        }
        assert_eq!(law.sample(grid, 3, 7).unwrap(), u);
        assert_ne!(law.sample(grid, 3, 8).unwrap(), u);
    }

    #[test]
    fn taylor_green_matches_closed_form() {
        let grid = TorusGrid::new(2, 16).unwrap();
        let u = InitialLaw::TaylorGreen { amplitude: 1.5 }
            .sample(grid, 0, 0)
            .unwrap();
        let expected = PhysicalField::from_fn(grid, |x| {
            [
                1.5 * x[0].sin() * x[1].cos(),
                -1.5 * x[0].cos() * x[1].sin(),
                0.0,
            ]
        });
        let got = u.to_physical();
        for i in 0..2 {
            for (a, b) in got.component(i).iter().zip(expected.component(i)) {
                assert!((a - b).abs() < 1e-13);
            }
        }
    }
}
