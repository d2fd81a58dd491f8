mod common;

use dissipeuler_core::solver::{run_path, run_path_observed, StepObserver, StepView};
use dissipeuler_core::stats::MeanEstimate;
use dissipeuler_core::{hs_norm_sq, SolverConfig, WienerPath};
use proptest::prelude::*;
use rayon::prelude::*;

use common::config_2d;

/// `sum_n sum_k <u_n, Phi e_k>^2 dt` and the integral recomputed from the
/// observed increments.
#[derive(Default)]
struct Bracket {
    quadratic: f64,
    integral: f64,
}

impl StepObserver for Bracket {
    fn on_step(&mut self, view: &StepView<'_>) {
        let proj = view.basis.project(view.u);
        self.quadratic += proj.iter().map(|p| p * p).sum::<f64>() * view.dt;
        self.integral += proj.iter().zip(view.dw).map(|(p, w)| p * w).sum::<f64>();
    }
}

fn bracket_samples(cfg: &SolverConfig, paths: u64) -> Vec<(f64, f64)> {
    (0..paths)
        .into_par_iter()
        .map(|p| {
            let mut b = Bracket::default();
            let run = run_path_observed(cfg, 21, p, &mut b).unwrap();
            let m = run.trace.rows().last().unwrap().stochastic;
            assert!(
                (m - b.integral).abs() <= 1e-12 * (1.0 + m.abs()),
                "trace integral {m} vs {}",
                b.integral
            );
            (m, b.quadratic)
        })
        .collect()
}

#[test]
fn stochastic_integral_satisfies_ito_isometry() {
    let cfg = config_2d(16, 0.05, 0.01, 0.25, 0.3);
    let samples = bracket_samples(&cfg, 3000);
    let diff: Vec<f64> = samples.iter().map(|(m, q)| m * m - q).collect();
    let est = MeanEstimate::from_samples(&diff, 4.0);
    assert!(
        est.contains(0.0),
        "E[M^2 - <M>] = {} +- {}",
        est.mean,
        est.half_width
    );
    let mean: Vec<f64> = samples.iter().map(|(m, _)| *m).collect();
    let est = MeanEstimate::from_samples(&mean, 4.0);
    assert!(
        est.contains(0.0),
        "E[M] = {} +- {}",
        est.mean,
        est.half_width
    );
}

#[test]
fn ito_correction_is_half_hs_norm_times_t() {
    let cfg = config_2d(16, 0.0, 0.02, 0.2, 0.4);
    let run = run_path(&cfg, 3, 0).unwrap();
    let rate = 0.5 * hs_norm_sq(&cfg.forcing);
    assert!((rate - 0.5 * 4.0 * 0.16).abs() <= 1e-12);
    for row in run.trace.rows() {
        assert!((row.ito - rate * row.t).abs() <= 1e-12 * (1.0 + row.ito));
    }
}

fn standardized(level: u32, paths: u64, steps: u64, modes: usize) -> Vec<Vec<Vec<f64>>> {
    let dt = 0.01 / f64::from(1u32 << level);
    (0..paths)
        .into_par_iter()
        .map(|p| {
            let w = WienerPath::sample(5, p, modes, 0.01, level, 0..steps).unwrap();
            w.increments()
                .iter()
                .map(|inc| inc.iter().map(|x| x / dt.sqrt()).collect())
                .collect()
        })
        .collect()
}

fn check_moments(zs: &[f64]) {
    let n = zs.len() as f64;
    let m1 = zs.iter().sum::<f64>() / n;
    let m2 = zs.iter().map(|z| z * z).sum::<f64>() / n;
    let m3 = zs.iter().map(|z| z.powi(3)).sum::<f64>() / n;
    let m4 = zs.iter().map(|z| z.powi(4)).sum::<f64>() / n;
    // Standard deviations of the sample moments of N(0,1): 1, 2, 15, 96 over n.
    assert!(m1.abs() <= 4.0 * (1.0 / n).sqrt(), "mean {m1}");
    assert!((m2 - 1.0).abs() <= 4.0 * (2.0 / n).sqrt(), "variance {m2}");
    assert!(m3.abs() <= 4.0 * (15.0 / n).sqrt(), "third moment {m3}");
    assert!(
        (m4 - 3.0).abs() <= 4.0 * (96.0 / n).sqrt(),
        "fourth moment {m4}"
    );
}

fn check_uncorrelated(a: &[f64], b: &[f64]) {
    let n = a.len() as f64;
    let c = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / n;
    assert!(c.abs() <= 4.0 / n.sqrt(), "correlation {c}");
}

#[test]
fn increments_are_standard_normal_and_independent() {
    for level in [0, 2] {
        let z = standardized(level, 4000, 8, 3);
        let all: Vec<f64> = z.iter().flatten().flatten().copied().collect();
        check_moments(&all);
        let pick = |n: usize, k: usize| z.iter().map(|p| p[n][k]).collect::<Vec<f64>>();
        check_uncorrelated(&pick(0, 0), &pick(0, 1));
        check_uncorrelated(&pick(3, 2), &pick(4, 2));
        check_uncorrelated(&pick(1, 0), &pick(6, 2));
        let shifted: Vec<f64> = (0..z.len()).map(|p| z[(p + 1) % z.len()][2][1]).collect();
        check_uncorrelated(&pick(2, 1), &shifted);
        // Squares of independent normals are uncorrelated after centering.
        let sq = |v: Vec<f64>| v.into_iter().map(|x| x * x - 1.0).collect::<Vec<f64>>();
        let (a, b) = (sq(pick(5, 0)), sq(pick(5, 1)));
        let n = a.len() as f64;
        let c = a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() / n;
        assert!(c.abs() <= 4.0 * (4.0 / n).sqrt(), "squared correlation {c}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn refinement_preserves_coarse_increments(seed in any::<u64>(), path in 0u64..1000, level in 0u32..4) {
        let coarse = WienerPath::sample(seed, path, 3, 0.1, level, 0..16).unwrap();
        let fine = coarse.refine();
        prop_assert_eq!(fine.len(), 2 * coarse.len());
        for (n, inc) in coarse.increments().iter().enumerate() {
            for k in 0..3 {
                let sum = fine.increments()[2 * n][k] + fine.increments()[2 * n + 1][k];
                prop_assert!((sum - inc[k]).abs() <= 1e-14 * (1.0 + inc[k].abs()));
            }
        }
    }

    #[test]
    fn windows_agree_with_the_full_path(seed in any::<u64>(), level in 0u32..3, start in 0u64..20, len in 1u64..12) {
        let full = WienerPath::sample(seed, 4, 2, 0.1, level, 0..start + len).unwrap();
        let window = WienerPath::sample(seed, 4, 2, 0.1, level, start..start + len).unwrap();
        for n in window.steps() {
            prop_assert_eq!(window.increment(n), full.increment(n));
        }
    }

    #[test]
    fn halving_dt_keeps_the_brownian_path(seed in any::<u64>(), path in 0u64..64) {
        let mut a = config_2d(8, 0.1, 0.05, 0.2, 0.3);
        a.initial = dissipeuler_core::InitialLaw::Zero;
        let b = SolverConfig { dt: 0.025, path_level: 1, ..a.clone() };
        let (wa, wb) = (a.wiener_path(seed, path).unwrap(), b.wiener_path(seed, path).unwrap());
        let (ba, bb) = (wa.beta(a.steps()), wb.beta(b.steps()));
        for (x, y) in ba.iter().zip(&bb) {
            prop_assert!((x - y).abs() <= 1e-13);
        }
    }
}

#[test]
fn paths_are_reproducible_and_distinct() {
    let a = WienerPath::sample(9, 1, 2, 0.1, 1, 0..10).unwrap();
    let b = WienerPath::sample(9, 1, 2, 0.1, 1, 0..10).unwrap();
    let c = WienerPath::sample(9, 2, 2, 0.1, 1, 0..10).unwrap();
    let d = WienerPath::sample(10, 1, 2, 0.1, 1, 0..10).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.increments(), c.increments());
    assert_ne!(a.increments(), d.increments());
}
