mod common;

use std::f64::consts::TAU;

use dissipeuler_core::young::{
    dictionary, dirac_embed, estimate_from_family, sphere_bin, BinSpec, CellPartition,
    Concentration, FieldSample, General, GeneralizedYoungMeasure, MeasureBuilder, Quadratic,
    TestIntegrand, Weight,
};
use dissipeuler_core::{PhysicalField, SpectralField, TorusGrid};
use proptest::prelude::*;

use common::random_solenoidal;

/// `+xi` where `sin(j x_1) > 0`, `-xi` elsewhere; sampled off the zeros.
fn square_wave(grid: TorusGrid, j: f64, xi: [f64; 2]) -> PhysicalField {
    let h = grid.spacing();
    PhysicalField::from_fn(grid, |x| {
        let s = if (j * (x[0] + 0.5 * h)).sin() > 0.0 {
            1.0
        } else {
            -1.0
        };
        [s * xi[0], s * xi[1], 0.0]
    })
}

#[test]
fn oscillating_family_recovers_two_atoms() {
    let grid = TorusGrid::new(2, 64).unwrap();
    let partition = CellPartition::new(grid, 4, 1, 1.0).unwrap();
    let xi = [1.5, 0.75];
    let family: Vec<Vec<FieldSample>> = [4.0, 8.0, 16.0]
        .iter()
        .map(|&j| vec![(0.0, 1.0, square_wave(grid, j, xi))])
        .collect();
    let v = estimate_from_family(partition, BinSpec::new(4.0), &family).unwrap();
    let atoms = [([xi[0], xi[1], 0.0], 0.5), ([-xi[0], -xi[1], 0.0], 0.5)];
    for c in 0..partition.len() {
        assert!(v.tv_distance_to_atoms(c, &atoms) <= 0.05, "cell {c}");
        assert!(v.barycenter()[c].iter().all(|b| b.abs() <= 1e-12));
    }
    assert_eq!(v.lambda_total(), 0.0);
    // The weak limit is zero but the energy survives in the oscillation measure.
    let energy = 0.5 * (xi[0] * xi[0] + xi[1] * xi[1]) * grid.volume();
    assert!((v.energy_of(0) - energy).abs() <= 1e-12 * energy);
}

/// Constant direction `theta` on an `s x s` block of grid points at the
/// origin, scaled so that `int |u|^2 = mass`.
fn bump(grid: TorusGrid, s: usize, theta: [f64; 2], mass: f64) -> PhysicalField {
    let h = grid.spacing();
    let a = mass.sqrt() / (s as f64 * h);
    PhysicalField::from_fn(grid, |x| {
        let inside = x[0] < (s as f64 - 0.5) * h && x[1] < (s as f64 - 0.5) * h;
        if inside {
            [a * theta[0], a * theta[1], 0.0]
        } else {
            [0.0; 3]
        }
    })
}

#[test]
fn concentrating_family_recovers_lambda_and_direction() {
    let grid = TorusGrid::new(2, 64).unwrap();
    let horizon = 2.0;
    let partition = CellPartition::new(grid, 4, 2, horizon).unwrap();
    let theta = [0.7f64.cos(), 0.7f64.sin()];
    let mass = 1.3;
    let family: Vec<Vec<FieldSample>> = [8, 4, 2, 1]
        .iter()
        .map(|&s| {
            vec![
                (0.0, 1.0, bump(grid, s, theta, mass)),
                (1.0, 1.0, bump(grid, s, theta, mass)),
            ]
        })
        .collect();
    let v = estimate_from_family(partition, BinSpec::new(1.0), &family).unwrap();
    let expected = mass * horizon;
    assert!(
        (v.lambda_total() - expected).abs() <= 0.05 * expected,
        "lambda {}",
        v.lambda_total()
    );
    let bin = sphere_bin(2, &[theta[0], theta[1], 0.0]);
    for slab in 0..2 {
        let cell = partition.slab_cells(slab).start;
        let probs = v.nu_inf_probabilities(cell);
        assert_eq!(probs.len(), 1);
        assert_eq!(probs[0].0, bin);
        assert!((probs[0].1 - 1.0).abs() <= 1e-12);
        assert!((v.lambda_t(slab) - mass).abs() <= 0.05 * mass);
        for c in partition.slab_cells(slab).skip(1) {
            assert_eq!(v.lambda(c), 0.0);
        }
    }
    // Away from the bump the oscillation measure is a Dirac mass at zero.
    assert!(v.tv_distance_to_atoms(5, &[([0.0; 3], 1.0)]) <= 1e-12);
}

#[test]
fn clip_mode_keeps_large_values_in_the_histogram() {
    let grid = TorusGrid::new(2, 32).unwrap();
    let partition = CellPartition::new(grid, 4, 1, 1.0).unwrap();
    let u = bump(grid, 2, [1.0, 0.0], 1.0);
    let v = dirac_embed(partition, BinSpec::new(1.0), &[(0.0, 1.0, u)]);
    assert_eq!(v.lambda_total(), 0.0);
    assert!(v.diagnostics().clipped_weight > 0.0);
    // Raw moments are exact even for clipped samples.
    let e = v.pairing(
        &TestIntegrand::Quadratic(Quadratic::energy(2)),
        &Weight::Constant(1.0),
    );
    assert!((e - 1.0).abs() <= 1e-12);
}

fn smooth_samples(grid: TorusGrid, steps: usize, horizon: f64) -> Vec<FieldSample> {
    let dt = horizon / steps as f64;
    (0..steps)
        .map(|n| {
            let t = n as f64 * dt;
            let (a, b) = (t.cos(), 0.6 * (2.0 * t).sin());
            let u = PhysicalField::from_fn(grid, |x| {
                [
                    a * x[0].sin() * x[1].cos() + b * (2.0 * x[1]).sin(),
                    -a * x[0].cos() * x[1].sin(),
                    0.0,
                ]
            });
            (t, dt, u)
        })
        .collect()
}

fn quadrature(
    samples: &[FieldSample],
    f: impl Fn(&[f64; 3]) -> f64,
    phi: impl Fn(&[f64; 3]) -> f64,
) -> f64 {
    samples
        .iter()
        .map(|(_, dt, u)| {
            let grid = u.grid();
            (0..grid.len())
                .map(|p| phi(&grid.point(p)) * f(&u.value(p)))
                .sum::<f64>()
                * grid.point_volume()
                * dt
        })
        .sum()
}

#[test]
fn dirac_pairing_matches_direct_quadrature() {
    let grid = TorusGrid::new(2, 32).unwrap();
    let samples = smooth_samples(grid, 20, 1.0);
    let partition = CellPartition::new(grid, 16, 20, 1.0).unwrap();
    let v = dirac_embed(partition, BinSpec::new(2.0), &samples);

    let f = |xi: &[f64; 3]| xi[0] * xi[0] + xi[1] * xi[1] + (3.0 * xi[0]).sin();
    let g = General::new(2, f, |th: &[f64; 3]| th[0] * th[0] + th[1] * th[1]).unwrap();
    let phi = |x: &[f64; 3]| 1.0 + 0.5 * x[0].cos();
    let paired = v.pairing(
        &TestIntegrand::General(g),
        &Weight::function(move |_, x| phi(x)),
    );
    let direct = quadrature(&samples, f, phi);
    assert!(
        (paired - direct).abs() <= 0.02 * direct.abs(),
        "pairing {paired} vs quadrature {direct}"
    );

    let q = Quadratic::energy(2);
    let exact = v.pairing(&TestIntegrand::Quadratic(q), &Weight::Constant(1.0));
    let direct = quadrature(&samples, |xi| q.eval(xi), |_| 1.0);
    assert!((exact - direct).abs() <= 1e-12 * direct);
}

#[test]
fn general_integrand_rejects_wrong_recession() {
    let bad = General::new(
        2,
        |xi: &[f64; 3]| xi[0] * xi[0] + xi[1] * xi[1],
        |_: &[f64; 3]| 2.0,
    );
    assert!(bad.is_err());
    let cubic = General::new(2, |xi: &[f64; 3]| xi[0].powi(3), |_: &[f64; 3]| 0.0);
    assert!(cubic.is_err());
}

fn measure_of(seed: u64, cells: usize) -> GeneralizedYoungMeasure {
    let grid = TorusGrid::new(2, 16).unwrap();
    let mut u = random_solenoidal(grid, seed);
    u.scale(2.0 / u.energy().sqrt().max(1e-12));
    let partition = CellPartition::new(grid, cells, 2, 1.0).unwrap();
    let mut b = MeasureBuilder::new(partition, BinSpec::new(1.5), Concentration::Split);
    b.add_field(0.0, 0.5, &u.to_physical());
    let mut w = u.clone();
    w.scale(-0.5);
    b.add_field(0.5, 0.5, &w.to_physical());
    b.finish()
}

fn quad(c: f64, l: [f64; 2], m: [[f64; 2]; 2]) -> Quadratic {
    let mut q = Quadratic::constant(c);
    for i in 0..2 {
        q.linear[i] = l[i];
        for j in 0..2 {
            q.quadratic[i][j] = m[i][j];
        }
    }
    q
}

fn coeff() -> impl Strategy<Value = f64> {
    -2.0f64..2.0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pairing_is_linear(seed in any::<u64>(), a in coeff(), b in coeff(),
                         c in prop::array::uniform8(coeff())) {
        let v = measure_of(seed, 4);
        let f = quad(c[0], [c[1], c[2]], [[c[3], 0.0], [0.0, c[4]]]);
        let g = quad(c[5], [c[6], 0.0], [[0.0, c[7]], [c[7], 0.0]]);
        let mut h = f.scaled(a);
        let gb = g.scaled(b);
        h.constant += gb.constant;
        for i in 0..3 {
            h.linear[i] += gb.linear[i];
            for j in 0..3 {
                h.quadratic[i][j] += gb.quadratic[i][j];
            }
        }
        let w = Weight::function(|t, x| 1.0 + t * x[0].sin());
        let pair = |q: Quadratic| v.pairing(&TestIntegrand::Quadratic(q), &w);
        let lhs = pair(h);
        let rhs = a * pair(f) + b * pair(g);
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn family_estimate_ignores_member_order(seeds in prop::collection::vec(any::<u64>(), 2..5)) {
        let grid = TorusGrid::new(2, 16).unwrap();
        let partition = CellPartition::new(grid, 4, 1, 1.0).unwrap();
        let member = |s: u64| {
            let mut u = random_solenoidal(grid, s);
            u.scale(3.0);
            vec![(0.0, 1.0, u.to_physical())]
        };
        let family: Vec<_> = seeds.iter().map(|&s| member(s)).collect();
        let reversed: Vec<_> = family.iter().rev().cloned().collect();
        let bins = BinSpec::new(1.0);
        let (a, b) = (estimate_from_family(partition, bins, &family).unwrap(),
                      estimate_from_family(partition, bins, &reversed).unwrap());
        prop_assert!((a.lambda_total() - b.lambda_total()).abs() <= 1e-12 * (1.0 + a.lambda_total()));
        prop_assert!(a.weakstar_distance(&b, &dictionary(2)).unwrap() <= 1e-12);
    }

    #[test]
    fn weakstar_distance_is_a_pseudometric(x in any::<u64>(), y in any::<u64>(), z in any::<u64>()) {
        let dict = dictionary(2);
        let (a, b, c) = (measure_of(x, 4), measure_of(y, 4), measure_of(z, 4));
        let ab = a.weakstar_distance(&b, &dict).unwrap();
        prop_assert_eq!(a.weakstar_distance(&a, &dict).unwrap(), 0.0);
        prop_assert!((ab - b.weakstar_distance(&a, &dict).unwrap()).abs() <= 1e-14 * (1.0 + ab));
        let ac = a.weakstar_distance(&c, &dict).unwrap();
        let cb = c.weakstar_distance(&b, &dict).unwrap();
        prop_assert!(ab <= ac + cb + 1e-12);
    }

    #[test]
    fn barycenter_is_the_cell_average(seed in any::<u64>()) {
        let grid = TorusGrid::new(2, 16).unwrap();
        let u = random_solenoidal(grid, seed);
        let phys = u.to_physical();
        let partition = CellPartition::new(grid, 4, 1, 1.0).unwrap();
        let radius = 2.0 * phys.max_speed() + 1.0;
        let v = dirac_embed(partition, BinSpec::new(radius), &[(0.0, 1.0, phys.clone())]);
        for (c, pts) in partition.cell_points().iter().enumerate() {
            for i in 0..2 {
                let avg = pts.iter().map(|&p| phys.component(i)[p]).sum::<f64>() / pts.len() as f64;
                prop_assert!((v.barycenter()[c][i] - avg).abs() <= 1e-12 * (1.0 + avg.abs()));
            }
        }
    }
}

#[test]
fn average_of_identical_measures_is_the_measure() {
    let v = measure_of(3, 4);
    let avg = GeneralizedYoungMeasure::average(&[v.clone(), v.clone(), v.clone()]).unwrap();
    assert!(avg.weakstar_distance(&v, &dictionary(2)).unwrap() <= 1e-12);
    let other = measure_of(3, 8);
    assert!(v.weakstar_distance(&other, &dictionary(2)).is_err());
}

#[test]
fn dictionary_sizes() {
    assert_eq!(dictionary(2).len(), 30);
    assert_eq!(dictionary(3).len(), 70);
}

#[test]
fn snapshot_embedding_holds_each_sample() {
    let grid = TorusGrid::new(2, 8).unwrap();
    let u = SpectralField::from_fn(grid, |x| [x[1].sin(), 0.0, 0.0]);
    let samples =
        dissipeuler_core::young::samples_from_snapshots(&[(0.0, u.clone()), (0.25, u)], 1.0);
    assert_eq!(samples.len(), 2);
    assert!((samples[0].1 - 0.25).abs() <= 1e-15 && (samples[1].1 - 0.75).abs() <= 1e-15);
    assert!((TAU * TAU - grid.volume()).abs() <= 1e-12);
}
