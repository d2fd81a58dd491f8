use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use dissipeuler_bench::{config, field};
use dissipeuler_core::solver::{run_path, step};
use dissipeuler_core::spectral::{convective_term, leray_project};
use dissipeuler_core::young::{BinSpec, CellPartition, Concentration, MeasureBuilder};

fn spectral(c: &mut Criterion) {
    let mut g = c.benchmark_group("spectral");
    for (dim, n) in [(2, 64), (2, 128), (3, 32)] {
        let u = field(dim, n);
        g.bench_with_input(
            BenchmarkId::new("convective_term", format!("{dim}d_n{n}")),
            &u,
            |b, u| b.iter(|| convective_term(black_box(u))),
        );
        g.bench_with_input(
            BenchmarkId::new("leray_project", format!("{dim}d_n{n}")),
            &u,
            |b, u| b.iter(|| leray_project(black_box(u))),
        );
    }
    g.finish();
}

fn solver(c: &mut Criterion) {
    let mut g = c.benchmark_group("solver");
    for (dim, n) in [(2, 64), (3, 32)] {
        let cfg = config(dim, n);
        let u = field(dim, n);
        let dw = vec![0.05; cfg.forcing.rank()];
        g.bench_function(BenchmarkId::new("step", format!("{dim}d_n{n}")), |b| {
            b.iter(|| step(black_box(&u), &dw, &cfg).expect("step"))
        });
    }
    let cfg = config(2, 64);
    g.sample_size(10);
    g.bench_function("run_path_2d_n64_10_steps", |b| {
        b.iter(|| run_path(black_box(&cfg), 3, 0).expect("run"))
    });
    g.finish();
}

fn young(c: &mut Criterion) {
    let u = field(2, 64).to_physical();
    let partition = CellPartition::new(u.grid(), 16, 10, 1.0).expect("partition");
    c.bench_function("young/add_field_2d_n64", |b| {
        b.iter(|| {
            let mut m = MeasureBuilder::new(partition, BinSpec::new(4.0), Concentration::Split);
            m.add_field(0.0, 0.1, black_box(&u));
            m.finish()
        })
    });
}

criterion_group!(benches, spectral, solver, young);
criterion_main!(benches);
