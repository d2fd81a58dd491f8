//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! Runs as a plain binary (`harness = false`) so the criterion lines are
//! printed by an ordinary `cargo test`. Tolerances and runtime budgets are
//! the constants below.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use dissipeuler_cli::artifacts::{write_run, MANIFEST};
use dissipeuler_cli::{execute, load_config, resolve_seed, with_threads, Outcome, RunConfig};
use dissipeuler_core::forcing::{ForcingMode, ModeKind};
use dissipeuler_core::rng::standard_normal;
use dissipeuler_core::solver::{run_path_observed, StepObserver, StepView};
use dissipeuler_core::spectral::{convective_term, inner_product, l2_norm_sq, leray_project};
use dissipeuler_core::young::{
    dirac_embed, estimate_from_family, sphere_bin, BinSpec, CellPartition, FieldSample, General,
    TestIntegrand, Weight,
};
use dissipeuler_core::{
    ForcingOperator, InitialLaw, PhysicalField, SolverConfig, SpectralField, TorusGrid, WienerPath,
};

const SPECTRAL_TOL: f64 = 1e-10;
const TAYLOR_GREEN_TOL: f64 = 1e-8;
const ISOMETRY_REL_TOL: f64 = 0.05;
const MC_SIGMAS: f64 = 4.0;
const TV_TOL: f64 = 0.05;
const LAMBDA_REL_TOL: f64 = 0.05;
const PAIRING_REL_TOL: f64 = 0.02;
const MIN_ORDER: f64 = 0.5;
const MAX_MARTINGALE_TESTS: usize = 24;
const FORM_TOL: f64 = 0.02;
const LADDER: [f64; 4] = [0.1, 0.05, 0.025, 0.0125];

const BUDGET_1: u64 = 10;
const BUDGET_2: u64 = 60;
const BUDGET_3: u64 = 300;
const BUDGET_4: u64 = 60;
const BUDGET_5: u64 = 600;
const BUDGET_6: u64 = 600;
const BUDGET_7: u64 = 1200;
const BUDGET_8: u64 = 1200;

const FIXTURE_STREAM: u32 = 0x7E57_0001;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn criterion(id: u32, name: &str, budget: u64, f: impl FnOnce() -> Verdict) -> bool {
    let start = Instant::now();
    let v = f();
    let elapsed = start.elapsed();
    let in_budget = elapsed <= Duration::from_secs(budget);
    let pass = v.pass && in_budget;
    println!(
        "criterion {id} {:<34} {}  {}; {:.1}s of {budget}s{}",
        name,
        if pass { "PASS" } else { "FAIL" },
        v.detail,
        elapsed.as_secs_f64(),
        if in_budget { "" } else { " (over budget)" }
    );
    pass
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

struct Run {
    cfg: RunConfig,
    outcome: Outcome,
    manifest: Vec<u8>,
}

fn run_config(name: &str, threads: usize) -> Run {
    let (cfg, raw) = load_config(&configs_dir().join(format!("{name}.toml"))).unwrap();
    let seed = resolve_seed(&cfg, None).unwrap();
    let outcome = with_threads(Some(threads), || execute(&cfg, &raw, seed))
        .unwrap()
        .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    write_run(&out, cfg.experiment.name(), seed, &outcome).unwrap();
    let manifest = std::fs::read(out.join(MANIFEST)).unwrap();
    Run {
        cfg,
        outcome,
        manifest,
    }
}

fn failed_audits(o: &Outcome) -> String {
    let failed: Vec<&str> = o
        .audits
        .iter()
        .filter(|a| !a.pass)
        .map(|a| a.name.as_str())
        .collect();
    if failed.is_empty() {
        String::new()
    } else {
        format!(" failed: [{}]", failed.join("; "))
    }
}

fn json_file(o: &Outcome, name: &str) -> serde_json::Value {
    let bytes = &o.files.iter().find(|(n, _)| n == name).unwrap().1;
    serde_json::from_slice(bytes).unwrap()
}

fn random_field(grid: TorusGrid, seed: u64) -> SpectralField {
    let components = (0..grid.dim())
        .map(|i| {
            (0..grid.len())
                .map(|p| standard_normal(seed, FIXTURE_STREAM, i as u64, 0, p as u64))
                .collect()
        })
        .collect();
    SpectralField::from_physical(&PhysicalField::from_components(grid, components))
}

fn spectral() -> Verdict {
    let (mut idem, mut adj, mut neutral) = (0.0f64, 0.0f64, 0.0f64);
    for s in 0..200u64 {
        let grid = if s % 2 == 0 {
            TorusGrid::new(2, 32).unwrap()
        } else {
            TorusGrid::new(3, 16).unwrap()
        };
        let f = random_field(grid, 2 * s);
        let g = random_field(grid, 2 * s + 1);
        let pf = leray_project(&f);
        let mut d = leray_project(&pf);
        d.add_scaled(&pf, -1.0);
        idem = idem.max((l2_norm_sq(&d) / l2_norm_sq(&pf)).sqrt());
        let lhs = inner_product(&pf, &g);
        let rhs = inner_product(&f, &leray_project(&g));
        adj = adj.max((lhs - rhs).abs() / (l2_norm_sq(&f) * l2_norm_sq(&g)).sqrt());
        let u = pf.dealiased();
        let c = convective_term(&u);
        neutral =
            neutral.max(inner_product(&c, &u).abs() / (l2_norm_sq(&c) * l2_norm_sq(&u)).sqrt());
    }
    let grid = TorusGrid::new(3, 32).unwrap();
    let u = SpectralField::from_fn(grid, |x| {
        [
            x[0].sin() * x[1].cos() * x[2].cos(),
            -x[0].cos() * x[1].sin() * x[2].cos(),
            0.0,
        ]
    });
    let c = convective_term(&u).to_physical();
    let mut tg = 0.0f64;
    for p in 0..grid.len() {
        let x = grid.point(p);
        // -(u.grad)u with its gradient part removed, computed by hand.
        let (c2x, c2y, c2z) = ((2.0 * x[0]).cos(), (2.0 * x[1]).cos(), (2.0 * x[2]).cos());
        let oracle = [
            -(2.0 * x[0]).sin() * c2z / 8.0,
            -(2.0 * x[1]).sin() * c2z / 8.0,
            (2.0 * x[2]).sin() * (c2x + c2y) / 8.0,
        ];
        for i in 0..3 {
            tg = tg.max((c.component(i)[p] - oracle[i]).abs());
        }
    }
    let worst = idem.max(adj).max(neutral);
    Verdict::new(
        worst <= SPECTRAL_TOL && tg <= TAYLOR_GREEN_TOL,
        format!("200 fields: idempotence {idem:.1e}, adjointness {adj:.1e}, neutrality {neutral:.1e}; Taylor-Green {tg:.1e}"),
    )
}

#[derive(Default)]
struct Bracket {
    quadratic: f64,
}

impl StepObserver for Bracket {
    fn on_step(&mut self, view: &StepView<'_>) {
        let proj = view.basis.project(view.u);
        self.quadratic += proj.iter().map(|p| p * p).sum::<f64>() * view.dt;
    }
}

fn unit(k: &[i64], a: &[f64], sigma: f64, kind: ModeKind) -> ForcingMode {
    let n = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    ForcingMode {
        k: k.to_vec(),
        direction: a.iter().map(|x| x / n).collect(),
        sigma,
        kind,
    }
}

fn stochastic() -> Verdict {
    let cfg = SolverConfig {
        grid: TorusGrid::new(2, 16).unwrap(),
        viscosity: 0.05,
        dt: 0.01,
        horizon: 0.25,
        forcing: ForcingOperator::new(vec![
            unit(&[1, 0], &[0.0, 1.0], 0.3, ModeKind::Cos),
            unit(&[0, 1], &[1.0, 0.0], 0.3, ModeKind::Sin),
            unit(&[1, 1], &[1.0, -1.0], 0.3, ModeKind::Cos),
        ])
        .unwrap(),
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
    };
    let paths = 10_000u64;
    let pairs: Vec<(f64, f64)> = (0..paths)
        .into_par_iter()
        .map(|p| {
            let mut b = Bracket::default();
            let run = run_path_observed(&cfg, 77, p, &mut b).unwrap();
            (run.trace.rows().last().unwrap().stochastic, b.quadratic)
        })
        .collect();
    let n = paths as f64;
    let m2 = pairs.iter().map(|(m, _)| m * m).sum::<f64>() / n;
    let qv = pairs.iter().map(|(_, q)| q).sum::<f64>() / n;
    let isometry = (m2 - qv).abs() / qv;

    // Increments at the base level and after two bridge refinements.
    let mut worst_band = 0.0f64;
    for level in [0u32, 2] {
        let dt = 0.01 / f64::from(1u32 << level);
        let z: Vec<Vec<Vec<f64>>> = (0..paths)
            .into_par_iter()
            .map(|p| {
                let w = WienerPath::sample(78, p, 3, 0.01, level, 0..8).unwrap();
                w.increments()
                    .iter()
                    .map(|i| i.iter().map(|x| x / dt.sqrt()).collect())
                    .collect()
            })
            .collect();
        let all: Vec<f64> = z.iter().flatten().flatten().copied().collect();
        let m = all.len() as f64;
        let moment = |k: i32| all.iter().map(|x| x.powi(k)).sum::<f64>() / m;
        // Ratios to the standard deviation of each sample moment under N(0,1).
        worst_band = worst_band
            .max(moment(1).abs() / (1.0 / m).sqrt())
            .max((moment(2) - 1.0).abs() / (2.0 / m).sqrt())
            .max(moment(3).abs() / (15.0 / m).sqrt())
            .max((moment(4) - 3.0).abs() / (96.0 / m).sqrt());
        let pick = |s: usize, k: usize| z.iter().map(|p| p[s][k]).collect::<Vec<f64>>();
        for (a, b) in [
            (pick(0, 0), pick(0, 1)),
            (pick(3, 2), pick(4, 2)),
            (pick(1, 0), pick(7, 2)),
        ] {
            let c = a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() / n;
            worst_band = worst_band.max(c.abs() * n.sqrt());
        }
    }
    Verdict::new(
        isometry <= ISOMETRY_REL_TOL && worst_band <= MC_SIGMAS,
        format!("E[M^2] {m2:.4e} vs E[<M>] {qv:.4e} (rel {isometry:.3}); worst normality/independence z {worst_band:.2}"),
    )
}

fn energy() -> Verdict {
    let r = run_config("energy", 1);
    let s = r.cfg.simulate.clone().unwrap();
    let shape = r.cfg.solver.grid.dim() == 2
        && r.cfg.solver.grid.n() == 64
        && r.cfg.solver.viscosity == 0.05
        && s.paths == 32
        && s.levels == 3
        && s.min_order >= MIN_ORDER;
    let worst = (0..3)
        .filter_map(|l| {
            r.outcome
                .audit_named(&format!("energy inequality, all (s,t) pairs (level {l})"))
        })
        .map(|a| a.value)
        .fold(0.0, f64::max);
    let order = r
        .outcome
        .audit_named("observed order of mean max defect")
        .map_or(f64::NAN, |a| a.value);
    Verdict::new(
        shape && r.outcome.pass() && order >= MIN_ORDER,
        format!(
            "required C {worst:.3e} <= {}; observed order {order:.3}{}",
            s.energy_c,
            failed_audits(&r.outcome)
        ),
    )
}

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

fn bump(grid: TorusGrid, s: usize, theta: [f64; 2], mass: f64) -> PhysicalField {
    let h = grid.spacing();
    let a = mass.sqrt() / (s as f64 * h);
    PhysicalField::from_fn(grid, |x| {
        if x[0] < (s as f64 - 0.5) * h && x[1] < (s as f64 - 0.5) * h {
            [a * theta[0], a * theta[1], 0.0]
        } else {
            [0.0; 3]
        }
    })
}

fn young() -> Verdict {
    let grid = TorusGrid::new(2, 64).unwrap();
    let p = CellPartition::new(grid, 4, 1, 1.0).unwrap();
    let xi = [1.5, 0.75];
    let family: Vec<Vec<FieldSample>> = [4.0, 8.0, 16.0]
        .iter()
        .map(|&j| vec![(0.0, 1.0, square_wave(grid, j, xi))])
        .collect();
    let v = estimate_from_family(p, BinSpec::new(4.0), &family).unwrap();
    let atoms = [([xi[0], xi[1], 0.0], 0.5), ([-xi[0], -xi[1], 0.0], 0.5)];
    let tv = (0..p.len())
        .map(|c| v.tv_distance_to_atoms(c, &atoms))
        .fold(0.0, f64::max);

    let theta = [0.7f64.cos(), 0.7f64.sin()];
    let mass = 1.3;
    let family: Vec<Vec<FieldSample>> = [8, 4, 2, 1]
        .iter()
        .map(|&s| vec![(0.0, 1.0, bump(grid, s, theta, mass))])
        .collect();
    let c = estimate_from_family(p, BinSpec::new(1.0), &family).unwrap();
    let lambda_err = (c.lambda_total() - mass).abs() / mass;
    let probs = c.nu_inf_probabilities(0);
    let bin = sphere_bin(2, &[theta[0], theta[1], 0.0]);
    let direction = probs
        .iter()
        .find(|(b, _)| *b == bin)
        .map_or(0.0, |(_, w)| *w);

    let g32 = TorusGrid::new(2, 32).unwrap();
    let steps = 20;
    let samples: Vec<FieldSample> = (0..steps)
        .map(|n| {
            let t = n as f64 / steps as f64;
            let (a, b) = (t.cos(), 0.6 * (2.0 * t).sin());
            let u = PhysicalField::from_fn(g32, |x| {
                [
                    a * x[0].sin() * x[1].cos() + b * (2.0 * x[1]).sin(),
                    -a * x[0].cos() * x[1].sin(),
                    0.0,
                ]
            });
            (t, 1.0 / steps as f64, u)
        })
        .collect();
    let f = |x: &[f64; 3]| x[0] * x[0] + x[1] * x[1] + (3.0 * x[0]).sin();
    let phi = |x: &[f64; 3]| 1.0 + 0.5 * x[0].cos();
    let m = dirac_embed(
        CellPartition::new(g32, 16, steps, 1.0).unwrap(),
        BinSpec::new(2.0),
        &samples,
    );
    let general = General::new(2, f, |th: &[f64; 3]| th[0] * th[0] + th[1] * th[1]).unwrap();
    let paired = m.pairing(
        &TestIntegrand::General(general),
        &Weight::function(move |_, x| phi(x)),
    );
    let direct: f64 = samples
        .iter()
        .map(|(_, dt, u)| {
            (0..g32.len())
                .map(|q| phi(&g32.point(q)) * f(&u.value(q)))
                .sum::<f64>()
                * g32.point_volume()
                * dt
        })
        .sum();
    let pairing_err = (paired - direct).abs() / direct.abs();
    Verdict::new(
        tv <= TV_TOL && lambda_err <= LAMBDA_REL_TOL && (direction - 1.0).abs() <= 1e-12 && pairing_err <= PAIRING_REL_TOL,
        format!(
            "TV {tv:.1e}; lambda rel {lambda_err:.1e}; nu_inf mass in bin {bin}: {direction:.3}; pairing rel {pairing_err:.1e}"
        ),
    )
}

fn martingale() -> Verdict {
    let mut pass = true;
    let mut detail = Vec::new();
    for (name, paths, transport) in [
        ("martingale_linear", 10_000, false),
        ("martingale", 256, true),
    ] {
        let r = run_config(name, 1);
        let spec = r.cfg.martingale.clone().unwrap();
        let tests = r.outcome.audits.len();
        let shape = spec.paths == paths
            && r.cfg.solver.transport == transport
            && tests <= MAX_MARTINGALE_TESTS;
        pass &= shape && r.outcome.pass();
        let passed = r.outcome.audits.iter().filter(|a| a.pass).count();
        detail.push(format!(
            "{name}: {passed}/{tests} statistics at {paths} paths{}",
            failed_audits(&r.outcome)
        ));
    }
    Verdict::new(pass, detail.join("; "))
}

fn vanish() -> Verdict {
    let mut pass = true;
    let mut detail = Vec::new();
    for (name, paths, stochastic) in [("vanish_deterministic", 1, false), ("vanish", 8, true)] {
        let r = run_config(name, 1);
        let spec = r.cfg.vanish.clone().unwrap();
        let shape = spec.viscosities == LADDER
            && spec.paths == paths
            && r.cfg.solver.grid.dim() == 2
            && r.cfg.solver.forcing.is_zero() != stochastic;
        let cauchy = r
            .outcome
            .audit_named("Cauchy diagnostic strictly decreasing along the ladder")
            .is_some_and(|a| a.pass);
        let report = json_file(&r.outcome, "vanish.json");
        let d: Vec<f64> = serde_json::from_value(report["distances"].clone()).unwrap();
        let strictly = d.len() == 3 && d.windows(2).all(|w| w[1] < w[0]);
        pass &= shape && cauchy && strictly;
        detail.push(format!(
            "{name}: {}",
            d.iter()
                .map(|x| format!("{x:.4}"))
                .collect::<Vec<_>>()
                .join(" > ")
        ));
    }
    Verdict::new(pass, detail.join("; "))
}

fn weak_strong() -> Verdict {
    let r = run_config("weakstrong", 1);
    let s = r.cfg.weakstrong.clone().unwrap();
    let shape = r.cfg.solver.grid.n() == 32
        && s.reference.n == 128
        && s.reference.dt_divisor == 4
        && s.paths == 64
        && s.viscosities == LADDER
        && s.form_tolerance <= FORM_TOL;
    let need = [
        "F(0) = 0 for identical initial data",
        "F >= 0 on every slab",
        "measure and expanded forms of F agree",
        "sup E[F] decreases along the ladder within CI",
    ];
    let named = need
        .iter()
        .all(|n| r.outcome.audit_named(n).is_some_and(|a| a.pass));
    let gronwall = LADDER.iter().all(|eps| {
        r.outcome
            .audit_named(&format!("Gronwall envelope, viscosity {eps}"))
            .is_some_and(|a| a.pass)
    });
    let gap = r.outcome.audit_named(need[2]).map_or(f64::NAN, |a| a.value);
    let report = json_file(&r.outcome, "weakstrong.json");
    let sups: Vec<String> = report["ladder"]
        .as_array()
        .unwrap()
        .iter()
        .map(|row| format!("{:.2e}", row["gronwall"]["sup"]["mean"].as_f64().unwrap()))
        .collect();
    Verdict::new(
        shape && named && gronwall && r.outcome.pass(),
        format!(
            "form gap {gap:.1e}; sup E[F] {}; envelopes hold{}",
            sups.join(" > "),
            failed_audits(&r.outcome)
        ),
    )
}

fn determinism() -> Verdict {
    let names = [
        "simulate_zero",
        "energy",
        "ym",
        "vanish_deterministic",
        "vanish",
        "martingale",
        "martingale_linear",
        "weakstrong",
    ];
    let mut mismatched = Vec::new();
    for name in names {
        let a = run_config(name, 1);
        let b = run_config(name, 8);
        if a.manifest != b.manifest {
            mismatched.push(name);
        }
    }
    Verdict::new(
        mismatched.is_empty(),
        format!(
            "{} configs at 1 and 8 threads; mismatched: {mismatched:?}",
            names.len()
        ),
    )
}

fn main() -> ExitCode {
    let results = [
        criterion(1, "spectral correctness", BUDGET_1, spectral),
        criterion(2, "stochastic calculus", BUDGET_2, stochastic),
        criterion(3, "discrete energy inequality", BUDGET_3, energy),
        criterion(4, "Young-measure oracles", BUDGET_4, young),
        criterion(5, "martingale identification", BUDGET_5, martingale),
        criterion(6, "vanishing-viscosity Cauchy", BUDGET_6, vanish),
        criterion(7, "weak-strong relative energy", BUDGET_7, weak_strong),
        criterion(8, "determinism", BUDGET_8, determinism),
    ];
    let failed = results.iter().filter(|p| !**p).count();
    println!(
        "acceptance: {} of {} criteria passed",
        results.len() - failed,
        results.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
