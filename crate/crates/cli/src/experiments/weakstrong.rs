use rayon::prelude::*;
use serde::Serialize;

use dissipeuler_core::solver::run_path_observed;
use dissipeuler_core::stats::MeanEstimate;
use dissipeuler_core::weak_strong::{
    crossterm_identity_check, discretization_slack, gronwall_audit, monotone_within_ci,
    relative_energy_trace, strong_reference, CrossTermCheck, GronwallReport, RelativeEnergyTrace,
};
use dissipeuler_core::young::{BinSpec, CellPartition, Concentration, MeasureBuilder};
use dissipeuler_core::SolverConfig;

use crate::artifacts::{csv, Audit, Outcome};
use crate::config::WeakStrongSpec;
use crate::{run_err, CliError, RunConfig};

const OP_F: &str = "weak_strong::relative_energy";
const OP_GRONWALL: &str = "weak_strong::gronwall_audit";

#[derive(Debug, Clone, Serialize)]
pub struct PathOutcome {
    pub path: u64,
    /// Resolution horizon of the reference.
    pub horizon: f64,
    pub tau_l: f64,
    /// `sup ||grad v||_inf` over reference times before the horizon.
    pub grad_sup: f64,
    pub slack: Vec<f64>,
    pub traces: Vec<RelativeEnergyTrace>,
    pub crossterm: Vec<CrossTermCheck>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LadderRow {
    pub viscosity: f64,
    pub slack: f64,
    pub gronwall: GronwallReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct WeakStrongReport {
    pub l: f64,
    pub ladder: Vec<LadderRow>,
    pub paths: Vec<PathSummary>,
    pub crossterm: Vec<CrossTermCheck>,
    pub stopped_fraction: f64,
    pub chebyshev_bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PathSummary {
    pub path: u64,
    pub horizon: f64,
    pub tau_l: f64,
    pub grad_sup: f64,
}

/// Reference and every candidate viscosity on one path. The cross-term
/// identity is evaluated on path 0 only.
pub fn compare(
    solver: &SolverConfig,
    spec: &WeakStrongSpec,
    seed: u64,
    path: u64,
) -> Result<PathOutcome, CliError> {
    let partition =
        CellPartition::new(solver.grid, solver.grid.n(), solver.steps(), solver.horizon)
            .map_err(run_err)?;
    let bins = BinSpec::new(spec.bin_radius);
    let reference =
        strong_reference(solver, &spec.reference, partition, seed, path).map_err(run_err)?;
    let mut traces = Vec::with_capacity(spec.viscosities.len());
    let mut slack = Vec::with_capacity(spec.viscosities.len());
    let mut crossterm = Vec::new();
    for &eps in &spec.viscosities {
        let cfg = SolverConfig {
            viscosity: eps,
            ..solver.clone()
        };
        let mut b = MeasureBuilder::new(partition, bins, Concentration::Clip);
        let run = run_path_observed(&cfg, seed, path, &mut b).map_err(run_err)?;
        let measure = b.finish();
        traces.push(
            relative_energy_trace(&measure, &run.initial, &reference, eps, spec.l)
                .map_err(run_err)?,
        );
        slack.push(discretization_slack(
            &reference,
            eps,
            solver.dt,
            spec.reference.dt_divisor,
            spec.l,
        ));
        if path == 0 {
            crossterm.push(crossterm_identity_check(
                &measure,
                &reference.cells,
                0..partition.slabs(),
            ));
        }
    }
    let grad_sup = reference
        .grad_sup
        .iter()
        .filter(|(t, _)| *t < reference.horizon)
        .map(|(_, g)| *g)
        .fold(0.0, f64::max);
    let tau_l = traces.first().map_or(reference.horizon, |t| t.tau_l);
    Ok(PathOutcome {
        path,
        horizon: reference.horizon,
        tau_l,
        grad_sup,
        slack,
        traces,
        crossterm,
    })
}

fn relative_residual(c: &CrossTermCheck) -> f64 {
    let scale = c.a_i.abs() + c.a_iii.abs() + c.rhs.abs();
    if scale == 0.0 {
        0.0
    } else {
        c.residual / scale
    }
}

/// Weak candidates along the ladder against a resolved reference, per path
/// and in expectation over the ensemble.
pub fn run(cfg: &RunConfig, seed: u64) -> Result<Outcome, CliError> {
    let spec = cfg.weakstrong();
    let paths: Vec<PathOutcome> = (0..spec.paths)
        .into_par_iter()
        .map(|p| compare(&cfg.solver, &spec, seed, p))
        .collect::<Result<_, _>>()?;
    let mut out = Outcome::default();

    let f0 = paths
        .iter()
        .flat_map(|p| p.traces.iter().map(|t| t.f0))
        .fold(0.0, f64::max);
    out.audit(Audit::upper(
        "F(0) = 0 for identical initial data",
        OP_F,
        f0,
        0.0,
    ));
    let min_f = paths
        .iter()
        .flat_map(|p| p.traces.iter().map(RelativeEnergyTrace::min_value))
        .fold(f64::INFINITY, f64::min);
    out.audit(Audit::lower("F >= 0 on every slab", OP_F, min_f, 0.0));
    let gap = paths
        .iter()
        .flat_map(|p| p.traces.iter().map(RelativeEnergyTrace::max_gap))
        .fold(0.0, f64::max);
    out.audit(Audit::upper(
        "measure and expanded forms of F agree",
        OP_F,
        gap,
        spec.form_tolerance,
    ));

    let crossterm = paths
        .first()
        .map(|p| p.crossterm.clone())
        .unwrap_or_default();
    let cross = crossterm.iter().map(relative_residual).fold(0.0, f64::max);
    out.audit(Audit::upper(
        "cross-term identity (relative residual)",
        "weak_strong::crossterm_identity_check",
        cross,
        spec.crossterm_tolerance,
    ));

    let mut ladder = Vec::new();
    for (i, &eps) in spec.viscosities.iter().enumerate() {
        let times = &paths[0].traces[i].times;
        let stopped: Vec<Vec<f64>> = paths.iter().map(|p| p.traces[i].stopped()).collect();
        let f0s: Vec<f64> = paths.iter().map(|p| p.traces[i].f0).collect();
        let slack = paths.iter().map(|p| p.slack[i]).fold(0.0, f64::max);
        let g = gronwall_audit(times, &stopped, &f0s, spec.l, slack, spec.z).map_err(run_err)?;
        let margin = g
            .rows
            .iter()
            .map(|r| r.margin + r.mean.half_width)
            .fold(f64::INFINITY, f64::min);
        out.audit(Audit {
            name: format!("Gronwall envelope, viscosity {eps}"),
            operation: OP_GRONWALL.into(),
            value: margin,
            threshold: 0.0,
            margin,
            pass: g.pass,
        });
        ladder.push(LadderRow {
            viscosity: eps,
            slack,
            gronwall: g,
        });
    }
    let sups: Vec<MeanEstimate> = ladder.iter().map(|r| r.gronwall.sup).collect();
    out.audit(Audit::check(
        "sup E[F] decreases along the ladder within CI",
        OP_GRONWALL,
        monotone_within_ci(&sups),
    ));

    let n = paths.len() as f64;
    let stopped: Vec<f64> = paths
        .iter()
        .map(|p| if p.tau_l < p.horizon { 1.0 } else { 0.0 })
        .collect();
    let grads: Vec<f64> = paths.iter().map(|p| p.grad_sup / spec.l).collect();
    let ps = MeanEstimate::from_samples(&stopped, spec.z);
    let gs = MeanEstimate::from_samples(&grads, spec.z);
    out.audit(Audit::upper(
        "P[tau_L < horizon] within the Chebyshev bound",
        "weak_strong::stopping_time",
        ps.mean,
        gs.mean + ps.half_width + gs.half_width,
    ));

    let mut rows = Vec::new();
    for p in &paths {
        for t in &p.traces {
            let s = t.stopped();
            for (k, v) in t.values.iter().enumerate() {
                rows.push(vec![
                    p.path as f64,
                    t.viscosity,
                    t.times[k],
                    v.measure_form,
                    v.expanded_form,
                    s.get(k).copied().unwrap_or(f64::NAN),
                ]);
            }
        }
    }
    out.file(
        "relative_energy.csv",
        csv(
            &[
                "path",
                "viscosity",
                "t",
                "f_measure",
                "f_expanded",
                "f_stopped",
            ],
            rows,
        ),
    );
    out.file(
        "envelope.csv",
        csv(
            &["viscosity", "t", "mean", "half_width", "envelope"],
            ladder.iter().flat_map(|l| {
                l.gronwall.rows.iter().map(move |r| {
                    vec![l.viscosity, r.t, r.mean.mean, r.mean.half_width, r.envelope]
                })
            }),
        ),
    );
    out.json(
        "weakstrong.json",
        &WeakStrongReport {
            l: spec.l,
            ladder,
            paths: paths
                .iter()
                .map(|p| PathSummary {
                    path: p.path,
                    horizon: p.horizon,
                    tau_l: p.tau_l,
                    grad_sup: p.grad_sup,
                })
                .collect(),
            crossterm,
            stopped_fraction: stopped.iter().sum::<f64>() / n,
            chebyshev_bound: gs.mean,
        },
    )?;
    Ok(out)
}
