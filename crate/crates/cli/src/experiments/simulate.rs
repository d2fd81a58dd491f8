use rayon::prelude::*;
use serde::Serialize;

use dissipeuler_core::solver::{run_path, SolverError};
use dissipeuler_core::spectral::write_snapshot;
use dissipeuler_core::stats::observed_order;
use dissipeuler_core::{EnergyTrace, SolverConfig, SpectralField};

use super::{required_c, trace_csv};
use crate::artifacts::{csv, Audit, Outcome};
use crate::{run_err, CliError, RunConfig};

const OP_AUDIT: &str = "ns_solver::energy_audit";
const OP_RUN: &str = "ns_solver::run_path";

#[derive(Debug, Clone, Serialize)]
pub struct PathSummary {
    pub path: u64,
    pub initial_energy: f64,
    pub sup_energy: f64,
    pub final_energy: f64,
    pub max_positive_defect: f64,
    pub defect_at: Option<(f64, f64)>,
    pub required_c: f64,
    pub cfl_subdivisions: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelSummary {
    pub level: u32,
    pub dt: f64,
    pub mean_max_defect: f64,
    pub paths: Vec<PathSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateReport {
    pub energy_c: f64,
    pub levels: Vec<LevelSummary>,
    pub observed_order: Option<f64>,
}

struct PathResult {
    trace: EnergyTrace,
    snapshots: Vec<(f64, SpectralField)>,
    summary: PathSummary,
}

fn one_path(cfg: &SolverConfig, seed: u64, path: u64) -> Result<PathResult, CliError> {
    let (trace, snapshots, subdivisions, error) = match run_path(cfg, seed, path) {
        Ok(run) => (run.trace, run.snapshots, run.cfl_subdivisions, None),
        Err(SolverError::BlowUp {
            t,
            max_speed,
            ceiling,
            partial,
        }) => (
            *partial,
            Vec::new(),
            0,
            Some(format!(
                "blow-up at t = {t}: max |u| = {max_speed} > {ceiling}"
            )),
        ),
        Err(e) => return Err(run_err(e)),
    };
    let rows = trace.rows();
    let summary = PathSummary {
        path,
        initial_energy: trace.initial_energy(),
        sup_energy: trace.sup_energy(),
        final_energy: rows.last().map_or(0.0, |r| r.energy),
        max_positive_defect: trace.max_positive_defect(),
        defect_at: trace.max_defect().map(|d| (d.s, d.t)),
        required_c: required_c(&trace, cfg.dt),
        cfl_subdivisions: subdivisions,
        error,
    };
    Ok(PathResult {
        trace,
        snapshots,
        summary,
    })
}

/// Runs `paths` trajectories at `levels` successive dt-halvings, each level
/// refining the same Wiener paths, and audits the discrete energy inequality.
pub fn run(cfg: &RunConfig, seed: u64) -> Result<Outcome, CliError> {
    let spec = cfg.simulate();
    let mut out = Outcome::default();
    let mut levels = Vec::new();
    for level in 0..spec.levels {
        let mut solver = cfg.solver.clone();
        solver.dt = cfg.solver.dt / f64::from(1u32 << level);
        solver.path_level = cfg.solver.path_level + level;
        if level > 0 {
            solver.snapshot_times.clear();
        }
        let results: Vec<PathResult> = (0..spec.paths)
            .into_par_iter()
            .map(|p| one_path(&solver, seed, p))
            .collect::<Result<_, _>>()?;
        for r in &results {
            out.file(
                format!("traces/level{level}_path{}.csv", r.summary.path),
                trace_csv(&r.trace),
            );
            for (i, (t, u)) in r.snapshots.iter().enumerate() {
                let mut buf = Vec::new();
                write_snapshot(&mut buf, u, *t).map_err(run_err)?;
                out.file(format!("snapshots/path{}_{i:03}.bin", r.summary.path), buf);
            }
        }
        let paths: Vec<PathSummary> = results.into_iter().map(|r| r.summary).collect();
        let completed = paths.iter().all(|p| p.error.is_none());
        out.audit(Audit::check(
            format!("trajectories completed (level {level})"),
            OP_RUN,
            completed,
        ));
        let worst = paths.iter().map(|p| p.required_c).fold(0.0, f64::max);
        out.audit(Audit::upper(
            format!("energy inequality, all (s,t) pairs (level {level})"),
            OP_AUDIT,
            worst,
            spec.energy_c,
        ));
        let mean = paths.iter().map(|p| p.max_positive_defect).sum::<f64>() / paths.len() as f64;
        levels.push(LevelSummary {
            level,
            dt: solver.dt,
            mean_max_defect: mean,
            paths,
        });
    }

    let mut order = None;
    if levels.len() >= 2 {
        let dts: Vec<f64> = levels.iter().map(|l| l.dt).collect();
        let means: Vec<f64> = levels.iter().map(|l| l.mean_max_defect).collect();
        if means.iter().all(|&m| m == 0.0) {
            out.audit(Audit::check(
                "defects vanish at every level",
                OP_AUDIT,
                true,
            ));
        } else {
            let decreasing = means.windows(2).all(|w| w[1] < w[0]);
            out.audit(Audit::check(
                "mean max defect decreases under dt-halving",
                OP_AUDIT,
                decreasing,
            ));
            if levels.len() >= 3 {
                let p = if means.iter().all(|&m| m > 0.0) {
                    observed_order(&dts, &means)
                } else {
                    f64::NAN
                };
                order = Some(p);
                out.audit(Audit::lower(
                    "observed order of mean max defect",
                    OP_AUDIT,
                    p,
                    spec.min_order,
                ));
            }
        }
        out.file(
            "refinement.csv",
            csv(
                &["level", "dt", "mean_max_defect"],
                levels
                    .iter()
                    .map(|l| vec![f64::from(l.level), l.dt, l.mean_max_defect]),
            ),
        );
    }
    out.json(
        "simulate.json",
        &SimulateReport {
            energy_c: spec.energy_c,
            levels,
            observed_order: order,
        },
    )?;
    Ok(out)
}
