use serde::Serialize;

use dissipeuler_core::limit::{
    energy_inequality_limit, run_ladder_ensemble, EnergyLimitReport, ViscosityLadder,
};
use dissipeuler_core::solver::{apriori_monitor, MomentReport};
use dissipeuler_core::young::{BinSpec, CellPartition};
use dissipeuler_core::EnergyTrace;

use super::{required_c, trace_csv};
use crate::artifacts::{csv, Audit, Outcome};
use crate::{run_err, CliError, RunConfig};

#[derive(Debug, Clone, Serialize)]
pub struct RungSummary {
    pub viscosity: f64,
    pub max_required_c: f64,
    pub sup_energy: f64,
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LimitSummary {
    pub path: u64,
    pub max_defect: f64,
    pub max_jump: f64,
    pub tolerance: f64,
    pub slab_energy: Vec<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct VanishReport {
    pub viscosities: Vec<f64>,
    pub paths: u64,
    /// `weakstar_distance` between the ensemble measures of successive rungs.
    pub distances: Vec<f64>,
    pub rungs: Vec<RungSummary>,
    pub moments: Option<MomentReport>,
    pub energy_limit: Vec<LimitSummary>,
}

/// Vanishing-viscosity ladder over a path ensemble with shared noise.
pub fn run(cfg: &RunConfig, seed: u64) -> Result<Outcome, CliError> {
    let spec = cfg.vanish();
    let ladder =
        ViscosityLadder::new(cfg.solver.clone(), spec.viscosities.clone()).map_err(run_err)?;
    let partition = CellPartition::new(
        cfg.solver.grid,
        spec.cells_per_axis,
        spec.slabs,
        cfg.solver.horizon,
    )
    .map_err(run_err)?;
    let bins = BinSpec::new(spec.bin_radius);
    let ens =
        run_ladder_ensemble(&ladder, partition, bins, seed, 0..spec.paths).map_err(run_err)?;
    let mut out = Outcome::default();

    let mut rungs = Vec::new();
    let mut by_rung: Vec<(f64, Vec<EnergyTrace>)> = Vec::new();
    for (i, &eps) in spec.viscosities.iter().enumerate() {
        let entries: Vec<_> = ens.runs.iter().map(|r| &r.entries[i]).collect();
        for (p, e) in entries.iter().enumerate() {
            out.file(format!("traces/eps{i}_path{p}.csv"), trace_csv(&e.trace));
        }
        rungs.push(RungSummary {
            viscosity: eps,
            max_required_c: entries
                .iter()
                .map(|e| required_c(&e.trace, cfg.solver.dt))
                .fold(0.0, f64::max),
            sup_energy: entries
                .iter()
                .map(|e| e.trace.sup_energy())
                .fold(0.0, f64::max),
            errors: entries.iter().filter_map(|e| e.error.clone()).collect(),
        });
        by_rung.push((eps, entries.iter().map(|e| e.trace.clone()).collect()));
    }
    out.audit(Audit::check(
        "ladder completed without blow-up",
        "limit_verifier::run_ladder",
        ens.completed(),
    ));

    let strictly = ens.distances.windows(2).all(|w| w[1] < w[0]);
    out.audit(Audit::check(
        "Cauchy diagnostic strictly decreasing along the ladder",
        "young_measure::weakstar_distance",
        strictly,
    ));
    out.file(
        "distances.csv",
        csv(
            &["rung", "viscosity", "next_viscosity", "distance"],
            ens.distances
                .iter()
                .enumerate()
                .map(|(i, d)| vec![i as f64, spec.viscosities[i], spec.viscosities[i + 1], *d]),
        ),
    );

    let worst = rungs.iter().map(|r| r.max_required_c).fold(0.0, f64::max);
    out.audit(Audit::upper(
        "energy inequality, every rung and path",
        "ns_solver::energy_audit",
        worst,
        spec.energy_c,
    ));

    let moments = if spec.paths >= 2 {
        let m = apriori_monitor(&by_rung, spec.moment_p, spec.z).map_err(run_err)?;
        out.audit(Audit::check(
            "energy moments uniform in viscosity",
            "ns_solver::apriori_monitor",
            m.uniform,
        ));
        Some(m)
    } else {
        None
    };

    let e0 = ens
        .runs
        .iter()
        .flat_map(|r| r.entries.iter().map(|e| e.trace.initial_energy()))
        .fold(0.0, f64::max);
    let tolerance = spec.energy_c * cfg.solver.dt.sqrt() * (1.0 + e0);
    let tail = ladder.tail();
    let mut limits = Vec::new();
    for (p, run) in ens.runs.iter().enumerate() {
        let traces: Vec<EnergyTrace> = run.entries[tail.clone()]
            .iter()
            .map(|e| e.trace.clone())
            .collect();
        let r: EnergyLimitReport =
            energy_inequality_limit(&run.family, &traces, None, tolerance).map_err(run_err)?;
        limits.push(LimitSummary {
            path: p as u64,
            max_defect: r.max_defect,
            max_jump: r.max_jump,
            tolerance,
            slab_energy: r.slab_energy,
            pass: r.pass,
        });
    }
    let max_defect = limits
        .iter()
        .map(|l| l.max_defect)
        .fold(f64::NEG_INFINITY, f64::max);
    let max_jump = limits
        .iter()
        .map(|l| l.max_jump)
        .fold(f64::NEG_INFINITY, f64::max);
    out.audit(Audit::upper(
        "slab energy inequality of the family measure",
        "limit_verifier::energy_inequality_limit",
        max_defect,
        tolerance,
    ));
    out.audit(Audit::upper(
        "no positive energy jumps of the family measure",
        "limit_verifier::energy_inequality_limit",
        max_jump,
        tolerance,
    ));

    out.json(
        "vanish.json",
        &VanishReport {
            viscosities: spec.viscosities.clone(),
            paths: spec.paths,
            distances: ens.distances.clone(),
            rungs,
            moments,
            energy_limit: limits,
        },
    )?;
    Ok(out)
}
