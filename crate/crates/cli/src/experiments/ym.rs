use serde::Serialize;

use dissipeuler_core::limit::{momentum_residual, test_field, MomentumResidual, WeakFormObserver};
use dissipeuler_core::solver::{run_path_observed, StepObserver, StepView};
use dissipeuler_core::young::{BinSpec, CellPartition, Concentration, MeasureBuilder};
use dissipeuler_core::{ForcingMode, NoiseBasis, SpectralField};

use crate::artifacts::{csv, Audit, Outcome};
use crate::{run_err, CliError, RunConfig};

/// Time-averaged velocity per space-time cell, accumulated directly from
/// the trajectory.
struct CellMeans {
    partition: CellPartition,
    points: Vec<Vec<usize>>,
    sums: Vec<[f64; 3]>,
}

impl StepObserver for CellMeans {
    fn on_step(&mut self, view: &StepView<'_>) {
        let Some(slab) = self.partition.slab_of(view.t) else {
            return;
        };
        let offset = self.partition.slab_cells(slab).start;
        let w = view.dt / self.partition.slab_duration();
        for (c, pts) in self.points.iter().enumerate() {
            let inv = w / pts.len() as f64;
            for i in 0..self.partition.dim() {
                let comp = view.physical.component(i);
                self.sums[offset + c][i] += pts.iter().map(|&p| comp[p]).sum::<f64>() * inv;
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentumRow {
    pub test: ForcingMode,
    pub measure: MomentumResidual,
    /// `|<u(t),phi> - <u(0),phi> - flux - viscous - noise|` from the trajectory.
    pub classical_residual: f64,
    pub oracle_gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct YmReport {
    pub path: u64,
    pub viscosity: f64,
    pub max_barycenter_gap: f64,
    pub max_slab_energy: f64,
    pub sup_energy: f64,
    pub momentum: Vec<MomentumRow>,
    pub momentum_tolerance: f64,
}

/// Young measure of one trajectory, its export, and the weak momentum
/// balance computed from the measure against the classical weak form.
pub fn run(cfg: &RunConfig, seed: u64) -> Result<Outcome, CliError> {
    let spec = cfg.ym();
    let solver = &cfg.solver;
    let grid = solver.grid;
    let coarse = CellPartition::new(grid, spec.cells_per_axis, spec.slabs, solver.horizon)
        .map_err(run_err)?;
    let fine =
        CellPartition::new(grid, grid.n(), solver.steps(), solver.horizon).map_err(run_err)?;
    let bins = BinSpec::new(spec.bin_radius);
    let modes = if spec.test_modes.is_empty() {
        solver.forcing.modes().to_vec()
    } else {
        spec.test_modes.clone()
    };
    let phis: Vec<SpectralField> = modes
        .iter()
        .map(|m| test_field(grid, m))
        .collect::<Result<_, _>>()
        .map_err(run_err)?;

    let mut means = CellMeans {
        partition: coarse,
        points: coarse.cell_points(),
        sums: vec![[0.0; 3]; coarse.len()],
    };
    let mut obs = (
        (
            MeasureBuilder::new(coarse, bins, Concentration::Clip),
            MeasureBuilder::new(fine, bins, Concentration::Clip),
        ),
        (
            WeakFormObserver::new(phis.clone(), solver.viscosity, solver.forcing.rank()),
            &mut means,
        ),
    );
    let run = run_path_observed(solver, seed, spec.path, &mut obs).map_err(run_err)?;
    let ((coarse_b, fine_b), (weak, _)) = obs;
    let (measure, fine_measure) = (coarse_b.finish(), fine_b.finish());
    let records = weak.into_records();

    let mut out = Outcome::default();
    let bary = measure.barycenter();
    let gap = bary
        .iter()
        .zip(&means.sums)
        .flat_map(|(b, m)| (0..grid.dim()).map(move |i| (b[i] - m[i]).abs()))
        .fold(0.0, f64::max);
    let speed = measure.diagnostics().max_speed.max(1.0);
    out.audit(Audit::upper(
        "barycenter equals cell-averaged velocity",
        "young_measure::barycenter",
        gap,
        1e-12 * speed,
    ));

    let slab_energy: Vec<f64> = (0..coarse.slabs()).map(|s| measure.energy_of(s)).collect();
    let max_slab = slab_energy.iter().cloned().fold(0.0, f64::max);
    let sup = run.trace.sup_energy();
    out.audit(Audit::upper(
        "slab energy within pathwise energy bound",
        "young_measure::energy_of",
        max_slab,
        sup * (1.0 + 1e-12),
    ));

    let basis = NoiseBasis::new(&solver.forcing, grid).map_err(run_err)?;
    let beta = run.wiener.beta(solver.steps());
    let (first, last) = (records.first(), records.last());
    let (Some(r0), Some(rt)) = (first, last) else {
        return Err(CliError::Run("no weak-form records".into()));
    };
    let tolerance = spec.energy_c * solver.dt.sqrt() * (1.0 + run.trace.initial_energy());
    let mut rows = Vec::new();
    for (j, (mode, phi)) in modes.iter().zip(&phis).enumerate() {
        let m = momentum_residual(
            &fine_measure,
            &run.initial,
            &run.final_state,
            solver.horizon,
            phi,
            &basis,
            &beta,
            solver.viscosity,
        )
        .map_err(run_err)?;
        let weights = basis.project(phi);
        let noise: f64 = weights.iter().zip(&rt.beta).map(|(a, b)| a * b).sum();
        let classical = (rt.martingale(r0, j) - noise).abs();
        rows.push(MomentumRow {
            test: mode.clone(),
            measure: m,
            classical_residual: classical,
            oracle_gap: (m.residual - classical).abs(),
        });
    }
    let oracle = rows.iter().map(|r| r.oracle_gap).fold(0.0, f64::max);
    out.audit(Audit::upper(
        "momentum residual equals classical weak-form residual",
        "limit_verifier::momentum_residual",
        oracle,
        spec.oracle_tol,
    ));
    let worst = rows.iter().map(|r| r.measure.residual).fold(0.0, f64::max);
    out.audit(Audit::upper(
        "momentum residual within tol(dt)",
        "limit_verifier::momentum_residual",
        worst,
        tolerance,
    ));

    out.json("measure.json", &measure.to_json())?;
    let d = grid.dim();
    out.file(
        "barycenter.csv",
        csv(
            &["slab", "cell", "u1", "u2", "u3"][..d + 2],
            bary.iter().enumerate().map(|(c, b)| {
                let (slab, cell) = coarse.split(c);
                let mut row = vec![slab as f64, cell as f64];
                row.extend_from_slice(&b[..d]);
                row
            }),
        ),
    );
    out.file(
        "slab_energy.csv",
        csv(
            &["slab", "t_mid", "energy", "lambda_t"],
            slab_energy
                .iter()
                .enumerate()
                .map(|(s, e)| vec![s as f64, coarse.slab_midpoint(s), *e, measure.lambda_t(s)]),
        ),
    );
    out.json(
        "ym.json",
        &YmReport {
            path: spec.path,
            viscosity: solver.viscosity,
            max_barycenter_gap: gap,
            max_slab_energy: max_slab,
            sup_energy: sup,
            momentum: rows,
            momentum_tolerance: tolerance,
        },
    )?;
    Ok(out)
}
