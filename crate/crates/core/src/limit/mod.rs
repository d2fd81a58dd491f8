//! Vanishing-viscosity harness and identification of the limit equations.
//!
//! A [`ViscosityLadder`] runs one configuration at decreasing viscosities on
//! a single shared Wiener path. The runs are embedded as Young measures; the
//! family estimator over the tail of the ladder stands in for the limit
//! measure, and successive weak* distances serve as a Cauchy diagnostic.

mod martingale;

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use martingale::{
    martingale_ensemble, martingale_test, HistoryFunctional, MartingaleReport, MartingaleStat,
    PathRecord, StatisticKind, StatisticResult, WeakFormObserver, WeakFormRecord,
};

use crate::forcing::{ForcingError, ForcingMode, ForcingOperator, NoiseBasis, WienerPath};
use crate::solver::{run_path_observed, EnergyTrace, SolverConfig, SolverError};
use crate::spectral::{gradient, inner_product, laplacian, SpectralField, TorusGrid};
use crate::young::{
    dictionary, BinSpec, CellPartition, Concentration, GeneralizedYoungMeasure, MeasureBuilder,
    Quadratic, TestIntegrand, Weight, YoungError,
};

#[derive(Debug, Error)]
pub enum LimitError {
    #[error("invalid ladder: {0}")]
    Ladder(String),
    #[error("invalid statistic: {0}")]
    Statistic(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Young(#[from] YoungError),
    #[error(transparent)]
    Forcing(#[from] ForcingError),
}

/// Strictly decreasing positive viscosities sharing one base configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViscosityLadder {
    pub base: SolverConfig,
    pub viscosities: Vec<f64>,
}

impl ViscosityLadder {
    pub fn new(base: SolverConfig, viscosities: Vec<f64>) -> Result<Self, LimitError> {
        if viscosities.is_empty() {
            return Err(LimitError::Ladder("no viscosities".into()));
        }
        if viscosities.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            return Err(LimitError::Ladder("viscosities must be positive".into()));
        }
        if viscosities.windows(2).any(|w| w[1] >= w[0]) {
            return Err(LimitError::Ladder(
                "viscosities must be strictly decreasing".into(),
            ));
        }
        base.validate()?;
        Ok(Self { base, viscosities })
    }

    pub fn config(&self, i: usize) -> SolverConfig {
        SolverConfig {
            viscosity: self.viscosities[i],
            ..self.base.clone()
        }
    }

    pub fn len(&self) -> usize {
        self.viscosities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.viscosities.is_empty()
    }

    /// Indices of the ladder tail used by the family estimator (last half).
    pub fn tail(&self) -> Range<usize> {
        self.len() / 2..self.len()
    }
}

/// One rung of a ladder run.
#[derive(Debug, Clone)]
pub struct LadderEntry {
    pub viscosity: f64,
    pub trace: EnergyTrace,
    pub initial: SpectralField,
    pub final_state: SpectralField,
    /// `(delta_u, 0, 0)` embedding of the run.
    pub measure: GeneralizedYoungMeasure,
    /// Oscillation/concentration split of the run, used by the family estimator.
    split: GeneralizedYoungMeasure,
    /// Solver error, if the run stopped early (the entry then holds the partial trace).
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct LadderRun {
    pub entries: Vec<LadderEntry>,
    /// Family estimator over the ladder tail.
    pub family: GeneralizedYoungMeasure,
    /// `weakstar_distance(V_i, V_{i+1})` along the ladder.
    pub distances: Vec<f64>,
    pub wiener: WienerPath,
}

impl LadderRun {
    pub fn completed(&self) -> bool {
        self.entries.iter().all(|e| e.error.is_none())
    }
}

/// Runs every rung on path `(seed, path_id)`; rungs run concurrently.
pub fn run_ladder(
    ladder: &ViscosityLadder,
    partition: CellPartition,
    bins: BinSpec,
    seed: u64,
    path_id: u64,
) -> Result<LadderRun, LimitError> {
    if partition.grid() != ladder.base.grid {
        return Err(LimitError::Ladder(
            "partition grid differs from solver grid".into(),
        ));
    }
    if (partition.horizon() - ladder.base.horizon).abs() > 1e-12 * ladder.base.horizon {
        return Err(LimitError::Ladder(
            "partition horizon differs from solver horizon".into(),
        ));
    }
    let wiener = ladder.base.wiener_path(seed, path_id)?;
    let entries: Vec<LadderEntry> = (0..ladder.len())
        .into_par_iter()
        .map(|i| {
            let cfg = ladder.config(i);
            let mut obs = (
                MeasureBuilder::new(partition, bins, Concentration::Clip),
                MeasureBuilder::new(partition, bins, Concentration::Split),
            );
            let result = run_path_observed(&cfg, seed, path_id, &mut obs);
            let (trace, initial, final_state, error) = match result {
                Ok(run) => (run.trace, run.initial, run.final_state, None),
                Err(SolverError::BlowUp {
                    t,
                    max_speed,
                    ceiling,
                    partial,
                }) => {
                    let msg = format!("blow-up at t = {t}: max |u| = {max_speed} > {ceiling}");
                    let u0 = cfg.initial.sample(cfg.grid, seed, path_id)?;
                    (*partial, u0.clone(), u0, Some(msg))
                }
                Err(e) => return Err(LimitError::from(e)),
            };
            Ok(LadderEntry {
                viscosity: cfg.viscosity,
                trace,
                initial,
                final_state,
                measure: obs.0.finish(),
                split: obs.1.finish(),
                error,
            })
        })
        .collect::<Result<_, LimitError>>()?;
    let tail: Vec<GeneralizedYoungMeasure> = entries[ladder.tail()]
        .iter()
        .map(|e| e.split.clone())
        .collect();
    let family = GeneralizedYoungMeasure::average(&tail)?;
    let dict = dictionary(partition.dim());
    let distances = entries
        .windows(2)
        .map(|w| w[0].measure.weakstar_distance(&w[1].measure, &dict))
        .collect::<Result<_, _>>()?;
    Ok(LadderRun {
        entries,
        family,
        distances,
        wiener,
    })
}

/// Ladder over a path ensemble: per rung, the Young measure of the
/// ensemble (average of the per-path measures).
#[derive(Debug, Clone)]
pub struct LadderEnsemble {
    pub runs: Vec<LadderRun>,
    pub measures: Vec<GeneralizedYoungMeasure>,
    pub distances: Vec<f64>,
}

impl LadderEnsemble {
    pub fn completed(&self) -> bool {
        self.runs.iter().all(LadderRun::completed)
    }
}

pub fn run_ladder_ensemble(
    ladder: &ViscosityLadder,
    partition: CellPartition,
    bins: BinSpec,
    seed: u64,
    paths: Range<u64>,
) -> Result<LadderEnsemble, LimitError> {
    if paths.is_empty() {
        return Err(LimitError::Ladder("empty path range".into()));
    }
    let runs: Vec<LadderRun> = paths
        .into_par_iter()
        .map(|p| run_ladder(ladder, partition, bins, seed, p))
        .collect::<Result<_, _>>()?;
    let measures: Vec<GeneralizedYoungMeasure> = (0..ladder.len())
        .map(|i| {
            let members: Vec<_> = runs.iter().map(|r| r.entries[i].measure.clone()).collect();
            GeneralizedYoungMeasure::average(&members)
        })
        .collect::<Result<_, _>>()?;
    let dict = dictionary(partition.dim());
    let distances = measures
        .windows(2)
        .map(|w| w[0].weakstar_distance(&w[1], &dict))
        .collect::<Result<_, _>>()?;
    Ok(LadderEnsemble {
        runs,
        measures,
        distances,
    })
}

/// Unit-norm divergence-free trigonometric test field.
pub fn test_field(grid: TorusGrid, mode: &ForcingMode) -> Result<SpectralField, LimitError> {
    let m = ForcingMode {
        sigma: 1.0,
        ..mode.clone()
    };
    let op = ForcingOperator::new(vec![m])?;
    Ok(NoiseBasis::new(&op, grid)?.apply(&[1.0]))
}

/// Terms of the weak momentum balance
/// `<u(t),phi> = <u(0),phi> + flux + viscous + noise`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentumResidual {
    pub t: f64,
    /// `<u(t), phi> - <u(0), phi>`.
    pub increment: f64,
    /// `int_0^t int <nu, xi (x) xi> : grad phi + int <nu_inf, theta (x) theta> : grad phi dlambda`.
    pub flux: f64,
    /// `eps int_0^t int <nu, xi> . Delta phi`.
    pub viscous: f64,
    /// `sum_k <Phi e_k, phi> beta_k(t)`.
    pub noise: f64,
    /// `|increment - flux - viscous - noise|`.
    pub residual: f64,
    /// Same without the viscous term (the inviscid limit equation).
    pub inviscid_residual: f64,
}

/// Per-cell averages of `grad phi` (as `Q_ij = d_j phi_i`) and `Delta phi`.
fn cell_test_data(
    partition: &CellPartition,
    phi: &SpectralField,
) -> (Vec<Quadratic>, Vec<Quadratic>) {
    let phi = phi.resample(partition.grid());
    let dim = partition.dim();
    let g = gradient(&phi);
    let lap = laplacian(&phi).to_physical();
    let points = partition.cell_points();
    let entries: Vec<Vec<f64>> = (0..dim * dim)
        .map(|e| g.entry_physical(e / dim, e % dim))
        .collect();
    let mut flux = Vec::with_capacity(points.len());
    let mut visc = Vec::with_capacity(points.len());
    for pts in &points {
        let inv = 1.0 / pts.len() as f64;
        let mut q = Quadratic::default();
        let mut l = Quadratic::default();
        for i in 0..dim {
            for j in 0..dim {
                q.quadratic[i][j] = pts.iter().map(|&p| entries[i * dim + j][p]).sum::<f64>() * inv;
            }
            l.linear[i] = pts.iter().map(|&p| lap.component(i)[p]).sum::<f64>() * inv;
        }
        flux.push(q);
        visc.push(l);
    }
    let slabs = partition.slabs();
    (flux.repeat(slabs), visc.repeat(slabs))
}

/// Residual of the weak momentum equation for measure `v` at slab boundary `t`.
#[allow(clippy::too_many_arguments)]
pub fn momentum_residual(
    v: &GeneralizedYoungMeasure,
    u0: &SpectralField,
    ut: &SpectralField,
    t: f64,
    phi: &SpectralField,
    basis: &NoiseBasis,
    beta: &[f64],
    viscosity: f64,
) -> Result<MomentumResidual, LimitError> {
    let p = v.partition();
    let slabs = (t / p.slab_duration()).round();
    if (slabs * p.slab_duration() - t).abs() > 1e-9 * p.horizon() || slabs as usize > p.slabs() {
        return Err(LimitError::Statistic(format!(
            "t = {t} is not a slab boundary"
        )));
    }
    let slabs = 0..slabs as usize;
    let (flux_q, visc_q) = cell_test_data(p, phi);
    let one = Weight::Constant(1.0);
    let flux = v.pairing_slabs(&TestIntegrand::CellQuadratic(flux_q), &one, slabs.clone());
    let viscous = viscosity * v.pairing_slabs(&TestIntegrand::CellQuadratic(visc_q), &one, slabs);
    let phi_u = phi.resample(u0.grid());
    let increment = inner_product(ut, &phi_u) - inner_product(u0, &phi_u);
    let weights = basis.project(&phi.resample(basis.grid()));
    let noise: f64 = weights.iter().zip(beta).map(|(a, b)| a * b).sum();
    let inviscid_residual = (increment - flux - noise).abs();
    let residual = (increment - flux - viscous - noise).abs();
    Ok(MomentumResidual {
        t,
        increment,
        flux,
        viscous,
        noise,
        residual,
        inviscid_residual,
    })
}

/// One `(s, t)` row of the slab energy audit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlabDefect {
    pub s_slab: usize,
    pub t_slab: usize,
    pub defect: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyLimitReport {
    /// `E_slab` of the measure.
    pub slab_energy: Vec<f64>,
    /// Slab averages of `I` and `M` (averaged over the family's traces).
    pub slab_ito: Vec<f64>,
    pub slab_stochastic: Vec<f64>,
    pub defects: Vec<SlabDefect>,
    pub max_defect: f64,
    pub tolerance: f64,
    /// Largest increase of `E_slab - I - M` between consecutive slabs.
    pub max_jump: f64,
    pub no_positive_jumps: bool,
    pub pass: bool,
}

fn slab_averages(
    traces: &[EnergyTrace],
    partition: &CellPartition,
    f: impl Fn(&crate::solver::TraceRow) -> f64,
) -> Vec<f64> {
    let mut sums = vec![0.0; partition.slabs()];
    let mut counts = vec![0usize; partition.slabs()];
    for tr in traces {
        // Rows are values at step ends; the measure samples the left endpoints.
        let rows = tr.rows();
        for r in &rows[..rows.len().saturating_sub(1)] {
            if let Some(s) = partition.slab_of(r.t) {
                sums[s] += f(r);
                counts[s] += 1;
            }
        }
    }
    sums.iter()
        .zip(&counts)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect()
}

/// Slab-averaged energy inequality for a (family) measure.
///
/// `pairs` selects slab pairs `(s, t)` with `s < t`; `None` audits all pairs.
pub fn energy_inequality_limit(
    v: &GeneralizedYoungMeasure,
    traces: &[EnergyTrace],
    pairs: Option<&[(usize, usize)]>,
    tolerance: f64,
) -> Result<EnergyLimitReport, LimitError> {
    let p = *v.partition();
    if traces.is_empty() {
        return Err(LimitError::Statistic("no traces".into()));
    }
    let n = p.slabs();
    let slab_energy: Vec<f64> = (0..n).map(|s| v.energy_of(s)).collect();
    let slab_ito = slab_averages(traces, &p, |r| r.ito);
    let slab_stochastic = slab_averages(traces, &p, |r| r.stochastic);
    let compensated: Vec<f64> = (0..n)
        .map(|s| slab_energy[s] - slab_ito[s] - slab_stochastic[s])
        .collect();
    let all: Vec<(usize, usize)> = (0..n)
        .flat_map(|s| (s + 1..n).map(move |t| (s, t)))
        .collect();
    let pairs = pairs.unwrap_or(&all);
    let mut defects = Vec::with_capacity(pairs.len());
    for &(s, t) in pairs {
        if !(s < t && t < n) {
            return Err(LimitError::Statistic(format!("bad slab pair ({s}, {t})")));
        }
        let defect = compensated[t] - compensated[s];
        defects.push(SlabDefect {
            s_slab: s,
            t_slab: t,
            defect,
            pass: defect <= tolerance,
        });
    }
    let max_defect = defects
        .iter()
        .map(|d| d.defect)
        .fold(f64::NEG_INFINITY, f64::max);
    let max_jump = compensated
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max);
    let no_positive_jumps = n < 2 || max_jump <= tolerance;
    let pass = defects.iter().all(|d| d.pass) && no_positive_jumps;
    Ok(EnergyLimitReport {
        slab_energy,
        slab_ito,
        slab_stochastic,
        defects,
        max_defect,
        tolerance,
        max_jump,
        no_positive_jumps,
        pass,
    })
}
