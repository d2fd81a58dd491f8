use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{test_field, LimitError};
use crate::forcing::{ForcingMode, NoiseBasis};
use crate::solver::{run_path_observed, SolverConfig, StepObserver, StepView};
use crate::spectral::{gradient, inner_product, laplacian, SpectralField};
use crate::stats::{bonferroni_z, MeanEstimate};

/// Minimum ensemble size accepted by [`martingale_test`].
pub const MIN_PATHS: usize = 32;

/// Weak-form quantities of one test field at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakFormRecord {
    pub t: f64,
    /// `<u(t), phi_j>`.
    pub pairing: Vec<f64>,
    /// `int_0^t int (u (x) u) : grad phi_j` (left-point in time).
    pub flux: Vec<f64>,
    /// `eps int_0^t <u, Delta phi_j>`.
    pub viscous: Vec<f64>,
    /// `beta_k(t)`.
    pub beta: Vec<f64>,
}

impl WeakFormRecord {
    /// Martingale part `M_j(t)` given the record at time zero.
    pub fn martingale(&self, start: &WeakFormRecord, j: usize) -> f64 {
        self.pairing[j] - start.pairing[j] - self.flux[j] - self.viscous[j]
    }
}

/// Accumulates the classical weak form of a solver trajectory against fixed
/// test fields.
pub struct WeakFormObserver {
    phis: Vec<SpectralField>,
    grads: Vec<Vec<Vec<f64>>>,
    laps: Vec<SpectralField>,
    viscosity: f64,
    flux: Vec<f64>,
    viscous: Vec<f64>,
    beta: Vec<f64>,
    records: Vec<WeakFormRecord>,
}

impl WeakFormObserver {
    pub fn new(phis: Vec<SpectralField>, viscosity: f64, modes: usize) -> Self {
        let grads = phis
            .iter()
            .map(|phi| {
                let d = phi.grid().dim();
                let g = gradient(phi);
                (0..d * d).map(|e| g.entry_physical(e / d, e % d)).collect()
            })
            .collect();
        let laps = phis.iter().map(laplacian).collect();
        let j = phis.len();
        Self {
            phis,
            grads,
            laps,
            viscosity,
            flux: vec![0.0; j],
            viscous: vec![0.0; j],
            beta: vec![0.0; modes],
            records: Vec::new(),
        }
    }

    fn record(&mut self, t: f64, u: &SpectralField) {
        self.records.push(WeakFormRecord {
            t,
            pairing: self.phis.iter().map(|phi| inner_product(u, phi)).collect(),
            flux: self.flux.clone(),
            viscous: self.viscous.clone(),
            beta: self.beta.clone(),
        });
    }

    pub fn into_records(self) -> Vec<WeakFormRecord> {
        self.records
    }
}

impl StepObserver for WeakFormObserver {
    fn on_step(&mut self, view: &StepView<'_>) {
        self.record(view.t, view.u);
        let grid = view.u.grid();
        let d = grid.dim();
        let pv = grid.point_volume();
        for (j, grad) in self.grads.iter().enumerate() {
            let mut acc = 0.0;
            for i in 0..d {
                let ui = view.physical.component(i);
                for jj in 0..d {
                    let uj = view.physical.component(jj);
                    let g = &grad[i * d + jj];
                    acc += ui
                        .iter()
                        .zip(uj)
                        .zip(g)
                        .map(|((a, b), c)| a * b * c)
                        .sum::<f64>();
                }
            }
            self.flux[j] += view.dt * acc * pv;
            if self.viscosity != 0.0 {
                self.viscous[j] += view.dt * self.viscosity * inner_product(view.u, &self.laps[j]);
            }
        }
        for (b, w) in self.beta.iter_mut().zip(view.dw) {
            *b += w;
        }
    }

    fn on_finish(&mut self, t: f64, u: &SpectralField) {
        self.record(t, u);
    }
}

/// Bounded history functional `h` of the path up to time `s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HistoryFunctional {
    One,
    /// `clamp(scale <u(s), phi_test>, -1, 1)`.
    Velocity {
        test: usize,
        scale: f64,
    },
    /// `clamp(scale beta_mode(s), -1, 1)`.
    Noise {
        mode: usize,
        scale: f64,
    },
}

impl HistoryFunctional {
    fn eval(&self, at_s: &WeakFormRecord) -> f64 {
        match *self {
            HistoryFunctional::One => 1.0,
            HistoryFunctional::Velocity { test, scale } => {
                (scale * at_s.pairing[test]).clamp(-1.0, 1.0)
            }
            HistoryFunctional::Noise { mode, scale } => (scale * at_s.beta[mode]).clamp(-1.0, 1.0),
        }
    }
}

fn default_level() -> f64 {
    0.95
}

fn default_abs_tol() -> f64 {
    1e-12
}

/// Test fields, time pairs and history functional of a martingale test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MartingaleStat {
    /// Divergence-free test fields given as unit trigonometric modes (`sigma` is ignored).
    pub tests: Vec<ForcingMode>,
    pub times: Vec<(f64, f64)>,
    pub history: HistoryFunctional,
    /// Simultaneous confidence level (Bonferroni over all statistics).
    #[serde(default = "default_level")]
    pub level: f64,
    /// Absolute slack added to each interval, absorbing rounding in exactly
    /// vanishing statistics.
    #[serde(default = "default_abs_tol")]
    pub abs_tol: f64,
}

/// Records of one ensemble member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub path_id: u64,
    pub records: Vec<WeakFormRecord>,
}

impl PathRecord {
    fn at(&self, t: f64) -> Option<&WeakFormRecord> {
        let tol = 1e-9 * t.abs().max(1.0);
        self.records.iter().find(|r| (r.t - t).abs() <= tol)
    }
}

/// Runs paths `paths` in parallel and records the weak form against `stat.tests`.
pub fn martingale_ensemble(
    cfg: &SolverConfig,
    stat: &MartingaleStat,
    seed: u64,
    paths: Range<u64>,
) -> Result<Vec<PathRecord>, LimitError> {
    let phis: Vec<SpectralField> = stat
        .tests
        .iter()
        .map(|m| test_field(cfg.grid, m))
        .collect::<Result<_, _>>()?;
    paths
        .into_par_iter()
        .map(|path_id| {
            let mut obs = WeakFormObserver::new(phis.clone(), cfg.viscosity, cfg.forcing.rank());
            run_path_observed(cfg, seed, path_id, &mut obs)?;
            Ok(PathRecord {
                path_id,
                records: obs.into_records(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StatisticKind {
    /// `h M_{s,t}`.
    Mean,
    /// `h [(M_t^2 - N_t) - (M_s^2 - N_s)]`.
    Quadratic,
    /// `h [(M_t beta_k(t) - N^k_t) - (M_s beta_k(s) - N^k_s)]`.
    Cross { mode: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticResult {
    pub kind: StatisticKind,
    pub test: usize,
    pub s: f64,
    pub t: f64,
    pub estimate: MeanEstimate,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleReport {
    pub paths: usize,
    pub tests: usize,
    pub z: f64,
    /// `sum_k <Phi e_k, phi_j>^2` per test field (`N_t` is this times `t`).
    pub quadratic_rate: Vec<f64>,
    pub results: Vec<StatisticResult>,
    pub pass: bool,
}

/// Monte Carlo means with simultaneous confidence intervals of the three
/// martingale statistics; passes when every interval contains zero.
pub fn martingale_test(
    stat: &MartingaleStat,
    cfg: &SolverConfig,
    ensemble: &[PathRecord],
) -> Result<MartingaleReport, LimitError> {
    if ensemble.len() < MIN_PATHS {
        return Err(LimitError::Statistic(format!(
            "{} paths, need at least {MIN_PATHS}",
            ensemble.len()
        )));
    }
    if stat.tests.is_empty() || stat.times.is_empty() {
        return Err(LimitError::Statistic("no test fields or time pairs".into()));
    }
    if stat.times.iter().any(|&(s, t)| !(0.0 <= s && s < t)) {
        return Err(LimitError::Statistic("time pairs need 0 <= s < t".into()));
    }
    let basis = NoiseBasis::new(&cfg.forcing, cfg.grid)?;
    let weights: Vec<Vec<f64>> = stat
        .tests
        .iter()
        .map(|m| test_field(cfg.grid, m).map(|phi| basis.project(&phi)))
        .collect::<Result<_, _>>()?;
    let rank = cfg.forcing.rank();
    let quadratic_rate: Vec<f64> = weights
        .iter()
        .map(|w| w.iter().map(|x| x * x).sum())
        .collect();

    let mut kinds = vec![StatisticKind::Mean, StatisticKind::Quadratic];
    kinds.extend((0..rank).map(|mode| StatisticKind::Cross { mode }));
    let count = stat.tests.len() * stat.times.len() * kinds.len();
    let z = bonferroni_z(stat.level, count);

    let mut results = Vec::with_capacity(count);
    for j in 0..stat.tests.len() {
        for &(s, t) in &stat.times {
            let mut samples = vec![Vec::with_capacity(ensemble.len()); kinds.len()];
            for path in ensemble {
                let missing = |x: f64| {
                    LimitError::Statistic(format!("path {} has no record at t = {x}", path.path_id))
                };
                let r0 = path.records.first().ok_or_else(|| missing(0.0))?;
                let rs = path.at(s).ok_or_else(|| missing(s))?;
                let rt = path.at(t).ok_or_else(|| missing(t))?;
                let h = stat.history.eval(rs);
                let (ms, mt) = (rs.martingale(r0, j), rt.martingale(r0, j));
                for (slot, kind) in samples.iter_mut().zip(&kinds) {
                    let x = match *kind {
                        StatisticKind::Mean => mt - ms,
                        StatisticKind::Quadratic => {
                            (mt * mt - quadratic_rate[j] * t) - (ms * ms - quadratic_rate[j] * s)
                        }
                        StatisticKind::Cross { mode } => {
                            let w = weights[j][mode];
                            (mt * rt.beta[mode] - w * t) - (ms * rs.beta[mode] - w * s)
                        }
                    };
                    slot.push(h * x);
                }
            }
            for (xs, kind) in samples.iter().zip(&kinds) {
                let estimate = MeanEstimate::from_samples(xs, z);
                let pass = estimate.mean.abs() <= estimate.half_width + stat.abs_tol;
                results.push(StatisticResult {
                    kind: *kind,
                    test: j,
                    s,
                    t,
                    estimate,
                    pass,
                });
            }
        }
    }
    let pass = results.iter().all(|r| r.pass);
    Ok(MartingaleReport {
        paths: ensemble.len(),
        tests: count,
        z,
        quadratic_rate,
        results,
        pass,
    })
}
