//! Pathwise weak-strong comparison through the relative energy
//!
//! ```text
//! F(t) = 1/2 int <nu_{t,x}, |xi - v(t,x)|^2> dx + 1/2 lambda_t(T^d)
//! ```
//!
//! between a (Young-measure) weak candidate and a resolved reference `v`
//! computed on a finer grid with a smaller step, zero viscosity and the same
//! Wiener path. The reference is sampled at the candidate's grid points and
//! step times, so on a partition with one cell per grid point and one slab
//! per step `F` is evaluated pointwise.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::solver::{
    run_path_from, run_path_observed, SolverConfig, SolverError, StepObserver, StepView,
};
use crate::spectral::{
    convective_term, gradient, l2_norm_sq, laplacian, tail_energy_fraction, SpectralField,
    TorusGrid,
};
use crate::stats::MeanEstimate;
use crate::young::{
    BinSpec, CellPartition, Concentration, GeneralizedYoungMeasure, MeasureBuilder, Quadratic,
    TestIntegrand, Weight,
};

#[derive(Debug, Error)]
pub enum WeakStrongError {
    #[error("invalid reference: {0}")]
    Reference(String),
    #[error("incompatible inputs: {0}")]
    Incompatible(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

fn default_n() -> usize {
    128
}

fn default_divisor() -> u32 {
    4
}

fn default_tail() -> f64 {
    1e-6
}

/// How the resolved reference is derived from the candidate configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSpec {
    /// Points per axis of the reference grid.
    #[serde(default = "default_n")]
    pub n: usize,
    /// Reference step is the candidate step divided by this power of two.
    #[serde(default = "default_divisor")]
    pub dt_divisor: u32,
    /// The reference is trusted while the energy fraction above half its
    /// dealiasing cutoff stays below this threshold.
    #[serde(default = "default_tail")]
    pub tail_threshold: f64,
}

impl Default for ReferenceSpec {
    fn default() -> Self {
        Self {
            n: default_n(),
            dt_divisor: default_divisor(),
            tail_threshold: default_tail(),
        }
    }
}

impl ReferenceSpec {
    pub fn config(&self, weak: &SolverConfig) -> Result<SolverConfig, WeakStrongError> {
        if !self.dt_divisor.is_power_of_two() {
            return Err(WeakStrongError::Reference(
                "dt_divisor must be a power of two".into(),
            ));
        }
        let grid = TorusGrid::new(weak.grid.dim(), self.n)
            .map_err(|e| WeakStrongError::Reference(e.to_string()))?;
        if self.n < weak.grid.n() {
            return Err(WeakStrongError::Reference(
                "reference grid is coarser than the candidate grid".into(),
            ));
        }
        Ok(SolverConfig {
            grid,
            viscosity: 0.0,
            dt: weak.dt / f64::from(self.dt_divisor),
            path_level: weak.path_level + self.dt_divisor.trailing_zeros(),
            snapshot_times: Vec::new(),
            ..weak.clone()
        })
    }
}

/// Per-cell averages of the reference at the partition's sample points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReference {
    pub v: Vec<[f64; 3]>,
    /// `grad[c][i][j] = d_j v_i`.
    pub grad: Vec<[[f64; 3]; 3]>,
    /// `(v . grad) v`.
    pub advection: Vec<[f64; 3]>,
    pub samples: Vec<usize>,
}

impl CellReference {
    pub fn new(cells: usize) -> Self {
        Self {
            v: vec![[0.0; 3]; cells],
            grad: vec![[[0.0; 3]; 3]; cells],
            advection: vec![[0.0; 3]; cells],
            samples: vec![0; cells],
        }
    }

    /// Adds `v` (on a grid that refines the partition grid by an integer
    /// factor) at the partition's grid points to slab `slab`.
    pub fn accumulate(&mut self, partition: &CellPartition, slab: usize, v: &SpectralField) {
        let pg = partition.grid();
        let vg = v.grid();
        assert!(
            vg.n() % pg.n() == 0 && vg.dim() == pg.dim(),
            "reference grid must refine the partition grid"
        );
        let stride = vg.n() / pg.n();
        let dim = pg.dim();
        let phys = v.to_physical();
        let g = gradient(v);
        let gp: Vec<Vec<f64>> = (0..dim * dim)
            .map(|e| g.entry_physical(e / dim, e % dim))
            .collect();
        let offset = partition.slab_cells(slab).start;
        for p in 0..pg.len() {
            let m = pg.multi_index(p);
            let q = (0..dim).fold(0, |acc, a| acc * vg.n() + m[a] * stride);
            let c = offset + partition.spatial_cell_of(p);
            let val = phys.value(q);
            for i in 0..dim {
                self.v[c][i] += val[i];
                let mut adv = 0.0;
                for j in 0..dim {
                    let d = gp[i * dim + j][q];
                    self.grad[c][i][j] += d;
                    adv += val[j] * d;
                }
                self.advection[c][i] += adv;
            }
            self.samples[c] += 1;
        }
    }

    /// Turns the accumulated sums into averages.
    pub fn finish(mut self) -> Self {
        for c in 0..self.v.len() {
            let n = self.samples[c];
            if n == 0 {
                continue;
            }
            let inv = 1.0 / n as f64;
            for i in 0..3 {
                self.v[c][i] *= inv;
                self.advection[c][i] *= inv;
                for j in 0..3 {
                    self.grad[c][i][j] *= inv;
                }
            }
        }
        self
    }

    /// Reference data of sampled fields `(t, v(t))`, each assigned to its slab.
    pub fn from_samples(partition: &CellPartition, samples: &[(f64, SpectralField)]) -> Self {
        let mut r = Self::new(partition.len());
        for (t, v) in samples {
            if let Some(slab) = partition.slab_of(*t) {
                r.accumulate(partition, slab, v);
            }
        }
        r.finish()
    }
}

/// Resolved reference trajectory on one path.
#[derive(Debug, Clone)]
pub struct StrongReference {
    pub partition: CellPartition,
    pub cells: CellReference,
    /// `(t, max_x |grad v|)` at every reference step and at the horizon.
    pub grad_sup: Vec<(f64, f64)>,
    /// `(t, tail energy fraction)` at the same times.
    pub tail: Vec<(f64, f64)>,
    /// Resolution horizon: first time the tail fraction exceeds the threshold.
    pub horizon: f64,
    /// `sup_t ||Delta v||_{L^2}` at the sample times.
    pub laplacian_sup: f64,
    /// `sup ||C(v(t + h)) - C(v(t))|| / h` over consecutive sample times.
    pub drift_rate: f64,
    /// `sup_t ||v - P v||_{L^2}`, `P` the projection on modes the candidate grid retains.
    pub truncation: f64,
    pub initial: SpectralField,
    pub config: SolverConfig,
}

struct ReferenceObserver {
    partition: CellPartition,
    sample_dt: f64,
    tail_cut: i64,
    weak_cut: i64,
    cells: CellReference,
    grad_sup: Vec<(f64, f64)>,
    tail: Vec<(f64, f64)>,
    laplacian_sup: f64,
    drift_rate: f64,
    truncation: f64,
    last_drift: Option<(f64, SpectralField)>,
}

impl ReferenceObserver {
    fn observe(&mut self, t: f64, v: &SpectralField) {
        self.grad_sup.push((t, gradient(v).sup_norm()));
        self.tail.push((t, tail_energy_fraction(v, self.tail_cut)));
        let k = (t / self.sample_dt).round();
        if (t - k * self.sample_dt).abs() > 1e-9 * self.sample_dt {
            return;
        }
        if let Some(slab) = self.partition.slab_of(t) {
            self.cells.accumulate(&self.partition, slab, v);
        }
        self.laplacian_sup = self.laplacian_sup.max(l2_norm_sq(&laplacian(v)).sqrt());
        let norm2 = l2_norm_sq(v);
        self.truncation = self
            .truncation
            .max((tail_energy_fraction(v, self.weak_cut) * norm2).sqrt());
        let c = convective_term(v);
        if let Some((t0, c0)) = &self.last_drift {
            let mut d = c.clone();
            d.add_scaled(c0, -1.0);
            self.drift_rate = self.drift_rate.max(l2_norm_sq(&d).sqrt() / (t - t0));
        }
        self.last_drift = Some((t, c));
    }
}

impl StepObserver for ReferenceObserver {
    fn on_step(&mut self, view: &StepView<'_>) {
        self.observe(view.t, view.u);
    }

    fn on_finish(&mut self, t: f64, u: &SpectralField) {
        self.observe(t, u);
    }
}

/// Runs the reference for candidate configuration `weak` on path `(seed, path_id)`.
///
/// The initial datum is the candidate's, resampled to the reference grid, so
/// the two start from identical fields.
pub fn strong_reference(
    weak: &SolverConfig,
    spec: &ReferenceSpec,
    partition: CellPartition,
    seed: u64,
    path_id: u64,
) -> Result<StrongReference, WeakStrongError> {
    if partition.grid() != weak.grid {
        return Err(WeakStrongError::Incompatible(
            "partition must live on the candidate grid".into(),
        ));
    }
    let config = spec.config(weak)?;
    let u0 = weak.initial.sample(weak.grid, seed, path_id)?;
    let initial = u0.resample(config.grid);
    let mut obs = ReferenceObserver {
        partition,
        sample_dt: weak.dt,
        tail_cut: config.grid.dealias_cutoff() / 2,
        weak_cut: weak.grid.dealias_cutoff(),
        cells: CellReference::new(partition.len()),
        grad_sup: Vec::new(),
        tail: Vec::new(),
        laplacian_sup: 0.0,
        drift_rate: 0.0,
        truncation: 0.0,
        last_drift: None,
    };
    run_path_from(&config, initial.clone(), seed, path_id, &mut obs)?;
    let horizon = obs
        .tail
        .iter()
        .find(|(_, f)| *f > spec.tail_threshold)
        .map_or(config.horizon, |(t, _)| *t);
    Ok(StrongReference {
        partition,
        cells: obs.cells.finish(),
        grad_sup: obs.grad_sup,
        tail: obs.tail,
        horizon,
        laplacian_sup: obs.laplacian_sup,
        drift_rate: obs.drift_rate,
        truncation: obs.truncation,
        initial,
        config,
    })
}

/// `tau_L`: first trace time in `[0, horizon)` with `||grad v||_inf > L`, else the horizon.
pub fn stopping_time(grad_sup: &[(f64, f64)], horizon: f64, l: f64) -> f64 {
    grad_sup
        .iter()
        .take_while(|(t, _)| *t < horizon)
        .find(|(_, g)| *g > l)
        .map_or(horizon, |(t, _)| *t)
}

/// `F` on one slab, as a pairing and through the expanded identity
/// `E + 1/2 int |v|^2 - int u . v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeEnergy {
    pub measure_form: f64,
    pub expanded_form: f64,
    /// `E + 1/2 int |v|^2`, the size of the terms that cancel in the expanded form.
    pub scale: f64,
}

impl RelativeEnergy {
    /// `|a - b| / max(|a|, |b|)`, with values below `1e-12 * scale`
    /// treated as rounding noise of the expanded form.
    pub fn relative_gap(&self) -> f64 {
        let scale = self
            .measure_form
            .abs()
            .max(self.expanded_form.abs())
            .max(1e-12 * self.scale);
        if scale == 0.0 {
            0.0
        } else {
            (self.measure_form - self.expanded_form).abs() / scale
        }
    }
}

pub fn relative_energy(
    v: &GeneralizedYoungMeasure,
    reference: &CellReference,
    slab: usize,
) -> RelativeEnergy {
    let p = v.partition();
    let dim = p.dim();
    let range = p.slab_cells(slab);
    let bary = v.barycenter();
    let mut pairing = 0.0;
    let mut vv = 0.0;
    let mut uv = 0.0;
    for c in range.clone() {
        let cell = &v.cells()[c];
        let vr = &reference.v[c];
        let total = cell.nu_weight();
        // Centered per bin so that each contribution is non-negative.
        let mean_dist = if total == 0.0 {
            vr[..dim].iter().map(|x| x * x).sum()
        } else {
            cell.nu
                .iter()
                .map(|(_, m)| {
                    let mean = m.mean();
                    let var: f64 = (0..dim)
                        .map(|i| m.second[i][i] - m.first[i] * mean[i])
                        .sum::<f64>()
                        .max(0.0);
                    let d: f64 = (0..dim).map(|i| (mean[i] - vr[i]).powi(2)).sum();
                    var + m.weight * d
                })
                .sum::<f64>()
                / total
        };
        pairing += mean_dist * p.cell_measure() + cell.lambda;
        vv += vr[..dim].iter().map(|x| x * x).sum::<f64>();
        uv += (0..dim).map(|i| bary[c][i] * vr[i]).sum::<f64>();
    }
    let dt = p.slab_duration();
    let measure_form = 0.5 * pairing / dt;
    let energy = v.energy_of(slab) + 0.5 * vv * p.cell_volume();
    let expanded_form = energy - uv * p.cell_volume();
    RelativeEnergy {
        measure_form,
        expanded_form,
        scale: energy,
    }
}

/// Both sides of `A_I + A_III = int int <nu, (xi - v) (x) (xi - v)> : grad v`
/// with `A_I = int int <nu, xi (x) xi> : grad v` and
/// `A_III = -int int div(v (x) v) . u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossTermCheck {
    pub a_i: f64,
    pub a_iii: f64,
    pub rhs: f64,
    pub residual: f64,
}

pub fn crossterm_identity_check(
    v: &GeneralizedYoungMeasure,
    reference: &CellReference,
    slabs: std::ops::Range<usize>,
) -> CrossTermCheck {
    let dim = v.partition().dim();
    let one = Weight::Constant(1.0);
    let n = v.cells().len();
    let mut flux = Vec::with_capacity(n);
    let mut adv = Vec::with_capacity(n);
    let mut rhs = Vec::with_capacity(n);
    for c in 0..n {
        let g = &reference.grad[c];
        let w = &reference.v[c];
        let mut q = Quadratic::default();
        for i in 0..dim {
            for j in 0..dim {
                q.quadratic[i][j] = g[i][j];
            }
        }
        flux.push(q);
        let mut a = Quadratic::default();
        for i in 0..dim {
            a.linear[i] = -reference.advection[c][i];
        }
        adv.push(a);
        // (xi - w)_i (xi - w)_j G_ij
        let mut r = q;
        for a_ in 0..dim {
            r.linear[a_] = -(0..dim)
                .map(|j| w[j] * g[a_][j] + w[j] * g[j][a_])
                .sum::<f64>();
        }
        r.constant = (0..dim)
            .flat_map(|i| (0..dim).map(move |j| (i, j)))
            .map(|(i, j)| w[i] * w[j] * g[i][j])
            .sum();
        rhs.push(r);
    }
    let a_i = v
        .pairing_parts(&TestIntegrand::CellQuadratic(flux), &one, slabs.clone())
        .0;
    let a_iii = v
        .pairing_parts(&TestIntegrand::CellQuadratic(adv), &one, slabs.clone())
        .0;
    let rhs = v
        .pairing_parts(&TestIntegrand::CellQuadratic(rhs), &one, slabs)
        .0;
    CrossTermCheck {
        a_i,
        a_iii,
        rhs,
        residual: (a_i + a_iii - rhs).abs(),
    }
}

/// `F` per slab for one candidate on one path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeEnergyTrace {
    pub viscosity: f64,
    /// `F(0) = 1/2 ||u(0) - v(0)||^2` on the reference grid.
    pub f0: f64,
    /// Slab start times.
    pub times: Vec<f64>,
    pub values: Vec<RelativeEnergy>,
    pub tau_l: f64,
    pub horizon: f64,
}

impl RelativeEnergyTrace {
    /// `F(t_i ^ tau_L)` (measure form) for every slab start `t_i <= horizon`.
    pub fn stopped(&self) -> Vec<f64> {
        let last = self
            .times
            .iter()
            .rposition(|&t| t <= self.tau_l + 1e-12)
            .unwrap_or(0);
        (0..self.times.len())
            .take_while(|&i| self.times[i] <= self.horizon + 1e-12)
            .map(|i| self.values[i.min(last)].measure_form)
            .collect()
    }

    pub fn max_gap(&self) -> f64 {
        self.values
            .iter()
            .map(RelativeEnergy::relative_gap)
            .fold(0.0, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.values
            .iter()
            .map(|v| v.measure_form)
            .fold(self.f0, f64::min)
    }
}

/// Relative energy of `candidate` (embedded on the reference's partition)
/// against `reference`, with stopping level `l`.
pub fn relative_energy_trace(
    candidate: &GeneralizedYoungMeasure,
    initial: &SpectralField,
    reference: &StrongReference,
    viscosity: f64,
    l: f64,
) -> Result<RelativeEnergyTrace, WeakStrongError> {
    let p = candidate.partition();
    if !p.compatible(&reference.partition) {
        return Err(WeakStrongError::Incompatible(
            "candidate and reference partitions differ".into(),
        ));
    }
    let mut diff = initial.resample(reference.initial.grid());
    diff.add_scaled(&reference.initial, -1.0);
    let f0 = 0.5 * l2_norm_sq(&diff);
    let times = (0..p.slabs())
        .map(|s| s as f64 * p.slab_duration())
        .collect();
    let values = (0..p.slabs())
        .map(|s| relative_energy(candidate, &reference.cells, s))
        .collect();
    Ok(RelativeEnergyTrace {
        viscosity,
        f0,
        times,
        values,
        tau_l: stopping_time(&reference.grad_sup, reference.horizon, l),
        horizon: reference.horizon,
    })
}

/// Reference plus one relative-energy trace per viscosity, on one path.
#[derive(Debug, Clone)]
pub struct PathComparison {
    pub path_id: u64,
    pub reference: StrongReference,
    pub traces: Vec<RelativeEnergyTrace>,
}

/// Runs the reference and every candidate viscosity on path `(seed, path_id)`.
#[allow(clippy::too_many_arguments)]
pub fn compare_path(
    weak: &SolverConfig,
    viscosities: &[f64],
    spec: &ReferenceSpec,
    partition: CellPartition,
    bins: BinSpec,
    seed: u64,
    path_id: u64,
    l: f64,
) -> Result<PathComparison, WeakStrongError> {
    let reference = strong_reference(weak, spec, partition, seed, path_id)?;
    let mut traces = Vec::with_capacity(viscosities.len());
    for &eps in viscosities {
        let cfg = SolverConfig {
            viscosity: eps,
            ..weak.clone()
        };
        let mut b = MeasureBuilder::new(partition, bins, Concentration::Clip);
        let run = run_path_observed(&cfg, seed, path_id, &mut b)?;
        traces.push(relative_energy_trace(
            &b.finish(),
            &run.initial,
            &reference,
            eps,
            l,
        )?);
    }
    Ok(PathComparison {
        path_id,
        reference,
        traces,
    })
}

/// Discretization budget `1/2 (T (eps A + dt (1 + 1/r) B) + rho)^2 e^{L T}`
/// for the Gronwall envelope, with `A`, `B`, `rho` from the reference and
/// `r` the reference step divisor.
pub fn discretization_slack(
    reference: &StrongReference,
    viscosity: f64,
    dt: f64,
    divisor: u32,
    l: f64,
) -> f64 {
    let t = reference.config.horizon;
    let rate = viscosity * reference.laplacian_sup
        + dt * (1.0 + 1.0 / f64::from(divisor)) * reference.drift_rate;
    let amplitude = t * rate + reference.truncation;
    0.5 * amplitude * amplitude * (l * t).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GronwallRow {
    pub t: f64,
    pub mean: MeanEstimate,
    pub envelope: f64,
    pub margin: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GronwallReport {
    pub l: f64,
    pub f0_mean: f64,
    pub slack: f64,
    pub rows: Vec<GronwallRow>,
    /// `sup_t E[F(t ^ tau_L)]` with its interval.
    pub sup: MeanEstimate,
    pub pass: bool,
}

/// Checks `E[F(t ^ tau_L)] <= (E[F(0)] + slack) e^{L t}` per slab over an
/// ensemble of stopped traces (one row per path, already truncated at `tau_L`).
///
/// A row passes when the envelope is not exceeded by more than the
/// confidence half-width of the mean.
pub fn gronwall_audit(
    times: &[f64],
    stopped: &[Vec<f64>],
    f0: &[f64],
    l: f64,
    slack: f64,
    z: f64,
) -> Result<GronwallReport, WeakStrongError> {
    if stopped.is_empty() || stopped.len() != f0.len() {
        return Err(WeakStrongError::Incompatible(
            "one stopped trace and one F(0) per path required".into(),
        ));
    }
    let len = stopped
        .iter()
        .map(Vec::len)
        .min()
        .unwrap_or(0)
        .min(times.len());
    let f0_mean = f0.iter().sum::<f64>() / f0.len() as f64;
    let mut rows = Vec::with_capacity(len);
    for (i, &t) in times.iter().enumerate().take(len) {
        let xs: Vec<f64> = stopped.iter().map(|s| s[i]).collect();
        let mean = MeanEstimate::from_samples(&xs, z);
        let envelope = (f0_mean + slack) * (l * t).exp();
        let margin = envelope - mean.mean;
        let pass = mean.mean <= envelope * (1.0 + 1e-12) + mean.half_width;
        rows.push(GronwallRow {
            t,
            mean,
            envelope,
            margin,
            pass,
        });
    }
    let sup = rows
        .iter()
        .map(|r| r.mean)
        .max_by(|a, b| a.mean.total_cmp(&b.mean))
        .unwrap_or(MeanEstimate {
            mean: 0.0,
            std_error: 0.0,
            half_width: 0.0,
            samples: 0,
        });
    let pass = rows.iter().all(|r| r.pass);
    Ok(GronwallReport {
        l,
        f0_mean,
        slack,
        rows,
        sup,
        pass,
    })
}

/// `est[i+1] <= est[i] + hw[i] + hw[i+1]` along a ladder.
pub fn monotone_within_ci(estimates: &[MeanEstimate]) -> bool {
    estimates
        .windows(2)
        .all(|w| w[1].mean <= w[0].mean + w[0].half_width + w[1].half_width)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::young::dirac_embed;
    use crate::PhysicalField;

    #[test]
    fn stopping_time_cases() {
        let trace = vec![(0.0, 1.0), (0.1, 2.0), (0.2, 3.0), (0.3, 1.0)];
        assert_eq!(stopping_time(&trace, 0.3, 10.0), 0.3);
        assert_eq!(stopping_time(&trace, 0.3, 1.5), 0.1);
        assert_eq!(stopping_time(&trace, 0.3, 1e-9), 0.0);
    }

    #[test]
    fn pure_concentration_gives_half_lambda() {
        let g = TorusGrid::new(2, 8).unwrap();
        let p = CellPartition::new(g, 8, 1, 1.0).unwrap();
        let u = PhysicalField::from_fn(g, |x| {
            if x[0] == 0.0 && x[1] == 0.0 {
                [10.0, 0.0, 0.0]
            } else {
                [0.0; 3]
            }
        });
        let mut b = MeasureBuilder::new(p, BinSpec::new(1.0), Concentration::Split);
        b.add_field(0.0, 1.0, &u);
        let v = b.finish();
        let r = CellReference::from_samples(&p, &[(0.0, SpectralField::zeros(g))]);
        let f = relative_energy(&v, &r, 0);
        assert!((f.measure_form - 0.5 * v.lambda_t(0)).abs() < 1e-12);
        assert!((f.expanded_form - f.measure_form).abs() < 1e-12);
    }

    #[test]
    fn embedding_of_reference_has_zero_relative_energy() {
        let g = TorusGrid::new(2, 16).unwrap();
        let p = CellPartition::new(g, 16, 2, 1.0).unwrap();
        let v0 = SpectralField::from_fn(g, |x| {
            [x[0].sin() * x[1].cos(), -x[0].cos() * x[1].sin(), 0.0]
        });
        let mut v1 = v0.clone();
        v1.scale(0.5);
        let samples = vec![(0.0, v0.clone()), (0.5, v1.clone())];
        let r = CellReference::from_samples(&p, &samples);
        let m = dirac_embed(
            p,
            BinSpec::new(2.0),
            &[(0.0, 0.5, v0.to_physical()), (0.5, 0.5, v1.to_physical())],
        );
        for s in 0..2 {
            let f = relative_energy(&m, &r, s);
            assert!(f.measure_form.abs() < 1e-14, "{f:?}");
            assert!(f.expanded_form.abs() < 1e-12, "{f:?}");
        }
    }

    #[test]
    fn crossterm_vanishes_for_constant_reference() {
        let g = TorusGrid::new(2, 16).unwrap();
        let p = CellPartition::new(g, 16, 1, 1.0).unwrap();
        let u = SpectralField::from_fn(g, |x| [x[1].sin(), 0.0, 0.0]);
        let v = SpectralField::from_fn(g, |_| [0.3, 0.2, 0.0]);
        let m = dirac_embed(p, BinSpec::new(2.0), &[(0.0, 1.0, u.to_physical())]);
        let r = CellReference::from_samples(&p, &[(0.0, v)]);
        let c = crossterm_identity_check(&m, &r, 0..1);
        assert!(c.a_i.abs() < 1e-13 && c.a_iii.abs() < 1e-13 && c.rhs.abs() < 1e-13);
    }

    #[test]
    fn exact_exponential_passes_with_zero_margin() {
        let l = 0.7;
        let times: Vec<f64> = (0..5).map(|i| i as f64 * 0.1).collect();
        let f: Vec<f64> = times.iter().map(|t| 0.2 * (l * t).exp()).collect();
        let rep = gronwall_audit(&times, &[f.clone(), f], &[0.2, 0.2], l, 0.0, 1.96).unwrap();
        assert!(rep.pass);
        assert!(rep.rows.iter().all(|r| r.margin.abs() < 1e-14));
    }
}
