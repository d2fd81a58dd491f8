//! Generalized Young measures `(nu, nu_inf, lambda)` discretized on a
//! space-time cell partition.
//!
//! Each cell stores, per histogram bin, the raw moments `(sum w, sum w xi,
//! sum w xi xi^T)` of the samples that fell into it. Pairings with
//! polynomials of degree two and the barycenter are therefore exact; other
//! integrands are evaluated at the bin barycenters.
//!
//! Samples with `|xi| > R` are either clipped into the outermost bins (the
//! embedding of a single field, with a clipping diagnostic) or moved to the
//! concentration part (the family estimator): they add `|xi|^2 w` to
//! `lambda` and their direction `xi/|xi|` to `nu_inf`.

mod integrand;

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::ops::Range;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use integrand::{
    dictionary, DictionaryEntry, General, Quadratic, TestIntegrand, TrigWeight, Weight,
};

use crate::solver::{StepObserver, StepView};
use crate::spectral::{PhysicalField, SpectralField, TorusGrid};

#[derive(Debug, Error)]
pub enum YoungError {
    #[error("invalid partition: {0}")]
    Partition(String),
    #[error("incompatible measures: {0}")]
    Incompatible(String),
    #[error("inadmissible integrand: {0}")]
    Integrand(String),
    #[error("empty family")]
    EmptyFamily,
}

/// Number of bins on the unit sphere (2D: arcs; 3D: 4 equal-area z-bands of 8 sectors).
pub const SPHERE_BINS: usize = 32;
pub const DEFAULT_BINS_PER_AXIS: usize = 16;

/// `slabs` time slabs of `[0, horizon)` times `cells_per_axis^dim` spatial cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellPartition {
    grid: TorusGrid,
    cells_per_axis: usize,
    slabs: usize,
    horizon: f64,
}

impl CellPartition {
    pub fn new(
        grid: TorusGrid,
        cells_per_axis: usize,
        slabs: usize,
        horizon: f64,
    ) -> Result<Self, YoungError> {
        if cells_per_axis == 0 || grid.n() % cells_per_axis != 0 {
            return Err(YoungError::Partition(format!(
                "{cells_per_axis} cells per axis do not divide n = {}",
                grid.n()
            )));
        }
        if slabs == 0 || !(horizon > 0.0 && horizon.is_finite()) {
            return Err(YoungError::Partition(
                "need at least one slab and a positive horizon".into(),
            ));
        }
        Ok(Self {
            grid,
            cells_per_axis,
            slabs,
            horizon,
        })
    }

    /// The same cells sampled on another grid.
    pub fn on_grid(&self, grid: TorusGrid) -> Result<Self, YoungError> {
        if grid.dim() != self.grid.dim() {
            return Err(YoungError::Partition("dimension mismatch".into()));
        }
        Self::new(grid, self.cells_per_axis, self.slabs, self.horizon)
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn cells_per_axis(&self) -> usize {
        self.cells_per_axis
    }

    pub fn slabs(&self) -> usize {
        self.slabs
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn spatial_cells(&self) -> usize {
        self.cells_per_axis.pow(self.dim() as u32)
    }

    pub fn len(&self) -> usize {
        self.slabs * self.spatial_cells()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn slab_duration(&self) -> f64 {
        self.horizon / self.slabs as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.grid.volume() / self.spatial_cells() as f64
    }

    /// Space-time volume of one cell.
    pub fn cell_measure(&self) -> f64 {
        self.cell_volume() * self.slab_duration()
    }

    pub fn slab_midpoint(&self, slab: usize) -> f64 {
        (slab as f64 + 0.5) * self.slab_duration()
    }

    pub fn slab_cells(&self, slab: usize) -> Range<usize> {
        let s = self.spatial_cells();
        slab * s..(slab + 1) * s
    }

    /// `(slab, spatial cell)` of a flat cell index.
    pub fn split(&self, cell: usize) -> (usize, usize) {
        (cell / self.spatial_cells(), cell % self.spatial_cells())
    }

    /// Slab containing time `t`, or `None` outside `[0, horizon)`.
    pub fn slab_of(&self, t: f64) -> Option<usize> {
        let h = self.slab_duration();
        let s = (t / h + 1e-9).floor();
        (t >= -1e-12 && s >= 0.0 && (s as usize) < self.slabs).then_some(s as usize)
    }

    pub fn spatial_cell_of(&self, point: usize) -> usize {
        let m = self.grid.multi_index(point);
        let width = self.grid.n() / self.cells_per_axis;
        (0..self.dim()).fold(0, |acc, a| acc * self.cells_per_axis + m[a] / width)
    }

    /// Grid points of every spatial cell.
    pub fn cell_points(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.spatial_cells()];
        for p in 0..self.grid.len() {
            out[self.spatial_cell_of(p)].push(p);
        }
        out
    }

    /// Same cells and slabs, ignoring the sampling grid's resolution.
    pub fn compatible(&self, other: &CellPartition) -> bool {
        self.dim() == other.dim()
            && self.cells_per_axis == other.cells_per_axis
            && self.slabs == other.slabs
            && (self.horizon - other.horizon).abs() <= 1e-12 * self.horizon
    }

    /// Average of `f` over the grid points of every spatial cell.
    pub fn cell_average(&self, f: impl Fn(&[f64; 3]) -> f64 + Sync) -> Vec<f64> {
        self.cell_points()
            .par_iter()
            .map(|pts| pts.iter().map(|&p| f(&self.grid.point(p))).sum::<f64>() / pts.len() as f64)
            .collect()
    }
}

/// Histogram layout: `bins_per_axis^dim` boxes covering `[-R, R]^dim`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinSpec {
    pub radius: f64,
    pub bins_per_axis: usize,
}

impl BinSpec {
    pub fn new(radius: f64) -> Self {
        Self {
            radius,
            bins_per_axis: DEFAULT_BINS_PER_AXIS,
        }
    }

    pub fn width(&self) -> f64 {
        2.0 * self.radius / self.bins_per_axis as f64
    }

    /// Box containing `xi`, clamped into the histogram.
    pub fn bin_of(&self, dim: usize, xi: &[f64; 3]) -> u32 {
        let b = self.bins_per_axis;
        let w = self.width();
        (0..dim).fold(0u32, |acc, a| {
            let i = ((xi[a] + self.radius) / w)
                .floor()
                .clamp(0.0, (b - 1) as f64) as u32;
            acc * b as u32 + i
        })
    }

    pub fn bin_center(&self, dim: usize, mut bin: u32) -> [f64; 3] {
        let b = self.bins_per_axis as u32;
        let mut c = [0.0; 3];
        for a in (0..dim).rev() {
            c[a] = -self.radius + (f64::from(bin % b) + 0.5) * self.width();
            bin /= b;
        }
        c
    }
}

/// Equal-area sphere bin of the unit vector `theta`.
pub fn sphere_bin(dim: usize, theta: &[f64; 3]) -> u32 {
    let sector = |x: f64, y: f64, count: usize| {
        let a = y.atan2(x) + PI;
        ((a / (2.0 * PI) * count as f64).floor() as usize).min(count - 1)
    };
    if dim == 2 {
        sector(theta[0], theta[1], SPHERE_BINS) as u32
    } else {
        let band = (((theta[2] + 1.0) / 2.0 * 4.0).floor() as usize).min(3);
        (band * 8 + sector(theta[0], theta[1], 8)) as u32
    }
}

/// Weighted raw moments of the samples in one bin.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Moments {
    pub weight: f64,
    pub first: [f64; 3],
    pub second: [[f64; 3]; 3],
}

impl Moments {
    fn add(&mut self, w: f64, xi: &[f64; 3]) {
        self.weight += w;
        for i in 0..3 {
            self.first[i] += w * xi[i];
            for j in 0..3 {
                self.second[i][j] += w * xi[i] * xi[j];
            }
        }
    }

    fn merge(&mut self, other: &Moments, a: f64) {
        self.weight += a * other.weight;
        for i in 0..3 {
            self.first[i] += a * other.first[i];
            for j in 0..3 {
                self.second[i][j] += a * other.second[i][j];
            }
        }
    }

    pub fn mean(&self) -> [f64; 3] {
        if self.weight > 0.0 {
            self.first.map(|x| x / self.weight)
        } else {
            [0.0; 3]
        }
    }

    /// `sum w f(xi)` for a quadratic `f`.
    fn pair(&self, q: &Quadratic) -> f64 {
        let mut acc = q.constant * self.weight;
        for i in 0..3 {
            acc += q.linear[i] * self.first[i];
            for j in 0..3 {
                acc += q.quadratic[i][j] * self.second[i][j];
            }
        }
        acc
    }

    /// `sum w theta^T Q theta`.
    fn pair_recession(&self, q: &Quadratic) -> f64 {
        let mut acc = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                acc += q.quadratic[i][j] * self.second[i][j];
            }
        }
        acc
    }
}

fn insert(list: &mut Vec<(u32, Moments)>, bin: u32) -> &mut Moments {
    let pos = match list.binary_search_by_key(&bin, |e| e.0) {
        Ok(p) => p,
        Err(p) => {
            list.insert(p, (bin, Moments::default()));
            p
        }
    };
    &mut list[pos].1
}

/// Sparse content of one space-time cell.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CellMeasure {
    /// Oscillation histogram (unnormalized).
    pub nu: Vec<(u32, Moments)>,
    /// Concentration directions, moments of `theta` weighted by `|xi|^2 w`.
    pub nu_inf: Vec<(u32, Moments)>,
    /// Concentration mass `sum |xi|^2 w` over samples above `R`.
    pub lambda: f64,
    /// Weight of samples clipped into the histogram.
    pub clipped: f64,
}

impl CellMeasure {
    pub fn nu_weight(&self) -> f64 {
        self.nu.iter().map(|(_, m)| m.weight).sum()
    }

    fn merge(&mut self, other: &CellMeasure, a: f64) {
        for (bin, m) in &other.nu {
            insert(&mut self.nu, *bin).merge(m, a);
        }
        for (bin, m) in &other.nu_inf {
            insert(&mut self.nu_inf, *bin).merge(m, a);
        }
        self.lambda += a * other.lambda;
        self.clipped += a * other.clipped;
    }
}

/// What happens to samples with `|xi| > R`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Concentration {
    /// Keep them in the outermost bins and count them as clipped.
    Clip,
    /// Move them to `(nu_inf, lambda)`.
    Split,
}

/// Streaming construction from fields sampled at left endpoints of time steps.
pub struct MeasureBuilder {
    partition: CellPartition,
    bins: BinSpec,
    mode: Concentration,
    points: Arc<Vec<Vec<usize>>>,
    cells: Vec<CellMeasure>,
    scale: f64,
    max_speed: f64,
    total_weight: f64,
}

impl MeasureBuilder {
    pub fn new(partition: CellPartition, bins: BinSpec, mode: Concentration) -> Self {
        Self {
            points: Arc::new(partition.cell_points()),
            cells: vec![CellMeasure::default(); partition.len()],
            partition,
            bins,
            mode,
            scale: 1.0,
            max_speed: 0.0,
            total_weight: 0.0,
        }
    }

    /// Multiplies the weight of subsequently added samples.
    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    /// Adds the field `u(t)` held over `[t, t + dt)`; samples outside the
    /// partition's time range are ignored.
    pub fn add_field(&mut self, t: f64, dt: f64, u: &PhysicalField) {
        assert_eq!(
            u.grid(),
            self.partition.grid(),
            "field grid differs from partition grid"
        );
        let Some(slab) = self.partition.slab_of(t) else {
            return;
        };
        let grid = self.partition.grid();
        let dim = grid.dim();
        let w = dt * grid.point_volume() * self.scale;
        let (bins, mode, r2) = (self.bins, self.mode, self.bins.radius * self.bins.radius);
        let range = self.partition.slab_cells(slab);
        let max_speed = self.cells[range]
            .par_iter_mut()
            .zip(self.points.par_iter())
            .map(|(cell, pts)| {
                let mut top = 0.0f64;
                for &p in pts {
                    let xi = u.value(p);
                    let s2: f64 = xi[..dim].iter().map(|x| x * x).sum();
                    top = top.max(s2);
                    if s2 <= r2 {
                        insert(&mut cell.nu, bins.bin_of(dim, &xi)).add(w, &xi);
                    } else if mode == Concentration::Clip {
                        insert(&mut cell.nu, bins.bin_of(dim, &xi)).add(w, &xi);
                        cell.clipped += w;
                    } else {
                        let s = s2.sqrt();
                        let theta = xi.map(|x| x / s);
                        cell.lambda += s2 * w;
                        insert(&mut cell.nu_inf, sphere_bin(dim, &theta)).add(s2 * w, &theta);
                    }
                }
                top.sqrt()
            })
            .reduce(|| 0.0, f64::max);
        self.max_speed = self.max_speed.max(max_speed);
        self.total_weight += w * grid.len() as f64;
    }

    pub fn finish(self) -> GeneralizedYoungMeasure {
        let clipped = self.cells.iter().map(|c| c.clipped).sum();
        GeneralizedYoungMeasure {
            partition: self.partition,
            bins: self.bins,
            mode: self.mode,
            cells: self.cells,
            diagnostics: Diagnostics {
                clipped_weight: clipped,
                total_weight: self.total_weight,
                max_speed: self.max_speed,
            },
        }
    }
}

impl StepObserver for MeasureBuilder {
    fn on_step(&mut self, view: &StepView<'_>) {
        self.add_field(view.t, view.dt, view.physical);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Sample weight clipped into the histogram (zero for the family estimator).
    pub clipped_weight: f64,
    pub total_weight: f64,
    pub max_speed: f64,
}

/// Cell-discretized triplet `(nu, nu_inf, lambda)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralizedYoungMeasure {
    partition: CellPartition,
    bins: BinSpec,
    mode: Concentration,
    cells: Vec<CellMeasure>,
    diagnostics: Diagnostics,
}

/// One sample time of a trajectory: `(t, dt, u(t))`.
pub type FieldSample = (f64, f64, PhysicalField);

/// Embeds the samples of a trajectory as `(delta_u, 0, 0)`.
pub fn dirac_embed(
    partition: CellPartition,
    bins: BinSpec,
    samples: &[FieldSample],
) -> GeneralizedYoungMeasure {
    let mut b = MeasureBuilder::new(partition, bins, Concentration::Clip);
    for (t, dt, u) in samples {
        b.add_field(*t, *dt, u);
    }
    b.finish()
}

/// Converts spectral snapshots to samples; each is held until the next
/// snapshot time (the last one until the partition's horizon).
pub fn samples_from_snapshots(
    snapshots: &[(f64, SpectralField)],
    horizon: f64,
) -> Vec<FieldSample> {
    snapshots
        .iter()
        .enumerate()
        .map(|(i, (t, u))| {
            let next = snapshots.get(i + 1).map_or(horizon, |s| s.0);
            (*t, next - t, u.to_physical())
        })
        .collect()
}

/// Pooled estimator over a family of trajectories, each weighted `1/F`.
pub fn estimate_from_family(
    partition: CellPartition,
    bins: BinSpec,
    family: &[Vec<FieldSample>],
) -> Result<GeneralizedYoungMeasure, YoungError> {
    if family.is_empty() {
        return Err(YoungError::EmptyFamily);
    }
    let scale = 1.0 / family.len() as f64;
    let mut b = MeasureBuilder::new(partition, bins, Concentration::Split).with_scale(scale);
    for member in family {
        for (t, dt, u) in member {
            b.add_field(*t, *dt, u);
        }
    }
    Ok(b.finish())
}

impl GeneralizedYoungMeasure {
    /// Average of measures built separately (e.g. one per viscosity).
    pub fn average(members: &[GeneralizedYoungMeasure]) -> Result<Self, YoungError> {
        let first = members.first().ok_or(YoungError::EmptyFamily)?;
        let a = 1.0 / members.len() as f64;
        let mut out = Self {
            cells: vec![CellMeasure::default(); first.cells.len()],
            diagnostics: Diagnostics::default(),
            ..first.clone()
        };
        for m in members {
            out.check_compatible(m)?;
            if m.bins != out.bins {
                return Err(YoungError::Incompatible("histogram layouts differ".into()));
            }
            for (c, o) in out.cells.iter_mut().zip(&m.cells) {
                c.merge(o, a);
            }
            out.diagnostics.clipped_weight += a * m.diagnostics.clipped_weight;
            out.diagnostics.total_weight += a * m.diagnostics.total_weight;
            out.diagnostics.max_speed = out.diagnostics.max_speed.max(m.diagnostics.max_speed);
        }
        Ok(out)
    }

    fn check_compatible(&self, other: &Self) -> Result<(), YoungError> {
        if self.partition.compatible(&other.partition) {
            Ok(())
        } else {
            Err(YoungError::Incompatible(format!(
                "{:?} vs {:?}",
                self.partition, other.partition
            )))
        }
    }

    pub fn partition(&self) -> &CellPartition {
        &self.partition
    }

    pub fn bins(&self) -> &BinSpec {
        &self.bins
    }

    pub fn mode(&self) -> Concentration {
        self.mode
    }

    pub fn cells(&self) -> &[CellMeasure] {
        &self.cells
    }

    pub fn diagnostics(&self) -> &Diagnostics {
        &self.diagnostics
    }

    fn dim(&self) -> usize {
        self.partition.dim()
    }

    /// Cells whose oscillation part is empty; `nu = delta_0` there by convention.
    pub fn empty_cells(&self) -> Vec<usize> {
        (0..self.cells.len())
            .filter(|&c| self.cells[c].nu_weight() == 0.0)
            .collect()
    }

    /// Normalized `nu` histogram of `cell` as `(bin, probability)`.
    pub fn nu_probabilities(&self, cell: usize) -> Vec<(u32, f64)> {
        let c = &self.cells[cell];
        let total = c.nu_weight();
        if total == 0.0 {
            return vec![(self.bins.bin_of(self.dim(), &[0.0; 3]), 1.0)];
        }
        c.nu.iter().map(|(b, m)| (*b, m.weight / total)).collect()
    }

    /// Normalized `nu_inf` histogram; empty where `lambda = 0`.
    pub fn nu_inf_probabilities(&self, cell: usize) -> Vec<(u32, f64)> {
        let c = &self.cells[cell];
        let total: f64 = c.nu_inf.iter().map(|(_, m)| m.weight).sum();
        if total == 0.0 {
            return Vec::new();
        }
        c.nu_inf
            .iter()
            .map(|(b, m)| (*b, m.weight / total))
            .collect()
    }

    /// Total-variation distance between `nu` of `cell` and the binned atoms.
    pub fn tv_distance_to_atoms(&self, cell: usize, atoms: &[([f64; 3], f64)]) -> f64 {
        let mut diff: BTreeMap<u32, f64> = BTreeMap::new();
        for (b, p) in self.nu_probabilities(cell) {
            *diff.entry(b).or_default() += p;
        }
        for (xi, p) in atoms {
            *diff.entry(self.bins.bin_of(self.dim(), xi)).or_default() -= p;
        }
        0.5 * diff.values().map(|d| d.abs()).sum::<f64>()
    }

    pub fn lambda(&self, cell: usize) -> f64 {
        self.cells[cell].lambda
    }

    pub fn lambda_total(&self) -> f64 {
        self.cells.iter().map(|c| c.lambda).sum()
    }

    pub fn lambda_slab_mass(&self, slab: usize) -> f64 {
        self.cells[self.partition.slab_cells(slab)]
            .iter()
            .map(|c| c.lambda)
            .sum()
    }

    /// `lambda_t(T^d)` on a slab: slab mass over slab duration.
    pub fn lambda_t(&self, slab: usize) -> f64 {
        self.lambda_slab_mass(slab) / self.partition.slab_duration()
    }

    /// First moment of `nu` per cell (zero on empty cells).
    pub fn barycenter(&self) -> Vec<[f64; 3]> {
        self.cells
            .iter()
            .map(|c| {
                let w = c.nu_weight();
                if w == 0.0 {
                    return [0.0; 3];
                }
                let mut s = [0.0; 3];
                for (_, m) in &c.nu {
                    for i in 0..3 {
                        s[i] += m.first[i];
                    }
                }
                s.map(|x| x / w)
            })
            .collect()
    }

    /// `1/2 int <nu, |xi|^2> dx + 1/2 lambda_t(T^d)`, averaged over the slab.
    pub fn energy_of(&self, slab: usize) -> f64 {
        let q = Quadratic::energy(self.dim());
        let range = self.partition.slab_cells(slab);
        let nu: f64 =
            range.clone().map(|c| self.nu_mean(c, &q)).sum::<f64>() * self.partition.cell_measure();
        0.5 * (nu + self.lambda_slab_mass(slab)) / self.partition.slab_duration()
    }

    /// `sum_cells <nu, |xi|^2> |cell|`.
    pub fn second_moment(&self) -> f64 {
        let q = Quadratic::energy(self.dim());
        (0..self.cells.len())
            .map(|c| self.nu_mean(c, &q))
            .sum::<f64>()
            * self.partition.cell_measure()
    }

    /// `<nu_cell, f>` for quadratic `f`.
    fn nu_mean(&self, cell: usize, q: &Quadratic) -> f64 {
        let c = &self.cells[cell];
        let w = c.nu_weight();
        if w == 0.0 {
            return q.constant;
        }
        c.nu.iter().map(|(_, m)| m.pair(q)).sum::<f64>() / w
    }

    fn cell_terms(&self, cell: usize, f: &TestIntegrand) -> (f64, f64) {
        let c = &self.cells[cell];
        match f {
            TestIntegrand::Quadratic(q) => (
                self.nu_mean(cell, q),
                c.nu_inf.iter().map(|(_, m)| m.pair_recession(q)).sum(),
            ),
            TestIntegrand::CellQuadratic(qs) => {
                let q = &qs[cell];
                (
                    self.nu_mean(cell, q),
                    c.nu_inf.iter().map(|(_, m)| m.pair_recession(q)).sum(),
                )
            }
            TestIntegrand::General(g) => {
                let w = c.nu_weight();
                let nu = if w == 0.0 {
                    g.eval(&[0.0; 3])
                } else {
                    c.nu.iter()
                        .map(|(_, m)| m.weight * g.eval(&m.mean()))
                        .sum::<f64>()
                        / w
                };
                let inf = c
                    .nu_inf
                    .iter()
                    .map(|(_, m)| {
                        let d = m.mean();
                        let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
                        m.weight * g.recession(&d.map(|x| x / norm))
                    })
                    .sum();
                (nu, inf)
            }
        }
    }

    fn weights(&self, phi: &Weight) -> Vec<f64> {
        let p = &self.partition;
        match phi {
            Weight::Constant(c) => vec![*c; self.cells.len()],
            Weight::Cells(v) => {
                assert_eq!(v.len(), self.cells.len(), "one weight per cell");
                v.clone()
            }
            Weight::Function(f) => {
                let mut out = Vec::with_capacity(self.cells.len());
                for slab in 0..p.slabs() {
                    let t = p.slab_midpoint(slab);
                    out.extend(p.cell_average(|x| f(t, x)));
                }
                out
            }
        }
    }

    /// `sum_cells phi [<nu, f> |cell| + <nu_inf, f_inf> lambda]`.
    pub fn pairing(&self, f: &TestIntegrand, phi: &Weight) -> f64 {
        self.pairing_slabs(f, phi, 0..self.partition.slabs())
    }

    /// Pairing restricted to the slabs in `slabs`.
    pub fn pairing_slabs(&self, f: &TestIntegrand, phi: &Weight, slabs: Range<usize>) -> f64 {
        let (nu, inf) = self.pairing_parts(f, phi, slabs);
        nu + inf
    }

    /// Oscillation and concentration contributions of the pairing, separately.
    pub fn pairing_parts(
        &self,
        f: &TestIntegrand,
        phi: &Weight,
        slabs: Range<usize>,
    ) -> (f64, f64) {
        if let TestIntegrand::CellQuadratic(qs) = f {
            assert_eq!(qs.len(), self.cells.len(), "one quadratic per cell");
        }
        let w = self.weights(phi);
        let vol = self.partition.cell_measure();
        let s = self.partition.spatial_cells();
        let (mut nu_sum, mut inf_sum) = (0.0, 0.0);
        for c in slabs.start * s..slabs.end * s {
            let (nu, inf) = self.cell_terms(c, f);
            nu_sum += w[c] * nu * vol;
            inf_sum += w[c] * inf;
        }
        (nu_sum, inf_sum)
    }

    /// Pairing of one dictionary entry.
    pub fn pair_entry(&self, e: &DictionaryEntry) -> f64 {
        let spatial = self.partition.cell_average(|x| e.weight.eval(x));
        let w: Vec<f64> = (0..self.cells.len())
            .map(|c| spatial[c % spatial.len()])
            .collect();
        self.pairing(&TestIntegrand::Quadratic(e.integrand), &Weight::Cells(w))
    }

    /// `max_e |<V1, e> - <V2, e>|` over `dict`.
    pub fn weakstar_distance(
        &self,
        other: &Self,
        dict: &[DictionaryEntry],
    ) -> Result<f64, YoungError> {
        self.check_compatible(other)?;
        Ok(dict
            .iter()
            .map(|e| (self.pair_entry(e) - other.pair_entry(e)).abs())
            .fold(0.0, f64::max))
    }

    /// JSON export embedding the dictionary used for distances.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "measure": self,
            "sphere_bins": SPHERE_BINS,
            "empty_cells": self.empty_cells().len(),
            "dictionary": dictionary(self.dim()),
        })
    }
}
