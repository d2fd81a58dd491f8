//! Finite-rank Hilbert–Schmidt forcing and discretized cylindrical Wiener
//! paths.
//!
//! The operator maps the `k`-th basis vector of the auxiliary space to
//! `sigma_k g_k`, where `g_k` is a real trigonometric mode
//! `c a_k cos(k.x)` or `c a_k sin(k.x)` with a unit direction `a_k` orthogonal
//! to the wavevector, normalized to unit `L^2` norm. Each `g_k` is therefore
//! divergence free and lies in the discrete solenoidal space of any grid
//! that resolves `k`.
//!
//! Wiener increments are generated on a base step `base_dt` and refined by
//! Brownian-bridge subdivision, so paths sampled at `base_dt / 2^level` for
//! different levels are restrictions of one another.

use std::f64::consts::PI;
use std::io::Write;
use std::ops::Range;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{bridge_stream, CounterNormal, STREAM_INCREMENTS};
use crate::spectral::{SpectralField, TorusGrid};

#[derive(Debug, Error)]
pub enum ForcingError {
    #[error("invalid forcing mode {index}: {reason}")]
    InvalidMode { index: usize, reason: String },
    #[error("forcing operator needs at least one mode")]
    Empty,
    #[error("forcing mode {index} with wavevector {k:?} is not resolved by a grid with n = {n}")]
    Unresolved { index: usize, k: Vec<i64>, n: usize },
    #[error("dimension mismatch: operator is {op}D, grid is {grid}D")]
    DimMismatch { op: usize, grid: usize },
    #[error("invalid path request: {0}")]
    InvalidPath(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeKind {
    Cos,
    Sin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingMode {
    pub k: Vec<i64>,
    pub direction: Vec<f64>,
    pub sigma: f64,
    #[serde(default = "default_kind")]
    pub kind: ModeKind,
}

fn default_kind() -> ModeKind {
    ModeKind::Cos
}

impl ForcingMode {
    /// Normalization constant `c` making `||c a cos(k.x)||_{L^2} = 1`.
    fn normalization(&self) -> f64 {
        let volume = (2.0 * PI).powi(self.k.len() as i32);
        if self.k.iter().all(|&c| c == 0) {
            1.0 / volume.sqrt()
        } else {
            (2.0 / volume).sqrt()
        }
    }

    /// `||g_k||^2_{L^2}` computed from the mode's closed form.
    pub fn mode_norm_sq(&self) -> f64 {
        let volume = (2.0 * PI).powi(self.k.len() as i32);
        let a2: f64 = self.direction.iter().map(|a| a * a).sum();
        let c = self.normalization();
        if self.k.iter().all(|&x| x == 0) {
            c * c * a2 * volume
        } else {
            c * c * a2 * volume / 2.0
        }
    }
}

/// The operator `Phi`, given by its images of the auxiliary basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ForcingMode>", into = "Vec<ForcingMode>")]
pub struct ForcingOperator {
    dim: usize,
    modes: Vec<ForcingMode>,
}

impl TryFrom<Vec<ForcingMode>> for ForcingOperator {
    type Error = ForcingError;
    fn try_from(modes: Vec<ForcingMode>) -> Result<Self, Self::Error> {
        ForcingOperator::new(modes)
    }
}

impl From<ForcingOperator> for Vec<ForcingMode> {
    fn from(op: ForcingOperator) -> Self {
        op.modes
    }
}

impl ForcingOperator {
    pub fn new(modes: Vec<ForcingMode>) -> Result<Self, ForcingError> {
        let first = modes.first().ok_or(ForcingError::Empty)?;
        let dim = first.k.len();
        for (index, m) in modes.iter().enumerate() {
            let bad = |reason: &str| ForcingError::InvalidMode {
                index,
                reason: reason.into(),
            };
            if m.k.len() != dim || m.direction.len() != dim || !(dim == 2 || dim == 3) {
                return Err(bad("wavevector and direction must share dimension 2 or 3"));
            }
            if !(m.sigma >= 0.0 && m.sigma.is_finite()) {
                return Err(bad("amplitude must be finite and non-negative"));
            }
            let norm: f64 = m.direction.iter().map(|a| a * a).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(bad("direction must be a unit vector"));
            }
            let dot: f64 =
                m.k.iter()
                    .zip(&m.direction)
                    .map(|(&k, a)| k as f64 * a)
                    .sum();
            if dot.abs() > 1e-12 {
                return Err(bad("direction must be orthogonal to the wavevector"));
            }
            if m.k.iter().all(|&c| c == 0) && m.kind == ModeKind::Sin {
                return Err(bad("a sine mode needs a nonzero wavevector"));
            }
        }
        Ok(Self { dim, modes })
    }

    /// The zero operator of rank one (useful for deterministic runs).
    pub fn zero(dim: usize) -> Self {
        let mut direction = vec![0.0; dim];
        direction[0] = 1.0;
        let mut k = vec![0; dim];
        k[dim - 1] = 1;
        Self::new(vec![ForcingMode {
            k,
            direction,
            sigma: 0.0,
            kind: ModeKind::Cos,
        }])
        .expect("zero operator is valid")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.modes.len()
    }

    pub fn modes(&self) -> &[ForcingMode] {
        &self.modes
    }

    pub fn is_zero(&self) -> bool {
        self.modes.iter().all(|m| m.sigma == 0.0)
    }

    /// Multiplies every amplitude by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let modes = self
            .modes
            .iter()
            .map(|m| ForcingMode {
                sigma: m.sigma * c,
                ..m.clone()
            })
            .collect();
        Self {
            dim: self.dim,
            modes,
        }
    }
}

/// `||Phi||^2_{L_2(U, L^2)} = sum_k sigma_k^2 ||g_k||^2`.
pub fn hs_norm_sq(phi: &ForcingOperator) -> f64 {
    phi.modes
        .iter()
        .map(|m| m.sigma * m.sigma * m.mode_norm_sq())
        .sum()
}

/// Sparse Fourier representation of the images `Phi e_k` on one grid.
#[derive(Debug, Clone)]
pub struct NoiseBasis {
    grid: TorusGrid,
    /// Per mode: `(flat index, vector coefficient)` entries of `sigma_k g_k`.
    entries: Vec<Vec<(usize, [Complex64; 3])>>,
}

impl NoiseBasis {
    pub fn new(phi: &ForcingOperator, grid: TorusGrid) -> Result<Self, ForcingError> {
        if phi.dim != grid.dim() {
            return Err(ForcingError::DimMismatch {
                op: phi.dim,
                grid: grid.dim(),
            });
        }
        let mut entries = Vec::with_capacity(phi.rank());
        for (index, m) in phi.modes.iter().enumerate() {
            let unresolved = || ForcingError::Unresolved {
                index,
                k: m.k.clone(),
                n: grid.n(),
            };
            let plus = grid.index_of(&m.k).ok_or_else(unresolved)?;
            let neg: Vec<i64> = m.k.iter().map(|c| -c).collect();
            let minus = grid.index_of(&neg).ok_or_else(unresolved)?;
            let amp = m.sigma * m.normalization();
            let vec_of = |c: Complex64| {
                let mut v = [Complex64::new(0.0, 0.0); 3];
                for (i, a) in m.direction.iter().enumerate() {
                    v[i] = c * *a;
                }
                v
            };
            let list = if plus == minus {
                vec![(plus, vec_of(Complex64::new(amp, 0.0)))]
            } else {
                match m.kind {
                    ModeKind::Cos => vec![
                        (plus, vec_of(Complex64::new(amp / 2.0, 0.0))),
                        (minus, vec_of(Complex64::new(amp / 2.0, 0.0))),
                    ],
                    ModeKind::Sin => vec![
                        (plus, vec_of(Complex64::new(0.0, -amp / 2.0))),
                        (minus, vec_of(Complex64::new(0.0, amp / 2.0))),
                    ],
                }
            };
            entries.push(list);
        }
        Ok(Self { grid, entries })
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn rank(&self) -> usize {
        self.entries.len()
    }

    /// `field += sum_k dw_k Phi e_k`.
    pub fn add_to(&self, field: &mut SpectralField, dw: &[f64]) {
        assert_eq!(dw.len(), self.rank());
        let dim = self.grid.dim();
        for (list, &w) in self.entries.iter().zip(dw) {
            if w == 0.0 {
                continue;
            }
            for (idx, v) in list {
                for (i, vi) in v.iter().enumerate().take(dim) {
                    field.component_mut(i)[*idx] += vi * w;
                }
            }
        }
    }

    /// `sum_k dw_k Phi e_k` as a field.
    pub fn apply(&self, dw: &[f64]) -> SpectralField {
        let mut out = SpectralField::zeros(self.grid);
        self.add_to(&mut out, dw);
        out
    }

    /// `(int u . Phi e_k dx)_k`.
    pub fn project(&self, u: &SpectralField) -> Vec<f64> {
        assert_eq!(u.grid(), self.grid);
        let volume = self.grid.volume();
        self.entries
            .iter()
            .map(|list| {
                let mut acc = 0.0;
                for (idx, v) in list {
                    for (i, vi) in v.iter().enumerate().take(self.grid.dim()) {
                        let c = u.component(i)[*idx];
                        acc += c.re * vi.re + c.im * vi.im;
                    }
                }
                acc * volume
            })
            .collect()
    }
}

/// `sum_k sigma_k g_k dw_k`; fails when a mode is beyond the grid's Nyquist band.
pub fn apply_noise(
    phi: &ForcingOperator,
    dw: &[f64],
    grid: TorusGrid,
) -> Result<SpectralField, ForcingError> {
    Ok(NoiseBasis::new(phi, grid)?.apply(dw))
}

/// Splits an increment over `[t, t + dt]` into its two halves by sampling
/// the Brownian-bridge midpoint; `child_level` is the level of the halves.
pub fn bridge_split(
    gen: &mut CounterNormal,
    mode: u32,
    parent_step: u64,
    parent_increment: f64,
    parent_dt: f64,
) -> (f64, f64) {
    let z = gen.normal(mode, parent_step);
    let left = 0.5 * parent_increment + 0.5 * parent_dt.sqrt() * z;
    (left, parent_increment - left)
}

/// Discretized increments `dW_k(n)` of the coordinate Brownian motions.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerPath {
    seed: u64,
    path_id: u64,
    base_dt: f64,
    level: u32,
    first_step: u64,
    /// `increments[n - first_step][k]`.
    increments: Vec<Vec<f64>>,
}

impl WienerPath {
    /// Increments for steps `steps` of size `base_dt / 2^level`; a pure
    /// function of `(seed, path_id, k, n, level)`.
    pub fn sample(
        seed: u64,
        path_id: u64,
        modes: usize,
        base_dt: f64,
        level: u32,
        steps: Range<u64>,
    ) -> Result<Self, ForcingError> {
        if !(base_dt > 0.0 && base_dt.is_finite()) {
            return Err(ForcingError::InvalidPath("dt must be positive".into()));
        }
        if level > 30 {
            return Err(ForcingError::InvalidPath(
                "refinement level above 30".into(),
            ));
        }
        let increments = Self::sample_level(seed, path_id, modes, base_dt, level, steps.clone());
        Ok(Self {
            seed,
            path_id,
            base_dt,
            level,
            first_step: steps.start,
            increments,
        })
    }

    fn sample_level(
        seed: u64,
        path_id: u64,
        modes: usize,
        base_dt: f64,
        level: u32,
        steps: Range<u64>,
    ) -> Vec<Vec<f64>> {
        if steps.is_empty() {
            return Vec::new();
        }
        if level == 0 {
            let mut gen = CounterNormal::new(seed, STREAM_INCREMENTS, path_id);
            let sd = base_dt.sqrt();
            return steps
                .map(|n| (0..modes).map(|k| sd * gen.normal(k as u32, n)).collect())
                .collect();
        }
        let parent_range = steps.start / 2..steps.end.div_ceil(2);
        let parents = Self::sample_level(
            seed,
            path_id,
            modes,
            base_dt,
            level - 1,
            parent_range.clone(),
        );
        let parent_dt = base_dt / f64::from(1u32 << (level - 1));
        let mut gen = CounterNormal::new(seed, bridge_stream(level), path_id);
        let mut out = Vec::with_capacity((steps.end - steps.start) as usize);
        for (p, parent) in parent_range.clone().zip(&parents) {
            let halves: Vec<(f64, f64)> = parent
                .iter()
                .enumerate()
                .map(|(k, &inc)| bridge_split(&mut gen, k as u32, p, inc, parent_dt))
                .collect();
            for (child, pick_left) in [(2 * p, true), (2 * p + 1, false)] {
                if steps.contains(&child) {
                    out.push(
                        halves
                            .iter()
                            .map(|&(l, r)| if pick_left { l } else { r })
                            .collect(),
                    );
                }
            }
        }
        out
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path_id(&self) -> u64 {
        self.path_id
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn base_dt(&self) -> f64 {
        self.base_dt
    }

    pub fn dt(&self) -> f64 {
        self.base_dt / f64::from(1u32 << self.level)
    }

    pub fn modes(&self) -> usize {
        self.increments.first().map_or(0, Vec::len)
    }

    pub fn steps(&self) -> Range<u64> {
        self.first_step..self.first_step + self.increments.len() as u64
    }

    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    /// Increments of global step `n`.
    pub fn increment(&self, n: u64) -> &[f64] {
        &self.increments[(n - self.first_step) as usize]
    }

    pub fn increments(&self) -> &[Vec<f64>] {
        &self.increments
    }

    /// `beta_k` accumulated over the first `steps` increments held by the path.
    pub fn beta(&self, steps: usize) -> Vec<f64> {
        let modes = self.modes();
        let mut acc = vec![0.0; modes];
        for inc in &self.increments[..steps] {
            for (a, x) in acc.iter_mut().zip(inc) {
                *a += x;
            }
        }
        acc
    }

    /// The same path at half the step size.
    pub fn refine(&self) -> WienerPath {
        let steps = 2 * self.first_step..2 * (self.first_step + self.increments.len() as u64);
        let increments = Self::sample_level(
            self.seed,
            self.path_id,
            self.modes(),
            self.base_dt,
            self.level + 1,
            steps,
        );
        Self {
            level: self.level + 1,
            first_step: 2 * self.first_step,
            increments,
            ..self.clone()
        }
    }

    /// CSV with columns `path_id,k,n,dW`; `k` is 1-based.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), ForcingError> {
        writeln!(w, "path_id,k,n,dW")?;
        for (offset, inc) in self.increments.iter().enumerate() {
            let n = self.first_step + offset as u64;
            for (k, x) in inc.iter().enumerate() {
                writeln!(w, "{},{},{},{}", self.path_id, k + 1, n, x)?;
            }
        }
        Ok(())
    }
}

/// Weighted norm `(sum_k beta_k(t)^2 / k^2)^{1/2}` of the path after
/// `steps` increments, with `k` the 1-based basis index.
pub fn u0_norm(path: &WienerPath, steps: usize) -> f64 {
    u0_norm_of(&path.beta(steps))
}

pub fn u0_norm_of(beta: &[f64]) -> f64 {
    beta.iter()
        .enumerate()
        .map(|(k, b)| b * b / ((k + 1) * (k + 1)) as f64)
        .sum::<f64>()
        .sqrt()
}
