//! Fourier representation of periodic vector fields on the torus
//! `[0, 2pi)^dim`, with Leray projection, spectral differentiation and the
//! dealiased transport term.
//!
//! Coefficients are normalized so that `u(x) = sum_k c_k exp(i k.x)`; hence
//! `int |u|^2 dx = (2pi)^dim sum_k |c_k|^2`. Modes carrying a Nyquist
//! wavenumber (`k_a = -n/2` on some axis) are not representable by a real
//! trigonometric interpolant and are removed by every projection.

pub mod fft;
mod snapshot;

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use snapshot::{read_snapshot, write_snapshot, SNAPSHOT_MAGIC, SNAPSHOT_VERSION};

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid mismatch: {0:?} vs {1:?}")]
    GridMismatch(TorusGrid, TorusGrid),
    #[error("snapshot format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Uniform grid of `n` points per axis on the `dim`-torus of side `2pi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "GridSpec", into = "GridSpec")]
pub struct TorusGrid {
    dim: usize,
    n: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSpec {
    dim: usize,
    n: usize,
}

impl TryFrom<GridSpec> for TorusGrid {
    type Error = SpectralError;
    fn try_from(s: GridSpec) -> Result<Self, Self::Error> {
        TorusGrid::new(s.dim, s.n)
    }
}

impl From<TorusGrid> for GridSpec {
    fn from(g: TorusGrid) -> Self {
        GridSpec { dim: g.dim, n: g.n }
    }
}

impl TorusGrid {
    pub fn new(dim: usize, n: usize) -> Result<Self, SpectralError> {
        if dim != 2 && dim != 3 {
            return Err(SpectralError::InvalidGrid(format!(
                "dim must be 2 or 3, got {dim}"
            )));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(SpectralError::InvalidGrid(format!(
                "points per axis must be a power of two >= 8, got {n}"
            )));
        }
        Ok(Self { dim, n })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of grid points (and of Fourier modes per component).
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Real degrees of freedom of a velocity field: `dim * n^dim`.
    pub fn degrees_of_freedom(&self) -> usize {
        self.dim * self.len()
    }

    /// `(2pi)^dim`.
    pub fn volume(&self) -> f64 {
        (2.0 * PI).powi(self.dim as i32)
    }

    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.n as f64
    }

    /// Quadrature weight of one grid point.
    pub fn point_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Largest retained wavenumber under the 2/3 rule.
    pub fn dealias_cutoff(&self) -> i64 {
        (self.n / 3) as i64
    }

    pub fn nyquist(&self) -> i64 {
        (self.n / 2) as i64
    }

    /// Signed wavenumber of FFT index `i`.
    pub fn wavenumber(&self, i: usize) -> i64 {
        if i < self.n / 2 {
            i as i64
        } else {
            i as i64 - self.n as i64
        }
    }

    /// Per-axis multi-index of a flat row-major index.
    pub fn multi_index(&self, mut idx: usize) -> [usize; 3] {
        let mut out = [0usize; 3];
        for a in (0..self.dim).rev() {
            out[a] = idx % self.n;
            idx /= self.n;
        }
        out
    }

    pub fn wavevector(&self, idx: usize) -> [i64; 3] {
        let m = self.multi_index(idx);
        let mut k = [0i64; 3];
        for a in 0..self.dim {
            k[a] = self.wavenumber(m[a]);
        }
        k
    }

    /// Flat index of wavevector `k`, if it lies strictly inside the Nyquist band.
    pub fn index_of(&self, k: &[i64]) -> Option<usize> {
        if k.len() != self.dim {
            return None;
        }
        let mut idx = 0usize;
        for &ka in k {
            if ka.abs() >= self.nyquist() {
                return None;
            }
            idx = idx * self.n + ka.rem_euclid(self.n as i64) as usize;
        }
        Some(idx)
    }

    /// Physical coordinates of grid point `idx`.
    pub fn point(&self, idx: usize) -> [f64; 3] {
        let m = self.multi_index(idx);
        let h = self.spacing();
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = m[a] as f64 * h;
        }
        x
    }

    pub(crate) fn tables(&self) -> Arc<GridTables> {
        static CACHE: OnceLock<Mutex<HashMap<TorusGrid, Arc<GridTables>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("grid table cache poisoned");
        guard
            .entry(*self)
            .or_insert_with(|| Arc::new(GridTables::new(self)))
            .clone()
    }
}

/// Per-mode lookup tables shared by all fields on a grid.
pub(crate) struct GridTables {
    pub k: Vec<[f64; 3]>,
    pub k2: Vec<f64>,
    pub nyquist: Vec<bool>,
    pub retained: Vec<bool>,
}

impl GridTables {
    fn new(grid: &TorusGrid) -> Self {
        let len = grid.len();
        let cut = grid.dealias_cutoff();
        let nyq = -grid.nyquist();
        let mut k = Vec::with_capacity(len);
        let mut k2 = Vec::with_capacity(len);
        let mut nyquist = Vec::with_capacity(len);
        let mut retained = Vec::with_capacity(len);
        for idx in 0..len {
            let kv = grid.wavevector(idx);
            let kf = [kv[0] as f64, kv[1] as f64, kv[2] as f64];
            k2.push(kf.iter().map(|x| x * x).sum());
            k.push(kf);
            nyquist.push(kv[..grid.dim].iter().any(|&c| c == nyq));
            retained.push(kv[..grid.dim].iter().all(|&c| c.abs() <= cut));
        }
        Self {
            k,
            k2,
            nyquist,
            retained,
        }
    }
}

/// Real vector field sampled at grid points; `components[i][idx]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalField {
    grid: TorusGrid,
    components: Vec<Vec<f64>>,
}

impl PhysicalField {
    pub fn zeros(grid: TorusGrid) -> Self {
        Self {
            grid,
            components: vec![vec![0.0; grid.len()]; grid.dim()],
        }
    }

    pub fn from_fn(grid: TorusGrid, f: impl Fn(&[f64; 3]) -> [f64; 3]) -> Self {
        let mut out = Self::zeros(grid);
        for idx in 0..grid.len() {
            let v = f(&grid.point(idx));
            for i in 0..grid.dim() {
                out.components[i][idx] = v[i];
            }
        }
        out
    }

    pub fn from_components(grid: TorusGrid, components: Vec<Vec<f64>>) -> Self {
        assert_eq!(components.len(), grid.dim());
        assert!(components.iter().all(|c| c.len() == grid.len()));
        Self { grid, components }
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn component(&self, i: usize) -> &[f64] {
        &self.components[i]
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    /// Value at grid point `idx` (unused trailing components are zero).
    pub fn value(&self, idx: usize) -> [f64; 3] {
        let mut v = [0.0; 3];
        for (i, c) in self.components.iter().enumerate() {
            v[i] = c[idx];
        }
        v
    }

    /// `max_x |u(x)|`.
    pub fn max_speed(&self) -> f64 {
        (0..self.grid.len())
            .map(|idx| self.components.iter().map(|c| c[idx] * c[idx]).sum::<f64>())
            .fold(0.0, f64::max)
            .sqrt()
    }
}

/// Fourier coefficients of a real vector field: `coeffs[i][idx]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: TorusGrid,
    coeffs: Vec<Vec<Complex64>>,
}

impl SpectralField {
    pub fn zeros(grid: TorusGrid) -> Self {
        Self {
            grid,
            coeffs: vec![vec![Complex64::new(0.0, 0.0); grid.len()]; grid.dim()],
        }
    }

    pub fn from_coefficients(grid: TorusGrid, coeffs: Vec<Vec<Complex64>>) -> Self {
        assert_eq!(coeffs.len(), grid.dim());
        assert!(coeffs.iter().all(|c| c.len() == grid.len()));
        Self { grid, coeffs }
    }

    pub fn from_physical(u: &PhysicalField) -> Self {
        let grid = u.grid;
        let coeffs = u
            .components
            .iter()
            .map(|c| fft::forward_real(&grid, c))
            .collect();
        Self { grid, coeffs }
    }

    /// Samples `f` at the grid points and transforms.
    pub fn from_fn(grid: TorusGrid, f: impl Fn(&[f64; 3]) -> [f64; 3]) -> Self {
        Self::from_physical(&PhysicalField::from_fn(grid, f))
    }

    pub fn to_physical(&self) -> PhysicalField {
        let components = self
            .coeffs
            .iter()
            .map(|c| fft::inverse_real(&self.grid, c))
            .collect();
        PhysicalField {
            grid: self.grid,
            components,
        }
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn component(&self, i: usize) -> &[Complex64] {
        &self.coeffs[i]
    }

    pub fn component_mut(&mut self, i: usize) -> &mut [Complex64] {
        &mut self.coeffs[i]
    }

    pub fn coefficient(&self, i: usize, k: &[i64]) -> Option<Complex64> {
        self.grid.index_of(k).map(|idx| self.coeffs[i][idx])
    }

    /// `self += a * other`.
    pub fn add_scaled(&mut self, other: &SpectralField, a: f64) {
        assert_eq!(self.grid, other.grid);
        for (c, o) in self.coeffs.iter_mut().zip(&other.coeffs) {
            for (x, y) in c.iter_mut().zip(o) {
                *x += y * a;
            }
        }
    }

    pub fn scale(&mut self, a: f64) {
        for c in &mut self.coeffs {
            for x in c.iter_mut() {
                *x *= a;
            }
        }
    }

    /// Zeroes every mode outside the 2/3-rule box `|k_a| <= n/3`.
    pub fn dealias(&mut self) {
        let t = self.grid.tables();
        for c in &mut self.coeffs {
            for (x, &keep) in c.iter_mut().zip(&t.retained) {
                if !keep {
                    *x = Complex64::new(0.0, 0.0);
                }
            }
        }
    }

    pub fn dealiased(&self) -> SpectralField {
        let mut out = self.clone();
        out.dealias();
        out
    }

    pub fn energy(&self) -> f64 {
        0.5 * l2_norm_sq(self)
    }

    /// `max_k |k . c(k)| / max_k |k| |c(k)|`, zero for the zero field.
    pub fn divergence_residual(&self) -> f64 {
        let t = self.grid.tables();
        let dim = self.grid.dim();
        let (mut num, mut den) = (0.0f64, 0.0f64);
        for idx in 0..self.grid.len() {
            let mut div = Complex64::new(0.0, 0.0);
            let mut mag = 0.0;
            for i in 0..dim {
                div += self.coeffs[i][idx] * t.k[idx][i];
                mag += self.coeffs[i][idx].norm_sqr();
            }
            num = num.max(div.norm());
            den = den.max(mag.sqrt() * t.k2[idx].sqrt());
        }
        if den == 0.0 {
            0.0
        } else {
            num / den
        }
    }

    /// Max modulus over all coefficients; used for relative comparisons.
    pub fn max_coefficient(&self) -> f64 {
        self.coeffs
            .iter()
            .flatten()
            .map(|c| c.norm())
            .fold(0.0, f64::max)
    }

    /// Spectral restriction (coarser grid) or zero-padding (finer grid),
    /// keeping modes strictly inside both Nyquist bands.
    pub fn resample(&self, target: TorusGrid) -> SpectralField {
        assert_eq!(self.grid.dim(), target.dim());
        let mut out = SpectralField::zeros(target);
        let dim = self.grid.dim();
        for idx in 0..self.grid.len() {
            let k = self.grid.wavevector(idx);
            if let Some(j) = target.index_of(&k[..dim]) {
                if self.grid.index_of(&k[..dim]).is_some() {
                    for i in 0..dim {
                        out.coeffs[i][j] = self.coeffs[i][idx];
                    }
                }
            }
        }
        out
    }
}

/// Velocity-gradient tensor in Fourier space: entry `(i, j)` is `d_j u_i`.
#[derive(Debug, Clone)]
pub struct GradientField {
    grid: TorusGrid,
    entries: Vec<Vec<Complex64>>,
}

impl GradientField {
    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    /// Fourier coefficients of `d_j u_i`.
    pub fn entry(&self, i: usize, j: usize) -> &[Complex64] {
        &self.entries[i * self.grid.dim() + j]
    }

    /// Physical values of `d_j u_i`.
    pub fn entry_physical(&self, i: usize, j: usize) -> Vec<f64> {
        fft::inverse_real(&self.grid, self.entry(i, j))
    }

    /// `max_x |grad u(x)|` in the Frobenius norm.
    pub fn sup_norm(&self) -> f64 {
        let phys: Vec<Vec<f64>> = self
            .entries
            .iter()
            .map(|e| fft::inverse_real(&self.grid, e))
            .collect();
        (0..self.grid.len())
            .map(|idx| phys.iter().map(|e| e[idx] * e[idx]).sum::<f64>())
            .fold(0.0, f64::max)
            .sqrt()
    }
}

/// Orthogonal projection onto the discrete solenoidal space:
/// `c(k) - k (k.c(k)) / |k|^2`, Nyquist modes removed, mean mode kept.
pub fn leray_project(f: &SpectralField) -> SpectralField {
    let grid = f.grid;
    let t = grid.tables();
    let dim = grid.dim();
    let mut out = f.clone();
    for idx in 0..grid.len() {
        if t.nyquist[idx] {
            for i in 0..dim {
                out.coeffs[i][idx] = Complex64::new(0.0, 0.0);
            }
            continue;
        }
        let k2 = t.k2[idx];
        if k2 == 0.0 {
            continue;
        }
        let k = &t.k[idx];
        let mut kc = Complex64::new(0.0, 0.0);
        for i in 0..dim {
            kc += f.coeffs[i][idx] * k[i];
        }
        let r = kc / k2;
        for i in 0..dim {
            out.coeffs[i][idx] -= r * k[i];
        }
    }
    out
}

/// Spectral gradient `d_j u_i = i k_j c_i(k)`; the derivative of a mode
/// along an axis where it sits at the Nyquist wavenumber is zero.
pub fn gradient(f: &SpectralField) -> GradientField {
    let grid = f.grid;
    let dim = grid.dim();
    let nyq = -(grid.nyquist() as f64);
    let t = grid.tables();
    let mut entries = Vec::with_capacity(dim * dim);
    for i in 0..dim {
        for j in 0..dim {
            let e: Vec<Complex64> = (0..grid.len())
                .map(|idx| {
                    let kj = t.k[idx][j];
                    if kj == nyq {
                        Complex64::new(0.0, 0.0)
                    } else {
                        f.coeffs[i][idx] * Complex64::new(0.0, kj)
                    }
                })
                .collect();
            entries.push(e);
        }
    }
    GradientField { grid, entries }
}

/// `-P div(u (x) u)` with 2/3-rule dealiasing of the input and the product.
pub fn convective_term(u: &SpectralField) -> SpectralField {
    convective_term_with_physical(u).0
}

/// As [`convective_term`], also returning the physical values of the
/// dealiased input (reused by the stepper for CFL and blow-up checks).
pub fn convective_term_with_physical(u: &SpectralField) -> (SpectralField, PhysicalField) {
    let grid = u.grid;
    let dim = grid.dim();
    let t = grid.tables();
    let phys = u.dealiased().to_physical();

    let mut products: Vec<Vec<Complex64>> = Vec::with_capacity(dim * (dim + 1) / 2);
    let mut slot = [[0usize; 3]; 3];
    for i in 0..dim {
        for j in i..dim {
            slot[i][j] = products.len();
            slot[j][i] = products.len();
            let prod: Vec<f64> = phys.components[i]
                .iter()
                .zip(&phys.components[j])
                .map(|(a, b)| a * b)
                .collect();
            products.push(fft::forward_real(&grid, &prod));
        }
    }

    let mut out = SpectralField::zeros(grid);
    for idx in 0..grid.len() {
        if !t.retained[idx] {
            continue;
        }
        let k = &t.k[idx];
        for i in 0..dim {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..dim {
                acc += products[slot[i][j]][idx] * k[j];
            }
            // -i k_j (u_i u_j)^
            out.coeffs[i][idx] = Complex64::new(acc.im, -acc.re);
        }
    }
    let mut out = leray_project(&out);
    out.dealias();
    (out, phys)
}

/// `int f . g dx`, exact by Parseval.
pub fn inner_product(f: &SpectralField, g: &SpectralField) -> f64 {
    assert_eq!(f.grid, g.grid);
    let mut acc = 0.0;
    for (a, b) in f.coeffs.iter().zip(&g.coeffs) {
        for (x, y) in a.iter().zip(b) {
            acc += x.re * y.re + x.im * y.im;
        }
    }
    acc * f.grid.volume()
}

/// `int |f|^2 dx`.
pub fn l2_norm_sq(f: &SpectralField) -> f64 {
    f.coeffs.iter().flatten().map(|c| c.norm_sqr()).sum::<f64>() * f.grid.volume()
}

/// `int |grad f|^2 dx`.
pub fn gradient_norm_sq(f: &SpectralField) -> f64 {
    let t = f.grid.tables();
    let mut acc = 0.0;
    for c in &f.coeffs {
        for (x, k2) in c.iter().zip(&t.k2) {
            acc += x.norm_sqr() * k2;
        }
    }
    acc * f.grid.volume()
}

/// `Delta f`.
pub fn laplacian(f: &SpectralField) -> SpectralField {
    let t = f.grid.tables();
    let mut out = f.clone();
    for c in &mut out.coeffs {
        for (x, k2) in c.iter_mut().zip(&t.k2) {
            *x *= -k2;
        }
    }
    out
}

/// Pairing in `W^{-s,2}`: `(2pi)^dim sum_k (1+|k|^2)^{-s} Re(f(k) . conj g(k))`.
pub fn negative_sobolev_pairing(f: &SpectralField, g: &SpectralField, s: f64) -> f64 {
    assert_eq!(f.grid, g.grid);
    let t = f.grid.tables();
    let mut acc = 0.0;
    for (a, b) in f.coeffs.iter().zip(&g.coeffs) {
        for idx in 0..a.len() {
            let w = (1.0 + t.k2[idx]).powf(-s);
            acc += w * (a[idx].re * b[idx].re + a[idx].im * b[idx].im);
        }
    }
    acc * f.grid.volume()
}

/// Fraction of `||f||^2` carried by modes with `max_a |k_a| > cutoff`.
pub fn tail_energy_fraction(f: &SpectralField, cutoff: i64) -> f64 {
    let grid = f.grid;
    let dim = grid.dim();
    let (mut tail, mut total) = (0.0, 0.0);
    for idx in 0..grid.len() {
        let k = grid.wavevector(idx);
        let e: f64 = f.coeffs.iter().map(|c| c[idx].norm_sqr()).sum();
        total += e;
        if k[..dim].iter().any(|c| c.abs() > cutoff) {
            tail += e;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        tail / total
    }
}
