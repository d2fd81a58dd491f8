use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::YoungError;

/// `f(xi) = c + l . xi + xi^T Q xi`, with recession `f_inf(theta) = theta^T Q theta`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Quadratic {
    pub constant: f64,
    pub linear: [f64; 3],
    pub quadratic: [[f64; 3]; 3],
}

impl Quadratic {
    pub fn constant(c: f64) -> Self {
        Self {
            constant: c,
            ..Self::default()
        }
    }

    /// `|xi|^2` in dimension `dim`.
    pub fn energy(dim: usize) -> Self {
        let mut q = Self::default();
        for i in 0..dim {
            q.quadratic[i][i] = 1.0;
        }
        q
    }

    /// `|xi - v|^2`.
    pub fn distance_sq(dim: usize, v: &[f64; 3]) -> Self {
        let mut q = Self::energy(dim);
        for i in 0..dim {
            q.linear[i] = -2.0 * v[i];
            q.constant += v[i] * v[i];
        }
        q
    }

    pub fn eval(&self, xi: &[f64; 3]) -> f64 {
        let mut acc = self.constant;
        for i in 0..3 {
            acc += self.linear[i] * xi[i];
            for j in 0..3 {
                acc += self.quadratic[i][j] * xi[i] * xi[j];
            }
        }
        acc
    }

    pub fn recession(&self, theta: &[f64; 3]) -> f64 {
        let mut acc = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                acc += self.quadratic[i][j] * theta[i] * theta[j];
            }
        }
        acc
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut q = *self;
        q.constant *= a;
        for i in 0..3 {
            q.linear[i] *= a;
            for j in 0..3 {
                q.quadratic[i][j] *= a;
            }
        }
        q
    }
}

type ScalarFn = Arc<dyn Fn(&[f64; 3]) -> f64 + Send + Sync>;

/// Arbitrary integrand of quadratic growth together with its recession function.
#[derive(Clone)]
pub struct General {
    dim: usize,
    f: ScalarFn,
    recession: ScalarFn,
}

impl fmt::Debug for General {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("General")
            .field("dim", &self.dim)
            .finish_non_exhaustive()
    }
}

impl General {
    /// Checks `f(s theta)/s^2 -> f_inf(theta)` and `|f(xi)| <= C(1 + |xi|^2)` on
    /// a fixed set of directions and radii; rejects the pair otherwise.
    pub fn new(
        dim: usize,
        f: impl Fn(&[f64; 3]) -> f64 + Send + Sync + 'static,
        recession: impl Fn(&[f64; 3]) -> f64 + Send + Sync + 'static,
    ) -> Result<Self, YoungError> {
        if dim != 2 && dim != 3 {
            return Err(YoungError::Integrand(format!("dimension {dim}")));
        }
        let directions = probe_directions(dim);
        let mut growth = 0.0f64;
        for theta in &directions {
            let finf = recession(theta);
            if !finf.is_finite() {
                return Err(YoungError::Integrand(
                    "recession function is not finite".into(),
                ));
            }
            for s in [1e4, 1e6] {
                let xi = theta.map(|c| c * s);
                let ratio = f(&xi) / (s * s);
                if !ratio.is_finite() || (ratio - finf).abs() > 1e-3 * (1.0 + finf.abs()) {
                    return Err(YoungError::Integrand(format!(
                        "f(s theta)/s^2 = {ratio} does not approach f_inf(theta) = {finf} at s = {s}"
                    )));
                }
            }
            for s in [0.0, 0.5, 1.0, 2.0, 8.0, 64.0, 1024.0] {
                let xi = theta.map(|c| c * s);
                growth = growth.max(f(&xi).abs() / (1.0 + s * s));
            }
        }
        if !growth.is_finite() {
            return Err(YoungError::Integrand("integrand is not finite".into()));
        }
        Ok(Self {
            dim,
            f: Arc::new(f),
            recession: Arc::new(recession),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, xi: &[f64; 3]) -> f64 {
        (self.f)(xi)
    }

    pub fn recession(&self, theta: &[f64; 3]) -> f64 {
        (self.recession)(theta)
    }
}

fn probe_directions(dim: usize) -> Vec<[f64; 3]> {
    let mut out = Vec::new();
    if dim == 2 {
        for i in 0..16 {
            let a = (i as f64 + 0.25) * std::f64::consts::TAU / 16.0;
            out.push([a.cos(), a.sin(), 0.0]);
        }
    } else {
        for band in 0..4 {
            let z = -0.75 + 0.5 * band as f64;
            let r = (1.0 - z * z).sqrt();
            for i in 0..8 {
                let a = (i as f64 + 0.25) * std::f64::consts::TAU / 8.0;
                out.push([r * a.cos(), r * a.sin(), z]);
            }
        }
    }
    out
}

/// Test integrand `f(t, x, xi)`.
///
/// Polynomials of degree at most two are paired exactly against the stored
/// bin moments; general integrands are evaluated at bin barycenters.
#[derive(Debug, Clone)]
pub enum TestIntegrand {
    Quadratic(Quadratic),
    /// One quadratic per partition cell, for integrands whose coefficients
    /// depend on `(t, x)` (e.g. `|xi - v(t,x)|^2`).
    CellQuadratic(Vec<Quadratic>),
    General(General),
}

/// Cell-averaged space-time weight `phi`.
#[derive(Clone)]
pub enum Weight {
    Constant(f64),
    /// Averaged over the grid points of each cell at the slab midpoint time.
    Function(Arc<dyn Fn(f64, &[f64; 3]) -> f64 + Send + Sync>),
    /// Precomputed per-cell averages.
    Cells(Vec<f64>),
}

impl fmt::Debug for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Weight::Constant(c) => write!(f, "Constant({c})"),
            Weight::Function(_) => write!(f, "Function(..)"),
            Weight::Cells(v) => write!(f, "Cells(len = {})", v.len()),
        }
    }
}

impl Weight {
    pub fn function(f: impl Fn(f64, &[f64; 3]) -> f64 + Send + Sync + 'static) -> Self {
        Weight::Function(Arc::new(f))
    }
}

/// Spatial factor of a dictionary entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrigWeight {
    One,
    Cos { axis: usize },
    Sin { axis: usize },
}

impl TrigWeight {
    pub fn eval(&self, x: &[f64; 3]) -> f64 {
        match *self {
            TrigWeight::One => 1.0,
            TrigWeight::Cos { axis } => x[axis].cos(),
            TrigWeight::Sin { axis } => x[axis].sin(),
        }
    }
}

/// One entry `p(xi) w(x)` of the separating dictionary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictionaryEntry {
    pub name: String,
    pub integrand: Quadratic,
    pub weight: TrigWeight,
}

/// `{1, xi_i, xi_i xi_j (i <= j)} x {1, cos x_a, sin x_a}`: 30 entries in 2D,
/// 70 in 3D.
pub fn dictionary(dim: usize) -> Vec<DictionaryEntry> {
    let mut polys = vec![("1".to_string(), Quadratic::constant(1.0))];
    for i in 0..dim {
        let mut q = Quadratic::default();
        q.linear[i] = 1.0;
        polys.push((format!("xi{}", i + 1), q));
    }
    for i in 0..dim {
        for j in i..dim {
            let mut q = Quadratic::default();
            q.quadratic[i][j] = 1.0;
            polys.push((format!("xi{}*xi{}", i + 1, j + 1), q));
        }
    }
    let mut weights = vec![("1".to_string(), TrigWeight::One)];
    for a in 0..dim {
        weights.push((format!("cos(x{})", a + 1), TrigWeight::Cos { axis: a }));
        weights.push((format!("sin(x{})", a + 1), TrigWeight::Sin { axis: a }));
    }
    let mut out = Vec::with_capacity(polys.len() * weights.len());
    for (pn, p) in &polys {
        for (wn, w) in &weights {
            out.push(DictionaryEntry {
                name: format!("{pn} * {wn}"),
                integrand: *p,
                weight: *w,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dictionary_sizes() {
        assert_eq!(dictionary(2).len(), 30);
        assert_eq!(dictionary(3).len(), 70);
    }

    #[test]
    fn general_validation() {
        let ok = General::new(
            2,
            |x| (x[0] * x[0] + x[1] * x[1]).sqrt() + x[0] * x[0],
            |t| t[0] * t[0],
        );
        assert!(ok.is_ok());
        assert!(General::new(2, |x| x[0].powi(3), |_| 0.0).is_err());
        assert!(General::new(2, |x| x[0] * x[0], |_| 1.0).is_err());
    }

    #[test]
    fn quadratic_distance() {
        let q = Quadratic::distance_sq(2, &[1.0, -2.0, 0.0]);
        assert!((q.eval(&[0.5, 0.5, 0.0]) - (0.25 + 6.25)).abs() < 1e-14);
        assert!((q.recession(&[0.6, 0.8, 0.0]) - 1.0).abs() < 1e-15);
    }
}
