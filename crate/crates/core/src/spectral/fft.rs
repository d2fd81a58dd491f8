//! Multi-dimensional complex FFTs over a [`TorusGrid`], built from cached
//! one-dimensional rustfft plans.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::TorusGrid;

type Plan = Arc<dyn Fft<f64>>;

fn plan_cache() -> &'static Mutex<HashMap<(usize, bool), Plan>> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, bool), Plan>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn plan(n: usize, forward: bool) -> Plan {
    let mut cache = plan_cache().lock().expect("fft plan cache poisoned");
    cache
        .entry((n, forward))
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            if forward {
                planner.plan_fft_forward(n)
            } else {
                planner.plan_fft_inverse(n)
            }
        })
        .clone()
}

fn transform(grid: &TorusGrid, data: &mut [Complex64], fft: &Plan) {
    let n = grid.n();
    let len = data.len();
    debug_assert_eq!(len, grid.len());
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];

    // Last axis is contiguous.
    fft.process_with_scratch(data, &mut scratch);

    let mut lines = vec![Complex64::new(0.0, 0.0); len];
    for axis in 0..grid.dim() - 1 {
        let stride = n.pow((grid.dim() - 1 - axis) as u32);
        let outer = len / (n * stride);
        let mut p = 0;
        for o in 0..outer {
            let base = o * n * stride;
            for inner in 0..stride {
                for j in 0..n {
                    lines[p] = data[base + j * stride + inner];
                    p += 1;
                }
            }
        }
        fft.process_with_scratch(&mut lines, &mut scratch);
        let mut p = 0;
        for o in 0..outer {
            let base = o * n * stride;
            for inner in 0..stride {
                for j in 0..n {
                    data[base + j * stride + inner] = lines[p];
                    p += 1;
                }
            }
        }
    }
}

/// Physical values to Fourier coefficients, normalized so that
/// `u(x) = sum_k c_k exp(i k.x)`.
pub fn forward(grid: &TorusGrid, data: &mut [Complex64]) {
    transform(grid, data, &plan(grid.n(), true));
    let scale = 1.0 / grid.len() as f64;
    for c in data.iter_mut() {
        *c *= scale;
    }
}

/// Fourier coefficients to physical values (inverse of [`forward`]).
pub fn inverse(grid: &TorusGrid, data: &mut [Complex64]) {
    transform(grid, data, &plan(grid.n(), false));
}

/// Forward transform of a real array.
pub fn forward_real(grid: &TorusGrid, values: &[f64]) -> Vec<Complex64> {
    let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    forward(grid, &mut data);
    data
}

/// Inverse transform returning the real part.
pub fn inverse_real(grid: &TorusGrid, coeffs: &[Complex64]) -> Vec<f64> {
    let mut data = coeffs.to_vec();
    inverse(grid, &mut data);
    data.into_iter().map(|c| c.re).collect()
}
