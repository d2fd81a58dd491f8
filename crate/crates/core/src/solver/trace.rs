use std::io::Write;

use serde::{Deserialize, Serialize};

use super::SolverError;
use crate::spectral::{negative_sobolev_pairing, SpectralField};
use crate::stats::MeanEstimate;

/// Cumulative energy budget after a step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    /// `E = 1/2 ||u||^2`.
    pub energy: f64,
    /// `D = sum eps dt ||grad u||^2`.
    pub dissipation: f64,
    /// `I = 1/2 ||Phi||^2 t`.
    pub ito: f64,
    /// `M = sum sum_k <u, Phi e_k> dW_k`.
    pub stochastic: f64,
}

impl TraceRow {
    /// `E + D - I - M`; the energy inequality says this is non-increasing.
    pub fn compensated(&self) -> f64 {
        self.energy + self.dissipation - self.ito - self.stochastic
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyTrace {
    rows: Vec<TraceRow>,
}

/// Location and size of the largest energy-inequality violation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DefectMax {
    pub defect: f64,
    pub s: f64,
    pub t: f64,
}

impl EnergyTrace {
    pub fn new(e0: f64) -> Self {
        Self {
            rows: vec![TraceRow {
                t: 0.0,
                energy: e0,
                dissipation: 0.0,
                ito: 0.0,
                stochastic: 0.0,
            }],
        }
    }

    pub fn from_rows(rows: Vec<TraceRow>) -> Self {
        Self { rows }
    }

    pub fn push(&mut self, row: TraceRow) {
        self.rows.push(row);
    }

    pub fn rows(&self) -> &[TraceRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn initial_energy(&self) -> f64 {
        self.rows.first().map_or(0.0, |r| r.energy)
    }

    pub fn sup_energy(&self) -> f64 {
        self.rows.iter().map(|r| r.energy).fold(0.0, f64::max)
    }

    fn index_of(&self, t: f64) -> Result<usize, SolverError> {
        let tol = 1e-9 * self.rows.last().map_or(1.0, |r| r.t.abs().max(1.0));
        self.rows
            .iter()
            .position(|r| (r.t - t).abs() <= tol)
            .ok_or_else(|| SolverError::Trace(format!("time {t} is not a trace time")))
    }

    /// `defect(0, t_n)` per row.
    pub fn defects(&self) -> Vec<f64> {
        let g0 = self.rows.first().map_or(0.0, TraceRow::compensated);
        self.rows.iter().map(|r| r.compensated() - g0).collect()
    }

    /// `max_{s < t} defect(s, t)` over all pairs of trace times, found in one
    /// pass with a running minimum of the compensated energy.
    pub fn max_defect(&self) -> Option<DefectMax> {
        let mut best: Option<DefectMax> = None;
        let mut min = (f64::INFINITY, 0.0);
        for r in &self.rows {
            let g = r.compensated();
            if min.0.is_finite() {
                let d = g - min.0;
                if best.is_none_or(|b| d > b.defect) {
                    best = Some(DefectMax {
                        defect: d,
                        s: min.1,
                        t: r.t,
                    });
                }
            }
            if g < min.0 {
                min = (g, r.t);
            }
        }
        best
    }

    /// `max(0, max_{s<t} defect(s, t))`.
    pub fn max_positive_defect(&self) -> f64 {
        self.max_defect().map_or(0.0, |d| d.defect.max(0.0))
    }

    /// Columns `t,E,D,I,M,defect` with `defect = defect(0, t)`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,E,D,I,M,defect")?;
        for (r, d) in self.rows.iter().zip(self.defects()) {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.t, r.energy, r.dissipation, r.ito, r.stochastic, d
            )?;
        }
        Ok(())
    }
}

/// `defect(s,t) = E_t + (D_t - D_s) - E_s - (I_t - I_s) - (M_t - M_s)`.
pub fn energy_audit(trace: &EnergyTrace, s: f64, t: f64) -> Result<f64, SolverError> {
    if !(s < t) {
        return Err(SolverError::Trace(format!(
            "audit needs s < t, got s = {s}, t = {t}"
        )));
    }
    let a = trace.rows[trace.index_of(s)?];
    let b = trace.rows[trace.index_of(t)?];
    Ok(b.compensated() - a.compensated())
}

/// `C dt^{1/2} (1 + E_0)`.
pub fn energy_tolerance(c: f64, dt: f64, e0: f64) -> f64 {
    c * dt.sqrt() * (1.0 + e0)
}

/// Moment estimates of one ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub viscosity: f64,
    /// `E[(sup_t E_t)^p]`.
    pub sup_energy: MeanEstimate,
    /// `E[(sup_t E_t + D_T)^p]`.
    pub bound: MeanEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub p: f64,
    pub entries: Vec<MomentEstimate>,
    /// Each estimate of `bound` is at most its predecessor's up to the sum of
    /// the two CI half-widths.
    pub uniform: bool,
}

/// Monte Carlo `p`-th moments of the energy bound along a viscosity ladder.
pub fn apriori_monitor(
    ensembles: &[(f64, Vec<EnergyTrace>)],
    p: f64,
    z: f64,
) -> Result<MomentReport, SolverError> {
    if !(p > 2.0) {
        return Err(SolverError::InvalidConfig(format!(
            "moment order must exceed 2, got {p}"
        )));
    }
    if ensembles.is_empty()
        || ensembles
            .iter()
            .any(|(_, e)| e.is_empty() || e.iter().any(EnergyTrace::is_empty))
    {
        return Err(SolverError::InvalidConfig("empty ensemble".into()));
    }
    let entries: Vec<MomentEstimate> = ensembles
        .iter()
        .map(|(eps, traces)| {
            let sup: Vec<f64> = traces.iter().map(|t| t.sup_energy().powf(p)).collect();
            let bound: Vec<f64> = traces
                .iter()
                .map(|t| (t.sup_energy() + t.rows().last().unwrap().dissipation).powf(p))
                .collect();
            MomentEstimate {
                viscosity: *eps,
                sup_energy: MeanEstimate::from_samples(&sup, z),
                bound: MeanEstimate::from_samples(&bound, z),
            }
        })
        .collect();
    let uniform = entries.windows(2).all(|w| {
        w[1].bound.mean <= w[0].bound.mean + w[0].bound.half_width + w[1].bound.half_width
    });
    Ok(MomentReport {
        p,
        entries,
        uniform,
    })
}

/// Discrete `C^alpha` seminorm `max_{i<j} |x_j - x_i| / |t_j - t_i|^alpha`.
pub fn holder_seminorm(times: &[f64], values: &[f64], alpha: f64) -> f64 {
    assert_eq!(times.len(), values.len());
    let mut best = 0.0f64;
    for i in 0..times.len() {
        for j in i + 1..times.len() {
            let h = (times[j] - times[i]).abs();
            if h > 0.0 {
                best = best.max((values[j] - values[i]).abs() / h.powf(alpha));
            }
        }
    }
    best
}

/// Largest `C^alpha` seminorm of `t -> <u(t), phi>_{W^{-3,2}}` over `tests`.
pub fn time_holder_diagnostic(
    snapshots: &[(f64, SpectralField)],
    tests: &[SpectralField],
    alpha: f64,
) -> f64 {
    let times: Vec<f64> = snapshots.iter().map(|(t, _)| *t).collect();
    tests
        .iter()
        .map(|phi| {
            let values: Vec<f64> = snapshots
                .iter()
                .map(|(_, u)| negative_sobolev_pairing(u, phi, 3.0))
                .collect();
            holder_seminorm(&times, &values, alpha)
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(g: &[f64]) -> EnergyTrace {
        EnergyTrace::from_rows(
            g.iter()
                .enumerate()
                .map(|(i, &e)| TraceRow {
                    t: i as f64 * 0.1,
                    energy: e,
                    dissipation: 0.0,
                    ito: 0.0,
                    stochastic: 0.0,
                })
                .collect(),
        )
    }

    #[test]
    fn max_defect_matches_brute_force() {
        let g = [1.0, 0.4, 0.9, 0.2, 0.7, 0.75, 0.1];
        let tr = trace(&g);
        let mut brute = f64::NEG_INFINITY;
        for s in 0..g.len() {
            for t in s + 1..g.len() {
                brute = brute.max(energy_audit(&tr, s as f64 * 0.1, t as f64 * 0.1).unwrap());
            }
        }
        let m = tr.max_defect().unwrap();
        assert!((m.defect - brute).abs() < 1e-15);
        assert!((m.defect - 0.55).abs() < 1e-12);
        assert!((m.s - 0.3).abs() < 1e-12 && (m.t - 0.5).abs() < 1e-12);
    }

    #[test]
    fn audit_rejects_unknown_times() {
        let tr = trace(&[1.0, 1.0]);
        assert!(energy_audit(&tr, 0.0, 0.05).is_err());
        assert!(energy_audit(&tr, 0.1, 0.0).is_err());
        assert_eq!(energy_audit(&tr, 0.0, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn csv_layout() {
        let mut out = Vec::new();
        trace(&[2.0, 1.0]).write_csv(&mut out).unwrap();
        let s = String::from_utf8(out).unwrap();
        assert_eq!(s, "t,E,D,I,M,defect\n0,2,0,0,0,0\n0.1,1,0,0,0,-1\n");
    }

    #[test]
    fn deterministic_moments() {
        let tr = trace(&[2.0, 1.5, 1.0]);
        let report = apriori_monitor(&[(0.1, vec![tr.clone(), tr])], 3.0, 1.96).unwrap();
        assert_eq!(report.entries[0].sup_energy.mean, 8.0);
        assert_eq!(report.entries[0].sup_energy.half_width, 0.0);
        assert!(apriori_monitor(&[(0.1, vec![])], 3.0, 1.96).is_err());
        assert!(apriori_monitor(&[(0.1, vec![trace(&[1.0])])], 2.0, 1.96).is_err());
    }

    #[test]
    fn holder_of_linear_and_sqrt() {
        let t: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        let lin: Vec<f64> = t.iter().map(|x| 3.0 * x).collect();
        assert!((holder_seminorm(&t, &lin, 1.0) - 3.0).abs() < 1e-12);
        let root: Vec<f64> = t.iter().map(|x| x.sqrt()).collect();
        assert!((holder_seminorm(&t, &root, 0.5) - 1.0).abs() < 1e-12);
    }
}
