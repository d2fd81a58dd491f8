//! One module per experiment; each maps a validated configuration to an
//! [`Outcome`](crate::Outcome).

pub mod martingale;
pub mod simulate;
pub mod vanish;
pub mod weakstrong;
pub mod ym;

use dissipeuler_core::EnergyTrace;

pub(crate) fn trace_csv(trace: &EnergyTrace) -> Vec<u8> {
    let mut buf = Vec::new();
    trace.write_csv(&mut buf).expect("writing to memory");
    buf
}

/// `max positive defect / (dt^{1/2} (1 + E_0))`: the smallest `C` the trace passes with.
pub(crate) fn required_c(trace: &EnergyTrace, dt: f64) -> f64 {
    trace.max_positive_defect() / (dt.sqrt() * (1.0 + trace.initial_energy()))
}
