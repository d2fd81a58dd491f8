//! Time integration of the projected stochastic Navier–Stokes system
//!
//! ```text
//! du = eps Delta u dt - P div(u (x) u) dt + Phi dW,   div u = 0
//! ```
//!
//! with an exact integrating factor for the Stokes part and explicit
//! Euler–Maruyama for transport and noise:
//!
//! ```text
//! u_{n+1} = exp(eps Delta dt) [u_n + dt C(u_n) + Phi dW_n]
//! ```
//!
//! Every term of the energy balance is recorded along the trajectory so the
//! pathwise energy inequality can be audited term by term.

mod initial;
mod trace;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use initial::InitialLaw;
pub use trace::{
    apriori_monitor, energy_audit, energy_tolerance, holder_seminorm, time_holder_diagnostic,
    DefectMax, EnergyTrace, MomentEstimate, MomentReport, TraceRow,
};

use crate::forcing::{hs_norm_sq, ForcingError, ForcingOperator, NoiseBasis, WienerPath};
use crate::spectral::{
    convective_term_with_physical, gradient_norm_sq, PhysicalField, SpectralField, TorusGrid,
};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("blow-up at t = {t}: max |u| = {max_speed} exceeds ceiling {ceiling}")]
    BlowUp {
        t: f64,
        max_speed: f64,
        ceiling: f64,
        partial: Box<EnergyTrace>,
    },
    #[error("energy trace: {0}")]
    Trace(String),
    #[error(transparent)]
    Forcing(#[from] ForcingError),
}

fn default_cfl() -> f64 {
    0.5
}

fn default_ceiling() -> f64 {
    1e3
}

fn default_true() -> bool {
    true
}

/// Everything needed to integrate one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub grid: TorusGrid,
    /// Viscosity `eps >= 0`.
    pub viscosity: f64,
    pub dt: f64,
    pub horizon: f64,
    pub forcing: ForcingOperator,
    pub initial: InitialLaw,
    /// The Wiener path is generated on `dt * 2^path_level` and refined by
    /// bridging, so configs differing only in `(dt, path_level)` with equal
    /// `dt * 2^path_level` share one Brownian path.
    #[serde(default)]
    pub path_level: u32,
    /// Disables the transport term (linear stochastic Stokes model).
    #[serde(default = "default_true")]
    pub transport: bool,
    /// Courant number bound `max|u| dt <= cfl dx`, enforced by substepping.
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    /// `max|u|` above which the trajectory is declared blown up.
    #[serde(default = "default_ceiling")]
    pub speed_ceiling: f64,
    /// Times at which full fields are kept (rounded to the step grid).
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: &str| Err(SolverError::InvalidConfig(m.into()));
        if !(self.viscosity >= 0.0 && self.viscosity.is_finite()) {
            return bad("viscosity must be finite and >= 0");
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return bad("horizon must be >= 0");
        }
        let steps = self.horizon / self.dt;
        if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
            return bad("horizon must be an integer multiple of dt");
        }
        if !(self.cfl > 0.0) || !(self.speed_ceiling > 0.0) {
            return bad("cfl and speed_ceiling must be positive");
        }
        if self.forcing.dim() != self.grid.dim() {
            return bad("forcing dimension differs from grid dimension");
        }
        if self.path_level > 20 {
            return bad("path_level above 20");
        }
        NoiseBasis::new(&self.forcing, self.grid)?;
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    /// Step of the coarsest level of the shared Wiener path.
    pub fn path_base_dt(&self) -> f64 {
        self.dt * f64::from(1u32 << self.path_level)
    }

    pub fn wiener_path(&self, seed: u64, path_id: u64) -> Result<WienerPath, SolverError> {
        Ok(WienerPath::sample(
            seed,
            path_id,
            self.forcing.rank(),
            self.path_base_dt(),
            self.path_level,
            0..self.steps() as u64,
        )?)
    }
}

/// State handed to observers before each (sub)step.
pub struct StepView<'a> {
    pub t: f64,
    pub dt: f64,
    pub u: &'a SpectralField,
    pub physical: &'a PhysicalField,
    pub dw: &'a [f64],
    pub basis: &'a NoiseBasis,
}

/// Hook for streaming diagnostics (Young measures, weak forms) along a run.
pub trait StepObserver {
    fn on_step(&mut self, view: &StepView<'_>);
    fn on_finish(&mut self, _t: f64, _u: &SpectralField) {}
}

impl StepObserver for () {
    fn on_step(&mut self, _view: &StepView<'_>) {}
}

impl<A: StepObserver, B: StepObserver> StepObserver for (A, B) {
    fn on_step(&mut self, view: &StepView<'_>) {
        self.0.on_step(view);
        self.1.on_step(view);
    }

    fn on_finish(&mut self, t: f64, u: &SpectralField) {
        self.0.on_finish(t, u);
        self.1.on_finish(t, u);
    }
}

impl<T: StepObserver + ?Sized> StepObserver for &mut T {
    fn on_step(&mut self, view: &StepView<'_>) {
        (**self).on_step(view);
    }

    fn on_finish(&mut self, t: f64, u: &SpectralField) {
        (**self).on_finish(t, u);
    }
}

/// Result of advancing one step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub next: SpectralField,
    /// `max |u_n|` at the start of the step.
    pub max_speed: f64,
    /// `eps dt ||grad u_n||^2` (left-point quadrature of the dissipation).
    pub dissipation: f64,
    /// `sum_k <u_n, Phi e_k> dW_k`.
    pub stochastic: f64,
}

/// Reusable per-configuration stepping machinery.
pub struct Stepper {
    grid: TorusGrid,
    viscosity: f64,
    transport: bool,
    ceiling: f64,
    basis: NoiseBasis,
    factors: (f64, Vec<f64>),
}

impl Stepper {
    pub fn new(cfg: &SolverConfig) -> Result<Self, SolverError> {
        cfg.validate()?;
        let basis = NoiseBasis::new(&cfg.forcing, cfg.grid)?;
        let mut s = Self {
            grid: cfg.grid,
            viscosity: cfg.viscosity,
            transport: cfg.transport,
            ceiling: cfg.speed_ceiling,
            basis,
            factors: (f64::NAN, Vec::new()),
        };
        s.factors = (cfg.dt, s.integrating_factor(cfg.dt));
        Ok(s)
    }

    pub fn basis(&self) -> &NoiseBasis {
        &self.basis
    }

    fn integrating_factor(&self, dt: f64) -> Vec<f64> {
        let t = self.grid.tables();
        t.k2.iter()
            .map(|k2| (-self.viscosity * k2 * dt).exp())
            .collect()
    }

    /// Advances `u` by `dt` with noise increments `dw`.
    pub fn step(&self, u: &SpectralField, dw: &[f64], dt: f64) -> Result<StepOutcome, SolverError> {
        match self.step_observed(u, dw, dt, 0.0, f64::INFINITY, &mut ())? {
            Attempt::Done(o) => Ok(o),
            Attempt::TooFast(_) => unreachable!(),
        }
    }

    /// Refuses the step (without notifying `observer`) when
    /// `max|u| dt > speed_dt_limit`.
    fn step_observed(
        &self,
        u: &SpectralField,
        dw: &[f64],
        dt: f64,
        t: f64,
        speed_dt_limit: f64,
        observer: &mut dyn StepObserver,
    ) -> Result<Attempt, SolverError> {
        let (conv, physical) = if self.transport {
            let (c, p) = convective_term_with_physical(u);
            (Some(c), p)
        } else {
            (None, u.to_physical())
        };
        let max_speed = physical.max_speed();
        if !(max_speed <= self.ceiling) {
            return Err(SolverError::BlowUp {
                t,
                max_speed,
                ceiling: self.ceiling,
                partial: Box::new(EnergyTrace::default()),
            });
        }
        if max_speed * dt > speed_dt_limit {
            return Ok(Attempt::TooFast(max_speed));
        }
        observer.on_step(&StepView {
            t,
            dt,
            u,
            physical: &physical,
            dw,
            basis: &self.basis,
        });

        let dissipation = self.viscosity * dt * gradient_norm_sq(u);
        let stochastic: f64 = self
            .basis
            .project(u)
            .iter()
            .zip(dw)
            .map(|(p, w)| p * w)
            .sum();

        let mut next = u.clone();
        if let Some(c) = conv {
            next.add_scaled(&c, dt);
        }
        self.basis.add_to(&mut next, dw);
        if self.viscosity > 0.0 {
            let owned;
            let factor: &[f64] = if dt == self.factors.0 {
                &self.factors.1
            } else {
                owned = self.integrating_factor(dt);
                &owned
            };
            for i in 0..self.grid.dim() {
                for (x, f) in next.component_mut(i).iter_mut().zip(factor) {
                    *x *= f;
                }
            }
        }
        Ok(Attempt::Done(StepOutcome {
            next,
            max_speed,
            dissipation,
            stochastic,
        }))
    }
}

enum Attempt {
    Done(StepOutcome),
    TooFast(f64),
}

/// One step of the scheme for configuration `cfg`.
pub fn step(
    u: &SpectralField,
    dw: &[f64],
    cfg: &SolverConfig,
) -> Result<SpectralField, SolverError> {
    Ok(Stepper::new(cfg)?.step(u, dw, cfg.dt)?.next)
}

/// Output of [`run_path`].
#[derive(Debug, Clone)]
pub struct PathRun {
    pub trace: EnergyTrace,
    /// `(t, u(t))` at the requested snapshot times.
    pub snapshots: Vec<(f64, SpectralField)>,
    pub initial: SpectralField,
    pub final_state: SpectralField,
    pub wiener: WienerPath,
    /// Steps that were subdivided by the CFL guard.
    pub cfl_subdivisions: usize,
}

/// Integrates one trajectory; deterministic in `(cfg, seed, path_id)`.
pub fn run_path(cfg: &SolverConfig, seed: u64, path_id: u64) -> Result<PathRun, SolverError> {
    run_path_observed(cfg, seed, path_id, &mut ())
}

pub fn run_path_observed(
    cfg: &SolverConfig,
    seed: u64,
    path_id: u64,
    observer: &mut dyn StepObserver,
) -> Result<PathRun, SolverError> {
    let u0 = cfg.initial.sample(cfg.grid, seed, path_id)?;
    run_path_from(cfg, u0, seed, path_id, observer)
}

/// As [`run_path_observed`] with explicit initial data (e.g. data sampled on
/// a coarser grid and resampled).
pub fn run_path_from(
    cfg: &SolverConfig,
    u0: SpectralField,
    seed: u64,
    path_id: u64,
    observer: &mut dyn StepObserver,
) -> Result<PathRun, SolverError> {
    let stepper = Stepper::new(cfg)?;
    let grid = cfg.grid;
    if u0.grid() != grid {
        return Err(SolverError::InvalidConfig(
            "initial data live on a different grid".into(),
        ));
    }
    let steps = cfg.steps();
    let dt = cfg.dt;
    let wiener = cfg.wiener_path(seed, path_id)?;
    let half_hs = 0.5 * hs_norm_sq(&cfg.forcing);
    let dx = grid.spacing();

    let mut snapshot_steps: BTreeMap<usize, f64> = BTreeMap::new();
    for &t in &cfg.snapshot_times {
        if t >= 0.0 && t <= cfg.horizon + 1e-12 {
            snapshot_steps.insert((t / dt).round() as usize, t);
        }
    }

    let mut trace = EnergyTrace::new(u0.energy());
    let mut snapshots = Vec::new();
    if snapshot_steps.contains_key(&0) {
        snapshots.push((0.0, u0.clone()));
    }
    let mut u = u0.clone();
    let (mut dissipation, mut stochastic) = (0.0, 0.0);
    let mut cfl_subdivisions = 0;

    for n in 0..steps {
        let t = n as f64 * dt;
        let dw = wiener.increment(n as u64);
        let outcome = match stepper.step_observed(&u, dw, dt, t, cfg.cfl * dx, observer) {
            Ok(Attempt::Done(o)) => Ok(o),
            Ok(Attempt::TooFast(speed)) => {
                cfl_subdivisions += 1;
                let m = ((speed * dt / (cfg.cfl * dx)).log2().ceil() as u32).max(1);
                // Redo the step on finer bridge levels of the same Brownian path.
                subdivide(&stepper, cfg, seed, path_id, &u, n as u64, m, t, observer)
            }
            Err(e) => Err(e),
        };
        let outcome = match outcome {
            Ok(o) => o,
            Err(SolverError::BlowUp {
                t,
                max_speed,
                ceiling,
                ..
            }) => {
                return Err(SolverError::BlowUp {
                    t,
                    max_speed,
                    ceiling,
                    partial: Box::new(trace),
                });
            }
            Err(e) => return Err(e),
        };
        dissipation += outcome.dissipation;
        stochastic += outcome.stochastic;
        u = outcome.next;
        let t_next = (n + 1) as f64 * dt;
        trace.push(TraceRow {
            t: t_next,
            energy: u.energy(),
            dissipation,
            ito: half_hs * t_next,
            stochastic,
        });
        if snapshot_steps.contains_key(&(n + 1)) {
            snapshots.push((t_next, u.clone()));
        }
    }
    observer.on_finish(steps as f64 * dt, &u);
    Ok(PathRun {
        trace,
        snapshots,
        initial: u0,
        final_state: u,
        wiener,
        cfl_subdivisions,
    })
}

#[allow(clippy::too_many_arguments)]
fn subdivide(
    stepper: &Stepper,
    cfg: &SolverConfig,
    seed: u64,
    path_id: u64,
    u: &SpectralField,
    n: u64,
    levels: u32,
    t0: f64,
    observer: &mut dyn StepObserver,
) -> Result<StepOutcome, SolverError> {
    let parts = 1u64 << levels;
    let fine = WienerPath::sample(
        seed,
        path_id,
        cfg.forcing.rank(),
        cfg.path_base_dt(),
        cfg.path_level + levels,
        n * parts..(n + 1) * parts,
    )?;
    let h = cfg.dt / parts as f64;
    let mut state = u.clone();
    let (mut dissipation, mut stochastic, mut max_speed) = (0.0, 0.0, 0.0f64);
    for j in 0..parts {
        let t = t0 + j as f64 * h;
        let o = match stepper.step_observed(
            &state,
            fine.increment(n * parts + j),
            h,
            t,
            f64::INFINITY,
            observer,
        )? {
            Attempt::Done(o) => o,
            Attempt::TooFast(_) => unreachable!(),
        };
        dissipation += o.dissipation;
        stochastic += o.stochastic;
        max_speed = max_speed.max(o.max_speed);
        state = o.next;
    }
    Ok(StepOutcome {
        next: state,
        max_speed,
        dissipation,
        stochastic,
    })
}
