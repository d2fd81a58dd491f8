//! TOML run configuration.
//!
//! Every table rejects unknown keys. The `[solver]` table is a
//! [`SolverConfig`]; the experiment table named by `experiment` holds the
//! experiment-specific settings and may be omitted to take its defaults.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use dissipeuler_core::limit::MartingaleStat;
use dissipeuler_core::weak_strong::ReferenceSpec;
use dissipeuler_core::{ForcingMode, SolverConfig};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Simulate,
    Vanish,
    Ym,
    Martingale,
    Weakstrong,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Simulate => "simulate",
            Experiment::Vanish => "vanish",
            Experiment::Ym => "ym",
            Experiment::Martingale => "martingale",
            Experiment::Weakstrong => "weakstrong",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    /// Required here or on the command line.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    pub solver: SolverConfig,
    #[serde(default)]
    pub simulate: Option<SimulateSpec>,
    #[serde(default)]
    pub vanish: Option<VanishSpec>,
    #[serde(default)]
    pub ym: Option<YmSpec>,
    #[serde(default)]
    pub martingale: Option<MartingaleSpec>,
    #[serde(default)]
    pub weakstrong: Option<WeakStrongSpec>,
}

fn one() -> u64 {
    1
}

fn energy_c() -> f64 {
    0.1
}

fn half() -> f64 {
    0.5
}

fn z95() -> f64 {
    1.96
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSpec {
    #[serde(default = "one")]
    pub paths: u64,
    /// `C` in the energy tolerance `C dt^{1/2} (1 + E_0)`.
    #[serde(default = "energy_c")]
    pub energy_c: f64,
    /// Number of dt-halvings (sharing each Wiener path); three or more
    /// enable the observed-order audit.
    #[serde(default = "one_u32")]
    pub levels: u32,
    #[serde(default = "half")]
    pub min_order: f64,
}

fn one_u32() -> u32 {
    1
}

impl Default for SimulateSpec {
    fn default() -> Self {
        Self {
            paths: 1,
            energy_c: energy_c(),
            levels: 1,
            min_order: half(),
        }
    }
}

fn cells() -> usize {
    16
}

fn slabs() -> usize {
    10
}

fn radius() -> f64 {
    4.0
}

fn moment_p() -> f64 {
    4.0
}

fn demo_ladder() -> Vec<f64> {
    vec![0.1, 0.05, 0.025, 0.0125]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VanishSpec {
    #[serde(default = "demo_ladder")]
    pub viscosities: Vec<f64>,
    #[serde(default = "one")]
    pub paths: u64,
    #[serde(default = "cells")]
    pub cells_per_axis: usize,
    #[serde(default = "slabs")]
    pub slabs: usize,
    #[serde(default = "radius")]
    pub bin_radius: f64,
    #[serde(default = "energy_c")]
    pub energy_c: f64,
    #[serde(default = "moment_p")]
    pub moment_p: f64,
    #[serde(default = "z95")]
    pub z: f64,
}

impl Default for VanishSpec {
    fn default() -> Self {
        Self {
            viscosities: demo_ladder(),
            paths: 1,
            cells_per_axis: cells(),
            slabs: slabs(),
            bin_radius: radius(),
            energy_c: energy_c(),
            moment_p: moment_p(),
            z: z95(),
        }
    }
}

fn oracle_tol() -> f64 {
    1e-10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct YmSpec {
    #[serde(default)]
    pub path: u64,
    #[serde(default = "cells")]
    pub cells_per_axis: usize,
    #[serde(default = "slabs")]
    pub slabs: usize,
    #[serde(default = "radius")]
    pub bin_radius: f64,
    /// Test fields of the momentum balance; defaults to the forcing modes.
    #[serde(default)]
    pub test_modes: Vec<ForcingMode>,
    #[serde(default = "energy_c")]
    pub energy_c: f64,
    /// Allowed gap between the measure-side and classical weak-form residuals.
    #[serde(default = "oracle_tol")]
    pub oracle_tol: f64,
}

impl Default for YmSpec {
    fn default() -> Self {
        Self {
            path: 0,
            cells_per_axis: cells(),
            slabs: slabs(),
            bin_radius: radius(),
            test_modes: Vec::new(),
            energy_c: energy_c(),
            oracle_tol: oracle_tol(),
        }
    }
}

fn mc_paths() -> u64 {
    256
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MartingaleSpec {
    #[serde(default = "mc_paths")]
    pub paths: u64,
    pub stat: MartingaleStat,
}

fn ws_paths() -> u64 {
    64
}

fn gradient_level() -> f64 {
    2.0
}

fn ws_radius() -> f64 {
    8.0
}

fn form_tol() -> f64 {
    0.02
}

fn crossterm_tol() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeakStrongSpec {
    #[serde(default = "demo_ladder")]
    pub viscosities: Vec<f64>,
    #[serde(default = "ws_paths")]
    pub paths: u64,
    #[serde(default)]
    pub reference: ReferenceSpec,
    /// Stopping level `L` for `||grad v||_inf`.
    #[serde(default = "gradient_level")]
    pub l: f64,
    #[serde(default = "ws_radius")]
    pub bin_radius: f64,
    #[serde(default = "z95")]
    pub z: f64,
    /// Allowed relative gap between the two forms of `F`.
    #[serde(default = "form_tol")]
    pub form_tolerance: f64,
    /// Allowed relative residual of the cross-term identity.
    #[serde(default = "crossterm_tol")]
    pub crossterm_tolerance: f64,
}

impl Default for WeakStrongSpec {
    fn default() -> Self {
        Self {
            viscosities: demo_ladder(),
            paths: ws_paths(),
            reference: ReferenceSpec::default(),
            l: gradient_level(),
            bin_radius: ws_radius(),
            z: z95(),
            form_tolerance: form_tol(),
            crossterm_tolerance: crossterm_tol(),
        }
    }
}

fn field(path: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{path}: {msg}"))
}

fn non_negative(path: &str, x: f64) -> Result<(), CliError> {
    if x >= 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(field(path, format!("must be finite and >= 0, got {x}")))
    }
}

fn positive(path: &str, x: f64) -> Result<(), CliError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(field(path, format!("must be finite and > 0, got {x}")))
    }
}

fn ladder(path: &str, v: &[f64]) -> Result<(), CliError> {
    if v.is_empty() {
        return Err(field(path, "must not be empty"));
    }
    if v.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
        return Err(field(path, "entries must be positive"));
    }
    if v.windows(2).any(|w| w[1] >= w[0]) {
        return Err(field(path, "must be strictly decreasing"));
    }
    Ok(())
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Schema checks beyond the types; errors name the offending field.
    /// Tolerances may be zero (a zero tolerance makes the audit strict).
    pub fn validate(&self) -> Result<(), CliError> {
        self.solver.validate().map_err(|e| field("solver", e))?;
        let present = [
            (Experiment::Simulate, self.simulate.is_some()),
            (Experiment::Vanish, self.vanish.is_some()),
            (Experiment::Ym, self.ym.is_some()),
            (Experiment::Martingale, self.martingale.is_some()),
            (Experiment::Weakstrong, self.weakstrong.is_some()),
        ];
        for (e, p) in present {
            if p && e != self.experiment {
                return Err(field(
                    e.name(),
                    format!("table given but experiment is `{}`", self.experiment.name()),
                ));
            }
        }
        match self.experiment {
            Experiment::Simulate => {
                let s = self.simulate();
                if s.paths == 0 {
                    return Err(field("simulate.paths", "must be >= 1"));
                }
                if s.levels == 0 || s.levels > 8 {
                    return Err(field("simulate.levels", "must be in 1..=8"));
                }
                non_negative("simulate.energy_c", s.energy_c)?;
                non_negative("simulate.min_order", s.min_order)?;
            }
            Experiment::Vanish => {
                let v = self.vanish();
                ladder("vanish.viscosities", &v.viscosities)?;
                if v.paths == 0 {
                    return Err(field("vanish.paths", "must be >= 1"));
                }
                if v.cells_per_axis == 0 || self.solver.grid.n() % v.cells_per_axis != 0 {
                    return Err(field("vanish.cells_per_axis", "must divide solver.grid.n"));
                }
                if v.slabs == 0 || self.solver.steps() % v.slabs != 0 {
                    return Err(field("vanish.slabs", "must divide the number of steps"));
                }
                positive("vanish.bin_radius", v.bin_radius)?;
                non_negative("vanish.energy_c", v.energy_c)?;
                if !(v.moment_p > 2.0) {
                    return Err(field("vanish.moment_p", "must exceed 2"));
                }
                positive("vanish.z", v.z)?;
            }
            Experiment::Ym => {
                let y = self.ym();
                if y.cells_per_axis == 0 || self.solver.grid.n() % y.cells_per_axis != 0 {
                    return Err(field("ym.cells_per_axis", "must divide solver.grid.n"));
                }
                if y.slabs == 0 || self.solver.steps() % y.slabs != 0 {
                    return Err(field("ym.slabs", "must divide the number of steps"));
                }
                positive("ym.bin_radius", y.bin_radius)?;
                non_negative("ym.energy_c", y.energy_c)?;
                non_negative("ym.oracle_tol", y.oracle_tol)?;
            }
            Experiment::Martingale => {
                let m = self
                    .martingale
                    .as_ref()
                    .ok_or_else(|| field("martingale", "table is required"))?;
                if m.paths < 32 {
                    return Err(field("martingale.paths", "must be >= 32"));
                }
                if m.stat.tests.is_empty() {
                    return Err(field("martingale.stat.tests", "must not be empty"));
                }
                if m.stat.times.is_empty() {
                    return Err(field("martingale.stat.times", "must not be empty"));
                }
                for (i, &(s, t)) in m.stat.times.iter().enumerate() {
                    if !(0.0 <= s && s < t && t <= self.solver.horizon) {
                        return Err(field(
                            &format!("martingale.stat.times[{i}]"),
                            "need 0 <= s < t <= horizon",
                        ));
                    }
                    let off_grid = |x: f64| {
                        let k = x / self.solver.dt;
                        (k - k.round()).abs() > 1e-9 * k.max(1.0)
                    };
                    if off_grid(s) || off_grid(t) {
                        return Err(field(
                            &format!("martingale.stat.times[{i}]"),
                            "times must be multiples of solver.dt",
                        ));
                    }
                }
                if !(m.stat.level > 0.0 && m.stat.level < 1.0) {
                    return Err(field("martingale.stat.level", "must lie in (0, 1)"));
                }
                non_negative("martingale.stat.abs_tol", m.stat.abs_tol)?;
            }
            Experiment::Weakstrong => {
                let w = self.weakstrong();
                ladder("weakstrong.viscosities", &w.viscosities)?;
                if w.paths < 2 {
                    return Err(field("weakstrong.paths", "must be >= 2"));
                }
                if w.reference.n % self.solver.grid.n() != 0 {
                    return Err(field(
                        "weakstrong.reference.n",
                        "must be a multiple of solver.grid.n",
                    ));
                }
                if !w.reference.dt_divisor.is_power_of_two() {
                    return Err(field(
                        "weakstrong.reference.dt_divisor",
                        "must be a power of two",
                    ));
                }
                positive(
                    "weakstrong.reference.tail_threshold",
                    w.reference.tail_threshold,
                )?;
                positive("weakstrong.l", w.l)?;
                positive("weakstrong.bin_radius", w.bin_radius)?;
                positive("weakstrong.z", w.z)?;
                non_negative("weakstrong.form_tolerance", w.form_tolerance)?;
                non_negative("weakstrong.crossterm_tolerance", w.crossterm_tolerance)?;
            }
        }
        Ok(())
    }

    pub fn simulate(&self) -> SimulateSpec {
        self.simulate.clone().unwrap_or_default()
    }

    pub fn vanish(&self) -> VanishSpec {
        self.vanish.clone().unwrap_or_default()
    }

    pub fn ym(&self) -> YmSpec {
        self.ym.clone().unwrap_or_default()
    }

    pub fn weakstrong(&self) -> WeakStrongSpec {
        self.weakstrong.clone().unwrap_or_default()
    }
}
