use dissipeuler_core::limit::{martingale_ensemble, martingale_test, StatisticKind};

use crate::artifacts::{csv, Audit, Outcome};
use crate::{run_err, CliError, RunConfig};

const OP: &str = "limit_verifier::martingale_test";

fn kind_code(k: StatisticKind) -> f64 {
    match k {
        StatisticKind::Mean => -2.0,
        StatisticKind::Quadratic => -1.0,
        StatisticKind::Cross { mode } => mode as f64,
    }
}

/// Martingale statistics over an ensemble, one audit row per statistic.
pub fn run(cfg: &RunConfig, seed: u64) -> Result<Outcome, CliError> {
    let spec = cfg
        .martingale
        .as_ref()
        .ok_or_else(|| CliError::Config("martingale: table is required".into()))?;
    let ensemble =
        martingale_ensemble(&cfg.solver, &spec.stat, seed, 0..spec.paths).map_err(run_err)?;
    let report = martingale_test(&spec.stat, &cfg.solver, &ensemble).map_err(run_err)?;
    let mut out = Outcome::default();
    for r in &report.results {
        let kind = match r.kind {
            StatisticKind::Mean => "mean".to_string(),
            StatisticKind::Quadratic => "quadratic".to_string(),
            StatisticKind::Cross { mode } => format!("cross[k={mode}]"),
        };
        out.audit(Audit::upper(
            format!(
                "{kind} statistic, test {} on ({}, {}): |mean| within CI",
                r.test, r.s, r.t
            ),
            OP,
            r.estimate.mean.abs(),
            r.estimate.half_width + spec.stat.abs_tol,
        ));
    }
    out.file(
        "statistics.csv",
        csv(
            &[
                "kind",
                "test",
                "s",
                "t",
                "mean",
                "std_error",
                "half_width",
                "pass",
            ],
            report.results.iter().map(|r| {
                vec![
                    kind_code(r.kind),
                    r.test as f64,
                    r.s,
                    r.t,
                    r.estimate.mean,
                    r.estimate.std_error,
                    r.estimate.half_width,
                    if r.pass { 1.0 } else { 0.0 },
                ]
            }),
        ),
    );
    out.json("martingale.json", &report)?;
    Ok(out)
}
