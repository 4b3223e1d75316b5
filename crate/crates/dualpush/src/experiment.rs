//! End-to-end runs: solve the instance centrally first, then simulate the
//! distributed algorithm, stream the per-round trace to CSV, and enforce the
//! conservation identities every round. A run that breaks an identity aborts
//! with an error instead of logging garbage.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::config::{RunConfig, StepsizeConfig};
use crate::metrics::{self, parse_csv, record, IterationRecord, CSV_HEADER};
use crate::oracle::{is_scalar_coupling, solve_general_small, solve_scalar_coupling, OracleResult};
use crate::pushsum::{norm, Simulation};
use crate::Error;

/// Per-round invariant ceilings enforced during a run.
pub const CONSERVATION_TOL: f64 = 1e-12;
pub const MEAN_DUAL_TOL: f64 = 1e-12;
pub const IDENTITY_TOL: f64 = 1e-9;

pub struct ExperimentOutcome {
    pub oracle: OracleResult,
    pub records: Vec<IterationRecord>,
    pub rounds_completed: u64,
    pub early_exit: bool,
    pub wall_time: Duration,
    pub stepsize_warning: Option<String>,
}

/// Centralized solve used both as a feasibility gate and as the reference
/// the trace's gap and distance columns are measured against.
pub fn solve_reference(inst: &crate::problem::ProblemInstance) -> Result<OracleResult, Error> {
    let scalar = is_scalar_coupling(inst);
    let sol = if scalar {
        solve_scalar_coupling(inst)?
    } else {
        solve_general_small(inst, 50_000, 1.0)?
    };
    let mut total_offset = vec![0.0; inst.coupling_dim()];
    for a in inst.agents() {
        for (acc, v) in total_offset.iter_mut().zip(a.offset()) {
            *acc += v;
        }
    }
    let scale = norm(&total_offset).max(1.0);
    let tol = if scalar { 1e-8 } else { 1e-6 } * scale;
    if !sol.converged(tol) {
        return Err(Error::OracleNotConverged { residual: sol.residual });
    }
    Ok(sol)
}

pub fn run_experiment(cfg: &RunConfig) -> Result<ExperimentOutcome, Error> {
    let started = Instant::now();
    let inst = cfg.build_instance()?;
    let oracle = solve_reference(&inst)?;

    let schedule = cfg.build_schedule(inst.num_agents())?;
    let stepsize = cfg.build_stepsizes()?;
    let stepsize_warning = match cfg.stepsize {
        StepsizeConfig::Constant { c } => Some(format!(
            "constant stepsize {c} does not decay; convergence guarantees do not apply"
        )),
        _ => None,
    };
    let mu0 = cfg.initial_duals(&inst)?;
    let mut sim = Simulation::new(inst, schedule, stepsize, mu0.as_deref())?;
    sim.set_parallel(cfg.parallel);

    if let Some(dir) = cfg.outputs.csv.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let file = fs::File::create(&cfg.outputs.csv)?;
    let mut csv = BufWriter::new(file);
    writeln!(csv, "{CSV_HEADER}")?;

    let mut records = Vec::with_capacity(cfg.iterations as usize + 1);
    let first = record(&sim, None, Some(&oracle));
    writeln!(csv, "{}", first.csv_row())?;
    records.push(first);

    let mut early_exit = false;
    for t in 1..=cfg.iterations {
        let diag = sim.step()?;
        if diag.conservation_error > CONSERVATION_TOL {
            return Err(Error::Invariant(format!(
                "push-sum weight total drifted by {:e} in round {t}",
                diag.conservation_error
            )));
        }
        if diag.mean_dual_residual > MEAN_DUAL_TOL {
            return Err(Error::Invariant(format!(
                "mean dual left its subgradient recursion by {:e} in round {t}",
                diag.mean_dual_residual
            )));
        }
        if diag.violation_identity_residual > IDENTITY_TOL {
            return Err(Error::Invariant(format!(
                "averaged violation identity off by {:e} in round {t}",
                diag.violation_identity_residual
            )));
        }
        let rec = record(&sim, Some(&diag), Some(&oracle));
        let stop = cfg.tolerances.is_some_and(|tol| {
            rec.consensus_spread <= tol.consensus && rec.violation_norm <= tol.violation
        });
        writeln!(csv, "{}", rec.csv_row())?;
        records.push(rec);
        if stop {
            early_exit = true;
            break;
        }
    }
    csv.flush()?;
    drop(csv);

    let rounds_completed = records.last().map_or(0, |r| r.t);
    let wall_time = started.elapsed();
    let outcome = ExperimentOutcome {
        oracle,
        records,
        rounds_completed,
        early_exit,
        wall_time,
        stepsize_warning,
    };
    if let Some(path) = &cfg.outputs.summary {
        write_summary(path, cfg, &outcome, &sim)?;
    }
    Ok(outcome)
}

#[derive(Serialize)]
struct Summary<'a> {
    // scalar key first: TOML cannot emit a bare key after nested tables
    #[serde(skip_serializing_if = "Option::is_none")]
    warning: Option<&'a str>,
    run: RunSection,
    oracle: OracleSection<'a>,
    #[serde(rename = "final")]
    last: FinalSection,
}

#[derive(Serialize)]
struct RunSection {
    iterations_requested: u64,
    rounds_completed: u64,
    early_exit: bool,
    parallel: bool,
    wall_time_seconds: f64,
}

#[derive(Serialize)]
struct OracleSection<'a> {
    f_star: f64,
    lambda_star: &'a [f64],
    residual: f64,
}

#[derive(Serialize)]
struct FinalSection {
    objective_hat: f64,
    objective_gap: f64,
    violation_norm: f64,
    consensus_spread: f64,
    dual_distance: f64,
    lambda_hat_mean: Vec<f64>,
}

fn write_summary(
    path: &Path,
    cfg: &RunConfig,
    outcome: &ExperimentOutcome,
    sim: &Simulation,
) -> Result<(), Error> {
    let last = outcome.records.last().expect("at least the initial record");
    let p = sim.instance().coupling_dim();
    let mut lambda_hat_mean = vec![0.0; p];
    for s in sim.states() {
        for (acc, v) in lambda_hat_mean.iter_mut().zip(&s.lambda_hat) {
            *acc += v;
        }
    }
    for v in &mut lambda_hat_mean {
        *v /= sim.states().len() as f64;
    }

    let summary = Summary {
        run: RunSection {
            iterations_requested: cfg.iterations,
            rounds_completed: outcome.rounds_completed,
            early_exit: outcome.early_exit,
            parallel: cfg.parallel,
            wall_time_seconds: outcome.wall_time.as_secs_f64(),
        },
        oracle: OracleSection {
            f_star: outcome.oracle.f_star,
            lambda_star: &outcome.oracle.lambda_star,
            residual: outcome.oracle.residual,
        },
        last: FinalSection {
            objective_hat: last.objective_hat,
            objective_gap: last.objective_gap.unwrap_or(f64::NAN),
            violation_norm: last.violation_norm,
            consensus_spread: last.consensus_spread,
            dual_distance: last.dual_distance.unwrap_or(f64::NAN),
            lambda_hat_mean,
        },
        warning: outcome.stepsize_warning.as_deref(),
    };
    let text = toml::to_string(&summary)
        .map_err(|e| Error::Config(format!("summary serialization: {e}")))?;
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(path, text)?;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct VerifyReport {
    pub rows: usize,
    pub last_round: u64,
    /// Implied reference objective when the gap column is populated.
    pub f_star: Option<f64>,
}

/// Offline audit of a trace file. Checks structure (header, contiguous round
/// numbers, canonical float formatting byte for byte), plausibility (finite
/// fields, nonnegative norms, positive stepsizes), the identity-residual
/// ceiling, and that gap and objective columns agree on a single reference
/// value.
pub fn verify_csv(path: &Path) -> Result<VerifyReport, Error> {
    let text = fs::read_to_string(path)?;
    let rows = parse_csv(&text)?;
    if rows.is_empty() {
        return Err(Error::Verify("no data rows".into()));
    }

    for (i, r) in rows.iter().enumerate() {
        let line = i + 2;
        if r.t != i as u64 {
            return Err(Error::Verify(format!(
                "line {line}: round {} where {} was expected",
                r.t, i
            )));
        }
        let fields = [
            ("beta", Some(r.beta)),
            ("objective_hat", Some(r.objective_hat)),
            ("objective_gap", r.objective_gap),
            ("violation_norm", Some(r.violation_norm)),
            ("consensus_spread", Some(r.consensus_spread)),
            ("dual_distance", r.dual_distance),
            ("identity_residual", Some(r.identity_residual)),
        ];
        for (name, v) in fields {
            if let Some(v) = v {
                if !v.is_finite() {
                    return Err(Error::Verify(format!("line {line}: {name} is not finite")));
                }
            }
        }
        if i == 0 {
            if r.beta != 0.0 || r.identity_residual != 0.0 {
                return Err(Error::Verify(
                    "line 2: the round-0 row must have beta 0 and identity residual 0".into(),
                ));
            }
        } else if r.beta <= 0.0 {
            return Err(Error::Verify(format!("line {line}: beta must be positive")));
        }
        if r.violation_norm < 0.0 || r.consensus_spread < 0.0 || r.identity_residual < 0.0 {
            return Err(Error::Verify(format!("line {line}: negative norm")));
        }
        if r.identity_residual > IDENTITY_TOL {
            return Err(Error::Verify(format!(
                "line {line}: identity residual {:e} exceeds {IDENTITY_TOL:e}",
                r.identity_residual
            )));
        }
        if r.objective_gap.is_some() != rows[0].objective_gap.is_some()
            || r.dual_distance.is_some() != rows[0].dual_distance.is_some()
        {
            return Err(Error::Verify(format!(
                "line {line}: reference columns appear and disappear mid-file"
            )));
        }
    }

    let f_star = rows[0].objective_gap.map(|g0| rows[0].objective_hat - g0);
    if let Some(f0) = f_star {
        for (i, r) in rows.iter().enumerate() {
            let fi = r.objective_hat - r.objective_gap.expect("uniform presence");
            if (fi - f0).abs() > 1e-9 * f0.abs().max(1.0) {
                return Err(Error::Verify(format!(
                    "line {}: objective_hat - objective_gap drifts from {f0} to {fi}",
                    i + 2
                )));
            }
        }
    }

    // canonical reformat must reproduce the file byte for byte
    let mut canonical = String::with_capacity(text.len());
    canonical.push_str(CSV_HEADER);
    canonical.push('\n');
    for r in &rows {
        let opt = |v: Option<f64>| v.map(metrics::format_value).unwrap_or_default();
        canonical.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.t,
            metrics::format_value(r.beta),
            metrics::format_value(r.objective_hat),
            opt(r.objective_gap),
            metrics::format_value(r.violation_norm),
            metrics::format_value(r.consensus_spread),
            opt(r.dual_distance),
            metrics::format_value(r.identity_residual),
        ));
    }
    if canonical != text {
        let bad = canonical
            .lines()
            .zip(text.lines())
            .position(|(a, b)| a != b)
            .map(|i| i + 1)
            .unwrap_or(canonical.lines().count().min(text.lines().count()) + 1);
        return Err(Error::Verify(format!("line {bad}: not in canonical format")));
    }

    Ok(VerifyReport { rows: rows.len(), last_round: rows.last().unwrap().t, f_star })
}
