//! Run diagnostics: per-round records, the CSV trace format, and the
//! worst-case convergence-rate bounds the trajectories are audited against.
//!
//! With stepsizes `c / sqrt(t)` the theory guarantees, for the averaged
//! primal after t rounds, an objective gap of order `ln t / sqrt(t)` and a
//! squared constraint violation of order `ln t / t`. The explicit constants
//! involve the instance's subgradient budget `G = sum_i G_i` and two mixing
//! constants `xi`, `eta` quantifying how badly a B-jointly-connected digraph
//! sequence can mix; [`worst_case_xi_eta`] gives their universal worst case.
//! [`objective_gap_bound`] and [`violation_squared_bound`] evaluate the bounds so tests can
//! assert that no observed trajectory ever beats theory in the wrong
//! direction; [`envelope_check`] asserts the decay *shape* by comparing
//! normalized statistics against their own burn-in maxima.

use std::fmt::Write as _;

use crate::oracle::OracleResult;
use crate::pushsum::{norm, RoundDiagnostics, Simulation};
use crate::Error;

/// Everything logged once per round.
#[derive(Clone, Debug)]
pub struct IterationRecord {
    pub t: u64,
    /// Stepsize applied this round; 0 for the initial record.
    pub beta: f64,
    /// Objective of the averaged primal, `F(xhat[t])`.
    pub objective_hat: f64,
    /// `F(xhat[t]) - f_star`, when an oracle solution is available.
    pub objective_gap: Option<f64>,
    /// Norm of the averaged primal's coupling residual.
    pub violation_norm: f64,
    /// `max_{i,j} ||lambda_i - lambda_j||`.
    pub consensus_spread: f64,
    /// `max_i ||lambda_i - lambda_star||`, when an oracle solution is available.
    pub dual_distance: Option<f64>,
    /// Relative residual of the averaged-primal violation identity.
    pub identity_residual: f64,
    /// Mean dual payload (not serialized to CSV).
    pub mean_dual: Vec<f64>,
}

/// Snapshot of the running simulation into a record. Pass the diagnostics of
/// the round just taken, or `None` for the initial (round 0) record.
pub fn record(
    sim: &Simulation,
    diag: Option<&RoundDiagnostics>,
    oracle: Option<&OracleResult>,
) -> IterationRecord {
    let states = sim.states();
    let xs_hat: Vec<Vec<f64>> = states.iter().map(|s| s.x_hat.clone()).collect();
    let objective_hat = sim
        .instance()
        .evaluate_objective(&xs_hat)
        .expect("states match instance");
    let violation_norm = norm(&sim.averaged_violation());

    let mut consensus_spread = 0.0f64;
    for i in 0..states.len() {
        for j in i + 1..states.len() {
            let mut d = 0.0;
            for k in 0..states[i].lambda.len() {
                d += (states[i].lambda[k] - states[j].lambda[k]).powi(2);
            }
            consensus_spread = consensus_spread.max(d.sqrt());
        }
    }

    let dual_distance = oracle.map(|o| {
        states
            .iter()
            .map(|s| {
                let mut d = 0.0;
                for k in 0..s.lambda.len() {
                    d += (s.lambda[k] - o.lambda_star[k]).powi(2);
                }
                d.sqrt()
            })
            .fold(0.0f64, f64::max)
    });

    IterationRecord {
        t: sim.round(),
        beta: diag.map_or(0.0, |d| d.beta),
        objective_hat,
        objective_gap: oracle.map(|o| objective_hat - o.f_star),
        violation_norm,
        consensus_spread,
        dual_distance,
        identity_residual: diag.map_or(0.0, |d| d.violation_identity_residual),
        mean_dual: sim.mean_dual(),
    }
}

pub const CSV_HEADER: &str =
    "t,beta,objective_hat,objective_gap,violation_norm,consensus_spread,dual_distance,identity_residual";

/// 17 significant digits; parses back to the identical f64.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

impl IterationRecord {
    pub fn csv_row(&self) -> String {
        let mut row = String::new();
        let opt = |v: &Option<f64>| v.map(format_value).unwrap_or_default();
        let _ = write!(
            row,
            "{},{},{},{},{},{},{},{}",
            self.t,
            format_value(self.beta),
            format_value(self.objective_hat),
            opt(&self.objective_gap),
            format_value(self.violation_norm),
            format_value(self.consensus_spread),
            opt(&self.dual_distance),
            format_value(self.identity_residual),
        );
        row
    }
}

/// A CSV row read back in; the file holds exactly the serialized fields.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvRecord {
    pub t: u64,
    pub beta: f64,
    pub objective_hat: f64,
    pub objective_gap: Option<f64>,
    pub violation_norm: f64,
    pub consensus_spread: f64,
    pub dual_distance: Option<f64>,
    pub identity_residual: f64,
}

pub fn parse_csv(text: &str) -> Result<Vec<CsvRecord>, Error> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        Some(h) => {
            return Err(Error::Verify(format!("unexpected header: {h:?}")));
        }
        None => return Err(Error::Verify("empty file".into())),
    }
    let mut out = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(Error::Verify(format!(
                "row {}: {} fields, expected 8",
                idx + 2,
                fields.len()
            )));
        }
        let req = |s: &str, name: &str| -> Result<f64, Error> {
            s.parse::<f64>()
                .map_err(|_| Error::Verify(format!("row {}: bad {name} {s:?}", idx + 2)))
        };
        let opt = |s: &str, name: &str| -> Result<Option<f64>, Error> {
            if s.is_empty() { Ok(None) } else { req(s, name).map(Some) }
        };
        out.push(CsvRecord {
            t: fields[0]
                .parse()
                .map_err(|_| Error::Verify(format!("row {}: bad t {:?}", idx + 2, fields[0])))?,
            beta: req(fields[1], "beta")?,
            objective_hat: req(fields[2], "objective_hat")?,
            objective_gap: opt(fields[3], "objective_gap")?,
            violation_norm: req(fields[4], "violation_norm")?,
            consensus_spread: req(fields[5], "consensus_spread")?,
            dual_distance: opt(fields[6], "dual_distance")?,
            identity_residual: req(fields[7], "identity_residual")?,
        });
    }
    Ok(out)
}

/// Universal worst-case mixing constants for m nodes under B-joint
/// connectivity: `xi = m^(-mB)` and `eta = (1 - xi)^(1/(mB))`. For large
/// `m * B` the product `xi * (1 - eta)` underflows and bounds built from it
/// become infinite; they stay valid, just useless.
pub fn worst_case_xi_eta(m: usize, b: u64) -> (f64, f64) {
    let mb = (m as f64) * (b as f64);
    let xi = (m as f64).powf(-mb);
    let eta = ((-xi).ln_1p() / mb).exp();
    (xi, eta)
}

/// Objective-gap bound for the averaged primal after t+1 rounds under
/// stepsizes `c / sqrt(t)`:
///
/// ```text
///   m ||mean(mu)[0]||_1 / (2 c sqrt(t+1))
/// + c G^2 (1 + ln(t+1)) / (2 m sqrt(t+1))
/// + 16 G sum_j ||mu_j[0]||_1 / (xi (1 - eta) sqrt(t+1))
/// + 16 c p G^2 (1 + ln t) / (xi (1 - eta) sqrt(t+1))
/// ```
#[allow(clippy::too_many_arguments)]
pub fn objective_gap_bound(
    t: u64,
    c: f64,
    g: f64,
    m: usize,
    p: usize,
    mu_bar0_l1: f64,
    mu0_l1_sum: f64,
    xi: f64,
    eta: f64,
) -> f64 {
    assert!(t >= 1, "bound is stated for t >= 1");
    let m = m as f64;
    let tf = t as f64;
    let root = (tf + 1.0).sqrt();
    let mix = xi * (1.0 - eta);
    m * mu_bar0_l1 / (2.0 * c * root)
        + c * g * g * (1.0 + (tf + 1.0).ln()) / (2.0 * m * root)
        + 16.0 * g * mu0_l1_sum / (mix * root)
        + 16.0 * c * p as f64 * g * g * (1.0 + tf.ln()) / (mix * root)
}

/// Squared-violation bound for the averaged primal after t+1 rounds:
///
/// ```text
///   4 m^2 ||mean(mu)[0]||_1 / (c^2 (t+1))
/// + 2 G^2 (1 + ln(t+1)) / (t+1)
/// + 64 G m sum_j ||mu_j[0]||_1 / (c xi (1 - eta) (t+1))
/// + 64 m p G^2 (1 + ln t) / (xi (1 - eta) (t+1))
/// ```
#[allow(clippy::too_many_arguments)]
pub fn violation_squared_bound(
    t: u64,
    c: f64,
    g: f64,
    m: usize,
    p: usize,
    mu_bar0_l1: f64,
    mu0_l1_sum: f64,
    xi: f64,
    eta: f64,
) -> f64 {
    assert!(t >= 1, "bound is stated for t >= 1");
    let m = m as f64;
    let tf = t as f64;
    let horizon = tf + 1.0;
    let mix = xi * (1.0 - eta);
    4.0 * m * m * mu_bar0_l1 / (c * c * horizon)
        + 2.0 * g * g * (1.0 + horizon.ln()) / horizon
        + 64.0 * g * m * mu0_l1_sum / (c * mix * horizon)
        + 64.0 * m * p as f64 * g * g * (1.0 + tf.ln()) / (mix * horizon)
}

/// Normalized gap statistic `gap sqrt(t) / (1 + ln t)`; bounded above along
/// any trajectory obeying the objective-gap rate.
pub fn gap_rate_statistic(t: u64, gap: f64) -> f64 {
    let tf = t as f64;
    gap * tf.sqrt() / (1.0 + tf.ln())
}

/// Normalized violation statistic `v^2 t / (1 + ln t)`; bounded above along
/// any trajectory obeying the squared-violation rate.
pub fn violation_rate_statistic(t: u64, v: f64) -> f64 {
    let tf = t as f64;
    v * v * tf / (1.0 + tf.ln())
}

#[derive(Clone, Copy, Debug)]
pub struct EnvelopeCheck {
    pub burn_in_max: f64,
    pub later_max: f64,
    pub holds: bool,
}

/// Estimates the rate constant as the statistic's maximum over the burn-in
/// rounds `[burn_lo, burn_hi]`, then demands every later statistic stay at or
/// below it. The effective ceiling is floored at zero: a trajectory whose
/// statistic is negative (an averaged primal still on the feasible side's
/// cheap side) satisfies any upper rate bound trivially.
pub fn envelope_check(
    stats: &[(u64, f64)],
    burn_lo: u64,
    burn_hi: u64,
) -> Result<EnvelopeCheck, Error> {
    let burn_in_max = stats
        .iter()
        .filter(|(t, _)| (burn_lo..=burn_hi).contains(t))
        .map(|&(_, s)| s)
        .fold(f64::NEG_INFINITY, f64::max);
    if burn_in_max == f64::NEG_INFINITY {
        return Err(Error::Verify(format!(
            "no statistics inside burn-in [{burn_lo}, {burn_hi}]"
        )));
    }
    let later_max = stats
        .iter()
        .filter(|(t, _)| *t > burn_hi)
        .map(|&(_, s)| s)
        .fold(f64::NEG_INFINITY, f64::max);
    if later_max == f64::NEG_INFINITY {
        return Err(Error::Verify(format!("no statistics beyond round {burn_hi}")));
    }
    let ceiling = burn_in_max.max(0.0);
    Ok(EnvelopeCheck { burn_in_max, later_max, holds: later_max <= ceiling })
}
