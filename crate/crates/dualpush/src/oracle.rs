//! Ground-truth solvers used to judge distributed runs.
//!
//! Two independent routes to the optimum:
//!
//! * [`solve_scalar_coupling`]: for single-variable agents coupled through one
//!   scalar constraint row with positive coefficients, the aggregate response
//!   `h(lambda) = sum_i alpha_i x_i(lambda) - sum_i b_i` is non-increasing, so
//!   the dual optimum is found by bisection to machine width. Flat segments
//!   from linear agents are settled by an explicit allocation pass.
//! * [`solve_general_small`]: plain centralized dual subgradient ascent with
//!   running primal averaging, for any instance small enough to iterate on.
//!
//! On overlapping instances the two must agree; the test suite holds them to
//! one part in a million of each other.

use crate::problem::ProblemInstance;
use crate::pushsum::norm;
use crate::Error;

/// Bisection bracket half-width to start from, and the hard cap past which
/// the coupling constraint is declared infeasible.
const BRACKET_START: f64 = 1e3;
const BRACKET_CAP: f64 = 1e12;
const BRACKET_WIDTH: f64 = 1e-12;

/// A solved instance: minimizing primal, optimal multiplier, optimal value,
/// and the norm of the coupling residual at `x_star`. A residual that is not
/// tiny means the solver did not actually close the constraint; callers must
/// check it rather than trust `f_star`.
#[derive(Clone, Debug)]
pub struct OracleResult {
    pub x_star: Vec<Vec<f64>>,
    pub lambda_star: Vec<f64>,
    pub f_star: f64,
    pub residual: f64,
}

impl OracleResult {
    pub fn converged(&self, tol: f64) -> bool {
        self.residual <= tol
    }
}

/// True when the instance fits the bisection solver: one coupling row, one
/// decision variable per agent, strictly positive coupling coefficients.
pub fn is_scalar_coupling(inst: &ProblemInstance) -> bool {
    inst.coupling_dim() == 1
        && inst
            .agents()
            .iter()
            .all(|a| a.dim() == 1 && a.coupling().get(0, 0) > 0.0)
}

/// Value of the dual function at `lambda`: every agent best-responds and the
/// Lagrangian is evaluated there.
pub fn dual_value(inst: &ProblemInstance, lambda: &[f64]) -> Result<f64, Error> {
    let xs: Vec<Vec<f64>> = inst.agents().iter().map(|a| a.local_argmin(lambda)).collect();
    inst.lagrangian(&xs, lambda)
}

/// Exact solve by bisection on the scalar aggregate response.
pub fn solve_scalar_coupling(inst: &ProblemInstance) -> Result<OracleResult, Error> {
    if !is_scalar_coupling(inst) {
        return Err(Error::Dimension(
            "bisection needs scalar agents with one positive coupling coefficient each".into(),
        ));
    }
    let demand: f64 = inst.agents().iter().map(|a| a.offset()[0]).sum();
    let response = |lambda: f64| -> f64 {
        let mut total = 0.0;
        for a in inst.agents() {
            total += a.coupling().get(0, 0) * a.local_argmin(&[lambda])[0];
        }
        total - demand
    };

    // h is non-increasing: very negative lambda pushes everyone to the upper
    // bound. Grow the bracket until h(lo) >= 0 >= h(hi).
    let mut lo = -BRACKET_START;
    while response(lo) < 0.0 {
        lo *= 2.0;
        if lo < -BRACKET_CAP {
            return Err(Error::Infeasible(format!(
                "aggregate capacity cannot reach the demand {demand}"
            )));
        }
    }
    let mut hi = BRACKET_START;
    while response(hi) > 0.0 {
        hi *= 2.0;
        if hi > BRACKET_CAP {
            return Err(Error::Infeasible(format!(
                "aggregate lower bounds already exceed the demand {demand}"
            )));
        }
    }
    while hi - lo > BRACKET_WIDTH {
        let mid = 0.5 * (lo + hi);
        if response(mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let lambda_star = 0.5 * (lo + hi);

    let mut xs: Vec<Vec<f64>> =
        inst.agents().iter().map(|a| a.local_argmin(&[lambda_star])).collect();
    settle_flat_agents(inst, lambda_star, &mut xs);

    let residual = inst.coupling_residual(&xs)?[0].abs();
    let f_star = inst.evaluate_objective(&xs)?;
    Ok(OracleResult { x_star: xs, lambda_star: vec![lambda_star], f_star, residual })
}

/// Linear agents sitting exactly at the dual optimum are indifferent across
/// their whole box, and the tie-breaking argmin leaves the aggregate short or
/// long by the size of their jump. Shift them, in agent order, until the
/// constraint closes. Their Lagrangian value is flat, so optimality is
/// untouched.
fn settle_flat_agents(inst: &ProblemInstance, lambda_star: f64, xs: &mut [Vec<f64>]) {
    let mut deficit = {
        let current: f64 = inst
            .agents()
            .iter()
            .zip(xs.iter())
            .map(|(a, x)| a.coupling().get(0, 0) * x[0])
            .sum();
        let demand: f64 = inst.agents().iter().map(|a| a.offset()[0]).sum();
        demand - current
    };
    for (i, a) in inst.agents().iter().enumerate() {
        if deficit == 0.0 {
            break;
        }
        if a.objective().quad()[0] != 0.0 {
            continue;
        }
        let alpha = a.coupling().get(0, 0);
        let edge = a.objective().linear()[0] + alpha * lambda_star;
        let scale = 1.0 + a.objective().linear()[0].abs() + (alpha * lambda_star).abs();
        if edge.abs() > 1e-9 * scale {
            continue;
        }
        let (lo, hi) = (a.feasible().lower()[0], a.feasible().upper()[0]);
        let move_to = (xs[i][0] + deficit / alpha).clamp(lo, hi);
        deficit -= alpha * (move_to - xs[i][0]);
        xs[i][0] = move_to;
    }
}

/// Centralized dual subgradient ascent, `step0 / sqrt(k)` steps, with
/// stepsize-weighted primal averaging. Returns the best dual value seen as
/// `f_star` and, as `x_star`, whichever of (averaged primal, best-response at
/// the best multiplier) leaves the smaller constraint residual. Check
/// `residual` before believing the answer; an instance that cannot close the
/// constraint shows up there, never as a silent success.
pub fn solve_general_small(
    inst: &ProblemInstance,
    iters: u64,
    step0: f64,
) -> Result<OracleResult, Error> {
    if iters == 0 || !(step0.is_finite() && step0 > 0.0) {
        return Err(Error::Config("dual ascent needs iters >= 1 and step0 > 0".into()));
    }
    let p = inst.coupling_dim();
    let mut lambda = vec![0.0; p];
    let mut best_value = f64::NEG_INFINITY;
    let mut best_lambda = lambda.clone();
    let mut x_avg: Vec<Vec<f64>> = inst.agents().iter().map(|a| vec![0.0; a.dim()]).collect();
    let mut sum_alpha = 0.0;

    for k in 1..=iters {
        let xs: Vec<Vec<f64>> =
            inst.agents().iter().map(|a| a.local_argmin(&lambda)).collect();
        let value = inst.lagrangian(&xs, &lambda)?;
        if value > best_value {
            best_value = value;
            best_lambda = lambda.clone();
        }
        let g = inst.coupling_residual(&xs)?;
        let alpha = step0 / (k as f64).sqrt();
        sum_alpha += alpha;
        let ratio = alpha / sum_alpha;
        for (avg, x) in x_avg.iter_mut().zip(&xs) {
            for (av, xv) in avg.iter_mut().zip(x) {
                *av += ratio * (xv - *av);
            }
        }
        for (lk, gk) in lambda.iter_mut().zip(&g) {
            *lk += alpha * gk;
        }
    }

    let x_best: Vec<Vec<f64>> =
        inst.agents().iter().map(|a| a.local_argmin(&best_lambda)).collect();
    let r_best = norm(&inst.coupling_residual(&x_best)?);
    let r_avg = norm(&inst.coupling_residual(&x_avg)?);
    let (x_star, residual) = if r_best <= r_avg { (x_best, r_best) } else { (x_avg, r_avg) };
    Ok(OracleResult { x_star, lambda_star: best_lambda, f_star: best_value, residual })
}
