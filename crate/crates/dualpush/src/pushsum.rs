//! Distributed dual subgradient iteration with push-sum mixing.
//!
//! Each agent i keeps a dual payload `mu_i` and a push-sum weight `nu_i`
//! (initially 1). One round, with mixing matrix `D[t]` built from the round's
//! snapshot and stepsize `beta[t+1]`:
//!
//! ```text
//!   u_i      = sum_j D[t][i][j] mu_j                 (mix payloads)
//!   nu_i     = sum_j D[t][i][j] nu_j                 (mix weights)
//!   lam_i    = u_i / nu_i                            (de-biased dual estimate)
//!   x_i      = argmin_{x in X_i} f_i(x) + lam_i' (A_i x - b_i)
//!   mu_i     = u_i + beta[t+1] (A_i x_i - b_i)
//! ```
//!
//! followed by stepsize-weighted running averages of `x_i` and `lam_i`.
//! Column stochasticity conserves `sum_i nu_i = m` and makes the mean payload
//! follow the exact recursion
//!
//! ```text
//!   mean(mu)[t+1] = mean(mu)[t] + (beta[t+1] / m) sum_j (A_j x_j[t+1] - b_j),
//! ```
//!
//! which telescopes into an identity tying the averaged primal's constraint
//! violation to the drift of the mean payload:
//!
//! ```text
//!   sum_i (A_i xhat_i[t] - b_i) = m (mean(mu)[t] - mean(mu)[0]) / sum_r beta[r].
//! ```
//!
//! Both residuals are computed every round and surfaced in
//! [`RoundDiagnostics`]; they are cheap and catch sequencing bugs immediately.
//!
//! All cross-agent reductions accumulate in ascending agent order, so a run
//! is reproducible bit for bit, with or without data parallelism over agents.

use rayon::prelude::*;

use crate::graph::{build_weights, DigraphSnapshot, GraphSchedule};
use crate::problem::ProblemInstance;
use crate::Error;

/// Push-sum weights below this are treated as numerically dead.
pub const NU_UNDERFLOW: f64 = 1e-300;

/// Stepsize sequence `beta[t]`, defined for rounds `t >= 1`. Convergence
/// theory wants a positive non-increasing sequence whose sum diverges while
/// the sum of squares stays finite; `c / sqrt(t)` is the canonical choice.
#[derive(Clone, Debug, PartialEq)]
pub enum StepsizeSchedule {
    InverseSqrt { c: f64 },
    Constant { c: f64 },
    Table { values: Vec<f64> },
}

impl StepsizeSchedule {
    pub fn inverse_sqrt(c: f64) -> Result<Self, Error> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::Config(format!("stepsize scale must be positive, got {c}")));
        }
        Ok(StepsizeSchedule::InverseSqrt { c })
    }

    pub fn constant(c: f64) -> Result<Self, Error> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::Config(format!("stepsize scale must be positive, got {c}")));
        }
        Ok(StepsizeSchedule::Constant { c })
    }

    pub fn table(values: Vec<f64>) -> Result<Self, Error> {
        if values.is_empty() {
            return Err(Error::Config("stepsize table is empty".into()));
        }
        if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config("stepsize table entries must be positive".into()));
        }
        Ok(StepsizeSchedule::Table { values })
    }

    pub fn beta(&self, t: u64) -> Result<f64, Error> {
        if t == 0 {
            return Err(Error::Config("stepsizes are indexed from round 1".into()));
        }
        match self {
            StepsizeSchedule::InverseSqrt { c } => Ok(c / (t as f64).sqrt()),
            StepsizeSchedule::Constant { c } => Ok(*c),
            StepsizeSchedule::Table { values } => {
                values.get(t as usize - 1).copied().ok_or_else(|| {
                    Error::Config(format!(
                        "stepsize table has {} entries, round {t} requested",
                        values.len()
                    ))
                })
            }
        }
    }

    /// Whether the sequence certifiably satisfies the decay conditions
    /// (non-increasing, divergent sum, summable squares). Constant stepsizes
    /// do not; finite tables cannot certify the tail and report false.
    pub fn satisfies_decay_conditions(&self) -> bool {
        matches!(self, StepsizeSchedule::InverseSqrt { .. })
    }
}

/// Everything agent i carries between rounds.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentState {
    /// Dual payload.
    pub mu: Vec<f64>,
    /// Push-sum weight.
    pub nu: f64,
    /// Mixed payload from the last round, before the subgradient step.
    pub u: Vec<f64>,
    /// De-biased dual estimate `u / nu`.
    pub lambda: Vec<f64>,
    /// Latest primal response.
    pub x: Vec<f64>,
    /// Stepsize-weighted running average of the primal responses.
    pub x_hat: Vec<f64>,
    /// Stepsize-weighted running average of the dual estimates.
    pub lambda_hat: Vec<f64>,
}

/// States at round 0: `mu` from the supplied duals (zero if omitted), unit
/// weights, `lambda = mu`, and the primal response plus both averages seeded
/// from it.
pub fn initialize(
    inst: &ProblemInstance,
    mu0: Option<&[Vec<f64>]>,
) -> Result<Vec<AgentState>, Error> {
    let m = inst.num_agents();
    let p = inst.coupling_dim();
    if let Some(duals) = mu0 {
        if duals.len() != m {
            return Err(Error::Dimension(format!(
                "{} initial duals supplied for {m} agents",
                duals.len()
            )));
        }
        if duals.iter().any(|d| d.len() != p) {
            return Err(Error::Dimension(format!("initial duals must have dimension {p}")));
        }
        if duals.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Config("initial duals must be finite".into()));
        }
    }
    let mut states = Vec::with_capacity(m);
    for i in 0..m {
        let mu = mu0.map_or_else(|| vec![0.0; p], |d| d[i].clone());
        let lambda = mu.clone();
        let x = inst.agent(i).local_argmin(&lambda);
        states.push(AgentState {
            u: mu.clone(),
            lambda: lambda.clone(),
            x_hat: x.clone(),
            lambda_hat: lambda,
            x,
            mu,
            nu: 1.0,
        });
    }
    Ok(states)
}

/// Folds the round-(t+1) values of `x` and `lambda` into the running
/// averages. `beta_next` is the stepsize just applied and `cum_beta` the sum
/// of stepsizes through round t+1 (including `beta_next`).
pub fn update_running_averages(state: &mut AgentState, beta_next: f64, cum_beta: f64) {
    let ratio = beta_next / cum_beta;
    for k in 0..state.x.len() {
        state.x_hat[k] += ratio * (state.x[k] - state.x_hat[k]);
    }
    for k in 0..state.lambda.len() {
        state.lambda_hat[k] += ratio * (state.lambda[k] - state.lambda_hat[k]);
    }
}

/// Per-round health report. Residuals are relative, floored at unit scale.
#[derive(Clone, Copy, Debug)]
pub struct RoundDiagnostics {
    /// Round just completed; the simulation state now sits at this index.
    pub t: u64,
    /// Stepsize used for the dual update of this round.
    pub beta: f64,
    /// `|sum_i nu_i - m|` after mixing.
    pub conservation_error: f64,
    /// Residual of the mean-payload recursion.
    pub mean_dual_residual: f64,
    /// Residual of the averaged-primal violation identity.
    pub violation_identity_residual: f64,
}

/// One wire-level transmission: sender's payload and weight, split by its
/// out-degree.
#[derive(Clone, Debug, PartialEq)]
pub struct Message {
    pub from: usize,
    pub to: usize,
    pub mu_share: Vec<f64>,
    pub nu_share: f64,
}

/// The messages one mixing round would put on the wire, self-deliveries
/// included, ordered by (from, to). Receiving node i sums the shares
/// addressed to it; that sum is its next `(u_i, nu_i)`.
pub fn round_messages(states: &[AgentState], snap: &DigraphSnapshot) -> Vec<Message> {
    let mut out = Vec::new();
    for from in 0..snap.node_count() {
        let share = 1.0 / snap.out_degree(from) as f64;
        let mu_share: Vec<f64> = states[from].mu.iter().map(|v| v * share).collect();
        let mut targets = vec![from];
        targets.extend(snap.edges().iter().filter(|e| e.0 == from).map(|e| e.1));
        targets.sort_unstable();
        for to in targets {
            out.push(Message { from, to, mu_share: mu_share.clone(), nu_share: share });
        }
    }
    out
}

/// A run in progress: the instance, the communication plan, the stepsizes,
/// and the per-agent states at the current round.
#[derive(Clone, Debug)]
pub struct Simulation {
    inst: ProblemInstance,
    schedule: GraphSchedule,
    stepsize: StepsizeSchedule,
    states: Vec<AgentState>,
    round: u64,
    sum_beta: f64,
    mean_dual0: Vec<f64>,
    parallel: bool,
}

impl Simulation {
    pub fn new(
        inst: ProblemInstance,
        schedule: GraphSchedule,
        stepsize: StepsizeSchedule,
        mu0: Option<&[Vec<f64>]>,
    ) -> Result<Self, Error> {
        if schedule.node_count() != inst.num_agents() {
            return Err(Error::Dimension(format!(
                "schedule has {} nodes, instance has {} agents",
                schedule.node_count(),
                inst.num_agents()
            )));
        }
        let states = initialize(&inst, mu0)?;
        let mean_dual0 = mean_of(states.iter().map(|s| s.mu.as_slice()), inst.coupling_dim());
        Ok(Simulation {
            inst,
            schedule,
            stepsize,
            states,
            round: 0,
            sum_beta: 0.0,
            mean_dual0,
            parallel: false,
        })
    }

    /// Run the per-agent primal/dual updates on a thread pool. Mixing and all
    /// reductions stay sequential, so results are bit-identical either way.
    pub fn set_parallel(&mut self, on: bool) {
        self.parallel = on;
    }

    pub fn instance(&self) -> &ProblemInstance {
        &self.inst
    }

    pub fn states(&self) -> &[AgentState] {
        &self.states
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    /// Sum of stepsizes applied so far.
    pub fn cumulative_beta(&self) -> f64 {
        self.sum_beta
    }

    /// Mean dual payload at round 0.
    pub fn initial_mean_dual(&self) -> &[f64] {
        &self.mean_dual0
    }

    /// Mean dual payload across agents, `mean(mu)[t]`.
    pub fn mean_dual(&self) -> Vec<f64> {
        mean_of(self.states.iter().map(|s| s.mu.as_slice()), self.inst.coupling_dim())
    }

    /// Advances one round and reports the round's diagnostics.
    pub fn step(&mut self) -> Result<RoundDiagnostics, Error> {
        let t = self.round;
        let m = self.inst.num_agents();
        let p = self.inst.coupling_dim();
        let beta = self.stepsize.beta(t + 1)?;
        let snap = self.schedule.snapshot(t);
        if snap.node_count() != m {
            return Err(Error::Dimension(format!(
                "snapshot at round {t} has {} nodes, expected {m}",
                snap.node_count()
            )));
        }
        let weights = build_weights(&snap);

        let mean_dual_prev = self.mean_dual();

        let mus: Vec<Vec<f64>> = self.states.iter().map(|s| s.mu.clone()).collect();
        let nus: Vec<f64> = self.states.iter().map(|s| s.nu).collect();
        let u_new = weights.mix_vectors(&mus);
        let nu_new = weights.mix_scalars(&nus);
        check_underflow(&nu_new, t + 1)?;

        let cum_beta = self.sum_beta + beta;
        let inst = &self.inst;
        let advance = |(i, (u, nu)): (usize, (Vec<f64>, f64))| {
            let agent = inst.agent(i);
            let lambda: Vec<f64> = u.iter().map(|v| v / nu).collect();
            let x = agent.local_argmin(&lambda);
            let g = agent.subgradient(&x);
            let mu: Vec<f64> = u.iter().zip(&g).map(|(uv, gv)| uv + beta * gv).collect();
            (u, nu, lambda, x, mu, g)
        };
        let work: Vec<(Vec<f64>, f64)> = u_new.into_iter().zip(nu_new).collect();
        let advanced: Vec<_> = if self.parallel {
            work.into_par_iter().enumerate().map(advance).collect()
        } else {
            work.into_iter().enumerate().map(advance).collect()
        };

        let mut sum_g = vec![0.0; p];
        for (i, (u, nu, lambda, x, mu, g)) in advanced.into_iter().enumerate() {
            for (acc, gv) in sum_g.iter_mut().zip(&g) {
                *acc += gv;
            }
            let s = &mut self.states[i];
            s.u = u;
            s.nu = nu;
            s.lambda = lambda;
            s.x = x;
            s.mu = mu;
            update_running_averages(s, beta, cum_beta);
        }
        self.sum_beta = cum_beta;
        self.round = t + 1;

        let conservation_error =
            (self.states.iter().map(|s| s.nu).sum::<f64>() - m as f64).abs();

        let mean_dual_new = self.mean_dual();
        let mut recursion_gap = 0.0;
        for k in 0..p {
            let predicted = mean_dual_prev[k] + beta / m as f64 * sum_g[k];
            recursion_gap += (mean_dual_new[k] - predicted).powi(2);
        }
        let mean_dual_residual =
            recursion_gap.sqrt() / norm(&mean_dual_new).max(1.0);

        Ok(RoundDiagnostics {
            t: t + 1,
            beta,
            conservation_error,
            mean_dual_residual,
            violation_identity_residual: self.violation_identity_residual(&mean_dual_new),
        })
    }

    /// Advances `rounds` rounds, collecting diagnostics.
    pub fn run(&mut self, rounds: u64) -> Result<Vec<RoundDiagnostics>, Error> {
        let mut out = Vec::with_capacity(rounds as usize);
        for _ in 0..rounds {
            out.push(self.step()?);
        }
        Ok(out)
    }

    /// Coupling residual of the averaged primal, `sum_i (A_i xhat_i - b_i)`.
    pub fn averaged_violation(&self) -> Vec<f64> {
        let xs: Vec<Vec<f64>> = self.states.iter().map(|s| s.x_hat.clone()).collect();
        self.inst.coupling_residual(&xs).expect("states match instance")
    }

    fn violation_identity_residual(&self, mean_dual_new: &[f64]) -> f64 {
        if self.sum_beta == 0.0 {
            return 0.0;
        }
        let lhs = self.averaged_violation();
        let m = self.inst.num_agents() as f64;
        let mut gap = 0.0;
        let mut rhs_sq = 0.0;
        for k in 0..lhs.len() {
            let rhs = m * (mean_dual_new[k] - self.mean_dual0[k]) / self.sum_beta;
            gap += (lhs[k] - rhs).powi(2);
            rhs_sq += rhs * rhs;
        }
        gap.sqrt() / norm(&lhs).max(rhs_sq.sqrt()).max(1.0)
    }
}

fn check_underflow(nus: &[f64], round: u64) -> Result<(), Error> {
    for (agent, &nu) in nus.iter().enumerate() {
        if nu < NU_UNDERFLOW {
            return Err(Error::PushSumUnderflow { agent, round });
        }
    }
    Ok(())
}

fn mean_of<'a>(vals: impl Iterator<Item = &'a [f64]>, p: usize) -> Vec<f64> {
    let mut acc = vec![0.0; p];
    let mut count = 0usize;
    for v in vals {
        for k in 0..p {
            acc[k] += v[k];
        }
        count += 1;
    }
    for a in acc.iter_mut() {
        *a /= count as f64;
    }
    acc
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
