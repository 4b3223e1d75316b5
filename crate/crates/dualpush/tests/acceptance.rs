//! One test per shipping criterion. Each prints a single PASS line with the
//! tolerance it enforced; a failure panics with the measurement that broke.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dualpush::config::RunConfig;
use dualpush::experiment::run_experiment;
use dualpush::graph::{check_b_strong_connectivity, DigraphSnapshot, GraphSchedule};
use dualpush::ieee57;
use dualpush::matrix::Matrix;
use dualpush::metrics::{
    envelope_check, gap_rate_statistic, objective_gap_bound, violation_rate_statistic,
    violation_squared_bound, worst_case_xi_eta,
};
use dualpush::oracle::{solve_general_small, solve_scalar_coupling, OracleResult};
use dualpush::problem::{scalar_agent, AgentProblem, BoxSet, DiagonalQuadratic, ProblemInstance};
use dualpush::pushsum::{Simulation, StepsizeSchedule};

const CONSERVATION_TOL: f64 = 1e-12;
const IDENTITY_TOL: f64 = 1e-9;
const EQUIVALENCE_TOL: f64 = 1e-12;
const SPREAD_FRACTION: f64 = 1e-3;
const DEMAND_FRACTION: f64 = 0.01;
const GAP_FRACTION: f64 = 0.005;
const ORACLE_CROSS_TOL: f64 = 1e-6;
const CONTRACTION_SLACK: f64 = 1e-9;
const SADDLE_SLACK: f64 = 1e-8;

const BENCH_C: f64 = 2.0;
const BENCH_ROUNDS: u64 = 1500;

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn consensus_spread(sim: &Simulation) -> f64 {
    let states = sim.states();
    let mut worst = 0.0f64;
    for i in 0..states.len() {
        for j in i + 1..states.len() {
            let d: f64 = states[i]
                .lambda
                .iter()
                .zip(&states[j].lambda)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            worst = worst.max(d.sqrt());
        }
    }
    worst
}

fn objective_of_averages(sim: &Simulation) -> f64 {
    let xs: Vec<Vec<f64>> = sim.states().iter().map(|s| s.x_hat.clone()).collect();
    sim.instance().evaluate_objective(&xs).unwrap()
}

/// Scalar-coupling instance with mixed curvatures, a flat agent every third
/// slot, and a strictly interior feasible point baked into the offsets.
fn synthetic_instance(m: usize) -> (ProblemInstance, Vec<Vec<f64>>) {
    let mut agents = Vec::with_capacity(m);
    let mut mu0 = Vec::with_capacity(m);
    for i in 0..m {
        let fi = i as f64;
        let alpha = 1.0 + 0.5 * (i % 2) as f64;
        let quad = if i % 3 == 0 { 0.0 } else { 0.4 + 0.07 * fi };
        let linear = 0.3 * fi - 1.0;
        let lower = -1.0 - (i % 4) as f64;
        let upper = lower + 6.0 + (i % 5) as f64;
        let interior = lower + 0.37 * (upper - lower);
        agents
            .push(scalar_agent(quad, linear, 0.0, lower, upper, alpha, alpha * interior).unwrap());
        mu0.push(vec![0.2 * fi - 0.5]);
    }
    (ProblemInstance::new(agents).unwrap(), mu0)
}

fn schedules_for(m: usize) -> Vec<(&'static str, GraphSchedule)> {
    vec![
        ("static ring", GraphSchedule::ring(m).unwrap()),
        ("ring rotation", GraphSchedule::RingRotation { m }),
        ("random window", GraphSchedule::random_window(m, 5, 20240817).unwrap()),
    ]
}

fn dispatch_sim() -> Simulation {
    Simulation::new(
        ieee57::instance(),
        GraphSchedule::ring(7).unwrap(),
        StepsizeSchedule::inverse_sqrt(BENCH_C).unwrap(),
        None,
    )
    .unwrap()
}

#[test]
fn criterion_01_push_sum_weight_conservation() {
    let started = Instant::now();
    for m in [2usize, 7, 20] {
        let (inst, mu0) = synthetic_instance(m);
        for (name, schedule) in schedules_for(m) {
            let mut sim = Simulation::new(
                inst.clone(),
                schedule,
                StepsizeSchedule::inverse_sqrt(1.0).unwrap(),
                Some(&mu0),
            )
            .unwrap();
            for _ in 0..10_000 {
                let diag = sim.step().unwrap();
                assert!(
                    diag.conservation_error <= CONSERVATION_TOL,
                    "m={m} {name}: weight total off by {:e} at round {}",
                    diag.conservation_error,
                    diag.t
                );
            }
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 5.0, "conservation sweep took {elapsed:.2}s, budget 5s");
    println!(
        "acceptance criterion 1: PASS - push-sum weight totals within {CONSERVATION_TOL:e} \
         over 10^4 rounds for 3 schedules x m in {{2, 7, 20}} ({elapsed:.2}s)"
    );
}

#[test]
fn criterion_02_dual_mean_and_violation_identities() {
    let mut rounds_checked = 0u64;
    for m in [2usize, 7, 20] {
        let (inst, mu0) = synthetic_instance(m);
        for (name, schedule) in schedules_for(m) {
            let mut sim = Simulation::new(
                inst.clone(),
                schedule,
                StepsizeSchedule::inverse_sqrt(1.0).unwrap(),
                Some(&mu0),
            )
            .unwrap();
            for _ in 0..10_000 {
                let diag = sim.step().unwrap();
                assert!(
                    diag.mean_dual_residual <= IDENTITY_TOL,
                    "m={m} {name}: mean-dual recursion residual {:e} at round {}",
                    diag.mean_dual_residual,
                    diag.t
                );
                assert!(
                    diag.violation_identity_residual <= IDENTITY_TOL,
                    "m={m} {name}: violation identity residual {:e} at round {}",
                    diag.violation_identity_residual,
                    diag.t
                );
                rounds_checked += 1;
            }
        }
    }
    let mut sim = dispatch_sim();
    for _ in 0..BENCH_ROUNDS {
        let diag = sim.step().unwrap();
        assert!(diag.mean_dual_residual <= IDENTITY_TOL);
        assert!(diag.violation_identity_residual <= IDENTITY_TOL);
        rounds_checked += 1;
    }
    println!(
        "acceptance criterion 2: PASS - mean-dual recursion and averaged-violation identity \
         residuals within {IDENTITY_TOL:e} over {rounds_checked} rounds"
    );
}

#[test]
fn criterion_03_single_agent_matches_centralized() {
    // one agent, two variables, two coupling rows
    let agent = AgentProblem::new(
        DiagonalQuadratic::new(vec![1.0, 0.5], vec![0.3, -0.7], 0.0).unwrap(),
        BoxSet::new(vec![-1.0, -1.0], vec![3.0, 2.0]).unwrap(),
        Matrix::from_rows(&[vec![1.0, 0.5], vec![-0.3, 2.0]]).unwrap(),
        vec![0.9, -0.4],
    )
    .unwrap();
    let inst = ProblemInstance::new(vec![agent]).unwrap();
    let mu0 = vec![vec![0.3, -0.8]];

    let mut sim = Simulation::new(
        inst.clone(),
        GraphSchedule::ring(1).unwrap(),
        StepsizeSchedule::inverse_sqrt(2.0).unwrap(),
        Some(&mu0),
    )
    .unwrap();

    // independent centralized dual subgradient loop, same initialization
    let a = inst.agent(0);
    let mut mu = mu0[0].clone();
    let mut x = a.local_argmin(&mu);
    let mut x_hat = x.clone();
    let mut lambda_hat = mu.clone();
    let mut sum_beta = 0.0;

    for t in 1..=500u64 {
        let beta = 2.0 / (t as f64).sqrt();
        let lambda = mu.clone();
        x = a.local_argmin(&lambda);
        let g = a.subgradient(&x);
        mu = mu.iter().zip(&g).map(|(m, gv)| m + beta * gv).collect();
        sum_beta += beta;
        let ratio = beta / sum_beta;
        for (h, v) in x_hat.iter_mut().zip(&x) {
            *h += ratio * (v - *h);
        }
        for (h, v) in lambda_hat.iter_mut().zip(&lambda) {
            *h += ratio * (v - *h);
        }

        sim.step().unwrap();
        let s = &sim.states()[0];
        assert_eq!(s.nu, 1.0, "round {t}: single-agent weight must stay exactly 1");
        for (name, ours, theirs) in [
            ("lambda", &s.lambda, &lambda),
            ("x", &s.x, &x),
            ("mu", &s.mu, &mu),
            ("x_hat", &s.x_hat, &x_hat),
            ("lambda_hat", &s.lambda_hat, &lambda_hat),
        ] {
            for (u, v) in ours.iter().zip(theirs) {
                assert!(
                    (u - v).abs() <= EQUIVALENCE_TOL,
                    "round {t}: {name} differs by {:e}",
                    (u - v).abs()
                );
            }
        }
    }
    println!(
        "acceptance criterion 3: PASS - m=1 trajectory matches a centralized dual subgradient \
         loop within {EQUIVALENCE_TOL:e} per iterate over 500 rounds"
    );
}

#[test]
fn criterion_04_dispatch_benchmark_accuracy() {
    let inst = ieee57::instance();
    let bisect = solve_scalar_coupling(&inst).unwrap();
    let ascent = solve_general_small(&inst, 50_000, 1.0).unwrap();
    assert!(
        (bisect.f_star - ascent.f_star).abs() <= ORACLE_CROSS_TOL * bisect.f_star.abs(),
        "objective cross-check: bisection {} vs ascent {}",
        bisect.f_star,
        ascent.f_star
    );
    assert!(
        (bisect.lambda_star[0] - ascent.lambda_star[0]).abs()
            <= ORACLE_CROSS_TOL * bisect.lambda_star[0].abs().max(1.0),
        "multiplier cross-check: bisection {} vs ascent {}",
        bisect.lambda_star[0],
        ascent.lambda_star[0]
    );

    let started = Instant::now();
    let mut sim = dispatch_sim();
    sim.run(BENCH_ROUNDS).unwrap();
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 2.0, "benchmark run took {elapsed:.2}s, budget 2s");

    let spread = consensus_spread(&sim);
    let spread_bound = SPREAD_FRACTION * bisect.lambda_star[0].abs().max(1.0);
    assert!(spread <= spread_bound, "consensus spread {spread:e} > {spread_bound:e}");

    let violation = l2(&sim.averaged_violation());
    let demand_bound = DEMAND_FRACTION * ieee57::TOTAL_DEMAND;
    assert!(
        violation <= demand_bound,
        "averaged generation misses demand by {violation}, allowed {demand_bound}"
    );

    let gap = objective_of_averages(&sim) - bisect.f_star;
    let gap_bound = GAP_FRACTION * bisect.f_star;
    assert!(gap <= gap_bound, "objective excess {gap} > {gap_bound}");

    // same benchmark over the one-edge-per-round rotating schedule: consensus
    // still reaches the spread target by the same round
    let mut rotating = Simulation::new(
        ieee57::instance(),
        GraphSchedule::RingRotation { m: 7 },
        StepsizeSchedule::inverse_sqrt(2.0).unwrap(),
        None,
    )
    .unwrap();
    rotating.run(BENCH_ROUNDS).unwrap();
    let rotating_spread = consensus_spread(&rotating);
    assert!(
        rotating_spread <= spread_bound,
        "rotating-schedule spread {rotating_spread:e} > {spread_bound:e}"
    );

    println!(
        "acceptance criterion 4: PASS - dispatch benchmark at round {BENCH_ROUNDS}: \
         spread {spread:.2e} (rotating {rotating_spread:.2e}) <= {spread_bound:.2e}, \
         demand miss {violation:.3} <= {demand_bound:.3}, \
         objective excess {gap:.3} <= {gap_bound:.3}, oracles agree to {ORACLE_CROSS_TOL:e} ({elapsed:.2}s)"
    );
}

#[test]
fn criterion_05_rate_envelopes() {
    let reference = solve_scalar_coupling(&ieee57::instance()).unwrap();
    let started = Instant::now();
    let mut sim = dispatch_sim();
    let mut gap_stats = Vec::with_capacity(10_000);
    let mut violation_stats = Vec::with_capacity(10_000);
    for _ in 0..10_000u64 {
        sim.step().unwrap();
        let t = sim.round();
        let gap = objective_of_averages(&sim) - reference.f_star;
        let violation = l2(&sim.averaged_violation());
        gap_stats.push((t, gap_rate_statistic(t, gap)));
        violation_stats.push((t, violation_rate_statistic(t, violation)));
    }
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 10.0, "envelope run took {elapsed:.2}s, budget 10s");

    // ceiling = max over the burn-in window [100, 500], floored at zero since
    // the decay statements bound the statistics from above only
    let gap_env = envelope_check(&gap_stats, 100, 500).unwrap();
    assert!(
        gap_env.holds,
        "gap statistic rose to {} after burn-in max {}",
        gap_env.later_max, gap_env.burn_in_max
    );
    let violation_env = envelope_check(&violation_stats, 100, 500).unwrap();
    assert!(
        violation_env.holds,
        "violation statistic rose to {} after burn-in max {}",
        violation_env.later_max, violation_env.burn_in_max
    );
    println!(
        "acceptance criterion 5: PASS - gap*sqrt(t)/(1+ln t) and violation^2*t/(1+ln t) stay \
         under their burn-in maxima through round 10^4 ({elapsed:.2}s)"
    );
}

#[test]
fn criterion_06_worst_case_bounds_hold() {
    let inst = ieee57::instance();
    let reference = solve_scalar_coupling(&inst).unwrap();
    let g_total = inst.subgradient_bound_total();
    let (m, p) = (inst.num_agents(), inst.coupling_dim());
    // the static ring is strongly connected every round, so the window is 1
    let (xi, eta) = worst_case_xi_eta(m, 1);
    // duals start at zero, so both initial-condition terms vanish
    let (mu_mean0_l1, mu0_l1_sum) = (0.0, 0.0);

    let mut sim = dispatch_sim();
    for _ in 0..BENCH_ROUNDS {
        sim.step().unwrap();
        let r = sim.round();
        if r < 2 {
            // the averaged point after r rounds is the bounds' horizon r-1,
            // which must be at least 1
            continue;
        }
        let gap = objective_of_averages(&sim) - reference.f_star;
        let violation = l2(&sim.averaged_violation());
        let gap_bound =
            objective_gap_bound(r - 1, BENCH_C, g_total, m, p, mu_mean0_l1, mu0_l1_sum, xi, eta);
        let violation_bound = violation_squared_bound(
            r - 1,
            BENCH_C,
            g_total,
            m,
            p,
            mu_mean0_l1,
            mu0_l1_sum,
            xi,
            eta,
        );
        assert!(gap <= gap_bound, "round {r}: gap {gap:e} exceeds bound {gap_bound:e}");
        assert!(
            violation * violation <= violation_bound,
            "round {r}: violation^2 {:e} exceeds bound {violation_bound:e}",
            violation * violation
        );
    }
    println!(
        "acceptance criterion 6: PASS - worst-case-constant gap and violation bounds hold at \
         every logged round of the benchmark run"
    );
}

#[test]
fn criterion_07_dual_contraction_inequality() {
    let inst = ieee57::instance();
    let reference = solve_scalar_coupling(&inst).unwrap();
    let g_each: Vec<f64> = inst.agents().iter().map(|a| a.subgradient_bound()).collect();
    let g_total: f64 = g_each.iter().sum();
    let m = inst.num_agents() as f64;
    let lambda_star = reference.lambda_star.clone();
    let x_star = reference.x_star.clone();
    let l_at_xstar = |mu_bar: &[f64]| inst.lagrangian(&x_star, mu_bar).unwrap();

    let mut sim = dispatch_sim();
    let mut mu_bar = sim.mean_dual();
    for _ in 0..BENCH_ROUNDS {
        let diag = sim.step().unwrap();
        let beta = diag.beta;
        let mu_bar_next = sim.mean_dual();

        let dist = |v: &[f64]| -> f64 {
            v.iter().zip(&lambda_star).map(|(a, b)| (a - b) * (a - b)).sum()
        };
        let lhs = dist(&mu_bar_next);

        let mut disagreement = 0.0;
        for (s, gi) in sim.states().iter().zip(&g_each) {
            let d: f64 =
                s.lambda.iter().zip(&mu_bar).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            disagreement += gi * d;
        }
        let xs: Vec<Vec<f64>> = sim.states().iter().map(|s| s.x.clone()).collect();
        let l_new = inst.lagrangian(&xs, &lambda_star).unwrap();
        let rhs = dist(&mu_bar) + 4.0 * beta / m * disagreement
            + (g_total * g_total) / (m * m) * beta * beta
            - 2.0 * beta / m * (l_new - l_at_xstar(&mu_bar));

        let slack = CONTRACTION_SLACK * lhs.abs().max(rhs.abs()).max(1.0);
        assert!(
            lhs <= rhs + slack,
            "round {}: contraction inequality off by {:e}",
            diag.t,
            lhs - rhs
        );
        mu_bar = mu_bar_next;
    }
    println!(
        "acceptance criterion 7: PASS - per-round dual contraction inequality holds with \
         {CONTRACTION_SLACK:e} relative slack across the benchmark run"
    );
}

fn saddle_probes(inst: &ProblemInstance, sol: &OracleResult, probes: usize, rng: &mut ChaCha8Rng) {
    let center = inst.lagrangian(&sol.x_star, &sol.lambda_star).unwrap();
    let lambda_scale = 2.0 * l2(&sol.lambda_star) + 10.0;
    for probe in 0..probes {
        let lambda: Vec<f64> =
            (0..inst.coupling_dim()).map(|_| (rng.gen::<f64>() * 2.0 - 1.0) * lambda_scale).collect();
        let x: Vec<Vec<f64>> = inst
            .agents()
            .iter()
            .map(|a| {
                (0..a.dim())
                    .map(|k| {
                        let (lo, hi) = (a.feasible().lower()[k], a.feasible().upper()[k]);
                        lo + rng.gen::<f64>() * (hi - lo)
                    })
                    .collect()
            })
            .collect();

        let dual_side = inst.lagrangian(&sol.x_star, &lambda).unwrap();
        let slack_d = SADDLE_SLACK * center.abs().max(dual_side.abs()).max(1.0);
        assert!(
            dual_side <= center + slack_d,
            "probe {probe}: multiplier {lambda:?} beats the saddle by {:e}",
            dual_side - center
        );

        let primal_side = inst.lagrangian(&x, &sol.lambda_star).unwrap();
        let slack_p = SADDLE_SLACK * center.abs().max(primal_side.abs()).max(1.0);
        assert!(
            primal_side >= center - slack_p,
            "probe {probe}: point beats the saddle by {:e}",
            center - primal_side
        );
    }
}

#[test]
fn criterion_08_oracle_saddle_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(7_251_923);

    let inst = ieee57::instance();
    let sol = solve_scalar_coupling(&inst).unwrap();
    saddle_probes(&inst, &sol, 1000, &mut rng);

    for case in 0..20 {
        let m = rng.gen_range(1..=10);
        let mut agents = Vec::with_capacity(m);
        for _ in 0..m {
            let alpha = 0.5 + rng.gen::<f64>() * 2.5;
            let quad = if rng.gen::<f64>() < 0.3 { 0.0 } else { 0.05 + rng.gen::<f64>() * 1.95 };
            let linear = rng.gen::<f64>() * 10.0 - 5.0;
            let lower = -5.0 * rng.gen::<f64>();
            let upper = lower + 0.5 + rng.gen::<f64>() * 14.5;
            let interior = lower + (0.15 + 0.7 * rng.gen::<f64>()) * (upper - lower);
            agents.push(
                scalar_agent(quad, linear, 0.0, lower, upper, alpha, alpha * interior).unwrap(),
            );
        }
        let inst = ProblemInstance::new(agents).unwrap();
        let demand: f64 = inst.agents().iter().map(|a| a.offset()[0]).sum();
        let sol = solve_scalar_coupling(&inst).unwrap();
        assert!(
            sol.converged(1e-8 * demand.abs().max(1.0)),
            "case {case}: oracle residual {:e}",
            sol.residual
        );
        saddle_probes(&inst, &sol, 1000, &mut rng);
    }
    println!(
        "acceptance criterion 8: PASS - saddle inequalities hold with {SADDLE_SLACK:e} relative \
         slack for 1000 probes on the dispatch benchmark and on 20 random feasible instances"
    );
}

#[test]
fn criterion_09_joint_connectivity_checker() {
    let horizon = 48;

    let cycle = GraphSchedule::ring(4).unwrap();
    assert_eq!(check_b_strong_connectivity(&cycle, 1, horizon).unwrap(), true);

    let forward = DigraphSnapshot::new(3, vec![(0, 1), (1, 2)]).unwrap();
    let back = DigraphSnapshot::new(3, vec![(2, 0)]).unwrap();
    let alternating = GraphSchedule::periodic(vec![forward, back]).unwrap();
    assert_eq!(check_b_strong_connectivity(&alternating, 2, horizon).unwrap(), true);
    assert_eq!(check_b_strong_connectivity(&alternating, 1, horizon).unwrap(), false);

    let disconnected = GraphSchedule::Static {
        snapshot: DigraphSnapshot::new(4, vec![(0, 1), (1, 0)]).unwrap(),
    };
    for b in 1..=8 {
        assert_eq!(
            check_b_strong_connectivity(&disconnected, b, horizon).unwrap(),
            false,
            "window {b}"
        );
    }
    println!(
        "acceptance criterion 9: PASS - joint-connectivity checker agrees on the cycle, the \
         alternating two-snapshot schedule, and the disconnected graph"
    );
}

#[test]
fn criterion_10_deterministic_traces() {
    let dir = tempfile::tempdir().unwrap();
    let config_for = |name: &str, parallel: bool| -> RunConfig {
        let text = format!(
            r#"
iterations = 500
parallel = {parallel}
[problem]
builtin = "ieee57"
[schedule]
kind = "random-window"
B = 4
seed = 99
[stepsize]
kind = "inverse-sqrt"
c = 2.0
[outputs]
csv = {path:?}
"#,
            path = dir.path().join(name),
        );
        RunConfig::parse(&text).unwrap()
    };

    run_experiment(&config_for("a.csv", false)).unwrap();
    run_experiment(&config_for("b.csv", false)).unwrap();
    run_experiment(&config_for("c.csv", true)).unwrap();

    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b.csv")).unwrap();
    let c = std::fs::read(dir.path().join("c.csv")).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b, "two sequential runs disagree");
    assert_eq!(a, c, "parallel run disagrees with sequential");
    println!(
        "acceptance criterion 10: PASS - repeated runs and a fully parallel run produce \
         byte-identical traces"
    );
}
