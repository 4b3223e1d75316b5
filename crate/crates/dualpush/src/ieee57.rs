//! Economic dispatch benchmark on the seven generators of the IEEE 57-bus
//! test system. Each agent owns one generator with quadratic cost
//! `a x^2 + b x` and capacity box `[0, cap]`; the single coupling constraint
//! balances generation against the 1575.88 MW system demand, split across
//! agents so each contributes its own offset.

use crate::problem::{scalar_agent, ProblemInstance};

/// Per-generator `(a, b, cap, demand_share)` rows; costs in $/h with x in MW.
const GENERATORS: [(f64, f64, f64, f64); 7] = [
    (0.077_579_5, 20.0, 575.88, 241.0712),
    (0.01, 40.0, 100.0, 100.0),
    (0.25, 20.0, 140.0, 74.8088),
    (0.01, 40.0, 100.0, 100.0),
    (0.022_222_2, 20.0, 550.0, 550.0),
    (0.01, 40.0, 100.0, 100.0),
    (0.032_258_1, 20.0, 410.0, 410.0),
];

pub const TOTAL_DEMAND: f64 = 1575.88;

pub fn instance() -> ProblemInstance {
    let agents = GENERATORS
        .iter()
        .map(|&(a, b, cap, share)| {
            scalar_agent(a, b, 0.0, 0.0, cap, 1.0, share).expect("constants are valid")
        })
        .collect();
    ProblemInstance::new(agents).expect("seven compatible agents")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::solve_scalar_coupling;

    #[test]
    fn shares_sum_to_total_demand() {
        let total: f64 = GENERATORS.iter().map(|g| g.3).sum();
        assert!((total - TOTAL_DEMAND).abs() <= 1e-9);
    }

    #[test]
    fn instance_shape() {
        let inst = instance();
        assert_eq!(inst.num_agents(), 7);
        assert_eq!(inst.coupling_dim(), 1);
        assert!((inst.subgradient_bound_total() - 1669.6176).abs() <= 1e-9);
    }

    #[test]
    fn optimum_loads_two_marginal_generators() {
        // At the optimum generators 2..7 (all but 1 and 3) run at capacity;
        // generators 1 and 3 share the remaining load at one marginal price.
        // Both have linear cost 20, so the price fixes both interior outputs.
        let inst = instance();
        let sol = solve_scalar_coupling(&inst).unwrap();
        assert!(sol.converged(1e-8));

        let (a1, b1, _, d1) = GENERATORS[0];
        let (a3, _, _, d3) = GENERATORS[2];
        let slope = 1.0 / (2.0 * a1) + 1.0 / (2.0 * a3);
        let lambda_expected = -(b1 + (d1 + d3) / slope);
        assert!((sol.lambda_star[0] - lambda_expected).abs() <= 1e-9);

        let x1 = (-b1 - lambda_expected) / (2.0 * a1);
        let x3 = (-b1 - lambda_expected) / (2.0 * a3);
        assert!((sol.x_star[0][0] - x1).abs() <= 1e-8);
        assert!((sol.x_star[2][0] - x3).abs() <= 1e-8);
        for i in [1, 4, 5, 6] {
            assert_eq!(sol.x_star[i][0], GENERATORS[i].2, "generator {i} at capacity");
        }

        // the nominal demand split is feasible, therefore no cheaper
        let demand_point: Vec<Vec<f64>> = GENERATORS.iter().map(|g| vec![g.3]).collect();
        let f_at_split = inst.evaluate_objective(&demand_point).unwrap();
        let excess = f_at_split - sol.f_star;
        assert!((-1e-9..1e-3).contains(&excess), "split costs {excess} more");
        assert!((sol.f_star - 55_870.0).abs() < 1.0);
    }
}
