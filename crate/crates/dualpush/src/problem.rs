//! Separable convex problems with coupling equality constraints.
//!
//! The problem class looks like
//!
//! ```text
//!   minimize    sum_i f_i(x_i)
//!   subject to  sum_i (A_i x_i - b_i) = 0,     x_i in X_i,
//! ```
//!
//! where each `f_i` is a diagonal convex quadratic, each `X_i` is a compact
//! box, `A_i` is a p x n_i coupling matrix and `b_i` a local offset of the
//! shared p-dimensional resource constraint. Everything an agent needs to
//! participate in dual decomposition lives here: evaluating its cost, the
//! closed-form minimizer of its Lagrangian for a fixed multiplier, the
//! constraint subgradient `A_i x_i - b_i`, and an a-priori bound on its norm.

use crate::matrix::Matrix;
use crate::Error;

/// f(x) = sum_k quad[k] x_k^2 + linear[k] x_k, plus a constant.
/// Convexity requires every `quad[k] >= 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagonalQuadratic {
    quad: Vec<f64>,
    linear: Vec<f64>,
    constant: f64,
}

impl DiagonalQuadratic {
    pub fn new(quad: Vec<f64>, linear: Vec<f64>, constant: f64) -> Result<Self, Error> {
        if quad.len() != linear.len() {
            return Err(Error::Dimension(format!(
                "quadratic has {} coefficients, linear has {}",
                quad.len(),
                linear.len()
            )));
        }
        for (k, &a) in quad.iter().enumerate() {
            if !a.is_finite() || a < 0.0 {
                return Err(Error::Infeasible(format!(
                    "quadratic coefficient {k} is {a}; must be finite and nonnegative"
                )));
            }
        }
        if linear.iter().any(|v| !v.is_finite()) || !constant.is_finite() {
            return Err(Error::Infeasible("objective coefficients must be finite".into()));
        }
        Ok(DiagonalQuadratic { quad, linear, constant })
    }

    pub fn dim(&self) -> usize {
        self.quad.len()
    }

    pub fn quad(&self) -> &[f64] {
        &self.quad
    }

    pub fn linear(&self) -> &[f64] {
        &self.linear
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        let mut v = self.constant;
        for k in 0..self.quad.len() {
            v += self.quad[k] * x[k] * x[k] + self.linear[k] * x[k];
        }
        v
    }
}

/// Compact box `[lower_k, upper_k]` per coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxSet {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxSet {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, Error> {
        if lower.len() != upper.len() {
            return Err(Error::Dimension(format!(
                "box has {} lower and {} upper bounds",
                lower.len(),
                upper.len()
            )));
        }
        for k in 0..lower.len() {
            if !lower[k].is_finite() || !upper[k].is_finite() {
                return Err(Error::Infeasible(format!("box bounds {k} must be finite")));
            }
            if lower[k] > upper[k] {
                return Err(Error::Infeasible(format!(
                    "box is empty in coordinate {k}: [{}, {}]",
                    lower[k], upper[k]
                )));
            }
        }
        Ok(BoxSet { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn clamp(&self, k: usize, v: f64) -> f64 {
        v.max(self.lower[k]).min(self.upper[k])
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .enumerate()
                .all(|(k, &v)| v >= self.lower[k] && v <= self.upper[k])
    }

    pub fn midpoint(&self, k: usize) -> f64 {
        0.5 * (self.lower[k] + self.upper[k])
    }

    pub fn radius(&self, k: usize) -> f64 {
        0.5 * (self.upper[k] - self.lower[k])
    }
}

/// One agent's private data: objective, feasible box, and its slice of the
/// coupling constraint.
#[derive(Clone, Debug)]
pub struct AgentProblem {
    objective: DiagonalQuadratic,
    feasible: BoxSet,
    coupling: Matrix,
    offset: Vec<f64>,
}

impl AgentProblem {
    pub fn new(
        objective: DiagonalQuadratic,
        feasible: BoxSet,
        coupling: Matrix,
        offset: Vec<f64>,
    ) -> Result<Self, Error> {
        let n = objective.dim();
        if feasible.dim() != n {
            return Err(Error::Dimension(format!(
                "objective has dimension {n}, box has {}",
                feasible.dim()
            )));
        }
        if coupling.cols() != n {
            return Err(Error::Dimension(format!(
                "coupling matrix has {} columns, expected {n}",
                coupling.cols()
            )));
        }
        if coupling.rows() != offset.len() {
            return Err(Error::Dimension(format!(
                "coupling matrix has {} rows, offset has {}",
                coupling.rows(),
                offset.len()
            )));
        }
        Ok(AgentProblem { objective, feasible, coupling, offset })
    }

    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    pub fn coupling_dim(&self) -> usize {
        self.offset.len()
    }

    pub fn objective(&self) -> &DiagonalQuadratic {
        &self.objective
    }

    pub fn feasible(&self) -> &BoxSet {
        &self.feasible
    }

    pub fn coupling(&self) -> &Matrix {
        &self.coupling
    }

    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    /// Minimizes `f_i(x) + lambda' (A_i x - b_i)` over the box, coordinate by
    /// coordinate. With `e = linear + A' lambda` the unconstrained stationary
    /// point of coordinate k is `-e_k / (2 quad_k)`, clamped to the box; a
    /// linear coordinate (`quad_k = 0`) goes to the lower bound when `e_k > 0`,
    /// to the upper bound when `e_k < 0`, and stays at the lower bound on an
    /// exact tie.
    pub fn local_argmin(&self, lambda: &[f64]) -> Vec<f64> {
        debug_assert_eq!(lambda.len(), self.coupling_dim());
        let shift = self.coupling.t_mul_vec(lambda);
        let mut x = vec![0.0; self.dim()];
        for k in 0..self.dim() {
            let e = self.objective.linear[k] + shift[k];
            let a = self.objective.quad[k];
            x[k] = if a > 0.0 {
                self.feasible.clamp(k, -e / (2.0 * a))
            } else if e > 0.0 {
                self.feasible.lower[k]
            } else if e < 0.0 {
                self.feasible.upper[k]
            } else {
                self.feasible.lower[k]
            };
        }
        x
    }

    /// The agent's contribution `A_i x - b_i` to the coupling constraint,
    /// which is also a subgradient of its concave dual increment.
    pub fn subgradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = self.coupling.mul_vec(x);
        for (gk, bk) in g.iter_mut().zip(&self.offset) {
            *gk -= bk;
        }
        g
    }

    /// Interval bound `G_i >= sup { ||A_i x - b_i|| : x in X_i }` (Euclidean
    /// norm). Row r is bounded by `|A_r m - b_r| + sum_k |A_rk| rad_k` with m
    /// the box midpoint and rad the coordinate radii; the row bounds are then
    /// combined in the 2-norm. Never underestimates.
    pub fn subgradient_bound(&self) -> f64 {
        let p = self.coupling_dim();
        let mut sq = 0.0;
        for r in 0..p {
            let row = self.coupling.row(r);
            let mut center = -self.offset[r];
            let mut spread = 0.0;
            for k in 0..self.dim() {
                center += row[k] * self.feasible.midpoint(k);
                spread += row[k].abs() * self.feasible.radius(k);
            }
            let bound = center.abs() + spread;
            sq += bound * bound;
        }
        sq.sqrt()
    }

    /// f_i(x) + lambda' (A_i x - b_i)
    pub fn lagrangian(&self, x: &[f64], lambda: &[f64]) -> f64 {
        let g = self.subgradient(x);
        let mut v = self.objective.value(x);
        for (lk, gk) in lambda.iter().zip(&g) {
            v += lk * gk;
        }
        v
    }
}

/// The whole coupled problem: every agent plus the shared constraint
/// dimension. Feasibility of the coupling constraint itself is certified by
/// the ground-truth solvers in [`crate::oracle`], not here.
#[derive(Clone, Debug)]
pub struct ProblemInstance {
    agents: Vec<AgentProblem>,
    coupling_dim: usize,
}

impl ProblemInstance {
    pub fn new(agents: Vec<AgentProblem>) -> Result<Self, Error> {
        if agents.is_empty() {
            return Err(Error::Dimension("an instance needs at least one agent".into()));
        }
        let p = agents[0].coupling_dim();
        for (i, a) in agents.iter().enumerate() {
            if a.coupling_dim() != p {
                return Err(Error::Dimension(format!(
                    "agent {i} couples {} constraint rows, agent 0 couples {p}",
                    a.coupling_dim()
                )));
            }
        }
        Ok(ProblemInstance { agents, coupling_dim: p })
    }

    pub fn agents(&self) -> &[AgentProblem] {
        &self.agents
    }

    pub fn agent(&self, i: usize) -> &AgentProblem {
        &self.agents[i]
    }

    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn coupling_dim(&self) -> usize {
        self.coupling_dim
    }

    /// sum_i f_i(x_i), accumulated in agent order.
    pub fn evaluate_objective(&self, xs: &[Vec<f64>]) -> Result<f64, Error> {
        self.check_point_dims(xs)?;
        let mut v = 0.0;
        for (a, x) in self.agents.iter().zip(xs) {
            v += a.objective.value(x);
        }
        Ok(v)
    }

    /// sum_i (A_i x_i - b_i), the coupling constraint residual at x.
    pub fn coupling_residual(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>, Error> {
        self.check_point_dims(xs)?;
        let mut total = vec![0.0; self.coupling_dim];
        for (a, x) in self.agents.iter().zip(xs) {
            let g = a.subgradient(x);
            for (tk, gk) in total.iter_mut().zip(&g) {
                *tk += gk;
            }
        }
        Ok(total)
    }

    /// Full Lagrangian L(x, lambda) with one shared multiplier.
    pub fn lagrangian(&self, xs: &[Vec<f64>], lambda: &[f64]) -> Result<f64, Error> {
        self.check_point_dims(xs)?;
        if lambda.len() != self.coupling_dim {
            return Err(Error::Dimension(format!(
                "multiplier has dimension {}, constraint has {}",
                lambda.len(),
                self.coupling_dim
            )));
        }
        let mut v = 0.0;
        for (a, x) in self.agents.iter().zip(xs) {
            v += a.lagrangian(x, lambda);
        }
        Ok(v)
    }

    /// sum_i G_i over the per-agent subgradient bounds.
    pub fn subgradient_bound_total(&self) -> f64 {
        self.agents.iter().map(AgentProblem::subgradient_bound).sum()
    }

    fn check_point_dims(&self, xs: &[Vec<f64>]) -> Result<(), Error> {
        if xs.len() != self.agents.len() {
            return Err(Error::Dimension(format!(
                "{} points supplied for {} agents",
                xs.len(),
                self.agents.len()
            )));
        }
        for (i, (a, x)) in self.agents.iter().zip(xs).enumerate() {
            if x.len() != a.dim() {
                return Err(Error::Dimension(format!(
                    "agent {i} point has dimension {}, expected {}",
                    x.len(),
                    a.dim()
                )));
            }
        }
        Ok(())
    }
}

/// Scalar-coupling helper: one decision variable, 1x1 coupling `[alpha]`,
/// scalar offset. This is the shape of economic dispatch instances.
pub fn scalar_agent(
    quad: f64,
    linear: f64,
    constant: f64,
    lower: f64,
    upper: f64,
    alpha: f64,
    offset: f64,
) -> Result<AgentProblem, Error> {
    AgentProblem::new(
        DiagonalQuadratic::new(vec![quad], vec![linear], constant)?,
        BoxSet::new(vec![lower], vec![upper])?,
        Matrix::scalar(alpha),
        vec![offset],
    )
}
