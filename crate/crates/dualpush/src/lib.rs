//! Distributed dual decomposition over time-varying directed graphs.
//!
//! A network of agents minimizes a sum of private convex costs subject to a
//! shared linear equality constraint. No agent ever sees another's cost or
//! constraint block. Instead each agent runs weighted push-sum consensus on
//! its dual estimate, takes a local subgradient step in the dual, and keeps
//! stepsize-weighted running averages of its primal and dual iterates. With
//! square-summable stepsizes the averaged primal converges to an optimum of
//! the coupled problem and the constraint violation vanishes.
//!
//! ```
//! use dualpush::{
//!     graph::GraphSchedule,
//!     ieee57,
//!     pushsum::{Simulation, StepsizeSchedule},
//! };
//!
//! let mut sim = Simulation::new(
//!     ieee57::instance(),
//!     GraphSchedule::ring(7)?,
//!     StepsizeSchedule::inverse_sqrt(2.0)?,
//!     None,
//! )?;
//! sim.run(400)?;
//! let violation: f64 = sim.averaged_violation().iter().map(|v| v * v).sum::<f64>().sqrt();
//! assert!(violation < 20.0);
//! # Ok::<(), dualpush::Error>(())
//! ```

pub mod config;
pub mod experiment;
pub mod graph;
pub mod ieee57;
pub mod matrix;
pub mod metrics;
pub mod oracle;
pub mod problem;
pub mod pushsum;

pub use config::RunConfig;
pub use experiment::{run_experiment, verify_csv, ExperimentOutcome};
pub use graph::{DigraphSnapshot, GraphSchedule, WeightMatrix};
pub use matrix::Matrix;
pub use oracle::OracleResult;
pub use problem::{AgentProblem, BoxSet, DiagonalQuadratic, ProblemInstance};
pub use pushsum::{AgentState, Simulation, StepsizeSchedule};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    /// A push-sum weight collapsed below the representable floor, so dual
    /// ratios would be meaningless from here on.
    #[error("push-sum weight underflow at agent {agent} in round {round}")]
    PushSumUnderflow { agent: usize, round: u64 },

    /// A quantity the algorithm conserves by construction drifted past its
    /// tolerance; indicates a defect, not a modeling problem.
    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("oracle did not converge: coupling residual {residual:e}")]
    OracleNotConverged { residual: f64 },

    #[error("verification failed: {0}")]
    Verify(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

// Every code block in the guide compiles and runs with the doc tests, so the
// book cannot drift from the library.
#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            pub struct $name;
        };
    }

    chapter!(Overview, "../../../book/src/overview.md");
    chapter!(ProblemModel, "../../../book/src/problem.md");
    chapter!(CommunicationGraphs, "../../../book/src/graphs.md");
    chapter!(AnatomyOfARound, "../../../book/src/algorithm.md");
    chapter!(RunsTracesVerification, "../../../book/src/running.md");
    chapter!(ReferenceSolutions, "../../../book/src/reference.md");
    chapter!(RateCertificates, "../../../book/src/rates.md");
    chapter!(DispatchBenchmark, "../../../book/src/dispatch.md");
    chapter!(CommandLine, "../../../book/src/cli.md");
}
