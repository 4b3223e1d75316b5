//! TOML run configuration. A file names the problem (a builtin benchmark or
//! inline agents), the communication schedule, the stepsize rule, optional
//! initial duals and stopping tolerances, and where outputs go. Edge
//! endpoints in files are 1-based; everything internal is 0-based.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::graph::{DigraphSnapshot, GraphSchedule};
use crate::ieee57;
use crate::matrix::Matrix;
use crate::problem::{AgentProblem, BoxSet, DiagonalQuadratic, ProblemInstance};
use crate::pushsum::StepsizeSchedule;
use crate::Error;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub iterations: u64,
    /// Evaluate per-agent work on a thread pool. Output is bit-identical to
    /// the sequential mode; only wall time changes.
    #[serde(default)]
    pub parallel: bool,
    /// Initial duals: the string "zero" (the default) or one vector per
    /// agent. Top-level value, so in a file it must precede the first table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu0: Option<Mu0Config>,
    pub problem: ProblemConfig,
    pub schedule: ScheduleConfig,
    pub stepsize: StepsizeConfig,
    pub outputs: OutputsConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<TolerancesConfig>,
}

/// Exactly one of `builtin` and `agents` must be given.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agents: Option<Vec<AgentConfig>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub quad: Vec<f64>,
    pub linear: Vec<f64>,
    #[serde(default)]
    pub constant: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Row-major coupling block, one row per coupling constraint.
    pub coupling: Vec<Vec<f64>>,
    pub offset: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScheduleConfig {
    /// Fixed digraph; omitting `edges` means the directed ring. `m` is
    /// optional everywhere and must match the agent count when present.
    Static {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        m: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        edges: Option<Vec<[usize; 2]>>,
    },
    RingRotation {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        m: Option<usize>,
    },
    RandomWindow {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        m: Option<usize>,
        /// Window length over which every round's union graph must connect.
        #[serde(rename = "B")]
        b: u64,
        seed: u64,
    },
    Periodic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        m: Option<usize>,
        snapshots: Vec<Vec<[usize; 2]>>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StepsizeConfig {
    InverseSqrt { c: f64 },
    /// Supported for experiments; does not satisfy the decay conditions the
    /// convergence guarantees need, so runs warn about it.
    Constant { c: f64 },
    Custom { values: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Mu0Config {
    Keyword(Mu0Keyword),
    /// One vector per agent, each of the coupling dimension.
    Explicit(Vec<Vec<f64>>),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mu0Keyword {
    Zero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsConfig {
    pub csv: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<PathBuf>,
}

/// Early-exit thresholds; the run stops once consensus spread and averaged
/// violation are both below their bounds in the same round.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TolerancesConfig {
    pub consensus: f64,
    pub violation: f64,
}

pub fn load_config(path: &Path) -> Result<RunConfig, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    RunConfig::parse(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

impl RunConfig {
    /// Parses and fully validates: every builder below is exercised so a bad
    /// file fails here, not mid-run.
    pub fn parse(text: &str) -> Result<Self, Error> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Re-runs all structural checks; call again after mutating a parsed
    /// config (command line overrides do).
    pub fn validate(&self) -> Result<(), Error> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        let inst = self.build_instance()?;
        self.build_schedule(inst.num_agents())?;
        self.build_stepsizes()?;
        self.initial_duals(&inst)?;
        if let Some(tol) = &self.tolerances {
            if !(tol.consensus > 0.0 && tol.violation > 0.0) {
                return Err(Error::Config("tolerances must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn build_instance(&self) -> Result<ProblemInstance, Error> {
        match (&self.problem.builtin, &self.problem.agents) {
            (Some(name), None) => match name.as_str() {
                "ieee57" => Ok(ieee57::instance()),
                other => Err(Error::Config(format!("unknown builtin problem {other:?}"))),
            },
            (None, Some(agents)) => {
                let built = agents
                    .iter()
                    .enumerate()
                    .map(|(i, a)| {
                        build_agent(a).map_err(|e| Error::Config(format!("agents[{i}]: {e}")))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                ProblemInstance::new(built)
            }
            (Some(_), Some(_)) => {
                Err(Error::Config("problem: give either builtin or agents, not both".into()))
            }
            (None, None) => Err(Error::Config("problem: needs builtin or agents".into())),
        }
    }

    pub fn build_schedule(&self, num_agents: usize) -> Result<GraphSchedule, Error> {
        let check_m = |m: &Option<usize>| -> Result<(), Error> {
            match m {
                Some(v) if *v != num_agents => Err(Error::Config(format!(
                    "schedule.m is {v} but the problem has {num_agents} agents"
                ))),
                _ => Ok(()),
            }
        };
        match &self.schedule {
            ScheduleConfig::Static { m, edges } => {
                check_m(m)?;
                match edges {
                    None => GraphSchedule::ring(num_agents),
                    Some(list) => {
                        let snapshot = snapshot_from_config(num_agents, list)?;
                        Ok(GraphSchedule::Static { snapshot })
                    }
                }
            }
            ScheduleConfig::RingRotation { m } => {
                check_m(m)?;
                Ok(GraphSchedule::RingRotation { m: num_agents })
            }
            ScheduleConfig::RandomWindow { m, b, seed } => {
                check_m(m)?;
                GraphSchedule::random_window(num_agents, *b, *seed)
            }
            ScheduleConfig::Periodic { m, snapshots } => {
                check_m(m)?;
                let snaps = snapshots
                    .iter()
                    .map(|list| snapshot_from_config(num_agents, list))
                    .collect::<Result<Vec<_>, _>>()?;
                GraphSchedule::periodic(snaps)
            }
        }
    }

    pub fn build_stepsizes(&self) -> Result<StepsizeSchedule, Error> {
        match &self.stepsize {
            StepsizeConfig::InverseSqrt { c } => StepsizeSchedule::inverse_sqrt(*c),
            StepsizeConfig::Constant { c } => StepsizeSchedule::constant(*c),
            StepsizeConfig::Custom { values } => {
                if (values.len() as u64) < self.iterations {
                    return Err(Error::Config(format!(
                        "stepsize.values has {} entries but iterations is {}",
                        values.len(),
                        self.iterations
                    )));
                }
                StepsizeSchedule::table(values.clone())
            }
        }
    }

    /// Initial duals, or `None` for all zeros.
    pub fn initial_duals(&self, inst: &ProblemInstance) -> Result<Option<Vec<Vec<f64>>>, Error> {
        match &self.mu0 {
            None | Some(Mu0Config::Keyword(Mu0Keyword::Zero)) => Ok(None),
            Some(Mu0Config::Explicit(rows)) => {
                if rows.len() != inst.num_agents() {
                    return Err(Error::Config(format!(
                        "mu0 has {} rows for {} agents",
                        rows.len(),
                        inst.num_agents()
                    )));
                }
                for (i, r) in rows.iter().enumerate() {
                    if r.len() != inst.coupling_dim() {
                        return Err(Error::Config(format!(
                            "mu0[{i}] has length {} but the coupling dimension is {}",
                            r.len(),
                            inst.coupling_dim()
                        )));
                    }
                    if r.iter().any(|v| !v.is_finite()) {
                        return Err(Error::Config(format!("mu0[{i}] is not finite")));
                    }
                }
                Ok(Some(rows.clone()))
            }
        }
    }
}

fn build_agent(a: &AgentConfig) -> Result<AgentProblem, Error> {
    let objective = DiagonalQuadratic::new(a.quad.clone(), a.linear.clone(), a.constant)?;
    let feasible = BoxSet::new(a.lower.clone(), a.upper.clone())?;
    let coupling = Matrix::from_rows(&a.coupling)?;
    AgentProblem::new(objective, feasible, coupling, a.offset.clone())
}

/// Converts 1-based `[tail, head]` pairs to an internal snapshot.
fn snapshot_from_config(m: usize, edges: &[[usize; 2]]) -> Result<DigraphSnapshot, Error> {
    let mut converted = Vec::with_capacity(edges.len());
    for &[from, to] in edges {
        if from == 0 || to == 0 || from > m || to > m {
            return Err(Error::Config(format!(
                "edge [{from}, {to}] is outside 1..={m}"
            )));
        }
        if from == to {
            return Err(Error::Config(format!("edge [{from}, {to}] is a self-loop")));
        }
        converted.push((from - 1, to - 1));
    }
    DigraphSnapshot::new(m, converted)
}
