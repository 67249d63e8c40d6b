//! Experiment configuration: a TOML document describing the graph, the
//! agents, the algorithm, gains, initial state and outputs.

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use nsalloc_core::dynamics::DynState;
use nsalloc_core::{Agent, Algorithm, ConvexSet, CostFunction, CostTerm, Digraph, DynParams, Edge, Halfspace, Problem};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub algorithm: Algorithm,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub verify: bool,
    pub graph: GraphConfig,
    pub agents: Vec<AgentConfig>,
    pub params: ParamsConfig,
    #[serde(default)]
    pub initial: InitialState,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    pub nodes: usize,
    #[serde(default)]
    pub undirected: bool,
    pub edges: Vec<Edge>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub resource: Vec<f64>,
    pub strong_convexity: f64,
    pub set: SetConfig,
    pub cost: Vec<TermConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SetConfig {
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    Polyhedron { rows: Vec<HalfspaceConfig> },
    Product { parts: Vec<SetConfig> },
    WholeSpace { dim: usize },
}

/// `normal . y <= offset`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HalfspaceConfig {
    pub normal: Vec<f64>,
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum TermConfig {
    /// `y^T Q y + b^T y + c`, `q` given row by row.
    Quadratic {
        q: Vec<Vec<f64>>,
        b: Vec<f64>,
        #[serde(default)]
        c: f64,
    },
    NormKink {
        weight: f64,
        anchor: Vec<f64>,
    },
    LogSumExpPair {
        scale: f64,
    },
    RationalSaturation {
        denomscale: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub gains: Gains,
    #[serde(default = "default_step")]
    pub step_size: f64,
    #[serde(default = "default_horizon")]
    pub max_time: f64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
}

fn default_step() -> f64 {
    1e-3
}

fn default_horizon() -> f64 {
    30.0
}

fn default_record_every() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Gains {
    Auto(AutoKeyword),
    Fixed { k1: f64, k2: f64, k3: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoKeyword {
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialState {
    #[default]
    Zeros,
    /// `x = s = 0`, `w = (10, 10, 10, 0)` on four scalar agents.
    DispatchAlg2,
    /// `x` uniform within `scale` of each resource, `s = 0`, zero-sum `w`.
    Random {
        scale: f64,
    },
    Explicit {
        x: Vec<f64>,
        s: Vec<f64>,
        w: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "yes")]
    pub csv: bool,
    #[serde(default = "yes")]
    pub summary: bool,
    #[serde(default)]
    pub lyapunov: bool,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn yes() -> bool {
    true
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: default_dir(), csv: true, summary: true, lyapunov: false }
    }
}

fn vector(v: &[f64]) -> DVector<f64> {
    DVector::from_row_slice(v)
}

fn invalid(agent: usize, what: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("agent {agent}: {what}"))
}

impl SetConfig {
    pub fn build(&self) -> ConvexSet {
        match self {
            SetConfig::Box { lower, upper } => ConvexSet::Box { lower: vector(lower), upper: vector(upper) },
            SetConfig::Ball { center, radius } => ConvexSet::Ball { center: vector(center), radius: *radius },
            SetConfig::Polyhedron { rows } => ConvexSet::Polyhedron {
                rows: rows.iter().map(|r| Halfspace::new(vector(&r.normal), r.offset)).collect(),
            },
            SetConfig::Product { parts } => ConvexSet::Product { parts: parts.iter().map(SetConfig::build).collect() },
            SetConfig::WholeSpace { dim } => ConvexSet::WholeSpace { dim: *dim },
        }
    }
}

impl TermConfig {
    fn build(&self, agent: usize) -> Result<CostTerm, CliError> {
        Ok(match self {
            TermConfig::Quadratic { q, b, c } => {
                let d = b.len();
                if q.len() != d || q.iter().any(|row| row.len() != d) {
                    return Err(invalid(agent, format!("quadratic term needs a {d}x{d} matrix")));
                }
                CostTerm::Quadratic { q: DMatrix::from_fn(d, d, |i, j| q[i][j]), b: vector(b), c: *c }
            }
            TermConfig::NormKink { weight, anchor } => {
                CostTerm::WeightedNormKink { weight: *weight, anchor: vector(anchor) }
            }
            TermConfig::LogSumExpPair { scale } => CostTerm::LogSumExpPair { scale: *scale },
            TermConfig::RationalSaturation { denomscale } => CostTerm::RationalSaturation { denomscale: *denomscale },
        })
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs always serialize")
    }

    pub fn graph(&self) -> Result<Digraph, CliError> {
        Digraph::from_edges(self.graph.nodes, &self.graph.edges, self.graph.undirected)
            .map_err(|e| CliError::Validation(format!("graph: {e}")))
    }

    pub fn agents(&self) -> Result<Vec<Agent>, CliError> {
        self.agents
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let dim = a.resource.len();
                let terms = a.cost.iter().map(|t| t.build(i)).collect::<Result<Vec<_>, _>>()?;
                let cost = CostFunction::new(dim, terms, a.strong_convexity).map_err(|e| invalid(i, e))?;
                Ok(Agent { cost, set: a.set.build(), resource: vector(&a.resource) })
            })
            .collect()
    }

    pub fn problem(&self) -> Result<Problem, CliError> {
        Problem::new(self.agents()?, self.graph()?).map_err(|e| CliError::Validation(e.to_string()))
    }

    /// Gains as configured, with `auto` resolved to 1.05 times the bounds and
    /// `k3 = 1`.
    pub fn gains(&self, problem: &Problem) -> Result<(f64, f64, f64), CliError> {
        match self.params.gains {
            Gains::Fixed { k1, k2, k3 } => Ok((k1, k2, k3)),
            Gains::Auto(_) => {
                let b = problem.parameter_bounds(self.algorithm).map_err(|e| CliError::Validation(e.to_string()))?;
                let k1 = if b.k1_min > 0.0 { 1.05 * b.k1_min } else { 1.0 };
                let k2 = 1.05 * b.k2_min(k1);
                Ok((k1, if k2 > 0.0 { k2 } else { 1.0 }, 1.0))
            }
        }
    }

    pub fn dyn_params(&self, problem: &Problem) -> Result<DynParams, CliError> {
        let params = DynParams::from_gains(self.gains(problem)?)
            .with_step(self.params.step_size)
            .with_horizon(self.params.max_time)
            .with_record_every(self.params.record_every);
        params.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        Ok(params)
    }

    pub fn initial_state(&self, problem: &Problem) -> Result<DynState, CliError> {
        let len = problem.stacked_len();
        let zero = DVector::zeros(len);
        let state = match &self.initial {
            InitialState::Zeros => DynState::zeros(problem),
            InitialState::DispatchAlg2 => {
                if len != 4 {
                    return Err(CliError::Validation("dispatch_alg2 initial state needs four scalar agents".into()));
                }
                let w = vector(&nsalloc_core::instances::EXAMPLE1_ALG2_W0);
                DynState::new(problem, zero.clone(), zero, w)
            }
            InitialState::Random { scale } => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                let x =
                    problem.stacked_resources() + DVector::from_fn(len, |_, _| rng.random_range(-1.0..=1.0) * scale);
                let raw = DVector::from_fn(len, |_, _| rng.random_range(-1.0..=1.0) * scale);
                let mean = problem.block_sum(&raw) / problem.n_agents() as f64;
                let w = raw - problem.stack(|_| mean.clone());
                DynState::new(problem, x, zero, w)
            }
            InitialState::Explicit { x, s, w } => DynState::new(problem, vector(x), vector(s), vector(w)),
        };
        state.map_err(|e| CliError::Validation(format!("initial state: {e}")))
    }
}
