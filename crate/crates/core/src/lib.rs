//! Distributed nonsmooth resource allocation over multi-agent networks.
//!
//! Two continuous-time primal-dual algorithms are simulated by forward Euler:
//! [`Algorithm::Alg1`] requires `sum_i w_i(0) = 0` and runs on weight-balanced
//! digraphs; [`Algorithm::Alg2`] is initialization-free on undirected graphs.

pub mod convex;
pub mod dynamics;
pub mod graph;
pub mod instances;
pub mod oracle;
pub mod problem;

use serde::{Deserialize, Serialize};

pub use convex::{ConvexError, ConvexSet, CostFunction, CostTerm, Halfspace, Subdifferential};
pub use dynamics::{integrate, DynParams, DynState, DynamicsError, EquilibriumCertificate, Rhs, Trajectory};
pub use graph::{Digraph, Edge, GraphError, LaplacianBundle};
pub use oracle::{dual_solve, OracleOptions, OracleSolution};
pub use problem::{Agent, GainBounds, KktOptions, KktReport, Problem, ProblemError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// Needs zero-sum auxiliary initial values.
    Alg1,
    /// Initialization-free, undirected graphs only.
    Alg2,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::Alg1 => "alg1",
            Algorithm::Alg2 => "alg2",
        })
    }
}
