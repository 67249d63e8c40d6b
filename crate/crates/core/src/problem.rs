//! The resource allocation problem
//!
//! ```text
//! minimize   sum_i f_i(y_i)
//! subject to sum_i y_i = sum_i d_i,   y_i in Omega_i
//! ```
//!
//! together with its optimality residual and the gain bounds of the two
//! distributed algorithms.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::convex::{ConvexError, ConvexSet, CostFunction};
use crate::graph::{Digraph, GraphError, LaplacianBundle};
use crate::Algorithm;

/// Balance and symmetry checks on the adjacency matrix use this tolerance.
pub const TOPOLOGY_TOL: f64 = 1e-9;
/// All four residual fields below this certify approximate optimality.
pub const CERTIFY_TOL: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("problem has no agents")]
    NoAgents,
    #[error("graph has {nodes} nodes but the problem has {agents} agents")]
    NodeCount { nodes: usize, agents: usize },
    #[error("agent {agent}: {what} has dimension {got}, expected {expected}")]
    Dimension { agent: usize, what: &'static str, expected: usize, got: usize },
    #[error("agent {agent}: feasible set: {source}")]
    Set { agent: usize, source: ConvexError },
    #[error("agent {agent}: cost: {source}")]
    Cost { agent: usize, source: ConvexError },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("gain bound undefined: strong convexity modulus is zero")]
    ZeroModulus,
    #[error("gain bound requires {0}")]
    Topology(&'static str),
    #[error("stacked vector has length {got}, expected {expected}")]
    StackLength { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub cost: CostFunction,
    pub set: ConvexSet,
    /// Local resource `d_i`.
    pub resource: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Info,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub agent: Option<usize>,
    pub message: String,
}

impl Diagnostic {
    fn warn(agent: Option<usize>, message: impl Into<String>) -> Self {
        Diagnostic { severity: Severity::Warning, agent, message: message.into() }
    }

    fn info(agent: Option<usize>, message: impl Into<String>) -> Self {
        Diagnostic { severity: Severity::Info, agent, message: message.into() }
    }
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = match self.severity {
            Severity::Info => "info",
            Severity::Warning => "warning",
        };
        match self.agent {
            Some(a) => write!(f, "{tag}: agent {a}: {}", self.message),
            None => write!(f, "{tag}: {}", self.message),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Problem {
    agents: Vec<Agent>,
    graph: Digraph,
    laplacian: LaplacianBundle,
    dim: usize,
    omega: f64,
}

impl Problem {
    /// Checks dimensions, set and cost invariants; anything softer is left to
    /// [`Problem::validate`].
    pub fn new(agents: Vec<Agent>, graph: Digraph) -> Result<Self, ProblemError> {
        let first = agents.first().ok_or(ProblemError::NoAgents)?;
        let dim = first.cost.dim();
        if graph.n_nodes() != agents.len() {
            return Err(ProblemError::NodeCount { nodes: graph.n_nodes(), agents: agents.len() });
        }
        for (agent, a) in agents.iter().enumerate() {
            let check = |what, got: usize| {
                if got == dim {
                    Ok(())
                } else {
                    Err(ProblemError::Dimension { agent, what, expected: dim, got })
                }
            };
            check("cost", a.cost.dim())?;
            check("feasible set", a.set.dim())?;
            check("resource", a.resource.len())?;
            a.set.validate().map_err(|source| ProblemError::Set { agent, source })?;
            a.cost.check_convex_on(a.set.bounding_box()).map_err(|source| ProblemError::Cost { agent, source })?;
        }
        let omega = agents.iter().map(|a| a.cost.strong_convexity()).fold(f64::INFINITY, f64::min);
        let laplacian = graph.laplacian();
        Ok(Problem { agents, graph, laplacian, dim, omega })
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn graph(&self) -> &Digraph {
        &self.graph
    }

    pub fn laplacian(&self) -> &LaplacianBundle {
        &self.laplacian
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    /// Per-agent decision dimension.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Length of stacked vectors, `N * d`.
    pub fn stacked_len(&self) -> usize {
        self.agents.len() * self.dim
    }

    /// Uniform strong convexity modulus: the smallest declared one.
    pub fn strong_convexity(&self) -> f64 {
        self.omega
    }

    pub fn with_graph(&self, graph: Digraph) -> Result<Self, ProblemError> {
        Problem::new(self.agents.clone(), graph)
    }

    /// Relabels agents so that old agent `perm[k]` becomes agent `k`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let agents = perm.iter().map(|&i| self.agents[i].clone()).collect();
        Problem::new(agents, self.graph.permuted(perm)).expect("permutation preserves validity")
    }

    pub fn block<'a>(&self, v: &'a DVector<f64>, agent: usize) -> nalgebra::DVectorView<'a, f64> {
        v.rows(agent * self.dim, self.dim)
    }

    pub fn stacked_resources(&self) -> DVector<f64> {
        self.stack(|a| a.resource.clone())
    }

    pub fn total_resource(&self) -> DVector<f64> {
        self.agents.iter().fold(DVector::zeros(self.dim), |acc, a| acc + &a.resource)
    }

    pub fn stack(&self, f: impl Fn(&Agent) -> DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.stacked_len());
        for (i, a) in self.agents.iter().enumerate() {
            out.rows_mut(i * self.dim, self.dim).copy_from(&f(a));
        }
        out
    }

    /// Sum of the agents' blocks of a stacked vector.
    pub fn block_sum(&self, v: &DVector<f64>) -> DVector<f64> {
        (0..self.n_agents()).fold(DVector::zeros(self.dim), |acc, i| acc + self.block(v, i))
    }

    pub fn check_stacked(&self, v: &DVector<f64>) -> Result<(), ProblemError> {
        if v.len() != self.stacked_len() {
            return Err(ProblemError::StackLength { expected: self.stacked_len(), got: v.len() });
        }
        Ok(())
    }

    /// Blockwise projection onto `Omega_1 x ... x Omega_N`.
    pub fn project(&self, x: &DVector<f64>) -> Result<DVector<f64>, ConvexError> {
        let mut out = DVector::zeros(x.len());
        for (i, a) in self.agents.iter().enumerate() {
            let p = a.set.project(&self.block(x, i).into_owned())?;
            out.rows_mut(i * self.dim, self.dim).copy_from(&p);
        }
        Ok(out)
    }

    pub fn objective(&self, y: &DVector<f64>) -> f64 {
        self.agents.iter().enumerate().map(|(i, a)| a.cost.evaluate(&self.block(y, i).into_owned())).sum()
    }

    /// Soft checks: empty interiors, a Slater heuristic, the declared strong
    /// convexity moduli and the communication topology. Never fails; hard
    /// violations are rejected by [`Problem::new`].
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        for (i, a) in self.agents.iter().enumerate() {
            if !has_interior(&a.set) {
                out.push(Diagnostic::warn(Some(i), "feasible set appears to have an empty interior"));
            }
            if let Some(msg) = spot_check_modulus(&a.cost, &a.set, &a.resource, 0x5eed + i as u64) {
                out.push(Diagnostic::warn(Some(i), msg));
            }
        }
        if !self.slater_heuristic() {
            out.push(Diagnostic::warn(
                None,
                "Slater heuristic found no interior allocation meeting the resource constraint",
            ));
        }
        if self.omega == 0.0 {
            out.push(Diagnostic::info(
                None,
                "no strong convexity declared; gain bounds are undefined and only the fully distributed regime (alg1 on undirected graphs) applies",
            ));
        }
        if !self.graph.is_strongly_connected() {
            out.push(Diagnostic::warn(None, "communication graph is not strongly connected"));
        } else if !self.graph.is_weight_balanced(TOPOLOGY_TOL) {
            out.push(Diagnostic::warn(None, "communication graph is not weight-balanced"));
        }
        out
    }

    /// Alternating projections between the shrunken product set and the
    /// affine resource constraint. Success means an allocation strictly
    /// inside every set whose blocks sum to the total resource was found.
    pub fn slater_heuristic(&self) -> bool {
        let margin = 1e-3;
        let Some(shrunk) = self.agents.iter().map(|a| a.set.shrunk(margin)).collect::<Option<Vec<_>>>() else {
            return false;
        };
        let n = self.n_agents() as f64;
        let total = self.total_resource();
        let scale = 1.0 + total.amax();
        let mut x = self.stacked_resources();
        for _ in 0..2000 {
            for (i, set) in shrunk.iter().enumerate() {
                let Ok(p) = set.project(&self.block(&x, i).into_owned()) else {
                    return false;
                };
                x.rows_mut(i * self.dim, self.dim).copy_from(&p);
            }
            let gap = &total - self.block_sum(&x);
            if gap.norm() <= 1e-9 * scale {
                return true;
            }
            for i in 0..self.n_agents() {
                let mut b = x.rows_mut(i * self.dim, self.dim);
                b += &gap / n;
            }
        }
        false
    }

    /// Approximate optimality residual of `(y, s)` with per-agent multipliers.
    ///
    /// Stationarity of agent `i` is the distance from `s_i` to
    /// `∂f_i(y_i) + N_Omega_i(y_i)`. Since `∂f_i(y_i)` is a ball `c + W B`,
    /// that distance is `max(0, |P_T(s_i - c)| - W)` where the tangent-cone
    /// projection is probed as `|y_i - P(y_i - eta (c - s_i))| / eta`; with no
    /// active kink this is the usual projected-gradient residual.
    ///
    /// Kinks within `opts.kink_tol` of `y_i` count as active. For `d > 1`
    /// the kink set is handled as the exact ball, not a bounding box.
    pub fn kkt_residual(
        &self,
        y: &DVector<f64>,
        s: &DVector<f64>,
        opts: KktOptions,
    ) -> Result<KktReport, ProblemError> {
        self.check_stacked(y)?;
        self.check_stacked(s)?;
        let n = self.n_agents();
        let mut stationarity = Vec::with_capacity(n);
        let mut feasibility = Vec::with_capacity(n);
        for (i, a) in self.agents.iter().enumerate() {
            let yi = self.block(y, i).into_owned();
            let si = self.block(s, i).into_owned();
            let sd = a.cost.subdifferential_with(&yi, opts.kink_tol);
            let probe = &yi - (&sd.center - &si) * opts.eta;
            let r = match a.set.project(&probe) {
                Ok(p) => (&yi - p).norm() / opts.eta,
                Err(_) => f64::INFINITY,
            };
            stationarity.push((r - sd.radius).max(0.0));
            feasibility.push(a.set.distance(&yi).unwrap_or_else(|_| a.set.membership_residual(&yi)));
        }
        let resource_gap = (self.block_sum(y) - self.total_resource()).norm();
        let mut spread = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                spread = spread.max((self.block(s, i) - self.block(s, j)).norm());
            }
        }
        Ok(KktReport { resource_gap, stationarity, multiplier_spread: spread, feasibility_violations: feasibility })
    }

    /// [`Problem::kkt_residual`] with one multiplier shared by every agent.
    pub fn kkt_residual_common(
        &self,
        y: &DVector<f64>,
        s: &DVector<f64>,
        opts: KktOptions,
    ) -> Result<KktReport, ProblemError> {
        if s.len() != self.dim {
            return Err(ProblemError::StackLength { expected: self.dim, got: s.len() });
        }
        let stacked = self.stack(|_| s.clone());
        self.kkt_residual(y, &stacked, opts)
    }

    /// Gain bounds for the first algorithm on a strongly connected,
    /// weight-balanced digraph:
    /// `k1 > |L|^2 / (lambda2_hat * omega)` and `k2 > k1^2 / lambda2_hat^2`,
    /// where `lambda2_hat` is the second eigenvalue of `Sym(L)`. The `k2`
    /// bound is written with an undefined eigenvalue symbol in its original
    /// statement; it is read here as `lambda2_hat`, the quantity its proof
    /// uses.
    pub fn parameter_bounds_alg1(&self) -> Result<GainBounds, ProblemError> {
        if !self.graph.is_strongly_connected() {
            return Err(ProblemError::Topology("a strongly connected graph"));
        }
        if !self.graph.is_weight_balanced(TOPOLOGY_TOL) {
            return Err(ProblemError::Topology("a weight-balanced graph"));
        }
        if self.omega <= 0.0 {
            return Err(ProblemError::ZeroModulus);
        }
        let lb = &self.laplacian;
        let lam = lb.lambda2_sym;
        let norm = lb.spectral_norm;
        Ok(GainBounds {
            algorithm: Algorithm::Alg1,
            k1_min: norm * norm / (lam * self.omega),
            k2_coeff: 1.0 / (lam * lam),
            lambda2: lam,
            norm_l: norm,
            omega: self.omega,
        })
    }

    /// Gain bounds for the initialization-free algorithm on a connected
    /// undirected graph: `k1 > |L|^2 / (lambda2^2 omega)` and
    /// `k2 > k1^2 |L|^2 / lambda2^3`.
    pub fn parameter_bounds_alg2(&self) -> Result<GainBounds, ProblemError> {
        if !self.graph.is_undirected(TOPOLOGY_TOL) {
            return Err(ProblemError::Topology("an undirected graph"));
        }
        if !self.laplacian.is_connected() {
            return Err(ProblemError::Topology("a connected graph"));
        }
        if self.omega <= 0.0 {
            return Err(ProblemError::ZeroModulus);
        }
        let lb = &self.laplacian;
        let lam = lb.lambda2_sym;
        let norm = lb.spectral_norm;
        Ok(GainBounds {
            algorithm: Algorithm::Alg2,
            k1_min: norm * norm / (lam * lam * self.omega),
            k2_coeff: norm * norm / (lam * lam * lam),
            lambda2: lam,
            norm_l: norm,
            omega: self.omega,
        })
    }

    pub fn parameter_bounds(&self, algorithm: Algorithm) -> Result<GainBounds, ProblemError> {
        match algorithm {
            Algorithm::Alg1 => self.parameter_bounds_alg1(),
            Algorithm::Alg2 => self.parameter_bounds_alg2(),
        }
    }

    /// Whether the first algorithm may run with arbitrary positive gains:
    /// connected undirected graph and strictly convex costs.
    pub fn fully_distributed_regime(&self) -> bool {
        self.graph.is_undirected(TOPOLOGY_TOL) && self.laplacian.is_connected()
    }
}

fn has_interior(set: &ConvexSet) -> bool {
    let Some(inner) = set.shrunk(1e-6) else {
        return false;
    };
    let probe = DVector::zeros(set.dim());
    match inner.project(&probe) {
        Ok(p) => inner.membership_residual(&p) <= 1e-9,
        Err(_) => false,
    }
}

/// Samples pairs in the set's bounding box (or around the resource) and
/// checks `f(z) >= f(y) + g^T (z - y) + omega/2 |z - y|^2`.
fn spot_check_modulus(cost: &CostFunction, set: &ConvexSet, resource: &DVector<f64>, seed: u64) -> Option<String> {
    let omega = cost.strong_convexity();
    let (lo, hi) = set.bounding_box().unwrap_or_else(|| (resource.add_scalar(-10.0), resource.add_scalar(10.0)));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sample = || DVector::from_fn(lo.len(), |k, _| rng.random_range(lo[k]..=hi[k]));
    for _ in 0..200 {
        let y = sample();
        let z = sample();
        let g = cost.subgradient(&y);
        let lhs = cost.evaluate(&z);
        let rhs = cost.evaluate(&y) + g.dot(&(&z - &y)) + 0.5 * omega * (&z - &y).norm_squared();
        if lhs < rhs - 1e-9 * (1.0 + lhs.abs()) {
            return Some(format!("declared strong convexity modulus {omega} fails a spot check (gap {:e})", rhs - lhs));
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktOptions {
    /// Probe step of the projected-gradient residual.
    pub eta: f64,
    /// Distance within which a kink counts as active.
    pub kink_tol: f64,
}

impl KktOptions {
    /// Explicit Euler with min-norm subgradients chatters across interior
    /// kinks with amplitude of order `h` times the subgradient size, so
    /// trajectory endpoints are checked with kinks within `10 h` active.
    /// This is stationarity for the Goldstein enlargement of `∂f`.
    pub fn for_step(h: f64) -> Self {
        KktOptions { eta: 1e-6, kink_tol: 10.0 * h }
    }
}

impl Default for KktOptions {
    fn default() -> Self {
        KktOptions { eta: 1e-6, kink_tol: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KktReport {
    /// `|sum y_i - sum d_i|`
    pub resource_gap: f64,
    pub stationarity: Vec<f64>,
    /// Largest pairwise `|s_i - s_j|`.
    pub multiplier_spread: f64,
    /// Distance of each `y_i` to its set.
    pub feasibility_violations: Vec<f64>,
}

impl KktReport {
    pub fn max_stationarity(&self) -> f64 {
        self.stationarity.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_violation(&self) -> f64 {
        self.feasibility_violations.iter().copied().fold(0.0, f64::max)
    }

    /// Largest of the four criteria.
    pub fn worst(&self) -> f64 {
        self.resource_gap.max(self.max_stationarity()).max(self.multiplier_spread).max(self.max_violation())
    }

    pub fn certifies(&self, tol: f64) -> bool {
        self.worst() <= tol
    }
}

/// `k1 > k1_min`, `k2 > k2_coeff * k1^2`, `k3 > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GainBounds {
    pub algorithm: Algorithm,
    pub k1_min: f64,
    pub k2_coeff: f64,
    pub lambda2: f64,
    pub norm_l: f64,
    pub omega: f64,
}

impl GainBounds {
    pub fn k2_min(&self, k1: f64) -> f64 {
        self.k2_coeff * k1 * k1
    }

    pub fn check(&self, k1: f64, k2: f64, k3: f64) -> GainCheck {
        GainCheck { k1_ok: k1 > self.k1_min, k2_ok: k2 > self.k2_min(k1), k3_ok: k3 > 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GainCheck {
    pub k1_ok: bool,
    pub k2_ok: bool,
    pub k3_ok: bool,
}

impl GainCheck {
    pub fn all(&self) -> bool {
        self.k1_ok && self.k2_ok && self.k3_ok
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convex::CostTerm;
    use crate::graph::Edge;
    use crate::instances;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    fn quad_agent(gamma: f64, resource: f64) -> Agent {
        Agent {
            cost: CostFunction::new(1, vec![CostTerm::quadratic_scalar(gamma, 0.0, 0.0)], 2.0 * gamma).unwrap(),
            set: ConvexSet::WholeSpace { dim: 1 },
            resource: v(&[resource]),
        }
    }

    fn k2() -> Digraph {
        Digraph::from_edges(2, &[Edge::unit(0, 1)], true).unwrap()
    }

    #[test]
    fn example1_validates_cleanly() {
        let p = instances::example1(instances::graph_g1());
        let diags = p.validate();
        assert!(diags.iter().all(|d| d.severity != Severity::Warning), "{diags:?}");
        assert!(p.slater_heuristic());
        assert_eq!(p.total_resource(), v(&[145.0]));
    }

    #[test]
    fn inverted_box_is_hard_error() {
        let mut agents = vec![quad_agent(1.0, 1.0), quad_agent(1.0, 1.0)];
        agents[1].set = ConvexSet::interval(3.0, 1.0);
        assert!(matches!(Problem::new(agents, k2()), Err(ProblemError::Set { agent: 1, .. })));
    }

    #[test]
    fn dimension_mismatch_is_hard_error() {
        let mut agents = vec![quad_agent(1.0, 1.0), quad_agent(1.0, 1.0)];
        agents[0].resource = v(&[1.0, 2.0]);
        assert!(matches!(Problem::new(agents, k2()), Err(ProblemError::Dimension { agent: 0, .. })));
        let agents = vec![quad_agent(1.0, 1.0)];
        assert!(matches!(Problem::new(agents, k2()), Err(ProblemError::NodeCount { .. })));
    }

    #[test]
    fn excess_demand_triggers_slater_warning() {
        let mut agents = vec![quad_agent(1.0, 10.0), quad_agent(1.0, 10.0)];
        agents[0].set = ConvexSet::interval(0.0, 1.0);
        agents[1].set = ConvexSet::interval(0.0, 1.0);
        let p = Problem::new(agents, k2()).unwrap();
        assert!(!p.slater_heuristic());
        assert!(p.validate().iter().any(|d| d.severity == Severity::Warning && d.message.contains("Slater")));
    }

    #[test]
    fn kkt_at_reported_example1_optimum() {
        let p = instances::example1(instances::graph_g1());
        let y = v(&instances::EXAMPLE1_OPTIMUM);
        // Marginal costs of the two interior generators, 4 y1 - 3 and 3 y4 - 2,
        // differ slightly after rounding; take their midpoint.
        let s = v(&[0.5 * (4.0 * y[0] - 3.0 + 3.0 * y[3] - 2.0)]);
        let r = p.kkt_residual_common(&y, &s, KktOptions::default()).unwrap();
        assert!(r.certifies(1e-3), "{r:?}");
    }

    #[test]
    fn resource_gap_of_shifted_allocation() {
        let p = instances::example1(instances::graph_g1());
        let mut y = v(&instances::EXAMPLE1_OPTIMUM);
        y[0] += 1.0;
        let r = p.kkt_residual_common(&y, &v(&[100.0]), KktOptions::default()).unwrap();
        assert!((r.resource_gap - 1.0).abs() < 1e-9);
    }

    #[test]
    fn interior_quadratic_minimizer_is_stationary() {
        let p = Problem::new(vec![quad_agent(1.0, 1.0), quad_agent(2.0, 2.0)], k2()).unwrap();
        let y = v(&[0.7, -0.3]);
        let s = v(&[2.0 * 0.7, 4.0 * -0.3]);
        let r = p.kkt_residual(&y, &s, KktOptions::default()).unwrap();
        assert!(r.max_stationarity() < 1e-9, "{r:?}");
    }

    #[test]
    fn kink_ball_counts_in_stationarity() {
        // f = |y - (2,2)| on R^2: any |s| <= 1 is stationary at the anchor.
        let agent = Agent {
            cost: CostFunction::new(2, vec![CostTerm::WeightedNormKink { weight: 1.0, anchor: v(&[2.0, 2.0]) }], 0.0)
                .unwrap(),
            set: ConvexSet::WholeSpace { dim: 2 },
            resource: v(&[2.0, 2.0]),
        };
        let p = Problem::new(vec![agent.clone(), agent], k2()).unwrap();
        let y = v(&[2.0, 2.0, 2.0, 2.0]);
        let inside = p.kkt_residual_common(&y, &v(&[0.6, 0.6]), KktOptions::default()).unwrap();
        assert!(inside.max_stationarity() < 1e-12);
        // (0.9, 0.9) lies in the bounding box but outside the unit ball.
        let corner = p.kkt_residual_common(&y, &v(&[0.9, 0.9]), KktOptions::default()).unwrap();
        assert!((corner.max_stationarity() - (0.9f64.hypot(0.9) - 1.0)).abs() < 1e-9);
    }

    #[test]
    fn kkt_is_permutation_invariant() {
        let p = instances::example1(instances::graph_g2());
        let y = v(&[26.0, 35.0, 49.0, 34.0]);
        let s = v(&[100.0, 101.0, 99.5, 100.2]);
        let perm = [2, 0, 3, 1];
        let q = p.permuted(&perm);
        let py = DVector::from_fn(4, |k, _| y[perm[k]]);
        let ps = DVector::from_fn(4, |k, _| s[perm[k]]);
        let a = p.kkt_residual(&y, &s, KktOptions::default()).unwrap();
        let b = q.kkt_residual(&py, &ps, KktOptions::default()).unwrap();
        assert!((a.resource_gap - b.resource_gap).abs() < 1e-12);
        assert!((a.multiplier_spread - b.multiplier_spread).abs() < 1e-12);
        for (k, &old) in perm.iter().enumerate() {
            assert!((a.stationarity[old] - b.stationarity[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn k2_gain_bounds_closed_form() {
        let p = Problem::new(vec![quad_agent(1.0, 0.0), quad_agent(1.0, 0.0)], k2()).unwrap();
        assert_eq!(p.strong_convexity(), 2.0);
        let b1 = p.parameter_bounds_alg1().unwrap();
        assert!((b1.k1_min - 1.0).abs() < 1e-12);
        assert!((b1.k2_min(1.0) - 0.25).abs() < 1e-12);
        let b2 = p.parameter_bounds_alg2().unwrap();
        assert!((b2.k1_min - 0.5).abs() < 1e-12);
        assert!((b2.k2_min(1.0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn zero_modulus_rejected() {
        let agent = Agent {
            cost: CostFunction::new(1, vec![CostTerm::quadratic_scalar(1.0, 0.0, 0.0)], 0.0).unwrap(),
            set: ConvexSet::WholeSpace { dim: 1 },
            resource: v(&[0.0]),
        };
        let p = Problem::new(vec![agent.clone(), agent], k2()).unwrap();
        assert_eq!(p.parameter_bounds_alg1(), Err(ProblemError::ZeroModulus));
        assert_eq!(p.parameter_bounds_alg2(), Err(ProblemError::ZeroModulus));
    }

    #[test]
    fn alg2_bounds_reject_digraphs() {
        let p = instances::example1(instances::graph_g1());
        assert!(matches!(p.parameter_bounds_alg2(), Err(ProblemError::Topology(_))));
    }

    #[test]
    fn example_gains_satisfy_computed_bounds() {
        let p1 = instances::example1(instances::graph_g1());
        let b1 = p1.parameter_bounds_alg1().unwrap();
        assert!((b1.k1_min - 4.0).abs() < 1e-9 && (b1.k2_min(5.0) - 25.0).abs() < 1e-9, "{b1:?}");
        assert!(b1.check(5.0, 26.0, 5.0).all());
        let p2 = instances::example1(instances::graph_g2());
        let b2 = p2.parameter_bounds_alg2().unwrap();
        assert!((b2.k1_min - 4.0).abs() < 1e-9 && (b2.k2_min(5.0) - 50.0).abs() < 1e-9, "{b2:?}");
        assert!(b2.check(5.0, 55.0, 5.0).all());
    }

    #[test]
    fn k1_bound_scales_with_edge_weights() {
        let p = instances::example1(instances::graph_g1());
        let base = p.parameter_bounds_alg1().unwrap();
        for c in [0.5, 2.0, 3.7] {
            let scaled = p.with_graph(p.graph().scaled(c).unwrap()).unwrap().parameter_bounds_alg1().unwrap();
            assert!((scaled.k1_min - c * base.k1_min).abs() < 1e-9 * scaled.k1_min);
        }
    }
}
