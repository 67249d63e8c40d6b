//! Ready-made problem instances: the economic dispatch case, the
//! two-dimensional mixed-set case and a seeded random generator.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::convex::{ConvexSet, CostFunction, CostTerm, Halfspace};
use crate::graph::{Digraph, Edge};
use crate::problem::{Agent, Problem};

/// `(alpha, beta, gamma, p_min, p_max, demand)` per generator; the cost is
/// `alpha + beta |p - 35| + gamma p^2` on `[p_min, p_max]`.
pub const DISPATCH_TABLE: [[f64; 6]; 4] = [
    [0.5, 3.0, 2.0, 20.0, 40.0, 45.0],
    [1.5, 4.0, 1.0, 25.0, 35.0, 40.0],
    [3.0, 5.0, 0.5, 35.0, 50.0, 25.0],
    [1.0, 2.0, 1.5, 25.0, 45.0, 35.0],
];

pub const DISPATCH_KINK: f64 = 35.0;

/// Reported optimum of the dispatch case, rounded to four decimals.
pub const EXAMPLE1_OPTIMUM: [f64; 4] = [25.8569, 35.0, 50.0, 34.1431];

/// Closed-form optimum of the dispatch case. Generators 2 and 3 sit at their
/// kink and upper bound; generators 1 and 4 share the price
/// `4 p1 - 3 = 3 p4 - 2` with `p1 + p4 = 60`.
pub fn example1_exact_optimum() -> ([f64; 4], f64) {
    let p1 = 181.0 / 7.0;
    let p4 = 60.0 - p1;
    ([p1, 35.0, 50.0, p4], 4.0 * p1 - 3.0)
}

pub const EXAMPLE1_ALG1_GAINS: (f64, f64, f64) = (5.0, 26.0, 5.0);
pub const EXAMPLE1_ALG2_GAINS: (f64, f64, f64) = (5.0, 55.0, 5.0);
pub const EXAMPLE2_UNDIRECTED_GAINS: (f64, f64, f64) = (5.0, 5.0, 5.0);
/// Nonzero-sum auxiliary start for the initialization-free run.
pub const EXAMPLE1_ALG2_W0: [f64; 4] = [10.0, 10.0, 10.0, 0.0];

/// Unit-weight directed 4-cycle `0 -> 1 -> 2 -> 3 -> 0`.
pub fn graph_g1() -> Digraph {
    let edges: Vec<Edge> = (0..4).map(|i| Edge::unit(i, (i + 1) % 4)).collect();
    Digraph::from_edges(4, &edges, false).expect("valid cycle")
}

/// Unit-weight undirected 4-cycle.
pub fn graph_g2() -> Digraph {
    let edges: Vec<Edge> = (0..4).map(|i| Edge::unit(i, (i + 1) % 4)).collect();
    Digraph::from_edges(4, &edges, true).expect("valid cycle")
}

pub fn example1_agents() -> Vec<Agent> {
    DISPATCH_TABLE
        .iter()
        .map(|&[alpha, beta, gamma, lo, hi, demand]| Agent {
            cost: CostFunction::new(
                1,
                vec![
                    CostTerm::quadratic_scalar(gamma, 0.0, alpha),
                    CostTerm::WeightedNormKink { weight: beta, anchor: DVector::from_element(1, DISPATCH_KINK) },
                ],
                2.0 * gamma,
            )
            .expect("valid dispatch cost"),
            set: ConvexSet::interval(lo, hi),
            resource: DVector::from_element(1, demand),
        })
        .collect()
}

pub fn example1(graph: Digraph) -> Problem {
    Problem::new(example1_agents(), graph).expect("valid dispatch problem")
}

fn v2(a: f64, b: f64) -> DVector<f64> {
    DVector::from_row_slice(&[a, b])
}

/// Four agents in the plane with ball, box and polyhedral sets.
pub fn example2_agents() -> Vec<Agent> {
    let f1 = CostFunction::new(
        2,
        vec![
            CostTerm::squared_distance(&v2(0.0, 0.0)),
            CostTerm::WeightedNormKink { weight: 1.0, anchor: v2(2.0, 2.0) },
        ],
        2.0,
    );
    // The saturation term bends down by at most 1/2.
    let f2 = CostFunction::new(
        2,
        vec![CostTerm::squared_distance(&v2(0.0, 0.0)), CostTerm::RationalSaturation { denomscale: 20.0 }],
        1.5,
    );
    let f3 = CostFunction::new(2, vec![CostTerm::squared_distance(&v2(2.0, 3.0))], 2.0);
    let f4 = CostFunction::new(
        2,
        vec![CostTerm::LogSumExpPair { scale: 0.05 }, CostTerm::squared_distance(&v2(0.0, 0.0))],
        2.0,
    );
    let omega3 = ConvexSet::Polyhedron {
        rows: vec![
            Halfspace::new(v2(-1.0, 0.0), -0.5),
            Halfspace::new(v2(0.0, -1.0), -1.0),
            Halfspace::new(v2(1.0, 1.0), 6.0),
        ],
    };
    let sets = [
        ConvexSet::Ball { center: v2(2.0, 2.0), radius: 2.0 },
        ConvexSet::Box { lower: v2(1.0, 0.0), upper: v2(2.0, 1.0) },
        omega3,
        ConvexSet::Ball { center: v2(3.0, 5.0), radius: 2.0 },
    ];
    let resources = [v2(2.0, 1.0), v2(2.0, 3.0), v2(2.0, 4.0), v2(1.0, 5.0)];
    [f1, f2, f3, f4]
        .into_iter()
        .zip(sets)
        .zip(resources)
        .map(|((cost, set), resource)| Agent { cost: cost.expect("valid cost"), set, resource })
        .collect()
}

pub fn example2(graph: Digraph) -> Problem {
    Problem::new(example2_agents(), graph).expect("valid planar problem")
}

/// Shape of the random instances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomShape {
    pub min_agents: usize,
    pub max_agents: usize,
    /// Probability of an extra edge beyond the spanning tree.
    pub edge_prob: f64,
}

impl Default for RandomShape {
    fn default() -> Self {
        RandomShape { min_agents: 3, max_agents: 6, edge_prob: 0.3 }
    }
}

/// Random connected undirected graph: a random spanning tree plus extra
/// edges, weights uniform on `[0.5, 1.5]`.
pub fn random_connected_graph(rng: &mut impl Rng, n: usize, edge_prob: f64) -> Digraph {
    let mut edges = Vec::new();
    for k in 1..n {
        let parent = rng.random_range(0..k);
        edges.push(Edge::new(parent, k, rng.random_range(0.5..1.5)));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if edges.iter().any(|e| e.from == i && e.to == j) {
                continue;
            }
            if rng.random_bool(edge_prob) {
                edges.push(Edge::new(i, j, rng.random_range(0.5..1.5)));
            }
        }
    }
    Digraph::from_edges(n, &edges, true).expect("random tree is connected")
}

/// Seeded random instance: `N` agents within the given range, `d` in `{1, 2}`, box or
/// ball sets, costs `gamma |y|^2 + b^T y + beta |y - a|`, resources strictly
/// inside each set and a random connected undirected graph.
pub fn random_instance(seed: u64, shape: RandomShape) -> Problem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(shape.min_agents..=shape.max_agents);
    let d = rng.random_range(1..=2usize);
    let mut agents = Vec::with_capacity(n);
    for _ in 0..n {
        let center = DVector::from_fn(d, |_, _| rng.random_range(-3.0..3.0));
        let set = if rng.random_bool(0.5) {
            let half = DVector::from_fn(d, |_, _| rng.random_range(0.5..2.5));
            ConvexSet::Box { lower: &center - &half, upper: &center + &half }
        } else {
            ConvexSet::Ball { center: center.clone(), radius: rng.random_range(0.5..2.5) }
        };
        let (lo, hi) = set.bounding_box().expect("bounded");
        let mut interior = || {
            let p = DVector::from_fn(d, |k, _| {
                let t = rng.random_range(0.25..0.75);
                lo[k] + t * (hi[k] - lo[k])
            });
            set.project(&p).expect("box or ball") * 0.5 + &center * 0.5
        };
        let resource = interior();
        let anchor = interior();
        let gamma = rng.random_range(0.5..2.0);
        let linear = DVector::from_fn(d, |_, _| rng.random_range(-2.0..2.0));
        let beta = rng.random_range(0.0..1.5);
        let q_term = CostTerm::Quadratic { q: DMatrix::identity(d, d) * gamma, b: linear, c: 0.0 };
        let cost = CostFunction::new(d, vec![q_term, CostTerm::WeightedNormKink { weight: beta, anchor }], 2.0 * gamma)
            .expect("valid random cost");
        agents.push(Agent { cost, set, resource });
    }
    let graph = random_connected_graph(&mut rng, n, shape.edge_prob);
    Problem::new(agents, graph).expect("valid random instance")
}
