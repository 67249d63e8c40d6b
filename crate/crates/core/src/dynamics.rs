//! Forward-Euler simulation of the two distributed algorithms.
//!
//! Stacked over agents, with `y = P_Omega(x)` and `g` a subgradient of `f`
//! at `y`, the first algorithm reads
//!
//! ```text
//! x' = y - x - g + s
//! s' = k1 (w - y + d) - k2 (L ⊗ I) s
//! w' = -k3 (L ⊗ I)(w - y + d)
//! ```
//!
//! and the second replaces `w` by `(L ⊗ I) w` inside both brackets.

use std::io::{self, Write};

use log::warn;
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::convex::ConvexError;
use crate::graph::{kron_apply, orthogonal_decomposition, GraphError, OrthogonalDecomposition};
use crate::problem::{KktOptions, KktReport, Problem, ProblemError, TOPOLOGY_TOL};
use crate::Algorithm;

/// Integration stops once the min-norm right-hand side is this small.
pub const EQUILIBRIUM_TOL: f64 = 1e-9;
/// Any state entry beyond this aborts the run.
pub const DIVERGENCE_NORM: f64 = 1e12;
/// Kinks this close count as active when certifying an equilibrium.
pub const CERTIFICATE_KINK_TOL: f64 = 1e-9;
/// Set constraints this close to binding count as active.
pub const ACTIVE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("parameter {name} = {value} must be positive and finite")]
    BadParam { name: &'static str, value: f64 },
    #[error("record_every must be at least 1")]
    BadRecordEvery,
    #[error("state vector {which} has length {got}, expected {expected}")]
    StateLength { which: &'static str, expected: usize, got: usize },
    #[error("initial state contains non-finite entries")]
    NonFinite,
    #[error("diverged at t = {time}: state magnitude {magnitude:e}")]
    Diverged { time: f64, magnitude: f64 },
    #[error("alg2 requires a connected undirected graph")]
    NotUndirected,
    #[error("the conservation check applies to alg1 trajectories only")]
    NotAlg1,
    #[error(transparent)]
    Projection(#[from] ConvexError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynParams {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub step_size: f64,
    pub max_time: f64,
    pub record_every: usize,
}

impl DynParams {
    /// Step `1e-3`, horizon 30, every step recorded.
    pub fn new(k1: f64, k2: f64, k3: f64) -> Self {
        DynParams { k1, k2, k3, step_size: 1e-3, max_time: 30.0, record_every: 1 }
    }

    pub fn from_gains((k1, k2, k3): (f64, f64, f64)) -> Self {
        DynParams::new(k1, k2, k3)
    }

    pub fn with_step(mut self, h: f64) -> Self {
        self.step_size = h;
        self
    }

    pub fn with_horizon(mut self, t: f64) -> Self {
        self.max_time = t;
        self
    }

    pub fn with_record_every(mut self, n: usize) -> Self {
        self.record_every = n;
        self
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        for (name, value) in [
            ("k1", self.k1),
            ("k2", self.k2),
            ("k3", self.k3),
            ("step_size", self.step_size),
            ("max_time", self.max_time),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(DynamicsError::BadParam { name, value });
            }
        }
        if self.record_every == 0 {
            return Err(DynamicsError::BadRecordEvery);
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.max_time / self.step_size).round() as usize
    }
}

/// Stacked agent states; `y` is always recomputed as `P_Omega(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DynState {
    pub x: DVector<f64>,
    pub s: DVector<f64>,
    pub w: DVector<f64>,
    pub y: DVector<f64>,
}

impl DynState {
    pub fn new(problem: &Problem, x: DVector<f64>, s: DVector<f64>, w: DVector<f64>) -> Result<Self, DynamicsError> {
        let n = problem.stacked_len();
        for (which, v) in [("x", &x), ("s", &s), ("w", &w)] {
            if v.len() != n {
                return Err(DynamicsError::StateLength { which, expected: n, got: v.len() });
            }
            if v.iter().any(|e| !e.is_finite()) {
                return Err(DynamicsError::NonFinite);
            }
        }
        let y = problem.project(&x)?;
        Ok(DynState { x, s, w, y })
    }

    pub fn zeros(problem: &Problem) -> Result<Self, DynamicsError> {
        let z = DVector::zeros(problem.stacked_len());
        DynState::new(problem, z.clone(), z.clone(), z)
    }

    fn magnitude(&self) -> f64 {
        let m = self.x.amax().max(self.s.amax()).max(self.w.amax());
        if m.is_finite() {
            m
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rhs {
    pub dx: DVector<f64>,
    pub ds: DVector<f64>,
    pub dw: DVector<f64>,
}

impl Rhs {
    pub fn norm(&self) -> f64 {
        (self.dx.norm_squared() + self.ds.norm_squared() + self.dw.norm_squared()).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.dx.amax().max(self.ds.amax()).max(self.dw.amax())
    }
}

/// Element of `∂f(y)` used in the `x` equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Selection {
    MinNorm,
    /// The element making `|x'|` smallest, with kinks inside `kink_tol`
    /// counted as active.
    Inclusion {
        kink_tol: f64,
    },
}

pub fn rhs_alg1(problem: &Problem, params: &DynParams, st: &DynState) -> Rhs {
    rhs_with(problem, Algorithm::Alg1, params, st, Selection::MinNorm)
}

pub fn rhs_alg2(problem: &Problem, params: &DynParams, st: &DynState) -> Rhs {
    rhs_with(problem, Algorithm::Alg2, params, st, Selection::MinNorm)
}

pub fn rhs(problem: &Problem, algorithm: Algorithm, params: &DynParams, st: &DynState) -> Rhs {
    rhs_with(problem, algorithm, params, st, Selection::MinNorm)
}

pub fn rhs_with(
    problem: &Problem,
    algorithm: Algorithm,
    params: &DynParams,
    st: &DynState,
    selection: Selection,
) -> Rhs {
    let dim = problem.dim();
    let mut g = DVector::zeros(problem.stacked_len());
    for (i, agent) in problem.agents().iter().enumerate() {
        let yi = problem.block(&st.y, i).into_owned();
        let gi = match selection {
            Selection::MinNorm => agent.cost.subgradient(&yi),
            Selection::Inclusion { kink_tol } => {
                let target = &yi - problem.block(&st.x, i) + problem.block(&st.s, i);
                agent.cost.subdifferential_with(&yi, kink_tol).nearest(&target)
            }
        };
        g.rows_mut(i * dim, dim).copy_from(&gi);
    }
    let lap = &problem.laplacian().l;
    let d = problem.stacked_resources();
    let dx = &st.y - &st.x - g + &st.s;
    let mixed_w = match algorithm {
        Algorithm::Alg1 => st.w.clone(),
        Algorithm::Alg2 => kron_apply(lap, &st.w, dim),
    };
    let consensus = mixed_w - &st.y + d;
    let ds = &consensus * params.k1 - kron_apply(lap, &st.s, dim) * params.k2;
    let dw = kron_apply(lap, &consensus, dim) * -params.k3;
    Rhs { dx, ds, dw }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub algorithm: Algorithm,
    pub n_agents: usize,
    pub dim: usize,
    pub times: Vec<f64>,
    pub states: Vec<DynState>,
    pub lyapunov: Option<Vec<f64>>,
    pub kkt_series: Option<Vec<KktReport>>,
    /// True when the run ended on the equilibrium test before `max_time`.
    pub stopped_early: bool,
    pub steps_taken: usize,
    pub warnings: Vec<String>,
}

impl Trajectory {
    pub fn terminal(&self) -> &DynState {
        self.states.last().expect("trajectory holds the initial state")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory holds the initial time")
    }

    pub fn attach_lyapunov(&mut self, monitor: &LyapunovV1) {
        self.lyapunov = Some(self.states.iter().map(|st| monitor.eval(st)).collect());
    }

    pub fn attach_kkt(&mut self, problem: &Problem, opts: KktOptions) -> Result<(), ProblemError> {
        let series =
            self.states.iter().map(|st| problem.kkt_residual(&st.y, &st.s, opts)).collect::<Result<Vec<_>, _>>()?;
        self.kkt_series = Some(series);
        Ok(())
    }

    /// CSV with header `t,agent,coord,x,y,s,w`, one row per sample, agent
    /// and coordinate.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,agent,coord,x,y,s,w")?;
        for (t, st) in self.times.iter().zip(&self.states) {
            for i in 0..self.n_agents {
                for c in 0..self.dim {
                    let k = i * self.dim + c;
                    writeln!(out, "{t},{i},{c},{},{},{},{}", st.x[k], st.y[k], st.s[k], st.w[k])?;
                }
            }
        }
        Ok(())
    }
}

/// Checks the precondition of the chosen algorithm and runs
/// [`integrate_unchecked`].
pub fn integrate(
    problem: &Problem,
    params: &DynParams,
    init: DynState,
    algorithm: Algorithm,
) -> Result<Trajectory, DynamicsError> {
    if algorithm == Algorithm::Alg2
        && !(problem.graph().is_undirected(TOPOLOGY_TOL) && problem.laplacian().is_connected())
    {
        return Err(DynamicsError::NotUndirected);
    }
    integrate_unchecked(problem, params, init, algorithm)
}

/// Explicit Euler with `y` re-projected after every step. Samples are kept
/// every `record_every` steps plus the first and last state.
pub fn integrate_unchecked(
    problem: &Problem,
    params: &DynParams,
    init: DynState,
    algorithm: Algorithm,
) -> Result<Trajectory, DynamicsError> {
    params.validate()?;
    let mut st = DynState::new(problem, init.x, init.s, init.w)?;
    let mut warnings = Vec::new();
    if algorithm == Algorithm::Alg1 {
        let sum_w = problem.block_sum(&st.w);
        if sum_w.norm() > 1e-12 {
            let msg =
                format!("alg1 expects the auxiliary states to sum to zero; initial sum has norm {:e}", sum_w.norm());
            warn!("{msg}");
            warnings.push(msg);
        }
    }
    let h = params.step_size;
    let steps = params.n_steps();
    let mut times = vec![0.0];
    let mut states = vec![st.clone()];
    let mut stopped_early = false;
    let mut taken = 0;
    for k in 1..=steps {
        let r = rhs(problem, algorithm, params, &st);
        if r.norm() <= EQUILIBRIUM_TOL {
            stopped_early = true;
            break;
        }
        st.x += r.dx * h;
        st.s += r.ds * h;
        st.w += r.dw * h;
        taken = k;
        let t = k as f64 * h;
        let magnitude = st.magnitude();
        if magnitude > DIVERGENCE_NORM {
            return Err(DynamicsError::Diverged { time: t, magnitude });
        }
        st.y = problem.project(&st.x)?;
        if k % params.record_every == 0 || k == steps {
            times.push(t);
            states.push(st.clone());
        }
    }
    let t_end = taken as f64 * h;
    if *times.last().unwrap() < t_end {
        times.push(t_end);
        states.push(st);
    }
    Ok(Trajectory {
        algorithm,
        n_agents: problem.n_agents(),
        dim: problem.dim(),
        times,
        states,
        lyapunov: None,
        kkt_series: None,
        stopped_early,
        steps_taken: taken,
        warnings,
    })
}

/// Largest `|sum_i w_i(t) - sum_i w_i(0)|` over the recorded samples.
pub fn check_w_conservation(traj: &Trajectory) -> Result<f64, DynamicsError> {
    if traj.algorithm != Algorithm::Alg1 {
        return Err(DynamicsError::NotAlg1);
    }
    let sum = |w: &DVector<f64>| {
        (0..traj.n_agents).fold(DVector::zeros(traj.dim), |acc: DVector<f64>, i| acc + w.rows(i * traj.dim, traj.dim))
    };
    let start = sum(&traj.states[0].w);
    Ok(traj.states.iter().map(|st| (sum(&st.w) - &start).norm()).fold(0.0, f64::max))
}

/// An equilibrium of the dynamics together with its residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumCertificate {
    pub algorithm: Algorithm,
    pub state: DynState,
    /// Norm of the smallest element of the set-valued right-hand side, with
    /// kinks within [`CERTIFICATE_KINK_TOL`] counted as active.
    pub residual_norm: f64,
    pub kkt: KktReport,
}

impl EquilibriumCertificate {
    /// Builds the equilibrium attached to an optimum `y*` with common
    /// multiplier `s*`: `s = 1 ⊗ s*`, `x = y* + P_N(s* - c)` where `c` is the
    /// centre of `∂f(y*)`, and `w = y* - d` (first algorithm) or the
    /// minimum-norm solution of `(L ⊗ I) w = y* - d` (second).
    pub fn construct(
        problem: &Problem,
        algorithm: Algorithm,
        params: &DynParams,
        y_star: &DVector<f64>,
        s_star: &DVector<f64>,
        opts: KktOptions,
    ) -> Result<Self, DynamicsError> {
        problem.check_stacked(y_star)?;
        let dim = problem.dim();
        if s_star.len() != dim {
            return Err(DynamicsError::StateLength { which: "s*", expected: dim, got: s_star.len() });
        }
        let mut x = DVector::zeros(problem.stacked_len());
        for (i, agent) in problem.agents().iter().enumerate() {
            let yi = problem.block(y_star, i).into_owned();
            let sd = agent.cost.subdifferential_with(&yi, CERTIFICATE_KINK_TOL);
            let normal = agent.set.normal_cone_projection(&yi, &(s_star - &sd.center), ACTIVE_TOL)?;
            x.rows_mut(i * dim, dim).copy_from(&(yi + normal));
        }
        let s = problem.stack(|_| s_star.clone());
        let gap = y_star - problem.stacked_resources();
        let w = match algorithm {
            Algorithm::Alg1 => gap,
            Algorithm::Alg2 => {
                let pinv = problem.laplacian().l.clone().pseudo_inverse(1e-12).expect("non-negative tolerance");
                kron_apply(&pinv, &gap, dim)
            }
        };
        let state = DynState::new(problem, x, s, w)?;
        EquilibriumCertificate::evaluate(problem, algorithm, params, state, opts)
    }

    /// Certificate residuals of an arbitrary state.
    pub fn evaluate(
        problem: &Problem,
        algorithm: Algorithm,
        params: &DynParams,
        state: DynState,
        opts: KktOptions,
    ) -> Result<Self, DynamicsError> {
        let residual_norm =
            rhs_with(problem, algorithm, params, &state, Selection::Inclusion { kink_tol: CERTIFICATE_KINK_TOL })
                .norm();
        let kkt = problem.kkt_residual(&state.y, &state.s, opts)?;
        Ok(EquilibriumCertificate { algorithm, state, residual_norm, kkt })
    }
}

/// `V1 = k1/2 (|x - y*|^2 - |x - P(x)|^2) + 1/2 |s~1 - s~1*|^2
///      + 1/2 |s~2 - s~2*|^2 + 1/(2 k3) |w~2 - w~2*|^2`
/// with `(s~1, s~2) = ([r R]^T ⊗ I) s` and likewise for `w`.
#[derive(Debug, Clone)]
pub struct LyapunovV1 {
    decomposition: OrthogonalDecomposition,
    dim: usize,
    k1: f64,
    k3: f64,
    y_star: DVector<f64>,
    s1_star: DVector<f64>,
    s2_star: DVector<f64>,
    w2_star: DVector<f64>,
}

impl LyapunovV1 {
    pub fn new(problem: &Problem, eq: &EquilibriumCertificate, params: &DynParams) -> Result<Self, DynamicsError> {
        let decomposition = orthogonal_decomposition(problem.laplacian())?;
        let dim = problem.dim();
        let (s1_star, s2_star) = decomposition.split(&eq.state.s, dim);
        let (_, w2_star) = decomposition.split(&eq.state.w, dim);
        Ok(LyapunovV1 {
            decomposition,
            dim,
            k1: params.k1,
            k3: params.k3,
            y_star: eq.state.y.clone(),
            s1_star,
            s2_star,
            w2_star,
        })
    }

    pub fn eval(&self, st: &DynState) -> f64 {
        let (s1, s2) = self.decomposition.split(&st.s, self.dim);
        let (_, w2) = self.decomposition.split(&st.w, self.dim);
        0.5 * self.k1 * ((&st.x - &self.y_star).norm_squared() - (&st.x - &st.y).norm_squared())
            + 0.5 * (s1 - &self.s1_star).norm_squared()
            + 0.5 * (s2 - &self.s2_star).norm_squared()
            + 0.5 / self.k3 * (w2 - &self.w2_star).norm_squared()
    }

    /// `k1/2 |y - y*|^2`, a lower bound on `V1`.
    pub fn lower_bound(&self, st: &DynState) -> f64 {
        0.5 * self.k1 * (&st.y - &self.y_star).norm_squared()
    }
}

pub fn lyapunov_v1(
    problem: &Problem,
    st: &DynState,
    eq: &EquilibriumCertificate,
    params: &DynParams,
) -> Result<f64, DynamicsError> {
    Ok(LyapunovV1::new(problem, eq, params)?.eval(st))
}

/// Stacked `[a_1; ...; a_N]` from per-agent rows of a matrix, convenient for
/// building explicit initial states.
pub fn stack_rows(rows: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(rows.len(), rows.transpose().iter().copied())
}
