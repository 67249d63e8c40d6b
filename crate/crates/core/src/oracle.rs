//! Centralized reference solver.
//!
//! Maximizes the concave dual
//! `q(s) = sum_i min_{y in Omega_i} [f_i(y) - s^T y] + s^T sum_i d_i`
//! whose gradient is `sum_i d_i - sum_i y_i(s)`. Scalar multipliers are
//! found by bisection; vector ones by gradient ascent with Barzilai-Borwein
//! trial steps and Armijo halving.

use nalgebra::DVector;
use serde::Serialize;

use crate::convex::{ConvexSet, CostFunction, CostTerm};
use crate::dynamics::{Trajectory, ACTIVE_TOL};
use crate::problem::{Agent, KktOptions, KktReport, Problem};

/// Residual bound for a solution to count as certified.
pub const CERTIFY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    /// Target resource gap and inner stationarity.
    pub tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions { tol: 1e-10, max_outer: 5000, max_inner: 200_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleSolution {
    pub y_star: Vec<f64>,
    /// Common multiplier.
    pub s_star: Vec<f64>,
    pub objective: f64,
    pub dual_value: f64,
    pub iterations: usize,
    pub certified: bool,
    pub kkt: KktReport,
    /// Dual values at accepted outer steps.
    #[serde(skip)]
    pub dual_history: Vec<f64>,
}

impl OracleSolution {
    pub fn y(&self) -> DVector<f64> {
        DVector::from_row_slice(&self.y_star)
    }

    pub fn s(&self) -> DVector<f64> {
        DVector::from_row_slice(&self.s_star)
    }
}

/// `|y(T) - y*|_inf` for the trajectory's terminal state.
pub fn compare(traj: &Trajectory, sol: &OracleSolution) -> f64 {
    (&traj.terminal().y - sol.y()).amax()
}

pub fn dual_solve(problem: &Problem, opts: OracleOptions) -> OracleSolution {
    let mut solver = DualSolver::new(problem, opts);
    let (s, iterations) = if problem.dim() == 1 { solver.bisect() } else { solver.ascend() };
    let y = solver.allocation(&s);
    let dual_value = solver.dual_value(&s, &y);
    let kkt = problem
        .kkt_residual_common(&y, &s, KktOptions { eta: 1e-6, kink_tol: 0.0 })
        .expect("solver output has matching dimensions");
    OracleSolution {
        y_star: y.as_slice().to_vec(),
        s_star: s.as_slice().to_vec(),
        objective: problem.objective(&y),
        dual_value,
        iterations,
        certified: kkt.certifies(CERTIFY_TOL),
        kkt,
        dual_history: solver.history,
    }
}

struct DualSolver<'a> {
    problem: &'a Problem,
    opts: OracleOptions,
    warm: Vec<DVector<f64>>,
    total: DVector<f64>,
    history: Vec<f64>,
}

impl<'a> DualSolver<'a> {
    fn new(problem: &'a Problem, opts: OracleOptions) -> Self {
        let warm = problem
            .agents()
            .iter()
            .map(|a| a.set.project(&a.resource).unwrap_or_else(|_| a.resource.clone()))
            .collect();
        DualSolver { problem, opts, warm, total: problem.total_resource(), history: Vec::new() }
    }

    fn allocation(&mut self, s: &DVector<f64>) -> DVector<f64> {
        let dim = self.problem.dim();
        let mut y = DVector::zeros(self.problem.stacked_len());
        for (i, agent) in self.problem.agents().iter().enumerate() {
            let yi = best_response(agent, s, &self.warm[i], self.opts);
            y.rows_mut(i * dim, dim).copy_from(&yi);
            self.warm[i] = yi;
        }
        y
    }

    fn gap(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.total - self.problem.block_sum(y)
    }

    fn dual_value(&self, s: &DVector<f64>, y: &DVector<f64>) -> f64 {
        let dim = self.problem.dim();
        let local: f64 = self
            .problem
            .agents()
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let yi = y.rows(i * dim, dim).into_owned();
                a.cost.evaluate(&yi) - s.dot(&yi)
            })
            .sum();
        local + s.dot(&self.total)
    }

    /// Scalar multiplier: the gap is nonincreasing in `s`.
    fn bisect(&mut self) -> (DVector<f64>, usize) {
        let eval = |this: &mut Self, s: f64| {
            let sv = DVector::from_element(1, s);
            let y = this.allocation(&sv);
            let q = this.dual_value(&sv, &y);
            this.history.push(q);
            this.gap(&y)[0]
        };
        let mut width = 1.0;
        let (mut lo, mut hi) = (-1.0, 1.0);
        let mut iterations = 0;
        while eval(self, lo) < 0.0 && iterations < 200 {
            hi = lo;
            width *= 2.0;
            lo -= width;
            iterations += 1;
        }
        while eval(self, hi) > 0.0 && iterations < 400 {
            lo = hi;
            width *= 2.0;
            hi += width;
            iterations += 1;
        }
        self.history.clear();
        let mut mid = 0.5 * (lo + hi);
        for _ in 0..self.opts.max_outer {
            iterations += 1;
            mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let g = eval(self, mid);
            if g.abs() <= self.opts.tol * 1e-2 {
                break;
            }
            if g > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (DVector::from_element(1, mid), iterations)
    }

    /// Gradient ascent with Barzilai-Borwein trial steps and Armijo halving.
    fn ascend(&mut self) -> (DVector<f64>, usize) {
        let inv_curv: f64 = self.problem.agents().iter().map(|a| 1.0 / a.cost.strong_convexity().max(1e-3)).sum();
        let mut step = 1.0 / inv_curv;
        let mut s = DVector::zeros(self.problem.dim());
        let y = self.allocation(&s);
        let mut q = self.dual_value(&s, &y);
        let mut grad = self.gap(&y);
        self.history.push(q);
        let mut iterations = 0;
        while iterations < self.opts.max_outer && grad.norm() > self.opts.tol * 1e-2 {
            iterations += 1;
            let mut accepted = false;
            for _ in 0..60 {
                let s_new = &s + &grad * step;
                let y_new = self.allocation(&s_new);
                let q_new = self.dual_value(&s_new, &y_new);
                if q_new >= q + 0.25 * step * grad.norm_squared() - 1e-15 * q.abs().max(1.0) {
                    let grad_new = self.gap(&y_new);
                    let ds = &s_new - &s;
                    let dg = &grad - &grad_new;
                    let curv = ds.dot(&dg);
                    step = if curv > 0.0 { ds.norm_squared() / curv } else { step * 2.0 };
                    s = s_new;
                    q = q_new;
                    grad = grad_new;
                    self.history.push(q);
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        (s, iterations)
    }
}

/// `argmin_{y in Omega} f(y) - s^T y`.
pub fn best_response(agent: &Agent, s: &DVector<f64>, warm: &DVector<f64>, opts: OracleOptions) -> DVector<f64> {
    if let Some(y) = scalar_closed_form(&agent.cost, &agent.set, s) {
        return y;
    }
    if let Some(y) = optimal_anchor(&agent.cost, &agent.set, s) {
        return y;
    }
    if agent.cost.dim() == 1 {
        scalar_bisection(&agent.cost, &agent.set, s[0])
    } else {
        projected_gradient(&agent.cost, &agent.set, s, warm, opts)
    }
}

/// `gamma y^2 + b y + c + beta |y - a|` on an interval: clamped soft
/// threshold.
pub fn scalar_closed_form(cost: &CostFunction, set: &ConvexSet, s: &DVector<f64>) -> Option<DVector<f64>> {
    if cost.dim() != 1 {
        return None;
    }
    let (lo, hi) = match set {
        ConvexSet::Box { lower, upper } => (lower[0], upper[0]),
        ConvexSet::WholeSpace { .. } => (f64::NEG_INFINITY, f64::INFINITY),
        _ => return None,
    };
    let (mut gamma, mut b) = (0.0, 0.0);
    let mut kink: Option<(f64, f64)> = None;
    for term in cost.terms() {
        match term {
            CostTerm::Quadratic { q, b: lin, .. } => {
                gamma += q[(0, 0)];
                b += lin[0];
            }
            CostTerm::WeightedNormKink { weight, anchor } => {
                if kink.is_some() {
                    return None;
                }
                kink = Some((*weight, anchor[0]));
            }
            _ => return None,
        }
    }
    if gamma <= 0.0 {
        return None;
    }
    let (beta, a) = kink.unwrap_or((0.0, 0.0));
    let rhs = s[0] - b;
    let upper_branch = (rhs - beta) / (2.0 * gamma);
    let lower_branch = (rhs + beta) / (2.0 * gamma);
    let free = if upper_branch > a {
        upper_branch
    } else if lower_branch < a {
        lower_branch
    } else {
        a
    };
    Some(DVector::from_element(1, free.clamp(lo, hi)))
}

/// Returns a kink anchor inside the set when it already minimizes
/// `f - s^T y`: with `∂f(a) = c + W B` that holds iff the tangent-cone part
/// of `s - c` has norm at most `W`.
fn optimal_anchor(cost: &CostFunction, set: &ConvexSet, s: &DVector<f64>) -> Option<DVector<f64>> {
    for term in cost.terms() {
        let CostTerm::WeightedNormKink { weight, anchor } = term else {
            continue;
        };
        if *weight <= 0.0 || !set.contains(anchor) {
            continue;
        }
        let sd = cost.subdifferential(anchor);
        let z = s - &sd.center;
        let normal = set.normal_cone_projection(anchor, &z, ACTIVE_TOL).ok()?;
        if (z - normal).norm() <= sd.radius {
            return Some(anchor.clone());
        }
    }
    None
}

/// Scalar subproblem by bisection on the monotone subdifferential.
fn scalar_bisection(cost: &CostFunction, set: &ConvexSet, s: f64) -> DVector<f64> {
    let at = |y: f64| {
        let sd = cost.subdifferential(&DVector::from_element(1, y));
        (sd.center[0] - sd.radius - s, sd.center[0] + sd.radius - s)
    };
    let (mut lo, mut hi) = match set.bounding_box() {
        Some((l, h)) => (l[0], h[0]),
        None => (f64::NEG_INFINITY, f64::INFINITY),
    };
    if lo.is_finite() && at(lo).1 >= 0.0 {
        return DVector::from_element(1, lo);
    }
    if hi.is_finite() && at(hi).0 <= 0.0 {
        return DVector::from_element(1, hi);
    }
    let mut width = 1.0;
    if !lo.is_finite() {
        lo = hi.min(0.0) - width;
        while at(lo).1 >= 0.0 {
            width *= 2.0;
            lo -= width;
        }
    }
    if !hi.is_finite() {
        hi = lo.max(0.0) + width;
        while at(hi).0 <= 0.0 {
            width *= 2.0;
            hi += width;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let (below, above) = at(mid);
        if below > 0.0 {
            hi = mid;
        } else if above < 0.0 {
            lo = mid;
        } else {
            return DVector::from_element(1, mid);
        }
    }
    DVector::from_element(1, 0.5 * (lo + hi))
}

/// Projected gradient with step `1 / L(y)`, where `L(y)` bounds the
/// curvature of the smooth terms plus `beta / |y - a|` for each kink. Only
/// gradients are compared, so the iteration is not limited by rounding in
/// function values. Assumes the minimizer is not a kink anchor.
fn projected_gradient(
    cost: &CostFunction,
    set: &ConvexSet,
    s: &DVector<f64>,
    warm: &DVector<f64>,
    opts: OracleOptions,
) -> DVector<f64> {
    let smooth = smooth_curvature_bound(cost);
    let mut y = set.project(warm).unwrap_or_else(|_| warm.clone());
    let inner_tol = opts.tol * 1e-2 * (1.0 + s.norm());
    for _ in 0..opts.max_inner {
        let kink_curvature: f64 = cost
            .terms()
            .iter()
            .map(|t| match t {
                CostTerm::WeightedNormKink { weight, anchor } => weight / (&y - anchor).norm().max(1e-12),
                _ => 0.0,
            })
            .sum();
        let t = 1.0 / (smooth + kink_curvature);
        let g = cost.subgradient(&y) - s;
        let Ok(next) = set.project(&(&y - &g * t)) else {
            break;
        };
        let mapping = (&next - &y).norm() / t;
        y = next;
        if mapping <= inner_tol {
            break;
        }
    }
    y
}

/// Upper bound on the Hessian norm of the smooth terms.
fn smooth_curvature_bound(cost: &CostFunction) -> f64 {
    let bound: f64 = cost
        .terms()
        .iter()
        .map(|t| match t {
            CostTerm::Quadratic { q, .. } => (q + q.transpose()).norm(),
            CostTerm::LogSumExpPair { scale } => scale * scale,
            CostTerm::RationalSaturation { .. } => 2.0,
            CostTerm::WeightedNormKink { .. } => 0.0,
        })
        .sum();
    bound.max(1e-12)
}

/// Projected subgradient descent with steps `c / sqrt(k + 1)`, keeping the
/// best iterate; slow but independent of smoothness.
pub fn projected_subgradient(
    cost: &CostFunction,
    set: &ConvexSet,
    s: &DVector<f64>,
    start: &DVector<f64>,
    iterations: usize,
) -> DVector<f64> {
    let phi = |y: &DVector<f64>| cost.evaluate(y) - s.dot(y);
    let mut y = set.project(start).unwrap_or_else(|_| start.clone());
    let mut best = (phi(&y), y.clone());
    let c = 1.0 / cost.strong_convexity().max(1e-3);
    for k in 0..iterations {
        let g = cost.subgradient(&y) - s;
        let Ok(next) = set.project(&(&y - g * (c / (k as f64 + 1.0)))) else {
            break;
        };
        y = next;
        let v = phi(&y);
        if v < best.0 {
            best = (v, y.clone());
        }
    }
    best.1
}
