//! Projectable convex sets and nonsmooth convex costs.
//!
//! Every cost is a sum of primitive terms. Only [`CostTerm::WeightedNormKink`]
//! is nonsmooth, and its subdifferential at the anchor is a Euclidean ball
//! centred at zero, so the subdifferential of a whole cost is always
//! `gradient_of_smooth_part + radius * B`. That makes minimum-norm and
//! nearest-point selections closed-form.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

/// Dykstra iteration cap for polyhedral projections.
pub const DYKSTRA_MAX_ITERS: usize = 10_000;
/// Dykstra stops once a full sweep moves the iterate less than this.
pub const DYKSTRA_STEP_TOL: f64 = 1e-12;
/// Points farther than this outside a set count as infeasible.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConvexError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("box bound {index}: lower {lower} exceeds upper {upper}")]
    InvertedBox { index: usize, lower: f64, upper: f64 },
    #[error("ball radius must be positive and finite, got {0}")]
    BadRadius(f64),
    #[error("polyhedron needs at least one row")]
    EmptyPolyhedron,
    #[error("polyhedron row {0} has a zero normal")]
    ZeroNormal(usize),
    #[error("product set needs at least one part")]
    EmptyProduct,
    #[error("polyhedral projection did not converge after {iterations} sweeps (membership residual {residual:e})")]
    ProjectionNotConverged { iterations: usize, residual: f64 },
    #[error("cost term {term}: {reason}")]
    BadCostTerm { term: usize, reason: String },
    #[error("declared strong convexity modulus {declared} exceeds the quadratic bound {bound}")]
    ModulusTooLarge { declared: f64, bound: f64 },
    #[error("cost is not convex on the feasible set: curvature floor {0:e}")]
    NotConvex(f64),
    #[error("non-finite input")]
    NonFinite,
}

/// `normal . y <= offset`
#[derive(Debug, Clone, PartialEq)]
pub struct Halfspace {
    pub normal: DVector<f64>,
    pub offset: f64,
}

impl Halfspace {
    pub fn new(normal: DVector<f64>, offset: f64) -> Self {
        Halfspace { normal, offset }
    }

    fn project(&self, p: &DVector<f64>) -> DVector<f64> {
        let excess = self.normal.dot(p) - self.offset;
        if excess <= 0.0 {
            p.clone()
        } else {
            p - &self.normal * (excess / self.normal.norm_squared())
        }
    }

    fn violation(&self, p: &DVector<f64>) -> f64 {
        ((self.normal.dot(p) - self.offset) / self.normal.norm()).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConvexSet {
    Box { lower: DVector<f64>, upper: DVector<f64> },
    Ball { center: DVector<f64>, radius: f64 },
    Polyhedron { rows: Vec<Halfspace> },
    Product { parts: Vec<ConvexSet> },
    WholeSpace { dim: usize },
}

impl ConvexSet {
    pub fn interval(lower: f64, upper: f64) -> Self {
        ConvexSet::Box { lower: DVector::from_element(1, lower), upper: DVector::from_element(1, upper) }
    }

    pub fn dim(&self) -> usize {
        match self {
            ConvexSet::Box { lower, .. } => lower.len(),
            ConvexSet::Ball { center, .. } => center.len(),
            ConvexSet::Polyhedron { rows } => rows.first().map_or(0, |r| r.normal.len()),
            ConvexSet::Product { parts } => parts.iter().map(ConvexSet::dim).sum(),
            ConvexSet::WholeSpace { dim } => *dim,
        }
    }

    pub fn validate(&self) -> Result<(), ConvexError> {
        match self {
            ConvexSet::Box { lower, upper } => {
                if lower.len() != upper.len() {
                    return Err(ConvexError::Dimension { expected: lower.len(), got: upper.len() });
                }
                for (index, (&lo, &hi)) in lower.iter().zip(upper.iter()).enumerate() {
                    if lo.is_nan() || hi.is_nan() {
                        return Err(ConvexError::NonFinite);
                    }
                    if lo > hi {
                        return Err(ConvexError::InvertedBox { index, lower: lo, upper: hi });
                    }
                }
                Ok(())
            }
            ConvexSet::Ball { center, radius } => {
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(ConvexError::BadRadius(*radius));
                }
                if center.iter().any(|c| !c.is_finite()) {
                    return Err(ConvexError::NonFinite);
                }
                Ok(())
            }
            ConvexSet::Polyhedron { rows } => {
                let Some(first) = rows.first() else {
                    return Err(ConvexError::EmptyPolyhedron);
                };
                for (i, row) in rows.iter().enumerate() {
                    if row.normal.len() != first.normal.len() {
                        return Err(ConvexError::Dimension { expected: first.normal.len(), got: row.normal.len() });
                    }
                    if row.normal.iter().any(|c| !c.is_finite()) || !row.offset.is_finite() {
                        return Err(ConvexError::NonFinite);
                    }
                    if row.normal.norm() == 0.0 {
                        return Err(ConvexError::ZeroNormal(i));
                    }
                }
                Ok(())
            }
            ConvexSet::Product { parts } => {
                if parts.is_empty() {
                    return Err(ConvexError::EmptyProduct);
                }
                parts.iter().try_for_each(ConvexSet::validate)
            }
            ConvexSet::WholeSpace { .. } => Ok(()),
        }
    }

    fn check_dim(&self, p: &DVector<f64>) -> Result<(), ConvexError> {
        if p.len() != self.dim() {
            return Err(ConvexError::Dimension { expected: self.dim(), got: p.len() });
        }
        Ok(())
    }

    /// Euclidean projection `argmin_{q in set} |p - q|`.
    pub fn project(&self, p: &DVector<f64>) -> Result<DVector<f64>, ConvexError> {
        self.check_dim(p)?;
        match self {
            ConvexSet::Box { lower, upper } => Ok(DVector::from_fn(p.len(), |i, _| p[i].max(lower[i]).min(upper[i]))),
            ConvexSet::Ball { center, radius } => {
                let offset = p - center;
                let dist = offset.norm();
                if dist <= *radius {
                    Ok(p.clone())
                } else {
                    Ok(center + offset * (*radius / dist))
                }
            }
            ConvexSet::Polyhedron { rows } => project_polyhedron(rows, p),
            ConvexSet::Product { parts } => {
                let mut out = DVector::zeros(p.len());
                let mut at = 0;
                for part in parts {
                    let k = part.dim();
                    let proj = part.project(&p.rows(at, k).into_owned())?;
                    out.rows_mut(at, k).copy_from(&proj);
                    at += k;
                }
                Ok(out)
            }
            ConvexSet::WholeSpace { .. } => Ok(p.clone()),
        }
    }

    /// Largest constraint violation of `p`; zero inside the set. Computed
    /// from the constraints directly, not through a projection.
    pub fn membership_residual(&self, p: &DVector<f64>) -> f64 {
        match self {
            ConvexSet::Box { lower, upper } => p
                .iter()
                .zip(lower.iter().zip(upper.iter()))
                .map(|(&x, (&lo, &hi))| (lo - x).max(x - hi).max(0.0))
                .fold(0.0, f64::max),
            ConvexSet::Ball { center, radius } => ((p - center).norm() - radius).max(0.0),
            ConvexSet::Polyhedron { rows } => rows.iter().map(|r| r.violation(p)).fold(0.0, f64::max),
            ConvexSet::Product { parts } => {
                let mut at = 0;
                let mut worst = 0.0f64;
                for part in parts {
                    let k = part.dim();
                    worst = worst.max(part.membership_residual(&p.rows(at, k).into_owned()));
                    at += k;
                }
                worst
            }
            ConvexSet::WholeSpace { .. } => 0.0,
        }
    }

    pub fn contains(&self, p: &DVector<f64>) -> bool {
        self.membership_residual(p) <= MEMBERSHIP_TOL
    }

    /// Euclidean distance from `p` to the set.
    pub fn distance(&self, p: &DVector<f64>) -> Result<f64, ConvexError> {
        Ok((p - self.project(p)?).norm())
    }

    /// Norm of the projection of `z` onto the tangent cone at `y`, which by
    /// Moreau's decomposition equals the distance from `z` to the normal cone
    /// `N(y)`. Evaluated as `|P(y + eta z) - y| / eta`, exact for polyhedral
    /// pieces and accurate to `O(eta |z|^2 / radius)` on balls.
    pub fn normal_cone_distance(&self, y: &DVector<f64>, z: &DVector<f64>, eta: f64) -> Result<f64, ConvexError> {
        let moved = self.project(&(y + z * eta))?;
        Ok((moved - y).norm() / eta)
    }

    /// Axis-aligned box containing the set, if it is bounded in a way that can
    /// be read off without optimisation.
    pub fn bounding_box(&self) -> Option<(DVector<f64>, DVector<f64>)> {
        match self {
            ConvexSet::Box { lower, upper } => {
                if lower.iter().chain(upper.iter()).all(|v| v.is_finite()) {
                    Some((lower.clone(), upper.clone()))
                } else {
                    None
                }
            }
            ConvexSet::Ball { center, radius } => Some((center.add_scalar(-radius), center.add_scalar(*radius))),
            ConvexSet::Polyhedron { rows } => polyhedron_axis_bounds(rows),
            ConvexSet::Product { parts } => {
                let mut lo = Vec::new();
                let mut hi = Vec::new();
                for part in parts {
                    let (l, h) = part.bounding_box()?;
                    lo.extend(l.iter());
                    hi.extend(h.iter());
                }
                Some((DVector::from_vec(lo), DVector::from_vec(hi)))
            }
            ConvexSet::WholeSpace { .. } => None,
        }
    }

    /// Projection of `z` onto the normal cone `N(y)` for a point `y` in the
    /// set. Constraints within `active_tol` of binding count as active.
    pub fn normal_cone_projection(
        &self,
        y: &DVector<f64>,
        z: &DVector<f64>,
        active_tol: f64,
    ) -> Result<DVector<f64>, ConvexError> {
        self.check_dim(y)?;
        self.check_dim(z)?;
        match self {
            ConvexSet::Box { lower, upper } => Ok(DVector::from_fn(y.len(), |k, _| {
                let at_lo = y[k] - lower[k] <= active_tol;
                let at_hi = upper[k] - y[k] <= active_tol;
                match (at_lo, at_hi) {
                    (true, true) => z[k],
                    (true, false) => z[k].min(0.0),
                    (false, true) => z[k].max(0.0),
                    (false, false) => 0.0,
                }
            })),
            ConvexSet::Ball { center, radius } => {
                let offset = y - center;
                let n = offset.norm();
                if n < radius - active_tol || n == 0.0 {
                    return Ok(DVector::zeros(y.len()));
                }
                let unit = offset / n;
                Ok(&unit * unit.dot(z).max(0.0))
            }
            ConvexSet::Polyhedron { rows } => {
                let active: Vec<&Halfspace> =
                    rows.iter().filter(|r| r.offset - r.normal.dot(y) <= active_tol * r.normal.norm()).collect();
                Ok(conic_projection(&active, z))
            }
            ConvexSet::Product { parts } => {
                let mut out = DVector::zeros(y.len());
                let mut at = 0;
                for part in parts {
                    let k = part.dim();
                    let piece = part.normal_cone_projection(
                        &y.rows(at, k).into_owned(),
                        &z.rows(at, k).into_owned(),
                        active_tol,
                    )?;
                    out.rows_mut(at, k).copy_from(&piece);
                    at += k;
                }
                Ok(out)
            }
            ConvexSet::WholeSpace { dim } => Ok(DVector::zeros(*dim)),
        }
    }

    /// Inner approximation pulled away from the boundary, used by the Slater
    /// heuristic. `margin` is relative for boxes and balls and absolute (per
    /// unit normal) for halfspaces. Returns `None` if the set has no room.
    pub fn shrunk(&self, margin: f64) -> Option<ConvexSet> {
        match self {
            ConvexSet::Box { lower, upper } => {
                let width = upper - lower;
                if width.iter().any(|w| *w <= 0.0) {
                    return None;
                }
                let pad = width.map(|w| if w.is_finite() { margin * w } else { margin });
                Some(ConvexSet::Box { lower: lower + &pad, upper: upper - &pad })
            }
            ConvexSet::Ball { center, radius } => {
                Some(ConvexSet::Ball { center: center.clone(), radius: radius * (1.0 - margin) })
            }
            ConvexSet::Polyhedron { rows } => Some(ConvexSet::Polyhedron {
                rows: rows
                    .iter()
                    .map(|r| Halfspace::new(r.normal.clone(), r.offset - margin * r.normal.norm()))
                    .collect(),
            }),
            ConvexSet::Product { parts } => parts
                .iter()
                .map(|p| p.shrunk(margin))
                .collect::<Option<Vec<_>>>()
                .map(|parts| ConvexSet::Product { parts }),
            ConvexSet::WholeSpace { dim } => Some(ConvexSet::WholeSpace { dim: *dim }),
        }
    }
}

/// Reads per-coordinate bounds off rows of the form `±e_k . y <= c`. Returns
/// `None` unless every coordinate ends up bounded on both sides by such rows
/// or by a combination with a single other row of nonnegative normals.
fn polyhedron_axis_bounds(rows: &[Halfspace]) -> Option<(DVector<f64>, DVector<f64>)> {
    let d = rows.first()?.normal.len();
    let mut lo = DVector::from_element(d, f64::NEG_INFINITY);
    let mut hi = DVector::from_element(d, f64::INFINITY);
    for r in rows {
        let nz: Vec<usize> = (0..d).filter(|&k| r.normal[k] != 0.0).collect();
        if let [k] = nz[..] {
            let bound = r.offset / r.normal[k];
            if r.normal[k] > 0.0 {
                hi[k] = hi[k].min(bound);
            } else {
                lo[k] = lo[k].max(bound);
            }
        }
    }
    // Rows with all-positive normals cap each coordinate once the others are
    // bounded below, e.g. y1 + y2 <= 6 with y1 >= 0.5, y2 >= 1.
    for r in rows {
        if r.normal.iter().all(|&a| a >= 0.0) && r.normal.iter().filter(|&&a| a > 0.0).count() > 1 {
            for k in 0..d {
                if r.normal[k] <= 0.0 {
                    continue;
                }
                let others: f64 = (0..d).filter(|&j| j != k).map(|j| r.normal[j] * lo[j]).sum();
                if others.is_finite() {
                    hi[k] = hi[k].min((r.offset - others) / r.normal[k]);
                }
            }
        }
    }
    if lo.iter().chain(hi.iter()).all(|v| v.is_finite()) {
        Some((lo, hi))
    } else {
        None
    }
}

/// Projection onto the cone generated by the rows' normals, by enumerating
/// supports and keeping the closest nonnegative combination.
fn conic_projection(rows: &[&Halfspace], z: &DVector<f64>) -> DVector<f64> {
    let mut best = DVector::zeros(z.len());
    let mut best_dist = z.norm();
    let m = rows.len().min(16);
    for mask in 1u32..(1u32 << m) {
        let support: Vec<usize> = (0..m).filter(|k| mask & (1 << k) != 0).collect();
        let g = DMatrix::from_fn(z.len(), support.len(), |i, j| rows[support[j]].normal[i]);
        let gram = g.transpose() * &g;
        let Some(chol) = gram.cholesky() else {
            continue;
        };
        let coef = chol.solve(&(g.transpose() * z));
        if coef.iter().any(|c| *c < 0.0) {
            continue;
        }
        let point = &g * coef;
        let dist = (z - &point).norm();
        if dist < best_dist {
            best_dist = dist;
            best = point;
        }
    }
    best
}

/// Upper bound on active-set candidates tried before falling back to Dykstra.
const ACTIVE_SET_BUDGET: usize = 50_000;

fn project_polyhedron(rows: &[Halfspace], p: &DVector<f64>) -> Result<DVector<f64>, ConvexError> {
    if rows.iter().all(|r| r.normal.dot(p) <= r.offset) {
        return Ok(p.clone());
    }
    let d = p.len();
    let k_max = d.min(rows.len());
    let mut count = 0usize;
    let mut binom = 1usize;
    for k in 1..=k_max {
        binom = binom.saturating_mul(rows.len() + 1 - k) / k;
        count = count.saturating_add(binom);
    }
    if count <= ACTIVE_SET_BUDGET {
        if let Some(x) = active_set_projection(rows, p, k_max) {
            return Ok(x);
        }
    }
    dykstra(rows, p)
}

/// Exact projection by enumerating linearly independent active sets of size
/// at most `d` and keeping the closest candidate satisfying the KKT system.
fn active_set_projection(rows: &[Halfspace], p: &DVector<f64>, k_max: usize) -> Option<DVector<f64>> {
    let scale = 1.0 + p.amax() + rows.iter().map(|r| r.offset.abs()).fold(0.0, f64::max);
    let tol = 1e-12 * scale;
    let mut best: Option<(f64, DVector<f64>)> = None;
    let mut support = Vec::with_capacity(k_max);
    fn visit(
        rows: &[Halfspace],
        p: &DVector<f64>,
        start: usize,
        k_max: usize,
        tol: f64,
        support: &mut Vec<usize>,
        best: &mut Option<(f64, DVector<f64>)>,
    ) {
        if !support.is_empty() {
            let g = DMatrix::from_fn(p.len(), support.len(), |i, j| rows[support[j]].normal[i]);
            let rhs = DVector::from_fn(support.len(), |j, _| rows[support[j]].normal.dot(p) - rows[support[j]].offset);
            if let Some(chol) = (g.transpose() * &g).cholesky() {
                let lambda = chol.solve(&rhs);
                if lambda.iter().all(|l| *l >= -tol) {
                    let x = p - &g * &lambda;
                    if rows.iter().all(|r| r.normal.dot(&x) - r.offset <= tol * (1.0 + r.normal.norm())) {
                        let dist = (&x - p).norm();
                        if best.as_ref().is_none_or(|(b, _)| dist < *b) {
                            *best = Some((dist, x));
                        }
                    }
                }
            } else {
                return;
            }
        }
        if support.len() == k_max {
            return;
        }
        for k in start..rows.len() {
            support.push(k);
            visit(rows, p, k + 1, k_max, tol, support, best);
            support.pop();
        }
    }
    visit(rows, p, 0, k_max, tol, &mut support, &mut best);
    best.map(|(_, x)| x)
}

/// Dykstra's alternating projections onto an intersection of halfspaces.
fn dykstra(rows: &[Halfspace], p: &DVector<f64>) -> Result<DVector<f64>, ConvexError> {
    let mut x = p.clone();
    let mut increments = vec![DVector::zeros(p.len()); rows.len()];
    for sweep in 1..=DYKSTRA_MAX_ITERS {
        let start = x.clone();
        for (row, inc) in rows.iter().zip(increments.iter_mut()) {
            let shifted = &x + &*inc;
            let next = row.project(&shifted);
            *inc = shifted - &next;
            x = next;
        }
        if (&x - &start).norm() < DYKSTRA_STEP_TOL {
            let residual = rows.iter().map(|r| r.violation(&x)).fold(0.0, f64::max);
            if residual <= MEMBERSHIP_TOL {
                return Ok(x);
            }
            return Err(ConvexError::ProjectionNotConverged { iterations: sweep, residual });
        }
    }
    let residual = rows.iter().map(|r| r.violation(&x)).fold(0.0, f64::max);
    Err(ConvexError::ProjectionNotConverged { iterations: DYKSTRA_MAX_ITERS, residual })
}

/// A primitive cost term on `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub enum CostTerm {
    /// `y^T Q y + b^T y + c`
    Quadratic { q: DMatrix<f64>, b: DVector<f64>, c: f64 },
    /// `weight * |y - anchor|`
    WeightedNormKink { weight: f64, anchor: DVector<f64> },
    /// `sum_j ln(exp(-scale y_j) + exp(scale y_j))`
    LogSumExpPair { scale: f64 },
    /// `sum_j y_j^2 / (denomscale y_j^2 + 1)`; concave in places, so only
    /// admitted next to a dominating quadratic.
    RationalSaturation { denomscale: f64 },
}

impl CostTerm {
    pub fn quadratic_scalar(gamma: f64, linear: f64, constant: f64) -> Self {
        CostTerm::Quadratic { q: DMatrix::from_element(1, 1, gamma), b: DVector::from_element(1, linear), c: constant }
    }

    /// `|y - center|^2 = y^T y - 2 center^T y + |center|^2`
    pub fn squared_distance(center: &DVector<f64>) -> Self {
        let d = center.len();
        CostTerm::Quadratic { q: DMatrix::identity(d, d), b: center * -2.0, c: center.norm_squared() }
    }

    fn value(&self, y: &DVector<f64>) -> f64 {
        match self {
            CostTerm::Quadratic { q, b, c } => y.dot(&(q * y)) + b.dot(y) + c,
            CostTerm::WeightedNormKink { weight, anchor } => weight * (y - anchor).norm(),
            CostTerm::LogSumExpPair { scale } => y
                .iter()
                .map(|&v| {
                    let a = (scale * v).abs();
                    a + (-2.0 * a).exp().ln_1p()
                })
                .sum(),
            CostTerm::RationalSaturation { denomscale } => y.iter().map(|&v| v * v / (denomscale * v * v + 1.0)).sum(),
        }
    }

    /// Gradient where it exists; `None` at the anchor of a kink.
    fn gradient(&self, y: &DVector<f64>, kink_tol: f64) -> Option<DVector<f64>> {
        match self {
            CostTerm::Quadratic { q, b, .. } => Some(q * y + q.transpose() * y + b),
            CostTerm::WeightedNormKink { weight, anchor } => {
                let diff = y - anchor;
                let n = diff.norm();
                if n <= kink_tol {
                    None
                } else {
                    Some(diff * (weight / n))
                }
            }
            CostTerm::LogSumExpPair { scale } => Some(y.map(|v| scale * (scale * v).tanh())),
            CostTerm::RationalSaturation { denomscale } => Some(y.map(|v| {
                let den = denomscale * v * v + 1.0;
                2.0 * v / (den * den)
            })),
        }
    }

    /// Second derivative along coordinate `j` of the separable terms at
    /// scalar value `v`; quadratics are handled as a matrix.
    fn separable_curvature(&self, v: f64) -> f64 {
        match self {
            CostTerm::LogSumExpPair { scale } => {
                let c = (scale * v).cosh();
                scale * scale / (c * c)
            }
            CostTerm::RationalSaturation { denomscale } => {
                let den = denomscale * v * v + 1.0;
                (2.0 - 6.0 * denomscale * v * v) / (den * den * den)
            }
            _ => 0.0,
        }
    }
}

/// `∂f(y) = center + radius * B` (closed Euclidean ball).
#[derive(Debug, Clone, PartialEq)]
pub struct Subdifferential {
    pub center: DVector<f64>,
    pub radius: f64,
}

impl Subdifferential {
    /// Element of the subdifferential closest to `target`.
    pub fn nearest(&self, target: &DVector<f64>) -> DVector<f64> {
        let offset = target - &self.center;
        let n = offset.norm();
        if n <= self.radius {
            target.clone()
        } else {
            &self.center + offset * (self.radius / n)
        }
    }

    pub fn min_norm(&self) -> DVector<f64> {
        self.nearest(&DVector::zeros(self.center.len()))
    }

    pub fn distance_to(&self, target: &DVector<f64>) -> f64 {
        ((target - &self.center).norm() - self.radius).max(0.0)
    }
}

/// Componentwise enclosure of a subdifferential. `exact` is false when a
/// multi-dimensional ball had to be boxed.
#[derive(Debug, Clone, PartialEq)]
pub struct SubdiffInterval {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
    pub exact: bool,
}

/// Sum of primitive terms with a declared strong-convexity modulus.
#[derive(Debug, Clone, PartialEq)]
pub struct CostFunction {
    dim: usize,
    terms: Vec<CostTerm>,
    strong_convexity: f64,
}

impl CostFunction {
    pub fn new(dim: usize, terms: Vec<CostTerm>, strong_convexity: f64) -> Result<Self, ConvexError> {
        for (term, t) in terms.iter().enumerate() {
            let bad = |reason: &str| ConvexError::BadCostTerm { term, reason: reason.to_string() };
            match t {
                CostTerm::Quadratic { q, b, c } => {
                    if q.shape() != (dim, dim) || b.len() != dim {
                        return Err(bad("quadratic dimensions do not match the decision dimension"));
                    }
                    if q.iter().chain(b.iter()).any(|v| !v.is_finite()) || !c.is_finite() {
                        return Err(ConvexError::NonFinite);
                    }
                    let sym = (q + q.transpose()) * 0.5;
                    if min_eigenvalue(&sym) < -1e-12 * sym.amax().max(1.0) {
                        return Err(bad("quadratic matrix is not positive semidefinite"));
                    }
                }
                CostTerm::WeightedNormKink { weight, anchor } => {
                    if anchor.len() != dim {
                        return Err(bad("anchor dimension does not match"));
                    }
                    if !(weight.is_finite() && *weight >= 0.0) {
                        return Err(bad("kink weight must be nonnegative"));
                    }
                }
                CostTerm::LogSumExpPair { scale } => {
                    if !scale.is_finite() {
                        return Err(ConvexError::NonFinite);
                    }
                }
                CostTerm::RationalSaturation { denomscale } => {
                    if !(denomscale.is_finite() && *denomscale > 0.0) {
                        return Err(bad("denomscale must be positive"));
                    }
                }
            }
        }
        if !(strong_convexity.is_finite() && strong_convexity >= 0.0) {
            return Err(ConvexError::BadCostTerm { term: terms.len(), reason: "modulus must be >= 0".into() });
        }
        let f = CostFunction { dim, terms, strong_convexity };
        if let Some(q) = f.quadratic_sum() {
            let bound = 2.0 * min_eigenvalue(&((&q + q.transpose()) * 0.5));
            if strong_convexity > bound + 1e-12 {
                return Err(ConvexError::ModulusTooLarge { declared: strong_convexity, bound });
            }
        }
        Ok(f)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[CostTerm] {
        &self.terms
    }

    pub fn strong_convexity(&self) -> f64 {
        self.strong_convexity
    }

    fn quadratic_sum(&self) -> Option<DMatrix<f64>> {
        let mut acc: Option<DMatrix<f64>> = None;
        for t in &self.terms {
            if let CostTerm::Quadratic { q, .. } = t {
                acc = Some(match acc {
                    Some(a) => a + q,
                    None => q.clone(),
                });
            }
        }
        acc
    }

    pub fn has_kink(&self) -> bool {
        self.terms.iter().any(|t| matches!(t, CostTerm::WeightedNormKink { weight, .. } if *weight > 0.0))
    }

    pub fn evaluate(&self, y: &DVector<f64>) -> f64 {
        debug_assert_eq!(y.len(), self.dim);
        self.terms.iter().map(|t| t.value(y)).sum()
    }

    /// Clarke subdifferential at `y`. Kinks within `kink_tol` of their anchor
    /// count as active, which gives the enlargement `∂f(B(y, kink_tol))` up
    /// to the smooth terms' variation; `kink_tol = 0` is the exact set.
    pub fn subdifferential_with(&self, y: &DVector<f64>, kink_tol: f64) -> Subdifferential {
        let mut center = DVector::zeros(self.dim);
        let mut radius = 0.0;
        for t in &self.terms {
            match t.gradient(y, kink_tol) {
                Some(g) => center += g,
                None => {
                    if let CostTerm::WeightedNormKink { weight, .. } = t {
                        radius += weight;
                    }
                }
            }
        }
        Subdifferential { center, radius }
    }

    pub fn subdifferential(&self, y: &DVector<f64>) -> Subdifferential {
        self.subdifferential_with(y, 0.0)
    }

    /// Minimum-norm element of `∂f(y)`; the gradient wherever `f` is
    /// differentiable.
    pub fn subgradient(&self, y: &DVector<f64>) -> DVector<f64> {
        self.subdifferential(y).min_norm()
    }

    pub fn subdifferential_interval(&self, y: &DVector<f64>) -> SubdiffInterval {
        let sd = self.subdifferential(y);
        SubdiffInterval {
            lower: sd.center.add_scalar(-sd.radius),
            upper: sd.center.add_scalar(sd.radius),
            exact: sd.radius == 0.0 || self.dim == 1,
        }
    }

    /// Smallest eigenvalue of the Hessian bound `2 Sym(Q) + diag(min_j c_j)`
    /// where `c_j` is the separable curvature sampled on `samples` points of
    /// `[lower_j, upper_j]`. Kinks only add curvature and are ignored.
    pub fn curvature_floor(&self, lower: &DVector<f64>, upper: &DVector<f64>, samples: usize) -> f64 {
        let mut hess = match self.quadratic_sum() {
            Some(q) => &q + q.transpose(),
            None => DMatrix::zeros(self.dim, self.dim),
        };
        let separable: Vec<&CostTerm> = self
            .terms
            .iter()
            .filter(|t| matches!(t, CostTerm::LogSumExpPair { .. } | CostTerm::RationalSaturation { .. }))
            .collect();
        if !separable.is_empty() {
            for j in 0..self.dim {
                let (lo, hi) = (lower[j], upper[j]);
                let worst = (0..samples)
                    .map(|k| {
                        let v = if samples == 1 { lo } else { lo + (hi - lo) * k as f64 / (samples - 1) as f64 };
                        separable.iter().map(|t| t.separable_curvature(v)).sum::<f64>()
                    })
                    .fold(f64::INFINITY, f64::min);
                hess[(j, j)] += worst;
            }
        }
        min_eigenvalue(&hess)
    }

    /// Accepts the rational saturation term only when the combined curvature
    /// stays nonnegative on a 100-point grid per coordinate over `bounds`
    /// (or over the region where that term bends down if unbounded).
    pub fn check_convex_on(&self, bounds: Option<(DVector<f64>, DVector<f64>)>) -> Result<(), ConvexError> {
        let rational_scale = self.terms.iter().find_map(|t| match t {
            CostTerm::RationalSaturation { denomscale } => Some(*denomscale),
            _ => None,
        });
        let Some(c) = rational_scale else {
            return Ok(());
        };
        let (lo, hi) = bounds.unwrap_or_else(|| {
            let reach = 4.0 / c.sqrt();
            (DVector::from_element(self.dim, -reach), DVector::from_element(self.dim, reach))
        });
        let floor = self.curvature_floor(&lo, &hi, 100);
        if floor < -1e-12 {
            return Err(ConvexError::NotConvex(floor));
        }
        Ok(())
    }
}

pub(crate) fn min_eigenvalue(sym: &DMatrix<f64>) -> f64 {
    if sym.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(sym.clone()).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}
