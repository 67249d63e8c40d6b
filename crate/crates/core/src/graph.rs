//! Weighted communication digraphs and their Laplacian spectra.
//!
//! Convention: `weights[(i, j)] > 0` means node `i` receives information
//! from node `j` (edge `j -> i`). The Laplacian is `L = D_in - A` with
//! `D_in = diag(row sums of A)`, so `L * 1 = 0` always holds and
//! `1^T * L = 0` exactly when the graph is weight-balanced.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// `lambda_2(Sym(L))` must exceed this for a graph to count as connected.
pub const CONNECTIVITY_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("a communication graph needs at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("adjacency matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("weight a[{i}][{j}] = {value} is negative or not finite")]
    InvalidWeight { i: usize, j: usize, value: f64 },
    #[error("diagonal weight a[{0}][{0}] must be zero")]
    SelfLoop(usize),
    #[error("edge {from} -> {to} references a node outside 0..{n}")]
    EdgeOutOfRange { from: usize, to: usize, n: usize },
    #[error("graph is not connected (lambda_2 of Sym(L) = {lambda2:e})")]
    Disconnected { lambda2: f64 },
}

/// A directed edge `from -> to`; `to` receives information from `from`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    #[serde(default = "unit_weight")]
    pub weight: f64,
}

fn unit_weight() -> f64 {
    1.0
}

impl Edge {
    pub fn new(from: usize, to: usize, weight: f64) -> Self {
        Edge { from, to, weight }
    }

    pub fn unit(from: usize, to: usize) -> Self {
        Edge::new(from, to, 1.0)
    }
}

/// Weighted digraph given by its adjacency matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Digraph {
    weights: DMatrix<f64>,
}

impl Digraph {
    pub fn from_weights(weights: DMatrix<f64>) -> Result<Self, GraphError> {
        let (rows, cols) = weights.shape();
        if rows != cols {
            return Err(GraphError::NotSquare { rows, cols });
        }
        if rows < 2 {
            return Err(GraphError::TooFewNodes(rows));
        }
        for i in 0..rows {
            for j in 0..cols {
                let value = weights[(i, j)];
                if !value.is_finite() || value < 0.0 {
                    return Err(GraphError::InvalidWeight { i, j, value });
                }
            }
            if weights[(i, i)] != 0.0 {
                return Err(GraphError::SelfLoop(i));
            }
        }
        Ok(Digraph { weights })
    }

    /// Builds the adjacency matrix from an edge list. With `undirected` every
    /// edge is mirrored. Repeated edges accumulate their weights.
    pub fn from_edges(n: usize, edges: &[Edge], undirected: bool) -> Result<Self, GraphError> {
        if n < 2 {
            return Err(GraphError::TooFewNodes(n));
        }
        let mut weights = DMatrix::zeros(n, n);
        for e in edges {
            if e.from >= n || e.to >= n {
                return Err(GraphError::EdgeOutOfRange { from: e.from, to: e.to, n });
            }
            if e.from == e.to {
                return Err(GraphError::SelfLoop(e.from));
            }
            if !e.weight.is_finite() || e.weight < 0.0 {
                return Err(GraphError::InvalidWeight { i: e.to, j: e.from, value: e.weight });
            }
            weights[(e.to, e.from)] += e.weight;
            if undirected {
                weights[(e.from, e.to)] += e.weight;
            }
        }
        Digraph::from_weights(weights)
    }

    pub fn n_nodes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    /// Edges with positive weight, in row-major order of the adjacency matrix.
    pub fn edges(&self) -> Vec<Edge> {
        let n = self.n_nodes();
        let mut out = Vec::new();
        for to in 0..n {
            for from in 0..n {
                let w = self.weights[(to, from)];
                if w > 0.0 {
                    out.push(Edge::new(from, to, w));
                }
            }
        }
        out
    }

    pub fn scaled(&self, factor: f64) -> Result<Self, GraphError> {
        Digraph::from_weights(&self.weights * factor)
    }

    /// Relabels nodes so that old node `perm[k]` becomes new node `k`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n_nodes();
        assert_eq!(perm.len(), n, "permutation length must match node count");
        let weights = DMatrix::from_fn(n, n, |i, j| self.weights[(perm[i], perm[j])]);
        Digraph { weights }
    }

    pub fn in_degrees(&self) -> DVector<f64> {
        DVector::from_iterator(self.n_nodes(), self.weights.row_iter().map(|r| r.sum()))
    }

    pub fn out_degrees(&self) -> DVector<f64> {
        DVector::from_iterator(self.n_nodes(), self.weights.column_iter().map(|c| c.sum()))
    }

    pub fn laplacian(&self) -> LaplacianBundle {
        LaplacianBundle::from_matrix(self.laplacian_matrix())
    }

    pub fn laplacian_matrix(&self) -> DMatrix<f64> {
        let mut l = -self.weights.clone();
        for (i, d) in self.in_degrees().iter().enumerate() {
            l[(i, i)] = *d;
        }
        l
    }

    /// Every column sum of `L` vanishes to within `tol`, i.e. in-degree
    /// equals out-degree at every node.
    pub fn is_weight_balanced(&self, tol: f64) -> bool {
        let din = self.in_degrees();
        let dout = self.out_degrees();
        din.iter().zip(dout.iter()).all(|(a, b)| (a - b).abs() <= tol)
    }

    pub fn is_undirected(&self, tol: f64) -> bool {
        let n = self.n_nodes();
        (0..n).all(|i| (0..i).all(|j| (self.weights[(i, j)] - self.weights[(j, i)]).abs() <= tol))
    }

    /// Every node reaches every other node along positive-weight edges.
    pub fn is_strongly_connected(&self) -> bool {
        let n = self.n_nodes();
        // Forward reachability from node 0 along j -> i, then backward.
        let reach = |forward: bool| {
            let mut seen = vec![false; n];
            let mut stack = vec![0usize];
            seen[0] = true;
            while let Some(u) = stack.pop() {
                for (v, visited) in seen.iter_mut().enumerate() {
                    let w = if forward { self.weights[(v, u)] } else { self.weights[(u, v)] };
                    if w > 0.0 && !*visited {
                        *visited = true;
                        stack.push(v);
                    }
                }
            }
            seen.into_iter().all(|s| s)
        };
        reach(true) && reach(false)
    }
}

/// The Laplacian together with the spectral quantities the gain bounds use.
#[derive(Debug, Clone)]
pub struct LaplacianBundle {
    pub l: DMatrix<f64>,
    /// `(L + L^T) / 2`
    pub sym_l: DMatrix<f64>,
    /// Eigenvalues of `sym_l`, ascending.
    pub eigs_sym: Vec<f64>,
    /// Second-smallest eigenvalue of `sym_l`.
    pub lambda2_sym: f64,
    /// Largest singular value of `L`.
    pub spectral_norm: f64,
}

impl LaplacianBundle {
    pub fn from_matrix(l: DMatrix<f64>) -> Self {
        let sym_l = (&l + l.transpose()) * 0.5;
        let mut eigs_sym: Vec<f64> = SymmetricEigen::new(sym_l.clone()).eigenvalues.iter().copied().collect();
        eigs_sym.sort_by(f64::total_cmp);
        let lambda2_sym = eigs_sym.get(1).copied().unwrap_or(0.0);
        let spectral_norm = l.singular_values().iter().copied().fold(0.0, f64::max);
        LaplacianBundle { l, sym_l, eigs_sym, lambda2_sym, spectral_norm }
    }

    pub fn n_nodes(&self) -> usize {
        self.l.nrows()
    }

    pub fn is_connected(&self) -> bool {
        self.lambda2_sym > CONNECTIVITY_TOL
    }

    pub fn is_symmetric(&self) -> bool {
        let scale = self.l.amax().max(1.0);
        (&self.l - self.l.transpose()).amax() <= 1e-12 * scale
    }

    /// `(L ⊗ I_dim) v` for a stacked vector of `n` blocks of length `dim`.
    pub fn apply_kron(&self, v: &DVector<f64>, dim: usize) -> DVector<f64> {
        kron_apply(&self.l, v, dim)
    }
}

/// `(M ⊗ I_dim) v` without forming the Kronecker product.
pub fn kron_apply(m: &DMatrix<f64>, v: &DVector<f64>, dim: usize) -> DVector<f64> {
    let (rows, cols) = m.shape();
    debug_assert_eq!(v.len(), cols * dim);
    let mut out = DVector::zeros(rows * dim);
    for i in 0..rows {
        for j in 0..cols {
            let mij = m[(i, j)];
            if mij == 0.0 {
                continue;
            }
            for k in 0..dim {
                out[i * dim + k] += mij * v[j * dim + k];
            }
        }
    }
    out
}

/// Orthogonal split `T = [r R]` of `R^N` into the consensus direction and
/// its complement, with `J = R^T L R`.
#[derive(Debug, Clone)]
pub struct OrthogonalDecomposition {
    /// `1 / sqrt(N) * 1`
    pub r: DVector<f64>,
    /// `N x (N-1)`, orthonormal columns spanning `1^⊥`.
    pub basis: DMatrix<f64>,
    /// `R^T L R`; diagonal (the nonzero eigenvalues) for undirected graphs.
    pub reduced: DMatrix<f64>,
}

impl OrthogonalDecomposition {
    /// `[r R]` as a square orthogonal matrix.
    pub fn transform(&self) -> DMatrix<f64> {
        let n = self.r.len();
        let mut t = DMatrix::zeros(n, n);
        t.set_column(0, &self.r);
        t.view_mut((0, 1), (n, n - 1)).copy_from(&self.basis);
        t
    }

    /// `[r R] blockdiag(0, J) [r R]^T`
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.basis * &self.reduced * self.basis.transpose()
    }

    /// Splits a stacked `n*dim` vector into `(r^T v, R^T v)` applied blockwise
    /// per coordinate; the second part is stacked `(n-1)*dim`.
    pub fn split(&self, v: &DVector<f64>, dim: usize) -> (DVector<f64>, DVector<f64>) {
        let head = kron_apply(&DMatrix::from_row_slice(1, self.r.len(), self.r.as_slice()), v, dim);
        let tail = kron_apply(&self.basis.transpose(), v, dim);
        (head, tail)
    }
}

/// Orthogonal decomposition of a connected graph's Laplacian. Symmetric
/// Laplacians use the eigenvector basis so `J` is diagonal; otherwise `R` is
/// the Householder complement of `r`.
pub fn orthogonal_decomposition(lb: &LaplacianBundle) -> Result<OrthogonalDecomposition, GraphError> {
    if !lb.is_connected() {
        return Err(GraphError::Disconnected { lambda2: lb.lambda2_sym });
    }
    let n = lb.n_nodes();
    let r = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let basis = if lb.is_symmetric() {
        let eig = SymmetricEigen::new(lb.sym_l.clone());
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        // Connected: the smallest eigenvalue is simple with eigenvector ±r,
        // so the remaining eigenvectors are already orthogonal to r.
        let mut basis = DMatrix::zeros(n, n - 1);
        for (col, &idx) in order.iter().skip(1).enumerate() {
            let mut v = eig.eigenvectors.column(idx).into_owned();
            v -= &r * r.dot(&v);
            v /= v.norm();
            basis.set_column(col, &v);
        }
        basis
    } else {
        householder_complement(&r)
    };
    let reduced = basis.transpose() * &lb.l * &basis;
    Ok(OrthogonalDecomposition { r, basis, reduced })
}

/// Columns 2..n of the Householder reflector mapping `e_1` onto the unit
/// vector `r`.
fn householder_complement(r: &DVector<f64>) -> DMatrix<f64> {
    let n = r.len();
    let mut u = r.clone();
    u[0] -= 1.0;
    let un = u.norm();
    let h = if un < 1e-15 {
        DMatrix::identity(n, n)
    } else {
        u /= un;
        DMatrix::identity(n, n) - (&u * u.transpose()) * 2.0
    };
    h.columns(1, n - 1).into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    fn directed_cycle(n: usize) -> Digraph {
        let edges: Vec<Edge> = (0..n).map(|i| Edge::unit(i, (i + 1) % n)).collect();
        Digraph::from_edges(n, &edges, false).unwrap()
    }

    fn complete(n: usize) -> Digraph {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                edges.push(Edge::unit(i, j));
            }
        }
        Digraph::from_edges(n, &edges, true).unwrap()
    }

    /// Characteristic polynomial coefficients via Faddeev-LeVerrier, highest
    /// degree first; independent of the eigensolver.
    fn char_poly(m: &DMatrix<f64>) -> Vec<f64> {
        let n = m.nrows();
        let mut coeffs = vec![1.0];
        let mut mk = DMatrix::<f64>::zeros(n, n);
        let eye = DMatrix::<f64>::identity(n, n);
        for k in 1..=n {
            mk = m * (&mk + &eye * *coeffs.last().unwrap());
            let c = -mk.trace() / k as f64;
            coeffs.push(c);
        }
        coeffs
    }

    fn poly_eval(c: &[f64], x: f64) -> f64 {
        c.iter().fold(0.0, |acc, &a| acc * x + a)
    }

    /// Real roots by dense sign scanning plus bisection; double roots are
    /// caught by scanning the derivative as well.
    fn real_roots(c: &[f64], lo: f64, hi: f64) -> Vec<f64> {
        let deriv: Vec<f64> = {
            let deg = c.len() - 1;
            c[..deg].iter().enumerate().map(|(i, &a)| a * (deg - i) as f64).collect()
        };
        let bisect = |f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64| {
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if f(a).signum() == f(m).signum() {
                    a = m;
                } else {
                    b = m;
                }
            }
            0.5 * (a + b)
        };
        let steps = 20000;
        let mut roots = Vec::new();
        let f = |x: f64| poly_eval(c, x);
        let df = |x: f64| poly_eval(&deriv, x);
        for k in 0..steps {
            let a = lo + (hi - lo) * k as f64 / steps as f64;
            let b = lo + (hi - lo) * (k + 1) as f64 / steps as f64;
            if f(a) == 0.0 {
                roots.push(a);
            } else if f(a).signum() != f(b).signum() && f(b) != 0.0 {
                roots.push(bisect(&f, a, b));
            } else if df(a).signum() != df(b).signum() {
                let r = bisect(&df, a, b);
                if f(r).abs() < 1e-9 {
                    roots.push(r);
                    roots.push(r);
                }
            }
        }
        roots
    }

    #[test]
    fn k2_closed_form() {
        let g = Digraph::from_edges(2, &[Edge::unit(0, 1)], true).unwrap();
        let lb = g.laplacian();
        assert_eq!(lb.l, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
        assert!(close(lb.lambda2_sym, 2.0, 1e-12));
        assert!(close(lb.spectral_norm, 2.0, 1e-12));
    }

    #[test]
    fn complete_graph_lambda2_is_n() {
        let lb = complete(4).laplacian();
        assert!(close(lb.lambda2_sym, 4.0, 1e-12));
        assert!(close(lb.spectral_norm, 4.0, 1e-12));
    }

    #[test]
    fn directed_four_cycle_spectrum_matches_char_poly_roots() {
        let g = directed_cycle(4);
        assert!(g.is_weight_balanced(1e-12));
        assert!(g.is_strongly_connected());
        assert!(!g.is_undirected(1e-12));
        let lb = g.laplacian();
        let mut roots = real_roots(&char_poly(&lb.sym_l), -1.0, 5.0);
        roots.sort_by(f64::total_cmp);
        assert_eq!(roots.len(), 4, "roots {roots:?}");
        for (a, b) in roots.iter().zip(&lb.eigs_sym) {
            assert!((a - b).abs() < 1e-6, "{roots:?} vs {:?}", lb.eigs_sym);
        }
        // 1 - cos(2 pi k / 4)
        assert!(close(lb.lambda2_sym, 1.0, 1e-10));
        assert!(close(lb.spectral_norm, 2.0, 1e-10));
    }

    #[test]
    fn balance_checks() {
        let undirected = complete(3);
        assert!(undirected.is_weight_balanced(1e-12));
        assert!(directed_cycle(3).is_weight_balanced(1e-12));
        // Star with every edge pointing at the center.
        let star = Digraph::from_edges(4, &[Edge::unit(1, 0), Edge::unit(2, 0), Edge::unit(3, 0)], false).unwrap();
        assert!(!star.is_weight_balanced(1e-9));
        let col_sums: Vec<f64> = star.laplacian().l.column_iter().map(|c| c.sum()).collect();
        assert!(col_sums[0].abs() > 1.0);
    }

    #[test]
    fn connectivity_checks() {
        assert!(directed_cycle(3).is_strongly_connected());
        let isolated = Digraph::from_weights(DMatrix::zeros(2, 2)).unwrap();
        assert!(!isolated.is_strongly_connected());
        assert!(!isolated.laplacian().is_connected());
        // A directed path is weakly but not strongly connected.
        let path = Digraph::from_edges(3, &[Edge::unit(0, 1), Edge::unit(1, 2)], false).unwrap();
        assert!(!path.is_strongly_connected());
    }

    #[test]
    fn invalid_weights_rejected() {
        assert!(matches!(Digraph::from_weights(DMatrix::zeros(1, 1)), Err(GraphError::TooFewNodes(1))));
        let mut w = DMatrix::zeros(2, 2);
        w[(0, 1)] = -1.0;
        assert!(matches!(Digraph::from_weights(w), Err(GraphError::InvalidWeight { .. })));
        let mut w = DMatrix::zeros(2, 2);
        w[(1, 1)] = 1.0;
        assert!(matches!(Digraph::from_weights(w), Err(GraphError::SelfLoop(1))));
        assert!(matches!(Digraph::from_edges(2, &[Edge::unit(0, 2)], false), Err(GraphError::EdgeOutOfRange { .. })));
    }

    #[test]
    fn k2_decomposition() {
        let g = Digraph::from_edges(2, &[Edge::unit(0, 1)], true).unwrap();
        let dec = orthogonal_decomposition(&g.laplacian()).unwrap();
        let s = 1.0 / 2f64.sqrt();
        assert!((dec.r[0] - s).abs() < 1e-14 && (dec.r[1] - s).abs() < 1e-14);
        // R is determined up to sign.
        assert!((dec.basis[(0, 0)].abs() - s).abs() < 1e-14);
        assert!((dec.basis[(0, 0)] + dec.basis[(1, 0)]).abs() < 1e-14);
        assert!((dec.reduced[(0, 0)] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn k4_reduced_spectrum() {
        let dec = orthogonal_decomposition(&complete(4).laplacian()).unwrap();
        let mut eigs: Vec<f64> = SymmetricEigen::new(dec.reduced.clone()).eigenvalues.iter().copied().collect();
        eigs.sort_by(f64::total_cmp);
        for e in eigs {
            assert!((e - 4.0).abs() < 1e-10);
        }
    }

    #[test]
    fn decomposition_rejects_disconnected() {
        let g = Digraph::from_edges(4, &[Edge::unit(0, 1), Edge::unit(2, 3)], true).unwrap();
        assert!(matches!(orthogonal_decomposition(&g.laplacian()), Err(GraphError::Disconnected { .. })));
    }

    #[test]
    fn weight_balanced_digraph_uses_orthonormal_complement() {
        let g = directed_cycle(5);
        let lb = g.laplacian();
        let dec = orthogonal_decomposition(&lb).unwrap();
        let rtr = dec.basis.transpose() * &dec.basis;
        assert!((rtr - DMatrix::identity(4, 4)).amax() < 1e-12);
        assert!((dec.basis.transpose() * &dec.r).amax() < 1e-12);
        // Balanced: L annihilates 1 on both sides, so L = R J R^T.
        assert!((dec.reconstruct() - &lb.l).amax() < 1e-10);
    }

    #[test]
    fn kron_apply_matches_dense_kronecker() {
        let lb = directed_cycle(3).laplacian();
        let v = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0, 4.0, -1.0]);
        let dense = lb.l.kronecker(&DMatrix::<f64>::identity(2, 2));
        assert!((lb.apply_kron(&v, 2) - dense * &v).amax() < 1e-14);
    }

    #[test]
    fn permutation_relabels_nodes() {
        let g = Digraph::from_edges(3, &[Edge::new(0, 1, 2.0), Edge::new(1, 2, 3.0)], false).unwrap();
        let p = g.permuted(&[2, 0, 1]);
        // old edge 0 -> 1 becomes 1 -> 2, old 1 -> 2 becomes 2 -> 0
        assert_eq!(p.weights()[(2, 1)], 2.0);
        assert_eq!(p.weights()[(0, 2)], 3.0);
    }
}
