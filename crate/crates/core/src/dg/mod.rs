//! Gauss–Lobatto nodal DG space on an hp mesh, and the SIPDG/BR2 operators.
//!
//! Each active element owns `(p+1)²` unknowns, one per tensor-product
//! Gauss–Lobatto node, with local index `i + (p+1) j` for the node at
//! reference coordinates `(x_i, x_j)`.

mod assemble;

use std::ops::Range;
use std::sync::Arc;

use nalgebra::DMatrix;
use sprs::TriMat;

pub use assemble::{
    assemble, assemble_br2, assemble_broken_stiffness, assemble_mass, assemble_sipdg, dg_norm,
    eigenvalue_sandwich_check, face_jump_matrix, penalty_matrix, sigma,
};

use crate::basis::{gauss_legendre, Basis1D, BasisCache};
use crate::error::{invalid, Result};
use crate::linalg::Csr;
use crate::mesh::{Mesh, Point};

pub type ScalarFn = Arc<dyn Fn(Point) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Discretization {
    Sipdg,
    Br2,
}

impl Discretization {
    pub fn name(self) -> &'static str {
        match self {
            Self::Sipdg => "sipdg",
            Self::Br2 => "br2",
        }
    }
}

impl std::str::FromStr for Discretization {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sipdg" => Ok(Self::Sipdg),
            "br2" => Ok(Self::Br2),
            other => invalid(format!("unknown discretization '{other}'")),
        }
    }
}

/// `-div(a grad u) = f` with `u = g` on the boundary. The coefficient is
/// treated as constant per element and sampled at the element centroid.
#[derive(Clone)]
pub struct ModelProblem {
    pub coefficient: ScalarFn,
    pub source: ScalarFn,
    pub dirichlet: ScalarFn,
    pub discretization: Discretization,
    pub eta: f64,
}

impl std::fmt::Debug for ModelProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelProblem")
            .field("discretization", &self.discretization)
            .field("eta", &self.eta)
            .finish_non_exhaustive()
    }
}

impl ModelProblem {
    /// Unit coefficient, zero data.
    pub fn laplace(discretization: Discretization, eta: f64) -> Self {
        Self {
            coefficient: Arc::new(|_| 1.0),
            source: Arc::new(|_| 0.0),
            dirichlet: Arc::new(|_| 0.0),
            discretization,
            eta,
        }
    }

    pub fn with_source(mut self, f: impl Fn(Point) -> f64 + Send + Sync + 'static) -> Self {
        self.source = Arc::new(f);
        self
    }

    pub fn with_dirichlet(mut self, g: impl Fn(Point) -> f64 + Send + Sync + 'static) -> Self {
        self.dirichlet = Arc::new(g);
        self
    }

    pub fn with_coefficient(mut self, a: impl Fn(Point) -> f64 + Send + Sync + 'static) -> Self {
        self.coefficient = Arc::new(a);
        self
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return invalid(format!("penalty parameter must be positive, got {}", self.eta));
        }
        Ok(())
    }
}

/// The DG operator with right-hand side. `stabilization` is the part of `a`
/// that couples jumps: the interior penalty for SIPDG, the lifting term for
/// BR2.
#[derive(Debug, Clone)]
pub struct AssembledSystem {
    pub a: Csr,
    pub b: Vec<f64>,
    pub diag: Vec<f64>,
    pub stabilization: Csr,
}

/// Block-diagonal matrix with one dense block per active element.
#[derive(Debug, Clone)]
pub struct BlockDiagonal {
    pub elements: Vec<usize>,
    pub offsets: Vec<usize>,
    pub blocks: Vec<DMatrix<f64>>,
}

impl BlockDiagonal {
    pub fn dim(&self) -> usize {
        self.offsets.last().copied().unwrap_or(0) + self.blocks.last().map_or(0, |b| b.nrows())
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        for (blk, &off) in self.blocks.iter().zip(&self.offsets) {
            let n = blk.nrows();
            for i in 0..n {
                let mut s = 0.0;
                for j in 0..n {
                    s += blk[(i, j)] * x[off + j];
                }
                y[off + i] = s;
            }
        }
        y
    }

    pub fn to_csr(&self) -> Csr {
        let n = self.dim();
        let nnz = self.blocks.iter().map(|b| b.len()).sum();
        let mut t = TriMat::with_capacity((n, n), nnz);
        for (blk, &off) in self.blocks.iter().zip(&self.offsets) {
            for j in 0..blk.ncols() {
                for i in 0..blk.nrows() {
                    if blk[(i, j)] != 0.0 {
                        t.add_triplet(off + i, off + j, blk[(i, j)]);
                    }
                }
            }
        }
        t.to_csr()
    }
}

/// Values and physical gradients of every basis function of one element at a
/// list of reference points.
#[derive(Debug, Clone)]
pub(crate) struct Tabulation {
    /// `values[(q, a)] = φ_a(r_q)`.
    pub values: DMatrix<f64>,
    pub grad_x: DMatrix<f64>,
    pub grad_y: DMatrix<f64>,
    pub det: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DgSpace {
    mesh: Mesh,
    bases: BasisCache,
    offsets: Vec<usize>,
    n_dofs: usize,
}

impl DgSpace {
    pub fn new(mesh: &Mesh) -> Self {
        let bases = BasisCache::up_to(mesh.max_degree().max(1) + 1);
        let mut offsets = vec![usize::MAX; mesh.elements().len()];
        let mut n = 0;
        for el in mesh.active_elements() {
            offsets[el.id] = n;
            n += (el.degree + 1) * (el.degree + 1);
        }
        Self { mesh: mesh.clone(), bases, offsets, n_dofs: n }
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    pub fn degree(&self, e: usize) -> usize {
        self.mesh.element(e).degree
    }

    pub fn offset(&self, e: usize) -> usize {
        self.offsets[e]
    }

    pub fn local_len(&self, e: usize) -> usize {
        let p = self.degree(e);
        (p + 1) * (p + 1)
    }

    pub fn dofs(&self, e: usize) -> Range<usize> {
        let o = self.offsets[e];
        o..o + self.local_len(e)
    }

    pub fn basis(&self, p: usize) -> &Basis1D {
        self.bases.get(p)
    }

    pub fn bases(&self) -> &BasisCache {
        &self.bases
    }

    /// Reference coordinates of local node `l` of element `e`.
    pub fn node_ref(&self, e: usize, l: usize) -> Point {
        let p = self.degree(e);
        let x = self.bases.get(p).nodes();
        [x[l % (p + 1)], x[l / (p + 1)]]
    }

    pub fn node_point(&self, e: usize, l: usize) -> Point {
        self.mesh.element(e).map.point(self.node_ref(e, l))
    }

    /// True when local node `l` of a degree-`p` element lies on the element
    /// boundary.
    pub fn is_boundary_local(p: usize, l: usize) -> bool {
        let (i, j) = (l % (p + 1), l / (p + 1));
        i == 0 || j == 0 || i == p || j == p
    }

    /// Local indices of the nodes on side `s`, in increasing side parameter.
    pub fn side_nodes(p: usize, s: usize) -> Vec<usize> {
        let n = p + 1;
        (0..n)
            .map(|k| match s {
                0 => k,
                1 => p + n * k,
                2 => k + n * p,
                _ => n * k,
            })
            .collect()
    }

    /// Global dofs whose node lies on the boundary of its element, sorted.
    pub fn boundary_dofs(&self) -> Vec<usize> {
        let mut v = Vec::new();
        for el in self.mesh.active_elements() {
            let o = self.offsets[el.id];
            for l in 0..(el.degree + 1).pow(2) {
                if Self::is_boundary_local(el.degree, l) {
                    v.push(o + l);
                }
            }
        }
        v
    }

    pub fn is_boundary_dof(&self, dof: usize) -> bool {
        let (e, l) = self.dof_owner(dof);
        Self::is_boundary_local(self.degree(e), l)
    }

    /// Element and local index of a global dof.
    pub fn dof_owner(&self, dof: usize) -> (usize, usize) {
        let active = self.mesh.active();
        let k = active.partition_point(|&e| self.offsets[e] <= dof) - 1;
        let e = active[k];
        (e, dof - self.offsets[e])
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(&self, f: impl Fn(Point) -> f64) -> Vec<f64> {
        let mut u = vec![0.0; self.n_dofs];
        for el in self.mesh.active_elements() {
            let o = self.offsets[el.id];
            for l in 0..(el.degree + 1).pow(2) {
                u[o + l] = f(self.node_point(el.id, l));
            }
        }
        u
    }

    /// Value of the element-`e` polynomial of `u` at reference point `r`.
    pub fn eval(&self, e: usize, u: &[f64], r: Point) -> f64 {
        let p = self.degree(e);
        let b = self.bases.get(p);
        let o = self.offsets[e];
        let mut s = 0.0;
        for j in 0..=p {
            let ly = b.eval(j, r[1]);
            if ly == 0.0 {
                continue;
            }
            let mut row = 0.0;
            for i in 0..=p {
                row += u[o + i + (p + 1) * j] * b.eval(i, r[0]);
            }
            s += ly * row;
        }
        s
    }

    /// Physical gradient of the element-`e` polynomial at reference point `r`.
    pub fn eval_grad(&self, e: usize, u: &[f64], r: Point) -> Point {
        let p = self.degree(e);
        let b = self.bases.get(p);
        let o = self.offsets[e];
        let (mut gx, mut gy) = (0.0, 0.0);
        for j in 0..=p {
            let (ly, dly) = (b.eval(j, r[1]), b.deriv(j, r[1]));
            for i in 0..=p {
                let c = u[o + i + (p + 1) * j];
                gx += c * b.deriv(i, r[0]) * ly;
                gy += c * b.eval(i, r[0]) * dly;
            }
        }
        let (jt, _) = self.mesh.element(e).map.inv_transpose(r);
        [jt[0][0] * gx + jt[0][1] * gy, jt[1][0] * gx + jt[1][1] * gy]
    }

    /// Tensor Gauss points and weights used for volume integrals on `e`.
    pub(crate) fn volume_rule(&self, e: usize) -> (Vec<Point>, Vec<f64>) {
        volume_rule(self.degree(e) + 2)
    }

    pub(crate) fn tabulate(&self, e: usize, pts: &[Point]) -> Tabulation {
        let p = self.degree(e);
        let b = self.bases.get(p);
        let map = &self.mesh.element(e).map;
        let nd = (p + 1) * (p + 1);
        let nq = pts.len();
        let mut values = DMatrix::zeros(nq, nd);
        let mut grad_x = DMatrix::zeros(nq, nd);
        let mut grad_y = DMatrix::zeros(nq, nd);
        let mut det = Vec::with_capacity(nq);
        let mut lx = vec![0.0; p + 1];
        let mut ly = vec![0.0; p + 1];
        let mut dx = vec![0.0; p + 1];
        let mut dy = vec![0.0; p + 1];
        for (q, &r) in pts.iter().enumerate() {
            let lag = b.lagrange();
            lag.eval_all(r[0], &mut lx);
            lag.eval_all(r[1], &mut ly);
            lag.deriv_all(r[0], &mut dx);
            lag.deriv_all(r[1], &mut dy);
            let (jt, d) = map.inv_transpose(r);
            det.push(d);
            for j in 0..=p {
                for i in 0..=p {
                    let a = i + (p + 1) * j;
                    let (rx, ry) = (dx[i] * ly[j], lx[i] * dy[j]);
                    values[(q, a)] = lx[i] * ly[j];
                    grad_x[(q, a)] = jt[0][0] * rx + jt[0][1] * ry;
                    grad_y[(q, a)] = jt[1][0] * rx + jt[1][1] * ry;
                }
            }
        }
        Tabulation { values, grad_x, grad_y, det }
    }
}

pub(crate) fn volume_rule(n: usize) -> (Vec<Point>, Vec<f64>) {
    let g = gauss_legendre(n);
    let mut pts = Vec::with_capacity(n * n);
    let mut w = Vec::with_capacity(n * n);
    for (j, &y) in g.points.iter().enumerate() {
        for (i, &x) in g.points.iter().enumerate() {
            pts.push([x, y]);
            w.push(g.weights[i] * g.weights[j]);
        }
    }
    (pts, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn space_layout() {
        let m = Mesh::cartesian(2, 1, [0.0, 2.0, 0.0, 1.0], 2).unwrap().with_degrees([(1, 3)]).unwrap();
        let s = DgSpace::new(&m);
        assert_eq!(s.n_dofs(), 9 + 16);
        assert_eq!(s.dofs(1), 9..25);
        assert_eq!(s.boundary_dofs().len(), 8 + 12);
        assert_eq!(s.dof_owner(0), (0, 0));
        assert_eq!(s.dof_owner(8), (0, 8));
        assert_eq!(s.dof_owner(9), (1, 0));
        assert_eq!(s.dof_owner(24), (1, 15));
        assert!(!s.is_boundary_dof(4));
        for side in 0..4 {
            let nodes = DgSpace::side_nodes(3, side);
            for (k, &l) in nodes.iter().enumerate() {
                let r = s.node_ref(1, l);
                let want = crate::mesh::side_point(side, s.basis(3).nodes()[k]);
                assert_eq!(r, want);
            }
        }
    }

    #[test]
    fn evaluation_reproduces_polynomials() {
        let m =
            Mesh::from_parts(vec![[0.0, 0.0], [2.0, 0.2], [2.3, 1.5], [0.1, 1.0]], vec![([0, 1, 2, 3], 3)])
                .unwrap();
        let s = DgSpace::new(&m);
        // x*y is biquadratic in reference coordinates, so degree 3 is exact
        let f = |p: Point| 1.0 + 2.0 * p[0] - p[1] + 0.5 * p[0] * p[1];
        let u = s.interpolate(f);
        let e = m.active()[0];
        let map = &m.element(e).map;
        for &r in &[[0.3, 0.7], [0.9, 0.1], [0.5, 0.5]] {
            let x = map.point(r);
            assert_abs_diff_eq!(s.eval(e, &u, r), f(x), epsilon = 1e-12);
            let g = s.eval_grad(e, &u, r);
            assert_abs_diff_eq!(g[0], 2.0 + 0.5 * x[1], epsilon = 1e-11);
            assert_abs_diff_eq!(g[1], -1.0 + 0.5 * x[0], epsilon = 1e-11);
        }
    }
}
