//! The conforming subspace `V_C = V_h ∩ H¹`: nodal points, the prolongation
//! `P : V_C → V_h`, the Oswald averaging operator, and the low-order-refined
//! coarse solver.
//!
//! Conforming unknowns are values at regular vertices, at the interior
//! Gauss–Lobatto points of each master edge, and at the interior nodes of each
//! element. On a nonconforming or mixed-degree edge the trace is a single
//! polynomial in the coarse side's parameter whose degree is the minimum over
//! all elements containing the edge. Hanging vertices carry no unknown; their
//! value is the edge polynomial they lie on.

mod constants;
mod lor;

use std::collections::{BTreeMap, HashMap};

use sprs::TriMat;

pub use constants::{estimate_best_constants, BestConstants};
pub use lor::{build_lor, conforming_stiffness, CoarseSolver, LorMatrices};

use crate::basis::BasisCache;
use crate::dg::DgSpace;
use crate::linalg::{spmv, Csr};
use crate::mesh::{side_point, Mesh, Point, SideRole, VertexClass, SIDE_CORNERS};

const DROP_TOL: f64 = 1e-14;
const PARAM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConformingDofKind {
    Vertex(usize),
    /// Interior point `k` (1-based) of the master edge with index `edge`.
    Edge {
        edge: usize,
        k: usize,
    },
    /// Interior node of an element, by DG local index.
    Interior {
        element: usize,
        local: usize,
    },
}

#[derive(Debug, Clone)]
pub struct ConformingDof {
    pub kind: ConformingDofKind,
    pub point: Point,
    pub on_boundary: bool,
}

/// A full element side that carries its own trace polynomial: either a side
/// on the domain boundary or the coarse (minus) side of an interior edge.
#[derive(Debug, Clone)]
pub struct MasterEdge {
    pub element: usize,
    pub side: usize,
    pub degree: usize,
    pub start_vertex: usize,
    pub end_vertex: usize,
    /// Conforming dofs at the `degree - 1` interior Gauss–Lobatto points.
    pub dofs: Vec<usize>,
    /// Interior faces along the edge (empty on the boundary).
    pub faces: Vec<usize>,
}

type Expr = Vec<(usize, f64)>;

#[derive(Debug, Clone)]
pub struct ConformingSpace {
    dofs: Vec<ConformingDof>,
    edges: Vec<MasterEdge>,
    edge_of_side: HashMap<(usize, usize), usize>,
    vertex_expr: Vec<Expr>,
    interior_start: Vec<usize>,
    bases: BasisCache,
}

fn add_scaled(out: &mut BTreeMap<usize, f64>, e: &Expr, c: f64) {
    for &(d, v) in e {
        *out.entry(d).or_insert(0.0) += c * v;
    }
}

fn finish_expr(m: BTreeMap<usize, f64>) -> Expr {
    m.into_iter().filter(|(_, v)| v.abs() >= DROP_TOL).collect()
}

impl ConformingSpace {
    pub fn new(mesh: &Mesh) -> Self {
        let info = mesh.vertex_info();
        let mut dofs = Vec::new();
        let nv = mesh.vertices().len();
        let mut vertex_dof = vec![usize::MAX; nv];
        for (v, vi) in info.iter().enumerate() {
            if vi.class == VertexClass::Regular && !vi.corner_of.is_empty() {
                vertex_dof[v] = dofs.len();
                dofs.push(ConformingDof {
                    kind: ConformingDofKind::Vertex(v),
                    point: mesh.vertex(v),
                    on_boundary: vi.on_boundary,
                });
            }
        }

        let mut bases = BasisCache::up_to(mesh.max_degree().max(1));
        let mut edges = Vec::new();
        let mut edge_of_side = HashMap::new();
        for el in mesh.active_elements() {
            for s in 0..4 {
                let (faces, boundary) = match mesh.side_role(el.id, s) {
                    SideRole::Master { faces } => (faces.clone(), false),
                    SideRole::Boundary { .. } => (Vec::new(), true),
                    _ => continue,
                };
                let degree = faces
                    .iter()
                    .filter_map(|&f| mesh.interfaces()[f].plus.as_ref())
                    .map(|t| mesh.element(t.element).degree)
                    .fold(el.degree, usize::min);
                bases.ensure(degree);
                let id = edges.len();
                let [ca, cb] = SIDE_CORNERS[s];
                let mut edge_dofs = Vec::with_capacity(degree.saturating_sub(1));
                for k in 1..degree {
                    let t = bases.get(degree).nodes()[k];
                    edge_dofs.push(dofs.len());
                    dofs.push(ConformingDof {
                        kind: ConformingDofKind::Edge { edge: id, k },
                        point: el.map.point(side_point(s, t)),
                        on_boundary: boundary,
                    });
                }
                edges.push(MasterEdge {
                    element: el.id,
                    side: s,
                    degree,
                    start_vertex: el.vertices[ca],
                    end_vertex: el.vertices[cb],
                    dofs: edge_dofs,
                    faces,
                });
                edge_of_side.insert((el.id, s), id);
            }
        }

        let mut interior_start = vec![usize::MAX; mesh.elements().len()];
        for el in mesh.active_elements() {
            let p = el.degree;
            interior_start[el.id] = dofs.len();
            let nodes = bases.get(p).nodes().to_vec();
            for j in 1..p {
                for i in 1..p {
                    dofs.push(ConformingDof {
                        kind: ConformingDofKind::Interior { element: el.id, local: i + (p + 1) * j },
                        point: el.map.point([nodes[i], nodes[j]]),
                        on_boundary: false,
                    });
                }
            }
        }

        let mut space =
            Self { dofs, edges, edge_of_side, vertex_expr: vec![Vec::new(); nv], interior_start, bases };
        let mut done = vec![false; nv];
        for v in 0..nv {
            space.resolve_vertex(mesh, v, &vertex_dof, &mut done);
        }
        space
    }

    fn resolve_vertex(&mut self, mesh: &Mesh, v: usize, vertex_dof: &[usize], done: &mut [bool]) {
        if done[v] {
            return;
        }
        done[v] = true;
        if vertex_dof[v] != usize::MAX {
            self.vertex_expr[v] = vec![(vertex_dof[v], 1.0)];
            return;
        }
        let Some((me, ms, t)) = mesh.vertex_info()[v].hanging_on else {
            return;
        };
        let edge = self.edge_of_side[&(me, ms)];
        let (a, b) = (self.edges[edge].start_vertex, self.edges[edge].end_vertex);
        // the master edge of a hanging vertex is strictly coarser, so this
        // recursion terminates
        self.resolve_vertex(mesh, a, vertex_dof, done);
        self.resolve_vertex(mesh, b, vertex_dof, done);
        self.vertex_expr[v] = self.edge_expr(edge, t);
    }

    /// Conforming function value at parameter `t` of a master edge, as a
    /// combination of conforming dofs.
    fn edge_expr(&self, edge: usize, t: f64) -> Expr {
        let e = &self.edges[edge];
        let lag = self.bases.get(e.degree).lagrange();
        let mut out = BTreeMap::new();
        for k in 0..=e.degree {
            let c = lag.eval(k, t);
            if c.abs() < DROP_TOL {
                continue;
            }
            if k == 0 {
                add_scaled(&mut out, &self.vertex_expr[e.start_vertex], c);
            } else if k == e.degree {
                add_scaled(&mut out, &self.vertex_expr[e.end_vertex], c);
            } else {
                *out.entry(e.dofs[k - 1]).or_insert(0.0) += c;
            }
        }
        finish_expr(out)
    }

    /// Master edge and its parameter for point `τ` on side `s` of element `e`.
    fn locate_on_edge(&self, mesh: &Mesh, e: usize, s: usize, tau: f64) -> (usize, f64) {
        match mesh.side_role(e, s) {
            SideRole::Slave { face } => {
                let f = &mesh.interfaces()[*face];
                let plus = f.plus.as_ref().expect("slave side has a plus trace");
                let [c, d] = plus.interval;
                let sigma = (tau - c) / (d - c);
                (self.edge_of_side[&(f.minus.element, f.minus.side)], f.minus.param(sigma))
            }
            _ => (self.edge_of_side[&(e, s)], tau),
        }
    }

    pub fn n_dofs(&self) -> usize {
        self.dofs.len()
    }

    pub fn dofs(&self) -> &[ConformingDof] {
        &self.dofs
    }

    pub fn edges(&self) -> &[MasterEdge] {
        &self.edges
    }

    pub fn interior_dofs(&self) -> Vec<usize> {
        (0..self.dofs.len()).filter(|&d| !self.dofs[d].on_boundary).collect()
    }

    /// Master edge owning side `s` of element `e`, if that side is a master
    /// or boundary side.
    pub fn edge_of_side(&self, e: usize, s: usize) -> Option<usize> {
        self.edge_of_side.get(&(e, s)).copied()
    }

    /// Conforming expression for DG node `l` of element `e`.
    fn node_expr(&self, space: &DgSpace, e: usize, l: usize) -> Expr {
        let mesh = space.mesh();
        let p = space.degree(e);
        let (i, j) = (l % (p + 1), l / (p + 1));
        let at_x = i == 0 || i == p;
        let at_y = j == 0 || j == p;
        let el = mesh.element(e);
        if at_x && at_y {
            let corner = match (i == 0, j == 0) {
                (true, true) => 0,
                (false, true) => 1,
                (false, false) => 2,
                (true, false) => 3,
            };
            return self.vertex_expr[el.vertices[corner]].clone();
        }
        if !at_x && !at_y {
            let start = self.interior_start[e];
            return vec![(start + (i - 1) + (p - 1) * (j - 1), 1.0)];
        }
        let x = space.basis(p).nodes();
        let (s, tau) = if j == 0 {
            (0, x[i])
        } else if i == p {
            (1, x[j])
        } else if j == p {
            (2, x[i])
        } else {
            (3, x[j])
        };
        let (edge, t) = self.locate_on_edge(mesh, e, s, tau);
        self.edge_expr(edge, t)
    }

    /// The prolongation `P` (N × N_C): DG nodal values of each conforming
    /// basis function.
    pub fn prolongation(&self, space: &DgSpace) -> Csr {
        let mut t = TriMat::new((space.n_dofs(), self.n_dofs()));
        for &e in space.mesh().active() {
            let o = space.offset(e);
            for l in 0..space.local_len(e) {
                for (d, c) in self.node_expr(space, e, l) {
                    t.add_triplet(o + l, d, c);
                }
            }
        }
        t.to_csr()
    }

    /// Elements containing conforming dof `d` with the reference coordinates
    /// of its nodal point in each.
    pub fn containing(&self, mesh: &Mesh, d: usize) -> Vec<(usize, Point)> {
        match self.dofs[d].kind {
            ConformingDofKind::Vertex(v) => {
                let corner_ref = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
                mesh.vertex_info()[v]
                    .corner_of
                    .iter()
                    .map(|&e| {
                        let c = mesh.element(e).vertices.iter().position(|&w| w == v).unwrap();
                        (e, corner_ref[c])
                    })
                    .collect()
            }
            ConformingDofKind::Interior { element, local } => {
                let p = mesh.element(element).degree;
                let x = self.bases.get(p).nodes();
                vec![(element, [x[local % (p + 1)], x[local / (p + 1)]])]
            }
            ConformingDofKind::Edge { edge, k } => {
                let me = &self.edges[edge];
                let t = self.bases.get(me.degree).nodes()[k];
                let mut out = vec![(me.element, side_point(me.side, t))];
                for &f in &me.faces {
                    let face = &mesh.interfaces()[f];
                    let [a, b] = face.minus.interval;
                    let (lo, hi) = (a.min(b), a.max(b));
                    if t < lo - PARAM_TOL || t > hi + PARAM_TOL {
                        continue;
                    }
                    let plus = face.plus.as_ref().expect("interior face");
                    let sigma = (t - a) / (b - a);
                    out.push((plus.element, side_point(plus.side, plus.param(sigma))));
                }
                out
            }
        }
    }

    /// Oswald operator matrix (N_C × N): the average of the element
    /// polynomials over all elements containing each nodal point.
    pub fn oswald_matrix(&self, space: &DgSpace) -> Csr {
        let mesh = space.mesh();
        let mut t = TriMat::new((self.n_dofs(), space.n_dofs()));
        let mut vx = Vec::new();
        let mut vy = Vec::new();
        for d in 0..self.n_dofs() {
            let cont = self.containing(mesh, d);
            let w = 1.0 / cont.len() as f64;
            for (e, r) in cont {
                let p = space.degree(e);
                let lag = space.basis(p).lagrange();
                vx.resize(p + 1, 0.0);
                vy.resize(p + 1, 0.0);
                lag.eval_all(r[0], &mut vx);
                lag.eval_all(r[1], &mut vy);
                let o = space.offset(e);
                for j in 0..=p {
                    for i in 0..=p {
                        let c = vx[i] * vy[j];
                        if c.abs() >= DROP_TOL {
                            t.add_triplet(d, o + i + (p + 1) * j, w * c);
                        }
                    }
                }
            }
        }
        t.to_csr()
    }

    /// `Q_h u`.
    pub fn oswald(&self, space: &DgSpace, u: &[f64]) -> Vec<f64> {
        spmv(&self.oswald_matrix(space), u)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_count_on_conforming_mesh() {
        for p in 1..=4 {
            let m = Mesh::cartesian(3, 2, [0.0, 3.0, 0.0, 2.0], p).unwrap();
            let cs = ConformingSpace::new(&m);
            let (nv, ne, nel) = (12, 17, 6);
            assert_eq!(cs.n_dofs(), nv + (p - 1) * ne + (p - 1) * (p - 1) * nel);
        }
    }

    #[test]
    fn p_interface_uses_lower_degree() {
        let m = Mesh::cartesian(2, 1, [0.0, 2.0, 0.0, 1.0], 3).unwrap().with_degrees([(1, 5)]).unwrap();
        let cs = ConformingSpace::new(&m);
        let shared = cs.edges().iter().find(|e| !e.faces.is_empty()).unwrap();
        assert_eq!(shared.degree, 3);
        assert_eq!(shared.dofs.len(), 2);
    }

    #[test]
    fn strip_trace_has_two_determining_nodes() {
        let m = Mesh::coarse_fine_strip(4, 2, 1).unwrap();
        let cs = ConformingSpace::new(&m);
        let e = cs.edges().iter().find(|e| e.faces.len() == 4).unwrap();
        assert_eq!(e.degree, 1);
        assert!(e.dofs.is_empty());
        // both endpoints are regular vertices with their own dofs
        assert_eq!(cs.vertex_expr[e.start_vertex].len(), 1);
        assert_eq!(cs.vertex_expr[e.end_vertex].len(), 1);
    }

    #[test]
    fn oswald_mean_at_shared_vertex() {
        let m = Mesh::cartesian(2, 2, [0.0, 2.0, 0.0, 2.0], 1).unwrap();
        let s = DgSpace::new(&m);
        let cs = ConformingSpace::new(&m);
        let center = m.vertices().iter().position(|v| v.coords == [1.0, 1.0]).unwrap();
        let mut u = vec![0.0; s.n_dofs()];
        for (k, &e) in m.active().iter().enumerate() {
            let c = m.element(e).vertices.iter().position(|&w| w == center).unwrap();
            let l = [0, 1, 3, 2][c];
            u[s.offset(e) + l] = [1.0, 2.0, 3.0, 6.0][k];
        }
        let q = cs.oswald(&s, &u);
        let d = cs.dofs().iter().position(|d| d.kind == ConformingDofKind::Vertex(center)).unwrap();
        assert_eq!(q[d], 3.0);
    }
}
