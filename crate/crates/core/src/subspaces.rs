//! Splitting of the element-boundary unknowns into point-Jacobi dofs `V_J` and
//! jump-closed edge blocks `V_e`, and the smoother `T_B = T_E + T_J`.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::dg::{AssembledSystem, DgSpace};
use crate::error::{Error, Result};
use crate::linalg::Csr;
use crate::mesh::{InterfaceKind, Mesh, SideRole, VertexClass};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decomposition {
    pub vj: Vec<usize>,
    pub blocks: Vec<Vec<usize>>,
}

impl Decomposition {
    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn max_block_dim(&self) -> usize {
        self.blocks.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// One row per subspace: `kind,id,size,members` with members separated by
    /// spaces.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("kind,id,size,members\n");
        let join = |v: &[usize]| v.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(" ");
        let _ = writeln!(s, "vj,0,{},{}", self.vj.len(), join(&self.vj));
        for (k, b) in self.blocks.iter().enumerate() {
            let _ = writeln!(s, "ve,{k},{},{}", b.len(), join(b));
        }
        s
    }
}

/// Master side carrying the trace of side `s` of element `e`.
fn master_of(mesh: &Mesh, e: usize, s: usize) -> (usize, usize) {
    match mesh.side_role(e, s) {
        SideRole::Slave { face } => {
            let m = &mesh.interfaces()[*face].minus;
            (m.element, m.side)
        }
        _ => (e, s),
    }
}

/// Vertices on a closed master edge: its two ends and every sub-face end.
fn edge_vertices(mesh: &Mesh, e: usize, s: usize) -> Vec<usize> {
    let el = mesh.element(e);
    let [a, b] = crate::mesh::SIDE_CORNERS[s];
    let mut v = vec![el.vertices[a], el.vertices[b]];
    if let SideRole::Master { faces } = mesh.side_role(e, s) {
        for &f in faces {
            let plus = mesh.interfaces()[f].plus.as_ref().expect("interior face");
            let fe = mesh.element(plus.element);
            for c in crate::mesh::SIDE_CORNERS[plus.side] {
                v.push(fe.vertices[c]);
            }
        }
    }
    v
}

struct SideRules {
    conforming_equal: bool,
    no_hp_vertex: bool,
    coarse_lowest: bool,
}

fn side_rules(mesh: &Mesh, e: usize, s: usize) -> SideRules {
    let equal_conforming = |f: usize| {
        let f = &mesh.interfaces()[f];
        f.kind == InterfaceKind::Conforming
            && mesh.element(f.minus.element).degree
                == mesh.element(f.plus.as_ref().expect("interior face").element).degree
    };
    let conforming_equal = match mesh.side_role(e, s) {
        SideRole::Boundary { .. } => true,
        SideRole::Master { faces } if faces.len() == 1 => equal_conforming(faces[0]),
        SideRole::Slave { face } => equal_conforming(*face),
        _ => false,
    };
    let (me, ms) = master_of(mesh, e, s);
    let info = mesh.vertex_info();
    let no_hp_vertex = edge_vertices(mesh, me, ms).iter().all(|&v| info[v].class != VertexClass::HpVertex);
    let coarse_lowest = match mesh.side_role(me, ms) {
        SideRole::Master { faces } => {
            let pc = mesh.element(me).degree;
            faces.iter().all(|&f| mesh.interfaces()[f].kind == InterfaceKind::Subface)
                && faces.iter().all(|&f| {
                    let pe = mesh.interfaces()[f].plus.as_ref().unwrap().element;
                    pc <= mesh.element(pe).degree
                })
        }
        _ => false,
    };
    SideRules { conforming_equal, no_hp_vertex, coarse_lowest }
}

/// Element-boundary dofs handled by point Jacobi. A dof qualifies when its
/// node is a regular vertex, lies inside a conforming edge between elements of
/// equal degree (or on the domain boundary), or lies on a master edge free of
/// hp-vertices. With `extension`, nodes on nonconforming edges whose coarse
/// element has the lowest degree also qualify.
pub fn classify_vj(space: &DgSpace, extension: bool) -> Vec<usize> {
    let mesh = space.mesh();
    let info = mesh.vertex_info();
    let mut vj = Vec::new();
    for el in mesh.active_elements() {
        let p = el.degree;
        let rules: Vec<SideRules> = (0..4).map(|s| side_rules(mesh, el.id, s)).collect();
        let o = space.offset(el.id);
        for l in 0..(p + 1) * (p + 1) {
            let (i, j) = (l % (p + 1), l / (p + 1));
            let sides: Vec<usize> = [(j == 0, 0), (i == p, 1), (j == p, 2), (i == 0, 3)]
                .iter()
                .filter(|(on, _)| *on)
                .map(|&(_, s)| s)
                .collect();
            let keep = match sides.len() {
                0 => continue,
                1 => {
                    let r = &rules[sides[0]];
                    r.conforming_equal || r.no_hp_vertex || (extension && r.coarse_lowest)
                }
                _ => {
                    let corner = match (i == 0, j == 0) {
                        (true, true) => 0,
                        (false, true) => 1,
                        (false, false) => 2,
                        (true, false) => 3,
                    };
                    info[el.vertices[corner]].class == VertexClass::Regular
                        || sides
                            .iter()
                            .any(|&s| rules[s].no_hp_vertex || (extension && rules[s].coarse_lowest))
                }
            };
            if keep {
                vj.push(o + l);
            }
        }
    }
    vj
}

/// Jump-closed blocks over the boundary dofs outside `vj`: starting from the
/// dofs on each edge, add every non-`V_J` boundary dof coupled through the
/// stabilization matrix until nothing changes, then merge overlapping groups.
pub fn generate_ve(space: &DgSpace, stabilization: &Csr, vj: &[usize]) -> Vec<Vec<usize>> {
    let n = space.n_dofs();
    let mut candidate = vec![false; n];
    for d in space.boundary_dofs() {
        candidate[d] = true;
    }
    for &d in vj {
        candidate[d] = false;
    }
    let mut visited = vec![false; n];
    let mut blocks = Vec::new();
    for seed in 0..n {
        if !candidate[seed] || visited[seed] {
            continue;
        }
        let mut block = BTreeSet::new();
        let mut stack = vec![seed];
        visited[seed] = true;
        while let Some(d) = stack.pop() {
            block.insert(d);
            if let Some(row) = stabilization.outer_view(d) {
                for (k, _) in row.iter() {
                    if candidate[k] && !visited[k] {
                        visited[k] = true;
                        stack.push(k);
                    }
                }
            }
        }
        blocks.push(block.into_iter().collect());
    }
    blocks
}

pub fn decompose(space: &DgSpace, system: &AssembledSystem, extension: bool) -> Decomposition {
    let vj = classify_vj(space, extension);
    let blocks = generate_ve(space, &system.stabilization, &vj);
    Decomposition { vj, blocks }
}

/// `T_B`: point Jacobi on `V_J` plus exact solves on each `V_e` block.
#[derive(Debug, Clone)]
pub struct BlockPreconditioner {
    n: usize,
    vj: Vec<usize>,
    inv_diag: Vec<f64>,
    blocks: Vec<Vec<usize>>,
    factors: Vec<Cholesky<f64, Dyn>>,
}

pub fn build_tb(system: &AssembledSystem, d: &Decomposition) -> Result<BlockPreconditioner> {
    let a = &system.a;
    let mut inv_diag = Vec::with_capacity(d.vj.len());
    for &j in &d.vj {
        let v = system.diag[j];
        if !(v > 0.0) {
            return Err(Error::NotPositiveDefinite(format!("diagonal entry {j} is {v}")));
        }
        inv_diag.push(1.0 / v);
    }
    let mut factors = Vec::with_capacity(d.blocks.len());
    for (k, b) in d.blocks.iter().enumerate() {
        let m = b.len();
        let mut dense = DMatrix::zeros(m, m);
        for (r, &i) in b.iter().enumerate() {
            if let Some(row) = a.outer_view(i) {
                for (c, &j) in b.iter().enumerate() {
                    dense[(r, c)] = row.get(j).copied().unwrap_or(0.0);
                }
            }
        }
        let chol = dense
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite(format!("edge block {k} of size {m}")))?;
        factors.push(chol);
    }
    Ok(BlockPreconditioner { n: a.rows(), vj: d.vj.clone(), inv_diag, blocks: d.blocks.clone(), factors })
}

impl BlockPreconditioner {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// `z = T_B r`, accumulated into `z`.
    pub fn apply_add(&self, r: &[f64], z: &mut [f64]) {
        for (&j, &w) in self.vj.iter().zip(&self.inv_diag) {
            z[j] += w * r[j];
        }
        for (b, f) in self.blocks.iter().zip(&self.factors) {
            let rb = DVector::from_iterator(b.len(), b.iter().map(|&i| r[i]));
            let x = f.solve(&rb);
            for (k, &i) in b.iter().enumerate() {
                z[i] += x[k];
            }
        }
    }

    pub fn apply(&self, r: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; self.n];
        self.apply_add(r, &mut z);
        z
    }
}
