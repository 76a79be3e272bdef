use nalgebra::DMatrix;
use sprs::FillInReduction;
use sprs_ldl::{Ldl, LdlNumeric};

use super::ConformingSpace;
use crate::basis::gauss_legendre;
use crate::dg::{assemble_broken_stiffness, BlockDiagonal, DgSpace, ModelProblem};
use crate::error::{invalid, Error, Result};
use crate::linalg::{spmv, submatrix, symmetrize, Csr};
use crate::mesh::BilinearMap;

/// Low-order-refined operators and the factorized coarse matrix.
pub struct LorMatrices {
    /// Block-diagonal Q1 stiffness on the Gauss–Lobatto submesh of each element.
    pub lor: BlockDiagonal,
    /// `Pᵀ Ã P` on all conforming dofs.
    pub coarse: Csr,
    /// Conforming dofs kept after eliminating the domain boundary.
    pub interior: Vec<usize>,
    factor: Factor,
}

enum Factor {
    Ldl(LdlNumeric<f64, usize>),
    /// A single interior dof, below what the sparse factorization handles.
    Scalar(f64),
}

impl std::fmt::Debug for LorMatrices {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LorMatrices")
            .field("n_conforming", &self.coarse.rows())
            .field("n_interior", &self.interior.len())
            .finish_non_exhaustive()
    }
}

/// Q1 stiffness of one quad with coefficient `a`, corners in
/// counterclockwise order, exact for parallelograms.
fn q1_stiffness(map: &BilinearMap, a: f64) -> [[f64; 4]; 4] {
    let g = gauss_legendre(2);
    let mut k = [[0.0; 4]; 4];
    for (qy, &y) in g.points.iter().enumerate() {
        for (qx, &x) in g.points.iter().enumerate() {
            let (jt, det) = map.inv_transpose([x, y]);
            let w = g.weights[qx] * g.weights[qy] * det * a;
            let dref = [[-(1.0 - y), -(1.0 - x)], [1.0 - y, -x], [y, x], [-y, 1.0 - x]];
            let grad: Vec<[f64; 2]> = dref
                .iter()
                .map(|d| [jt[0][0] * d[0] + jt[0][1] * d[1], jt[1][0] * d[0] + jt[1][1] * d[1]])
                .collect();
            for i in 0..4 {
                for j in 0..4 {
                    k[i][j] += w * (grad[i][0] * grad[j][0] + grad[i][1] * grad[j][1]);
                }
            }
        }
    }
    k
}

/// LOR stiffness of element `e`, indexed by its Gauss–Lobatto nodes.
pub(crate) fn lor_block(space: &DgSpace, e: usize, a: f64) -> DMatrix<f64> {
    let p = space.degree(e);
    let n = p + 1;
    let x = space.basis(p).nodes();
    let map = &space.mesh().element(e).map;
    let mut k = DMatrix::zeros(n * n, n * n);
    for j in 0..p {
        for i in 0..p {
            let ids = [i + n * j, i + 1 + n * j, i + 1 + n * (j + 1), i + n * (j + 1)];
            let corners = [
                map.point([x[i], x[j]]),
                map.point([x[i + 1], x[j]]),
                map.point([x[i + 1], x[j + 1]]),
                map.point([x[i], x[j + 1]]),
            ];
            let kl = q1_stiffness(&BilinearMap::new(corners), a);
            for r in 0..4 {
                for c in 0..4 {
                    k[(ids[r], ids[c])] += kl[r][c];
                }
            }
        }
    }
    k
}

fn galerkin(p: &Csr, blocks: &Csr) -> Csr {
    let pt = p.transpose_view().to_csr();
    let ap = blocks * p;
    symmetrize(&(&pt * &ap))
}

/// High-order conforming stiffness `Pᵀ Â P` (all conforming dofs).
pub fn conforming_stiffness(space: &DgSpace, problem: &ModelProblem, p: &Csr) -> Result<Csr> {
    let k = assemble_broken_stiffness(space, problem)?;
    Ok(galerkin(p, &k.to_csr()))
}

/// Assemble `Ã`, form `Ã_C = Pᵀ Ã P`, eliminate the boundary conforming dofs
/// and factorize the remaining block.
pub fn build_lor(
    space: &DgSpace,
    cspace: &ConformingSpace,
    problem: &ModelProblem,
    p: &Csr,
) -> Result<LorMatrices> {
    let mesh = space.mesh();
    let mut blocks = Vec::with_capacity(mesh.num_active());
    let mut offsets = Vec::with_capacity(mesh.num_active());
    for &e in mesh.active() {
        let a = (problem.coefficient)(mesh.element(e).map.centroid());
        if !(a > 0.0 && a.is_finite()) {
            return invalid(format!("coefficient must be positive, got {a}"));
        }
        offsets.push(space.offset(e));
        blocks.push(lor_block(space, e, a));
    }
    let lor = BlockDiagonal { elements: mesh.active().to_vec(), offsets, blocks };
    let coarse = galerkin(p, &lor.to_csr());
    let interior = cspace.interior_dofs();
    if interior.is_empty() {
        return invalid("conforming space has no interior dofs");
    }
    let inner = submatrix(&coarse, &interior);
    let pivots_ok = |d: &[f64]| match d.iter().position(|&d| !(d > 0.0)) {
        Some(k) => Err(Error::NotPositiveDefinite(format!("LOR coarse pivot {k} is not positive"))),
        None => Ok(()),
    };
    let factor = if interior.len() == 1 {
        let d = inner.get(0, 0).copied().unwrap_or(0.0);
        pivots_ok(&[d])?;
        Factor::Scalar(d)
    } else {
        let f = Ldl::new()
            .fill_in_reduction(FillInReduction::ReverseCuthillMcKee)
            .numeric(inner.view())
            .map_err(|e| Error::NotPositiveDefinite(format!("LOR coarse matrix: {e:?}")))?;
        pivots_ok(f.d())?;
        Factor::Ldl(f)
    };
    Ok(LorMatrices { lor, coarse, interior, factor })
}

impl LorMatrices {
    /// Solve the interior coarse system for a conforming right-hand side;
    /// boundary entries of the result are zero.
    pub fn solve_conforming(&self, rc: &[f64]) -> Vec<f64> {
        let r: Vec<f64> = self.interior.iter().map(|&d| rc[d]).collect();
        let y = match &self.factor {
            Factor::Ldl(f) => f.solve(&r),
            Factor::Scalar(d) => vec![r[0] / d],
        };
        let mut out = vec![0.0; rc.len()];
        for (k, &d) in self.interior.iter().enumerate() {
            out[d] = y[k];
        }
        out
    }
}

/// The coarse correction `B_C r = P (Ã_C)⁻¹ Pᵀ r`.
pub struct CoarseSolver {
    pub p: Csr,
    pt: Csr,
    pub lor: LorMatrices,
}

impl CoarseSolver {
    pub fn new(p: Csr, lor: LorMatrices) -> Self {
        let pt = p.transpose_view().to_csr();
        Self { p, pt, lor }
    }

    pub fn apply(&self, r: &[f64]) -> Vec<f64> {
        let rc = spmv(&self.pt, r);
        let y = self.lor.solve_conforming(&rc);
        spmv(&self.p, &y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dg::Discretization;
    use crate::mesh::Mesh;
    use approx::assert_abs_diff_eq;

    #[test]
    fn p1_lor_is_high_order_block() {
        let m =
            Mesh::from_parts(vec![[0.0, 0.0], [2.0, 0.0], [2.5, 1.0], [0.5, 1.0]], vec![([0, 1, 2, 3], 1)])
                .unwrap();
        let s = DgSpace::new(&m);
        let prob = ModelProblem::laplace(Discretization::Sipdg, 10.0);
        let k = assemble_broken_stiffness(&s, &prob).unwrap();
        let l = lor_block(&s, 0, 1.0);
        for i in 0..4 {
            for j in 0..4 {
                assert_abs_diff_eq!(k.blocks[0][(i, j)], l[(i, j)], epsilon = 1e-13);
            }
        }
    }
}
