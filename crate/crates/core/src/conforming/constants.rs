use nalgebra::DMatrix;

use super::ConformingSpace;
use crate::dg::{
    assemble_broken_stiffness, assemble_mass, face_jump_matrix, DgSpace, Discretization, ModelProblem,
};
use crate::error::Result;
use crate::linalg::{deflated_generalized_eigenvalues, to_dense};
use crate::mesh::Mesh;

/// Best constants of the Oswald approximation estimates on the coarse/fine
/// strip mesh with `n` fine elements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BestConstants {
    pub n: usize,
    /// `sup ‖u − Q u‖₀² / Σ_e (h_e/p_e²) ‖[[u]]‖²_e`.
    pub c_jump: f64,
    /// Same with `Σ_κ (h_κ²/p_κ⁴) ‖∇u‖²_κ` added to the denominator.
    pub c_modified: f64,
}

const NULL_TOL: f64 = 1e-10;

pub fn estimate_best_constants(n: usize) -> Result<BestConstants> {
    let mesh = Mesh::coarse_fine_strip(n, 2, 1)?;
    let space = DgSpace::new(&mesh);
    let cs = ConformingSpace::new(&mesh);
    let p = to_dense(&cs.prolongation(&space));
    let q = to_dense(&cs.oswald_matrix(&space));
    let nd = space.n_dofs();
    let e = DMatrix::identity(nd, nd) - &p * &q;
    let mass = to_dense(&assemble_mass(&space).to_csr());
    let num = e.transpose() * &mass * &e;

    let jumps = to_dense(&face_jump_matrix(&space, |f| f.h / (f.degree * f.degree) as f64, false));
    let unit = ModelProblem::laplace(Discretization::Sipdg, 1.0);
    let mut grad = assemble_broken_stiffness(&space, &unit)?;
    for (blk, &el) in grad.blocks.iter_mut().zip(&grad.elements) {
        let elem = mesh.element(el);
        let h = elem.map.diameter();
        let pk = elem.degree as f64;
        *blk *= h * h / pk.powi(4);
    }
    let modified = &jumps + to_dense(&grad.to_csr());

    let top = |den: &DMatrix<f64>| {
        deflated_generalized_eigenvalues(&num, den, NULL_TOL).last().copied().unwrap_or(0.0)
    };
    Ok(BestConstants { n, c_jump: top(&jumps), c_modified: top(&modified) })
}
