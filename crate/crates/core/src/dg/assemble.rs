use std::collections::BTreeMap;

use nalgebra::DMatrix;
use sprs::TriMat;

use super::{AssembledSystem, BlockDiagonal, DgSpace, Discretization, ModelProblem, Tabulation};
use crate::basis::gauss_legendre;
use crate::error::{invalid, Error, Result};
use crate::linalg::{self, Csr};
use crate::mesh::{Interface, Point};

/// Dense element-pair blocks summed before conversion to CSR.
struct BlockAccumulator {
    n: usize,
    blocks: BTreeMap<(usize, usize), DMatrix<f64>>,
}

impl BlockAccumulator {
    fn new(n: usize) -> Self {
        Self { n, blocks: BTreeMap::new() }
    }

    fn add(&mut self, row_off: usize, col_off: usize, m: DMatrix<f64>) {
        self.blocks.entry((row_off, col_off)).and_modify(|b| *b += &m).or_insert(m);
    }

    /// Scatter a face matrix whose rows/columns are `[minus dofs, plus dofs]`.
    fn add_face(&mut self, offs: &[(usize, usize)], m: &DMatrix<f64>) {
        let mut r0 = 0;
        for &(ro, rn) in offs {
            let mut c0 = 0;
            for &(co, cn) in offs {
                self.add(ro, co, m.view((r0, c0), (rn, cn)).into_owned());
                c0 += cn;
            }
            r0 += rn;
        }
    }

    fn into_csr(self) -> Csr {
        let nnz = self.blocks.values().map(|b| b.len()).sum();
        let mut t = TriMat::with_capacity((self.n, self.n), nnz);
        for ((ro, co), b) in self.blocks {
            for j in 0..b.ncols() {
                for i in 0..b.nrows() {
                    let v = b[(i, j)];
                    if v != 0.0 {
                        t.add_triplet(ro + i, co + j, v);
                    }
                }
            }
        }
        t.to_csr()
    }
}

fn scale_rows(m: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let mut out = m.clone();
    for (q, &wq) in w.iter().enumerate() {
        out.row_mut(q).scale_mut(wq);
    }
    out
}

fn hstack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    m.view_mut((0, 0), a.shape()).copy_from(a);
    m.view_mut((0, a.ncols()), b.shape()).copy_from(b);
    m
}

fn coefficient(space: &DgSpace, problem: &ModelProblem, e: usize) -> Result<f64> {
    let a = (problem.coefficient)(space.mesh().element(e).map.centroid());
    if !(a > 0.0 && a.is_finite()) {
        return invalid(format!("coefficient must be positive, got {a} on element {e}"));
    }
    Ok(a)
}

/// Penalty weight `η p_e² / h_e`, scaled by the larger adjacent coefficient.
pub fn sigma(space: &DgSpace, problem: &ModelProblem, face: &Interface) -> f64 {
    let p = face.degree as f64;
    let a = face_coefficient(space, problem, face);
    problem.eta * p * p / face.h * a
}

fn face_coefficient(space: &DgSpace, problem: &ModelProblem, face: &Interface) -> f64 {
    let c = |e: usize| (problem.coefficient)(space.mesh().element(e).map.centroid());
    match &face.plus {
        Some(p) => c(face.minus.element).max(c(p.element)),
        None => c(face.minus.element),
    }
}

/// Quadrature data on one face: weights include the physical length element.
struct FaceQuad {
    weights: Vec<f64>,
    points: Vec<Point>,
    minus: Tabulation,
    plus: Option<Tabulation>,
}

fn face_quadrature(space: &DgSpace, face: &Interface) -> FaceQuad {
    let g = gauss_legendre(face.degree + 2);
    let mesh = space.mesh();
    let em = mesh.element(face.minus.element);
    let len = em.map.side_length(face.minus.side) * (face.minus.interval[1] - face.minus.interval[0]).abs();
    let weights: Vec<f64> = g.weights.iter().map(|w| w * len).collect();
    let rm: Vec<Point> = g.points.iter().map(|&s| face.minus.ref_point(s)).collect();
    let points = rm.iter().map(|&r| em.map.point(r)).collect();
    let minus = space.tabulate(face.minus.element, &rm);
    let plus = face.plus.as_ref().map(|p| {
        let rp: Vec<Point> = g.points.iter().map(|&s| p.ref_point(s)).collect();
        space.tabulate(p.element, &rp)
    });
    FaceQuad { weights, points, minus, plus }
}

fn normal_derivative(t: &Tabulation, n: Point) -> DMatrix<f64> {
    &t.grad_x * n[0] + &t.grad_y * n[1]
}

/// Jump `[[φ]]·n` of every face-local basis function at the quadrature points,
/// columns ordered `[minus, plus]`.
fn jump_table(fq: &FaceQuad) -> DMatrix<f64> {
    match &fq.plus {
        Some(p) => hstack(&fq.minus.values, &(-&p.values)),
        None => fq.minus.values.clone(),
    }
}

fn face_offsets(space: &DgSpace, face: &Interface) -> Vec<(usize, usize)> {
    let mut v = vec![(space.offset(face.minus.element), space.local_len(face.minus.element))];
    if let Some(p) = &face.plus {
        v.push((space.offset(p.element), space.local_len(p.element)));
    }
    v
}

/// Volume stiffness `∫_κ a ∇φ_a·∇φ_b` (pass `a = 1` for the unweighted form).
fn element_stiffness(space: &DgSpace, e: usize, a: f64) -> DMatrix<f64> {
    let (pts, w) = space.volume_rule(e);
    let t = space.tabulate(e, &pts);
    let wq: Vec<f64> = w.iter().zip(&t.det).map(|(w, d)| w * d * a).collect();
    t.grad_x.transpose() * scale_rows(&t.grad_x, &wq) + t.grad_y.transpose() * scale_rows(&t.grad_y, &wq)
}

fn element_mass(space: &DgSpace, e: usize) -> DMatrix<f64> {
    let (pts, w) = space.volume_rule(e);
    let t = space.tabulate(e, &pts);
    let wq: Vec<f64> = w.iter().zip(&t.det).map(|(w, d)| w * d).collect();
    t.values.transpose() * scale_rows(&t.values, &wq)
}

fn block_diagonal(
    space: &DgSpace,
    mut f: impl FnMut(usize) -> Result<DMatrix<f64>>,
) -> Result<BlockDiagonal> {
    let mesh = space.mesh();
    let mut blocks = Vec::with_capacity(mesh.num_active());
    let mut offsets = Vec::with_capacity(mesh.num_active());
    for &e in mesh.active() {
        offsets.push(space.offset(e));
        blocks.push(f(e)?);
    }
    Ok(BlockDiagonal { elements: mesh.active().to_vec(), offsets, blocks })
}

/// The broken stiffness `Σ_κ ∫_κ a ∇u·∇v`, without face terms.
pub fn assemble_broken_stiffness(space: &DgSpace, problem: &ModelProblem) -> Result<BlockDiagonal> {
    block_diagonal(space, |e| Ok(element_stiffness(space, e, coefficient(space, problem, e)?)))
}

/// The L² mass matrix, one block per element.
pub fn assemble_mass(space: &DgSpace) -> BlockDiagonal {
    block_diagonal(space, |e| Ok(element_mass(space, e))).expect("mass assembly is infallible")
}

/// `Σ_e w(e) ∫_e [[u]]·[[v]]` over interior faces, and over boundary faces
/// (with `[[u]] = u n`) when `include_boundary` is set.
pub fn face_jump_matrix(space: &DgSpace, weight: impl Fn(&Interface) -> f64, include_boundary: bool) -> Csr {
    let mut acc = BlockAccumulator::new(space.n_dofs());
    for face in space.mesh().interfaces() {
        if face.is_boundary() && !include_boundary {
            continue;
        }
        let fq = face_quadrature(space, face);
        let j = jump_table(&fq);
        let w: Vec<f64> = fq.weights.iter().map(|x| x * weight(face)).collect();
        let m = j.transpose() * scale_rows(&j, &w);
        acc.add_face(&face_offsets(space, face), &m);
    }
    acc.into_csr()
}

/// The SIPDG penalty term `Σ_e ∫_e σ [[u]]·[[v]]` on all faces.
pub fn penalty_matrix(space: &DgSpace, problem: &ModelProblem) -> Csr {
    face_jump_matrix(space, |f| sigma(space, problem, f), true)
}

pub fn assemble(space: &DgSpace, problem: &ModelProblem) -> Result<AssembledSystem> {
    match problem.discretization {
        Discretization::Sipdg => assemble_sipdg(space, problem),
        Discretization::Br2 => assemble_br2(space, problem),
    }
}

/// Volume term, consistency terms and right-hand side shared by both
/// discretizations.
fn assemble_common(
    space: &DgSpace,
    problem: &ModelProblem,
    acc: &mut BlockAccumulator,
    b: &mut [f64],
) -> Result<()> {
    for &e in space.mesh().active() {
        let a = coefficient(space, problem, e)?;
        acc.add(space.offset(e), space.offset(e), element_stiffness(space, e, a));
        let (pts, w) = space.volume_rule(e);
        let t = space.tabulate(e, &pts);
        let map = &space.mesh().element(e).map;
        let o = space.offset(e);
        for (q, &r) in pts.iter().enumerate() {
            let fq = (problem.source)(map.point(r)) * w[q] * t.det[q];
            for k in 0..t.values.ncols() {
                b[o + k] += fq * t.values[(q, k)];
            }
        }
    }
    for face in space.mesh().interfaces() {
        let fq = face_quadrature(space, face);
        let am = coefficient(space, problem, face.minus.element)?;
        let jump = jump_table(&fq);
        let flux = match (&fq.plus, &face.plus) {
            (Some(tp), Some(p)) => {
                let ap = coefficient(space, problem, p.element)?;
                hstack(
                    &(normal_derivative(&fq.minus, face.normal) * (0.5 * am)),
                    &(normal_derivative(tp, face.normal) * (0.5 * ap)),
                )
            }
            _ => normal_derivative(&fq.minus, face.normal) * am,
        };
        let c = flux.transpose() * scale_rows(&jump, &fq.weights);
        let m = -(&c + c.transpose());
        acc.add_face(&face_offsets(space, face), &m);
        if face.is_boundary() {
            let o = space.offset(face.minus.element);
            let g: Vec<f64> = fq.points.iter().map(|&x| (problem.dirichlet)(x)).collect();
            for (q, &gq) in g.iter().enumerate() {
                let wq = fq.weights[q] * gq;
                for k in 0..flux.ncols() {
                    b[o + k] -= wq * flux[(q, k)];
                }
            }
        }
    }
    Ok(())
}

fn finish(
    space: &DgSpace,
    mut acc: BlockAccumulator,
    stab: BlockAccumulator,
    b: Vec<f64>,
) -> AssembledSystem {
    for (&k, m) in &stab.blocks {
        acc.add(k.0, k.1, m.clone());
    }
    let a = acc.into_csr();
    let stabilization = stab.into_csr();
    debug_assert_eq!(a.rows(), space.n_dofs());
    let diag = linalg::diagonal(&a);
    AssembledSystem { a, b, diag, stabilization }
}

/// Symmetric interior penalty operator with weakly imposed Dirichlet data.
pub fn assemble_sipdg(space: &DgSpace, problem: &ModelProblem) -> Result<AssembledSystem> {
    problem.validate()?;
    let n = space.n_dofs();
    let mut acc = BlockAccumulator::new(n);
    let mut stab = BlockAccumulator::new(n);
    let mut b = vec![0.0; n];
    assemble_common(space, problem, &mut acc, &mut b)?;
    for face in space.mesh().interfaces() {
        let s = sigma(space, problem, face);
        let fq = face_quadrature(space, face);
        let j = jump_table(&fq);
        let w: Vec<f64> = fq.weights.iter().map(|x| x * s).collect();
        stab.add_face(&face_offsets(space, face), &(j.transpose() * scale_rows(&j, &w)));
        if face.is_boundary() {
            let o = space.offset(face.minus.element);
            for (q, &x) in fq.points.iter().enumerate() {
                let wq = w[q] * (problem.dirichlet)(x);
                for k in 0..j.ncols() {
                    b[o + k] += wq * j[(q, k)];
                }
            }
        }
    }
    Ok(finish(space, acc, stab, b))
}

/// BR2 operator: the interior penalty is replaced by `η Σ_e ∫ r_e([[u]])·r_e([[v]])`
/// where the lifting `r_e` lives on the elements adjacent to `e`.
pub fn assemble_br2(space: &DgSpace, problem: &ModelProblem) -> Result<AssembledSystem> {
    problem.validate()?;
    let n = space.n_dofs();
    let mut acc = BlockAccumulator::new(n);
    let mut stab = BlockAccumulator::new(n);
    let mut b = vec![0.0; n];
    assemble_common(space, problem, &mut acc, &mut b)?;

    let mass_chol: BTreeMap<usize, nalgebra::Cholesky<f64, nalgebra::Dyn>> = space
        .mesh()
        .active()
        .iter()
        .map(|&e| {
            element_mass(space, e)
                .cholesky()
                .map(|c| (e, c))
                .ok_or_else(|| Error::NotPositiveDefinite(format!("mass matrix of element {e}")))
        })
        .collect::<Result<_>>()?;

    for face in space.mesh().interfaces() {
        let scale = problem.eta * face_coefficient(space, problem, face);
        let fq = face_quadrature(space, face);
        let jump = jump_table(&fq);
        let offs = face_offsets(space, face);
        let avg = if face.is_boundary() { 1.0 } else { 0.5 };
        let g: Option<Vec<f64>> =
            face.is_boundary().then(|| fq.points.iter().map(|&x| (problem.dirichlet)(x)).collect());
        let sides: Vec<(usize, &Tabulation)> = std::iter::once((face.minus.element, &fq.minus))
            .chain(face.plus.iter().zip(fq.plus.iter()).map(|(p, t)| (p.element, t)))
            .collect();
        let mut m = DMatrix::zeros(jump.ncols(), jump.ncols());
        for (e, t) in sides {
            // lifting of each face-local jump onto element e, per unit normal
            // component: r = M^-1 G with G = -c Ψᵀ W J
            let w: Vec<f64> = fq.weights.iter().map(|x| -avg * x).collect();
            let psi_w = scale_rows(&t.values, &w);
            let gmat = psi_w.transpose() * &jump;
            let minv_g = mass_chol[&e].solve(&gmat);
            m += gmat.transpose() * &minv_g * scale;
            if let Some(g) = &g {
                let gv = psi_w.transpose() * nalgebra::DVector::from_column_slice(g);
                let minv_gv = mass_chol[&e].solve(&gv);
                let rhs = gmat.transpose() * minv_gv * scale;
                let o = space.offset(face.minus.element);
                for k in 0..rhs.len() {
                    b[o + k] += rhs[k];
                }
            }
        }
        stab.add_face(&offs, &m);
    }
    Ok(finish(space, acc, stab, b))
}

/// `(|u|²_{1,h} + Σ_e ‖σ^½ [[u]]‖²_e)^½` with the coefficient-weighted gradient term.
pub fn dg_norm(space: &DgSpace, problem: &ModelProblem, u: &[f64]) -> Result<f64> {
    let k = assemble_broken_stiffness(space, problem)?;
    let p = penalty_matrix(space, problem);
    let v = linalg::dot(u, &k.apply(u)) + linalg::form(&p, u, u);
    Ok(v.max(0.0).sqrt())
}

/// Measured constants of `c_low ‖u‖₀² ≤ uᵀAu ≤ c_high Σ_κ η p_κ⁴/h_κ² ‖u‖²_κ`
/// from dense generalized eigenvalues.
pub fn eigenvalue_sandwich_check(space: &DgSpace, problem: &ModelProblem) -> Result<(f64, f64)> {
    let sys = assemble(space, problem)?;
    let a = linalg::to_dense(&sys.a);
    let mass = assemble_mass(space);
    let mut weighted = mass.clone();
    for (blk, &e) in weighted.blocks.iter_mut().zip(&mass.elements) {
        let el = space.mesh().element(e);
        let p = el.degree as f64;
        let h = el.map.diameter();
        *blk *= problem.eta * p.powi(4) / (h * h);
    }
    let m = linalg::to_dense(&mass.to_csr());
    let w = linalg::to_dense(&weighted.to_csr());
    let low = linalg::generalized_eigenvalues(&a, &m)?;
    let high = linalg::generalized_eigenvalues(&a, &w)?;
    Ok((low[0], *high.last().unwrap_or(&0.0)))
}
