//! Property checks shared by the invariant tests and the acceptance report.
#![allow(dead_code)]

use std::collections::BTreeSet;

use hpdg::basis::{gauss_legendre, gauss_lobatto};
use hpdg::conforming::ConformingSpace;
use hpdg::dg::{assemble, DgSpace, Discretization, ModelProblem};
use hpdg::linalg::{self, generalized_eigenvalues, sorted_eigenvalues, to_dense, Csr};
use hpdg::mesh::Mesh;
use hpdg::solve::{
    compose_preconditioner, estimate_condition, pcg, LinearOperator, PcgOptions, PreconditionerKind,
};
use hpdg::subspaces::Decomposition;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Exact mass, boundary mass and Gauss–Lobatto lumped mass of the degree-`p`
/// nodal basis on the unit square.
pub fn unit_element_matrices(p: usize) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let space = DgSpace::new(&Mesh::cartesian(1, 1, [0.0, 1.0, 0.0, 1.0], p).unwrap());
    let b = space.basis(p);
    let n = (p + 1) * (p + 1);
    let phi = |l: usize, x: f64, y: f64| b.eval(l % (p + 1), x) * b.eval(l / (p + 1), y);
    let g = gauss_legendre(p + 2);
    let mut m = DMatrix::zeros(n, n);
    let mut mb = DMatrix::zeros(n, n);
    for (qy, &y) in g.points.iter().enumerate() {
        for (qx, &x) in g.points.iter().enumerate() {
            let w = g.weights[qx] * g.weights[qy];
            for i in 0..n {
                for j in 0..n {
                    m[(i, j)] += w * phi(i, x, y) * phi(j, x, y);
                }
            }
        }
    }
    for (q, &t) in g.points.iter().enumerate() {
        for pt in [[t, 0.0], [1.0, t], [t, 1.0], [0.0, t]] {
            for i in 0..n {
                for j in 0..n {
                    mb[(i, j)] += g.weights[q] * phi(i, pt[0], pt[1]) * phi(j, pt[0], pt[1]);
                }
            }
        }
    }
    let gl = gauss_lobatto(p).unwrap();
    let lumped =
        DMatrix::from_fn(
            n,
            n,
            |i, j| {
                if i == j {
                    gl.weights[i % (p + 1)] * gl.weights[i / (p + 1)]
                } else {
                    0.0
                }
            },
        );
    (m, mb, lumped)
}

/// Extreme eigenvalues of the pencil of the discrete Gauss–Lobatto norm
/// against the exact L² norm.
pub fn gl_norm_range(p: usize) -> (f64, f64) {
    let (m, _, lumped) = unit_element_matrices(p);
    let ev = generalized_eigenvalues(&lumped, &m).unwrap();
    (ev[0], *ev.last().unwrap())
}

/// Extreme eigenvalues of `‖v‖²` against `Σ_i ‖v_i φ_i‖²`.
pub fn nodal_splitting_range(p: usize) -> (f64, f64) {
    let (m, _, _) = unit_element_matrices(p);
    let d = DMatrix::from_diagonal(&m.diagonal());
    let ev = generalized_eigenvalues(&m, &d).unwrap();
    (ev[0], *ev.last().unwrap())
}

/// Best constants `C_t`, `C_i` with `‖v‖²_∂ ≤ C_t p² ‖v‖²` and, for `v`
/// vanishing at the interior nodes, `‖v‖² ≤ C_i p⁻² ‖v‖²_∂` (unit square).
pub fn trace_constants(p: usize) -> (f64, f64) {
    let (m, mb, _) = unit_element_matrices(p);
    let pf = p as f64;
    let ct = generalized_eigenvalues(&mb, &m).unwrap().last().copied().unwrap() / (pf * pf);
    let bnd: Vec<usize> = (0..(p + 1) * (p + 1)).filter(|&l| DgSpace::is_boundary_local(p, l)).collect();
    let sub = |a: &DMatrix<f64>| DMatrix::from_fn(bnd.len(), bnd.len(), |i, j| a[(bnd[i], bnd[j])]);
    let ci = generalized_eigenvalues(&sub(&m), &sub(&mb)).unwrap().last().copied().unwrap() * pf * pf;
    (ct, ci)
}

/// Largest pointwise jump of `u` across interior faces, sampled at Gauss
/// points and face ends.
pub fn max_face_jump(space: &DgSpace, u: &[f64]) -> f64 {
    let g = gauss_legendre(6);
    let mut samples = g.points.clone();
    samples.extend([0.0, 1.0]);
    let mut worst: f64 = 0.0;
    for f in space.mesh().interfaces() {
        let Some(plus) = &f.plus else { continue };
        for &s in &samples {
            let a = space.eval(f.minus.element, u, f.minus.ref_point(s));
            let b = space.eval(plus.element, u, plus.ref_point(s));
            worst = worst.max((a - b).abs());
        }
    }
    worst
}

pub struct ProlongationCheck {
    pub max_jump: f64,
    pub oswald_error: f64,
}

/// For a random conforming vector `c`: the largest face jump of `P c`
/// relative to `max |c|`, and `max |Q P c − c|`.
pub fn check_prolongation(mesh: &Mesh, seed: u64) -> ProlongationCheck {
    let space = DgSpace::new(mesh);
    let cs = ConformingSpace::new(mesh);
    let p = cs.prolongation(&space);
    let c = random_vec(cs.n_dofs(), seed);
    let u = linalg::spmv(&p, &c);
    let scale = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let back = cs.oswald(&space, &u);
    let oswald_error = back.iter().zip(&c).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    ProlongationCheck { max_jump: max_face_jump(&space, &u) / scale, oswald_error }
}

/// `V_J` and the blocks partition the element-boundary dofs, and no
/// stabilization coupling leaves a block except into `V_J`.
pub fn check_decomposition(space: &DgSpace, stabilization: &Csr, d: &Decomposition) -> Result<(), String> {
    let n = space.n_dofs();
    let mut owner = vec![usize::MAX; n];
    for &j in &d.vj {
        if owner[j] != usize::MAX {
            return Err(format!("dof {j} listed twice in V_J"));
        }
        owner[j] = 0;
    }
    for (k, b) in d.blocks.iter().enumerate() {
        for &j in b {
            if owner[j] != usize::MAX {
                return Err(format!("dof {j} in block {k} already assigned"));
            }
            owner[j] = k + 1;
        }
    }
    let boundary: BTreeSet<usize> = space.boundary_dofs().into_iter().collect();
    for (j, &o) in owner.iter().enumerate() {
        match (o != usize::MAX, boundary.contains(&j)) {
            (true, false) => return Err(format!("interior dof {j} assigned to V_B")),
            (false, true) => return Err(format!("boundary dof {j} not covered")),
            _ => {}
        }
    }
    for (k, b) in d.blocks.iter().enumerate() {
        for &i in b {
            if let Some(row) = stabilization.outer_view(i) {
                for (j, &v) in row.iter() {
                    if v != 0.0 && owner[j] != 0 && owner[j] != usize::MAX && owner[j] != k + 1 {
                        return Err(format!("block {k} couples to dof {j} of another block"));
                    }
                }
            }
        }
    }
    Ok(())
}

fn dense_operator(b: &dyn LinearOperator) -> DMatrix<f64> {
    let n = b.dim();
    let mut m = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        b.apply(&e, &mut col);
        e[j] = 0.0;
        for i in 0..n {
            m[(i, j)] = col[i];
        }
    }
    m
}

pub struct OracleCheck {
    pub n: usize,
    pub solution_error: f64,
    pub cond_error: f64,
}

/// Compare PCG against a dense Cholesky solve, and the Lanczos condition
/// estimate against the dense spectrum of `B A`, for each preconditioner.
pub fn pcg_dense_oracle(mesh: &Mesh, problem: &ModelProblem) -> Vec<OracleCheck> {
    let h = hpdg::harness::build_hierarchy(mesh, problem, false).unwrap();
    let a = to_dense(&h.system.a);
    let n = a.nrows();
    let x_ref = a.clone().cholesky().unwrap().solve(&DVector::from_column_slice(&h.system.b));
    let mut out = Vec::new();
    for kind in [PreconditionerKind::Full, PreconditionerKind::Simplified, PreconditionerKind::Jacobi] {
        let b = compose_preconditioner(kind, &h.space, &h.system, Some(&h.coarse), Some(&h.tb)).unwrap();
        let (x, _) = pcg(&h.system.a, &b, &h.system.b, PcgOptions { tol: 1e-12, max_iter: 10 * n });
        let err = x.iter().zip(x_ref.iter()).fold(0.0f64, |m, (u, v)| m.max((u - v).abs())) / x_ref.amax();
        let bd = dense_operator(&b);
        let bd = (&bd + bd.transpose()) * 0.5;
        let l = bd.cholesky().unwrap().l();
        let ev = sorted_eigenvalues(l.transpose() * &a * &l);
        let kappa = ev[n - 1] / ev[0];
        let est = estimate_condition(&h.system.a, &b, n, 7);
        out.push(OracleCheck { n, solution_error: err, cond_error: (est - kappa).abs() / kappa });
    }
    out
}

/// Unit-coefficient problem with a nonzero source and boundary data.
pub fn poisson(disc: Discretization, eta: f64) -> ModelProblem {
    ModelProblem::laplace(disc, eta).with_source(|x| 1.0 + x[0] * x[1]).with_dirichlet(|x| x[0] - 0.5 * x[1])
}

pub fn assembled_stabilization(mesh: &Mesh, problem: &ModelProblem) -> (DgSpace, Csr) {
    let space = DgSpace::new(mesh);
    let sys = assemble(&space, problem).unwrap();
    (space, sys.stabilization)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// L² errors of SIPDG for `sin(πx) sin(πy) + x` on `n × n` unit-square meshes,
/// solved by PCG with the full preconditioner to rounding level.
pub fn sipdg_l2_errors(p: usize, ns: &[usize]) -> Vec<f64> {
    use std::f64::consts::PI;
    let problem = ModelProblem::laplace(Discretization::Sipdg, 10.0)
        .with_source(|x| 2.0 * PI * PI * (PI * x[0]).sin() * (PI * x[1]).sin())
        .with_dirichlet(|x| (PI * x[0]).sin() * (PI * x[1]).sin() + x[0]);
    ns.iter()
        .map(|&n| {
            let m = Mesh::cartesian(n, n, [0.0, 1.0, 0.0, 1.0], p).unwrap();
            let h = hpdg::harness::build_hierarchy(&m, &problem, false).unwrap();
            let (u, rep) =
                h.solve(PreconditionerKind::Full, PcgOptions { tol: 1e-13, max_iter: 2000 }).unwrap();
            assert!(rep.converged());
            hpdg::problems::errors_against(&h.space, &u, |x| {
                let (s, c) = ((PI * x[0]).sin_cos(), (PI * x[1]).sin_cos());
                (s.0 * c.0 + x[0], [PI * s.1 * c.0 + 1.0, PI * s.0 * c.1])
            })
            .l2
        })
        .collect()
}

/// Condition number of the pencil `(A_C, Ã_C)` on the interior conforming dofs
/// of a uniform `3 × 3` mesh of degree `p`.
pub fn lor_equivalence(p: usize) -> f64 {
    use hpdg::conforming::{build_lor, conforming_stiffness};
    let m = Mesh::cartesian(3, 3, [0.0, 1.0, 0.0, 1.0], p).unwrap();
    let space = DgSpace::new(&m);
    let cs = ConformingSpace::new(&m);
    let problem = ModelProblem::laplace(Discretization::Sipdg, 100.0);
    let pm = cs.prolongation(&space);
    let high = conforming_stiffness(&space, &problem, &pm).unwrap();
    let lor = build_lor(&space, &cs, &problem, &pm).unwrap();
    let idx = cs.interior_dofs();
    let a = to_dense(&linalg::submatrix(&high, &idx));
    let b = to_dense(&linalg::submatrix(&lor.coarse, &idx));
    let ev = generalized_eigenvalues(&a, &b).unwrap();
    ev.last().unwrap() / ev[0]
}

/// The same pencil on the 3×3 mesh built from 1D global matrices by
/// Kronecker products, with its own Lagrange evaluation.
pub fn tensor_lor_equivalence(p: usize) -> f64 {
    let x = gauss_lobatto(p).unwrap().nodes;
    let lag = |i: usize, t: f64| -> (f64, f64) {
        let mut v = 1.0;
        let mut d = 0.0;
        for (_, &xj) in x.iter().enumerate().filter(|&(j, _)| j != i) {
            let f = (t - xj) / (x[i] - xj);
            d = d * f + v / (x[i] - xj);
            v *= f;
        }
        (v, d)
    };
    let g = gauss_legendre(p + 3);
    let n = p + 1;
    let mut kh = DMatrix::zeros(n, n);
    let mut mh = DMatrix::zeros(n, n);
    for (q, &t) in g.points.iter().enumerate() {
        for i in 0..n {
            for j in 0..n {
                let (vi, di) = lag(i, t);
                let (vj, dj) = lag(j, t);
                kh[(i, j)] += g.weights[q] * di * dj;
                mh[(i, j)] += g.weights[q] * vi * vj;
            }
        }
    }
    let mut kl = DMatrix::zeros(n, n);
    let mut ml = DMatrix::zeros(n, n);
    for e in 0..p {
        let h = x[e + 1] - x[e];
        for (a, b, k, m) in
            [(e, e, 1.0, 2.0), (e + 1, e + 1, 1.0, 2.0), (e, e + 1, -1.0, 1.0), (e + 1, e, -1.0, 1.0)]
        {
            kl[(a, b)] += k / h;
            ml[(a, b)] += m * h / 6.0;
        }
    }
    let ne = 3;
    let h = 1.0 / ne as f64;
    let ng = ne * p + 1;
    let global = |k: &DMatrix<f64>, m: &DMatrix<f64>| {
        let mut kg = DMatrix::zeros(ng, ng);
        let mut mg = DMatrix::zeros(ng, ng);
        for e in 0..ne {
            for i in 0..n {
                for j in 0..n {
                    kg[(e * p + i, e * p + j)] += k[(i, j)] / h;
                    mg[(e * p + i, e * p + j)] += m[(i, j)] * h;
                }
            }
        }
        let full = kg.kronecker(&mg) + mg.kronecker(&kg);
        let inner: Vec<usize> = (1..ng - 1).flat_map(|j| (1..ng - 1).map(move |i| i + ng * j)).collect();
        DMatrix::from_fn(inner.len(), inner.len(), |a, b| full[(inner[a], inner[b])])
    };
    let ev = generalized_eigenvalues(&global(&kh, &mh), &global(&kl, &ml)).unwrap();
    ev.last().unwrap() / ev[0]
}

/// Random-case mesh after `rounds` random refinements with degrees drawn from
/// `lo..=hi`.
pub fn hanging_hp_mesh(rounds: usize, irregularity: Option<u32>, lo: usize, hi: usize, seed: u64) -> Mesh {
    use hpdg::harness::{assign_degrees, DegreePolicy};
    let base = Mesh::cartesian(4, 4, [0.0, 1.0, 0.0, 1.0], 1).unwrap();
    let m = base.random_refine(rounds, 0.5, seed, irregularity);
    let policy = if lo == hi { DegreePolicy::Fixed(lo) } else { DegreePolicy::Random { lo, hi } };
    assign_degrees(&m, policy, seed).unwrap()
}

/// Prolongation and decomposition checks on one mesh.
pub fn mesh_invariants(mesh: &Mesh, problem: &ModelProblem, seed: u64) -> Result<(), String> {
    let pc = check_prolongation(mesh, seed);
    if pc.max_jump > 1e-12 {
        return Err(format!("range(P) jump {:.2e}", pc.max_jump));
    }
    if pc.oswald_error > 1e-12 {
        return Err(format!("Q P deviates from identity by {:.2e}", pc.oswald_error));
    }
    let space = DgSpace::new(mesh);
    let sys = assemble(&space, problem).map_err(|e| e.to_string())?;
    let d = hpdg::subspaces::decompose(&space, &sys, false);
    check_decomposition(&space, &sys.stabilization, &d)
}
