mod common;

use common::*;
use hpdg::conforming::estimate_best_constants;
use hpdg::dg::{DgSpace, Discretization, ModelProblem};
use hpdg::mesh::Mesh;
use hpdg::problems::Case;

#[test]
fn gauss_lobatto_norm_is_equivalent_to_l2() {
    for p in 1..=8 {
        let (lo, hi) = gl_norm_range(p);
        let bound = (2.0 + 1.0 / p as f64).powi(2);
        assert!(lo >= 1.0 - 1e-10, "p={p} lower {lo}");
        assert!(hi <= bound + 1e-10, "p={p} upper {hi} > {bound}");
    }
}

#[test]
fn nodal_splitting_is_stable() {
    for p in 1..=8 {
        let (lo, hi) = nodal_splitting_range(p);
        assert!(lo >= 0.2 && hi <= 2.5, "p={p} range [{lo}, {hi}]");
    }
}

#[test]
fn trace_and_inverse_trace_constants_stay_bounded() {
    let c: Vec<_> = (1..=8).map(trace_constants).collect();
    for (p, &(ct, ci)) in (1..).zip(&c) {
        assert!(ct.is_finite() && ct > 0.0 && ct <= 13.0, "p={p} C_t {ct}");
        assert!(ci.is_finite() && ci > 0.0 && ci <= 1.0, "p={p} C_i {ci}");
    }
    assert!(c[7].0 < c[0].0, "C_t grows with p");
}

#[test]
fn prolongation_is_conforming_and_inverted_by_oswald() {
    let meshes = [
        Mesh::lshape(3).unwrap(),
        hanging_hp_mesh(1, Some(1), 1, 4, 3),
        hanging_hp_mesh(2, Some(1), 2, 5, 4),
        hanging_hp_mesh(3, None, 1, 3, 5),
        Mesh::coarse_fine_strip(4, 2, 1).unwrap(),
    ];
    for (k, m) in meshes.iter().enumerate() {
        let pc = check_prolongation(m, k as u64);
        assert!(pc.max_jump <= 1e-12, "mesh {k}: jump {:.2e}", pc.max_jump);
        assert!(pc.oswald_error <= 1e-12, "mesh {k}: Q P error {:.2e}", pc.oswald_error);
    }
}

#[test]
fn decomposition_covers_boundary_dofs_on_refined_meshes() {
    for disc in [Discretization::Sipdg, Discretization::Br2] {
        for (seed, irr) in [(1, Some(1)), (2, None), (7, Some(1))] {
            let m = hanging_hp_mesh(2, irr, 1, 4, seed);
            let problem = Case::Random.problem(disc, 10.0);
            let (space, stab) = assembled_stabilization(&m, &problem);
            let d = hpdg::subspaces::decompose(&space, &hpdg::dg::assemble(&space, &problem).unwrap(), false);
            check_decomposition(&space, &stab, &d).unwrap_or_else(|e| panic!("{disc:?} seed {seed}: {e}"));
        }
    }
}

#[test]
fn unrefined_mesh_has_no_edge_blocks() {
    let m = Case::Lshape.initial_mesh(2).unwrap();
    let problem = Case::Lshape.problem(Discretization::Sipdg, 100.0);
    let space = DgSpace::new(&m);
    let sys = hpdg::dg::assemble(&space, &problem).unwrap();
    assert_eq!(hpdg::subspaces::decompose(&space, &sys, false).n_blocks(), 0);
}

#[test]
fn pcg_agrees_with_dense_oracle() {
    let meshes =
        [hanging_hp_mesh(1, Some(1), 1, 1, 11), Mesh::cartesian(3, 3, [0.0, 1.0, 0.0, 1.0], 3).unwrap()];
    for m in &meshes {
        for c in pcg_dense_oracle(m, &poisson(Discretization::Sipdg, 20.0)) {
            assert!(c.n <= 200, "oracle size {}", c.n);
            assert!(c.solution_error <= 1e-9, "solution error {:.2e}", c.solution_error);
            assert!(c.cond_error <= 1e-3, "condition estimate error {:.2e}", c.cond_error);
        }
    }
}

#[test]
fn lor_pencil_matches_tensor_product_oracle() {
    for p in 1..=5 {
        let (a, b) = (lor_equivalence(p), tensor_lor_equivalence(p));
        assert!((a - b).abs() <= 1e-8 * b, "p={p}: {a} vs {b}");
    }
    assert!((lor_equivalence(1) - 1.0).abs() < 1e-10);
}

#[test]
fn jump_constant_degrades_while_modified_constant_does_not() {
    let c: Vec<_> = [2, 4, 8, 16].iter().map(|&n| estimate_best_constants(n).unwrap()).collect();
    let n: Vec<f64> = c.iter().map(|b| b.n as f64).collect();
    let jump: Vec<f64> = c.iter().map(|b| b.c_jump).collect();
    assert!(loglog_slope(&n, &jump) >= 3.0);
    assert!(c[3].c_modified / c[0].c_modified <= 2.0);
}

#[test]
fn br2_system_with_unit_penalty_keeps_invariants() {
    let m = hanging_hp_mesh(2, Some(1), 2, 4, 9);
    mesh_invariants(&m, &ModelProblem::laplace(Discretization::Br2, 1.5), 9).unwrap();
}
