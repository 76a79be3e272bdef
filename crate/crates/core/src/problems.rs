//! Model problems with closed-form solutions, error norms, and the hp-adaptive
//! marking used by the experiment drivers.

use std::f64::consts::PI;

use crate::basis::{gauss_legendre, legendre};
use crate::dg::{DgSpace, Discretization, ModelProblem};
use crate::error::{invalid, Error, Result};
use crate::mesh::{Mesh, Point};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Case {
    /// Corner singularity `r^{2/3} sin(2θ/3 + π/3)` on the L-shaped domain.
    Lshape,
    /// `atan(200 (r − 0.7))` about `(−0.05, −0.05)` on the unit square.
    Layer,
    /// `sin(πx) sin(πy)` with a coefficient alternating between 1 and 20 on
    /// a 4×4 checkerboard of the unit square.
    Random,
}

impl Case {
    pub fn name(self) -> &'static str {
        match self {
            Case::Lshape => "lshape",
            Case::Layer => "layer",
            Case::Random => "random",
        }
    }

    /// Level-0 mesh for the case, uniform degree `p`.
    pub fn initial_mesh(self, p: usize) -> Result<Mesh> {
        match self {
            Case::Lshape => Mesh::lshape(p),
            Case::Layer | Case::Random => Mesh::cartesian(4, 4, [0.0, 1.0, 0.0, 1.0], p),
        }
    }

    pub fn problem(self, discretization: Discretization, eta: f64) -> ModelProblem {
        ModelProblem::laplace(discretization, eta)
            .with_coefficient(move |x| evaluate_case(self, x).a)
            .with_source(move |x| evaluate_case(self, x).f)
            .with_dirichlet(move |x| evaluate_case(self, x).u)
    }
}

impl std::str::FromStr for Case {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lshape" => Ok(Case::Lshape),
            "layer" => Ok(Case::Layer),
            "random" => Ok(Case::Random),
            other => invalid(format!("unknown case '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaseValues {
    pub u: f64,
    /// Non-finite at the re-entrant corner of the L-shape.
    pub grad: Point,
    pub f: f64,
    pub a: f64,
}

const LAYER_CENTER: Point = [-0.05, -0.05];
const LAYER_RADIUS: f64 = 0.7;
const LAYER_SLOPE: f64 = 200.0;

/// Checkerboard coefficient on the 4×4 cells of the unit square.
fn checkerboard(x: Point) -> f64 {
    let cell = |t: f64| ((t * 4.0).floor() as i64).clamp(0, 3);
    if (cell(x[0]) + cell(x[1])) % 2 == 0 {
        1.0
    } else {
        20.0
    }
}

pub fn evaluate_case(case: Case, x: Point) -> CaseValues {
    match case {
        Case::Lshape => {
            let r = x[0].hypot(x[1]);
            if r == 0.0 {
                return CaseValues { u: 0.0, grad: [f64::NAN, f64::NAN], f: 0.0, a: 1.0 };
            }
            let mut theta = x[1].atan2(x[0]);
            if theta < 0.0 {
                theta += 2.0 * PI;
            }
            let alpha = 2.0 / 3.0;
            let phase = alpha * theta + PI / 3.0;
            let ra = r.powf(alpha);
            let ur = alpha * ra / r * phase.sin();
            let ut = alpha * ra / r * phase.cos();
            let (c, s) = (theta.cos(), theta.sin());
            CaseValues { u: ra * phase.sin(), grad: [ur * c - ut * s, ur * s + ut * c], f: 0.0, a: 1.0 }
        }
        Case::Layer => {
            let d = [x[0] - LAYER_CENTER[0], x[1] - LAYER_CENTER[1]];
            let r = d[0].hypot(d[1]);
            let s = LAYER_SLOPE * (r - LAYER_RADIUS);
            let ur = LAYER_SLOPE / (1.0 + s * s);
            let urr = -2.0 * LAYER_SLOPE * LAYER_SLOPE * s / (1.0 + s * s).powi(2);
            CaseValues { u: s.atan(), grad: [ur * d[0] / r, ur * d[1] / r], f: -(urr + ur / r), a: 1.0 }
        }
        Case::Random => {
            let a = checkerboard(x);
            let (sx, sy) = ((PI * x[0]).sin(), (PI * x[1]).sin());
            let (cx, cy) = ((PI * x[0]).cos(), (PI * x[1]).cos());
            CaseValues { u: sx * sy, grad: [PI * cx * sy, PI * sx * cy], f: a * 2.0 * PI * PI * sx * sy, a }
        }
    }
}

#[derive(Debug, Clone)]
pub struct ErrorNorms {
    pub l2: f64,
    /// Broken H¹ seminorm of the error.
    pub h1: f64,
    /// Squared broken H¹ error per active element, in active order.
    pub element_h1_sq: Vec<f64>,
}

/// L² and broken H¹ errors of `u_h` against an exact solution with gradient.
pub fn errors_against(space: &DgSpace, u_h: &[f64], exact: impl Fn(Point) -> (f64, Point)) -> ErrorNorms {
    let mesh = space.mesh();
    let mut l2 = 0.0;
    let mut element_h1_sq = Vec::with_capacity(mesh.num_active());
    for el in mesh.active_elements() {
        let g = gauss_legendre(el.degree + 3);
        let mut h1 = 0.0;
        for (qy, &y) in g.points.iter().enumerate() {
            for (qx, &x) in g.points.iter().enumerate() {
                let r = [x, y];
                let w = g.weights[qx] * g.weights[qy] * el.map.det(r);
                let (u, du) = exact(el.map.point(r));
                let uh = space.eval(el.id, u_h, r);
                let duh = space.eval_grad(el.id, u_h, r);
                l2 += w * (uh - u).powi(2);
                h1 += w * ((duh[0] - du[0]).powi(2) + (duh[1] - du[1]).powi(2));
            }
        }
        element_h1_sq.push(h1);
    }
    let h1 = element_h1_sq.iter().sum::<f64>().sqrt();
    ErrorNorms { l2: l2.sqrt(), h1, element_h1_sq }
}

pub fn errors(space: &DgSpace, u_h: &[f64], case: Case) -> ErrorNorms {
    errors_against(space, u_h, |x| {
        let v = evaluate_case(case, x);
        (v.u, v.grad)
    })
}

/// Decay rate of the Legendre coefficients of `u_h` on element `e`: the
/// negated least-squares slope of `ln a_k` over `k = 1..p`, where `a_k` is the
/// norm of the tensor coefficients of total order index `max(m, n) = k`.
/// Returns `None` for `p < 2`, where no slope can be fitted.
pub fn legendre_decay(space: &DgSpace, u_h: &[f64], e: usize) -> Option<f64> {
    let p = space.degree(e);
    if p < 2 {
        return None;
    }
    let g = gauss_legendre(p + 2);
    let n = p + 1;
    let mut coef = vec![0.0; n * n];
    for (qy, &y) in g.points.iter().enumerate() {
        for (qx, &x) in g.points.iter().enumerate() {
            let w = g.weights[qx] * g.weights[qy];
            let v = space.eval(e, u_h, [x, y]);
            for nn in 0..n {
                let ly = legendre(nn, 2.0 * y - 1.0);
                for m in 0..n {
                    coef[m + n * nn] += w * v * legendre(m, 2.0 * x - 1.0) * ly;
                }
            }
        }
    }
    let mut a = vec![0.0; n];
    for nn in 0..n {
        for m in 0..n {
            let c = coef[m + n * nn] * ((2 * m + 1) * (2 * nn + 1)) as f64;
            a[m.max(nn)] += c * c;
        }
    }
    let scale = a.iter().cloned().fold(0.0, f64::max).sqrt();
    let floor = (scale * 1e-14).max(f64::MIN_POSITIVE);
    let pts: Vec<(f64, f64)> = (1..=p).map(|k| (k as f64, a[k].sqrt().max(floor).ln())).collect();
    let mean_k = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
    let mean_y = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mean_k) * (p.1 - mean_y)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mean_k).powi(2)).sum();
    Some(-sxy / sxx)
}

#[derive(Debug, Clone, Copy)]
pub struct AmrParams {
    /// Dörfler bulk fraction.
    pub theta: f64,
    pub p_max: usize,
    /// Decay rates below this value send an element to h-refinement.
    pub smoothness_threshold: f64,
    /// Largest degree difference allowed across a face after refinement;
    /// lower neighbours are raised to meet it.
    pub max_degree_jump: Option<usize>,
}

impl Default for AmrParams {
    fn default() -> Self {
        Self { theta: 0.7, p_max: 8, smoothness_threshold: 1.0, max_degree_jump: Some(2) }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AmrMarks {
    pub h_refine: Vec<usize>,
    pub p_increase: Vec<usize>,
}

/// Minimal set of elements carrying at least `theta` of the total squared
/// indicator, largest first; ties are broken by position.
pub fn dorfler(indicators: &[f64], theta: f64) -> Vec<usize> {
    let total: f64 = indicators.iter().sum();
    if !(total > 0.0) {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..indicators.len()).collect();
    order.sort_by(|&a, &b| indicators[b].total_cmp(&indicators[a]));
    let mut acc = 0.0;
    let mut out = Vec::new();
    for k in order {
        if acc >= theta * total {
            break;
        }
        acc += indicators[k];
        out.push(k);
    }
    out
}

/// Mark elements from the exact broken-H¹ error and decide h or p for each.
pub fn amr_step(space: &DgSpace, u_h: &[f64], case: Case, params: AmrParams) -> AmrMarks {
    let err = errors(space, u_h, case);
    let active = space.mesh().active();
    let mut marks = AmrMarks::default();
    for k in dorfler(&err.element_h1_sq, params.theta) {
        let e = active[k];
        let p = space.degree(e);
        let smooth = legendre_decay(space, u_h, e).is_none_or(|s| s >= params.smoothness_threshold);
        if p >= params.p_max || !smooth {
            marks.h_refine.push(e);
        } else {
            marks.p_increase.push(e);
        }
    }
    marks.h_refine.sort_unstable();
    marks.p_increase.sort_unstable();
    marks
}

/// Apply p-increments, h-refine with the given irregularity limit, then raise
/// degrees until no face joins degrees further apart than `max_degree_jump`.
pub fn apply_marks(
    mesh: &Mesh,
    marks: &AmrMarks,
    irregularity: Option<u32>,
    max_degree_jump: Option<usize>,
) -> Result<Mesh> {
    let bumped = mesh.with_degrees(marks.p_increase.iter().map(|&e| (e, mesh.element(e).degree + 1)))?;
    let refined = bumped.refine(&marks.h_refine, irregularity);
    match max_degree_jump {
        Some(jump) => limit_degree_jump(&refined, jump),
        None => Ok(refined),
    }
}

/// Raise degrees so that neighbours across every face differ by at most `jump`.
pub fn limit_degree_jump(mesh: &Mesh, jump: usize) -> Result<Mesh> {
    let mut p: Vec<usize> = mesh.elements().iter().map(|e| e.degree).collect();
    let mut changed = true;
    while changed {
        changed = false;
        for f in mesh.interfaces() {
            let Some(plus) = &f.plus else { continue };
            let (a, b) = (f.minus.element, plus.element);
            let (lo, hi) = if p[a] < p[b] { (a, b) } else { (b, a) };
            if p[hi] > p[lo] + jump {
                p[lo] = p[hi] - jump;
                changed = true;
            }
        }
    }
    let updates: Vec<(usize, usize)> =
        mesh.active().iter().filter(|&&e| p[e] != mesh.element(e).degree).map(|&e| (e, p[e])).collect();
    if updates.is_empty() {
        return Ok(mesh.clone());
    }
    mesh.with_degrees(updates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn closed_form_values() {
        let v = evaluate_case(Case::Lshape, [1.0, 0.0]);
        assert_abs_diff_eq!(v.u, 3f64.sqrt() / 2.0, epsilon = 1e-15);
        assert!(!evaluate_case(Case::Lshape, [0.0, 0.0]).grad[0].is_finite());
        let r = [0.7 / 2f64.sqrt() - 0.05, 0.7 / 2f64.sqrt() - 0.05];
        assert_abs_diff_eq!(evaluate_case(Case::Layer, r).u, 0.0, epsilon = 1e-12);
        assert_eq!(evaluate_case(Case::Random, [0.1, 0.1]).a, 1.0);
        assert_eq!(evaluate_case(Case::Random, [0.3, 0.1]).a, 20.0);
        assert_eq!(evaluate_case(Case::Random, [1.0, 1.0]).a, 1.0);
    }

    #[test]
    fn lshape_branch_is_continuous_across_negative_x_axis() {
        let above = evaluate_case(Case::Lshape, [-0.5, 1e-12]).u;
        let below = evaluate_case(Case::Lshape, [-0.5, -1e-12]).u;
        assert_abs_diff_eq!(above, below, epsilon = 1e-9);
    }

    #[test]
    fn dorfler_marks_minimal_bulk() {
        assert_eq!(dorfler(&[1.0, 5.0, 3.0, 1.0], 0.7), vec![1, 2]);
        assert!(dorfler(&[0.0, 0.0], 0.7).is_empty());
        assert_eq!(dorfler(&[2.0, 2.0], 0.5), vec![0]);
    }

    #[test]
    fn degree_jump_is_limited() {
        let m = Mesh::cartesian(3, 1, [0.0, 3.0, 0.0, 1.0], 2).unwrap();
        let m = m.with_degrees([(m.active()[0], 6)]).unwrap();
        let l = limit_degree_jump(&m, 1).unwrap();
        let p: Vec<usize> = l.active_elements().map(|e| e.degree).collect();
        assert_eq!(p, vec![6, 5, 4]);
    }

    #[test]
    fn decay_separates_smooth_from_rough() {
        let m = Mesh::cartesian(1, 1, [0.0, 1.0, 0.0, 1.0], 6).unwrap();
        let s = DgSpace::new(&m);
        let smooth = s.interpolate(|x| (x[0] + 0.5 * x[1]).exp());
        let rough = s.interpolate(|x| (x[0] - 0.37).abs() + (x[1] - 0.61).abs());
        let ds = legendre_decay(&s, &smooth, 0).unwrap();
        let dr = legendre_decay(&s, &rough, 0).unwrap();
        assert!(ds > 1.0, "{ds}");
        assert!(dr < 1.0, "{dr}");
    }
}
