//! One-dimensional nodal bases and quadrature on the reference interval `[0, 1]`.
//!
//! Element bases are tensor products of [`Basis1D`] built on Gauss–Lobatto
//! nodes. Volume and face integrals use [`QuadratureRule`] (Gauss–Legendre).

use crate::error::{invalid, Result};

/// Distance below which an evaluation point is snapped onto a node, so that the
/// nodal basis reproduces the Kronecker delta exactly.
const NODE_SNAP: f64 = 1e-14;

/// Gauss–Lobatto points and weights on `[0, 1]` for polynomial degree `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLobattoRule {
    pub degree: usize,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Gauss–Legendre points and weights on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    /// Highest polynomial degree integrated exactly.
    pub order: usize,
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Legendre polynomial `P_n` and its derivative on `[-1, 1]`.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p0, mut p1) = (1.0, x);
    for k in 1..n {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    // P_n' from the standard recurrence, valid away from |x| = 1.
    let nf = n as f64;
    let dp = if (1.0 - x * x).abs() > 1e-300 {
        nf * (p0 - x * p1) / (1.0 - x * x)
    } else {
        0.5 * nf * (nf + 1.0) * x.signum().powi(n as i32 + 1)
    };
    (p1, dp)
}

/// Legendre polynomial `P_n` on `[-1, 1]`.
pub fn legendre(n: usize, x: f64) -> f64 {
    legendre_with_derivative(n, x).0
}

/// Gauss–Lobatto rule of degree `p >= 1` (`p + 1` points, exact to degree `2p - 1`).
///
/// Nodes are the endpoints together with the roots of `P_p'`, found by Newton
/// iteration started from the Chebyshev–Lobatto points.
pub fn gauss_lobatto(p: usize) -> Result<GaussLobattoRule> {
    if p == 0 {
        return invalid("Gauss-Lobatto rule needs degree p >= 1");
    }
    let n = p + 1;
    let pf = p as f64;
    let mut x = vec![0.0; n];
    for (k, xk) in x.iter_mut().enumerate() {
        *xk = -(std::f64::consts::PI * k as f64 / pf).cos();
    }
    for xk in x.iter_mut().take(n - 1).skip(1) {
        // Newton on (1 - x^2) P_p'(x), written via P_p and P_{p-1}.
        for _ in 0..100 {
            let (pp, _) = legendre_with_derivative(p, *xk);
            let (pm, _) = legendre_with_derivative(p - 1, *xk);
            let step = (*xk * pp - pm) / ((pf + 1.0) * pp);
            *xk -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
    }
    x[0] = -1.0;
    x[n - 1] = 1.0;
    let mut nodes: Vec<f64> = x.iter().map(|&t| 0.5 * (t + 1.0)).collect();
    let mut weights: Vec<f64> = x
        .iter()
        .map(|&t| {
            let pp = legendre(p, t);
            1.0 / (pf * (pf + 1.0) * pp * pp)
        })
        .collect();
    symmetrize(&mut nodes, &mut weights);
    Ok(GaussLobattoRule { degree: p, nodes, weights })
}

/// Enforce exact mirror symmetry about 1/2.
fn symmetrize(nodes: &mut [f64], weights: &mut [f64]) {
    let n = nodes.len();
    for k in 0..n / 2 {
        let lo = 0.5 * (nodes[k] + (1.0 - nodes[n - 1 - k]));
        nodes[k] = lo;
        nodes[n - 1 - k] = 1.0 - lo;
        let w = 0.5 * (weights[k] + weights[n - 1 - k]);
        weights[k] = w;
        weights[n - 1 - k] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.5;
    }
}

/// Gauss–Legendre rule exact for polynomials of degree `<= order`.
pub fn gauss_quadrature(order: usize) -> QuadratureRule {
    let n = order / 2 + 1;
    gauss_legendre_points(n, order)
}

/// Gauss–Legendre rule with exactly `n >= 1` points.
pub fn gauss_legendre(n: usize) -> QuadratureRule {
    let n = n.max(1);
    gauss_legendre_points(n, 2 * n - 1)
}

fn gauss_legendre_points(n: usize, order: usize) -> QuadratureRule {
    let nf = n as f64;
    let mut points = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for k in 0..n {
        let mut x = -(std::f64::consts::PI * (k as f64 + 0.75) / (nf + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, x);
            let step = p / dp;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        points[k] = 0.5 * (x + 1.0);
        weights[k] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    symmetrize(&mut points, &mut weights);
    QuadratureRule { order, points, weights }
}

/// Lagrange basis on an arbitrary set of distinct nodes.
#[derive(Debug, Clone)]
pub struct Lagrange {
    nodes: Vec<f64>,
    /// `1 / prod_{k != j} (x_j - x_k)`
    denom: Vec<f64>,
}

impl Lagrange {
    pub fn new(nodes: &[f64]) -> Result<Self> {
        if nodes.is_empty() {
            return invalid("Lagrange basis needs at least one node");
        }
        let mut denom = Vec::with_capacity(nodes.len());
        for (j, &xj) in nodes.iter().enumerate() {
            let mut d = 1.0;
            for (k, &xk) in nodes.iter().enumerate() {
                if k != j {
                    let diff = xj - xk;
                    if diff.abs() <= NODE_SNAP {
                        return invalid(format!("coincident interpolation nodes at {xj}"));
                    }
                    d *= diff;
                }
            }
            denom.push(1.0 / d);
        }
        Ok(Self { nodes: nodes.to_vec(), denom })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn snap(&self, x: f64) -> f64 {
        for &node in &self.nodes {
            if (x - node).abs() < NODE_SNAP {
                return node;
            }
        }
        x
    }

    /// Value of basis function `j` at `x`.
    pub fn eval(&self, j: usize, x: f64) -> f64 {
        if let Some(i) = self.nodes.iter().position(|&n| (x - n).abs() < NODE_SNAP) {
            return if i == j { 1.0 } else { 0.0 };
        }
        let mut v = self.denom[j];
        for (k, &xk) in self.nodes.iter().enumerate() {
            if k != j {
                v *= x - xk;
            }
        }
        v
    }

    /// Values of all basis functions at `x`.
    pub fn eval_all(&self, x: f64, out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate().take(self.nodes.len()) {
            *o = self.eval(j, x);
        }
    }

    /// Derivative of basis function `j` at `x`.
    pub fn deriv(&self, j: usize, x: f64) -> f64 {
        let x = self.snap(x);
        let n = self.nodes.len();
        let mut sum = 0.0;
        for m in 0..n {
            if m == j {
                continue;
            }
            let mut prod = 1.0;
            for k in 0..n {
                if k != j && k != m {
                    prod *= x - self.nodes[k];
                }
            }
            sum += prod;
        }
        sum * self.denom[j]
    }

    pub fn deriv_all(&self, x: f64, out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate().take(self.nodes.len()) {
            *o = self.deriv(j, x);
        }
    }
}

/// Nodal Lagrange basis on the Gauss–Lobatto points of one degree.
#[derive(Debug, Clone)]
pub struct Basis1D {
    pub rule: GaussLobattoRule,
    lagrange: Lagrange,
    /// `diff_matrix[i][j] = phi_j'(xi_i)`
    pub diff_matrix: Vec<Vec<f64>>,
}

impl Basis1D {
    pub fn new(p: usize) -> Result<Self> {
        let rule = gauss_lobatto(p)?;
        let lagrange = Lagrange::new(&rule.nodes)?;
        let n = p + 1;
        let diff_matrix =
            (0..n).map(|i| (0..n).map(|j| lagrange.deriv(j, rule.nodes[i])).collect()).collect();
        Ok(Self { rule, lagrange, diff_matrix })
    }

    pub fn degree(&self) -> usize {
        self.rule.degree
    }

    pub fn nodes(&self) -> &[f64] {
        &self.rule.nodes
    }

    pub fn lagrange(&self) -> &Lagrange {
        &self.lagrange
    }

    pub fn eval(&self, j: usize, x: f64) -> f64 {
        self.lagrange.eval(j, x)
    }

    pub fn deriv(&self, j: usize, x: f64) -> f64 {
        self.lagrange.deriv(j, x)
    }
}

/// Value of the `j`-th nodal Lagrange polynomial of `basis` at `x`.
pub fn lagrange_eval(basis: &Basis1D, j: usize, x: f64) -> f64 {
    basis.eval(j, x)
}

/// Dense interpolation matrix `M[i][j] = L_j(to_points[i])` for the Lagrange
/// basis on `from_nodes`.
pub fn interp_matrix(from_nodes: &[f64], to_points: &[f64]) -> Result<Vec<Vec<f64>>> {
    let lag = Lagrange::new(from_nodes)?;
    Ok(to_points.iter().map(|&x| (0..from_nodes.len()).map(|j| lag.eval(j, x)).collect()).collect())
}

/// Cache of Gauss–Lobatto bases indexed by degree.
#[derive(Debug, Clone, Default)]
pub struct BasisCache {
    bases: Vec<Option<Basis1D>>,
}

impl BasisCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Build a cache holding every degree in `1..=max_degree`.
    pub fn up_to(max_degree: usize) -> Self {
        let mut cache = Self::new();
        for p in 1..=max_degree {
            cache.ensure(p);
        }
        cache
    }

    pub fn ensure(&mut self, p: usize) {
        if self.bases.len() <= p {
            self.bases.resize(p + 1, None);
        }
        if self.bases[p].is_none() && p >= 1 {
            self.bases[p] = Basis1D::new(p).ok();
        }
    }

    /// Basis of degree `p`. Panics if `p` was never added.
    pub fn get(&self, p: usize) -> &Basis1D {
        self.bases
            .get(p)
            .and_then(|b| b.as_ref())
            .unwrap_or_else(|| panic!("basis of degree {p} not in cache"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Derivative of P_p on [-1, 1] by the three-term recurrence, used only to
    /// bracket its roots.
    fn dlegendre(p: usize, x: f64) -> f64 {
        let h = 1e-7;
        (legendre(p, x + h) - legendre(p, x - h)) / (2.0 * h)
    }

    fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
        let mut fa = f(a);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            let fm = f(m);
            if fa * fm <= 0.0 {
                b = m;
            } else {
                a = m;
                fa = fm;
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn low_degree_rules() {
        let r1 = gauss_lobatto(1).unwrap();
        assert_eq!(r1.nodes, vec![0.0, 1.0]);
        assert_abs_diff_eq!(r1.weights[0], 0.5, epsilon = 1e-15);
        let r2 = gauss_lobatto(2).unwrap();
        assert_abs_diff_eq!(r2.nodes[1], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(r2.weights[0], 1.0 / 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r2.weights[1], 2.0 / 3.0, epsilon = 1e-15);
        assert!(gauss_lobatto(0).is_err());
    }

    #[test]
    fn degree_three_nodes_match_bisection() {
        // roots of P_3' on [-1, 1], bracketed on (-1, 0) and (0, 1)
        let r = gauss_lobatto(3).unwrap();
        let lo = bisect(|x| dlegendre(3, x), -0.99, -0.01);
        let hi = bisect(|x| dlegendre(3, x), 0.01, 0.99);
        assert_abs_diff_eq!(r.nodes[1], 0.5 * (lo + 1.0), epsilon = 1e-9);
        assert_abs_diff_eq!(r.nodes[2], 0.5 * (hi + 1.0), epsilon = 1e-9);
        assert_abs_diff_eq!(r.nodes[1], 0.276393202250021, epsilon = 1e-12);
        assert_abs_diff_eq!(r.nodes[2], 0.723606797749979, epsilon = 1e-12);
    }

    #[test]
    fn lobatto_rule_exactness_and_symmetry() {
        for p in 1..=12 {
            let r = gauss_lobatto(p).unwrap();
            assert_eq!(r.nodes[0], 0.0);
            assert_eq!(r.nodes[p], 1.0);
            let sum: f64 = r.weights.iter().sum();
            assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-14);
            for k in 0..=p {
                assert_abs_diff_eq!(r.nodes[k] + r.nodes[p - k], 1.0, epsilon = 1e-15);
            }
            for deg in 0..=(2 * p - 1) {
                let q: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x.powi(deg as i32)).sum();
                assert_abs_diff_eq!(q, 1.0 / (deg as f64 + 1.0), epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn gauss_rules() {
        let r = gauss_quadrature(1);
        assert_eq!(r.points.len(), 1);
        assert_abs_diff_eq!(r.points[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(r.weights[0], 1.0, epsilon = 1e-15);
        let r3 = gauss_quadrature(3);
        let q: f64 = r3.points.iter().zip(&r3.weights).map(|(x, w)| w * x.powi(3)).sum();
        assert_abs_diff_eq!(q, 0.25, epsilon = 1e-15);
        for order in 0..=20 {
            let r = gauss_quadrature(order);
            for k in 0..=order / 2 {
                let deg = 2 * k;
                let q: f64 = r.points.iter().zip(&r.weights).map(|(x, w)| w * x.powi(deg as i32)).sum();
                assert_abs_diff_eq!(q, 1.0 / (deg as f64 + 1.0), epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn lagrange_delta_and_partition_of_unity() {
        let b = Basis1D::new(5).unwrap();
        for i in 0..=5 {
            for j in 0..=5 {
                let v = lagrange_eval(&b, j, b.nodes()[i]);
                assert_eq!(v, if i == j { 1.0 } else { 0.0 });
            }
        }
        for k in 0..10 {
            let x = (k as f64 * 0.37).fract();
            let s: f64 = (0..=5).map(|j| b.eval(j, x)).sum();
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn differentiation_matrix() {
        for p in 1..=10 {
            let b = Basis1D::new(p).unwrap();
            for row in &b.diff_matrix {
                assert_abs_diff_eq!(row.iter().sum::<f64>(), 0.0, epsilon = 1e-10);
            }
            for k in 1..=p {
                for (i, &xi) in b.nodes().iter().enumerate() {
                    let d: f64 = (0..=p).map(|j| b.diff_matrix[i][j] * b.nodes()[j].powi(k as i32)).sum();
                    let exact = k as f64 * xi.powi(k as i32 - 1);
                    assert_abs_diff_eq!(d, exact, epsilon = 1e-10);
                }
            }
        }
    }

    #[test]
    fn interpolation_matrices() {
        let nodes = gauss_lobatto(3).unwrap().nodes;
        let m = interp_matrix(&nodes, &nodes).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(m[i][j], if i == j { 1.0 } else { 0.0 });
            }
        }
        let m = interp_matrix(&[0.0, 1.0], &[0.5]).unwrap();
        assert_abs_diff_eq!(m[0][0], 0.5);
        assert_abs_diff_eq!(m[0][1], 0.5);
        let nodes = gauss_lobatto(2).unwrap().nodes;
        let pts = [0.03, 0.17, 0.29, 0.44, 0.61, 0.78, 0.97];
        let m = interp_matrix(&nodes, &pts).unwrap();
        for (row, &x) in m.iter().zip(&pts) {
            let v: f64 = row.iter().zip(&nodes).map(|(l, n)| l * n * n).sum();
            assert_abs_diff_eq!(v, x * x, epsilon = 1e-13);
        }
        assert!(interp_matrix(&[0.0, 0.0, 1.0], &[0.5]).is_err());
    }
}
