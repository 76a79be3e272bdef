//! Nonconforming quadrilateral meshes built by isotropic quadtree refinement.
//!
//! Elements are straight-sided convex quads with a bilinear reference map from
//! `[0,1]^2`. Corner `k` of an element maps from reference corner
//! `(0,0), (1,0), (1,1), (0,1)` for `k = 0..4`. Side `s` is parametrised by
//! `t in [0,1]` along increasing reference coordinate:
//!
//! | side | reference point | corners (start, end) |
//! |------|-----------------|----------------------|
//! | 0    | `(t, 0)`        | `(0, 1)`             |
//! | 1    | `(1, t)`        | `(1, 2)`             |
//! | 2    | `(t, 1)`        | `(3, 2)`             |
//! | 3    | `(0, t)`        | `(0, 3)`             |

mod io;
mod refine;
mod topology;

pub use io::{read_mesh, write_mesh};
pub use topology::{Interface, InterfaceKind, SideRole, Trace, VertexClass, VertexInfo};

use crate::error::{invalid, Result};

pub type Point = [f64; 2];

/// Largest polynomial degree accepted on input.
pub const MAX_DEGREE: usize = 64;

/// Corner indices `(start, end)` of each side in its parameter direction.
pub const SIDE_CORNERS: [[usize; 2]; 4] = [[0, 1], [1, 2], [3, 2], [0, 3]];

/// Reference coordinates of side `side` at parameter `t`.
#[inline]
pub fn side_point(side: usize, t: f64) -> Point {
    match side {
        0 => [t, 0.0],
        1 => [1.0, t],
        2 => [t, 1.0],
        _ => [0.0, t],
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vertex {
    pub id: usize,
    pub coords: Point,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub id: usize,
    /// Counterclockwise corner vertex ids.
    pub vertices: [usize; 4],
    pub level: u32,
    pub parent: Option<usize>,
    pub children: Option<[usize; 4]>,
    pub degree: usize,
    pub map: BilinearMap,
}

impl Element {
    pub fn is_active(&self) -> bool {
        self.children.is_none()
    }
}

/// Bilinear map from the reference square onto a physical quad.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BilinearMap {
    pub corners: [Point; 4],
}

impl BilinearMap {
    pub fn new(corners: [Point; 4]) -> Self {
        Self { corners }
    }

    pub fn point(&self, r: Point) -> Point {
        let [c0, c1, c2, c3] = self.corners;
        let (x, y) = (r[0], r[1]);
        let w = [(1.0 - x) * (1.0 - y), x * (1.0 - y), x * y, (1.0 - x) * y];
        [
            w[0] * c0[0] + w[1] * c1[0] + w[2] * c2[0] + w[3] * c3[0],
            w[0] * c0[1] + w[1] * c1[1] + w[2] * c2[1] + w[3] * c3[1],
        ]
    }

    /// `J[i][j] = d x_i / d xhat_j`
    pub fn jacobian(&self, r: Point) -> [[f64; 2]; 2] {
        let [c0, c1, c2, c3] = self.corners;
        let (x, y) = (r[0], r[1]);
        let mut j = [[0.0; 2]; 2];
        for i in 0..2 {
            j[i][0] = (1.0 - y) * (c1[i] - c0[i]) + y * (c2[i] - c3[i]);
            j[i][1] = (1.0 - x) * (c3[i] - c0[i]) + x * (c2[i] - c1[i]);
        }
        j
    }

    pub fn det(&self, r: Point) -> f64 {
        let j = self.jacobian(r);
        j[0][0] * j[1][1] - j[0][1] * j[1][0]
    }

    /// Inverse-transpose of the Jacobian and its determinant.
    pub fn inv_transpose(&self, r: Point) -> ([[f64; 2]; 2], f64) {
        let j = self.jacobian(r);
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        let inv_det = 1.0 / det;
        ([[j[1][1] * inv_det, -j[1][0] * inv_det], [-j[0][1] * inv_det, j[0][0] * inv_det]], det)
    }

    /// Physical tangent `dx/dt` of a side.
    pub fn side_tangent(&self, side: usize) -> Point {
        let [a, b] = SIDE_CORNERS[side];
        let (pa, pb) = (self.corners[a], self.corners[b]);
        [pb[0] - pa[0], pb[1] - pa[1]]
    }

    /// Outward unit normal of a side (sides are straight).
    pub fn side_normal(&self, side: usize) -> Point {
        let t = self.side_tangent(side);
        let len = (t[0] * t[0] + t[1] * t[1]).sqrt();
        match side {
            0 | 1 => [t[1] / len, -t[0] / len],
            _ => [-t[1] / len, t[0] / len],
        }
    }

    pub fn side_length(&self, side: usize) -> f64 {
        let t = self.side_tangent(side);
        (t[0] * t[0] + t[1] * t[1]).sqrt()
    }

    /// Element diameter (longest diagonal).
    pub fn diameter(&self) -> f64 {
        let d = |a: Point, b: Point| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        let [c0, c1, c2, c3] = self.corners;
        d(c0, c2).max(d(c1, c3))
    }

    pub fn area(&self) -> f64 {
        let [c0, c1, c2, c3] = self.corners;
        0.5 * ((c0[0] * c1[1] - c1[0] * c0[1])
            + (c1[0] * c2[1] - c2[0] * c1[1])
            + (c2[0] * c3[1] - c3[0] * c2[1])
            + (c3[0] * c0[1] - c0[0] * c3[1]))
    }

    pub fn centroid(&self) -> Point {
        self.point([0.5, 0.5])
    }

    /// True when every corner has positive Jacobian determinant, i.e. the quad
    /// is strictly convex and counterclockwise.
    pub fn is_valid(&self) -> bool {
        [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]].iter().all(|&r| self.det(r) > 0.0)
    }
}

/// An immutable hp mesh: the refinement tree, its active leaves, and the
/// derived face/vertex topology.
#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<Vertex>,
    elements: Vec<Element>,
    active: Vec<usize>,
    interfaces: Vec<Interface>,
    vertex_info: Vec<VertexInfo>,
    side_roles: Vec<[SideRole; 4]>,
}

impl Mesh {
    /// Build a mesh from vertices and level-0 elements given as corner ids.
    pub fn from_parts(coords: Vec<Point>, elements: Vec<([usize; 4], usize)>) -> Result<Self> {
        let specs = elements.into_iter().map(|(v, p)| (v, 0, p)).collect();
        Self::from_parts_with_levels(coords, specs)
    }

    pub(crate) fn from_parts_with_levels(
        coords: Vec<Point>,
        elements: Vec<([usize; 4], u32, usize)>,
    ) -> Result<Self> {
        if elements.is_empty() {
            return invalid("mesh needs at least one element");
        }
        for c in &coords {
            if !(c[0].is_finite() && c[1].is_finite()) {
                return invalid("vertex coordinates must be finite");
            }
        }
        let vertices: Vec<Vertex> =
            coords.into_iter().enumerate().map(|(id, coords)| Vertex { id, coords }).collect();
        let mut elems = Vec::with_capacity(elements.len());
        for (id, (vids, level, degree)) in elements.into_iter().enumerate() {
            if degree == 0 {
                return invalid(format!("element {id} has degree 0"));
            }
            let mut corners = [[0.0; 2]; 4];
            for (k, &v) in vids.iter().enumerate() {
                match vertices.get(v) {
                    Some(vx) => corners[k] = vx.coords,
                    None => return invalid(format!("element {id} references missing vertex {v}")),
                }
            }
            let map = BilinearMap::new(corners);
            if !map.is_valid() {
                return invalid(format!("element {id} is not a convex counterclockwise quad"));
            }
            elems.push(Element { id, vertices: vids, level, parent: None, children: None, degree, map });
        }
        let active = (0..elems.len()).collect();
        let mut mesh = Mesh {
            vertices,
            elements: elems,
            active,
            interfaces: Vec::new(),
            vertex_info: Vec::new(),
            side_roles: Vec::new(),
        };
        mesh.rebuild_topology();
        Ok(mesh)
    }

    /// Tensor-product mesh of `nx * ny` equal rectangles on `bbox = [x0, x1, y0, y1]`.
    pub fn cartesian(nx: usize, ny: usize, bbox: [f64; 4], degree: usize) -> Result<Self> {
        let [x0, x1, y0, y1] = bbox;
        if nx == 0 || ny == 0 {
            return invalid("cartesian mesh needs nx, ny >= 1");
        }
        if !(x1 > x0 && y1 > y0) || !bbox.iter().all(|v| v.is_finite()) {
            return invalid("degenerate bounding box");
        }
        let mut coords = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                let x = x0 + (x1 - x0) * i as f64 / nx as f64;
                let y = y0 + (y1 - y0) * j as f64 / ny as f64;
                coords.push([x, y]);
            }
        }
        let vid = |i: usize, j: usize| j * (nx + 1) + i;
        let mut elems = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                elems.push(([vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)], degree));
            }
        }
        Self::from_parts(coords, elems)
    }

    /// L-shaped domain `[-1,1]^2 \ (0,1)x(-1,0)` as 12 congruent squares.
    pub fn lshape(degree: usize) -> Result<Self> {
        // 5x5 vertex lattice with spacing 1/2; cells in the removed quadrant dropped.
        let n = 4;
        let mut coords = Vec::new();
        let mut index = vec![None; (n + 1) * (n + 1)];
        for j in 0..=n {
            for i in 0..=n {
                let x = -1.0 + 0.5 * i as f64;
                let y = -1.0 + 0.5 * j as f64;
                if x > 0.0 && y < 0.0 {
                    continue;
                }
                index[j * (n + 1) + i] = Some(coords.len());
                coords.push([x, y]);
            }
        }
        let mut elems = Vec::new();
        for j in 0..n {
            for i in 0..n {
                let cx = -1.0 + 0.5 * (i as f64 + 0.5);
                let cy = -1.0 + 0.5 * (j as f64 + 0.5);
                if cx > 0.0 && cy < 0.0 {
                    continue;
                }
                let v = |a: usize, b: usize| index[b * (n + 1) + a].expect("lattice vertex");
                elems.push(([v(i, j), v(i + 1, j), v(i + 1, j + 1), v(i, j + 1)], degree));
            }
        }
        Self::from_parts(coords, elems)
    }

    /// One coarse unit square of degree `coarse_degree` next to a column of
    /// `n` stacked strips of degree `fine_degree`, sharing a nonconforming edge.
    pub fn coarse_fine_strip(n: usize, coarse_degree: usize, fine_degree: usize) -> Result<Self> {
        if n == 0 {
            return invalid("strip mesh needs n >= 1");
        }
        let mut coords = vec![[0.0, 0.0], [0.0, 1.0]];
        // right column x = 1 and x = 2
        for j in 0..=n {
            let y = j as f64 / n as f64;
            coords.push([1.0, y]);
            coords.push([2.0, y]);
        }
        let mid = |j: usize| 2 + 2 * j;
        let right = |j: usize| 3 + 2 * j;
        let mut elems = vec![([0, mid(0), mid(n), 1], coarse_degree)];
        for j in 0..n {
            elems.push(([mid(j), right(j), right(j + 1), mid(j + 1)], fine_degree));
        }
        Self::from_parts(coords, elems)
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn vertex(&self, id: usize) -> Point {
        self.vertices[id].coords
    }

    /// All elements of the refinement tree, active or not.
    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn element(&self, id: usize) -> &Element {
        &self.elements[id]
    }

    /// Ids of the active (leaf) elements in a fixed order.
    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn num_active(&self) -> usize {
        self.active.len()
    }

    pub fn active_elements(&self) -> impl Iterator<Item = &Element> + '_ {
        self.active.iter().map(move |&id| &self.elements[id])
    }

    pub fn interfaces(&self) -> &[Interface] {
        &self.interfaces
    }

    pub fn vertex_info(&self) -> &[VertexInfo] {
        &self.vertex_info
    }

    /// Role of side `side` of element `elem` in the face structure.
    pub fn side_role(&self, elem: usize, side: usize) -> &SideRole {
        &self.side_roles[elem][side]
    }

    pub fn domain_area(&self) -> f64 {
        self.active_elements().map(|e| e.map.area()).sum()
    }

    pub fn max_degree(&self) -> usize {
        self.active_elements().map(|e| e.degree).max().unwrap_or(1)
    }

    /// Largest refinement-level difference across any interface.
    pub fn max_level_jump(&self) -> u32 {
        self.interfaces
            .iter()
            .filter_map(|f| {
                let plus = f.plus.as_ref()?;
                let a = self.elements[f.minus.element].level;
                let b = self.elements[plus.element].level;
                Some(a.abs_diff(b))
            })
            .max()
            .unwrap_or(0)
    }

    /// Copy of the mesh with new degrees for the given elements.
    pub fn with_degrees(&self, degrees: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut mesh = self.clone();
        for (id, p) in degrees {
            if p == 0 {
                return invalid("polynomial degree must be >= 1");
            }
            match mesh.elements.get_mut(id) {
                Some(e) if e.is_active() => e.degree = p,
                _ => return invalid(format!("element {id} is not active")),
            }
        }
        mesh.rebuild_topology();
        Ok(mesh)
    }

    /// Copy of the mesh with every active element set to degree `p`.
    pub fn with_uniform_degree(&self, p: usize) -> Result<Self> {
        let ids: Vec<_> = self.active.iter().map(|&id| (id, p)).collect();
        self.with_degrees(ids)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count(mesh: &Mesh) -> (usize, usize) {
        let interior = mesh.interfaces().iter().filter(|f| f.plus.is_some()).count();
        (interior, mesh.interfaces().len() - interior)
    }

    /// Brute-force count of distinct interior and boundary edges of a
    /// structured grid, by enumerating each cell's four edges.
    fn grid_edges(nx: usize, ny: usize) -> (usize, usize) {
        use std::collections::HashMap;
        let mut seen: HashMap<((usize, usize), (usize, usize)), usize> = HashMap::new();
        for j in 0..ny {
            for i in 0..nx {
                let c = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
                for k in 0..4 {
                    let (a, b) = (c[k], c[(k + 1) % 4]);
                    let key = if a < b { (a, b) } else { (b, a) };
                    *seen.entry(key).or_default() += 1;
                }
            }
        }
        let interior = seen.values().filter(|&&n| n == 2).count();
        (interior, seen.len() - interior)
    }

    #[test]
    fn cartesian_counts() {
        let m = Mesh::cartesian(1, 1, [0.0, 1.0, 0.0, 1.0], 2).unwrap();
        assert_eq!(m.num_active(), 1);
        assert_eq!(count(&m), (0, 4));
        let m = Mesh::cartesian(2, 2, [0.0, 1.0, 0.0, 1.0], 1).unwrap();
        assert_eq!(count(&m), (4, 8));
        let m = Mesh::cartesian(3, 2, [0.0, 3.0, 0.0, 2.0], 1).unwrap();
        assert_eq!(m.num_active(), 6);
        assert_eq!(count(&m), grid_edges(3, 2));
        assert_eq!(count(&m).0, 7);
        assert!(m.interfaces().iter().all(|f| f.kind != InterfaceKind::Subface));
    }

    #[test]
    fn degenerate_bbox_rejected() {
        assert!(Mesh::cartesian(2, 2, [0.0, 0.0, 0.0, 1.0], 1).is_err());
        assert!(Mesh::cartesian(0, 2, [0.0, 1.0, 0.0, 1.0], 1).is_err());
        assert!(Mesh::cartesian(2, 2, [0.0, f64::NAN, 0.0, 1.0], 1).is_err());
    }

    #[test]
    fn lshape_structure() {
        let m = Mesh::lshape(2).unwrap();
        assert_eq!(m.num_active(), 12);
        assert!(m.vertices().iter().any(|v| v.coords == [0.0, 0.0]));
        assert!(m.interfaces().iter().all(|f| f.kind != InterfaceKind::Subface));
        assert!((m.domain_area() - 3.0).abs() < 1e-12);
        assert!(m.vertex_info().iter().all(|v| v.class == VertexClass::Regular));
    }

    #[test]
    fn bilinear_map_geometry() {
        let map = BilinearMap::new([[0.0, 0.0], [2.0, 0.0], [2.5, 1.0], [0.0, 1.5]]);
        assert!(map.is_valid());
        let n0 = map.side_normal(0);
        assert!((n0[0]).abs() < 1e-15 && (n0[1] + 1.0).abs() < 1e-15);
        let n3 = map.side_normal(3);
        assert!((n3[0] + 1.0).abs() < 1e-15);
        let n2 = map.side_normal(2);
        assert!(n2[1] > 0.0);
        let n1 = map.side_normal(1);
        assert!(n1[0] > 0.0);
        let bad = BilinearMap::new([[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]]);
        assert!(!bad.is_valid());
    }
}
