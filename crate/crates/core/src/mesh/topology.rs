//! Face and vertex topology of a mesh, rebuilt from the active elements.
//!
//! Faces are found geometrically: from the first corner of each element side
//! we walk along neighbouring sides that lie on the same segment. A side fully
//! tiled by other sides owns those faces (conforming when tiled by exactly one
//! side of equal extent, sub-faces otherwise). Sides covered by no face are on
//! the domain boundary.

use super::{side_point, Mesh, Point, SIDE_CORNERS};

/// One side of one element restricted to the parameter sub-interval
/// `interval` of that side. `interval[0]` corresponds to the start of the face.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trace {
    pub element: usize,
    pub side: usize,
    pub interval: [f64; 2],
}

impl Trace {
    /// Side parameter at face coordinate `s in [0,1]`.
    #[inline]
    pub fn param(&self, s: f64) -> f64 {
        self.interval[0] + s * (self.interval[1] - self.interval[0])
    }

    /// Reference point at face coordinate `s`.
    #[inline]
    pub fn ref_point(&self, s: f64) -> Point {
        side_point(self.side, self.param(s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterfaceKind {
    Conforming,
    /// One fine piece of a nonconforming coarse edge.
    Subface,
    Boundary,
}

/// A mesh face: the minus trace always belongs to the coarse (or
/// lower-numbered) element; `plus` is absent on the domain boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct Interface {
    pub id: usize,
    pub minus: Trace,
    pub plus: Option<Trace>,
    /// Unit normal pointing out of the minus element.
    pub normal: Point,
    /// `min` of the adjacent element diameters.
    pub h: f64,
    /// `max` of the adjacent element degrees.
    pub degree: usize,
    pub kind: InterfaceKind,
}

impl Interface {
    pub fn is_boundary(&self) -> bool {
        self.plus.is_none()
    }
}

/// How an element side participates in the face structure.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum SideRole {
    /// Placeholder before topology is built.
    #[default]
    Unset,
    Boundary {
        face: usize,
    },
    /// The side owns its edge; `faces` tile it in increasing parameter order.
    Master {
        faces: Vec<usize>,
    },
    /// The side lies on the master edge of the minus element of `face`.
    Slave {
        face: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VertexClass {
    Regular,
    Hanging,
    /// Hanging vertex whose touching elements have unequal degrees.
    HpVertex,
}

impl VertexClass {
    pub fn is_hanging(self) -> bool {
        !matches!(self, VertexClass::Regular)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VertexInfo {
    pub class: VertexClass,
    /// Active elements having this vertex as a corner.
    pub corner_of: Vec<usize>,
    /// Active elements whose closure contains the vertex.
    pub touching: Vec<usize>,
    /// For hanging vertices: the master side `(element, side)` holding the
    /// vertex in its interior, and the side parameter of the vertex.
    pub hanging_on: Option<(usize, usize, f64)>,
    /// Vertex lies on the domain boundary.
    pub on_boundary: bool,
}

const REL_TOL: f64 = 1e-10;

impl Mesh {
    pub(crate) fn rebuild_topology(&mut self) {
        let nv = self.vertices.len();
        let mut at_vertex: Vec<Vec<(usize, usize)>> = vec![Vec::new(); nv];
        for &e in &self.active {
            let el = &self.elements[e];
            for (s, corners) in SIDE_CORNERS.iter().enumerate() {
                for &c in corners {
                    at_vertex[el.vertices[c]].push((e, s));
                }
            }
        }

        let ne = self.elements.len();
        let mut roles: Vec<[SideRole; 4]> = vec![Default::default(); ne];
        let mut interfaces: Vec<Interface> = Vec::new();

        for &e in &self.active {
            for s in 0..4 {
                let Some(pieces) = self.walk_side(e, s, &at_vertex) else {
                    continue;
                };
                let el = &self.elements[e];
                let [ca, cb] = SIDE_CORNERS[s];
                let exact = pieces.len() == 1 && {
                    let (mu, ms, _, _) = pieces[0];
                    let other = &self.elements[mu];
                    let [oa, ob] = SIDE_CORNERS[ms];
                    let mine = [el.vertices[ca], el.vertices[cb]];
                    let theirs = [other.vertices[oa], other.vertices[ob]];
                    (mine[0] == theirs[0] && mine[1] == theirs[1])
                        || (mine[0] == theirs[1] && mine[1] == theirs[0])
                };
                if exact {
                    let (mu, ms, _, rev) = pieces[0];
                    if e > mu {
                        continue; // created from the other side
                    }
                    let id = interfaces.len();
                    let plus_iv = if rev { [1.0, 0.0] } else { [0.0, 1.0] };
                    interfaces.push(self.make_face(
                        id,
                        Trace { element: e, side: s, interval: [0.0, 1.0] },
                        Some(Trace { element: mu, side: ms, interval: plus_iv }),
                        InterfaceKind::Conforming,
                    ));
                    roles[e][s] = SideRole::Master { faces: vec![id] };
                    roles[mu][ms] = SideRole::Slave { face: id };
                } else {
                    let mut faces = Vec::with_capacity(pieces.len());
                    for (mu, ms, [t0, t1], rev) in pieces {
                        let id = interfaces.len();
                        let plus_iv = if rev { [1.0, 0.0] } else { [0.0, 1.0] };
                        interfaces.push(self.make_face(
                            id,
                            Trace { element: e, side: s, interval: [t0, t1] },
                            Some(Trace { element: mu, side: ms, interval: plus_iv }),
                            InterfaceKind::Subface,
                        ));
                        roles[mu][ms] = SideRole::Slave { face: id };
                        faces.push(id);
                    }
                    roles[e][s] = SideRole::Master { faces };
                }
            }
        }

        for &e in &self.active {
            for s in 0..4 {
                if roles[e][s] == SideRole::Unset {
                    let id = interfaces.len();
                    interfaces.push(self.make_face(
                        id,
                        Trace { element: e, side: s, interval: [0.0, 1.0] },
                        None,
                        InterfaceKind::Boundary,
                    ));
                    roles[e][s] = SideRole::Boundary { face: id };
                }
            }
        }

        self.interfaces = interfaces;
        self.side_roles = roles;
        self.vertex_info = self.classify();
    }

    /// Walk along side `s` of element `e` collecting neighbour sides that tile
    /// it. Returns `(element, side, [t0, t1], reversed)` per piece, or `None`
    /// when the side is not tiled by neighbours (boundary or slave side).
    fn walk_side(
        &self,
        e: usize,
        s: usize,
        at_vertex: &[Vec<(usize, usize)>],
    ) -> Option<Vec<(usize, usize, [f64; 2], bool)>> {
        let el = &self.elements[e];
        let [ca, cb] = SIDE_CORNERS[s];
        let (va, vb) = (el.vertices[ca], el.vertices[cb]);
        let pa = self.vertices[va].coords;
        let pb = self.vertices[vb].coords;
        let d = [pb[0] - pa[0], pb[1] - pa[1]];
        let len2 = d[0] * d[0] + d[1] * d[1];
        let len = len2.sqrt();
        if len2 <= 0.0 || !len2.is_finite() {
            return None;
        }
        let tol = REL_TOL;
        let param = |p: Point| ((p[0] - pa[0]) * d[0] + (p[1] - pa[1]) * d[1]) / len2;
        let off_line = |p: Point| ((p[0] - pa[0]) * d[1] - (p[1] - pa[1]) * d[0]).abs() / len;

        let mut pieces = Vec::new();
        let mut cur = va;
        let mut tc = 0.0;
        // Each step advances strictly, so the walk visits at most every side once.
        for _ in 0..=at_vertex.len() {
            let mut next = None;
            for &(mu, ms) in &at_vertex[cur] {
                if mu == e {
                    continue;
                }
                let other = &self.elements[mu];
                let [oa, ob] = SIDE_CORNERS[ms];
                let (start, end) = (other.vertices[oa], other.vertices[ob]);
                let (far, reversed) = if start == cur { (end, false) } else { (start, true) };
                let pf = self.vertices[far].coords;
                if off_line(pf) > tol * len {
                    continue;
                }
                let tf = param(pf);
                if tf <= tc + tol {
                    continue;
                }
                if tf > 1.0 + tol {
                    // A longer neighbour side: this side is a slave.
                    return None;
                }
                next = Some((mu, ms, far, tf, reversed));
                break;
            }
            let (mu, ms, far, tf, reversed) = next?;
            let tf = if (tf - 1.0).abs() <= tol { 1.0 } else { tf };
            pieces.push((mu, ms, [tc, tf], reversed));
            if tf == 1.0 {
                return if far == vb { Some(pieces) } else { None };
            }
            cur = far;
            tc = tf;
        }
        None
    }

    fn make_face(&self, id: usize, minus: Trace, plus: Option<Trace>, kind: InterfaceKind) -> Interface {
        let em = &self.elements[minus.element];
        let normal = em.map.side_normal(minus.side);
        let (h, degree) = match &plus {
            Some(p) => {
                let ep = &self.elements[p.element];
                (em.map.diameter().min(ep.map.diameter()), em.degree.max(ep.degree))
            }
            None => (em.map.diameter(), em.degree),
        };
        Interface { id, minus, plus, normal, h, degree, kind }
    }

    fn classify(&self) -> Vec<VertexInfo> {
        let nv = self.vertices.len();
        let mut info: Vec<VertexInfo> = (0..nv)
            .map(|_| VertexInfo {
                class: VertexClass::Regular,
                corner_of: Vec::new(),
                touching: Vec::new(),
                hanging_on: None,
                on_boundary: false,
            })
            .collect();
        for &e in &self.active {
            for &v in &self.elements[e].vertices {
                info[v].corner_of.push(e);
                info[v].touching.push(e);
            }
        }
        for f in &self.interfaces {
            let Some(plus) = &f.plus else {
                let el = &self.elements[f.minus.element];
                for &c in &SIDE_CORNERS[f.minus.side] {
                    info[el.vertices[c]].on_boundary = true;
                }
                continue;
            };
            if f.kind != InterfaceKind::Subface {
                continue;
            }
            let fine = &self.elements[plus.element];
            let [sa, sb] = SIDE_CORNERS[plus.side];
            for end in 0..2 {
                let t = f.minus.interval[end];
                if t <= REL_TOL || t >= 1.0 - REL_TOL {
                    continue;
                }
                // plus parameter at this face end is either 0 (side start) or 1.
                let v = if plus.interval[end] == 0.0 { fine.vertices[sa] } else { fine.vertices[sb] };
                let vi = &mut info[v];
                if !vi.touching.contains(&f.minus.element) {
                    vi.touching.push(f.minus.element);
                }
                vi.hanging_on = Some((f.minus.element, f.minus.side, t));
            }
        }
        for vi in &mut info {
            if vi.touching.len() > vi.corner_of.len() {
                let p0 = self.elements[vi.touching[0]].degree;
                let uniform = vi.touching.iter().all(|&e| self.elements[e].degree == p0);
                vi.class = if uniform { VertexClass::Hanging } else { VertexClass::HpVertex };
            }
        }
        info
    }
}
