use std::collections::{BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BilinearMap, Element, Mesh, Point, Vertex};

fn key(p: Point) -> (u64, u64) {
    (p[0].to_bits(), p[1].to_bits())
}

impl Mesh {
    /// Refine the marked active elements into four children each.
    ///
    /// With `irregularity_limit = Some(l)`, coarse neighbours are refined
    /// until no face joins elements whose levels differ by more than `l`.
    /// Ids that are not active elements are ignored.
    pub fn refine(&self, marked: &[usize], irregularity_limit: Option<u32>) -> Mesh {
        let mut mesh = self.clone();
        let mut lookup: HashMap<(u64, u64), usize> =
            mesh.vertices.iter().map(|v| (key(v.coords), v.id)).collect();
        let marked: BTreeSet<usize> = marked
            .iter()
            .copied()
            .filter(|&e| e < mesh.elements.len() && mesh.elements[e].is_active())
            .collect();
        mesh.split_all(&marked, &mut lookup);
        mesh.rebuild_topology();
        if let Some(limit) = irregularity_limit {
            loop {
                let mut coarse = BTreeSet::new();
                for f in &mesh.interfaces {
                    if let Some(plus) = &f.plus {
                        let lm = mesh.elements[f.minus.element].level;
                        let lp = mesh.elements[plus.element].level;
                        if lp > lm + limit {
                            coarse.insert(f.minus.element);
                        } else if lm > lp + limit {
                            coarse.insert(plus.element);
                        }
                    }
                }
                if coarse.is_empty() {
                    break;
                }
                mesh.split_all(&coarse, &mut lookup);
                mesh.rebuild_topology();
            }
        }
        mesh
    }

    /// Refine every active element once.
    pub fn refine_uniform(&self) -> Mesh {
        let all = self.active.clone();
        self.refine(&all, None)
    }

    /// `rounds` passes of random refinement: each active element is marked
    /// independently with probability `prob` using a seeded generator.
    pub fn random_refine(
        &self,
        rounds: usize,
        prob: f64,
        seed: u64,
        irregularity_limit: Option<u32>,
    ) -> Mesh {
        let prob = prob.clamp(0.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mesh = self.clone();
        for _ in 0..rounds {
            let marked: Vec<usize> =
                mesh.active.iter().copied().filter(|_| rng.gen::<f64>() < prob).collect();
            mesh = mesh.refine(&marked, irregularity_limit);
        }
        mesh
    }

    fn split_all(&mut self, marked: &BTreeSet<usize>, lookup: &mut HashMap<(u64, u64), usize>) {
        if marked.is_empty() {
            return;
        }
        let mut active = Vec::with_capacity(self.active.len() + 3 * marked.len());
        let old = std::mem::take(&mut self.active);
        for e in old {
            if marked.contains(&e) {
                let kids = self.split(e, lookup);
                active.extend_from_slice(&kids);
            } else {
                active.push(e);
            }
        }
        self.active = active;
    }

    fn vertex_at(&mut self, p: Point, lookup: &mut HashMap<(u64, u64), usize>) -> usize {
        *lookup.entry(key(p)).or_insert_with(|| {
            let id = self.vertices.len();
            self.vertices.push(Vertex { id, coords: p });
            id
        })
    }

    fn split(&mut self, e: usize, lookup: &mut HashMap<(u64, u64), usize>) -> [usize; 4] {
        let parent = self.elements[e].clone();
        let c = parent.map.corners;
        let mid = |a: Point, b: Point| [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
        let v = parent.vertices;
        let m01 = self.vertex_at(mid(c[0], c[1]), lookup);
        let m12 = self.vertex_at(mid(c[1], c[2]), lookup);
        let m32 = self.vertex_at(mid(c[3], c[2]), lookup);
        let m03 = self.vertex_at(mid(c[0], c[3]), lookup);
        let center = self.vertex_at(parent.map.point([0.5, 0.5]), lookup);
        let quads = [
            [v[0], m01, center, m03],
            [m01, v[1], m12, center],
            [center, m12, v[2], m32],
            [m03, center, m32, v[3]],
        ];
        let mut kids = [0; 4];
        for (k, q) in quads.iter().enumerate() {
            let id = self.elements.len();
            let corners = [
                self.vertices[q[0]].coords,
                self.vertices[q[1]].coords,
                self.vertices[q[2]].coords,
                self.vertices[q[3]].coords,
            ];
            self.elements.push(Element {
                id,
                vertices: *q,
                level: parent.level + 1,
                parent: Some(e),
                children: None,
                degree: parent.degree,
                map: BilinearMap::new(corners),
            });
            kids[k] = id;
        }
        self.elements[e].children = Some(kids);
        kids
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::InterfaceKind;

    fn unit() -> Mesh {
        Mesh::cartesian(1, 1, [0.0, 1.0, 0.0, 1.0], 2).unwrap()
    }

    #[test]
    fn refine_single_element() {
        let m = unit().refine(&[0], None);
        assert_eq!(m.num_active(), 4);
        assert!(m.interfaces().iter().all(|f| f.kind != InterfaceKind::Subface));
        assert!((m.domain_area() - 1.0).abs() < 1e-14);
        assert!(m.active_elements().all(|e| e.degree == 2 && e.level == 1));
    }

    fn nearest_center(m: &Mesh) -> usize {
        // active element whose centroid is closest to the domain center
        let d = |e: &Element| {
            let c = e.map.centroid();
            (c[0] - 0.5).powi(2) + (c[1] - 0.5).powi(2)
        };
        m.active_elements().min_by(|a, b| d(a).total_cmp(&d(b))).map(|e| e.id).unwrap()
    }

    #[test]
    fn irregularity_closure() {
        let mut free = unit().refine(&[0], None);
        let mut limited = free.clone();
        for _ in 0..3 {
            free = free.refine(&[nearest_center(&free)], None);
            limited = limited.refine(&[nearest_center(&limited)], Some(1));
        }
        assert_eq!(free.max_level_jump(), 3);
        assert!(limited.max_level_jump() <= 1);
        assert!(free.num_active() < limited.num_active());
        assert!((limited.domain_area() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn random_refinement_is_deterministic() {
        let base = Mesh::cartesian(3, 3, [0.0, 1.0, 0.0, 1.0], 1).unwrap();
        let same = base.random_refine(2, 0.0, 7, None);
        assert_eq!(same.num_active(), 9);
        let one = unit().random_refine(1, 1.0, 7, None);
        assert_eq!(one.num_active(), 4);
        let a = base.random_refine(3, 0.5, 42, Some(1));
        let b = base.random_refine(3, 0.5, 42, Some(1));
        assert_eq!(a.active(), b.active());
        assert_eq!(a.vertices(), b.vertices());
    }
}
