//! Bounding-volume hierarchy over mesh triangles for nearest-hit ray casts.

use crate::geometry::{Aabb, Ray, TriMesh, Vec3};

const LEAF_SIZE: usize = 4;
const SAH_BINS: usize = 12;

#[derive(Debug, Clone)]
struct Node {
    bounds: Aabb,
    /// Leaf: first triangle slot. Interior: index of the second child (the
    /// first child immediately follows the node).
    offset: u32,
    /// Triangle count for leaves, 0 for interior nodes.
    count: u32,
    axis: u8,
}

#[derive(Debug, Clone, Copy)]
struct Tri {
    a: Vec3,
    e1: Vec3,
    e2: Vec3,
    face: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    /// Distance along the (unit) ray direction.
    pub distance: f64,
    pub face: usize,
}

#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<Node>,
    tris: Vec<Tri>,
}

impl Bvh {
    pub fn build(mesh: &TriMesh) -> Self {
        let mut refs: Vec<(Aabb, Vec3, u32)> = mesh
            .faces
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let b = Aabb::from_points([&mesh.vertices[f[0]], &mesh.vertices[f[1]], &mesh.vertices[f[2]]]);
                (b, b.center(), i as u32)
            })
            .collect();
        let mut nodes = Vec::with_capacity(2 * refs.len() / LEAF_SIZE + 1);
        if !refs.is_empty() {
            let n = refs.len();
            build_node(&mut refs, 0, n, &mut nodes);
        }
        let tris = refs
            .iter()
            .map(|&(_, _, face)| {
                let [a, b, c] = mesh.triangle(face as usize);
                Tri {
                    a,
                    e1: b - a,
                    e2: c - a,
                    face,
                }
            })
            .collect();
        Bvh { nodes, tris }
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn bounds(&self) -> Aabb {
        self.nodes.first().map(|n| n.bounds).unwrap_or_else(Aabb::empty)
    }

    /// Nearest intersection with positive distance, if any.
    pub fn intersect(&self, ray: &Ray) -> Option<Hit> {
        if self.nodes.is_empty() {
            return None;
        }
        let dir = *ray.direction();
        let inv = Vec3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let neg = [dir.x < 0.0, dir.y < 0.0, dir.z < 0.0];
        let mut best = f64::INFINITY;
        let mut best_face = usize::MAX;
        let mut stack = [0u32; 64];
        let mut sp = 0usize;
        let mut idx = 0usize;
        loop {
            let node = &self.nodes[idx];
            if slab_hit(&node.bounds, &ray.origin, &inv, best) {
                if node.count > 0 {
                    let start = node.offset as usize;
                    for tri in &self.tris[start..start + node.count as usize] {
                        if let Some(t) = intersect_triangle(tri, &ray.origin, &dir) {
                            if t < best {
                                best = t;
                                best_face = tri.face as usize;
                            }
                        }
                    }
                } else {
                    // Visit the near child first.
                    let (first, second) = if neg[node.axis as usize] {
                        (node.offset as usize, idx + 1)
                    } else {
                        (idx + 1, node.offset as usize)
                    };
                    stack[sp] = second as u32;
                    sp += 1;
                    idx = first;
                    continue;
                }
            }
            if sp == 0 {
                break;
            }
            sp -= 1;
            idx = stack[sp] as usize;
        }
        (best_face != usize::MAX).then_some(Hit {
            distance: best,
            face: best_face,
        })
    }
}

fn build_node(refs: &mut [(Aabb, Vec3, u32)], start: usize, end: usize, nodes: &mut Vec<Node>) -> usize {
    let slice = &refs[start..end];
    let mut bounds = Aabb::empty();
    let mut cbounds = Aabb::empty();
    for (b, c, _) in slice {
        bounds.grow(&b.min);
        bounds.grow(&b.max);
        cbounds.grow(c);
    }
    let me = nodes.len();
    nodes.push(Node {
        bounds,
        offset: start as u32,
        count: (end - start) as u32,
        axis: 0,
    });
    let n = end - start;
    if n <= LEAF_SIZE {
        return me;
    }
    let extent = cbounds.max - cbounds.min;
    let axis = if extent.x >= extent.y && extent.x >= extent.z {
        0
    } else if extent.y >= extent.z {
        1
    } else {
        2
    };
    if !(extent[axis] > 0.0) {
        return me;
    }

    // Binned surface-area heuristic along the widest centroid axis.
    let lo = cbounds.min[axis];
    let scale = SAH_BINS as f64 / extent[axis];
    let bin_of = |c: &Vec3| (((c[axis] - lo) * scale) as usize).min(SAH_BINS - 1);
    let mut bins = [(Aabb::empty(), 0usize); SAH_BINS];
    for (b, c, _) in slice {
        let k = bin_of(c);
        bins[k].0.grow(&b.min);
        bins[k].0.grow(&b.max);
        bins[k].1 += 1;
    }
    let area = |b: &Aabb| {
        if b.is_empty() {
            0.0
        } else {
            let d = b.max - b.min;
            d.x * d.y + d.y * d.z + d.z * d.x
        }
    };
    let mut best = (f64::INFINITY, 0usize);
    for split in 1..SAH_BINS {
        let (mut lb, mut ln, mut rb, mut rn) = (Aabb::empty(), 0, Aabb::empty(), 0);
        for (k, (b, c)) in bins.iter().enumerate() {
            if *c == 0 {
                continue;
            }
            let (bb, nn) = if k < split { (&mut lb, &mut ln) } else { (&mut rb, &mut rn) };
            bb.grow(&b.min);
            bb.grow(&b.max);
            *nn += c;
        }
        if ln == 0 || rn == 0 {
            continue;
        }
        let cost = area(&lb) * ln as f64 + area(&rb) * rn as f64;
        if cost < best.0 {
            best = (cost, split);
        }
    }
    let mid = if best.0.is_finite() {
        let split = best.1;
        let s = &mut refs[start..end];
        let mut i = 0;
        for j in 0..s.len() {
            if bin_of(&s[j].1) < split {
                s.swap(i, j);
                i += 1;
            }
        }
        start + i
    } else {
        let mid = start + n / 2;
        refs[start..end].select_nth_unstable_by(n / 2, |a, b| a.1[axis].total_cmp(&b.1[axis]));
        mid
    };
    build_node(refs, start, mid, nodes);
    let right = build_node(refs, mid, end, nodes);
    nodes[me].offset = right as u32;
    nodes[me].count = 0;
    nodes[me].axis = axis as u8;
    me
}

#[inline]
fn slab_hit(b: &Aabb, o: &Vec3, inv: &Vec3, t_max: f64) -> bool {
    let mut t0 = 0.0f64;
    let mut t1 = t_max;
    for i in 0..3 {
        let a = (b.min[i] - o[i]) * inv[i];
        let c = (b.max[i] - o[i]) * inv[i];
        // NaN means a ray parallel to the slab starting on its boundary;
        // that axis does not constrain the interval.
        if a.is_nan() || c.is_nan() {
            continue;
        }
        let (near, far) = if a <= c { (a, c) } else { (c, a) };
        if near > t0 {
            t0 = near;
        }
        if far < t1 {
            t1 = far;
        }
        if t0 > t1 {
            return false;
        }
    }
    true
}

/// Barycentric slack so rays through shared vertices and edges cannot slip
/// between adjacent triangles.
const BARY_EPS: f64 = 1e-12;

/// Möller–Trumbore; two-sided.
#[inline]
fn intersect_triangle(tri: &Tri, o: &Vec3, d: &Vec3) -> Option<f64> {
    let p = d.cross(&tri.e2);
    let det = tri.e1.dot(&p);
    if det.abs() < 1e-300 {
        return None;
    }
    let inv = 1.0 / det;
    let s = o - tri.a;
    let u = s.dot(&p) * inv;
    if !(-BARY_EPS..=1.0 + BARY_EPS).contains(&u) {
        return None;
    }
    let q = s.cross(&tri.e1);
    let v = d.dot(&q) * inv;
    if v < -BARY_EPS || u + v > 1.0 + BARY_EPS {
        return None;
    }
    let t = tri.e2.dot(&q) * inv;
    (t > 1e-12).then_some(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes::uv_sphere;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force(mesh: &TriMesh, ray: &Ray) -> Option<f64> {
        (0..mesh.faces.len())
            .filter_map(|f| {
                let [a, b, c] = mesh.triangle(f);
                intersect_triangle(
                    &Tri {
                        a,
                        e1: b - a,
                        e2: c - a,
                        face: f as u32,
                    },
                    &ray.origin,
                    ray.direction(),
                )
            })
            .min_by(f64::total_cmp)
    }

    #[test]
    fn matches_brute_force_on_random_rays() {
        let mut mesh = uv_sphere(Vec3::new(0.1, 0.0, 0.0), 0.3, 24, 12);
        mesh.append(&uv_sphere(Vec3::new(-0.3, 0.2, 0.1), 0.15, 16, 8));
        let bvh = Bvh::build(&mesh);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..2000 {
            let o = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), -1.5);
            let target = Vec3::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
            let ray = Ray::new(o, target - o).unwrap();
            let got = bvh.intersect(&ray).map(|h| h.distance);
            assert_eq!(got, brute_force(&mesh, &ray));
        }
    }

    #[test]
    fn axis_aligned_ray_through_a_pole_vertex() {
        let mesh = uv_sphere(Vec3::zeros(), 0.3, 96, 48);
        let bvh = Bvh::build(&mesh);
        let ray = Ray::new(Vec3::new(0.0, 0.0, -1.0), Vec3::z()).unwrap();
        let hit = bvh.intersect(&ray).unwrap();
        assert!((hit.distance - 0.7).abs() < 1e-12);
    }

    #[test]
    fn empty_mesh_never_hits() {
        let bvh = Bvh::build(&TriMesh::default());
        assert!(bvh.is_empty());
        let ray = Ray::new(Vec3::zeros(), Vec3::z()).unwrap();
        assert!(bvh.intersect(&ray).is_none());
    }
}
