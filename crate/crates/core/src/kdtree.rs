//! Exact nearest-neighbor search over a static 3D point set.

use crate::geometry::Vec3;

const LEAF: usize = 8;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vec3>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl KdTree {
    pub fn new(points: Vec<Vec3>) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::new();
        if !points.is_empty() {
            build(&points, &mut order, 0, &mut nodes);
        }
        KdTree { points, order, nodes }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    /// Index and squared distance of the point closest to `q`. Among equally
    /// close points the lowest index wins, so the answer does not depend on
    /// the tree layout.
    pub fn nearest(&self, q: &Vec3) -> Option<(usize, f64)> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        let mut stack = vec![(0usize, 0.0f64)];
        while let Some((n, bound)) = stack.pop() {
            if bound > best.1 {
                continue;
            }
            match self.nodes[n] {
                Node::Leaf { start, end } => {
                    for &i in &self.order[start..end] {
                        let d = (self.points[i] - q).norm_squared();
                        if d < best.1 || (d == best.1 && i < best.0) {
                            best = (i, d);
                        }
                    }
                }
                Node::Split { axis, value, left, right } => {
                    let diff = q[axis] - value;
                    let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                    stack.push((far, diff * diff));
                    stack.push((near, 0.0));
                }
            }
        }
        Some(best)
    }
}

fn build(points: &[Vec3], order: &mut [usize], offset: usize, nodes: &mut Vec<Node>) -> usize {
    let id = nodes.len();
    if order.len() <= LEAF {
        nodes.push(Node::Leaf {
            start: offset,
            end: offset + order.len(),
        });
        return id;
    }
    let mut lo = points[order[0]];
    let mut hi = lo;
    for &i in order.iter() {
        lo = lo.inf(&points[i]);
        hi = hi.sup(&points[i]);
    }
    let axis = (hi - lo).imax();
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| points[a][axis].total_cmp(&points[b][axis]));
    let value = points[order[mid]][axis];
    nodes.push(Node::Leaf { start: 0, end: 0 });
    let (l, r) = order.split_at_mut(mid);
    let left = build(points, l, offset, nodes);
    let right = build(points, r, offset + mid, nodes);
    nodes[id] = Node::Split { axis, value, left, right };
    id
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(points: &[Vec3], q: &Vec3) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        for (i, p) in points.iter().enumerate() {
            let d = (p - q).norm_squared();
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }

    #[test]
    fn matches_brute_force_on_random_clouds() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [1, 2, 9, 100, 2000] {
            let pts: Vec<Vec3> = (0..n).map(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen::<f64>() * 0.1)).collect();
            let tree = KdTree::new(pts.clone());
            for _ in 0..300 {
                let q = Vec3::new(rng.gen_range(-0.5..1.5), rng.gen_range(-0.5..1.5), rng.gen_range(-0.5..0.5));
                assert_eq!(tree.nearest(&q).unwrap(), brute(&pts, &q));
            }
        }
    }

    #[test]
    fn duplicates_resolve_to_the_lowest_index() {
        let pts = vec![Vec3::new(1.0, 0.0, 0.0); 40];
        let tree = KdTree::new(pts);
        assert_eq!(tree.nearest(&Vec3::zeros()), Some((0, 1.0)));
        assert!(KdTree::new(Vec::new()).nearest(&Vec3::zeros()).is_none());
    }

    proptest! {
        #[test]
        fn grid_points_match_brute_force(
            cells in proptest::collection::vec((0i32..4, 0i32..4, 0i32..4), 1..60),
            q in (-1.0f64..5.0, -1.0f64..5.0, -1.0f64..5.0),
        ) {
            let pts: Vec<Vec3> = cells.iter().map(|&(x, y, z)| Vec3::new(x as f64, y as f64, z as f64)).collect();
            let q = Vec3::new(q.0, q.1, q.2);
            let tree = KdTree::new(pts.clone());
            prop_assert_eq!(tree.nearest(&q).unwrap(), brute(&pts, &q));
        }
    }
}
