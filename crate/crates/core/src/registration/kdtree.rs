use crate::geometry::Vec3;

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    /// Position of the point in the cloud the index was built from.
    pub index: usize,
    pub point: Vec3,
    pub distance: f64,
}

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// Static 3-d tree over a point cloud. Immutable once built; queries are
/// exact and ties go to the lowest insertion index.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    points: Vec<Vec3>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl SpatialIndex {
    /// Returns `None` for an empty cloud.
    pub fn build(points: &[Vec3]) -> Option<Self> {
        if points.is_empty() {
            return None;
        }
        let mut index = SpatialIndex {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        index.build_node(0, points.len());
        Some(index)
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

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for &i in &self.order[start..end] {
            lo = lo.inf(&self.points[i]);
            hi = hi.sup(&self.points[i]);
        }
        let axis = (hi - lo).imax();
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a][axis].total_cmp(&points[b][axis])
        });
        let value = self.points[self.order[mid]][axis];
        // placeholder, patched once the children exist
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    pub fn nearest(&self, q: &Vec3) -> Neighbor {
        let mut best = (f64::INFINITY, usize::MAX);
        self.search(0, q, &mut best);
        let (d2, index) = best;
        Neighbor {
            index,
            point: self.points[index],
            distance: d2.sqrt(),
        }
    }

    fn search(&self, node: usize, q: &Vec3, best: &mut (f64, usize)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d2 = (self.points[i] - q).norm_squared();
                    if d2 < best.0 || (d2 == best.0 && i < best.1) {
                        *best = (d2, i);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, best);
                // equality still descends so that equidistant points with a
                // lower index are found
                if diff * diff <= best.0 {
                    self.search(far, q, best);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force(points: &[Vec3], q: &Vec3) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        for (i, p) in points.iter().enumerate() {
            let d = (p - q).norm();
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }

    #[test]
    fn single_point() {
        let p = Vec3::new(1.0, 2.0, 3.0);
        let idx = SpatialIndex::build(&[p]).unwrap();
        for q in [Vec3::zeros(), Vec3::new(-5.0, 9.0, 1.0)] {
            let n = idx.nearest(&q);
            assert_eq!((n.index, n.point), (0, p));
        }
        assert_eq!(idx.nearest(&p).distance, 0.0);
        assert!(SpatialIndex::build(&[]).is_none());
    }

    #[test]
    fn matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for trial in 0..20 {
            let pts: Vec<Vec3> = (0..1000)
                .map(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen()))
                .collect();
            let idx = SpatialIndex::build(&pts).unwrap();
            for _ in 0..100 {
                let q = Vec3::new(rng.gen_range(-0.2..1.2), rng.gen_range(-0.2..1.2), rng.gen_range(-0.2..1.2));
                let n = idx.nearest(&q);
                let (bi, bd) = brute_force(&pts, &q);
                assert_eq!(n.index, bi, "trial {trial}");
                assert_eq!(n.distance, bd);
            }
            // stored points are found at distance 0
            let n = idx.nearest(&pts[17]);
            assert_eq!((n.index, n.distance), (17, 0.0));
        }
    }

    #[test]
    fn ties_go_to_lowest_index() {
        // a lattice with duplicated points: every query has exact ties
        let mut pts = Vec::new();
        for _ in 0..3 {
            for x in 0..5 {
                for y in 0..5 {
                    pts.push(Vec3::new(x as f64, y as f64, 0.0));
                }
            }
        }
        let idx = SpatialIndex::build(&pts).unwrap();
        for x in 0..5 {
            for y in 0..5 {
                let q = Vec3::new(x as f64, y as f64, 0.5);
                assert_eq!(idx.nearest(&q).index, brute_force(&pts, &q).0);
                assert!(idx.nearest(&q).index < 25);
            }
        }
        // query equidistant between two lattice points
        let q = Vec3::new(0.5, 0.0, 0.0);
        assert_eq!(idx.nearest(&q).index, 0);
    }
}
