//! KD-tree over descriptors answering two-nearest-neighbour queries.

use super::sift::{Descriptor, DESCRIPTOR_LEN};
use crate::error::{Error, Result};

const LEAF_SIZE: usize = 8;

#[derive(Clone, Debug)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { dim: usize, value: f32, left: usize, right: usize },
}

/// Search mode. `Approximate(eps)` prunes a subtree once its bound exceeds the
/// current second-best distance divided by `1 + eps`, so every returned
/// distance is within a factor `1 + eps` of the exact one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Search {
    Exact,
    Approximate(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub dist: f64,
}

#[derive(Clone, Debug)]
pub struct KdTree {
    points: Vec<Descriptor>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

/// Squared Euclidean distance, accumulated in `f64` in index order.
pub fn dist2(a: &Descriptor, b: &Descriptor) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| ((x - y) as f64).powi(2)).sum()
}

impl KdTree {
    pub fn build(points: Vec<Descriptor>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::TooFewDescriptors {
                needed: 2,
                got: points.len(),
            });
        }
        let mut tree = KdTree {
            order: (0..points.len()).collect(),
            points,
            nodes: Vec::new(),
        };
        let n = tree.points.len();
        tree.split(0, n);
        Ok(tree)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Descriptor] {
        &self.points
    }

    fn split(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        // widest-variance dimension
        let idx = &self.order[start..end];
        let cnt = idx.len() as f64;
        let dim = (0..DESCRIPTOR_LEN)
            .map(|d| {
                let mean = idx.iter().map(|&i| self.points[i][d] as f64).sum::<f64>() / cnt;
                let var = idx.iter().map(|&i| (self.points[i][d] as f64 - mean).powi(2)).sum::<f64>();
                (d, var)
            })
            .fold((0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best })
            .0;
        let pts = &self.points;
        self.order[start..end].sort_by(|&a, &b| pts[a][dim].total_cmp(&pts[b][dim]).then(a.cmp(&b)));
        let mid = start + (end - start) / 2;
        let value = self.points[self.order[mid]][dim];
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.split(start, mid);
        let right = self.split(mid, end);
        self.nodes[id] = Node::Split { dim, value, left, right };
        id
    }

    /// The two nearest points, ordered by (distance, index). Ties on distance
    /// resolve to the lower index in exact mode.
    pub fn nearest2(&self, q: &Descriptor, mode: Search) -> [Neighbor; 2] {
        let shrink = match mode {
            Search::Exact => 1.0,
            Search::Approximate(eps) => (1.0 + eps.max(0.0)).powi(2),
        };
        let mut best = [(f64::INFINITY, usize::MAX); 2];
        self.descend(0, q, shrink, &mut best);
        best.map(|(d2, index)| Neighbor { index, dist: d2.sqrt() })
    }

    fn descend(&self, node: usize, q: &Descriptor, shrink: f64, best: &mut [(f64, usize); 2]) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let cand = (dist2(q, &self.points[i]), i);
                    if cand < best[0] {
                        best[1] = best[0];
                        best[0] = cand;
                    } else if cand < best[1] {
                        best[1] = cand;
                    }
                }
            }
            Node::Split { dim, value, left, right } => {
                let diff = (q[dim] - value) as f64;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.descend(near, q, shrink, best);
                // far-side points are at least |diff| away along `dim`
                if diff * diff * shrink <= best[1].0 {
                    self.descend(far, q, shrink, best);
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

    fn random_desc(rng: &mut ChaCha8Rng) -> Descriptor {
        let mut d = [0f32; DESCRIPTOR_LEN];
        d.iter_mut().for_each(|v| *v = rng.random_range(0.0..1.0));
        let n = d.iter().map(|v| v * v).sum::<f32>().sqrt();
        d.iter_mut().for_each(|v| *v /= n);
        d
    }

    /// Linear scan keeping the two smallest (distance, index) pairs.
    fn brute(points: &[Descriptor], q: &Descriptor) -> [(f64, usize); 2] {
        let mut all: Vec<(f64, usize)> = points
            .iter()
            .enumerate()
            .map(|(i, p)| (p.iter().zip(q).map(|(&a, &b)| ((a - b) as f64).powi(2)).sum::<f64>(), i))
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        [all[0], all[1]]
    }

    #[test]
    fn too_few_descriptors() {
        assert!(KdTree::build(vec![[0.0; DESCRIPTOR_LEN]]).is_err());
    }

    #[test]
    fn query_equal_to_a_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = vec![random_desc(&mut rng), random_desc(&mut rng)];
        let t = KdTree::build(pts.clone()).unwrap();
        let nn = t.nearest2(&pts[1], Search::Exact);
        assert_eq!(nn[0].index, 1);
        assert_eq!(nn[0].dist, 0.0);
    }

    #[test]
    fn exact_mode_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts: Vec<Descriptor> = (0..1000).map(|_| random_desc(&mut rng)).collect();
        let t = KdTree::build(pts.clone()).unwrap();
        for _ in 0..100 {
            let q = random_desc(&mut rng);
            let nn = t.nearest2(&q, Search::Exact);
            let b = brute(&pts, &q);
            assert_eq!([nn[0].index, nn[1].index], [b[0].1, b[1].1]);
            assert_eq!([nn[0].dist, nn[1].dist], [b[0].0.sqrt(), b[1].0.sqrt()]);
        }
    }

    #[test]
    fn approximate_mode_within_five_percent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Descriptor> = (0..1000).map(|_| random_desc(&mut rng)).collect();
        let t = KdTree::build(pts.clone()).unwrap();
        for _ in 0..100 {
            let q = random_desc(&mut rng);
            let nn = t.nearest2(&q, Search::Approximate(0.05));
            let b = brute(&pts, &q);
            assert!(nn[0].dist <= 1.05 * b[0].0.sqrt() + 1e-12);
            assert!(nn[1].dist <= 1.05 * b[1].0.sqrt() + 1e-12);
        }
    }

    #[test]
    fn duplicates_give_equal_distances() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let base: Vec<Descriptor> = (0..50).map(|_| random_desc(&mut rng)).collect();
        let pts: Vec<Descriptor> = base.iter().chain(&base).copied().collect();
        let t = KdTree::build(pts).unwrap();
        for _ in 0..20 {
            let nn = t.nearest2(&random_desc(&mut rng), Search::Exact);
            assert_eq!(nn[0].dist, nn[1].dist);
            assert_eq!(nn[1].index, nn[0].index + 50);
        }
    }
}
