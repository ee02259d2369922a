use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{distance_squared, PointCloud};

const LEAF_SIZE: usize = 12;

#[derive(Clone, Debug)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Exact nearest-neighbour queries over a fixed point set. Ties go to the
/// lowest point index.
#[derive(Clone, Debug)]
pub struct NearestNeighborIndex {
    dim: usize,
    coords: Vec<f64>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

// (squared distance, index), ordered lexicographically
#[derive(Clone, Copy, Debug, PartialEq)]
struct Candidate(f64, usize);

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

impl NearestNeighborIndex {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 || coords.len() % dim != 0 {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: coords.len(),
            });
        }
        if coords.is_empty() {
            return Err(Error::EmptyInput("nearest-neighbour point set"));
        }
        let mut index = Self {
            dim,
            order: (0..coords.len() / dim).collect(),
            coords,
            nodes: Vec::new(),
        };
        let n = index.order.len();
        index.build(0, n, 0);
        Ok(index)
    }

    pub fn from_cloud(cloud: &PointCloud) -> Result<Self> {
        Self::new(cloud.dim(), cloud.coords().to_vec())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    fn build(&mut self, start: usize, end: usize, depth: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        // split on the widest axis
        let dim = self.dim;
        let axis = (0..dim)
            .max_by(|&a, &b| {
                let spread = |ax: usize| {
                    let vals = self.order[start..end].iter().map(|&i| self.coords[i * dim + ax]);
                    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                        (lo.min(v), hi.max(v))
                    });
                    hi - lo
                };
                spread(a).total_cmp(&spread(b)).then(b.cmp(&a))
            })
            .unwrap_or(depth % dim);
        let mid = start + (end - start) / 2;
        let coords = &self.coords;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            coords[a * dim + axis].total_cmp(&coords[b * dim + axis])
        });
        let value = self.coords[self.order[mid] * dim + axis];
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build(start, mid, depth + 1);
        let right = self.build(mid, end, depth + 1);
        self.nodes[id] = Node::Split { axis, value, left, right };
        id
    }

    /// Nearest point as `(index, distance)`.
    pub fn nearest(&self, query: &[f64]) -> (usize, f64) {
        assert_eq!(query.len(), self.dim, "query dimension");
        let mut best = Candidate(f64::INFINITY, usize::MAX);
        self.search_nearest(0, query, &mut best);
        (best.1, best.0.sqrt())
    }

    fn search_nearest(&self, node: usize, q: &[f64], best: &mut Candidate) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let c = Candidate(distance_squared(q, self.point(i)), i);
                    if c < *best {
                        *best = c;
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search_nearest(near, q, best);
                // equality still visits, a tie there may carry a lower index
                if diff * diff <= best.0 {
                    self.search_nearest(far, q, best);
                }
            }
        }
    }

    /// The `k` nearest points, sorted by `(distance, index)`.
    pub fn knn(&self, query: &[f64], k: usize) -> Vec<(usize, f64)> {
        assert_eq!(query.len(), self.dim, "query dimension");
        let k = k.min(self.len());
        if k == 0 {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search_knn(0, query, k, &mut heap);
        let mut out: Vec<Candidate> = heap.into_vec();
        out.sort_unstable();
        out.into_iter().map(|c| (c.1, c.0.sqrt())).collect()
    }

    fn search_knn(&self, node: usize, q: &[f64], k: usize, heap: &mut BinaryHeap<Candidate>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let c = Candidate(distance_squared(q, self.point(i)), i);
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().expect("full heap") {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search_knn(near, q, k, heap);
                if heap.len() < k || diff * diff <= heap.peek().expect("non-empty").0 {
                    self.search_knn(far, q, k, heap);
                }
            }
        }
    }

    /// Nearest neighbour of every row of `queries`, in order.
    pub fn nearest_batch(&self, queries: &[f64]) -> Vec<(usize, f64)> {
        assert_eq!(queries.len() % self.dim, 0, "query dimension");
        queries
            .par_chunks(self.dim)
            .map(|q| self.nearest(q))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(coords: &[f64], dim: usize, q: &[f64]) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        for (i, p) in coords.chunks_exact(dim).enumerate() {
            let d = distance_squared(p, q);
            if d < best.1 {
                best = (i, d);
            }
        }
        (best.0, best.1.sqrt())
    }

    #[test]
    fn thousand_queries_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for dim in [2, 3] {
            let coords: Vec<f64> = (0..500 * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let index = NearestNeighborIndex::new(dim, coords.clone()).unwrap();
            for _ in 0..1000 {
                let q: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.2..1.2)).collect();
                assert_eq!(index.nearest(&q), brute(&coords, dim, &q));
            }
        }
    }

    #[test]
    fn ties_go_to_lowest_index() {
        // integer grid with duplicates: many exact ties
        let mut coords = Vec::new();
        for _ in 0..3 {
            for i in 0..10 {
                for j in 0..10 {
                    coords.extend([i as f64, j as f64]);
                }
            }
        }
        let index = NearestNeighborIndex::new(2, coords.clone()).unwrap();
        for i in 0..10 {
            for j in 0..10 {
                let q = [i as f64 + 0.5, j as f64];
                assert_eq!(index.nearest(&q), brute(&coords, 2, &q));
                let q = [i as f64, j as f64];
                assert_eq!(index.nearest(&q).0, i * 10 + j);
            }
        }
    }

    #[test]
    fn knn_matches_sorted_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let coords: Vec<f64> = (0..300 * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let index = NearestNeighborIndex::new(3, coords.clone()).unwrap();
        for _ in 0..50 {
            let q: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut all: Vec<(f64, usize)> = coords
                .chunks_exact(3)
                .enumerate()
                .map(|(i, p)| (distance_squared(p, &q), i))
                .collect();
            all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let got = index.knn(&q, 20);
            let want: Vec<(usize, f64)> = all[..20].iter().map(|&(d, i)| (i, d.sqrt())).collect();
            assert_eq!(got, want);
        }
        assert_eq!(index.knn(&[0.0; 3], 1000).len(), 300);
    }

    #[test]
    fn rejects_empty_set() {
        assert!(NearestNeighborIndex::new(3, vec![]).is_err());
    }

    proptest! {
        #[test]
        fn nearest_is_exact(
            pts in prop::collection::vec(prop::array::uniform3(-5.0f64..5.0), 1..80),
            q in prop::array::uniform3(-6.0f64..6.0),
        ) {
            let coords: Vec<f64> = pts.iter().flatten().copied().collect();
            let index = NearestNeighborIndex::new(3, coords.clone()).unwrap();
            prop_assert_eq!(index.nearest(&q), brute(&coords, 3, &q));
        }
    }
}
