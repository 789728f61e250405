//! Max-norm nearest-neighbour queries over a static point set.

use crate::scalar::{total_cmp, Real};

const LEAF: usize = 12;

#[derive(Debug, Clone, Copy)]
enum Node<T> {
    Leaf {
        lo: usize,
        hi: usize,
    },
    Split {
        dim: usize,
        value: T,
        left: usize,
        right: usize,
    },
}

/// k-d tree under the Chebyshev distance. Points are rows of a row-major
/// buffer with `dim` columns.
#[derive(Debug, Clone)]
pub struct KdTree<T> {
    dim: usize,
    points: Vec<T>,
    order: Vec<usize>,
    nodes: Vec<Node<T>>,
}

impl<T: Real> KdTree<T> {
    pub fn new(points: Vec<T>, dim: usize) -> Self {
        assert!(
            dim > 0 && points.len().is_multiple_of(dim),
            "point buffer not a multiple of dim"
        );
        let n = points.len() / dim;
        let mut tree = KdTree {
            dim,
            points,
            order: (0..n).collect(),
            nodes: Vec::new(),
        };
        if n > 0 {
            tree.build(0, n);
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    #[inline]
    fn point(&self, i: usize) -> &[T] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    fn build(&mut self, lo: usize, hi: usize) -> usize {
        let id = self.nodes.len();
        if hi - lo <= LEAF {
            self.nodes.push(Node::Leaf { lo, hi });
            return id;
        }
        let mut best = (0, T::neg_infinity());
        for d in 0..self.dim {
            let (mut mn, mut mx) = (T::infinity(), T::neg_infinity());
            for &i in &self.order[lo..hi] {
                let v = self.points[i * self.dim + d];
                mn = mn.min(v);
                mx = mx.max(v);
            }
            if mx - mn > best.1 {
                best = (d, mx - mn);
            }
        }
        let dim = best.0;
        let mid = (hi - lo) / 2;
        let (points, stride) = (&self.points, self.dim);
        self.order[lo..hi].select_nth_unstable_by(mid, |&a, &b| {
            total_cmp(&points[a * stride + dim], &points[b * stride + dim])
        });
        let value = points[self.order[lo + mid] * stride + dim];
        self.nodes.push(Node::Leaf { lo, hi });
        let left = self.build(lo, lo + mid);
        let right = self.build(lo + mid, hi);
        self.nodes[id] = Node::Split {
            dim,
            value,
            left,
            right,
        };
        id
    }

    /// Distance from point `i` to its `k`-th nearest other point.
    pub fn kth_distance(&self, i: usize, k: usize) -> T {
        assert!(k >= 1 && k < self.len(), "k out of range");
        let q = self.point(i).to_vec();
        // ascending distances of the best k seen so far
        let mut best: Vec<T> = Vec::with_capacity(k + 1);
        self.knn_rec(0, &q, i, k, &mut best);
        best[k - 1]
    }

    fn knn_rec(&self, node: usize, q: &[T], skip: usize, k: usize, best: &mut Vec<T>) {
        match self.nodes[node] {
            Node::Leaf { lo, hi } => {
                for &j in &self.order[lo..hi] {
                    if j == skip {
                        continue;
                    }
                    let d = chebyshev(q, self.point(j));
                    if best.len() < k || d < best[best.len() - 1] {
                        let pos = best.partition_point(|&b| b <= d);
                        best.insert(pos, d);
                        best.truncate(k);
                    }
                }
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let diff = q[dim] - value;
                let (near, far) = if diff <= T::zero() {
                    (left, right)
                } else {
                    (right, left)
                };
                self.knn_rec(near, q, skip, k, best);
                if best.len() < k || diff.abs() < best[best.len() - 1] {
                    self.knn_rec(far, q, skip, k, best);
                }
            }
        }
    }

    /// Number of points other than `i` strictly within distance `r` of point `i`.
    pub fn count_within(&self, i: usize, r: T) -> usize {
        if r <= T::zero() {
            return 0;
        }
        let q = self.point(i).to_vec();
        self.count_rec(0, &q, r) - 1
    }

    /// Number of points at distance strictly below `r` from `q`.
    pub fn count_near(&self, q: &[T], r: T) -> usize {
        assert_eq!(q.len(), self.dim);
        self.count_rec(0, q, r)
    }

    /// Number of points at distance at most `r` from `q`.
    pub fn count_closed(&self, q: &[T], r: T) -> usize {
        assert_eq!(q.len(), self.dim);
        self.count_closed_rec(0, q, r)
    }

    fn count_rec(&self, node: usize, q: &[T], r: T) -> usize {
        if self.is_empty() {
            return 0;
        }
        match self.nodes[node] {
            Node::Leaf { lo, hi } => self.order[lo..hi]
                .iter()
                .filter(|&&j| chebyshev(q, self.point(j)) < r)
                .count(),
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let mut c = 0;
                if q[dim] - r < value {
                    c += self.count_rec(left, q, r);
                }
                if q[dim] + r > value {
                    c += self.count_rec(right, q, r);
                }
                c
            }
        }
    }

    fn count_closed_rec(&self, node: usize, q: &[T], r: T) -> usize {
        if self.is_empty() {
            return 0;
        }
        match self.nodes[node] {
            Node::Leaf { lo, hi } => self.order[lo..hi]
                .iter()
                .filter(|&&j| chebyshev(q, self.point(j)) <= r)
                .count(),
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let mut c = 0;
                if q[dim] - r <= value {
                    c += self.count_closed_rec(left, q, r);
                }
                if q[dim] + r >= value {
                    c += self.count_closed_rec(right, q, r);
                }
                c
            }
        }
    }
}

#[inline]
pub fn chebyshev<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |m, (&x, &y)| m.max((x - y).abs()))
}

/// Points of a sorted sample strictly within `r` of `q`.
#[inline]
pub fn count_sorted_open<T: Real>(sorted: &[T], q: T, r: T) -> usize {
    let lo = sorted.partition_point(|&v| v <= q - r);
    let hi = sorted.partition_point(|&v| v < q + r);
    hi.saturating_sub(lo)
}
