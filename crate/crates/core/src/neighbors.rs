//! Exact nearest-neighbor queries over a point set.
//!
//! A kd-tree with median splits on the widest axis. Queries are exact: radius
//! queries are inclusive (`distance <= h`), k-nearest-neighbor results are
//! sorted by distance with ties broken by smaller point index, and subtree
//! pruning never discards a point that could tie the current worst candidate.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::util::dist_sq;

const LEAF_SIZE: usize = 16;

enum Node {
    Leaf {
        start: u32,
        end: u32,
    },
    Split {
        axis: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
}

/// kd-tree over a snapshot of the points it indexes.
pub struct SpatialIndex {
    points: Array2<f64>,
    order: Vec<u32>,
    nodes: Vec<Node>,
    root: u32,
}

/// Heap entry ordered by squared distance, then index, so the lexicographic
/// maximum is the candidate to evict.
#[derive(PartialEq)]
struct Candidate {
    d2: f64,
    idx: u32,
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2
            .total_cmp(&other.d2)
            .then_with(|| self.idx.cmp(&other.idx))
    }
}

impl SpatialIndex {
    /// Builds an index over a copy of `points` (one row per point).
    pub fn new(points: &Array2<f64>) -> Result<Self> {
        let (n, dim) = points.dim();
        if n == 0 || dim == 0 {
            return Err(Error::DegenerateInput(
                "spatial index needs at least one point with coordinates".into(),
            ));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateInput(
                "spatial index input contains non-finite coordinates".into(),
            ));
        }
        let mut index = SpatialIndex {
            points: points.to_owned(),
            order: (0..n as u32).collect(),
            nodes: Vec::with_capacity(2 * n / LEAF_SIZE + 1),
            root: 0,
        };
        index.root = index.build_node(0, n);
        Ok(index)
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false // construction requires at least one point
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    fn point(&self, i: u32) -> &[f64] {
        let d = self.points.ncols();
        let i = i as usize;
        &self.points.as_slice().expect("row-major storage")[i * d..(i + 1) * d]
    }

    fn build_node(&mut self, start: usize, end: usize) -> u32 {
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf {
                start: start as u32,
                end: end as u32,
            });
            return (self.nodes.len() - 1) as u32;
        }
        // Split on the axis with the widest extent over this range.
        let dim = self.points.ncols();
        let mut axis = 0;
        let mut best_spread = -1.0;
        for a in 0..dim {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for &id in &self.order[start..end] {
                let v = self.points[[id as usize, a]];
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if hi - lo > best_spread {
                best_spread = hi - lo;
                axis = a;
            }
        }
        let mid = (end - start) / 2;
        {
            let points = &self.points;
            self.order[start..end].select_nth_unstable_by(mid, |&a, &b| {
                points[[a as usize, axis]].total_cmp(&points[[b as usize, axis]])
            });
        }
        let threshold = self.points[[self.order[start + mid] as usize, axis]];
        let left = self.build_node(start, start + mid);
        let right = self.build_node(start + mid, end);
        self.nodes.push(Node::Split {
            axis: axis as u32,
            threshold,
            left,
            right,
        });
        (self.nodes.len() - 1) as u32
    }

    fn check_query(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.dim() {
            return Err(Error::InvalidParameter(format!(
                "query has dimension {}, index has {}",
                q.len(),
                self.dim()
            )));
        }
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "query contains non-finite coordinates".into(),
            ));
        }
        Ok(())
    }

    /// All `(index, distance)` pairs with `distance <= h`, sorted by index.
    /// The boundary is inclusive; a query coinciding with stored points
    /// returns them at distance zero.
    pub fn radius_query(&self, q: &[f64], h: f64) -> Result<Vec<(usize, f64)>> {
        self.check_query(q)?;
        if !h.is_finite() || h < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "radius must be finite and nonnegative, got {h}"
            )));
        }
        let r2 = h * h;
        let mut hits = Vec::new();
        let mut stack = vec![self.root];
        while let Some(node) = stack.pop() {
            match self.nodes[node as usize] {
                Node::Leaf { start, end } => {
                    for &id in &self.order[start as usize..end as usize] {
                        let d2 = dist_sq(q, self.point(id));
                        if d2 <= r2 {
                            hits.push((id as usize, d2.sqrt()));
                        }
                    }
                }
                Node::Split {
                    axis,
                    threshold,
                    left,
                    right,
                } => {
                    let gap = q[axis as usize] - threshold;
                    if gap <= 0.0 || gap * gap <= r2 {
                        stack.push(left);
                    }
                    if gap >= 0.0 || gap * gap <= r2 {
                        stack.push(right);
                    }
                }
            }
        }
        hits.sort_unstable_by_key(|&(idx, _)| idx);
        Ok(hits)
    }

    /// The `k` nearest stored points to `q` as `(index, distance)`, sorted by
    /// distance with ties broken by smaller index. Requires `1 <= k <= N`.
    pub fn knn(&self, q: &[f64], k: usize) -> Result<Vec<(usize, f64)>> {
        self.check_query(q)?;
        if k == 0 || k > self.len() {
            return Err(Error::InvalidParameter(format!(
                "k must be in [1, {}], got {k}",
                self.len()
            )));
        }
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        self.knn_node(self.root, q, k, &mut heap);
        let mut out: Vec<Candidate> = heap.into_vec();
        out.sort_unstable_by(|a, b| a.cmp(b));
        Ok(out
            .into_iter()
            .map(|c| (c.idx as usize, c.d2.sqrt()))
            .collect())
    }

    /// The nearest stored point to `q`, warm-started from `hint`: the hint's
    /// distance is an upper bound that tightens pruning from the first node,
    /// which pays off when consecutive queries move slowly. Result and
    /// tie-breaking are identical to `knn(q, 1)` for any valid hint.
    pub fn nearest_from(&self, q: &[f64], hint: usize) -> Result<(usize, f64)> {
        self.check_query(q)?;
        if hint >= self.len() {
            return Err(Error::InvalidParameter(format!(
                "hint {hint} is out of range for {} points",
                self.len()
            )));
        }
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(2);
        heap.push(Candidate {
            d2: dist_sq(q, self.point(hint as u32)),
            idx: hint as u32,
        });
        self.knn_node(self.root, q, 1, &mut heap);
        let best = heap.pop().expect("heap holds the seeded candidate");
        Ok((best.idx as usize, best.d2.sqrt()))
    }

    fn knn_node(&self, node: u32, q: &[f64], k: usize, heap: &mut BinaryHeap<Candidate>) {
        match self.nodes[node as usize] {
            Node::Leaf { start, end } => {
                for &id in &self.order[start as usize..end as usize] {
                    let cand = Candidate {
                        d2: dist_sq(q, self.point(id)),
                        idx: id,
                    };
                    if heap.len() < k {
                        heap.push(cand);
                    } else if cand < *heap.peek().expect("heap is non-empty") {
                        heap.pop();
                        heap.push(cand);
                    }
                }
            }
            Node::Split {
                axis,
                threshold,
                left,
                right,
            } => {
                let gap = q[axis as usize] - threshold;
                let (near, far) = if gap <= 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.knn_node(near, q, k, heap);
                // Visit the far side unless every point there is strictly
                // worse than the current k-th candidate; on an exact tie a
                // smaller index could still win.
                let worst = if heap.len() < k {
                    f64::INFINITY
                } else {
                    heap.peek().expect("heap is non-empty").d2
                };
                if gap * gap <= worst {
                    self.knn_node(far, q, k, heap);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use proptest::prelude::*;

    fn brute_radius(points: &Array2<f64>, q: &[f64], h: f64) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64)> = (0..points.nrows())
            .filter_map(|i| {
                let row: Vec<f64> = points.row(i).to_vec();
                let d2 = dist_sq(q, &row);
                (d2 <= h * h).then(|| (i, d2.sqrt()))
            })
            .collect();
        out.sort_unstable_by_key(|&(i, _)| i);
        out
    }

    fn brute_knn(points: &Array2<f64>, q: &[f64], k: usize) -> Vec<(usize, f64)> {
        let mut all: Vec<(usize, f64)> = (0..points.nrows())
            .map(|i| {
                let row: Vec<f64> = points.row(i).to_vec();
                (i, dist_sq(q, &row))
            })
            .collect();
        all.sort_unstable_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        all.truncate(k);
        all.into_iter().map(|(i, d2)| (i, d2.sqrt())).collect()
    }

    #[test]
    fn radius_boundary_is_inclusive() {
        // Collinear points with spacing exactly h.
        let h = 0.1;
        let points = Array2::from_shape_vec((3, 1), vec![0.0, h, 2.0 * h]).unwrap();
        let idx = SpatialIndex::new(&points).unwrap();
        let hits = idx.radius_query(&[h], h).unwrap();
        let ids: Vec<usize> = hits.iter().map(|&(i, _)| i).collect();
        assert_eq!(ids, vec![0, 1, 2]);
    }

    #[test]
    fn knn_breaks_ties_by_smaller_index() {
        let points = Array2::from_shape_vec(
            (4, 2),
            vec![1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0],
        )
        .unwrap();
        let idx = SpatialIndex::new(&points).unwrap();
        let hits = idx.knn(&[0.0, 0.0], 2).unwrap();
        assert_eq!(hits.len(), 2);
        assert_eq!(hits[0].0, 0);
        assert_eq!(hits[1].0, 1);
        assert!((hits[0].1 - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn single_point_index() {
        let points = Array2::from_shape_vec((1, 3), vec![1.0, 2.0, 3.0]).unwrap();
        let idx = SpatialIndex::new(&points).unwrap();
        let hits = idx.knn(&[0.0, 0.0, 0.0], 1).unwrap();
        assert_eq!(hits[0].0, 0);
        assert!(idx.knn(&[0.0, 0.0, 0.0], 2).is_err());
        assert!(idx.radius_query(&[1.0, 2.0, 3.0], 0.0).unwrap().len() == 1);
    }

    #[test]
    fn duplicates_are_all_reported() {
        let points =
            Array2::from_shape_vec((3, 2), vec![0.5, 0.5, 0.5, 0.5, 2.0, 2.0]).unwrap();
        let idx = SpatialIndex::new(&points).unwrap();
        let hits = idx.radius_query(&[0.5, 0.5], 0.0).unwrap();
        assert_eq!(hits.len(), 2);
        assert_eq!(hits[0], (0, 0.0));
        assert_eq!(hits[1], (1, 0.0));
    }

    #[test]
    fn rejects_bad_queries() {
        let points = Array2::from_shape_vec((2, 2), vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let idx = SpatialIndex::new(&points).unwrap();
        assert!(idx.radius_query(&[0.0], 1.0).is_err());
        assert!(idx.radius_query(&[0.0, 0.0], -1.0).is_err());
        assert!(idx.knn(&[0.0, 0.0], 0).is_err());
        assert!(idx.knn(&[f64::NAN, 0.0], 1).is_err());
        assert!(idx.nearest_from(&[0.0, 0.0], 2).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn radius_query_matches_brute_force(
            coords in proptest::collection::vec(-5.0f64..5.0, 2..300),
            dim in 1usize..4,
            q in proptest::collection::vec(-5.0f64..5.0, 3),
            h in 0.0f64..4.0,
        ) {
            let n = coords.len() / dim;
            prop_assume!(n >= 1);
            let points = Array2::from_shape_vec((n, dim), coords[..n * dim].to_vec()).unwrap();
            let idx = SpatialIndex::new(&points).unwrap();
            let got = idx.radius_query(&q[..dim], h).unwrap();
            let want = brute_radius(&points, &q[..dim], h);
            prop_assert_eq!(got, want);
        }

        #[test]
        fn warm_started_nearest_matches_knn(
            coords in proptest::collection::vec(-5.0f64..5.0, 2..300),
            dim in 1usize..4,
            q in proptest::collection::vec(-5.0f64..5.0, 3),
            hint in 0usize..300,
        ) {
            let n = coords.len() / dim;
            prop_assume!(n >= 1);
            let points = Array2::from_shape_vec((n, dim), coords[..n * dim].to_vec()).unwrap();
            let idx = SpatialIndex::new(&points).unwrap();
            let got = idx.nearest_from(&q[..dim], hint % n).unwrap();
            let want = idx.knn(&q[..dim], 1).unwrap()[0];
            prop_assert_eq!(got, want);
        }

        #[test]
        fn knn_matches_brute_force(
            coords in proptest::collection::vec(-5.0f64..5.0, 2..300),
            dim in 1usize..4,
            q in proptest::collection::vec(-5.0f64..5.0, 3),
            k in 1usize..12,
        ) {
            let n = coords.len() / dim;
            prop_assume!(n >= 1);
            let k = k.min(n);
            let points = Array2::from_shape_vec((n, dim), coords[..n * dim].to_vec()).unwrap();
            let idx = SpatialIndex::new(&points).unwrap();
            let got = idx.knn(&q[..dim], k).unwrap();
            let want = brute_knn(&points, &q[..dim], k);
            prop_assert_eq!(got, want);
        }
    }
}
