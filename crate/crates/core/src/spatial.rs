//! Exact k-nearest-neighbor and radius queries over a static point set.
//!
//! Results are ordered by `(squared distance, point index)`, so ties are
//! always broken by the smaller index and every graph built on top of the
//! index is deterministic.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::Point3;

use crate::error::{Error, Result};

const LEAF_SIZE: usize = 8;

/// One query hit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
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

/// Balanced kd-tree. Immutable once built.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    points: Vec<Point3<f64>>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

#[derive(Clone, Copy, PartialEq)]
struct Candidate {
    dist2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Which points a query must skip.
#[derive(Clone, Copy)]
enum Exclude<'a> {
    Nothing,
    Index(usize),
    Coincident(&'a Point3<f64>),
}

impl Exclude<'_> {
    fn skips(&self, index: usize, p: &Point3<f64>) -> bool {
        match self {
            Exclude::Nothing => false,
            Exclude::Index(i) => *i == index,
            Exclude::Coincident(q) => *q == p,
        }
    }
}

impl SpatialIndex {
    pub fn new(points: &[Point3<f64>]) -> Self {
        let mut index = SpatialIndex {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            index.build(0, points.len());
        }
        index
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3<f64>] {
        &self.points
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        // split along the widest axis of this node's points
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in &self.order[start..end] {
            for a in 0..3 {
                lo[a] = lo[a].min(self.points[i][a]);
                hi[a] = hi[a].max(self.points[i][a]);
            }
        }
        let axis = (0..3)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap();
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b))
        });
        let value = self.points[self.order[mid]][axis];
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    fn search_knn(&self, query: &Point3<f64>, k: usize, exclude: Exclude) -> Vec<Neighbor> {
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        if k > 0 && !self.nodes.is_empty() {
            self.visit_knn(0, query, k, exclude, &mut heap);
        }
        let mut found = heap.into_vec();
        found.sort();
        found
            .into_iter()
            .map(|c| Neighbor {
                index: c.index,
                distance: c.dist2.sqrt(),
            })
            .collect()
    }

    fn visit_knn(
        &self,
        node: usize,
        query: &Point3<f64>,
        k: usize,
        exclude: Exclude,
        heap: &mut BinaryHeap<Candidate>,
    ) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let p = &self.points[i];
                    if exclude.skips(i, p) {
                        continue;
                    }
                    let c = Candidate {
                        dist2: (p - query).norm_squared(),
                        index: i,
                    };
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().unwrap() {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let delta = query[axis] - value;
                let (near, far) = if delta < 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.visit_knn(near, query, k, exclude, heap);
                // Equal-distance points on the far side may still win on index.
                if heap.len() < k || delta * delta <= heap.peek().unwrap().dist2 {
                    self.visit_knn(far, query, k, exclude, heap);
                }
            }
        }
    }

    /// The `k` nearest indexed points to `query`, nearest first.
    ///
    /// Indexed points located exactly at `query` are not reported, so querying
    /// with an indexed point never returns that point. Fewer than `k` results
    /// come back only when such coincident points reduce the pool.
    pub fn knn_query(&self, query: &Point3<f64>, k: usize) -> Result<Vec<Neighbor>> {
        if k == 0 || k > self.len() {
            return Err(Error::InvalidArgument(format!(
                "k = {k} must be in 1..={}",
                self.len()
            )));
        }
        Ok(self.search_knn(query, k, Exclude::Coincident(query)))
    }

    /// The `k` nearest neighbors of indexed point `i`, excluding `i` itself.
    pub fn knn_of(&self, i: usize, k: usize) -> Result<Vec<Neighbor>> {
        if i >= self.len() {
            return Err(Error::InvalidArgument(format!(
                "point index {i} out of range"
            )));
        }
        if k == 0 || k >= self.len() {
            return Err(Error::InvalidArgument(format!(
                "k = {k} must be in 1..{}",
                self.len()
            )));
        }
        Ok(self.search_knn(&self.points[i], k, Exclude::Index(i)))
    }

    /// Nearest indexed point, coincident points included.
    pub fn nearest(&self, query: &Point3<f64>) -> Option<Neighbor> {
        self.search_knn(query, 1, Exclude::Nothing)
            .into_iter()
            .next()
    }

    /// All indexed points within `radius` of `query` (inclusive), nearest first.
    pub fn radius_query(&self, query: &Point3<f64>, radius: f64) -> Vec<Neighbor> {
        let mut found = Vec::new();
        if !self.nodes.is_empty() && radius >= 0.0 {
            self.visit_radius(0, query, radius * radius, &mut found);
        }
        found.sort();
        found
            .into_iter()
            .map(|c| Neighbor {
                index: c.index,
                distance: c.dist2.sqrt(),
            })
            .collect()
    }

    fn visit_radius(&self, node: usize, query: &Point3<f64>, r2: f64, out: &mut Vec<Candidate>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let dist2 = (self.points[i] - query).norm_squared();
                    if dist2 <= r2 {
                        out.push(Candidate { dist2, index: i });
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let delta = query[axis] - value;
                let (near, far) = if delta < 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.visit_radius(near, query, r2, out);
                if delta * delta <= r2 {
                    self.visit_radius(far, query, r2, out);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_knn(points: &[Point3<f64>], i: usize, k: usize) -> Vec<usize> {
        let mut all: Vec<(f64, usize)> = points
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(j, p)| ((p - points[i]).norm_squared(), j))
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        all.into_iter().take(k).map(|(_, j)| j).collect()
    }

    fn line() -> Vec<Point3<f64>> {
        vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(3.0, 0.0, 0.0),
        ]
    }

    #[test]
    fn nearest_on_a_line() {
        let index = SpatialIndex::new(&line());
        let hits = index.knn_query(&Point3::origin(), 1).unwrap();
        assert_eq!(
            hits,
            vec![Neighbor {
                index: 1,
                distance: 1.0
            }]
        );
        let hits = index.knn_query(&Point3::origin(), 2).unwrap();
        assert_eq!(
            hits,
            vec![
                Neighbor {
                    index: 1,
                    distance: 1.0
                },
                Neighbor {
                    index: 2,
                    distance: 3.0
                }
            ]
        );
    }

    #[test]
    fn k_larger_than_cloud_is_rejected() {
        let index = SpatialIndex::new(&line());
        assert!(index.knn_query(&Point3::origin(), 4).is_err());
        assert!(index.knn_of(0, 3).is_err());
    }

    #[test]
    fn ties_break_by_index() {
        let pts: Vec<_> = (0..20)
            .map(|i| {
                let a = i as f64 * std::f64::consts::TAU / 20.0;
                Point3::new(a.cos(), a.sin(), 0.0)
            })
            .chain(std::iter::once(Point3::origin()))
            .collect();
        let index = SpatialIndex::new(&pts);
        let hits = index.knn_of(20, 5).unwrap();
        // all ring points are (nearly) equidistant; brute force agrees on order
        assert_eq!(
            hits.iter().map(|n| n.index).collect::<Vec<_>>(),
            brute_knn(&pts, 20, 5)
        );
    }

    #[test]
    fn grid_ties_match_brute_force() {
        let pts: Vec<_> = (0..6)
            .flat_map(|x| (0..6).map(move |y| Point3::new(x as f64, y as f64, 0.0)))
            .collect();
        let index = SpatialIndex::new(&pts);
        for i in 0..pts.len() {
            let got: Vec<_> = index
                .knn_of(i, 9)
                .unwrap()
                .iter()
                .map(|n| n.index)
                .collect();
            assert_eq!(got, brute_knn(&pts, i, 9));
        }
    }

    #[test]
    fn radius_query_matches_scan() {
        let pts: Vec<_> = (0..100)
            .map(|i| Point3::new((i % 10) as f64 * 0.5, (i / 10) as f64 * 0.5, 0.0))
            .collect();
        let index = SpatialIndex::new(&pts);
        let q = Point3::new(2.2, 2.2, 0.1);
        let got: Vec<_> = index
            .radius_query(&q, 1.0)
            .iter()
            .map(|n| n.index)
            .collect();
        let mut want: Vec<(f64, usize)> = pts
            .iter()
            .enumerate()
            .map(|(i, p)| ((p - q).norm_squared(), i))
            .filter(|(d, _)| *d <= 1.0)
            .collect();
        want.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        assert_eq!(got, want.into_iter().map(|w| w.1).collect::<Vec<_>>());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn knn_equals_exhaustive_scan(
            coords in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0, -10.0f64..10.0), 2..2000),
            k in 1usize..12,
        ) {
            let pts: Vec<_> = coords.iter().map(|&(x, y, z)| Point3::new(x, y, z)).collect();
            let k = k.min(pts.len() - 1);
            let index = SpatialIndex::new(&pts);
            for i in (0..pts.len()).step_by(1 + pts.len() / 50) {
                let got: Vec<_> = index.knn_of(i, k).unwrap().iter().map(|n| n.index).collect();
                prop_assert!(!got.contains(&i));
                prop_assert_eq!(got, brute_knn(&pts, i, k));
            }
        }
    }
}
