//! Normal estimation by local PCA with minimum-spanning-tree orientation.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use log::warn;
use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::spatial::SpatialIndex;

/// Total-ordered f64 for heap keys.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Key(f64);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Eigenvector of the smallest eigenvalue of a symmetric 3x3 matrix, or
/// `None` when the matrix carries no spread at all.
pub(crate) fn smallest_eigenvector(cov: &Matrix3<f64>) -> Option<Vector3<f64>> {
    if cov.iter().all(|v| v.abs() < 1e-18) {
        return None;
    }
    let eig = SymmetricEigen::new(*cov);
    let i = eig.eigenvalues.imin();
    let v = eig.eigenvectors.column(i).into_owned();
    let n = v.norm();
    (n > 0.0).then(|| v / n)
}

/// Returns `cloud` with estimated normals. Clouds that already carry normals
/// come back unchanged.
pub fn estimate_normals(cloud: &PointCloud, k: usize) -> Result<PointCloud> {
    if cloud.has_normals() {
        return Ok(cloud.clone());
    }
    let n = cloud.len();
    if k == 0 || n < k + 1 {
        return Err(Error::InvalidArgument(format!(
            "normal estimation with k = {k} needs at least {} points, got {n}",
            k + 1
        )));
    }
    let index = SpatialIndex::new(&cloud.positions);
    let neighborhoods: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            index
                .knn_of(i, k)
                .map(|hits| hits.into_iter().map(|h| h.index).collect())
        })
        .collect::<Result<_>>()?;

    let mut degenerate = false;
    let mut normals: Vec<Vector3<f64>> = Vec::with_capacity(n);
    for (i, hood) in neighborhoods.iter().enumerate() {
        let members = std::iter::once(i).chain(hood.iter().copied());
        let mean = members
            .clone()
            .fold(Vector3::zeros(), |acc, j| acc + cloud.positions[j].coords)
            / (hood.len() + 1) as f64;
        let cov = members.fold(Matrix3::zeros(), |acc, j| {
            let d = cloud.positions[j].coords - mean;
            acc + d * d.transpose()
        });
        match smallest_eigenvector(&cov) {
            Some(v) => normals.push(v),
            None => {
                degenerate = true;
                normals.push(Vector3::z());
            }
        }
    }
    if degenerate {
        warn!("normal estimation: coincident neighborhood(s), fell back to +z");
    }

    orient_normals(cloud, &neighborhoods, &mut normals);

    Ok(PointCloud {
        positions: cloud.positions.clone(),
        normals: Some(normals),
        degenerate_normals: degenerate,
    })
}

/// Propagates a consistent sign over a minimum spanning tree of the
/// symmetrized neighbor graph, weighting edges by `1 - |n_i . n_j|`.
/// Each connected component is rooted at its point farthest from the cloud
/// centroid, whose normal is turned to face away from the centroid.
fn orient_normals(cloud: &PointCloud, neighborhoods: &[Vec<usize>], normals: &mut [Vector3<f64>]) {
    let n = normals.len();
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, hood) in neighborhoods.iter().enumerate() {
        for &j in hood {
            adjacency[i].push(j);
            adjacency[j].push(i);
        }
    }
    for list in adjacency.iter_mut() {
        list.sort_unstable();
        list.dedup();
    }
    let centroid = cloud.centroid().unwrap_or_else(nalgebra::Point3::origin);
    let distance_from_centroid: Vec<f64> = cloud
        .positions
        .iter()
        .map(|p| (p - centroid).norm_squared())
        .collect();

    // Components in order of their root: farthest point first.
    let mut by_distance: Vec<usize> = (0..n).collect();
    by_distance.sort_by(|&a, &b| {
        distance_from_centroid[b]
            .total_cmp(&distance_from_centroid[a])
            .then(a.cmp(&b))
    });

    let mut visited = vec![false; n];
    for &root in &by_distance {
        if visited[root] {
            continue;
        }
        let outward = cloud.positions[root] - centroid;
        let along = normals[root].dot(&outward);
        if along < -1e-12 * outward.norm().max(1.0) {
            normals[root] = -normals[root];
        } else if along.abs() <= 1e-12 * outward.norm().max(1.0) {
            // no preferred side (e.g. a plane): make the dominant component positive
            let dominant = normals[root].iamax();
            if normals[root][dominant] < 0.0 {
                normals[root] = -normals[root];
            }
        }

        // Prim's algorithm; parents fix the sign of their children on insertion.
        let mut heap = BinaryHeap::new();
        visited[root] = true;
        for &j in &adjacency[root] {
            heap.push(Reverse((
                Key(1.0 - normals[root].dot(&normals[j]).abs()),
                j,
                root,
            )));
        }
        while let Some(Reverse((_, j, parent))) = heap.pop() {
            if visited[j] {
                continue;
            }
            visited[j] = true;
            if normals[j].dot(&normals[parent]) < 0.0 {
                normals[j] = -normals[j];
            }
            for &l in &adjacency[j] {
                if !visited[l] {
                    heap.push(Reverse((
                        Key(1.0 - normals[j].dot(&normals[l]).abs()),
                        l,
                        j,
                    )));
                }
            }
        }
    }
}
