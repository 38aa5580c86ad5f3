//! Coordinate normalization and unit-voxel snapping with Gaussian-weighted
//! normal blending.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use log::warn;
use nalgebra::{Point3, Vector3};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::graph::{EdgeWeighting, KnnGraph};

/// Integer voxel index; a point `p` belongs to cell `floor(p)`.
pub type Cell = [i64; 3];

pub fn cell_of(p: &Point3<f64>) -> Cell {
    [p.x.floor() as i64, p.y.floor() as i64, p.z.floor() as i64]
}

pub fn cell_center(c: Cell) -> Point3<f64> {
    Point3::new(c[0] as f64 + 0.5, c[1] as f64 + 0.5, c[2] as f64 + 0.5)
}

/// Scale and shift mapping original coordinates onto the unit lattice:
/// `normalized = original / r - s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationRecord {
    pub r: f64,
    pub s: Vector3<f64>,
}

impl NormalizationRecord {
    pub fn identity() -> Self {
        NormalizationRecord {
            r: 1.0,
            s: Vector3::zeros(),
        }
    }

    pub fn apply(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(p.coords / self.r - self.s)
    }

    pub fn invert(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from((p.coords + self.s) * self.r)
    }

    /// Sidecar text: `r s_x s_y s_z`.
    pub fn to_sidecar(&self) -> String {
        format!("{} {} {} {}\n", self.r, self.s.x, self.s.y, self.s.z)
    }

    pub fn parse_sidecar(text: &str) -> Result<Self> {
        let values: Vec<f64> = text
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>().map_err(|_| {
                    Error::InvalidArgument(format!("bad number {t:?} in normalization sidecar"))
                })
            })
            .collect::<Result<_>>()?;
        if values.len() != 4 {
            return Err(Error::InvalidArgument(format!(
                "normalization sidecar needs 4 numbers, found {}",
                values.len()
            )));
        }
        if !(values[0] > 0.0) || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "normalization scale must be positive and finite".into(),
            ));
        }
        Ok(NormalizationRecord {
            r: values[0],
            s: Vector3::new(values[1], values[2], values[3]),
        })
    }

    pub fn write_sidecar(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_sidecar()).map_err(|e| Error::io(path, e))
    }

    pub fn read_sidecar(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_sidecar(&text)
    }
}

/// Scales the cloud so the mean edge length of its `k`-NN graph is 1, then
/// shifts it so each axis minimum is 0.
pub fn normalize_coordinates(
    cloud: &PointCloud,
    k: usize,
) -> Result<(PointCloud, NormalizationRecord)> {
    if cloud.len() <= k {
        return Err(Error::InvalidArgument(format!(
            "normalization with K = {k} needs more than {k} points, got {}",
            cloud.len()
        )));
    }
    let graph = KnnGraph::build(&cloud.positions, k, EdgeWeighting::Unweighted)?;
    let total: f64 = graph
        .edges()
        .iter()
        .map(|&(i, j, _)| (cloud.positions[i] - cloud.positions[j]).norm())
        .sum();
    let r = total / graph.edge_count() as f64;
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::Degenerate(
            "all points coincide; neighbor spacing is zero".into(),
        ));
    }
    let mut s = Vector3::repeat(f64::INFINITY);
    for p in &cloud.positions {
        s = s.inf(&(p.coords / r));
    }
    let record = NormalizationRecord { r, s };
    let positions = cloud.positions.iter().map(|p| record.apply(p)).collect();
    Ok((
        PointCloud {
            positions,
            normals: cloud.normals.clone(),
            degenerate_normals: cloud.degenerate_normals,
        },
        record,
    ))
}

/// True when every point already sits on a distinct cell center.
pub fn is_voxel_lattice(cloud: &PointCloud) -> bool {
    let mut seen = std::collections::BTreeSet::new();
    cloud.positions.iter().all(|p| {
        let on_center = p.iter().all(|v| {
            let f = v - 0.5;
            (f - f.round()).abs() <= 1e-9
        });
        on_center && seen.insert(cell_of(p))
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxelPoint {
    pub center: Point3<f64>,
    pub normal: Vector3<f64>,
}

/// Occupancy map with one representative point per unit cell.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    cells: BTreeMap<Cell, VoxelPoint>,
    pub record: NormalizationRecord,
}

impl VoxelGrid {
    pub fn new(record: NormalizationRecord) -> Self {
        VoxelGrid {
            cells: BTreeMap::new(),
            record,
        }
    }

    /// Occupies `cell` with its center point; returns false if it was already
    /// occupied (the existing point is kept).
    pub fn insert(&mut self, cell: Cell, normal: Vector3<f64>) -> bool {
        if self.cells.contains_key(&cell) {
            return false;
        }
        self.cells.insert(
            cell,
            VoxelPoint {
                center: cell_center(cell),
                normal,
            },
        );
        true
    }

    pub fn remove(&mut self, cell: &Cell) -> Option<VoxelPoint> {
        self.cells.remove(cell)
    }

    pub fn get(&self, cell: &Cell) -> Option<&VoxelPoint> {
        self.cells.get(cell)
    }

    pub fn contains(&self, cell: &Cell) -> bool {
        self.cells.contains_key(cell)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Cell, &VoxelPoint)> {
        self.cells.iter()
    }

    pub fn cells(&self) -> impl Iterator<Item = &Cell> {
        self.cells.keys()
    }

    /// Inclusive cell range `(min, max)` over occupied cells.
    pub fn extent(&self) -> Option<(Cell, Cell)> {
        let mut it = self.cells.keys();
        let first = *it.next()?;
        Some(it.fold((first, first), |(lo, hi), c| {
            (
                [lo[0].min(c[0]), lo[1].min(c[1]), lo[2].min(c[2])],
                [hi[0].max(c[0]), hi[1].max(c[1]), hi[2].max(c[2])],
            )
        }))
    }

    /// One point per occupied cell in cell order, optionally mapped back to
    /// the original coordinate frame.
    pub fn to_cloud(&self, denormalize: bool) -> PointCloud {
        let positions = self
            .cells
            .values()
            .map(|v| {
                if denormalize {
                    self.record.invert(&v.center)
                } else {
                    v.center
                }
            })
            .collect();
        let normals = self.cells.values().map(|v| v.normal).collect();
        PointCloud {
            positions,
            normals: Some(normals),
            degenerate_normals: false,
        }
    }
}

impl fmt::Display for VoxelGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.extent() {
            Some((lo, hi)) => write!(f, "{} cells in {:?}..={:?}", self.len(), lo, hi),
            None => write!(f, "empty grid"),
        }
    }
}

/// Gaussian weight of a point at squared distance `d2` from a cell center.
pub fn blend_weight(d2: f64, sigma: f64) -> f64 {
    (-d2 / (2.0 * sigma * sigma)).exp()
}

/// Blends `(position, normal)` samples falling in `cell` into one unit normal.
/// Falls back to the normal of the sample nearest the center if the weighted
/// sum cancels.
pub(crate) fn blend_normals<'a>(
    cell: Cell,
    samples: impl Iterator<Item = (&'a Point3<f64>, &'a Vector3<f64>)>,
    sigma: f64,
) -> Option<Vector3<f64>> {
    let center = cell_center(cell);
    let mut sum = Vector3::zeros();
    let mut weight = 0.0;
    let mut nearest: Option<(f64, Vector3<f64>)> = None;
    for (p, g) in samples {
        let d2 = (p - center).norm_squared();
        let mu = blend_weight(d2, sigma);
        sum += mu * g;
        weight += mu;
        if nearest.is_none_or(|(best, _)| d2 < best) {
            nearest = Some((d2, *g));
        }
    }
    let (_, fallback) = nearest?;
    let h = if weight > 0.0 { sum / weight } else { sum };
    let n = h.norm();
    if n > 1e-12 {
        Some(h / n)
    } else {
        warn!("normals cancel in cell {cell:?}; keeping the nearest sample's normal");
        let n = fallback.norm();
        Some(if n > 0.0 { fallback / n } else { Vector3::z() })
    }
}

/// Snaps a normalized cloud to unit cells. Each occupied cell holds its
/// center and the Gaussian-weighted blend of the normals inside it.
pub fn voxelize(cloud: &PointCloud, sigma: f64) -> Result<VoxelGrid> {
    voxelize_with_record(cloud, sigma, NormalizationRecord::identity())
}

pub fn voxelize_with_record(
    cloud: &PointCloud,
    sigma: f64,
    record: NormalizationRecord,
) -> Result<VoxelGrid> {
    let normals = cloud.normals.as_ref().ok_or_else(|| {
        Error::Precondition("voxelization needs normals; estimate them first".into())
    })?;
    if !(sigma > 0.0) {
        return Err(Error::Config(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    let mut buckets: BTreeMap<Cell, Vec<usize>> = BTreeMap::new();
    for (i, p) in cloud.positions.iter().enumerate() {
        buckets.entry(cell_of(p)).or_default().push(i);
    }
    let mut grid = VoxelGrid::new(record);
    for (cell, members) in buckets {
        let samples = members.iter().map(|&i| (&cloud.positions[i], &normals[i]));
        if let Some(h) = blend_normals(cell, samples, sigma) {
            grid.insert(cell, h);
        }
    }
    Ok(grid)
}

/// Full preprocessing: estimate missing normals, normalize (skipped for
/// clouds already on the unit lattice) and voxelize.
pub fn prepare_grid(
    cloud: &PointCloud,
    normalize_k: usize,
    normal_k: usize,
    sigma: f64,
) -> Result<VoxelGrid> {
    cloud.require_non_empty("voxelization input")?;
    let with_normals = if cloud.has_normals() {
        cloud.clone()
    } else {
        crate::normals::estimate_normals(cloud, normal_k.min(cloud.len().saturating_sub(1)).max(1))?
    };
    if is_voxel_lattice(&with_normals) {
        return voxelize(&with_normals, sigma);
    }
    let (normalized, record) = normalize_coordinates(&with_normals, normalize_k)?;
    voxelize_with_record(&normalized, sigma, record)
}
