//! Point-cloud container shared by every stage of the pipeline.

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};

/// Tolerance on the unit-length invariant of stored normals.
pub const NORMAL_UNIT_TOLERANCE: f64 = 1e-6;

/// Positions with optional per-point unit normals.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub positions: Vec<Point3<f64>>,
    pub normals: Option<Vec<Vector3<f64>>>,
    /// Set when normal estimation hit a neighborhood with no spread and
    /// had to fall back to `(0, 0, 1)`.
    pub degenerate_normals: bool,
}

impl PointCloud {
    pub fn new(positions: Vec<Point3<f64>>) -> Self {
        Self {
            positions,
            normals: None,
            degenerate_normals: false,
        }
    }

    /// Builds a cloud with normals, checking count and unit length.
    pub fn with_normals(positions: Vec<Point3<f64>>, normals: Vec<Vector3<f64>>) -> Result<Self> {
        let cloud = Self {
            positions,
            normals: Some(normals),
            degenerate_normals: false,
        };
        cloud.validate()?;
        Ok(cloud)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn has_normals(&self) -> bool {
        self.normals.is_some()
    }

    /// Checks the normal-count and unit-length invariants.
    pub fn validate(&self) -> Result<()> {
        if let Some(normals) = &self.normals {
            if normals.len() != self.positions.len() {
                return Err(Error::InvalidArgument(format!(
                    "{} normals for {} positions",
                    normals.len(),
                    self.positions.len()
                )));
            }
            if let Some((i, n)) = normals
                .iter()
                .enumerate()
                .find(|(_, n)| (n.norm() - 1.0).abs() > NORMAL_UNIT_TOLERANCE)
            {
                return Err(Error::InvalidArgument(format!(
                    "normal {i} has length {}",
                    n.norm()
                )));
            }
        }
        Ok(())
    }

    pub fn require_non_empty(&self, what: &str) -> Result<()> {
        if self.positions.is_empty() {
            return Err(Error::InvalidArgument(format!("{what}: empty point cloud")));
        }
        Ok(())
    }

    pub fn bounding_box(&self) -> Option<BoundingBox> {
        BoundingBox::from_points(&self.positions)
    }

    pub fn centroid(&self) -> Option<Point3<f64>> {
        if self.positions.is_empty() {
            return None;
        }
        let sum = self
            .positions
            .iter()
            .fold(Vector3::zeros(), |acc, p| acc + p.coords);
        Some(Point3::from(sum / self.positions.len() as f64))
    }
}

/// Axis-aligned box; `min <= max` componentwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub min: Point3<f64>,
    pub max: Point3<f64>,
}

impl BoundingBox {
    pub fn from_points(points: &[Point3<f64>]) -> Option<Self> {
        let first = points.first()?;
        let mut min = *first;
        let mut max = *first;
        for p in &points[1..] {
            for a in 0..3 {
                min[a] = min[a].min(p[a]);
                max[a] = max[a].max(p[a]);
            }
        }
        Some(Self { min, max })
    }

    pub fn union(&self, other: &BoundingBox) -> BoundingBox {
        let mut min = self.min;
        let mut max = self.max;
        for a in 0..3 {
            min[a] = min[a].min(other.min[a]);
            max[a] = max[a].max(other.max[a]);
        }
        BoundingBox { min, max }
    }

    pub fn extents(&self) -> Vector3<f64> {
        self.max - self.min
    }

    pub fn volume(&self) -> f64 {
        let e = self.extents();
        e.x * e.y * e.z
    }

    pub fn contains(&self, p: &Point3<f64>) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }
}
