//! Geometric distortion metrics: point-to-plane PSNR and normalized
//! symmetric Hausdorff distance.

use std::fmt;

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::cloud::{BoundingBox, PointCloud};
use crate::error::{Error, Result};
use crate::normals::estimate_normals;
use crate::spatial::SpatialIndex;

/// Neighborhood size used when a cloud needs normals estimated.
pub const METRIC_NORMAL_K: usize = 10;

fn require(cloud: &PointCloud, what: &str) -> Result<()> {
    if cloud.is_empty() {
        return Err(Error::InvalidArgument(format!("{what} cloud is empty")));
    }
    Ok(())
}

fn with_normals(cloud: &PointCloud) -> Result<PointCloud> {
    if cloud.has_normals() {
        return Ok(cloud.clone());
    }
    if cloud.len() < 2 {
        return Err(Error::InvalidArgument(
            "cannot estimate normals for a single-point cloud".into(),
        ));
    }
    estimate_normals(cloud, METRIC_NORMAL_K.min(cloud.len() - 1))
}

/// Mean over `a` of the squared distance to the tangent plane of its nearest
/// neighbor in `b`, using `b`'s normals.
pub fn directed_point_to_plane(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    require(a, "first")?;
    require(b, "second")?;
    let normals = b.normals.as_ref().ok_or_else(|| {
        Error::Precondition("point-to-plane error needs normals on the second cloud".into())
    })?;
    let index = SpatialIndex::new(&b.positions);
    let terms: Vec<f64> = a
        .positions
        .par_iter()
        .map(|p| {
            let nn = index.nearest(p).expect("index is non-empty").index;
            let d = (p - b.positions[nn]).dot(&normals[nn]);
            d * d
        })
        .collect();
    Ok(terms.iter().sum::<f64>() / terms.len() as f64)
}

/// Symmetric point-to-plane error: the larger of the two directions.
/// Normals are estimated for clouds that lack them.
pub fn point_to_plane_error(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    require(a, "first")?;
    require(b, "second")?;
    let a = with_normals(a)?;
    let b = with_normals(b)?;
    Ok(directed_point_to_plane(&a, &b)?.max(directed_point_to_plane(&b, &a)?))
}

/// Largest nearest-neighbor spacing inside `cloud`.
pub fn intrinsic_resolution(cloud: &PointCloud) -> Result<f64> {
    if cloud.len() < 2 {
        return Err(Error::InvalidArgument(
            "intrinsic resolution needs at least two points".into(),
        ));
    }
    let index = SpatialIndex::new(&cloud.positions);
    let spacing: Vec<f64> = (0..cloud.len())
        .into_par_iter()
        .map(|i| index.knn_of(i, 1).map(|n| n[0].distance))
        .collect::<Result<_>>()?;
    Ok(spacing.into_iter().fold(0.0, f64::max))
}

/// `10 log10(p^2 / e)` with `p` the intrinsic resolution of `reference`;
/// `+inf` when the error is zero.
pub fn gpsnr(reference: &PointCloud, test: &PointCloud) -> Result<f64> {
    let p = intrinsic_resolution(reference)?;
    let e = point_to_plane_error(reference, test)?;
    Ok(psnr_from(p, e))
}

fn psnr_from(p: f64, e: f64) -> f64 {
    if e == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (p * p / e).log10()
    }
}

/// One-sided Hausdorff distance: the farthest point of `a` from `b`.
pub fn ohd(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    require(a, "first")?;
    require(b, "second")?;
    let index = SpatialIndex::new(&b.positions);
    let dist: Vec<f64> = a
        .positions
        .par_iter()
        .map(|p| index.nearest(p).expect("index is non-empty").distance)
        .collect();
    Ok(dist.into_iter().fold(0.0, f64::max))
}

fn union_cloud(a: &PointCloud, b: &PointCloud) -> PointCloud {
    PointCloud::new(a.positions.iter().chain(&b.positions).copied().collect())
}

/// Volume of the union bounding box, zero extents replaced by `p`.
fn union_volume(a: &PointCloud, b: &PointCloud, p: f64) -> Result<f64> {
    let bbox = BoundingBox::from_points(&a.positions)
        .zip(BoundingBox::from_points(&b.positions))
        .map(|(x, y)| x.union(&y))
        .ok_or_else(|| Error::InvalidArgument("empty cloud".into()))?;
    let ext: Vector3<f64> = bbox.extents().map(|e| if e > 0.0 { e } else { p });
    let v = ext.x * ext.y * ext.z;
    if !(v > 0.0) {
        return Err(Error::Degenerate(
            "both clouds are a single repeated point; volume is zero".into(),
        ));
    }
    Ok(v)
}

/// `max(OHD(a, b), OHD(b, a)) / V` over the union bounding box.
pub fn nshd(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    Ok(evaluate_hausdorff(a, b)?.0)
}

fn evaluate_hausdorff(a: &PointCloud, b: &PointCloud) -> Result<(f64, f64, f64, f64)> {
    let fwd = ohd(a, b)?;
    let bwd = ohd(b, a)?;
    let p_union = intrinsic_resolution(&union_cloud(a, b)).unwrap_or(1.0);
    let v = union_volume(a, b, if p_union > 0.0 { p_union } else { 1.0 })?;
    Ok((fwd.max(bwd) / v, fwd, bwd, v))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub gpsnr_db: f64,
    pub nshd: f64,
    pub ohd_fwd: f64,
    pub ohd_bwd: f64,
    /// Intrinsic resolution of the reference.
    pub p: f64,
    pub volume: f64,
    /// Symmetric point-to-plane error.
    pub e: f64,
}

/// All metrics of `test` against `reference`; forward means reference to
/// test.
pub fn evaluate(reference: &PointCloud, test: &PointCloud) -> Result<MetricReport> {
    let p = intrinsic_resolution(reference)?;
    let e = point_to_plane_error(reference, test)?;
    let (nshd, ohd_fwd, ohd_bwd, volume) = evaluate_hausdorff(reference, test)?;
    Ok(MetricReport {
        gpsnr_db: psnr_from(p, e),
        nshd,
        ohd_fwd,
        ohd_bwd,
        p,
        volume,
        e,
    })
}

impl fmt::Display for MetricReport {
    /// `gpsnr_db nshd ohd_fwd ohd_bwd p V`
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {} {} {}",
            self.gpsnr_db, self.nshd, self.ohd_fwd, self.ohd_bwd, self.p, self.volume
        )
    }
}
