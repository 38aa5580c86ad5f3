//! Synthetic hole punching and the voxelize, detect, inpaint chain.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Point3, Vector3};

use crate::cloud::PointCloud;
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::holes::{detect_holes, DetectOptions, HoleRegion};
use crate::inpaint::{inpaint_all, HoleReport};
use crate::voxel::{cell_center, prepare_grid, Cell, VoxelGrid};

/// Region removed from a grid to make a synthetic hole, in grid coordinates.
/// A cell is removed when its center lies strictly inside the shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HoleShape {
    Sphere {
        center: Point3<f64>,
        radius: f64,
    },
    Box {
        center: Point3<f64>,
        half_extents: Vector3<f64>,
    },
}

impl HoleShape {
    pub fn contains(&self, p: &Point3<f64>) -> bool {
        match self {
            HoleShape::Sphere { center, radius } => (p - center).norm() < *radius,
            HoleShape::Box {
                center,
                half_extents,
            } => {
                let d = p - center;
                (0..3).all(|i| d[i].abs() < half_extents[i])
            }
        }
    }
}

impl fmt::Display for HoleShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HoleShape::Sphere { center: c, radius } => {
                write!(f, "sphere:{},{},{}:{}", c.x, c.y, c.z, radius)
            }
            HoleShape::Box {
                center: c,
                half_extents: h,
            } => {
                write!(f, "box:{},{},{}:{},{},{}", c.x, c.y, c.z, h.x, h.y, h.z)
            }
        }
    }
}

fn triple(text: &str, what: &str) -> Result<Vector3<f64>> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config(format!("{what}: expected x,y,z numbers, got {text:?}")))?;
    match parts[..] {
        [x, y, z] if x.is_finite() && y.is_finite() && z.is_finite() => Ok(Vector3::new(x, y, z)),
        _ => Err(Error::Config(format!(
            "{what}: expected three finite numbers, got {text:?}"
        ))),
    }
}

impl FromStr for HoleShape {
    type Err = Error;

    /// `sphere:cx,cy,cz:r` or `box:cx,cy,cz:hx,hy,hz`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        match parts[..] {
            ["sphere", c, r] => {
                let radius: f64 = r
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("sphere radius {r:?} is not a number")))?;
                if !(radius >= 0.0) {
                    return Err(Error::Config(format!(
                        "sphere radius must be non-negative, got {radius}"
                    )));
                }
                Ok(HoleShape::Sphere {
                    center: Point3::from(triple(c, "sphere center")?),
                    radius,
                })
            }
            ["box", c, h] => {
                let half_extents = triple(h, "box half extents")?;
                if half_extents.iter().any(|v| *v < 0.0) {
                    return Err(Error::Config(
                        "box half extents must be non-negative".into(),
                    ));
                }
                Ok(HoleShape::Box {
                    center: Point3::from(triple(c, "box center")?),
                    half_extents,
                })
            }
            _ => Err(Error::Config(format!(
                "hole shape must be `sphere:cx,cy,cz:r` or `box:cx,cy,cz:hx,hy,hz`, got {s:?}"
            ))),
        }
    }
}

/// A punched grid with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesizedHole {
    pub shape: HoleShape,
    pub punched: VoxelGrid,
    /// The removed cells and their points.
    pub truth: VoxelGrid,
}

impl SynthesizedHole {
    pub fn removed_cells(&self) -> BTreeSet<Cell> {
        self.truth.cells().copied().collect()
    }
}

/// Removes every occupied cell whose center lies inside `shape`.
pub fn synth_hole(grid: &VoxelGrid, shape: HoleShape) -> Result<SynthesizedHole> {
    let mut punched = grid.clone();
    let mut truth = VoxelGrid::new(grid.record);
    for (cell, v) in grid.iter() {
        if shape.contains(&cell_center(*cell)) {
            punched.remove(cell);
            truth.insert(*cell, v.normal);
        }
    }
    if truth.is_empty() {
        return Err(Error::Config(format!("hole {shape} removes no cells")));
    }
    Ok(SynthesizedHole {
        shape,
        punched,
        truth,
    })
}

pub fn detect_options(config: &PipelineConfig) -> DetectOptions {
    DetectOptions {
        min_pixels: config.min_hole_pixels,
        all_axes: config.all_axes,
    }
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub voxelized: VoxelGrid,
    pub holes: Vec<HoleRegion>,
    pub inpainted: VoxelGrid,
    pub reports: Vec<HoleReport>,
}

/// Voxelizes `cloud`, detects holes and fills them.
pub fn run_pipeline(cloud: &PointCloud, config: &PipelineConfig) -> Result<PipelineRun> {
    config.validate()?;
    let voxelized = prepare_grid(cloud, config.normalize_k, config.normal_k, config.sigma)?;
    let holes = detect_holes(&voxelized, &detect_options(config))?;
    let mut inpainted = voxelized.clone();
    let reports = inpaint_all(&mut inpainted, &holes, config)?;
    Ok(PipelineRun {
        voxelized,
        holes,
        inpainted,
        reports,
    })
}
