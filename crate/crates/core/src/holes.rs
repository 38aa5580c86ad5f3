//! Hole detection by depth-map projection along a principal axis.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use log::warn;
use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use crate::error::{Error, Result};
use crate::voxel::{Cell, VoxelGrid};

/// Signed coordinate axis used as the projection direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Axis {
    PosX,
    NegX,
    PosY,
    NegY,
    PosZ,
    NegZ,
}

impl Axis {
    pub const ALL: [Axis; 6] = [
        Axis::PosX,
        Axis::NegX,
        Axis::PosY,
        Axis::NegY,
        Axis::PosZ,
        Axis::NegZ,
    ];

    pub fn from_index(index: usize, positive: bool) -> Axis {
        match (index, positive) {
            (0, true) => Axis::PosX,
            (0, false) => Axis::NegX,
            (1, true) => Axis::PosY,
            (1, false) => Axis::NegY,
            (2, true) => Axis::PosZ,
            _ => Axis::NegZ,
        }
    }

    /// Coordinate index along the axis (0 = x).
    pub fn index(self) -> usize {
        match self {
            Axis::PosX | Axis::NegX => 0,
            Axis::PosY | Axis::NegY => 1,
            Axis::PosZ | Axis::NegZ => 2,
        }
    }

    pub fn is_positive(self) -> bool {
        matches!(self, Axis::PosX | Axis::PosY | Axis::PosZ)
    }

    /// The two remaining coordinate indices in increasing order; pixel
    /// `(a, b)` takes its column from the first and its row from the second.
    pub fn plane(self) -> (usize, usize) {
        match self.index() {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Axis::PosX => "+x",
            Axis::NegX => "-x",
            Axis::PosY => "+y",
            Axis::NegY => "-y",
            Axis::PosZ => "+z",
            Axis::NegZ => "-z",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Axis::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown axis {s:?}")))
    }
}

/// Picks the signed coordinate axis closest to the dominant direction of the
/// voxel normals.
pub fn principal_projection_axis(grid: &VoxelGrid) -> Result<Axis> {
    if grid.len() < 3 {
        return Err(Error::Precondition(format!(
            "projection axis needs at least 3 occupied cells, got {}",
            grid.len()
        )));
    }
    let mut moment = Matrix3::zeros();
    let mut sum = Vector3::zeros();
    for (_, v) in grid.iter() {
        moment += v.normal * v.normal.transpose();
        sum += v.normal;
    }
    if moment.iter().all(|v| v.abs() < 1e-12) {
        warn!("normal covariance has rank 0; projecting along +z");
        return Ok(Axis::PosZ);
    }
    let eig = SymmetricEigen::new(moment);
    let mut pc = eig.eigenvectors.column(eig.eigenvalues.imax()).into_owned();
    let along = pc.dot(&sum);
    let tie = 1e-9 * sum.norm().max(1.0);
    if along < -tie || (along.abs() <= tie && pc[pc.iamax()] < 0.0) {
        pc = -pc;
    }
    let largest = pc.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let index = (0..3)
        .find(|&i| pc[i].abs() >= largest - 1e-12)
        .unwrap_or(2);
    Ok(Axis::from_index(index, pc[index] >= 0.0))
}

/// Pixel label for a column that contains occupied cells.
pub const KNOWN: i32 = -1;
/// Pixel label for an empty column that has not been assigned a hole yet.
pub const UNLABELED: i32 = 0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepthMap {
    pub axis: Axis,
    /// Plane coordinates of pixel `(0, 0)`.
    pub origin: [i64; 2],
    pub width: usize,
    pub height: usize,
    /// Row-major, `height` rows of `width` pixels.
    pub depth: Vec<Option<i64>>,
    pub labels: Vec<i32>,
}

impl DepthMap {
    pub fn index(&self, col: usize, row: usize) -> usize {
        row * self.width + col
    }

    pub fn depth_at(&self, col: usize, row: usize) -> Option<i64> {
        self.depth[self.index(col, row)]
    }

    pub fn label_at(&self, col: usize, row: usize) -> i32 {
        self.labels[self.index(col, row)]
    }

    /// Plane coordinates of a pixel.
    pub fn pixel_coords(&self, col: usize, row: usize) -> [i64; 2] {
        [self.origin[0] + col as i64, self.origin[1] + row as i64]
    }

    pub fn is_border(&self, col: usize, row: usize) -> bool {
        col == 0 || row == 0 || col + 1 == self.width || row + 1 == self.height
    }

    fn neighbors(&self, col: usize, row: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        (-1i64..=1)
            .flat_map(|dr| (-1i64..=1).map(move |dc| (dc, dr)))
            .filter(|&(dc, dr)| dc != 0 || dr != 0)
            .filter_map(move |(dc, dr)| {
                let c = col as i64 + dc;
                let r = row as i64 + dr;
                (c >= 0 && r >= 0 && (c as usize) < self.width && (r as usize) < self.height)
                    .then_some((c as usize, r as usize))
            })
    }

    /// Pixels carrying `label`, in row-major order.
    pub fn pixels_with_label(&self, label: i32) -> Vec<(usize, usize)> {
        (0..self.height)
            .flat_map(|row| (0..self.width).map(move |col| (col, row)))
            .filter(|&(c, r)| self.label_at(c, r) == label)
            .collect()
    }
}

/// Projects the occupied cells onto the plane orthogonal to `axis`. Each
/// pixel keeps the depth nearest the viewer: the minimum coordinate for a
/// positive axis, the maximum for a negative one.
pub fn project_depth_map(grid: &VoxelGrid, axis: Axis) -> DepthMap {
    let (pa, pb) = axis.plane();
    let d = axis.index();
    let Some((lo, hi)) = grid.extent() else {
        return DepthMap {
            axis,
            origin: [0, 0],
            width: 0,
            height: 0,
            depth: Vec::new(),
            labels: Vec::new(),
        };
    };
    let width = (hi[pa] - lo[pa] + 1) as usize;
    let height = (hi[pb] - lo[pb] + 1) as usize;
    let mut depth: Vec<Option<i64>> = vec![None; width * height];
    for cell in grid.cells() {
        let i = (cell[pb] - lo[pb]) as usize * width + (cell[pa] - lo[pa]) as usize;
        let z = cell[d];
        depth[i] = Some(match depth[i] {
            None => z,
            Some(cur) if axis.is_positive() => cur.min(z),
            Some(cur) => cur.max(z),
        });
    }
    let labels = depth
        .iter()
        .map(|v| if v.is_some() { KNOWN } else { UNLABELED })
        .collect();
    DepthMap {
        axis,
        origin: [lo[pa], lo[pb]],
        width,
        height,
        depth,
        labels,
    }
}

/// Labels the 8-connected components of unlabeled pixels 1, 2, 3, ... in
/// row-major discovery order.
pub fn label_holes_bfs(map: &DepthMap) -> DepthMap {
    let mut out = map.clone();
    let mut next = 1;
    let mut queue = VecDeque::new();
    for row in 0..out.height {
        for col in 0..out.width {
            if out.label_at(col, row) != UNLABELED {
                continue;
            }
            let idx = out.index(col, row);
            out.labels[idx] = next;
            queue.push_back((col, row));
            while let Some((c, r)) = queue.pop_front() {
                let around: Vec<_> = out.neighbors(c, r).collect();
                for (nc, nr) in around {
                    let ni = out.index(nc, nr);
                    if out.labels[ni] == UNLABELED {
                        out.labels[ni] = next;
                        queue.push_back((nc, nr));
                    }
                }
            }
            next += 1;
        }
    }
    out
}

/// Labels of components with at least `min_pixels` pixels and no pixel on
/// the map border, ascending.
pub fn filter_holes(map: &DepthMap, min_pixels: usize) -> Vec<i32> {
    let max_label = map.labels.iter().copied().max().unwrap_or(0);
    if max_label < 1 {
        return Vec::new();
    }
    let mut counts = vec![0usize; max_label as usize + 1];
    let mut on_border = vec![false; max_label as usize + 1];
    for row in 0..map.height {
        for col in 0..map.width {
            let l = map.label_at(col, row);
            if l >= 1 {
                counts[l as usize] += 1;
                on_border[l as usize] |= map.is_border(col, row);
            }
        }
    }
    (1..=max_label)
        .filter(|&l| counts[l as usize] >= min_pixels && !on_border[l as usize])
        .collect()
}

/// A connected set of missing cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HoleRegion {
    pub id: usize,
    pub axis: Axis,
    /// Plane coordinates of the hole pixels, sorted.
    pub pixels: BTreeSet<[i64; 2]>,
    pub d_min: i64,
    pub d_max: i64,
    pub cells: BTreeSet<Cell>,
}

impl HoleRegion {
    /// Wraps an explicit cell set (for example a synthesized hole record)
    /// as a region seen along `axis`.
    pub fn from_cells(id: usize, axis: Axis, cells: BTreeSet<Cell>) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::InvalidArgument(
                "hole region needs at least one cell".into(),
            ));
        }
        let (pa, pb) = axis.plane();
        let d = axis.index();
        let pixels = cells.iter().map(|c| [c[pa], c[pb]]).collect();
        let d_min = cells.iter().map(|c| c[d]).min().unwrap_or(0);
        let d_max = cells.iter().map(|c| c[d]).max().unwrap_or(0);
        Ok(HoleRegion {
            id,
            axis,
            pixels,
            d_min,
            d_max,
            cells,
        })
    }

    pub fn pixel_count(&self) -> usize {
        self.pixels.len()
    }

    pub fn centroid(&self) -> Vector3<f64> {
        let sum = self.cells.iter().fold(Vector3::zeros(), |acc, c| {
            acc + Vector3::new(c[0] as f64, c[1] as f64, c[2] as f64)
        });
        sum / self.cells.len().max(1) as f64 + Vector3::repeat(0.5)
    }

    /// One manifest line: `id axis pixel_count d_min d_max` then `x,y,z`
    /// per cell.
    pub fn to_manifest_line(&self) -> String {
        let mut line = format!(
            "{} {} {} {} {}",
            self.id,
            self.axis,
            self.pixel_count(),
            self.d_min,
            self.d_max
        );
        for c in &self.cells {
            line.push_str(&format!(" {},{},{}", c[0], c[1], c[2]));
        }
        line
    }

    pub fn parse_manifest_line(line: &str) -> Result<Self> {
        let bad =
            |what: &str| Error::InvalidArgument(format!("hole manifest: {what} in line {line:?}"));
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 6 {
            return Err(bad("too few fields"));
        }
        let int = |i: usize, name: &str| -> Result<i64> {
            fields[i].parse().map_err(|_| bad(&format!("bad {name}")))
        };
        let id = int(0, "id")?;
        let axis: Axis = fields[1].parse()?;
        let pixel_count = int(2, "pixel_count")?;
        let d_min = int(3, "d_min")?;
        let d_max = int(4, "d_max")?;
        let mut cells = BTreeSet::new();
        for token in &fields[5..] {
            let parts: Vec<i64> = token
                .split(',')
                .map(|p| p.parse().map_err(|_| bad("bad cell")))
                .collect::<Result<_>>()?;
            if parts.len() != 3 {
                return Err(bad("cell needs three coordinates"));
            }
            cells.insert([parts[0], parts[1], parts[2]]);
        }
        if id < 1 {
            return Err(bad("hole ids start at 1"));
        }
        let mut region = HoleRegion::from_cells(id as usize, axis, cells)?;
        if region.pixel_count() as i64 != pixel_count {
            return Err(bad("pixel count does not match the cell list"));
        }
        region.d_min = d_min;
        region.d_max = d_max;
        Ok(region)
    }
}

pub fn format_manifest(holes: &[HoleRegion]) -> String {
    holes.iter().map(|h| h.to_manifest_line() + "\n").collect()
}

pub fn parse_manifest(text: &str) -> Result<Vec<HoleRegion>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(HoleRegion::parse_manifest_line)
        .collect()
}

pub fn write_manifest(holes: &[HoleRegion], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_manifest(holes)).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<HoleRegion>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text)
}

/// Turns hole component `label` into 3D cells: its pixels times the depth
/// range of the known pixels around it, widened by one cell each way.
pub fn lift_to_3d(map: &DepthMap, label: i32, grid: &VoxelGrid) -> Result<HoleRegion> {
    let pixels = map.pixels_with_label(label);
    if pixels.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no pixels carry label {label}"
        )));
    }
    let mut range: Option<(i64, i64)> = None;
    for &(c, r) in &pixels {
        for (nc, nr) in map.neighbors(c, r) {
            if let Some(d) = map.depth_at(nc, nr) {
                range = Some(match range {
                    None => (d, d),
                    Some((lo, hi)) => (lo.min(d), hi.max(d)),
                });
            }
        }
    }
    let (lo, hi) = range
        .ok_or_else(|| Error::Internal(format!("hole {label} has no adjacent known pixel")))?;
    let (d_min, d_max) = (lo - 1, hi + 1);
    let (pa, pb) = map.axis.plane();
    let d = map.axis.index();
    let mut cells = BTreeSet::new();
    let mut pixel_set = BTreeSet::new();
    for &(c, r) in &pixels {
        let [a, b] = map.pixel_coords(c, r);
        pixel_set.insert([a, b]);
        for z in d_min..=d_max {
            let mut cell = [0i64; 3];
            cell[pa] = a;
            cell[pb] = b;
            cell[d] = z;
            if !grid.contains(&cell) {
                cells.insert(cell);
            }
        }
    }
    Ok(HoleRegion {
        id: label as usize,
        axis: map.axis,
        pixels: pixel_set,
        d_min,
        d_max,
        cells,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DetectOptions {
    pub min_pixels: usize,
    /// Sweep all six signed axes instead of the principal one.
    pub all_axes: bool,
}

impl Default for DetectOptions {
    fn default() -> Self {
        DetectOptions {
            min_pixels: 4,
            all_axes: false,
        }
    }
}

fn detect_along(grid: &VoxelGrid, axis: Axis, min_pixels: usize) -> Result<Vec<HoleRegion>> {
    let map = label_holes_bfs(&project_depth_map(grid, axis));
    filter_holes(&map, min_pixels)
        .into_iter()
        .map(|label| lift_to_3d(&map, label, grid))
        .collect()
}

/// Runs the full detection chain. Hole ids are renumbered 1, 2, ... in
/// output order.
pub fn detect_holes(grid: &VoxelGrid, options: &DetectOptions) -> Result<Vec<HoleRegion>> {
    let mut holes = if options.all_axes {
        let mut covered: BTreeSet<Cell> = BTreeSet::new();
        let mut out = Vec::new();
        for axis in Axis::ALL {
            for mut hole in detect_along(grid, axis, options.min_pixels)? {
                // a hole seen from several sides is kept once, from the first axis
                if hole.cells.iter().any(|c| covered.contains(c)) {
                    continue;
                }
                covered.extend(hole.cells.iter().copied());
                hole.id = 0;
                out.push(hole);
            }
        }
        out
    } else {
        let axis = principal_projection_axis(grid)?;
        detect_along(grid, axis, options.min_pixels)?
    };
    for (i, h) in holes.iter_mut().enumerate() {
        h.id = i + 1;
    }
    Ok(holes)
}
