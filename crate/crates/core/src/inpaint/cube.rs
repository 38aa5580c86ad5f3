//! Overlapping cube extraction, target selection and candidate filtering.

use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};
use crate::voxel::{cell_center, Cell, VoxelGrid};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubePoint {
    /// Cube-local coordinate (global minus anchor).
    pub position: Point3<f64>,
    pub normal: Vector3<f64>,
}

/// An `M`-sided window of the grid in local cell coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Cube {
    pub anchor: Cell,
    pub side: i64,
    pub occupied: BTreeMap<Cell, CubePoint>,
    pub missing: BTreeSet<Cell>,
    pub mirrored: bool,
}

impl Cube {
    pub fn new(anchor: Cell, side: i64) -> Self {
        Cube {
            anchor,
            side,
            occupied: BTreeMap::new(),
            missing: BTreeSet::new(),
            mirrored: false,
        }
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied.len()
    }

    pub fn in_bounds(&self, local: &Cell) -> bool {
        local.iter().all(|&v| v >= 0 && v < self.side)
    }

    pub fn to_local(&self, global: &Cell) -> Cell {
        [
            global[0] - self.anchor[0],
            global[1] - self.anchor[1],
            global[2] - self.anchor[2],
        ]
    }

    pub fn to_global(&self, local: &Cell) -> Cell {
        [
            local[0] + self.anchor[0],
            local[1] + self.anchor[1],
            local[2] + self.anchor[2],
        ]
    }

    /// Whether the cube's window contains the global cell.
    pub fn covers(&self, global: &Cell) -> bool {
        self.in_bounds(&self.to_local(global))
    }

    /// Center of the window in local coordinates.
    pub fn center(&self) -> Point3<f64> {
        Point3::from(Vector3::repeat(self.side as f64 / 2.0))
    }

    pub fn positions(&self) -> Vec<Point3<f64>> {
        self.occupied.values().map(|p| p.position).collect()
    }

    pub fn normals(&self) -> Vec<Vector3<f64>> {
        self.occupied.values().map(|p| p.normal).collect()
    }

    /// Ordering used to break score ties: anchor, originals before mirrors.
    pub fn order_key(&self) -> (Cell, bool) {
        (self.anchor, self.mirrored)
    }

    /// Reflection across the local x-y plane: cell `z -> M-1-z`, coordinate
    /// `z -> M-z`, normal z negated.
    pub fn mirror(&self) -> Cube {
        let m = self.side;
        let flip = |c: &Cell| [c[0], c[1], m - 1 - c[2]];
        Cube {
            anchor: self.anchor,
            side: m,
            occupied: self
                .occupied
                .iter()
                .map(|(c, p)| {
                    (
                        flip(c),
                        CubePoint {
                            position: Point3::new(
                                p.position.x,
                                p.position.y,
                                m as f64 - p.position.z,
                            ),
                            normal: Vector3::new(p.normal.x, p.normal.y, -p.normal.z),
                        },
                    )
                })
                .collect(),
            missing: self.missing.iter().map(flip).collect(),
            mirrored: !self.mirrored,
        }
    }
}

/// Anchors along one axis for the inclusive range `lo..=hi`: every `stride`
/// from `lo`, the last one clamped so the cube ends at `hi`. Ranges shorter
/// than `m` get the single anchor `lo`.
pub fn axis_anchors(lo: i64, hi: i64, m: i64, stride: i64) -> Vec<i64> {
    let end = hi + 1;
    if end - lo <= m {
        return vec![lo];
    }
    let mut anchors = Vec::new();
    let mut a = lo;
    loop {
        anchors.push(a.min(end - m));
        if a + m >= end {
            break;
        }
        a += stride;
    }
    anchors.dedup();
    anchors
}

fn containing(anchors: &[i64], x: i64, m: i64) -> impl Iterator<Item = i64> + '_ {
    // anchors are ascending; a cube at `a` holds x when a <= x < a + m
    let first = anchors.partition_point(|&a| a + m <= x);
    anchors[first..]
        .iter()
        .copied()
        .take_while(move |&a| a <= x)
}

/// Bounding range of occupied and missing cells.
fn combined_extent(grid: &VoxelGrid, missing: &BTreeSet<Cell>) -> Option<(Cell, Cell)> {
    let mut out: Option<(Cell, Cell)> = grid.extent();
    for c in missing {
        out = Some(match out {
            None => (*c, *c),
            Some((lo, hi)) => (
                [lo[0].min(c[0]), lo[1].min(c[1]), lo[2].min(c[2])],
                [hi[0].max(c[0]), hi[1].max(c[1]), hi[2].max(c[2])],
            ),
        });
    }
    out
}

/// Anchors of all cube windows over the grid, per axis.
pub fn cube_lattice(
    grid: &VoxelGrid,
    missing: &BTreeSet<Cell>,
    m: usize,
    stride: usize,
) -> [Vec<i64>; 3] {
    let m = m as i64;
    let stride = stride as i64;
    match combined_extent(grid, missing) {
        None => [Vec::new(), Vec::new(), Vec::new()],
        Some((lo, hi)) => [0, 1, 2].map(|a| axis_anchors(lo[a], hi[a], m, stride)),
    }
}

/// Splits the grid into overlapping `m`-sided cubes on a `stride` lattice.
/// `missing` cells are marked in every cube window that holds them. Windows
/// with neither occupied nor missing cells are skipped. Output is sorted by
/// anchor.
pub fn extract_cubes(
    grid: &VoxelGrid,
    missing: &BTreeSet<Cell>,
    m: usize,
    stride: usize,
) -> Vec<Cube> {
    let lattice = cube_lattice(grid, missing, m, stride);
    let side = m as i64;
    let mut cubes: BTreeMap<Cell, Cube> = BTreeMap::new();
    let mut place = |cell: &Cell, f: &mut dyn FnMut(&mut Cube)| {
        for ax in containing(&lattice[0], cell[0], side) {
            for ay in containing(&lattice[1], cell[1], side) {
                for az in containing(&lattice[2], cell[2], side) {
                    let anchor = [ax, ay, az];
                    f(cubes
                        .entry(anchor)
                        .or_insert_with(|| Cube::new(anchor, side)));
                }
            }
        }
    };
    for (cell, v) in grid.iter() {
        place(cell, &mut |cube: &mut Cube| {
            let local = cube.to_local(cell);
            let offset = Vector3::new(
                cube.anchor[0] as f64,
                cube.anchor[1] as f64,
                cube.anchor[2] as f64,
            );
            cube.occupied.insert(
                local,
                CubePoint {
                    position: v.center - offset,
                    normal: v.normal,
                },
            );
        });
    }
    for cell in missing {
        if grid.contains(cell) {
            continue;
        }
        place(cell, &mut |cube: &mut Cube| {
            let local = cube.to_local(cell);
            cube.missing.insert(local);
        });
    }
    cubes.into_values().collect()
}

/// Index of the cube holding the most of `cells`; ties go to the cube whose
/// center is nearest the cells' centroid, then to the lowest anchor.
pub fn select_target_cube(cubes: &[Cube], cells: &BTreeSet<Cell>) -> Option<usize> {
    if cells.is_empty() {
        return None;
    }
    let centroid = cells
        .iter()
        .fold(Vector3::zeros(), |acc, c| acc + cell_center(*c).coords)
        / cells.len() as f64;
    let mut best: Option<(usize, usize, f64)> = None;
    for (i, cube) in cubes.iter().enumerate() {
        let share = cells.iter().filter(|c| cube.covers(c)).count();
        if share == 0 {
            continue;
        }
        let center = Vector3::new(
            cube.anchor[0] as f64,
            cube.anchor[1] as f64,
            cube.anchor[2] as f64,
        ) + Vector3::repeat(cube.side as f64 / 2.0);
        let dist = (center - centroid).norm_squared();
        let better = match best {
            None => true,
            Some((_, s, d)) => share > s || (share == s && dist < d),
        };
        if better {
            best = Some((i, share, dist));
        }
    }
    best.map(|(i, _, _)| i)
}

/// One step of a greedy hole cover: the cube to process and the hole cells
/// it takes.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetAssignment {
    pub hole_id: usize,
    pub cube: usize,
    pub cells: BTreeSet<Cell>,
}

/// Covers each hole with target cubes, largest share first. Cubes must come
/// from `extract_cubes` with the holes' cells marked missing.
pub fn select_target_cubes(
    cubes: &[Cube],
    holes: &[crate::holes::HoleRegion],
) -> Result<Vec<TargetAssignment>> {
    let mut out = Vec::new();
    for hole in holes {
        let mut remaining = hole.cells.clone();
        while !remaining.is_empty() {
            let i = select_target_cube(cubes, &remaining).ok_or_else(|| {
                Error::Internal(format!("hole {} has cells outside every cube", hole.id))
            })?;
            let taken: BTreeSet<Cell> = remaining
                .iter()
                .filter(|c| cubes[i].covers(c))
                .copied()
                .collect();
            remaining.retain(|c| !taken.contains(c));
            out.push(TargetAssignment {
                hole_id: hole.id,
                cube: i,
                cells: taken,
            });
        }
    }
    Ok(out)
}

/// Candidate sources for `target`: cubes with at least `ratio` times the
/// target's point count whose window avoids the target's missing cells,
/// each followed by its mirror. The ratio is relaxed in steps of 0.1 down to
/// 0.3 when nothing qualifies.
pub fn filter_and_mirror_candidates(
    cubes: &[Cube],
    target: &Cube,
    ratio: f64,
) -> Result<Vec<Cube>> {
    let missing_global: Vec<Cell> = target.missing.iter().map(|c| target.to_global(c)).collect();
    let eligible: Vec<&Cube> = cubes
        .iter()
        .filter(|c| c.anchor != target.anchor)
        .filter(|c| !missing_global.iter().any(|g| c.covers(g)))
        .collect();
    let need = target.occupied_count() as f64;
    let mut r = ratio;
    loop {
        let picked: Vec<Cube> = eligible
            .iter()
            .filter(|c| c.occupied_count() > 0 && c.occupied_count() as f64 >= r * need - 1e-9)
            .flat_map(|c| [(*c).clone(), c.mirror()])
            .collect();
        if !picked.is_empty() {
            if r < ratio {
                warn!(
                    "candidate ratio relaxed from {ratio} to {r:.1} for cube {:?}",
                    target.anchor
                );
            }
            return Ok(picked);
        }
        let next = ((r - 0.1) * 10.0).round() / 10.0;
        if next < 0.3 - 1e-9 {
            return Err(Error::NoCandidate(format!(
                "no cube near {:?} holds at least 30% of the target's {} points",
                target.anchor,
                target.occupied_count()
            )));
        }
        r = next;
    }
}
