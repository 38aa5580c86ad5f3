//! Non-local cube inpainting: pick a target cube around each hole, find the
//! most similar cube elsewhere, align it and solve the regularized fill.

pub mod cube;
pub mod registration;
pub mod similarity;
pub mod solve;

use std::collections::BTreeSet;
use std::fmt;

pub use cube::{
    axis_anchors, extract_cubes, filter_and_mirror_candidates, select_target_cube,
    select_target_cubes, Cube, CubePoint, TargetAssignment,
};
use log::{debug, info, warn};
pub use registration::{
    boundary_cells, boundary_translation, near_hole_points, quaternion_to_rotation, register,
    register_source, registration_misfit, rotation_quaternion, simplified_icp_rotation,
    RegistrationTransform,
};
pub use similarity::{
    agtv, best_source, direct_component, rank_candidates, similarity, SimilarityScore,
};
pub use solve::{solve_inpaint, InpaintProblem, InpaintSolution};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::holes::HoleRegion;
use crate::voxel::{Cell, VoxelGrid};

/// Outcome of one hole.
#[derive(Debug, Clone, PartialEq)]
pub struct HoleReport {
    pub hole_id: usize,
    /// Anchor of the first source used, and whether it was the mirrored copy.
    pub source: Option<(Cell, bool)>,
    pub delta: Option<f64>,
    /// Largest solver residual over the processed target cubes.
    pub residual: Option<f64>,
    pub filled_cells: usize,
    pub targets: usize,
    /// Largest rotation invariant error seen, `max(|R^T R - I|, |det R - 1|)`.
    pub rotation_error: f64,
    pub failure: Option<String>,
}

impl HoleReport {
    fn new(hole_id: usize) -> Self {
        HoleReport {
            hole_id,
            source: None,
            delta: None,
            residual: None,
            filled_cells: 0,
            targets: 0,
            rotation_error: 0.0,
            failure: None,
        }
    }
}

impl fmt::Display for HoleReport {
    /// `hole_id source_anchor delta residual filled_cells`; `-` marks values
    /// a failed hole does not have, mirrored sources end in `m`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let source = match self.source {
            Some((a, mirrored)) => format!(
                "{},{},{}{}",
                a[0],
                a[1],
                a[2],
                if mirrored { "m" } else { "" }
            ),
            None => "-".into(),
        };
        let delta = self.delta.map_or("-".into(), |d| format!("{d:.9}"));
        let residual = self.residual.map_or("-".into(), |r| format!("{r:.3e}"));
        write!(
            f,
            "{} {} {} {} {}",
            self.hole_id, source, delta, residual, self.filled_cells
        )
    }
}

pub fn format_reports(reports: &[HoleReport]) -> String {
    reports.iter().map(|r| format!("{r}\n")).collect()
}

/// What one target cube contributed.
struct TargetOutcome {
    source: (Cell, bool),
    delta: f64,
    residual: f64,
    rotation_error: f64,
    filled: Vec<Cell>,
}

/// A candidate that survived registration.
struct Registered<'a> {
    rank: usize,
    source: &'a Cube,
    delta: f64,
    transform: RegistrationTransform,
    cube: Cube,
    misfit: f64,
}

fn fill_target(
    grid: &mut VoxelGrid,
    target: &Cube,
    cubes: &[Cube],
    remaining: &BTreeSet<Cell>,
    config: &PipelineConfig,
) -> Result<TargetOutcome> {
    let candidates = filter_and_mirror_candidates(cubes, target, config.candidate_ratio)?;
    let ranked = rank_candidates(target, &candidates, config.k_policy, config.dc_mode)?;
    let near = near_hole_points(target, 3);
    let mut last_error = None;
    // the best-ranked registrable candidates, then the best fit among them
    let mut pool = Vec::new();
    for (rank, (i, score)) in ranked.iter().enumerate() {
        let source = &candidates[*i];
        let attempt = register(target, source, config.seed).and_then(|transform| {
            let cube = register_source(source, &transform, config.sigma);
            if cube.occupied.keys().any(|c| target.missing.contains(c)) {
                Ok((transform, cube))
            } else {
                Err(Error::Registration(format!(
                    "registered source {:?} has no points in the missing region",
                    source.anchor
                )))
            }
        });
        match attempt {
            Ok((transform, cube)) => {
                pool.push(Registered {
                    rank,
                    source,
                    delta: score.delta,
                    misfit: registration_misfit(&near, source, &transform),
                    transform,
                    cube,
                });
                if pool.len() == config.source_pool {
                    break;
                }
            }
            Err(e @ (Error::Registration(_) | Error::Degenerate(_))) => {
                debug!("source {:?} rejected: {e}", source.order_key());
                last_error = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    pool.sort_by(|a, b| a.misfit.total_cmp(&b.misfit).then(a.rank.cmp(&b.rank)));
    for pick in pool {
        let solved = solve_inpaint(
            target,
            &pick.cube,
            config.alpha,
            config.beta,
            config.k_policy,
            config.prior,
            config.preserve_known,
        );
        let (_, problem, solution) = match solved {
            Ok(s) => s,
            Err(e @ (Error::Registration(_) | Error::Degenerate(_))) => {
                debug!("source {:?} rejected: {e}", pick.source.order_key());
                last_error = Some(e);
                continue;
            }
            Err(e) => return Err(e),
        };
        // only missing-region nodes are written; known cells stay as they are
        let mut filled = Vec::new();
        for (i, cell) in problem.cells.iter().enumerate() {
            if problem.known[i].is_some() {
                continue;
            }
            let local = crate::voxel::cell_of(&solution.positions[i]);
            let global = target.to_global(&local);
            if remaining.contains(&global) && !grid.contains(&global) {
                grid.insert(global, pick.cube.occupied[cell].normal);
                filled.push(global);
            }
        }
        debug!(
            "target {:?}: source {:?} (rank {}, delta {:.6}, misfit {:.4}) filled {} cells",
            target.anchor,
            pick.source.order_key(),
            pick.rank,
            pick.delta,
            pick.misfit,
            filled.len()
        );
        return Ok(TargetOutcome {
            source: pick.source.order_key(),
            delta: pick.delta,
            residual: solution.residual,
            rotation_error: pick.transform.orthogonality_error(),
            filled,
        });
    }
    Err(last_error.unwrap_or_else(|| Error::NoCandidate("no candidate could be registered".into())))
}

/// Fills one hole in place. The hole is covered by target cubes, largest
/// share of the still-missing cells first; cells filled by one target count
/// as known for the next.
pub fn inpaint_hole(
    grid: &mut VoxelGrid,
    hole: &HoleRegion,
    config: &PipelineConfig,
) -> Result<HoleReport> {
    config.validate()?;
    let mut report = HoleReport::new(hole.id);
    let mut remaining: BTreeSet<Cell> = hole
        .cells
        .iter()
        .filter(|c| !grid.contains(c))
        .copied()
        .collect();
    // cells not yet inside any processed target window
    let mut pool = remaining.clone();
    let mut failures = Vec::new();
    while !pool.is_empty() {
        let cubes = extract_cubes(grid, &remaining, config.cube_size, config.stride);
        let Some(ti) = select_target_cube(&cubes, &pool) else {
            return Err(Error::Internal(format!(
                "hole {} has cells outside every cube",
                hole.id
            )));
        };
        let target = &cubes[ti];
        pool.retain(|c| !target.covers(c));
        if target.occupied.is_empty() {
            failures.push(format!("target {:?} has no known points", target.anchor));
            continue;
        }
        report.targets += 1;
        match fill_target(grid, target, &cubes, &remaining, config) {
            Ok(outcome) => {
                if report.source.is_none() {
                    report.source = Some(outcome.source);
                    report.delta = Some(outcome.delta);
                }
                report.residual = Some(
                    report
                        .residual
                        .map_or(outcome.residual, |r: f64| r.max(outcome.residual)),
                );
                report.rotation_error = report.rotation_error.max(outcome.rotation_error);
                report.filled_cells += outcome.filled.len();
                for c in &outcome.filled {
                    remaining.remove(c);
                }
            }
            Err(e @ (Error::NoCandidate(_) | Error::Registration(_) | Error::Degenerate(_))) => {
                warn!(
                    "hole {}: target {:?} left unfilled: {e}",
                    hole.id, target.anchor
                );
                failures.push(e.to_string());
            }
            Err(e) => return Err(e),
        }
    }
    if report.filled_cells == 0 && !failures.is_empty() {
        report.failure = Some(failures.join("; "));
    }
    info!(
        "hole {}: filled {} of {} cells",
        hole.id,
        report.filled_cells,
        hole.cells.len()
    );
    Ok(report)
}

/// Fills holes in ascending id order.
pub fn inpaint_all(
    grid: &mut VoxelGrid,
    holes: &[HoleRegion],
    config: &PipelineConfig,
) -> Result<Vec<HoleReport>> {
    let mut order: Vec<&HoleRegion> = holes.iter().collect();
    order.sort_by_key(|h| h.id);
    order
        .into_iter()
        .map(|h| inpaint_hole(grid, h, config))
        .collect()
}
