//! Cube descriptors (direct component, AGTV) and source ranking.

use log::warn;
use nalgebra::Vector3;
use rayon::prelude::*;

use super::cube::Cube;
use crate::config::{DcMode, KPolicy};
use crate::error::{Error, Result};
use crate::graph::{EdgeWeighting, KnnGraph};

/// `sum(n) / |sum(n)|^2` over the cube's occupied cells.
pub fn direct_component(cube: &Cube) -> Result<Vector3<f64>> {
    if cube.occupied.is_empty() {
        return Err(Error::Degenerate(format!(
            "cube {:?} has no points",
            cube.anchor
        )));
    }
    let sum: Vector3<f64> = cube.occupied.values().map(|p| p.normal).sum();
    let n2 = sum.norm_squared();
    if n2.sqrt() < 1e-9 {
        return Err(Error::Degenerate(format!(
            "normals of cube {:?} cancel out",
            cube.anchor
        )));
    }
    Ok(sum / n2)
}

/// Sum of `|<n_k, n_l>|` over ordered adjacent pairs of the cube's
/// unweighted `k`-NN graph, divided by `k (k - 1)`.
pub fn agtv(cube: &Cube, k: usize) -> Result<f64> {
    let m = cube.occupied_count();
    if k < 2 || m <= k {
        return Err(Error::InvalidArgument(format!(
            "AGTV needs 2 <= k < m, got k = {k} with m = {m}"
        )));
    }
    let graph = KnnGraph::build(&cube.positions(), k, EdgeWeighting::Unweighted)?;
    let normals = cube.normals();
    let total: f64 = graph
        .edges()
        .iter()
        .map(|&(i, j, w)| 2.0 * normals[i].dot(&normals[j]).abs() * w)
        .sum();
    Ok(total / (k * (k - 1)) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubeDescriptor {
    pub dc: Vector3<f64>,
    pub agtv: f64,
}

pub fn describe(cube: &Cube, k_policy: KPolicy) -> Result<CubeDescriptor> {
    Ok(CubeDescriptor {
        dc: direct_component(cube)?,
        agtv: agtv(cube, k_policy.resolve(cube.occupied_count()))?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityScore {
    pub delta_d: f64,
    pub delta_v: f64,
    pub delta: f64,
}

pub fn score(target: &CubeDescriptor, candidate: &CubeDescriptor, mode: DcMode) -> SimilarityScore {
    let delta_d = match mode {
        DcMode::Literal => target.dc.dot(&candidate.dc).abs(),
        DcMode::Complement => {
            let cos = target.dc.normalize().dot(&candidate.dc.normalize()).abs();
            (1.0 - cos).max(0.0)
        }
    };
    let delta_v = (target.agtv - candidate.agtv).abs();
    SimilarityScore {
        delta_d,
        delta_v,
        delta: (-(delta_d + delta_v)).exp(),
    }
}

pub fn similarity(
    target: &Cube,
    candidate: &Cube,
    k_policy: KPolicy,
    mode: DcMode,
) -> Result<SimilarityScore> {
    Ok(score(
        &describe(target, k_policy)?,
        &describe(candidate, k_policy)?,
        mode,
    ))
}

/// Scores every candidate in parallel and returns `(index, score)` pairs,
/// best first. Degenerate candidates are dropped with a warning.
pub fn rank_candidates(
    target: &Cube,
    candidates: &[Cube],
    k_policy: KPolicy,
    mode: DcMode,
) -> Result<Vec<(usize, SimilarityScore)>> {
    let t = describe(target, k_policy)?;
    let scored: Vec<Option<SimilarityScore>> = candidates
        .par_iter()
        .map(|c| match describe(c, k_policy) {
            Ok(d) => Some(score(&t, &d, mode)),
            Err(e) => {
                warn!(
                    "skipping candidate {:?} (mirrored: {}): {e}",
                    c.anchor, c.mirrored
                );
                None
            }
        })
        .collect();
    let mut ranked: Vec<(usize, SimilarityScore)> = scored
        .into_iter()
        .enumerate()
        .filter_map(|(i, s)| s.map(|s| (i, s)))
        .collect();
    ranked.sort_by(|a, b| {
        b.1.delta.total_cmp(&a.1.delta).then_with(|| {
            candidates[a.0]
                .order_key()
                .cmp(&candidates[b.0].order_key())
        })
    });
    if ranked.is_empty() {
        return Err(Error::NoCandidate(format!(
            "all {} candidates for cube {:?} are degenerate",
            candidates.len(),
            target.anchor
        )));
    }
    Ok(ranked)
}

/// The most similar candidate.
pub fn best_source<'a>(
    target: &Cube,
    candidates: &'a [Cube],
    k_policy: KPolicy,
    mode: DcMode,
) -> Result<&'a Cube> {
    let ranked = rank_candidates(target, candidates, k_policy, mode)?;
    Ok(&candidates[ranked[0].0])
}
