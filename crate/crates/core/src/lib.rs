//! Point-cloud inpainting on voxelized surfaces.
//!
//! The chain is: [`voxel::prepare_grid`] snaps a cloud to unit cells,
//! [`holes::detect_holes`] finds missing regions by projection, and
//! [`inpaint::inpaint_all`] fills each one from the most similar cube
//! elsewhere in the cloud. [`metrics`] scores the result against ground
//! truth and [`graph`] holds the graph signal tools the fill relies on.

pub mod cloud;
pub mod config;
pub mod error;
pub mod graph;
pub mod holes;
pub mod inpaint;
pub mod metrics;
pub mod normals;
pub mod pipeline;
pub mod ply;
pub mod sparse;
pub mod spatial;
pub mod voxel;

pub use cloud::{BoundingBox, PointCloud};
pub use config::{DcMode, KPolicy, PipelineConfig, SmoothnessPrior};
pub use error::{Error, Result};
pub use holes::{detect_holes, Axis, HoleRegion};
pub use inpaint::{inpaint_all, inpaint_hole, HoleReport};
pub use metrics::{evaluate, MetricReport};
pub use pipeline::{run_pipeline, synth_hole, HoleShape, PipelineRun};
pub use ply::{load_ply, save_ply, PlyFormat};
pub use voxel::{prepare_grid, voxelize, Cell, NormalizationRecord, VoxelGrid};
