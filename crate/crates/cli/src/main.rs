mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::warn;
use serde_json::{json, Value};

use pcinpaint::holes::{format_manifest, parse_manifest};
use pcinpaint::pipeline::detect_options;
use pcinpaint::ply::{encode_ply, parse_ply};
use pcinpaint::{
    detect_holes, evaluate, inpaint_hole, load_ply, prepare_grid, synth_hole, Error, HoleRegion,
    HoleReport, HoleShape, MetricReport, NormalizationRecord, PipelineConfig, PlyFormat, VoxelGrid,
};

use output::Outputs;

#[derive(Parser)]
#[command(
    name = "pcinpaint",
    version,
    about = "Fill holes in voxelized point clouds"
)]
struct Cli {
    #[command(flatten)]
    shared: Shared,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Shared {
    /// Plain-text `key = value` config file
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set alpha=0.2`
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Seed for the registration control draws
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads, 0 picks one per core
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Print summaries as JSON
    #[arg(long, global = true)]
    json: bool,
    /// Write ASCII PLY instead of binary
    #[arg(long, global = true)]
    ascii: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Snap a cloud to unit cells and write the normalization sidecar
    Voxelize {
        input: PathBuf,
        output: PathBuf,
        sidecar: PathBuf,
    },
    /// Find holes in a voxelized cloud and write a manifest
    Detect { input: PathBuf, manifest: PathBuf },
    /// Punch a sphere or box out of a voxelized cloud
    SynthHole {
        input: PathBuf,
        /// `sphere:cx,cy,cz:r` or `box:cx,cy,cz:hx,hy,hz`, in cell units
        shape: String,
        output: PathBuf,
        truth: PathBuf,
    },
    /// Fill the holes listed in a manifest
    Inpaint {
        input: PathBuf,
        manifest: PathBuf,
        output: PathBuf,
        report: PathBuf,
        /// Write the output in the original coordinates of this sidecar
        #[arg(long, value_name = "SIDECAR")]
        restore: Option<PathBuf>,
    },
    /// Compare a test cloud against a reference
    Evaluate { reference: PathBuf, test: PathBuf },
    /// Voxelize, detect and inpaint in one go
    Pipeline {
        input: PathBuf,
        /// Directory for voxelized.ply, voxelized.norm, holes.txt,
        /// inpainted.ply and report.txt
        out_dir: PathBuf,
    },
}

/// An error with the stage it came from.
struct Failure {
    stage: Option<&'static str>,
    error: Error,
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        Failure { stage: None, error }
    }
}

trait AtStage<T> {
    fn at(self, stage: &'static str) -> Result<T, Failure>;
}

impl<T> AtStage<T> for Result<T, Error> {
    fn at(self, stage: &'static str) -> Result<T, Failure> {
        self.map_err(|error| Failure {
            stage: Some(stage),
            error,
        })
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. }
        | Error::PlyHeader { .. }
        | Error::PlyTruncated { .. }
        | Error::PlyBody(_)
        | Error::InvalidArgument(_)
        | Error::Degenerate(_)
        | Error::Precondition(_) => 2,
        Error::Config(_) | Error::Capacity(_) => 3,
        Error::NoCandidate(_)
        | Error::Registration(_)
        | Error::Numerical(_)
        | Error::Internal(_) => 4,
    }
}

fn load_config(shared: &Shared) -> Result<PipelineConfig, Error> {
    let mut config = match &shared.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            let mut c = PipelineConfig::default();
            c.apply_text(&text)?;
            c
        }
        None => PipelineConfig::default(),
    };
    for o in &shared.overrides {
        let (key, value) = o
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {o:?}")))?;
        config.set(key, value)?;
    }
    if let Some(seed) = shared.seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

struct Ctx {
    config: PipelineConfig,
    format: PlyFormat,
    json: bool,
}

impl Ctx {
    fn encode(&self, grid: &VoxelGrid, denormalize: bool) -> Result<Vec<u8>, Error> {
        encode_ply(&grid.to_cloud(denormalize), self.format)
    }
}

fn read(path: &Path) -> Result<Vec<u8>, Error> {
    std::fs::read(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// A voxelized PLY back as a grid. Lattice input keeps its cells as they are.
fn grid_from_ply(bytes: &[u8], config: &PipelineConfig) -> Result<VoxelGrid, Error> {
    prepare_grid(
        &parse_ply(bytes)?,
        config.normalize_k,
        config.normal_k,
        config.sigma,
    )
}

fn print(ctx: &Ctx, text: impl AsRef<str>, value: Value) {
    if ctx.json {
        println!("{value}");
    } else {
        println!("{}", text.as_ref());
    }
}

fn report_json(r: &HoleReport) -> Value {
    json!({
        "hole_id": r.hole_id,
        "source_anchor": r.source.map(|(a, _)| a),
        "mirrored": r.source.map(|(_, m)| m),
        "delta": r.delta,
        "residual": r.residual,
        "filled_cells": r.filled_cells,
        "targets": r.targets,
        "rotation_error": r.rotation_error,
        "failure": r.failure,
    })
}

fn metrics_json(m: &MetricReport) -> Value {
    let finite = |v: f64| {
        if v.is_finite() {
            json!(v)
        } else {
            json!(v.to_string())
        }
    };
    json!({
        "gpsnr_db": finite(m.gpsnr_db),
        "nshd": m.nshd,
        "ohd_fwd": m.ohd_fwd,
        "ohd_bwd": m.ohd_bwd,
        "p": m.p,
        "V": m.volume,
    })
}

/// Voxelized PLY and sidecar text.
fn voxelize_stage(ctx: &Ctx, input: &[u8]) -> Result<(Vec<u8>, String, usize, usize), Error> {
    let cloud = parse_ply(input)?;
    let grid = prepare_grid(
        &cloud,
        ctx.config.normalize_k,
        ctx.config.normal_k,
        ctx.config.sigma,
    )?;
    Ok((
        ctx.encode(&grid, false)?,
        grid.record.to_sidecar(),
        cloud.len(),
        grid.len(),
    ))
}

fn detect_stage(ctx: &Ctx, voxelized: &[u8]) -> Result<Vec<HoleRegion>, Error> {
    let grid = grid_from_ply(voxelized, &ctx.config)?;
    detect_holes(&grid, &detect_options(&ctx.config))
}

struct Inpainted {
    grid: VoxelGrid,
    reports: Vec<HoleReport>,
    error: Option<Error>,
}

/// Fills holes in manifest order. A hard error stops the loop and keeps
/// what was filled so far.
fn inpaint_stage(ctx: &Ctx, voxelized: &[u8], holes: &[HoleRegion]) -> Result<Inpainted, Error> {
    let mut grid = grid_from_ply(voxelized, &ctx.config)?;
    let mut order: Vec<&HoleRegion> = holes.iter().collect();
    order.sort_by_key(|h| h.id);
    let mut reports = Vec::new();
    for hole in order {
        match inpaint_hole(&mut grid, hole, &ctx.config) {
            Ok(r) => {
                if let Some(f) = &r.failure {
                    warn!("hole {} not fully filled: {f}", r.hole_id);
                }
                reports.push(r);
            }
            Err(error) => {
                return Ok(Inpainted {
                    grid,
                    reports,
                    error: Some(error),
                })
            }
        }
    }
    Ok(Inpainted {
        grid,
        reports,
        error: None,
    })
}

fn report_text(reports: &[HoleReport]) -> String {
    reports.iter().map(|r| format!("{r}\n")).collect()
}

fn run(cli: Cli) -> Result<(), Failure> {
    let ctx = Ctx {
        config: load_config(&cli.shared).at("config")?,
        format: if cli.shared.ascii {
            PlyFormat::Ascii
        } else {
            PlyFormat::BinaryLittleEndian
        },
        json: cli.shared.json,
    };
    let mut out = Outputs::default();
    match cli.command {
        Command::Voxelize {
            input,
            output,
            sidecar,
        } => {
            let (ply, side, points, cells) = voxelize_stage(&ctx, &read(&input)?)?;
            out.write(&output, &ply)?;
            out.write(&sidecar, side.as_bytes())?;
            out.commit()?;
            print(
                &ctx,
                format!("{points} points voxelized into {cells} cells"),
                json!({ "points": points, "cells": cells }),
            );
        }
        Command::Detect { input, manifest } => {
            let holes = detect_stage(&ctx, &read(&input)?)?;
            out.write(&manifest, format_manifest(&holes).as_bytes())?;
            out.commit()?;
            print(
                &ctx,
                holes_detected(&holes),
                json!({ "holes": holes.len() }),
            );
        }
        Command::SynthHole {
            input,
            shape,
            output,
            truth,
        } => {
            let shape: HoleShape = shape.parse()?;
            let grid = grid_from_ply(&read(&input)?, &ctx.config)?;
            let hole = synth_hole(&grid, shape)?;
            out.write(&output, &ctx.encode(&hole.punched, false)?)?;
            out.write(&truth, &ctx.encode(&hole.truth, false)?)?;
            out.commit()?;
            let n = hole.truth.len();
            print(&ctx, format!("{n} cells removed"), json!({ "removed": n }));
        }
        Command::Inpaint {
            input,
            manifest,
            output,
            report,
            restore,
        } => {
            let record = restore.map(NormalizationRecord::read_sidecar).transpose()?;
            let holes = parse_manifest(&String::from_utf8_lossy(&read(&manifest)?))?;
            let mut done = inpaint_stage(&ctx, &read(&input)?, &holes)?;
            if let Some(record) = record {
                done.grid.record = record;
            }
            out.write(&output, &ctx.encode(&done.grid, record.is_some())?)?;
            out.write(&report, report_text(&done.reports).as_bytes())?;
            if let Some(error) = done.error {
                return Err(error.into());
            }
            out.commit()?;
            print_fill(&ctx, &done.reports);
        }
        Command::Evaluate { reference, test } => {
            let reference = load_ply(reference)?;
            let test = load_ply(test)?;
            let m = evaluate(&reference, &test)?;
            print(&ctx, m.to_string(), metrics_json(&m));
        }
        Command::Pipeline { input, out_dir } => {
            std::fs::create_dir_all(&out_dir).map_err(|e| Error::Io {
                path: out_dir.clone(),
                source: e,
            })?;
            let (voxelized, side, _, _) = voxelize_stage(&ctx, &read(&input)?).at("voxelize")?;
            out.write(&out_dir.join("voxelized.ply"), &voxelized)?;
            out.write(&out_dir.join("voxelized.norm"), side.as_bytes())?;
            let holes = detect_stage(&ctx, &voxelized).at("detect")?;
            let manifest = format_manifest(&holes);
            out.write(&out_dir.join("holes.txt"), manifest.as_bytes())?;
            if !ctx.json {
                println!("{}", holes_detected(&holes));
            }
            // the inpainter reads the manifest as written, like `inpaint` does
            let holes = parse_manifest(&manifest).at("detect")?;
            let done = inpaint_stage(&ctx, &voxelized, &holes).at("inpaint")?;
            out.write(
                &out_dir.join("inpainted.ply"),
                &ctx.encode(&done.grid, false)?,
            )?;
            out.write(
                &out_dir.join("report.txt"),
                report_text(&done.reports).as_bytes(),
            )?;
            if let Some(error) = done.error {
                return Err(Failure {
                    stage: Some("inpaint"),
                    error,
                });
            }
            out.commit()?;
            if ctx.json {
                println!(
                    "{}",
                    json!({
                        "holes": holes.len(),
                        "filled_cells": done.reports.iter().map(|r| r.filled_cells).sum::<usize>(),
                        "reports": done.reports.iter().map(report_json).collect::<Vec<_>>(),
                    })
                );
            } else {
                print_fill(&ctx, &done.reports);
            }
        }
    }
    Ok(())
}

fn holes(n: usize) -> String {
    match n {
        1 => "1 hole".into(),
        n => format!("{n} holes"),
    }
}

fn holes_detected(found: &[HoleRegion]) -> String {
    format!("{} detected", holes(found.len()))
}

fn print_fill(ctx: &Ctx, reports: &[HoleReport]) {
    let filled: usize = reports.iter().map(|r| r.filled_cells).sum();
    print(
        ctx,
        format!("{filled} cells filled in {}", holes(reports.len())),
        json!(reports.iter().map(report_json).collect::<Vec<_>>()),
    );
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.shared.threads)
        .build_global()
    {
        eprintln!(
            "error: cannot start {} worker threads: {e}",
            cli.shared.threads
        );
        return ExitCode::from(3);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { stage, error }) => {
            match stage {
                Some(stage) => eprintln!("error: stage `{stage}` failed: {error}"),
                None => eprintln!("error: {error}"),
            }
            ExitCode::from(exit_code(&error))
        }
    }
}
