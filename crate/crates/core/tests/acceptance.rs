//! End-to-end acceptance checks. Runs without the libtest harness so every
//! criterion prints exactly one PASS/FAIL line; the process fails if any
//! criterion does.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{Matrix3, Point3, Rotation3, Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pcinpaint::graph::{
    gft, igft, laplacian, smoothness_energy, spectral_decompose, verify_nodal_bounds,
    EdgeWeighting, KnnGraph,
};
use pcinpaint::holes::{detect_holes, DetectOptions};
use pcinpaint::inpaint::{
    format_reports, rotation_quaternion, simplified_icp_rotation, Cube, CubePoint, InpaintProblem,
};
use pcinpaint::metrics::{evaluate, gpsnr, nshd, ohd};
use pcinpaint::ply::encode_ply;
use pcinpaint::voxel::{cell_of, voxelize_with_record};
use pcinpaint::{
    inpaint_all, run_pipeline, synth_hole, Axis, Cell, HoleRegion, HoleShape, NormalizationRecord,
    PipelineConfig, PlyFormat, PointCloud, SmoothnessPrior, VoxelGrid,
};

type Outcome = Result<String, String>;

fn check(cond: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what())
    }
}

fn within(elapsed: Duration, limit_s: u64) -> Result<(), String> {
    check(elapsed.as_secs_f64() < limit_s as f64, || {
        format!("took {:.1} s, limit {limit_s} s", elapsed.as_secs_f64())
    })
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn random_points(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<Point3<f64>> {
    (0..n)
        .map(|_| {
            Point3::new(
                rng.gen_range(0.0..scale),
                rng.gen_range(0.0..scale),
                rng.gen_range(0.0..scale),
            )
        })
        .collect()
}

fn spectral_identities() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst_energy: f64 = 0.0;
    let mut worst_roundtrip: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.gen_range(3..=100);
        let k = rng.gen_range(1..=8.min(n - 1));
        let weighting = if rng.gen_bool(0.5) {
            EdgeWeighting::Unweighted
        } else {
            EdgeWeighting::Gaussian {
                sigma: rng.gen_range(0.5..5.0),
            }
        };
        let graph = KnnGraph::build(&random_points(&mut rng, n, 10.0), k, weighting)
            .map_err(|e| e.to_string())?;
        let l = laplacian(&graph);
        let decomp = spectral_decompose(&l).map_err(|e| e.to_string())?;
        let z: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let eta = gft(&decomp, &z).map_err(|e| e.to_string())?;
        let direct = smoothness_energy(&l, &z).map_err(|e| e.to_string())?;
        let spectral: f64 = eta
            .iter()
            .zip(decomp.eigenvalues.iter())
            .map(|(e, l)| l * e * e)
            .sum();
        let rel = (direct - spectral).abs() / direct.abs().max(1e-300);
        worst_energy = worst_energy.max(rel);
        let back = igft(&decomp, &eta).map_err(|e| e.to_string())?;
        let err = back
            .iter()
            .zip(&z)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        worst_roundtrip = worst_roundtrip.max(err);
    }
    check(worst_energy <= 1e-6, || {
        format!("energy identity off by {worst_energy:.3e} relative")
    })?;
    check(worst_roundtrip <= 1e-8, || {
        format!("GFT round trip off by {worst_roundtrip:.3e}")
    })?;
    within(start.elapsed(), 30)?;
    Ok(format!(
        "200 graphs, energy rel err {worst_energy:.2e}, round trip {worst_roundtrip:.2e}, {:.1} s",
        start.elapsed().as_secs_f64()
    ))
}

fn random_connected(rng: &mut ChaCha8Rng, n: usize) -> KnnGraph {
    let mut edges = BTreeSet::new();
    for v in 1..n {
        let u = rng.gen_range(0..v);
        edges.insert((u, v));
    }
    let extra = rng.gen_range(0..=2 * n);
    for _ in 0..extra {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a != b {
            edges.insert((a.min(b), a.max(b)));
        }
    }
    let weighted = rng.gen_bool(0.5);
    let list: Vec<(usize, usize, f64)> = edges
        .into_iter()
        .map(|(a, b)| {
            (
                a,
                b,
                if weighted {
                    rng.gen_range(0.5..2.0)
                } else {
                    1.0
                },
            )
        })
        .collect();
    KnnGraph::from_edges(n, list).expect("valid edges")
}

fn nodal_domains() -> Outcome {
    let start = Instant::now();
    let mut graphs = Vec::new();
    for n in 2..=30 {
        graphs.push(KnnGraph::from_edges(n, (1..n).map(|i| (i - 1, i, 1.0))).unwrap());
        if n >= 3 {
            graphs.push(KnnGraph::from_edges(n, (0..n).map(|i| (i, (i + 1) % n, 1.0))).unwrap());
        }
        if n <= 20 {
            let complete = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j, 1.0)));
            graphs.push(KnnGraph::from_edges(n, complete).unwrap());
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for _ in 0..100 {
        let n = rng.gen_range(2..=60);
        graphs.push(random_connected(&mut rng, n));
    }
    let mut vectors = 0;
    let mut violations = Vec::new();
    for (gi, g) in graphs.iter().enumerate() {
        let decomp = spectral_decompose(&laplacian(g)).map_err(|e| e.to_string())?;
        let report = verify_nodal_bounds(&decomp, g);
        vectors += report.entries.len();
        for v in report.violations() {
            violations.push(format!("graph {gi} vector {}: {v:?}", v.position));
        }
    }
    check(violations.is_empty(), || {
        format!("{} violations, first: {}", violations.len(), violations[0])
    })?;
    within(start.elapsed(), 60)?;
    Ok(format!(
        "{} graphs, {vectors} eigenvectors, 0 violations, {:.1} s",
        graphs.len(),
        start.elapsed().as_secs_f64()
    ))
}

fn solver_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst_grad: f64 = 0.0;
    for trial in 0..50 {
        let n = rng.gen_range(20..=500);
        let source = random_points(&mut rng, n, 20.0);
        let known_frac = rng.gen_range(0.3..0.9);
        let known: Vec<Option<Point3<f64>>> = source
            .iter()
            .map(|p| {
                rng.gen_bool(known_frac).then(|| {
                    p + Vector3::new(
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                    )
                })
            })
            .collect();
        let cells = source.iter().map(cell_of).collect();
        let alpha = rng.gen_range(0.01..1.0);
        let beta = rng.gen_range(0.1..20.0);
        let k = rng.gen_range(2..=10);
        let prior = if trial % 2 == 0 {
            SmoothnessPrior::Offset
        } else {
            SmoothnessPrior::Literal
        };
        let problem = InpaintProblem::new(cells, source, known, alpha, beta, k)
            .map_err(|e| e.to_string())?
            .with_prior(prior);
        let solution = problem.solve().map_err(|e| e.to_string())?;
        let c = &solution.positions;
        let g = problem.gradient(c);
        for ch in 0..3 {
            let gn = g.iter().map(|v| v[ch] * v[ch]).sum::<f64>().sqrt();
            let cn = c.iter().map(|v| v[ch] * v[ch]).sum::<f64>().sqrt();
            let ratio = gn / (1.0 + cn);
            worst_grad = worst_grad.max(ratio);
            check(ratio <= 1e-6, || {
                format!("trial {trial} channel {ch}: gradient {gn:.3e}")
            })?;
        }
        let f = problem.objective(c);
        for _ in 0..1000 {
            let moved: Vec<Point3<f64>> = c
                .iter()
                .map(|p| {
                    p + Vector3::new(
                        rng.gen_range(-1e-3..1e-3),
                        rng.gen_range(-1e-3..1e-3),
                        rng.gen_range(-1e-3..1e-3),
                    )
                })
                .collect();
            let fm = problem.objective(&moved);
            check(fm >= f, || {
                format!("trial {trial}: perturbed objective {fm} below {f}")
            })?;
        }
    }
    within(start.elapsed(), 60)?;
    Ok(format!(
        "50 problems, worst gradient ratio {worst_grad:.2e}, {:.1} s",
        start.elapsed().as_secs_f64()
    ))
}

fn lattice_cloud(grid: &VoxelGrid) -> PointCloud {
    grid.to_cloud(false)
}

fn flat_plane(n: i64) -> VoxelGrid {
    let mut g = VoxelGrid::new(NormalizationRecord::identity());
    for x in 0..n {
        for y in 0..n {
            g.insert([x, y, 0], Vector3::z());
        }
    }
    g
}

fn planar_exactness() -> Outcome {
    let plane = flat_plane(60);
    let config = PipelineConfig::default();
    let mut worst: f64 = 0.0;
    let mut total_filled = 0;
    for (cx, cy, r) in [(30.5, 30.5, 5.0), (17.2, 40.7, 3.5), (44.0, 21.0, 4.2)] {
        let hole = synth_hole(
            &plane,
            HoleShape::Sphere {
                center: Point3::new(cx, cy, 0.5),
                radius: r,
            },
        )
        .map_err(|e| e.to_string())?;
        let run =
            run_pipeline(&lattice_cloud(&hole.punched), &config).map_err(|e| e.to_string())?;
        check(run.holes.len() == 1, || {
            format!("hole at ({cx},{cy}): {} holes detected", run.holes.len())
        })?;
        for report in &run.reports {
            check(report.rotation_error <= 1e-9, || {
                format!("rotation invariant error {}", report.rotation_error)
            })?;
        }
        let filled: Vec<_> = run
            .inpainted
            .iter()
            .filter(|(c, _)| !hole.punched.contains(c))
            .collect();
        total_filled += filled.len();
        for (_, v) in &filled {
            worst = worst.max((v.center.z - 0.5).abs());
        }
        check(worst <= 1e-3, || {
            format!("filled point {worst} off the plane")
        })?;
        let after =
            detect_holes(&run.inpainted, &DetectOptions::default()).map_err(|e| e.to_string())?;
        check(after.is_empty(), || {
            format!(
                "hole at ({cx},{cy}): {} holes after fill, {} of {} cells filled",
                after.len(),
                filled.len(),
                hole.truth.len()
            )
        })?;
    }
    Ok(format!(
        "3 holes, {total_filled} cells filled, max off-plane {worst:.1e}, 0 holes after"
    ))
}

fn fibonacci_sphere(center: Point3<f64>, radius: f64, count: usize) -> PointCloud {
    let golden = PI * (3.0 - 5f64.sqrt());
    let mut positions = Vec::with_capacity(count);
    let mut normals = Vec::with_capacity(count);
    for i in 0..count {
        let y = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
        let rad = (1.0 - y * y).sqrt();
        let theta = golden * i as f64;
        let n = Vector3::new(rad * theta.cos(), y, rad * theta.sin());
        positions.push(center + radius * n);
        normals.push(n);
    }
    PointCloud::with_normals(positions, normals).expect("unit normals")
}

fn sphere_grid() -> VoxelGrid {
    let cloud = fibonacci_sphere(Point3::new(50.0, 50.0, 50.0), 40.0, 200_000);
    voxelize_with_record(&cloud, 1.0, NormalizationRecord::identity()).expect("voxelizes")
}

fn self_similar_recovery() -> Outcome {
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| e.to_string())?;
    pool.install(|| {
        let truth = sphere_grid();
        let shape = HoleShape::Sphere {
            center: Point3::new(50.0, 50.0, 90.0),
            radius: 5.5,
        };
        let hole = synth_hole(&truth, shape).map_err(|e| e.to_string())?;
        let removed = hole.removed_cells();
        check(removed.len() <= 100, || {
            format!("cap removes {} cells", removed.len())
        })?;
        let region =
            HoleRegion::from_cells(1, Axis::PosZ, removed.clone()).map_err(|e| e.to_string())?;
        let mut filled = hole.punched.clone();
        let config = PipelineConfig::default();
        let reports = inpaint_all(&mut filled, &[region], &config).map_err(|e| e.to_string())?;
        for r in &reports {
            check(r.rotation_error <= 1e-9, || {
                format!("rotation invariant error {}", r.rotation_error)
            })?;
        }
        let truth_cloud = truth.to_cloud(false);
        let before =
            evaluate(&truth_cloud, &hole.punched.to_cloud(false)).map_err(|e| e.to_string())?;
        let after = evaluate(&truth_cloud, &filled.to_cloud(false)).map_err(|e| e.to_string())?;
        let summary = format!(
            "{} of {} cells filled; NSHD {:.3e} -> {:.3e}; GPSNR {:.2} -> {:.2} dB; {:.1} s",
            reports[0].filled_cells,
            removed.len(),
            before.nshd,
            after.nshd,
            before.gpsnr_db,
            after.gpsnr_db,
            start.elapsed().as_secs_f64()
        );
        check(after.nshd <= 0.25 * before.nshd, || {
            format!("NSHD not reduced enough: {summary}")
        })?;
        check(after.gpsnr_db >= before.gpsnr_db + 6.0, || {
            format!("GPSNR gain too small: {summary}")
        })?;
        within(start.elapsed(), 300)?;
        Ok(summary)
    })
}

fn random_rotation(rng: &mut ChaCha8Rng, max_angle: f64) -> Matrix3<f64> {
    let axis = loop {
        let v = Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            break Unit::new_normalize(v);
        }
    };
    Rotation3::from_axis_angle(&axis, rng.gen_range(0.0..=max_angle)).into_inner()
}

fn cube_of(points: &[Point3<f64>]) -> Cube {
    let mut cube = Cube::new([0, 0, 0], 20);
    for p in points {
        cube.occupied.insert(
            cell_of(p),
            CubePoint {
                position: *p,
                normal: Vector3::z(),
            },
        );
    }
    cube
}

fn registration_recovery() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut worst: f64 = 0.0;
    let mut worst_icp: f64 = 0.0;
    for trial in 0..100 {
        let q = random_rotation(&mut rng, PI / 4.0);
        // direct: the quaternion fit on exact correspondences v = Q u
        let u = random_points(&mut rng, 3, 10.0);
        let v: Vec<Point3<f64>> = u.iter().map(|p| Point3::from(q * p.coords)).collect();
        let e = rotation_quaternion(&u, &v).map_err(|e| e.to_string())?;
        let r = pcinpaint::inpaint::quaternion_to_rotation(&e);
        worst = worst.max((r - q).norm());
        // through the cube interface: three well-separated points whose
        // nearest neighbors are their true partners
        let (src, dst) = loop {
            let center = Point3::new(10.0, 10.0, 10.0);
            let u: Vec<Point3<f64>> = (0..3)
                .map(|_| {
                    center
                        + Vector3::new(
                            rng.gen_range(-8.0..8.0),
                            rng.gen_range(-8.0..8.0),
                            rng.gen_range(-8.0..8.0),
                        )
                })
                .collect();
            let v: Vec<Point3<f64>> = u.iter().map(|p| center + q * (p - center)).collect();
            let distinct = |pts: &[Point3<f64>]| {
                pts.iter().map(cell_of).collect::<BTreeSet<Cell>>().len() == 3
            };
            let matched = v
                .iter()
                .enumerate()
                .all(|(i, t)| (0..3).all(|j| j == i || (t - u[i]).norm() < (t - u[j]).norm()));
            let area = (u[1] - u[0]).cross(&(u[2] - u[0])).norm();
            if distinct(&u) && distinct(&v) && matched && area > 1.0 {
                break (cube_of(&u), cube_of(&v));
            }
        };
        let t = simplified_icp_rotation(&dst, &src, Vector3::zeros(), trial)
            .map_err(|e| e.to_string())?;
        worst_icp = worst_icp.max((t.rotation - q).norm());
        check(t.orthogonality_error() <= 1e-9, || {
            format!("trial {trial}: R not a rotation")
        })?;
    }
    check(worst <= 1e-6, || {
        format!("quaternion fit off by {worst:.3e}")
    })?;
    check(worst_icp <= 1e-6, || {
        format!("simplified ICP off by {worst_icp:.3e}")
    })?;
    Ok(format!(
        "100 rotations, max |R-Q|_F {:.2e} (fit), {worst_icp:.2e} (icp)",
        worst
    ))
}

/// Height field with gentle slopes, one cell per column.
fn curved_grid(n: i64) -> VoxelGrid {
    let mut g = VoxelGrid::new(NormalizationRecord::identity());
    let h = |x: f64, y: f64| 10.0 + 3.0 * (x / 9.0).sin() + 2.0 * (y / 7.0).cos();
    for x in 0..n {
        for y in 0..n {
            let (fx, fy) = (x as f64 + 0.5, y as f64 + 0.5);
            let z = h(fx, fy).floor() as i64;
            let dx = (h(fx + 1e-4, fy) - h(fx - 1e-4, fy)) / 2e-4;
            let dy = (h(fx, fy + 1e-4) - h(fx, fy - 1e-4)) / 2e-4;
            g.insert([x, y, z], Vector3::new(-dx, -dy, 1.0).normalize());
        }
    }
    g
}

fn punch_disk(grid: &VoxelGrid, cx: f64, cy: f64, r: f64) -> (VoxelGrid, BTreeSet<[i64; 2]>) {
    let mut punched = grid.clone();
    let mut pixels = BTreeSet::new();
    for c in grid.cells() {
        let (dx, dy) = (c[0] as f64 + 0.5 - cx, c[1] as f64 + 0.5 - cy);
        if dx * dx + dy * dy < r * r {
            punched.remove(c);
            pixels.insert([c[0], c[1]]);
        }
    }
    (punched, pixels)
}

fn detection_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let n = 40;
    let surfaces = [flat_plane(n), curved_grid(n)];
    let options = DetectOptions::default();
    let mut exact = 0;
    let mut trial = 0;
    while exact < 50 {
        trial += 1;
        let surface = &surfaces[trial % 2];
        let r = rng.gen_range(1.2..5.0);
        let cx = rng.gen_range(r + 2.0..n as f64 - r - 2.0);
        let cy = rng.gen_range(r + 2.0..n as f64 - r - 2.0);
        let (punched, pixels) = punch_disk(surface, cx, cy, r);
        if pixels.len() < 4 {
            continue;
        }
        let holes = detect_holes(&punched, &options).map_err(|e| e.to_string())?;
        check(holes.len() == 1, || {
            format!("trial {trial}: {} holes for one punch", holes.len())
        })?;
        let hole = &holes[0];
        check(hole.axis.plane() == (0, 1), || {
            format!("trial {trial}: projected along {}", hole.axis)
        })?;
        check(hole.pixels == pixels, || {
            format!(
                "trial {trial}: detected {} pixels, punched {}",
                hole.pixels.len(),
                pixels.len()
            )
        })?;
        exact += 1;
    }
    // small punches: at most three pixels
    let mut small = 0;
    for surface in &surfaces {
        for _ in 0..25 {
            let mut punched = surface.clone();
            let x = rng.gen_range(5..n - 5);
            let y = rng.gen_range(5..n - 5);
            let shapes: [&[[i64; 2]]; 4] = [
                &[[0, 0]],
                &[[0, 0], [1, 0]],
                &[[0, 0], [1, 1]],
                &[[0, 0], [1, 0], [0, 1]],
            ];
            for [dx, dy] in shapes[rng.gen_range(0..4)] {
                let cell = *surface
                    .cells()
                    .find(|c| c[0] == x + dx && c[1] == y + dy)
                    .unwrap();
                punched.remove(&cell);
            }
            let holes = detect_holes(&punched, &options).map_err(|e| e.to_string())?;
            check(holes.is_empty(), || {
                format!("sub-threshold punch reported {} holes", holes.len())
            })?;
            small += 1;
        }
    }
    // punches touching the border
    let mut border = 0;
    for surface in &surfaces {
        for side in 0..4 {
            let along = rng.gen_range(10.0..30.0);
            let (cx, cy) = match side {
                0 => (0.5, along),
                1 => (n as f64 - 0.5, along),
                2 => (along, 0.5),
                _ => (along, n as f64 - 0.5),
            };
            let (punched, _) = punch_disk(surface, cx, cy, 4.0);
            let holes = detect_holes(&punched, &options).map_err(|e| e.to_string())?;
            check(holes.is_empty(), || {
                format!("border punch on side {side} reported {} holes", holes.len())
            })?;
            border += 1;
        }
    }
    Ok(format!(
        "{exact} exact matches, {small} sub-threshold and {border} border punches ignored"
    ))
}

fn brute_nn(p: &Point3<f64>, cloud: &[Point3<f64>], skip: Option<usize>) -> (usize, f64) {
    let mut best = (usize::MAX, f64::INFINITY);
    for (j, q) in cloud.iter().enumerate() {
        if Some(j) == skip {
            continue;
        }
        let d = (p - q).norm();
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn brute_directed(a: &PointCloud, b: &PointCloud) -> f64 {
    let nb = b.normals.as_ref().unwrap();
    a.positions
        .iter()
        .map(|p| {
            let (j, _) = brute_nn(p, &b.positions, None);
            let d = (p - b.positions[j]).dot(&nb[j]);
            d * d
        })
        .sum::<f64>()
        / a.len() as f64
}

fn brute_ohd(a: &PointCloud, b: &PointCloud) -> f64 {
    a.positions
        .iter()
        .map(|p| brute_nn(p, &b.positions, None).1)
        .fold(0.0, f64::max)
}

fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> PointCloud {
    let scale = rng.gen_range(1.0..50.0);
    let positions = random_points(rng, n, scale);
    let normals = (0..n)
        .map(|_| {
            Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            )
            .try_normalize(1e-6)
            .unwrap_or(Vector3::x())
        })
        .collect();
    PointCloud::with_normals(positions, normals).unwrap()
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let tol = 1e-9;
    for trial in 0..40 {
        let (na, nb) = (rng.gen_range(2..=300), rng.gen_range(2..=300));
        let a = random_cloud(&mut rng, na);
        let b = random_cloud(&mut rng, nb);
        let fwd = brute_ohd(&a, &b);
        let bwd = brute_ohd(&b, &a);
        let all: Vec<Point3<f64>> = a.positions.iter().chain(&b.positions).copied().collect();
        let lo = all
            .iter()
            .fold(Vector3::repeat(f64::INFINITY), |m, p| m.inf(&p.coords));
        let hi = all
            .iter()
            .fold(Vector3::repeat(f64::NEG_INFINITY), |m, p| m.sup(&p.coords));
        let ext = hi - lo;
        let v = ext.x * ext.y * ext.z;
        let p = (0..a.len())
            .map(|i| brute_nn(&a.positions[i], &a.positions, Some(i)).1)
            .fold(0.0, f64::max);
        let e = brute_directed(&a, &b).max(brute_directed(&b, &a));
        let g = 10.0 * (p * p / e).log10();
        let got_ohd = ohd(&a, &b).map_err(|e| e.to_string())?;
        let got_ohd_b = ohd(&b, &a).map_err(|e| e.to_string())?;
        let got_nshd = nshd(&a, &b).map_err(|e| e.to_string())?;
        let got_gpsnr = gpsnr(&a, &b).map_err(|e| e.to_string())?;
        check(
            rel_close(got_ohd, fwd, tol) && rel_close(got_ohd_b, bwd, tol),
            || format!("trial {trial}: ohd {got_ohd}/{got_ohd_b} vs {fwd}/{bwd}"),
        )?;
        check(rel_close(got_nshd, fwd.max(bwd) / v, tol), || {
            format!("trial {trial}: nshd {got_nshd} vs {}", fwd.max(bwd) / v)
        })?;
        check(rel_close(got_gpsnr, g, tol), || {
            format!("trial {trial}: gpsnr {got_gpsnr} vs {g}")
        })?;
    }
    Ok("40 random cloud pairs agree with double-loop oracles".into())
}

fn pipeline_bytes(
    cloud: &PointCloud,
    config: &PipelineConfig,
) -> Result<(Vec<u8>, String), String> {
    let run = run_pipeline(cloud, config).map_err(|e| e.to_string())?;
    let ply = encode_ply(&run.inpainted.to_cloud(true), PlyFormat::BinaryLittleEndian)
        .map_err(|e| e.to_string())?;
    Ok((ply, format_reports(&run.reports)))
}

fn determinism() -> Outcome {
    let plane = flat_plane(50);
    let hole = synth_hole(
        &plane,
        HoleShape::Box {
            center: Point3::new(20.0, 26.0, 0.5),
            half_extents: Vector3::new(4.0, 3.0, 1.0),
        },
    )
    .map_err(|e| e.to_string())?;
    let cloud = lattice_cloud(&hole.punched);
    let config = PipelineConfig {
        seed: 1234,
        ..PipelineConfig::default()
    };
    let first = pipeline_bytes(&cloud, &config)?;
    let second = pipeline_bytes(&cloud, &config)?;
    check(first.0 == second.0, || "output PLY bytes differ".into())?;
    check(first.1 == second.1, || {
        format!("reports differ:\n{}\n{}", first.1, second.1)
    })?;
    check(!first.1.is_empty(), || "no reports produced".into())?;
    Ok(format!(
        "{} PLY bytes and {} report bytes identical",
        first.0.len(),
        first.1.len()
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("spectral identities", spectral_identities),
        ("nodal domain bounds", nodal_domains),
        ("solver oracle", solver_oracle),
        ("planar exactness", planar_exactness),
        ("self-similar surface recovery", self_similar_recovery),
        ("registration recovery", registration_recovery),
        ("detection exactness", detection_exactness),
        ("metric oracles", metric_oracles),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("criterion {} ({name}): PASS - {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} ({name}): FAIL - {detail}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} of {} criteria failed", criteria.len());
        ExitCode::FAILURE
    }
}
