//! Rigid alignment of a source cube to a target cube: boundary translation
//! followed by a quaternion rotation from three control pairs.

use std::collections::BTreeMap;

use log::warn;
use nalgebra::{Matrix3, Matrix4, Point3, SymmetricEigen, Vector3, Vector4};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::cube::{Cube, CubePoint};
use crate::error::{Error, Result};
use crate::spatial::SpatialIndex;
use crate::voxel::{blend_normals, cell_center, cell_of, Cell};

/// Translation, unit quaternion `(e0, e1, e2, e3)` and the rotation it
/// encodes. Registered points are `R (p + t - c) + c` for cube center `c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegistrationTransform {
    pub translation: Vector3<f64>,
    pub quaternion: Vector4<f64>,
    pub rotation: Matrix3<f64>,
}

impl RegistrationTransform {
    pub fn identity() -> Self {
        Self::from_parts(Vector3::zeros(), Vector4::new(1.0, 0.0, 0.0, 0.0))
    }

    pub fn from_parts(translation: Vector3<f64>, quaternion: Vector4<f64>) -> Self {
        let e = quaternion.normalize();
        RegistrationTransform {
            translation,
            quaternion: e,
            rotation: quaternion_to_rotation(&e),
        }
    }

    /// `max(|R^T R - I|, |det R - 1|)`.
    pub fn orthogonality_error(&self) -> f64 {
        let r = &self.rotation;
        let ortho = (r.transpose() * r - Matrix3::identity()).amax();
        ortho.max((r.determinant() - 1.0).abs())
    }
}

pub fn quaternion_to_rotation(e: &Vector4<f64>) -> Matrix3<f64> {
    let (e0, e1, e2, e3) = (e[0], e[1], e[2], e[3]);
    Matrix3::new(
        e0 * e0 + e1 * e1 - e2 * e2 - e3 * e3,
        2.0 * (e1 * e2 - e0 * e3),
        2.0 * (e1 * e3 + e0 * e2),
        2.0 * (e1 * e2 + e0 * e3),
        e0 * e0 + e2 * e2 - e1 * e1 - e3 * e3,
        2.0 * (e2 * e3 - e0 * e1),
        2.0 * (e1 * e3 - e0 * e2),
        2.0 * (e2 * e3 + e0 * e1),
        e0 * e0 + e3 * e3 - e1 * e1 - e2 * e2,
    )
}

/// Unit quaternion of the rotation best mapping the centered `sources` onto
/// the centered `targets` (least squares), from the largest eigenvector of
/// the symmetric 4x4 matrix built on their cross-covariance. The scalar part
/// is made non-negative.
pub fn rotation_quaternion(
    sources: &[Point3<f64>],
    targets: &[Point3<f64>],
) -> Result<Vector4<f64>> {
    if sources.len() != targets.len() || sources.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "need matching non-empty point lists, got {} and {}",
            sources.len(),
            targets.len()
        )));
    }
    let n = sources.len() as f64;
    let cs = sources.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let ct = targets.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let mut s = Matrix3::zeros();
    for (u, v) in sources.iter().zip(targets) {
        s += (u.coords - cs) * (v.coords - ct).transpose();
    }
    let (sxx, sxy, sxz) = (s[(0, 0)], s[(0, 1)], s[(0, 2)]);
    let (syx, syy, syz) = (s[(1, 0)], s[(1, 1)], s[(1, 2)]);
    let (szx, szy, szz) = (s[(2, 0)], s[(2, 1)], s[(2, 2)]);
    let n = Matrix4::new(
        sxx + syy + szz,
        syz - szy,
        szx - sxz,
        sxy - syx,
        syz - szy,
        sxx - syy - szz,
        sxy + syx,
        szx + sxz,
        szx - sxz,
        sxy + syx,
        -sxx + syy - szz,
        syz + szy,
        sxy - syx,
        szx + sxz,
        syz + szy,
        -sxx - syy + szz,
    );
    let eig = SymmetricEigen::new(n);
    let mut e: Vector4<f64> = eig.eigenvectors.column(eig.eigenvalues.imax()).into_owned();
    if e[0] < 0.0 {
        e = -e;
    }
    Ok(e.normalize())
}

/// Known target cells 26-adjacent to a missing cell.
pub fn boundary_cells(target: &Cube) -> Vec<Cell> {
    target
        .occupied
        .keys()
        .filter(|c| neighbors26(c).any(|n| target.missing.contains(&n)))
        .copied()
        .collect()
}

fn neighbors26(c: &Cell) -> impl Iterator<Item = Cell> + '_ {
    (-1..=1).flat_map(move |dx| {
        (-1..=1).flat_map(move |dy| {
            (-1..=1)
                .filter(move |&dz| dx != 0 || dy != 0 || dz != 0)
                .map(move |dz| [c[0] + dx, c[1] + dy, c[2] + dz])
        })
    })
}

/// Source point paired with a target boundary cell: the point in the same
/// local cell, else the nearest occupied cell within one step.
fn paired_source<'a>(source: &'a Cube, cell: &Cell) -> Option<&'a CubePoint> {
    if let Some(p) = source.occupied.get(cell) {
        return Some(p);
    }
    let center = cell_center(*cell);
    neighbors26(cell)
        .filter_map(|n| source.occupied.get(&n).map(|p| (n, p)))
        .min_by(|a, b| {
            let da = (a.1.position - center).norm_squared();
            let db = (b.1.position - center).norm_squared();
            da.total_cmp(&db).then(a.0.cmp(&b.0))
        })
        .map(|(_, p)| p)
}

/// Mean offset from paired source points to the target's boundary points.
pub fn boundary_translation(target: &Cube, source: &Cube) -> Result<Vector3<f64>> {
    let boundary = boundary_cells(target);
    if boundary.is_empty() {
        return Err(Error::Registration(format!(
            "target cube {:?} has no known cells next to its missing region",
            target.anchor
        )));
    }
    let mut sum = Vector3::zeros();
    let mut pairs = 0usize;
    for cell in &boundary {
        if let Some(s) = paired_source(source, cell) {
            sum += target.occupied[cell].position - s.position;
            pairs += 1;
        }
    }
    if pairs < 3 {
        return Err(Error::Registration(format!(
            "only {pairs} boundary pairs between target {:?} and source {:?}",
            target.anchor, source.anchor
        )));
    }
    Ok(sum / pairs as f64)
}

/// Known target points within `reach` cells (Chebyshev) of a missing cell.
pub fn near_hole_points(target: &Cube, reach: i64) -> Vec<Point3<f64>> {
    target
        .occupied
        .iter()
        .filter(|(c, _)| {
            target
                .missing
                .iter()
                .any(|m| (0..3).all(|a| (c[a] - m[a]).abs() <= reach))
        })
        .map(|(_, p)| p.position)
        .collect()
}

/// Mean squared distance from `targets` to the nearest transformed source
/// point.
pub fn registration_misfit(
    targets: &[Point3<f64>],
    source: &Cube,
    transform: &RegistrationTransform,
) -> f64 {
    let c = source.center();
    let moved: Vec<Point3<f64>> = source
        .positions()
        .iter()
        .map(|p| c + transform.rotation * (p + transform.translation - c))
        .collect();
    if moved.is_empty() || targets.is_empty() {
        return f64::INFINITY;
    }
    let index = SpatialIndex::new(&moved);
    targets
        .iter()
        .map(|q| {
            index
                .nearest(q)
                .map_or(f64::INFINITY, |n| n.distance * n.distance)
        })
        .sum::<f64>()
        / targets.len() as f64
}

/// Full alignment: boundary translation, then the three-point rotation, kept
/// only when it fits the known points around the hole no worse than the
/// translation alone.
pub fn register(target: &Cube, source: &Cube, seed: u64) -> Result<RegistrationTransform> {
    let t = boundary_translation(target, source)?;
    let near = near_hole_points(target, 3);
    let rotated = simplified_icp_rotation(target, source, t, seed)?;
    let plain = RegistrationTransform::from_parts(t, Vector4::new(1.0, 0.0, 0.0, 0.0));
    let (mut best, mut fit) = [rotated, plain]
        .into_iter()
        .map(|x| (x, registration_misfit(&near, source, &x)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    // rotating about the cube center shifts the boundary; re-fit it
    for _ in 0..RETRANSLATE_STEPS {
        let Ok(d) = boundary_translation(target, &moved_cube(source, &best)) else {
            break;
        };
        let next = RegistrationTransform::from_parts(
            best.translation + best.rotation.transpose() * d,
            best.quaternion,
        );
        let next_fit = registration_misfit(&near, source, &next);
        if next_fit >= fit {
            break;
        }
        (best, fit) = (next, next_fit);
    }
    Ok(best)
}

const RETRANSLATE_STEPS: usize = 4;

/// Source points moved by `transform`, bucketed by cell without blending;
/// each cell keeps the point nearest its center.
fn moved_cube(source: &Cube, transform: &RegistrationTransform) -> Cube {
    let c = source.center();
    let mut out = Cube::new(source.anchor, source.side);
    for p in source.occupied.values() {
        let q = c + transform.rotation * (p.position + transform.translation - c);
        let cell = cell_of(&q);
        let d = (q - cell_center(cell)).norm_squared();
        let keep = out
            .occupied
            .get(&cell)
            .is_none_or(|o| d < (o.position - cell_center(cell)).norm_squared());
        if keep {
            out.occupied.insert(
                cell,
                CubePoint {
                    position: q,
                    normal: transform.rotation * p.normal,
                },
            );
        }
    }
    out
}

const CONTROL_DRAWS: usize = 10;

/// Rotation from three randomly drawn (seeded) non-collinear target points
/// and the nearest translated source points. Falls back to the identity when
/// every draw is collinear.
pub fn simplified_icp_rotation(
    target: &Cube,
    source: &Cube,
    translation: Vector3<f64>,
    seed: u64,
) -> Result<RegistrationTransform> {
    let targets = target.positions();
    let moved: Vec<Point3<f64>> = source.positions().iter().map(|p| p + translation).collect();
    if targets.len() < 3 || moved.len() < 3 {
        return Err(Error::Registration(format!(
            "control points need 3 points per cube, have {} and {}",
            targets.len(),
            moved.len()
        )));
    }
    let index = SpatialIndex::new(&moved);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..CONTROL_DRAWS {
        let picks = sample(&mut rng, targets.len(), 3).into_vec();
        let v: Vec<Point3<f64>> = picks.iter().map(|&i| targets[i]).collect();
        let area = (v[1] - v[0]).cross(&(v[2] - v[0])).norm();
        if area <= 1e-9 {
            continue;
        }
        let u: Vec<Point3<f64>> = v
            .iter()
            .map(|q| moved[index.nearest(q).map(|n| n.index).unwrap_or(0)])
            .collect();
        let e = rotation_quaternion(&u, &v)?;
        return Ok(RegistrationTransform::from_parts(translation, e));
    }
    warn!(
        "collinear control points for target {:?} after {CONTROL_DRAWS} draws; using no rotation",
        target.anchor
    );
    Ok(RegistrationTransform::from_parts(
        translation,
        Vector4::new(1.0, 0.0, 0.0, 0.0),
    ))
}

/// Applies the transform to every source point and normal, re-voxelizes in
/// local cells and drops what falls outside the window.
pub fn register_source(source: &Cube, transform: &RegistrationTransform, sigma: f64) -> Cube {
    let c = source.center();
    let r = &transform.rotation;
    let moved: Vec<(Point3<f64>, Vector3<f64>)> = source
        .occupied
        .values()
        .map(|p| {
            let q = c + r * (p.position + transform.translation - c);
            (q, r * p.normal)
        })
        .collect();
    let mut buckets: BTreeMap<Cell, Vec<usize>> = BTreeMap::new();
    for (i, (p, _)) in moved.iter().enumerate() {
        buckets.entry(cell_of(p)).or_default().push(i);
    }
    let mut out = Cube::new(source.anchor, source.side);
    out.mirrored = source.mirrored;
    for (cell, members) in buckets {
        if !out.in_bounds(&cell) {
            continue;
        }
        let samples = members.iter().map(|&i| (&moved[i].0, &moved[i].1));
        if let Some(normal) = blend_normals(cell, samples, sigma) {
            out.occupied.insert(
                cell,
                CubePoint {
                    position: cell_center(cell),
                    normal,
                },
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Rotation3, Unit};
    use rand::Rng;

    #[test]
    fn identity_quaternion() {
        assert_eq!(
            quaternion_to_rotation(&Vector4::new(1.0, 0.0, 0.0, 0.0)),
            Matrix3::identity()
        );
    }

    #[test]
    fn quarter_turn_about_z() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let r = quaternion_to_rotation(&Vector4::new(h, 0.0, 0.0, h));
        let want = Rotation3::from_axis_angle(&Vector3::z_axis(), std::f64::consts::FRAC_PI_2);
        assert!((r - want.matrix()).amax() < 1e-12);
    }

    #[test]
    fn recovers_known_rotations() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let axis = Unit::new_normalize(Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ));
            let q = Rotation3::from_axis_angle(&axis, rng.gen_range(0.0..1.0));
            let u: Vec<Point3<f64>> = (0..3)
                .map(|_| {
                    Point3::new(
                        rng.gen_range(0.0..20.0),
                        rng.gen_range(0.0..20.0),
                        rng.gen_range(0.0..20.0),
                    )
                })
                .collect();
            let v: Vec<Point3<f64>> = u.iter().map(|p| q * p).collect();
            let e = rotation_quaternion(&u, &v).unwrap();
            assert!((quaternion_to_rotation(&e) - q.matrix()).norm() < 1e-9);
        }
    }

    fn plane_cube(anchor: Cell, z: i64, skip: impl Fn(i64, i64) -> bool) -> Cube {
        let mut c = Cube::new(anchor, 20);
        for x in 0..20 {
            for y in 0..20 {
                if skip(x, y) {
                    c.missing.insert([x, y, z]);
                    continue;
                }
                c.occupied.insert(
                    [x, y, z],
                    CubePoint {
                        position: cell_center([x, y, z]),
                        normal: Vector3::z(),
                    },
                );
            }
        }
        c
    }

    #[test]
    fn translation_of_shifted_plane() {
        let target = plane_cube([0, 0, 0], 5, |x, y| {
            (8..12).contains(&x) && (8..12).contains(&y)
        });
        let same = plane_cube([40, 0, 0], 5, |_, _| false);
        assert_eq!(
            boundary_translation(&target, &same).unwrap(),
            Vector3::zeros()
        );
        let lower = plane_cube([40, 0, 0], 4, |_, _| false);
        assert_eq!(
            boundary_translation(&target, &lower).unwrap(),
            Vector3::new(0.0, 0.0, 1.0)
        );
        let far = plane_cube([40, 0, 0], 1, |_, _| false);
        assert!(boundary_translation(&target, &far).is_err());
    }

    #[test]
    fn aligned_planes_need_no_rotation() {
        let target = plane_cube([0, 0, 0], 5, |x, y| {
            (8..12).contains(&x) && (8..12).contains(&y)
        });
        let source = plane_cube([40, 0, 0], 5, |_, _| false);
        let t = simplified_icp_rotation(&target, &source, Vector3::zeros(), 3).unwrap();
        assert!((t.rotation - Matrix3::identity()).amax() < 1e-9);
        assert!(t.orthogonality_error() < 1e-12);
        let out = register_source(&source, &t, 1.0);
        assert_eq!(
            out.occupied.keys().collect::<Vec<_>>(),
            source.occupied.keys().collect::<Vec<_>>()
        );
    }

    #[test]
    fn quarter_turn_moves_plane_onto_another_axis() {
        let mut source = Cube::new([0, 0, 0], 20);
        for y in 0..20 {
            for z in 0..20 {
                source.occupied.insert(
                    [10, y, z],
                    CubePoint {
                        position: cell_center([10, y, z]),
                        normal: Vector3::x(),
                    },
                );
            }
        }
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let t = RegistrationTransform::from_parts(Vector3::zeros(), Vector4::new(h, 0.0, 0.0, h));
        let out = register_source(&source, &t, 1.0);
        assert!(!out.occupied.is_empty());
        for (cell, p) in &out.occupied {
            assert!(out.in_bounds(cell));
            assert_eq!(cell[1], 10, "{cell:?}");
            assert!((p.normal - Vector3::y()).norm() < 1e-9);
        }
    }

    #[test]
    fn misfit_never_grows_under_the_guard() {
        let target = plane_cube([0, 0, 0], 5, |x, y| {
            (8..12).contains(&x) && (8..12).contains(&y)
        });
        let source = plane_cube([40, 0, 0], 5, |_, _| false);
        let near = near_hole_points(&target, 3);
        assert_eq!(near.len(), 10 * 10 - 16);
        let chosen = register(&target, &source, 9).unwrap();
        assert_eq!(registration_misfit(&near, &source, &chosen), 0.0);
        let h = (0.1f64).cos();
        let tilted = RegistrationTransform::from_parts(
            Vector3::zeros(),
            Vector4::new(h, (1.0 - h * h).sqrt(), 0.0, 0.0),
        );
        assert!(registration_misfit(&near, &source, &tilted) > 0.0);
    }
}
