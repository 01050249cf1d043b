//! Centerline representation, normalization and rotation augmentation.
//!
//! A centerline is the ordered medial axis of the proximal vessel course:
//! [`N_POINTS`] points at a constant [`SPACING_MM`] arc-length step,
//! starting at the ostium. Normalization moves the ostium to the origin and
//! divides by [`NORMALIZATION_LENGTH_MM`], the longest course that fits in
//! the point budget, so every normalized coordinate lies in `[-1, 1]`.
//!
//! Rotations are always about the origin (the ostium after normalization)
//! and compose per-axis rotations in the fixed order x, then y, then z:
//! `R = Rz(γ) · Ry(β) · Rx(α)`.

use rand::Rng;

use crate::error::{Error, Result};

pub const N_POINTS: usize = 256;
pub const SPACING_MM: f64 = 0.25;
pub const NORMALIZATION_LENGTH_MM: f64 = 64.0;

/// Largest per-axis training rotation, degrees.
pub const TRAIN_ROTATION_MAX_DEG: f64 = 45.0;
/// Test-time augmentation angles, degrees. Each angle is applied to all
/// three axes at once.
pub const TTA_ANGLES_DEG: [f64; 3] = [-15.0, 0.0, 15.0];

pub type Point = [f64; 3];
pub type Rotation = [[f64; 3]; 3];

fn check_points(points: &[Point]) -> Result<()> {
    if points.len() != N_POINTS {
        return Err(Error::InvalidInput(format!(
            "centerline must have {N_POINTS} points, got {}",
            points.len()
        )));
    }
    if let Some(i) = points.iter().position(|p| p.iter().any(|v| !v.is_finite())) {
        return Err(Error::InvalidInput(format!(
            "centerline point {i} has a non-finite coordinate"
        )));
    }
    Ok(())
}

/// Raw centerline in millimeters.
#[derive(Debug, Clone, PartialEq)]
pub struct Centerline {
    points: Vec<Point>,
}

impl Centerline {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        check_points(&points)?;
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn spacing_mm(&self) -> f64 {
        SPACING_MM
    }

    /// Largest deviation of a consecutive-point distance from the nominal
    /// spacing.
    pub fn max_spacing_error(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (distance(&w[0], &w[1]) - SPACING_MM).abs())
            .fold(0.0, f64::max)
    }
}

/// Centerline shifted to the ostium and scaled by 1 / 64 mm.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedCenterline {
    points: Vec<Point>,
}

impl NormalizedCenterline {
    /// Wraps already-normalized points. The first point must be the origin.
    pub fn from_points(points: Vec<Point>) -> Result<Self> {
        check_points(&points)?;
        if points[0] != [0.0; 3] {
            return Err(Error::InvalidInput(
                "normalized centerline must start at the origin".into(),
            ));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn max_norm(&self) -> f64 {
        self.points.iter().map(norm).fold(0.0, f64::max)
    }
}

pub fn normalize(c: &Centerline) -> Result<NormalizedCenterline> {
    // Centerline::new already rejects non-finite input, but keep the check
    // for values built through other paths.
    check_points(&c.points)?;
    let origin = c.points[0];
    let points = c
        .points
        .iter()
        .map(|p| {
            [
                (p[0] - origin[0]) / NORMALIZATION_LENGTH_MM,
                (p[1] - origin[1]) / NORMALIZATION_LENGTH_MM,
                (p[2] - origin[2]) / NORMALIZATION_LENGTH_MM,
            ]
        })
        .collect();
    Ok(NormalizedCenterline { points })
}

/// Inverse of [`normalize`] for a given ostium position.
pub fn denormalize(n: &NormalizedCenterline, ostium: Point) -> Centerline {
    let points = n
        .points
        .iter()
        .map(|p| {
            [
                p[0] * NORMALIZATION_LENGTH_MM + ostium[0],
                p[1] * NORMALIZATION_LENGTH_MM + ostium[1],
                p[2] * NORMALIZATION_LENGTH_MM + ostium[2],
            ]
        })
        .collect();
    Centerline { points }
}

/// `Rz(z) · Ry(y) · Rx(x)` for angles in degrees.
pub fn rotation_matrix(angles_deg: [f64; 3]) -> Rotation {
    let [ax, ay, az] = angles_deg.map(f64::to_radians);
    let (sx, cx) = ax.sin_cos();
    let (sy, cy) = ay.sin_cos();
    let (sz, cz) = az.sin_cos();
    let rx = [[1.0, 0.0, 0.0], [0.0, cx, -sx], [0.0, sx, cx]];
    let ry = [[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]];
    let rz = [[cz, -sz, 0.0], [sz, cz, 0.0], [0.0, 0.0, 1.0]];
    mat_mul(&rz, &mat_mul(&ry, &rx))
}

pub fn rotate(c: &NormalizedCenterline, angles_deg: [f64; 3]) -> Result<NormalizedCenterline> {
    if angles_deg.iter().any(|a| !a.is_finite()) {
        return Err(Error::InvalidInput("rotation angle is not finite".into()));
    }
    if angles_deg == [0.0; 3] {
        return Ok(c.clone());
    }
    Ok(apply_rotation(c, &rotation_matrix(angles_deg)))
}

/// Undoes [`rotate`] with the same angles: negated angles applied z, y, x.
pub fn rotate_inverse(
    c: &NormalizedCenterline,
    angles_deg: [f64; 3],
) -> Result<NormalizedCenterline> {
    if angles_deg.iter().any(|a| !a.is_finite()) {
        return Err(Error::InvalidInput("rotation angle is not finite".into()));
    }
    let [x, y, z] = angles_deg;
    let undo_z = rotate(c, [0.0, 0.0, -z])?;
    let undo_y = rotate(&undo_z, [0.0, -y, 0.0])?;
    rotate(&undo_y, [-x, 0.0, 0.0])
}

pub fn apply_rotation(c: &NormalizedCenterline, r: &Rotation) -> NormalizedCenterline {
    let points = c.points.iter().map(|p| mat_vec(r, p)).collect();
    NormalizedCenterline { points }
}

/// Three independent angles, uniform in ±45°.
pub fn sample_training_rotation<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    let max = TRAIN_ROTATION_MAX_DEG;
    [
        rng.gen_range(-max..=max),
        rng.gen_range(-max..=max),
        rng.gen_range(-max..=max),
    ]
}

/// One variant per angle in `angles_deg`, the angle applied to all axes.
pub fn tta_variants_with(c: &NormalizedCenterline, angles_deg: &[f64]) -> Vec<NormalizedCenterline> {
    angles_deg
        .iter()
        .map(|&a| {
            if a == 0.0 {
                c.clone()
            } else {
                apply_rotation(c, &rotation_matrix([a, a, a]))
            }
        })
        .collect()
}

pub fn tta_variants(c: &NormalizedCenterline) -> Vec<NormalizedCenterline> {
    tta_variants_with(c, &TTA_ANGLES_DEG)
}

pub fn distance(a: &Point, b: &Point) -> f64 {
    norm(&sub(a, b))
}

pub fn norm(p: &Point) -> f64 {
    dot(p, p).sqrt()
}

pub fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn mat_mul(a: &Rotation, b: &Rotation) -> Rotation {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn mat_vec(r: &Rotation, p: &Point) -> Point {
    [dot(&r[0], p), dot(&r[1], p), dot(&r[2], p)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn straight_x() -> Centerline {
        Centerline::new((0..N_POINTS).map(|i| [i as f64 * SPACING_MM, 0.0, 0.0]).collect()).unwrap()
    }

    fn wiggly() -> NormalizedCenterline {
        let c = Centerline::new(
            (0..N_POINTS)
                .map(|i| {
                    let s = i as f64 * 0.1;
                    [3.0 + 10.0 * s.sin(), -2.0 + 5.0 * s, 7.0 * (0.3 * s).cos()]
                })
                .collect(),
        )
        .unwrap();
        normalize(&c).unwrap()
    }

    #[test]
    fn constant_curve_normalizes_to_origin() {
        let c = Centerline::new(vec![[5.0, 5.0, 5.0]; N_POINTS]).unwrap();
        let n = normalize(&c).unwrap();
        assert!(n.points().iter().all(|p| *p == [0.0; 3]));
    }

    #[test]
    fn straight_line_end_point() {
        let n = normalize(&straight_x()).unwrap();
        assert_eq!(n.points()[255], [0.99609375, 0.0, 0.0]);
        assert!(straight_x().max_spacing_error() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        let mut pts = vec![[0.0; 3]; N_POINTS];
        pts[17][1] = f64::NAN;
        assert!(matches!(Centerline::new(pts), Err(Error::InvalidInput(_))));
        assert!(Centerline::new(vec![[0.0; 3]; 255]).is_err());
        let n = normalize(&straight_x()).unwrap();
        assert!(rotate(&n, [f64::INFINITY, 0.0, 0.0]).is_err());
    }

    #[test]
    fn denormalize_round_trip() {
        let n = wiggly();
        let back = normalize(&denormalize(&n, [1.5, -20.0, 33.0])).unwrap();
        for (a, b) in n.points().iter().zip(back.points()) {
            assert!(distance(a, b) < 1e-9);
        }
    }

    #[test]
    fn zero_rotation_is_identity() {
        let n = wiggly();
        assert_eq!(rotate(&n, [0.0; 3]).unwrap(), n);
    }

    #[test]
    fn quarter_turn_about_z_maps_x_to_y() {
        let n = normalize(&straight_x()).unwrap();
        let r = rotate(&n, [0.0, 0.0, 90.0]).unwrap();
        for (i, p) in r.points().iter().enumerate() {
            let expected = [0.0, i as f64 * SPACING_MM / NORMALIZATION_LENGTH_MM, 0.0];
            assert!(distance(p, &expected) < 1e-9, "{p:?} vs {expected:?}");
        }
    }

    #[test]
    fn composition_order_is_x_then_y_then_z() {
        let r = rotation_matrix([90.0, 90.0, 0.0]);
        // x-axis rotation leaves e_z -> -e_y, then y rotation leaves -e_y alone.
        let v = mat_vec(&r, &[0.0, 0.0, 1.0]);
        assert!(distance(&v, &[0.0, -1.0, 0.0]) < 1e-12);
    }

    #[test]
    fn rotation_is_an_isometry_and_invertible() {
        let n = wiggly();
        let angles = [31.0, -12.5, 77.0];
        let r = rotate(&n, angles).unwrap();
        assert_eq!(r.points()[0], [0.0; 3]);
        for (a, b) in n.points().iter().zip(r.points()) {
            assert!((norm(a) - norm(b)).abs() < 1e-9);
        }
        for i in (0..N_POINTS).step_by(7) {
            for j in (0..N_POINTS).step_by(11) {
                let d0 = distance(&n.points()[i], &n.points()[j]);
                let d1 = distance(&r.points()[i], &r.points()[j]);
                assert!((d0 - d1).abs() < 1e-9);
            }
        }
        let back = rotate_inverse(&r, angles).unwrap();
        for (a, b) in n.points().iter().zip(back.points()) {
            assert!(distance(a, b) < 1e-9);
        }
    }

    #[test]
    fn training_rotation_statistics() {
        let mut rng = seed::rng(0);
        let mut sum = 0.0;
        let (mut lo, mut hi) = (f64::MAX, f64::MIN);
        for _ in 0..10_000 {
            for a in sample_training_rotation(&mut rng) {
                sum += a;
                lo = lo.min(a);
                hi = hi.max(a);
            }
        }
        assert!(lo >= -45.0 && hi <= 45.0);
        assert!((sum / 30_000.0).abs() < 1.5);

        let a = sample_training_rotation(&mut seed::rng(11));
        assert_eq!(a, sample_training_rotation(&mut seed::rng(11)));
        assert_ne!(a, sample_training_rotation(&mut seed::rng(12)));
    }

    #[test]
    fn tta_variants_are_three_isometries() {
        let n = wiggly();
        let v = tta_variants(&n);
        assert_eq!(v.len(), 3);
        assert_eq!(v[1], n);
        for variant in &v {
            for (a, b) in n.points().iter().zip(variant.points()) {
                assert!((norm(a) - norm(b)).abs() < 1e-9);
            }
        }
        assert_ne!(v[0], v[2]);
    }
}
