//! Least-squares quadric curvature and the C cornerness score.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, SymmetricEigen};

use crate::error::{Error, Result};
use crate::geometry::{Point3, Vector3};
use crate::neighbors::PointIndex;
use crate::scan::RangeScan;
use crate::shapes::{CONCAVE_CORNER, CONVEX_CORNER};

/// Principal curvatures in mm⁻¹, `c1 >= c2`, positive where the surface
/// bulges toward the sensor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvaturePair {
    pub c1: f64,
    pub c2: f64,
}

/// Fits `w = αu² + βuv + γv² + δu + εv + ζ` to the points within `radius`
/// of `f`, in a frame whose `w` axis is the plane normal facing the sensor.
pub fn fit_quadric(scan: &RangeScan, f: &Point3, radius: f64) -> Result<CurvaturePair> {
    let index = PointIndex::new(scan.points());
    fit_quadric_indexed(scan, &index, f, radius)
}

/// [`fit_quadric`] with a prebuilt neighbour index over `scan`.
pub fn fit_quadric_indexed(
    scan: &RangeScan,
    index: &PointIndex,
    f: &Point3,
    radius: f64,
) -> Result<CurvaturePair> {
    let near: Vec<Point3> = index
        .within(f, radius)
        .into_iter()
        .map(|(_, i)| scan.points()[i])
        .collect();
    fit_points(&near, scan.gaze().as_ref())
}

/// Quadric curvature of an explicit neighbourhood.
pub fn fit_points(points: &[Point3], gaze: &Vector3) -> Result<CurvaturePair> {
    if points.len() < 6 {
        return Err(Error::InsufficientSupport {
            found: points.len(),
            needed: 6,
        });
    }
    let n = points.len() as f64;
    let mean = points.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p.coords - mean;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let mut order = [0, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut w: Vector3 = eig.eigenvectors.column(order[0]).into();
    if w.dot(gaze) > 0.0 {
        w = -w;
    }
    let u: Vector3 = eig.eigenvectors.column(order[2]).into();
    let v = w.cross(&u);

    // Normalise coordinates to keep the system well conditioned.
    let scale = points
        .iter()
        .map(|p| (p.coords - mean).norm())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let mut a = DMatrix::zeros(points.len(), 6);
    let mut b = DVector::zeros(points.len());
    for (r, p) in points.iter().enumerate() {
        let d = (p.coords - mean) / scale;
        let (x, y) = (d.dot(&u), d.dot(&v));
        let row = [x * x, x * y, y * y, x, y, 1.0];
        for (c, val) in row.into_iter().enumerate() {
            a[(r, c)] = val;
        }
        b[r] = d.dot(&w);
    }
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > smax * 1e-10) {
        return Err(Error::DegenerateFit);
    }
    let coef = svd.solve(&b, 0.0).map_err(|_| Error::DegenerateFit)?;
    let h = Matrix2::new(2.0 * coef[0], coef[1], coef[1], 2.0 * coef[2]) / scale;
    // w points at the sensor, so a sensor-facing bump has negative Hessian.
    let e = SymmetricEigen::new(-h).eigenvalues;
    let (c1, c2) = if e[0] >= e[1] {
        (e[0], e[1])
    } else {
        (e[1], e[0])
    };
    if !(c1.is_finite() && c2.is_finite()) {
        return Err(Error::DegenerateFit);
    }
    Ok(CurvaturePair { c1, c2 })
}

/// Cornerness of a curvature pair for a convex or concave corner class.
pub fn c_score(shape: u32, pair: &CurvaturePair) -> Result<f64> {
    match shape {
        CONVEX_CORNER => Ok(pair.c1.min(pair.c2)),
        CONCAVE_CORNER => Ok((-pair.c1).min(-pair.c2)),
        s => Err(Error::UnknownClass(s)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Pose, UnitVec3};
    use nalgebra::{Rotation3, Unit};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn down() -> UnitVec3 {
        Unit::new_normalize(Vector3::new(0.0, 0.0, 1.0))
    }

    /// Points on the sensor-facing cap of a sphere centred at `(0,0,ρ)`,
    /// seen along +z, on a jittered grid of pitch `h`.
    fn cap(rho: f64, h: f64, extent: f64, seed: u64) -> Vec<Point3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        let n = (extent / h) as i64;
        for i in -n..=n {
            for j in -n..=n {
                let x = i as f64 * h + rng.random_range(-0.25..0.25) * h;
                let y = j as f64 * h + rng.random_range(-0.25..0.25) * h;
                let r2 = x * x + y * y;
                if r2 < rho * rho * 0.8 {
                    out.push(Point3::new(x, y, rho - (rho * rho - r2).sqrt()));
                }
            }
        }
        out
    }

    fn scan(points: Vec<Point3>) -> RangeScan {
        RangeScan::new(points, down()).unwrap()
    }

    #[test]
    fn plane_is_flat() {
        let mut pts = Vec::new();
        for i in -10..=10 {
            for j in -10..=10 {
                let (x, y) = (i as f64, j as f64 * 1.3);
                pts.push(Point3::new(x, y, 0.2 * x - 0.1 * y + 3.0));
            }
        }
        let c = fit_quadric(&scan(pts), &Point3::new(0.0, 0.0, 3.0), 15.0).unwrap();
        assert!(c.c1.abs() < 1e-9 && c.c2.abs() < 1e-9, "{c:?}");
    }

    #[test]
    fn sphere_cap_curvature() {
        let s = scan(cap(50.0, 0.5, 20.0, 1));
        let rho: f64 = 50.0;
        // Fitting z = A r² + C to z ≈ r²/2ρ + r⁴/8ρ³ over a disk of radius R
        // biases A by a factor 1 + R²/4ρ².
        for radius in [10.0, 15.0] {
            let c = fit_quadric(&s, &Point3::origin(), radius).unwrap();
            let biased = (1.0 + radius * radius / (4.0 * rho * rho)) / rho;
            for k in [c.c1, c.c2] {
                assert!(((k - biased) / biased).abs() < 2e-3, "{radius}: {c:?}");
            }
            assert!(c.c1 >= c.c2);
        }
        let c = fit_quadric(&s, &Point3::origin(), 10.0).unwrap();
        assert!(((c.c2 - 1.0 / rho) * rho).abs() < 0.02);
    }

    #[test]
    fn concave_bowl_is_negative() {
        let pts: Vec<Point3> = cap(50.0, 0.5, 20.0, 2)
            .into_iter()
            .map(|p| Point3::new(p.x, p.y, -p.z))
            .collect();
        let c = fit_quadric(&scan(pts), &Point3::origin(), 15.0).unwrap();
        assert!(c.c1 < 0.0 && c.c2 < 0.0);
        assert!(c_score(CONCAVE_CORNER, &c).unwrap() > 0.0);
    }

    #[test]
    fn too_few_points() {
        let pts: Vec<Point3> = (0..5)
            .map(|i| Point3::new(i as f64, (i * i) as f64 * 0.1, 0.0))
            .collect();
        assert!(matches!(
            fit_quadric(&scan(pts), &Point3::new(2.0, 0.0, 0.0), 15.0),
            Err(Error::InsufficientSupport { found: 5, .. })
        ));
    }

    #[test]
    fn collinear_support_is_degenerate() {
        let pts: Vec<Point3> = (0..10).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
        assert!(matches!(
            fit_quadric(&scan(pts), &Point3::new(4.0, 0.0, 0.0), 15.0),
            Err(Error::DegenerateFit)
        ));
    }

    #[test]
    fn score_examples() {
        let p = |c1, c2| CurvaturePair { c1, c2 };
        assert_eq!(c_score(CONVEX_CORNER, &p(0.1, 0.05)).unwrap(), 0.05);
        assert_eq!(c_score(CONCAVE_CORNER, &p(-0.05, -0.1)).unwrap(), 0.05);
        assert_eq!(c_score(CONVEX_CORNER, &p(0.1, -0.1)).unwrap(), -0.1);
        assert!(matches!(
            c_score(7, &p(0.0, 0.0)),
            Err(Error::UnknownClass(7))
        ));
    }

    #[test]
    fn rigid_motion_and_scale() {
        let pts = cap(50.0, 0.5, 20.0, 3);
        let base = fit_points(&pts, &Vector3::z()).unwrap();

        let pose = Pose::new(
            Rotation3::from_euler_angles(0.3, -0.5, 1.1),
            Vector3::new(10.0, -4.0, 7.0),
        );
        let moved: Vec<Point3> = pts.iter().map(|p| pose.apply(p)).collect();
        let g = pose.apply_vector(&Vector3::z());
        let c = fit_points(&moved, &g).unwrap();
        assert!((c.c1 - base.c1).abs() < 1e-9 && (c.c2 - base.c2).abs() < 1e-9);

        let scaled: Vec<Point3> = pts.iter().map(|p| Point3::from(p.coords * 2.0)).collect();
        let c = fit_points(&scaled, &Vector3::z()).unwrap();
        assert!((c.c1 - base.c1 / 2.0).abs() < 1e-9 && (c.c2 - base.c2 / 2.0).abs() < 1e-9);
    }

    #[test]
    fn outliers_degrade_the_fit() {
        let pts: Vec<Point3> = cap(50.0, 0.5, 20.0, 4)
            .into_iter()
            .filter(|p| p.coords.norm() < 15.0)
            .collect();
        let want = 1.0 / 50.0;
        let clean = fit_points(&pts, &Vector3::z()).unwrap();
        let clean_err = (clean.c2 - want).abs().max((clean.c1 - want).abs());

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut noisy = pts.clone();
        for _ in 0..pts.len() / 4 {
            noisy.push(Point3::new(
                rng.random_range(-15.0..15.0),
                rng.random_range(-15.0..15.0),
                rng.random_range(-15.0..15.0),
            ));
        }
        let dirty = fit_points(&noisy, &Vector3::z()).unwrap();
        let dirty_err = (dirty.c2 - want).abs().max((dirty.c1 - want).abs());
        assert!(dirty_err > clean_err, "{clean_err} vs {dirty_err}");
    }
}
