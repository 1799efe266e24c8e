use crate::error::{Error, Result};
use crate::geometry::{Point3, UnitVec3};

/// `4/(3√3)`: maps the area of an equilateral triangle inscribed in a
/// circle of radius ρ to ρ².
const EQUILATERAL: f64 = 0.769_800_358_919_501;

const CLAMP_TOL: f64 = 1e-9;

/// One point of a tetrahedron representation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeltaSample {
    /// Mean radius over the neighbourhood radius, in `[0, 1]`.
    pub u1: f64,
    /// Normalised signed distance of the centre to the triangle's plane, in
    /// `[-1, 1]`.
    pub u2: f64,
    /// Triangle regularity, in `[0, 1]`.
    pub u3: f64,
}

impl DeltaSample {
    pub fn new(u1: f64, u2: f64, u3: f64) -> Self {
        DeltaSample { u1, u2, u3 }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.u1, self.u2, self.u3]
    }
}

fn clamp(v: f64, lo: f64, hi: f64) -> f64 {
    debug_assert!(v >= lo - CLAMP_TOL && v <= hi + CLAMP_TOL || !v.is_finite());
    v.clamp(lo, hi)
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Maps the centre `c` and a triangle `x1 x2 x3` to its normalised
/// `(r, d, a)` coordinates. `d` takes the sign of `g·(x̄ − c)` with `x̄` the
/// triangle centroid.
pub fn delta_map(
    c: &Point3,
    x1: &Point3,
    x2: &Point3,
    x3: &Point3,
    radius: f64,
    gaze: &UnitVec3,
) -> Result<DeltaSample> {
    if x1 == x2 || x1 == x3 || x2 == x3 {
        return Err(Error::DegenerateTriple("coincident triangle vertices"));
    }
    let r = ((x1 - c).norm() + (x2 - c).norm() + (x3 - c).norm()) / 3.0;
    if r >= radius {
        return Err(Error::OutOfNeighborhood { mean: r, radius });
    }
    let cross = (x2 - x1).cross(&(x3 - x1));
    let twice_area = cross.norm();
    if twice_area <= f64::EPSILON * (x2 - x1).norm() * (x3 - x1).norm() {
        return Err(Error::DegenerateTriple("collinear triangle vertices"));
    }
    let area = 0.5 * twice_area;
    let centroid = Point3::from((x1.coords + x2.coords + x3.coords) / 3.0);
    let d = sign(gaze.dot(&(centroid - c))) * ((x1 - c).dot(&cross) / twice_area).abs();

    let r2 = r * r;
    let scaled_area = EQUILATERAL * area;
    let den2 = (r2 - scaled_area).max(0.0).sqrt();
    let u2 = if den2 < 1e-9 { sign(d) } else { d / den2 };
    let den3 = r2 - d * d;
    let u3 = if den3 > 0.0 { scaled_area / den3 } else { 1.0 };
    Ok(DeltaSample {
        u1: clamp(r / radius, 0.0, 1.0),
        u2: u2.clamp(-1.0, 1.0),
        u3: u3.clamp(0.0, 1.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{unit, Pose, Vector3};
    use nalgebra::UnitQuaternion;
    use proptest::prelude::*;

    fn z() -> UnitVec3 {
        Vector3::z_axis()
    }

    #[test]
    fn equilateral_ring_saturates() {
        let s3 = 3f64.sqrt();
        let pts = [
            Point3::new(0.8, 0.0, 0.6),
            Point3::new(-0.4, 0.4 * s3, 0.6),
            Point3::new(-0.4, -0.4 * s3, 0.6),
        ];
        let d = delta_map(&Point3::origin(), &pts[0], &pts[1], &pts[2], 2.0, &z()).unwrap();
        assert!((d.u1 - 0.5).abs() < 1e-9);
        assert!((d.u2 - 1.0).abs() < 1e-9);
        assert!((d.u3 - 1.0).abs() < 1e-9);

        // The rounded coordinates agree to their own precision.
        let d = delta_map(
            &Point3::origin(),
            &Point3::new(0.8, 0.0, 0.6),
            &Point3::new(-0.4, 0.6928, 0.6),
            &Point3::new(-0.4, -0.6928, 0.6),
            2.0,
            &z(),
        )
        .unwrap();
        assert!(
            (d.u1 - 0.5).abs() < 1e-4 && (d.u2 - 1.0).abs() < 1e-3 && (d.u3 - 1.0).abs() < 1e-3
        );
    }

    #[test]
    fn hand_evaluated_example() {
        let d = delta_map(
            &Point3::origin(),
            &Point3::new(3.0, 0.0, 4.0),
            &Point3::new(0.0, 3.0, 4.0),
            &Point3::new(-3.0, 0.0, 4.0),
            10.0,
            &z(),
        )
        .unwrap();
        // r = 5, d = 4, a = 9
        let k = 4.0 / (3.0 * 3f64.sqrt());
        let u2 = 4.0 / (25.0 - 9.0 * k).sqrt();
        let u3 = 9.0 * k / (25.0 - 16.0);
        assert_eq!(d.u1, 0.5);
        assert!((d.u2 - u2).abs() < 1e-12 && (d.u2 - 0.9409).abs() < 5e-5);
        assert!((d.u3 - u3).abs() < 1e-12 && (d.u3 - 0.7698).abs() < 5e-5);
    }

    #[test]
    fn degenerate_and_out_of_range() {
        let c = Point3::origin();
        let p = Point3::new(1.0, 0.0, 0.0);
        let q = Point3::new(0.0, 1.0, 0.0);
        assert!(matches!(
            delta_map(&c, &p, &p, &q, 5.0, &z()),
            Err(Error::DegenerateTriple(_))
        ));
        let far = [
            Point3::new(9.0, 0.0, 0.0),
            Point3::new(0.0, 9.0, 0.0),
            Point3::new(-9.0, 0.0, 0.0),
        ];
        assert!(matches!(
            delta_map(&c, &far[0], &far[1], &far[2], 5.0, &z()),
            Err(Error::OutOfNeighborhood { .. })
        ));
    }

    #[test]
    fn in_plane_centre_gives_zero_u2() {
        let d = delta_map(
            &Point3::origin(),
            &Point3::new(2.0, 0.0, 0.0),
            &Point3::new(0.0, 2.0, 0.0),
            &Point3::new(-2.0, 0.1, 0.0),
            5.0,
            &z(),
        )
        .unwrap();
        assert_eq!(d.u2, 0.0);
    }

    fn arb_point() -> impl Strategy<Value = Point3> {
        (-4.0..4.0f64, -4.0..4.0f64, -4.0..4.0f64).prop_map(|(x, y, z)| Point3::new(x, y, z))
    }

    fn arb_pose() -> impl Strategy<Value = Pose> {
        (
            -3.2..3.2f64,
            -1.5..1.5f64,
            -3.2..3.2f64,
            prop::array::uniform3(-100.0..100.0f64),
        )
            .prop_map(|(r, p, y, t)| {
                Pose::from_quaternion(UnitQuaternion::from_euler_angles(r, p, y), Vector3::from(t))
            })
    }

    proptest! {
        #[test]
        fn outputs_stay_in_range(c in arb_point(), a in arb_point(), b in arb_point(), d in arb_point(),
                                 g in prop::array::uniform3(-1.0..1.0f64)) {
            prop_assume!(Vector3::from(g).norm() > 0.1);
            let g = unit(g[0], g[1], g[2]).unwrap();
            if let Ok(s) = delta_map(&c, &a, &b, &d, 20.0, &g) {
                prop_assert!((0.0..=1.0).contains(&s.u1));
                prop_assert!((-1.0..=1.0).contains(&s.u2));
                prop_assert!((0.0..=1.0).contains(&s.u3));
            }
        }

        #[test]
        fn rigid_invariance(c in arb_point(), a in arb_point(), b in arb_point(), d in arb_point(), pose in arb_pose()) {
            let g = unit(0.2, -0.3, 0.9).unwrap();
            let s0 = delta_map(&c, &a, &b, &d, 20.0, &g);
            prop_assume!(s0.is_ok());
            let s0 = s0.unwrap();
            let gp = UnitVec3::new_normalize(pose.apply_vector(&g));
            let s1 = delta_map(&pose.apply(&c), &pose.apply(&a), &pose.apply(&b), &pose.apply(&d), 20.0, &gp).unwrap();
            prop_assert!((s0.u1 - s1.u1).abs() < 1e-9);
            prop_assert!((s0.u2 - s1.u2).abs() < 1e-9 || s0.u2.abs() < 1e-9);
            prop_assert!((s0.u3 - s1.u3).abs() < 1e-9);
        }

        #[test]
        fn negated_gaze_negates_u2(c in arb_point(), a in arb_point(), b in arb_point(), d in arb_point()) {
            let g = unit(0.1, 0.5, -0.8).unwrap();
            let s0 = delta_map(&c, &a, &b, &d, 20.0, &g);
            prop_assume!(s0.is_ok());
            let s0 = s0.unwrap();
            let s1 = delta_map(&c, &a, &b, &d, 20.0, &-g).unwrap();
            prop_assert_eq!(s0.u1, s1.u1);
            prop_assert_eq!(s0.u3, s1.u3);
            prop_assert_eq!(s0.u2, -s1.u2);
        }

        #[test]
        fn vertex_order_does_not_matter(c in arb_point(), a in arb_point(), b in arb_point(), d in arb_point()) {
            let g = unit(0.0, 0.6, 0.8).unwrap();
            let s0 = delta_map(&c, &a, &b, &d, 20.0, &g);
            prop_assume!(s0.is_ok());
            let s0 = s0.unwrap();
            let s1 = delta_map(&c, &d, &a, &b, 20.0, &g).unwrap();
            prop_assert!((s0.u1 - s1.u1).abs() < 1e-12);
            prop_assert!((s0.u2 - s1.u2).abs() < 1e-9);
            prop_assert!((s0.u3 - s1.u3).abs() < 1e-9);
        }
    }
}
