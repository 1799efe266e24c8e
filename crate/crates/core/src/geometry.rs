//! Points, poses and the rigid solver shared by every other module.
//!
//! Lengths are millimetres throughout. Rotations are kept as proper
//! rotation matrices; quaternions only appear at file boundaries.

use std::cmp::Ordering;

use nalgebra::{Matrix3, Rotation3, Unit, UnitQuaternion};

use crate::error::{Error, Result};

pub type Point3 = nalgebra::Point3<f64>;
pub type Vector3 = nalgebra::Vector3<f64>;
pub type UnitVec3 = Unit<Vector3>;

/// Minimum triangle area (mm²) for a triple to fix a pose.
pub const MIN_TRIPLE_AREA: f64 = 1e-6;

/// Rigid transform `x ↦ rotation·x + translation`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub rotation: Rotation3<f64>,
    pub translation: Vector3,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: Rotation3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Rotation3<f64>, translation: Vector3) -> Self {
        Pose {
            rotation,
            translation,
        }
    }

    pub fn from_quaternion(q: UnitQuaternion<f64>, translation: Vector3) -> Self {
        Pose {
            rotation: q.to_rotation_matrix(),
            translation,
        }
    }

    /// Builds a pose from a raw 3×3 matrix, rejecting anything that is not a
    /// proper rotation within `1e-9`.
    pub fn try_from_matrix(m: Matrix3<f64>, translation: Vector3) -> Result<Self> {
        let ortho = (m.transpose() * m - Matrix3::identity()).amax();
        let det = m.determinant();
        if !ortho.is_finite() || ortho > 1e-9 || (det - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "rotation is not orthonormal with det +1 (orthogonality error {ortho:e}, det {det})"
            )));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite translation".into()));
        }
        Ok(Pose {
            rotation: Rotation3::from_matrix_unchecked(m),
            translation,
        })
    }

    pub fn quaternion(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_rotation_matrix(&self.rotation)
    }

    #[inline]
    pub fn apply(&self, p: &Point3) -> Point3 {
        self.rotation * p + self.translation
    }

    #[inline]
    pub fn apply_vector(&self, v: &Vector3) -> Vector3 {
        self.rotation * v
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.inverse();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Angle (radians) of the relative rotation between two poses.
    pub fn rotation_angle_to(&self, other: &Pose) -> f64 {
        rotation_angle(&(self.rotation.inverse() * other.rotation))
    }

    pub fn translation_distance_to(&self, other: &Pose) -> f64 {
        (self.translation - other.translation).norm()
    }

    /// Lexicographic order on (translation, rotation entries), used only for
    /// deterministic tie-breaking.
    pub fn lex_cmp(&self, other: &Pose) -> Ordering {
        let a = self.translation.iter().chain(self.rotation.matrix().iter());
        let b = other
            .translation
            .iter()
            .chain(other.rotation.matrix().iter());
        for (x, y) in a.zip(b) {
            match x.total_cmp(y) {
                Ordering::Equal => continue,
                ord => return ord,
            }
        }
        Ordering::Equal
    }
}

/// `rotation·pt + translation`.
pub fn apply_pose(pose: &Pose, pt: &Point3) -> Point3 {
    pose.apply(pt)
}

/// Rotation angle in `[0, π]`, computed from the trace with a clamp so that
/// rounding never produces NaN.
pub fn rotation_angle(r: &Rotation3<f64>) -> f64 {
    let c = ((r.matrix().trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    // acos loses precision near 0; use the quaternion form there.
    if c > 0.999 {
        let q = UnitQuaternion::from_rotation_matrix(r);
        2.0 * q.imag().norm().atan2(q.w.abs())
    } else {
        c.acos()
    }
}

pub fn triangle_area(a: &Point3, b: &Point3, c: &Point3) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

/// Least-squares rigid pose mapping `src[i]` onto `dst[i]`.
///
/// The rotation is the proper rotation closest in Frobenius norm to the
/// cross-covariance of the centred triples, i.e. the orthogonalised match
/// transform.
pub fn solve_rigid_from_triple(src: &[Point3; 3], dst: &[Point3; 3]) -> Result<Pose> {
    if triangle_area(&src[0], &src[1], &src[2]) <= MIN_TRIPLE_AREA {
        return Err(Error::DegenerateTriple("source triple is collinear"));
    }
    if triangle_area(&dst[0], &dst[1], &dst[2]) <= MIN_TRIPLE_AREA {
        return Err(Error::DegenerateTriple("target triple is collinear"));
    }
    let cs = centroid(src);
    let cd = centroid(dst);
    let mut h = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (s - cs) * (d - cd).transpose();
    }
    let svd = h.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::DegenerateTriple("SVD did not converge")),
    };
    let v = v_t.transpose();
    let mut fix = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        fix[(2, 2)] = -1.0;
    }
    let r = v * fix * u.transpose();
    let rotation = Rotation3::from_matrix_unchecked(r);
    let translation = cd.coords - rotation * cs.coords;
    Ok(Pose {
        rotation,
        translation,
    })
}

/// RMS distance between `pose·src[i]` and `dst[i]`.
pub fn triple_rms_residual(pose: &Pose, src: &[Point3; 3], dst: &[Point3; 3]) -> f64 {
    let ss: f64 = src
        .iter()
        .zip(dst)
        .map(|(s, d)| (pose.apply(s) - d).norm_squared())
        .sum();
    (ss / 3.0).sqrt()
}

pub fn centroid(pts: &[Point3]) -> Point3 {
    let mut acc = Vector3::zeros();
    for p in pts {
        acc += p.coords;
    }
    Point3::from(acc / pts.len() as f64)
}

/// Closest point on triangle `abc` to `p` (Ericson, Real-Time Collision
/// Detection, 5.1.5).
pub fn closest_point_on_triangle(p: &Point3, a: &Point3, b: &Point3, c: &Point3) -> Point3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

/// Möller–Trumbore ray/triangle intersection. Returns the ray parameter of
/// the hit if it lies in `(t_min, t_max)`.
pub fn ray_triangle(
    origin: &Point3,
    dir: &Vector3,
    a: &Point3,
    b: &Point3,
    c: &Point3,
    t_min: f64,
    t_max: f64,
) -> Option<f64> {
    let e1 = b - a;
    let e2 = c - a;
    let pvec = dir.cross(&e2);
    let det = e1.dot(&pvec);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let tvec = origin - a;
    let u = tvec.dot(&pvec) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let qvec = tvec.cross(&e1);
    let v = dir.dot(&qvec) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&qvec) * inv;
    (t > t_min && t < t_max).then_some(t)
}

/// Two unit vectors spanning the plane orthogonal to `n`.
pub fn orthonormal_basis(n: &UnitVec3) -> (Vector3, Vector3) {
    let helper = if n.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let u = n.cross(&helper).normalize();
    let v = n.cross(&u);
    (u, v)
}

pub fn unit(x: f64, y: f64, z: f64) -> Result<UnitVec3> {
    let v = Vector3::new(x, y, z);
    let n = v.norm();
    if !n.is_finite() || n < 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "cannot normalise vector ({x}, {y}, {z})"
        )));
    }
    Ok(Unit::new_unchecked(v / n))
}
