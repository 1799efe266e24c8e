//! Range scans (one view of a scene) and their optional ground truth.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion};

use crate::error::{Error, Result};
use crate::geometry::{unit, Point3, Pose, UnitVec3, Vector3};
use crate::textio::{content_lines, read_file, LineCursor};

/// Placement of one object in a synthetic scene.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Placement {
    pub class_id: u32,
    pub pose: Pose,
}

/// A model feature carried into the scene by a placement.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrueFeature {
    pub class_id: u32,
    pub shape: u32,
    /// Posed location (scene frame).
    pub location: Point3,
    /// Not occluded along the line of sight.
    pub visible: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GroundTruth {
    pub placements: Vec<Placement>,
    pub features: Vec<TrueFeature>,
}

/// Data points `D` of one view plus the sensor gaze `g`.
#[derive(Clone, Debug)]
pub struct RangeScan {
    points: Vec<Point3>,
    gaze: UnitVec3,
    truth: Option<GroundTruth>,
}

impl RangeScan {
    pub fn new(points: Vec<Point3>, gaze: UnitVec3) -> Result<Self> {
        if ((gaze.norm() - 1.0).abs()) > 1e-9 {
            return Err(Error::InvalidScan("gaze is not unit length".into()));
        }
        let mut seen = HashSet::with_capacity(points.len());
        for p in &points {
            if !p.coords.iter().all(|c| c.is_finite()) {
                return Err(Error::InvalidScan(format!("non-finite point {p:?}")));
            }
            let key = p.coords.map(|c| (c + 0.0).to_bits());
            if !seen.insert((key.x, key.y, key.z)) {
                return Err(Error::InvalidScan(format!("duplicate point {p:?}")));
            }
        }
        Ok(RangeScan {
            points,
            gaze,
            truth: None,
        })
    }

    pub fn with_truth(mut self, truth: GroundTruth) -> Self {
        self.truth = Some(truth);
        self
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn gaze(&self) -> &UnitVec3 {
        &self.gaze
    }

    pub fn truth(&self) -> Option<&GroundTruth> {
        self.truth.as_ref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Copy keeping only points for which `keep` returns true. Ground truth is
    /// carried over unchanged.
    pub fn retain(&self, mut keep: impl FnMut(usize, &Point3) -> bool) -> RangeScan {
        RangeScan {
            points: self
                .points
                .iter()
                .enumerate()
                .filter(|(i, p)| keep(*i, p))
                .map(|(_, p)| *p)
                .collect(),
            gaze: self.gaze,
            truth: self.truth.clone(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(32 * (self.points.len() + 1));
        let g = self.gaze;
        writeln!(out, "gaze {} {} {}", g.x, g.y, g.z).unwrap();
        for p in &self.points {
            writeln!(out, "p {} {} {}", p.x, p.y, p.z).unwrap();
        }
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut lines = content_lines(text);
        let (line, header) = lines
            .next()
            .ok_or_else(|| Error::parse(path, 1, "empty scan file"))?;
        let cur = LineCursor { path, line };
        let mut toks = header.split_whitespace();
        if toks.next() != Some("gaze") {
            return Err(cur.err("expected header 'gaze gx gy gz'"));
        }
        let gx = cur.finite(toks.next(), "gx")?;
        let gy = cur.finite(toks.next(), "gy")?;
        let gz = cur.finite(toks.next(), "gz")?;
        cur.done(toks)?;
        let norm = Vector3::new(gx, gy, gz).norm();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(cur.err(format!("gaze must be a unit vector (norm {norm})")));
        }
        let gaze = unit(gx, gy, gz).map_err(|e| cur.err(e.to_string()))?;

        let mut points = Vec::new();
        for (line, l) in lines {
            let cur = LineCursor { path, line };
            let mut toks = l.split_whitespace();
            if toks.next() != Some("p") {
                return Err(cur.err("expected 'p x y z'"));
            }
            let x = cur.finite(toks.next(), "x")?;
            let y = cur.finite(toks.next(), "y")?;
            let z = cur.finite(toks.next(), "z")?;
            cur.done(toks)?;
            points.push(Point3::new(x, y, z));
        }
        RangeScan::new(points, gaze).map_err(|e| Error::parse(path, 0, e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_file(path)?, path)
    }
}

impl GroundTruth {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for p in &self.placements {
            let q = p.pose.quaternion();
            let t = p.pose.translation;
            writeln!(
                out,
                "placement {} {} {} {} {} {} {} {}",
                p.class_id, q.w, q.i, q.j, q.k, t.x, t.y, t.z
            )
            .unwrap();
        }
        for f in &self.features {
            let l = f.location;
            writeln!(
                out,
                "feature {} {} {} {} {} {}",
                f.class_id, f.shape, f.visible as u8, l.x, l.y, l.z
            )
            .unwrap();
        }
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut truth = GroundTruth::default();
        for (line, l) in content_lines(text) {
            let cur = LineCursor { path, line };
            let mut toks = l.split_whitespace();
            match toks.next() {
                Some("placement") => {
                    let class_id: u32 = cur.num(toks.next(), "class id")?;
                    let pose = parse_pose(&cur, &mut toks)?;
                    truth.placements.push(Placement { class_id, pose });
                }
                Some("feature") => {
                    let class_id: u32 = cur.num(toks.next(), "class id")?;
                    let shape: u32 = cur.num(toks.next(), "shape class")?;
                    let visible: u8 = cur.num(toks.next(), "visibility flag")?;
                    let x = cur.finite(toks.next(), "x")?;
                    let y = cur.finite(toks.next(), "y")?;
                    let z = cur.finite(toks.next(), "z")?;
                    truth.features.push(TrueFeature {
                        class_id,
                        shape,
                        location: Point3::new(x, y, z),
                        visible: visible != 0,
                    });
                }
                Some(other) => return Err(cur.err(format!("unknown record '{other}'"))),
                None => unreachable!(),
            }
            cur.done(toks)?;
        }
        Ok(truth)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_file(path)?, path)
    }
}

/// Reads `qw qx qy qz tx ty tz`; the quaternion is normalised after checking
/// it is close to unit length.
pub(crate) fn parse_pose<'a>(
    cur: &LineCursor,
    toks: &mut impl Iterator<Item = &'a str>,
) -> Result<Pose> {
    let mut v = [0.0; 7];
    for (i, name) in ["qw", "qx", "qy", "qz", "tx", "ty", "tz"]
        .iter()
        .enumerate()
    {
        v[i] = cur.finite(toks.next(), name)?;
    }
    let q = Quaternion::new(v[0], v[1], v[2], v[3]);
    let n = q.norm();
    if (n - 1.0).abs() > 1e-6 {
        return Err(cur.err(format!("quaternion must be unit length (norm {n})")));
    }
    Ok(Pose::from_quaternion(
        UnitQuaternion::from_quaternion(q),
        Vector3::new(v[4], v[5], v[6]),
    ))
}

/// Path of the ground-truth file written next to a scan.
pub fn truth_path(scan_path: &Path) -> std::path::PathBuf {
    let mut name = scan_path.file_name().unwrap_or_default().to_os_string();
    name.push(".truth");
    scan_path.with_file_name(name)
}
