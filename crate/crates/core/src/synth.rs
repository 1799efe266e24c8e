//! Forward sampling of the generative range-data model: synthetic
//! single-view scans with ground truth.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;

use crate::error::{Error, Result};
use crate::geometry::{orthonormal_basis, unit, Point3, Pose, UnitVec3, Vector3};
use crate::model::ObjectModel;
use crate::scan::{parse_pose, GroundTruth, Placement, RangeScan, TrueFeature};
use crate::textio::{content_lines, read_file, LineCursor};

/// Surface intensity `f(φ) = exp(2a(cos φ − 1))` for `cos φ = n·g`.
pub fn surface_intensity(a: f64, cos_phi: f64) -> f64 {
    (2.0 * a * (cos_phi - 1.0)).exp()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthParams {
    /// Falloff of the surface density with the angle between normal and gaze.
    pub a: f64,
    /// Background density (mm⁻³). Carried for completeness; outliers are
    /// generated by count.
    pub b: f64,
    pub noise_sigma: f64,
    pub outlier_count: usize,
    /// Depth-buffer pixel size (mm).
    pub pixel_pitch: f64,
    /// Number of visible surface samples drawn before the depth buffer.
    pub surface_point_budget: usize,
    pub rng_seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            a: 1.0,
            b: 1e-6,
            noise_sigma: 0.0,
            outlier_count: 0,
            pixel_pitch: 1.0,
            surface_point_budget: 8000,
            rng_seed: 0,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if !(self.a >= 0.0 && self.a.is_finite()) {
            return bad("a must be >= 0");
        }
        if !(self.b > 0.0) {
            return bad("b must be > 0");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be >= 0");
        }
        if !(self.pixel_pitch > 0.0 && self.pixel_pitch.is_finite()) {
            return bad("pixel_pitch must be > 0");
        }
        if self.surface_point_budget == 0 {
            return bad("surface_point_budget must be >= 1");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ScenePlacement<'a> {
    pub model: &'a ObjectModel,
    pub pose: Pose,
}

/// Posed meshes used for line-of-sight tests.
struct Occluders<'a> {
    posed: Vec<(&'a ObjectModel, Pose, Pose)>,
}

impl<'a> Occluders<'a> {
    fn new(placements: &[ScenePlacement<'a>]) -> Self {
        Occluders {
            posed: placements
                .iter()
                .map(|p| (p.model, p.pose, p.pose.inverse()))
                .collect(),
        }
    }

    /// Whether any object blocks the ray from `p` back towards the sensor.
    fn blocked(&self, p: &Point3, gaze: &UnitVec3) -> bool {
        let dir = -gaze.into_inner();
        self.posed.iter().any(|(m, _, inv)| {
            m.mesh()
                .ray_first_hit(&inv.apply(p), &inv.apply_vector(&dir), 1e-6, f64::INFINITY)
                .is_some()
        })
    }
}

/// Samples one object alone.
pub fn sample_object_scan(
    model: &ObjectModel,
    pose: &Pose,
    gaze: &UnitVec3,
    params: &SynthParams,
) -> Result<RangeScan> {
    compose_scene(&[ScenePlacement { model, pose: *pose }], gaze, params)
}

/// Samples every placement into one view, sharing a single depth buffer.
pub fn compose_scene(
    placements: &[ScenePlacement<'_>],
    gaze: &UnitVec3,
    params: &SynthParams,
) -> Result<RangeScan> {
    params.validate()?;
    if placements.is_empty() {
        return Err(Error::InvalidParameter("scene has no placements".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
    let occluders = Occluders::new(placements);

    // Every sensor-facing triangle of every posed object, weighted by
    // area times surface intensity.
    let mut tris: Vec<[Point3; 3]> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    for pl in placements {
        let mesh = pl.model.mesh();
        for ti in 0..mesh.triangles().len() {
            let n = pl.pose.apply_vector(&mesh.normals()[ti]);
            let c = n.dot(gaze);
            if c <= 0.0 {
                continue;
            }
            let w = mesh.triangle_area(ti) * surface_intensity(params.a, c);
            if w > 0.0 {
                tris.push(mesh.triangle(ti).map(|v| pl.pose.apply(&v)));
                weights.push(w);
            }
        }
    }
    if tris.is_empty() {
        return Err(Error::EmptyView);
    }
    let pick = WeightedIndex::new(&weights).map_err(|_| Error::EmptyView)?;

    let budget = params.surface_point_budget;
    let max_draws = budget.saturating_mul(50);
    let mut points = Vec::with_capacity(budget + params.outlier_count);
    let mut draws = 0usize;
    while points.len() < budget && draws < max_draws {
        draws += 1;
        let [a, b, c] = tris[pick.sample(&mut rng)];
        let (r1, r2): (f64, f64) = (rng.random(), rng.random());
        let s = r1.sqrt();
        let p =
            Point3::from(a.coords * (1.0 - s) + b.coords * (s * (1.0 - r2)) + c.coords * (s * r2));
        if !occluders.blocked(&p, gaze) {
            points.push(p);
        }
    }
    if points.is_empty() {
        return Err(Error::EmptyView);
    }

    if params.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, params.noise_sigma).expect("finite sigma");
        for p in &mut points {
            let e = Vector3::new(
                normal.sample(&mut rng),
                normal.sample(&mut rng),
                normal.sample(&mut rng),
            );
            *p += e;
        }
    }

    if params.outlier_count > 0 {
        let (lo, hi) = scene_bounds(placements, 0.1);
        for _ in 0..params.outlier_count {
            points.push(Point3::new(
                rng.random_range(lo.x..hi.x),
                rng.random_range(lo.y..hi.y),
                rng.random_range(lo.z..hi.z),
            ));
        }
    }

    let points = depth_buffer(&points, gaze, params.pixel_pitch);
    let scan = RangeScan::new(points, *gaze)?;
    Ok(scan.with_truth(ground_truth(placements, &occluders, gaze)))
}

/// Keeps the nearest point (smallest depth along the gaze) per pixel of a
/// grid of pitch `pitch` perpendicular to the gaze. Survivors keep their
/// input order.
pub fn depth_buffer(points: &[Point3], gaze: &UnitVec3, pitch: f64) -> Vec<Point3> {
    let (e1, e2) = orthonormal_basis(gaze);
    let mut best: HashMap<(i64, i64), (f64, usize)> = HashMap::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        let key = pixel_of(p, &e1, &e2, pitch);
        let depth = p.coords.dot(gaze);
        best.entry(key)
            .and_modify(|b| {
                if depth < b.0 {
                    *b = (depth, i);
                }
            })
            .or_insert((depth, i));
    }
    let mut keep: Vec<usize> = best.values().map(|b| b.1).collect();
    keep.sort_unstable();
    keep.into_iter().map(|i| points[i]).collect()
}

/// Depth-buffer pixel of a point for the basis returned by
/// [`orthonormal_basis`] of the gaze.
pub fn pixel_of(p: &Point3, e1: &Vector3, e2: &Vector3, pitch: f64) -> (i64, i64) {
    (
        (p.coords.dot(e1) / pitch).floor() as i64,
        (p.coords.dot(e2) / pitch).floor() as i64,
    )
}

/// Union of the posed bounding boxes, each side grown by `inflate` times the
/// extent (split evenly on both ends).
pub fn scene_bounds(placements: &[ScenePlacement<'_>], inflate: f64) -> (Point3, Point3) {
    let mut lo = Point3::from([f64::INFINITY; 3]);
    let mut hi = Point3::from([f64::NEG_INFINITY; 3]);
    for pl in placements {
        for v in pl.model.mesh().vertices() {
            let w = pl.pose.apply(v);
            for k in 0..3 {
                lo[k] = lo[k].min(w[k]);
                hi[k] = hi[k].max(w[k]);
            }
        }
    }
    for k in 0..3 {
        let grow = 0.5 * inflate * (hi[k] - lo[k]);
        lo[k] -= grow;
        hi[k] += grow;
    }
    (lo, hi)
}

fn ground_truth(
    placements: &[ScenePlacement<'_>],
    occluders: &Occluders<'_>,
    gaze: &UnitVec3,
) -> GroundTruth {
    let mut truth = GroundTruth::default();
    for pl in placements {
        let class_id = pl.model.class_id();
        truth.placements.push(Placement {
            class_id,
            pose: pl.pose,
        });
        for f in pl.model.features() {
            let location = pl.pose.apply(&f.location);
            truth.features.push(TrueFeature {
                class_id,
                shape: f.shape,
                location,
                visible: !occluders.blocked(&location, gaze),
            });
        }
    }
    truth
}

/// Parsed scene description: model files with poses and an optional gaze.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneDescription {
    pub gaze: Option<UnitVec3>,
    pub places: Vec<(PathBuf, Pose)>,
}

impl SceneDescription {
    /// Lines `place <model_file> qw qx qy qz tx ty tz` and optionally one
    /// `gaze gx gy gz`. Relative model paths resolve against the scene file's
    /// directory.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let base = path.parent().unwrap_or(Path::new(""));
        let mut gaze = None;
        let mut places = Vec::new();
        for (line, l) in content_lines(text) {
            let cur = LineCursor { path, line };
            let mut toks = l.split_whitespace();
            match toks.next() {
                Some("place") => {
                    let file = toks.next().ok_or_else(|| cur.err("missing model file"))?;
                    let pose = parse_pose(&cur, &mut toks)?;
                    places.push((base.join(file), pose));
                }
                Some("gaze") => {
                    let gx = cur.finite(toks.next(), "gx")?;
                    let gy = cur.finite(toks.next(), "gy")?;
                    let gz = cur.finite(toks.next(), "gz")?;
                    gaze = Some(unit(gx, gy, gz).map_err(|e| cur.err(e.to_string()))?);
                }
                Some(other) => return Err(cur.err(format!("unknown record '{other}'"))),
                None => unreachable!(),
            }
            cur.done(toks)?;
        }
        if places.is_empty() {
            return Err(Error::parse(path, 0, "scene has no 'place' lines"));
        }
        Ok(SceneDescription { gaze, places })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_file(path)?, path)
    }
}
