//! Experiment plumbing: synthetic scene suites, training-set extraction,
//! rank statistics and pose errors.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::{Rotation3, Unit, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{Config, TrainingConfig};
use crate::curvature::{c_score, fit_quadric_indexed};
use crate::error::{Error, Result};
use crate::geometry::{rotation_angle, Pose, UnitVec3, Vector3};
use crate::index::{build_index, GeomHashIndex};
use crate::likelihood::LikelihoodParams;
use crate::model::ObjectModel;
use crate::neighbors::PointIndex;
use crate::relation::{train_density, DeltaSample, DensityModel, RelationConfig, TetraSampler};
use crate::scan::{GroundTruth, RangeScan, TrueFeature};
use crate::search::{
    point_seed, recognize, recognize_sequential, record_grouping_feedback, score_points,
    SearchConfig,
};
use crate::shapes;
use crate::synth::{compose_scene, ScenePlacement, SynthParams};

/// Recognition succeeds within these bounds.
pub const MAX_ROTATION_DEG: f64 = 3.0;
pub const MAX_TRANSLATION_MM: f64 = 5.0;
/// A visible feature counts as observed when a scan point lies this close
/// (mm).
pub const OBSERVED_TOL: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseError {
    /// Angle of the relative rotation (rad).
    pub rotation: f64,
    /// Distance between translations (mm).
    pub translation: f64,
}

impl PoseError {
    pub fn within(&self, max_deg: f64, max_mm: f64) -> bool {
        self.rotation.to_degrees() < max_deg && self.translation < max_mm
    }
}

/// Error of `est` against `truth`, taking the smallest rotation error over
/// the model's symmetries (translation error of that same symmetric pose).
pub fn pose_error(est: &Pose, truth: &Pose, symmetries: &[Pose]) -> PoseError {
    let identity = [Pose::identity()];
    let syms = if symmetries.is_empty() {
        &identity[..]
    } else {
        symmetries
    };
    syms.iter()
        .map(|s| {
            let t = truth.compose(s);
            PoseError {
                rotation: rotation_angle(&(est.rotation.inverse() * t.rotation)),
                translation: (est.translation - t.translation).norm(),
            }
        })
        .min_by(|a, b| {
            a.rotation
                .total_cmp(&b.rotation)
                .then(a.translation.total_cmp(&b.translation))
        })
        .expect("at least the identity")
}

/// Rank of each picked score among all scores: `1 - (#strictly greater)/(N-1)`,
/// so the best score has rank 1 and the worst rank 0.
pub fn normalized_ranks(scores: &[f64], picks: &[usize]) -> Vec<f64> {
    let mut sorted: Vec<f64> = scores.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let denom = (scores.len().max(2) - 1) as f64;
    picks
        .iter()
        .map(|&i| {
            let v = scores[i];
            let greater = sorted.partition_point(|x| x.total_cmp(&v).is_gt());
            1.0 - greater as f64 / denom
        })
        .collect()
}

/// Ranks of true feature values with a histogram over `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RankReport {
    pub label: String,
    pub ranks: Vec<f64>,
    pub histogram: Vec<u64>,
}

impl RankReport {
    pub fn new(label: &str, ranks: Vec<f64>, bins: usize) -> Self {
        let bins = bins.max(1);
        let mut histogram = vec![0u64; bins];
        for &r in &ranks {
            let b = ((r * bins as f64).floor() as usize).min(bins - 1);
            histogram[b] += 1;
        }
        RankReport {
            label: label.to_string(),
            ranks,
            histogram,
        }
    }

    pub fn median(&self) -> f64 {
        if self.ranks.is_empty() {
            return f64::NAN;
        }
        let mut r = self.ranks.clone();
        r.sort_by(f64::total_cmp);
        let n = r.len();
        if n % 2 == 1 {
            r[n / 2]
        } else {
            0.5 * (r[n / 2 - 1] + r[n / 2])
        }
    }

    pub fn fraction_below(&self, x: f64) -> f64 {
        if self.ranks.is_empty() {
            return f64::NAN;
        }
        self.ranks.iter().filter(|&&r| r < x).count() as f64 / self.ranks.len() as f64
    }

    /// `rank_lo,rank_hi,count,frequency` rows, frequency normalised by bin
    /// width so the histogram integrates to one.
    pub fn to_csv(&self) -> String {
        let bins = self.histogram.len();
        let total = self.ranks.len().max(1) as f64;
        let mut s = String::from("rank_lo,rank_hi,count,frequency\n");
        for (i, &c) in self.histogram.iter().enumerate() {
            let lo = i as f64 / bins as f64;
            let hi = (i + 1) as f64 / bins as f64;
            s.push_str(&format!(
                "{lo},{hi},{c},{}\n",
                c as f64 / total * bins as f64
            ));
        }
        s
    }
}

/// The test objects: a notched cube (class 1) and its bottom layer, a
/// cross-shaped slab (class 2).
pub fn test_objects(size: f64, notch: f64) -> Result<Vec<ObjectModel>> {
    Ok(vec![
        ObjectModel::from_shape(1, shapes::notched_cube(size, notch))?,
        ObjectModel::from_shape(2, shapes::cross_slab(size, notch))?,
    ])
}

/// Sensor gaze used by the generated suites.
pub fn default_gaze() -> UnitVec3 {
    Unit::new_normalize(Vector3::new(0.0, 0.0, 1.0))
}

fn random_rotation(rng: &mut impl Rng) -> Rotation3<f64> {
    // Shoemake's uniform quaternion.
    let (u1, u2, u3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
    let tau = std::f64::consts::TAU;
    let q = nalgebra::Quaternion::new(
        (1.0 - u1).sqrt() * (tau * u2).cos(),
        (1.0 - u1).sqrt() * (tau * u2).sin(),
        u1.sqrt() * (tau * u3).sin(),
        u1.sqrt() * (tau * u3).cos(),
    );
    UnitQuaternion::from_quaternion(q).to_rotation_matrix()
}

/// Yaw about the gaze axis followed by a tilt of at most `max_tilt` rad.
fn facing_rotation(rng: &mut impl Rng, max_tilt: f64) -> Rotation3<f64> {
    let yaw = Rotation3::from_axis_angle(
        &Vector3::z_axis(),
        rng.random_range(0.0..std::f64::consts::TAU),
    );
    let az: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let axis = Unit::new_normalize(Vector3::new(az.cos(), az.sin(), 0.0));
    Rotation3::from_axis_angle(&axis, rng.random_range(0.0..max_tilt)) * yaw
}

/// One object in a random orientation at the origin.
pub fn random_single_scene(
    model: &ObjectModel,
    params: &SynthParams,
    seed: u64,
) -> Result<RangeScan> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pose = Pose::new(random_rotation(&mut rng), Vector3::zeros());
    let mut p = params.clone();
    p.rng_seed = rng.random();
    compose_scene(&[ScenePlacement { model, pose }], &default_gaze(), &p)
}

/// The first model in a random orientation at the origin and the second,
/// roughly facing the sensor, beside it at a random bearing.
pub fn random_pair_scene(
    models: &[ObjectModel],
    params: &SynthParams,
    seed: u64,
) -> Result<RangeScan> {
    if models.len() < 2 {
        return Err(Error::InvalidParameter(
            "pair scene needs two models".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = Pose::new(random_rotation(&mut rng), Vector3::zeros());
    let bearing: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let dist = rng.random_range(170.0..200.0);
    let second = Pose::new(
        facing_rotation(&mut rng, 35f64.to_radians()),
        Vector3::new(
            dist * bearing.cos(),
            dist * bearing.sin(),
            rng.random_range(-20.0..20.0),
        ),
    );
    let mut p = params.clone();
    p.rng_seed = rng.random();
    compose_scene(
        &[
            ScenePlacement {
                model: &models[0],
                pose: first,
            },
            ScenePlacement {
                model: &models[1],
                pose: second,
            },
        ],
        &default_gaze(),
        &p,
    )
}

/// Scan points standing in for the visible true features: the nearest point
/// within `tol` of each feature location, as `(shape, point index)`.
pub fn true_feature_points(scan: &RangeScan, index: &PointIndex, tol: f64) -> Vec<(u32, usize)> {
    let Some(truth) = scan.truth() else {
        return Vec::new();
    };
    truth
        .features
        .iter()
        .filter(|f| f.visible)
        .filter_map(|f| match index.nearest(&f.location) {
            Some((d, i)) if d <= tol => Some((f.shape, i)),
            _ => None,
        })
        .collect()
}

/// Visible true features with a scan point within [`OBSERVED_TOL`].
pub fn observed_features(scan: &RangeScan, index: &PointIndex) -> Vec<TrueFeature> {
    let Some(truth) = scan.truth() else {
        return Vec::new();
    };
    truth
        .features
        .iter()
        .filter(|f| {
            f.visible
                && index
                    .nearest(&f.location)
                    .is_some_and(|(d, _)| d <= OBSERVED_TOL)
        })
        .copied()
        .collect()
}

/// Training samples per class (index 0 = non-feature) from labelled scans.
/// Feature classes draw `per_location` samples centred on each observed
/// true feature location;
/// class 0 draws at `negatives` random points per scan lying farther than
/// `R` from every true feature.
pub fn collect_training(
    scans: &[RangeScan],
    cfg: &RelationConfig,
    classes: usize,
    per_location: usize,
    negatives: usize,
    seed: u64,
) -> Result<Vec<Vec<DeltaSample>>> {
    cfg.validate()?;
    let draw_cfg = RelationConfig {
        sample_len: per_location,
        ..cfg.clone()
    };
    let per_scan: Vec<Vec<Vec<DeltaSample>>> = scans
        .par_iter()
        .enumerate()
        .map(|(si, scan)| {
            let sampler = TetraSampler::new(scan);
            let mut out = vec![Vec::new(); classes + 1];
            let truth = scan.truth().cloned().unwrap_or_default();
            for (k, f) in observed_features(scan, sampler.index())
                .into_iter()
                .enumerate()
            {
                if f.shape as usize > classes {
                    continue;
                }
                let s = point_seed(seed ^ 0xFEA7, si * 1_000_003 + k);
                out[f.shape as usize].extend(sampler.sample(&f.location, &draw_cfg, s));
            }
            let far: Vec<usize> = (0..scan.len())
                .filter(|&i| {
                    truth
                        .features
                        .iter()
                        .all(|f| (f.location - scan.points()[i]).norm() > cfg.radius)
                })
                .collect();
            let mut rng = ChaCha8Rng::seed_from_u64(point_seed(seed, si));
            if !far.is_empty() {
                let neg_cfg = RelationConfig {
                    sample_len: per_location.min(cfg.sample_len.max(1) * 4),
                    ..cfg.clone()
                };
                for _ in 0..negatives {
                    let i = far[rng.random_range(0..far.len())];
                    out[0].extend(sampler.sample(&scan.points()[i], &neg_cfg, rng.random()));
                }
            }
            out
        })
        .collect();
    let mut merged = vec![Vec::new(); classes + 1];
    for s in per_scan {
        for (k, v) in s.into_iter().enumerate() {
            merged[k].extend(v);
        }
    }
    Ok(merged)
}

/// Class-0 samples drawn at the `per_scan` highest-scoring points of each
/// scan that lie farther than `R` from every true feature. Points at least
/// `R` apart are taken, best first.
pub fn hard_negatives(
    scans: &[RangeScan],
    dm: &DensityModel,
    per_scan: usize,
    samples_per_location: usize,
    seed: u64,
) -> Vec<DeltaSample> {
    let cfg = dm.config();
    let draw_cfg = RelationConfig {
        sample_len: samples_per_location,
        ..cfg.clone()
    };
    scans
        .iter()
        .enumerate()
        .flat_map(|(si, scan)| {
            let truth = scan.truth().cloned().unwrap_or_default();
            let scores = score_points(scan, dm, point_seed(seed, si));
            let mut order: Vec<(f64, usize)> = scores
                .iter()
                .enumerate()
                .filter(|(i, _)| {
                    truth
                        .features
                        .iter()
                        .all(|f| (f.location - scan.points()[*i]).norm() > cfg.radius)
                })
                .map(|(i, v)| (v.iter().copied().fold(f64::NEG_INFINITY, f64::max), i))
                .collect();
            order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            let mut picked: Vec<usize> = Vec::new();
            for (_, i) in order {
                if picked.len() >= per_scan {
                    break;
                }
                let p = scan.points()[i];
                if picked
                    .iter()
                    .all(|&j| (scan.points()[j] - p).norm() >= cfg.radius)
                {
                    picked.push(i);
                }
            }
            let sampler = TetraSampler::new(scan);
            picked
                .into_iter()
                .flat_map(|i| {
                    sampler.sample(
                        &scan.points()[i],
                        &draw_cfg,
                        point_seed(seed ^ 0x4E47, si * 1_000_003 + i),
                    )
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Φ and C ranks of the visible true features of one scan among all of the
/// scan's feature values.
pub fn scan_ranks(
    scan: &RangeScan,
    dm: &DensityModel,
    curvature_radius: f64,
    seed: u64,
) -> (Vec<f64>, Vec<f64>) {
    let index = PointIndex::new(scan.points());
    let truth = true_feature_points(scan, &index, OBSERVED_TOL);
    if truth.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let m = dm.classes();
    let phi = score_points(scan, dm, seed);
    let curv: Vec<Vec<f64>> = scan
        .points()
        .par_iter()
        .map(|p| {
            let pair = fit_quadric_indexed(scan, &index, p, curvature_radius).ok();
            (1..=m as u32)
                .map(|s| {
                    pair.and_then(|c| c_score(s, &c).ok())
                        .unwrap_or(f64::NEG_INFINITY)
                })
                .collect()
        })
        .collect();
    let flat = |v: &[Vec<f64>]| -> Vec<f64> { v.iter().flatten().copied().collect() };
    let picks: Vec<usize> = truth
        .iter()
        .filter(|(s, _)| (*s as usize) <= m)
        .map(|&(s, i)| i * m + s as usize - 1)
        .collect();
    (
        normalized_ranks(&flat(&phi), &picks),
        normalized_ranks(&flat(&curv), &picks),
    )
}

/// Density model from labelled scans. With `hard_negatives > 0` a second
/// pass mines the highest-scoring non-feature points under the first model
/// and retrains with them added to class 0.
pub fn train_from_scans(
    scans: &[RangeScan],
    relation: &RelationConfig,
    alpha: f64,
    training: &TrainingConfig,
    classes: usize,
    seed: u64,
) -> Result<DensityModel> {
    let mut samples = collect_training(
        scans,
        relation,
        classes,
        training.samples_per_location,
        training.negatives,
        seed,
    )?;
    let dm = train_density(&samples, relation, alpha)?;
    if training.hard_negatives == 0 {
        return Ok(dm);
    }
    let per_location = training
        .samples_per_location
        .min(relation.sample_len.max(1) * 4);
    samples[0].extend(hard_negatives(
        scans,
        &dm,
        training.hard_negatives,
        per_location,
        seed ^ 0x4A7D,
    ));
    train_density(&samples, relation, alpha)
}

/// Judges pose estimates against ground truth modulo model symmetry.
#[derive(Clone, Debug)]
pub struct PoseJudge {
    symmetries: BTreeMap<u32, Vec<Pose>>,
    pub max_deg: f64,
    pub max_mm: f64,
}

impl PoseJudge {
    pub fn new(models: &[ObjectModel], max_deg: f64, max_mm: f64) -> Self {
        PoseJudge {
            symmetries: models
                .iter()
                .map(|m| (m.class_id(), m.symmetries()))
                .collect(),
            max_deg,
            max_mm,
        }
    }

    /// Smallest error against any placement of `class_id`, with that
    /// placement's position in the truth.
    pub fn error(
        &self,
        class_id: u32,
        pose: &Pose,
        truth: &GroundTruth,
    ) -> Option<(usize, PoseError)> {
        let syms = self
            .symmetries
            .get(&class_id)
            .map_or(&[][..], Vec::as_slice);
        truth
            .placements
            .iter()
            .enumerate()
            .filter(|(_, p)| p.class_id == class_id)
            .map(|(i, p)| (i, pose_error(pose, &p.pose, syms)))
            .min_by(|a, b| a.1.rotation.total_cmp(&b.1.rotation))
    }

    /// The placement matched by an estimate within both bounds.
    pub fn matched(&self, class_id: u32, pose: &Pose, truth: &GroundTruth) -> Option<usize> {
        let syms = self
            .symmetries
            .get(&class_id)
            .map_or(&[][..], Vec::as_slice);
        truth.placements.iter().position(|p| {
            p.class_id == class_id
                && pose_error(pose, &p.pose, syms).within(self.max_deg, self.max_mm)
        })
    }

    pub fn knows(&self, class_id: u32) -> bool {
        self.symmetries.contains_key(&class_id)
    }
}

/// Learns grouping weights: every hypothesis evaluated on each labelled
/// scan (up to `cfg.max_hypotheses`, nothing accepted) counts as a draw of
/// its entry, and as a success when it matches the truth.
#[allow(clippy::too_many_arguments)]
pub fn learn_grouping(
    index: &mut GeomHashIndex,
    scans: &[RangeScan],
    models: &[ObjectModel],
    dm: &DensityModel,
    lp: &LikelihoodParams,
    cfg: &SearchConfig,
    judge: &PoseJudge,
    seed: u64,
) -> Result<()> {
    let probe = SearchConfig {
        theta: f64::INFINITY,
        best_effort: false,
        ..cfg.clone()
    };
    for (k, scan) in scans.iter().enumerate() {
        let truth = scan
            .truth()
            .ok_or_else(|| Error::InvalidScan("grouping feedback needs ground truth".into()))?
            .clone();
        let r = recognize(scan, models, dm, index, lp, &probe, point_seed(seed, k))?;
        record_grouping_feedback(index, &r.log, |h| {
            judge.matched(h.class_id, &h.pose, &truth).is_some()
        })?;
    }
    Ok(())
}

/// Outcome of sequential recognition on one scene.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneRecord {
    pub scene: String,
    /// Whether the truth holds any object the index knows.
    pub has_objects: bool,
    /// Class and pose of the first accepted object.
    pub first: Option<(u32, Pose)>,
    /// First object within the error bounds.
    pub first_ok: bool,
    /// Error of the first object against the nearest placement of its class.
    pub first_error: Option<PoseError>,
    /// A second, different object within the bounds.
    pub second_ok: bool,
    pub evaluations: usize,
    pub wall_seconds: f64,
}

/// Runs sequential recognition on a labelled scan and scores it.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_scene(
    name: &str,
    scan: &RangeScan,
    models: &[ObjectModel],
    dm: &DensityModel,
    index: &GeomHashIndex,
    lp: &LikelihoodParams,
    cfg: &SearchConfig,
    judge: &PoseJudge,
    max_objects: usize,
    seed: u64,
) -> Result<SceneRecord> {
    let truth = scan
        .truth()
        .ok_or_else(|| Error::InvalidScan(format!("{name}: no ground truth")))?
        .clone();
    let start = Instant::now();
    let results = recognize_sequential(scan, models, dm, index, lp, cfg, seed, max_objects)?;
    let wall_seconds = start.elapsed().as_secs_f64();
    let found: Vec<(u32, Pose)> = results
        .iter()
        .filter(|r| r.outcome.is_accepted())
        .filter_map(|r| r.outcome.found())
        .collect();
    let first = found.first().copied();
    let first_match = first.and_then(|(c, p)| judge.matched(c, &p, &truth));
    let second_ok = match (first_match, found.get(1)) {
        (Some(a), Some((c, p))) => judge.matched(*c, p, &truth).is_some_and(|b| b != a),
        _ => false,
    };
    Ok(SceneRecord {
        scene: name.to_string(),
        has_objects: truth.placements.iter().any(|p| judge.knows(p.class_id)),
        first,
        first_ok: first_match.is_some(),
        first_error: first
            .and_then(|(c, p)| judge.error(c, &p, &truth))
            .map(|(_, e)| e),
        second_ok,
        evaluations: results.iter().map(|r| r.evaluations).sum(),
        wall_seconds,
    })
}

/// Per-scene records of a recognition suite.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RecognitionReport {
    pub records: Vec<SceneRecord>,
}

impl RecognitionReport {
    fn scored(&self) -> impl Iterator<Item = &SceneRecord> {
        self.records.iter().filter(|r| r.has_objects)
    }

    /// Fraction of scenes with objects whose first recognition is correct.
    pub fn first_success_rate(&self) -> f64 {
        let n = self.scored().count();
        self.scored().filter(|r| r.first_ok).count() as f64 / n as f64
    }

    /// Fraction of correct first recognitions followed by a correct second.
    pub fn second_recovery_rate(&self) -> f64 {
        let ok = self.scored().filter(|r| r.first_ok).count();
        self.scored().filter(|r| r.first_ok && r.second_ok).count() as f64 / ok as f64
    }

    /// Scenes where nothing was accepted.
    pub fn none_found(&self) -> usize {
        self.records.iter().filter(|r| r.first.is_none()).count()
    }

    pub fn max_wall_seconds(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.wall_seconds)
            .fold(0.0, f64::max)
    }

    pub fn mean_wall_seconds(&self) -> f64 {
        self.records.iter().map(|r| r.wall_seconds).sum::<f64>() / self.records.len().max(1) as f64
    }

    /// One row per scene; the success columns are empty for scenes without
    /// known objects and the error columns when nothing was found.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("scene,found_class,success,rotation_deg,translation_mm,second_success,evaluations,wall_s\n");
        for r in &self.records {
            let class = r.first.map_or(String::new(), |(c, _)| c.to_string());
            let (ok, second) = if r.has_objects {
                (r.first_ok.to_string(), r.second_ok.to_string())
            } else {
                (String::new(), String::new())
            };
            let (rot, tr) = r.first_error.map_or((String::new(), String::new()), |e| {
                (
                    format!("{:.4}", e.rotation.to_degrees()),
                    format!("{:.4}", e.translation),
                )
            });
            writeln!(
                s,
                "{},{class},{ok},{rot},{tr},{second},{},{:.3}",
                r.scene, r.evaluations, r.wall_seconds
            )
            .unwrap();
        }
        s
    }

    pub fn summary(&self) -> String {
        format!(
            "scenes={} first_success={:.3} second_recovery={:.3} none_found={} mean_wall_s={:.3} max_wall_s={:.3}",
            self.records.len(),
            self.first_success_rate(),
            self.second_recovery_rate(),
            self.none_found(),
            self.mean_wall_seconds(),
            self.max_wall_seconds()
        )
    }
}

/// Seed offsets keeping training, grouping and test scenes disjoint.
const TRAIN_SCENE_SEEDS: u64 = 1 << 40;
const GROUPING_SCENE_SEEDS: u64 = 2 << 40;

/// Trained artifacts for the two-object suite.
pub struct SuiteSetup {
    pub models: Vec<ObjectModel>,
    pub density: DensityModel,
    pub index: GeomHashIndex,
    pub judge: PoseJudge,
}

/// Trains the density on labelled pair scenes, builds the index, and learns
/// its grouping weights on a separate set of scenes.
pub fn prepare_pair_suite(cfg: &Config) -> Result<SuiteSetup> {
    let models = test_objects(cfg.scenes.object_size, cfg.scenes.notch)?;
    let train: Vec<RangeScan> = (0..cfg.scenes.train_scenes as u64)
        .map(|k| {
            random_pair_scene(
                &models,
                &cfg.synth,
                cfg.seed.wrapping_add(TRAIN_SCENE_SEEDS + k),
            )
        })
        .collect::<Result<_>>()?;
    let density = train_from_scans(&train, &cfg.relation, cfg.alpha, &cfg.training, 2, cfg.seed)?;
    let mut index = build_index(&models, cfg.qd, cfg.gamma_init)?;
    let judge = PoseJudge::new(&models, MAX_ROTATION_DEG, MAX_TRANSLATION_MM);
    let grouping: Vec<RangeScan> = (0..cfg.training.grouping_scenes as u64)
        .map(|k| {
            random_pair_scene(
                &models,
                &cfg.synth,
                cfg.seed.wrapping_add(GROUPING_SCENE_SEEDS + k),
            )
        })
        .collect::<Result<_>>()?;
    let probe = SearchConfig {
        max_hypotheses: Some(cfg.training.grouping_hypotheses),
        ..cfg.search.clone()
    };
    learn_grouping(
        &mut index,
        &grouping,
        &models,
        &density,
        &cfg.likelihood,
        &probe,
        &judge,
        cfg.seed,
    )?;
    Ok(SuiteSetup {
        models,
        density,
        index,
        judge,
    })
}

/// Evaluates `cfg.scenes.scenes` generated pair scenes, calling `progress`
/// after each.
pub fn run_pair_suite(
    cfg: &Config,
    setup: &SuiteSetup,
    mut progress: impl FnMut(&SceneRecord),
) -> Result<RecognitionReport> {
    let mut report = RecognitionReport::default();
    for k in 0..cfg.scenes.scenes as u64 {
        let scan = random_pair_scene(&setup.models, &cfg.synth, cfg.seed.wrapping_add(k))?;
        let rec = evaluate_scene(
            &format!("scene{k}"),
            &scan,
            &setup.models,
            &setup.density,
            &setup.index,
            &cfg.likelihood,
            &cfg.search,
            &setup.judge,
            cfg.max_objects,
            point_seed(cfg.seed, k as usize),
        )?;
        progress(&rec);
        report.records.push(rec);
    }
    Ok(report)
}
