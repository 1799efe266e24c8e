use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tpsearch::config::{Config, TrainingConfig};
use tpsearch::eval::{
    pose_error, random_pair_scene, random_single_scene, test_objects, train_from_scans, PoseJudge,
};
use tpsearch::index::{build_index, GeomHashIndex};
use tpsearch::likelihood::explained_points;
use tpsearch::neighbors::PointIndex;
use tpsearch::relation::DensityModel;
use tpsearch::search::{
    generate_hypotheses, recognize, recognize_sequential, recognize_with_candidates,
    select_candidates, FeatureCandidate, Outcome, RecognitionResult, SearchConfig,
};
use tpsearch::synth::SynthParams;
use tpsearch::{Feature, ObjectModel, Point3, Pose, RangeScan, Vector3};

struct Fixture {
    cfg: Config,
    models: Vec<ObjectModel>,
    density: DensityModel,
    /// Trained on noisy and noiseless scenes, for the noiseless tests.
    clean: DensityModel,
    index: GeomHashIndex,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let cfg = Config::default();
        let models = test_objects(cfg.scenes.object_size, cfg.scenes.notch).unwrap();
        let train: Vec<RangeScan> = (0..10)
            .map(|k| random_pair_scene(&models, &cfg.synth, 500 + k).unwrap())
            .collect();
        let training = TrainingConfig {
            samples_per_location: 500,
            ..cfg.training.clone()
        };
        let density = train_from_scans(&train, &cfg.relation, cfg.alpha, &training, 2, 3).unwrap();
        let mut train = train;
        train.extend((0..10).map(|k| random_pair_scene(&models, &noiseless(), 600 + k).unwrap()));
        let clean = train_from_scans(&train, &cfg.relation, cfg.alpha, &training, 2, 4).unwrap();
        let index = build_index(&models, cfg.qd, cfg.gamma_init).unwrap();
        Fixture {
            cfg,
            models,
            density,
            clean,
            index,
        }
    })
}

fn noiseless() -> SynthParams {
    SynthParams {
        surface_point_budget: 7000,
        ..SynthParams::default()
    }
}

fn run(scan: &RangeScan, cfg: &SearchConfig, seed: u64) -> RecognitionResult {
    let f = fixture();
    recognize(
        scan,
        &f.models,
        &f.density,
        &f.index,
        &f.cfg.likelihood,
        cfg,
        seed,
    )
    .unwrap()
}

/// Noiseless single-cube scenes, searched for the cube alone: the slab is
/// the cube's outer layer and a slab pose fitted to it can also pass Θ.
fn run_cube(scan: &RangeScan, cfg: &SearchConfig, seed: u64) -> RecognitionResult {
    let f = fixture();
    recognize(
        scan,
        &f.models[..1],
        &f.clean,
        &f.index,
        &f.cfg.likelihood,
        cfg,
        seed,
    )
    .unwrap()
}

fn assert_tp_order(r: &RecognitionResult) {
    assert!(r
        .log
        .windows(2)
        .all(|w| w[0].hypothesis.tp >= w[1].hypothesis.tp));
}

fn truth_error(scan: &RangeScan, model: &ObjectModel, pose: &Pose) -> (f64, f64) {
    let truth = scan.truth().unwrap();
    let want = truth
        .placements
        .iter()
        .find(|p| p.class_id == model.class_id())
        .unwrap();
    let e = pose_error(pose, &want.pose, &model.symmetries());
    (e.rotation, e.translation)
}

#[test]
fn plane_gives_few_candidates() {
    let f = fixture();
    let mut pts = Vec::new();
    for i in 0..100 {
        for j in 0..100 {
            pts.push(Point3::new(i as f64, j as f64, 0.0));
        }
    }
    let scan = RangeScan::new(pts, Vector3::z_axis()).unwrap();
    let c = select_candidates(&scan, &f.density, Some(0.0), 1);
    assert!(c.len() * 100 <= 2 * scan.len(), "{} candidates", c.len());
    let all = select_candidates(&scan, &f.density, None, 1);
    assert_eq!(all.len(), 2 * scan.len());
    assert!(all.windows(2).all(|w| w[0].phi >= w[1].phi));
}

/// Corners on grazing faces or at the silhouette are barely sampled; the
/// check covers corners with a scan point within 1 mm and at least 50
/// points within `R`.
#[test]
fn noiseless_cube_corners_are_candidates() {
    let f = fixture();
    let (mut seen, mut found) = (0, 0);
    for seed in 0..30 {
        let scan = random_single_scene(&f.models[0], &noiseless(), 100 + seed).unwrap();
        let index = PointIndex::new(scan.points());
        let c = select_candidates(&scan, &f.clean, Some(0.0), seed);
        for t in scan.truth().unwrap().features.iter().filter(|t| t.visible) {
            let observed = index.nearest(&t.location).is_some_and(|(d, _)| d <= 1.0)
                && index.within(&t.location, f.cfg.relation.radius).len() >= 50;
            if observed {
                seen += 1;
                found += c
                    .iter()
                    .any(|x| x.shape == t.shape && (x.location - t.location).norm() <= 3.0)
                    as usize;
            }
        }
    }
    assert!(seen >= 50, "{seen} observed corners");
    assert!(
        found as f64 >= 0.95 * seen as f64,
        "{found} of {seen} corners among the candidates"
    );
}

#[test]
fn no_modelled_object_gives_none_found() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let pts: Vec<Point3> = (0..4000)
        .map(|_| {
            let (x, y): (f64, f64) = (
                rng.random_range(-150.0..150.0),
                rng.random_range(-150.0..150.0),
            );
            Point3::new(x, y, 0.002 * (x * x + y * y) + rng.random_range(-1.0..1.0))
        })
        .collect();
    let scan = RangeScan::new(pts, Vector3::z_axis()).unwrap();
    let cfg = fixture().cfg.search.clone();
    let r = run(&scan, &cfg, 4);
    assert_eq!(r.outcome, Outcome::NoneFound);
    assert_tp_order(&r);
    assert!(r.evaluations <= cfg.max_hypotheses.unwrap());
}

/// Poses are solved from candidate locations, so they are exact only when
/// the candidates sit exactly on the model corners.
#[test]
fn exact_corner_points_give_an_exact_pose() {
    let f = fixture();
    for seed in [21, 22, 23] {
        let sampled = random_single_scene(&f.models[0], &noiseless(), seed).unwrap();
        let truth = sampled.truth().unwrap().clone();
        let mut pts = sampled.points().to_vec();
        pts.extend(
            truth
                .features
                .iter()
                .filter(|t| t.visible)
                .map(|t| t.location),
        );
        let scan = RangeScan::new(pts, *sampled.gaze())
            .unwrap()
            .with_truth(truth);
        let exact: Vec<FeatureCandidate> = select_candidates(&scan, &f.clean, None, seed)
            .into_iter()
            .filter(|c| c.point >= sampled.len())
            .collect();
        let r = recognize_with_candidates(
            &scan,
            &f.models[..1],
            &exact,
            &f.index,
            &f.cfg.likelihood,
            &f.cfg.search,
        )
        .unwrap();
        let Outcome::Accepted {
            class_id, pose, l, ..
        } = r.outcome
        else {
            panic!("seed {seed}: {:?}", r.outcome);
        };
        assert_eq!(class_id, 1);
        assert!(l > f.cfg.search.theta);
        let (rot, t) = truth_error(&scan, &f.models[0], &pose);
        assert!(
            rot < 1e-3 && t < 0.1,
            "seed {seed}: {rot} rad, {t} mm after {} evaluations",
            r.evaluations
        );
        assert!(
            r.evaluations <= 20,
            "seed {seed}: {} evaluations",
            r.evaluations
        );
        assert_tp_order(&r);
    }
}

#[test]
fn sampled_noiseless_scenes_meet_the_pose_tolerance() {
    let f = fixture();
    for seed in 30..50 {
        let scan = random_single_scene(&f.models[0], &noiseless(), seed).unwrap();
        let r = run_cube(&scan, &f.cfg.search, seed);
        let (class_id, pose) = r
            .outcome
            .found()
            .unwrap_or_else(|| panic!("seed {seed}: nothing found"));
        assert!(r.outcome.is_accepted());
        assert_eq!(class_id, 1);
        let (rot, t) = truth_error(&scan, &f.models[0], &pose);
        assert!(
            rot.to_degrees() < 3.0 && t < 5.0,
            "seed {seed}: {} deg, {t} mm",
            rot.to_degrees()
        );
    }
}

#[test]
fn sequential_search_finds_both_objects_and_removes_the_first() {
    let f = fixture();
    let judge = PoseJudge::new(&f.models, 3.0, 5.0);
    let mut both = 0;
    for seed in 0..4 {
        let scan = random_pair_scene(&f.models, &f.cfg.synth, 7000 + seed).unwrap();
        let truth = scan.truth().unwrap();
        let rs = recognize_sequential(
            &scan,
            &f.models,
            &f.density,
            &f.index,
            &f.cfg.likelihood,
            &f.cfg.search,
            seed,
            2,
        )
        .unwrap();
        let found: Vec<(u32, Pose)> = rs
            .iter()
            .filter(|r| r.outcome.is_accepted())
            .filter_map(|r| r.outcome.found())
            .collect();
        if found.len() == 2
            && found
                .iter()
                .all(|(c, p)| judge.matched(*c, p, truth).is_some())
            && found[0].0 != found[1].0
        {
            both += 1;
        }

        // Nothing left in the scan is explained by the first object.
        if let Some((c, p)) = found.first() {
            let model = f.models.iter().find(|m| m.class_id() == *c).unwrap();
            let lp = f
                .cfg
                .likelihood
                .clone()
                .with_models(&f.models, scan.gaze())
                .unwrap();
            let first = explained_points(&scan, model, p, &lp).unwrap();
            let rest = scan.retain(|i, _| !first[i]);
            assert!(explained_points(&rest, model, p, &lp)
                .unwrap()
                .iter()
                .all(|e| !e));
        }
    }
    assert!(both >= 3, "both objects found in {both} of 4 scenes");
}

#[test]
fn single_object_then_none_found() {
    let f = fixture();
    let scan = random_single_scene(&f.models[0], &noiseless(), 41).unwrap();
    let rs = recognize_sequential(
        &scan,
        &f.models[..1],
        &f.clean,
        &f.index,
        &f.cfg.likelihood,
        &f.cfg.search,
        5,
        3,
    )
    .unwrap();
    assert_eq!(rs.len(), 2);
    assert!(rs[0].outcome.is_accepted());
    assert_eq!(rs[1].outcome, Outcome::NoneFound);
}

#[test]
fn xi_threshold_keeps_the_accepted_hypothesis() {
    let f = fixture();
    for seed in 51..56 {
        let scan = random_single_scene(&f.models[0], &noiseless(), seed).unwrap();
        let with = run_cube(&scan, &f.cfg.search, seed);
        let without = run_cube(
            &scan,
            &SearchConfig {
                xi: None,
                ..f.cfg.search.clone()
            },
            seed,
        );
        assert!(with.outcome.is_accepted());
        assert_eq!(with.outcome, without.outcome);
    }
}

#[test]
fn identical_inputs_give_identical_results() {
    let f = fixture();
    let scan = random_pair_scene(&f.models, &f.cfg.synth, 61).unwrap();
    assert_eq!(run(&scan, &f.cfg.search, 8), run(&scan, &f.cfg.search, 8));
}

#[test]
fn raising_theta_never_reduces_evaluations() {
    let f = fixture();
    let scan = random_pair_scene(&f.models, &f.cfg.synth, 71).unwrap();
    let mut last = 0;
    for theta in [-1e9, 0.0, 2000.0, 4000.0, 5000.0, 6000.0, 1e9] {
        let cfg = SearchConfig {
            theta,
            max_hypotheses: Some(200),
            ..f.cfg.search.clone()
        };
        let r = run(&scan, &cfg, 3);
        assert!(
            r.evaluations >= last,
            "theta {theta}: {} < {last}",
            r.evaluations
        );
        assert!(r.evaluations <= 200);
        if let Outcome::Accepted { l, .. } = r.outcome {
            assert!(l > theta);
        }
        last = r.evaluations;
    }
    assert_eq!(last, 200);
}

#[test]
fn best_effort_returns_the_highest_likelihood() {
    let f = fixture();
    let scan = random_pair_scene(&f.models, &f.cfg.synth, 81).unwrap();
    let cfg = SearchConfig {
        theta: f64::INFINITY,
        max_hypotheses: Some(30),
        best_effort: true,
        ..f.cfg.search.clone()
    };
    let r = run(&scan, &cfg, 2);
    let best = r.log.iter().map(|e| e.l).fold(f64::NEG_INFINITY, f64::max);
    match r.outcome {
        Outcome::BestEffort { l, .. } => assert_eq!(l, best),
        other => panic!("{other:?}"),
    }
}

#[test]
fn rarer_keys_are_visited_first() {
    // One key holds a single entry, another three; equal Φ everywhere.
    let mut index = GeomHashIndex::new(5.0, 0.9).unwrap();
    let tri = |a: f64, b: f64| {
        [
            Feature {
                shape: 1,
                location: Point3::new(0.0, 0.0, 0.0),
            },
            Feature {
                shape: 1,
                location: Point3::new(a, 0.0, 0.0),
            },
            Feature {
                shape: 1,
                location: Point3::new(0.0, b, 0.0),
            },
        ]
    };
    index.insert_triple(1, &tri(40.0, 30.0)).unwrap();
    for class_id in 2..=4 {
        index.insert_triple(class_id, &tri(90.0, 70.0)).unwrap();
    }
    let place = |g: [Feature; 3], dx: f64, first: usize| {
        g.iter()
            .enumerate()
            .map(|(i, x)| FeatureCandidate {
                shape: 1,
                location: x.location + Vector3::new(dx, 0.0, 0.0),
                point: first + i,
                phi: 1.0,
            })
            .collect::<Vec<_>>()
    };
    let mut c = place(tri(90.0, 70.0), 0.0, 0);
    c.extend(place(tri(40.0, 30.0), 1000.0, 3));
    let h = generate_hypotheses(&c, &index, &SearchConfig::default());
    assert_eq!(h.len(), 4);
    assert_eq!(h[0].class_id, 1);
    assert!(h[0].tp > h[1].tp);
}
