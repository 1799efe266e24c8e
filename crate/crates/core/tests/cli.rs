use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use tpsearch::cli::{main_with_args, EXIT_EMPTY, EXIT_INPUT, EXIT_OK};
use tpsearch::config::Config;
use tpsearch::eval::test_objects;
use tpsearch::index::build_index;
use tpsearch::relation::DensityModel;
use tpsearch::{shapes, ObjectModel};

const FAST_CONFIG: &str = "\
# small scenes for quick runs
point_budget = 3000
outlier_count = 60
train_samples = 300
train_negatives = 100
hard_negatives = 10
grouping_hypotheses = 50
theta = 1500
models = cube.model slab.model
";

struct Outcome {
    code: i32,
    stdout: String,
    stderr: String,
}

fn tp(args: &[&str]) -> Outcome {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("tpsearch").chain(args.iter().copied());
    let code = main_with_args(argv, &mut out, &mut err);
    Outcome {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn ok(args: &[&str]) -> String {
    let o = tp(args);
    assert_eq!(o.code, EXIT_OK, "{args:?}: {}", o.stderr);
    o.stdout
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn unit_quaternion(q: [f64; 4]) -> [f64; 4] {
    let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
    q.map(|x| x / n)
}

/// Scene text with the cube at the origin and the slab beside it.
fn pair_scene(cube_q: [f64; 4], slab_q: [f64; 4], bearing: f64) -> String {
    let c = unit_quaternion(cube_q);
    let q = unit_quaternion(slab_q);
    let (x, y) = (185.0 * bearing.cos(), 185.0 * bearing.sin());
    format!(
        "place cube.model {} {} {} {} 0 0 0\nplace slab.model {} {} {} {} {x} {y} 0\n",
        c[0], c[1], c[2], c[3], q[0], q[1], q[2], q[3]
    )
}

struct Artifacts {
    dir: PathBuf,
    config: PathBuf,
    train: Vec<PathBuf>,
    test_scan: PathBuf,
    density: PathBuf,
    index: PathBuf,
}

fn artifacts() -> &'static Artifacts {
    static A: OnceLock<Artifacts> = OnceLock::new();
    A.get_or_init(|| {
        let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli_artifacts");
        let _ = fs::remove_dir_all(&dir);
        fs::create_dir_all(&dir).unwrap();
        let config = dir.join("fast.cfg");
        fs::write(&config, FAST_CONFIG).unwrap();
        ok(&["models", "--out", s(&dir)]);

        let poses = [
            ([0.9, 0.2, 0.3, 0.1], [1.0, 0.1, 0.0, 0.2], 0.3),
            ([0.7, -0.4, 0.5, 0.2], [1.0, 0.0, 0.15, -0.3], 2.1),
            ([0.5, 0.5, -0.3, 0.6], [1.0, -0.1, 0.1, 0.9], 3.9),
            ([0.8, 0.1, -0.5, -0.3], [1.0, 0.2, -0.1, -0.6], 5.2),
            ([0.6, 0.3, 0.6, -0.4], [1.0, -0.15, -0.1, 0.4], 1.2),
        ];
        let mut scans = Vec::new();
        for (k, (cq, sq, bearing)) in poses.iter().enumerate() {
            let scene = dir.join(format!("pair{k}.scene"));
            fs::write(&scene, pair_scene(*cq, *sq, *bearing)).unwrap();
            let scan = dir.join(format!("pair{k}.scan"));
            let seed = (100 + k).to_string();
            ok(&[
                "synth",
                s(&scene),
                "--config",
                s(&config),
                "--seed",
                &seed,
                "--out",
                s(&scan),
            ]);
            scans.push(scan);
        }
        let test_scan = scans.pop().unwrap();

        let density = dir.join("density.txt");
        let mut args = vec!["train", "--config", s(&config), "--out", s(&density)];
        args.extend(scans.iter().map(|p| s(p)));
        ok(&args);

        let index = dir.join("index.txt");
        ok(&[
            "index",
            "--config",
            s(&config),
            "--learn",
            s(&scans[0]),
            "--learn",
            s(&scans[1]),
            "--density",
            s(&density),
            "--out",
            s(&index),
        ]);
        Artifacts {
            dir,
            config,
            train: scans,
            test_scan,
            density,
            index,
        }
    })
}

#[test]
fn models_writes_the_test_objects() {
    let a = artifacts();
    let cfg = Config::default();
    let models = test_objects(cfg.scenes.object_size, cfg.scenes.notch).unwrap();
    assert_eq!(
        fs::read_to_string(a.dir.join("cube.model")).unwrap(),
        models[0].to_text()
    );
    assert_eq!(
        fs::read_to_string(a.dir.join("slab.model")).unwrap(),
        models[1].to_text()
    );
    assert_eq!(
        ObjectModel::load(&a.dir.join("slab.model"))
            .unwrap()
            .class_id(),
        2
    );
}

#[test]
fn synth_writes_scan_and_truth() {
    let a = artifacts();
    let text = fs::read_to_string(&a.train[0]).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("gaze "));
    let points: Vec<&str> = lines.collect();
    assert!(points.len() > 1000);
    assert!(points
        .iter()
        .all(|l| l.starts_with("p ") && l.split_whitespace().count() == 4));
    let truth = fs::read_to_string(a.dir.join("pair0.scan.truth")).unwrap();
    assert_eq!(
        truth
            .lines()
            .filter(|l| l.starts_with("placement "))
            .count(),
        2
    );
    assert!(truth.lines().any(|l| l.starts_with("feature ")));
}

#[test]
fn synth_is_deterministic_per_seed() {
    let a = artifacts();
    let scene = a.dir.join("pair0.scene");
    let run = |seed: &str, name: &str| {
        let out = a.dir.join(name);
        ok(&[
            "synth",
            s(&scene),
            "--config",
            s(&a.config),
            "--seed",
            seed,
            "--out",
            s(&out),
        ]);
        fs::read(out).unwrap()
    };
    let first = run("7", "det_a.scan");
    assert_eq!(first, run("7", "det_b.scan"));
    assert_ne!(first, run("8", "det_c.scan"));
}

#[test]
fn synth_with_missing_model_is_an_input_error() {
    let a = artifacts();
    let scene = a.dir.join("missing.scene");
    fs::write(&scene, "place nowhere.model 1 0 0 0 0 0 0\n").unwrap();
    let out = a.dir.join("missing.scan");
    let o = tp(&["synth", s(&scene), "--out", s(&out)]);
    assert_eq!(o.code, EXIT_INPUT);
    assert!(o.stderr.contains("nowhere.model"), "{}", o.stderr);
    assert!(!out.exists());
}

#[test]
fn train_writes_a_reloadable_density() {
    let a = artifacts();
    let text = fs::read_to_string(&a.density).unwrap();
    let header = text.lines().next().unwrap();
    assert!(header.starts_with("density m=2 R=15 eps=1 "), "{header}");
    assert!(header.contains("bins=15x20x10"), "{header}");
    let dm = DensityModel::load(&a.density).unwrap();
    assert_eq!(dm.to_text(), text);
}

#[test]
fn train_is_deterministic() {
    let a = artifacts();
    let again = a.dir.join("density_again.txt");
    let mut args = vec!["train", "--config", s(&a.config), "--out", s(&again)];
    args.extend(a.train.iter().map(|p| s(p)));
    ok(&args);
    assert_eq!(fs::read(&a.density).unwrap(), fs::read(again).unwrap());
}

#[test]
fn train_needs_ground_truth() {
    let a = artifacts();
    let bare = a.dir.join("bare.scan");
    fs::copy(&a.train[0], &bare).unwrap();
    let out = a.dir.join("bare_density.txt");
    let o = tp(&[
        "train",
        s(&bare),
        "--config",
        s(&a.config),
        "--out",
        s(&out),
    ]);
    assert_eq!(o.code, EXIT_INPUT);
    assert!(o.stderr.contains("bare.scan.truth"), "{}", o.stderr);
    assert!(!out.exists());
}

#[test]
fn index_holds_one_entry_per_orbit() {
    let a = artifacts();
    let text = fs::read_to_string(&a.index).unwrap();
    let entries = text.lines().filter(|l| l.starts_with("entry ")).count();
    let cfg = Config::default();
    let models = test_objects(cfg.scenes.object_size, cfg.scenes.notch).unwrap();
    let fresh = build_index(&models, cfg.qd, cfg.gamma_init).unwrap();
    assert_eq!(entries, fresh.entries().len());
    assert!(entries > 0);
}

#[test]
fn index_without_learning_is_idempotent() {
    let a = artifacts();
    let run = |name: &str| {
        let out = a.dir.join(name);
        let stdout = ok(&["index", "--config", s(&a.config), "--out", s(&out)]);
        assert!(stdout.starts_with("indexed "));
        fs::read(out).unwrap()
    };
    assert_eq!(run("plain_a.txt"), run("plain_b.txt"));
}

#[test]
fn index_rejects_a_model_with_two_features() {
    let a = artifacts();
    let cube = fs::read_to_string(a.dir.join("cube.model")).unwrap();
    let mut kept = 0;
    let text: String = cube
        .lines()
        .filter(|l| {
            if l.starts_with("f ") {
                kept += 1;
                kept <= 2
            } else {
                true
            }
        })
        .map(|l| format!("{l}\n"))
        .collect();
    let model = a.dir.join("two.model");
    fs::write(&model, text).unwrap();
    let out = a.dir.join("two_index.txt");
    let o = tp(&["index", s(&model), "--out", s(&out)]);
    assert_eq!(o.code, EXIT_INPUT, "{}", o.stderr);
    assert!(o.stderr.starts_with("error: "));
    assert!(!out.exists());
}

#[test]
fn recognize_prints_one_line_per_object() {
    let a = artifacts();
    let out = a.dir.join("objects.txt");
    let stdout = ok(&[
        "recognize",
        s(&a.test_scan),
        "--config",
        s(&a.config),
        "--density",
        s(&a.density),
        "--index",
        s(&a.index),
        "--out",
        s(&out),
    ]);
    assert_eq!(fs::read_to_string(&out).unwrap(), stdout);
    let lines: Vec<&str> = stdout.lines().collect();
    assert!(!lines.is_empty() && lines.len() <= 2, "{stdout}");
    for l in lines {
        let t: Vec<&str> = l.split_whitespace().collect();
        assert_eq!(t[0], "object");
        assert!(t[1] == "c=1" || t[1] == "c=2", "{l}");
        assert!(t[2].starts_with("q="));
        assert!(t[6].starts_with("t="));
        assert!(t[9].starts_with("L="));
        assert!(t[10].starts_with("tp="));
        assert!(t[11].starts_with("evals="));
        let q: Vec<f64> = [&t[2][2..], t[3], t[4], t[5]]
            .iter()
            .map(|x| x.parse().unwrap())
            .collect();
        let norm = q.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-9);
    }
}

#[test]
fn recognize_without_density_is_an_input_error() {
    let a = artifacts();
    let o = tp(&[
        "recognize",
        s(&a.test_scan),
        "--config",
        s(&a.config),
        "--index",
        s(&a.index),
    ]);
    assert_eq!(o.code, EXIT_INPUT);
    assert!(o.stderr.contains("density"));
}

#[test]
fn eval_ranks_writes_histograms_and_summary() {
    let a = artifacts();
    let out = a.dir.join("ranks");
    let stdout = ok(&[
        "eval-ranks",
        s(&a.train[0]),
        s(&a.train[1]),
        "--config",
        s(&a.config),
        "--density",
        s(&a.density),
        "--repeats",
        "2",
        "--out",
        s(&out),
    ]);
    for f in [
        "phi_seed0.csv",
        "c_seed0.csv",
        "phi_seed1.csv",
        "c_seed1.csv",
        "phi_ranks.csv",
        "c_ranks.csv",
    ] {
        let csv = fs::read_to_string(out.join(f)).unwrap();
        assert!(csv.lines().count() > 1, "{f}");
    }
    assert!(!out.join("phi_seed2.csv").exists());
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert_eq!(summary, stdout);
    assert_eq!(summary.lines().count(), 3);
    assert!(summary
        .lines()
        .last()
        .unwrap()
        .starts_with("pooled phi_count="));
}

#[test]
fn eval_ranks_without_true_features_is_empty() {
    let a = artifacts();
    let scan = a.dir.join("unlabelled.scan");
    fs::copy(&a.train[0], &scan).unwrap();
    fs::write(a.dir.join("unlabelled.scan.truth"), "").unwrap();
    let out = a.dir.join("empty_ranks");
    let o = tp(&[
        "eval-ranks",
        s(&scan),
        "--density",
        s(&a.density),
        "--out",
        s(&out),
    ]);
    assert_eq!(o.code, EXIT_EMPTY, "{}", o.stderr);
    assert!(!out.join("summary.txt").exists());
}

#[test]
fn eval_recog_on_distractors_counts_none_found() {
    let a = artifacts();
    let board = ObjectModel::from_shape(3, shapes::box_shape(300.0, 260.0, 20.0)).unwrap();
    fs::write(a.dir.join("board.model"), board.to_text()).unwrap();
    let scene = a.dir.join("board.scene");
    fs::write(&scene, "place board.model 1 0 0 0 0 0 0\n").unwrap();
    let scan = a.dir.join("board.scan");
    ok(&[
        "synth",
        s(&scene),
        "--config",
        s(&a.config),
        "--out",
        s(&scan),
    ]);
    let csv = a.dir.join("board.csv");
    let stdout = ok(&[
        "eval-recog",
        s(&scan),
        "--config",
        s(&a.config),
        "--density",
        s(&a.density),
        "--index",
        s(&a.index),
        "--out",
        s(&csv),
    ]);
    assert!(stdout.contains("none_found=1"), "{stdout}");
    let text = fs::read_to_string(csv).unwrap();
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[1], "");
    assert_eq!(row[2], "");
    assert_eq!(row[5], "");
}

#[test]
fn eval_recog_runs_a_generated_suite() {
    let a = artifacts();
    let config = a.dir.join("suite.cfg");
    fs::write(
        &config,
        format!("{FAST_CONFIG}scenes = 2\ntrain_scenes = 4\ngrouping_scenes = 2\n"),
    )
    .unwrap();
    let csv = a.dir.join("suite.csv");
    let stdout = ok(&["eval-recog", "--config", s(&config), "--out", s(&csv)]);
    assert!(stdout.starts_with("scenes=2 first_success="), "{stdout}");
    let text = fs::read_to_string(csv).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.starts_with("scene,found_class,success,"));
}

#[test]
fn config_errors_name_the_line_and_write_nothing() {
    let a = artifacts();
    let config = a.dir.join("bad.cfg");
    fs::write(&config, "point_budget = 3000\n\ntheta = lots\n").unwrap();
    let out = a.dir.join("bad_index.txt");
    let o = tp(&[
        "index",
        "--config",
        s(&config),
        s(&a.dir.join("cube.model")),
        "--out",
        s(&out),
    ]);
    assert_eq!(o.code, EXIT_INPUT);
    assert!(o.stderr.contains("bad.cfg:3:"), "{}", o.stderr);
    assert!(!out.exists());
}

#[test]
fn unknown_subcommand_is_an_input_error() {
    let o = tp(&["frobnicate"]);
    assert_eq!(o.code, EXIT_INPUT);
    assert!(o.stdout.is_empty());
}
