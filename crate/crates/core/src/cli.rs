//! The `tpsearch` command line: synthesis, training, indexing, recognition
//! and the evaluation runs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::Config;
use crate::error::Error;
use crate::eval::{default_gaze, test_objects};
use crate::eval::{
    evaluate_scene, learn_grouping, prepare_pair_suite, run_pair_suite, scan_ranks,
    train_from_scans, PoseJudge, RankReport, RecognitionReport, MAX_ROTATION_DEG,
    MAX_TRANSLATION_MM,
};
use crate::index::{build_index, GeomHashIndex};
use crate::model::ObjectModel;
use crate::relation::DensityModel;
use crate::scan::{truth_path, GroundTruth, RangeScan};
use crate::search::{point_seed, recognize_sequential, Outcome};
use crate::synth::{compose_scene, SceneDescription, ScenePlacement};
use crate::textio::write_atomic;

/// Exit status of a run.
pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_EMPTY: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "tpsearch", version, about = "Object recognition in range data")]
pub struct Cli {
    /// Configuration file (`key = value` lines).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file, or directory for `eval-ranks`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ArtifactArgs {
    /// Object model files; defaults to the configured `models`.
    #[arg(long = "model")]
    pub models: Vec<PathBuf>,
    /// Density file; defaults to the configured `density`.
    #[arg(long)]
    pub density: Option<PathBuf>,
    /// Index file; defaults to the configured `index`.
    #[arg(long)]
    pub index: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the notched cube and cross slab test objects as `cube.model`
    /// and `slab.model` into the `--out` directory.
    Models,
    /// Render a scene description into a scan plus a `.truth` file.
    Synth { scene: PathBuf },
    /// Train the point-relation density from labelled scans.
    Train {
        #[arg(required = true)]
        scans: Vec<PathBuf>,
    },
    /// Build the geometric hash index from model files.
    Index {
        models: Vec<PathBuf>,
        /// Labelled scans on which to learn grouping weights.
        #[arg(long = "learn")]
        learn: Vec<PathBuf>,
        /// Density file used while learning.
        #[arg(long)]
        density: Option<PathBuf>,
    },
    /// Recognise objects in a scan.
    Recognize {
        scan: PathBuf,
        #[command(flatten)]
        artifacts: ArtifactArgs,
    },
    /// Φ- and C-rank histograms of the true features of labelled scans.
    EvalRanks {
        #[arg(required = true)]
        scans: Vec<PathBuf>,
        /// Density file; defaults to the configured `density`.
        #[arg(long)]
        density: Option<PathBuf>,
        /// Runs with consecutive seeds.
        #[arg(long, default_value_t = 10)]
        repeats: u64,
    },
    /// Recognition metrics over labelled scans, or over a generated
    /// two-object suite when no scans are given.
    EvalRecog {
        scans: Vec<PathBuf>,
        #[command(flatten)]
        artifacts: ArtifactArgs,
    },
}

/// A failed run: exit status and message.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: EXIT_INPUT,
            message: e.to_string(),
        }
    }
}

fn input(msg: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_INPUT,
        message: msg.into(),
    }
}

type Run<T> = std::result::Result<T, Failure>;

/// Parses `args` (program name first), runs, and returns the exit status.
/// Results go to `stdout`, diagnostics to `stderr`.
pub fn main_with_args<I, T>(
    args: I,
    stdout: &mut dyn std::io::Write,
    stderr: &mut dyn std::io::Write,
) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(stderr, "{e}");
                return EXIT_INPUT;
            }
            let _ = write!(stdout, "{e}");
            return EXIT_OK;
        }
    };
    match run(&cli) {
        Ok(text) => {
            let _ = stdout.write_all(text.as_bytes());
            EXIT_OK
        }
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}

/// Runs a parsed command line and returns the text for stdout.
pub fn run(cli: &Cli) -> Run<String> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Models => cmd_models(&cfg, need_out(out)?),
        Command::Synth { scene } => cmd_synth(&cfg, scene, need_out(out)?),
        Command::Train { scans } => cmd_train(&cfg, scans, need_out(out)?),
        Command::Index {
            models,
            learn,
            density,
        } => cmd_index(&cfg, models, learn, density.as_deref(), need_out(out)?),
        Command::Recognize { scan, artifacts } => cmd_recognize(&cfg, scan, artifacts, out),
        Command::EvalRanks {
            scans,
            density,
            repeats,
        } => cmd_eval_ranks(&cfg, scans, density.as_deref(), *repeats, need_out(out)?),
        Command::EvalRecog { scans, artifacts } => cmd_eval_recog(&cfg, scans, artifacts, out),
    }
}

fn need_out(out: Option<&Path>) -> Run<&Path> {
    out.ok_or_else(|| input("--out is required for this command"))
}

fn load_labelled(path: &Path) -> Run<RangeScan> {
    let scan = RangeScan::load(path)?;
    let tp = truth_path(path);
    if !tp.exists() {
        return Err(input(format!(
            "{}: ground truth file {} not found",
            path.display(),
            tp.display()
        )));
    }
    Ok(scan.with_truth(GroundTruth::load(&tp)?))
}

fn load_models(cfg: &Config, given: &[PathBuf]) -> Run<Vec<ObjectModel>> {
    let paths = if given.is_empty() { &cfg.models } else { given };
    if paths.is_empty() {
        return Err(input(
            "no model files given (use --model or the 'models' key)",
        ));
    }
    Ok(paths
        .iter()
        .map(|p| ObjectModel::load(p))
        .collect::<Result<_, _>>()?)
}

fn artifact(given: Option<&Path>, configured: &Option<PathBuf>, what: &str) -> Run<PathBuf> {
    given
        .map(Path::to_path_buf)
        .or_else(|| configured.clone())
        .ok_or_else(|| {
            input(format!(
                "no {what} file given (use --{what} or the '{what}' key)"
            ))
        })
}

pub fn cmd_models(cfg: &Config, out: &Path) -> Run<String> {
    let models = test_objects(cfg.scenes.object_size, cfg.scenes.notch)?;
    fs::create_dir_all(out).map_err(|e| Error::Io {
        path: out.to_path_buf(),
        source: e,
    })?;
    let mut text = String::new();
    for (m, name) in models.iter().zip(["cube.model", "slab.model"]) {
        let path = out.join(name);
        write_atomic(&path, &m.to_text())?;
        writeln!(text, "wrote class {} to {}", m.class_id(), path.display()).unwrap();
    }
    Ok(text)
}

/// Writes the scan to `out` and its ground truth beside it.
pub fn cmd_synth(cfg: &Config, scene: &Path, out: &Path) -> Run<String> {
    let desc = SceneDescription::load(scene)?;
    let models: Vec<ObjectModel> = desc
        .places
        .iter()
        .map(|(p, _)| ObjectModel::load(p))
        .collect::<Result<_, _>>()?;
    let placements: Vec<ScenePlacement> = models
        .iter()
        .zip(&desc.places)
        .map(|(model, (_, pose))| ScenePlacement { model, pose: *pose })
        .collect();
    let mut params = cfg.synth.clone();
    params.rng_seed = cfg.seed;
    let gaze = desc.gaze.unwrap_or_else(default_gaze);
    let scan = compose_scene(&placements, &gaze, &params)?;
    let truth = scan.truth().cloned().unwrap_or_default();
    write_atomic(out, &scan.to_text())?;
    write_atomic(&truth_path(out), &truth.to_text())?;
    Ok(format!(
        "wrote {} points to {}\n",
        scan.len(),
        out.display()
    ))
}

pub fn cmd_train(cfg: &Config, scans: &[PathBuf], out: &Path) -> Run<String> {
    let scans: Vec<RangeScan> = scans.iter().map(|p| load_labelled(p)).collect::<Run<_>>()?;
    let classes = scans
        .iter()
        .flat_map(|s| {
            s.truth()
                .into_iter()
                .flat_map(|t| t.features.iter().map(|f| f.shape))
        })
        .max()
        .unwrap_or(0) as usize;
    if classes == 0 {
        return Err(input("no labelled features in the training scans"));
    }
    let dm = train_from_scans(
        &scans,
        &cfg.relation,
        cfg.alpha,
        &cfg.training,
        classes,
        cfg.seed,
    )?;
    write_atomic(out, &dm.to_text())?;
    let counts: Vec<String> = dm
        .grids()
        .iter()
        .enumerate()
        .map(|(s, g)| format!("{s}:{}", g.count()))
        .collect();
    Ok(format!(
        "trained {} feature classes (samples {})\n",
        classes,
        counts.join(" ")
    ))
}

pub fn cmd_index(
    cfg: &Config,
    models: &[PathBuf],
    learn: &[PathBuf],
    density: Option<&Path>,
    out: &Path,
) -> Run<String> {
    let models = load_models(cfg, models)?;
    let mut index = build_index(&models, cfg.qd, cfg.gamma_init)?;
    if !learn.is_empty() {
        let dm = DensityModel::load(&artifact(density, &cfg.density, "density")?)?;
        let scans: Vec<RangeScan> = learn.iter().map(|p| load_labelled(p)).collect::<Run<_>>()?;
        let judge = PoseJudge::new(&models, MAX_ROTATION_DEG, MAX_TRANSLATION_MM);
        let probe = crate::search::SearchConfig {
            max_hypotheses: Some(cfg.training.grouping_hypotheses),
            ..cfg.search.clone()
        };
        learn_grouping(
            &mut index,
            &scans,
            &models,
            &dm,
            &cfg.likelihood,
            &probe,
            &judge,
            cfg.seed,
        )?;
    }
    write_atomic(out, &index.to_text())?;
    Ok(format!(
        "indexed {} entries under {} keys\n",
        index.entries().len(),
        index.key_count()
    ))
}

/// One `object ...` line per accepted (or best-effort) object.
pub fn cmd_recognize(
    cfg: &Config,
    scan: &Path,
    a: &ArtifactArgs,
    out: Option<&Path>,
) -> Run<String> {
    let scan = RangeScan::load(scan)?;
    let models = load_models(cfg, &a.models)?;
    let dm = DensityModel::load(&artifact(a.density.as_deref(), &cfg.density, "density")?)?;
    let index = GeomHashIndex::load(&artifact(a.index.as_deref(), &cfg.index, "index")?)?;
    let results = recognize_sequential(
        &scan,
        &models,
        &dm,
        &index,
        &cfg.likelihood,
        &cfg.search,
        cfg.seed,
        cfg.max_objects,
    )?;
    let mut text = String::new();
    for r in &results {
        if let Outcome::Accepted {
            class_id,
            pose,
            l,
            tp,
        }
        | Outcome::BestEffort {
            class_id,
            pose,
            l,
            tp,
        } = &r.outcome
        {
            let q = pose.quaternion();
            let t = pose.translation;
            writeln!(
                text,
                "object c={class_id} q={} {} {} {} t={} {} {} L={l} tp={tp} evals={}",
                q.w, q.i, q.j, q.k, t.x, t.y, t.z, r.evaluations
            )
            .unwrap();
        }
    }
    if let Some(o) = out {
        write_atomic(o, &text)?;
    }
    Ok(text)
}

/// Writes `phi_seed<k>.csv` and `c_seed<k>.csv` per run, pooled
/// `phi_ranks.csv` and `c_ranks.csv`, and `summary.txt` into `out`.
pub fn cmd_eval_ranks(
    cfg: &Config,
    scans: &[PathBuf],
    density: Option<&Path>,
    repeats: u64,
    out: &Path,
) -> Run<String> {
    if repeats == 0 {
        return Err(input("--repeats must be >= 1"));
    }
    let dm = DensityModel::load(&artifact(density, &cfg.density, "density")?)?;
    let scans: Vec<RangeScan> = scans.iter().map(|p| load_labelled(p)).collect::<Run<_>>()?;
    let mut files: Vec<(String, String)> = Vec::new();
    let (mut phi_all, mut c_all) = (Vec::new(), Vec::new());
    let mut summary = String::new();
    for k in 0..repeats {
        let seed = cfg.seed.wrapping_add(k);
        let (mut phi, mut c) = (Vec::new(), Vec::new());
        for (i, scan) in scans.iter().enumerate() {
            let (p, q) = scan_ranks(scan, &dm, cfg.curvature_radius, point_seed(seed, i));
            phi.extend(p);
            c.extend(q);
        }
        if phi.is_empty() {
            return Err(Failure {
                code: EXIT_EMPTY,
                message: "no true features found in any scan".into(),
            });
        }
        let pr = RankReport::new("phi", phi, cfg.rank_bins);
        let cr = RankReport::new("c", c, cfg.rank_bins);
        writeln!(
            summary,
            "seed={seed} {} {}",
            summary_of(&pr),
            summary_of(&cr)
        )
        .unwrap();
        files.push((format!("phi_seed{k}.csv"), pr.to_csv()));
        files.push((format!("c_seed{k}.csv"), cr.to_csv()));
        phi_all.extend(pr.ranks);
        c_all.extend(cr.ranks);
    }
    let pr = RankReport::new("phi", phi_all, cfg.rank_bins);
    let cr = RankReport::new("c", c_all, cfg.rank_bins);
    writeln!(summary, "pooled {} {}", summary_of(&pr), summary_of(&cr)).unwrap();
    files.push(("phi_ranks.csv".into(), pr.to_csv()));
    files.push(("c_ranks.csv".into(), cr.to_csv()));
    files.push(("summary.txt".into(), summary.clone()));
    fs::create_dir_all(out).map_err(|e| Error::Io {
        path: out.to_path_buf(),
        source: e,
    })?;
    for (name, body) in &files {
        write_atomic(&out.join(name), body)?;
    }
    Ok(summary)
}

fn summary_of(r: &RankReport) -> String {
    format!(
        "{0}_count={1} {0}_median={2:.4} {0}_below_0.6={3:.4}",
        r.label,
        r.ranks.len(),
        r.median(),
        r.fraction_below(0.6)
    )
}

/// Metrics CSV to `out` (if given) and a summary line on stdout.
pub fn cmd_eval_recog(
    cfg: &Config,
    scans: &[PathBuf],
    a: &ArtifactArgs,
    out: Option<&Path>,
) -> Run<String> {
    let report = if scans.is_empty() {
        let setup = prepare_pair_suite(cfg)?;
        run_pair_suite(cfg, &setup, |_| {})?
    } else {
        let models = load_models(cfg, &a.models)?;
        let dm = DensityModel::load(&artifact(a.density.as_deref(), &cfg.density, "density")?)?;
        let index = GeomHashIndex::load(&artifact(a.index.as_deref(), &cfg.index, "index")?)?;
        let judge = PoseJudge::new(&models, MAX_ROTATION_DEG, MAX_TRANSLATION_MM);
        let mut report = RecognitionReport::default();
        for (k, p) in scans.iter().enumerate() {
            let scan = load_labelled(p)?;
            report.records.push(evaluate_scene(
                &p.display().to_string(),
                &scan,
                &models,
                &dm,
                &index,
                &cfg.likelihood,
                &cfg.search,
                &judge,
                cfg.max_objects,
                point_seed(cfg.seed, k),
            )?);
        }
        report
    };
    if report.records.is_empty() {
        return Err(Failure {
            code: EXIT_EMPTY,
            message: "no scenes evaluated".into(),
        });
    }
    if let Some(o) = out {
        write_atomic(o, &report.to_csv())?;
    }
    Ok(format!("{}\n", report.summary()))
}
