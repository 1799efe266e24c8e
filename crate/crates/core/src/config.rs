//! Run configuration: every tunable parameter, read from a `key = value`
//! file with `#` comments.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::index::{DEFAULT_GAMMA_INIT, DEFAULT_QD};
use crate::likelihood::LikelihoodParams;
use crate::relation::{RelationConfig, DEFAULT_ALPHA};
use crate::search::SearchConfig;
use crate::synth::SynthParams;
use crate::textio::{content_lines, read_file};

/// How training locations are sampled from labelled scans.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingConfig {
    /// Δ-samples drawn at each labelled location.
    pub samples_per_location: usize,
    /// Non-feature locations drawn per scan.
    pub negatives: usize,
    /// High-Φ non-feature locations mined per scan in a second pass; 0 skips
    /// the pass.
    pub hard_negatives: usize,
    /// Scenes used to learn grouping weights before evaluation.
    pub grouping_scenes: usize,
    /// Evaluation cap while learning grouping weights.
    pub grouping_hypotheses: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            samples_per_location: 1000,
            negatives: 300,
            hard_negatives: 40,
            grouping_scenes: 20,
            grouping_hypotheses: 150,
        }
    }
}

/// Parameters of the synthetic two-object evaluation scenes.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneConfig {
    /// Edge length of the notched cube (mm).
    pub object_size: f64,
    /// Edge length of the cube's corner notches (mm).
    pub notch: f64,
    /// Scenes generated by `eval-recog` without explicit scans.
    pub scenes: usize,
    /// Labelled scenes generated for density training.
    pub train_scenes: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            object_size: 130.0,
            notch: 40.0,
            scenes: 50,
            train_scenes: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub synth: SynthParams,
    pub relation: RelationConfig,
    pub alpha: f64,
    pub likelihood: LikelihoodParams,
    pub search: SearchConfig,
    pub max_objects: usize,
    pub qd: f64,
    pub gamma_init: f64,
    pub training: TrainingConfig,
    pub scenes: SceneConfig,
    /// Neighbourhood radius of the curvature baseline (mm).
    pub curvature_radius: f64,
    pub rank_bins: usize,
    pub seed: u64,
    pub models: Vec<PathBuf>,
    pub density: Option<PathBuf>,
    pub index: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            synth: SynthParams {
                noise_sigma: 1.0,
                outlier_count: 140,
                surface_point_budget: 7000,
                ..SynthParams::default()
            },
            relation: RelationConfig::default(),
            alpha: DEFAULT_ALPHA,
            likelihood: LikelihoodParams {
                volume_unit: 100.0,
                ..LikelihoodParams::default()
            },
            search: SearchConfig {
                theta: 4500.0,
                ..SearchConfig::default()
            },
            max_objects: 2,
            qd: DEFAULT_QD,
            gamma_init: DEFAULT_GAMMA_INIT,
            training: TrainingConfig::default(),
            scenes: SceneConfig::default(),
            curvature_radius: 15.0,
            rank_bins: 20,
            seed: 0,
            models: Vec::new(),
            density: None,
            index: None,
        }
    }
}

fn bad(msg: impl Into<String>) -> String {
    msg.into()
}

fn number(v: &str) -> std::result::Result<f64, String> {
    let x: f64 = v
        .parse()
        .map_err(|_| bad(format!("expected a number, found '{v}'")))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(bad("value must be finite"))
    }
}

fn positive(v: &str) -> std::result::Result<f64, String> {
    let x = number(v)?;
    if x > 0.0 {
        Ok(x)
    } else {
        Err(bad(format!("must be > 0, got {x}")))
    }
}

fn non_negative(v: &str) -> std::result::Result<f64, String> {
    let x = number(v)?;
    if x >= 0.0 {
        Ok(x)
    } else {
        Err(bad(format!("must be >= 0, got {x}")))
    }
}

fn count(v: &str) -> std::result::Result<usize, String> {
    v.parse()
        .map_err(|_| bad(format!("expected a non-negative integer, found '{v}'")))
}

fn at_least_one(v: &str) -> std::result::Result<usize, String> {
    match count(v)? {
        0 => Err(bad("must be >= 1")),
        n => Ok(n),
    }
}

fn flag(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(bad(format!("expected true or false, found '{v}'"))),
    }
}

fn optional<T>(
    v: &str,
    f: impl Fn(&str) -> std::result::Result<T, String>,
) -> std::result::Result<Option<T>, String> {
    if v == "none" {
        Ok(None)
    } else {
        f(v).map(Some)
    }
}

fn bins(v: &str) -> std::result::Result<[usize; 3], String> {
    let parts: Vec<&str> = v.split('x').collect();
    if parts.len() != 3 {
        return Err(bad(format!("expected <n1>x<n2>x<n3>, found '{v}'")));
    }
    let mut out = [0; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = at_least_one(p).map_err(|e| bad(format!("bin count '{p}': {e}")))?;
    }
    Ok(out)
}

fn fmt_opt<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map_or("none".to_string(), T::to_string)
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_file(path)?, path)
    }

    /// Starts from the defaults and applies every assignment in `text`.
    /// Relative paths resolve against the directory of `path`.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let base = path.parent().unwrap_or(Path::new(""));
        let mut cfg = Config::default();
        let mut seen: HashMap<String, usize> = HashMap::new();
        for (line, l) in content_lines(text) {
            let (key, value) = l
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| {
                    Error::parse(path, line, format!("expected 'key = value', found '{l}'"))
                })?;
            if value.is_empty() {
                return Err(Error::parse(path, line, format!("{key}: missing value")));
            }
            if let Some(first) = seen.insert(key.to_string(), line) {
                return Err(Error::parse(
                    path,
                    line,
                    format!("duplicate key '{key}' (first set on line {first})"),
                ));
            }
            cfg.set(key, value, base)
                .map_err(|m| Error::parse(path, line, format!("{key}: {m}")))?;
        }
        if cfg.relation.eps >= cfg.relation.radius {
            let line = seen.get("eps").or(seen.get("radius")).copied().unwrap_or(0);
            return Err(Error::parse(path, line, "eps must be smaller than radius"));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, v: &str, base: &Path) -> std::result::Result<(), String> {
        match key {
            "a" => self.likelihood.a = positive(v)?,
            "synth_a" => self.synth.a = non_negative(v)?,
            "b" => {
                let b = positive(v)?;
                self.likelihood.b = b;
                self.synth.b = b;
            }
            "delta_s" => self.likelihood.delta_s = positive(v)?,
            "volume_unit" => self.likelihood.volume_unit = positive(v)?,
            "occlusion" => self.likelihood.occlusion = flag(v)?,
            "theta" => self.search.theta = number(v)?,
            "xi" => self.search.xi = optional(v, number)?,
            "max_hypotheses" => self.search.max_hypotheses = optional(v, at_least_one)?,
            "dedup_rotation_deg" => self.search.dedup_rotation = non_negative(v)?.to_radians(),
            "dedup_translation" => self.search.dedup_translation = non_negative(v)?,
            "max_triple_distance" => self.search.max_triple_distance = optional(v, positive)?,
            "best_effort" => self.search.best_effort = flag(v)?,
            "max_objects" => self.max_objects = at_least_one(v)?,
            "noise_sigma" => self.synth.noise_sigma = non_negative(v)?,
            "outlier_count" => self.synth.outlier_count = count(v)?,
            "pixel_pitch" => self.synth.pixel_pitch = positive(v)?,
            "point_budget" => self.synth.surface_point_budget = at_least_one(v)?,
            "radius" => self.relation.radius = positive(v)?,
            "eps" => self.relation.eps = positive(v)?,
            "samples" => self.relation.sample_len = at_least_one(v)?,
            "bins" => self.relation.bins = bins(v)?,
            "alpha" => self.alpha = positive(v)?,
            "qd" => self.qd = positive(v)?,
            "gamma_init" => {
                let g = positive(v)?;
                if g >= 1.0 {
                    return Err(bad(format!("must be < 1, got {g}")));
                }
                self.gamma_init = g;
            }
            "train_samples" => self.training.samples_per_location = at_least_one(v)?,
            "train_negatives" => self.training.negatives = at_least_one(v)?,
            "hard_negatives" => self.training.hard_negatives = count(v)?,
            "grouping_scenes" => self.training.grouping_scenes = count(v)?,
            "grouping_hypotheses" => self.training.grouping_hypotheses = at_least_one(v)?,
            "object_size" => self.scenes.object_size = positive(v)?,
            "notch" => self.scenes.notch = positive(v)?,
            "scenes" => self.scenes.scenes = at_least_one(v)?,
            "train_scenes" => self.scenes.train_scenes = at_least_one(v)?,
            "curvature_radius" => self.curvature_radius = positive(v)?,
            "rank_bins" => self.rank_bins = at_least_one(v)?,
            "seed" => {
                self.seed = v
                    .parse()
                    .map_err(|_| bad(format!("expected an unsigned integer, found '{v}'")))?
            }
            "models" => self.models = v.split_whitespace().map(|p| base.join(p)).collect(),
            "density" => self.density = Some(base.join(v)),
            "index" => self.index = Some(base.join(v)),
            _ => return Err(bad("unknown key")),
        }
        Ok(())
    }

    /// Cross-checks the assembled parameter groups.
    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.relation.validate()?;
        self.likelihood.validate()?;
        self.search.validate()?;
        if !(self.alpha > 0.0) {
            return Err(Error::InvalidParameter("alpha must be > 0".into()));
        }
        if self.scenes.notch * 2.0 >= self.scenes.object_size {
            return Err(Error::InvalidParameter(
                "notch must be less than half the object size".into(),
            ));
        }
        Ok(())
    }

    /// Every key with its current value, in a form [`Config::parse`] reads
    /// back. Paths are written as given.
    pub fn to_text(&self) -> String {
        let mut o = String::new();
        let mut kv = |k: &str, v: String| writeln!(o, "{k} = {v}").unwrap();
        kv("a", self.likelihood.a.to_string());
        kv("synth_a", self.synth.a.to_string());
        kv("b", self.likelihood.b.to_string());
        kv("delta_s", self.likelihood.delta_s.to_string());
        kv("volume_unit", self.likelihood.volume_unit.to_string());
        kv("occlusion", self.likelihood.occlusion.to_string());
        kv("theta", self.search.theta.to_string());
        kv("xi", fmt_opt(&self.search.xi));
        kv("max_hypotheses", fmt_opt(&self.search.max_hypotheses));
        kv(
            "dedup_rotation_deg",
            self.search.dedup_rotation.to_degrees().to_string(),
        );
        kv(
            "dedup_translation",
            self.search.dedup_translation.to_string(),
        );
        kv(
            "max_triple_distance",
            fmt_opt(&self.search.max_triple_distance),
        );
        kv("best_effort", self.search.best_effort.to_string());
        kv("max_objects", self.max_objects.to_string());
        kv("noise_sigma", self.synth.noise_sigma.to_string());
        kv("outlier_count", self.synth.outlier_count.to_string());
        kv("pixel_pitch", self.synth.pixel_pitch.to_string());
        kv("point_budget", self.synth.surface_point_budget.to_string());
        kv("radius", self.relation.radius.to_string());
        kv("eps", self.relation.eps.to_string());
        kv("samples", self.relation.sample_len.to_string());
        let [b1, b2, b3] = self.relation.bins;
        kv("bins", format!("{b1}x{b2}x{b3}"));
        kv("alpha", self.alpha.to_string());
        kv("qd", self.qd.to_string());
        kv("gamma_init", self.gamma_init.to_string());
        kv(
            "train_samples",
            self.training.samples_per_location.to_string(),
        );
        kv("train_negatives", self.training.negatives.to_string());
        kv("hard_negatives", self.training.hard_negatives.to_string());
        kv("grouping_scenes", self.training.grouping_scenes.to_string());
        kv(
            "grouping_hypotheses",
            self.training.grouping_hypotheses.to_string(),
        );
        kv("object_size", self.scenes.object_size.to_string());
        kv("notch", self.scenes.notch.to_string());
        kv("scenes", self.scenes.scenes.to_string());
        kv("train_scenes", self.scenes.train_scenes.to_string());
        kv("curvature_radius", self.curvature_radius.to_string());
        kv("rank_bins", self.rank_bins.to_string());
        kv("seed", self.seed.to_string());
        if !self.models.is_empty() {
            let m: Vec<String> = self
                .models
                .iter()
                .map(|p| p.display().to_string())
                .collect();
            kv("models", m.join(" "));
        }
        if let Some(p) = &self.density {
            kv("density", p.display().to_string());
        }
        if let Some(p) = &self.index {
            kv("index", p.display().to_string());
        }
        o
    }
}
