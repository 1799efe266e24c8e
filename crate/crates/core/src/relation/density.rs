use std::fmt::Write as _;
use std::path::Path;

use super::delta::DeltaSample;
use super::sampler::TetraSampler;
use super::RelationConfig;
use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::scan::RangeScan;
use crate::textio::{content_lines, read_file, LineCursor};

/// Default Laplace pseudo-count per bin.
pub const DEFAULT_ALPHA: f64 = 0.5;

/// Binned probability masses of Δ for one shape class.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityGrid {
    bins: [usize; 3],
    masses: Vec<f64>,
    log_masses: Vec<f64>,
    count: u64,
}

/// Row-major `(u1, u2, u3)` bin of a sample. Bin edges are uniform over
/// `[0,1] × [-1,1] × [0,1]`; the upper edges fall into the last bin.
pub fn bin_index(bins: [usize; 3], s: &DeltaSample) -> usize {
    let b = |v: f64, n: usize| ((v * n as f64).floor().max(0.0) as usize).min(n - 1);
    let i1 = b(s.u1, bins[0]);
    let i2 = b((s.u2 + 1.0) / 2.0, bins[1]);
    let i3 = b(s.u3, bins[2]);
    (i1 * bins[1] + i2) * bins[2] + i3
}

impl DensityGrid {
    pub fn from_samples(samples: &[DeltaSample], bins: [usize; 3], alpha: f64) -> Self {
        let n = bins.iter().product::<usize>();
        let mut counts = vec![0u64; n];
        for s in samples {
            counts[bin_index(bins, s)] += 1;
        }
        let total = samples.len() as f64;
        let denom = total + alpha * n as f64;
        let masses = counts.iter().map(|&c| (c as f64 + alpha) / denom).collect();
        Self::from_masses(bins, masses, samples.len() as u64)
    }

    fn from_masses(bins: [usize; 3], masses: Vec<f64>, count: u64) -> Self {
        let log_masses = masses.iter().map(|m: &f64| m.ln()).collect();
        DensityGrid {
            bins,
            masses,
            log_masses,
            count,
        }
    }

    pub fn bins(&self) -> [usize; 3] {
        self.bins
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    /// Number of training samples.
    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mass(&self, s: &DeltaSample) -> f64 {
        self.masses[bin_index(self.bins, s)]
    }

    pub fn ln_mass(&self, s: &DeltaSample) -> f64 {
        self.log_masses[bin_index(self.bins, s)]
    }
}

/// Per-class densities, index 0 being the non-feature class.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityModel {
    config: RelationConfig,
    alpha: f64,
    grids: Vec<DensityGrid>,
}

/// Trains one grid per class from `samples[s]`, `s = 0..=m`.
pub fn train_density(
    samples: &[Vec<DeltaSample>],
    cfg: &RelationConfig,
    alpha: f64,
) -> Result<DensityModel> {
    cfg.validate()?;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "alpha must be > 0, got {alpha}"
        )));
    }
    if samples.len() < 2 {
        return Err(Error::InvalidParameter(
            "need the non-feature class and at least one feature class".into(),
        ));
    }
    if let Some(s) = samples.iter().position(|v| v.is_empty()) {
        return Err(Error::EmptyClass(s as u32));
    }
    Ok(DensityModel {
        config: cfg.clone(),
        alpha,
        grids: samples
            .iter()
            .map(|v| DensityGrid::from_samples(v, cfg.bins, alpha))
            .collect(),
    })
}

impl DensityModel {
    /// Builds a model from explicit grids (index = class).
    pub fn from_grids(config: RelationConfig, alpha: f64, grids: Vec<DensityGrid>) -> Result<Self> {
        config.validate()?;
        if grids.len() < 2 {
            return Err(Error::InvalidParameter("need at least two grids".into()));
        }
        for g in &grids {
            if g.bins != config.bins {
                return Err(Error::InvalidParameter(
                    "grid dimensions differ from config bins".into(),
                ));
            }
        }
        Ok(DensityModel {
            config,
            alpha,
            grids,
        })
    }

    /// Grid with explicit masses, for hand-built models.
    pub fn grid_from_masses(bins: [usize; 3], masses: Vec<f64>, count: u64) -> Result<DensityGrid> {
        if masses.len() != bins.iter().product::<usize>() {
            return Err(Error::InvalidParameter(
                "mass count does not match bins".into(),
            ));
        }
        if masses.iter().any(|m| !(*m > 0.0 && m.is_finite())) {
            return Err(Error::InvalidParameter("masses must be positive".into()));
        }
        Ok(DensityGrid::from_masses(bins, masses, count))
    }

    /// Number of feature classes `m`.
    pub fn classes(&self) -> usize {
        self.grids.len() - 1
    }

    pub fn config(&self) -> &RelationConfig {
        &self.config
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn grids(&self) -> &[DensityGrid] {
        &self.grids
    }

    pub fn grid(&self, s: u32) -> Result<&DensityGrid> {
        self.grids.get(s as usize).ok_or(Error::UnknownClass(s))
    }

    /// `Σ ln p(Δ|s) − ln p(Δ|0)` over the given samples; `-∞` for none.
    pub fn phi_of_samples(&self, s: u32, samples: &[DeltaSample]) -> Result<f64> {
        if s == 0 {
            return Err(Error::UnknownClass(0));
        }
        let g = self.grid(s)?;
        if samples.is_empty() {
            return Ok(f64::NEG_INFINITY);
        }
        let g0 = &self.grids[0];
        Ok(samples.iter().map(|d| g.ln_mass(d) - g0.ln_mass(d)).sum())
    }

    /// Φ for every class `1..=m` from one sample list.
    pub fn phi_all(&self, samples: &[DeltaSample]) -> Vec<f64> {
        if samples.is_empty() {
            return vec![f64::NEG_INFINITY; self.classes()];
        }
        let base: Vec<f64> = samples.iter().map(|d| self.grids[0].ln_mass(d)).collect();
        self.grids[1..]
            .iter()
            .map(|g| {
                samples
                    .iter()
                    .zip(&base)
                    .map(|(d, b)| g.ln_mass(d) - b)
                    .sum()
            })
            .collect()
    }

    pub fn to_text(&self) -> String {
        let c = &self.config;
        let [n1, n2, n3] = c.bins;
        let mut out = String::new();
        writeln!(
            out,
            "density m={} R={} eps={} l={} bins={}x{}x{} alpha={}",
            self.classes(),
            c.radius,
            c.eps,
            c.sample_len,
            n1,
            n2,
            n3,
            self.alpha
        )
        .unwrap();
        for (s, g) in self.grids.iter().enumerate() {
            writeln!(out, "class {} count={}", s, g.count).unwrap();
            for row in g.masses.chunks(n3) {
                let mut first = true;
                for m in row {
                    if !first {
                        out.push(' ');
                    }
                    first = false;
                    write!(out, "{m}").unwrap();
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut lines = content_lines(text);
        let (line, header) = lines
            .next()
            .ok_or_else(|| Error::parse(path, 1, "empty density file"))?;
        let cur = LineCursor { path, line };
        let mut toks = header.split_whitespace();
        if toks.next() != Some("density") {
            return Err(cur.err("expected header starting with 'density'"));
        }
        let m: usize = cur.keyed(toks.next(), "m")?;
        let radius: f64 = cur.keyed(toks.next(), "R")?;
        let eps: f64 = cur.keyed(toks.next(), "eps")?;
        let sample_len: usize = cur.keyed(toks.next(), "l")?;
        let bins_text: String = cur.keyed(toks.next(), "bins")?;
        let alpha: f64 = cur.keyed(toks.next(), "alpha")?;
        cur.done(toks)?;
        let dims: Vec<usize> = bins_text
            .split('x')
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| cur.err(format!("bad bins '{bins_text}'")))?;
        let bins: [usize; 3] = dims
            .try_into()
            .map_err(|_| cur.err(format!("bins must be n1xn2xn3, got '{bins_text}'")))?;
        let config = RelationConfig {
            radius,
            eps,
            sample_len,
            bins,
        };
        config.validate().map_err(|e| cur.err(e.to_string()))?;
        if m < 1 {
            return Err(cur.err("m must be >= 1"));
        }
        let per_grid: usize = bins.iter().product();

        let mut grids = Vec::with_capacity(m + 1);
        let mut pending: Option<(usize, u64, Vec<f64>)> = None;
        let finish = |p: Option<(usize, u64, Vec<f64>)>,
                      line: usize,
                      grids: &mut Vec<DensityGrid>|
         -> Result<()> {
            if let Some((s, count, masses)) = p {
                let cur = LineCursor { path, line };
                if masses.len() != per_grid {
                    return Err(cur.err(format!(
                        "class {s} has {} masses, expected {per_grid}",
                        masses.len()
                    )));
                }
                let sum: f64 = masses.iter().sum();
                if (sum - 1.0).abs() > 1e-9 {
                    return Err(cur.err(format!("class {s} masses sum to {sum}")));
                }
                grids.push(DensityGrid::from_masses(bins, masses, count));
            }
            Ok(())
        };
        let mut last_line = line;
        for (line, l) in lines {
            last_line = line;
            let cur = LineCursor { path, line };
            let mut toks = l.split_whitespace().peekable();
            if toks.peek() == Some(&"class") {
                toks.next();
                finish(pending.take(), line, &mut grids)?;
                let s: usize = cur.num(toks.next(), "class index")?;
                if s != grids.len() {
                    return Err(cur.err(format!("expected class {}, found {s}", grids.len())));
                }
                let count: u64 = cur.keyed(toks.next(), "count")?;
                cur.done(toks)?;
                pending = Some((s, count, Vec::with_capacity(per_grid)));
            } else {
                let Some((_, _, masses)) = pending.as_mut() else {
                    return Err(cur.err("masses before any 'class' line"));
                };
                for t in toks {
                    let v = cur.finite(Some(t), "mass")?;
                    if v <= 0.0 {
                        return Err(cur.err("masses must be positive"));
                    }
                    masses.push(v);
                }
            }
        }
        finish(pending.take(), last_line, &mut grids)?;
        if grids.len() != m + 1 {
            return Err(Error::parse(
                path,
                last_line,
                format!("expected {} classes, found {}", m + 1, grids.len()),
            ));
        }
        Ok(DensityModel {
            config,
            alpha,
            grids,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_file(path)?, path)
    }
}

/// Φ of shape class `s` at `f`, drawing `l` samples with the given seed.
pub fn phi_score(
    scan: &RangeScan,
    s: u32,
    f: &Point3,
    dm: &DensityModel,
    seed: u64,
) -> Result<f64> {
    dm.grid(s)?;
    let samples = TetraSampler::new(scan).sample(f, dm.config(), seed);
    dm.phi_of_samples(s, &samples)
}
