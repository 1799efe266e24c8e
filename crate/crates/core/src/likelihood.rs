//! Log-likelihood of range data under a posed object's generative model.
//!
//! Points in the shell around sensor-facing surfaces have density
//! `N·f(φ)`, points elsewhere in the volume `N·b`, and points outside the
//! volume are left to the background and contribute nothing.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Pose, UnitVec3};
use crate::mesh::{PointClass, ShellClassifier, TriMesh};
use crate::model::ObjectModel;
use crate::scan::RangeScan;
use crate::synth::surface_intensity;

#[derive(Clone, Debug, PartialEq)]
pub struct LikelihoodParams {
    /// Falloff of the surface density with the normal/gaze angle.
    pub a: f64,
    /// Interior density relative to the surface density.
    pub b: f64,
    /// Half-width of the shell around visible surfaces (mm).
    pub delta_s: f64,
    /// Length unit (mm) in which volumes enter `ln N`. One point per cubic
    /// unit is the implicit density of unexplained data.
    pub volume_unit: f64,
    /// Exclude self-occluded surface from the shell.
    pub occlusion: bool,
    /// `ln N(c)` per object class.
    pub ln_n: BTreeMap<u32, f64>,
}

impl Default for LikelihoodParams {
    fn default() -> Self {
        LikelihoodParams {
            a: 1.0,
            b: 1e-6,
            delta_s: 2.0,
            volume_unit: 1.0,
            occlusion: false,
            ln_n: BTreeMap::new(),
        }
    }
}

impl LikelihoodParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.a > 0.0 && self.a.is_finite()) {
            return bad(format!("a must be > 0, got {}", self.a));
        }
        if !(self.b > 0.0 && self.b.is_finite()) {
            return bad(format!("b must be > 0, got {}", self.b));
        }
        if !(self.delta_s > 0.0 && self.delta_s.is_finite()) {
            return bad(format!("delta_s must be > 0, got {}", self.delta_s));
        }
        if !(self.volume_unit > 0.0 && self.volume_unit.is_finite()) {
            return bad(format!("volume_unit must be > 0, got {}", self.volume_unit));
        }
        if let Some((c, v)) = self.ln_n.iter().find(|(_, v)| !v.is_finite()) {
            return bad(format!("ln N({c}) = {v} is not finite"));
        }
        Ok(())
    }

    /// Fills `ln_n` for every model under the given gaze.
    pub fn with_models(mut self, models: &[ObjectModel], gaze: &UnitVec3) -> Result<Self> {
        for m in models {
            let v = normalization(m, &self, gaze)?;
            self.ln_n.insert(m.class_id(), v);
        }
        Ok(self)
    }

    pub fn ln_n(&self, class_id: u32) -> Result<f64> {
        self.ln_n
            .get(&class_id)
            .copied()
            .ok_or(Error::UnknownObject(class_id))
    }
}

/// Visible (sensor-facing) area and `∫ f dA` over it, with `φ` constant per
/// triangle.
pub fn visible_quadrature(mesh: &TriMesh, gaze: &UnitVec3, a: f64) -> (f64, f64) {
    let mut area = 0.0;
    let mut integral = 0.0;
    for (ti, n) in mesh.normals().iter().enumerate() {
        let c = n.dot(gaze);
        if c > 0.0 {
            let ta = mesh.triangle_area(ti);
            area += ta;
            integral += ta * surface_intensity(a, c);
        }
    }
    (area, integral)
}

/// `ln N(c)` at the model's canonical pose:
/// `1/N = 2δ_S ∫f dA + b (vol − 2δ_S · visible area)`, volumes in
/// `volume_unit³`.
pub fn normalization(
    model: &ObjectModel,
    params: &LikelihoodParams,
    gaze: &UnitVec3,
) -> Result<f64> {
    let mesh = model.mesh();
    mesh.require_watertight()?;
    let (area, integral) = visible_quadrature(mesh, gaze, params.a);
    let two_delta = 2.0 * params.delta_s;
    let inv_n = two_delta * integral + params.b * (mesh.signed_volume() - two_delta * area);
    if !(inv_n > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "normalisation of class {} is not positive ({inv_n}); shell too wide for the object",
            model.class_id()
        )));
    }
    Ok(-(inv_n / params.volume_unit.powi(3)).ln())
}

/// Per-point contribution, `None` for points outside the volume.
fn contribution(class: PointClass, gaze: &UnitVec3, a: f64, ln_b: f64, ln_n: f64) -> Option<f64> {
    match class {
        PointClass::Surface { normal } => Some(2.0 * a * (normal.dot(gaze) - 1.0) + ln_n),
        PointClass::Interior => Some(ln_b + ln_n),
        PointClass::Outside => None,
    }
}

/// `L(c, p; D)` and the number of contributing points.
pub fn log_likelihood(
    scan: &RangeScan,
    model: &ObjectModel,
    pose: &Pose,
    params: &LikelihoodParams,
) -> Result<(f64, usize)> {
    let ln_n = params.ln_n(model.class_id())?;
    let classifier = ShellClassifier::new(
        model.mesh(),
        pose,
        scan.gaze(),
        params.delta_s,
        params.occlusion,
    )?;
    let gaze = scan.gaze();
    let ln_b = params.b.ln();
    let terms: Vec<Option<f64>> = scan
        .points()
        .par_iter()
        .with_min_len(256)
        .map(|p| contribution(classifier.classify(p), gaze, params.a, ln_b, ln_n))
        .collect();
    // Fixed-order reduction keeps the sum independent of scheduling.
    let mut sum = 0.0;
    let mut n_in = 0;
    for t in terms.into_iter().flatten() {
        sum += t;
        n_in += 1;
    }
    Ok((sum, n_in))
}

/// Flags the points a posed object explains (Surface or Interior).
pub fn explained_points(
    scan: &RangeScan,
    model: &ObjectModel,
    pose: &Pose,
    params: &LikelihoodParams,
) -> Result<Vec<bool>> {
    let classifier = ShellClassifier::new(
        model.mesh(),
        pose,
        scan.gaze(),
        params.delta_s,
        params.occlusion,
    )?;
    Ok(scan
        .points()
        .par_iter()
        .with_min_len(256)
        .map(|p| !matches!(classifier.classify(p), PointClass::Outside))
        .collect())
}
