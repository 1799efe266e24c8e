//! Point-relation densities: the Δ-map over tetrahedra around an inspection
//! point, unbiased sampling of tetrahedron representations, binned
//! per-class densities and the Φ log-likelihood ratio.

mod delta;
mod density;
mod sampler;

pub use delta::{delta_map, DeltaSample};
pub use density::{bin_index, phi_score, train_density, DensityGrid, DensityModel, DEFAULT_ALPHA};
pub use sampler::{sample_tetra, TetraSampler};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct RelationConfig {
    /// Neighbourhood radius `R` (mm).
    pub radius: f64,
    /// Equal-distance tolerance (mm).
    pub eps: f64,
    /// Samples drawn per inspection point.
    pub sample_len: usize,
    /// Bin counts along `(u1, u2, u3)`.
    pub bins: [usize; 3],
}

impl Default for RelationConfig {
    fn default() -> Self {
        RelationConfig {
            radius: 15.0,
            eps: 1.0,
            sample_len: 50,
            bins: [15, 20, 10],
        }
    }
}

impl RelationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "R must be > 0, got {}",
                self.radius
            )));
        }
        if !(self.eps > 0.0 && self.eps < self.radius) {
            return Err(Error::InvalidParameter(format!(
                "eps must satisfy 0 < eps < R, got {}",
                self.eps
            )));
        }
        if self.sample_len < 1 {
            return Err(Error::InvalidParameter("l must be >= 1".into()));
        }
        if self.bins.contains(&0) {
            return Err(Error::InvalidParameter("bins must be >= 1 each".into()));
        }
        Ok(())
    }
}
