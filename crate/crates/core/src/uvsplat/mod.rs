//! Multi-view feature splatting into a canonical UV map.
//!
//! Each view's pixel features are bilinearly splatted into a pyramid of UV
//! maps together with a density map and a view-angle confidence map. Holes at
//! fine levels are filled from coarser levels with a density-gated,
//! coverage-normalized upsampling, and the filled per-view maps are merged by a
//! weighted average whose weights combine a per-view prior, the confidence and
//! the density.
//!
//! Everything downstream of the pixel features is linear in them, with weights
//! that depend on geometry only, so [`FusionTape::backward`] is the exact
//! transpose of the forward map.

mod fill;
mod fuse;
mod splat;

pub use fill::{hole_fill, upsample, upsample_adjoint, FilledView};
pub use fuse::{fuse, fuse_views, FusionOutput, FusionTape, ViewInput};
pub use splat::{
    bilinear_taps, build_pyramid, confidence_score, level_resolutions, splat_confidence,
    splat_level, PyramidLevel, SplatLevel, Taps, UVPyramid,
};

use crate::error::{Error, Result};

/// Dense per-pixel feature image, row-major and channel-last.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::InvalidInput(format!(
                "feature map dimensions must be at least 1, got {width}x{height}x{channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::DimensionMismatch {
                what: "feature map data",
                expected: width * height * channels,
                got: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "feature value at flat index {i} is not finite"
            )));
        }
        Ok(FeatureMap {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        FeatureMap {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn pixel(&self, index: usize) -> &[f64] {
        &self.data[index * self.channels..(index + 1) * self.channels]
    }
}

/// How per-view pyramids are combined.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum FusionMode {
    /// Hole-fill each view coarse-to-fine, then average the filled views.
    #[default]
    HoleFilled,
    /// Average every (view, level) pair directly after upsampling to the base
    /// resolution, without per-view hole filling.
    RawLevels,
}

impl std::str::FromStr for FusionMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "hole_filled" | "hole-filled" => Ok(FusionMode::HoleFilled),
            "raw_levels" | "raw-levels" => Ok(FusionMode::RawLevels),
            _ => Err(format!("unknown fusion mode `{s}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FusionConfig {
    /// Per-view prior weight, indexed like the views passed to fusion.
    pub gamma: Vec<f64>,
    /// Density/weight threshold below which a texel counts as unobserved.
    pub epsilon: f64,
    pub base_res: usize,
    pub num_levels: usize,
    /// Density at which a level fully trusts its own samples.
    pub density_tau: f64,
    pub mode: FusionMode,
}

/// View priors for the six-view rig order (front, ±60°, ±120°, back).
pub const SIX_VIEW_GAMMA: [f64; 6] = [1.0, 0.8, 0.8, 0.6, 0.6, 0.7];

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            gamma: SIX_VIEW_GAMMA.to_vec(),
            epsilon: 1e-8,
            base_res: 256,
            num_levels: 4,
            density_tau: 1.0,
            mode: FusionMode::HoleFilled,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidConfig(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        if !(self.density_tau > 0.0) || !self.density_tau.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "density_tau must be > 0, got {}",
                self.density_tau
            )));
        }
        if self.base_res < 1 {
            return Err(Error::InvalidConfig("base_res must be at least 1".into()));
        }
        if self.num_levels < 1 {
            return Err(Error::InvalidConfig("num_levels must be at least 1".into()));
        }
        if self.gamma.iter().any(|g| !(*g >= 0.0) || !g.is_finite()) {
            return Err(Error::InvalidConfig("gamma entries must be finite and >= 0".into()));
        }
        if !self.gamma.iter().any(|g| *g > 0.0) {
            return Err(Error::InvalidConfig("at least one gamma must be positive".into()));
        }
        Ok(())
    }
}

/// `num / den` where the denominator counts as observed, else 0.
#[inline]
pub(crate) fn guarded_ratio(num: f64, den: f64, epsilon: f64) -> f64 {
    if den > epsilon {
        num / den
    } else {
        0.0
    }
}
