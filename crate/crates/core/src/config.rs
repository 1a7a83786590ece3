use alloc::format;

use crate::error::{Error, Result};

/// When latent copy-paste runs during denoising.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum CpMode {
    /// Every denoising step with `t >= cp_stop`.
    #[default]
    MultiStep,
    /// Only the first denoising step, at the inversion timestep.
    InitialOnly,
}

impl core::str::FromStr for CpMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multi-step" => Ok(CpMode::MultiStep),
            "initial-only" => Ok(CpMode::InitialOnly),
            other => Err(Error::InvalidConfig(format!(
                "unknown cp mode '{other}', expected multi-step or initial-only"
            ))),
        }
    }
}

impl core::fmt::Display for CpMode {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            CpMode::MultiStep => "multi-step",
            CpMode::InitialOnly => "initial-only",
        })
    }
}

/// Editing parameters. Defaults reproduce the reference setup: 20 sampler
/// steps over 1000 trained steps, inversion to 500, copy-paste until 200 and
/// full resampling of the handle region.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct EditConfig {
    pub total_trained_steps: u32,
    pub sampler_steps: u32,
    /// Timestep the image is inverted to (`t'`).
    pub invert_to: u32,
    /// Last timestep at which copy-paste runs (`t''`).
    pub cp_stop: u32,
    pub blend_alpha: f64,
    pub eta: f64,
    pub kv_swap: bool,
    pub cp_mode: CpMode,
    pub seed: u64,
}

impl Default for EditConfig {
    fn default() -> Self {
        Self {
            total_trained_steps: 1000,
            sampler_steps: 20,
            invert_to: 500,
            cp_stop: 200,
            blend_alpha: 1.0,
            eta: 1.0,
            kv_swap: true,
            cp_mode: CpMode::MultiStep,
            seed: 0,
        }
    }
}

impl EditConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::InvalidConfig(msg));
        if self.total_trained_steps == 0 {
            return bad("total_trained_steps must be >= 1".into());
        }
        if self.sampler_steps == 0 {
            return bad("sampler_steps must be >= 1".into());
        }
        if self.sampler_steps > self.total_trained_steps {
            return bad(format!(
                "sampler_steps {} exceeds total_trained_steps {}",
                self.sampler_steps, self.total_trained_steps
            ));
        }
        if !(self.cp_stop <= self.invert_to && self.invert_to <= self.total_trained_steps) {
            return bad(format!(
                "need 0 <= cp_stop ({}) <= invert_to ({}) <= total_trained_steps ({})",
                self.cp_stop, self.invert_to, self.total_trained_steps
            ));
        }
        if !(0.0..=1.0).contains(&self.blend_alpha) {
            return bad(format!("blend_alpha {} not in [0, 1]", self.blend_alpha));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return bad(format!("eta {} must be a finite value >= 0", self.eta));
        }
        Ok(())
    }
}
