//! Edit requests and the single execution path shared by the CLI and the
//! HTTP service.

use base64::{engine::general_purpose::STANDARD as B64, Engine as _};
use regiondrag_core::{
    pipeline::{EditOutcome, Engine},
    synthetic::SquareFixture,
    time::{StageTimings, SystemClock},
    CpMode, EditConfig, ImageBuffer, RegionPair,
};
use serde::{Deserialize, Serialize};

use crate::{
    backends::{CodecChoice, Registry},
    error::{AppError, Result},
    formats::{region_pairs, RegionPairRecord},
    imageio,
};

fn parse_cp_mode(s: &str) -> std::result::Result<CpMode, String> {
    s.parse().map_err(|e: regiondrag_core::Error| e.to_string())
}

/// [`EditConfig`] fields that, when set, replace those of a base config.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, clap::Args)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigOverrides {
    #[arg(long)]
    pub total_trained_steps: Option<u32>,
    #[arg(long)]
    pub sampler_steps: Option<u32>,
    #[arg(long)]
    pub invert_to: Option<u32>,
    #[arg(long)]
    pub cp_stop: Option<u32>,
    #[arg(long)]
    pub blend_alpha: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub kv_swap: Option<bool>,
    #[arg(long, value_parser = parse_cp_mode)]
    pub cp_mode: Option<CpMode>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl ConfigOverrides {
    pub fn apply(&self, mut cfg: EditConfig) -> EditConfig {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { cfg.$f = v; })* };
        }
        set!(total_trained_steps, sampler_steps, invert_to, cp_stop, blend_alpha, eta, kv_swap, cp_mode, seed);
        cfg
    }
}

/// Reads an [`EditConfig`] from a JSON file; missing fields take defaults.
pub fn load_config(path: &std::path::Path) -> Result<EditConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| AppError::format("config file", e))
}

/// `square:<seed>`: member of the synthetic translation family.
pub fn fixture(id: &str) -> Result<SquareFixture> {
    id.strip_prefix("square:")
        .and_then(|s| s.parse().ok())
        .map(SquareFixture::family)
        .ok_or_else(|| AppError::Usage(format!("unknown fixture '{id}', expected square:<seed>")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageInput {
    PngBase64(String),
    /// Fixture id; see [`fixture`].
    Fixture(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditRequest {
    pub image: ImageInput,
    #[serde(default)]
    pub prompt: String,
    /// May be omitted for fixture images, which then use their own pair.
    #[serde(default)]
    pub regions: Vec<RegionPairRecord>,
    #[serde(default)]
    pub config: ConfigOverrides,
    #[serde(default)]
    pub backend: Option<String>,
    #[serde(default)]
    pub codec: Option<String>,
}

/// A fully resolved edit.
#[derive(Debug, Clone)]
pub struct EditJob {
    pub image: ImageBuffer,
    pub pairs: Vec<RegionPair>,
    pub prompt: String,
    pub config: EditConfig,
    pub backend: Option<String>,
    pub codec: CodecChoice,
}

impl EditRequest {
    /// Decodes the request. `seed` is used when the request sets none.
    pub fn resolve(&self, base: &EditConfig, seed: u64) -> Result<EditJob> {
        let (image, fallback) = match &self.image {
            ImageInput::PngBase64(data) => {
                let bytes = B64.decode(data.trim()).map_err(|e| AppError::format("image base64", e))?;
                (imageio::decode_png(&bytes)?, None)
            }
            ImageInput::Fixture(id) => {
                let f = fixture(id)?;
                (f.image(), Some(f.region_pair()?))
            }
        };
        let pairs = match (self.regions.is_empty(), fallback) {
            (true, Some(pair)) => vec![pair],
            _ => region_pairs(&self.regions)?,
        };
        let mut config = self.config.apply(base.clone());
        if self.config.seed.is_none() {
            config.seed = seed;
        }
        Ok(EditJob {
            image,
            pairs,
            prompt: self.prompt.clone(),
            config,
            backend: self.backend.clone(),
            codec: self.codec.as_deref().map(str::parse).transpose()?.unwrap_or_default(),
        })
    }
}

#[derive(Debug)]
pub struct EditResult {
    pub png: Vec<u8>,
    pub outcome: EditOutcome,
    pub backend: String,
    pub codec: CodecChoice,
}

pub fn execute_edit(registry: &Registry, job: &EditJob) -> Result<EditResult> {
    job.config.validate()?;
    let backend = registry.build(job.backend.as_deref(), &job.config)?;
    let codec = job.codec.build()?;
    let clock = SystemClock::default();
    let engine = Engine::new(backend.as_ref(), codec.as_ref()).with_clock(&clock);
    let outcome = engine.run_edit(&job.image, &job.pairs, &job.prompt, &job.config)?;
    Ok(EditResult {
        png: imageio::encode_png(&outcome.image)?,
        backend: backend.name().to_string(),
        codec: job.codec,
        outcome,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditResponse {
    pub image_png_base64: String,
    pub seed: u64,
    pub backend: String,
    pub codec: String,
    pub timings: StageTimings,
    pub mapped_points: usize,
    pub cp_timesteps: Vec<u32>,
    pub warnings: Vec<String>,
}

impl From<&EditResult> for EditResponse {
    fn from(r: &EditResult) -> Self {
        let s = &r.outcome.session;
        Self {
            image_png_base64: B64.encode(&r.png),
            seed: s.config.seed,
            backend: r.backend.clone(),
            codec: r.codec.to_string(),
            timings: s.timings,
            mapped_points: s.mapping.len(),
            cp_timesteps: s.cp_timesteps.clone(),
            warnings: s.warnings.clone(),
        }
    }
}
