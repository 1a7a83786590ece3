//! Noise prediction backends.
//!
//! A [`Denoiser`] predicts the noise in a latent at a timestep. Backends with
//! self-attention expose their keys and values: a call can capture them, and
//! a later call can run with captured ones in place of its own (queries are
//! always computed from the call's own input).

mod toy;

use alloc::{
    collections::BTreeMap,
    format,
    string::{String, ToString},
    vec::Vec,
};

pub use toy::{ToyDenoiser, ToyDenoiserConfig};

use crate::{
    error::{Error, Result},
    grid::LatentGrid,
};

/// Text conditioning: the prompt and its backend-defined embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Conditioning {
    pub prompt: String,
    pub embedding: Vec<f32>,
}

/// Keys and values of one self-attention layer, token-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerKv {
    pub layer: u32,
    pub tokens: usize,
    pub key_dim: usize,
    pub value_dim: usize,
    pub keys: Vec<f32>,
    pub values: Vec<f32>,
}

impl LayerKv {
    pub fn new(layer: u32, tokens: usize, key_dim: usize, value_dim: usize, keys: Vec<f32>, values: Vec<f32>) -> Result<Self> {
        if keys.len() != tokens * key_dim || values.len() != tokens * value_dim {
            return Err(Error::ShapeMismatch(format!(
                "layer {layer}: {} keys / {} values for {tokens} tokens of dims {key_dim}/{value_dim}",
                keys.len(),
                values.len()
            )));
        }
        Ok(Self {
            layer,
            tokens,
            key_dim,
            value_dim,
            keys,
            values,
        })
    }

    pub fn key(&self, token: usize) -> &[f32] {
        &self.keys[token * self.key_dim..(token + 1) * self.key_dim]
    }

    pub fn value(&self, token: usize) -> &[f32] {
        &self.values[token * self.value_dim..(token + 1) * self.value_dim]
    }

    pub fn byte_len(&self) -> usize {
        (self.keys.len() + self.values.len()) * core::mem::size_of::<f32>()
    }
}

/// Keys and values of every attention layer for one call.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KvFragment {
    pub layers: Vec<LayerKv>,
}

impl KvFragment {
    pub fn layer(&self, id: u32) -> Option<&LayerKv> {
        self.layers.iter().find(|l| l.layer == id)
    }
}

/// Captured attention state keyed by timestep.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AttentionCache {
    entries: BTreeMap<u32, KvFragment>,
}

impl AttentionCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, timestep: u32, fragment: KvFragment) {
        self.entries.insert(timestep, fragment);
    }

    pub fn get(&self, timestep: u32) -> Option<&KvFragment> {
        self.entries.get(&timestep)
    }

    pub fn timesteps(&self) -> impl Iterator<Item = u32> + '_ {
        self.entries.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &KvFragment)> {
        self.entries.iter().map(|(t, f)| (*t, f))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Noise prediction plus, when requested, the attention state of the call.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserOutput {
    pub eps: LatentGrid,
    pub kv: Option<KvFragment>,
}

/// The noise predictor `eps(z, t, c)`.
pub trait Denoiser: Send + Sync {
    fn name(&self) -> &str;

    /// Whether `predict_noise` may be called from several threads at once.
    fn concurrent(&self) -> bool {
        true
    }

    /// Encodes a prompt for this backend.
    fn condition(&self, prompt: &str) -> Conditioning;

    fn predict_noise(
        &self,
        z: &LatentGrid,
        t: u32,
        cond: &Conditioning,
        kv_override: Option<&KvFragment>,
        capture_kv: bool,
    ) -> Result<DenoiserOutput>;
}

/// Predicts zero noise everywhere.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroDenoiser;

impl Denoiser for ZeroDenoiser {
    fn name(&self) -> &str {
        "zero"
    }

    fn condition(&self, prompt: &str) -> Conditioning {
        Conditioning {
            prompt: prompt.to_string(),
            embedding: Vec::new(),
        }
    }

    fn predict_noise(&self, z: &LatentGrid, t: u32, _: &Conditioning, _: Option<&KvFragment>, capture_kv: bool) -> Result<DenoiserOutput> {
        Ok(DenoiserOutput {
            eps: LatentGrid::zeros(z.channels(), z.height(), z.width(), t),
            kv: capture_kv.then(KvFragment::default),
        })
    }
}

/// Predicts the same grid for every input of matching shape, or a constant
/// value broadcast over any shape.
#[derive(Debug, Clone)]
pub enum ConstantDenoiser {
    Value(f64),
    Grid(LatentGrid),
}

impl Denoiser for ConstantDenoiser {
    fn name(&self) -> &str {
        "constant"
    }

    fn condition(&self, prompt: &str) -> Conditioning {
        Conditioning {
            prompt: prompt.to_string(),
            embedding: Vec::new(),
        }
    }

    fn predict_noise(&self, z: &LatentGrid, t: u32, _: &Conditioning, _: Option<&KvFragment>, capture_kv: bool) -> Result<DenoiserOutput> {
        let eps = match self {
            ConstantDenoiser::Value(v) => {
                let mut g = LatentGrid::zeros(z.channels(), z.height(), z.width(), t);
                g.data_mut().fill(*v);
                g
            }
            ConstantDenoiser::Grid(g) => {
                z.require_same_shape(g, "constant eps grid")?;
                g.clone().with_timestep(t)
            }
        };
        Ok(DenoiserOutput {
            eps,
            kv: capture_kv.then(KvFragment::default),
        })
    }
}
