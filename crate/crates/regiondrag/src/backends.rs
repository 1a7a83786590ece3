//! Named denoiser backends and latent codecs.

use std::{fmt, str::FromStr};

use regiondrag_core::{
    ConstantDenoiser, Denoiser, EditConfig, IdentityCodec, LatentCodec, NoiseSchedule, PoolCodec, ToyDenoiser,
    ZeroDenoiser,
};
use serde::Serialize;

use crate::error::{AppError, Result};

/// Environment variable naming the default backend.
pub const BACKEND_ENV: &str = "REGIONDRAG_BACKEND";

pub type BuildFn = fn(&EditConfig) -> regiondrag_core::Result<Box<dyn Denoiser>>;

#[derive(Debug, Clone, Serialize)]
pub struct BackendInfo {
    pub name: String,
    pub description: String,
}

struct Entry {
    info: BackendInfo,
    build: BuildFn,
}

/// Read-only after construction; backends are built per edit since the toy
/// backend depends on the configured schedule length.
pub struct Registry {
    entries: Vec<Entry>,
    default: String,
}

fn toy(cfg: &EditConfig) -> regiondrag_core::Result<Box<dyn Denoiser>> {
    Ok(Box::new(ToyDenoiser::with_defaults(NoiseSchedule::sd15(cfg.total_trained_steps, 0.0)?)))
}

fn zero(_: &EditConfig) -> regiondrag_core::Result<Box<dyn Denoiser>> {
    Ok(Box::new(ZeroDenoiser))
}

fn constant(_: &EditConfig) -> regiondrag_core::Result<Box<dyn Denoiser>> {
    Ok(Box::new(ConstantDenoiser::Value(0.1)))
}

impl Registry {
    pub fn empty(default: &str) -> Self {
        Self {
            entries: Vec::new(),
            default: default.into(),
        }
    }

    /// `toy` (default), `zero` and `constant`.
    pub fn builtin() -> Self {
        let mut r = Self::empty("toy");
        r.register("toy", "untrained single attention block with key/value capture", toy);
        r.register("zero", "predicts zero noise", zero);
        r.register("constant", "predicts 0.1 everywhere", constant);
        r
    }

    /// Adds or replaces a backend.
    pub fn register(&mut self, name: &str, description: &str, build: BuildFn) {
        let entry = Entry {
            info: BackendInfo {
                name: name.into(),
                description: description.into(),
            },
            build,
        };
        match self.entries.iter_mut().find(|e| e.info.name == name) {
            Some(e) => *e = entry,
            None => self.entries.push(entry),
        }
    }

    pub fn set_default(&mut self, name: &str) -> Result<()> {
        self.check(name)?;
        self.default = name.into();
        Ok(())
    }

    pub fn default_name(&self) -> &str {
        &self.default
    }

    pub fn list(&self) -> impl Iterator<Item = &BackendInfo> {
        self.entries.iter().map(|e| &e.info)
    }

    fn check(&self, name: &str) -> Result<&Entry> {
        self.entries.iter().find(|e| e.info.name == name).ok_or_else(|| {
            let known: Vec<_> = self.list().map(|i| i.name.as_str()).collect();
            AppError::Usage(format!("unknown backend '{name}' (known: {})", known.join(", ")))
        })
    }

    /// Builds `name`, or the default backend when `None`.
    pub fn build(&self, name: Option<&str>, cfg: &EditConfig) -> Result<Box<dyn Denoiser>> {
        let entry = self.check(name.unwrap_or(&self.default))?;
        Ok((entry.build)(cfg)?)
    }
}

impl Default for Registry {
    fn default() -> Self {
        Self::builtin()
    }
}

/// `identity`, `pool` (factor 8) or `pool:<factor>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodecChoice {
    Identity,
    Pool(u32),
}

impl Default for CodecChoice {
    fn default() -> Self {
        CodecChoice::Pool(8)
    }
}

impl CodecChoice {
    pub fn build(self) -> Result<Box<dyn LatentCodec>> {
        Ok(match self {
            CodecChoice::Identity => Box::new(IdentityCodec),
            CodecChoice::Pool(f) => Box::new(PoolCodec::new(f)?),
        })
    }
}

impl FromStr for CodecChoice {
    type Err = AppError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(CodecChoice::Identity),
            "pool" => Ok(CodecChoice::Pool(8)),
            other => match other.strip_prefix("pool:").map(str::parse::<u32>) {
                Some(Ok(f)) if f > 0 => Ok(CodecChoice::Pool(f)),
                _ => Err(AppError::Usage(format!(
                    "unknown codec '{other}', expected identity, pool or pool:<factor>"
                ))),
            },
        }
    }
}

impl fmt::Display for CodecChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CodecChoice::Identity => f.write_str("identity"),
            CodecChoice::Pool(8) => f.write_str("pool"),
            CodecChoice::Pool(n) => write!(f, "pool:{n}"),
        }
    }
}
