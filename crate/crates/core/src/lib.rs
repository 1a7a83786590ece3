//! Region-based drag editing over a pluggable diffusion denoiser.
//!
//! The crate is `no_std` (with `alloc`) and contains every numerical piece of
//! the engine:
//!
//! - [`region`]: polygon/brush rasterization and latent downscaling,
//! - [`mapping`]: dense handle→target point correspondences,
//! - [`schedule`]: the noise schedule, the DDIM/DDPM transition and the
//!   handle blending function,
//! - [`denoiser`]: the noise-prediction interface with attention key/value
//!   capture and injection, plus built-in backends,
//! - [`pipeline`]: inversion, latent copy-paste and denoising end to end,
//! - [`metrics`]: search masks, Mean Distance and a pixel-space proxy,
//! - [`bench`]: point statistics and subset sampling for benchmarks.
//!
//! File formats, image IO, the CLI and the HTTP service live in the
//! `regiondrag` crate.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod bench;
pub mod codec;
pub mod config;
pub mod denoiser;
mod error;
pub mod grid;
pub mod mapping;
pub mod metrics;
pub mod pipeline;
pub mod region;
pub mod rng;
pub mod schedule;
pub mod synthetic;
pub mod time;

pub use crate::{
    codec::{IdentityCodec, LatentCodec, PoolCodec},
    config::{CpMode, EditConfig},
    denoiser::{
        AttentionCache, Conditioning, ConstantDenoiser, Denoiser, DenoiserOutput, KvFragment,
        ToyDenoiser, ZeroDenoiser,
    },
    error::{Error, Result},
    grid::{CoordSpace, ImageBuffer, LatentGrid, Point, PointPair},
    mapping::{MappedPair, MappedPointSet},
    region::{Region, RegionPair, RegionShape, Vertex},
    schedule::{NoiseSchedule, SamplerGrid},
};
