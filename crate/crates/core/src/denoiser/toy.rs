//! Built-in toy backend.
//!
//! A small fixed-weight network: a 3x3 convolution stem, a patch embedding,
//! one two-head self-attention layer over all latent patches and a
//! sinusoidal time embedding. Nothing is trained. The attention is set up so
//! that its output is a kernel-weighted average of clean-latent patches, which
//! makes the network a crude patch-based denoiser for whatever image it is
//! looking at. With injected keys and values the average runs over the
//! injected tokens instead, so edited trajectories are pulled toward the
//! content of the trajectory the keys and values were captured from.

use alloc::{format, string::ToString, vec, vec::Vec};

use super::{Conditioning, Denoiser, DenoiserOutput, KvFragment, LayerKv};
use crate::{
    error::{Error, Result},
    grid::LatentGrid,
    rng::{NoiseSource, Purpose},
    schedule::NoiseSchedule,
};

const LAYER: u32 = 0;
const HEADS: usize = 2;
const EMBED: usize = 16;
/// Floor on `1 - alpha_bar` so the clean-image end of the schedule stays finite.
const MIN_NOISE_VAR: f64 = 1e-4;
const MIN_TEMPERATURE: f32 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyDenoiserConfig {
    pub seed: u64,
    /// Side of the square latent patch that forms one attention token.
    pub patch: u32,
    /// Weight of the random convolution added to the first head's features.
    pub stem_gain: f32,
    /// Strength of time/prompt modulation of the attention temperature.
    pub cond_gain: f32,
}

impl Default for ToyDenoiserConfig {
    fn default() -> Self {
        Self {
            seed: 0x5eed,
            patch: 2,
            stem_gain: 0.05,
            cond_gain: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ToyDenoiser {
    config: ToyDenoiserConfig,
    schedule: NoiseSchedule,
    /// `HEADS x 2*EMBED` projection of the time+prompt embedding.
    gain_proj: Vec<f32>,
}

impl ToyDenoiser {
    pub fn new(schedule: NoiseSchedule, config: ToyDenoiserConfig) -> Result<Self> {
        if config.patch == 0 {
            return Err(Error::InvalidConfig("toy patch size must be >= 1".into()));
        }
        let mut w = vec![0.0; HEADS * 2 * EMBED];
        NoiseSource::new(config.seed).fill_normal(Purpose::Fixture, 1, &mut w);
        let norm = 1.0 / libm::sqrt((2 * EMBED) as f64);
        Ok(Self {
            config,
            schedule,
            gain_proj: w.into_iter().map(|v| (v * norm) as f32).collect(),
        })
    }

    pub fn with_defaults(schedule: NoiseSchedule) -> Self {
        Self::new(schedule, ToyDenoiserConfig::default()).expect("default toy config is valid")
    }

    pub fn config(&self) -> &ToyDenoiserConfig {
        &self.config
    }

    /// Bound on `|eps|` for inputs with `|z| <= max_abs_input` when the
    /// backend attends over its own keys and values.
    pub fn output_bound(max_abs_input: f64) -> f64 {
        2.0 * max_abs_input / libm::sqrt(MIN_NOISE_VAR)
    }

    /// Number of attention tokens for a `height x width` latent.
    pub fn token_count(&self, height: u32, width: u32) -> usize {
        (height.div_ceil(self.config.patch) * width.div_ceil(self.config.patch)) as usize
    }

    fn stem_weights(&self, channels: usize) -> Vec<f32> {
        let mut w = vec![0.0; channels * channels * 9];
        NoiseSource::new(self.config.seed).fill_normal(Purpose::Fixture, 2 + channels as u32, &mut w);
        let norm = 1.0 / libm::sqrt((9 * channels) as f64);
        w.into_iter().map(|v| (v * norm) as f32).collect()
    }

    fn head_gains(&self, t: u32, cond: &Conditioning) -> [f32; HEADS] {
        let mut emb = [0.0f32; 2 * EMBED];
        let half = EMBED / 2;
        for k in 0..half {
            let freq = libm::expf(-libm::logf(10_000.0) * k as f32 / half as f32);
            emb[2 * k] = libm::sinf(t as f32 * freq);
            emb[2 * k + 1] = libm::cosf(t as f32 * freq);
        }
        for (dst, src) in emb[EMBED..].iter_mut().zip(&cond.embedding) {
            *dst = *src;
        }
        let mut gains = [1.0f32; HEADS];
        for (h, g) in gains.iter_mut().enumerate() {
            let row = &self.gain_proj[h * 2 * EMBED..(h + 1) * 2 * EMBED];
            let act: f32 = row.iter().zip(&emb).map(|(w, e)| w * e).sum();
            *g = 1.0 + self.config.cond_gain * libm::tanhf(act);
        }
        gains
    }
}

/// Planar `C x H x W` feature map.
struct Planes<'a> {
    c: usize,
    h: usize,
    w: usize,
    data: &'a [f32],
}

impl Planes<'_> {
    #[inline]
    fn at_clamped(&self, c: usize, y: isize, x: isize) -> f32 {
        let y = y.clamp(0, self.h as isize - 1) as usize;
        let x = x.clamp(0, self.w as isize - 1) as usize;
        self.data[(c * self.h + y) * self.w + x]
    }
}

fn conv3x3(src: &Planes<'_>, weights: &[f32], gain: f32) -> Vec<f32> {
    let (c, h, w) = (src.c, src.h, src.w);
    let mut out = src.data.to_vec();
    for co in 0..c {
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for ci in 0..c {
                    let k = &weights[(co * c + ci) * 9..(co * c + ci + 1) * 9];
                    for dy in 0..3 {
                        for dx in 0..3 {
                            acc += k[dy * 3 + dx]
                                * src.at_clamped(ci, y as isize + dy as isize - 1, x as isize + dx as isize - 1);
                        }
                    }
                }
                out[(co * h + y) * w + x] += gain * acc;
            }
        }
    }
    out
}

fn box3x3(src: &Planes<'_>) -> Vec<f32> {
    let (c, h, w) = (src.c, src.h, src.w);
    let mut out = vec![0.0; c * h * w];
    for ci in 0..c {
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        acc += src.at_clamped(ci, y as isize + dy, x as isize + dx);
                    }
                }
                out[(ci * h + y) * w + x] = acc / 9.0;
            }
        }
    }
    out
}

/// Token-major patch vectors (`C * p * p` per token), edges replicated.
fn patchify(src: &Planes<'_>, p: usize) -> Vec<f32> {
    let (th, tw) = (src.h.div_ceil(p), src.w.div_ceil(p));
    let dim = src.c * p * p;
    let mut out = Vec::with_capacity(th * tw * dim);
    for ty in 0..th {
        for tx in 0..tw {
            for c in 0..src.c {
                for dy in 0..p {
                    for dx in 0..p {
                        out.push(src.at_clamped(c, (ty * p + dy) as isize, (tx * p + dx) as isize));
                    }
                }
            }
        }
    }
    debug_assert_eq!(out.len(), th * tw * dim);
    out
}

/// Appends `-|k|^2 / 2` to every key so a plain dot product with `[q, 1]`
/// equals `-|q - k|^2 / 2` up to a per-query constant.
fn augment_keys(tokens: &[f32], dim: usize) -> Vec<f32> {
    let mut out = Vec::with_capacity(tokens.len() / dim * (dim + 1));
    for k in tokens.chunks_exact(dim) {
        out.extend_from_slice(k);
        out.push(-0.5 * k.iter().map(|v| v * v).sum::<f32>());
    }
    out
}

fn augment_queries(tokens: &[f32], dim: usize) -> Vec<f32> {
    let mut out = Vec::with_capacity(tokens.len() / dim * (dim + 1));
    for q in tokens.chunks_exact(dim) {
        out.extend_from_slice(q);
        out.push(1.0);
    }
    out
}

/// Strided column `head` of a token-major `[tokens x (heads * dim)]` matrix,
/// transposed to `dim x tokens`.
fn transpose_head(m: &[f32], tokens: usize, heads: usize, dim: usize, head: usize) -> Vec<f32> {
    let stride = heads * dim;
    let mut out = vec![0.0; dim * tokens];
    for j in 0..tokens {
        let row = &m[j * stride + head * dim..j * stride + (head + 1) * dim];
        for (d, v) in row.iter().enumerate() {
            out[d * tokens + j] = *v;
        }
    }
    out
}

/// `e^x` for `x <= 0`, accurate to a few ulp, written so the compiler can
/// vectorize it.
#[inline(always)]
fn exp_nonpositive(x: f32) -> f32 {
    const SHIFT: f32 = 12_582_912.0; // 1.5 * 2^23
    let t = x.max(-87.0) * core::f32::consts::LOG2_E;
    let r = (t + SHIFT) - SHIFT;
    let f = t - r;
    let p = 1.0
        + f * (0.693_147_2
            + f * (0.240_226_5
                + f * (0.055_504_11 + f * (0.009_618_129 + f * (0.001_333_355 + f * 0.000_154_035_3)))));
    let bits = ((r as i32 + 127) as u32) << 23;
    p * f32::from_bits(bits)
}

const LANES: usize = 8;
/// Queries processed together so each key row is read once per block.
const QBLOCK: usize = 4;
const FLUSH_BELOW: f32 = -64.0;

/// Multi-head softmax attention with values shared by all heads. Each head's
/// attention weights are averaged and applied to the values once:
/// `out[q] = mean_h softmax(scale_h * q_h . k_h) v`.
///
/// `queries[h]` is token-major `[n_queries x dk]`, `keys_t[h]` is `dk x n_keys`
/// and `values_t` is `dv x n_keys`.
fn attend(queries: &[Vec<f32>; HEADS], keys_t: &[Vec<f32>; HEADS], values_t: &[f32], dk: usize, dv: usize, scales: [f32; HEADS], out: &mut [f32]) {
    let n_keys = values_t.len() / dv;
    let n_queries = out.len() / dv;
    let padded = n_keys.div_ceil(LANES) * LANES;
    let mut logits = vec![0.0f32; QBLOCK * padded];
    let mut combined = vec![0.0f32; QBLOCK * padded];
    for q0 in (0..n_queries).step_by(QBLOCK) {
        let nq = QBLOCK.min(n_queries - q0);
        combined.fill(0.0);
        for head in 0..HEADS {
            logits.fill(0.0);
            let (l0, rest) = logits.split_at_mut(padded);
            let (l1, rest) = rest.split_at_mut(padded);
            let (l2, l3) = rest.split_at_mut(padded);
            let q = &queries[head];
            let qv = |i: usize, d: usize| if i < nq { q[(q0 + i) * dk + d] * scales[head] } else { 0.0 };
            for d in 0..dk {
                let (a, b, c, e) = (qv(0, d), qv(1, d), qv(2, d), qv(3, d));
                let row = &keys_t[head][d * n_keys..(d + 1) * n_keys];
                for ((((k, x0), x1), x2), x3) in row.iter().zip(&mut l0[..n_keys]).zip(&mut l1[..n_keys]).zip(&mut l2[..n_keys]).zip(&mut l3[..n_keys]) {
                    *x0 += a * k;
                    *x1 += b * k;
                    *x2 += c * k;
                    *x3 += e * k;
                }
            }
            for i in 0..nq {
                let l = &mut logits[i * padded..(i + 1) * padded];
                l[n_keys..].fill(f32::NEG_INFINITY);
                let mut lane_max = [f32::NEG_INFINITY; LANES];
                for chunk in l.chunks_exact(LANES) {
                    for (m, v) in lane_max.iter_mut().zip(chunk) {
                        *m = m.max(*v);
                    }
                }
                let max = lane_max.iter().copied().fold(f32::NEG_INFINITY, f32::max);
                let mut lane_sum = [0.0f32; LANES];
                for chunk in l.chunks_exact_mut(LANES) {
                    for (s, v) in lane_sum.iter_mut().zip(chunk.iter_mut()) {
                        let d = *v - max;
                        // Below this the weight is < 1e-27 of the largest;
                        // dropping it keeps subnormals out of the sums.
                        *v = if d < FLUSH_BELOW { 0.0 } else { exp_nonpositive(d) };
                        *s += *v;
                    }
                }
                let norm = 1.0 / (HEADS as f32 * lane_sum.iter().sum::<f32>());
                for (c, v) in combined[i * padded..(i + 1) * padded].iter_mut().zip(l.iter()) {
                    *c += v * norm;
                }
            }
        }
        for i in 0..nq {
            let weights = &combined[i * padded..i * padded + n_keys];
            for (d, o) in out[(q0 + i) * dv..(q0 + i + 1) * dv].iter_mut().enumerate() {
                let row = &values_t[d * n_keys..(d + 1) * n_keys];
                let mut acc = [0.0f32; LANES];
                let (wc, wr) = (weights.chunks_exact(LANES), weights.chunks_exact(LANES).remainder());
                let (vc, vr) = (row.chunks_exact(LANES), row.chunks_exact(LANES).remainder());
                for (w, v) in wc.zip(vc) {
                    for l in 0..LANES {
                        acc[l] += w[l] * v[l];
                    }
                }
                let tail: f32 = wr.iter().zip(vr).map(|(w, v)| w * v).sum();
                *o = acc.iter().sum::<f32>() + tail;
            }
        }
    }
}

/// Hashes a prompt into `EMBED` values in `[-1, 1]`.
fn prompt_embedding(prompt: &str) -> Vec<f32> {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in prompt.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    (0..EMBED as u64)
        .map(|i| {
            let mut x = h ^ i.wrapping_mul(0x9e37_79b9_7f4a_7c15);
            x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
            x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
            x ^= x >> 31;
            ((x >> 40) as f32 / (1u64 << 24) as f32) * 2.0 - 1.0
        })
        .collect()
}

impl Denoiser for ToyDenoiser {
    fn name(&self) -> &str {
        "toy"
    }

    fn condition(&self, prompt: &str) -> Conditioning {
        Conditioning {
            prompt: prompt.to_string(),
            embedding: prompt_embedding(prompt),
        }
    }

    fn predict_noise(
        &self,
        z: &LatentGrid,
        t: u32,
        cond: &Conditioning,
        kv_override: Option<&KvFragment>,
        capture_kv: bool,
    ) -> Result<DenoiserOutput> {
        if t > self.schedule.total_steps() {
            return Err(Error::InvalidValue(format!(
                "timestep {t} outside the toy backend's schedule"
            )));
        }
        let (c, h, w) = (z.channels() as usize, z.height() as usize, z.width() as usize);
        let p = self.config.patch as usize;
        let alpha_bar = self.schedule.alpha_bar(t);
        let signal = libm::sqrt(alpha_bar);
        let noise_std = libm::sqrt((1.0 - alpha_bar).max(MIN_NOISE_VAR));

        // Clean-latent estimate and the two heads' feature maps.
        let clean: Vec<f32> = z.data().iter().map(|v| (v / signal) as f32).collect();
        let planes = Planes { c, h, w, data: &clean };
        let stem = conv3x3(&planes, &self.stem_weights(c), self.config.stem_gain);
        let context = box3x3(&planes);
        let head_features = [stem, context];

        let dim = c * p * p;
        let (dk, dv) = (dim + 1, dim);
        let tokens = self.token_count(z.height(), z.width());

        let own_values = patchify(&planes, p);
        let mut queries = Vec::with_capacity(HEADS);
        let mut own_keys = vec![0.0f32; tokens * HEADS * dk];
        for (head, features) in head_features.iter().enumerate() {
            let patches = patchify(&Planes { c, h, w, data: features }, p);
            for (j, k) in augment_keys(&patches, dim).chunks_exact(dk).enumerate() {
                own_keys[j * HEADS * dk + head * dk..j * HEADS * dk + (head + 1) * dk].copy_from_slice(k);
            }
            queries.push(augment_queries(&patches, dim));
        }
        let own = LayerKv {
            layer: LAYER,
            tokens,
            key_dim: HEADS * dk,
            value_dim: dv,
            keys: own_keys,
            values: own_values,
        };

        let kv = match kv_override {
            Some(fragment) => {
                let layer = fragment.layer(LAYER).ok_or_else(|| {
                    Error::ShapeMismatch(format!("kv override lacks attention layer {LAYER}"))
                })?;
                if layer.key_dim != own.key_dim || layer.value_dim != own.value_dim {
                    return Err(Error::ShapeMismatch(format!(
                        "kv override dims {}/{} vs backend {}/{}",
                        layer.key_dim, layer.value_dim, own.key_dim, own.value_dim
                    )));
                }
                if layer.keys.len() != layer.tokens * layer.key_dim
                    || layer.values.len() != layer.tokens * layer.value_dim
                {
                    return Err(Error::ShapeMismatch("kv override buffers have the wrong length".into()));
                }
                layer
            }
            None => &own,
        };

        let temperature = (2.0 * (1.0 - alpha_bar) / alpha_bar) as f32 + MIN_TEMPERATURE;
        let gains = self.head_gains(t, cond);
        let mut estimate = vec![0.0f32; tokens * dv];
        let keys_t: [Vec<f32>; HEADS] = core::array::from_fn(|head| transpose_head(&kv.keys, kv.tokens, HEADS, dk, head));
        let values_t = transpose_head(&kv.values, kv.tokens, 1, dv, 0);
        let queries: [Vec<f32>; HEADS] = queries.try_into().expect("one query set per head");
        attend(&queries, &keys_t, &values_t, dk, dv, gains.map(|g| g / temperature), &mut estimate);

        // Back from patches to the latent grid, then to a noise prediction.
        let tw = w.div_ceil(p);
        let mut eps = LatentGrid::zeros(z.channels(), z.height(), z.width(), t);
        let zd = z.data();
        let out = eps.data_mut();
        for ci in 0..c {
            for y in 0..h {
                for x in 0..w {
                    let token = (y / p) * tw + x / p;
                    let offset = ci * p * p + (y % p) * p + x % p;
                    let x0 = estimate[token * dv + offset] as f64;
                    let i = (ci * h + y) * w + x;
                    out[i] = (zd[i] - signal * x0) / noise_std;
                }
            }
        }
        Ok(DenoiserOutput {
            eps,
            kv: capture_kv.then(|| KvFragment { layers: vec![own] }),
        })
    }
}
