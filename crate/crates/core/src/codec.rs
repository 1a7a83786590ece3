//! Image <-> latent codecs.

use alloc::{vec, vec::Vec};

use crate::{
    error::{Error, Result},
    grid::{ImageBuffer, LatentGrid},
};

/// Encoder/decoder pair between images and latents.
pub trait LatentCodec: Send + Sync {
    fn name(&self) -> &str;

    /// Image pixels per latent cell along each axis.
    fn scale_factor(&self) -> u32;

    fn encode(&self, image: &ImageBuffer) -> Result<LatentGrid>;

    /// Decodes to an image of `width x height` (the size of the image that
    /// was encoded).
    fn decode(&self, latent: &LatentGrid, width: u32, height: u32) -> Result<ImageBuffer>;
}

/// Passthrough: the latent is the image, one channel per color channel.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityCodec;

impl LatentCodec for IdentityCodec {
    fn name(&self) -> &str {
        "identity"
    }

    fn scale_factor(&self) -> u32 {
        1
    }

    fn encode(&self, image: &ImageBuffer) -> Result<LatentGrid> {
        let (w, h, c) = (
            image.width() as usize,
            image.height() as usize,
            image.channels() as usize,
        );
        let mut data = vec![0.0; w * h * c];
        for (i, v) in image.data().iter().enumerate() {
            let (pixel, ch) = (i / c, i % c);
            data[ch * w * h + pixel] = *v as f64;
        }
        LatentGrid::new(image.channels(), image.height(), image.width(), 0, data)
    }

    fn decode(&self, latent: &LatentGrid, width: u32, height: u32) -> Result<ImageBuffer> {
        if (latent.width(), latent.height()) != (width, height) {
            return Err(Error::ShapeMismatch(alloc::format!(
                "identity codec cannot decode {}x{} into {width}x{height}",
                latent.width(),
                latent.height()
            )));
        }
        let c = latent.channels() as usize;
        let plane = latent.plane_len();
        let mut data = vec![0.0f32; plane * c];
        for (i, v) in latent.data().iter().enumerate() {
            let (ch, pixel) = (i / plane, i % plane);
            data[pixel * c + ch] = v.clamp(0.0, 1.0) as f32;
        }
        ImageBuffer::new(width, height, latent.channels(), data)
    }
}

/// Block-average codec with a fixed downscale factor, standing in for a
/// learned autoencoder. An RGB image becomes four channels: the three colors
/// rescaled to `[-1, 1]` plus their mean. Decoding repeats each cell over its
/// block, so images that are constant on blocks round-trip exactly.
#[derive(Debug, Clone, Copy)]
pub struct PoolCodec {
    factor: u32,
}

impl PoolCodec {
    pub fn new(factor: u32) -> Result<Self> {
        if factor == 0 {
            return Err(Error::InvalidValue("pool factor must be >= 1".into()));
        }
        Ok(Self { factor })
    }
}

impl LatentCodec for PoolCodec {
    fn name(&self) -> &str {
        "pool"
    }

    fn scale_factor(&self) -> u32 {
        self.factor
    }

    fn encode(&self, image: &ImageBuffer) -> Result<LatentGrid> {
        let f = self.factor;
        let (lw, lh) = (image.width().div_ceil(f), image.height().div_ceil(f));
        let c = image.channels();
        let lc = c + 1;
        let plane = (lw * lh) as usize;
        let mut sums = vec![0.0f64; c as usize * plane];
        let mut counts = vec![0u32; plane];
        for y in 0..image.height() {
            for x in 0..image.width() {
                let cell = ((y / f) * lw + x / f) as usize;
                counts[cell] += 1;
                for ch in 0..c {
                    sums[ch as usize * plane + cell] += image.get(x, y, ch) as f64;
                }
            }
        }
        let mut data = vec![0.0f64; lc as usize * plane];
        for cell in 0..plane {
            let mut mean = 0.0;
            for ch in 0..c as usize {
                let v = sums[ch * plane + cell] / counts[cell] as f64;
                data[ch * plane + cell] = 2.0 * v - 1.0;
                mean += v;
            }
            data[c as usize * plane + cell] = 2.0 * mean / c as f64 - 1.0;
        }
        LatentGrid::new(lc, lh, lw, 0, data)
    }

    fn decode(&self, latent: &LatentGrid, width: u32, height: u32) -> Result<ImageBuffer> {
        let f = self.factor;
        if (latent.width(), latent.height()) != (width.div_ceil(f), height.div_ceil(f)) || latent.channels() < 2 {
            return Err(Error::ShapeMismatch(alloc::format!(
                "pool codec cannot decode {}x{}x{} into {width}x{height}",
                latent.channels(),
                latent.height(),
                latent.width()
            )));
        }
        let c = latent.channels() - 1;
        let mut data: Vec<f32> = Vec::with_capacity((width * height * c) as usize);
        for y in 0..height {
            for x in 0..width {
                for ch in 0..c {
                    let v = (latent.get(ch, y / f, x / f) + 1.0) / 2.0;
                    data.push(v.clamp(0.0, 1.0) as f32);
                }
            }
        }
        ImageBuffer::new(width, height, c, data)
    }
}
