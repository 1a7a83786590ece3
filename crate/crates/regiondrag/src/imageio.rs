//! PNG reading and writing for [`ImageBuffer`]s.

use std::{io::Cursor, path::Path};

use image::{DynamicImage, ImageFormat, RgbImage};
use regiondrag_core::ImageBuffer;

use crate::error::{AppError, Result};

fn image_err(e: image::ImageError) -> AppError {
    AppError::Image(e.to_string())
}

/// Drops alpha and expands gray to RGB; values become `[0, 1]` floats.
pub fn from_dynamic(img: DynamicImage) -> Result<ImageBuffer> {
    let rgb = img.into_rgb8();
    let (w, h) = rgb.dimensions();
    let data = rgb.into_raw().into_iter().map(|v| v as f32 / 255.0).collect();
    Ok(ImageBuffer::new(w, h, 3, data)?)
}

/// Quantizes to 8 bits per channel. Only RGB buffers are accepted.
pub fn to_rgb8(img: &ImageBuffer) -> Result<RgbImage> {
    if img.channels() != 3 {
        return Err(AppError::Image(format!("cannot write a {}-channel image as RGB", img.channels())));
    }
    let raw = img.data().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    RgbImage::from_raw(img.width(), img.height(), raw).ok_or_else(|| AppError::Image("buffer size mismatch".into()))
}

pub fn decode_png(bytes: &[u8]) -> Result<ImageBuffer> {
    from_dynamic(image::load_from_memory_with_format(bytes, ImageFormat::Png).map_err(image_err)?)
}

pub fn encode_png(img: &ImageBuffer) -> Result<Vec<u8>> {
    let mut out = Cursor::new(Vec::new());
    to_rgb8(img)?.write_to(&mut out, ImageFormat::Png).map_err(image_err)?;
    Ok(out.into_inner())
}

pub fn load_png(path: &Path) -> Result<ImageBuffer> {
    let bytes = std::fs::read(path).map_err(|e| AppError::io(path, e))?;
    decode_png(&bytes)
}

pub fn save_png(img: &ImageBuffer, path: &Path) -> Result<()> {
    std::fs::write(path, encode_png(img)?).map_err(|e| AppError::io(path, e))
}

/// Width and height from the file header, without decoding pixels.
pub fn dimensions(path: &Path) -> Result<(u32, u32)> {
    image::image_dimensions(path).map_err(|e| match e {
        image::ImageError::IoError(io) => AppError::io(path, io),
        other => image_err(other),
    })
}
