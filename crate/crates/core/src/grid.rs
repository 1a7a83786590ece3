//! Images, latents and integer points.

use alloc::{format, vec, vec::Vec};

use crate::error::{Error, Result};

/// Integer pixel coordinate, x to the right and y down, origin top-left.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Point {
    pub x: u32,
    pub y: u32,
}

impl Point {
    pub const fn new(x: u32, y: u32) -> Self {
        Self { x, y }
    }
}

impl From<(u32, u32)> for Point {
    fn from((x, y): (u32, u32)) -> Self {
        Self { x, y }
    }
}

/// Which grid a point refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum CoordSpace {
    Image,
    Latent,
}

/// A handle point and the target point its content should move to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PointPair {
    pub handle: Point,
    pub target: Point,
    pub space: CoordSpace,
}

impl PointPair {
    pub fn new(handle: Point, target: Point, space: CoordSpace) -> Self {
        Self {
            handle,
            target,
            space,
        }
    }

    /// Checks both points against a `width` x `height` grid.
    pub fn validate(&self, width: u32, height: u32) -> Result<()> {
        check_point(self.handle, width, height)?;
        check_point(self.target, width, height)
    }
}

pub(crate) fn check_point(p: Point, width: u32, height: u32) -> Result<()> {
    if p.x < width && p.y < height {
        Ok(())
    } else {
        Err(Error::OutOfBounds {
            x: p.x as i64,
            y: p.y as i64,
            width,
            height,
        })
    }
}

/// Interleaved row-major image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    width: u32,
    height: u32,
    channels: u32,
    data: Vec<f32>,
}

impl ImageBuffer {
    pub fn new(width: u32, height: u32, channels: u32, data: Vec<f32>) -> Result<Self> {
        let expected = width as usize * height as usize * channels as usize;
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::ShapeMismatch(format!(
                "image dimensions must be positive, got {width}x{height}x{channels}"
            )));
        }
        if data.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "image data has {} values, expected {expected}",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidValue(format!(
                "image value {v} is not a finite value in [0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Constant image.
    pub fn filled(width: u32, height: u32, channels: u32, value: f32) -> Result<Self> {
        Self::new(
            width,
            height,
            channels,
            vec![value; width as usize * height as usize * channels as usize],
        )
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u32 {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32, c: u32) -> f32 {
        self.data[((y as usize * self.width as usize + x as usize) * self.channels as usize)
            + c as usize]
    }

    /// Mean over channels at one pixel.
    pub fn luminance(&self, x: u32, y: u32) -> f32 {
        let base = (y as usize * self.width as usize + x as usize) * self.channels as usize;
        let px = &self.data[base..base + self.channels as usize];
        px.iter().sum::<f32>() / self.channels as f32
    }

    pub fn same_shape(&self, other: &ImageBuffer) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }
}

/// Planar `channels x height x width` latent tagged with its diffusion timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentGrid {
    channels: u32,
    height: u32,
    width: u32,
    timestep: u32,
    data: Vec<f64>,
}

impl LatentGrid {
    pub fn new(channels: u32, height: u32, width: u32, timestep: u32, data: Vec<f64>) -> Result<Self> {
        let expected = channels as usize * height as usize * width as usize;
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::ShapeMismatch(format!(
                "latent dimensions must be positive, got {channels}x{height}x{width}"
            )));
        }
        if data.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "latent data has {} values, expected {expected}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidValue("latent contains a non-finite value".into()));
        }
        Ok(Self {
            channels,
            height,
            width,
            timestep,
            data,
        })
    }

    pub fn zeros(channels: u32, height: u32, width: u32, timestep: u32) -> Self {
        Self {
            channels,
            height,
            width,
            timestep,
            data: vec![0.0; channels as usize * height as usize * width as usize],
        }
    }

    pub fn channels(&self) -> u32 {
        self.channels
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn timestep(&self) -> u32 {
        self.timestep
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Number of spatial positions.
    pub fn plane_len(&self) -> usize {
        self.height as usize * self.width as usize
    }

    pub fn with_timestep(mut self, timestep: u32) -> Self {
        self.timestep = timestep;
        self
    }

    pub(crate) fn set_timestep(&mut self, timestep: u32) {
        self.timestep = timestep;
    }

    #[inline]
    pub fn index(&self, c: u32, y: u32, x: u32) -> usize {
        (c as usize * self.height as usize + y as usize) * self.width as usize + x as usize
    }

    #[inline]
    pub fn get(&self, c: u32, y: u32, x: u32) -> f64 {
        self.data[self.index(c, y, x)]
    }

    pub fn same_shape(&self, other: &LatentGrid) -> bool {
        self.channels == other.channels && self.height == other.height && self.width == other.width
    }

    pub(crate) fn require_same_shape(&self, other: &LatentGrid, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "{what}: {}x{}x{} vs {}x{}x{}",
                self.channels, self.height, self.width, other.channels, other.height, other.width
            )))
        }
    }

    /// Largest absolute elementwise difference; `None` when shapes differ.
    pub fn max_abs_diff(&self, other: &LatentGrid) -> Option<f64> {
        self.same_shape(other).then(|| {
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| libm::fabs(a - b))
                .fold(0.0, f64::max)
        })
    }
}

/// Binary spatial mask, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    pub fn from_bits(width: u32, height: u32, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width as usize * height as usize {
            return Err(Error::ShapeMismatch(format!(
                "mask has {} bits, expected {}x{}",
                bits.len(),
                width,
                height
            )));
        }
        Ok(Self { width, height, bits })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        self.bits[y as usize * self.width as usize + x as usize] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }

    /// Set positions in row-major order.
    pub fn points(&self) -> impl Iterator<Item = Point> + '_ {
        let w = self.width as usize;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(move |(i, _)| Point::new((i % w) as u32, (i / w) as u32))
    }
}
