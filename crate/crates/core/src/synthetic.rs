//! Synthetic translation fixtures: a textured square on a flat background,
//! to be dragged by a fixed offset.

use alloc::{vec, vec::Vec};

use crate::{
    error::Result,
    grid::{CoordSpace, ImageBuffer, Point, PointPair},
    region::{rasterize_region, Region, RegionPair, RegionShape, Vertex},
    rng::{NoiseSource, Purpose},
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquareFixture {
    pub size: u32,
    pub side: u32,
    /// Top-left corner of the square.
    pub origin: (u32, u32),
    pub shift: (i32, i32),
    pub background: f32,
    /// Texture cells are `cell` x `cell` pixels of one random color.
    pub cell: u32,
    pub seed: u64,
}

impl SquareFixture {
    /// Member `seed` of the default family: 64x64 image, 8 px square at a
    /// seed-dependent position at least 4 px from the border, moved 16 px to
    /// the right.
    pub fn family(seed: u64) -> Self {
        let noise = NoiseSource::new(seed);
        let pick = |i: u64, lo: u32, hi: u32| lo + (noise.uniform(Purpose::Fixture, 0, i) * (hi - lo + 1) as f64) as u32;
        let (size, side, shift) = (64, 8, 16);
        Self {
            size,
            side,
            origin: (pick(0, 4, size - 4 - side - shift), pick(1, 4, size - 4 - side)),
            shift: (shift as i32, 0),
            background: 0.1,
            cell: 2,
            seed,
        }
    }

    fn texel(&self, lx: u32, ly: u32, c: u32) -> f32 {
        let cells = self.side.div_ceil(self.cell);
        let index = ((ly / self.cell) * cells + lx / self.cell) * 3 + c;
        let u = NoiseSource::new(self.seed).uniform(Purpose::Fixture, 1, index as u64);
        0.6 + 0.4 * u as f32
    }

    fn render(&self, origin: (i64, i64)) -> ImageBuffer {
        let n = self.size as usize;
        let mut data = vec![self.background; n * n * 3];
        for ly in 0..self.side {
            for lx in 0..self.side {
                let (x, y) = (origin.0 + lx as i64, origin.1 + ly as i64);
                if x < 0 || y < 0 || x >= self.size as i64 || y >= self.size as i64 {
                    continue;
                }
                for c in 0..3 {
                    data[(y as usize * n + x as usize) * 3 + c as usize] = self.texel(lx, ly, c);
                }
            }
        }
        ImageBuffer::new(self.size, self.size, 3, data).expect("fixture values are in range")
    }

    fn moved_origin(&self) -> (i64, i64) {
        (
            self.origin.0 as i64 + self.shift.0 as i64,
            self.origin.1 as i64 + self.shift.1 as i64,
        )
    }

    pub fn image(&self) -> ImageBuffer {
        self.render((self.origin.0 as i64, self.origin.1 as i64))
    }

    /// The ideal result: the square at its new position only.
    pub fn expected(&self) -> ImageBuffer {
        self.render(self.moved_origin())
    }

    fn square(&self, (x0, y0): (i64, i64)) -> Result<Region> {
        let s = self.side as i64 - 1;
        let vertices = [(x0, y0), (x0 + s, y0), (x0 + s, y0 + s), (x0, y0 + s)]
            .into_iter()
            .map(Vertex::from)
            .collect();
        rasterize_region(RegionShape::Polygon(vertices), self.size, self.size)
    }

    /// Handle = the square, target = the square moved by `shift`.
    pub fn region_pair(&self) -> Result<RegionPair> {
        Ok(RegionPair::new(
            self.square((self.origin.0 as i64, self.origin.1 as i64))?,
            self.square(self.moved_origin())?,
            0,
        ))
    }

    /// Square center to moved square center.
    pub fn point_pair(&self) -> PointPair {
        let half = self.side / 2;
        let (mx, my) = self.moved_origin();
        PointPair::new(
            Point::new(self.origin.0 + half, self.origin.1 + half),
            Point::new((mx + half as i64) as u32, (my + half as i64) as u32),
            CoordSpace::Image,
        )
    }
}

/// Centroid of `luminance - background` over pixels brighter than the
/// background, `None` if there are none.
pub fn brightness_centroid(img: &ImageBuffer, background: f32) -> Option<(f64, f64)> {
    let (mut sx, mut sy, mut sw) = (0.0, 0.0, 0.0);
    for y in 0..img.height() {
        for x in 0..img.width() {
            let w = (img.luminance(x, y) - background) as f64;
            if w > 0.0 {
                sx += w * x as f64;
                sy += w * y as f64;
                sw += w;
            }
        }
    }
    (sw > 0.0).then(|| (sx / sw, sy / sw))
}

/// The first `n` members of the default family.
pub fn square_family(n: u64) -> Vec<SquareFixture> {
    (0..n).map(SquareFixture::family).collect()
}
