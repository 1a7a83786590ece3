//! Handle and target regions.
//!
//! A region is a deduplicated set of integer pixels, produced either from a
//! polygon (even-odd interior plus every lattice point on the outline) or from
//! a brush mask.

use alloc::vec::Vec;

use crate::{
    error::{Error, Result},
    grid::{Mask, Point},
};

/// Polygon vertex in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Vertex {
    pub x: i64,
    pub y: i64,
}

impl Vertex {
    pub const fn new(x: i64, y: i64) -> Self {
        Self { x, y }
    }
}

impl From<(i64, i64)> for Vertex {
    fn from((x, y): (i64, i64)) -> Self {
        Self { x, y }
    }
}

/// How a region was drawn.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RegionShape {
    /// Ordered outline; vertex order matters for the polygon mapping path.
    Polygon(Vec<Vertex>),
    /// Painted mask at image resolution.
    Brush(Mask),
}

/// A rasterized region: its source shape, the grid it lives on and its pixels
/// sorted in row-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    shape: RegionShape,
    width: u32,
    height: u32,
    pixels: Vec<Point>,
}

impl Region {
    /// Rasterizes `shape` on a `width` x `height` grid.
    pub fn new(shape: RegionShape, width: u32, height: u32) -> Result<Self> {
        rasterize_region(shape, width, height)
    }

    /// Region holding exactly `pixels` (deduplicated), stored as a brush.
    pub fn from_pixels(pixels: impl IntoIterator<Item = Point>, width: u32, height: u32) -> Result<Self> {
        let mut mask = Mask::new(width, height);
        for p in pixels {
            crate::grid::check_point(p, width, height)?;
            mask.set(p.x, p.y, true);
        }
        rasterize_region(RegionShape::Brush(mask), width, height)
    }

    pub fn shape(&self) -> &RegionShape {
        &self.shape
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[Point] {
        &self.pixels
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    /// Always false for a constructed region.
    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn vertices(&self) -> Option<&[Vertex]> {
        match &self.shape {
            RegionShape::Polygon(v) => Some(v),
            RegionShape::Brush(_) => None,
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        self.pixels.binary_search_by(|q| row_major(q).cmp(&row_major(&p))).is_ok()
    }

    pub fn to_mask(&self) -> Mask {
        let mut mask = Mask::new(self.width, self.height);
        for p in &self.pixels {
            mask.set(p.x, p.y, true);
        }
        mask
    }

    /// `(min_x, min_y, max_x, max_y)`.
    pub fn bounding_box(&self) -> (u32, u32, u32, u32) {
        let mut bb = (u32::MAX, u32::MAX, 0, 0);
        for p in &self.pixels {
            bb.0 = bb.0.min(p.x);
            bb.1 = bb.1.min(p.y);
            bb.2 = bb.2.max(p.x);
            bb.3 = bb.3.max(p.y);
        }
        bb
    }

    /// Floor-divides every pixel by `factor`; see [`downscale_region`].
    pub fn downscale(&self, factor: u32) -> Result<Region> {
        downscale_region(self, factor)
    }
}

/// A handle region and the target region its content is dragged to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionPair {
    pub handle: Region,
    pub target: Region,
    pub index: usize,
}

impl RegionPair {
    pub fn new(handle: Region, target: Region, index: usize) -> Self {
        Self {
            handle,
            target,
            index,
        }
    }
}

#[inline]
fn row_major(p: &Point) -> (u32, u32) {
    (p.y, p.x)
}

/// Resolves a polygon or brush into its pixel set.
///
/// Polygon interiors follow the even-odd rule and every lattice point on an
/// edge is included.
pub fn rasterize_region(shape: RegionShape, width: u32, height: u32) -> Result<Region> {
    let pixels = match &shape {
        RegionShape::Polygon(vertices) => rasterize_polygon(vertices, width, height)?,
        RegionShape::Brush(mask) => {
            if mask.width() != width || mask.height() != height {
                return Err(Error::ShapeMismatch(alloc::format!(
                    "brush mask is {}x{}, image is {width}x{height}",
                    mask.width(),
                    mask.height()
                )));
            }
            mask.points().collect()
        }
    };
    if pixels.is_empty() {
        return Err(Error::EmptyRegion);
    }
    Ok(Region {
        shape,
        width,
        height,
        pixels,
    })
}

fn rasterize_polygon(vertices: &[Vertex], width: u32, height: u32) -> Result<Vec<Point>> {
    if vertices.len() < 3 {
        return Err(Error::TooFewVertices(vertices.len()));
    }
    for v in vertices {
        if v.x < 0 || v.y < 0 || v.x >= width as i64 || v.y >= height as i64 {
            return Err(Error::OutOfBounds {
                x: v.x,
                y: v.y,
                width,
                height,
            });
        }
    }
    // Outlines whose vertices are all collinear have no interior; treat them as empty rather than
    // as a line of boundary pixels.
    let origin = vertices[0];
    let spans_plane = vertices.iter().any(|a| {
        vertices
            .iter()
            .any(|b| (a.x - origin.x) * (b.y - origin.y) != (b.x - origin.x) * (a.y - origin.y))
    });
    if !spans_plane {
        return Err(Error::EmptyRegion);
    }
    let mut mask = Mask::new(width, height);
    let edges = || {
        vertices
            .iter()
            .zip(vertices.iter().cycle().skip(1))
            .map(|(a, b)| (*a, *b))
    };

    // Interior by scanline parity. An edge counts for row y when y lies in
    // [min_y, max_y), so shared vertices are not double counted.
    let min_y = vertices.iter().map(|v| v.y).min().unwrap_or(0);
    let max_y = vertices.iter().map(|v| v.y).max().unwrap_or(0);
    let mut crossings: Vec<(i64, i64)> = Vec::new();
    for y in min_y..=max_y {
        crossings.clear();
        for (a, b) in edges() {
            let (lo, hi) = if a.y <= b.y { (a, b) } else { (b, a) };
            if lo.y == hi.y || y < lo.y || y >= hi.y {
                continue;
            }
            // x = lo.x + (y - lo.y) * dx / dy as an exact fraction with dy > 0.
            let dy = hi.y - lo.y;
            let num = lo.x * dy + (y - lo.y) * (hi.x - lo.x);
            crossings.push((num, dy));
        }
        crossings.sort_by(|p, q| (p.0 as i128 * q.1 as i128).cmp(&(q.0 as i128 * p.1 as i128)));
        for span in crossings.chunks_exact(2) {
            let start = div_ceil(span[0].0, span[0].1).max(0);
            let end = div_floor(span[1].0, span[1].1).min(width as i64 - 1);
            for x in start..=end {
                mask.set(x as u32, y as u32, true);
            }
        }
    }

    // Outline: every lattice point on every edge.
    for (a, b) in edges() {
        let (dx, dy) = (b.x - a.x, b.y - a.y);
        let g = gcd(dx.unsigned_abs(), dy.unsigned_abs()).max(1) as i64;
        let (sx, sy) = (dx / g, dy / g);
        for k in 0..=g {
            mask.set((a.x + k * sx) as u32, (a.y + k * sy) as u32, true);
        }
    }
    Ok(mask.points().collect())
}

fn div_floor(n: i64, d: i64) -> i64 {
    let q = n / d;
    if (n % d != 0) && ((n < 0) != (d < 0)) {
        q - 1
    } else {
        q
    }
}

fn div_ceil(n: i64, d: i64) -> i64 {
    -div_floor(-n, d)
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Maps every pixel to `(x / factor, y / factor)` (floor), deduplicated, on the
/// correspondingly smaller grid (dimensions rounded up).
pub fn downscale_region(region: &Region, factor: u32) -> Result<Region> {
    if factor == 0 {
        return Err(Error::InvalidValue("downscale factor must be >= 1".into()));
    }
    if factor == 1 {
        return Ok(region.clone());
    }
    let width = region.width.div_ceil(factor);
    let height = region.height.div_ceil(factor);
    let mut mask = Mask::new(width, height);
    for p in &region.pixels {
        mask.set(p.x / factor, p.y / factor, true);
    }
    rasterize_region(RegionShape::Brush(mask), width, height)
}
