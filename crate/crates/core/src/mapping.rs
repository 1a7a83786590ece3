//! Dense handle→target correspondences.
//!
//! Brush regions use column-by-column scaling: the target's x range is
//! stretched onto the handle's x range, then each target column's y range is
//! stretched onto the matching handle column. Triangle and quadrilateral
//! polygon pairs use the affine or projective transform fixed by their
//! vertices instead.

use alloc::{vec, vec::Vec};

use crate::{
    error::{Error, Result},
    grid::{CoordSpace, Point, PointPair},
    region::{Region, RegionPair},
};

/// One mapped pair and the region pair that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MappedPair {
    pub handle: Point,
    pub target: Point,
    pub pair_index: usize,
}

/// Dense list of point pairs on one grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MappedPointSet {
    pub space: CoordSpace,
    pub width: u32,
    pub height: u32,
    pub pairs: Vec<MappedPair>,
}

impl MappedPointSet {
    pub fn empty(space: CoordSpace, width: u32, height: u32) -> Self {
        Self {
            space,
            width,
            height,
            pairs: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn point_pairs(&self) -> impl Iterator<Item = PointPair> + '_ {
        self.pairs
            .iter()
            .map(|p| PointPair::new(p.handle, p.target, self.space))
    }

    /// Checks every point against the grid bounds.
    pub fn validate(&self) -> Result<()> {
        self.point_pairs()
            .try_for_each(|p| p.validate(self.width, self.height))
    }
}

/// A target pixel written by more than one region pair; the later pair wins.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Conflict {
    pub target: Point,
    pub dropped: MappedPair,
    pub winner_pair_index: usize,
}

struct Column {
    /// Sorted y values of region pixels in this column.
    ys: Vec<u32>,
}

/// Per-column view of a region over its x range.
struct Columns {
    min_x: u32,
    max_x: u32,
    cols: Vec<Column>,
}

impl Columns {
    fn new(region: &Region) -> Self {
        let (min_x, _, max_x, _) = region.bounding_box();
        let mut cols: Vec<Column> = (min_x..=max_x).map(|_| Column { ys: Vec::new() }).collect();
        // Region pixels are row-major, so each column fills in increasing y.
        for p in region.pixels() {
            cols[(p.x - min_x) as usize].ys.push(p.y);
        }
        Self { min_x, max_x, cols }
    }

    fn column(&self, x: u32) -> &[u32] {
        &self.cols[(x - self.min_x) as usize].ys
    }

    /// For every x in range, the nearest non-empty column (ties toward the
    /// smaller x).
    fn snapped_columns(&self) -> Vec<u32> {
        let n = self.cols.len();
        let mut left: Vec<Option<usize>> = vec![None; n];
        let mut right: Vec<Option<usize>> = vec![None; n];
        let mut last = None;
        for i in 0..n {
            if !self.cols[i].ys.is_empty() {
                last = Some(i);
            }
            left[i] = last;
        }
        last = None;
        for i in (0..n).rev() {
            if !self.cols[i].ys.is_empty() {
                last = Some(i);
            }
            right[i] = last;
        }
        (0..n)
            .map(|i| {
                let pick = match (left[i], right[i]) {
                    (Some(l), Some(r)) => {
                        if i - l <= r - i {
                            l
                        } else {
                            r
                        }
                    }
                    (Some(l), None) => l,
                    (None, Some(r)) => r,
                    (None, None) => unreachable!("region has at least one pixel"),
                };
                self.min_x + pick as u32
            })
            .collect()
    }
}

/// `floor((v - lo) / (hi - lo) * (dst_hi - dst_lo)) + dst_lo`, evaluated
/// exactly; a zero-width source range maps to `dst_lo`.
#[inline]
fn scale_floor(v: u32, lo: u32, hi: u32, dst_lo: u32, dst_hi: u32) -> u32 {
    if hi == lo {
        return dst_lo;
    }
    let num = (v - lo) as u64 * (dst_hi - dst_lo) as u64;
    dst_lo + (num / (hi - lo) as u64) as u32
}

/// Nearest value in a sorted, non-empty slice; ties go to the smaller value.
fn nearest_in(sorted: &[u32], y: u32) -> u32 {
    match sorted.binary_search(&y) {
        Ok(_) => y,
        Err(i) if i == 0 => sorted[0],
        Err(i) if i == sorted.len() => sorted[i - 1],
        Err(i) => {
            let (lo, hi) = (sorted[i - 1], sorted[i]);
            if y - lo <= hi - y {
                lo
            } else {
                hi
            }
        }
    }
}

/// Column-scaling map from every target pixel to a handle pixel.
///
/// Handle columns with x gaps are reached by snapping to the nearest
/// non-empty column, and y values landing in a column hole snap to the
/// nearest handle pixel of that column, so every source is a handle pixel.
pub fn map_region_pair_dense(handle: &Region, target: &Region, pair_index: usize) -> Result<MappedPointSet> {
    if handle.is_empty() || target.is_empty() {
        return Err(Error::EmptyRegion);
    }
    if (handle.width(), handle.height()) != (target.width(), target.height()) {
        return Err(Error::ShapeMismatch(alloc::format!(
            "handle grid {}x{} differs from target grid {}x{}",
            handle.width(),
            handle.height(),
            target.width(),
            target.height()
        )));
    }
    let h = Columns::new(handle);
    let t = Columns::new(target);
    let snapped = h.snapped_columns();

    let pairs = target
        .pixels()
        .iter()
        .map(|&p| {
            let raw_x = scale_floor(p.x, t.min_x, t.max_x, h.min_x, h.max_x);
            let hx = snapped[(raw_x - h.min_x) as usize];
            let tcol = t.column(p.x);
            let hcol = h.column(hx);
            let raw_y = scale_floor(
                p.y,
                tcol[0],
                tcol[tcol.len() - 1],
                hcol[0],
                hcol[hcol.len() - 1],
            );
            MappedPair {
                handle: Point::new(hx, nearest_in(hcol, raw_y)),
                target: p,
                pair_index,
            }
        })
        .collect();
    Ok(MappedPointSet {
        space: CoordSpace::Image,
        width: target.width(),
        height: target.height(),
        pairs,
    })
}

/// Row-major 3x3 projective transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projective(pub [f64; 9]);

impl Projective {
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let m = &self.0;
        let w = m[6] * x + m[7] * y + m[8];
        ((m[0] * x + m[1] * y + m[2]) / w, (m[3] * x + m[4] * y + m[5]) / w)
    }

    /// Affine transform taking `from[k]` to `to[k]` for three points.
    pub fn affine(from: &[(f64, f64)], to: &[(f64, f64)]) -> Result<Self> {
        if from.len() != 3 || to.len() != 3 {
            return Err(Error::DegenerateGeometry("affine mapping needs 3 point pairs"));
        }
        if collinear(from[0], from[1], from[2]) || collinear(to[0], to[1], to[2]) {
            return Err(Error::DegenerateGeometry("collinear triangle vertices"));
        }
        let mut a = [[0.0f64; 7]; 6];
        for k in 0..3 {
            let (x, y) = from[k];
            let (u, v) = to[k];
            a[2 * k] = [x, y, 1.0, 0.0, 0.0, 0.0, u];
            a[2 * k + 1] = [0.0, 0.0, 0.0, x, y, 1.0, v];
        }
        let s = solve(&mut a)?;
        Ok(Self([s[0], s[1], s[2], s[3], s[4], s[5], 0.0, 0.0, 1.0]))
    }

    /// Projective transform taking `from[k]` to `to[k]` for four points.
    pub fn perspective(from: &[(f64, f64)], to: &[(f64, f64)]) -> Result<Self> {
        if from.len() != 4 || to.len() != 4 {
            return Err(Error::DegenerateGeometry("perspective mapping needs 4 point pairs"));
        }
        for quad in [from, to] {
            for skip in 0..4 {
                let tri: Vec<_> = (0..4).filter(|&i| i != skip).map(|i| quad[i]).collect();
                if collinear(tri[0], tri[1], tri[2]) {
                    return Err(Error::DegenerateGeometry("three collinear quad vertices"));
                }
            }
        }
        let mut a = [[0.0f64; 9]; 8];
        for k in 0..4 {
            let (x, y) = from[k];
            let (u, v) = to[k];
            a[2 * k] = [x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, u];
            a[2 * k + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y, v];
        }
        let s = solve(&mut a)?;
        Ok(Self([s[0], s[1], s[2], s[3], s[4], s[5], s[6], s[7], 1.0]))
    }
}

fn collinear(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> bool {
    let cross = (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
    let scale = libm::fabs(b.0 - a.0)
        .max(libm::fabs(b.1 - a.1))
        .max(libm::fabs(c.0 - a.0))
        .max(libm::fabs(c.1 - a.1));
    libm::fabs(cross) <= 1e-12 * scale * scale
}

/// Gaussian elimination with partial pivoting on an `N x (N+1)` augmented
/// matrix.
fn solve<const M: usize, const N: usize>(a: &mut [[f64; M]; N]) -> Result<[f64; N]> {
    debug_assert_eq!(M, N + 1);
    let norm = a
        .iter()
        .flat_map(|r| r[..N].iter())
        .fold(0.0f64, |m, v| m.max(libm::fabs(*v)))
        .max(1.0);
    for col in 0..N {
        let pivot = (col..N)
            .max_by(|&i, &j| libm::fabs(a[i][col]).total_cmp(&libm::fabs(a[j][col])))
            .unwrap_or(col);
        if libm::fabs(a[pivot][col]) <= 1e-12 * norm {
            return Err(Error::DegenerateGeometry("singular transform system"));
        }
        a.swap(col, pivot);
        for row in col + 1..N {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..M {
                    a[row][k] -= f * a[col][k];
                }
            }
        }
    }
    let mut x = [0.0; N];
    for row in (0..N).rev() {
        let mut acc = a[row][N];
        for k in row + 1..N {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Ok(x)
}

/// Maps every pixel of `target` through the transform fixed by the vertex
/// correspondence `target_vertices[k] -> handle_vertices[k]`, rounding to the
/// nearest pixel and clamping to the handle region's bounding box.
pub fn map_region_pair_polygon(
    handle_vertices: &[(f64, f64)],
    target_vertices: &[(f64, f64)],
    handle: &Region,
    target: &Region,
    pair_index: usize,
) -> Result<MappedPointSet> {
    if handle_vertices.len() != target_vertices.len() {
        return Err(Error::DegenerateGeometry("polygon vertex counts differ"));
    }
    let transform = match target_vertices.len() {
        3 => Projective::affine(target_vertices, handle_vertices)?,
        4 => Projective::perspective(target_vertices, handle_vertices)?,
        _ => {
            return Err(Error::DegenerateGeometry(
                "polygon mapping needs 3 or 4 vertices",
            ))
        }
    };
    let (min_x, min_y, max_x, max_y) = handle.bounding_box();
    let clamp = |v: f64, lo: u32, hi: u32| -> u32 {
        if v.is_nan() {
            return lo;
        }
        let r = libm::round(v);
        if r <= lo as f64 {
            lo
        } else if r >= hi as f64 {
            hi
        } else {
            r as u32
        }
    };
    let pairs = target
        .pixels()
        .iter()
        .map(|&p| {
            let (u, v) = transform.apply(p.x as f64, p.y as f64);
            MappedPair {
                handle: Point::new(clamp(u, min_x, max_x), clamp(v, min_y, max_y)),
                target: p,
                pair_index,
            }
        })
        .collect();
    Ok(MappedPointSet {
        space: CoordSpace::Image,
        width: target.width(),
        height: target.height(),
        pairs,
    })
}

/// Concatenates per-pair mappings in order. When several pairs write the same
/// target pixel only the last one survives; the others are reported.
pub fn merge_mappings(per_pair: Vec<MappedPointSet>) -> Result<(MappedPointSet, Vec<Conflict>)> {
    let Some(first) = per_pair.first() else {
        return Ok((MappedPointSet::empty(CoordSpace::Image, 0, 0), Vec::new()));
    };
    let (space, width, height) = (first.space, first.width, first.height);
    if let Some(bad) = per_pair
        .iter()
        .find(|m| (m.space, m.width, m.height) != (space, width, height))
    {
        return Err(Error::ShapeMismatch(alloc::format!(
            "cannot merge {:?} {}x{} mapping with {:?} {}x{}",
            bad.space,
            bad.width,
            bad.height,
            space,
            width,
            height
        )));
    }
    let all: Vec<MappedPair> = per_pair.into_iter().flat_map(|m| m.pairs).collect();
    let mut last_writer: Vec<Option<usize>> = vec![None; width as usize * height as usize];
    let cell = |p: Point| p.y as usize * width as usize + p.x as usize;
    for (i, pair) in all.iter().enumerate() {
        last_writer[cell(pair.target)] = Some(i);
    }
    let mut conflicts = Vec::new();
    let mut pairs = Vec::with_capacity(all.len());
    for (i, pair) in all.iter().enumerate() {
        let winner = last_writer[cell(pair.target)].expect("every target was recorded");
        if winner == i {
            pairs.push(*pair);
        } else {
            conflicts.push(Conflict {
                target: pair.target,
                dropped: *pair,
                winner_pair_index: all[winner].pair_index,
            });
        }
    }
    Ok((
        MappedPointSet {
            space,
            width,
            height,
            pairs,
        },
        conflicts,
    ))
}

/// Maps one region pair on its own grid: the polygon path for matching
/// triangle or quadrilateral outlines, column scaling otherwise.
pub fn map_region_pair(pair: &RegionPair) -> Result<MappedPointSet> {
    map_region_pair_scaled(pair, 1)
}

/// Maps one region pair on the grid obtained by downscaling both regions by
/// `factor`. Polygon vertices are carried to the coarse grid by the pixel
/// center convention `v -> (v - (factor - 1) / 2) / factor`.
pub fn map_region_pair_scaled(pair: &RegionPair, factor: u32) -> Result<MappedPointSet> {
    let handle = pair.handle.downscale(factor)?;
    let target = pair.target.downscale(factor)?;
    let mut mapped = match (pair.handle.vertices(), pair.target.vertices()) {
        (Some(hv), Some(tv)) if hv.len() == tv.len() && (hv.len() == 3 || hv.len() == 4) => {
            let offset = (factor as f64 - 1.0) / 2.0;
            let to_grid = |v: &[crate::region::Vertex]| -> Vec<(f64, f64)> {
                v.iter()
                    .map(|p| {
                        (
                            (p.x as f64 - offset) / factor as f64,
                            (p.y as f64 - offset) / factor as f64,
                        )
                    })
                    .collect()
            };
            map_region_pair_polygon(&to_grid(hv), &to_grid(tv), &handle, &target, pair.index)?
        }
        _ => map_region_pair_dense(&handle, &target, pair.index)?,
    };
    if factor > 1 {
        mapped.space = CoordSpace::Latent;
    }
    Ok(mapped)
}

/// Maps all pairs at `factor` and merges them.
pub fn map_region_pairs(pairs: &[RegionPair], factor: u32) -> Result<(MappedPointSet, Vec<Conflict>)> {
    let per_pair = pairs
        .iter()
        .map(|p| map_region_pair_scaled(p, factor))
        .collect::<Result<Vec<_>>>()?;
    merge_mappings(per_pair)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::region::{RegionShape, Vertex};

    fn rect(x0: u32, y0: u32, w: u32, h: u32, grid: u32) -> Region {
        Region::from_pixels(
            (y0..y0 + h).flat_map(|y| (x0..x0 + w).map(move |x| Point::new(x, y))),
            grid,
            grid,
        )
        .unwrap()
    }

    fn tuples(m: &MappedPointSet) -> Vec<((u32, u32), (u32, u32))> {
        m.pairs
            .iter()
            .map(|p| ((p.handle.x, p.handle.y), (p.target.x, p.target.y)))
            .collect()
    }

    #[test]
    fn identical_squares_map_to_themselves() {
        let r = rect(0, 0, 3, 3, 8);
        let m = map_region_pair_dense(&r, &r, 0).unwrap();
        assert_eq!(m.len(), 9);
        assert!(m.pairs.iter().all(|p| p.handle == p.target));
    }

    #[test]
    fn one_column_handle_stretches_over_four_rows() {
        let h = Region::from_pixels([Point::new(0, 0), Point::new(0, 1)], 16, 16).unwrap();
        let t = rect(5, 5, 1, 4, 16);
        let m = map_region_pair_dense(&h, &t, 0).unwrap();
        assert_eq!(
            tuples(&m),
            vec![
                ((0, 0), (5, 5)),
                ((0, 0), (5, 6)),
                ((0, 0), (5, 7)),
                ((0, 1), (5, 8))
            ]
        );
    }

    #[test]
    fn small_square_onto_large_square() {
        let m = map_region_pair_dense(&rect(0, 0, 2, 2, 16), &rect(10, 10, 4, 4, 16), 0).unwrap();
        assert_eq!(m.len(), 16);
        for p in &m.pairs {
            let expect = |v: u32| [0, 0, 0, 1][(v - 10) as usize];
            assert_eq!(p.handle, Point::new(expect(p.target.x), expect(p.target.y)));
        }
    }

    #[test]
    fn disconnected_handle_columns_snap() {
        // Handle occupies columns 0 and 4 only; target is 5 wide.
        let h = Region::from_pixels([Point::new(0, 0), Point::new(4, 0)], 8, 8).unwrap();
        let t = rect(0, 3, 5, 1, 8);
        let m = map_region_pair_dense(&h, &t, 0).unwrap();
        let xs: Vec<u32> = m.pairs.iter().map(|p| p.handle.x).collect();
        // raw x' = 0,1,2,3,4 -> 0,0,0(tie),4,4
        assert_eq!(xs, vec![0, 0, 0, 4, 4]);
    }

    #[test]
    fn column_holes_snap_to_region_pixels() {
        let h = Region::from_pixels([Point::new(0, 0), Point::new(0, 4)], 8, 8).unwrap();
        let t = rect(3, 0, 1, 5, 8);
        let m = map_region_pair_dense(&h, &t, 0).unwrap();
        let ys: Vec<u32> = m.pairs.iter().map(|p| p.handle.y).collect();
        // raw y' = 0,1,2,3,4 -> 0,0,0(tie),4,4
        assert_eq!(ys, vec![0, 0, 0, 4, 4]);
        assert!(m.pairs.iter().all(|p| h.contains(p.handle)));
    }

    fn polygon(v: &[(i64, i64)], grid: u32) -> Region {
        Region::new(
            RegionShape::Polygon(v.iter().map(|&p| Vertex::from(p)).collect()),
            grid,
            grid,
        )
        .unwrap()
    }

    fn f(v: &[(i64, i64)]) -> Vec<(f64, f64)> {
        v.iter().map(|&(x, y)| (x as f64, y as f64)).collect()
    }

    #[test]
    fn polygon_identity_and_translation() {
        let tri = [(0, 0), (4, 0), (0, 4)];
        let t = polygon(&tri, 32);
        let m = map_region_pair_polygon(&f(&tri), &f(&tri), &t, &t, 0).unwrap();
        assert!(m.pairs.iter().all(|p| p.handle == p.target));

        let moved = [(10, 10), (14, 10), (10, 14)];
        let h = polygon(&moved, 32);
        let m = map_region_pair_polygon(&f(&moved), &f(&tri), &h, &t, 0).unwrap();
        assert_eq!(m.len(), 15);
        for p in &m.pairs {
            assert_eq!(p.handle, Point::new(p.target.x + 10, p.target.y + 10));
        }
    }

    #[test]
    fn quad_scale_by_two() {
        let small = [(0, 0), (2, 0), (2, 2), (0, 2)];
        let big = [(0, 0), (4, 0), (4, 4), (0, 4)];
        let t = polygon(&small, 16);
        let h = polygon(&big, 16);
        let m = map_region_pair_polygon(&f(&big), &f(&small), &h, &t, 0).unwrap();
        let get = |x, y| {
            m.pairs
                .iter()
                .find(|p| p.target == Point::new(x, y))
                .unwrap()
                .handle
        };
        assert_eq!(get(1, 1), Point::new(2, 2));
        assert_eq!(get(2, 2), Point::new(4, 4));
    }

    #[test]
    fn collinear_vertices_are_degenerate() {
        let t = polygon(&[(0, 0), (4, 0), (0, 4)], 16);
        let err = map_region_pair_polygon(
            &f(&[(0, 0), (1, 1), (2, 2)]),
            &f(&[(0, 0), (4, 0), (0, 4)]),
            &t,
            &t,
            0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::DegenerateGeometry(_)));
        assert!(Projective::perspective(
            &f(&[(0, 0), (1, 0), (2, 0), (0, 1)]),
            &f(&[(0, 0), (1, 0), (1, 1), (0, 1)])
        )
        .is_err());
    }

    #[test]
    fn merge_later_pair_wins() {
        let a = MappedPointSet {
            space: CoordSpace::Image,
            width: 8,
            height: 8,
            pairs: vec![MappedPair {
                handle: Point::new(1, 1),
                target: Point::new(3, 3),
                pair_index: 0,
            }],
        };
        let mut b = a.clone();
        b.pairs[0] = MappedPair {
            handle: Point::new(2, 2),
            target: Point::new(3, 3),
            pair_index: 1,
        };
        let (merged, conflicts) = merge_mappings(vec![a.clone(), b]).unwrap();
        assert_eq!(merged.len(), 1);
        assert_eq!(merged.pairs[0].handle, Point::new(2, 2));
        assert_eq!(conflicts.len(), 1);
        assert_eq!(conflicts[0].winner_pair_index, 1);

        let (single, none) = merge_mappings(vec![a.clone()]).unwrap();
        assert_eq!(single, a);
        assert!(none.is_empty());
    }

    #[test]
    fn scaled_mapping_of_polygons_uses_latent_grid() {
        let h = polygon(&[(0, 0), (15, 0), (15, 15), (0, 15)], 64);
        let t = polygon(&[(32, 0), (47, 0), (47, 15), (32, 15)], 64);
        let m = map_region_pair_scaled(&RegionPair::new(h, t, 0), 8).unwrap();
        assert_eq!(m.space, CoordSpace::Latent);
        assert_eq!((m.width, m.height), (8, 8));
        assert_eq!(m.len(), 4);
        for p in &m.pairs {
            assert_eq!(p.handle, Point::new(p.target.x - 4, p.target.y));
        }
    }
}
