//! Mean Distance with search masks, and a pixel-space similarity proxy.

use alloc::{format, string::String, vec::Vec};

use crate::{
    error::{Error, Result},
    grid::{check_point, ImageBuffer, Mask, Point, PointPair},
};

/// Euclidean distance after dividing x offsets by `width` and y offsets by
/// `height`.
pub fn normalized_distance(a: Point, b: Point, width: u32, height: u32) -> f64 {
    let dx = (b.x as f64 - a.x as f64) / width as f64;
    let dy = (b.y as f64 - a.y as f64) / height as f64;
    libm::sqrt(dx * dx + dy * dy)
}

/// Squared normalized distance scaled by `W²H²`, which makes it an integer.
#[inline]
fn scaled_sq(a: Point, b: Point, width: u32, height: u32) -> u128 {
    let dx = (a.x as i64 - b.x as i64).unsigned_abs() as u128;
    let dy = (a.y as i64 - b.y as i64).unsigned_abs() as u128;
    let (w, h) = (width as u128, height as u128);
    dx * dx * h * h + dy * dy * w * w
}

/// Pixels closer (normalized) to `h` or `t` than `d(h, t) / √2`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchMask {
    pub handle: Point,
    pub target: Point,
    pub mask: Mask,
}

impl SearchMask {
    /// `h == t`: the mask is empty.
    pub fn is_degenerate(&self) -> bool {
        self.handle == self.target
    }
}

/// Builds the search mask of one pair on a `width` x `height` image.
///
/// The comparison `2·d(x, p)² < d(h, t)²` is done in integers after scaling
/// by `W²H²`, so points on the boundary are classified exactly.
pub fn build_search_mask(h: Point, t: Point, width: u32, height: u32) -> Result<SearchMask> {
    check_point(h, width, height)?;
    check_point(t, width, height)?;
    let mut mask = Mask::new(width, height);
    let limit = scaled_sq(h, t, width, height);
    let (w2, h2) = ((width as u128).pow(2), (height as u128).pow(2));
    for y in 0..height {
        for center in [h, t] {
            // Need 2·(dx²·H² + dy²·W²) < limit, i.e. dx² < (limit − 2·dy²·W²) / (2·H²).
            let dy = (y as i64 - center.y as i64).unsigned_abs() as u128;
            let used = 2 * dy * dy * w2;
            if used >= limit {
                continue;
            }
            let rem = limit - used;
            // Largest dx with 2·dx²·H² < rem.
            let mut dx = isqrt((rem - 1) / (2 * h2));
            while 2 * (dx + 1) * (dx + 1) * h2 < rem {
                dx += 1;
            }
            while dx > 0 && 2 * dx * dx * h2 >= rem {
                dx -= 1;
            }
            let lo = (center.x as i64 - dx as i64).max(0) as u32;
            let hi = (center.x as u128 + dx).min(width as u128 - 1) as u32;
            for x in lo..=hi {
                mask.set(x, y, true);
            }
        }
    }
    Ok(SearchMask {
        handle: h,
        target: t,
        mask,
    })
}

fn isqrt(n: u128) -> u128 {
    if n < 2 {
        return n;
    }
    let mut x = libm::sqrt(n as f64) as u128;
    while x * x > n {
        x -= 1;
    }
    while (x + 1) * (x + 1) <= n {
        x += 1;
    }
    x
}

/// A matched position and its similarity score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub position: Point,
    pub score: f64,
}

/// Finds where the content at `h` in `original` ended up in `edited`.
pub trait FeatureMatcher: Sync {
    fn name(&self) -> &str;

    /// Best of `candidates` (row-major order); ties go to the candidate
    /// nearest `t`, then to the first in row-major order. `None` when
    /// `candidates` is empty.
    fn best_match(&self, original: &ImageBuffer, edited: &ImageBuffer, h: Point, t: Point, candidates: &[Point]) -> Option<Match>;
}

/// Normalized cross-correlation of square patches over all channels, with
/// edge pixels replicated outside the image.
#[derive(Debug, Clone, Copy)]
pub struct PatchMatcher {
    pub radius: u32,
    /// Regularizes the denominator to `sqrt(ss_a·ss_b + (n·epsilon)²)` for
    /// patches of `n` values, so near-flat patches (such as a background with
    /// slight residual noise) score near 0 instead of correlating strongly.
    pub epsilon: f64,
}

impl Default for PatchMatcher {
    fn default() -> Self {
        Self {
            radius: 3,
            epsilon: 1e-3,
        }
    }
}

impl PatchMatcher {
    /// Mean-centered patch around `p`, channel-interleaved.
    fn patch(&self, img: &ImageBuffer, p: Point, out: &mut Vec<f64>) -> f64 {
        out.clear();
        let r = self.radius as i64;
        let (w, h) = (img.width() as i64, img.height() as i64);
        for dy in -r..=r {
            let y = (p.y as i64 + dy).clamp(0, h - 1) as u32;
            for dx in -r..=r {
                let x = (p.x as i64 + dx).clamp(0, w - 1) as u32;
                for c in 0..img.channels() {
                    out.push(img.get(x, y, c) as f64);
                }
            }
        }
        let mean = out.iter().sum::<f64>() / out.len() as f64;
        let mut ss = 0.0;
        for v in out.iter_mut() {
            *v -= mean;
            ss += *v * *v;
        }
        ss
    }

    pub fn score(&self, original: &ImageBuffer, edited: &ImageBuffer, h: Point, candidate: Point) -> f64 {
        let (mut a, mut b) = (Vec::new(), Vec::new());
        let sa = self.patch(original, h, &mut a);
        let sb = self.patch(edited, candidate, &mut b);
        ncc(&a, sa, &b, sb, self.reg(a.len()))
    }

    fn reg(&self, n: usize) -> f64 {
        let r = n as f64 * self.epsilon;
        r * r
    }
}

fn ncc(a: &[f64], sa: f64, b: &[f64], sb: f64, eps: f64) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    dot / libm::sqrt(sa * sb + eps)
}

impl FeatureMatcher for PatchMatcher {
    fn name(&self) -> &str {
        "patch-ncc"
    }

    fn best_match(&self, original: &ImageBuffer, edited: &ImageBuffer, h: Point, t: Point, candidates: &[Point]) -> Option<Match> {
        let mut reference = Vec::new();
        let sa = self.patch(original, h, &mut reference);
        let mut buf = Vec::new();
        let (w, ht) = (edited.width(), edited.height());
        let mut best: Option<(Match, u128)> = None;
        for &c in candidates {
            let sb = self.patch(edited, c, &mut buf);
            let score = ncc(&reference, sa, &buf, sb, self.reg(reference.len()));
            let dist = scaled_sq(c, t, w, ht);
            let better = match &best {
                None => true,
                Some((m, d)) => score > m.score || (score == m.score && dist < *d),
            };
            if better {
                best = Some((
                    Match {
                        position: c,
                        score,
                    },
                    dist,
                ));
            }
        }
        best.map(|(m, _)| m)
    }
}

/// Where the matcher looks for each handle point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SearchScope {
    #[default]
    Masked,
    WholeImage,
}

/// Outcome for one point pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairDistance {
    pub handle: Point,
    pub target: Point,
    /// `None` for degenerate (`h == t`) pairs.
    pub matched: Option<Match>,
    /// `d(t, h')`, or 0 for degenerate pairs.
    pub distance: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceReport {
    pub per_pair: Vec<PairDistance>,
    /// Mean of the per-pair distances, times 100.
    pub md_x100: f64,
    pub matcher: String,
}

/// Mean over pairs of `d(t, h')`, with `h'` the best match of the original's
/// content at `h` within the pair's search mask of the edited image.
pub fn mean_distance(
    original: &ImageBuffer,
    edited: &ImageBuffer,
    pairs: &[PointPair],
    matcher: &dyn FeatureMatcher,
    scope: SearchScope,
) -> Result<DistanceReport> {
    if !original.same_shape(edited) {
        return Err(Error::ShapeMismatch(format!(
            "original is {}x{}x{}, edited is {}x{}x{}",
            original.width(),
            original.height(),
            original.channels(),
            edited.width(),
            edited.height(),
            edited.channels()
        )));
    }
    if pairs.is_empty() {
        return Err(Error::InvalidValue("mean distance needs at least one point pair".into()));
    }
    let (w, h) = (original.width(), original.height());
    let whole: Vec<Point> = match scope {
        SearchScope::WholeImage => (0..h).flat_map(|y| (0..w).map(move |x| Point::new(x, y))).collect(),
        SearchScope::Masked => Vec::new(),
    };
    let mut per_pair = Vec::with_capacity(pairs.len());
    for pair in pairs {
        pair.validate(w, h)?;
        let (hp, tp) = (pair.handle, pair.target);
        if hp == tp {
            per_pair.push(PairDistance {
                handle: hp,
                target: tp,
                matched: None,
                distance: 0.0,
                degenerate: true,
            });
            continue;
        }
        let masked: Vec<Point>;
        let candidates = match scope {
            SearchScope::WholeImage => &whole[..],
            SearchScope::Masked => {
                masked = build_search_mask(hp, tp, w, h)?.mask.points().collect();
                &masked[..]
            }
        };
        let m = matcher
            .best_match(original, edited, hp, tp, candidates)
            .ok_or_else(|| Error::InvalidValue(format!("matcher {} found no candidate", matcher.name())))?;
        per_pair.push(PairDistance {
            handle: hp,
            target: tp,
            matched: Some(m),
            distance: normalized_distance(tp, m.position, w, h),
            degenerate: false,
        });
    }
    let md = per_pair.iter().map(|p| p.distance).sum::<f64>() / per_pair.len() as f64;
    Ok(DistanceReport {
        per_pair,
        md_x100: md * 100.0,
        matcher: matcher.name().into(),
    })
}

/// Mean absolute pixel difference, times 100.
pub fn pixel_similarity_proxy(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::ShapeMismatch(format!(
            "{}x{}x{} vs {}x{}x{}",
            a.width(),
            a.height(),
            a.channels(),
            b.width(),
            b.height(),
            b.channels()
        )));
    }
    if a.data().is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| libm::fabs(*x as f64 - *y as f64))
        .sum();
    Ok(sum / a.data().len() as f64 * 100.0)
}
