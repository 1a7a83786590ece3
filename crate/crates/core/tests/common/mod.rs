#![allow(dead_code)]

use proptest::prelude::*;
use regiondrag_core::{grid::Mask, Point, Region};

pub fn rect(x0: u32, y0: u32, w: u32, h: u32, gw: u32, gh: u32) -> Region {
    Region::from_pixels(
        (y0..y0 + h).flat_map(|y| (x0..x0 + w).map(move |x| Point::new(x, y))),
        gw,
        gh,
    )
    .unwrap()
}

/// 4-connected blob grown from `start` by `steps` random-walk moves of a
/// `radius` brush.
pub fn blob(gw: u32, gh: u32, start: (u32, u32), moves: &[u8], radius: u32) -> Region {
    let mut mask = Mask::new(gw, gh);
    let (mut x, mut y) = (start.0 as i64, start.1 as i64);
    let r = radius as i64;
    let stamp = |mask: &mut Mask, x: i64, y: i64| {
        for dy in -r..=r {
            for dx in -r..=r {
                let (px, py) = (x + dx, y + dy);
                if px >= 0 && py >= 0 && px < gw as i64 && py < gh as i64 {
                    mask.set(px as u32, py as u32, true);
                }
            }
        }
    };
    stamp(&mut mask, x, y);
    for m in moves {
        match m % 4 {
            0 => x = (x + 1).min(gw as i64 - 1),
            1 => x = (x - 1).max(0),
            2 => y = (y + 1).min(gh as i64 - 1),
            _ => y = (y - 1).max(0),
        }
        stamp(&mut mask, x, y);
    }
    Region::from_pixels(mask.points(), gw, gh).unwrap()
}

pub fn blob_strategy(gw: u32, gh: u32) -> impl Strategy<Value = Region> {
    (0..gw, 0..gh, prop::collection::vec(any::<u8>(), 0..60), 0u32..3)
        .prop_map(move |(x, y, moves, r)| blob(gw, gh, (x, y), &moves, r))
}

/// Separable floor scaling between two axis-aligned rectangles, written
/// directly from the definition.
pub fn rect_oracle(h: (u32, u32, u32, u32), t: (u32, u32, u32, u32), p: Point) -> Point {
    // (x0, y0, w, h) rectangles; ranges are max - min in pixels.
    let axis = |v: u32, t0: u32, tlen: u32, h0: u32, hlen: u32| -> u32 {
        if tlen == 1 {
            h0
        } else {
            h0 + ((v - t0) as u64 * (hlen - 1) as u64 / (tlen - 1) as u64) as u32
        }
    };
    Point::new(axis(p.x, t.0, t.2, h.0, h.2), axis(p.y, t.1, t.3, h.1, h.3))
}
