//! Acceptance suite. Runs every criterion in turn, prints one PASS/FAIL line
//! for each and exits non-zero if any failed.

use std::{
    collections::{BTreeMap, BTreeSet},
    panic::{catch_unwind, AssertUnwindSafe},
    time::Instant,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regiondrag::{
    backends::{CodecChoice, Registry},
    dataset::{load_dataset, manifest_text, write_manifest, ManifestRecord},
    formats::{PointRecord, RegionPairRecord},
    imageio,
    runner::{run_benchmark, BenchOptions},
};
use regiondrag_core::{
    bench::sample_point_subset,
    grid::Mask,
    mapping::{map_region_pair_dense, map_region_pairs, MappedPair},
    metrics::{build_search_mask, mean_distance, PatchMatcher, SearchScope},
    pipeline::{copy_paste, Engine, PreparedEdit},
    rng::NoiseSource,
    schedule::{blend_handle, build_sampler_grid, transition},
    synthetic::{brightness_centroid, square_family, SquareFixture},
    time::{Clock, SystemClock},
    CoordSpace, ConstantDenoiser, CpMode, Denoiser, EditConfig, IdentityCodec, ImageBuffer, LatentCodec, LatentGrid,
    MappedPointSet, NoiseSchedule, Point, PointPair, PoolCodec, Region, RegionPair, ToyDenoiser,
};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_latent(rng: &mut ChaCha8Rng, c: u32, h: u32, w: u32) -> LatentGrid {
    // Sum of uniforms: roughly unit Gaussian, independent of the engine's RNG.
    let data = (0..c * h * w)
        .map(|_| (0..12).map(|_| rng.random::<f64>()).sum::<f64>() - 6.0)
        .collect();
    LatentGrid::new(c, h, w, 0, data).unwrap()
}

fn rect(x0: u32, y0: u32, w: u32, h: u32, gw: u32, gh: u32) -> Region {
    Region::from_pixels((y0..y0 + h).flat_map(|y| (x0..x0 + w).map(move |x| Point::new(x, y))), gw, gh).unwrap()
}

// Mapping oracle: separable floor scaling between axis-aligned rectangles.
fn rect_oracle(h: (u32, u32, u32, u32), t: (u32, u32, u32, u32), p: Point) -> Point {
    let axis = |v: u32, t0: u32, tlen: u32, h0: u32, hlen: u32| {
        if tlen == 1 {
            h0
        } else {
            h0 + ((v - t0) as u64 * (hlen - 1) as u64 / (tlen - 1) as u64) as u32
        }
    };
    Point::new(axis(p.x, t.0, t.2, h.0, h.2), axis(p.y, t.1, t.3, h.1, h.3))
}

fn mapping_oracle() -> Outcome {
    const G: u32 = 128;
    let mut r = rng(1);
    let start = Instant::now();
    let (mut mismatches, mut pairs) = (0usize, 0usize);
    for i in 0..1000 {
        let mut pick = || {
            let (w, h) = (r.random_range(1..=64), r.random_range(1..=64));
            (r.random_range(0..=G - w), r.random_range(0..=G - h), w, h)
        };
        let (hr, tr) = (pick(), pick());
        let handle = rect(hr.0, hr.1, hr.2, hr.3, G, G);
        let target = rect(tr.0, tr.1, tr.2, tr.3, G, G);
        let m = map_region_pair_dense(&handle, &target, i).unwrap();
        pairs += m.len();
        let got: BTreeMap<Point, Point> = m.pairs.iter().map(|p| (p.target, p.handle)).collect();
        if got.len() != target.len() || m.len() != target.len() {
            mismatches += 1;
            continue;
        }
        for &t in target.pixels() {
            if got.get(&t) != Some(&rect_oracle(hr, tr, t)) {
                mismatches += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        mismatches == 0 && secs < 5.0,
        format!("1000 rectangle pairs, {pairs} mapped points, {mismatches} mismatches, {secs:.2} s (limit 5 s)"),
    )
}

/// Random-walk brush stroke: connected by construction.
fn blob(r: &mut ChaCha8Rng, g: u32) -> Region {
    let mut mask = Mask::new(g, g);
    let (mut x, mut y) = (r.random_range(0..g) as i64, r.random_range(0..g) as i64);
    let radius = r.random_range(0..3i64);
    for _ in 0..r.random_range(1..80) {
        for dy in -radius..=radius {
            for dx in -radius..=radius {
                let (px, py) = (x + dx, y + dy);
                if (0..g as i64).contains(&px) && (0..g as i64).contains(&py) {
                    mask.set(px as u32, py as u32, true);
                }
            }
        }
        match r.random_range(0..4) {
            0 => x = (x + 1).min(g as i64 - 1),
            1 => x = (x - 1).max(0),
            2 => y = (y + 1).min(g as i64 - 1),
            _ => y = (y - 1).max(0),
        }
    }
    Region::from_pixels(mask.points(), g, g).unwrap()
}

fn brush_completeness() -> Outcome {
    let mut r = rng(2);
    let mut violations = Vec::new();
    for i in 0..1000 {
        let (h, t) = (blob(&mut r, 96), blob(&mut r, 96));
        let m = map_region_pair_dense(&h, &t, 0).unwrap();
        let targets: BTreeSet<Point> = m.pairs.iter().map(|p| p.target).collect();
        let complete = m.len() == t.len()
            && targets.len() == t.len()
            && targets.iter().all(|p| t.contains(*p))
            && m.pairs.iter().all(|p| h.contains(p.handle));
        if !complete {
            violations.push(format!("completeness #{i}"));
        }
        let id = map_region_pair_dense(&t, &t, 0).unwrap();
        if id.len() != t.len() || id.pairs.iter().any(|p| p.handle != p.target) {
            violations.push(format!("identity #{i}"));
        }
    }
    check(
        violations.is_empty(),
        format!("1000 blob pairs + 1000 identity maps, {} violations {:?}", violations.len(), violations.iter().take(3).collect::<Vec<_>>()),
    )
}

fn scheduler_round_trip() -> Outcome {
    let cfg = EditConfig {
        eta: 0.0,
        invert_to: 1000,
        cp_stop: 0,
        ..EditConfig::default()
    };
    let grid = build_sampler_grid(&cfg).unwrap();
    let schedule = NoiseSchedule::sd15(1000, 0.0).unwrap();
    let mut r = rng(3);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let z0 = random_latent(&mut r, 4, 64, 64);
        let backend = ConstantDenoiser::Grid(random_latent(&mut r, 4, 64, 64));
        let engine = Engine::new(&backend, &IdentityCodec);
        let cond = backend.condition("");
        let noise = NoiseSource::new(i);
        let (traj, _) = engine.invert(z0.clone(), &grid, &schedule, &noise, &cond, false).unwrap();
        let (back, _, _) = engine
            .denoise(traj[&1000].clone(), &grid, &schedule, &noise, &cond, None, |_, _| Ok(false))
            .unwrap();
        worst = worst.max(back[&0].max_abs_diff(&z0).unwrap());
    }
    check(worst <= 1e-5, format!("100 latents 4x64x64, 20 steps 0->1000->0, max |err| = {worst:.3e} (limit 1e-5)"))
}

fn blend_contract() -> Outcome {
    let mut r = rng(4);
    let z = random_latent(&mut r, 4, 64, 64);
    let mut mask = Mask::new(64, 64);
    for y in 7..57 {
        for x in 7..57 {
            mask.set(x, y, true);
        }
    }
    let noise = NoiseSource::new(40);
    let mut notes = Vec::new();
    let mut ok = true;

    let same = blend_handle(&z, &mask, 0.0, &noise).unwrap();
    let bit_identical = same.data().iter().zip(z.data()).all(|(a, b)| a.to_bits() == b.to_bits());
    ok &= bit_identical;
    notes.push(format!("a=0 bit-identical {bit_identical}"));

    let plane = z.plane_len();
    let on_mask = |g: &LatentGrid| -> Vec<f64> {
        (0..4usize)
            .flat_map(|c| mask.bits().iter().enumerate().filter(|(_, b)| **b).map(move |(i, _)| c * plane + i))
            .map(|i| g.data()[i])
            .collect()
    };
    let full = blend_handle(&z, &mask, 1.0, &noise).unwrap();
    let off_same = mask
        .bits()
        .iter()
        .enumerate()
        .filter(|(_, b)| !**b)
        .all(|(i, _)| (0..4).all(|c| full.data()[c * plane + i].to_bits() == z.data()[c * plane + i].to_bits()));
    let (xs, ys) = (on_mask(&z), on_mask(&full));
    let rho = correlation(&xs, &ys);
    ok &= off_same && rho.abs() < 0.05 && xs.len() >= 10_000;
    notes.push(format!("a=1 off-mask identical {off_same}, rho = {rho:.4} over {} elements", xs.len()));

    for alpha in [0.25, 0.5, 0.75] {
        let out = blend_handle(&z, &mask, alpha, &noise).unwrap();
        let ratio = variance(&on_mask(&out)) / variance(&xs);
        ok &= (ratio - 1.0).abs() <= 0.10;
        notes.push(format!("a={alpha} var ratio {ratio:.3}"));
    }
    check(ok, notes.join("; "))
}

fn variance(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    cov / (variance(a) * n * variance(b) * n).sqrt()
}

fn copy_paste_exactness() -> Outcome {
    let mut r = rng(5);
    let mut failures = 0;
    let mut total_pairs = 0;
    for i in 0..1000 {
        let (w, h) = (r.random_range(4..40), r.random_range(4..40));
        let src = random_latent(&mut r, 4, h, w);
        let dst = random_latent(&mut r, 4, h, w);
        // Alternate uniformly random mappings with ones produced by region mapping.
        let mapping = if i % 2 == 0 {
            let mut seen = BTreeSet::new();
            let pairs = (0..r.random_range(0..200))
                .map(|_| {
                    (
                        Point::new(r.random_range(0..w), r.random_range(0..h)),
                        Point::new(r.random_range(0..w), r.random_range(0..h)),
                    )
                })
                .filter(|(_, t)| seen.insert(*t))
                .map(|(handle, target)| MappedPair { handle, target, pair_index: 0 })
                .collect();
            MappedPointSet { space: CoordSpace::Latent, width: w, height: h, pairs }
        } else {
            let mut pick = || {
                let (rw, rh) = (r.random_range(1..=w / 2), r.random_range(1..=h / 2));
                (r.random_range(0..=w - rw), r.random_range(0..=h - rh), rw, rh)
            };
            let n = (i / 2) % 3 + 1;
            let pairs: Vec<RegionPair> = (0..n)
                .map(|k| {
                    let (a, b) = (pick(), pick());
                    RegionPair::new(rect(a.0, a.1, a.2, a.3, w, h), rect(b.0, b.1, b.2, b.3, w, h), k)
                })
                .collect();
            map_region_pairs(&pairs, 1).unwrap().0
        };
        total_pairs += mapping.len();
        let out = copy_paste(&src, &dst, &mapping).unwrap();
        let targets: BTreeMap<Point, Point> = mapping.pairs.iter().map(|p| (p.target, p.handle)).collect();
        let mut ok = true;
        for c in 0..4 {
            for y in 0..h {
                for x in 0..w {
                    let expect = match targets.get(&Point::new(x, y)) {
                        Some(hp) => src.get(c, hp.y, hp.x),
                        None => dst.get(c, y, x),
                    };
                    ok &= out.get(c, y, x).to_bits() == expect.to_bits();
                }
            }
        }
        if !ok {
            failures += 1;
        }
    }
    check(failures == 0, format!("1000 mappings ({total_pairs} pairs), {failures} inexact"))
}

fn kv_self_consistency() -> Outcome {
    let schedule = NoiseSchedule::sd15(1000, 1.0).unwrap();
    let toy = ToyDenoiser::with_defaults(schedule.clone());
    let engine = Engine::new(&toy, &IdentityCodec);
    let f = SquareFixture::family(4);
    let mut notes = Vec::new();
    let mut ok = true;
    for eta in [0.0, 1.0] {
        let cfg = EditConfig {
            blend_alpha: 0.0,
            eta,
            kv_swap: true,
            seed: 8,
            ..EditConfig::default()
        };
        let prep = PreparedEdit::from_region_pairs(&[f.region_pair().unwrap()], 1)
            .unwrap()
            .with_mapping(MappedPointSet::empty(CoordSpace::Latent, 64, 64));
        let z0 = IdentityCodec.encode(&f.image()).unwrap();
        let cond = toy.condition("");
        let session = engine.edit_latent(z0, prep, &cond, &cfg).unwrap();

        // Reference: z_{t'} re-denoised step by step with the cached keys/values.
        let sched = schedule.clone().with_eta(eta);
        let noise = NoiseSource::new(cfg.seed);
        let mut z = session.trajectory[&500].clone();
        let mut worst = 0.0f64;
        let mut literal = 0.0f64;
        for t in (1..=10).rev().map(|k| k * 50) {
            worst = worst.max(session.edited[&t].max_abs_diff(&z).unwrap());
            literal = literal.max(session.edited[&t].max_abs_diff(&session.trajectory[&t]).unwrap());
            let out = toy.predict_noise(&z, t, &cond, session.kv_cache.get(t), false).unwrap();
            z = transition(&z, t - 50, &out.eps, &sched, &noise).unwrap();
        }
        worst = worst.max(session.final_latent().max_abs_diff(&z).unwrap());
        ok &= worst <= 1e-6;
        notes.push(format!("eta={eta}: max |z' - z| = {worst:.2e} (vs inversion latents {literal:.2e})"));
    }
    check(ok, notes.join("; ") + " (limit 1e-6)")
}

// Mean Distance oracle: exhaustive normalized cross-correlation over the
// pixels the search-mask inequality admits.
fn scaled_sq(a: Point, b: Point, w: u32, h: u32) -> u128 {
    let dx = (a.x as i128 - b.x as i128).unsigned_abs();
    let dy = (a.y as i128 - b.y as i128).unsigned_abs();
    dx * dx * (h as u128).pow(2) + dy * dy * (w as u128).pow(2)
}

fn in_search_mask(p: Point, h: Point, t: Point, w: u32, ht: u32) -> bool {
    let limit = scaled_sq(h, t, w, ht);
    2 * scaled_sq(p, h, w, ht) < limit || 2 * scaled_sq(p, t, w, ht) < limit
}

fn patch(img: &ImageBuffer, p: Point) -> Vec<f64> {
    let mut v = Vec::new();
    for dy in -3i64..=3 {
        for dx in -3i64..=3 {
            let x = (p.x as i64 + dx).clamp(0, img.width() as i64 - 1) as u32;
            let y = (p.y as i64 + dy).clamp(0, img.height() as i64 - 1) as u32;
            for c in 0..img.channels() {
                v.push(img.get(x, y, c) as f64);
            }
        }
    }
    v
}

fn ncc_oracle(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut dot, mut sa, mut sb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += (x - ma) * (y - mb);
        sa += (x - ma) * (x - ma);
        sb += (y - mb) * (y - mb);
    }
    dot / (sa * sb + (n * 1e-3) * (n * 1e-3)).sqrt()
}

fn md_oracle(original: &ImageBuffer, edited: &ImageBuffer, pair: PointPair) -> f64 {
    let (w, h) = (original.width(), original.height());
    let (hp, tp) = (pair.handle, pair.target);
    if hp == tp {
        return 0.0;
    }
    let reference = patch(original, hp);
    let mut best: Option<(f64, u128, Point)> = None;
    for y in 0..h {
        for x in 0..w {
            let p = Point::new(x, y);
            if !in_search_mask(p, hp, tp, w, h) {
                continue;
            }
            let s = ncc_oracle(&reference, &patch(edited, p));
            let d = scaled_sq(p, tp, w, h);
            if best.is_none_or(|(bs, bd, _)| s > bs || (s == bs && d < bd)) {
                best = Some((s, d, p));
            }
        }
    }
    let m = best.unwrap().2;
    let (dx, dy) = ((m.x as f64 - tp.x as f64) / w as f64, (m.y as f64 - tp.y as f64) / h as f64);
    (dx * dx + dy * dy).sqrt()
}

struct Run {
    centroid_err: f64,
    md_x100: f64,
    md_oracle_x100: f64,
}

fn run_fixture(engine: &Engine, f: &SquareFixture, cfg: &EditConfig, subset: Option<f64>) -> Run {
    let image = f.image();
    let out = match subset {
        None => engine.run_edit(&image, &[f.region_pair().unwrap()], "", cfg).unwrap(),
        Some(frac) => {
            let prep = PreparedEdit::from_region_pairs(&[f.region_pair().unwrap()], 1).unwrap();
            let sub = sample_point_subset(&prep.mapping, frac, cfg.seed).unwrap();
            engine.run_edit_prepared(&image, prep.with_mapping(sub), "", cfg).unwrap()
        }
    };
    let a = brightness_centroid(&image, f.background).unwrap();
    let b = brightness_centroid(&out.image, f.background).unwrap();
    let (ex, ey) = (b.0 - a.0 - f.shift.0 as f64, b.1 - a.1 - f.shift.1 as f64);
    let pair = f.point_pair();
    let md = mean_distance(&image, &out.image, &[pair], &PatchMatcher::default(), SearchScope::Masked).unwrap();
    Run {
        centroid_err: (ex * ex + ey * ey).sqrt(),
        md_x100: md.md_x100,
        md_oracle_x100: md_oracle(&image, &out.image, pair) * 100.0,
    }
}

struct EndToEnd {
    multi: Vec<Run>,
    initial: Vec<Run>,
    subset: Vec<Run>,
}

fn e2e_config(seed: u64) -> EditConfig {
    EditConfig {
        eta: 0.0,
        seed,
        ..EditConfig::default()
    }
}

fn end_to_end_runs() -> EndToEnd {
    let toy = ToyDenoiser::with_defaults(NoiseSchedule::sd15(1000, 0.0).unwrap());
    let engine = Engine::new(&toy, &IdentityCodec);
    let family = square_family(20);
    let run = |cfg: &dyn Fn(u64) -> EditConfig, subset| {
        family.iter().map(|f| run_fixture(&engine, f, &cfg(f.seed), subset)).collect::<Vec<_>>()
    };
    EndToEnd {
        multi: run(&e2e_config, None),
        initial: run(
            &|s| EditConfig {
                cp_mode: CpMode::InitialOnly,
                ..e2e_config(s)
            },
            None,
        ),
        subset: run(&e2e_config, Some(0.1)),
    }
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn end_to_end_translation(e: &EndToEnd) -> Outcome {
    let within = e.multi.iter().filter(|r| r.centroid_err <= 2.0).count();
    let md = mean(e.multi.iter().map(|r| r.md_x100));
    let oracle = mean(e.multi.iter().map(|r| r.md_oracle_x100));
    let agree = e.multi.iter().all(|r| (r.md_x100 - r.md_oracle_x100).abs() <= 1e-9);
    check(
        within >= 18 && md <= 4.0 && agree,
        format!(
            "{within}/20 seeds with centroid displacement within 2 px of 16 (need 18); mean MD x100 = {md:.3} (limit 4.0), brute-force oracle {oracle:.3}, agree {agree}"
        ),
    )
}

fn subset_trend(e: &EndToEnd) -> Outcome {
    let full = mean(e.multi.iter().map(|r| r.md_x100));
    let tenth = mean(e.subset.iter().map(|r| r.md_x100));
    check(tenth > full, format!("mean MD x100 at 10% of points {tenth:.3} vs 100% {full:.3}"))
}

fn cp_mode_ablation(e: &EndToEnd) -> Outcome {
    let multi = mean(e.multi.iter().map(|r| r.centroid_err));
    let initial = mean(e.initial.iter().map(|r| r.centroid_err));
    check(initial >= multi, format!("mean centroid error initial-only {initial:.4} px vs multi-step {multi:.4} px"))
}

fn search_mask_exactness() -> Outcome {
    const G: u32 = 128;
    let mut r = rng(6);
    let mut wrong = 0usize;
    for _ in 0..100 {
        let h = Point::new(r.random_range(0..G), r.random_range(0..G));
        let t = Point::new(r.random_range(0..G), r.random_range(0..G));
        let m = build_search_mask(h, t, G, G).unwrap().mask;
        for y in 0..G {
            for x in 0..G {
                if m.get(x, y) != in_search_mask(Point::new(x, y), h, t, G, G) {
                    wrong += 1;
                }
            }
        }
    }
    let one_px = 1.0 / 64.0;
    let mut worst = 0.0f64;
    for f in square_family(20) {
        let report = mean_distance(&f.image(), &f.expected(), &[f.point_pair()], &PatchMatcher::default(), SearchScope::Masked)
            .unwrap();
        worst = worst.max(report.per_pair[0].distance);
    }
    check(
        wrong == 0 && worst <= one_px,
        format!("100 pairs at 128x128, {wrong} differing pixels; exact translation worst d = {worst:.4} (limit one pixel = {one_px:.4})"),
    )
}

fn performance() -> Outcome {
    let toy = ToyDenoiser::with_defaults(NoiseSchedule::sd15(1000, 1.0).unwrap());
    let codec = PoolCodec::new(8).unwrap();
    let clock = SystemClock::default();
    let engine = Engine::new(&toy, &codec).with_clock(&clock);
    let f = SquareFixture {
        size: 512,
        side: 128,
        origin: (64, 64),
        shift: (128, 0),
        background: 0.1,
        cell: 16,
        seed: 1,
    };
    let (image, pair) = (f.image(), f.region_pair().unwrap());
    let mut runs = Vec::new();
    for _ in 0..3 {
        let t0 = clock.now_ms();
        let out = engine.run_edit(&image, &[pair.clone()], "", &EditConfig::default()).unwrap();
        let wall = clock.now_ms() - t0;
        assert_eq!(out.session.trajectory[&0].channels(), 4);
        assert_eq!((out.session.trajectory[&0].width(), out.session.trajectory[&0].height()), (64, 64));
        runs.push((wall, out.session.timings));
    }
    let worst_wall = runs.iter().map(|r| r.0).fold(0.0, f64::max);
    let worst_ratio = runs.iter().map(|r| r.1.cp_ms / r.1.denoise_ms).fold(0.0, f64::max);
    let t = runs.last().unwrap().1;
    check(
        worst_wall < 1000.0 && worst_ratio <= 0.05,
        format!(
            "512x512 -> 4x64x64, 20 steps, 3 runs: slowest {worst_wall:.0} ms (limit 1000); cp/denoise <= {:.3}% (limit 5%); last run invert {:.0} ms, denoise {:.0} ms, cp {:.3} ms",
            worst_ratio * 100.0,
            t.invert_ms,
            t.denoise_ms,
            t.cp_ms
        ),
    )
}

fn benchmark_plumbing() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let records: Vec<ManifestRecord> = square_family(10)
        .iter()
        .map(|f| {
            let name = format!("sample{}.png", f.seed);
            imageio::save_png(&f.image(), &dir.path().join(&name)).unwrap();
            ManifestRecord {
                id: format!("sample-{}", f.seed),
                image: name,
                prompt: String::new(),
                mask: None,
                points: Some(vec![PointRecord::from(f.point_pair())]),
                regions: Some(vec![RegionPairRecord::from(&f.region_pair().unwrap())]),
            }
        })
        .collect();
    let manifest = dir.path().join("manifest.jsonl");
    write_manifest(&manifest, &records).unwrap();
    let ds = load_dataset(&manifest).unwrap();
    let mut notes = Vec::new();
    let mut ok = ds.samples.len() == 10 && ds.rejects.is_empty();

    let again = dir.path().join("again.jsonl");
    write_manifest(&again, ds.records()).unwrap();
    let ds2 = load_dataset(&again).unwrap();
    let fixed = ds2.samples == ds.samples && manifest_text(ds2.records()) == manifest_text(ds.records());
    ok &= fixed;
    notes.push(format!("manifest round trip fixed point {fixed}"));

    let opts = BenchOptions {
        config: e2e_config(0),
        codec: CodecChoice::Identity,
        workers: 2,
        ..BenchOptions::default()
    };
    let report = run_benchmark(&Registry::builtin(), &ds, &opts).unwrap();
    let all_ok = report.rows.iter().all(|r| r.ok);
    ok &= all_ok && report.rows.len() == 10;
    notes.push(format!("{}/10 samples ran", report.rows.iter().filter(|r| r.ok).count()));

    // Recompute every sample's scores directly and average them.
    let toy = ToyDenoiser::with_defaults(NoiseSchedule::sd15(1000, 0.0).unwrap());
    let engine = Engine::new(&toy, &IdentityCodec);
    let (mut mds, mut proxies) = (Vec::new(), Vec::new());
    for (f, row) in square_family(10).iter().zip(&report.rows) {
        let image = imageio::load_png(&dir.path().join(format!("sample{}.png", f.seed))).unwrap();
        let out = engine.run_edit(&image, &[f.region_pair().unwrap()], "", &opts.config).unwrap();
        let md = md_oracle(&image, &out.image, f.point_pair()) * 100.0;
        let proxy = image.data().iter().zip(out.image.data()).map(|(a, b)| (*a as f64 - *b as f64).abs()).sum::<f64>()
            / image.data().len() as f64
            * 100.0;
        ok &= (row.md_x100.unwrap() - md).abs() <= 1e-9 && (row.proxy_x100.unwrap() - proxy).abs() <= 1e-6;
        mds.push(md);
        proxies.push(proxy);
    }
    let (md, proxy) = (mean(mds.into_iter()), mean(proxies.into_iter()));
    let agg = &report.aggregates;
    let agree = (agg.mean_md_x100.unwrap() - md).abs() <= 1e-9 && (agg.mean_proxy_x100.unwrap() - proxy).abs() <= 1e-6;
    ok &= agree;
    notes.push(format!(
        "mean MD x100 {:.4} vs recomputed {md:.4}, mean proxy x100 {:.4} vs {proxy:.4}",
        agg.mean_md_x100.unwrap(),
        agg.mean_proxy_x100.unwrap()
    ));
    check(ok, notes.join("; "))
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut run = |name: &'static str, f: &dyn Fn() -> Outcome| {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .map_or("panicked".into(), |m| format!("panicked: {m}")))
        });
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("{tag} {name}: {detail} [{:.1} s]", start.elapsed().as_secs_f64());
        results.push((name, outcome));
    };

    run("mapping oracle equivalence", &mapping_oracle);
    run("mapping completeness and identity", &brush_completeness);
    run("scheduler round trip", &scheduler_round_trip);
    run("blend contract", &blend_contract);
    run("copy-paste exactness", &copy_paste_exactness);
    run("kv self-consistency", &kv_self_consistency);
    let e2e = catch_unwind(end_to_end_runs);
    let with_e2e = |f: fn(&EndToEnd) -> Outcome| match &e2e {
        Ok(e) => f(e),
        Err(_) => Err("end-to-end runs panicked".into()),
    };
    run("end-to-end toy translation", &|| with_e2e(end_to_end_translation));
    run("point-subset trend", &|| with_e2e(subset_trend));
    run("copy-paste mode ablation", &|| with_e2e(cp_mode_ablation));
    run("search-mask exactness", &search_mask_exactness);
    run("performance", &performance);
    run("benchmark plumbing", &benchmark_plumbing);

    let failed: Vec<_> = results.iter().filter(|(_, o)| o.is_err()).map(|(n, _)| *n).collect();
    println!("\nacceptance: {} passed, {} failed", results.len() - failed.len(), failed.len());
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
