//! Single-cycle region drag editing.
//!
//! 1. Map every region pair to dense point pairs on the latent grid.
//! 2. Encode the image and invert it to `invert_to`, caching every
//!    intermediate latent and the attention keys/values of each step.
//! 3. Resample the handle regions of a copy of the inverted latent.
//! 4. Denoise the copy. At each step with `t >= cp_stop` the cached latent's
//!    handle content is pasted onto the target positions, and the backend
//!    runs with the cached keys/values of that timestep.
//! 5. Decode.

use alloc::{boxed::Box, collections::BTreeMap, format, string::String, vec::Vec};

use crate::{
    codec::LatentCodec,
    config::EditConfig,
    denoiser::{AttentionCache, Conditioning, Denoiser},
    error::{Error, Result},
    grid::{ImageBuffer, LatentGrid, Mask},
    mapping::{map_region_pairs, Conflict, MappedPointSet},
    region::RegionPair,
    rng::NoiseSource,
    schedule::{blend_handle, build_sampler_grid, transition, NoiseSchedule, SamplerGrid, ScheduleFamily},
    time::{Clock, NullClock, StageTimings},
};

/// `dst` with `dst[:, t] = src[:, h]` for every mapped pair `(h, t)`.
pub fn copy_paste(src: &LatentGrid, dst: &LatentGrid, pairs: &MappedPointSet) -> Result<LatentGrid> {
    let mut out = dst.clone();
    copy_paste_into(src, &mut out, pairs)?;
    Ok(out)
}

/// In-place form of [`copy_paste`]. Bounds are checked before anything is
/// written.
pub fn copy_paste_into(src: &LatentGrid, dst: &mut LatentGrid, pairs: &MappedPointSet) -> Result<()> {
    src.require_same_shape(dst, "copy-paste source and destination")?;
    let (w, h) = (src.width(), src.height());
    for p in &pairs.pairs {
        for q in [p.handle, p.target] {
            if q.x >= w || q.y >= h {
                return Err(Error::OutOfBounds {
                    x: q.x as i64,
                    y: q.y as i64,
                    width: w,
                    height: h,
                });
            }
        }
    }
    let plane = src.plane_len();
    let src_data = src.data();
    let dst_data = dst.data_mut();
    for c in 0..src.channels() as usize {
        let base = c * plane;
        for p in &pairs.pairs {
            let from = base + (p.handle.y * w + p.handle.x) as usize;
            let to = base + (p.target.y * w + p.target.x) as usize;
            dst_data[to] = src_data[from];
        }
    }
    Ok(())
}

/// Region pairs resolved onto the latent grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedEdit {
    pub mapping: MappedPointSet,
    /// Union of the handle regions at latent resolution.
    pub handle_mask: Mask,
    pub conflicts: Vec<Conflict>,
}

impl PreparedEdit {
    /// Maps `pairs` (image coordinates) onto a grid `factor` times smaller.
    pub fn from_region_pairs(pairs: &[RegionPair], factor: u32) -> Result<Self> {
        let Some(first) = pairs.first() else {
            return Err(Error::EmptyMapping);
        };
        let (iw, ih) = (first.handle.width(), first.handle.height());
        for pair in pairs {
            for r in [&pair.handle, &pair.target] {
                if (r.width(), r.height()) != (iw, ih) {
                    return Err(Error::ShapeMismatch(format!(
                        "region pair {} is on a {}x{} grid, expected {iw}x{ih}",
                        pair.index,
                        r.width(),
                        r.height()
                    )));
                }
            }
        }
        let (mapping, conflicts) = map_region_pairs(pairs, factor)?;
        let mut handle_mask = Mask::new(iw.div_ceil(factor), ih.div_ceil(factor));
        for pair in pairs {
            for p in pair.handle.downscale(factor)?.pixels() {
                handle_mask.set(p.x, p.y, true);
            }
        }
        Ok(Self {
            mapping,
            handle_mask,
            conflicts,
        })
    }

    /// Keeps the handle mask but replaces the mapping, e.g. by a subset.
    pub fn with_mapping(mut self, mapping: MappedPointSet) -> Self {
        self.mapping = mapping;
        self
    }
}

/// Everything an edit produced besides the image.
#[derive(Debug, Clone)]
pub struct EditSession {
    pub config: EditConfig,
    pub grid: SamplerGrid,
    /// Inversion latents `z_0 .. z_{t'}` keyed by timestep.
    pub trajectory: BTreeMap<u32, LatentGrid>,
    /// Edited latents keyed by timestep: at `t'` and every later grid step the
    /// value handed to the denoiser (after copy-paste), plus the final `z'_0`.
    pub edited: BTreeMap<u32, LatentGrid>,
    pub kv_cache: AttentionCache,
    pub mapping: MappedPointSet,
    pub handle_mask: Mask,
    /// Denoising timesteps at which copy-paste ran.
    pub cp_timesteps: Vec<u32>,
    pub conflicts: Vec<Conflict>,
    pub timings: StageTimings,
    pub warnings: Vec<String>,
}

impl EditSession {
    pub fn final_latent(&self) -> &LatentGrid {
        &self.edited[&0]
    }
}

#[derive(Debug, Clone)]
pub struct EditOutcome {
    pub image: ImageBuffer,
    pub session: EditSession,
}

static NULL_CLOCK: NullClock = NullClock;

/// A denoiser, a codec and a clock.
#[derive(Clone, Copy)]
pub struct Engine<'a> {
    pub backend: &'a dyn Denoiser,
    pub codec: &'a dyn LatentCodec,
    pub clock: &'a dyn Clock,
    pub family: ScheduleFamily,
}

fn at_step(stage: &'static str, timestep: u32) -> impl FnOnce(Error) -> Error {
    move |e| Error::Trajectory {
        stage,
        timestep,
        source: Box::new(e),
    }
}

impl<'a> Engine<'a> {
    pub fn new(backend: &'a dyn Denoiser, codec: &'a dyn LatentCodec) -> Self {
        Self {
            backend,
            codec,
            clock: &NULL_CLOCK,
            family: ScheduleFamily::SD15,
        }
    }

    pub fn with_clock(mut self, clock: &'a dyn Clock) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_family(mut self, family: ScheduleFamily) -> Self {
        self.family = family;
        self
    }

    pub fn schedule(&self, cfg: &EditConfig) -> Result<NoiseSchedule> {
        NoiseSchedule::new(self.family, cfg.total_trained_steps, cfg.eta)
    }

    /// Full edit from an image and region pairs in image coordinates.
    pub fn run_edit(&self, image: &ImageBuffer, pairs: &[RegionPair], prompt: &str, cfg: &EditConfig) -> Result<EditOutcome> {
        cfg.validate()?;
        let start = self.clock.now_ms();
        for pair in pairs {
            for r in [&pair.handle, &pair.target] {
                if (r.width(), r.height()) != (image.width(), image.height()) {
                    return Err(Error::ShapeMismatch(format!(
                        "region pair {} is on a {}x{} grid, image is {}x{}",
                        pair.index,
                        r.width(),
                        r.height(),
                        image.width(),
                        image.height()
                    )));
                }
            }
        }
        let prepared = PreparedEdit::from_region_pairs(pairs, self.codec.scale_factor())?;
        if prepared.mapping.is_empty() {
            return Err(Error::EmptyMapping);
        }
        let map_ms = self.clock.now_ms() - start;
        let mut outcome = self.run_edit_prepared(image, prepared, prompt, cfg)?;
        outcome.session.timings.map_ms = map_ms;
        outcome.session.timings.total_ms += map_ms;
        Ok(outcome)
    }

    /// Edit with an already prepared mapping (latent coordinates).
    pub fn run_edit_prepared(&self, image: &ImageBuffer, prepared: PreparedEdit, prompt: &str, cfg: &EditConfig) -> Result<EditOutcome> {
        let start = self.clock.now_ms();
        let z0 = self.codec.encode(image)?;
        let encode_ms = self.clock.now_ms() - start;
        let cond = self.backend.condition(prompt);
        let mut session = self.edit_latent(z0, prepared, &cond, cfg)?;
        let t0 = self.clock.now_ms();
        let image = self
            .codec
            .decode(session.final_latent(), image.width(), image.height())?;
        let decode_ms = self.clock.now_ms() - t0;
        session.timings.invert_ms += encode_ms;
        session.timings.decode_ms = decode_ms;
        session.timings.total_ms = self.clock.now_ms() - start;
        Ok(EditOutcome { image, session })
    }

    /// Inversion, blending and copy-paste denoising on a latent at `t = 0`.
    pub fn edit_latent(&self, z0: LatentGrid, prepared: PreparedEdit, cond: &Conditioning, cfg: &EditConfig) -> Result<EditSession> {
        cfg.validate()?;
        let grid = build_sampler_grid(cfg)?;
        let schedule = self.schedule(cfg)?;
        let noise = NoiseSource::new(cfg.seed);
        if (prepared.mapping.width, prepared.mapping.height) != (z0.width(), z0.height())
            || (prepared.handle_mask.width(), prepared.handle_mask.height()) != (z0.width(), z0.height())
        {
            return Err(Error::ShapeMismatch(format!(
                "mapping grid {}x{} does not match latent {}x{}",
                prepared.mapping.width,
                prepared.mapping.height,
                z0.width(),
                z0.height()
            )));
        }
        prepared.mapping.validate()?;
        let z0 = z0.with_timestep(0);

        let t_start = self.clock.now_ms();
        let (trajectory, kv_cache) = self.invert(z0, &grid, &schedule, &noise, cond, cfg.kv_swap)?;
        let invert_ms = self.clock.now_ms() - t_start;

        let z_top = &trajectory[&grid.invert_to()];
        let start = blend_handle(z_top, &prepared.handle_mask, cfg.blend_alpha, &noise)?;
        let cp_at = grid.copy_paste_timesteps(cfg.cp_mode);
        let (edited, cp_ms, denoise_ms) = self.denoise(
            start,
            &grid,
            &schedule,
            &noise,
            cond,
            cfg.kv_swap.then_some(&kv_cache),
            |t, z| {
                if cp_at.contains(&t) {
                    copy_paste_into(&trajectory[&t], z, &prepared.mapping)?;
                    Ok(true)
                } else {
                    Ok(false)
                }
            },
        )?;

        let mut warnings: Vec<String> = grid.warnings().to_vec();
        if !prepared.conflicts.is_empty() {
            warnings.push(format!(
                "{} target positions were written by more than one region pair; later pairs won",
                prepared.conflicts.len()
            ));
        }
        Ok(EditSession {
            config: cfg.clone(),
            cp_timesteps: cp_ms.0,
            timings: StageTimings {
                map_ms: 0.0,
                invert_ms,
                denoise_ms,
                cp_ms: cp_ms.1,
                decode_ms: 0.0,
                total_ms: invert_ms + denoise_ms + cp_ms.1,
            },
            grid,
            trajectory,
            edited,
            kv_cache,
            mapping: prepared.mapping,
            handle_mask: prepared.handle_mask,
            conflicts: prepared.conflicts,
            warnings,
        })
    }

    /// Runs the transition from 0 up to the grid's inversion timestep. The
    /// keys/values of the call made at `s` are stored under the timestep `t`
    /// that step produces, which is the timestep the denoising pass later
    /// reads them at.
    pub fn invert(
        &self,
        z0: LatentGrid,
        grid: &SamplerGrid,
        schedule: &NoiseSchedule,
        noise: &NoiseSource,
        cond: &Conditioning,
        capture_kv: bool,
    ) -> Result<(BTreeMap<u32, LatentGrid>, AttentionCache)> {
        let mut trajectory = BTreeMap::new();
        let mut cache = AttentionCache::new();
        let mut z = z0;
        trajectory.insert(0, z.clone());
        for (s, t) in grid.inversion_steps() {
            let out = self
                .backend
                .predict_noise(&z, s, cond, None, capture_kv)
                .map_err(at_step("inversion", s))?;
            z = transition(&z, t, &out.eps, schedule, noise).map_err(at_step("inversion", s))?;
            if let Some(kv) = out.kv {
                cache.insert(t, kv);
            }
            trajectory.insert(t, z.clone());
        }
        Ok((trajectory, cache))
    }

    /// Denoises `start` (at the grid's inversion timestep) down to 0.
    /// `before_step(t, z)` may modify the latent before each step and reports
    /// whether it did. Returns the edited trajectory,
    /// `(timesteps where before_step acted, its total time)` and the time
    /// spent in the denoising steps themselves.
    #[allow(clippy::too_many_arguments)]
    pub fn denoise(
        &self,
        start: LatentGrid,
        grid: &SamplerGrid,
        schedule: &NoiseSchedule,
        noise: &NoiseSource,
        cond: &Conditioning,
        kv: Option<&AttentionCache>,
        mut before_step: impl FnMut(u32, &mut LatentGrid) -> Result<bool>,
    ) -> Result<(BTreeMap<u32, LatentGrid>, (Vec<u32>, f64), f64)> {
        let mut edited = BTreeMap::new();
        let mut acted = Vec::new();
        let (mut hook_ms, mut step_ms) = (0.0, 0.0);
        let mut z = start;
        for (t, prev) in grid.denoising_steps() {
            let t0 = self.clock.now_ms();
            if before_step(t, &mut z).map_err(at_step("copy-paste", t))? {
                acted.push(t);
            }
            let t1 = self.clock.now_ms();
            hook_ms += t1 - t0;
            edited.insert(t, z.clone());
            let injected = match kv {
                Some(cache) => Some(cache.get(t).ok_or_else(|| {
                    at_step("denoising", t)(Error::Backend {
                        backend: self.backend.name().into(),
                        message: format!("no cached keys/values for timestep {t}"),
                    })
                })?),
                None => None,
            };
            let out = self
                .backend
                .predict_noise(&z, t, cond, injected, false)
                .map_err(at_step("denoising", t))?;
            z = transition(&z, prev, &out.eps, schedule, noise).map_err(at_step("denoising", t))?;
            step_ms += self.clock.now_ms() - t1;
        }
        edited.insert(0, z);
        Ok((edited, (acted, hook_ms), step_ms))
    }

    /// Denoises the unedited inverted latent with the session's cached
    /// keys/values and noise stream: the trajectory an edit with no
    /// blending and no copy-paste must reproduce.
    pub fn redenoise(&self, session: &EditSession, cond: &Conditioning) -> Result<BTreeMap<u32, LatentGrid>> {
        let cfg = &session.config;
        let schedule = self.schedule(cfg)?;
        let start = session.trajectory[&session.grid.invert_to()].clone();
        let (edited, _, _) = self.denoise(
            start,
            &session.grid,
            &schedule,
            &NoiseSource::new(cfg.seed),
            cond,
            cfg.kv_swap.then_some(&session.kv_cache),
            |_, _| Ok(false),
        )?;
        Ok(edited)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{
        codec::IdentityCodec,
        denoiser::{ConstantDenoiser, ToyDenoiser},
        grid::{CoordSpace, Point},
        mapping::MappedPair,
        region::Region,
        rng::Purpose,
    };
    use alloc::vec;

    fn latent(seed: u64) -> LatentGrid {
        let mut d = vec![0.0; 2 * 6 * 6];
        NoiseSource::new(seed).fill_normal(Purpose::Fixture, 3, &mut d);
        LatentGrid::new(2, 6, 6, 0, d).unwrap()
    }

    fn pairs(list: &[((u32, u32), (u32, u32))]) -> MappedPointSet {
        MappedPointSet {
            space: CoordSpace::Latent,
            width: 6,
            height: 6,
            pairs: list
                .iter()
                .map(|&(h, t)| MappedPair {
                    handle: h.into(),
                    target: t.into(),
                    pair_index: 0,
                })
                .collect(),
        }
    }

    #[test]
    fn copy_paste_examples() {
        let (src, dst) = (latent(1), latent(2));
        assert_eq!(copy_paste(&src, &dst, &pairs(&[])).unwrap(), dst);

        let out = copy_paste(&src, &dst, &pairs(&[((1, 1), (3, 3))])).unwrap();
        for c in 0..2 {
            for y in 0..6 {
                for x in 0..6 {
                    let expect = if (x, y) == (3, 3) {
                        src.get(c, 1, 1)
                    } else {
                        dst.get(c, y, x)
                    };
                    assert_eq!(out.get(c, y, x), expect);
                }
            }
        }

        let identity: Vec<_> = (0..6)
            .flat_map(|y| (0..6).map(move |x| ((x, y), (x, y))))
            .collect();
        assert_eq!(copy_paste(&dst, &dst, &pairs(&identity)).unwrap(), dst);
    }

    #[test]
    fn copy_paste_rejects_out_of_bounds() {
        let (src, dst) = (latent(1), latent(2));
        let err = copy_paste(&src, &dst, &pairs(&[((1, 1), (6, 0))])).unwrap_err();
        assert!(matches!(err, Error::OutOfBounds { x: 6, .. }));
    }

    fn square_pair(grid: u32, at: (u32, u32), to: (u32, u32), side: u32) -> RegionPair {
        let sq = |(x0, y0): (u32, u32)| {
            Region::from_pixels(
                (y0..y0 + side).flat_map(|y| (x0..x0 + side).map(move |x| Point::new(x, y))),
                grid,
                grid,
            )
            .unwrap()
        };
        RegionPair::new(sq(at), sq(to), 0)
    }

    fn image(seed: u64) -> ImageBuffer {
        let n = 16 * 16 * 3;
        let data = (0..n)
            .map(|i| NoiseSource::new(seed).uniform(Purpose::Fixture, 0, i as u64) as f32)
            .collect();
        ImageBuffer::new(16, 16, 3, data).unwrap()
    }

    #[test]
    fn identity_edit_reproduces_the_image() {
        let eps = ConstantDenoiser::Value(0.3);
        let engine = Engine::new(&eps, &IdentityCodec);
        let cfg = EditConfig {
            blend_alpha: 0.0,
            eta: 0.0,
            ..EditConfig::default()
        };
        let img = image(4);
        let out = engine
            .run_edit(&img, &[square_pair(16, (3, 3), (3, 3), 5)], "", &cfg)
            .unwrap();
        let max = out
            .image
            .data()
            .iter()
            .zip(img.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(max <= 1e-4, "{max}");
    }

    #[test]
    fn default_grid_pastes_at_seven_steps() {
        let schedule = NoiseSchedule::sd15(1000, 1.0).unwrap();
        let toy = ToyDenoiser::with_defaults(schedule);
        let engine = Engine::new(&toy, &IdentityCodec);
        let out = engine
            .run_edit(&image(5), &[square_pair(16, (2, 2), (8, 8), 4)], "", &EditConfig::default())
            .unwrap();
        assert_eq!(out.session.cp_timesteps, vec![500, 450, 400, 350, 300, 250, 200]);
        assert_eq!(out.session.trajectory.len(), 11);
        assert_eq!(out.session.kv_cache.len(), 10);
        assert_eq!(out.session.edited.len(), 11);
    }

    #[test]
    fn initial_only_pastes_once() {
        let toy = ToyDenoiser::with_defaults(NoiseSchedule::sd15(1000, 1.0).unwrap());
        let engine = Engine::new(&toy, &IdentityCodec);
        let cfg = EditConfig {
            cp_mode: crate::config::CpMode::InitialOnly,
            ..EditConfig::default()
        };
        let out = engine
            .run_edit(&image(5), &[square_pair(16, (2, 2), (8, 8), 4)], "", &cfg)
            .unwrap();
        assert_eq!(out.session.cp_timesteps, vec![500]);
    }

    #[test]
    fn empty_pair_list_is_rejected_before_inversion() {
        let engine = Engine::new(&crate::denoiser::ZeroDenoiser, &IdentityCodec);
        let err = engine
            .run_edit(&image(1), &[], "", &EditConfig::default())
            .unwrap_err();
        assert_eq!(err, Error::EmptyMapping);
    }

    struct Failing;

    impl Denoiser for Failing {
        fn name(&self) -> &str {
            "failing"
        }

        fn condition(&self, prompt: &str) -> Conditioning {
            crate::denoiser::ZeroDenoiser.condition(prompt)
        }

        fn predict_noise(&self, z: &LatentGrid, t: u32, c: &Conditioning, kv: Option<&crate::KvFragment>, cap: bool) -> Result<crate::DenoiserOutput> {
            if t == 300 {
                Err(Error::Backend {
                    backend: "failing".into(),
                    message: "device lost".into(),
                })
            } else {
                crate::denoiser::ZeroDenoiser.predict_noise(z, t, c, kv, cap)
            }
        }
    }

    #[test]
    fn backend_failure_names_the_timestep() {
        let engine = Engine::new(&Failing, &IdentityCodec);
        let err = engine
            .run_edit(&image(1), &[square_pair(16, (2, 2), (8, 8), 4)], "", &EditConfig::default())
            .unwrap_err();
        match err {
            Error::Trajectory {
                stage, timestep, ..
            } => assert_eq!((stage, timestep), ("inversion", 300)),
            other => panic!("{other:?}"),
        }
    }
}
