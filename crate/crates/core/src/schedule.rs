//! Noise schedule, sampler grid, the DDIM/DDPM transition and handle blending.

use alloc::{format, string::String, vec, vec::Vec};

use crate::{
    config::EditConfig,
    error::{Error, Result},
    grid::{LatentGrid, Mask},
    rng::{NoiseSource, Purpose},
};

/// How the cumulative signal rate is generated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleFamily {
    /// Betas linear in sqrt-space between the two endpoints (Stable
    /// Diffusion 1.x uses 0.00085..0.012).
    ScaledLinear { beta_start: f64, beta_end: f64 },
    /// `alpha_bar` itself linear from 1 at t = 0 down to `min` at `T_max`.
    LinearAlphaBar { min: f64 },
}

impl ScheduleFamily {
    pub const SD15: ScheduleFamily = ScheduleFamily::ScaledLinear {
        beta_start: 0.00085,
        beta_end: 0.012,
    };
}

/// `alpha_bar_t` for `t in 0..=T_max` with `alpha_bar_0 = 1`, plus `eta`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    alpha_bar: Vec<f64>,
    family: ScheduleFamily,
    eta: f64,
}

impl NoiseSchedule {
    pub fn new(family: ScheduleFamily, total_steps: u32, eta: f64) -> Result<Self> {
        if total_steps == 0 {
            return Err(Error::InvalidConfig("schedule needs at least one step".into()));
        }
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(Error::InvalidConfig(format!("eta {eta} must be >= 0")));
        }
        let n = total_steps as usize;
        let mut alpha_bar = Vec::with_capacity(n + 1);
        alpha_bar.push(1.0);
        match family {
            ScheduleFamily::ScaledLinear {
                beta_start,
                beta_end,
            } => {
                let (a, b) = (libm::sqrt(beta_start), libm::sqrt(beta_end));
                let mut acc = 1.0;
                for i in 0..n {
                    let frac = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
                    let root = a + (b - a) * frac;
                    acc *= 1.0 - root * root;
                    alpha_bar.push(acc);
                }
            }
            ScheduleFamily::LinearAlphaBar { min } => {
                for t in 1..=n {
                    alpha_bar.push(1.0 - (1.0 - min) * t as f64 / n as f64);
                }
            }
        }
        let monotone = alpha_bar.windows(2).all(|w| w[1] < w[0]);
        if !monotone || alpha_bar.iter().any(|a| !(*a > 0.0 && *a <= 1.0)) {
            return Err(Error::InvalidConfig(
                "alpha_bar must be strictly decreasing within (0, 1]".into(),
            ));
        }
        Ok(Self {
            alpha_bar,
            family,
            eta,
        })
    }

    /// Stable Diffusion 1.5 schedule over `total_steps`.
    pub fn sd15(total_steps: u32, eta: f64) -> Result<Self> {
        Self::new(ScheduleFamily::SD15, total_steps, eta)
    }

    pub fn family(&self) -> ScheduleFamily {
        self.family
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn total_steps(&self) -> u32 {
        (self.alpha_bar.len() - 1) as u32
    }

    pub fn alpha_bar(&self, t: u32) -> f64 {
        self.alpha_bar[t as usize]
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    /// Noise scale of the step `s -> t`.
    ///
    /// Denoising steps (`s > t`) use
    /// `eta * sqrt((1 - a_t) / (1 - a_s)) * sqrt(1 - a_s / a_t)`; an inversion
    /// step uses the value of the denoising step it undoes.
    pub fn sigma(&self, s: u32, t: u32) -> f64 {
        if self.eta == 0.0 || s == t {
            return 0.0;
        }
        let (noisy, clean) = if s > t { (s, t) } else { (t, s) };
        let (a_noisy, a_clean) = (self.alpha_bar(noisy), self.alpha_bar(clean));
        self.eta * libm::sqrt((1.0 - a_clean) / (1.0 - a_noisy)) * libm::sqrt(1.0 - a_noisy / a_clean)
    }

    fn check_timestep(&self, t: u32) -> Result<()> {
        if t > self.total_steps() {
            Err(Error::InvalidValue(format!(
                "timestep {t} outside [0, {}]",
                self.total_steps()
            )))
        } else {
            Ok(())
        }
    }
}

/// One step of the transition from `z_s` (at `z_s.timestep()`) to timestep `t`:
///
/// `z_t = sqrt(a_t) (z_s - sqrt(1 - a_s) eps) / sqrt(a_s) + sqrt(1 - a_t - sigma^2) eps + sigma w`
///
/// Works in both directions. `w` is drawn from `noise` only when `sigma > 0`.
pub fn transition(
    z_s: &LatentGrid,
    t: u32,
    eps: &LatentGrid,
    schedule: &NoiseSchedule,
    noise: &NoiseSource,
) -> Result<LatentGrid> {
    let s = z_s.timestep();
    schedule.check_timestep(s)?;
    schedule.check_timestep(t)?;
    z_s.require_same_shape(eps, "eps must match the latent")?;
    if s == t && schedule.eta() == 0.0 {
        return Ok(z_s.clone());
    }
    let (a_s, a_t) = (schedule.alpha_bar(s), schedule.alpha_bar(t));
    let sigma = schedule.sigma(s, t);
    let residual = 1.0 - a_t - sigma * sigma;
    if residual < -1e-12 {
        return Err(Error::ScheduleInconsistency { s, t, residual });
    }
    let direction = libm::sqrt(residual.max(0.0));
    let scale = libm::sqrt(a_t) / libm::sqrt(a_s);
    let noise_in = libm::sqrt(1.0 - a_s);

    let mut out = z_s.clone();
    for (o, e) in out.data_mut().iter_mut().zip(eps.data()) {
        *o = scale * (*o - noise_in * e) + direction * e;
    }
    if sigma > 0.0 {
        let purpose = if s < t {
            Purpose::Inversion
        } else {
            Purpose::Denoising
        };
        let mut w = vec![0.0; out.len()];
        noise.fill_normal(purpose, s, &mut w);
        for (o, w) in out.data_mut().iter_mut().zip(&w) {
            *o += sigma * w;
        }
    }
    out.set_timestep(t);
    Ok(out)
}

/// Resamples the masked positions:
/// `(1 - M) z + M (sqrt(1 - alpha^2) z + alpha eps)` with unit Gaussian `eps`
/// drawn from the blend stream at `z.timestep()`.
pub fn blend_handle(z: &LatentGrid, mask: &Mask, alpha: f64, noise: &NoiseSource) -> Result<LatentGrid> {
    if (mask.width(), mask.height()) != (z.width(), z.height()) {
        return Err(Error::ShapeMismatch(format!(
            "mask {}x{} vs latent {}x{}",
            mask.width(),
            mask.height(),
            z.width(),
            z.height()
        )));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidValue(format!("blend alpha {alpha} not in [0, 1]")));
    }
    let mut out = z.clone();
    if alpha == 0.0 {
        return Ok(out);
    }
    let keep = libm::sqrt(1.0 - alpha * alpha);
    let plane = z.plane_len();
    let timestep = z.timestep();
    let data = out.data_mut();
    for (i, _) in mask.bits().iter().enumerate().filter(|(_, b)| **b) {
        for c in 0..z.channels() as usize {
            let idx = c * plane + i;
            let e = noise.normal(Purpose::Blend, timestep, idx as u64);
            data[idx] = keep * data[idx] + alpha * e;
        }
    }
    Ok(out)
}

/// Sampler timesteps in increasing order plus the snapped inversion and
/// copy-paste stop timesteps.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerGrid {
    timesteps: Vec<u32>,
    invert_to: u32,
    cp_stop: u32,
    warnings: Vec<String>,
}

impl SamplerGrid {
    pub fn timesteps(&self) -> &[u32] {
        &self.timesteps
    }

    pub fn invert_to(&self) -> u32 {
        self.invert_to
    }

    pub fn cp_stop(&self) -> u32 {
        self.cp_stop
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// `(s, t)` steps from 0 up to the inversion timestep.
    pub fn inversion_steps(&self) -> Vec<(u32, u32)> {
        let mut prev = 0;
        let mut steps = Vec::new();
        for &t in self.timesteps.iter().take_while(|&&t| t <= self.invert_to) {
            steps.push((prev, t));
            prev = t;
        }
        steps
    }

    /// `(t, t_prev)` steps from the inversion timestep down to 0.
    pub fn denoising_steps(&self) -> Vec<(u32, u32)> {
        let mut steps: Vec<(u32, u32)> = self
            .inversion_steps()
            .into_iter()
            .map(|(s, t)| (t, s))
            .collect();
        steps.reverse();
        steps
    }

    /// Grid timesteps at which copy-paste runs for `mode`.
    pub fn copy_paste_timesteps(&self, mode: crate::config::CpMode) -> Vec<u32> {
        match mode {
            crate::config::CpMode::MultiStep => self
                .denoising_steps()
                .into_iter()
                .map(|(t, _)| t)
                .filter(|&t| t >= self.cp_stop)
                .collect(),
            crate::config::CpMode::InitialOnly => vec![self.invert_to],
        }
    }
}

fn nearest(grid: &[u32], t: u32) -> usize {
    let mut best = 0;
    for (i, &g) in grid.iter().enumerate() {
        if g.abs_diff(t) < grid[best].abs_diff(t) {
            best = i;
        }
    }
    best
}

/// Uniform grid of `sampler_steps` timesteps ending at `T_max`, with the
/// inversion and stop timesteps snapped to their nearest grid points.
pub fn build_sampler_grid(cfg: &EditConfig) -> Result<SamplerGrid> {
    cfg.validate()?;
    let (total, steps) = (cfg.total_trained_steps as u64, cfg.sampler_steps as u64);
    let timesteps: Vec<u32> = (1..=steps)
        .map(|k| ((2 * k * total + steps) / (2 * steps)) as u32)
        .collect();
    let mut warnings = Vec::new();
    let invert_idx = nearest(&timesteps, cfg.invert_to);
    let invert_to = timesteps[invert_idx];
    let mut cp_stop = timesteps[nearest(&timesteps, cfg.cp_stop)];
    if cfg.cp_stop < cfg.invert_to && cp_stop >= invert_to {
        cp_stop = if invert_idx == 0 {
            0
        } else {
            timesteps[invert_idx - 1]
        };
        warnings.push(format!(
            "sampler grid too coarse to separate cp_stop {} from invert_to {}; cp_stop clamped to {cp_stop}",
            cfg.cp_stop, cfg.invert_to
        ));
    }
    Ok(SamplerGrid {
        timesteps,
        invert_to,
        cp_stop,
        warnings,
    })
}

/// One row of a schedule dump.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScheduleRow {
    pub t: u32,
    pub alpha_bar: f64,
    /// Noise scale of the denoising step leaving `t`.
    pub sigma: f64,
}

/// `(t, alpha_bar_t, sigma)` for every grid timestep.
pub fn schedule_dump(schedule: &NoiseSchedule, grid: &SamplerGrid) -> Vec<ScheduleRow> {
    let ts = grid.timesteps();
    ts.iter()
        .enumerate()
        .map(|(i, &t)| {
            let prev = if i == 0 { 0 } else { ts[i - 1] };
            ScheduleRow {
                t,
                alpha_bar: schedule.alpha_bar(t),
                sigma: schedule.sigma(t, prev),
            }
        })
        .collect()
}
