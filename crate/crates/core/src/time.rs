//! Wall-clock access for stage timings.

/// Monotonic clock reading in milliseconds from an arbitrary origin.
pub trait Clock: Send + Sync {
    fn now_ms(&self) -> f64;
}

/// Clock that never advances; all timings read zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct NullClock;

impl Clock for NullClock {
    fn now_ms(&self) -> f64 {
        0.0
    }
}

#[cfg(feature = "std")]
pub use self::system::SystemClock;

#[cfg(feature = "std")]
mod system {
    use std::time::Instant;

    /// [`Instant`]-backed clock.
    #[derive(Debug, Clone, Copy)]
    pub struct SystemClock {
        origin: Instant,
    }

    impl Default for SystemClock {
        fn default() -> Self {
            Self {
                origin: Instant::now(),
            }
        }
    }

    impl super::Clock for SystemClock {
        fn now_ms(&self) -> f64 {
            self.origin.elapsed().as_secs_f64() * 1e3
        }
    }
}

/// Per-stage durations of one edit, in milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StageTimings {
    pub map_ms: f64,
    /// Encoding plus inversion.
    pub invert_ms: f64,
    /// Denoising, excluding copy-paste.
    pub denoise_ms: f64,
    pub cp_ms: f64,
    pub decode_ms: f64,
    pub total_ms: f64,
}
