//! Time sources shared by the cache, the latency-injected store, and the router.
//!
//! Two modes exist. The real clock reads the monotonic wall clock and sleeps
//! for real. The virtual clock only moves when the router advances it, and
//! every timed operation is charged a modeled cost instead of measured wall
//! time, so a whole benchmark session is reproducible bit for bit.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

/// A point in session time, in microseconds since the clock's origin.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct Timestamp(u64);

impl Timestamp {
    pub const ZERO: Timestamp = Timestamp(0);

    pub fn from_micros(us: u64) -> Self {
        Timestamp(us)
    }

    pub fn from_secs_f64(secs: f64) -> Self {
        Timestamp(secs_to_micros(secs))
    }

    pub fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn plus_secs(self, secs: f64) -> Self {
        Timestamp(self.0.saturating_add(secs_to_micros(secs)))
    }

    /// Seconds elapsed from `earlier` to `self`; zero if `earlier` is later.
    pub fn secs_since(self, earlier: Timestamp) -> f64 {
        self.0.saturating_sub(earlier.0) as f64 / 1e6
    }
}

fn secs_to_micros(secs: f64) -> u64 {
    if secs <= 0.0 || !secs.is_finite() {
        0
    } else {
        (secs * 1e6).round() as u64
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClockMode {
    Real,
    #[default]
    Virtual,
}

/// Deterministic compute-cost estimates charged under the virtual clock.
///
/// Flat inner-product scans dominate lookup cost, so a scan over `n`
/// vectors of dimension `d` is charged `overhead + n * d * ns_per_component`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostModel {
    pub lookup_overhead_ms: f64,
    pub ns_per_component: f64,
    pub embed_ms: f64,
    pub respond_ms: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            lookup_overhead_ms: 0.02,
            ns_per_component: 0.25,
            embed_ms: 0.05,
            respond_ms: 0.0,
        }
    }
}

impl CostModel {
    pub fn scan_ms(&self, vectors: usize, dim: usize) -> f64 {
        self.lookup_overhead_ms + (vectors as f64) * (dim as f64) * self.ns_per_component * 1e-6
    }
}

#[derive(Debug)]
pub struct Clock {
    mode: ClockMode,
    origin: Instant,
    virtual_now: AtomicU64,
}

impl Clock {
    pub fn new(mode: ClockMode) -> Self {
        Self {
            mode,
            origin: Instant::now(),
            virtual_now: AtomicU64::new(0),
        }
    }

    pub fn real() -> Self {
        Self::new(ClockMode::Real)
    }

    pub fn virtual_at(start: Timestamp) -> Self {
        let clock = Self::new(ClockMode::Virtual);
        clock.virtual_now.store(start.as_micros(), Ordering::SeqCst);
        clock
    }

    pub fn mode(&self) -> ClockMode {
        self.mode
    }

    pub fn is_virtual(&self) -> bool {
        self.mode == ClockMode::Virtual
    }

    pub fn now(&self) -> Timestamp {
        match self.mode {
            ClockMode::Real => Timestamp(self.origin.elapsed().as_micros() as u64),
            ClockMode::Virtual => Timestamp(self.virtual_now.load(Ordering::SeqCst)),
        }
    }

    /// Moves session time forward: instantly under the virtual clock, by
    /// sleeping under the real one.
    pub fn advance(&self, secs: f64) {
        match self.mode {
            ClockMode::Real => {
                if secs > 0.0 && secs.is_finite() {
                    std::thread::sleep(Duration::from_secs_f64(secs));
                }
            }
            ClockMode::Virtual => {
                self.virtual_now
                    .fetch_add(secs_to_micros(secs), Ordering::SeqCst);
            }
        }
    }

    /// Blocks for an injected delay. A no-op under the virtual clock; the
    /// caller charges the delay to its latency figure instead.
    pub fn pause(&self, ms: f64) {
        if self.mode == ClockMode::Real && ms > 0.0 && ms.is_finite() {
            std::thread::sleep(Duration::from_secs_f64(ms / 1e3));
        }
    }

    /// Runs `work` and returns its latency in milliseconds: measured wall
    /// time under the real clock, `modeled_ms` under the virtual clock.
    pub fn timed<T>(&self, modeled_ms: f64, work: impl FnOnce() -> T) -> (T, f64) {
        match self.mode {
            ClockMode::Real => {
                let start = Instant::now();
                let out = work();
                (out, start.elapsed().as_secs_f64() * 1e3)
            }
            ClockMode::Virtual => (work(), modeled_ms),
        }
    }
}
