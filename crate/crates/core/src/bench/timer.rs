//! Wall-clock measurement with calibrated start/stop overhead.

use std::time::Instant;

/// Timer whose readings subtract the median cost of an empty start/stop pair.
#[derive(Debug, Clone, Copy)]
pub struct CalibratedTimer {
    overhead_ns: u64,
}

/// Measures the median cost of an empty measurement over at least 1000
/// start/stop pairs. Readings are floored at zero, so a timer can never
/// report negative durations.
pub fn calibrate_timer() -> CalibratedTimer {
    const SAMPLES: usize = 1000;
    let mut samples = Vec::with_capacity(SAMPLES);
    for _ in 0..SAMPLES {
        let start = Instant::now();
        let elapsed = start.elapsed();
        samples.push(elapsed.as_nanos() as u64);
    }
    samples.sort_unstable();
    CalibratedTimer {
        overhead_ns: samples[SAMPLES / 2],
    }
}

impl CalibratedTimer {
    pub fn overhead_ns(&self) -> u64 {
        self.overhead_ns
    }

    pub fn start(&self) -> RunningTimer {
        RunningTimer {
            overhead_ns: self.overhead_ns,
            start: Instant::now(),
        }
    }

    /// Times one closure call, overhead subtracted, floored at zero.
    pub fn time_ns<T>(&self, work: impl FnOnce() -> T) -> (u64, T) {
        let t = self.start();
        let out = work();
        (t.stop_ns(), out)
    }
}

pub struct RunningTimer {
    overhead_ns: u64,
    start: Instant,
}

impl RunningTimer {
    pub fn stop_ns(self) -> u64 {
        let raw = self.start.elapsed().as_nanos() as u64;
        raw.saturating_sub(self.overhead_ns)
    }
}

pub fn median_u64(samples: &mut [u64]) -> u64 {
    assert!(!samples.is_empty());
    samples.sort_unstable();
    samples[samples.len() / 2]
}
