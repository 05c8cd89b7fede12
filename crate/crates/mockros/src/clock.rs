use std::time::{Duration, Instant};

use holoviz_core::Stamp;

/// Simulated time running `scale` times faster than the wall clock from `base`.
#[derive(Debug, Clone, Copy)]
pub struct SimClock {
    origin: Instant,
    base: Stamp,
    scale: f64,
}

impl SimClock {
    pub fn new(base: Stamp, scale: f64) -> Self {
        assert!(scale > 0.0 && scale.is_finite(), "time scale must be positive");
        Self {
            origin: Instant::now(),
            base,
            scale,
        }
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Simulated seconds since start.
    pub fn elapsed(&self) -> f64 {
        self.origin.elapsed().as_secs_f64() * self.scale
    }

    pub fn now(&self) -> Stamp {
        Stamp::from_nanos(self.base.as_nanos() + (self.elapsed() * 1e9) as u64)
    }

    /// Wall time that `sim` seconds of simulated time take.
    pub fn wall(&self, sim: f64) -> Duration {
        Duration::from_secs_f64((sim / self.scale).max(0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaled_time_runs_faster() {
        let c = SimClock::new(Stamp::new(100, 0), 10.0);
        std::thread::sleep(Duration::from_millis(20));
        let e = c.elapsed();
        assert!((0.2..2.0).contains(&e), "{e}");
        assert!(c.now() >= Stamp::new(100, 200_000_000));
        assert_eq!(c.wall(1.0), Duration::from_millis(100));
    }
}
