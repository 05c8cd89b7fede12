//! ROS-style timestamps.

use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Deserializer, Serialize};

const NANOS_PER_SEC: u64 = 1_000_000_000;

/// Seconds and nanoseconds since an arbitrary epoch, serialized as `{"secs":..,"nsecs":..}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize)]
pub struct Stamp {
    pub secs: u32,
    pub nsecs: u32,
}

impl Stamp {
    pub const ZERO: Stamp = Stamp { secs: 0, nsecs: 0 };

    pub fn new(secs: u32, nsecs: u32) -> Self {
        Self::from_nanos(secs as u64 * NANOS_PER_SEC + nsecs as u64)
    }

    pub fn from_nanos(nanos: u64) -> Self {
        let secs = (nanos / NANOS_PER_SEC).min(u32::MAX as u64) as u32;
        Self {
            secs,
            nsecs: (nanos % NANOS_PER_SEC) as u32,
        }
    }

    /// Negative and non-finite inputs clamp to zero.
    pub fn from_secs_f64(secs: f64) -> Self {
        if !secs.is_finite() || secs <= 0.0 {
            return Self::ZERO;
        }
        Self::from_nanos((secs * NANOS_PER_SEC as f64).round() as u64)
    }

    pub fn as_nanos(&self) -> u64 {
        self.secs as u64 * NANOS_PER_SEC + self.nsecs as u64
    }

    pub fn as_secs_f64(&self) -> f64 {
        self.secs as f64 + self.nsecs as f64 * 1e-9
    }

    pub fn saturating_sub(&self, d: Duration) -> Stamp {
        Self::from_nanos(self.as_nanos().saturating_sub(d.as_nanos() as u64))
    }

    pub fn add(&self, d: Duration) -> Stamp {
        Self::from_nanos(self.as_nanos().saturating_add(d.as_nanos() as u64))
    }

    /// Absolute difference.
    pub fn abs_diff(&self, other: &Stamp) -> Duration {
        Duration::from_nanos(self.as_nanos().abs_diff(other.as_nanos()))
    }
}

impl fmt::Display for Stamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:09}", self.secs, self.nsecs)
    }
}

impl<'de> Deserialize<'de> for Stamp {
    /// Accepts the ROS1 `{secs, nsecs}` layout and the ROS2 `{sec, nanosec}` layout.
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            #[serde(alias = "sec")]
            secs: i64,
            #[serde(alias = "nanosec")]
            nsecs: i64,
        }
        let raw = Raw::deserialize(d)?;
        if raw.secs < 0 || raw.nsecs < 0 || raw.secs > u32::MAX as i64 {
            return Err(serde::de::Error::custom("timestamp out of range"));
        }
        Ok(Stamp::from_nanos(raw.secs as u64 * NANOS_PER_SEC + raw.nsecs as u64))
    }
}
