//! Mapping from passage time to a column or frame index in each stream.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StreamRole {
    Frontal,
    ThermalLeft,
    ThermalRight,
    SideLow,
    SideHigh,
}

impl StreamRole {
    pub const ALL: [StreamRole; 5] = [
        StreamRole::Frontal,
        StreamRole::ThermalLeft,
        StreamRole::ThermalRight,
        StreamRole::SideLow,
        StreamRole::SideHigh,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StreamRole::Frontal => "frontal",
            StreamRole::ThermalLeft => "thermal-left",
            StreamRole::ThermalRight => "thermal-right",
            StreamRole::SideLow => "side-low",
            StreamRole::SideHigh => "side-high",
        }
    }
}

impl fmt::Display for StreamRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StreamRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StreamRole::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::UnknownRole(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamTiming {
    pub start_time_us: u64,
    /// Samples (columns, lines or frames) per second.
    pub rate: f64,
    /// Number of samples in the stream.
    pub extent: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SyncModel {
    pub streams: BTreeMap<StreamRole, StreamTiming>,
}

impl SyncModel {
    pub fn insert(&mut self, role: StreamRole, timing: StreamTiming) -> Result<()> {
        if !(timing.rate > 0.0 && timing.rate.is_finite()) {
            return Err(Error::InvalidParam {
                name: "rate",
                reason: format!("{} rate must be positive, got {}", role, timing.rate),
            });
        }
        self.streams.insert(role, timing);
        Ok(())
    }

    /// `floor((t - start) * rate)` on integer microseconds, clamped to
    /// `[0, extent - 1]`.
    pub fn time_to_position(&self, role: StreamRole, t_us: u64) -> Result<u64> {
        let s = self
            .streams
            .get(&role)
            .ok_or_else(|| Error::UnknownRole(role.to_string()))?;
        let dt = t_us.saturating_sub(s.start_time_us);
        let idx = (dt as f64 * s.rate / 1e6).floor() as u64;
        Ok(idx.min(s.extent.saturating_sub(1)))
    }

    /// Seconds are rounded to the nearest microsecond first.
    pub fn time_to_position_secs(&self, role: StreamRole, t: f64) -> Result<u64> {
        self.time_to_position(role, (t.max(0.0) * 1e6).round() as u64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn model() -> SyncModel {
        let mut m = SyncModel::default();
        m.insert(StreamRole::SideLow, StreamTiming { start_time_us: 2_000_000, rate: 18_500.0, extent: 185_000 }).unwrap();
        m.insert(StreamRole::Frontal, StreamTiming { start_time_us: 1_990_000, rate: 300.0, extent: 3000 }).unwrap();
        m
    }

    #[test]
    fn rate_arithmetic() {
        let m = model();
        assert_eq!(m.time_to_position(StreamRole::SideLow, 2_000_000).unwrap(), 0);
        assert_eq!(m.time_to_position(StreamRole::SideLow, 3_000_000).unwrap(), 18_500);
        assert_eq!(m.time_to_position(StreamRole::Frontal, 1_990_000 + 500_000).unwrap(), 150);
        assert_eq!(m.time_to_position_secs(StreamRole::Frontal, 2.49).unwrap(), 150);
    }

    #[test]
    fn clamps_and_rejects() {
        let m = model();
        assert_eq!(m.time_to_position(StreamRole::SideLow, 0).unwrap(), 0);
        assert_eq!(m.time_to_position(StreamRole::SideLow, u64::MAX / 4).unwrap(), 184_999);
        assert!(matches!(m.time_to_position(StreamRole::ThermalLeft, 0), Err(Error::UnknownRole(_))));
        let mut bad = SyncModel::default();
        assert!(bad.insert(StreamRole::Frontal, StreamTiming { start_time_us: 0, rate: 0.0, extent: 1 }).is_err());
        assert_eq!("thermal-right".parse::<StreamRole>().unwrap(), StreamRole::ThermalRight);
        assert!("thermal".parse::<StreamRole>().is_err());
    }

    proptest! {
        #[test]
        fn monotone_in_time(a in 0u64..20_000_000, b in 0u64..20_000_000, rate in 1.0f64..50_000.0) {
            let mut m = SyncModel::default();
            m.insert(StreamRole::SideHigh, StreamTiming { start_time_us: 1_000_000, rate, extent: 1_000_000 }).unwrap();
            let (lo, hi) = (a.min(b), a.max(b));
            prop_assert!(m.time_to_position(StreamRole::SideHigh, lo).unwrap() <= m.time_to_position(StreamRole::SideHigh, hi).unwrap());
        }
    }
}
