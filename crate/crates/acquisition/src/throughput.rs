//! Measured data rates against the declared ones and the disk budget.

use serde::{Deserialize, Serialize};

use crate::descriptor::SensorDescriptor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorThroughput {
    pub id: String,
    pub bytes: u64,
    pub declared_bps: f64,
    pub measured_bps: f64,
    /// `|measured - declared| / declared`.
    pub relative_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThroughputReport {
    pub duration_us: u64,
    pub sensors: Vec<SensorThroughput>,
    pub declared_total_bps: f64,
    pub measured_total_bps: f64,
    pub budget_bps: f64,
    pub within_budget: bool,
}

/// Rates over `duration_us` of acquisition. A zero-length run measures zero.
pub fn throughput_report(written: &[(SensorDescriptor, u64)], duration_us: u64, budget_bps: f64) -> ThroughputReport {
    let secs = duration_us as f64 / 1e6;
    let sensors: Vec<SensorThroughput> = written
        .iter()
        .map(|(d, bytes)| {
            let declared = d.declared_rate();
            let measured = if duration_us == 0 { 0.0 } else { *bytes as f64 / secs };
            SensorThroughput {
                id: d.id.clone(),
                bytes: *bytes,
                declared_bps: declared,
                measured_bps: measured,
                relative_error: (measured - declared).abs() / declared,
            }
        })
        .collect();
    let measured_total: f64 = sensors.iter().map(|s| s.measured_bps).sum();
    ThroughputReport {
        duration_us,
        declared_total_bps: sensors.iter().map(|s| s.declared_bps).sum(),
        measured_total_bps: measured_total,
        budget_bps,
        within_budget: measured_total <= budget_bps,
        sensors,
    }
}

impl ThroughputReport {
    pub fn render(&self) -> String {
        let mut out = format!("{:<16}{:>16}{:>16}{:>10}\n", "sensor", "declared B/s", "measured B/s", "error");
        for s in &self.sensors {
            out += &format!(
                "{:<16}{:>16.0}{:>16.0}{:>9.3}%\n",
                s.id,
                s.declared_bps,
                s.measured_bps,
                100.0 * s.relative_error
            );
        }
        out += &format!(
            "{:<16}{:>16.0}{:>16.0}   budget {:.0} B/s ({})\n",
            "total",
            self.declared_total_bps,
            self.measured_total_bps,
            self.budget_bps,
            if self.within_budget { "within" } else { "EXCEEDED" }
        );
        out
    }
}
