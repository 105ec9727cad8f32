//! TOML configuration holding every tunable constant of the pipelines and
//! the acquisition manager. Missing tables and keys take their defaults.

use std::path::Path;

use gate_acquisition::ManagerConfig;
use gate_core::pantograph::PantographConfig;
use gate_core::thermal::ThermalConfig;
use gate_core::wagonid::SegmentationParams;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateConfig {
    pub segmentation: SegmentationParams,
    pub thermal: ThermalConfig,
    pub pantograph: PantographConfig,
    pub manager: ManagerConfig,
}

impl GateConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let c: Self = toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Validation(format!("config {}: {e}", p.display())))?;
                Self::parse(&text)
            }
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.segmentation.validate().map_err(CliError::invalid)?;
        self.pantograph.validate().map_err(CliError::invalid)?;
        let t = &self.thermal;
        if t.block_w == 0 || t.block_h == 0 || !(t.cross_tol >= 0.0) || !t.alarm_threshold.is_finite() {
            return Err(CliError::Validation("thermal: blocks must be nonempty and tolerances finite".into()));
        }
        let m = &self.manager;
        if m.heartbeat_period_us == 0 || m.stale_after_beats == 0 || !(m.disk_budget_bps > 0.0) {
            return Err(CliError::Validation("manager: periods and budget must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_is_default() {
        assert_eq!(GateConfig::parse("").unwrap(), GateConfig::default());
    }

    #[test]
    fn partial_tables_override() {
        let c = GateConfig::parse("[thermal]\nalarm_threshold = 120.0\n[segmentation]\nd = 256\ns = 64\n").unwrap();
        assert_eq!(c.thermal.alarm_threshold, 120.0);
        assert_eq!(c.thermal.block_w, 16);
        assert_eq!((c.segmentation.d, c.segmentation.s), (256, 64));
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(matches!(GateConfig::parse("[thermal]\nbogus = 1\n"), Err(CliError::Validation(_))));
        assert!(matches!(GateConfig::parse("[segmentation]\ns = 0\n"), Err(CliError::Validation(_))));
        assert!(matches!(GateConfig::parse("[pantograph]\nratio = 1.5\n"), Err(CliError::Validation(_))));
    }
}
