use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SensorKind {
    MatrixVisual,
    LineVisual,
    LineThermal,
}

impl SensorKind {
    /// Kind-specific primitives a sensor of this kind may declare.
    pub fn allowed_primitives(self) -> &'static [&'static str] {
        match self {
            SensorKind::LineThermal => &["focus"],
            SensorKind::MatrixVisual | SensorKind::LineVisual => &[],
        }
    }
}

/// Bytes on the wire per line-visual line: 4096 one-byte pixels plus a
/// 228-byte frame header (sequence, timestamp, encoder tick, padding).
pub const LINE_VISUAL_WIRE_BYTES: usize = 4324;
pub const LINE_VISUAL_HEADER_BYTES: usize = LINE_VISUAL_WIRE_BYTES - 4096;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorDescriptor {
    pub id: String,
    pub kind: SensorKind,
    /// Samples (frames or lines) per second.
    pub rate_hz: f64,
    pub width: usize,
    pub height: usize,
    /// Effective bytes per pixel on the wire, framing included.
    pub bytes_per_sample: f64,
}

impl SensorDescriptor {
    /// `rate * width * height * bytes_per_sample`.
    pub fn declared_rate(&self) -> f64 {
        self.rate_hz * (self.width * self.height) as f64 * self.bytes_per_sample
    }

    /// Wire bytes of one sample.
    pub fn sample_bytes(&self) -> usize {
        ((self.width * self.height) as f64 * self.bytes_per_sample).round() as usize
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.id.is_empty() || self.id.len() > 64 || !self.id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
            return Err(format!("invalid sensor id `{}`", self.id));
        }
        if !(self.rate_hz > 0.0 && self.rate_hz.is_finite()) || self.width == 0 || self.height == 0 {
            return Err("rate and resolution must be positive".into());
        }
        if !(self.bytes_per_sample >= 1.0 && self.bytes_per_sample.is_finite()) {
            return Err("bytes_per_sample must be at least 1".into());
        }
        Ok(())
    }

    pub fn matrix(id: &str) -> Self {
        Self {
            id: id.into(),
            kind: SensorKind::MatrixVisual,
            rate_hz: 300.0,
            width: 640,
            height: 480,
            bytes_per_sample: 1.0,
        }
    }

    pub fn line_visual(id: &str) -> Self {
        Self {
            id: id.into(),
            kind: SensorKind::LineVisual,
            rate_hz: 18_500.0,
            width: 4096,
            height: 1,
            bytes_per_sample: LINE_VISUAL_WIRE_BYTES as f64 / 4096.0,
        }
    }

    pub fn line_thermal(id: &str) -> Self {
        Self {
            id: id.into(),
            kind: SensorKind::LineThermal,
            rate_hz: 512.0,
            width: 256,
            height: 1,
            bytes_per_sample: 1.0,
        }
    }
}

/// The five-camera portal: one frontal matrix camera, two side line cameras
/// and two line thermal cameras.
pub fn portal_fleet() -> Vec<(SensorDescriptor, Vec<String>)> {
    vec![
        (SensorDescriptor::matrix("frontal"), vec![]),
        (SensorDescriptor::line_visual("side-low"), vec![]),
        (SensorDescriptor::line_visual("side-high"), vec![]),
        (SensorDescriptor::line_thermal("thermal-left"), vec!["focus".into()]),
        (SensorDescriptor::line_thermal("thermal-right"), vec!["focus".into()]),
    ]
}
