//! Simulated cameras emitting wire-format samples against an injected clock.

use gate_core::imgcore::GrayImage;
use gate_core::synth::scenario::Passage;
use gate_core::thermal::{ThermalMosaic, T_MAX, T_MIN};
use serde::{Deserialize, Serialize};

use crate::descriptor::{SensorDescriptor, SensorKind, LINE_VISUAL_HEADER_BYTES};
use crate::lifecycle::Lifecycle;

/// Produces the wire bytes of sample `k`.
pub trait SampleSource: Send {
    fn fill(&self, k: u64, timestamp_us: u64, out: &mut Vec<u8>);
}

/// Nearest-neighbour resample of `src` to `w x h`.
fn resample(src: &GrayImage, w: usize, h: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let sy = y * src.height() / h;
        let row = src.row(sy);
        out.extend((0..w).map(|x| row[x * src.width() / w]));
    }
    out
}

/// Columns of a side mosaic stretched to the sensor's line length, behind a
/// fixed-size header; the mosaic repeats if the passage outlasts it.
pub struct LineSource {
    columns: Vec<Vec<u8>>,
}

impl LineSource {
    pub fn new(mosaic: &GrayImage, line_len: usize) -> Self {
        let columns = (0..mosaic.width())
            .map(|x| (0..line_len).map(|i| mosaic.get(x, i * mosaic.height() / line_len)).collect())
            .collect();
        Self { columns }
    }
}

impl SampleSource for LineSource {
    fn fill(&self, k: u64, timestamp_us: u64, out: &mut Vec<u8>) {
        out.clear();
        out.extend_from_slice(b"GLN1");
        out.extend_from_slice(&k.to_le_bytes());
        out.extend_from_slice(&timestamp_us.to_le_bytes());
        out.resize(LINE_VISUAL_HEADER_BYTES, 0);
        out.extend_from_slice(&self.columns[(k % self.columns.len() as u64) as usize]);
    }
}

/// Frames resampled to the sensor resolution, cycled.
pub struct FrameSource {
    frames: Vec<Vec<u8>>,
}

impl FrameSource {
    pub fn new(frames: &[GrayImage], w: usize, h: usize) -> Self {
        Self {
            frames: frames.iter().map(|f| resample(f, w, h)).collect(),
        }
    }
}

impl SampleSource for FrameSource {
    fn fill(&self, k: u64, _: u64, out: &mut Vec<u8>) {
        out.clear();
        out.extend_from_slice(&self.frames[(k % self.frames.len() as u64) as usize]);
    }
}

/// Thermal lines quantised to one byte over the sensor range.
pub struct ThermalSource {
    lines: Vec<Vec<u8>>,
}

impl ThermalSource {
    pub fn new(m: &ThermalMosaic, samples: usize) -> Self {
        let lines = (0..m.width)
            .map(|x| {
                (0..samples)
                    .map(|i| {
                        let t = m.get(x, i * m.height / samples);
                        ((t - T_MIN) / (T_MAX - T_MIN) * 255.0).round() as u8
                    })
                    .collect()
            })
            .collect();
        Self { lines }
    }
}

impl SampleSource for ThermalSource {
    fn fill(&self, k: u64, _: u64, out: &mut Vec<u8>) {
        out.clear();
        out.extend_from_slice(&self.lines[(k % self.lines.len() as u64) as usize]);
    }
}

/// Source for a portal sensor id, drawn from a synthetic passage.
pub fn source_for(desc: &SensorDescriptor, passage: &Passage) -> Box<dyn SampleSource> {
    match (desc.kind, desc.id.as_str()) {
        (SensorKind::MatrixVisual, _) => Box::new(FrameSource::new(&passage.frontal, desc.width, desc.height)),
        (SensorKind::LineVisual, "side-high") => Box::new(LineSource::new(&passage.side_high, desc.width)),
        (SensorKind::LineVisual, _) => Box::new(LineSource::new(&passage.side_low, desc.width)),
        (SensorKind::LineThermal, "thermal-right") => {
            Box::new(ThermalSource::new(passage.thermal_right.as_ref().unwrap_or(&passage.thermal_left), desc.width))
        }
        (SensorKind::LineThermal, _) => Box::new(ThermalSource::new(&passage.thermal_left, desc.width)),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateChange {
    pub at_us: u64,
    pub to: Lifecycle,
}

pub struct SimulatedSensor {
    pub descriptor: SensorDescriptor,
    source: Box<dyn SampleSource>,
    lifecycle: Lifecycle,
    last_tick_us: u64,
    /// Time spent acquiring in the current session.
    acquired_us: u64,
    session_samples: u64,
    session_bytes: u64,
    pub bytes_written: u64,
    pub samples_emitted: u64,
    save_backlog: f64,
    /// Share of the disk budget this sensor drains at while saving.
    save_rate_bps: f64,
    pub trace: Vec<StateChange>,
    buf: Vec<u8>,
}

impl SimulatedSensor {
    pub fn new(descriptor: SensorDescriptor, source: Box<dyn SampleSource>, save_rate_bps: f64, now_us: u64) -> Self {
        Self {
            descriptor,
            source,
            lifecycle: Lifecycle::Idle,
            last_tick_us: now_us,
            acquired_us: 0,
            session_samples: 0,
            session_bytes: 0,
            bytes_written: 0,
            samples_emitted: 0,
            save_backlog: 0.0,
            save_rate_bps: save_rate_bps.max(1.0),
            trace: Vec::new(),
            buf: Vec::new(),
        }
    }

    pub fn lifecycle(&self) -> Lifecycle {
        self.lifecycle
    }

    pub fn session_samples(&self) -> u64 {
        self.session_samples
    }

    pub fn session_bytes(&self) -> u64 {
        self.session_bytes
    }

    /// Acquisition time accumulated in the current session.
    pub fn acquired_us(&self) -> u64 {
        self.acquired_us
    }

    fn enter(&mut self, to: Lifecycle, now_us: u64) {
        if to == self.lifecycle {
            return;
        }
        match (self.lifecycle, to) {
            (Lifecycle::Idle, Lifecycle::Acquiring) => {
                self.acquired_us = 0;
                self.session_samples = 0;
                self.session_bytes = 0;
            }
            (_, Lifecycle::Saving) => self.save_backlog = self.session_bytes as f64,
            _ => {}
        }
        self.lifecycle = to;
        self.trace.push(StateChange { at_us: now_us, to });
    }

    /// Adopts the state the manager holds for this sensor.
    pub fn command(&mut self, to: Lifecycle, now_us: u64) {
        if self.lifecycle == Lifecycle::Paused && to == Lifecycle::Saving {
            self.enter(Lifecycle::Acquiring, now_us);
        }
        self.enter(to, now_us);
    }

    /// Emits every sample completed by `now_us` into `sink` and drains the
    /// save queue. Sample `k` of a session completes once `(k + 1) / rate`
    /// seconds of acquisition have elapsed.
    pub fn tick(&mut self, now_us: u64, sink: &mut dyn FnMut(&[u8])) {
        let dt = now_us.saturating_sub(self.last_tick_us);
        let start_us = self.last_tick_us;
        self.last_tick_us = now_us.max(self.last_tick_us);
        match self.lifecycle {
            Lifecycle::Acquiring => {
                let session_start = start_us - self.acquired_us;
                self.acquired_us += dt;
                let target = (self.acquired_us as f64 * self.descriptor.rate_hz / 1e6).floor() as u64;
                while self.session_samples < target {
                    let k = self.session_samples;
                    let ts = session_start + ((k + 1) as f64 * 1e6 / self.descriptor.rate_hz).ceil() as u64;
                    self.source.fill(self.samples_emitted, ts, &mut self.buf);
                    sink(&self.buf);
                    let n = self.buf.len() as u64;
                    self.session_bytes += n;
                    self.bytes_written += n;
                    self.session_samples += 1;
                    self.samples_emitted += 1;
                }
            }
            Lifecycle::Saving => {
                self.save_backlog -= self.save_rate_bps * dt as f64 / 1e6;
                if self.save_backlog <= 0.0 {
                    self.save_backlog = 0.0;
                    self.enter(Lifecycle::Idle, now_us);
                }
            }
            _ => {}
        }
    }

    /// Fault injection and operator reset.
    pub fn fail(&mut self, now_us: u64) {
        self.enter(Lifecycle::Error, now_us);
    }

    pub fn reset(&mut self, now_us: u64) {
        if self.lifecycle == Lifecycle::Error {
            self.enter(Lifecycle::Idle, now_us);
        }
    }

    /// Restart of the acquisition process: whatever was in flight is dropped.
    pub fn restart(&mut self, now_us: u64) {
        self.save_backlog = 0.0;
        self.enter(Lifecycle::Idle, now_us);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Zeros(usize);
    impl SampleSource for Zeros {
        fn fill(&self, _: u64, _: u64, out: &mut Vec<u8>) {
            out.clear();
            out.resize(self.0, 0);
        }
    }

    fn run(desc: SensorDescriptor, duration_us: u64, step_us: u64) -> (u64, u64) {
        let n = desc.sample_bytes();
        let mut s = SimulatedSensor::new(desc, Box::new(Zeros(n)), 1e6, 0);
        s.command(Lifecycle::Acquiring, 0);
        let mut bytes = 0u64;
        let mut t = 0;
        while t < duration_us {
            t = (t + step_us).min(duration_us);
            s.tick(t, &mut |b| bytes += b.len() as u64);
        }
        (s.session_samples(), bytes)
    }

    #[test]
    fn sample_counts_are_floor_of_duration_times_rate() {
        assert_eq!(run(SensorDescriptor::line_visual("l"), 10_000_000, 10_000), (185_000, 185_000 * 4324));
        assert_eq!(run(SensorDescriptor::line_thermal("t"), 4_000_000, 7_777).0, 2048);
        let (frames, bytes) = run(SensorDescriptor::matrix("m"), 1_000_000, 3_000);
        assert_eq!((frames, bytes), (300, 300 * 640 * 480));
        assert_eq!(run(SensorDescriptor::matrix("m"), 0, 1).0, 0);
        assert_eq!(run(SensorDescriptor::line_thermal("t"), 1_234_567, 1_000).0, (1.234567f64 * 512.0) as u64);
    }

    #[test]
    fn pause_suspends_emission_and_saving_drains() {
        let d = SensorDescriptor::line_thermal("t");
        let mut s = SimulatedSensor::new(d, Box::new(Zeros(256)), 256.0 * 100.0, 0);
        s.command(Lifecycle::Acquiring, 0);
        s.tick(1_000_000, &mut |_| {});
        s.command(Lifecycle::Paused, 1_000_000);
        s.tick(5_000_000, &mut |_| {});
        assert_eq!(s.session_samples(), 512);
        s.command(Lifecycle::Acquiring, 5_000_000);
        s.tick(5_500_000, &mut |_| {});
        assert_eq!(s.session_samples(), 768);
        s.command(Lifecycle::Saving, 5_500_000);
        s.tick(10_000_000, &mut |_| {});
        assert_eq!(s.lifecycle(), Lifecycle::Saving);
        s.tick(13_200_000, &mut |_| {});
        assert_eq!(s.lifecycle(), Lifecycle::Idle);
    }

    #[test]
    fn line_frames_carry_header_and_column() {
        let img = GrayImage::from_fn(3, 2, |x, y| (10 * x + y) as u8).unwrap();
        let src = LineSource::new(&img, 4096);
        let mut out = Vec::new();
        src.fill(4, 99, &mut out);
        assert_eq!(out.len(), 4324);
        assert_eq!(&out[..4], b"GLN1");
        assert_eq!(u64::from_le_bytes(out[4..12].try_into().unwrap()), 4);
        assert_eq!(out[LINE_VISUAL_HEADER_BYTES], 10);
        assert_eq!(out[4323], 11);
    }
}
