//! A complete synthetic passage: side and roof line-scan mosaics, two
//! thermal chains, frontal frames and the matching ground truth.
//!
//! Raw directory layout written by [`write_passage`]:
//!
//! ```text
//! raw.json  truth.json  side-low.pgm  side-high.pgm
//! thermal-left.tmap  thermal-right.tmap  frontal/frame_000000.pgm ...
//! ```

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::roof::{pantograph_template, render_roof, Placement, RoofScene};
use super::side::{render_side, SideScene};
use crate::error::{Error, Result};
use crate::imgcore::pnm::{self, write_bytes};
use crate::imgcore::{BBox, GrayImage};
use crate::pantograph::Homography;
use crate::session::StreamRole;
use crate::thermal::{write_tmap, ThermalMosaic, LINE_SAMPLES, T_MAX, T_MIN};

pub const ID_LEN: usize = 12;
/// Block grid the hotspot ground truth refers to.
pub const TRUTH_BLOCK: usize = 16;
pub const RAW_VERSION: &str = "RAW1";
/// Template seed of the pantograph every passage carries.
pub const TEMPLATE_SEED: u64 = 0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WagonSpec {
    pub id: String,
    pub glyph_scale: usize,
    /// Mosaic columns covered by the passage.
    pub length: usize,
    pub height: usize,
    pub distractors: usize,
    pub merged_pairs: Vec<usize>,
}

impl Default for WagonSpec {
    fn default() -> Self {
        Self {
            id: "318066501234".into(),
            glyph_scale: 5,
            length: 8192,
            height: 1024,
            distractors: 32,
            merged_pairs: Vec::new(),
        }
    }
}

/// Constant-speed passage: every stream samples at a fixed rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StreamRates {
    pub line_hz: f64,
    pub thermal_hz: f64,
    pub frontal_hz: f64,
}

impl Default for StreamRates {
    fn default() -> Self {
        Self {
            line_hz: 18_500.0,
            thermal_hz: 512.0,
            frontal_hz: 300.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HotspotSpec {
    /// Fraction of the passage, 0 at the first line.
    pub u: f64,
    /// Fraction of the thermal line, 0 at the first sample.
    pub v: f64,
    pub celsius: f32,
    #[serde(default = "default_radius")]
    pub radius: usize,
}

fn default_radius() -> usize {
    3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PantographSpec {
    pub present: bool,
    /// Random pose when absent.
    pub placement: Option<Placement>,
    pub gain: f64,
    pub roof_height: usize,
}

impl Default for PantographSpec {
    fn default() -> Self {
        Self {
            present: true,
            placement: None,
            gain: 1.0,
            roof_height: 512,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    pub side_sigma: f64,
    pub roof_sigma: f64,
    pub frontal_sigma: f64,
    /// Half-width of the uniform per-sample thermal noise.
    pub thermal_amplitude: f32,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            side_sigma: 8.0,
            roof_sigma: 5.0,
            frontal_sigma: 3.0,
            thermal_amplitude: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub seed: u64,
    /// Microseconds since the Unix epoch at the first side-camera line.
    pub start_time_us: u64,
    pub wagon: WagonSpec,
    pub rates: StreamRates,
    pub hotspots: Vec<HotspotSpec>,
    pub pantograph: PantographSpec,
    pub noise: NoiseSpec,
    pub frontal_width: usize,
    pub frontal_height: usize,
    pub thermal_right: bool,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            start_time_us: 1_700_000_000_000_000,
            wagon: WagonSpec::default(),
            rates: StreamRates::default(),
            hotspots: vec![HotspotSpec {
                u: 0.5,
                v: 0.5,
                celsius: 300.0,
                radius: 3,
            }],
            pantograph: PantographSpec::default(),
            noise: NoiseSpec::default(),
            frontal_width: 160,
            frontal_height: 120,
            thermal_right: true,
        }
    }
}

fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParam {
        name,
        reason: reason.into(),
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        let id = &self.wagon.id;
        if id.chars().count() != ID_LEN || !id.chars().all(|c| c.is_ascii_digit()) {
            return Err(invalid("wagon.id", format!("expected {ID_LEN} digits, got `{id}`")));
        }
        let w = &self.wagon;
        if w.length < 1024 || w.height < 256 || w.glyph_scale == 0 {
            return Err(invalid("wagon", "mosaic must be at least 1024x256 with a positive glyph scale"));
        }
        if 7 * w.glyph_scale * 4 > w.height || 12 * 9 * w.glyph_scale + 256 > w.length {
            return Err(invalid("wagon.glyph_scale", "identifier does not fit the mosaic"));
        }
        let r = &self.rates;
        for (name, v) in [("rates.line_hz", r.line_hz), ("rates.thermal_hz", r.thermal_hz), ("rates.frontal_hz", r.frontal_hz)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, "must be positive"));
            }
        }
        if self.thermal_lines() == 0 || self.frontal_frames() == 0 {
            return Err(invalid("rates", "passage too short for one thermal line and one frame"));
        }
        for h in &self.hotspots {
            if !(T_MIN..=T_MAX).contains(&h.celsius) {
                return Err(invalid("hotspots.celsius", format!("{} outside [{T_MIN}, {T_MAX}]", h.celsius)));
            }
            if !(0.0..=1.0).contains(&h.u) || !(0.0..=1.0).contains(&h.v) {
                return Err(invalid("hotspots", "u and v are fractions in [0, 1]"));
            }
            if h.radius >= TRUTH_BLOCK / 2 {
                return Err(invalid("hotspots.radius", format!("must be below {}", TRUTH_BLOCK / 2)));
            }
        }
        let p = &self.pantograph;
        if !(p.gain > 0.0 && p.gain.is_finite()) || p.roof_height < 256 {
            return Err(invalid("pantograph", "gain must be positive and the roof at least 256 rows"));
        }
        if self.frontal_width < 32 || self.frontal_height < 32 {
            return Err(invalid("frontal", "frames must be at least 32x32"));
        }
        Ok(())
    }

    pub fn duration_us(&self) -> u64 {
        (self.wagon.length as f64 * 1e6 / self.rates.line_hz).floor() as u64
    }

    fn samples_at(&self, rate: f64) -> usize {
        (self.wagon.length as f64 * rate / self.rates.line_hz).floor() as usize
    }

    pub fn thermal_lines(&self) -> usize {
        self.samples_at(self.rates.thermal_hz)
    }

    pub fn frontal_frames(&self) -> usize {
        self.samples_at(self.rates.frontal_hz)
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ stream)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HotspotTruth {
    pub line: usize,
    pub sample: usize,
    pub radius: usize,
    pub celsius: f32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PantographTruth {
    pub placement: Placement,
    pub homography: Homography,
    pub bbox: BBox,
    pub gain: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub id: String,
    /// Side-low coordinates, reading order.
    pub glyphs: Vec<BBox>,
    pub distractors: Vec<BBox>,
    pub hotspots: Vec<HotspotTruth>,
    pub block_w: usize,
    pub block_h: usize,
    /// Thermal blocks `(bx, by)` covered by a hotspot, sorted.
    pub hot_blocks: Vec<(usize, usize)>,
    pub pantograph: Option<PantographTruth>,
}

pub struct Passage {
    pub side_low: GrayImage,
    pub side_high: GrayImage,
    pub thermal_left: ThermalMosaic,
    pub thermal_right: Option<ThermalMosaic>,
    pub frontal: Vec<GrayImage>,
    pub starts_us: Vec<(StreamRole, u64)>,
    pub truth: GroundTruth,
}

/// Noise-free temperature field plus hotspot ground truth.
fn thermal_field(spec: &ScenarioSpec) -> (Vec<f32>, usize, Vec<HotspotTruth>) {
    let n = spec.thermal_lines();
    let h = LINE_SAMPLES;
    let mut rng = spec.rng(0x7e);
    let base: f32 = rng.random_range(34.0..40.0);
    let mut field: Vec<f32> = (0..n * h)
        .map(|i| {
            let (x, y) = (i % n, i / n);
            let body = if (h / 8..h * 3 / 4).contains(&y) { 6.0 } else { 0.0 };
            base + body + 2.0 * ((x as f32 / 23.0).sin() + (y as f32 / 17.0).cos())
        })
        .collect();
    // warm bearings along the running gear
    for k in 0..4 {
        let cx = (n as f32) * (0.15 + 0.233 * k as f32);
        let cy = h as f32 * 0.86;
        for y in 0..h {
            for x in 0..n {
                if (x as f32 - cx).hypot(y as f32 - cy) <= 9.0 {
                    field[y * n + x] = field[y * n + x].max(62.0);
                }
            }
        }
    }
    let full_cols = (n / TRUTH_BLOCK).max(1) * TRUTH_BLOCK;
    let mut truth = Vec::new();
    for hs in &spec.hotspots {
        let x = ((hs.u * n as f64) as usize).min(full_cols.min(n) - 1);
        let y = ((hs.v * h as f64) as usize).min(h - 1);
        // centred in its block so the footprint stays inside it
        let cx = (x / TRUTH_BLOCK * TRUTH_BLOCK + TRUTH_BLOCK / 2).min(n - 1);
        let cy = (y / TRUTH_BLOCK * TRUTH_BLOCK + TRUTH_BLOCK / 2).min(h - 1);
        let r = hs.radius as isize;
        for dy in -r..=r {
            for dx in -r..=r {
                let (px, py) = (cx as isize + dx, cy as isize + dy);
                if dx * dx + dy * dy <= r * r && px >= 0 && py >= 0 && (px as usize) < n && (py as usize) < h {
                    let i = py as usize * n + px as usize;
                    field[i] = field[i].max(hs.celsius);
                }
            }
        }
        truth.push(HotspotTruth {
            line: cx,
            sample: cy,
            radius: hs.radius,
            celsius: hs.celsius,
        });
    }
    (field, n, truth)
}

fn hot_blocks(truth: &[HotspotTruth]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for t in truth {
        let r = t.radius;
        for y in t.sample.saturating_sub(r)..=t.sample + r {
            for x in t.line.saturating_sub(r)..=t.line + r {
                let (dx, dy) = (x as isize - t.line as isize, y as isize - t.sample as isize);
                if dx * dx + dy * dy <= (r * r) as isize {
                    out.push((x / TRUTH_BLOCK, y / TRUTH_BLOCK));
                }
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

fn noisy_chain(field: &[f32], n: usize, amplitude: f32, rng: &mut ChaCha8Rng) -> ThermalMosaic {
    let temps = field
        .iter()
        .map(|&t| if amplitude > 0.0 { t + rng.random_range(-amplitude..=amplitude) } else { t })
        .collect();
    ThermalMosaic::from_grid(n, LINE_SAMPLES, temps).expect("field dimensions are consistent")
}

/// Frontal view of the approaching train: its front grows as it nears.
fn frontal_frames(spec: &ScenarioSpec) -> Vec<GrayImage> {
    let (w, h) = (spec.frontal_width, spec.frontal_height);
    let frames = spec.frontal_frames();
    let mut rng = spec.rng(0xf0);
    let normal = Normal::new(0.0, spec.noise.frontal_sigma.max(0.0)).expect("finite sigma");
    (0..frames)
        .map(|k| {
            let s = 0.2 + 0.7 * k as f64 / frames.max(1) as f64;
            let (fw, fh) = (w as f64 * s * 0.6, h as f64 * s * 0.8);
            let (cx, cy) = (w as f64 / 2.0, h as f64 * 0.55);
            let mut img = GrayImage::from_fn(w, h, |x, y| {
                let (xf, yf) = (x as f64, y as f64);
                let rail = yf > h as f64 * 0.6 && ((xf - cx).abs() - (yf - h as f64 * 0.6) * 0.8).abs() < 1.5;
                let inside = (xf - cx).abs() < fw / 2.0 && (yf - cy).abs() < fh / 2.0;
                let window = inside && yf < cy - fh * 0.15 && (xf - cx).abs() < fw * 0.35;
                if window {
                    180
                } else if inside {
                    60
                } else if rail {
                    200
                } else {
                    (110.0 + 40.0 * yf / h as f64) as u8
                }
            })
            .expect("frame dimensions validated");
            if spec.noise.frontal_sigma > 0.0 {
                for v in img.data_mut() {
                    *v = (*v as f64 + normal.sample(&mut rng)).round().clamp(0.0, 255.0) as u8;
                }
            }
            img
        })
        .collect()
}

pub fn generate(spec: &ScenarioSpec) -> Result<Passage> {
    spec.validate()?;
    let w = &spec.wagon;
    let side = render_side(&SideScene {
        width: w.length,
        height: w.height,
        id: w.id.clone(),
        glyph_scale: w.glyph_scale,
        id_origin: None,
        distractors: w.distractors,
        noise_sigma: spec.noise.side_sigma,
        merged_pairs: w.merged_pairs.clone(),
        seed: spec.seed,
    });

    let template = pantograph_template(TEMPLATE_SEED);
    let roof_dims = (w.length, spec.pantograph.roof_height);
    let placement = spec.pantograph.present.then(|| {
        spec.pantograph
            .placement
            .unwrap_or_else(|| Placement::random(&mut spec.rng(0x9a), roof_dims, (template.width(), template.height())))
    });
    let roof = render_roof(
        &RoofScene {
            width: roof_dims.0,
            height: roof_dims.1,
            pantograph: placement,
            gain: spec.pantograph.gain,
            noise_sigma: spec.noise.roof_sigma,
            seed: spec.seed,
        },
        &template,
    );
    let pantograph = match (placement, roof.homography, roof.bbox) {
        (Some(placement), Some(homography), Some(bbox)) => Some(PantographTruth {
            placement,
            homography,
            bbox,
            gain: spec.pantograph.gain,
        }),
        _ => None,
    };

    let (field, n, hotspots) = thermal_field(spec);
    let amp = spec.noise.thermal_amplitude;
    let thermal_left = noisy_chain(&field, n, amp, &mut spec.rng(0x11));
    let thermal_right = spec.thermal_right.then(|| noisy_chain(&field, n, amp, &mut spec.rng(0x22)));

    // coarse synchronisation: each stream starts a little apart
    let mut rng = spec.rng(0x5c);
    let starts_us = StreamRole::ALL
        .iter()
        .map(|&r| (r, spec.start_time_us + if r == StreamRole::SideLow { 0 } else { rng.random_range(0..2000) }))
        .collect();

    Ok(Passage {
        side_low: side.image,
        side_high: roof.image,
        thermal_left,
        thermal_right,
        frontal: frontal_frames(spec),
        starts_us,
        truth: GroundTruth {
            seed: spec.seed,
            id: w.id.clone(),
            glyphs: side.glyphs,
            distractors: side.distractors,
            hot_blocks: hot_blocks(&hotspots),
            hotspots,
            block_w: TRUTH_BLOCK,
            block_h: TRUTH_BLOCK,
            pantograph,
        },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawStream {
    pub role: StreamRole,
    pub start_time_us: u64,
    pub rate: f64,
    pub width: usize,
    pub height: usize,
    pub samples: u64,
    pub path: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawPassage {
    pub version: String,
    pub seed: u64,
    pub created_us: u64,
    pub streams: Vec<RawStream>,
    pub truth: String,
}

impl RawPassage {
    pub fn stream(&self, role: StreamRole) -> Option<&RawStream> {
        self.streams.iter().find(|s| s.role == role)
    }
}

pub fn frame_name(k: usize) -> String {
    format!("frame_{k:06}.pgm")
}

pub(crate) fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::format("json", e.to_string()))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

/// Generates the passage and writes the raw directory.
pub fn write_passage(spec: &ScenarioSpec, out: &Path) -> Result<RawPassage> {
    let p = generate(spec)?;
    let start = |role| p.starts_us.iter().find(|(r, _)| *r == role).map_or(spec.start_time_us, |s| s.1);
    let mut streams = Vec::new();

    for (role, img) in [(StreamRole::SideLow, &p.side_low), (StreamRole::SideHigh, &p.side_high)] {
        let path = format!("{role}.pgm");
        pnm::write_pgm(out.join(&path), img)?;
        streams.push(RawStream {
            role,
            start_time_us: start(role),
            rate: spec.rates.line_hz,
            width: img.width(),
            height: img.height(),
            samples: img.width() as u64,
            path,
        });
    }
    for (role, m) in [(StreamRole::ThermalLeft, Some(&p.thermal_left)), (StreamRole::ThermalRight, p.thermal_right.as_ref())] {
        let Some(m) = m else { continue };
        let path = format!("{role}.tmap");
        write_tmap(out.join(&path), m)?;
        streams.push(RawStream {
            role,
            start_time_us: start(role),
            rate: spec.rates.thermal_hz,
            width: m.width,
            height: m.height,
            samples: m.width as u64,
            path,
        });
    }
    for (k, f) in p.frontal.iter().enumerate() {
        pnm::write_pgm(out.join("frontal").join(frame_name(k)), f)?;
    }
    streams.push(RawStream {
        role: StreamRole::Frontal,
        start_time_us: start(StreamRole::Frontal),
        rate: spec.rates.frontal_hz,
        width: spec.frontal_width,
        height: spec.frontal_height,
        samples: p.frontal.len() as u64,
        path: "frontal".into(),
    });

    write_json(&out.join("truth.json"), &p.truth)?;
    let raw = RawPassage {
        version: RAW_VERSION.into(),
        seed: spec.seed,
        created_us: spec.start_time_us,
        streams,
        truth: "truth.json".into(),
    };
    write_json(&out.join("raw.json"), &raw)?;
    Ok(raw)
}

pub fn read_raw(dir: &Path) -> Result<RawPassage> {
    let path = dir.join("raw.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let raw: RawPassage = serde_json::from_str(&text).map_err(|e| Error::format("raw.json", e.to_string()))?;
    if raw.version != RAW_VERSION {
        return Err(Error::VersionMismatch(raw.version));
    }
    Ok(raw)
}

pub fn read_truth(path: &Path) -> Result<GroundTruth> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format("truth.json", e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::thermal::{block_stats, detect_alarms};

    fn small() -> ScenarioSpec {
        ScenarioSpec {
            wagon: WagonSpec {
                length: 2048,
                height: 512,
                distractors: 10,
                ..WagonSpec::default()
            },
            rates: StreamRates {
                line_hz: 4096.0,
                ..StreamRates::default()
            },
            ..ScenarioSpec::default()
        }
    }

    #[test]
    fn counts_follow_rates() {
        let s = small();
        assert_eq!(s.thermal_lines(), 256);
        assert_eq!(s.frontal_frames(), 150);
        assert_eq!(ScenarioSpec::default().thermal_lines(), (8192.0 * 512.0 / 18_500.0) as usize);
    }

    #[test]
    fn centre_hotspot_is_one_block_and_alarms_there() {
        let p = generate(&small()).unwrap();
        assert_eq!(p.truth.glyphs.len(), 12);
        assert_eq!(p.truth.hot_blocks.len(), 1);
        let stats = block_stats(&p.thermal_left, TRUTH_BLOCK, TRUTH_BLOCK).unwrap();
        let alarms: Vec<(usize, usize)> = detect_alarms(&stats, 150.0).iter().map(|a| (a.bx, a.by)).collect();
        assert_eq!(alarms, p.truth.hot_blocks);
    }

    #[test]
    fn validation() {
        let mut s = small();
        s.wagon.id = "12345".into();
        assert!(s.validate().is_err());
        let mut s = small();
        s.hotspots[0].celsius = 900.0;
        assert!(s.validate().is_err());
        let mut s = small();
        s.rates.thermal_hz = 0.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn written_passage_is_deterministic() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let mut s = small();
        s.thermal_right = false;
        let raw = write_passage(&s, a.path()).unwrap();
        write_passage(&s, b.path()).unwrap();
        assert!(raw.stream(StreamRole::ThermalRight).is_none());
        assert_eq!(read_raw(a.path()).unwrap(), raw);
        for f in ["raw.json", "truth.json", "side-low.pgm", "side-high.pgm", "thermal-left.tmap", "frontal/frame_000149.pgm"] {
            assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
        }
        assert_eq!(read_truth(&a.path().join("truth.json")).unwrap().glyphs.len(), 12);
    }
}
