//! Thermal line-scan mosaics: assembly, block statistics, over-temperature
//! alarms, dual-chain cross-checks and false-colour rendering.

mod tmap;

use serde::{Deserialize, Serialize};

pub use tmap::{decode_tmap, encode_tmap, read_tmap, write_tmap, TMAP_MAGIC};

use crate::error::{Error, Result};
use crate::imgcore::pnm::RgbImage;
use crate::imgcore::GrayImage;

/// Sensor range in degrees Celsius.
pub const T_MIN: f32 = 30.0;
pub const T_MAX: f32 = 800.0;
pub const LINE_SAMPLES: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThermalLine {
    pub samples: Vec<f32>,
    /// Microseconds since acquisition start.
    pub timestamp_us: u64,
}

/// Column `x` holds line `x`; `temps` is row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ThermalMosaic {
    pub width: usize,
    pub height: usize,
    pub temps: Vec<f32>,
    pub start_time_us: u64,
    /// Mean spacing between consecutive lines, 0 for a single line.
    pub line_period_us: f64,
    /// Samples clamped into the sensor range while building.
    pub clamped: usize,
}

impl ThermalMosaic {
    /// Wraps a raw grid, clamping into the sensor range.
    pub fn from_grid(width: usize, height: usize, temps: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 || temps.len() != width * height {
            return Err(Error::Dimensions {
                width,
                height,
                reason: "temperature grid must be nonempty and width*height long",
            });
        }
        let mut clamped = 0;
        let temps = temps
            .into_iter()
            .map(|t| {
                let c = clamp_temp(t);
                clamped += (c != t) as usize;
                c
            })
            .collect();
        Ok(Self {
            width,
            height,
            temps,
            start_time_us: 0,
            line_period_us: 0.0,
            clamped,
        })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.temps[y * self.width + x]
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.temps
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &t| (lo.min(t), hi.max(t)))
    }
}

/// NaN reads as the bottom of the range.
fn clamp_temp(t: f32) -> f32 {
    if t.is_nan() {
        T_MIN
    } else {
        t.clamp(T_MIN, T_MAX)
    }
}

pub fn build_mosaic(lines: &[ThermalLine]) -> Result<ThermalMosaic> {
    let first = lines.first().ok_or(Error::EmptyInput)?;
    let height = first.samples.len();
    if height == 0 {
        return Err(Error::Dimensions {
            width: lines.len(),
            height,
            reason: "thermal lines carry no samples",
        });
    }
    for (i, pair) in lines.windows(2).enumerate() {
        if pair[1].timestamp_us < pair[0].timestamp_us {
            return Err(Error::NonMonotonicTimestamps { index: i + 1 });
        }
    }
    if lines.iter().any(|l| l.samples.len() != height) {
        return Err(Error::Dimensions {
            width: lines.len(),
            height,
            reason: "all thermal lines must have the same sample count",
        });
    }
    let width = lines.len();
    let mut temps = vec![0f32; width * height];
    let mut clamped = 0;
    for (x, line) in lines.iter().enumerate() {
        for (y, &t) in line.samples.iter().enumerate() {
            let c = clamp_temp(t);
            clamped += (c != t) as usize;
            temps[y * width + x] = c;
        }
    }
    let last = lines[width - 1].timestamp_us;
    Ok(ThermalMosaic {
        width,
        height,
        temps,
        start_time_us: first.timestamp_us,
        line_period_us: if width > 1 {
            (last - first.timestamp_us) as f64 / (width - 1) as f64
        } else {
            0.0
        },
        clamped,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
    pub count: usize,
}

/// Row-major grid of per-block statistics; edge blocks may be partial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockStats {
    pub block_w: usize,
    pub block_h: usize,
    pub cols: usize,
    pub rows: usize,
    pub blocks: Vec<Block>,
    pub global_min: f64,
    pub global_max: f64,
}

impl BlockStats {
    pub fn block(&self, bx: usize, by: usize) -> &Block {
        &self.blocks[by * self.cols + bx]
    }
}

pub fn block_stats(m: &ThermalMosaic, block_w: usize, block_h: usize) -> Result<BlockStats> {
    if block_w == 0 || block_h == 0 {
        return Err(Error::InvalidParam {
            name: "block size",
            reason: "block dimensions must be at least 1".into(),
        });
    }
    let cols = m.width.div_ceil(block_w);
    let rows = m.height.div_ceil(block_h);
    let mut sums = vec![0f64; cols * rows];
    let mut blocks = vec![
        Block {
            min: f64::INFINITY,
            mean: 0.0,
            max: f64::NEG_INFINITY,
            count: 0,
        };
        cols * rows
    ];
    for y in 0..m.height {
        let by = y / block_h;
        for x in 0..m.width {
            let i = by * cols + x / block_w;
            let t = m.get(x, y) as f64;
            let b = &mut blocks[i];
            b.min = b.min.min(t);
            b.max = b.max.max(t);
            b.count += 1;
            sums[i] += t;
        }
    }
    for (b, s) in blocks.iter_mut().zip(sums) {
        b.mean = s / b.count as f64;
    }
    let global_min = blocks.iter().map(|b| b.min).fold(f64::INFINITY, f64::min);
    let global_max = blocks.iter().map(|b| b.max).fold(f64::NEG_INFINITY, f64::max);
    Ok(BlockStats {
        block_w,
        block_h,
        cols,
        rows,
        blocks,
        global_min,
        global_max,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Alarm {
    pub bx: usize,
    pub by: usize,
    pub max: f64,
    pub threshold: f64,
}

/// Blocks whose maximum reaches `threshold`, hottest first (ties in raster order).
pub fn detect_alarms(stats: &BlockStats, threshold: f64) -> Vec<Alarm> {
    let mut out: Vec<Alarm> = stats
        .blocks
        .iter()
        .enumerate()
        .filter(|(_, b)| b.max >= threshold)
        .map(|(i, b)| Alarm {
            bx: i % stats.cols,
            by: i / stats.cols,
            max: b.max,
            threshold,
        })
        .collect();
    out.sort_by(|a, b| b.max.total_cmp(&a.max).then((a.by, a.bx).cmp(&(b.by, b.bx))));
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossCheck {
    pub passed: bool,
    pub min_delta: f64,
    pub max_delta: f64,
    pub tol: f64,
}

/// Compares the global extrema of two chains viewing the same passage.
pub fn cross_validate(a: &BlockStats, b: &BlockStats, tol: f64) -> CrossCheck {
    let min_delta = (a.global_min - b.global_min).abs();
    let max_delta = (a.global_max - b.global_max).abs();
    CrossCheck {
        passed: min_delta <= tol && max_delta <= tol,
        min_delta,
        max_delta,
        tol,
    }
}

/// 256-entry blue-to-red table: entry `i` at `x = i / 255` has channels
/// `clamp(1.5 - |4x - c|, 0, 1) * 255` rounded, with `c` = 3, 2, 1 for red,
/// green and blue.
pub fn lut() -> [[u8; 3]; 256] {
    let mut t = [[0u8; 3]; 256];
    for (i, e) in t.iter_mut().enumerate() {
        let x = i as f64 / 255.0;
        let ch = |c: f64| ((1.5 - (4.0 * x - c).abs()).clamp(0.0, 1.0) * 255.0).round() as u8;
        *e = [ch(3.0), ch(2.0), ch(1.0)];
    }
    t
}

/// `floor((clamp(t, lo, hi) - lo) / (hi - lo) * 255)`.
pub fn lut_index(t: f64, lo: f64, hi: f64) -> u8 {
    let c = t.clamp(lo, hi);
    ((c - lo) / (hi - lo) * 255.0).floor().clamp(0.0, 255.0) as u8
}

pub fn colorize(m: &ThermalMosaic, lo: f64, hi: f64) -> Result<RgbImage> {
    if !(lo < hi) {
        return Err(Error::InvalidParam {
            name: "range",
            reason: format!("range_lo ({lo}) must be below range_hi ({hi})"),
        });
    }
    let table = lut();
    let data = m
        .temps
        .iter()
        .flat_map(|&t| table[lut_index(t as f64, lo, hi) as usize])
        .collect();
    Ok(RgbImage {
        width: m.width,
        height: m.height,
        data,
    })
}

/// The mosaic's own extrema, widened to one degree when it is uniform.
pub fn default_range(m: &ThermalMosaic) -> (f64, f64) {
    let (lo, hi) = m.min_max();
    let (lo, hi) = (lo as f64, hi as f64);
    (lo, if hi > lo { hi } else { lo + 1.0 })
}

/// LUT indices over `[lo, hi]` as a gray raster.
pub fn lut_indices(m: &ThermalMosaic, lo: f64, hi: f64) -> Result<GrayImage> {
    if !(lo < hi) {
        return Err(Error::InvalidParam {
            name: "range",
            reason: format!("range_lo ({lo}) must be below range_hi ({hi})"),
        });
    }
    GrayImage::from_vec(m.width, m.height, m.temps.iter().map(|&t| lut_index(t as f64, lo, hi)).collect())
}

/// Colourizes over [`default_range`]; a uniform mosaic maps to entry 0.
pub fn colorize_default(m: &ThermalMosaic) -> RgbImage {
    let (lo, hi) = default_range(m);
    colorize(m, lo, hi).expect("range is ordered")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThermalConfig {
    pub block_w: usize,
    pub block_h: usize,
    pub alarm_threshold: f64,
    pub cross_tol: f64,
}

impl Default for ThermalConfig {
    fn default() -> Self {
        Self {
            block_w: 16,
            block_h: 16,
            alarm_threshold: 150.0,
            cross_tol: 5.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub width: usize,
    pub height: usize,
    pub global_min: f64,
    pub global_max: f64,
    pub clamped: usize,
    pub alarms: Vec<Alarm>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum CrossCheckOutcome {
    Pass { min_delta: f64, max_delta: f64, tol: f64 },
    Fail { min_delta: f64, max_delta: f64, tol: f64 },
    Unavailable,
}

impl From<CrossCheck> for CrossCheckOutcome {
    fn from(c: CrossCheck) -> Self {
        let (min_delta, max_delta, tol) = (c.min_delta, c.max_delta, c.tol);
        if c.passed {
            Self::Pass { min_delta, max_delta, tol }
        } else {
            Self::Fail { min_delta, max_delta, tol }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThermalReport {
    pub block_w: usize,
    pub block_h: usize,
    pub threshold: f64,
    pub left: ChainSummary,
    pub right: Option<ChainSummary>,
    pub cross_check: CrossCheckOutcome,
}

fn summarize(m: &ThermalMosaic, stats: &BlockStats, threshold: f64) -> ChainSummary {
    ChainSummary {
        width: m.width,
        height: m.height,
        global_min: stats.global_min,
        global_max: stats.global_max,
        clamped: m.clamped,
        alarms: detect_alarms(stats, threshold),
    }
}

/// Statistics, alarms and cross-check for one passage. A missing second
/// chain leaves the cross-check unavailable.
pub fn scan(left: &ThermalMosaic, right: Option<&ThermalMosaic>, cfg: &ThermalConfig) -> Result<ThermalReport> {
    let sa = block_stats(left, cfg.block_w, cfg.block_h)?;
    let sb = right.map(|m| block_stats(m, cfg.block_w, cfg.block_h)).transpose()?;
    Ok(ThermalReport {
        block_w: cfg.block_w,
        block_h: cfg.block_h,
        threshold: cfg.alarm_threshold,
        left: summarize(left, &sa, cfg.alarm_threshold),
        right: right.zip(sb.as_ref()).map(|(m, s)| summarize(m, s, cfg.alarm_threshold)),
        cross_check: sb
            .as_ref()
            .map_or(CrossCheckOutcome::Unavailable, |s| cross_validate(&sa, s, cfg.cross_tol).into()),
    })
}
