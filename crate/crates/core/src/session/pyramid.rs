//! Multi-resolution tile pyramids built in a single pass over image rows.
//!
//! Each level keeps only one band of up to `TILE_SIZE` rows plus one pending
//! row for the 2x2 downscale, so memory is bounded by a few bands per level
//! regardless of image height.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::pnm::{self, PgmRows, RgbImage};
use crate::imgcore::GrayImage;

pub const TILE_SIZE: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelInfo {
    pub width: usize,
    pub height: usize,
    pub cols: usize,
    pub rows: usize,
}

impl LevelInfo {
    fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            cols: width.div_ceil(TILE_SIZE),
            rows: height.div_ceil(TILE_SIZE),
        }
    }

    /// Pixel extent of tile (tx, ty); edge tiles are cut short.
    pub fn tile_dims(&self, tx: usize, ty: usize) -> (usize, usize) {
        (
            TILE_SIZE.min(self.width - tx * TILE_SIZE),
            TILE_SIZE.min(self.height - ty * TILE_SIZE),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PyramidInfo {
    pub tile_size: usize,
    pub levels: Vec<LevelInfo>,
}

impl PyramidInfo {
    /// Level 0 is full resolution; each further level halves (rounding up)
    /// until the longest side fits in one tile.
    pub fn for_dims(width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimensions {
                width,
                height,
                reason: "width and height must be at least 1",
            });
        }
        let mut levels = vec![LevelInfo::new(width, height)];
        let (mut w, mut h) = (width, height);
        while w.max(h) > TILE_SIZE {
            w = w.div_ceil(2);
            h = h.div_ceil(2);
            levels.push(LevelInfo::new(w, h));
        }
        Ok(Self {
            tile_size: TILE_SIZE,
            levels,
        })
    }

    pub fn check(&self, level: usize, tx: usize, ty: usize) -> Result<&LevelInfo> {
        let l = self
            .levels
            .get(level)
            .ok_or_else(|| Error::OutOfRange(format!("level {level} of {}", self.levels.len())))?;
        if tx >= l.cols || ty >= l.rows {
            return Err(Error::OutOfRange(format!(
                "tile ({tx}, {ty}) of a {}x{} grid at level {level}",
                l.cols, l.rows
            )));
        }
        Ok(l)
    }
}

pub trait TileSink {
    fn put(&mut self, level: usize, tx: usize, ty: usize, tile: GrayImage) -> Result<()>;
}

/// 2x2 box average of one or two rows; odd trailing columns and a lone final
/// row average only the pixels present. Rounds half up.
fn downscale_rows(a: &[u8], b: Option<&[u8]>, out: &mut Vec<u8>) {
    out.clear();
    for ox in 0..a.len().div_ceil(2) {
        let xs = 2 * ox..(2 * ox + 2).min(a.len());
        let mut sum: u32 = xs.clone().map(|x| a[x] as u32).sum();
        let mut n = xs.len() as u32;
        if let Some(b) = b {
            sum += xs.map(|x| b[x] as u32).sum::<u32>();
            n *= 2;
        }
        out.push(((sum + n / 2) / n) as u8);
    }
}

/// One level's state in the streaming build.
struct Band {
    info: LevelInfo,
    level: usize,
    /// Rows of the current tile band, concatenated.
    rows: Vec<u8>,
    rows_in_band: usize,
    ty: usize,
    seen: usize,
    pending: Option<Vec<u8>>,
}

impl Band {
    fn new(level: usize, info: LevelInfo) -> Self {
        Self {
            info,
            level,
            rows: Vec::with_capacity(info.width * TILE_SIZE.min(info.height)),
            rows_in_band: 0,
            ty: 0,
            seen: 0,
            pending: None,
        }
    }

    fn flush(&mut self, sink: &mut dyn TileSink) -> Result<()> {
        let w = self.info.width;
        let h = self.rows_in_band;
        for tx in 0..self.info.cols {
            let x0 = tx * TILE_SIZE;
            let tw = TILE_SIZE.min(w - x0);
            let mut data = Vec::with_capacity(tw * h);
            for r in 0..h {
                data.extend_from_slice(&self.rows[r * w + x0..r * w + x0 + tw]);
            }
            sink.put(self.level, tx, self.ty, GrayImage::from_vec(tw, h, data)?)?;
        }
        self.rows.clear();
        self.rows_in_band = 0;
        self.ty += 1;
        Ok(())
    }
}

/// Streams rows into every level at once.
pub struct PyramidBuilder<'a> {
    info: PyramidInfo,
    bands: Vec<Band>,
    sink: &'a mut dyn TileSink,
    scratch: Vec<u8>,
}

impl<'a> PyramidBuilder<'a> {
    pub fn new(width: usize, height: usize, sink: &'a mut dyn TileSink) -> Result<Self> {
        let info = PyramidInfo::for_dims(width, height)?;
        let bands = info.levels.iter().enumerate().map(|(i, &l)| Band::new(i, l)).collect();
        Ok(Self {
            info,
            bands,
            sink,
            scratch: Vec::new(),
        })
    }

    pub fn push_row(&mut self, row: &[u8]) -> Result<()> {
        let l0 = &self.bands[0].info;
        if row.len() != l0.width {
            return Err(Error::Dimensions {
                width: row.len(),
                height: 1,
                reason: "row width differs from the pyramid width",
            });
        }
        if self.bands[0].seen == l0.height {
            return Err(Error::OutOfRange("more rows than the pyramid height".into()));
        }
        let mut row = row.to_vec();
        let mut level = 0;
        let top = self.bands.len() - 1;
        loop {
            let band = &mut self.bands[level];
            band.rows.extend_from_slice(&row);
            band.rows_in_band += 1;
            band.seen += 1;
            let last = band.seen == band.info.height;
            if band.rows_in_band == TILE_SIZE || last {
                band.flush(&mut *self.sink)?;
            }
            if level == top {
                return Ok(());
            }
            let next = match band.pending.take() {
                Some(prev) => {
                    downscale_rows(&prev, Some(&row), &mut self.scratch);
                    true
                }
                None if last => {
                    downscale_rows(&row, None, &mut self.scratch);
                    true
                }
                None => {
                    band.pending = Some(row);
                    false
                }
            };
            if !next {
                return Ok(());
            }
            row = std::mem::take(&mut self.scratch);
            level += 1;
        }
    }

    pub fn finish(self) -> Result<PyramidInfo> {
        if let Some(b) = self.bands.iter().find(|b| b.seen != b.info.height) {
            return Err(Error::OutOfRange(format!(
                "level {} received {} of {} rows",
                b.level, b.seen, b.info.height
            )));
        }
        Ok(self.info)
    }
}

pub fn build_pyramid_into(img: &GrayImage, sink: &mut dyn TileSink) -> Result<PyramidInfo> {
    let mut b = PyramidBuilder::new(img.width(), img.height(), sink)?;
    for y in 0..img.height() {
        b.push_row(img.row(y))?;
    }
    b.finish()
}

/// Tiles a PGM file without loading the whole raster.
pub fn build_pyramid_from_pgm(path: impl AsRef<Path>, sink: &mut dyn TileSink) -> Result<PyramidInfo> {
    let mut rows = PgmRows::open(path)?;
    let mut b = PyramidBuilder::new(rows.width(), rows.height(), sink)?;
    let mut row = Vec::new();
    while rows.read_row(&mut row)? {
        b.push_row(&row)?;
    }
    b.finish()
}

/// In-memory pyramid.
#[derive(Clone, Debug, PartialEq)]
pub struct TilePyramid {
    pub info: PyramidInfo,
    /// Per level, tiles in row-major grid order.
    tiles: Vec<Vec<Option<GrayImage>>>,
}

impl TilePyramid {
    fn empty(info: &PyramidInfo) -> Self {
        Self {
            info: info.clone(),
            tiles: info.levels.iter().map(|l| vec![None; l.cols * l.rows]).collect(),
        }
    }

    pub fn levels(&self) -> usize {
        self.info.levels.len()
    }

    pub fn tile(&self, level: usize, tx: usize, ty: usize) -> Result<&GrayImage> {
        let l = self.info.check(level, tx, ty)?;
        Ok(self.tiles[level][ty * l.cols + tx].as_ref().expect("built pyramids are complete"))
    }

    /// Stitches one level back into a single raster.
    pub fn reassemble(&self, level: usize) -> Result<GrayImage> {
        let l = *self.info.check(level, 0, 0)?;
        let mut out = GrayImage::new(l.width, l.height)?;
        for ty in 0..l.rows {
            for tx in 0..l.cols {
                out.paste(self.tile(level, tx, ty)?, (tx * TILE_SIZE) as isize, (ty * TILE_SIZE) as isize);
            }
        }
        Ok(out)
    }
}

struct MemorySink(TilePyramid);

impl TileSink for MemorySink {
    fn put(&mut self, level: usize, tx: usize, ty: usize, tile: GrayImage) -> Result<()> {
        let cols = self.0.info.levels[level].cols;
        self.0.tiles[level][ty * cols + tx] = Some(tile);
        Ok(())
    }
}

pub fn build_pyramid(img: &GrayImage) -> TilePyramid {
    let info = PyramidInfo::for_dims(img.width(), img.height()).expect("GrayImage is nonempty");
    let mut sink = MemorySink(TilePyramid::empty(&info));
    build_pyramid_into(img, &mut sink).expect("in-memory sink does not fail");
    sink.0
}

/// Relative path of a tile under a pyramid root.
pub fn tile_path(level: usize, tx: usize, ty: usize, ext: &str) -> PathBuf {
    PathBuf::from(level.to_string()).join(format!("{tx}_{ty}.{ext}"))
}

/// Writes `<root>/<level>/<tx>_<ty>.pgm`, or `.ppm` through a colour table.
pub struct DiskSink {
    root: PathBuf,
    lut: Option<Box<[[u8; 3]; 256]>>,
}

impl DiskSink {
    pub fn gray(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            lut: None,
        }
    }

    pub fn colored(root: impl Into<PathBuf>, lut: [[u8; 3]; 256]) -> Self {
        Self {
            root: root.into(),
            lut: Some(Box::new(lut)),
        }
    }
}

impl TileSink for DiskSink {
    fn put(&mut self, level: usize, tx: usize, ty: usize, tile: GrayImage) -> Result<()> {
        match &self.lut {
            None => pnm::write_pgm(self.root.join(tile_path(level, tx, ty, "pgm")), &tile),
            Some(lut) => {
                let data = tile.data().iter().flat_map(|&v| lut[v as usize]).collect();
                let rgb = RgbImage {
                    width: tile.width(),
                    height: tile.height(),
                    data,
                };
                pnm::write_ppm(self.root.join(tile_path(level, tx, ty, "ppm")), &rgb)
            }
        }
    }
}

/// Locates a stored tile, checking indices against the pyramid first.
pub fn find_tile(root: &Path, info: &PyramidInfo, level: usize, tx: usize, ty: usize) -> Result<PathBuf> {
    info.check(level, tx, ty)?;
    ["pgm", "ppm"]
        .iter()
        .map(|ext| root.join(tile_path(level, tx, ty, ext)))
        .find(|p| p.is_file())
        .ok_or_else(|| Error::MissingArtifact(root.join(tile_path(level, tx, ty, "pgm"))))
}
