//! Pixel-level primitives shared by the analysis pipelines.
//!
//! All rasters are row-major. Operations are pure functions of their inputs;
//! pixels outside an image are treated as background by the morphology.

mod canny;
mod label;
mod morphology;
pub mod pnm;
mod threshold;

pub use canny::{canny_edges, canny_from_threshold, CANNY_SIGMA};
pub use label::{connected_components, LabeledComponents};
pub use morphology::{dilate_disk, disk_offsets, fill_holes};
pub use threshold::{binarize, otsu_threshold, Otsu};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 8-bit grayscale raster.
#[derive(Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl std::fmt::Debug for GrayImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GrayImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::Dimensions {
            width,
            height,
            reason: "width and height must be at least 1",
        });
    }
    Ok(())
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        Self::filled(width, height, 0)
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        check_dims(width, height)?;
        Ok(Self {
            width,
            height,
            data: vec![value; width * height],
        })
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height {
            return Err(Error::Dimensions {
                width,
                height,
                reason: "data length does not match width*height",
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds an image by evaluating `f(x, y)` for every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> u8,
    ) -> Result<Self> {
        check_dims(width, height)?;
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    #[inline]
    pub fn row(&self, y: usize) -> &[u8] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn bbox(&self) -> BBox {
        BBox::new(0, 0, self.width, self.height)
    }

    /// Copies the region `bbox`, which must lie inside the image.
    pub fn crop(&self, bbox: BBox) -> Result<GrayImage> {
        if !bbox.fits_in(self.width, self.height) {
            return Err(Error::OutOfRange(format!(
                "crop {bbox:?} outside {}x{}",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(bbox.w * bbox.h);
        for y in bbox.y..bbox.y + bbox.h {
            data.extend_from_slice(&self.row(y)[bbox.x..bbox.x + bbox.w]);
        }
        GrayImage::from_vec(bbox.w, bbox.h, data)
    }

    /// Pastes `src` with its top-left corner at (x, y), clipping at the borders.
    pub fn paste(&mut self, src: &GrayImage, x: isize, y: isize) {
        for sy in 0..src.height {
            let ty = y + sy as isize;
            if ty < 0 || ty >= self.height as isize {
                continue;
            }
            for sx in 0..src.width {
                let tx = x + sx as isize;
                if tx < 0 || tx >= self.width as isize {
                    continue;
                }
                self.set(tx as usize, ty as usize, src.get(sx, sy));
            }
        }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as u64).sum::<u64>() as f64 / self.data.len() as f64
    }
}

/// Boolean raster with the same dimension contract as [`GrayImage`].
#[derive(Clone, PartialEq, Eq)]
pub struct BinaryImage {
    width: usize,
    height: usize,
    mask: Vec<bool>,
}

impl std::fmt::Debug for BinaryImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BinaryImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("set", &self.count())
            .finish()
    }
}

impl BinaryImage {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        check_dims(width, height)?;
        Ok(Self {
            width,
            height,
            mask: vec![false; width * height],
        })
    }

    pub fn from_vec(width: usize, height: usize, mask: Vec<bool>) -> Result<Self> {
        check_dims(width, height)?;
        if mask.len() != width * height {
            return Err(Error::Dimensions {
                width,
                height,
                reason: "mask length does not match width*height",
            });
        }
        Ok(Self {
            width,
            height,
            mask,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> bool,
    ) -> Result<Self> {
        check_dims(width, height)?;
        let mut mask = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                mask.push(f(x, y));
            }
        }
        Ok(Self {
            width,
            height,
            mask,
        })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.mask[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.mask[y * self.width + x] = v;
    }

    #[inline]
    pub fn row(&self, y: usize) -> &[bool] {
        &self.mask[y * self.width..(y + 1) * self.width]
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&b| b)
    }

    /// True where either image is set. Dimensions must agree.
    pub fn union(&self, other: &BinaryImage) -> BinaryImage {
        assert_eq!((self.width, self.height), (other.width, other.height));
        BinaryImage {
            width: self.width,
            height: self.height,
            mask: self
                .mask
                .iter()
                .zip(&other.mask)
                .map(|(&a, &b)| a || b)
                .collect(),
        }
    }

    /// True iff every pixel set here is also set in `other`.
    pub fn is_subset_of(&self, other: &BinaryImage) -> bool {
        self.mask.iter().zip(&other.mask).all(|(&a, &b)| !a || b)
    }

    pub fn to_gray(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.mask.iter().map(|&b| if b { 255 } else { 0 }).collect(),
        }
    }
}

/// Axis-aligned box: top-left corner plus extent, in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BBox {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl BBox {
    pub const fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Self { x, y, w, h }
    }

    #[inline]
    pub fn right(&self) -> usize {
        self.x + self.w
    }

    #[inline]
    pub fn bottom(&self) -> usize {
        self.y + self.h
    }

    /// Bottom-right corner, one past the last covered pixel.
    #[inline]
    pub fn corner(&self) -> (usize, usize) {
        (self.right(), self.bottom())
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn fits_in(&self, width: usize, height: usize) -> bool {
        self.w >= 1 && self.h >= 1 && self.right() <= width && self.bottom() <= height
    }

    pub fn contains_box(&self, other: &BBox) -> bool {
        other.x >= self.x
            && other.y >= self.y
            && other.right() <= self.right()
            && other.bottom() <= self.bottom()
    }

    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        (x1 > x0 && y1 > y0).then(|| BBox::new(x0, y0, x1 - x0, y1 - y0))
    }

    pub fn intersection_area(&self, other: &BBox) -> usize {
        self.intersection(other).map_or(0, |b| b.area())
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let inter = self.intersection_area(other) as f64;
        let union = (self.area() + other.area()) as f64 - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    /// Smallest box covering both.
    pub fn union(&self, other: &BBox) -> BBox {
        let x0 = self.x.min(other.x);
        let y0 = self.y.min(other.y);
        let x1 = self.right().max(other.right());
        let y1 = self.bottom().max(other.bottom());
        BBox::new(x0, y0, x1 - x0, y1 - y0)
    }

    /// Grows the box by `pad` on every side, clipped to a `width`x`height` image.
    pub fn padded(&self, pad: usize, width: usize, height: usize) -> BBox {
        let x0 = self.x.saturating_sub(pad);
        let y0 = self.y.saturating_sub(pad);
        let x1 = (self.right() + pad).min(width);
        let y1 = (self.bottom() + pad).min(height);
        BBox::new(x0, y0, x1 - x0, y1 - y0)
    }

    pub fn translated(&self, dx: isize, dy: isize) -> BBox {
        BBox::new(
            (self.x as isize + dx) as usize,
            (self.y as isize + dy) as usize,
            self.w,
            self.h,
        )
    }
}
