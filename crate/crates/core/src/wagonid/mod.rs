//! Wagon identifier localisation in side-view line-scan mosaics.
//!
//! The mosaic is thresholded, edge-detected, dilated and hole-filled into
//! blob components. A sliding window fits lines through the blobs'
//! bottom-right corners and every inlier earns a vote; the best-voted blobs
//! that also sit close to the group's median corner form the identifier.

mod eval;
mod ransac;
mod voting;

use serde::{Deserialize, Serialize};

pub use eval::{contains_glyph, evaluate_segmentation, match_regions, Counts, SegmentationMetrics, COVERAGE};
pub use ransac::ransac_fit_line;
pub use voting::{select_cc, top_components, vote_sweep, weight_votes, VoteVector};

use crate::error::{Error, Result};
use crate::imgcore::{
    canny_from_threshold, connected_components, dilate_disk, fill_holes, otsu_threshold, BBox, BinaryImage, GrayImage,
};

/// Pixels beyond a pixel that can influence its edge classification:
/// Gaussian radius, Sobel and non-maximum suppression.
const CANNY_SUPPORT: usize = 7;

/// Fewer surviving character regions than this means no plausible identifier.
pub const MIN_CHAR_BOXES: usize = 6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentationParams {
    pub r_d: usize,
    /// Side of the sliding window.
    pub d: usize,
    /// Window step.
    pub s: usize,
    pub ransac_iters: usize,
    pub ransac_inlier_tol: f64,
    pub min_window_points: usize,
    pub top_k: usize,
    pub min_component_area: usize,
    /// Components taller than this fraction of the image height are structure, not text.
    pub max_component_height_frac: f64,
    /// Components wider than this are dropped; defaults to `d`.
    pub max_component_width: Option<usize>,
    /// Width of the column range each strip owns during preprocessing.
    pub strip_width: usize,
}

impl Default for SegmentationParams {
    fn default() -> Self {
        Self {
            r_d: 3,
            d: 512,
            s: 128,
            ransac_iters: 200,
            ransac_inlier_tol: 5.0,
            min_window_points: 5,
            top_k: 20,
            min_component_area: 20,
            max_component_height_frac: 0.25,
            max_component_width: None,
            strip_width: 8192,
        }
    }
}

impl SegmentationParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |name: &'static str, reason: &str| {
            Err(Error::InvalidParam {
                name,
                reason: reason.into(),
            })
        };
        if self.d == 0 {
            return bad("d", "window side must be positive");
        }
        if self.s == 0 || self.s > self.d {
            return bad("s", "step must satisfy 0 < s <= d");
        }
        if !(self.ransac_inlier_tol > 0.0) {
            return bad("ransac_inlier_tol", "must be positive");
        }
        if self.top_k < 2 {
            return bad("top_k", "must be at least 2");
        }
        if self.strip_width == 0 {
            return bad("strip_width", "must be positive");
        }
        if !(0.0..=1.0).contains(&self.max_component_height_frac) {
            return bad("max_component_height_frac", "must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn max_width(&self) -> usize {
        self.max_component_width.unwrap_or(self.d)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedLine {
    pub slope: f64,
    pub intercept: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdSegmentation {
    pub id_box: BBox,
    pub char_boxes: Vec<BBox>,
    pub votes: VoteVector,
    /// Least-squares line through the character boxes' bottom-right corners.
    pub fitted_line: FittedLine,
    pub otsu_threshold: u8,
    /// Components that passed the size gate, in raster order of their first pixel.
    pub components: Vec<BBox>,
}

/// Candidate text blobs: edges at `tau`, dilation, hole filling.
pub fn preprocess(img: &GrayImage, tau: f64, r_d: usize) -> BinaryImage {
    fill_holes(&dilate_disk(&canny_from_threshold(img, tau), r_d))
}

#[derive(Clone, Copy, Debug)]
struct Region {
    bbox: BBox,
    area: usize,
    anchor: (usize, usize),
}

fn passes_gate(b: &BBox, area: usize, img_h: usize, p: &SegmentationParams) -> bool {
    area >= p.min_component_area
        && b.h as f64 <= p.max_component_height_frac * img_h as f64
        && b.w <= p.max_width()
}

/// Gated components of the preprocessed mosaic, in raster order of their
/// first pixel.
///
/// The columns are split into runs of `strip_width`; each run is processed
/// with enough context on both sides that every kept component is computed
/// exactly as on the whole image, and a component belongs to the strip whose
/// run holds its left edge.
fn extract_regions(img: &GrayImage, tau: f64, p: &SegmentationParams) -> Result<Vec<Region>> {
    let (w, h) = (img.width(), img.height());
    let margin = CANNY_SUPPORT + p.r_d + 2;
    let pad = p.max_width() + margin;
    let mut out = Vec::new();
    for x0 in (0..w).step_by(p.strip_width) {
        let x1 = (x0 + p.strip_width).min(w);
        let sx0 = x0.saturating_sub(pad);
        let sx1 = (x1 + pad).min(w);
        let strip = img.crop(BBox::new(sx0, 0, sx1 - sx0, h))?;
        let cc = connected_components(&preprocess(&strip, tau, p.r_d));
        for i in 0..cc.len() {
            let b = cc.boxes[i].translated(sx0 as isize, 0);
            let interior = (sx0 == 0 || b.x >= sx0 + margin) && (sx1 == w || b.right() + margin <= sx1);
            if (x0..x1).contains(&b.x) && interior && passes_gate(&b, cc.areas[i], h, p) {
                let (ax, ay) = cc.anchors[i];
                out.push(Region {
                    bbox: b,
                    area: cc.areas[i],
                    anchor: (ax + sx0, ay),
                });
            }
        }
    }
    out.sort_by_key(|r| (r.anchor.1, r.anchor.0));
    Ok(out)
}

fn least_squares(points: &[(f64, f64)]) -> FittedLine {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    FittedLine {
        slope,
        intercept: my - slope * mx,
    }
}

/// Locates the identifier and its character regions.
pub fn segment_wagon_id(img: &GrayImage, params: &SegmentationParams, rng_seed: u64) -> Result<IdSegmentation> {
    params.validate()?;
    let otsu = otsu_threshold(img);
    if otsu.degenerate {
        return Err(Error::NoCandidates);
    }
    let dims = (img.width(), img.height());
    let regions = extract_regions(img, otsu.threshold as f64, params)?;
    let boxes: Vec<BBox> = regions.iter().map(|r| r.bbox).collect();
    let areas: Vec<usize> = regions.iter().map(|r| r.area).collect();
    let votes = vote_sweep(&boxes, dims, params, rng_seed);
    let vv = weight_votes(&boxes, &areas, &votes, params.top_k, dims)?;

    let mut char_boxes: Vec<BBox> = (0..boxes.len()).filter(|&i| vv.weighted[i] > 0.0).map(|i| boxes[i]).collect();
    char_boxes.sort_by_key(|b| (b.x, b.y));
    if char_boxes.len() < MIN_CHAR_BOXES {
        return Err(Error::LowConfidence {
            found: char_boxes.len(),
        });
    }
    let id_box = char_boxes
        .iter()
        .skip(1)
        .fold(char_boxes[0], |acc, b| acc.union(b))
        .padded(params.r_d, dims.0, dims.1);
    let corners: Vec<(f64, f64)> = char_boxes.iter().map(|b| (b.right() as f64, b.bottom() as f64)).collect();

    Ok(IdSegmentation {
        id_box,
        char_boxes,
        votes: vv,
        fitted_line: least_squares(&corners),
        otsu_threshold: otsu.threshold,
        components: boxes,
    })
}
