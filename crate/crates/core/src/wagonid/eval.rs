//! Detection scoring against ground-truth glyph boxes.
//!
//! A region *contains* a glyph when it covers at least [`COVERAGE`] of the
//! glyph's area. Matching is one-to-one: glyphs are taken left to right and
//! each claims the first unclaimed region containing it. Unclaimed glyphs are
//! false negatives; regions containing no glyph at all are false positives, so
//! a region spanning two glyphs scores one hit and one miss.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::BBox;

pub const COVERAGE: f64 = 0.8;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub fp: usize,
}

impl Counts {
    fn denom(&self) -> f64 {
        (self.tp + self.fn_) as f64
    }

    fn pct(&self, n: usize) -> f64 {
        if self.tp + self.fn_ == 0 {
            0.0
        } else {
            100.0 * n as f64 / self.denom()
        }
    }

    /// `TP / (TP + FN)`, in percent.
    pub fn accuracy(&self) -> f64 {
        self.pct(self.tp)
    }

    pub fn fn_rate(&self) -> f64 {
        self.pct(self.fn_)
    }

    /// False positives per positive, in percent.
    pub fn fp_rate(&self) -> f64 {
        self.pct(self.fp)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SegmentationMetrics {
    pub characters: Counts,
    /// One positive per image: hit when every glyph is matched.
    pub full_id: Counts,
}

pub fn contains_glyph(region: &BBox, glyph: &BBox) -> bool {
    region.contains_box(glyph) || region.intersection_area(glyph) as f64 >= COVERAGE * glyph.area() as f64
}

/// Character-level counts for one image.
pub fn match_regions(regions: &[BBox], glyphs: &[BBox]) -> Counts {
    let mut order: Vec<usize> = (0..glyphs.len()).collect();
    order.sort_by_key(|&g| (glyphs[g].x, glyphs[g].y, g));
    let mut claimed = vec![false; regions.len()];
    let mut c = Counts::default();
    for g in order {
        match (0..regions.len()).find(|&r| !claimed[r] && contains_glyph(&regions[r], &glyphs[g])) {
            Some(r) => {
                claimed[r] = true;
                c.tp += 1;
            }
            None => c.fn_ += 1,
        }
    }
    c.fp = regions
        .iter()
        .filter(|r| !glyphs.iter().any(|g| contains_glyph(r, g)))
        .count();
    c
}

/// Scores per-image predicted character regions against the truth glyphs.
/// A failed segmentation is passed as an empty region list.
pub fn evaluate_segmentation(predictions: &[Vec<BBox>], truths: &[Vec<BBox>]) -> Result<SegmentationMetrics> {
    if predictions.len() != truths.len() {
        return Err(Error::LengthMismatch {
            predictions: predictions.len(),
            truths: truths.len(),
        });
    }
    let mut m = SegmentationMetrics::default();
    for (regions, glyphs) in predictions.iter().zip(truths) {
        let c = match_regions(regions, glyphs);
        m.characters.tp += c.tp;
        m.characters.fn_ += c.fn_;
        m.characters.fp += c.fp;
        if c.fn_ == 0 {
            m.full_id.tp += 1;
        } else {
            m.full_id.fn_ += 1;
        }
        m.full_id.fp += c.fp;
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(n: usize) -> Vec<BBox> {
        (0..n).map(|i| BBox::new(50 * i, 10, 25, 35)).collect()
    }

    #[test]
    fn perfect_predictions() {
        let truth = row(12);
        let pred: Vec<BBox> = truth.iter().map(|g| g.padded(3, 10_000, 100)).collect();
        let m = evaluate_segmentation(&[pred], &[truth]).unwrap();
        assert_eq!(m.characters, Counts { tp: 12, fn_: 0, fp: 0 });
        assert_eq!(m.characters.accuracy(), 100.0);
        assert_eq!(m.full_id.accuracy(), 100.0);
        assert_eq!(m.full_id.fp_rate(), 0.0);
    }

    #[test]
    fn rate_arithmetic() {
        let c = Counts { tp: 15, fn_: 2, fp: 1 };
        assert_eq!(format!("{:.1}", c.accuracy()), "88.2");
        assert_eq!(format!("{:.1}", c.fn_rate()), "11.8");
        assert_eq!(format!("{:.1}", c.fp_rate()), "5.9");
        let ids = Counts { tp: 30, fn_: 4, fp: 5 };
        assert_eq!(format!("{:.2}", ids.fp_rate()), "14.71");
    }

    #[test]
    fn merged_region_is_one_hit_one_miss() {
        let truth = row(12);
        let mut pred: Vec<BBox> = truth.iter().map(|g| g.padded(2, 10_000, 100)).collect();
        let merged = pred[2].union(&pred[3]);
        pred.splice(2..4, [merged]);
        let c = match_regions(&pred, &truth);
        assert_eq!(c, Counts { tp: 11, fn_: 1, fp: 0 });
        let m = evaluate_segmentation(&[pred], &[truth]).unwrap();
        assert_eq!(m.full_id, Counts { tp: 0, fn_: 1, fp: 0 });
    }

    #[test]
    fn empty_region_list_misses_everything() {
        let m = evaluate_segmentation(&[vec![]], &[row(12)]).unwrap();
        assert_eq!(m.characters, Counts { tp: 0, fn_: 12, fp: 0 });
    }

    #[test]
    fn stray_region_is_false_positive() {
        let truth = row(3);
        let mut pred = truth.clone();
        pred.push(BBox::new(900, 500, 20, 20));
        assert_eq!(match_regions(&pred, &truth), Counts { tp: 3, fn_: 0, fp: 1 });
    }

    #[test]
    fn misaligned_lists_rejected() {
        assert!(evaluate_segmentation(&[vec![]], &[]).is_err());
    }
}
