//! Template-based pantograph detection in roof-view mosaics.
//!
//! Offline, the template's keypoint descriptors are indexed in a KD-tree.
//! Online, each scene window is described the same way, descriptors are
//! matched to the template under a nearest/second-nearest ratio test, a
//! homography is fitted robustly and the warped template outline is checked
//! for plausibility.

mod homography;
mod kdtree;
mod model;
mod sift;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use homography::{
    check_geom_consistency, fit_dlt, ransac_fit_projective, Consistency, Homography, Point, ProjectiveFit, Rejection,
    AREA_RATIO_RANGE, FRAME_MARGIN,
};
pub use kdtree::{dist2, KdTree, Neighbor, Search};
pub use model::{FeatureModel, PGFM_MAGIC};
pub use sift::{extract_features, Descriptor, Keypoint, SiftParams, DESCRIPTOR_LEN, MIN_SIDE};

use crate::error::{Error, Result};
use crate::imgcore::{BBox, GrayImage};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub template: usize,
    pub scene: usize,
    pub d1: f64,
    pub d2: f64,
}

/// Scene-to-template matches passing `d1 / d2 <= ratio`; a zero second
/// distance passes.
pub fn match_descriptors(model: &FeatureModel, scene: &[Descriptor], ratio: f64, mode: Search) -> Vec<Match> {
    scene
        .iter()
        .enumerate()
        .filter_map(|(s, d)| {
            let [a, b] = model.index.nearest2(d, mode);
            let pass = b.dist == 0.0 || a.dist <= ratio * b.dist;
            pass.then_some(Match {
                template: a.index,
                scene: s,
                d1: a.dist,
                d2: b.dist,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PantographConfig {
    pub ratio: f64,
    pub ransac_iters: usize,
    pub ransac_tol: f64,
    pub min_inliers: usize,
    /// Relative error bound of the online index; `None` searches exactly.
    pub index_epsilon: Option<f64>,
    pub sift: SiftParams,
}

impl Default for PantographConfig {
    fn default() -> Self {
        Self {
            ratio: 0.67,
            ransac_iters: 1000,
            ransac_tol: 3.0,
            min_inliers: 8,
            index_epsilon: Some(0.05),
            sift: SiftParams::default(),
        }
    }
}

impl PantographConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return Err(Error::InvalidParam {
                name: "ratio",
                reason: "must lie in (0, 1]".into(),
            });
        }
        if !(self.ransac_tol > 0.0) || self.ransac_iters == 0 {
            return Err(Error::InvalidParam {
                name: "ransac",
                reason: "iterations and tolerance must be positive".into(),
            });
        }
        Ok(())
    }

    fn search(&self) -> Search {
        self.index_epsilon.map_or(Search::Exact, Search::Approximate)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PantographDetection {
    pub found: bool,
    pub homography: Option<Homography>,
    pub inliers: usize,
    pub p_bbox: Option<BBox>,
    /// Scene columns of the window that produced the result.
    pub window: Option<BBox>,
    pub rejection: Option<Rejection>,
}

impl PantographDetection {
    fn none() -> Self {
        Self {
            found: false,
            homography: None,
            inliers: 0,
            p_bbox: None,
            window: None,
            rejection: None,
        }
    }
}

/// Window origins: width `2 * template width` (capped by the scene), stride
/// half a window, the last window flush with the right edge.
pub fn window_origins(scene_w: usize, template_w: usize) -> (usize, Vec<usize>) {
    let win = (2 * template_w).clamp(1, scene_w.max(1));
    let stride = (win / 2).max(1);
    let mut xs: Vec<usize> = (0..).map(|i| i * stride).take_while(|&x| x + win < scene_w).collect();
    xs.push(scene_w.saturating_sub(win));
    xs.dedup();
    (win, xs)
}

fn detect_in_window(scene: &GrayImage, x0: usize, win: usize, model: &FeatureModel, cfg: &PantographConfig, seed: u64) -> Result<PantographDetection> {
    let window = BBox::new(x0, 0, win, scene.height());
    let crop = scene.crop(window)?;
    let mut det = PantographDetection {
        window: Some(window),
        ..PantographDetection::none()
    };
    let (kps, descs) = match extract_features(&crop, &cfg.sift) {
        Ok(f) => f,
        Err(Error::ImageTooSmall { .. }) => return Ok(det),
        Err(e) => return Err(e),
    };
    let matches = match_descriptors(model, &descs, cfg.ratio, cfg.search());
    if matches.len() < 4 {
        return Ok(det);
    }
    let src: Vec<Point> = matches
        .iter()
        .map(|m| (model.keypoints[m.template].x as f64, model.keypoints[m.template].y as f64))
        .collect();
    let dst: Vec<Point> = matches
        .iter()
        .map(|m| (kps[m.scene].x as f64 + x0 as f64, kps[m.scene].y as f64))
        .collect();
    let fit = match ransac_fit_projective(&src, &dst, cfg.ransac_iters, cfg.ransac_tol, seed ^ x0 as u64) {
        Ok(f) => f,
        Err(Error::InsufficientMatches(_)) => return Ok(det),
        Err(e) => return Err(e),
    };
    let c = check_geom_consistency(
        &fit.h,
        fit.inliers.len(),
        (model.width, model.height),
        (scene.width(), scene.height()),
        cfg.min_inliers,
    );
    det.found = c.accepted;
    det.homography = Some(fit.h);
    det.inliers = fit.inliers.len();
    det.p_bbox = c.p_bbox;
    det.rejection = c.rejection;
    Ok(det)
}

/// Runs every window and keeps the accepted one with the most inliers,
/// leftmost on ties. A scene with no accepted window yields `found = false`.
pub fn detect_pantograph(scene: &GrayImage, model: &FeatureModel, cfg: &PantographConfig, seed: u64) -> Result<PantographDetection> {
    cfg.validate()?;
    let (win, xs) = window_origins(scene.width(), model.width);
    let results: Vec<PantographDetection> = xs
        .par_iter()
        .map(|&x0| detect_in_window(scene, x0, win, model, cfg, seed))
        .collect::<Result<_>>()?;
    Ok(results
        .into_iter()
        .filter(|d| d.found)
        .fold(None, |best: Option<PantographDetection>, d| match best {
            Some(b) if b.inliers >= d.inliers => Some(b),
            _ => Some(d),
        })
        .unwrap_or_else(PantographDetection::none))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::roof::{pantograph_template, render_roof, Placement, RoofScene};

    fn model() -> FeatureModel {
        FeatureModel::build(&pantograph_template(0), &SiftParams::default()).unwrap()
    }

    #[test]
    fn windows_cover_scene() {
        assert_eq!(window_origins(1000, 200), (400, vec![0, 200, 400, 600]));
        assert_eq!(window_origins(300, 200), (300, vec![0]));
        assert_eq!(window_origins(1050, 200), (400, vec![0, 200, 400, 600, 650]));
    }

    #[test]
    fn ratio_extremes() {
        let m = model();
        let scene = pantograph_template(0);
        let (_, d) = extract_features(&scene, &SiftParams::default()).unwrap();
        assert_eq!(match_descriptors(&m, &d, 1.0, Search::Exact).len(), d.len());
        let noisy: Vec<Descriptor> = d.iter().map(|x| {
            let mut y = *x;
            y[0] += 0.01;
            y
        }).collect();
        assert!(match_descriptors(&m, &noisy, 1e-9, Search::Exact).is_empty());
    }

    #[test]
    fn ratio_monotone() {
        let m = model();
        let r = render_roof(&RoofScene { seed: 4, ..RoofScene::default() }, &pantograph_template(0));
        let (_, d) = extract_features(&r.image, &SiftParams::default()).unwrap();
        let mut prev: Vec<Match> = Vec::new();
        for tau in [0.3, 0.5, 0.67, 0.8, 1.0] {
            let cur = match_descriptors(&m, &d, tau, Search::Exact);
            assert!(prev.iter().all(|p| cur.contains(p)));
            prev = cur;
        }
    }

    #[test]
    fn pasted_template_is_found() {
        let t = pantograph_template(0);
        let mut scene = RoofScene { seed: 11, pantograph: None, ..RoofScene::default() };
        let bg = render_roof(&scene, &t).image;
        let mut img = bg.clone();
        img.paste(&t, 300, 100);
        let det = detect_pantograph(&img, &model(), &PantographConfig::default(), 0).unwrap();
        assert!(det.found);
        let truth = BBox::new(300, 100, t.width(), t.height());
        assert!(det.p_bbox.unwrap().iou(&truth) >= 0.8, "{:?}", det.p_bbox);

        scene.seed = 12;
        let neg = render_roof(&scene, &t).image;
        assert!(!detect_pantograph(&neg, &model(), &PantographConfig::default(), 0).unwrap().found);
    }

    #[test]
    fn warped_positive_found() {
        let t = pantograph_template(0);
        let scene = RoofScene {
            seed: 5,
            pantograph: Some(Placement { center: (520.0, 190.0), rotation_deg: 8.0, shear_deg: 12.0, scale: 1.05, perspective: (2e-4, -1e-4) }),
            gain: 0.8,
            ..RoofScene::default()
        };
        let r = render_roof(&scene, &t);
        let det = detect_pantograph(&r.image, &model(), &PantographConfig::default(), 3).unwrap();
        assert!(det.found, "{det:?}");
        assert!(det.p_bbox.unwrap().iou(&r.bbox.unwrap()) >= 0.8);
    }

    #[test]
    fn gain_does_not_flip_detection() {
        let t = pantograph_template(0);
        let bg = render_roof(&RoofScene { seed: 21, ..RoofScene::default() }, &t).image;
        let mut img = bg.clone();
        img.paste(&t, 600, 150);
        let m = model();
        for g in [0.7, 0.85, 1.0, 1.15, 1.3] {
            let scaled = GrayImage::from_fn(img.width(), img.height(), |x, y| {
                (img.get(x, y) as f64 * g).round().min(255.0) as u8
            })
            .unwrap();
            let clipped = scaled.data().iter().filter(|&&v| v == 255).count();
            assert!(clipped * 20 < scaled.data().len());
            assert!(detect_pantograph(&scaled, &m, &PantographConfig::default(), 1).unwrap().found, "gain {g}");
        }
    }
}
