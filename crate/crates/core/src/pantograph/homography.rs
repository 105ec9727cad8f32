//! Projective model fitting: normalized DLT, RANSAC and the plausibility
//! check applied to the fitted template-to-scene mapping.

use nalgebra::{DMatrix, Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::BBox;

pub type Point = (f64, f64);

/// Row-major 3x3 with `h33 = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Homography(pub [[f64; 3]; 3]);

impl Homography {
    pub const IDENTITY: Homography = Homography([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    /// Scales so that `h33 = 1`; `None` when `|h33| < 1e-12`.
    pub fn normalized(m: Matrix3<f64>) -> Option<Self> {
        let h33 = m[(2, 2)];
        if h33.abs() < 1e-12 || m.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let m = m / h33;
        Some(Homography(std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)]))))
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|r, c| self.0[r][c])
    }

    /// Maps a point; `None` when it lands on or behind the line at infinity.
    pub fn apply(&self, p: Point) -> Option<Point> {
        let h = &self.0;
        let w = h[2][0] * p.0 + h[2][1] * p.1 + h[2][2];
        if w <= 1e-12 {
            return None;
        }
        Some((
            (h[0][0] * p.0 + h[0][1] * p.1 + h[0][2]) / w,
            (h[1][0] * p.0 + h[1][1] * p.1 + h[1][2]) / w,
        ))
    }

    pub fn reprojection_error(&self, src: Point, dst: Point) -> f64 {
        self.apply(src)
            .map_or(f64::INFINITY, |q| ((q.0 - dst.0).powi(2) + (q.1 - dst.1).powi(2)).sqrt())
    }
}

/// Similarity moving the centroid to the origin with mean distance sqrt(2).
fn normalizer(pts: &[Point]) -> Matrix3<f64> {
    let n = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (mx, my) = (mx / n, my / n);
    let mean_d = pts.iter().map(|p| ((p.0 - mx).powi(2) + (p.1 - my).powi(2)).sqrt()).sum::<f64>() / n;
    let s = if mean_d > 0.0 { std::f64::consts::SQRT_2 / mean_d } else { 1.0 };
    Matrix3::new(s, 0.0, -s * mx, 0.0, s, -s * my, 0.0, 0.0, 1.0)
}

fn transform(t: &Matrix3<f64>, p: Point) -> Point {
    let v = t * Vector3::new(p.0, p.1, 1.0);
    (v[0] / v[2], v[1] / v[2])
}

/// Normalized direct linear transform over at least four correspondences.
pub fn fit_dlt(src: &[Point], dst: &[Point]) -> Option<Homography> {
    let n = src.len();
    if n < 4 || dst.len() != n {
        return None;
    }
    let (ts, td) = (normalizer(src), normalizer(dst));
    // zero rows pad the system to square so the null vector is among the
    // right singular vectors
    let rows = (2 * n).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for i in 0..n {
        let (x, y) = transform(&ts, src[i]);
        let (u, v) = transform(&td, dst[i]);
        let r = 2 * i;
        a.row_mut(r).copy_from_slice(&[-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u]);
        a.row_mut(r + 1).copy_from_slice(&[0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v]);
    }
    let svd = a.svd(false, true);
    let vt = svd.v_t?;
    let (k, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |b, (i, &s)| if s < b.1 { (i, s) } else { b });
    let h = vt.row(k);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let inv = td.try_inverse()?;
    Homography::normalized(inv * hn * ts)
}

fn collinear(a: Point, b: Point, c: Point) -> bool {
    let cross = (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
    let scale = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).max((c.0 - a.0).powi(2) + (c.1 - a.1).powi(2));
    cross.abs() <= 1e-6 * scale.max(1e-12)
}

fn degenerate_sample(pts: &[Point; 4]) -> bool {
    (0..4).any(|skip| {
        let t: Vec<Point> = (0..4).filter(|&i| i != skip).map(|i| pts[i]).collect();
        collinear(t[0], t[1], t[2])
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProjectiveFit {
    pub h: Homography,
    /// Ascending indices of the correspondences within `tol` of the model.
    pub inliers: Vec<usize>,
}

fn inliers_of(h: &Homography, src: &[Point], dst: &[Point], tol: f64) -> Vec<usize> {
    (0..src.len()).filter(|&i| h.reprojection_error(src[i], dst[i]) <= tol).collect()
}

/// RANSAC over 4-point samples followed by a DLT refit on the best inlier set.
///
/// Samples with three collinear points on either side are redrawn, up to
/// `10 * iters` draws in total. The refit replaces the best hypothesis only
/// if it keeps at least as many inliers.
pub fn ransac_fit_projective(src: &[Point], dst: &[Point], iters: usize, tol: f64, rng_seed: u64) -> Result<ProjectiveFit> {
    let n = src.len();
    if n < 4 || dst.len() != n {
        return Err(Error::InsufficientMatches(n.min(dst.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut best: Option<ProjectiveFit> = None;
    let (mut evaluated, mut draws) = (0, 0);
    while evaluated < iters && draws < 10 * iters.max(1) {
        draws += 1;
        let idx = rand::seq::index::sample(&mut rng, n, 4);
        let pick: [usize; 4] = std::array::from_fn(|i| idx.index(i));
        let s4 = pick.map(|i| src[i]);
        let d4 = pick.map(|i| dst[i]);
        if degenerate_sample(&s4) || degenerate_sample(&d4) {
            continue;
        }
        evaluated += 1;
        let Some(h) = fit_dlt(&s4, &d4) else { continue };
        let inl = inliers_of(&h, src, dst, tol);
        if best.as_ref().is_none_or(|b| inl.len() > b.inliers.len()) {
            best = Some(ProjectiveFit { h, inliers: inl });
        }
    }
    let best = best.ok_or(Error::InsufficientMatches(n))?;
    let s: Vec<Point> = best.inliers.iter().map(|&i| src[i]).collect();
    let d: Vec<Point> = best.inliers.iter().map(|&i| dst[i]).collect();
    if let Some(h) = fit_dlt(&s, &d) {
        let inl = inliers_of(&h, src, dst, tol);
        if inl.len() >= best.inliers.len() {
            return Ok(ProjectiveFit { h, inliers: inl });
        }
    }
    Ok(best)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rejection {
    TooFewInliers,
    BehindCamera,
    NotConvexOrFlipped,
    AreaRatio,
    OutOfFrame,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Consistency {
    pub accepted: bool,
    pub rejection: Option<Rejection>,
    /// Set when accepted: bound of the warped template clipped to the scene.
    pub p_bbox: Option<BBox>,
}

/// Fraction of the scene size by which warped corners may leave the frame.
pub const FRAME_MARGIN: f64 = 0.1;
pub const AREA_RATIO_RANGE: (f64, f64) = (0.25, 4.0);

/// Accepts a template-to-scene mapping when it has `min_inliers` support,
/// keeps the warped template a convex quadrilateral with the original corner
/// winding, scales its area by a factor in [`AREA_RATIO_RANGE`], and keeps
/// every corner within the scene grown by [`FRAME_MARGIN`].
pub fn check_geom_consistency(
    h: &Homography,
    inliers: usize,
    template: (usize, usize),
    scene: (usize, usize),
    min_inliers: usize,
) -> Consistency {
    let reject = |r| Consistency {
        accepted: false,
        rejection: Some(r),
        p_bbox: None,
    };
    if inliers < min_inliers {
        return reject(Rejection::TooFewInliers);
    }
    let (tw, th) = (template.0 as f64, template.1 as f64);
    let mut quad = [(0.0, 0.0); 4];
    for (q, c) in quad.iter_mut().zip([(0.0, 0.0), (tw, 0.0), (tw, th), (0.0, th)]) {
        match h.apply(c) {
            Some(p) => *q = p,
            None => return reject(Rejection::BehindCamera),
        }
    }
    // template corners wind with positive cross products in image axes
    let convex = (0..4).all(|i| {
        let (a, b, c) = (quad[i], quad[(i + 1) % 4], quad[(i + 2) % 4]);
        (b.0 - a.0) * (c.1 - b.1) - (b.1 - a.1) * (c.0 - b.0) > 0.0
    });
    if !convex {
        return reject(Rejection::NotConvexOrFlipped);
    }
    let area = 0.5 * (0..4).map(|i| quad[i].0 * quad[(i + 1) % 4].1 - quad[(i + 1) % 4].0 * quad[i].1).sum::<f64>();
    let ratio = area / (tw * th);
    if !(AREA_RATIO_RANGE.0..=AREA_RATIO_RANGE.1).contains(&ratio) {
        return reject(Rejection::AreaRatio);
    }
    let (sw, sh) = (scene.0 as f64, scene.1 as f64);
    let (mx, my) = (FRAME_MARGIN * sw, FRAME_MARGIN * sh);
    if quad.iter().any(|p| p.0 < -mx || p.0 > sw + mx || p.1 < -my || p.1 > sh + my) {
        return reject(Rejection::OutOfFrame);
    }
    let x0 = quad.iter().map(|p| p.0).fold(f64::INFINITY, f64::min).floor().clamp(0.0, sw);
    let y0 = quad.iter().map(|p| p.1).fold(f64::INFINITY, f64::min).floor().clamp(0.0, sh);
    let x1 = quad.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max).ceil().clamp(0.0, sw);
    let y1 = quad.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max).ceil().clamp(0.0, sh);
    if x1 <= x0 || y1 <= y0 {
        return reject(Rejection::OutOfFrame);
    }
    Consistency {
        accepted: true,
        rejection: None,
        p_bbox: Some(BBox::new(x0 as usize, y0 as usize, (x1 - x0) as usize, (y1 - y0) as usize)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;

    fn planted() -> Homography {
        Homography([[0.9, 0.12, 40.0], [-0.05, 1.05, 22.0], [1.5e-4, -8e-5, 1.0]])
    }

    fn corner_error(a: &Homography, b: &Homography, w: f64, h: f64) -> f64 {
        [(0.0, 0.0), (w, 0.0), (w, h), (0.0, h)]
            .iter()
            .map(|&c| {
                let (p, q) = (a.apply(c).unwrap(), b.apply(c).unwrap());
                ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// Correspondences from `h`, with `outliers` of them displaced well beyond `tol`.
    fn planted_matches(h: &Homography, n: usize, outliers: usize, seed: u64) -> (Vec<Point>, Vec<Point>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut src = Vec::new();
        let mut dst = Vec::new();
        let mut truth = Vec::new();
        for i in 0..n {
            let p = (rng.random_range(0.0..300.0), rng.random_range(0.0..200.0));
            let q = h.apply(p).unwrap();
            if i < outliers {
                loop {
                    let r = (rng.random_range(0.0..600.0), rng.random_range(0.0..400.0));
                    if ((r.0 - q.0).powi(2) + (r.1 - q.1).powi(2)).sqrt() > 20.0 {
                        dst.push(r);
                        break;
                    }
                }
            } else {
                dst.push(q);
                truth.push(i);
            }
            src.push(p);
        }
        (src, dst, truth)
    }

    #[test]
    fn dlt_recovers_exact_homography() {
        let h = planted();
        let (src, dst, _) = planted_matches(&h, 12, 0, 1);
        let fit = fit_dlt(&src, &dst).unwrap();
        assert!(corner_error(&fit, &h, 300.0, 200.0) <= 1e-6);
        assert_eq!(fit.0[2][2], 1.0);
    }

    #[test]
    fn identity_correspondences() {
        let pts: Vec<Point> = (0..10).map(|i| ((i * 37 % 101) as f64, (i * 53 % 89) as f64)).collect();
        let fit = ransac_fit_projective(&pts, &pts, 200, 1.0, 3).unwrap();
        assert_eq!(fit.inliers.len(), 10);
        assert!(corner_error(&fit.h, &Homography::IDENTITY, 100.0, 100.0) < 1e-9);
    }

    #[test]
    fn sixty_percent_outliers() {
        let h = planted();
        for seed in 0..5 {
            let (src, dst, truth) = planted_matches(&h, 100, 60, seed);
            let fit = ransac_fit_projective(&src, &dst, 1000, 3.0, seed).unwrap();
            assert_eq!(fit.inliers, truth);
            assert!(corner_error(&fit.h, &h, 300.0, 200.0) <= 1e-3);
        }
    }

    #[test]
    fn too_few_matches() {
        let p = vec![(0.0, 0.0); 3];
        assert!(matches!(ransac_fit_projective(&p, &p, 10, 1.0, 0), Err(Error::InsufficientMatches(3))));
    }

    #[test]
    fn deterministic_under_seed() {
        let (src, dst, _) = planted_matches(&planted(), 60, 30, 9);
        assert_eq!(
            ransac_fit_projective(&src, &dst, 300, 3.0, 4).unwrap(),
            ransac_fit_projective(&src, &dst, 300, 3.0, 4).unwrap()
        );
    }

    #[test]
    fn consistency_identity_accepts() {
        let c = check_geom_consistency(&Homography::IDENTITY, 8, (120, 80), (640, 480), 8);
        assert!(c.accepted);
        assert_eq!(c.p_bbox, Some(BBox::new(0, 0, 120, 80)));
        assert!(!check_geom_consistency(&Homography::IDENTITY, 7, (120, 80), (640, 480), 8).accepted);
    }

    #[test]
    fn consistency_rejects_reflection() {
        // mirror about the template's vertical centre line
        let h = Homography([[-1.0, 0.0, 120.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        let c = check_geom_consistency(&h, 50, (120, 80), (640, 480), 8);
        assert_eq!(c.rejection, Some(Rejection::NotConvexOrFlipped));
    }

    #[test]
    fn consistency_rejects_fivefold_scale() {
        let h = Homography([[5.0, 0.0, 0.0], [0.0, 5.0, 0.0], [0.0, 0.0, 1.0]]);
        let c = check_geom_consistency(&h, 50, (100, 80), (2000, 2000), 8);
        assert_eq!(c.rejection, Some(Rejection::AreaRatio));
    }

    #[test]
    fn consistency_rejects_far_out_of_frame() {
        let h = Homography([[1.0, 0.0, 700.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        let c = check_geom_consistency(&h, 50, (100, 80), (640, 480), 8);
        assert_eq!(c.rejection, Some(Rejection::OutOfFrame));
    }

    #[test]
    fn normalization_rejects_vanishing_h33() {
        assert!(Homography::normalized(Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1e-13)).is_none());
        let h = Homography::normalized(Matrix3::identity() * 4.0).unwrap();
        assert_eq!(h, Homography::IDENTITY);
    }
}
