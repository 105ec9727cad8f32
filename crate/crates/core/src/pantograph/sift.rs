//! Scale-invariant keypoints and 128-bin gradient descriptors.
//!
//! Difference-of-Gaussian extrema over `octaves` octaves with `scales`
//! intervals each, sub-pixel refinement by a quadratic fit, low-contrast and
//! edge-response rejection, dominant orientations from a 36-bin histogram and
//! a 4x4x8 orientation-histogram descriptor. The input is not upsampled, so
//! the first octave runs at native resolution.

use std::f32::consts::TAU;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::GrayImage;

pub const DESCRIPTOR_LEN: usize = 128;
pub type Descriptor = [f32; DESCRIPTOR_LEN];

/// Smallest side accepted by [`extract_features`].
pub const MIN_SIDE: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f32,
    pub y: f32,
    pub scale: f32,
    /// Radians in `[0, 2pi)`, image axes (y down).
    pub orientation: f32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SiftParams {
    pub octaves: usize,
    pub scales: usize,
    pub sigma0: f32,
    pub contrast_threshold: f32,
    pub edge_ratio: f32,
}

impl Default for SiftParams {
    fn default() -> Self {
        Self {
            octaves: 3,
            scales: 3,
            sigma0: 1.6,
            contrast_threshold: 0.03,
            edge_ratio: 10.0,
        }
    }
}

/// Blur already present in the input image.
const INPUT_SIGMA: f32 = 0.5;
const BORDER: usize = 5;
const MAX_INTERP_STEPS: usize = 5;
const ORI_BINS: usize = 36;
const ORI_PEAK_RATIO: f32 = 0.8;
const ORI_SIGMA_FACTOR: f32 = 1.5;
const DESC_WIDTH: usize = 4;
const DESC_BINS: usize = 8;
const DESC_SCALE_FACTOR: f32 = 3.0;
const DESC_CLIP: f32 = 0.2;

#[derive(Clone)]
struct Plane {
    w: usize,
    h: usize,
    data: Vec<f32>,
}

impl Plane {
    #[inline]
    fn at(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.w + x]
    }

    fn blur(&self, sigma: f32) -> Plane {
        let r = (4.0 * sigma).ceil().max(1.0) as isize;
        let mut k: Vec<f32> = (-r..=r).map(|i| (-(i * i) as f32 / (2.0 * sigma * sigma)).exp()).collect();
        let s: f32 = k.iter().sum();
        k.iter_mut().for_each(|v| *v /= s);
        let (w, h) = (self.w, self.h);
        let cx = |x: isize| x.clamp(0, w as isize - 1) as usize;
        let cy = |y: isize| y.clamp(0, h as isize - 1) as usize;
        let mut tmp = vec![0f32; w * h];
        for y in 0..h {
            let row = &self.data[y * w..(y + 1) * w];
            for x in 0..w {
                let mut acc = 0.0;
                for (i, &kv) in k.iter().enumerate() {
                    acc += kv * row[cx(x as isize + i as isize - r)];
                }
                tmp[y * w + x] = acc;
            }
        }
        let mut out = vec![0f32; w * h];
        for y in 0..h {
            for (i, &kv) in k.iter().enumerate() {
                let sy = cy(y as isize + i as isize - r);
                let src = &tmp[sy * w..(sy + 1) * w];
                for (o, &v) in out[y * w..(y + 1) * w].iter_mut().zip(src) {
                    *o += kv * v;
                }
            }
        }
        Plane { w, h, data: out }
    }

    fn half(&self) -> Plane {
        let (w, h) = (self.w.div_ceil(2), self.h.div_ceil(2));
        let data = (0..h)
            .flat_map(|y| (0..w).map(move |x| (x, y)))
            .map(|(x, y)| self.at(2 * x, 2 * y))
            .collect();
        Plane { w, h, data }
    }

    fn minus(&self, other: &Plane) -> Plane {
        Plane {
            w: self.w,
            h: self.h,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }
}

struct Octave {
    gauss: Vec<Plane>,
    dog: Vec<Plane>,
}

fn build_octaves(img: &GrayImage, p: &SiftParams) -> Vec<Octave> {
    let s = p.scales;
    let k = 2f32.powf(1.0 / s as f32);
    let incr: Vec<f32> = (0..s + 3)
        .map(|i| {
            if i == 0 {
                0.0
            } else {
                let prev = p.sigma0 * k.powi(i as i32 - 1);
                ((prev * k).powi(2) - prev.powi(2)).sqrt()
            }
        })
        .collect();
    let input = Plane {
        w: img.width(),
        h: img.height(),
        data: img.data().iter().map(|&v| v as f32 / 255.0).collect(),
    };
    let mut base = input.blur((p.sigma0 * p.sigma0 - INPUT_SIGMA * INPUT_SIGMA).max(0.01).sqrt());
    let mut out: Vec<Octave> = Vec::new();
    for o in 0..p.octaves {
        if o > 0 {
            let prev = &out[o - 1].gauss[s];
            if prev.w < 2 * BORDER + 3 || prev.h < 2 * BORDER + 3 {
                break;
            }
            base = prev.half();
        }
        let mut gauss = vec![base.clone()];
        for &sig in &incr[1..] {
            let next = gauss.last().expect("nonempty").blur(sig);
            gauss.push(next);
        }
        let dog = gauss.windows(2).map(|g| g[1].minus(&g[0])).collect();
        out.push(Octave { gauss, dog });
    }
    out
}

fn is_extremum(dog: &[Plane], s: usize, x: usize, y: usize) -> bool {
    let v = dog[s].at(x, y);
    let mut max = true;
    let mut min = true;
    for (li, layer) in dog[s - 1..=s + 1].iter().enumerate() {
        for yy in y - 1..=y + 1 {
            for xx in x - 1..=x + 1 {
                if li == 1 && xx == x && yy == y {
                    continue;
                }
                let n = layer.at(xx, yy);
                max &= v > n;
                min &= v < n;
                if !max && !min {
                    return false;
                }
            }
        }
    }
    max || min
}

struct Refined {
    x: usize,
    y: usize,
    s: usize,
    offset: [f32; 3],
}

fn refine(dog: &[Plane], p: &SiftParams, mut x: usize, mut y: usize, mut s: usize) -> Option<Refined> {
    let (w, h) = (dog[0].w, dog[0].h);
    let mut offset = [0f32; 3];
    let mut grad = Vector3::zeros();
    let mut converged = false;
    for _ in 0..MAX_INTERP_STEPS {
        let (c, prev, next) = (&dog[s], &dog[s - 1], &dog[s + 1]);
        let v = c.at(x, y);
        grad = Vector3::new(
            0.5 * (c.at(x + 1, y) - c.at(x - 1, y)),
            0.5 * (c.at(x, y + 1) - c.at(x, y - 1)),
            0.5 * (next.at(x, y) - prev.at(x, y)),
        );
        let dxx = c.at(x + 1, y) + c.at(x - 1, y) - 2.0 * v;
        let dyy = c.at(x, y + 1) + c.at(x, y - 1) - 2.0 * v;
        let dss = next.at(x, y) + prev.at(x, y) - 2.0 * v;
        let dxy = 0.25 * (c.at(x + 1, y + 1) - c.at(x - 1, y + 1) - c.at(x + 1, y - 1) + c.at(x - 1, y - 1));
        let dxs = 0.25 * (next.at(x + 1, y) - next.at(x - 1, y) - prev.at(x + 1, y) + prev.at(x - 1, y));
        let dys = 0.25 * (next.at(x, y + 1) - next.at(x, y - 1) - prev.at(x, y + 1) + prev.at(x, y - 1));
        let hess = Matrix3::new(dxx, dxy, dxs, dxy, dyy, dys, dxs, dys, dss);
        let sol = -(hess.lu().solve(&grad)?);
        offset = [sol[0], sol[1], sol[2]];
        if offset.iter().all(|o| o.abs() < 0.5) {
            converged = true;
            break;
        }
        if offset.iter().any(|o| o.abs() > 1e3 || !o.is_finite()) {
            return None;
        }
        let nx = x as isize + offset[0].round() as isize;
        let ny = y as isize + offset[1].round() as isize;
        let ns = s as isize + offset[2].round() as isize;
        if ns < 1
            || ns > p.scales as isize
            || nx < BORDER as isize
            || ny < BORDER as isize
            || nx >= (w - BORDER) as isize
            || ny >= (h - BORDER) as isize
        {
            return None;
        }
        (x, y, s) = (nx as usize, ny as usize, ns as usize);
    }
    if !converged {
        return None;
    }

    let c = &dog[s];
    let contrast = c.at(x, y) + 0.5 * (grad[0] * offset[0] + grad[1] * offset[1] + grad[2] * offset[2]);
    if contrast.abs() * (p.scales as f32) < p.contrast_threshold {
        return None;
    }
    let v = c.at(x, y);
    let dxx = c.at(x + 1, y) + c.at(x - 1, y) - 2.0 * v;
    let dyy = c.at(x, y + 1) + c.at(x, y - 1) - 2.0 * v;
    let dxy = 0.25 * (c.at(x + 1, y + 1) - c.at(x - 1, y + 1) - c.at(x + 1, y - 1) + c.at(x - 1, y - 1));
    let tr = dxx + dyy;
    let det = dxx * dyy - dxy * dxy;
    let r = p.edge_ratio;
    if det <= 0.0 || tr * tr * r >= (r + 1.0) * (r + 1.0) * det {
        return None;
    }
    Some(Refined { x, y, s, offset })
}

/// Gradient of `g` at an interior pixel as (magnitude, angle in `[0, 2pi)`).
#[inline]
fn gradient(g: &Plane, x: usize, y: usize) -> (f32, f32) {
    let dx = g.at(x + 1, y) - g.at(x - 1, y);
    let dy = g.at(x, y + 1) - g.at(x, y - 1);
    let a = dy.atan2(dx);
    ((dx * dx + dy * dy).sqrt(), if a < 0.0 { a + TAU } else { a })
}

fn orientations(g: &Plane, x: usize, y: usize, scl: f32) -> Vec<f32> {
    let sigma = ORI_SIGMA_FACTOR * scl;
    let radius = (3.0 * sigma).round() as isize;
    let mut hist = [0f32; ORI_BINS];
    for dy in -radius..=radius {
        let yy = y as isize + dy;
        if yy <= 0 || yy >= g.h as isize - 1 {
            continue;
        }
        for dx in -radius..=radius {
            let xx = x as isize + dx;
            if xx <= 0 || xx >= g.w as isize - 1 {
                continue;
            }
            let (mag, ang) = gradient(g, xx as usize, yy as usize);
            let wgt = (-((dx * dx + dy * dy) as f32) / (2.0 * sigma * sigma)).exp();
            let bin = ((ang / TAU * ORI_BINS as f32).round() as usize) % ORI_BINS;
            hist[bin] += wgt * mag;
        }
    }
    let n = ORI_BINS;
    let smooth: Vec<f32> = (0..n)
        .map(|i| {
            (hist[(i + n - 2) % n] + hist[(i + 2) % n]) * (1.0 / 16.0)
                + (hist[(i + n - 1) % n] + hist[(i + 1) % n]) * (4.0 / 16.0)
                + hist[i] * (6.0 / 16.0)
        })
        .collect();
    let peak = smooth.iter().copied().fold(0.0, f32::max);
    if peak <= 0.0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    for i in 0..n {
        let (l, c, r) = (smooth[(i + n - 1) % n], smooth[i], smooth[(i + 1) % n]);
        if c > l && c > r && c >= ORI_PEAK_RATIO * peak {
            let bin = i as f32 + 0.5 * (l - r) / (l - 2.0 * c + r);
            let mut a = bin / n as f32 * TAU;
            a = a.rem_euclid(TAU);
            if a >= TAU {
                a = 0.0;
            }
            out.push(a);
        }
    }
    out
}

fn descriptor(g: &Plane, x: f32, y: f32, ori: f32, scl: f32) -> Option<Descriptor> {
    let d = DESC_WIDTH;
    let n = DESC_BINS;
    let hist_width = DESC_SCALE_FACTOR * scl;
    let diag = ((g.w * g.w + g.h * g.h) as f32).sqrt();
    let radius = (hist_width * std::f32::consts::SQRT_2 * (d as f32 + 1.0) * 0.5).round().min(diag) as isize;
    let (cos_t, sin_t) = (ori.cos() / hist_width, ori.sin() / hist_width);
    let bins_per_rad = n as f32 / TAU;
    let exp_scale = -1.0 / (d as f32 * d as f32 * 0.5);
    let (xi, yi) = (x.round() as isize, y.round() as isize);

    let stride_c = n + 2;
    let stride_r = (d + 2) * stride_c;
    let mut hist = vec![0f32; (d + 2) * stride_r];
    for i in -radius..=radius {
        for j in -radius..=radius {
            // offset rotated into the keypoint frame, in histogram-cell units
            let c_rot = j as f32 * cos_t + i as f32 * sin_t;
            let r_rot = -(j as f32) * sin_t + i as f32 * cos_t;
            let rbin = r_rot + d as f32 / 2.0 - 0.5;
            let cbin = c_rot + d as f32 / 2.0 - 0.5;
            if !(rbin > -1.0 && rbin < d as f32 && cbin > -1.0 && cbin < d as f32) {
                continue;
            }
            let (r, c) = (yi + i, xi + j);
            if r <= 0 || c <= 0 || r >= g.h as isize - 1 || c >= g.w as isize - 1 {
                continue;
            }
            let (mag, ang) = gradient(g, c as usize, r as usize);
            let wgt = ((c_rot * c_rot + r_rot * r_rot) * exp_scale).exp();
            let obin = (ang - ori).rem_euclid(TAU) * bins_per_rad;
            let v = mag * wgt;

            let (r0, c0, o0) = (rbin.floor(), cbin.floor(), obin.floor());
            let (fr, fc, fo) = (rbin - r0, cbin - c0, obin - o0);
            let o0 = (o0 as isize).rem_euclid(n as isize) as usize;
            let base = (r0 as isize + 1) as usize * stride_r + (c0 as isize + 1) as usize * stride_c + o0;
            for (dr, wr) in [(0, 1.0 - fr), (1, fr)] {
                for (dc, wc) in [(0, 1.0 - fc), (1, fc)] {
                    for (dob, wo) in [(0, 1.0 - fo), (1, fo)] {
                        hist[base + dr * stride_r + dc * stride_c + dob] += v * wr * wc * wo;
                    }
                }
            }
        }
    }

    let mut out = [0f32; DESCRIPTOR_LEN];
    for i in 0..d {
        for j in 0..d {
            let cell = (i + 1) * stride_r + (j + 1) * stride_c;
            hist[cell] += hist[cell + n];
            hist[cell + 1] += hist[cell + n + 1];
            for k in 0..n {
                out[(i * d + j) * n + k] = hist[cell + k];
            }
        }
    }
    let norm = out.iter().map(|v| v * v).sum::<f32>().sqrt();
    if !(norm > 0.0) {
        return None;
    }
    let thr = DESC_CLIP * norm;
    out.iter_mut().for_each(|v| *v = v.min(thr));
    let norm = out.iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt();
    out.iter_mut().for_each(|v| *v = (*v as f64 / norm) as f32);
    Some(out)
}

/// Keypoints and their unit-norm descriptors, in deterministic order.
pub fn extract_features(img: &GrayImage, p: &SiftParams) -> Result<(Vec<Keypoint>, Vec<Descriptor>)> {
    if img.width() < MIN_SIDE || img.height() < MIN_SIDE {
        return Err(Error::ImageTooSmall {
            width: img.width(),
            height: img.height(),
        });
    }
    let pre_threshold = 0.5 * p.contrast_threshold / p.scales as f32;
    let mut kps = Vec::new();
    let mut descs = Vec::new();
    for (o, oct) in build_octaves(img, p).iter().enumerate() {
        let (w, h) = (oct.dog[0].w, oct.dog[0].h);
        if w <= 2 * BORDER || h <= 2 * BORDER {
            break;
        }
        let octave_scale = (1u32 << o) as f32;
        for s in 1..=p.scales {
            for y in BORDER..h - BORDER {
                for x in BORDER..w - BORDER {
                    if oct.dog[s].at(x, y).abs() <= pre_threshold || !is_extremum(&oct.dog, s, x, y) {
                        continue;
                    }
                    let Some(r) = refine(&oct.dog, p, x, y, s) else { continue };
                    let scl = p.sigma0 * 2f32.powf((r.s as f32 + r.offset[2]) / p.scales as f32);
                    let g = &oct.gauss[r.s];
                    let (fx, fy) = (r.x as f32 + r.offset[0], r.y as f32 + r.offset[1]);
                    for ori in orientations(g, r.x, r.y, scl) {
                        if let Some(dsc) = descriptor(g, fx, fy, ori, scl) {
                            kps.push(Keypoint {
                                x: fx * octave_scale,
                                y: fy * octave_scale,
                                scale: scl * octave_scale,
                                orientation: ori,
                            });
                            descs.push(dsc);
                        }
                    }
                }
            }
        }
    }
    Ok((kps, descs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::roof::pantograph_template;

    #[test]
    fn constant_image_has_no_keypoints() {
        let (k, d) = extract_features(&GrayImage::filled(64, 64, 120).unwrap(), &SiftParams::default()).unwrap();
        assert!(k.is_empty() && d.is_empty());
    }

    #[test]
    fn too_small_is_rejected() {
        assert!(matches!(
            extract_features(&GrayImage::filled(31, 64, 0).unwrap(), &SiftParams::default()),
            Err(Error::ImageTooSmall { .. })
        ));
    }

    #[test]
    fn descriptors_are_unit_and_clipped() {
        let t = pantograph_template(1);
        let (k, d) = extract_features(&t, &SiftParams::default()).unwrap();
        assert!(k.len() > 30, "{} keypoints", k.len());
        for (kp, desc) in k.iter().zip(&d) {
            let n: f64 = desc.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-6);
            assert!(desc.iter().all(|&v| v >= 0.0));
            assert!(kp.scale > 0.0 && (0.0..TAU).contains(&kp.orientation));
        }
    }

    #[test]
    fn deterministic() {
        let t = pantograph_template(2);
        let a = extract_features(&t, &SiftParams::default()).unwrap();
        let b = extract_features(&t, &SiftParams::default()).unwrap();
        assert_eq!(a, b);
    }

    /// Template rotated about its centre onto a canvas large enough to hold it.
    fn rotated(t: &GrayImage, deg: f64) -> (GrayImage, crate::pantograph::Homography) {
        use crate::synth::roof::{warp_onto, Placement};
        let side = 320;
        let mut canvas = GrayImage::filled(side, side, t.mean().round() as u8).unwrap();
        let p = Placement {
            center: (side as f64 / 2.0, side as f64 / 2.0),
            rotation_deg: deg,
            shear_deg: 0.0,
            scale: 1.0,
            perspective: (0.0, 0.0),
        };
        let h = p.homography(t.width(), t.height());
        warp_onto(&mut canvas, t, &h).unwrap();
        (canvas, h)
    }

    #[test]
    fn rotation_by_thirty_degrees_keeps_half_the_matches() {
        use crate::pantograph::{match_descriptors, FeatureModel, Search};
        let t = pantograph_template(0);
        let model = FeatureModel::build(&t, &SiftParams::default()).unwrap();
        let (img, h) = rotated(&t, 30.0);
        let (k, d) = extract_features(&img, &SiftParams::default()).unwrap();
        let matches = match_descriptors(&model, &d, 0.67, Search::Exact);
        let correct = matches
            .iter()
            .filter(|m| {
                let tk = &model.keypoints[m.template];
                let (x, y) = h.apply((tk.x as f64, tk.y as f64)).unwrap();
                (x - k[m.scene].x as f64).hypot(y - k[m.scene].y as f64) <= 3.0
            })
            .count();
        let frac = correct as f64 / model.keypoints.len() as f64;
        assert!(frac >= 0.5, "{correct} of {} template descriptors matched", model.keypoints.len());
    }

    #[test]
    fn gain_and_offset_keep_keypoints() {
        let t = pantograph_template(0);
        let bright = GrayImage::from_fn(t.width(), t.height(), |x, y| {
            (1.5 * t.get(x, y) as f64 + 20.0).round().min(255.0) as u8
        })
        .unwrap();
        let (a, _) = extract_features(&t, &SiftParams::default()).unwrap();
        let (b, _) = extract_features(&bright, &SiftParams::default()).unwrap();
        let kept = a
            .iter()
            .filter(|p| b.iter().any(|q| (p.x - q.x).hypot(p.y - q.y) <= 1.0 && (p.scale / q.scale - 1.0).abs() < 0.1))
            .count();
        assert!(kept as f64 >= 0.8 * a.len() as f64, "{kept} of {}", a.len());
    }
}
