//! Roof-view scenes: a procedural pantograph template composited into a
//! textured roof under a projective warp, illumination gain and noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::imgcore::{BBox, GrayImage};
use crate::pantograph::Homography;

pub const TEMPLATE_W: usize = 256;
pub const TEMPLATE_H: usize = 160;

/// Smooth random field: bilinear interpolation of a seeded lattice, summed over
/// the given cell sizes with halving amplitude. Values roughly in [0, 1].
fn value_noise(w: usize, h: usize, cells: &[usize], seed: u64) -> Vec<f32> {
    let mut out = vec![0f32; w * h];
    let mut amp = 1.0f32;
    let mut total = 0.0;
    for (o, &cell) in cells.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(31).wrapping_add(o as u64));
        let (gw, gh) = (w / cell + 2, h / cell + 2);
        let lattice: Vec<f32> = (0..gw * gh).map(|_| rng.random::<f32>()).collect();
        for y in 0..h {
            let fy = y as f32 / cell as f32;
            let (y0, ty) = (fy as usize, fy.fract());
            for x in 0..w {
                let fx = x as f32 / cell as f32;
                let (x0, tx) = (fx as usize, fx.fract());
                let l = |i: usize, j: usize| lattice[j * gw + i];
                let top = l(x0, y0) * (1.0 - tx) + l(x0 + 1, y0) * tx;
                let bot = l(x0, y0 + 1) * (1.0 - tx) + l(x0 + 1, y0 + 1) * tx;
                out[y * w + x] += amp * (top * (1.0 - ty) + bot * ty);
            }
        }
        total += amp;
        amp *= 0.5;
    }
    out.iter_mut().for_each(|v| *v /= total);
    out
}

fn draw_line(img: &mut GrayImage, a: (f32, f32), b: (f32, f32), half_width: f32, value: u8) {
    let (x0, x1) = (a.0.min(b.0) - half_width, a.0.max(b.0) + half_width);
    let (y0, y1) = (a.1.min(b.1) - half_width, a.1.max(b.1) + half_width);
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = (dx * dx + dy * dy).max(1e-6);
    for y in y0.max(0.0) as usize..=(y1 as usize).min(img.height() - 1) {
        for x in x0.max(0.0) as usize..=(x1 as usize).min(img.width() - 1) {
            let (px, py) = (x as f32 - a.0, y as f32 - a.1);
            let t = ((px * dx + py * dy) / len2).clamp(0.0, 1.0);
            let (ex, ey) = (px - t * dx, py - t * dy);
            if ex * ex + ey * ey <= half_width * half_width {
                img.set(x, y, value);
            }
        }
    }
}

fn draw_ring(img: &mut GrayImage, c: (f32, f32), r_out: f32, r_in: f32, value: u8) {
    for y in 0..img.height() {
        for x in 0..img.width() {
            let d2 = (x as f32 - c.0).powi(2) + (y as f32 - c.1).powi(2);
            if d2 <= r_out * r_out && d2 >= r_in * r_in {
                img.set(x, y, value);
            }
        }
    }
}

/// Procedural pantograph drawing over a textured backdrop, intensities at most 150.
pub fn pantograph_template(seed: u64) -> GrayImage {
    let (w, h) = (TEMPLATE_W, TEMPLATE_H);
    let tex = value_noise(w, h, &[24, 12, 6, 3], seed ^ 0x7a7a);
    let mut img = GrayImage::from_fn(w, h, |x, y| (45.0 + 60.0 * tex[y * w + x]) as u8).expect("nonzero template");
    let (wf, hf) = (w as f32, h as f32);
    // collector head with carbon strip segments
    draw_line(&mut img, (0.08 * wf, 0.12 * hf), (0.92 * wf, 0.12 * hf), 5.0, 140);
    for i in 0..9 {
        let x = 0.12 * wf + i as f32 * 0.095 * wf;
        draw_line(&mut img, (x, 0.12 * hf - 4.0), (x + 0.04 * wf, 0.12 * hf - 4.0), 1.5, 20);
    }
    draw_line(&mut img, (0.02 * wf, 0.2 * hf), (0.08 * wf, 0.12 * hf), 3.0, 150);
    draw_line(&mut img, (0.98 * wf, 0.2 * hf), (0.92 * wf, 0.12 * hf), 3.0, 150);
    // asymmetric single-arm linkage
    draw_line(&mut img, (0.5 * wf, 0.14 * hf), (0.7 * wf, 0.48 * hf), 3.5, 130);
    draw_line(&mut img, (0.7 * wf, 0.48 * hf), (0.3 * wf, 0.78 * hf), 4.0, 125);
    draw_line(&mut img, (0.7 * wf, 0.48 * hf), (0.62 * wf, 0.78 * hf), 2.0, 110);
    draw_line(&mut img, (0.45 * wf, 0.68 * hf), (0.58 * wf, 0.55 * hf), 2.5, 15);
    // base frame and insulators
    draw_line(&mut img, (0.1 * wf, 0.85 * hf), (0.9 * wf, 0.85 * hf), 4.0, 100);
    for (cx, r) in [(0.18, 10.0), (0.82, 10.0), (0.3, 7.0)] {
        draw_ring(&mut img, (cx * wf, 0.85 * hf), r, r - 4.0, 150);
        draw_ring(&mut img, (cx * wf, 0.85 * hf), r - 4.0, 0.0, 25);
    }
    draw_ring(&mut img, (0.7 * wf, 0.48 * hf), 6.0, 0.0, 145);
    img
}

/// Template pose in the scene: rotation, shear and scale about the template
/// centre, then a perspective term, then translation to `center`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub center: (f64, f64),
    pub rotation_deg: f64,
    pub shear_deg: f64,
    pub scale: f64,
    pub perspective: (f64, f64),
}

impl Placement {
    pub fn homography(&self, tw: usize, th: usize) -> Homography {
        use nalgebra::Matrix3;
        let (c, s) = (self.rotation_deg.to_radians().cos(), self.rotation_deg.to_radians().sin());
        let k = self.shear_deg.to_radians().tan();
        let to_origin = Matrix3::new(1.0, 0.0, -(tw as f64) / 2.0, 0.0, 1.0, -(th as f64) / 2.0, 0.0, 0.0, 1.0);
        let persp = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, self.perspective.0, self.perspective.1, 1.0);
        let shear = Matrix3::new(1.0, k, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        let rot = Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
        let scale = Matrix3::new(self.scale, 0.0, 0.0, 0.0, self.scale, 0.0, 0.0, 0.0, 1.0);
        let to_center = Matrix3::new(1.0, 0.0, self.center.0, 0.0, 1.0, self.center.1, 0.0, 0.0, 1.0);
        Homography::normalized(to_center * scale * rot * shear * persp * to_origin).expect("placement is invertible")
    }

    /// Random pose with rotation up to 10 degrees, shear up to 15 degrees,
    /// scale 0.85-1.15 and mild perspective, fully inside the scene.
    pub fn random(rng: &mut impl Rng, scene: (usize, usize), template: (usize, usize)) -> Self {
        loop {
            let p = Placement {
                center: (
                    rng.random_range(0.0..scene.0 as f64),
                    rng.random_range(0.0..scene.1 as f64),
                ),
                rotation_deg: rng.random_range(-10.0..10.0),
                shear_deg: rng.random_range(-15.0..15.0),
                scale: rng.random_range(0.85..1.15),
                perspective: (rng.random_range(-3e-4..3e-4), rng.random_range(-3e-4..3e-4)),
            };
            let h = p.homography(template.0, template.1);
            let inside = corners(template).iter().all(|&c| {
                h.apply(c)
                    .is_some_and(|q| q.0 >= 4.0 && q.1 >= 4.0 && q.0 <= scene.0 as f64 - 4.0 && q.1 <= scene.1 as f64 - 4.0)
            });
            if inside {
                return p;
            }
        }
    }
}

fn corners(t: (usize, usize)) -> [(f64, f64); 4] {
    let (w, h) = (t.0 as f64, t.1 as f64);
    [(0.0, 0.0), (w, 0.0), (w, h), (0.0, h)]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoofScene {
    pub width: usize,
    pub height: usize,
    pub pantograph: Option<Placement>,
    /// Multiplies every pixel before noise is added.
    pub gain: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for RoofScene {
    fn default() -> Self {
        Self {
            width: 1024,
            height: 384,
            pantograph: None,
            gain: 1.0,
            noise_sigma: 5.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RoofRender {
    pub image: GrayImage,
    pub homography: Option<Homography>,
    /// Bound of the warped template clipped to the scene.
    pub bbox: Option<BBox>,
}

/// Draws `src` warped by `h` (source to destination) with bilinear sampling;
/// returns the bound of the warped corners clipped to `dst`.
pub fn warp_onto(dst: &mut GrayImage, src: &GrayImage, h: &Homography) -> Option<BBox> {
    let (w, hh) = (dst.width(), dst.height());
    let (tw, th) = (src.width(), src.height());
    let inv = Homography::normalized(h.matrix().try_inverse()?)?;
    let quad: Vec<(f64, f64)> = corners((tw, th)).iter().filter_map(|&c| h.apply(c)).collect();
    if quad.len() < 4 {
        return None;
    }
    let x0 = quad.iter().map(|q| q.0).fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
    let y0 = quad.iter().map(|q| q.1).fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
    let x1 = (quad.iter().map(|q| q.0).fold(f64::NEG_INFINITY, f64::max).ceil().max(0.0) as usize).min(w);
    let y1 = (quad.iter().map(|q| q.1).fold(f64::NEG_INFINITY, f64::max).ceil().max(0.0) as usize).min(hh);
    for y in y0..y1 {
        for x in x0..x1 {
            let Some((u, v)) = inv.apply((x as f64 + 0.5, y as f64 + 0.5)) else { continue };
            let (u, v) = (u - 0.5, v - 0.5);
            if u < 0.0 || v < 0.0 || u > (tw - 1) as f64 || v > (th - 1) as f64 {
                continue;
            }
            let (ui, vi) = (u as usize, v as usize);
            let (fu, fv) = (u - ui as f64, v - vi as f64);
            let s = |a: usize, b: usize| src.get(a.min(tw - 1), b.min(th - 1)) as f64;
            let top = s(ui, vi) * (1.0 - fu) + s(ui + 1, vi) * fu;
            let bot = s(ui, vi + 1) * (1.0 - fu) + s(ui + 1, vi + 1) * fu;
            dst.set(x, y, (top * (1.0 - fv) + bot * fv).round() as u8);
        }
    }
    (x1 > x0 && y1 > y0).then(|| BBox::new(x0, y0, x1 - x0, y1 - y0))
}

pub fn render_roof(scene: &RoofScene, template: &GrayImage) -> RoofRender {
    let (w, h) = (scene.width, scene.height);
    let tex = value_noise(w, h, &[40, 20, 10, 5], scene.seed ^ 0x0f0f_f00f);
    let mut rng = ChaCha8Rng::seed_from_u64(scene.seed ^ 0x400f);
    let mut image = GrayImage::from_fn(w, h, |x, y| {
        // longitudinal roof panels
        let panel = if (y / 48) % 2 == 0 { 10.0 } else { 0.0 };
        (40.0 + panel + 90.0 * tex[y * w + x]).round() as u8
    })
    .expect("nonzero scene");

    let mut homography = None;
    let mut bbox = None;
    if let Some(p) = &scene.pantograph {
        let hm = p.homography(template.width(), template.height());
        bbox = warp_onto(&mut image, template, &hm);
        homography = Some(hm);
    }

    let normal = Normal::new(0.0, scene.noise_sigma.max(0.0)).expect("finite sigma");
    for v in image.data_mut() {
        let n = if scene.noise_sigma > 0.0 { normal.sample(&mut rng) } else { 0.0 };
        *v = (*v as f64 * scene.gain + n).round().clamp(0.0, 255.0) as u8;
    }
    RoofRender {
        image,
        homography,
        bbox,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn template_is_bounded_and_deterministic() {
        let t = pantograph_template(1);
        assert_eq!((t.width(), t.height()), (TEMPLATE_W, TEMPLATE_H));
        assert!(t.data().iter().all(|&v| v <= 150));
        assert_eq!(t, pantograph_template(1));
    }

    #[test]
    fn identity_placement_maps_corners() {
        let p = Placement { center: (128.0, 80.0), rotation_deg: 0.0, shear_deg: 0.0, scale: 1.0, perspective: (0.0, 0.0) };
        let h = p.homography(256, 160);
        let q = h.apply((0.0, 0.0)).unwrap();
        assert!(q.0.abs() < 1e-9 && q.1.abs() < 1e-9);
    }

    #[test]
    fn random_placements_stay_inside() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let p = Placement::random(&mut rng, (1024, 384), (256, 160));
            let r = render_roof(&RoofScene { pantograph: Some(p), noise_sigma: 0.0, ..RoofScene::default() }, &pantograph_template(0));
            let b = r.bbox.unwrap();
            assert!(b.right() <= 1024 && b.bottom() <= 384);
        }
    }
}
