//! Side-view line-scan mosaic of a wagon carrying a painted 12-digit
//! identifier among structural clutter.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::font::{draw_glyph, glyph_extent, GLYPH_COLS};
use crate::imgcore::{BBox, GrayImage};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SideScene {
    pub width: usize,
    pub height: usize,
    pub id: String,
    pub glyph_scale: usize,
    /// Top-left of the first glyph cell; random when absent.
    pub id_origin: Option<(usize, usize)>,
    pub distractors: usize,
    pub noise_sigma: f64,
    /// Glyph `i` is painted touching glyph `i + 1`.
    pub merged_pairs: Vec<usize>,
    pub seed: u64,
}

impl Default for SideScene {
    fn default() -> Self {
        Self {
            width: 8192,
            height: 1024,
            id: "318066501234".into(),
            glyph_scale: 5,
            id_origin: None,
            distractors: 32,
            noise_sigma: 8.0,
            merged_pairs: Vec::new(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SideRender {
    pub image: GrayImage,
    pub glyphs: Vec<BBox>,
    pub distractors: Vec<BBox>,
}

/// Extra spacing after these glyph indices reproduces the 2-2-4-3-1 grouping.
const GROUP_BREAKS: [usize; 4] = [1, 3, 7, 10];

/// Horizontal offsets of each glyph cell relative to the first one.
fn glyph_offsets(id: &str, scale: usize, merged: &[usize]) -> Vec<usize> {
    let chars: Vec<char> = id.chars().collect();
    let mut out = Vec::with_capacity(chars.len());
    let mut x = 0usize;
    for (i, &c) in chars.iter().enumerate() {
        out.push(x);
        let Some(&next) = chars.get(i + 1) else { break };
        if merged.contains(&i) {
            let (_, last) = glyph_extent(c).unwrap_or((0, GLYPH_COLS - 1));
            let (first, _) = glyph_extent(next).unwrap_or((0, GLYPH_COLS - 1));
            x = x + (last + 1) * scale - first * scale;
        } else {
            x += (GLYPH_COLS + 2) * scale;
            if GROUP_BREAKS.contains(&i) {
                x += 2 * scale;
            }
        }
    }
    out
}

fn fill_rect(img: &mut GrayImage, b: BBox, v: u8) {
    for y in b.y..b.bottom().min(img.height()) {
        for x in b.x..b.right().min(img.width()) {
            img.set(x, y, v);
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Shape {
    Block { w: usize, h: usize },
    Frame { w: usize, h: usize },
    Disc { r: usize, inner: usize },
    Bar { w: usize, h: usize },
}

impl Shape {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        match rng.random_range(0..5) {
            0 => Shape::Block {
                w: rng.random_range(10..90),
                h: rng.random_range(10..90),
            },
            1 => Shape::Frame {
                w: rng.random_range(30..120),
                h: rng.random_range(30..100),
            },
            2 | 3 => {
                let r: usize = rng.random_range(5..24);
                let inner = if rng.random_bool(0.5) { 0 } else { r.saturating_sub(4) };
                Shape::Disc { r, inner }
            }
            _ => Shape::Bar {
                w: rng.random_range(100..220),
                h: rng.random_range(6..12),
            },
        }
    }

    fn extent(self) -> (usize, usize) {
        match self {
            Shape::Block { w, h } | Shape::Frame { w, h } | Shape::Bar { w, h } => (w, h),
            Shape::Disc { r, .. } => (2 * r + 1, 2 * r + 1),
        }
    }

    /// Box of the shape when its extent starts at (x, y).
    fn placed(self, x: usize, y: usize) -> BBox {
        let (w, h) = self.extent();
        BBox::new(x, y, w, h)
    }

    fn draw(self, img: &mut GrayImage, b: BBox, value: u8) {
        match self {
            Shape::Block { .. } | Shape::Bar { .. } => fill_rect(img, b, value),
            Shape::Frame { w, h } => {
                let t = 3;
                fill_rect(img, BBox::new(b.x, b.y, w, t), value);
                fill_rect(img, BBox::new(b.x, b.bottom() - t, w, t), value);
                fill_rect(img, BBox::new(b.x, b.y, t, h), value);
                fill_rect(img, BBox::new(b.right() - t, b.y, t, h), value);
            }
            Shape::Disc { r, inner } => {
                let (r, inner) = (r as isize, inner as isize);
                let (cx, cy) = ((b.x as isize) + r, (b.y as isize) + r);
                for dy in -r..=r {
                    for dx in -r..=r {
                        let d2 = dx * dx + dy * dy;
                        if d2 <= r * r && d2 >= inner * inner {
                            img.set((cx + dx) as usize, (cy + dy) as usize, value);
                        }
                    }
                }
            }
        }
    }
}

/// Clearance kept between distractors and the border, gap and identifier.
const CLEARANCE: usize = 24;

pub fn render_side(scene: &SideScene) -> SideRender {
    let (w, h) = (scene.width, scene.height);
    let mut rng = ChaCha8Rng::seed_from_u64(scene.seed ^ 0x51de_5cee);
    let base: u8 = rng.random_range(60..=80);
    let mut img = GrayImage::from_fn(w, h, |x, _| {
        let phase = x as f64 / w as f64 * std::f64::consts::TAU;
        (base as f64 + 8.0 * phase.sin()).round() as u8
    })
    .expect("scene dimensions are nonzero");

    // coupling gap between vehicles and the under-frame, both touching the border
    let gap_w = 48.min(w / 8).max(1);
    let gap_x = rng.random_range(w * 3 / 10..=w * 7 / 10);
    fill_rect(&mut img, BBox::new(gap_x, 0, gap_w, h), 25);
    let chassis_y = h * 86 / 100;
    fill_rect(&mut img, BBox::new(0, chassis_y, w, h - chassis_y), 35);

    let scale = scene.glyph_scale.max(1);
    let offsets = glyph_offsets(&scene.id, scale, &scene.merged_pairs);
    let id_w = offsets.last().copied().unwrap_or(0) + GLYPH_COLS * scale;
    let id_h = 7 * scale;
    let origin = scene.id_origin.unwrap_or_else(|| loop {
        let x = rng.random_range(64..w.saturating_sub(id_w + 64).max(65));
        let y = rng.random_range(h / 10..(h * 7 / 10).saturating_sub(id_h).max(h / 10 + 1));
        let clear_of_gap = x + id_w + 32 < gap_x || x > gap_x + gap_w + 32;
        if clear_of_gap {
            break (x, y);
        }
    });
    let glyphs: Vec<BBox> = scene
        .id
        .chars()
        .zip(&offsets)
        .filter_map(|(c, &dx)| draw_glyph(&mut img, c, origin.0 + dx, origin.1, scale, 220))
        .collect();
    let id_zone = BBox::new(origin.0, origin.1, id_w, id_h).padded(48, w, h);

    // one shape per cell of a jittered grid above the under-frame
    let mut distractors = Vec::new();
    if scene.distractors > 0 {
        let usable_h = chassis_y;
        let cols = ((scene.distractors as f64 * w as f64 / usable_h as f64).sqrt().ceil() as usize).max(1);
        let rows = scene.distractors.div_ceil(cols) + 1;
        let (cell_w, cell_h) = (w / cols, usable_h / rows);
        let mut cells: Vec<(usize, usize)> =
            (0..rows).flat_map(|r| (0..cols).map(move |c| (c, r))).collect();
        for i in (1..cells.len()).rev() {
            cells.swap(i, rng.random_range(0..=i));
        }
        for (c, r) in cells {
            if distractors.len() == scene.distractors {
                break;
            }
            for _ in 0..8 {
                let shape = Shape::random(&mut rng);
                let (sw, sh) = shape.extent();
                let x = c * cell_w + rng.random_range(0..cell_w.max(1));
                let y = r * cell_h + rng.random_range(0..cell_h.max(1));
                if x < CLEARANCE || y < CLEARANCE || x + sw + CLEARANCE >= w || y + sh + CLEARANCE >= chassis_y {
                    continue;
                }
                let b = shape.placed(x, y);
                let footprint = b.padded(CLEARANCE, w, h);
                let near_gap = footprint.intersection(&BBox::new(gap_x, 0, gap_w, h)).is_some();
                let crowded = distractors.iter().any(|d: &BBox| d.intersection(&footprint).is_some());
                if footprint.intersection(&id_zone).is_some() || near_gap || crowded {
                    continue;
                }
                let value: u8 = if rng.random_bool(0.6) {
                    rng.random_range(150..=240)
                } else {
                    rng.random_range(5..=35)
                };
                shape.draw(&mut img, b, value);
                distractors.push(b);
                break;
            }
        }
    }

    if scene.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, scene.noise_sigma).expect("finite sigma");
        for v in img.data_mut() {
            let n: f64 = normal.sample(&mut rng);
            *v = (*v as f64 + n).round().clamp(0.0, 255.0) as u8;
        }
    }

    SideRender {
        image: img,
        glyphs,
        distractors,
    }
}
