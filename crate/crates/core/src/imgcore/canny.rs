//! Canny edge detection: Gaussian pre-smoothing, 3x3 Sobel gradients,
//! non-maximum suppression and hysteresis.
//!
//! Smoothing uses integer weights so that all gradient arithmetic is exact.
//! Magnitudes are compared against thresholds expressed in raw Sobel units of
//! the unsmoothed 0..255 intensity scale.

use std::collections::VecDeque;

use super::{BinaryImage, GrayImage};

pub const CANNY_SIGMA: f64 = 1.4;

/// Fixed-point scale of the Gaussian taps.
const KERNEL_SCALE: f64 = 256.0;

fn gaussian_kernel(sigma: f64) -> Vec<i32> {
    let radius = (3.0 * sigma).ceil() as i32;
    (-radius..=radius)
        .map(|i| {
            let x = i as f64;
            (KERNEL_SCALE * (-x * x / (2.0 * sigma * sigma)).exp()).round() as i32
        })
        .collect()
}

/// Separable integer blur with clamped borders. Output is scaled by `sum(k)^2`.
fn smooth(img: &GrayImage, kernel: &[i32]) -> Vec<i32> {
    let (w, h) = (img.width(), img.height());
    let r = (kernel.len() / 2) as isize;
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;

    let mut tmp = vec![0i32; w * h];
    for y in 0..h {
        let row = img.row(y);
        let out = &mut tmp[y * w..(y + 1) * w];
        for (x, o) in out.iter_mut().enumerate() {
            let mut acc = 0i32;
            for (k, &wk) in kernel.iter().enumerate() {
                acc += wk * row[clamp(x as isize + k as isize - r, w)] as i32;
            }
            *o = acc;
        }
    }
    let mut out = vec![0i32; w * h];
    for y in 0..h {
        for (k, &wk) in kernel.iter().enumerate() {
            let sy = clamp(y as isize + k as isize - r, h);
            let src = &tmp[sy * w..(sy + 1) * w];
            let dst = &mut out[y * w..(y + 1) * w];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += wk * s;
            }
        }
    }
    out
}

/// Gradient direction quantized to the neighbour pair examined by NMS.
#[derive(Clone, Copy)]
#[repr(u8)]
enum Sector {
    Horizontal,
    Vertical,
    /// gradient along (+1,+1)/(-1,-1)
    MainDiagonal,
    /// gradient along (+1,-1)/(-1,+1)
    AntiDiagonal,
}

impl Sector {
    fn from_gradient(gx: i64, gy: i64) -> Self {
        let (ax, ay) = (gx.abs(), gy.abs());
        // tan(22.5deg) ~ 53/128, tan(67.5deg) ~ 309/128
        if 128 * ay <= 53 * ax {
            Sector::Horizontal
        } else if 128 * ay >= 309 * ax {
            Sector::Vertical
        } else if (gx > 0) == (gy > 0) {
            Sector::MainDiagonal
        } else {
            Sector::AntiDiagonal
        }
    }

    /// Offset of the "next" neighbour along the gradient; "previous" is its negation.
    fn step(self) -> (isize, isize) {
        match self {
            Sector::Horizontal => (1, 0),
            Sector::Vertical => (0, 1),
            Sector::MainDiagonal => (1, 1),
            Sector::AntiDiagonal => (1, -1),
        }
    }
}

/// Canny edges with hysteresis thresholds `t_low <= t_high` on Sobel magnitude.
pub fn canny_edges(img: &GrayImage, t_high: f64, t_low: f64) -> BinaryImage {
    assert!(
        0.0 <= t_low && t_low <= t_high,
        "canny thresholds must satisfy 0 <= t_low <= t_high"
    );
    let (w, h) = (img.width(), img.height());
    let kernel = gaussian_kernel(CANNY_SIGMA);
    let ksum: i64 = kernel.iter().map(|&k| k as i64).sum();
    let scale = (ksum * ksum) as f64;
    let smoothed = smooth(img, &kernel);

    let at = |x: isize, y: isize| -> i64 {
        let xc = x.clamp(0, w as isize - 1) as usize;
        let yc = y.clamp(0, h as isize - 1) as usize;
        smoothed[yc * w + xc] as i64
    };

    let mut mag2 = vec![0i64; w * h];
    let mut sector = vec![Sector::Horizontal; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let gx = (at(x + 1, y - 1) + 2 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2 * at(x - 1, y) + at(x - 1, y + 1));
            let gy = (at(x - 1, y + 1) + 2 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2 * at(x, y - 1) + at(x + 1, y - 1));
            let i = y as usize * w + x as usize;
            mag2[i] = gx * gx + gy * gy;
            sector[i] = Sector::from_gradient(gx, gy);
        }
    }

    let m = |x: isize, y: isize| -> i64 {
        if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
            0
        } else {
            mag2[y as usize * w + x as usize]
        }
    };

    let high2 = (t_high * scale).powi(2);
    let low2 = (t_low * scale).powi(2);

    // 0 = suppressed, 1 = weak, 2 = strong
    let mut class = vec![0u8; w * h];
    let mut queue = VecDeque::new();
    for y in 0..h as isize {
        for x in 0..w as isize {
            let i = y as usize * w + x as usize;
            let v = mag2[i];
            if v == 0 {
                continue;
            }
            let (dx, dy) = sector[i].step();
            // strict on the previous side, inclusive on the next: keeps exactly
            // one pixel of a symmetric ridge pair
            if !(v > m(x - dx, y - dy) && v >= m(x + dx, y + dy)) {
                continue;
            }
            let vf = v as f64;
            if vf >= high2 {
                class[i] = 2;
                queue.push_back(i);
            } else if vf >= low2 {
                class[i] = 1;
            }
        }
    }

    let mut edges = vec![false; w * h];
    for &i in &queue {
        edges[i] = true;
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for dy in -1..=1isize {
            for dx in -1..=1isize {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if class[j] >= 1 && !edges[j] {
                    edges[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }

    BinaryImage::from_vec(w, h, edges).expect("dimensions inherited from input")
}

/// Single-parameter form: `t_high = tau`, `t_low = tau / 2`.
pub fn canny_from_threshold(img: &GrayImage, tau: f64) -> BinaryImage {
    canny_edges(img, tau, 0.5 * tau)
}
