use std::collections::VecDeque;

use super::BinaryImage;

/// Offsets of the discrete disk `{(dx, dy) : dx^2 + dy^2 <= r^2}`.
pub fn disk_offsets(radius: usize) -> Vec<(isize, isize)> {
    let r = radius as isize;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                out.push((dx, dy));
            }
        }
    }
    out
}

/// Dilation by the discrete disk of radius `radius`.
///
/// Each disk row is a horizontal run, so the test for "any input pixel within
/// the run" is answered from per-row prefix counts.
pub fn dilate_disk(img: &BinaryImage, radius: usize) -> BinaryImage {
    if radius == 0 {
        return img.clone();
    }
    let (w, h) = (img.width(), img.height());
    let r = radius as isize;
    let half_widths: Vec<isize> = (-r..=r)
        .map(|dy| {
            let mut hw = 0;
            while (hw + 1) * (hw + 1) + dy * dy <= r * r {
                hw += 1;
            }
            hw
        })
        .collect();

    // prefix[y][x] = number of set pixels in row y before column x
    let mut prefix = vec![0u32; h * (w + 1)];
    for y in 0..h {
        let p = &mut prefix[y * (w + 1)..(y + 1) * (w + 1)];
        for (x, &b) in img.row(y).iter().enumerate() {
            p[x + 1] = p[x] + b as u32;
        }
    }
    let row_any = |y: usize, x0: isize, x1: isize| -> bool {
        let a = x0.max(0) as usize;
        let b = (x1 + 1).min(w as isize) as usize;
        a < b && prefix[y * (w + 1) + b] > prefix[y * (w + 1) + a]
    };

    let mut out = vec![false; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let hit = half_widths.iter().enumerate().any(|(k, &hw)| {
                let sy = y + k as isize - r;
                sy >= 0 && sy < h as isize && row_any(sy as usize, x - hw, x + hw)
            });
            out[y as usize * w + x as usize] = hit;
        }
    }
    BinaryImage::from_vec(w, h, out).expect("dimensions inherited from input")
}

/// Sets every background pixel that is not 4-connected to the image border
/// through background.
pub fn fill_holes(img: &BinaryImage) -> BinaryImage {
    let (w, h) = (img.width(), img.height());
    let mask = img.mask();
    let mut outside = vec![false; w * h];
    let mut queue = VecDeque::new();
    let seed = |x: usize, y: usize, outside: &mut Vec<bool>, queue: &mut VecDeque<usize>| {
        let i = y * w + x;
        if !mask[i] && !outside[i] {
            outside[i] = true;
            queue.push_back(i);
        }
    };
    for x in 0..w {
        seed(x, 0, &mut outside, &mut queue);
        seed(x, h - 1, &mut outside, &mut queue);
    }
    for y in 0..h {
        seed(0, y, &mut outside, &mut queue);
        seed(w - 1, y, &mut outside, &mut queue);
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = (i % w, i / w);
        let mut visit = |j: usize| {
            if !mask[j] && !outside[j] {
                outside[j] = true;
                queue.push_back(j);
            }
        };
        if x > 0 {
            visit(i - 1);
        }
        if x + 1 < w {
            visit(i + 1);
        }
        if y > 0 {
            visit(i - w);
        }
        if y + 1 < h {
            visit(i + w);
        }
    }
    BinaryImage::from_vec(w, h, outside.into_iter().map(|o| !o).collect())
        .expect("dimensions inherited from input")
}
