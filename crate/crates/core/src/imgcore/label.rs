use super::{BBox, BinaryImage};

/// 8-connected component labelling of a binary mask.
///
/// Component `i` (0-based here) carries label `i + 1` in `labels`; components
/// are numbered in the raster order of their first pixel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledComponents {
    pub width: usize,
    pub height: usize,
    /// Per-pixel label, 0 for background.
    pub labels: Vec<u32>,
    pub boxes: Vec<BBox>,
    pub areas: Vec<usize>,
    /// Raster-first pixel of each component.
    pub anchors: Vec<(usize, usize)>,
}

impl LabeledComponents {
    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    #[inline]
    pub fn label(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }
}

fn find(parent: &mut [u32], mut i: u32) -> u32 {
    while parent[i as usize] != i {
        let p = parent[i as usize];
        parent[i as usize] = parent[p as usize];
        i = p;
    }
    i
}

fn union(parent: &mut [u32], a: u32, b: u32) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra != rb {
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        parent[hi as usize] = lo;
    }
}

pub fn connected_components(img: &BinaryImage) -> LabeledComponents {
    let (w, h) = (img.width(), img.height());
    let mask = img.mask();
    let mut provisional = vec![0u32; w * h];
    // index 0 is the background sentinel
    let mut parent: Vec<u32> = vec![0];

    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !mask[i] {
                continue;
            }
            // already-visited 8-neighbours: W, NW, N, NE
            let mut neighbours = [0u32; 4];
            if x > 0 {
                neighbours[0] = provisional[i - 1];
            }
            if y > 0 {
                let up = i - w;
                if x > 0 {
                    neighbours[1] = provisional[up - 1];
                }
                neighbours[2] = provisional[up];
                if x + 1 < w {
                    neighbours[3] = provisional[up + 1];
                }
            }
            let mut label = 0u32;
            for &n in neighbours.iter().filter(|&&n| n != 0) {
                if label == 0 {
                    label = n;
                } else {
                    union(&mut parent, label, n);
                }
            }
            if label == 0 {
                label = parent.len() as u32;
                parent.push(label);
            }
            provisional[i] = label;
        }
    }

    let mut final_of_root = vec![0u32; parent.len()];
    let mut labels = vec![0u32; w * h];
    let mut boxes: Vec<(usize, usize, usize, usize)> = Vec::new();
    let mut areas = Vec::new();
    let mut anchors = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let p = provisional[i];
            if p == 0 {
                continue;
            }
            let root = find(&mut parent, p) as usize;
            if final_of_root[root] == 0 {
                boxes.push((x, y, x, y));
                areas.push(0usize);
                anchors.push((x, y));
                final_of_root[root] = boxes.len() as u32;
            }
            let l = final_of_root[root];
            labels[i] = l;
            let b = &mut boxes[l as usize - 1];
            b.0 = b.0.min(x);
            b.2 = b.2.max(x);
            b.3 = b.3.max(y);
            areas[l as usize - 1] += 1;
        }
    }

    LabeledComponents {
        width: w,
        height: h,
        labels,
        boxes: boxes
            .into_iter()
            .map(|(x0, y0, x1, y1)| BBox::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1))
            .collect(),
        areas,
        anchors,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;

    /// Flood-fill labelling, used as an independent partition oracle.
    pub(crate) fn flood_fill_partition(img: &BinaryImage) -> Vec<u32> {
        let (w, h) = (img.width(), img.height());
        let mut labels = vec![0u32; w * h];
        let mut next = 0;
        for sy in 0..h {
            for sx in 0..w {
                if !img.get(sx, sy) || labels[sy * w + sx] != 0 {
                    continue;
                }
                next += 1;
                let mut stack = vec![(sx, sy)];
                labels[sy * w + sx] = next;
                while let Some((x, y)) = stack.pop() {
                    for dy in -1..=1isize {
                        for dx in -1..=1isize {
                            let (nx, ny) = (x as isize + dx, y as isize + dy);
                            if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                                continue;
                            }
                            let (nx, ny) = (nx as usize, ny as usize);
                            if img.get(nx, ny) && labels[ny * w + nx] == 0 {
                                labels[ny * w + nx] = next;
                                stack.push((nx, ny));
                            }
                        }
                    }
                }
            }
        }
        labels
    }

    fn same_partition(a: &[u32], b: &[u32]) -> bool {
        let mut fwd = HashMap::new();
        let mut back = HashMap::new();
        a.iter().zip(b).all(|(&x, &y)| {
            (x == 0) == (y == 0)
                && *fwd.entry(x).or_insert(y) == y
                && *back.entry(y).or_insert(x) == x
        })
    }

    #[test]
    fn empty_mask_has_no_components() {
        let cc = connected_components(&BinaryImage::new(10, 10).unwrap());
        assert!(cc.is_empty());
    }

    #[test]
    fn two_squares_two_tight_boxes() {
        let m = BinaryImage::from_fn(12, 8, |x, y| {
            ((1..4).contains(&x) || (7..10).contains(&x)) && (2..5).contains(&y)
        })
        .unwrap();
        let cc = connected_components(&m);
        assert_eq!(cc.boxes, vec![BBox::new(1, 2, 3, 3), BBox::new(7, 2, 3, 3)]);
        assert_eq!(cc.areas, vec![9, 9]);
    }

    #[test]
    fn diagonal_touch_joins_and_order_is_raster_first() {
        // a U shape whose right arm is encountered first on row 0
        let mut m = BinaryImage::new(6, 4).unwrap();
        for (x, y) in [(4, 0), (0, 1), (4, 1), (0, 2), (1, 3), (2, 3), (3, 2)] {
            m.set(x, y, true);
        }
        let cc = connected_components(&m);
        assert_eq!(cc.len(), 1);
        assert_eq!(cc.anchors[0], (4, 0));
        assert_eq!(cc.boxes[0], BBox::new(0, 0, 5, 4));
    }

    #[test]
    fn partition_matches_flood_fill() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let density: f64 = rng.random_range(0.1..0.6);
            let m = BinaryImage::from_fn(64, 64, |_, _| rng.random_bool(density)).unwrap();
            let cc = connected_components(&m);
            let oracle = flood_fill_partition(&m);
            assert!(same_partition(&cc.labels, &oracle));
            assert_eq!(cc.areas.iter().sum::<usize>(), m.count());
            for (i, b) in cc.boxes.iter().enumerate() {
                let l = i as u32 + 1;
                let pixels: Vec<(usize, usize)> = (0..64)
                    .flat_map(|y| (0..64).map(move |x| (x, y)))
                    .filter(|&(x, y)| cc.label(x, y) == l)
                    .collect();
                assert_eq!(pixels.iter().map(|p| p.0).min(), Some(b.x));
                assert_eq!(pixels.iter().map(|p| p.0).max(), Some(b.right() - 1));
                assert_eq!(pixels.iter().map(|p| p.1).min(), Some(b.y));
                assert_eq!(pixels.iter().map(|p| p.1).max(), Some(b.bottom() - 1));
            }
        }
    }
}
