use super::{BinaryImage, GrayImage};

/// Result of Otsu's threshold selection. Pixels `> threshold` are foreground.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Otsu {
    pub threshold: u8,
    /// Set when the image holds a single intensity; callers treat it as all background.
    pub degenerate: bool,
}

/// Picks the threshold minimizing intra-class variance over all 256
/// candidates, smallest threshold on ties.
///
/// Minimizing intra-class variance is the same as maximizing the between-class
/// term `(N*s0 - n0*S)^2 / (n0*n1)`, which is compared exactly in integers.
pub fn otsu_threshold(img: &GrayImage) -> Otsu {
    let mut hist = [0u64; 256];
    for &v in img.data() {
        hist[v as usize] += 1;
    }
    otsu_from_histogram(&hist)
}

pub(crate) fn otsu_from_histogram(hist: &[u64; 256]) -> Otsu {
    let distinct: Vec<usize> = (0..256).filter(|&i| hist[i] > 0).collect();
    if distinct.len() <= 1 {
        return Otsu {
            threshold: distinct.first().copied().unwrap_or(0) as u8,
            degenerate: true,
        };
    }

    let n: u128 = hist.iter().map(|&c| c as u128).sum();
    let total: u128 = hist
        .iter()
        .enumerate()
        .map(|(i, &c)| i as u128 * c as u128)
        .sum();

    let mut best_t = 0usize;
    // between-class score as numerator/denominator; 0/1 for one-sided splits
    let mut best = (0u128, 1u128);
    let mut n0 = 0u128;
    let mut s0 = 0u128;
    for (t, &count) in hist.iter().enumerate() {
        n0 += count as u128;
        s0 += t as u128 * count as u128;
        let n1 = n - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let diff = (n * s0).abs_diff(n0 * total);
        let score = (diff * diff, n0 * n1);
        if greater(score, best) {
            best = score;
            best_t = t;
        }
    }
    Otsu {
        threshold: best_t as u8,
        degenerate: false,
    }
}

fn greater(a: (u128, u128), b: (u128, u128)) -> bool {
    match (a.0.checked_mul(b.1), b.0.checked_mul(a.1)) {
        (Some(l), Some(r)) => l > r,
        // only reachable for images of hundreds of megapixels
        _ => (a.0 as f64 / a.1 as f64) > (b.0 as f64 / b.1 as f64),
    }
}

/// Foreground where intensity is strictly above `threshold`.
pub fn binarize(img: &GrayImage, threshold: u8) -> BinaryImage {
    BinaryImage::from_vec(
        img.width(),
        img.height(),
        img.data().iter().map(|&v| v > threshold).collect(),
    )
    .expect("dimensions inherited from a valid image")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Intra-class sum of squared deviations for the split at `t`, kept as an
    /// exact rational (numerator, denominator) by summing each class directly.
    fn intra_class(data: &[u8], t: u8) -> (i128, i128) {
        let class = |pred: &dyn Fn(u8) -> bool| {
            let vals: Vec<i128> = data.iter().filter(|&&v| pred(v)).map(|&v| v as i128).collect();
            let n = vals.len() as i128;
            let s: i128 = vals.iter().sum();
            let q: i128 = vals.iter().map(|v| v * v).sum();
            // sum (v - s/n)^2 = (n*q - s^2) / n
            if n == 0 {
                (0, 1)
            } else {
                (n * q - s * s, n)
            }
        };
        let (a, b) = class(&|v| v <= t);
        let (c, d) = class(&|v| v > t);
        (a * d + c * b, b * d)
    }

    fn oracle(img: &GrayImage) -> u8 {
        let mut best = 0u8;
        let mut best_v = intra_class(img.data(), 0);
        for t in 1..=255u8 {
            let v = intra_class(img.data(), t);
            if v.0 * best_v.1 < best_v.0 * v.1 {
                best = t;
                best_v = v;
            }
        }
        best
    }

    #[test]
    fn constant_image_is_degenerate() {
        let img = GrayImage::filled(9, 4, 117).unwrap();
        assert_eq!(
            otsu_threshold(&img),
            Otsu {
                threshold: 117,
                degenerate: true
            }
        );
    }

    #[test]
    fn bimodal_halves_split_exactly() {
        let img = GrayImage::from_fn(20, 10, |x, _| if x < 10 { 10 } else { 200 }).unwrap();
        let o = otsu_threshold(&img);
        assert!(!o.degenerate);
        assert_eq!(o.threshold, 10, "smallest separating threshold");
        let mask = binarize(&img, o.threshold);
        for y in 0..10 {
            for x in 0..20 {
                assert_eq!(mask.get(x, y), x >= 10);
            }
        }
    }

    #[test]
    fn matches_exhaustive_oracle_on_random_images() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x75u64);
        for _ in 0..100 {
            let lo: u8 = rng.random_range(0..128);
            let hi: u8 = rng.random_range(lo..=255);
            let img = GrayImage::from_fn(32, 32, |_, _| rng.random_range(lo..=hi)).unwrap();
            let o = otsu_threshold(&img);
            if !o.degenerate {
                assert_eq!(o.threshold, oracle(&img));
            }
        }
    }
}
