use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Number of points within perpendicular distance `tol` of the line through
/// `points[a]` and `points[b]`. Coincident endpoints fall back to the distance
/// from that single point.
fn count_inliers(points: &[(f64, f64)], a: usize, b: usize, tol: f64) -> usize {
    points.iter().filter(|&&p| is_inlier(points[a], points[b], p, tol)).count()
}

#[inline]
fn is_inlier(p: (f64, f64), q: (f64, f64), r: (f64, f64), tol: f64) -> bool {
    let (dx, dy) = (q.0 - p.0, q.1 - p.1);
    let len2 = dx * dx + dy * dy;
    let (rx, ry) = (r.0 - p.0, r.1 - p.1);
    if len2 == 0.0 {
        return rx * rx + ry * ry <= tol * tol;
    }
    let cross = dx * ry - dy * rx;
    cross * cross <= tol * tol * len2
}

/// Largest set of points within `tol` of a line through two of them.
///
/// When the number of point pairs does not exceed `iters` every pair is tried
/// in lexicographic order, otherwise `iters` pairs are drawn from a ChaCha8
/// stream seeded by `rng_seed`. The first hypothesis reaching the best count
/// wins. Returned indices are ascending.
pub fn ransac_fit_line(points: &[(f64, f64)], iters: usize, tol: f64, rng_seed: u64) -> Vec<usize> {
    let n = points.len();
    if n < 2 {
        return Vec::new();
    }
    let mut best: Option<(usize, usize, usize)> = None;
    let mut consider = |a: usize, b: usize| {
        let c = count_inliers(points, a, b, tol);
        if best.is_none_or(|(_, _, bc)| c > bc) {
            best = Some((a, b, c));
        }
    };
    if n * (n - 1) / 2 <= iters {
        for a in 0..n {
            for b in a + 1..n {
                consider(a, b);
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        for _ in 0..iters.max(1) {
            let a = rng.random_range(0..n);
            let mut b = rng.random_range(0..n - 1);
            if b >= a {
                b += 1;
            }
            consider(a, b);
        }
    }
    let (a, b, _) = best.expect("at least one hypothesis evaluated");
    (0..n)
        .filter(|&i| is_inlier(points[a], points[b], points[i], tol))
        .collect()
}
