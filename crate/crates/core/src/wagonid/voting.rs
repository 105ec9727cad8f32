use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ransac::ransac_fit_line;
use super::SegmentationParams;
use crate::error::{Error, Result};
use crate::imgcore::BBox;

/// Raw per-component votes and, once the sweep is over, their alignment weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VoteVector {
    pub votes: Vec<u32>,
    pub weighted: Vec<f64>,
}

/// Indices of the boxes whose bottom-right corner lies in `[j, j+d) x [k, k+d)`.
pub fn select_cc(boxes: &[BBox], j: usize, k: usize, d: usize) -> Vec<usize> {
    boxes
        .iter()
        .enumerate()
        .filter(|(_, b)| {
            let (cx, cy) = b.corner();
            (j..j + d).contains(&cx) && (k..k + d).contains(&cy)
        })
        .map(|(i, _)| i)
        .collect()
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// RANSAC seed of one window: a function of the run seed and the corners
/// relative to the window origin, so identical content draws identical samples
/// wherever the window sits.
fn window_seed(rng_seed: u64, rel: &[(f64, f64)]) -> u64 {
    rel.iter().fold(splitmix(rng_seed), |h, &(x, y)| {
        splitmix(h ^ ((x as u64) << 32 | y as u64))
    })
}

/// Sliding-window line voting over bottom-right corners.
///
/// Windows start at every `(j, k)` with `j < w`, `k < h` on the `s` grid.
/// Each window holding at least `min_window_points` corners runs one line fit
/// and adds one vote to each inlier.
pub fn vote_sweep(boxes: &[BBox], dims: (usize, usize), params: &SegmentationParams, rng_seed: u64) -> Vec<u32> {
    let (w, h) = dims;
    let (d, s) = (params.d, params.s.max(1));
    let mut by_x: Vec<usize> = (0..boxes.len()).collect();
    by_x.sort_by_key(|&i| (boxes[i].right(), i));
    let xs: Vec<usize> = by_x.iter().map(|&i| boxes[i].right()).collect();

    let columns: Vec<usize> = (0..w).step_by(s).collect();
    let hits: Vec<Vec<usize>> = columns
        .par_iter()
        .map(|&j| {
            let lo = xs.partition_point(|&x| x < j);
            let hi = xs.partition_point(|&x| x < j + d);
            let mut out = Vec::new();
            for k in (0..h).step_by(s) {
                let mut members: Vec<usize> = by_x[lo..hi]
                    .iter()
                    .copied()
                    .filter(|&i| (k..k + d).contains(&boxes[i].bottom()))
                    .collect();
                if members.len() < params.min_window_points.max(2) {
                    continue;
                }
                members.sort_unstable();
                let rel: Vec<(f64, f64)> = members
                    .iter()
                    .map(|&i| ((boxes[i].right() - j) as f64, (boxes[i].bottom() - k) as f64))
                    .collect();
                let seed = window_seed(rng_seed, &rel);
                let inliers = ransac_fit_line(&rel, params.ransac_iters, params.ransac_inlier_tol, seed);
                out.extend(inliers.into_iter().map(|p| members[p]));
            }
            out
        })
        .collect();

    let mut votes = vec![0u32; boxes.len()];
    for i in hits.into_iter().flatten() {
        votes[i] += 1;
    }
    votes
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Indices of the `top_k` components with nonzero votes, ranked by votes,
/// then larger area, then leftmost box, then index.
pub fn top_components(boxes: &[BBox], areas: &[usize], votes: &[u32], top_k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..votes.len()).filter(|&i| votes[i] > 0).collect();
    idx.sort_by(|&a, &b| {
        votes[b]
            .cmp(&votes[a])
            .then(areas[b].cmp(&areas[a]))
            .then(boxes[a].x.cmp(&boxes[b].x))
            .then(a.cmp(&b))
    });
    idx.truncate(top_k);
    idx
}

/// Alignment weighting of the raw votes.
///
/// For the selected components, `D_x` and `D_y` are the absolute deviations of
/// the bottom-right corner from the selection's median corner, divided by the
/// image width and height; `weighted = (exp(-D_x) + exp(-D_y)) * votes`.
/// Unselected components weigh 0.
pub fn weight_votes(
    boxes: &[BBox],
    areas: &[usize],
    votes: &[u32],
    top_k: usize,
    dims: (usize, usize),
) -> Result<VoteVector> {
    let selected = top_components(boxes, areas, votes, top_k);
    if selected.is_empty() {
        return Err(Error::NoCandidates);
    }
    let (w, h) = (dims.0.max(1) as f64, dims.1.max(1) as f64);
    let mx = median(selected.iter().map(|&i| boxes[i].right() as f64).collect());
    let my = median(selected.iter().map(|&i| boxes[i].bottom() as f64).collect());
    let mut weighted = vec![0.0; votes.len()];
    for &i in &selected {
        let dx = (boxes[i].right() as f64 - mx).abs() / w;
        let dy = (boxes[i].bottom() as f64 - my).abs() / h;
        let v = votes[i] as f64;
        weighted[i] = (-dx).exp() * v + (-dy).exp() * v;
    }
    Ok(VoteVector {
        votes: votes.to_vec(),
        weighted,
    })
}
