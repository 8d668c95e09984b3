//! Independent reference implementations shared by the integration suites.
//!
//! Everything here is written the slow, obvious way on purpose: pairwise
//! comparisons instead of ranks, exhaustive threshold scans instead of sweeps,
//! per-pixel clamped indexing instead of slices.
#![allow(dead_code)]

use fcre::{ImageTensor, Shape};
use rand::Rng;

pub fn random_image(rng: &mut impl Rng, height: usize, width: usize, channels: usize) -> ImageTensor {
    let shape = Shape::new(height, width, channels);
    let data = (0..shape.len()).map(|_| rng.random_range(-1.0..=1.0)).collect();
    ImageTensor::new(shape, data).unwrap()
}

/// SSIM from raw moments `E[xy] - E[x]E[y]`, written as one product.
pub fn ssim_oracle(p: &[f64], q: &[f64], c1: f64, c2: f64) -> f64 {
    let n = p.len() as f64;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n;
    let (mx, my) = (mean(p), mean(q));
    let exx = p.iter().map(|a| a * a).sum::<f64>() / n;
    let eyy = q.iter().map(|b| b * b).sum::<f64>() / n;
    let exy = p.iter().zip(q).map(|(a, b)| a * b).sum::<f64>() / n;
    let (vx, vy, cxy) = (exx - mx * mx, eyy - my * my, exy - mx * my);
    ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
}

/// Sum of squared 4-neighbour Laplacian responses of the channel mean, per
/// patch, by visiting every pixel and accumulating into its patch.
pub fn patch_scores_oracle(img: &ImageTensor, patch: usize) -> Vec<f64> {
    let (h, w, ch) = (img.height() as i64, img.width() as i64, img.channels());
    let lum = |r: i64, c: i64| -> f64 {
        let (r, c) = (r.clamp(0, h - 1) as usize, c.clamp(0, w - 1) as usize);
        (0..ch).map(|k| img.get(k, r, c)).sum::<f64>() / ch as f64
    };
    let cols = w as usize / patch;
    let mut scores = vec![0.0; (h as usize / patch) * cols];
    for r in 0..h {
        for c in 0..w {
            let v = lum(r - 1, c) + lum(r + 1, c) + lum(r, c - 1) + lum(r, c + 1) - 4.0 * lum(r, c);
            scores[(r as usize / patch) * cols + c as usize / patch] += v * v;
        }
    }
    scores
}

/// `(2 * #{m < n} + #{m == n}) / (2 * |M| * |N|)` over all pairs.
pub fn auc_oracle(members: &[f64], nonmembers: &[f64]) -> f64 {
    let mut twice = 0u64;
    for &m in members {
        for &n in nonmembers {
            twice += match m.partial_cmp(&n).unwrap() {
                std::cmp::Ordering::Less => 2,
                std::cmp::Ordering::Equal => 1,
                std::cmp::Ordering::Greater => 0,
            };
        }
    }
    twice as f64 / (2 * members.len() * nonmembers.len()) as f64
}

fn counts(members: &[f64], nonmembers: &[f64], threshold: f64) -> (usize, usize) {
    let tp = members.iter().filter(|&&s| s <= threshold).count();
    let fp = nonmembers.iter().filter(|&&s| s <= threshold).count();
    (tp, fp)
}

fn candidate_thresholds(members: &[f64], nonmembers: &[f64]) -> Vec<f64> {
    let mut all = vec![f64::NEG_INFINITY];
    all.extend(members.iter().chain(nonmembers));
    all
}

/// Best balanced accuracy of `score <= threshold` over every pooled score
/// (plus `-inf`) used directly as the threshold.
pub fn balanced_asr_oracle(members: &[f64], nonmembers: &[f64]) -> f64 {
    let (nm, nn) = (members.len(), nonmembers.len());
    let best = candidate_thresholds(members, nonmembers)
        .into_iter()
        .map(|thr| {
            let (tp, fp) = counts(members, nonmembers, thr);
            tp * nn + (nn - fp) * nm
        })
        .max()
        .unwrap();
    best as f64 / (2 * nm * nn) as f64
}

/// Largest TPR among thresholds whose FPR does not exceed `target`.
pub fn tpr_at_fpr_oracle(members: &[f64], nonmembers: &[f64], target: f64) -> f64 {
    let (nm, nn) = (members.len() as f64, nonmembers.len() as f64);
    candidate_thresholds(members, nonmembers)
        .into_iter()
        .filter_map(|thr| {
            let (tp, fp) = counts(members, nonmembers, thr);
            (fp as f64 / nn <= target).then_some(tp as f64 / nm)
        })
        .fold(0.0, f64::max)
}

/// Random score sets of size `1..=max_len`, half of them quantized to force ties.
pub fn random_score_sets(rng: &mut impl Rng, count: usize, max_len: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
    (0..count)
        .map(|i| {
            let nm = rng.random_range(1..=max_len);
            let nn = rng.random_range(1..=max_len);
            let shift = rng.random_range(-0.5..1.0);
            let quantum = if i % 2 == 0 { Some(rng.random_range(0.02..0.3)) } else { None };
            let mut draw = |offset: f64| {
                let v: f64 = rng.random_range(0.0..1.0) + offset;
                match quantum {
                    Some(q) => (v / q).round() * q,
                    None => v,
                }
            };
            let members = (0..nm).map(|_| draw(0.0)).collect();
            let nonmembers = (0..nn).map(|_| draw(shift)).collect();
            (members, nonmembers)
        })
        .collect()
}
