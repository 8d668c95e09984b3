//! Library routines checked against slow, independent reference computations.

mod common;

use fcre::ddim::{reconstruct_at_t, reconstruction_error_map, traverse_to_t, forward_noise_at};
use fcre::evaluation::{decide_membership, histogram, ScoreSet};
use fcre::frequency::{build_mask, FrequencyMask, LaplacianScoreMap, PatchGrid};
use fcre::similarity::{aggregate_ssim, masked_l2, mia_score, ScoreConfig};
use fcre::synthetic::textured_image;
use fcre::{ImageTensor, Membership, NoisePredictor, NoiseSchedule, PredictorKind, SsimParams, ThresholdConfig, TrajectoryConfig};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use common::*;

fn schedule() -> NoiseSchedule {
    NoiseSchedule::linear(1000, 1e-4, 0.02).unwrap()
}

/// Exact cumulative product of `1 - beta_t` for the linear schedule
/// `beta_t = 1/10^4 + (t - 1) * (199/10^4) / 999`.
fn exact_alpha_bar(t: usize) -> BigRational {
    let r = |n: i64, d: i64| BigRational::new(BigInt::from(n), BigInt::from(d));
    let start = r(1, 10_000);
    let step = r(199, 10_000 * 999);
    let mut product = BigRational::one();
    for i in 1..=t {
        let beta = &start + &step * BigRational::from_integer(BigInt::from(i as i64 - 1));
        product *= BigRational::one() - beta;
    }
    product
}

fn to_f64(q: &BigRational) -> f64 {
    let scale = BigInt::from(10).pow(60);
    let scaled = (q.numer() * &scale) / q.denom();
    scaled.to_f64().unwrap() / 1e60
}

#[test]
fn alpha_bar_matches_exact_rational_product() {
    let s = schedule();
    for (t, frozen) in [(100, 0.897_018_145_674_960_4), (1000, 4.035_829_765_375_683e-5)] {
        let exact = to_f64(&exact_alpha_bar(t));
        let lib = s.alpha_bar(t).unwrap();
        assert!(((lib - exact) / exact).abs() < 1e-12, "t={t}: {lib} vs {exact}");
        assert!(((exact - frozen) / frozen).abs() < 1e-15, "t={t}: oracle drifted from {frozen}");
    }
}

#[test]
fn alpha_bar_recurrence_and_monotonicity() {
    let s = schedule();
    let ab = |t: usize| s.alpha_bar(t).unwrap();
    assert_eq!(ab(0), 1.0);
    assert_eq!(s.alpha_bars().len(), 1000);
    for t in 1..=1000 {
        let expected = ab(t - 1) * s.alphas()[t - 1];
        assert!(((ab(t) - expected) / expected).abs() < 1e-12);
        assert!(ab(t) < ab(t - 1) && ab(t) > 0.0);
    }
}

#[test]
fn gaussian_standard_normal_step_matches_closed_form() {
    // For N(0, I) data the posterior-mean noise is sqrt(1 - ab) x, so the clean
    // estimate is sqrt(ab) x and one inversion step is a pure rescale.
    let s = schedule();
    let shape = fcre::Shape::new(4, 4, 1);
    let g = PredictorKind::gaussian(ImageTensor::zeros(shape), 1.0).unwrap();
    let x = ImageTensor::from_fn(4, 4, |r, c| (r as f64 - 1.5) * 0.7 + c as f64 * 0.2);
    for (t, stride) in [(10, 10), (100, 10), (400, 100)] {
        let ab = to_f64(&exact_alpha_bar(t));
        let ab_next = to_f64(&exact_alpha_bar(t + stride));
        let eps = g.predict(&x, t, &s).unwrap();
        let up = fcre::ddim::ddim_reverse_step(&x, t, stride, &g, &s).unwrap();
        let factor = (ab_next * ab).sqrt() + ((1.0 - ab_next) * (1.0 - ab)).sqrt();
        for i in 0..16 {
            let xi = x.as_slice()[i];
            assert!((eps.as_slice()[i] - (1.0 - ab).sqrt() * xi).abs() < 1e-12);
            assert!((up.as_slice()[i] - factor * xi).abs() < 1e-12);
        }
    }
}

/// Reference traversal: one hand-written DDIM update per stride.
fn reference_traverse(x0: &ImageTensor, strides: usize, stride: usize, p: &dyn NoisePredictor, s: &NoiseSchedule) -> Vec<f64> {
    let mut x = x0.as_slice().to_vec();
    for i in 0..strides {
        let (from, to) = (i * stride, (i + 1) * stride);
        let cur = ImageTensor::new(x0.shape(), x.clone()).unwrap();
        let eps = p.predict(&cur, from.max(1), s).unwrap();
        let (a, b) = (s.alpha_bar(from).unwrap(), s.alpha_bar(to).unwrap());
        for (v, e) in x.iter_mut().zip(eps.as_slice()) {
            let clean = (*v - (1.0 - a).sqrt() * e) / a.sqrt();
            *v = b.sqrt() * clean + (1.0 - b).sqrt() * e;
        }
    }
    x
}

#[test]
fn traversal_matches_reference_loop() {
    let s = schedule();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let bank: Vec<ImageTensor> = (0..6).map(|_| textured_image(16, &mut rng)).collect();
    let predictors = [
        PredictorKind::memorizing(bank.clone(), 0.6).unwrap(),
        PredictorKind::gaussian(bank[0].clone(), 0.4).unwrap(),
        PredictorKind::constant(0.3).unwrap(),
    ];
    let x0 = bank[2].clone();
    for p in &predictors {
        for (k, stride) in [(1, 10), (4, 10), (10, 10), (3, 50), (10, 100)] {
            let tc = TrajectoryConfig::new(1000, 1000 / stride, k * stride).unwrap();
            let lib = traverse_to_t(&x0, k * stride, &tc, p, &s).unwrap();
            let reference = reference_traverse(&x0, k, stride, p, &s);
            for (a, b) in lib.as_slice().iter().zip(&reference) {
                assert!((a - b).abs() < 1e-9, "{} k={k} stride={stride}", p.name());
            }
        }
    }
}

#[test]
fn memorizing_member_reconstructs_better_than_perturbed() {
    let s = schedule();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let bank: Vec<ImageTensor> = (0..16).map(|_| textured_image(16, &mut rng)).collect();
    let p = PredictorKind::memorizing(bank.clone(), 0.6).unwrap();
    let tc = TrajectoryConfig::new(1000, 100, 100).unwrap();
    for member in bank.iter().take(8) {
        let perturbed = member
            .zip_map(&random_image(&mut rng, 16, 16, 1), |a, b| (a + 0.5 * b).clamp(-1.0, 1.0))
            .unwrap();
        let err = |x0: &ImageTensor| {
            let x_t = traverse_to_t(x0, 100, &tc, &p, &s).unwrap();
            let rec = reconstruct_at_t(&x_t, 100, 10, &p, &s).unwrap();
            reconstruction_error_map(&x_t, &rec).unwrap()
        };
        let (m, n) = (err(member), err(&perturbed));
        assert!(m.l2 < n.l2, "member {} vs perturbed {}", m.l2, n.l2);
        let max = |e: &ImageTensor| e.as_slice().iter().copied().fold(0.0, f64::max);
        assert!(max(&m.abs_error) < max(&n.abs_error));
    }
}

#[test]
fn cold_memorizing_predictor_is_exact_on_bank_members() {
    let s = schedule();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let bank: Vec<ImageTensor> = (0..5).map(|_| textured_image(16, &mut rng)).collect();
    let p = PredictorKind::memorizing(bank.clone(), 1e-6).unwrap();
    let zero = ImageTensor::zeros(bank[0].shape());
    for b in &bank {
        for t in [10, 100, 500] {
            let ab = s.alpha_bar(t).unwrap();
            let x_t = forward_noise_at(b, &zero, ab).unwrap();
            let eps = p.predict(&x_t, t, &s).unwrap();
            for (e, (x, bv)) in eps.as_slice().iter().zip(x_t.as_slice().iter().zip(b.as_slice())) {
                assert_eq!(*e, (x - ab.sqrt() * bv) / (1.0 - ab).sqrt());
            }
            let rec = reconstruct_at_t(&x_t, t, 10, &p, &s).unwrap();
            assert!(rec.max_abs_diff(&x_t) < 1e-8);
        }
    }
}

/// Sort-and-slice percentile: value at fractional rank `p/100 * (n-1)`.
fn slice_percentile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = p / 100.0 * (v.len() - 1) as f64;
    let (lo, frac) = (pos.floor() as usize, pos.fract());
    if lo + 1 < v.len() {
        v[lo] * (1.0 - frac) + v[lo + 1] * frac
    } else {
        v[lo]
    }
}

#[test]
fn percentile_mask_matches_sort_and_slice() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let grid = PatchGrid::new(10, 10, 1).unwrap();
    for trial in 0..200 {
        let scores: Vec<f64> = (0..100).map(|_| rng.random_range(0.0..10.0)).collect();
        let thresholds = if trial % 2 == 0 {
            ThresholdConfig::default()
        } else {
            let lo = rng.random_range(0.0..50.0);
            ThresholdConfig::new(lo, rng.random_range(lo + 1.0..=100.0)).unwrap()
        };
        let mask = build_mask(&LaplacianScoreMap { grid, scores: scores.clone() }, thresholds).unwrap();
        let (lo, hi) = (slice_percentile(&scores, thresholds.l_min), slice_percentile(&scores, thresholds.l_max));
        let expected: Vec<bool> = scores.iter().map(|&s| s >= lo && s <= hi).collect();
        assert_eq!(mask.flags(), expected.as_slice());
        if trial % 2 == 0 {
            assert!((70..=72).contains(&mask.selected_count()), "{}", mask.selected_count());
        }
    }
}

fn random_mask(rng: &mut impl Rng, grid: PatchGrid) -> FrequencyMask {
    let mut flags: Vec<bool> = (0..grid.len()).map(|_| rng.random_bool(0.5)).collect();
    flags[0] = true;
    FrequencyMask::from_flags(grid, flags).unwrap()
}

fn patch_values(img: &ImageTensor, grid: PatchGrid, patch: usize, ch: usize) -> Vec<f64> {
    let (pr, pc) = (patch / grid.cols, patch % grid.cols);
    let mut out = Vec::new();
    for r in 0..img.height() {
        for c in 0..img.width() {
            if r / grid.patch_size == pr && c / grid.patch_size == pc {
                out.push(img.get(ch, r, c));
            }
        }
    }
    out
}

#[test]
fn aggregate_ssim_and_masked_l2_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let params = SsimParams::default();
    for trial in 0..40 {
        let channels = if trial % 4 == 0 { 3 } else { 1 };
        let x = random_image(&mut rng, 32, 32, channels);
        let y = x.zip_map(&random_image(&mut rng, 32, 32, channels), |a, b| a + 0.2 * b).unwrap();
        let grid = PatchGrid::for_image(&x, 8).unwrap();
        let mask = random_mask(&mut rng, grid);

        let mut total = 0.0;
        let mut count = 0;
        for p in mask.selected_patches() {
            for ch in 0..channels {
                total += ssim_oracle(&patch_values(&x, grid, p, ch), &patch_values(&y, grid, p, ch), params.c1, params.c2);
                count += 1;
            }
        }
        let lib = aggregate_ssim(&x, &y, &mask, &params).unwrap();
        assert!((lib - total / count as f64).abs() < 1e-12);

        let err = reconstruction_error_map(&x, &y).unwrap();
        let mut sum = 0.0;
        let mut pixels = 0;
        for p in mask.selected_patches() {
            for ch in 0..channels {
                for v in patch_values(&err.abs_error, grid, p, ch) {
                    sum += v * v;
                    pixels += 1;
                }
            }
        }
        assert!((masked_l2(&x, &y, &mask, false).unwrap() - sum.sqrt()).abs() < 1e-12);
        assert!((masked_l2(&x, &y, &mask, true).unwrap() - (sum / pixels as f64).sqrt()).abs() < 1e-12);
    }
}

#[test]
fn unmasked_l2_only_score_is_the_full_image_distance() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let x = random_image(&mut rng, 16, 16, 1);
        let y = x.zip_map(&random_image(&mut rng, 16, 16, 1), |a, b| a + 0.1 * b).unwrap();
        let full = reconstruction_error_map(&x, &y).unwrap().l2;
        let mask = FrequencyMask::all(PatchGrid::for_image(&x, 8).unwrap());
        let raw = ScoreConfig {
            use_ssim: false,
            normalize_l2: false,
            ..ScoreConfig::default()
        };
        let r = mia_score("x", Membership::Unknown, &x, &y, &mask, &raw).unwrap();
        assert!((r.mia_score - full).abs() < 1e-9);
        let rms = mia_score("x", Membership::Unknown, &x, &y, &mask, &ScoreConfig { normalize_l2: true, ..raw }).unwrap();
        assert!((rms.mia_score - full / 16.0).abs() < 1e-9);
    }
}

#[test]
fn ssim_degrades_monotonically_with_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let params = SsimParams::default();
    let amplitudes = [0.0, 0.05, 0.1, 0.2, 0.4];
    let grid = PatchGrid::new(32, 32, 8).unwrap();
    let mask = FrequencyMask::all(grid);
    let trials = 200;
    let mut values = vec![Vec::with_capacity(trials); amplitudes.len()];
    for _ in 0..trials {
        let x = textured_image(32, &mut rng);
        for (i, &a) in amplitudes.iter().enumerate() {
            let noise: Vec<f64> = (0..x.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
            let noise = ImageTensor::new(x.shape(), noise).unwrap();
            let noisy = x.zip_map(&noise, |v, n| v + a * n).unwrap();
            values[i].push(aggregate_ssim(&x, &noisy, &mask, &params).unwrap());
        }
    }
    for i in 1..amplitudes.len() {
        // paired one-sided test at 95%: mean drop must not be significantly negative
        let diffs: Vec<f64> = values[i - 1].iter().zip(&values[i]).map(|(a, b)| a - b).collect();
        let mean = diffs.iter().sum::<f64>() / trials as f64;
        let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
        let se = (var / trials as f64).sqrt();
        assert!(mean > -1.645 * se, "amplitude {}: mean drop {mean} (se {se})", amplitudes[i]);
        assert!(mean > 0.0);
    }
}

#[test]
fn decision_sweep_matches_enumeration() {
    let scores = [0.2, 0.5, 0.5, 0.9];
    let mut cuts = vec![f64::NEG_INFINITY, f64::INFINITY];
    cuts.extend(scores);
    cuts.extend([0.35, 0.7]);
    for thr in cuts {
        let decided: Vec<Membership> = scores.iter().map(|&s| decide_membership(s, thr)).collect();
        let expected: Vec<Membership> = scores
            .iter()
            .map(|&s| if s <= thr { Membership::Member } else { Membership::NonMember })
            .collect();
        assert_eq!(decided, expected);
    }
}

#[test]
fn uniform_histogram_has_unit_density() {
    let values: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
    let set = ScoreSet::new(values.clone(), values).unwrap();
    let h = histogram(&set, 10).unwrap();
    let area: f64 = (0..h.bins()).map(|b| h.member_density[b] * h.width(b)).sum();
    assert!((area - 1.0).abs() < 1e-12);
    for d in &h.member_density {
        assert!((d - 1.0).abs() < 0.01, "{d}");
    }
}

#[test]
fn histogram_overlap_shrinks_with_separation() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let base: Vec<f64> = (0..2000).map(|_| StandardNormal.sample(&mut rng)).collect();
    let other: Vec<f64> = (0..2000).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut last = f64::INFINITY;
    for shift in [0.0, 0.5, 1.0, 2.0, 4.0] {
        let shifted = other.iter().map(|v| v + shift).collect();
        let h = histogram(&ScoreSet::new(base.clone(), shifted).unwrap(), 30).unwrap();
        let overlap = h.overlap();
        assert!(overlap < last, "shift {shift}: {overlap} vs {last}");
        last = overlap;
    }
    assert!(last < 0.1);
}
