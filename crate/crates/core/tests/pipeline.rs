//! End-to-end audit behaviour: determinism, ordering, quarantine and baselines.

mod common;

use fcre::audit::{default_ablation_grid, labeled, run_ablation, run_audit};
use fcre::baselines::{loss_based_score, uniform_steps};
use fcre::config::AttackKind;
use fcre::dataset::{Dataset, LabeledImage};
use fcre::report::records_to_jsonl;
use fcre::synthetic::{generate, textured_image, SyntheticSpec};
use fcre::{AuditConfig, Error, ImageTensor, Membership, NoisePredictor, NoiseSchedule, PredictorKind, ScoreRecord, ThresholdConfig};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_benchmark() -> (Dataset, PredictorKind) {
    let bench = generate(&SyntheticSpec {
        members: 24,
        nonmembers: 24,
        noise_amplitude: 0.1,
        seed: 4,
        ..SyntheticSpec::default()
    })
    .unwrap();
    let p = bench.predictor().unwrap();
    (bench.dataset, p)
}

fn sorted(mut records: Vec<ScoreRecord>) -> Vec<ScoreRecord> {
    records.sort_by(|a, b| a.id.cmp(&b.id));
    records
}

#[test]
fn reruns_are_bit_identical() {
    let (ds, p) = small_benchmark();
    let cfg = AuditConfig::default();
    let a = run_audit(&cfg, &ds, &p).unwrap();
    let b = run_audit(&cfg, &ds, &p).unwrap();
    assert_eq!(records_to_jsonl(&a.records), records_to_jsonl(&b.records));
    assert_eq!(a.report, b.report);
}

#[test]
fn processing_order_does_not_change_results() {
    let (ds, p) = small_benchmark();
    let mut cfg = AuditConfig::default();
    let mut shuffled = ds.images.clone();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
    let shuffled = Dataset::from_images(shuffled).unwrap();
    for attack in [AttackKind::Fcre, AttackKind::Loss] {
        cfg.attack = attack;
        let a = run_audit(&cfg, &ds, &p).unwrap();
        let b = run_audit(&cfg, &shuffled, &p).unwrap();
        assert_eq!(sorted(a.records), sorted(b.records));
        assert_eq!(a.report.auc, b.report.auc);
    }
}

#[test]
fn ablation_cells_equal_standalone_audits() {
    let (ds, p) = small_benchmark();
    let cfg = AuditConfig::default();
    let table = run_ablation(&cfg, &ds, &p, &default_ablation_grid()).unwrap();
    for cell in &table.cells {
        let mut single = cfg.clone();
        single.l_min = cell.thresholds.l_min;
        single.l_max = cell.thresholds.l_max;
        let audit = run_audit(&single, &ds, &p).unwrap();
        assert_eq!(audit.records, cell.records);
        assert_eq!(audit.report, cell.report);
    }
    let only = run_ablation(&cfg, &ds, &p, &[ThresholdConfig::unmasked()]).unwrap();
    assert_eq!(only.cells.len(), 1);
    assert!(only.cells[0].records.iter().all(|r| r.selected_patch_count == 16));
}

struct FailsOn(Vec<ImageTensor>);

impl NoisePredictor for FailsOn {
    fn predict(&self, x: &ImageTensor, _t: usize, _s: &NoiseSchedule) -> fcre::Result<ImageTensor> {
        // the first query of an image sees it unchanged (level 0)
        if self.0.iter().any(|b| b == x) {
            return Err(Error::Predictor("refused".into()));
        }
        Ok(ImageTensor::zeros(x.shape()))
    }
}

fn images(n: usize) -> Vec<LabeledImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    (0..n)
        .map(|i| {
            let label = if i % 2 == 0 { Membership::Member } else { Membership::NonMember };
            labeled(format!("img{i:03}"), label, textured_image(16, &mut rng))
        })
        .collect()
}

#[test]
fn quarantine_accounts_for_every_image() {
    let imgs = images(200);
    let ds = Dataset::from_images(imgs.clone()).unwrap();
    let cfg = AuditConfig::default();
    let out = run_audit(&cfg, &ds, &FailsOn(vec![imgs[7].image.clone(), imgs[50].image.clone()])).unwrap();
    assert_eq!(out.records.len() + out.quarantined.len(), 200);
    let ids: Vec<&str> = out.quarantined.iter().map(|q| q.id.as_str()).collect();
    assert_eq!(ids, ["img007", "img050"]);
    assert!(out.quarantined[0].error.contains("refused"));

    let three = FailsOn(vec![imgs[1].image.clone(), imgs[2].image.clone(), imgs[3].image.clone()]);
    assert!(matches!(
        run_audit(&cfg, &ds, &three),
        Err(Error::TooManyFailures { failed: 3, total: 200 })
    ));
}

#[test]
fn indivisible_patch_size_is_a_config_error() {
    let ds = Dataset::from_images(images(4)).unwrap();
    let mut cfg = AuditConfig::default();
    cfg.patch_size = 5;
    let p = PredictorKind::constant(0.0).unwrap();
    assert!(matches!(run_audit(&cfg, &ds, &p), Err(Error::Config(_))));
}

#[test]
fn loss_with_zero_predictor_is_mean_noise_energy() {
    let s = NoiseSchedule::linear(1000, 1e-4, 0.02).unwrap();
    let x0 = textured_image(32, &mut ChaCha8Rng::seed_from_u64(3));
    let p = PredictorKind::constant(0.0).unwrap();
    let steps = uniform_steps(1000, 10);
    // mean of 10240 squared standard normals: sd sqrt(2 / 10240)
    let tol = 5.0 * (2.0f64 / 10240.0).sqrt();
    for seed in 0..5 {
        let score = loss_based_score(&x0, &steps, &p, &s, seed).unwrap();
        assert!((score - 1.0).abs() < tol, "{score}");
    }
}

#[test]
fn loss_separates_memorized_images_on_average() {
    let s = NoiseSchedule::linear(1000, 1e-4, 0.02).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let bank: Vec<ImageTensor> = (0..8).map(|_| textured_image(16, &mut rng)).collect();
    let outsider = textured_image(16, &mut rng);
    let p = PredictorKind::memorizing(bank.clone(), 0.05).unwrap();
    let steps = uniform_steps(1000, 10);
    let (mut member, mut nonmember) = (0.0, 0.0);
    for seed in 0..100 {
        member += loss_based_score(&bank[0], &steps, &p, &s, seed).unwrap();
        nonmember += loss_based_score(&outsider, &steps, &p, &s, seed).unwrap();
    }
    assert!(member < nonmember, "{member} vs {nonmember}");
}

#[test]
fn loss_scores_ignore_mask_and_similarity_settings() {
    let (ds, p) = small_benchmark();
    let mut cfg = AuditConfig::default();
    cfg.attack = AttackKind::Loss;
    let base = run_audit(&cfg, &ds, &p).unwrap();
    cfg.l_min = 0.0;
    cfg.l_max = 60.0;
    cfg.use_ssim = false;
    cfg.normalize_l2 = false;
    let changed = run_audit(&cfg, &ds, &p).unwrap();
    assert_eq!(base.records, changed.records);
    assert!(base.records.iter().all(|r| r.attack == "loss"));
}
