//! End-to-end audit runs and threshold ablations.

use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::{reconstruct, score_reconstruction, Reconstruction};
use crate::baselines::{loss_based_score, uniform_steps};
use crate::config::{AttackKind, AuditConfig, PredictorChoice};
use crate::dataset::{ingest, Dataset, LabeledImage};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, AttackReport, ScoreSet};
use crate::frequency::ThresholdConfig;
use crate::image::{ImageTensor, Shape};
use crate::predictor::{ExternalPredictor, NoisePredictor, PredictorKind};
use crate::similarity::{Membership, ScoreRecord};

/// An image whose pipeline failed, kept out of the metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quarantined {
    pub id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditOutcome {
    pub report: AttackReport,
    pub records: Vec<ScoreRecord>,
    pub quarantined: Vec<Quarantined>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationCell {
    pub thresholds: ThresholdConfig,
    pub report: AttackReport,
    pub records: Vec<ScoreRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationOutcome {
    pub cells: Vec<AblationCell>,
    pub quarantined: Vec<Quarantined>,
}

/// `(0,100)`, `(15,85)`, `(15,100)`, `(0,85)`.
pub fn default_ablation_grid() -> Vec<ThresholdConfig> {
    [(0.0, 100.0), (15.0, 85.0), (15.0, 100.0), (0.0, 85.0)]
        .into_iter()
        .map(|(lo, hi)| ThresholdConfig { l_min: lo, l_max: hi })
        .collect()
}

/// Stable per-image seed from the run seed and the image id (FNV-1a).
pub fn image_seed(run_seed: u64, id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ run_seed;
    for b in id.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Builds the configured predictor. The memorizing bank defaults to the
/// dataset's members, or is loaded from `predictor_bank`.
pub fn build_predictor(config: &AuditConfig, dataset: &Dataset) -> Result<PredictorKind> {
    match config.predictor {
        PredictorChoice::Constant => PredictorKind::constant(config.predictor_value),
        PredictorChoice::Gaussian => PredictorKind::gaussian(
            ImageTensor::filled(dataset.resolution, config.predictor_mean),
            config.predictor_std,
        ),
        PredictorChoice::Memorizing => {
            let bank: Vec<ImageTensor> = match &config.predictor_bank {
                Some(path) => ingest(path, config.luminance)?
                    .images
                    .into_iter()
                    .map(|i| i.image)
                    .collect(),
                None => dataset.members().map(|i| i.image.clone()).collect(),
            };
            PredictorKind::memorizing(bank, config.predictor_temperature)
        }
        PredictorChoice::External => {
            let endpoint = config
                .predictor_endpoint
                .as_deref()
                .ok_or_else(|| Error::Config("predictor_endpoint not set".into()))?;
            ExternalPredictor::connect(endpoint, Duration::from_millis(config.predictor_timeout_ms))
                .map(PredictorKind::External)
        }
    }
}

fn check_resolution(config: &AuditConfig, dataset: &Dataset) -> Result<()> {
    let Shape { height, width, .. } = dataset.resolution;
    let p = config.patch_size;
    if height % p != 0 || width % p != 0 {
        return Err(Error::Config(format!(
            "patch_size {p} does not divide the {height}x{width} dataset resolution"
        )));
    }
    Ok(())
}

fn check_failures(failed: usize, total: usize) -> Result<()> {
    if failed * 100 > total {
        return Err(Error::TooManyFailures { failed, total });
    }
    Ok(())
}

fn partition<T>(
    images: &[LabeledImage],
    results: Vec<Result<T>>,
) -> (Vec<(usize, T)>, Vec<Quarantined>) {
    let mut ok = Vec::new();
    let mut bad = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => ok.push((i, v)),
            Err(e) => bad.push(Quarantined {
                id: images[i].id.clone(),
                error: e.to_string(),
            }),
        }
    }
    (ok, bad)
}

fn score_one(
    config: &AuditConfig,
    img: &LabeledImage,
    predictor: &dyn NoisePredictor,
    schedule: &crate::schedule::NoiseSchedule,
) -> Result<ScoreRecord> {
    let fcre = config.fcre()?;
    let mut record = match config.attack {
        AttackKind::Fcre | AttackKind::Secmi => {
            let probe = if config.attack == AttackKind::Secmi { fcre.secmi() } else { fcre };
            let rec = reconstruct(&img.image, &probe, predictor, schedule)?;
            score_reconstruction(&img.id, img.label, &img.image, &rec, &probe)?
        }
        AttackKind::Loss => {
            let steps = uniform_steps(config.total_steps, config.loss_steps);
            let seed = image_seed(config.seed, &img.id);
            let loss = loss_based_score(&img.image, &steps, predictor, schedule, seed)?;
            ScoreRecord {
                id: img.id.clone(),
                attack: String::new(),
                label: img.label,
                ssim_term: 0.0,
                l2_term: loss,
                mia_score: loss,
                selected_patch_count: 0,
                fallback: false,
            }
        }
    };
    if !record.mia_score.is_finite() {
        return Err(Error::NonFinite(format!("score of {}", img.id)));
    }
    record.attack = config.attack_name().to_string();
    Ok(record)
}

/// Scores every image, then evaluates the labeled ones.
///
/// Images are processed in parallel; records come back in dataset order.
pub fn run_audit(config: &AuditConfig, dataset: &Dataset, predictor: &dyn NoisePredictor) -> Result<AuditOutcome> {
    config.validate()?;
    check_resolution(config, dataset)?;
    let schedule = config.schedule()?;
    let results: Vec<Result<ScoreRecord>> = dataset
        .images
        .par_iter()
        .map(|img| score_one(config, img, predictor, &schedule))
        .collect();
    let (ok, quarantined) = partition(&dataset.images, results);
    check_failures(quarantined.len(), dataset.images.len())?;
    let records: Vec<ScoreRecord> = ok.into_iter().map(|(_, r)| r).collect();
    let report = evaluate(config.attack_name(), &ScoreSet::from_records(&records)?, &config.eval())?;
    Ok(AuditOutcome {
        report,
        records,
        quarantined,
    })
}

/// Evaluates the FCRE attack at every threshold pair in `grid`.
///
/// Reconstructions do not depend on the mask, so they are computed once and
/// rescored per cell.
pub fn run_ablation(
    config: &AuditConfig,
    dataset: &Dataset,
    predictor: &dyn NoisePredictor,
    grid: &[ThresholdConfig],
) -> Result<AblationOutcome> {
    config.validate()?;
    if config.attack != AttackKind::Fcre {
        return Err(Error::Config("threshold ablation applies to the fcre attack only".into()));
    }
    if grid.is_empty() {
        return Err(Error::Config("ablation grid is empty".into()));
    }
    for t in grid {
        ThresholdConfig::new(t.l_min, t.l_max)?;
    }
    check_resolution(config, dataset)?;
    let schedule = config.schedule()?;
    let base = config.fcre()?;
    let results: Vec<Result<Reconstruction>> = dataset
        .images
        .par_iter()
        .map(|img| reconstruct(&img.image, &base, predictor, &schedule))
        .collect();
    let (recs, mut quarantined) = partition(&dataset.images, results);

    let mut cells = Vec::with_capacity(grid.len());
    for &thresholds in grid {
        let probe = base.with_thresholds(thresholds);
        let scored: Vec<Result<ScoreRecord>> = recs
            .par_iter()
            .map(|(i, rec)| {
                let img = &dataset.images[*i];
                let mut r = score_reconstruction(&img.id, img.label, &img.image, rec, &probe)?;
                r.attack = config.attack_name().to_string();
                Ok(r)
            })
            .collect();
        let mut records = Vec::with_capacity(scored.len());
        for ((i, _), r) in recs.iter().zip(scored) {
            match r {
                Ok(r) => records.push(r),
                Err(e) => quarantined.push(Quarantined {
                    id: dataset.images[*i].id.clone(),
                    error: format!("({}, {}): {e}", thresholds.l_min, thresholds.l_max),
                }),
            }
        }
        let report = evaluate(config.attack_name(), &ScoreSet::from_records(&records)?, &config.eval())?;
        cells.push(AblationCell {
            thresholds,
            report,
            records,
        });
    }
    check_failures(quarantined.len(), dataset.images.len())?;
    Ok(AblationOutcome { cells, quarantined })
}

/// Convenience for tests and tools: an in-memory dataset with labels.
pub fn labeled(id: impl Into<String>, label: Membership, image: ImageTensor) -> LabeledImage {
    LabeledImage {
        id: id.into(),
        label,
        image,
    }
}
