//! The per-image FCRE probe: invert to `t_attack`, round-trip one stride,
//! mask with the clean image's mid-frequency patches, and score.

use serde::{Deserialize, Serialize};

use crate::ddim::{reconstruct_multi, traverse_to_t};
use crate::error::Result;
use crate::frequency::{FrequencyMask, ScoreMode, ThresholdConfig};
use crate::image::ImageTensor;
use crate::predictor::NoisePredictor;
use crate::schedule::{NoiseSchedule, TrajectoryConfig};
use crate::similarity::{mia_score, Membership, ScoreConfig, ScoreRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FcreConfig {
    pub trajectory: TrajectoryConfig,
    /// Strides travelled up and back down in the round trip.
    pub round_trips: usize,
    pub patch_size: usize,
    pub thresholds: ThresholdConfig,
    pub score_mode: ScoreMode,
    pub score: ScoreConfig,
}

impl FcreConfig {
    pub fn new(trajectory: TrajectoryConfig) -> Self {
        Self {
            trajectory,
            round_trips: 1,
            patch_size: 8,
            thresholds: ThresholdConfig::default(),
            score_mode: ScoreMode::SumSquared,
            score: ScoreConfig::default(),
        }
    }

    /// The SecMI statistic: full-image raw L2 of the round trip.
    pub fn secmi(&self) -> Self {
        Self {
            thresholds: ThresholdConfig::unmasked(),
            score: ScoreConfig {
                use_ssim: false,
                normalize_l2: false,
                ..self.score
            },
            ..*self
        }
    }

    /// Same probe with different mask thresholds.
    pub fn with_thresholds(&self, thresholds: ThresholdConfig) -> Self {
        Self { thresholds, ..*self }
    }
}

/// Latent at `t_attack` and its round-trip reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub x_t: ImageTensor,
    pub x_tilde: ImageTensor,
}

pub fn reconstruct(
    x0: &ImageTensor,
    config: &FcreConfig,
    predictor: &dyn NoisePredictor,
    schedule: &NoiseSchedule,
) -> Result<Reconstruction> {
    let tc = &config.trajectory;
    let x_t = traverse_to_t(x0, tc.t_attack, tc, predictor, schedule)?;
    let x_tilde = reconstruct_multi(&x_t, tc.t_attack, tc.stride, config.round_trips, predictor, schedule)?;
    Ok(Reconstruction { x_t, x_tilde })
}

/// Scores a finished reconstruction. The mask depends only on `x0`.
pub fn score_reconstruction(
    id: &str,
    label: Membership,
    x0: &ImageTensor,
    rec: &Reconstruction,
    config: &FcreConfig,
) -> Result<ScoreRecord> {
    let mask = FrequencyMask::for_image(x0, config.patch_size, config.thresholds, config.score_mode)?;
    mia_score(id, label, &rec.x_t, &rec.x_tilde, &mask, &config.score)
}

pub fn fcre_score(
    id: &str,
    label: Membership,
    x0: &ImageTensor,
    config: &FcreConfig,
    predictor: &dyn NoisePredictor,
    schedule: &NoiseSchedule,
) -> Result<ScoreRecord> {
    let rec = reconstruct(x0, config, predictor, schedule)?;
    score_reconstruction(id, label, x0, &rec, config)
}
