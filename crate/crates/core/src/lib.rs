//! Membership-inference auditing for diffusion models via frequency-calibrated
//! reconstruction error (FCRE).
//!
//! The pipeline inverts an image to a noise level with deterministic DDIM,
//! round-trips one stride, keeps only the mid-frequency patches of the clean
//! image, and scores the reconstruction with `(1 - SSIM) + L2`. Lower scores
//! indicate likely training members.

pub mod attack;
pub mod audit;
pub mod baselines;
pub mod config;
pub mod dataset;
pub mod ddim;
pub mod error;
pub mod evaluation;
pub mod frequency;
pub mod image;
pub mod predictor;
pub mod report;
pub mod schedule;
pub mod similarity;
pub mod synthetic;

pub use attack::{FcreConfig, Reconstruction};
pub use config::AuditConfig;
pub use error::{Error, Result};
pub use evaluation::{AttackReport, ScoreSet};
pub use frequency::{FrequencyMask, ThresholdConfig};
pub use image::{ImageTensor, Shape};
pub use predictor::{NoisePredictor, PredictorKind};
pub use schedule::{NoiseSchedule, TrajectoryConfig};
pub use similarity::{Membership, ScoreRecord, SsimParams};
