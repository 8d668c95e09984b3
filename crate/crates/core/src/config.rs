//! Audit configuration: a flat `key = value` document (TOML syntax).
//!
//! Unknown keys are rejected. Every key has a default, so an empty file is a
//! valid configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attack::FcreConfig;
use crate::error::{Error, Result};
use crate::evaluation::{AsrMode, EvalConfig};
use crate::frequency::{ScoreMode, ThresholdConfig};
use crate::schedule::{NoiseSchedule, TrajectoryConfig};
use crate::similarity::{ScoreConfig, SsimParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    /// Masked `(1 - SSIM) + L2`; switch off `use_ssim` for the L2-only variant.
    #[default]
    Fcre,
    Secmi,
    Loss,
}

impl AttackKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Fcre => "fcre",
            Self::Secmi => "secmi",
            Self::Loss => "loss",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorChoice {
    #[default]
    Constant,
    Gaussian,
    Memorizing,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditConfig {
    pub total_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub sampling_steps: usize,
    pub t_attack: usize,
    pub round_trips: usize,

    pub l_min: f64,
    pub l_max: f64,
    pub patch_size: usize,
    pub score_mode: ScoreMode,

    pub dynamic_range: f64,
    pub ssim_c1: Option<f64>,
    pub ssim_c2: Option<f64>,
    pub use_ssim: bool,
    pub normalize_l2: bool,

    pub attack: AttackKind,
    pub loss_steps: usize,

    pub predictor: PredictorChoice,
    pub predictor_value: f64,
    pub predictor_mean: f64,
    pub predictor_std: f64,
    pub predictor_temperature: f64,
    /// Manifest of bank images; defaults to the audited members.
    pub predictor_bank: Option<PathBuf>,
    pub predictor_endpoint: Option<String>,
    pub predictor_timeout_ms: u64,

    pub asr_mode: AsrMode,
    pub histogram_bins: usize,
    pub fpr_target: f64,
    pub holdout_threshold: Option<f64>,

    pub luminance: bool,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            total_steps: 1000,
            beta_start: 1e-4,
            beta_end: 0.02,
            sampling_steps: 100,
            t_attack: 100,
            round_trips: 1,
            l_min: 15.0,
            l_max: 85.0,
            patch_size: 8,
            score_mode: ScoreMode::SumSquared,
            dynamic_range: 2.0,
            ssim_c1: None,
            ssim_c2: None,
            use_ssim: true,
            normalize_l2: true,
            attack: AttackKind::Fcre,
            loss_steps: 10,
            predictor: PredictorChoice::Constant,
            predictor_value: 0.0,
            predictor_mean: 0.0,
            predictor_std: 0.5,
            predictor_temperature: 0.6,
            predictor_bank: None,
            predictor_endpoint: None,
            predictor_timeout_ms: 30_000,
            asr_mode: AsrMode::Balanced,
            histogram_bins: 30,
            fpr_target: 0.01,
            holdout_threshold: None,
            luminance: true,
            output_dir: PathBuf::from("fcre-out"),
            seed: 0,
        }
    }
}

impl AuditConfig {
    /// Parses a document and applies `key=value` overrides on top of it.
    pub fn from_str_with_overrides(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for (key, raw) in overrides {
            let value = format!("v = {raw}")
                .parse::<toml::Table>()
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(raw.clone()));
            table.insert(key.clone(), value);
        }
        let config: Self = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_str_with_overrides(text, &[])
    }

    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_str_with_overrides(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule()?;
        let tc = self.trajectory()?;
        if self.round_trips == 0 {
            return Err(Error::Config("round_trips must be at least 1".into()));
        }
        if self.t_attack + tc.stride * self.round_trips > self.total_steps {
            return Err(Error::Config(format!(
                "t_attack {} leaves no room for {} round-trip strides of {}",
                self.t_attack, self.round_trips, tc.stride
            )));
        }
        self.thresholds()?;
        if self.patch_size == 0 {
            return Err(Error::Config("patch_size must be positive".into()));
        }
        self.ssim_params().validate()?;
        if self.histogram_bins < 2 {
            return Err(Error::Config("histogram_bins must be at least 2".into()));
        }
        if !(self.fpr_target > 0.0 && self.fpr_target < 1.0) {
            return Err(Error::Config(format!("fpr_target {} outside (0, 1)", self.fpr_target)));
        }
        if self.attack == AttackKind::Loss && self.loss_steps == 0 {
            return Err(Error::Config("loss_steps must be positive".into()));
        }
        match self.predictor {
            PredictorChoice::Gaussian if self.predictor_std <= 0.0 => {
                Err(Error::Config("predictor_std must be positive".into()))
            }
            PredictorChoice::Memorizing if self.predictor_temperature <= 0.0 => {
                Err(Error::Config("predictor_temperature must be positive".into()))
            }
            PredictorChoice::External if self.predictor_endpoint.is_none() => {
                Err(Error::Config("external predictor needs predictor_endpoint".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::linear(self.total_steps, self.beta_start, self.beta_end)
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn trajectory(&self) -> Result<TrajectoryConfig> {
        TrajectoryConfig::new(self.total_steps, self.sampling_steps, self.t_attack)
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn thresholds(&self) -> Result<ThresholdConfig> {
        ThresholdConfig::new(self.l_min, self.l_max)
    }

    pub fn ssim_params(&self) -> SsimParams {
        let base = SsimParams::for_range(self.dynamic_range);
        SsimParams {
            c1: self.ssim_c1.unwrap_or(base.c1),
            c2: self.ssim_c2.unwrap_or(base.c2),
            dynamic_range: self.dynamic_range,
        }
    }

    pub fn fcre(&self) -> Result<FcreConfig> {
        Ok(FcreConfig {
            trajectory: self.trajectory()?,
            round_trips: self.round_trips,
            patch_size: self.patch_size,
            thresholds: self.thresholds()?,
            score_mode: self.score_mode,
            score: ScoreConfig {
                ssim: self.ssim_params(),
                use_ssim: self.use_ssim,
                normalize_l2: self.normalize_l2,
            },
        })
    }

    pub fn eval(&self) -> EvalConfig {
        EvalConfig {
            asr_mode: self.asr_mode,
            histogram_bins: self.histogram_bins,
            fpr_target: self.fpr_target,
            holdout_threshold: self.holdout_threshold,
        }
    }

    /// Label used on records and reports.
    pub fn attack_name(&self) -> &'static str {
        match (self.attack, self.use_ssim) {
            (AttackKind::Fcre, false) => "fcre-l2",
            (kind, _) => kind.name(),
        }
    }
}
