//! Noise schedules and the strided DDIM trajectory.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coefficient tables of a discrete diffusion process with `T` steps.
///
/// Steps are 1-based: `beta(1)` is the first noising step. Level 0 denotes
/// the clean image and has `alpha_bar(0) == 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    /// Linearly interpolated betas, inclusive of both endpoints.
    pub fn linear(total_steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if total_steps < 2 {
            return Err(Error::InvalidSchedule(format!(
                "need at least 2 steps, got {total_steps}"
            )));
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::InvalidSchedule(format!(
                "betas must satisfy 0 < start <= end < 1, got {beta_start}..{beta_end}"
            )));
        }
        let last = (total_steps - 1) as f64;
        let betas = (0..total_steps)
            .map(|i| {
                if i == total_steps - 1 {
                    beta_end
                } else {
                    beta_start + (beta_end - beta_start) * (i as f64 / last)
                }
            })
            .collect();
        Self::from_betas(betas)
    }

    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::InvalidSchedule("empty beta table".into()));
        }
        if let Some(b) = betas.iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
            return Err(Error::InvalidSchedule(format!("beta {b} outside (0, 1)")));
        }
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bars = Vec::with_capacity(alphas.len());
        let mut acc = 1.0;
        for a in &alphas {
            acc *= a;
            alpha_bars.push(acc);
        }
        if alpha_bars.last().is_some_and(|&a| a <= 0.0) {
            return Err(Error::InvalidSchedule("cumulative product underflows".into()));
        }
        Ok(Self {
            betas,
            alphas,
            alpha_bars,
        })
    }

    pub fn total_steps(&self) -> usize {
        self.betas.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    /// `beta_t` for `1 <= t <= T`.
    pub fn beta(&self, t: usize) -> Result<f64> {
        self.check_step(t)?;
        Ok(self.betas[t - 1])
    }

    /// Cumulative product `alpha_bar_t` for `0 <= t <= T`.
    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        match t {
            0 => Ok(1.0),
            t if t <= self.total_steps() => Ok(self.alpha_bars[t - 1]),
            _ => Err(self.out_of_range(t)),
        }
    }

    pub fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.total_steps() {
            return Err(self.out_of_range(t));
        }
        Ok(())
    }

    fn out_of_range(&self, step: usize) -> Error {
        Error::StepOutOfRange {
            step,
            total: self.total_steps(),
        }
    }
}

/// Strided trajectory: `k` sampling steps of stride `T / k`, probed at `t_attack`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    pub sampling_steps: usize,
    pub stride: usize,
    pub t_attack: usize,
}

impl TrajectoryConfig {
    pub fn new(total_steps: usize, sampling_steps: usize, t_attack: usize) -> Result<Self> {
        if sampling_steps == 0 || sampling_steps > total_steps {
            return Err(Error::InvalidTrajectory(format!(
                "sampling steps {sampling_steps} must lie in 1..={total_steps}"
            )));
        }
        if !total_steps.is_multiple_of(sampling_steps) {
            return Err(Error::InvalidTrajectory(format!(
                "{sampling_steps} sampling steps do not divide {total_steps} diffusion steps"
            )));
        }
        let stride = total_steps / sampling_steps;
        if t_attack > total_steps || !t_attack.is_multiple_of(stride) {
            return Err(Error::InvalidTrajectory(format!(
                "t_attack {t_attack} is not a multiple of stride {stride} within 0..={total_steps}"
            )));
        }
        Ok(Self {
            sampling_steps,
            stride,
            t_attack,
        })
    }
}
