//! Noise predictors: the only model access the attack needs.
//!
//! A [`NoisePredictor`] returns `eps_hat(x_t, t)`, an estimate of the
//! Gaussian noise present in `x_t` at step `t`. Built-in analytic predictors
//! stand in for a trained denoiser; [`ExternalPredictor`] queries a real model
//! over the binary wire protocol in [`wire`].

pub mod client;
pub mod server;
pub mod wire;

use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::schedule::NoiseSchedule;

pub use client::ExternalPredictor;

/// Query access to `eps_hat_theta(x_t, t)`.
///
/// Implementations must be deterministic. Built-in predictors are pure and
/// may be called concurrently; the external client serializes requests on
/// its connection.
pub trait NoisePredictor: Send + Sync {
    fn predict(&self, x_t: &ImageTensor, t: usize, schedule: &NoiseSchedule) -> Result<ImageTensor>;

    /// Predicts a batch sharing one step index. The default loops over
    /// [`NoisePredictor::predict`].
    fn predict_batch(
        &self,
        batch: &[ImageTensor],
        t: usize,
        schedule: &NoiseSchedule,
    ) -> Result<Vec<ImageTensor>> {
        batch.iter().map(|x| self.predict(x, t, schedule)).collect()
    }
}

/// The predictor families the toolkit knows how to build.
#[derive(Debug)]
pub enum PredictorKind {
    /// Fills every pixel with `value`, independent of the input.
    Constant(f64),
    /// Exact posterior-mean noise for data drawn from `N(mean, data_std^2 I)`.
    GaussianAnalytic(GaussianAnalytic),
    /// Ideal denoiser of a finite member bank; surrogate for an overfit model.
    Memorizing(Memorizing),
    External(ExternalPredictor),
}

impl PredictorKind {
    pub fn constant(value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::Predictor(format!("constant {value} is not finite")));
        }
        Ok(Self::Constant(value))
    }

    pub fn gaussian(mean: ImageTensor, data_std: f64) -> Result<Self> {
        GaussianAnalytic::new(mean, data_std).map(Self::GaussianAnalytic)
    }

    pub fn memorizing(bank: Vec<ImageTensor>, temperature: f64) -> Result<Self> {
        Memorizing::new(bank, temperature).map(Self::Memorizing)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Constant(_) => "constant",
            Self::GaussianAnalytic(_) => "gaussian",
            Self::Memorizing(_) => "memorizing",
            Self::External(_) => "external",
        }
    }
}

impl NoisePredictor for PredictorKind {
    fn predict(&self, x_t: &ImageTensor, t: usize, schedule: &NoiseSchedule) -> Result<ImageTensor> {
        match self {
            Self::Constant(v) => {
                schedule.check_step(t)?;
                Ok(ImageTensor::filled(x_t.shape(), *v))
            }
            Self::GaussianAnalytic(g) => g.predict(x_t, t, schedule),
            Self::Memorizing(m) => m.predict(x_t, t, schedule),
            Self::External(e) => e.predict(x_t, t, schedule),
        }
    }

    fn predict_batch(
        &self,
        batch: &[ImageTensor],
        t: usize,
        schedule: &NoiseSchedule,
    ) -> Result<Vec<ImageTensor>> {
        match self {
            Self::External(e) => e.predict_batch(batch, t, schedule),
            _ => batch.iter().map(|x| self.predict(x, t, schedule)).collect(),
        }
    }
}

/// Convenience wrapper over [`NoisePredictor::predict`].
pub fn predict_noise(
    predictor: &dyn NoisePredictor,
    x_t: &ImageTensor,
    t: usize,
    schedule: &NoiseSchedule,
) -> Result<ImageTensor> {
    predictor.predict(x_t, t, schedule)
}

#[derive(Debug, Clone)]
pub struct GaussianAnalytic {
    mean: ImageTensor,
    data_std: f64,
}

impl GaussianAnalytic {
    pub fn new(mean: ImageTensor, data_std: f64) -> Result<Self> {
        if !(data_std > 0.0 && data_std.is_finite()) {
            return Err(Error::Predictor(format!("data_std must be positive, got {data_std}")));
        }
        Ok(Self { mean, data_std })
    }

    pub fn mean(&self) -> &ImageTensor {
        &self.mean
    }

    pub fn data_std(&self) -> f64 {
        self.data_std
    }
}

impl NoisePredictor for GaussianAnalytic {
    fn predict(&self, x_t: &ImageTensor, t: usize, schedule: &NoiseSchedule) -> Result<ImageTensor> {
        schedule.check_step(t)?;
        let ab = schedule.alpha_bar(t)?;
        let (sa, sn) = (ab.sqrt(), (1.0 - ab).sqrt());
        let denom = ab * self.data_std * self.data_std + 1.0 - ab;
        x_t.zip_map(&self.mean, |x, mu| sn * (x - sa * mu) / denom)
    }
}

/// Softmin-weighted ideal denoiser over a bank of member images.
///
/// The clean estimate `x*` is the softmin combination of bank images, weighted
/// by mean squared distance to `x_t / sqrt(alpha_bar_t)` divided by
/// `temperature`. Small temperatures approach hard nearest-neighbour lookup.
#[derive(Debug, Clone)]
pub struct Memorizing {
    bank: Vec<ImageTensor>,
    temperature: f64,
}

impl Memorizing {
    pub fn new(bank: Vec<ImageTensor>, temperature: f64) -> Result<Self> {
        let Some(first) = bank.first() else {
            return Err(Error::Predictor("memorizing predictor needs a non-empty bank".into()));
        };
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::Predictor(format!(
                "temperature must be positive, got {temperature}"
            )));
        }
        let shape = first.shape();
        if let Some(bad) = bank.iter().find(|b| b.shape() != shape) {
            return Err(Error::shape(shape, bad.shape()));
        }
        Ok(Self { bank, temperature })
    }

    pub fn bank(&self) -> &[ImageTensor] {
        &self.bank
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    /// Softmin weights of every bank image for the query `x_t / sqrt(alpha_bar)`.
    pub fn weights(&self, query: &[f64]) -> Vec<f64> {
        let n = query.len() as f64;
        let logits: Vec<f64> = self
            .bank
            .iter()
            .map(|b| {
                let d: f64 = b
                    .as_slice()
                    .iter()
                    .zip(query)
                    .map(|(bi, qi)| (qi - bi) * (qi - bi))
                    .sum();
                -(d / n) / self.temperature
            })
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut w: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);
        w
    }

    /// The softmin clean-image estimate `x*` for `x_t` at `alpha_bar`.
    pub fn clean_estimate(&self, x_t: &ImageTensor, alpha_bar: f64) -> Result<Vec<f64>> {
        let shape = self.bank[0].shape();
        if x_t.shape() != shape {
            return Err(Error::shape(shape, x_t.shape()));
        }
        let inv = 1.0 / alpha_bar.sqrt();
        let query: Vec<f64> = x_t.as_slice().iter().map(|v| v * inv).collect();
        let weights = self.weights(&query);
        let mut estimate = vec![0.0; query.len()];
        for (b, &w) in self.bank.iter().zip(&weights) {
            if w == 0.0 {
                continue;
            }
            for (e, &v) in estimate.iter_mut().zip(b.as_slice()) {
                *e += w * v;
            }
        }
        Ok(estimate)
    }
}

impl NoisePredictor for Memorizing {
    fn predict(&self, x_t: &ImageTensor, t: usize, schedule: &NoiseSchedule) -> Result<ImageTensor> {
        schedule.check_step(t)?;
        let ab = schedule.alpha_bar(t)?;
        let estimate = self.clean_estimate(x_t, ab)?;
        let (sa, sn) = (ab.sqrt(), (1.0 - ab).sqrt());
        let data = x_t
            .as_slice()
            .iter()
            .zip(&estimate)
            .map(|(x, e)| (x - sa * e) / sn)
            .collect();
        ImageTensor::new(x_t.shape(), data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Shape;

    fn schedule() -> NoiseSchedule {
        NoiseSchedule::linear(1000, 1e-4, 0.02).unwrap()
    }

    #[test]
    fn constant_zero_gives_zeros() {
        let s = schedule();
        let x = ImageTensor::from_fn(4, 4, |r, c| (r as f64 - c as f64) / 4.0);
        let eps = PredictorKind::constant(0.0).unwrap().predict(&x, 10, &s).unwrap();
        assert!(eps.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn step_range_is_checked() {
        let s = schedule();
        let x = ImageTensor::zeros(Shape::new(2, 2, 1));
        let p = PredictorKind::constant(0.0).unwrap();
        assert!(p.predict(&x, 0, &s).is_err());
        assert!(p.predict(&x, 1001, &s).is_err());
    }

    #[test]
    fn gaussian_vanishes_on_scaled_mean() {
        let s = schedule();
        let mean = ImageTensor::from_fn(3, 3, |r, c| 0.1 * r as f64 - 0.2 * c as f64);
        let p = PredictorKind::gaussian(mean.clone(), 0.5).unwrap();
        for t in [1, 250, 999] {
            let sa = s.alpha_bar(t).unwrap().sqrt();
            let x = mean.map(|v| sa * v).unwrap();
            let eps = p.predict(&x, t, &s).unwrap();
            assert!(eps.as_slice().iter().all(|v| v.abs() < 1e-15));
        }
    }

    #[test]
    fn gaussian_is_affine() {
        let s = schedule();
        let mean = ImageTensor::from_fn(2, 2, |r, c| (r + c) as f64 * 0.1);
        let p = PredictorKind::gaussian(mean, 0.7).unwrap();
        let a = ImageTensor::from_fn(2, 2, |r, c| r as f64 - 0.3 * c as f64);
        let b = ImageTensor::from_fn(2, 2, |r, c| 0.2 * c as f64 - r as f64);
        let mid = a.zip_map(&b, |x, y| 0.5 * (x + y)).unwrap();
        let pa = p.predict(&a, 300, &s).unwrap();
        let pb = p.predict(&b, 300, &s).unwrap();
        let pm = p.predict(&mid, 300, &s).unwrap();
        let avg = pa.zip_map(&pb, |x, y| 0.5 * (x + y)).unwrap();
        assert!(pm.max_abs_diff(&avg) < 1e-14);
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(PredictorKind::memorizing(vec![], 1.0).is_err());
        let img = ImageTensor::zeros(Shape::new(2, 2, 1));
        assert!(PredictorKind::memorizing(vec![img.clone()], 0.0).is_err());
        assert!(PredictorKind::gaussian(img.clone(), 0.0).is_err());
        let other = ImageTensor::zeros(Shape::new(4, 4, 1));
        assert!(PredictorKind::memorizing(vec![img, other], 1.0).is_err());
        assert!(PredictorKind::constant(f64::NAN).is_err());
    }

    #[test]
    fn memorizing_cold_limit_is_exact() {
        let s = schedule();
        let bank: Vec<ImageTensor> = (0..4)
            .map(|k| ImageTensor::from_fn(4, 4, |r, c| ((r * 4 + c + k * 5) % 7) as f64 / 7.0 - 0.5))
            .collect();
        let p = Memorizing::new(bank.clone(), 1e-9).unwrap();
        let t = 200;
        let sa = s.alpha_bar(t).unwrap().sqrt();
        let x_t = bank[2].map(|v| sa * v).unwrap();
        let eps = p.predict(&x_t, t, &s).unwrap();
        let sn = (1.0 - s.alpha_bar(t).unwrap()).sqrt();
        let expected = x_t.zip_map(&bank[2], |x, b| (x - sa * b) / sn).unwrap();
        assert_eq!(eps, expected);
    }

    #[test]
    fn memorizing_weights_sum_to_one() {
        let bank: Vec<ImageTensor> = (0..5)
            .map(|k| ImageTensor::filled(Shape::new(2, 2, 1), k as f64 * 0.2 - 0.4))
            .collect();
        let p = Memorizing::new(bank, 0.05).unwrap();
        let w = p.weights(&[0.1, 0.1, 0.1, 0.1]);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w[2] > w[0] && w[3] > w[4]);
    }
}
