//! Reference attacks: the denoising-loss attack and SecMI.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::attack::{fcre_score, FcreConfig};
use crate::ddim::forward_noise;
use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::predictor::NoisePredictor;
use crate::schedule::NoiseSchedule;
use crate::similarity::Membership;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BaselineKind {
    LossBased { t_samples: Vec<usize> },
    SecMi { t_attack: usize },
}

/// `count` steps evenly spaced over `1..=total`, ending at `total`.
pub fn uniform_steps(total: usize, count: usize) -> Vec<usize> {
    let count = count.clamp(1, total);
    let mut steps: Vec<usize> = (1..=count).map(|i| (i * total + count / 2) / count).collect();
    steps.dedup();
    steps
}

/// Standard-normal noise for one `(image seed, step)` pair.
pub fn seeded_noise(like: &ImageTensor, seed: u64, t: usize) -> ImageTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(t as u64);
    let data = (0..like.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
    ImageTensor::new(like.shape(), data).expect("normal draws are finite")
}

/// Mean over `t_samples` of the per-pixel squared noise-prediction error.
pub fn loss_based_score(
    x0: &ImageTensor,
    t_samples: &[usize],
    predictor: &dyn NoisePredictor,
    schedule: &NoiseSchedule,
    noise_seed: u64,
) -> Result<f64> {
    if t_samples.is_empty() {
        return Err(Error::Config("loss attack needs at least one step".into()));
    }
    let mut total = 0.0;
    for &t in t_samples {
        let eps = seeded_noise(x0, noise_seed, t);
        let x_t = forward_noise(x0, t, &eps, schedule)?;
        let eps_hat = predictor.predict(&x_t, t, schedule)?;
        x0.ensure_same_shape(&eps_hat)?;
        let sq: f64 = eps
            .as_slice()
            .iter()
            .zip(eps_hat.as_slice())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        total += sq / x0.len() as f64;
    }
    Ok(total / t_samples.len() as f64)
}

/// `||x_tilde_t - x_t||_2` over the full image: the FCRE probe with the mask,
/// SSIM and normalization all switched off.
pub fn secmi_score(
    x0: &ImageTensor,
    predictor: &dyn NoisePredictor,
    schedule: &NoiseSchedule,
    config: &FcreConfig,
) -> Result<f64> {
    fcre_score("", Membership::Unknown, x0, &config.secmi(), predictor, schedule).map(|r| r.mia_score)
}
