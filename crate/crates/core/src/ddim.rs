//! Forward noising and the deterministic DDIM step pair.
//!
//! The inversion step (`phi`) moves a latent from level `t` up to `t + stride`
//! using `eps_hat` evaluated at the starting point; the sampling step (`psi`)
//! moves it back down using `eps_hat` evaluated at the higher level. The
//! mismatch between the two evaluation points is the round-trip error the
//! attack measures.
//!
//! Level 0 is the clean image (`alpha_bar = 1`). The predictor is never
//! queried at level 0: steps leaving level 0 query it at step 1.

use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::predictor::NoisePredictor;
use crate::schedule::{NoiseSchedule, TrajectoryConfig};

/// `sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps`.
pub fn forward_noise(
    x0: &ImageTensor,
    t: usize,
    eps: &ImageTensor,
    schedule: &NoiseSchedule,
) -> Result<ImageTensor> {
    schedule.check_step(t)?;
    forward_noise_at(x0, eps, schedule.alpha_bar(t)?)
}

/// Forward noising at an explicit `alpha_bar` in `[0, 1]`.
pub fn forward_noise_at(x0: &ImageTensor, eps: &ImageTensor, alpha_bar: f64) -> Result<ImageTensor> {
    if !(0.0..=1.0).contains(&alpha_bar) {
        return Err(Error::InvalidSchedule(format!("alpha_bar {alpha_bar} outside [0, 1]")));
    }
    let (sa, sn) = (alpha_bar.sqrt(), (1.0 - alpha_bar).sqrt());
    x0.zip_map(eps, |x, e| sa * x + sn * e)
}

/// Moves `x` from noise level `alpha_from` to `alpha_to` given a noise estimate.
///
/// The clean estimate is `(x - sqrt(1 - alpha_from) eps) / sqrt(alpha_from)` and
/// the result re-noises it to `alpha_to` with the same `eps`.
pub fn ddim_transfer(
    x: &ImageTensor,
    eps_hat: &ImageTensor,
    alpha_from: f64,
    alpha_to: f64,
) -> Result<ImageTensor> {
    let (sa_from, sn_from) = (alpha_from.sqrt(), (1.0 - alpha_from).sqrt());
    let (sa_to, sn_to) = (alpha_to.sqrt(), (1.0 - alpha_to).sqrt());
    x.zip_map(eps_hat, |xv, ev| {
        let x0_hat = (xv - sn_from * ev) / sa_from;
        sa_to * x0_hat + sn_to * ev
    })
}

fn query_step(level: usize) -> usize {
    level.max(1)
}

fn check_span(t: usize, stride: usize, schedule: &NoiseSchedule) -> Result<()> {
    if stride == 0 {
        return Err(Error::InvalidTrajectory("stride must be positive".into()));
    }
    let total = schedule.total_steps();
    match t.checked_add(stride) {
        Some(top) if top <= total => Ok(()),
        _ => Err(Error::StepOutOfRange {
            step: t.saturating_add(stride),
            total,
        }),
    }
}

/// Inversion step `phi`: level `t` up to `t + stride`, `eps_hat` taken at `(x_cur, t)`.
pub fn ddim_reverse_step(
    x_cur: &ImageTensor,
    t: usize,
    stride: usize,
    predictor: &dyn NoisePredictor,
    schedule: &NoiseSchedule,
) -> Result<ImageTensor> {
    check_span(t, stride, schedule)?;
    let eps_hat = predictor.predict(x_cur, query_step(t), schedule)?;
    x_cur.ensure_same_shape(&eps_hat)?;
    ddim_transfer(
        x_cur,
        &eps_hat,
        schedule.alpha_bar(t)?,
        schedule.alpha_bar(t + stride)?,
    )
}

/// Sampling step `psi`: level `t + stride` down to `t`, `eps_hat` taken at `(x_next, t + stride)`.
pub fn ddim_denoise_step(
    x_next: &ImageTensor,
    t: usize,
    stride: usize,
    predictor: &dyn NoisePredictor,
    schedule: &NoiseSchedule,
) -> Result<ImageTensor> {
    check_span(t, stride, schedule)?;
    let eps_hat = predictor.predict(x_next, t + stride, schedule)?;
    x_next.ensure_same_shape(&eps_hat)?;
    ddim_transfer(
        x_next,
        &eps_hat,
        schedule.alpha_bar(t + stride)?,
        schedule.alpha_bar(t)?,
    )
}

/// Deterministic inversion of `x0` up to `t_attack` by repeated `phi` steps.
pub fn traverse_to_t(
    x0: &ImageTensor,
    t_attack: usize,
    config: &TrajectoryConfig,
    predictor: &dyn NoisePredictor,
    schedule: &NoiseSchedule,
) -> Result<ImageTensor> {
    let stride = config.stride;
    if stride == 0 || !t_attack.is_multiple_of(stride) || t_attack > schedule.total_steps() {
        return Err(Error::InvalidTrajectory(format!(
            "t_attack {t_attack} not reachable with stride {stride}"
        )));
    }
    let mut x = x0.clone();
    for level in (0..t_attack).step_by(stride) {
        x = ddim_reverse_step(&x, level, stride, predictor, schedule)?;
    }
    Ok(x)
}

/// One-level round trip `psi(phi(x_t, t), t)`.
pub fn reconstruct_at_t(
    x_t: &ImageTensor,
    t_attack: usize,
    stride: usize,
    predictor: &dyn NoisePredictor,
    schedule: &NoiseSchedule,
) -> Result<ImageTensor> {
    reconstruct_multi(x_t, t_attack, stride, 1, predictor, schedule)
}

/// Round trip through `rounds` strides: `rounds` inversion steps up from
/// `t_attack`, then as many sampling steps back down. `rounds == 1` is
/// [`reconstruct_at_t`].
///
/// The descent is carried as a deviation from the stored ascent. For one
/// stride from level `s` to `u`,
///
/// ```text
/// psi(x_u + d) = x_s + sqrt(ab_s / ab_u) d + kappa (eps_up - eps_down)
/// kappa        = sqrt(ab_s) sqrt(1 - ab_u) / sqrt(ab_u) - sqrt(1 - ab_s)
/// ```
///
/// which is the composed step pair rearranged. It avoids the cancellation of
/// scaling up and back down, so a predictor that answers identically on both
/// legs reconstructs `x_t` bit for bit.
pub fn reconstruct_multi(
    x_t: &ImageTensor,
    t_attack: usize,
    stride: usize,
    rounds: usize,
    predictor: &dyn NoisePredictor,
    schedule: &NoiseSchedule,
) -> Result<ImageTensor> {
    if rounds == 0 {
        return Err(Error::InvalidTrajectory("round trip needs at least one stride".into()));
    }
    check_span(t_attack, stride * rounds, schedule)?;
    // ascent: (level, state at level, eps_hat queried there)
    let mut path: Vec<(usize, ImageTensor, ImageTensor)> = Vec::with_capacity(rounds);
    let mut x = x_t.clone();
    for r in 0..rounds {
        let level = t_attack + r * stride;
        let eps_up = predictor.predict(&x, query_step(level), schedule)?;
        x.ensure_same_shape(&eps_up)?;
        let next = ddim_transfer(&x, &eps_up, schedule.alpha_bar(level)?, schedule.alpha_bar(level + stride)?)?;
        path.push((level, std::mem::replace(&mut x, next), eps_up));
    }
    let top = x;
    let mut deviation = ImageTensor::zeros(x_t.shape());
    let mut current = top;
    for (level, x_level, eps_up) in path.into_iter().rev() {
        let eps_down = predictor.predict(&current, level + stride, schedule)?;
        current.ensure_same_shape(&eps_down)?;
        let (ab_s, ab_u) = (schedule.alpha_bar(level)?, schedule.alpha_bar(level + stride)?);
        let scale = (ab_s / ab_u).sqrt();
        let kappa = ab_s.sqrt() * (1.0 - ab_u).sqrt() / ab_u.sqrt() - (1.0 - ab_s).sqrt();
        let diff = eps_up.zip_map(&eps_down, |a, b| a - b)?;
        deviation = deviation.zip_map(&diff, |d, e| scale * d + kappa * e)?;
        current = x_level.zip_map(&deviation, |a, d| a + d)?;
    }
    Ok(current)
}

/// Per-pixel absolute error and its Euclidean norm.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorMap {
    pub abs_error: ImageTensor,
    pub l2: f64,
}

pub fn reconstruction_error_map(x_t: &ImageTensor, x_tilde: &ImageTensor) -> Result<ErrorMap> {
    let abs_error = x_tilde.zip_map(x_t, |a, b| (a - b).abs())?;
    let l2 = abs_error.squared_norm().sqrt();
    Ok(ErrorMap { abs_error, l2 })
}
