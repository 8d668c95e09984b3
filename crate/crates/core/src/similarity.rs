//! Patch SSIM, masked L2 and the combined membership score.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frequency::{FrequencyMask, PatchGrid};
use crate::image::ImageTensor;

/// SSIM stabilizing constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimParams {
    pub c1: f64,
    pub c2: f64,
    pub dynamic_range: f64,
}

impl SsimParams {
    /// `C1 = (0.01 R)^2`, `C2 = (0.03 R)^2`.
    pub fn for_range(dynamic_range: f64) -> Self {
        Self {
            c1: (0.01 * dynamic_range).powi(2),
            c2: (0.03 * dynamic_range).powi(2),
            dynamic_range,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c1 > 0.0 && self.c2 > 0.0 && self.dynamic_range > 0.0) {
            return Err(Error::Config(format!("SSIM constants must be positive: {self:?}")));
        }
        Ok(())
    }
}

impl Default for SsimParams {
    fn default() -> Self {
        Self::for_range(2.0)
    }
}

/// SSIM of two equally sized pixel sets, using population (1/N) moments.
pub fn ssim_patch(p: &[f64], q: &[f64], params: &SsimParams) -> f64 {
    assert_eq!(p.len(), q.len(), "patch sizes differ");
    let n = p.len() as f64;
    let mu_p = p.iter().sum::<f64>() / n;
    let mu_q = q.iter().sum::<f64>() / n;
    let (mut var_p, mut var_q, mut cov) = (0.0, 0.0, 0.0);
    for (a, b) in p.iter().zip(q) {
        let (da, db) = (a - mu_p, b - mu_q);
        var_p += da * da;
        var_q += db * db;
        cov += da * db;
    }
    var_p /= n;
    var_q /= n;
    cov /= n;
    let luminance = (2.0 * mu_p * mu_q + params.c1) / (mu_p * mu_p + mu_q * mu_q + params.c1);
    let structure = (2.0 * cov + params.c2) / (var_p + var_q + params.c2);
    luminance * structure
}

fn patch_pixels(image: &ImageTensor, grid: &PatchGrid, patch: usize, channel: usize, out: &mut Vec<f64>) {
    out.clear();
    let (rows, cols) = grid.bounds(patch);
    let plane = image.plane(channel);
    let w = image.width();
    for r in rows {
        out.extend_from_slice(&plane[r * w + cols.start..r * w + cols.end]);
    }
}

fn check_inputs(x: &ImageTensor, y: &ImageTensor, mask: &FrequencyMask) -> Result<()> {
    x.ensure_same_shape(y)?;
    let g = mask.grid;
    if x.height() != g.rows * g.patch_size || x.width() != g.cols * g.patch_size {
        return Err(Error::shape(
            format!("{}x{} patches of {}", g.rows, g.cols, g.patch_size),
            x.shape(),
        ));
    }
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    Ok(())
}

/// Unweighted mean of per-patch SSIM over the selected patches (and channels).
pub fn aggregate_ssim(
    x_f: &ImageTensor,
    x_tilde_f: &ImageTensor,
    mask: &FrequencyMask,
    params: &SsimParams,
) -> Result<f64> {
    check_inputs(x_f, x_tilde_f, mask)?;
    let (mut a, mut b) = (Vec::new(), Vec::new());
    let mut total = 0.0;
    let mut count = 0usize;
    for p in mask.selected_patches() {
        for ch in 0..x_f.channels() {
            patch_pixels(x_f, &mask.grid, p, ch, &mut a);
            patch_pixels(x_tilde_f, &mask.grid, p, ch, &mut b);
            total += ssim_patch(&a, &b, params);
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Euclidean distance over selected-patch pixels; root-mean-square when `normalize`.
pub fn masked_l2(
    x_f: &ImageTensor,
    x_tilde_f: &ImageTensor,
    mask: &FrequencyMask,
    normalize: bool,
) -> Result<f64> {
    check_inputs(x_f, x_tilde_f, mask)?;
    let (mut a, mut b) = (Vec::new(), Vec::new());
    let mut sum = 0.0;
    let mut pixels = 0usize;
    for p in mask.selected_patches() {
        for ch in 0..x_f.channels() {
            patch_pixels(x_f, &mask.grid, p, ch, &mut a);
            patch_pixels(x_tilde_f, &mask.grid, p, ch, &mut b);
            sum += a.iter().zip(&b).map(|(u, v)| (v - u) * (v - u)).sum::<f64>();
            pixels += a.len();
        }
    }
    Ok(if normalize {
        (sum / pixels as f64).sqrt()
    } else {
        sum.sqrt()
    })
}

/// Ground-truth membership of an audited image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Membership {
    Member,
    NonMember,
    Unknown,
}

/// Which terms enter the membership score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreConfig {
    pub ssim: SsimParams,
    pub use_ssim: bool,
    pub normalize_l2: bool,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            ssim: SsimParams::default(),
            use_ssim: true,
            normalize_l2: true,
        }
    }
}

/// One image's attack evidence. Lower `mia_score` is more member-like.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub id: String,
    pub attack: String,
    pub label: Membership,
    pub ssim_term: f64,
    pub l2_term: f64,
    pub mia_score: f64,
    pub selected_patch_count: usize,
    pub fallback: bool,
}

impl ScoreRecord {
    /// Single-line JSON encoding.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("score record serializes")
    }
}

/// `(1 - SSIM) + L2` over the masked latent and its reconstruction.
///
/// `x_t` and `x_tilde_t` are the unmasked images; the mask (built from the
/// clean image) is applied here. An empty mask falls back to the full image
/// and sets `fallback` on the record.
pub fn mia_score(
    id: &str,
    label: Membership,
    x_t: &ImageTensor,
    x_tilde_t: &ImageTensor,
    mask: &FrequencyMask,
    config: &ScoreConfig,
) -> Result<ScoreRecord> {
    let (mask, fallback) = if mask.is_empty() {
        (FrequencyMask::all(mask.grid), true)
    } else {
        (mask.clone(), false)
    };
    let x_f = crate::frequency::apply_mask(x_t, &mask)?;
    let x_tilde_f = crate::frequency::apply_mask(x_tilde_t, &mask)?;
    let ssim_term = if config.use_ssim {
        1.0 - aggregate_ssim(&x_f, &x_tilde_f, &mask, &config.ssim)?
    } else {
        0.0
    };
    let l2_term = masked_l2(&x_f, &x_tilde_f, &mask, config.normalize_l2)?;
    Ok(ScoreRecord {
        id: id.to_string(),
        attack: String::new(),
        label,
        ssim_term,
        l2_term,
        mia_score: ssim_term + l2_term,
        selected_patch_count: mask.selected_count(),
        fallback,
    })
}
