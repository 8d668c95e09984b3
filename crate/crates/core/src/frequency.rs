//! Laplacian patch scoring and the mid-frequency patch mask.
//!
//! Patch scores are computed on the clean image only. Thresholds are per-image
//! percentiles of the patch-score distribution, so a mask built with
//! `(l_min, l_max) = (15, 85)` keeps the patches whose high-frequency energy
//! lies in the middle 70% of that image.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageTensor;

/// How a patch's Laplacian response is reduced to a score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    /// Sum of squared responses over the patch.
    #[default]
    SumSquared,
    /// Mean absolute response over the patch.
    MeanAbsolute,
}

/// Square patch tiling of an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchGrid {
    pub patch_size: usize,
    pub rows: usize,
    pub cols: usize,
}

impl PatchGrid {
    pub fn new(height: usize, width: usize, patch_size: usize) -> Result<Self> {
        if patch_size == 0 || !height.is_multiple_of(patch_size) || !width.is_multiple_of(patch_size) {
            return Err(Error::InvalidImage(format!(
                "{height}x{width} image is not divisible into {patch_size}x{patch_size} patches"
            )));
        }
        Ok(Self {
            patch_size,
            rows: height / patch_size,
            cols: width / patch_size,
        })
    }

    pub fn for_image(image: &ImageTensor, patch_size: usize) -> Result<Self> {
        Self::new(image.height(), image.width(), patch_size)
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Pixel rows and columns covered by patch `index` (row-major patch order).
    pub fn bounds(&self, index: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let (pr, pc) = (index / self.cols, index % self.cols);
        let s = self.patch_size;
        (pr * s..(pr + 1) * s, pc * s..(pc + 1) * s)
    }

    fn check(&self, image: &ImageTensor) -> Result<()> {
        if image.height() != self.rows * self.patch_size || image.width() != self.cols * self.patch_size {
            return Err(Error::shape(
                format!("{}x{} patch grid of size {}", self.rows, self.cols, self.patch_size),
                image.shape(),
            ));
        }
        Ok(())
    }
}

/// Percentile bounds for patch selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdConfig {
    pub l_min: f64,
    pub l_max: f64,
}

impl ThresholdConfig {
    pub fn new(l_min: f64, l_max: f64) -> Result<Self> {
        if !((0.0..100.0).contains(&l_min) && l_max > 0.0 && l_max <= 100.0 && l_min < l_max) {
            return Err(Error::Config(format!(
                "thresholds need 0 <= l_min < l_max <= 100, got ({l_min}, {l_max})"
            )));
        }
        Ok(Self { l_min, l_max })
    }

    pub fn unmasked() -> Self {
        Self {
            l_min: 0.0,
            l_max: 100.0,
        }
    }
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self {
            l_min: 15.0,
            l_max: 85.0,
        }
    }
}

/// 4-neighbour discrete Laplacian with replicated borders.
///
/// Multi-channel images are reduced to their channel mean first.
pub fn laplacian_response(image: &ImageTensor) -> ImageTensor {
    let lum = image.luminance();
    let (h, w) = (lum.height(), lum.width());
    ImageTensor::from_fn(h, w, |r, c| {
        let at = |rr: usize, cc: usize| lum.get(0, rr, cc);
        let up = at(r.saturating_sub(1), c);
        let down = at((r + 1).min(h - 1), c);
        let left = at(r, c.saturating_sub(1));
        let right = at(r, (c + 1).min(w - 1));
        up + down + left + right - 4.0 * at(r, c)
    })
}

/// One score per patch, row-major over the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianScoreMap {
    pub grid: PatchGrid,
    pub scores: Vec<f64>,
}

pub fn patch_score(response: &ImageTensor, grid: PatchGrid) -> Result<LaplacianScoreMap> {
    patch_score_with_mode(response, grid, ScoreMode::SumSquared)
}

pub fn patch_score_with_mode(
    response: &ImageTensor,
    grid: PatchGrid,
    mode: ScoreMode,
) -> Result<LaplacianScoreMap> {
    grid.check(response)?;
    let plane = response.plane(0);
    let w = response.width();
    let n = (grid.patch_size * grid.patch_size) as f64;
    let scores = (0..grid.len())
        .map(|i| {
            let (rows, cols) = grid.bounds(i);
            let mut acc = 0.0;
            for r in rows {
                for v in &plane[r * w + cols.start..r * w + cols.end] {
                    acc += match mode {
                        ScoreMode::SumSquared => v * v,
                        ScoreMode::MeanAbsolute => v.abs(),
                    };
                }
            }
            match mode {
                ScoreMode::SumSquared => acc,
                ScoreMode::MeanAbsolute => acc / n,
            }
        })
        .collect();
    Ok(LaplacianScoreMap { grid, scores })
}

/// Linear-interpolation percentile of already sorted values, `p` in `[0, 100]`.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

/// Per-patch selection flags.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyMask {
    pub grid: PatchGrid,
    selected: Vec<bool>,
    selected_count: usize,
}

impl FrequencyMask {
    pub fn from_flags(grid: PatchGrid, selected: Vec<bool>) -> Result<Self> {
        if selected.len() != grid.len() {
            return Err(Error::shape(grid.len(), selected.len()));
        }
        let selected_count = selected.iter().filter(|&&s| s).count();
        Ok(Self {
            grid,
            selected,
            selected_count,
        })
    }

    pub fn all(grid: PatchGrid) -> Self {
        Self {
            grid,
            selected: vec![true; grid.len()],
            selected_count: grid.len(),
        }
    }

    pub fn none(grid: PatchGrid) -> Self {
        Self {
            grid,
            selected: vec![false; grid.len()],
            selected_count: 0,
        }
    }

    pub fn flags(&self) -> &[bool] {
        &self.selected
    }

    pub fn is_selected(&self, patch: usize) -> bool {
        self.selected[patch]
    }

    pub fn selected_count(&self) -> usize {
        self.selected_count
    }

    pub fn is_empty(&self) -> bool {
        self.selected_count == 0
    }

    pub fn selected_patches(&self) -> impl Iterator<Item = usize> + '_ {
        self.selected.iter().enumerate().filter(|(_, &s)| s).map(|(i, _)| i)
    }

    /// Patch mask of the clean image `x0`.
    pub fn for_image(
        x0: &ImageTensor,
        patch_size: usize,
        thresholds: ThresholdConfig,
        mode: ScoreMode,
    ) -> Result<Self> {
        let grid = PatchGrid::for_image(x0, patch_size)?;
        let scores = patch_score_with_mode(&laplacian_response(x0), grid, mode)?;
        build_mask(&scores, thresholds)
    }

    /// Writes the mask as a binary PGM, one pixel per patch (255 = selected).
    pub fn write_pgm(&self, w: &mut impl Write) -> io::Result<()> {
        write!(w, "P5\n{} {}\n255\n", self.grid.cols, self.grid.rows)?;
        let bytes: Vec<u8> = self.selected.iter().map(|&s| if s { 255 } else { 0 }).collect();
        w.write_all(&bytes)
    }
}

/// Selects patches whose score lies in `[P(l_min), P(l_max)]`, inclusive.
pub fn build_mask(scores: &LaplacianScoreMap, thresholds: ThresholdConfig) -> Result<FrequencyMask> {
    if scores.scores.is_empty() {
        return Err(Error::InvalidImage("no patches to score".into()));
    }
    let mut sorted = scores.scores.clone();
    sorted.sort_by(f64::total_cmp);
    let lo = percentile(&sorted, thresholds.l_min);
    let hi = percentile(&sorted, thresholds.l_max);
    let flags = scores.scores.iter().map(|&s| s >= lo && s <= hi).collect();
    FrequencyMask::from_flags(scores.grid, flags)
}

/// Zeroes every pixel outside the selected patches, in all channels.
pub fn apply_mask(image: &ImageTensor, mask: &FrequencyMask) -> Result<ImageTensor> {
    mask.grid.check(image)?;
    let mut out = ImageTensor::zeros(image.shape());
    for p in mask.selected_patches() {
        let (rows, cols) = mask.grid.bounds(p);
        for ch in 0..image.channels() {
            for r in rows.clone() {
                for c in cols.clone() {
                    out.set(ch, r, c, image.get(ch, r, c));
                }
            }
        }
    }
    Ok(out)
}

/// Plain-text score dump: `row col score` per patch.
pub fn write_score_dump(scores: &LaplacianScoreMap, w: &mut impl Write) -> io::Result<()> {
    writeln!(w, "# row col score")?;
    for (i, s) in scores.scores.iter().enumerate() {
        writeln!(w, "{} {} {:e}", i / scores.grid.cols, i % scores.grid.cols, s)?;
    }
    Ok(())
}
