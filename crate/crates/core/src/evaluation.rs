//! Threshold attacks over membership scores and their metrics.
//!
//! Every statistic follows the convention that a lower score is more
//! member-like: an image is called a member iff `score <= threshold`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::similarity::{Membership, ScoreRecord};

pub fn decide_membership(score: f64, threshold: f64) -> Membership {
    if score <= threshold {
        Membership::Member
    } else {
        Membership::NonMember
    }
}

/// Scores of images with known membership.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    members: Vec<f64>,
    nonmembers: Vec<f64>,
}

impl ScoreSet {
    pub fn new(members: Vec<f64>, nonmembers: Vec<f64>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::EmptyScoreSet("members"));
        }
        if nonmembers.is_empty() {
            return Err(Error::EmptyScoreSet("non-members"));
        }
        if members.iter().chain(&nonmembers).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("membership score".into()));
        }
        Ok(Self { members, nonmembers })
    }

    /// Splits records by label; unlabeled records are ignored.
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a ScoreRecord>) -> Result<Self> {
        let (mut m, mut n) = (Vec::new(), Vec::new());
        for r in records {
            match r.label {
                Membership::Member => m.push(r.mia_score),
                Membership::NonMember => n.push(r.mia_score),
                Membership::Unknown => {}
            }
        }
        Self::new(m, n)
    }

    pub fn members(&self) -> &[f64] {
        &self.members
    }

    pub fn nonmembers(&self) -> &[f64] {
        &self.nonmembers
    }

    fn sorted(&self) -> (Vec<f64>, Vec<f64>) {
        let mut m = self.members.clone();
        let mut n = self.nonmembers.clone();
        m.sort_by(f64::total_cmp);
        n.sort_by(f64::total_cmp);
        (m, n)
    }

    /// Distinct pooled scores in ascending order.
    fn cut_points(&self) -> Vec<f64> {
        let mut all: Vec<f64> = self.members.iter().chain(&self.nonmembers).copied().collect();
        all.sort_by(f64::total_cmp);
        all.dedup();
        all
    }
}

/// `P(member < nonmember) + P(member == nonmember) / 2`, via midranks.
pub fn compute_auc(scores: &ScoreSet) -> f64 {
    let mut pooled: Vec<(f64, bool)> = scores
        .members
        .iter()
        .map(|&s| (s, true))
        .chain(scores.nonmembers.iter().map(|&s| (s, false)))
        .collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
    // doubled midranks keep the rank sum integral
    let mut rank_sum_x2: u64 = 0;
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i;
        while j < pooled.len() && pooled[j].0 == pooled[i].0 {
            j += 1;
        }
        let midrank_x2 = (i + 1 + j) as u64;
        rank_sum_x2 += midrank_x2 * pooled[i..j].iter().filter(|p| !p.1).count() as u64;
        i = j;
    }
    let (nm, nn) = (scores.members.len() as u64, scores.nonmembers.len() as u64);
    let u_x2 = rank_sum_x2 - nn * (nn + 1);
    u_x2 as f64 / (2 * nm * nn) as f64
}

/// Whether ASR is balanced accuracy or raw accuracy over the pooled set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AsrMode {
    #[default]
    Balanced,
    Raw,
}

fn accuracy(tp: usize, tn: usize, nm: usize, nn: usize, mode: AsrMode) -> f64 {
    match mode {
        AsrMode::Balanced => 0.5 * (tp as f64 / nm as f64 + tn as f64 / nn as f64),
        AsrMode::Raw => (tp + tn) as f64 / (nm + nn) as f64,
    }
}

/// Accuracy of the fixed decision rule `score <= threshold`.
pub fn accuracy_at(scores: &ScoreSet, threshold: f64, mode: AsrMode) -> f64 {
    let tp = scores.members.iter().filter(|&&s| s <= threshold).count();
    let tn = scores.nonmembers.iter().filter(|&&s| s > threshold).count();
    accuracy(tp, tn, scores.members.len(), scores.nonmembers.len(), mode)
}

/// Best accuracy over all thresholds and the smallest threshold attaining it.
///
/// Candidates are `-inf`, the midpoints between adjacent distinct scores, and `+inf`.
pub fn compute_asr(scores: &ScoreSet, mode: AsrMode) -> (f64, f64) {
    let (m, n) = scores.sorted();
    let (nm, nn) = (m.len(), n.len());
    let cuts = scores.cut_points();
    let mut best = (accuracy(0, nn, nm, nn, mode), f64::NEG_INFINITY);
    let (mut mi, mut ni) = (0, 0);
    for (k, &c) in cuts.iter().enumerate() {
        while mi < nm && m[mi] <= c {
            mi += 1;
        }
        while ni < nn && n[ni] <= c {
            ni += 1;
        }
        let threshold = match cuts.get(k + 1) {
            Some(&next) => 0.5 * (c + next),
            None => f64::INFINITY,
        };
        let acc = accuracy(mi, nn - ni, nm, nn, mode);
        if acc > best.0 {
            best = (acc, threshold);
        }
    }
    best
}

/// Empirical ROC as `(fpr, tpr)` pairs, from `(0, 0)` to `(1, 1)`.
pub fn roc_curve(scores: &ScoreSet) -> Vec<(f64, f64)> {
    let (m, n) = scores.sorted();
    let (nm, nn) = (m.len() as f64, n.len() as f64);
    let mut points = vec![(0.0, 0.0)];
    let (mut mi, mut ni) = (0, 0);
    for c in scores.cut_points() {
        while mi < m.len() && m[mi] <= c {
            mi += 1;
        }
        while ni < n.len() && n[ni] <= c {
            ni += 1;
        }
        points.push((ni as f64 / nn, mi as f64 / nm));
    }
    points
}

/// Largest TPR on the step ROC with FPR no greater than `fpr_target`.
pub fn tpr_at_fpr(scores: &ScoreSet, fpr_target: f64) -> Result<f64> {
    if !(fpr_target > 0.0 && fpr_target < 1.0) {
        return Err(Error::Config(format!("fpr target {fpr_target} outside (0, 1)")));
    }
    Ok(roc_curve(scores)
        .into_iter()
        .filter(|&(fpr, _)| fpr <= fpr_target)
        .map(|(_, tpr)| tpr)
        .fold(0.0, f64::max))
}

/// Shared-edge density histogram of both score sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub member_density: Vec<f64>,
    pub nonmember_density: Vec<f64>,
}

impl Histogram {
    pub fn bins(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn width(&self, bin: usize) -> f64 {
        self.edges[bin + 1] - self.edges[bin]
    }

    /// Area under `min(member, nonmember)` densities.
    pub fn overlap(&self) -> f64 {
        (0..self.bins())
            .map(|b| self.member_density[b].min(self.nonmember_density[b]) * self.width(b))
            .sum()
    }
}

/// Equal-width bins spanning the pooled range. If every score is equal the
/// histogram collapses to one unit-width bin centred on that value.
pub fn histogram(scores: &ScoreSet, bins: usize) -> Result<Histogram> {
    if bins < 2 {
        return Err(Error::Config(format!("histogram needs at least 2 bins, got {bins}")));
    }
    let all = || scores.members.iter().chain(&scores.nonmembers);
    let lo = all().copied().fold(f64::INFINITY, f64::min);
    let hi = all().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return Ok(Histogram {
            edges: vec![lo - 0.5, lo + 0.5],
            member_density: vec![1.0],
            nonmember_density: vec![1.0],
        });
    }
    let width = (hi - lo) / bins as f64;
    let mut edges: Vec<f64> = (0..bins).map(|i| lo + width * i as f64).collect();
    edges.push(hi);
    let density = |values: &[f64]| {
        let mut counts = vec![0usize; bins];
        for &v in values {
            let b = (((v - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
        let n = values.len() as f64;
        counts
            .iter()
            .enumerate()
            .map(|(b, &c)| c as f64 / (n * (edges[b + 1] - edges[b])))
            .collect::<Vec<_>>()
    };
    Ok(Histogram {
        member_density: density(&scores.members),
        nonmember_density: density(&scores.nonmembers),
        edges,
    })
}

/// Aggregate attack metrics for one score set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub attack: String,
    pub members: usize,
    pub nonmembers: usize,
    pub asr: f64,
    pub asr_mode: AsrMode,
    pub auc: f64,
    pub tpr_at_fpr1: f64,
    /// `None` encodes an infinite threshold (all images on one side).
    pub best_threshold: Option<f64>,
    pub roc_points: Vec<(f64, f64)>,
    pub histogram: Histogram,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub asr_mode: AsrMode,
    pub histogram_bins: usize,
    pub fpr_target: f64,
    /// Fixed decision threshold (e.g. chosen on a holdout split) instead of
    /// the in-sample optimum.
    pub holdout_threshold: Option<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            asr_mode: AsrMode::Balanced,
            histogram_bins: 30,
            fpr_target: 0.01,
            holdout_threshold: None,
        }
    }
}

pub fn evaluate(attack: &str, scores: &ScoreSet, config: &EvalConfig) -> Result<AttackReport> {
    let (asr, threshold) = match config.holdout_threshold {
        Some(t) => (accuracy_at(scores, t, config.asr_mode), t),
        None => compute_asr(scores, config.asr_mode),
    };
    Ok(AttackReport {
        attack: attack.to_string(),
        members: scores.members.len(),
        nonmembers: scores.nonmembers.len(),
        asr,
        asr_mode: config.asr_mode,
        auc: compute_auc(scores),
        tpr_at_fpr1: tpr_at_fpr(scores, config.fpr_target)?,
        best_threshold: threshold.is_finite().then_some(threshold),
        roc_points: roc_curve(scores),
        histogram: histogram(scores, config.histogram_bins)?,
    })
}
