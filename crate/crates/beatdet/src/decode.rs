//! From per-anchor predictions to beat times.
//!
//! Decoding has three steps:
//!
//! 1. **Scoring** — every anchor yields one candidate interval per class,
//!    reconstructed from its predicted offsets, scored by classification
//!    probability times predicted leftness (so candidates whose anchor sat
//!    far from the left edge are discounted). A permissive pre-filter keeps
//!    the candidate count bounded before the quadratic suppression step.
//! 2. **Suppression** — duplicates of the same event are removed by greedy
//!    NMS or by Soft-NMS score decay; classes are suppressed independently
//!    because every downbeat legitimately coexists with a beat detection.
//! 3. **Event extraction** — surviving left edges become event times; the
//!    rightmost surviving right edge recovers the final event, which is the
//!    only one that never appears as a left edge.

use serde::{Deserialize, Serialize};

use crate::geometry::{iou, BeatSequence, EventClass, Interval};
use crate::loss::PredictionSet;
use crate::pyramid::AnchorGrid;
use crate::{Error, Result};

/// One scored candidate interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub interval: Interval,
    /// Confidence in [0, 1].
    pub score: f64,
    /// Absolute pyramid level of the emitting anchor.
    pub source_level: u32,
    /// Cell index of the emitting anchor within its level.
    pub source_index: usize,
}

/// Suppression algorithm choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NmsKind {
    /// Greedy NMS: overlapping lower-scored detections are removed outright.
    Hard,
    /// Soft-NMS with linear decay `score ×= (1 − iou)` past the IoU
    /// threshold.
    SoftLinear,
    /// Soft-NMS with Gaussian decay `score ×= exp(−iou²/σ)` for every
    /// overlap.
    SoftGaussian,
}

/// How a candidate's confidence is computed from the head outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreMode {
    /// Classification probability × predicted leftness (default).
    ClsTimesLeftness,
    /// Classification probability alone.
    ClsOnly,
}

/// Decoding parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeConfig {
    pub nms: NmsKind,
    /// Overlap past which detections are suppressed (hard) or decayed
    /// (soft-linear).
    pub iou_threshold: f64,
    /// Final confidence cutoff: hard NMS drops candidates below it up
    /// front; Soft-NMS removes detections once their decayed score falls
    /// below it.
    pub score_threshold: f64,
    /// Gaussian decay width (soft-gaussian only).
    pub sigma: f64,
    /// Permissive score cutoff applied when collecting candidates, before
    /// suppression, to bound the quadratic stage.
    pub pre_filter: f64,
    pub score_mode: ScoreMode,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            nms: NmsKind::SoftLinear,
            iou_threshold: 0.2,
            score_threshold: 0.2,
            sigma: 0.5,
            pre_filter: 0.05,
            score_mode: ScoreMode::ClsTimesLeftness,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("iou_threshold", self.iou_threshold),
            ("score_threshold", self.score_threshold),
            ("pre_filter", self.pre_filter),
        ] {
            if !(v.is_finite() && (0.0..=1.0).contains(&v)) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be in [0,1], got {v}"
                )));
            }
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "sigma must be > 0, got {}",
                self.sigma
            )));
        }
        Ok(())
    }
}

/// Turn per-anchor predictions into per-class candidate lists.
///
/// Each anchor contributes one candidate per class with interval
/// `[pos − l̂·stride, pos + r̂·stride]` (left edge clamped to 0 so the
/// interval stays representable) and the configured score. Candidates
/// scoring below `pre_filter` are dropped.
pub fn score_and_collect(
    preds: &PredictionSet,
    grid: &AnchorGrid,
    cfg: &DecodeConfig,
) -> Result<[Vec<Detection>; 2]> {
    cfg.validate()?;
    if preds.levels.len() != grid.num_levels() {
        return Err(Error::ShapeMismatch(format!(
            "{} prediction levels vs {} grid levels",
            preds.levels.len(),
            grid.num_levels()
        )));
    }
    let mut out: [Vec<Detection>; 2] = [Vec::new(), Vec::new()];
    for (level_idx, lp) in preds.levels.iter().enumerate() {
        let n = grid.count(level_idx);
        if lp.cls_prob.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "level {level_idx}: {} predictions vs {} anchors",
                lp.cls_prob.len(),
                n
            )));
        }
        let stride_s = grid.stride_seconds(level_idx);
        let level = grid.level(level_idx);
        for index in 0..n {
            let pos = grid.position(level_idx, index);
            let [l_hat, r_hat] = lp.reg_pred[index];
            let left = (pos - l_hat * stride_s).max(0.0);
            let right = pos + r_hat * stride_s;
            for class in EventClass::ALL {
                let score = match cfg.score_mode {
                    ScoreMode::ClsTimesLeftness => {
                        lp.cls_prob[index][class.index()] * lp.leftness_prob[index]
                    }
                    ScoreMode::ClsOnly => lp.cls_prob[index][class.index()],
                };
                if score < cfg.pre_filter {
                    continue;
                }
                out[class.index()].push(Detection {
                    interval: Interval::new(left, right, class)?,
                    score,
                    source_level: level,
                    source_index: index,
                });
            }
        }
    }
    Ok(out)
}

/// Total order used to pick the next detection: score descending, then left
/// edge ascending, then source index ascending, then source level ascending
/// (the last key only disambiguates candidates that tie on everything
/// else).
fn pick_order(a: &Detection, b: &Detection) -> std::cmp::Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap()
        .then(a.interval.left().partial_cmp(&b.interval.left()).unwrap())
        .then(a.source_index.cmp(&b.source_index))
        .then(a.source_level.cmp(&b.source_level))
}

/// Presentation order of suppressed outputs: left edge ascending, with the
/// pick order breaking ties.
fn output_order(a: &Detection, b: &Detection) -> std::cmp::Ordering {
    a.interval
        .left()
        .partial_cmp(&b.interval.left())
        .unwrap()
        .then_with(|| pick_order(a, b))
}

/// Greedy non-maximum suppression for one class.
///
/// Repeatedly keeps the best remaining detection (see pick order) and
/// removes every remaining detection whose IoU with it exceeds
/// `iou_threshold`. The output is sorted by left edge.
pub fn nms(dets: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&i, &j| pick_order(&dets[i], &dets[j]));
    let mut gone = vec![false; dets.len()];
    let mut kept = Vec::new();
    for rank in 0..order.len() {
        let i = order[rank];
        if gone[i] {
            continue;
        }
        kept.push(dets[i].clone());
        for &j in &order[rank + 1..] {
            if !gone[j] && iou(&dets[i].interval, &dets[j].interval) > iou_threshold {
                gone[j] = true;
            }
        }
    }
    kept.sort_by(output_order);
    kept
}

/// Soft-NMS decay mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SoftMode {
    Linear,
    Gaussian,
}

/// Soft-NMS for one class: instead of removing overlapping detections, decay
/// their scores, dropping them only once they fall below
/// `final_score_threshold`.
///
/// Linear mode decays by `(1 − iou)` when the overlap exceeds
/// `iou_threshold`; Gaussian mode decays by `exp(−iou²/σ)` for every
/// overlap. Kept detections carry their decayed scores. Scores only ever
/// shrink, so the cutoff is also applied up front. Output sorted by left
/// edge.
pub fn soft_nms(
    dets: &[Detection],
    iou_threshold: f64,
    mode: SoftMode,
    sigma: f64,
    final_score_threshold: f64,
) -> Vec<Detection> {
    let mut live: Vec<Detection> = dets
        .iter()
        .filter(|d| d.score >= final_score_threshold)
        .cloned()
        .collect();
    let mut kept = Vec::new();
    while !live.is_empty() {
        let best = live
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| pick_order(a, b))
            .map(|(i, _)| i)
            .unwrap();
        let top = live.swap_remove(best);
        for d in &mut live {
            let v = iou(&top.interval, &d.interval);
            match mode {
                SoftMode::Linear => {
                    if v > iou_threshold {
                        d.score *= 1.0 - v;
                    }
                }
                SoftMode::Gaussian => {
                    d.score *= (-v * v / sigma).exp();
                }
            }
        }
        live.retain(|d| d.score >= final_score_threshold);
        kept.push(top);
    }
    kept.sort_by(output_order);
    kept
}

/// Run the configured suppression on one class's candidates.
pub fn suppress(dets: &[Detection], cfg: &DecodeConfig) -> Vec<Detection> {
    match cfg.nms {
        NmsKind::Hard => {
            // Hard NMS never changes scores, so the confidence cutoff can be
            // applied before the quadratic pass.
            let confident: Vec<Detection> = dets
                .iter()
                .filter(|d| d.score >= cfg.score_threshold)
                .cloned()
                .collect();
            nms(&confident, cfg.iou_threshold)
        }
        NmsKind::SoftLinear => soft_nms(
            dets,
            cfg.iou_threshold,
            SoftMode::Linear,
            cfg.sigma,
            cfg.score_threshold,
        ),
        NmsKind::SoftGaussian => soft_nms(
            dets,
            cfg.iou_threshold,
            SoftMode::Gaussian,
            cfg.sigma,
            cfg.score_threshold,
        ),
    }
}

/// Convert suppressed per-class detections into a beat sequence.
///
/// Beat times are the left edges of *all* surviving detections (a downbeat
/// is also a beat) plus the rightmost surviving right edge; downbeat times
/// are the downbeat left edges plus the rightmost downbeat right edge.
/// Times within 10 ms are merged (keeping the earliest of each cluster), and
/// each downbeat is snapped to the nearest surviving beat time so that
/// downbeats remain a subset of beats even when merging shifted one of them.
pub fn detections_to_beats(beat_dets: &[Detection], downbeat_dets: &[Detection]) -> BeatSequence {
    /// Merge window for duplicate event times.
    const DEDUP_WINDOW: f64 = 0.010;

    if beat_dets.is_empty() && downbeat_dets.is_empty() {
        // Empty but with downbeat info: the decoder predicted *no*
        // downbeats, which is different from not knowing about them.
        return BeatSequence::from_times_and_downbeats(Vec::new(), Vec::new())
            .expect("empty sequence is valid");
    }

    let all = || beat_dets.iter().chain(downbeat_dets);
    let mut beat_times: Vec<f64> = all().map(|d| d.interval.left()).collect();
    let last_edge = all().map(|d| d.interval.right()).fold(f64::MIN, f64::max);
    beat_times.push(last_edge);
    beat_times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let beat_times = merge_within(&beat_times, DEDUP_WINDOW);

    let mut down_times: Vec<f64> = downbeat_dets.iter().map(|d| d.interval.left()).collect();
    if let Some(last_down) = downbeat_dets
        .iter()
        .map(|d| d.interval.right())
        .max_by(|a, b| a.partial_cmp(b).unwrap())
    {
        down_times.push(last_down);
    }
    down_times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut downbeats: Vec<f64> = down_times
        .iter()
        .map(|&t| nearest_value(&beat_times, t))
        .collect();
    downbeats.dedup();

    BeatSequence::from_times_and_downbeats(beat_times, downbeats)
        .expect("merged times are ≥ 10 ms apart and downbeats are snapped to beats")
}

/// Greedy left-to-right merge: keep a time, skip everything closer than
/// `window` to the last kept time.
fn merge_within(sorted: &[f64], window: f64) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(sorted.len());
    for &t in sorted {
        match out.last() {
            Some(&prev) if t - prev < window => {}
            _ => out.push(t),
        }
    }
    out
}

/// Nearest element of a sorted non-empty slice; ties go to the earlier one.
fn nearest_value(sorted: &[f64], t: f64) -> f64 {
    let idx = sorted.partition_point(|&x| x < t);
    let mut best = if idx < sorted.len() {
        sorted[idx]
    } else {
        sorted[idx - 1]
    };
    if idx > 0 && (t - sorted[idx - 1]).abs() <= (best - t).abs() {
        best = sorted[idx - 1];
    }
    best
}
