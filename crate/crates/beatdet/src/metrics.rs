//! Beat-tracking evaluation: F-measure, continuity scores, and per-track
//! reports.
//!
//! Two families of metrics are computed. The F-measure counts one-to-one
//! matches between predicted and annotated times within a fixed window
//! (±70 ms by default). The continuity scores (CMLc/CMLt and their
//! allowed-metrical-level variants AMLc/AMLt) demand more: a predicted beat
//! counts only if it is phase-accurate, its predecessor is phase-accurate,
//! and its inter-beat interval matches the local annotation interval —
//! all within a fraction (17.5% by default) of that local interval. The
//! AML variants re-run the check against metrical re-interpretations of
//! the annotations (double tempo, half tempo at both phases, offbeat) and
//! keep the best score, forgiving predictions that are consistent at the
//! wrong metrical level.
//!
//! Following the usual convention, the first five seconds of both
//! sequences are excluded before anything is counted.

use serde::{Deserialize, Serialize};

use crate::geometry::BeatSequence;
use crate::{Error, Result};

/// Parameters shared by all metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Half-width of the F-measure matching window in seconds (inclusive).
    pub f_window: f64,
    /// Continuity tolerance as a fraction of the local annotation interval
    /// (strict comparison).
    pub tolerance: f64,
    /// Events earlier than this many seconds are dropped from both
    /// sequences before scoring.
    pub trim_seconds: f64,
    /// Disable to score full sequences from t = 0.
    pub trim: bool,
    /// Also allow triple/third-tempo re-interpretations in the AML
    /// variation set (not part of the classic definition).
    pub triple_variations: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            f_window: 0.07,
            tolerance: 0.175,
            trim_seconds: 5.0,
            trim: true,
            triple_variations: false,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.f_window > 0.0) || !self.f_window.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "f_window must be positive and finite, got {}",
                self.f_window
            )));
        }
        if !(self.tolerance > 0.0 && self.tolerance < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "tolerance must lie in (0, 1), got {}",
                self.tolerance
            )));
        }
        if !(self.trim_seconds >= 0.0) || !self.trim_seconds.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "trim_seconds must be non-negative and finite, got {}",
                self.trim_seconds
            )));
        }
        Ok(())
    }

    fn trimmed(&self, times: &[f64]) -> Vec<f64> {
        debug_assert!(times.windows(2).all(|w| w[0] <= w[1]));
        if self.trim {
            times
                .iter()
                .copied()
                .filter(|&t| t >= self.trim_seconds)
                .collect()
        } else {
            times.to_vec()
        }
    }
}

/// Matched / unmatched counts after trimming: (hits, false positives,
/// false negatives). Matching is one-to-one within ±`f_window` and the
/// greedy in-order sweep attains the maximum possible number of matches.
pub fn match_counts(est: &[f64], reference: &[f64], cfg: &EvalConfig) -> (usize, usize, usize) {
    let est = cfg.trimmed(est);
    let reference = cfg.trimmed(reference);
    let hits = greedy_matches(&est, &reference, cfg.f_window);
    (hits, est.len() - hits, reference.len() - hits)
}

fn greedy_matches(est: &[f64], reference: &[f64], window: f64) -> usize {
    let (mut i, mut j, mut hits) = (0, 0, 0);
    while i < est.len() && j < reference.len() {
        if (est[i] - reference[j]).abs() <= window {
            hits += 1;
            i += 1;
            j += 1;
        } else if est[i] < reference[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
    hits
}

/// F-measure of predicted against annotated times, or `None` when no
/// annotations remain after trimming.
pub fn f_measure(est: &[f64], reference: &[f64], cfg: &EvalConfig) -> Option<f64> {
    let (hits, fp, fn_) = match_counts(est, reference, cfg);
    if hits + fn_ == 0 {
        return None;
    }
    // 2PR/(P+R) reduces to 2·hits / (|est| + |ref|); no hits means 0 even
    // when the prediction is empty.
    Some(2.0 * hits as f64 / (2 * hits + fp + fn_) as f64)
}

/// The four continuity scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Continuity {
    /// Longest correct segment / annotation count, reference as-is.
    pub cmlc: f64,
    /// Total correct beats / annotation count, reference as-is.
    pub cmlt: f64,
    /// Best `cmlc` over the metrical variations of the reference.
    pub amlc: f64,
    /// Best `cmlt` over the metrical variations of the reference.
    pub amlt: f64,
}

/// Continuity scores, or `None` when fewer than two annotations remain
/// after trimming (the local interval is then undefined).
pub fn continuity(est: &[f64], reference: &[f64], cfg: &EvalConfig) -> Option<Continuity> {
    let est = cfg.trimmed(est);
    let reference = cfg.trimmed(reference);
    if reference.len() < 2 {
        return None;
    }
    let (cmlc, cmlt) = continuity_pair(&est, &reference, cfg.tolerance);
    let (mut amlc, mut amlt) = (cmlc, cmlt);
    for variation in metrical_variations(&reference, cfg.triple_variations) {
        if variation.len() < 2 {
            continue;
        }
        let (c, t) = continuity_pair(&est, &variation, cfg.tolerance);
        amlc = amlc.max(c);
        amlt = amlt.max(t);
    }
    Some(Continuity {
        cmlc,
        cmlt,
        amlc,
        amlt,
    })
}

/// (longest-segment score, total score) against one annotation sequence.
fn continuity_pair(est: &[f64], ann: &[f64], tolerance: f64) -> (f64, f64) {
    let flags = correct_flags(est, ann, tolerance);
    let total = flags.iter().filter(|&&f| f).count();
    let longest = flags.split(|&f| !f).map(|run| run.len()).max().unwrap_or(0);
    let denom = ann.len() as f64;
    (
        (longest as f64 / denom).min(1.0),
        (total as f64 / denom).min(1.0),
    )
}

/// Per-beat continuity flags. `ann` must have at least two entries.
fn correct_flags(est: &[f64], ann: &[f64], tolerance: f64) -> Vec<bool> {
    let nearest = |t: f64| -> usize {
        let idx = ann.partition_point(|&a| a < t);
        if idx == 0 {
            0
        } else if idx == ann.len() {
            ann.len() - 1
        } else if t - ann[idx - 1] <= ann[idx] - t {
            idx - 1 // ties resolve to the earlier annotation
        } else {
            idx
        }
    };
    // Local inter-annotation interval; the first annotation borrows the
    // interval that follows it.
    let local = |i: usize| -> f64 {
        if i == 0 {
            ann[1] - ann[0]
        } else {
            ann[i] - ann[i - 1]
        }
    };
    let phase_ok: Vec<bool> = est
        .iter()
        .map(|&t| {
            let i = nearest(t);
            (t - ann[i]).abs() < tolerance * local(i)
        })
        .collect();
    let period_ok = |gap: f64, at: f64| -> bool {
        let d = local(nearest(at));
        (gap - d).abs() < tolerance * d
    };
    (0..est.len())
        .map(|j| {
            if j == 0 {
                // The first beat has no predecessor; its tempo is read off
                // the interval it opens instead.
                let tempo_ok = est.len() < 2 || period_ok(est[1] - est[0], est[0]);
                phase_ok[0] && tempo_ok
            } else {
                phase_ok[j] && phase_ok[j - 1] && period_ok(est[j] - est[j - 1], est[j])
            }
        })
        .collect()
}

/// Metrical re-interpretations of an annotation sequence: double tempo
/// (midpoints interleaved), half tempo at both phases, and the offbeat
/// (midpoints alone). With `include_triple`, triple tempo and third tempo
/// at all three phases are added. Variations shorter than two beats are
/// still returned; callers skip them.
pub fn metrical_variations(reference: &[f64], include_triple: bool) -> Vec<Vec<f64>> {
    let n = reference.len();
    let midpoints: Vec<f64> = reference.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect();
    let mut double = Vec::with_capacity(2 * n - 1);
    for (i, &t) in reference.iter().enumerate() {
        double.push(t);
        if i + 1 < n {
            double.push(midpoints[i]);
        }
    }
    let every = |step: usize, phase: usize| -> Vec<f64> {
        reference
            .iter()
            .copied()
            .skip(phase)
            .step_by(step)
            .collect()
    };
    let mut variations = vec![double, every(2, 0), every(2, 1), midpoints];
    if include_triple {
        let mut triple = Vec::with_capacity(3 * n - 2);
        for (i, w) in reference.windows(2).enumerate() {
            triple.push(w[0]);
            triple.push(w[0] + (w[1] - w[0]) / 3.0);
            triple.push(w[0] + 2.0 * (w[1] - w[0]) / 3.0);
            if i + 2 == n {
                triple.push(w[1]);
            }
        }
        variations.push(triple);
        variations.extend((0..3).map(|p| every(3, p)));
    }
    variations
}

/// Scores for one event class. Fields are `None` where the reference does
/// not support the metric (no annotations after trimming for the
/// F-measure; fewer than two for continuity). Counts come from the
/// F-measure matching and are always factual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub f_measure: Option<f64>,
    pub cmlc: Option<f64>,
    pub cmlt: Option<f64>,
    pub amlc: Option<f64>,
    pub amlt: Option<f64>,
    pub hits: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

fn class_metrics(est: &[f64], reference: &[f64], cfg: &EvalConfig) -> ClassMetrics {
    let (hits, false_positives, false_negatives) = match_counts(est, reference, cfg);
    let cont = continuity(est, reference, cfg);
    ClassMetrics {
        f_measure: f_measure(est, reference, cfg),
        cmlc: cont.map(|c| c.cmlc),
        cmlt: cont.map(|c| c.cmlt),
        amlc: cont.map(|c| c.amlc),
        amlt: cont.map(|c| c.amlt),
        hits,
        false_positives,
        false_negatives,
    }
}

/// Per-track evaluation of beats and (where both sides carry them)
/// downbeats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub beat: ClassMetrics,
    /// `None` when either sequence has no downbeat information at all —
    /// distinct from a prediction of zero downbeats, which scores 0.
    pub downbeat: Option<ClassMetrics>,
    /// Mean of the available per-class F-measures.
    pub joint_f: Option<f64>,
}

/// Evaluate a prediction against a reference.
pub fn joint_report(
    est: &BeatSequence,
    reference: &BeatSequence,
    cfg: &EvalConfig,
) -> Result<MetricReport> {
    cfg.validate()?;
    let beat = class_metrics(est.times(), reference.times(), cfg);
    let downbeat = match (est.downbeat_times(), reference.downbeat_times()) {
        (Some(e), Some(r)) => Some(class_metrics(&e, &r, cfg)),
        _ => None,
    };
    let fs: Vec<f64> = [beat.f_measure, downbeat.as_ref().and_then(|d| d.f_measure)]
        .into_iter()
        .flatten()
        .collect();
    let joint_f = if fs.is_empty() {
        None
    } else {
        Some(fs.iter().sum::<f64>() / fs.len() as f64)
    };
    Ok(MetricReport {
        beat,
        downbeat,
        joint_f,
    })
}

/// Unweighted per-track mean of a set of reports. Each ratio averages the
/// tracks where it applies; counts are pooled sums. Tracks without
/// downbeat information simply do not contribute to the downbeat row.
pub fn aggregate_reports(reports: &[MetricReport]) -> MetricReport {
    fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
        let values: Vec<f64> = values.flatten().collect();
        if values.is_empty() {
            None
        } else {
            Some(values.iter().sum::<f64>() / values.len() as f64)
        }
    }
    fn fold_class<'a>(classes: impl Iterator<Item = &'a ClassMetrics> + Clone) -> ClassMetrics {
        ClassMetrics {
            f_measure: mean(classes.clone().map(|c| c.f_measure)),
            cmlc: mean(classes.clone().map(|c| c.cmlc)),
            cmlt: mean(classes.clone().map(|c| c.cmlt)),
            amlc: mean(classes.clone().map(|c| c.amlc)),
            amlt: mean(classes.clone().map(|c| c.amlt)),
            hits: classes.clone().map(|c| c.hits).sum(),
            false_positives: classes.clone().map(|c| c.false_positives).sum(),
            false_negatives: classes.map(|c| c.false_negatives).sum(),
        }
    }
    let beat = fold_class(reports.iter().map(|r| &r.beat));
    let with_downbeats: Vec<&ClassMetrics> =
        reports.iter().filter_map(|r| r.downbeat.as_ref()).collect();
    let downbeat = if with_downbeats.is_empty() {
        None
    } else {
        Some(fold_class(with_downbeats.iter().copied()))
    };
    MetricReport {
        beat,
        downbeat,
        joint_f: mean(reports.iter().map(|r| r.joint_f)),
    }
}
