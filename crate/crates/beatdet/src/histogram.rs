//! Data-driven selection of the suppression IoU threshold.
//!
//! Rather than tuning the NMS threshold against evaluation scores, the
//! threshold is read off the overlap statistics of the detector's own raw
//! output: for every pre-suppression detection, the IoU with its successor
//! in left-edge order is recorded in a histogram, grouped by the
//! detection's confidence. A well-trained detector shows a bimodal picture
//! among confident detections — either a neighbor is a near-duplicate of
//! the same event (high IoU) or it is the next event (low IoU) — and the
//! suppression threshold belongs in the valley between those modes.

use serde::{Deserialize, Serialize};

use crate::decode::Detection;
use crate::geometry::{iou, EventClass};
use crate::{Error, Result};

/// Binning layout for [`IoUHistogram`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HistogramConfig {
    /// Confidence bin edges; bin `r` covers scores in
    /// `(edges[r], edges[r+1]]`. Detections outside `(edges[0], edges[last]]`
    /// are ignored.
    pub confidence_edges: Vec<f64>,
    /// Number of uniform IoU bins over [0, 1].
    pub iou_bins: usize,
}

impl Default for HistogramConfig {
    fn default() -> Self {
        HistogramConfig {
            confidence_edges: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 1.0],
            iou_bins: 10,
        }
    }
}

impl HistogramConfig {
    pub fn validate(&self) -> Result<()> {
        if self.confidence_edges.len() < 2 {
            return Err(Error::InvalidConfig(
                "need at least two confidence edges".into(),
            ));
        }
        if !self.confidence_edges.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidConfig(format!(
                "confidence edges must be strictly ascending, got {:?}",
                self.confidence_edges
            )));
        }
        if self.iou_bins < 2 {
            return Err(Error::InvalidConfig("need at least two IoU bins".into()));
        }
        Ok(())
    }

    fn confidence_bin(&self, score: f64) -> Option<usize> {
        if score <= self.confidence_edges[0] || score > *self.confidence_edges.last().unwrap() {
            return None;
        }
        // First edge ≥ score bounds the (low, high] bin from above.
        Some(self.confidence_edges[1..].partition_point(|&e| e < score))
    }

    fn iou_bin(&self, v: f64) -> usize {
        ((v * self.iou_bins as f64) as usize).min(self.iou_bins - 1)
    }
}

/// Counts of neighboring-detection IoUs per (confidence bin, IoU bin), for
/// one event class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IoUHistogram {
    pub class: EventClass,
    pub config: HistogramConfig,
    /// `counts[confidence_bin][iou_bin]`.
    pub counts: Vec<Vec<u64>>,
}

impl IoUHistogram {
    pub fn empty(class: EventClass, config: HistogramConfig) -> Result<Self> {
        config.validate()?;
        let rows = config.confidence_edges.len() - 1;
        let counts = vec![vec![0u64; config.iou_bins]; rows];
        Ok(IoUHistogram {
            class,
            config,
            counts,
        })
    }

    /// Number of confidence rows.
    pub fn num_rows(&self) -> usize {
        self.counts.len()
    }

    /// Total observations in one confidence row.
    pub fn row_total(&self, row: usize) -> u64 {
        self.counts[row].iter().sum()
    }

    /// Row-normalized frequencies; empty rows stay all-zero.
    pub fn mass(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|row| {
                let total: u64 = row.iter().sum();
                if total == 0 {
                    vec![0.0; row.len()]
                } else {
                    row.iter().map(|&c| c as f64 / total as f64).collect()
                }
            })
            .collect()
    }

    /// Merge another histogram into this one (same class and layout).
    /// Aggregation is associative and commutative, so per-track histograms
    /// may be combined in any order.
    pub fn merge(&mut self, other: &IoUHistogram) -> Result<()> {
        if self.class != other.class || self.config != other.config {
            return Err(Error::ShapeMismatch(
                "cannot merge histograms with different class or layout".into(),
            ));
        }
        for (mine, theirs) in self.counts.iter_mut().zip(&other.counts) {
            for (m, t) in mine.iter_mut().zip(theirs) {
                *m += t;
            }
        }
        Ok(())
    }
}

/// Histogram of each detection's IoU with its successor in left-edge order,
/// binned by the detection's own confidence, aggregated over tracks.
///
/// `tracks` holds the *pre-suppression* detections of each track; entries
/// of other classes are ignored, and tracks with fewer than two detections
/// of `class` contribute nothing. Order within a track does not matter —
/// detections are sorted internally.
pub fn neighbor_iou_histogram(
    tracks: &[Vec<Detection>],
    class: EventClass,
    config: &HistogramConfig,
) -> Result<IoUHistogram> {
    let mut hist = IoUHistogram::empty(class, config.clone())?;
    for track in tracks {
        let mut dets: Vec<&Detection> = track
            .iter()
            .filter(|d| d.interval.class() == class)
            .collect();
        dets.sort_by(|a, b| {
            a.interval
                .left()
                .partial_cmp(&b.interval.left())
                .unwrap()
                .then(b.score.partial_cmp(&a.score).unwrap())
                .then(a.source_index.cmp(&b.source_index))
        });
        for pair in dets.windows(2) {
            let Some(row) = config.confidence_bin(pair[0].score) else {
                continue;
            };
            let v = iou(&pair[0].interval, &pair[1].interval);
            hist.counts[row][config.iou_bin(v)] += 1;
        }
    }
    Ok(hist)
}

/// Pick the suppression IoU threshold from a histogram.
///
/// Confidence rows whose lower edge is at or above `min_confidence` are
/// summed and row-normalized; within that aggregate the two strongest
/// strict local maxima are taken as the duplicate mode and the
/// next-event mode, and the threshold is the right edge of the lowest-mass
/// bin strictly between them (ties toward the smaller threshold).
///
/// Fails when no confidence row qualifies, when the qualifying rows are
/// empty, or when the aggregate has no two separated modes ("no
/// separation") — a unimodal or flat overlap profile gives suppression
/// nothing to cut between.
pub fn select_iou_threshold(hist: &IoUHistogram, min_confidence: f64) -> Result<f64> {
    let edges = &hist.config.confidence_edges;
    let rows: Vec<usize> = (0..hist.num_rows())
        .filter(|&r| edges[r] >= min_confidence - 1e-12)
        .collect();
    if rows.is_empty() {
        return Err(Error::NoSeparation(format!(
            "no confidence bin at or above {min_confidence}"
        )));
    }
    let bins = hist.config.iou_bins;
    let mut agg = vec![0.0f64; bins];
    let mut total = 0u64;
    for &r in &rows {
        for (b, &c) in hist.counts[r].iter().enumerate() {
            agg[b] += c as f64;
            total += c;
        }
    }
    if total == 0 {
        return Err(Error::NoSeparation(
            "no observations above the confidence cutoff".into(),
        ));
    }
    for a in &mut agg {
        *a /= total as f64;
    }

    // Strict local maxima (boundary bins compare against their single
    // neighbor).
    let peaks: Vec<usize> = (0..bins)
        .filter(|&b| {
            let left_ok = b == 0 || agg[b] > agg[b - 1];
            let right_ok = b == bins - 1 || agg[b] > agg[b + 1];
            left_ok && right_ok && agg[b] > 0.0
        })
        .collect();
    if peaks.len() < 2 {
        return Err(Error::NoSeparation(format!(
            "overlap profile has {} mode(s); need a low-IoU and a high-IoU mode",
            peaks.len()
        )));
    }
    // The two strongest peaks; mass ties resolved toward the lower bin.
    let mut by_mass = peaks.clone();
    by_mass.sort_by(|&a, &b| agg[b].partial_cmp(&agg[a]).unwrap().then(a.cmp(&b)));
    let (lo, hi) = {
        let (a, b) = (by_mass[0], by_mass[1]);
        (a.min(b), a.max(b))
    };
    if hi - lo < 2 {
        return Err(Error::NoSeparation(
            "the two modes are adjacent; no bin lies between them".into(),
        ));
    }
    let valley = (lo + 1..hi)
        .min_by(|&a, &b| agg[a].partial_cmp(&agg[b]).unwrap().then(a.cmp(&b)))
        .unwrap();
    Ok((valley + 1) as f64 / bins as f64)
}
