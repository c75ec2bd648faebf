//! Multi-resolution anchor grid and ground-truth assignment.
//!
//! The time axis is covered by a pyramid of feature levels. Level `i` (with
//! absolute numbering starting at [`LevelConfig::base_level`]) divides the
//! track into cells of `2^(base_level + i)` samples; each cell center is an
//! *anchor point* that may be labeled positive for one or both event
//! classes.
//!
//! Ground-truth intervals are routed to exactly one level by their length:
//! interval length `s` belongs to level `i` when `m_i < s ≤ m_{i+1}` for the
//! ascending size limits `m_0 = 0 < m_1 < … < m_L = ∞`. On that level, the
//! anchors inside a *left-biased sub-box* `[x₁, x₁ + r·w) ∩ [x₁, x₂)` are
//! positive, where `(x₁, x₂)` is the interval, `r` the per-class radius and
//! `w` the level stride (or, under the literal variant, the interval length
//! itself). Biasing positives toward the left edge matters because the left
//! edge *is* the event being detected; anchors far from it would regress
//! boxes whose decisive edge they cannot see precisely.
//!
//! Positive anchors receive stride-normalized offsets `(l, r)` to the
//! interval's endpoints plus a quality score in `[0, 1]` — by default the
//! *leftness* `sqrt(r / (l + r))`, largest at the left edge; optionally the
//! symmetric centerness `sqrt(min(l,r) / max(l,r))` for comparison.

use serde::{Deserialize, Serialize};

use crate::geometry::{EventClass, Interval};
use crate::{Error, Result};

/// Which width the positive sub-box uses: the level stride (default) or the
/// matched interval's own length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubBoxUnit {
    /// Sub-box width = radius × level stride. Restricts positives to a few
    /// cells after the left edge regardless of interval length.
    Stride,
    /// Sub-box width = radius × interval length. With radii ≥ 1 this covers
    /// the whole interval, i.e. the sub-box never excludes anything; kept as
    /// an explicit variant so the two readings can be compared.
    IntervalLength,
}

/// Which quality score positive anchors are trained to predict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QualityTarget {
    /// `sqrt(r / (l + r))`: 1 at the interval's left edge, falling toward
    /// the right edge. Pairs with the left-biased sub-box.
    Leftness,
    /// `sqrt(min(l, r) / max(l, r))`: 1 at the interval center. The
    /// conventional choice in 2D detectors, used here as an ablation.
    Centerness,
}

/// Pyramid geometry and assignment parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LevelConfig {
    /// Audio sample rate the strides refer to.
    pub sample_rate: u32,
    /// Absolute level number of the finest pyramid level; its stride is
    /// `2^base_level` samples.
    pub base_level: u32,
    /// Number of pyramid levels.
    pub num_levels: usize,
    /// Ascending interval-length boundaries in seconds, `num_levels + 1`
    /// entries, first 0 and last +∞. Lengths in `(size_limits[i],
    /// size_limits[i+1]]` are assigned to level `i`.
    #[serde(with = "crate::util::inf_as_null")]
    pub size_limits: Vec<f64>,
    /// Sub-box radius for beat intervals, in units of [`SubBoxUnit`].
    pub beat_radius: f64,
    /// Sub-box radius for downbeat intervals.
    pub downbeat_radius: f64,
    /// Interpretation of the sub-box width.
    pub sub_box_unit: SubBoxUnit,
    /// Quality score assigned to positive anchors.
    pub quality_target: QualityTarget,
}

impl Default for LevelConfig {
    fn default() -> Self {
        LevelConfig {
            sample_rate: 22_050,
            base_level: 7,
            num_levels: 5,
            size_limits: vec![0.0, 0.546, 0.955, 1.588, 2.359, f64::INFINITY],
            beat_radius: 2.5,
            downbeat_radius: 4.5,
            sub_box_unit: SubBoxUnit::Stride,
            quality_target: QualityTarget::Leftness,
        }
    }
}

impl LevelConfig {
    /// Check structural invariants; call once after constructing from
    /// external input.
    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(Error::InvalidConfig("sample_rate must be > 0".into()));
        }
        if self.num_levels == 0 {
            return Err(Error::InvalidConfig("num_levels must be ≥ 1".into()));
        }
        if self.base_level + self.num_levels as u32 > 40 {
            return Err(Error::InvalidConfig(format!(
                "levels up to {} would overflow sample strides",
                self.base_level + self.num_levels as u32
            )));
        }
        if self.size_limits.len() != self.num_levels + 1 {
            return Err(Error::InvalidConfig(format!(
                "{} size limits for {} levels (need num_levels + 1)",
                self.size_limits.len(),
                self.num_levels
            )));
        }
        if self.size_limits[0] != 0.0 {
            return Err(Error::InvalidConfig("first size limit must be 0".into()));
        }
        if *self.size_limits.last().unwrap() != f64::INFINITY {
            return Err(Error::InvalidConfig(
                "last size limit must be +∞ (null in JSON)".into(),
            ));
        }
        if !self.size_limits.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidConfig(format!(
                "size limits must be strictly ascending, got {:?}",
                self.size_limits
            )));
        }
        for (name, r) in [
            ("beat", self.beat_radius),
            ("downbeat", self.downbeat_radius),
        ] {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name}_radius must be a positive finite number, got {r}"
                )));
            }
        }
        Ok(())
    }

    /// Stride of relative level `i` in samples.
    pub fn stride_samples(&self, level_idx: usize) -> usize {
        1usize << (self.base_level as usize + level_idx)
    }

    /// Stride of relative level `i` in seconds.
    pub fn stride_seconds(&self, level_idx: usize) -> f64 {
        self.stride_samples(level_idx) as f64 / self.sample_rate as f64
    }

    /// Sub-box radius for a class, in stride units (or interval-length
    /// units under [`SubBoxUnit::IntervalLength`]).
    pub fn radius(&self, class: EventClass) -> f64 {
        match class {
            EventClass::Beat => self.beat_radius,
            EventClass::Downbeat => self.downbeat_radius,
        }
    }
}

/// Relative index of the level responsible for an interval of length `s`
/// seconds: the unique `i` with `size_limits[i] < s ≤ size_limits[i+1]`.
///
/// `s` must be positive; the limits cover all of `(0, ∞)` so every valid
/// interval length maps to a level.
pub fn level_for_length(s: f64, cfg: &LevelConfig) -> usize {
    debug_assert!(s > 0.0, "interval lengths are strictly positive");
    // First interior limit ≥ s; the +∞ sentinel guarantees a match.
    cfg.size_limits[1..].partition_point(|&m| m < s)
}

/// One anchor point: a cell center on a pyramid level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorPoint {
    /// Absolute level number (`base_level + level_idx`).
    pub level: u32,
    /// Cell index within the level.
    pub index: usize,
    /// Cell center in seconds: `(index + 0.5) · stride / sample_rate`.
    pub position: f64,
}

/// The anchor layout for one track: per level, `ceil(track_len / stride)`
/// cells. Positions are computed on demand rather than stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorGrid {
    track_len: usize,
    sample_rate: u32,
    base_level: u32,
    counts: Vec<usize>,
}

impl AnchorGrid {
    /// Lay out anchors for a track of `track_len` samples.
    pub fn new(track_len: usize, cfg: &LevelConfig) -> Result<Self> {
        cfg.validate()?;
        if track_len == 0 {
            return Err(Error::InvalidGeometry(
                "cannot build an anchor grid for an empty track".into(),
            ));
        }
        let counts = (0..cfg.num_levels)
            .map(|i| track_len.div_ceil(cfg.stride_samples(i)))
            .collect();
        Ok(AnchorGrid {
            track_len,
            sample_rate: cfg.sample_rate,
            base_level: cfg.base_level,
            counts,
        })
    }

    pub fn num_levels(&self) -> usize {
        self.counts.len()
    }

    /// Anchor count on relative level `i`.
    pub fn count(&self, level_idx: usize) -> usize {
        self.counts[level_idx]
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn total_anchors(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn track_len(&self) -> usize {
        self.track_len
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    /// Absolute level number of relative level `i`.
    pub fn level(&self, level_idx: usize) -> u32 {
        self.base_level + level_idx as u32
    }

    pub fn stride_samples(&self, level_idx: usize) -> usize {
        1usize << (self.base_level as usize + level_idx)
    }

    pub fn stride_seconds(&self, level_idx: usize) -> f64 {
        self.stride_samples(level_idx) as f64 / self.sample_rate as f64
    }

    /// Center of cell `index` on relative level `i`, in seconds.
    pub fn position(&self, level_idx: usize, index: usize) -> f64 {
        (index as f64 + 0.5) * self.stride_seconds(level_idx)
    }

    /// Track duration in seconds.
    pub fn duration_seconds(&self) -> f64 {
        self.track_len as f64 / self.sample_rate as f64
    }

    /// Iterate the anchor points of relative level `i`.
    pub fn anchors(&self, level_idx: usize) -> impl Iterator<Item = AnchorPoint> + '_ {
        let level = self.level(level_idx);
        (0..self.count(level_idx)).map(move |index| AnchorPoint {
            level,
            index,
            position: self.position(level_idx, index),
        })
    }
}

/// Regression and quality targets of a positive anchor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegTarget {
    /// Distance from anchor to the interval's left edge, in strides; ≥ 0.
    pub left: f64,
    /// Distance from anchor to the interval's right edge, in strides; > 0.
    pub right: f64,
    /// Leftness (or centerness) of the anchor within the interval.
    pub quality: f64,
    /// The matched ground-truth interval, in seconds.
    pub interval: Interval,
}

/// Per-anchor training targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorTarget {
    /// Positive/negative label per class channel ([`EventClass::index`]).
    pub cls: [bool; 2],
    /// Regression slot; present iff the anchor is positive for any class.
    /// When an anchor matches several intervals (even across classes), the
    /// shortest interval owns this slot.
    pub reg: Option<RegTarget>,
}

impl AnchorTarget {
    const NEGATIVE: AnchorTarget = AnchorTarget {
        cls: [false, false],
        reg: None,
    };

    pub fn is_positive(&self) -> bool {
        self.cls[0] || self.cls[1]
    }
}

/// Training targets for every anchor of one track, level-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSet {
    pub levels: Vec<Vec<AnchorTarget>>,
}

impl TargetSet {
    pub fn num_anchors(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }

    pub fn num_positive(&self) -> usize {
        self.levels
            .iter()
            .flatten()
            .filter(|t| t.is_positive())
            .count()
    }

    /// Positive count for one class channel.
    pub fn num_positive_for(&self, class: EventClass) -> usize {
        let c = class.index();
        self.levels.iter().flatten().filter(|t| t.cls[c]).count()
    }
}

/// Label every anchor of `grid` against the given ground-truth intervals.
///
/// Each interval is routed to the level matching its length; on that level,
/// anchors inside the left-biased sub-box become positive for the interval's
/// class and receive stride-normalized offsets to the interval's endpoints.
/// The class recorded on each `Interval` decides its radius and class
/// channel; the two input slices exist only to mirror how annotations are
/// produced (see [`crate::geometry::intervals_from_beats`]).
///
/// Intervals longer than the track cannot be regressed from any anchor and
/// are reported as annotation errors.
pub fn assign_targets(
    beat_ivs: &[Interval],
    downbeat_ivs: &[Interval],
    grid: &AnchorGrid,
    cfg: &LevelConfig,
) -> Result<TargetSet> {
    cfg.validate()?;
    if grid.num_levels() != cfg.num_levels {
        return Err(Error::ShapeMismatch(format!(
            "grid has {} levels, config {}",
            grid.num_levels(),
            cfg.num_levels
        )));
    }
    let mut levels: Vec<Vec<AnchorTarget>> = grid
        .counts()
        .iter()
        .map(|&n| vec![AnchorTarget::NEGATIVE; n])
        .collect();

    for iv in beat_ivs.iter().chain(downbeat_ivs) {
        if iv.length() > grid.duration_seconds() {
            return Err(Error::Unassignable(format!(
                "{} interval ({:.3}, {:.3}) is longer than the {:.3}s track",
                iv.class(),
                iv.left(),
                iv.right(),
                grid.duration_seconds()
            )));
        }
        let level_idx = level_for_length(iv.length(), cfg);
        let stride_s = grid.stride_seconds(level_idx);
        let width = match cfg.sub_box_unit {
            SubBoxUnit::Stride => cfg.radius(iv.class()) * stride_s,
            SubBoxUnit::IntervalLength => cfg.radius(iv.class()) * iv.length(),
        };
        let sub_end = (iv.left() + width).min(iv.right());

        // Cell centers are (i + 0.5)·stride; find the first index at or
        // after the left edge, then walk while still inside the sub-box.
        let first = ((iv.left() / stride_s - 0.5).ceil().max(0.0)) as usize;
        let n = grid.count(level_idx);
        for index in first..n {
            let pos = grid.position(level_idx, index);
            if pos < iv.left() {
                continue; // float guard for the ceil above
            }
            if pos >= sub_end {
                break;
            }
            let target = &mut levels[level_idx][index];
            target.cls[iv.class().index()] = true;
            let replace = match &target.reg {
                None => true,
                Some(existing) => iv.length() < existing.interval.length(),
            };
            if replace {
                let left = (pos - iv.left()) / stride_s;
                let right = (iv.right() - pos) / stride_s;
                target.reg = Some(RegTarget {
                    left,
                    right,
                    quality: quality_score(left, right, cfg.quality_target),
                    interval: *iv,
                });
            }
        }
    }
    Ok(TargetSet { levels })
}

/// Quality score for offsets `(l, r)` under the chosen target.
pub fn quality_score(left: f64, right: f64, target: QualityTarget) -> f64 {
    match target {
        QualityTarget::Leftness => (right / (left + right)).sqrt(),
        QualityTarget::Centerness => {
            let (lo, hi) = if left <= right {
                (left, right)
            } else {
                (right, left)
            };
            if hi == 0.0 {
                0.0
            } else {
                (lo / hi).sqrt()
            }
        }
    }
}
