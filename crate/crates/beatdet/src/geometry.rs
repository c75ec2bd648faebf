//! Interval arithmetic on the time axis and conversion between beat
//! sequences and interval targets.
//!
//! A beat annotation is turned into detection targets by pairing consecutive
//! events: consecutive beats bound a *beat interval*, consecutive downbeats a
//! *downbeat interval*. The left edge of every interval is an event time, so
//! decoding only needs left edges (plus the final right edge) to reconstruct
//! the event list. Each downbeat therefore appears twice in the targets: as
//! the left edge of a bar-scale downbeat interval and as the left edge of a
//! beat-scale beat interval.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Minimum spacing between two annotated beats; anything closer is treated
/// as a duplicated annotation and rejected.
pub const MIN_BEAT_GAP: f64 = 1e-3;

/// The two event classes detected by the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventClass {
    Beat,
    Downbeat,
}

impl EventClass {
    /// Both classes, in canonical order (also the head/target channel order).
    pub const ALL: [EventClass; 2] = [EventClass::Beat, EventClass::Downbeat];

    /// Channel index used by target sets and prediction heads.
    pub fn index(self) -> usize {
        match self {
            EventClass::Beat => 0,
            EventClass::Downbeat => 1,
        }
    }

    /// Lower-case name used in reports and file headers.
    pub fn name(self) -> &'static str {
        match self {
            EventClass::Beat => "beat",
            EventClass::Downbeat => "downbeat",
        }
    }
}

impl std::fmt::Display for EventClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A half-open-agnostic 1D box `[left, right]` on the time axis, in seconds,
/// tagged with the event class it represents.
///
/// Construction validates `0 ≤ left < right` and finiteness; downstream code
/// can therefore rely on strictly positive length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    left: f64,
    right: f64,
    class: EventClass,
}

impl Interval {
    /// Create a validated interval.
    pub fn new(left: f64, right: f64, class: EventClass) -> Result<Self> {
        if !left.is_finite() || !right.is_finite() {
            return Err(Error::InvalidGeometry(format!(
                "non-finite endpoints ({left}, {right})"
            )));
        }
        if left < 0.0 {
            return Err(Error::InvalidGeometry(format!(
                "negative left endpoint {left}"
            )));
        }
        if left >= right {
            return Err(Error::InvalidGeometry(format!(
                "degenerate interval ({left}, {right}): left must be < right"
            )));
        }
        Ok(Interval { left, right, class })
    }

    pub fn left(&self) -> f64 {
        self.left
    }

    pub fn right(&self) -> f64 {
        self.right
    }

    pub fn class(&self) -> EventClass {
        self.class
    }

    pub fn length(&self) -> f64 {
        self.right - self.left
    }

    /// Endpoints as a raw span, for use with the span-level helpers.
    pub(crate) fn span(&self) -> (f64, f64) {
        (self.left, self.right)
    }
}

/// Intersection-over-union of two intervals; the class tag is ignored.
///
/// Returns a value in `[0, 1]`, `0` when the intervals are disjoint and `1`
/// exactly when they coincide.
pub fn iou(a: &Interval, b: &Interval) -> f64 {
    span_iou(a.span(), b.span())
}

/// Generalized IoU of two intervals; the class tag is ignored.
///
/// `giou = iou − (|hull| − |union|) / |hull|` where the hull is the smallest
/// interval containing both inputs. Ranges over `(−1, 1]`, penalizing
/// disjoint intervals by how far apart they are.
pub fn giou(a: &Interval, b: &Interval) -> f64 {
    span_giou(a.span(), b.span())
}

/// IoU on raw `(left, right)` spans.
///
/// Used internally where spans may not satisfy the `Interval` invariants
/// (e.g. predicted boxes whose left edge is negative before clamping).
/// Both spans must still be properly ordered with positive length.
pub(crate) fn span_iou(a: (f64, f64), b: (f64, f64)) -> f64 {
    let inter = (a.1.min(b.1) - a.0.max(b.0)).max(0.0);
    let union = (a.1 - a.0) + (b.1 - b.0) - inter;
    inter / union
}

/// Generalized IoU on raw `(left, right)` spans; see [`span_iou`].
pub(crate) fn span_giou(a: (f64, f64), b: (f64, f64)) -> f64 {
    let inter = (a.1.min(b.1) - a.0.max(b.0)).max(0.0);
    let union = (a.1 - a.0) + (b.1 - b.0) - inter;
    let hull = a.1.max(b.1) - a.0.min(b.0);
    inter / union - (hull - union) / hull
}

/// A list of beat times with optional downbeat information.
///
/// Two representations are supported:
///
/// * **Annotated**: every beat carries a metrical position (1 = downbeat,
///   2, 3, ... within the bar), as found in annotation files.
/// * **Prediction-only**: no positions, but the downbeat times are known as
///   an ascending subset of the beat times (what decoding produces).
///
/// A sequence may also carry *no* downbeat information at all (beats-only
/// datasets); downbeat metrics are then reported as not applicable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeatSequence {
    times: Vec<f64>,
    /// Metrical position per beat (annotated sequences).
    positions: Option<Vec<u32>>,
    /// Downbeat times as a subset of `times` (prediction-only sequences;
    /// unused when `positions` is present).
    downbeats: Option<Vec<f64>>,
}

impl BeatSequence {
    /// Beats-only sequence without downbeat information.
    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        validate_times(&times)?;
        Ok(BeatSequence {
            times,
            positions: None,
            downbeats: None,
        })
    }

    /// Annotated sequence: one metrical position (≥ 1) per beat.
    pub fn from_positions(times: Vec<f64>, positions: Vec<u32>) -> Result<Self> {
        validate_times(&times)?;
        if positions.len() != times.len() {
            return Err(Error::InvalidBeats(format!(
                "{} beats but {} metrical positions",
                times.len(),
                positions.len()
            )));
        }
        if let Some(p) = positions.iter().find(|&&p| p < 1) {
            return Err(Error::InvalidBeats(format!(
                "metrical position {p} out of range (must be ≥ 1)"
            )));
        }
        Ok(BeatSequence {
            times,
            positions: Some(positions),
            downbeats: None,
        })
    }

    /// Prediction-only sequence: downbeat times must be an ascending subset
    /// of the beat times (exact equality, not approximate).
    pub fn from_times_and_downbeats(times: Vec<f64>, downbeats: Vec<f64>) -> Result<Self> {
        validate_times(&times)?;
        let mut cursor = 0usize;
        for &d in &downbeats {
            // Advance through `times` looking for an exact match; this also
            // enforces that `downbeats` is ascending.
            while cursor < times.len() && times[cursor] < d {
                cursor += 1;
            }
            if cursor >= times.len() || times[cursor] != d {
                return Err(Error::InvalidBeats(format!(
                    "downbeat time {d} is not one of the beat times"
                )));
            }
            cursor += 1;
        }
        Ok(BeatSequence {
            times,
            positions: None,
            downbeats: Some(downbeats),
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Metrical positions, if this is an annotated sequence.
    pub fn positions(&self) -> Option<&[u32]> {
        self.positions.as_deref()
    }

    /// Whether downbeat times can be derived from this sequence.
    pub fn has_downbeats(&self) -> bool {
        self.positions.is_some() || self.downbeats.is_some()
    }

    /// Downbeat times (ascending), or `None` when the sequence carries no
    /// downbeat information. An empty vector means "downbeats known, none
    /// present" and is distinct from `None`.
    pub fn downbeat_times(&self) -> Option<Vec<f64>> {
        if let Some(positions) = &self.positions {
            Some(
                self.times
                    .iter()
                    .zip(positions)
                    .filter(|(_, &p)| p == 1)
                    .map(|(&t, _)| t)
                    .collect(),
            )
        } else {
            self.downbeats.clone()
        }
    }
}

fn validate_times(times: &[f64]) -> Result<()> {
    for (i, &t) in times.iter().enumerate() {
        if !t.is_finite() || t < 0.0 {
            return Err(Error::InvalidBeats(format!(
                "beat {i} has invalid time {t}"
            )));
        }
        if i > 0 && t - times[i - 1] < MIN_BEAT_GAP {
            return Err(Error::InvalidBeats(format!(
                "beats {} and {} are {:.6}s apart (min gap {MIN_BEAT_GAP}s, times must ascend)",
                i - 1,
                i,
                t - times[i - 1]
            )));
        }
    }
    Ok(())
}

/// Convert a beat sequence into detection targets: one beat-class interval
/// per consecutive beat pair and one downbeat-class interval per consecutive
/// downbeat pair.
///
/// Sequences without downbeat information yield an empty downbeat list, as
/// do sequences with fewer than two downbeats; likewise fewer than two beats
/// yield an empty beat list. Neither case is an error.
pub fn intervals_from_beats(seq: &BeatSequence) -> (Vec<Interval>, Vec<Interval>) {
    let beat_ivs = consecutive_intervals(seq.times(), EventClass::Beat);
    let downbeat_ivs = seq
        .downbeat_times()
        .map(|d| consecutive_intervals(&d, EventClass::Downbeat))
        .unwrap_or_default();
    (beat_ivs, downbeat_ivs)
}

fn consecutive_intervals(times: &[f64], class: EventClass) -> Vec<Interval> {
    times
        .windows(2)
        .map(|w| {
            Interval::new(w[0], w[1], class)
                .expect("validated beat times always produce valid intervals")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn iv(l: f64, r: f64) -> Interval {
        Interval::new(l, r, EventClass::Beat).unwrap()
    }

    #[test]
    fn interval_construction_validates() {
        assert!(Interval::new(0.0, 1.0, EventClass::Beat).is_ok());
        assert!(Interval::new(1.0, 1.0, EventClass::Beat).is_err()); // zero length
        assert!(Interval::new(2.0, 1.0, EventClass::Beat).is_err()); // inverted
        assert!(Interval::new(-0.5, 1.0, EventClass::Beat).is_err()); // negative
        assert!(Interval::new(f64::NAN, 1.0, EventClass::Beat).is_err());
        assert!(Interval::new(0.0, f64::INFINITY, EventClass::Beat).is_err());
    }

    #[test]
    fn iou_known_values() {
        assert_eq!(iou(&iv(0.0, 1.0), &iv(0.0, 1.0)), 1.0);
        assert_relative_eq!(iou(&iv(0.0, 1.0), &iv(0.5, 1.5)), 1.0 / 3.0);
        assert_eq!(iou(&iv(0.0, 1.0), &iv(2.0, 3.0)), 0.0);
        // Touching intervals share a point of measure zero.
        assert_eq!(iou(&iv(0.0, 1.0), &iv(1.0, 2.0)), 0.0);
    }

    #[test]
    fn giou_known_values() {
        // Identical: no hull penalty.
        assert_eq!(giou(&iv(0.0, 1.0), &iv(0.0, 1.0)), 1.0);
        // Disjoint [0,1] vs [2,3]: iou 0, union 2, hull 3.
        assert_relative_eq!(
            giou(&iv(0.0, 1.0), &iv(2.0, 3.0)),
            -1.0 / 3.0,
            epsilon = 1e-15
        );
        // Overlapping [0,2] vs [1,3]: hull equals union so giou = iou = 1/3.
        assert_relative_eq!(
            giou(&iv(0.0, 2.0), &iv(1.0, 3.0)),
            1.0 / 3.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn beat_sequence_validation() {
        assert!(BeatSequence::from_times(vec![]).is_ok());
        assert!(BeatSequence::from_times(vec![0.0, 0.5, 1.0]).is_ok());
        // Below the 1 ms duplicate threshold.
        assert!(BeatSequence::from_times(vec![0.5, 0.5005]).is_err());
        // Exactly 1 ms apart is allowed.
        assert!(BeatSequence::from_times(vec![0.5, 0.501]).is_ok());
        // Descending.
        assert!(BeatSequence::from_times(vec![1.0, 0.5]).is_err());
        // Positions must match in length and be ≥ 1.
        assert!(BeatSequence::from_positions(vec![0.0, 1.0], vec![1]).is_err());
        assert!(BeatSequence::from_positions(vec![0.0, 1.0], vec![1, 0]).is_err());
    }

    #[test]
    fn downbeat_subset_is_enforced() {
        let ok = BeatSequence::from_times_and_downbeats(vec![0.5, 1.0, 1.5], vec![0.5, 1.5]);
        assert_eq!(ok.unwrap().downbeat_times().unwrap(), vec![0.5, 1.5]);
        // 0.75 is not a beat time.
        assert!(BeatSequence::from_times_and_downbeats(vec![0.5, 1.0, 1.5], vec![0.75]).is_err());
        // Downbeats out of order.
        assert!(
            BeatSequence::from_times_and_downbeats(vec![0.5, 1.0, 1.5], vec![1.5, 0.5]).is_err()
        );
        // Empty downbeat list is downbeat info ("none present"), not absence.
        let empty = BeatSequence::from_times_and_downbeats(vec![0.5, 1.0], vec![]).unwrap();
        assert!(empty.has_downbeats());
        assert_eq!(empty.downbeat_times().unwrap(), Vec::<f64>::new());
        // A beats-only sequence has no downbeat info.
        assert!(!BeatSequence::from_times(vec![0.5]).unwrap().has_downbeats());
    }

    #[test]
    fn intervals_from_annotated_sequence() {
        let seq = BeatSequence::from_positions(vec![0.5, 1.0, 1.5, 2.0], vec![1, 2, 3, 1]).unwrap();
        let (beats, downs) = intervals_from_beats(&seq);
        assert_eq!(
            beats
                .iter()
                .map(|i| (i.left(), i.right()))
                .collect::<Vec<_>>(),
            vec![(0.5, 1.0), (1.0, 1.5), (1.5, 2.0)]
        );
        assert!(beats.iter().all(|i| i.class() == EventClass::Beat));
        assert_eq!(downs.len(), 1);
        assert_eq!((downs[0].left(), downs[0].right()), (0.5, 2.0));
        assert_eq!(downs[0].class(), EventClass::Downbeat);
    }

    #[test]
    fn intervals_from_two_bar_sequence() {
        let seq = BeatSequence::from_positions(vec![0.0, 1.0, 2.0, 3.0, 4.0], vec![1, 2, 1, 2, 1])
            .unwrap();
        let (beats, downs) = intervals_from_beats(&seq);
        assert_eq!(beats.len(), 4);
        assert_eq!(
            downs
                .iter()
                .map(|i| (i.left(), i.right()))
                .collect::<Vec<_>>(),
            vec![(0.0, 2.0), (2.0, 4.0)]
        );
    }

    #[test]
    fn degenerate_sequences_yield_empty_lists() {
        let single = BeatSequence::from_positions(vec![0.5], vec![1]).unwrap();
        let (beats, downs) = intervals_from_beats(&single);
        assert!(beats.is_empty());
        assert!(downs.is_empty());

        // Two beats, one downbeat: a beat interval but no downbeat interval.
        let seq = BeatSequence::from_positions(vec![0.5, 1.0], vec![1, 2]).unwrap();
        let (beats, downs) = intervals_from_beats(&seq);
        assert_eq!(beats.len(), 1);
        assert!(downs.is_empty());

        // No downbeat info at all: empty downbeat list.
        let plain = BeatSequence::from_times(vec![0.5, 1.0, 1.5]).unwrap();
        let (beats, downs) = intervals_from_beats(&plain);
        assert_eq!(beats.len(), 2);
        assert!(downs.is_empty());
    }

    /// Strategy: ascending beat times with realistic spacing.
    fn arb_times(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
        (prop::collection::vec(0.2f64..1.2, 1..max_len), 0.0f64..2.0).prop_map(|(gaps, start)| {
            let mut t = start;
            let mut out = vec![t];
            for g in gaps {
                t += g;
                out.push(t);
            }
            out
        })
    }

    fn arb_interval() -> impl Strategy<Value = Interval> {
        (0.0f64..100.0, 0.01f64..10.0, prop::bool::ANY).prop_map(|(l, len, down)| {
            let class = if down {
                EventClass::Downbeat
            } else {
                EventClass::Beat
            };
            Interval::new(l, l + len, class).unwrap()
        })
    }

    proptest! {
        #[test]
        fn iou_is_symmetric_and_bounded(a in arb_interval(), b in arb_interval()) {
            let ab = iou(&a, &b);
            let ba = iou(&b, &a);
            prop_assert_eq!(ab, ba);
            prop_assert!((0.0..=1.0).contains(&ab));
            // IoU 1 exactly when intervals coincide.
            prop_assert_eq!(ab == 1.0, a.left() == b.left() && a.right() == b.right());
        }

        #[test]
        fn giou_bounded_and_dominated_by_iou(a in arb_interval(), b in arb_interval()) {
            let g = giou(&a, &b);
            let i = iou(&a, &b);
            prop_assert!(g > -1.0 && g <= 1.0);
            prop_assert!(g <= i + 1e-15);
            // Hull equals union iff the intervals overlap or touch; then giou == iou.
            let overlap = a.left().max(b.left()) <= a.right().min(b.right());
            if overlap {
                prop_assert!((g - i).abs() < 1e-15);
            } else {
                prop_assert!(g < i);
            }
        }

        #[test]
        fn interval_counts_match_event_counts(times in arb_times(40)) {
            let n = times.len();
            // Mark every third beat as a downbeat.
            let positions: Vec<u32> =
                (0..n).map(|i| if i % 3 == 0 { 1 } else { 1 + (i % 3) as u32 }).collect();
            let seq = BeatSequence::from_positions(times, positions).unwrap();
            let d = seq.downbeat_times().unwrap().len();
            let (beats, downs) = intervals_from_beats(&seq);
            prop_assert_eq!(beats.len(), n - 1);
            prop_assert_eq!(downs.len(), d.saturating_sub(1));
        }

        #[test]
        fn beat_interval_edges_reproduce_times(times in arb_times(40)) {
            let seq = BeatSequence::from_times(times.clone()).unwrap();
            let (beats, _) = intervals_from_beats(&seq);
            if times.len() >= 2 {
                let mut rebuilt: Vec<f64> = beats.iter().map(|i| i.left()).collect();
                rebuilt.push(beats.last().unwrap().right());
                prop_assert_eq!(rebuilt, times);
            }
        }
    }
}
