//! Beat and downbeat tracking as one-dimensional interval detection.
//!
//! This crate reframes musical beat tracking as an object-detection problem
//! on the time axis: the *interval between two consecutive beats* is the
//! object to detect, and the left edge of each detected interval is a beat
//! time. Downbeats are handled the same way at the bar scale, so every
//! downbeat is represented twice — once as a bar-length downbeat interval and
//! once as an ordinary beat interval.
//!
//! The pipeline has five stages, each usable on its own:
//!
//! 1. [`geometry`] — intervals, IoU/GIoU overlap measures, and conversion
//!    between beat annotations and interval boxes.
//! 2. [`pyramid`] — a multi-resolution anchor grid over the time axis and the
//!    rules that assign each ground-truth interval to anchors on the level
//!    matching its duration.
//! 3. [`loss`] — focal classification loss, GIoU regression loss, and a
//!    soft-label "leftness" quality loss, with closed-form gradients.
//! 4. [`decode`] — scoring, greedy and score-decay non-maximum suppression,
//!    and conversion of surviving intervals back to beat times.
//! 5. [`metrics`] — F-measure and continuity scores (CMLc/CMLt/AMLc/AMLt)
//!    for comparing predicted and annotated beats.
//!
//! Two auxiliary stages support experimentation without a real training set:
//! [`kmeans`] fits pyramid size limits to a corpus of interval lengths, and
//! [`histogram`] picks the suppression IoU threshold from the observed
//! overlap statistics of neighbouring detections.
//!
//! The [`toy`] module contains a small, fully deterministic end-to-end
//! pipeline (click-track synthesis, hand-rolled onset features, linear
//! detection heads, Adam training) that exercises every stage above in
//! seconds. The `examples/` directory shows one runnable program per stage;
//! the `beatdet` binary exposes the same functionality as subcommands.
//!
//! ```
//! use beatdet::geometry::{BeatSequence, intervals_from_beats};
//!
//! // Four beats, two of them downbeats (metrical position 1).
//! let ann = BeatSequence::from_positions(
//!     vec![0.5, 1.0, 1.5, 2.0],
//!     vec![1, 2, 1, 2],
//! ).unwrap();
//! let (beat_iv, down_iv) = intervals_from_beats(&ann);
//! assert_eq!(beat_iv.len(), 3); // consecutive beat pairs
//! assert_eq!(down_iv.len(), 1); // one bar: 0.5 .. 1.5
//! ```

pub mod cli;
pub mod decode;
mod error;
pub mod geometry;
pub mod histogram;
pub mod io;
pub mod kmeans;
pub mod loss;
pub mod metrics;
pub mod pyramid;
pub mod toy;

pub use error::{Error, Result};

/// Crate version string, embedded in provenance headers of emitted files.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub(crate) mod util {
    //! Small numeric helpers shared across modules.

    /// Sum `values` by recursive pairwise halving.
    ///
    /// Pairwise summation keeps the accumulated rounding error at
    /// O(log n) ULPs instead of O(n), which makes loss totals and metric
    /// aggregates reproducible across runs at equal input order and almost
    /// invariant under input permutation.
    pub fn pairwise_sum(values: &[f64]) -> f64 {
        match values.len() {
            0 => 0.0,
            1 => values[0],
            2 => values[0] + values[1],
            n => {
                let mid = n / 2;
                pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
            }
        }
    }

    /// Serde adapter for `Vec<f64>` fields whose last element may be +∞
    /// (pyramid size limits, fitted level boundaries). JSON has no infinity
    /// literal, so non-finite values are written as `null` and read back as
    /// +∞.
    pub mod inf_as_null {
        use serde::{Deserialize, Deserializer, Serialize, Serializer};

        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
            let opts: Vec<Option<f64>> = v
                .iter()
                .map(|&x| if x.is_finite() { Some(x) } else { None })
                .collect();
            opts.serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            let opts = Vec::<Option<f64>>::deserialize(d)?;
            Ok(opts
                .into_iter()
                .map(|x| x.unwrap_or(f64::INFINITY))
                .collect())
        }
    }

    #[cfg(test)]
    mod tests {
        use super::*;

        #[test]
        fn pairwise_matches_naive_on_small_inputs() {
            let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
            assert_eq!(pairwise_sum(&xs), 15.0);
            assert_eq!(pairwise_sum(&[]), 0.0);
            assert_eq!(pairwise_sum(&[7.5]), 7.5);
        }

        #[test]
        fn pairwise_is_accurate_on_long_ill_conditioned_input() {
            // 1e8 spread over many small values: naive summation drifts,
            // pairwise stays within a few ULPs of the exact result.
            let n = 100_000;
            let xs: Vec<f64> = (0..n).map(|i| 1.0 + (i % 7) as f64 * 1e-9).collect();
            let exact: f64 = n as f64 + (0..n).map(|i| (i % 7) as f64).sum::<f64>() * 1e-9;
            let got = pairwise_sum(&xs);
            assert!((got - exact).abs() < 1e-6, "got {got}, want {exact}");
        }
    }
}
