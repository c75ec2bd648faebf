//! Fitting pyramid size limits from data.
//!
//! The level boundaries that route intervals to pyramid levels are not
//! arbitrary: they are fitted by clustering the interval lengths observed in
//! a training corpus with 1D k-means (one cluster per level) and cutting at
//! the midpoints between adjacent centroids. In one dimension the midpoint
//! cuts *are* the nearest-centroid partition, so the fitted boundaries
//! assign every length to the level whose centroid is closest.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::util::pairwise_sum;
use crate::{Error, Result};

/// Convergence threshold on centroid movement.
const TOL: f64 = 1e-12;
/// Iteration cap for Lloyd's algorithm.
const MAX_ITERS: usize = 300;

/// Result of fitting `k` clusters to interval lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelFit {
    /// Cluster centers in seconds, strictly ascending.
    pub centroids: Vec<f64>,
    /// `k + 1` level boundaries: 0, the adjacent-centroid midpoints, +∞.
    /// Ready to use as [`crate::pyramid::LevelConfig::size_limits`].
    #[serde(with = "crate::util::inf_as_null")]
    pub boundaries: Vec<f64>,
    /// Sum of squared distances of every input to its centroid.
    pub inertia: f64,
}

/// Deterministic 1D k-means over interval lengths.
///
/// Seeded k-means++ initialization followed by Lloyd iterations until the
/// largest centroid movement falls below 1e−12 (or 300 iterations). The
/// input may be in any order; it is sorted internally, so permutations of
/// the same multiset produce identical fits.
///
/// Fails when `k` is zero, when any length is non-positive or non-finite,
/// or when the input has fewer than `k` distinct values.
pub fn kmeans_1d(lengths: &[f64], k: usize, seed: u64) -> Result<LevelFit> {
    kmeans_1d_traced(lengths, k, seed).map(|(fit, _)| fit)
}

/// Like [`kmeans_1d`] but also returns the inertia after every Lloyd
/// iteration (used to verify monotone convergence).
pub(crate) fn kmeans_1d_traced(
    lengths: &[f64],
    k: usize,
    seed: u64,
) -> Result<(LevelFit, Vec<f64>)> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be ≥ 1".into()));
    }
    if lengths.is_empty() {
        return Err(Error::Numerical("no interval lengths to fit".into()));
    }
    if let Some(&bad) = lengths.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
        return Err(Error::Numerical(format!(
            "interval lengths must be positive and finite, got {bad}"
        )));
    }
    let mut data = lengths.to_vec();
    data.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let distinct = 1 + data.windows(2).filter(|w| w[0] < w[1]).count();
    if distinct < k {
        return Err(Error::Numerical(format!(
            "{distinct} distinct lengths cannot support k={k} clusters"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(&data, k, &mut rng);
    centroids.sort_by(|a, b| a.partial_cmp(b).unwrap());

    // Prefix sums make segment means O(1).
    let mut prefix = Vec::with_capacity(data.len() + 1);
    prefix.push(0.0);
    for &x in &data {
        prefix.push(prefix.last().unwrap() + x);
    }

    let mut trace = Vec::new();
    for _ in 0..MAX_ITERS {
        // Assignment: sorted centroids cut the sorted data at midpoints.
        let mut cuts = segment_cuts(&data, &centroids);

        // Empty-cluster repair: reseed at the point farthest from its
        // current centroid, then re-cut. Bounded by k repairs.
        for _ in 0..k {
            let Some(empty) = (0..k).find(|&i| cuts[i] == cuts[i + 1]) else {
                break;
            };
            let far = farthest_point(&data, &centroids, &cuts);
            centroids[empty] = far;
            centroids.sort_by(|a, b| a.partial_cmp(b).unwrap());
            cuts = segment_cuts(&data, &centroids);
        }

        trace.push(inertia_of(&data, &centroids, &cuts));

        // Update step.
        let mut moved = 0.0f64;
        for i in 0..k {
            let (lo, hi) = (cuts[i], cuts[i + 1]);
            if lo == hi {
                continue; // repair failed to fill it; keep the centroid
            }
            let mean = (prefix[hi] - prefix[lo]) / (hi - lo) as f64;
            moved = moved.max((mean - centroids[i]).abs());
            centroids[i] = mean;
        }
        if moved < TOL {
            break;
        }
    }

    let cuts = segment_cuts(&data, &centroids);
    let inertia = inertia_of(&data, &centroids, &cuts);
    trace.push(inertia);

    let mut boundaries = Vec::with_capacity(k + 1);
    boundaries.push(0.0);
    for w in centroids.windows(2) {
        boundaries.push((w[0] + w[1]) / 2.0);
    }
    boundaries.push(f64::INFINITY);

    Ok((
        LevelFit {
            centroids,
            boundaries,
            inertia,
        },
        trace,
    ))
}

/// k-means++ seeding: first centroid uniform, then each next point sampled
/// with probability proportional to its squared distance from the nearest
/// centroid chosen so far.
fn plus_plus_init(data: &[f64], k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut centroids = Vec::with_capacity(k);
    centroids.push(data[rng.gen_range(0..data.len())]);
    let mut d2: Vec<f64> = data.iter().map(|&x| (x - centroids[0]).powi(2)).collect();
    while centroids.len() < k {
        let total: f64 = pairwise_sum(&d2);
        let next = if total > 0.0 {
            let mut u = rng.gen::<f64>() * total;
            let mut chosen = data.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    chosen = i;
                    break;
                }
                u -= w;
            }
            data[chosen]
        } else {
            // All points coincide with existing centroids; guarded against
            // by the distinct-count check, but fall back to uniform.
            data[rng.gen_range(0..data.len())]
        };
        centroids.push(next);
        for (i, &x) in data.iter().enumerate() {
            d2[i] = d2[i].min((x - next).powi(2));
        }
    }
    centroids
}

/// Segment boundaries of the nearest-centroid partition on sorted data:
/// `cuts[i]..cuts[i+1]` is the index range owned by centroid `i`.
fn segment_cuts(data: &[f64], centroids: &[f64]) -> Vec<usize> {
    let k = centroids.len();
    let mut cuts = Vec::with_capacity(k + 1);
    cuts.push(0);
    for i in 1..k {
        let mid = (centroids[i - 1] + centroids[i]) / 2.0;
        // Points ≤ midpoint belong to the left centroid.
        cuts.push(data.partition_point(|&x| x <= mid).max(cuts[i - 1]));
    }
    cuts.push(data.len());
    cuts
}

fn farthest_point(data: &[f64], centroids: &[f64], cuts: &[usize]) -> f64 {
    let mut best = (0.0f64, data[0]);
    for i in 0..centroids.len() {
        for &x in &data[cuts[i]..cuts[i + 1]] {
            let d = (x - centroids[i]).powi(2);
            if d > best.0 {
                best = (d, x);
            }
        }
    }
    best.1
}

fn inertia_of(data: &[f64], centroids: &[f64], cuts: &[usize]) -> f64 {
    let terms: Vec<f64> = (0..centroids.len())
        .flat_map(|i| {
            data[cuts[i]..cuts[i + 1]]
                .iter()
                .map(move |&x| (x - centroids[i]).powi(2))
                .collect::<Vec<_>>()
        })
        .collect();
    pairwise_sum(&terms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::Rng;

    /// 1000 points per planted cluster with ±noise uniform jitter.
    pub(crate) fn planted(centers: &[f64], noise: f64, per_cluster: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for &c in centers {
            for _ in 0..per_cluster {
                out.push(c + rng.gen_range(-noise..noise));
            }
        }
        out.shuffle(&mut rng);
        out
    }

    #[test]
    fn recovers_planted_clusters() {
        let centers = [0.4, 0.75, 1.2, 2.0, 3.0];
        let lengths = planted(&centers, 0.02, 1000, 42);
        let fit = kmeans_1d(&lengths, 5, 7).unwrap();
        assert_eq!(fit.centroids.len(), 5);
        for (got, want) in fit.centroids.iter().zip(&centers) {
            assert!(
                (got - want).abs() < 0.01,
                "centroid {got} too far from planted {want}"
            );
        }
        // Boundaries: 0, exact midpoints, +∞.
        assert_eq!(fit.boundaries[0], 0.0);
        assert_eq!(*fit.boundaries.last().unwrap(), f64::INFINITY);
        for i in 1..5 {
            assert_eq!(
                fit.boundaries[i],
                (fit.centroids[i - 1] + fit.centroids[i]) / 2.0
            );
        }
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let data = [0.5, 1.0, 1.5];
        let fit = kmeans_1d(&data, 1, 0).unwrap();
        assert_relative_eq!(fit.centroids[0], 1.0, max_relative = 1e-12);
        assert_eq!(fit.boundaries, vec![0.0, f64::INFINITY]);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(kmeans_1d(&[], 2, 0).is_err());
        assert!(kmeans_1d(&[1.0, 2.0], 0, 0).is_err());
        assert!(kmeans_1d(&[1.0, -2.0], 1, 0).is_err());
        assert!(kmeans_1d(&[1.0, f64::NAN], 1, 0).is_err());
        // Only 2 distinct values cannot host 3 clusters.
        assert!(kmeans_1d(&[1.0, 1.0, 2.0, 2.0], 3, 0).is_err());
        // ...but exactly 2 distinct values support k=2.
        let fit = kmeans_1d(&[1.0, 1.0, 2.0, 2.0], 2, 0).unwrap();
        assert_eq!(fit.centroids, vec![1.0, 2.0]);
        assert_eq!(fit.inertia, 0.0);
    }

    #[test]
    fn input_order_does_not_change_the_fit() {
        let lengths = planted(&[0.5, 1.5], 0.05, 200, 3);
        let fit_a = kmeans_1d(&lengths, 2, 99).unwrap();
        let mut shuffled = lengths.clone();
        shuffled.reverse();
        let fit_b = kmeans_1d(&shuffled, 2, 99).unwrap();
        assert_eq!(fit_a, fit_b);
    }

    #[test]
    fn same_seed_same_fit() {
        let lengths = planted(&[0.4, 1.0, 2.2], 0.05, 300, 5);
        let a = kmeans_1d(&lengths, 3, 11).unwrap();
        let b = kmeans_1d(&lengths, 3, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn lloyd_never_increases_inertia() {
        let lengths = planted(&[0.4, 0.8, 1.3, 2.0], 0.08, 250, 21);
        let (_, trace) = kmeans_1d_traced(&lengths, 4, 13).unwrap();
        for w in trace.windows(2) {
            assert!(
                w[1] <= w[0] + 1e-9,
                "inertia increased from {} to {}",
                w[0],
                w[1]
            );
        }
    }

    #[test]
    fn boundaries_realize_the_nearest_centroid_partition() {
        let lengths = planted(&[0.45, 0.9, 1.8], 0.1, 400, 17);
        let fit = kmeans_1d(&lengths, 3, 29).unwrap();
        for &x in &lengths {
            // Bin by boundaries: first i with x ≤ boundaries[i+1].
            let bin = fit.boundaries[1..].partition_point(|&b| b < x);
            let nearest = fit
                .centroids
                .iter()
                .map(|c| (x - c).abs())
                .fold(f64::INFINITY, f64::min);
            assert!(
                (x - fit.centroids[bin]).abs() <= nearest + 1e-12,
                "length {x} binned to centroid {} but nearest distance is {nearest}",
                fit.centroids[bin]
            );
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn fits_are_structurally_sound(
            seed in 0u64..1000,
            k in 1usize..5,
            n in 20usize..100,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let lengths: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..3.0)).collect();
            let fit = kmeans_1d(&lengths, k, seed).unwrap();
            prop_assert_eq!(fit.centroids.len(), k);
            prop_assert_eq!(fit.boundaries.len(), k + 1);
            prop_assert!(fit.centroids.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(fit.boundaries.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(fit.inertia >= 0.0);
            prop_assert_eq!(fit.boundaries[0], 0.0);
            prop_assert!(fit.boundaries.last().unwrap().is_infinite());
        }
    }
}
