//! Deterministic multi-resolution onset features.
//!
//! A stand-in for a learned backbone: a short-window energy envelope is
//! rectified-differenced into an onset strength curve, peaks are picked,
//! and every anchor cell of every pyramid level receives a fixed vector of
//! statistics about the nearby peaks — distances to the most recent and
//! upcoming (accented) peaks and the recent inter-peak gaps, expressed in
//! log-strides so that linear prediction heads can read regression targets
//! off almost directly.
//!
//! Feature layout per cell (`FEATURE_WIDTH` = 22):
//!
//! | idx | value                                                          |
//! |-----|----------------------------------------------------------------|
//! | 0   | gate: 1 when any peak lies at or before the cell center        |
//! | 1   | strongest onset value inside the cell                          |
//! | 2   | strength of the most recent peak                               |
//! | 3   | ln distance (strides) back to the most recent active peak      |
//! | 4   | ln of the last active inter-peak gap (strides)                 |
//! | 5   | gate for 4/7/15: at least two active peaks seen                |
//! | 6   | square of 4                                                    |
//! | 7   | ln of `gap − distance` — expected strides to the next peak     |
//! | 8   | strength of the most recent peak relative to the recent median |
//! | 9   | 1 when the active set is the accented peaks                    |
//! | 10  | ln distance (strides) back to the most recent accented peak    |
//! | 11  | ln of the last accent-to-accent gap (strides)                  |
//! | 12  | gate for 11/14: at least two accented peaks seen               |
//! | 13  | square of 11                                                   |
//! | 14  | ln of expected strides to the next accented peak               |
//! | 15  | fraction of the active gap already elapsed                     |
//! | 16  | veto: 1 when the last inter-peak gap is known and out of band  |
//! | 17  | accent analog of 16                                            |
//! | 18  | veto: 1 when no upcoming peak exists within 1.75 known gaps    |
//! | 19  | ln distance (strides) forward to the next peak (0 when none)   |
//! | 20  | accent analog of 18                                            |
//! | 21  | accent analog of 19                                            |
//!
//! The "active" peak set per level is whichever of {all peaks, accented
//! peaks} has a recent gap inside that level's interval-length band, so
//! each level describes events at its own scale. Features 16–21 ignore the
//! routing: 16/18/19 always describe the full peak set and 17/20/21 the
//! accented subset. The forward-looking pair of vetoes plus distances lets
//! the heads regress exact right edges and go quiet once the track has
//! ended, mirroring how a non-causal learned backbone would see context on
//! both sides. Cells before the first peak — and every cell of a silent
//! track — are all zero.

use crate::pyramid::{AnchorGrid, LevelConfig};
use crate::Result;

/// Number of features per anchor cell.
pub const FEATURE_WIDTH: usize = 22;

/// An upcoming peak farther than this many recent gaps away does not count
/// as "next" (feature 18/20): the pulse has effectively stopped.
const NEXT_GAP_FACTOR: f64 = 1.75;

/// Log-distances are floored at this many strides before taking `ln`.
const MIN_STRIDES: f64 = 0.05;

/// Onset peaks must reach this fraction of the track's strongest onset.
const PEAK_REL_THRESHOLD: f64 = 0.1;

/// ...and this absolute onset value, so silence yields no peaks.
const PEAK_ABS_THRESHOLD: f64 = 1e-6;

/// A peak counts as accented when its strength exceeds the median of the
/// surrounding window by this factor.
const ACCENT_RATIO: f64 = 1.4;

/// Window (in peaks, centered on the candidate) for the accent median.
const ACCENT_WINDOW: usize = 8;

/// Per-level feature vectors aligned with an [`AnchorGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePyramid {
    grid: AnchorGrid,
    levels: Vec<Vec<[f64; FEATURE_WIDTH]>>,
}

impl FeaturePyramid {
    pub fn grid(&self) -> &AnchorGrid {
        &self.grid
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    /// Feature vectors of relative level `i`, one per anchor cell.
    pub fn level(&self, level_idx: usize) -> &[[f64; FEATURE_WIDTH]] {
        &self.levels[level_idx]
    }
}

/// Onset peaks of one track: times (seconds), strengths (normalized), and
/// accent flags.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct OnsetPeaks {
    pub times: Vec<f64>,
    pub strengths: Vec<f64>,
    pub accented: Vec<bool>,
}

/// Rectified first difference of a short-window RMS envelope, normalized
/// to a maximum of 1 (all zero on silence). One value per base-level hop.
pub(crate) fn onset_curve(audio: &[f64], hop: usize) -> Vec<f64> {
    let frames = audio.len().div_ceil(hop);
    let mut envelope = Vec::with_capacity(frames);
    for m in 0..frames {
        let start = m * hop;
        let end = (start + hop).min(audio.len());
        let energy: f64 = audio[start..end].iter().map(|s| s * s).sum();
        envelope.push((energy / (end - start) as f64).sqrt());
    }
    // The frame before the track is silence, so a click in the very first
    // frame still registers as a rise.
    let mut onset = vec![0.0; frames];
    if frames > 0 {
        onset[0] = envelope[0];
    }
    for m in 1..frames {
        onset[m] = (envelope[m] - envelope[m - 1]).max(0.0);
    }
    let peak = onset.iter().fold(0.0f64, |m, &v| m.max(v));
    if peak > 0.0 {
        for v in &mut onset {
            *v /= peak;
        }
    }
    onset
}

/// Local maxima of the onset curve above both thresholds, with accent
/// flags from a windowed-median comparison.
pub(crate) fn detect_peaks(onset: &[f64], hop_seconds: f64) -> OnsetPeaks {
    let threshold = PEAK_REL_THRESHOLD.max(PEAK_ABS_THRESHOLD);
    let mut times = Vec::new();
    let mut strengths = Vec::new();
    for m in 0..onset.len() {
        let rising = m == 0 || onset[m] >= onset[m - 1];
        let falling = m + 1 == onset.len() || onset[m] > onset[m + 1];
        if rising && falling && onset[m] >= threshold {
            // An attack straddles hop boundaries, splitting its rise across
            // up to three frames; summing them measures the full rise
            // regardless of where the onset fell within the frame.
            let lo = m.saturating_sub(1);
            let hi = (m + 2).min(onset.len());
            times.push(m as f64 * hop_seconds);
            strengths.push(onset[lo..hi].iter().sum());
        }
    }
    // The window is centered so that peaks near either track edge — the
    // very first downbeat included — are still judged against their
    // neighbors. The lower median keeps the reference on an unaccented
    // peak even in shrunken edge windows where accents are half the
    // sample.
    let accented = strengths
        .iter()
        .enumerate()
        .map(|(k, &s)| {
            let lo = k.saturating_sub(ACCENT_WINDOW / 2 - 1);
            let hi = (k + ACCENT_WINDOW / 2 + 1).min(strengths.len());
            let mut recent: Vec<f64> = strengths[lo..hi].to_vec();
            recent.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let median = recent[(recent.len() - 1) / 2];
            s > ACCENT_RATIO * median
        })
        .collect();
    OnsetPeaks {
        times,
        strengths,
        accented,
    }
}

/// Extract the feature pyramid of one track.
pub fn extract_pyramid(audio: &[f64], cfg: &LevelConfig) -> Result<FeaturePyramid> {
    let grid = AnchorGrid::new(audio.len(), cfg)?;
    let hop = cfg.stride_samples(0);
    let onset = onset_curve(audio, hop);
    let peaks = detect_peaks(&onset, grid.stride_seconds(0));

    // Accent bookkeeping: times and, per peak, the index of the last
    // accented peak at or before it.
    let accent_times: Vec<f64> = peaks
        .times
        .iter()
        .zip(&peaks.accented)
        .filter(|(_, &a)| a)
        .map(|(&t, _)| t)
        .collect();
    let mut accents_up_to = Vec::with_capacity(peaks.times.len());
    let mut count = 0usize;
    for &a in &peaks.accented {
        count += a as usize;
        accents_up_to.push(count);
    }

    let ln_d = |seconds: f64, stride: f64| (seconds / stride).max(MIN_STRIDES).ln();

    let mut levels = Vec::with_capacity(grid.num_levels());
    for li in 0..grid.num_levels() {
        let stride = grid.stride_seconds(li);
        let cells_per = 1usize << li;
        let lo = cfg.size_limits[li];
        let hi = cfg.size_limits[li + 1];
        let in_band = |len: f64| lo < len && len <= hi;

        let mut cells = Vec::with_capacity(grid.count(li));
        let mut last = 0usize; // peaks with time ≤ position, exclusive end
        for index in 0..grid.count(li) {
            let position = grid.position(li, index);
            while last < peaks.times.len() && peaks.times[last] <= position {
                last += 1;
            }
            let mut f = [0.0f64; FEATURE_WIDTH];

            // Strongest onset inside the cell, regardless of peaks.
            let frame_lo = index * cells_per;
            let frame_hi = ((index + 1) * cells_per).min(onset.len());
            f[1] = onset[frame_lo..frame_hi]
                .iter()
                .fold(0.0f64, |m, &v| m.max(v));

            if last == 0 {
                cells.push(f);
                continue;
            }
            f[0] = 1.0;
            f[2] = peaks.strengths[last - 1];
            {
                let lo_idx = last.saturating_sub(ACCENT_WINDOW);
                let mut recent: Vec<f64> = peaks.strengths[lo_idx..last].to_vec();
                recent.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let median = recent[recent.len() / 2].max(1e-9);
                f[8] = (peaks.strengths[last - 1] / median).min(3.0);
            }

            let n_acc = accents_up_to[last - 1];
            let gap_all = (last >= 2).then(|| peaks.times[last - 1] - peaks.times[last - 2]);
            let gap_acc = (n_acc >= 2).then(|| accent_times[n_acc - 1] - accent_times[n_acc - 2]);

            // Route this level to whichever peak set beats at its scale.
            let use_accents = match (gap_all, gap_acc) {
                (Some(g), _) if in_band(g) => false,
                (_, Some(g)) if in_band(g) => true,
                _ => false,
            };
            f[9] = use_accents as usize as f64;
            let (d_active, gap_active) = if use_accents {
                (position - accent_times[n_acc - 1], gap_acc)
            } else {
                (position - peaks.times[last - 1], gap_all)
            };
            f[3] = ln_d(d_active, stride);
            if let Some(g) = gap_active {
                f[4] = ln_d(g, stride);
                f[5] = 1.0;
                f[6] = f[4] * f[4];
                f[7] = ln_d(g - d_active, stride);
                f[15] = (d_active / g).clamp(0.0, 1.5);
            }

            if n_acc >= 1 {
                f[10] = ln_d(position - accent_times[n_acc - 1], stride);
                if let Some(g) = gap_acc {
                    f[11] = ln_d(g, stride);
                    f[12] = 1.0;
                    f[13] = f[11] * f[11];
                    f[14] = ln_d(g - (position - accent_times[n_acc - 1]), stride);
                }
            }

            // Veto flags fire on the RARE condition so their weights get
            // gradient exactly from the anchors they should suppress; a
            // flag that sat at 1 on every ordinary anchor would leave the
            // suppressing weight without any direct pull.
            f[16] = gap_all.is_some_and(|g| !in_band(g)) as usize as f64;
            f[17] = gap_acc.is_some_and(|g| !in_band(g)) as usize as f64;

            // Forward context against the full and accented peak sets: the
            // veto fires when no upcoming peak exists (track tail) or the
            // next one is implausibly far given the local gap.
            let next_all = peaks.times.get(last).map(|&t| t - position);
            f[18] = next_all.map_or(true, |d| gap_all.is_some_and(|g| d > NEXT_GAP_FACTOR * g))
                as usize as f64;
            if let Some(d) = next_all {
                f[19] = ln_d(d, stride);
            }
            let next_acc = accent_times.get(n_acc).map(|&t| t - position);
            f[20] = next_acc.map_or(true, |d| gap_acc.is_some_and(|g| d > NEXT_GAP_FACTOR * g))
                as usize as f64;
            if let Some(d) = next_acc {
                f[21] = ln_d(d, stride);
            }
            cells.push(f);
        }
        levels.push(cells);
    }
    Ok(FeaturePyramid { grid, levels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toy::synth::{synth_track, SynthSpec, SAMPLE_RATE};
    use approx::assert_abs_diff_eq;

    #[test]
    fn level_lengths_match_the_anchor_grid() {
        let audio = vec![0.0; 1 << 21];
        let cfg = LevelConfig::default();
        let pyr = extract_pyramid(&audio, &cfg).unwrap();
        let lengths: Vec<usize> = (0..pyr.num_levels()).map(|i| pyr.level(i).len()).collect();
        assert_eq!(lengths, vec![16384, 8192, 4096, 2048, 1024]);
        assert_eq!(pyr.grid().counts(), &lengths[..]);
    }

    #[test]
    fn silence_yields_all_zero_features() {
        let audio = vec![0.0; 1 << 18];
        let pyr = extract_pyramid(&audio, &LevelConfig::default()).unwrap();
        for li in 0..pyr.num_levels() {
            assert!(pyr.level(li).iter().all(|f| f.iter().all(|&v| v == 0.0)));
        }
    }

    #[test]
    fn single_click_peaks_in_its_own_cell() {
        let sr = SAMPLE_RATE as f64;
        let mut audio = vec![0.0; (4.0 * sr) as usize];
        let onset_t = 2.0;
        for i in 0..1000 {
            let dt = i as f64 / sr;
            let idx = (onset_t * sr) as usize + i;
            audio[idx] = 0.5 * (-60.0 * dt).exp() * (std::f64::consts::TAU * 1000.0 * dt).sin();
        }
        let cfg = LevelConfig::default();
        let pyr = extract_pyramid(&audio, &cfg).unwrap();
        for li in 0..pyr.num_levels() {
            let cells = pyr.level(li);
            let click_cell = (onset_t / pyr.grid().stride_seconds(li)) as usize;
            let best = (0..cells.len())
                .max_by(|&a, &b| cells[a][1].partial_cmp(&cells[b][1]).unwrap())
                .unwrap();
            assert_eq!(best, click_cell, "level {li}");
            // Cells before the click have no peak context.
            assert!(cells[..click_cell]
                .iter()
                .all(|f| f[0] == 0.0 && f[3] == 0.0));
            // Cells after it all gate on.
            assert!(cells[click_cell + 1..].iter().all(|f| f[0] == 1.0));
        }
    }

    #[test]
    fn click_track_peaks_land_on_the_annotated_beats() {
        let (audio, ann) = synth_track(&SynthSpec::default()).unwrap();
        let cfg = LevelConfig::default();
        let hop = cfg.stride_samples(0);
        let onset = onset_curve(&audio, hop);
        let peaks = detect_peaks(&onset, hop as f64 / SAMPLE_RATE as f64);
        assert_eq!(peaks.times.len(), ann.len());
        let hop_s = hop as f64 / SAMPLE_RATE as f64;
        for (&found, &truth) in peaks.times.iter().zip(ann.times()) {
            assert!((found - truth).abs() <= 2.0 * hop_s, "{found} vs {truth}");
        }
        // Every downbeat — including the very first — is flagged as
        // accented; regular beats are not.
        let accents: Vec<f64> = peaks
            .times
            .iter()
            .zip(&peaks.accented)
            .filter(|(_, &a)| a)
            .map(|(&t, _)| t)
            .collect();
        let downs = ann.downbeat_times().unwrap();
        assert_eq!(accents.len(), downs.len());
        for (&found, truth) in accents.iter().zip(downs) {
            assert!((found - truth).abs() <= 2.0 * hop_s);
        }
    }

    #[test]
    fn gap_features_read_the_beat_period_in_strides() {
        // 120 BPM → 0.5 s intervals, which belong to the lowest level.
        let (audio, _) = synth_track(&SynthSpec {
            noise_floor: 0.0,
            ..SynthSpec::default()
        })
        .unwrap();
        let cfg = LevelConfig::default();
        let pyr = extract_pyramid(&audio, &cfg).unwrap();
        let stride = pyr.grid().stride_seconds(0);
        // A cell well into the track, mid-interval.
        let cell = (5.1 / stride) as usize;
        let f = pyr.level(0)[cell];
        assert_eq!(f[0], 1.0);
        assert_eq!(f[9], 0.0, "0.5 s gaps are in the lowest level's band");
        assert_abs_diff_eq!(f[4], (0.5f64 / stride).ln(), epsilon = 0.05);
        assert_abs_diff_eq!(f[6], f[4] * f[4], epsilon = 1e-12);
        // Distance to last + distance to next ≈ one full gap.
        let d = (f[3].exp() + f[7].exp()) * stride;
        assert_abs_diff_eq!(d, 0.5, epsilon = 0.03);
    }

    #[test]
    fn bar_scale_levels_route_to_accented_peaks() {
        // 120 BPM 4/4: bars are 2 s long, in the second-highest band.
        let (audio, _) = synth_track(&SynthSpec {
            noise_floor: 0.0,
            ..SynthSpec::default()
        })
        .unwrap();
        let cfg = LevelConfig::default();
        let pyr = extract_pyramid(&audio, &cfg).unwrap();
        let li = 3; // level 10 covers (1.588, 2.359] s
        let stride = pyr.grid().stride_seconds(li);
        let cell = (7.0 / stride) as usize;
        let f = pyr.level(li)[cell];
        assert_eq!(f[9], 1.0, "bar-scale level should track accents");
        assert_abs_diff_eq!(f[4], (2.0f64 / stride).ln(), epsilon = 0.05);
        assert_abs_diff_eq!(f[11], (2.0f64 / stride).ln(), epsilon = 0.05);
    }

    #[test]
    fn forward_features_see_the_next_peak_until_the_track_ends() {
        // 120 BPM, 10 s: clicks every 0.5 s, the last one at 9.5 s.
        let (audio, ann) = synth_track(&SynthSpec {
            noise_floor: 0.0,
            ..SynthSpec::default()
        })
        .unwrap();
        let cfg = LevelConfig::default();
        let pyr = extract_pyramid(&audio, &cfg).unwrap();
        let stride = pyr.grid().stride_seconds(0);
        let cells = pyr.level(0);

        // Mid-track: next peak in sight (no veto), log-distance consistent
        // with the 0.5 s period.
        let mid = (5.1 / stride) as usize;
        assert_eq!(cells[mid][18], 0.0);
        let d_next = cells[mid][19].exp() * stride;
        let pos = pyr.grid().position(0, mid);
        let next_beat = ann.times().iter().copied().find(|&t| t > pos).unwrap();
        assert_abs_diff_eq!(pos + d_next, next_beat, epsilon = 0.02);

        // Well past the final click the pulse has stopped: both forward
        // vetoes fire and the distances are empty.
        let tail = ((ann.times().last().unwrap() + 0.3) / stride) as usize;
        assert_eq!(cells[tail][18], 1.0);
        assert_eq!(cells[tail][19], 0.0);
        assert_eq!(cells[tail][20], 1.0);
        assert_eq!(cells[tail][21], 0.0);
    }

    #[test]
    fn band_consistency_vetoes_follow_the_level_bands() {
        // 120 BPM 4/4: beat gap 0.5 s fits level 7's band only; the 2 s bar
        // gap fits level 10's band only. The veto fires everywhere else.
        let (audio, _) = synth_track(&SynthSpec {
            noise_floor: 0.0,
            ..SynthSpec::default()
        })
        .unwrap();
        let cfg = LevelConfig::default();
        let pyr = extract_pyramid(&audio, &cfg).unwrap();
        for li in 0..pyr.num_levels() {
            let stride = pyr.grid().stride_seconds(li);
            let f = pyr.level(li)[(7.0 / stride) as usize];
            assert_eq!(f[16], (li != 0) as usize as f64, "level {li} all-gap veto");
            assert_eq!(
                f[17],
                (li != 3) as usize as f64,
                "level {li} accent-gap veto"
            );
        }
        // Before a second peak exists nothing is ruled out: no veto in the
        // opening interval.
        let early = pyr.level(2)[1];
        assert_eq!(early[0], 1.0, "first click already seen");
        assert_eq!(early[16], 0.0);
        assert_eq!(early[17], 0.0);
    }

    #[test]
    fn features_are_deterministic() {
        let (audio, _) = synth_track(&SynthSpec {
            seed: 9,
            ..SynthSpec::default()
        })
        .unwrap();
        let cfg = LevelConfig::default();
        let a = extract_pyramid(&audio, &cfg).unwrap();
        let b = extract_pyramid(&audio, &cfg).unwrap();
        assert_eq!(a, b);
    }
}
