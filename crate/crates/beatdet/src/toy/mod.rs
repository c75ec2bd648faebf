//! A desk-scale substitute for a learned audio backbone.
//!
//! The pieces: [`synth`] renders click-track audio with exact annotations,
//! [`features`] turns audio into deterministic per-level onset statistics,
//! [`heads`] maps those features to detection outputs through per-level
//! affine heads, and [`train`] fits the heads with analytic gradients and
//! Adam. Together they exercise the entire detection pipeline — target
//! assignment, the three-part loss, decoding, and evaluation — end to end
//! in seconds, without any neural-network machinery.

pub mod features;
pub mod heads;
pub mod synth;
pub mod train;

pub use features::{extract_pyramid, FeaturePyramid, FEATURE_WIDTH};
pub use heads::{AdamState, LevelHead, ToyHeads, CHECKPOINT_VERSION, HEAD_OUTPUTS};
pub use synth::{random_specs, synth_track, SynthSpec, SAMPLE_RATE};
pub use train::{
    batch_gradients, predict, predict_prepared, prepare_tracks, train_prepared, train_toy,
    validation_joint_f, EpochStats, PreparedTrack, TrainConfig, TrainOutcome,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decode::NmsKind;
use crate::metrics::{aggregate_reports, joint_report, MetricReport};
use crate::pyramid::QualityTarget;
use crate::Result;

/// One cell of the quality-target × suppression comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub quality: QualityTarget,
    pub nms: NmsKind,
    /// Aggregate test-set metrics for this configuration.
    pub report: MetricReport,
}

/// Train and evaluate every {quality target} × {suppression kind} cell.
///
/// One model is trained per quality target (the targets differ, so the
/// suppression variants share it), then each suppression kind is evaluated
/// on the test corpus. Deterministic for fixed seeds.
pub fn run_ablation(
    corpus: &[SynthSpec],
    val: &[SynthSpec],
    test: &[SynthSpec],
    cfg: &TrainConfig,
    kinds: &[NmsKind],
    qualities: &[QualityTarget],
) -> Result<Vec<AblationCell>> {
    let mut cells = Vec::new();
    for &quality in qualities {
        let mut cell_cfg = cfg.clone();
        cell_cfg.levels.quality_target = quality;
        let mut model = ToyHeads::new(
            cell_cfg.levels.num_levels as usize,
            cell_cfg.levels.base_level,
            cell_cfg.seed,
        );
        train_toy(corpus, val, &mut model, &cell_cfg)?;
        let test_tracks = prepare_tracks(test, &cell_cfg.levels)?;
        for &nms in kinds {
            let mut decode = cell_cfg.decode.clone();
            decode.nms = nms;
            let reports = test_tracks
                .par_iter()
                .map(|track| {
                    let est = predict_prepared(track, &model, &decode)?;
                    joint_report(&est, &track.annotation, &cell_cfg.eval)
                })
                .collect::<Result<Vec<MetricReport>>>()?;
            cells.push(AblationCell {
                quality,
                nms,
                report: aggregate_reports(&reports),
            });
        }
    }
    Ok(cells)
}
