//! Training loop for the linear detection heads.
//!
//! Gradients flow analytically: each anchor's five raw outputs receive
//! their loss derivatives from the loss primitives, and since the heads
//! are affine in the (constant) features, the parameter gradient is just
//! `∂loss/∂z · features`. Accumulation walks items, levels, and anchors in
//! a fixed order, so runs are bit-reproducible. The optimizer is Adam with
//! L2 regularization added to the gradient, and the learning rate decays
//! when the validation joint F-measure stops improving.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decode::{detections_to_beats, score_and_collect, suppress, DecodeConfig};
use crate::geometry::{intervals_from_beats, BeatSequence};
use crate::loss::{
    bce_from_logit, focal_from_logit, giou_loss_from_raw, LossBreakdown, LossConfig,
};
use crate::metrics::{joint_report, EvalConfig};
use crate::pyramid::{assign_targets, LevelConfig, TargetSet};
use crate::toy::features::{extract_pyramid, FeaturePyramid, FEATURE_WIDTH};
use crate::toy::heads::{ToyHeads, HEAD_OUTPUTS};
use crate::toy::synth::{synth_track, SynthSpec};
use crate::{Error, Result};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Hyper-parameters of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Initial Adam learning rate.
    pub lr: f64,
    /// L2 coefficient added to every parameter gradient.
    pub weight_decay: f64,
    /// Multiplier applied to the learning rate on a validation stall.
    pub lr_decay: f64,
    /// Epochs without validation improvement before the rate decays.
    pub patience: usize,
    /// Shuffling and head-init seed.
    pub seed: u64,
    pub loss: LossConfig,
    pub levels: LevelConfig,
    pub decode: DecodeConfig,
    pub eval: EvalConfig,
}

impl Default for TrainConfig {
    /// The reference recipe for the synthetic pipeline: long schedule at a
    /// high rate with gentle decay, classification pressure raised so soft
    /// negatives keep draining after the detection metrics plateau, and
    /// regression weighted up because interval edges are the only thing the
    /// decoder consumes.
    fn default() -> Self {
        TrainConfig {
            epochs: 2500,
            batch_size: 16,
            lr: 2.5e-2,
            weight_decay: 1e-4,
            lr_decay: 0.5,
            patience: 150,
            seed: 7,
            loss: LossConfig {
                cls_weight: 4.0,
                reg_weight: 8.0,
                ..LossConfig::default()
            },
            levels: LevelConfig::default(),
            decode: DecodeConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig(
                "epochs and batch size must be positive".into(),
            ));
        }
        if !(self.lr >= 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidConfig(
                "learning rate and weight decay must be non-negative".into(),
            ));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) || self.patience == 0 {
            return Err(Error::InvalidConfig(
                "lr_decay must lie in (0, 1] and patience must be positive".into(),
            ));
        }
        self.loss.validate()?;
        self.levels.validate()?;
        self.decode.validate()?;
        self.eval.validate()
    }
}

/// One track, ready for the loop: features plus assigned targets.
#[derive(Debug, Clone)]
pub struct PreparedTrack {
    pub pyramid: FeaturePyramid,
    pub targets: TargetSet,
    pub annotation: BeatSequence,
}

/// Synthesize, featurize, and assign targets for a corpus, in parallel but
/// in input order.
pub fn prepare_tracks(specs: &[SynthSpec], levels: &LevelConfig) -> Result<Vec<PreparedTrack>> {
    specs
        .par_iter()
        .map(|spec| {
            let (audio, annotation) = synth_track(spec)?;
            let pyramid = extract_pyramid(&audio, levels)?;
            let (beat_ivs, down_ivs) = intervals_from_beats(&annotation);
            let targets = assign_targets(&beat_ivs, &down_ivs, pyramid.grid(), levels)?;
            Ok(PreparedTrack {
                pyramid,
                targets,
                annotation,
            })
        })
        .collect()
}

/// Loss breakdown and flat parameter gradient of one batch, matching the
/// losses module exactly: per-item sums are divided by that item's anchor
/// count, the item means by the batch size, and each component by its
/// weight.
pub fn batch_gradients(
    batch: &[&PreparedTrack],
    heads: &ToyHeads,
    cfg: &LossConfig,
) -> Result<(LossBreakdown, Vec<f64>)> {
    cfg.validate()?;
    if batch.is_empty() {
        return Err(Error::ShapeMismatch("empty batch".into()));
    }
    let mut grads = vec![0.0f64; heads.num_params()];
    let params_per_level = HEAD_OUTPUTS * (FEATURE_WIDTH + 1);
    let b = batch.len() as f64;
    let (mut cls_total, mut reg_total, mut lft_total) = (0.0, 0.0, 0.0);
    let mut num_positive = 0usize;

    for track in batch {
        let n = track.targets.num_anchors() as f64;
        if n == 0.0 {
            return Err(Error::ShapeMismatch("batch item has zero anchors".into()));
        }
        let (mut cls_item, mut reg_item, mut lft_item) = (0.0, 0.0, 0.0);
        for (li, level_targets) in track.targets.levels.iter().enumerate() {
            let head = &heads.heads[li];
            let level_base = li * params_per_level;
            let cells = track.pyramid.level(li);
            for (i, target) in level_targets.iter().enumerate() {
                let f = &cells[i];
                let z = head.forward(f);
                let mut dz = [0.0f64; HEAD_OUTPUTS];
                for ch in 0..2 {
                    let (loss, g) = focal_from_logit(z[ch], target.cls[ch], cfg.gamma, cfg.alpha);
                    cls_item += loss;
                    dz[ch] = cfg.cls_weight * g;
                }
                if let Some(reg) = &target.reg {
                    num_positive += 1;
                    let (loss, g2, g3) = giou_loss_from_raw((z[2], z[3]), (reg.left, reg.right));
                    reg_item += loss;
                    dz[2] = cfg.reg_weight * g2;
                    dz[3] = cfg.reg_weight * g3;
                    let (loss, g4) = bce_from_logit(z[4], reg.quality);
                    lft_item += loss;
                    dz[4] = cfg.lft_weight * g4;
                }
                let scale = 1.0 / (n * b);
                for (row, &g) in dz.iter().enumerate() {
                    if g == 0.0 {
                        continue;
                    }
                    let row_base = level_base + row * FEATURE_WIDTH;
                    for (c, &x) in f.iter().enumerate() {
                        grads[row_base + c] += g * x * scale;
                    }
                    grads[level_base + HEAD_OUTPUTS * FEATURE_WIDTH + row] += g * scale;
                }
            }
        }
        cls_total += cls_item / n;
        reg_total += reg_item / n;
        lft_total += lft_item / n;
    }

    let cls = cfg.cls_weight * cls_total / b;
    let reg = cfg.reg_weight * reg_total / b;
    let lft = cfg.lft_weight * lft_total / b;
    Ok((
        LossBreakdown {
            total: cls + reg + lft,
            cls,
            reg,
            lft,
            num_positive,
        },
        grads,
    ))
}

fn adam_step(heads: &mut ToyHeads, grads: &[f64], lr: f64, weight_decay: f64) {
    let mut params = heads.params();
    heads.opt.step += 1;
    let t = heads.opt.step as i32;
    let bias1 = 1.0 - ADAM_BETA1.powi(t);
    let bias2 = 1.0 - ADAM_BETA2.powi(t);
    for i in 0..params.len() {
        let g = grads[i] + weight_decay * params[i];
        heads.opt.m[i] = ADAM_BETA1 * heads.opt.m[i] + (1.0 - ADAM_BETA1) * g;
        heads.opt.v[i] = ADAM_BETA2 * heads.opt.v[i] + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = heads.opt.m[i] / bias1;
        let v_hat = heads.opt.v[i] / bias2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
    heads.set_params(&params);
}

/// Decode a prepared track with the current heads.
pub fn predict_prepared(
    track: &PreparedTrack,
    heads: &ToyHeads,
    decode: &DecodeConfig,
) -> Result<BeatSequence> {
    let preds = heads.forward(&track.pyramid)?;
    let [beats, downs] = score_and_collect(&preds, track.pyramid.grid(), decode)?;
    Ok(detections_to_beats(
        &suppress(&beats, decode),
        &suppress(&downs, decode),
    ))
}

/// Mean validation joint F-measure under the current heads.
pub fn validation_joint_f(
    tracks: &[PreparedTrack],
    heads: &ToyHeads,
    decode: &DecodeConfig,
    eval: &EvalConfig,
) -> Result<Option<f64>> {
    let scores = tracks
        .par_iter()
        .map(|track| {
            let est = predict_prepared(track, heads, decode)?;
            Ok(joint_report(&est, &track.annotation, eval)?.joint_f)
        })
        .collect::<Result<Vec<Option<f64>>>>()?;
    let available: Vec<f64> = scores.into_iter().flatten().collect();
    Ok((!available.is_empty()).then(|| available.iter().sum::<f64>() / available.len() as f64))
}

/// Per-epoch training record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub cls: f64,
    pub reg: f64,
    pub lft: f64,
    pub total: f64,
    pub val_joint_f: Option<f64>,
}

/// Outcome of [`train_toy`]: the per-epoch log and the best validation
/// score seen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub log: Vec<EpochStats>,
    pub best_val_joint_f: Option<f64>,
}

/// Train heads on a synthetic corpus. `val` may be empty, in which case
/// the learning rate stays fixed. Deterministic for a given config and
/// initial heads.
pub fn train_toy(
    corpus: &[SynthSpec],
    val: &[SynthSpec],
    heads: &mut ToyHeads,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::InvalidConfig("empty training corpus".into()));
    }
    let train_tracks = prepare_tracks(corpus, &cfg.levels)?;
    let val_tracks = prepare_tracks(val, &cfg.levels)?;
    train_prepared(&train_tracks, &val_tracks, heads, cfg)
}

/// [`train_toy`] over already-prepared tracks.
pub fn train_prepared(
    train_tracks: &[PreparedTrack],
    val_tracks: &[PreparedTrack],
    heads: &mut ToyHeads,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut order: Vec<usize> = (0..train_tracks.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut lr = cfg.lr;
    let mut best: Option<f64> = None;
    let mut stall = 0usize;
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut cls, mut reg, mut lft, mut total) = (0.0, 0.0, 0.0, 0.0);
        let mut batches = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&PreparedTrack> = chunk.iter().map(|&i| &train_tracks[i]).collect();
            let (breakdown, grads) = batch_gradients(&batch, heads, &cfg.loss)?;
            if !breakdown.total.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    detail: format!(
                        "loss became non-finite (cls {}, reg {}, lft {})",
                        breakdown.cls, breakdown.reg, breakdown.lft
                    ),
                });
            }
            adam_step(heads, &grads, lr, cfg.weight_decay);
            cls += breakdown.cls;
            reg += breakdown.reg;
            lft += breakdown.lft;
            total += breakdown.total;
            batches += 1.0;
        }

        let val_joint_f = validation_joint_f(val_tracks, heads, &cfg.decode, &cfg.eval)?;
        if let Some(score) = val_joint_f {
            if best.map_or(true, |b| score > b + 1e-9) {
                best = Some(score);
                stall = 0;
            } else {
                stall += 1;
                if stall >= cfg.patience {
                    lr *= cfg.lr_decay;
                    stall = 0;
                }
            }
        }
        log.push(EpochStats {
            epoch,
            lr,
            cls: cls / batches,
            reg: reg / batches,
            lft: lft / batches,
            total: total / batches,
            val_joint_f,
        });
    }
    Ok(TrainOutcome {
        log,
        best_val_joint_f: best,
    })
}

/// Convenience used by the examples and CLI: synthesize one track and run
/// the full decode path on it.
pub fn predict(
    audio: &[f64],
    heads: &ToyHeads,
    levels: &LevelConfig,
    decode: &DecodeConfig,
) -> Result<BeatSequence> {
    let pyramid = extract_pyramid(audio, levels)?;
    let preds = heads.forward(&pyramid)?;
    let [beats, downs] = score_and_collect(&preds, pyramid.grid(), decode)?;
    Ok(detections_to_beats(
        &suppress(&beats, decode),
        &suppress(&downs, decode),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::{total_loss, PredictionSet};
    use crate::toy::synth::random_specs;

    fn tiny_corpus(n: usize, seed: u64) -> Vec<SynthSpec> {
        random_specs(n, (90.0, 150.0), &[4, 3], 6.0, 0.0, seed)
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_unchanged() {
        let corpus = tiny_corpus(4, 1);
        let mut heads = ToyHeads::new(5, 7, 5);
        let before = heads.params();
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 2,
            lr: 0.0,
            ..TrainConfig::default()
        };
        train_toy(&corpus, &[], &mut heads, &cfg).unwrap();
        assert_eq!(heads.params(), before);
    }

    #[test]
    fn analytic_batch_gradient_matches_finite_differences_at_init() {
        let cfg = TrainConfig::default();
        let tracks = prepare_tracks(&tiny_corpus(2, 3), &cfg.levels).unwrap();
        let batch: Vec<&PreparedTrack> = tracks.iter().collect();
        let heads = ToyHeads::new(5, 7, 9);
        let (_, analytic) = batch_gradients(&batch, &heads, &cfg.loss).unwrap();

        let mut probe = heads.clone();
        let loss_at = |params: &[f64]| -> f64 {
            probe.set_params(params);
            let pairs: Vec<(&TargetSet, PredictionSet)> = batch
                .iter()
                .map(|t| (&t.targets, probe.forward(&t.pyramid).unwrap()))
                .collect();
            let borrowed: Vec<(&TargetSet, &PredictionSet)> =
                pairs.iter().map(|(t, p)| (*t, p)).collect();
            total_loss(&borrowed, &cfg.loss).unwrap().total
        };
        // Spot-check a deterministic subset of coordinates (full FD over
        // every parameter runs in the acceptance suite).
        let params = heads.params();
        let stride = params.len() / 97;
        let subset: Vec<usize> = (0..params.len()).step_by(stride.max(1)).collect();
        let mut worst = 0.0f64;
        let mut probe_params = params.clone();
        let mut f = loss_at;
        for &i in &subset {
            let step = 1e-6;
            probe_params[i] = params[i] + step;
            let up = f(&probe_params);
            probe_params[i] = params[i] - step;
            let down = f(&probe_params);
            probe_params[i] = params[i];
            let numeric = (up - down) / (2.0 * step);
            let denom = analytic[i].abs().max(numeric.abs()).max(1e-4);
            worst = worst.max((analytic[i] - numeric).abs() / denom);
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn training_reduces_the_loss() {
        let corpus = tiny_corpus(12, 7);
        let mut heads = ToyHeads::new(5, 7, 2);
        let cfg = TrainConfig {
            epochs: 12,
            batch_size: 4,
            lr: 5e-3,
            ..TrainConfig::default()
        };
        let outcome = train_toy(&corpus, &[], &mut heads, &cfg).unwrap();
        let first = outcome.log.first().unwrap().total;
        let last = outcome.log.last().unwrap().total;
        assert!(
            last < first,
            "loss should fall over training: {first} → {last}"
        );
        assert!(outcome.log.iter().all(|e| e.total.is_finite()));
    }

    #[test]
    fn training_is_deterministic() {
        let corpus = tiny_corpus(6, 11);
        let val = tiny_corpus(2, 12);
        let cfg = TrainConfig {
            epochs: 4,
            batch_size: 3,
            ..TrainConfig::default()
        };
        let run = || {
            let mut heads = ToyHeads::new(5, 7, 13);
            let outcome = train_toy(&corpus, &val, &mut heads, &cfg).unwrap();
            (heads.params(), outcome)
        };
        let (params_a, outcome_a) = run();
        let (params_b, outcome_b) = run();
        assert_eq!(params_a, params_b);
        assert_eq!(outcome_a, outcome_b);
    }

    #[test]
    fn silence_predicts_no_beats() {
        let heads = ToyHeads::new(5, 7, 0);
        let audio = vec![0.0; 1 << 17];
        let seq = predict(
            &audio,
            &heads,
            &LevelConfig::default(),
            &DecodeConfig::default(),
        )
        .unwrap();
        assert!(seq.is_empty());
    }

    #[test]
    fn overfit_single_track_recovers_its_beats() {
        let spec = SynthSpec {
            tempo_bpm: 112.0,
            seed: 5,
            ..SynthSpec::default()
        };
        let cfg = TrainConfig {
            epochs: 150,
            batch_size: 1,
            lr: 2e-2,
            patience: 10_000, // no decay while overfitting
            ..TrainConfig::default()
        };
        let tracks = prepare_tracks(&[spec], &cfg.levels).unwrap();
        let mut heads = ToyHeads::new(5, 7, 4);
        train_prepared(&tracks, &[], &mut heads, &cfg).unwrap();
        let est = predict_prepared(&tracks[0], &heads, &cfg.decode).unwrap();
        let truth = tracks[0].annotation.times();
        assert!(!est.is_empty(), "overfit model should detect beats");
        // Every annotated beat has a prediction within one base stride.
        let stride = tracks[0].pyramid.grid().stride_seconds(0);
        let worst = truth
            .iter()
            .map(|t| {
                est.times()
                    .iter()
                    .map(|e| (e - t).abs())
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0f64, f64::max);
        assert!(
            worst <= 3.0 * stride,
            "worst beat offset {worst} vs stride {stride}"
        );
    }
}
