//! Per-level linear prediction heads.
//!
//! Each pyramid level owns an affine map from the 22 feature values to
//! five raw outputs: two class logits, two raw regression offsets (made
//! positive downstream via `exp`), and one leftness logit. Keeping the
//! heads linear means every gradient is an exact chain-rule expression,
//! so training needs no autodiff and can be verified against finite
//! differences.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::loss::{positive_offset, sigmoid, LevelPredictions, PredictionSet};
use crate::toy::features::{FeaturePyramid, FEATURE_WIDTH};
use crate::{Error, Result};

/// Raw outputs per anchor: class logits for beat and downbeat, raw left
/// and right regression offsets, and the leftness logit — in that order.
pub const HEAD_OUTPUTS: usize = 5;

/// Checkpoint schema version.
pub const CHECKPOINT_VERSION: &str = "1";

/// Affine parameters of one level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelHead {
    /// `HEAD_OUTPUTS` rows of `FEATURE_WIDTH` weights.
    pub weight: Vec<Vec<f64>>,
    /// One bias per output row.
    pub bias: Vec<f64>,
}

impl LevelHead {
    /// Raw outputs for one feature vector.
    pub fn forward(&self, features: &[f64; FEATURE_WIDTH]) -> [f64; HEAD_OUTPUTS] {
        let mut z = [0.0; HEAD_OUTPUTS];
        for (row, out) in z.iter_mut().enumerate() {
            let w = &self.weight[row];
            let mut acc = self.bias[row];
            for (wi, fi) in w.iter().zip(features.iter()) {
                acc += wi * fi;
            }
            *out = acc;
        }
        z
    }
}

/// Adam moment estimates, flattened in parameter order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

/// The full detection model: one [`LevelHead`] per pyramid level plus
/// optimizer state, deterministic given the init seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyHeads {
    pub base_level: u32,
    pub heads: Vec<LevelHead>,
    pub opt: AdamState,
}

impl ToyHeads {
    /// Initialize `num_levels` heads with small uniform weights. Class
    /// biases start negative so the untrained model predicts "no event"
    /// nearly everywhere, which keeps the focal loss stable early on.
    pub fn new(num_levels: usize, base_level: u32, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let heads = (0..num_levels)
            .map(|_| {
                let weight = (0..HEAD_OUTPUTS)
                    .map(|_| {
                        (0..FEATURE_WIDTH)
                            .map(|_| rng.gen_range(-0.01..0.01))
                            .collect()
                    })
                    .collect();
                let bias = vec![-2.0, -2.0, 0.0, 0.0, 0.0];
                LevelHead { weight, bias }
            })
            .collect();
        let mut model = ToyHeads {
            base_level,
            heads,
            opt: AdamState::default(),
        };
        let n = model.num_params();
        model.opt.m = vec![0.0; n];
        model.opt.v = vec![0.0; n];
        model
    }

    pub fn num_levels(&self) -> usize {
        self.heads.len()
    }

    pub fn num_params(&self) -> usize {
        self.heads.len() * HEAD_OUTPUTS * (FEATURE_WIDTH + 1)
    }

    /// Flatten all parameters (per level: weight rows, then biases).
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for head in &self.heads {
            for row in &head.weight {
                out.extend_from_slice(row);
            }
            out.extend_from_slice(&head.bias);
        }
        out
    }

    /// Write back a flat parameter vector in [`ToyHeads::params`] order.
    pub fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.num_params(), "parameter count mismatch");
        let mut it = params.iter();
        for head in &mut self.heads {
            for row in &mut head.weight {
                for w in row.iter_mut() {
                    *w = *it.next().unwrap();
                }
            }
            for b in &mut head.bias {
                *b = *it.next().unwrap();
            }
        }
    }

    /// Raw per-anchor outputs for every level of a pyramid.
    pub fn forward_raw(&self, pyramid: &FeaturePyramid) -> Result<Vec<Vec<[f64; HEAD_OUTPUTS]>>> {
        if pyramid.num_levels() != self.heads.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} pyramid levels vs {} heads",
                pyramid.num_levels(),
                self.heads.len()
            )));
        }
        Ok(self
            .heads
            .iter()
            .enumerate()
            .map(|(li, head)| pyramid.level(li).iter().map(|f| head.forward(f)).collect())
            .collect())
    }

    /// Decoded predictions: probabilities for the class and leftness
    /// channels, positive stride offsets for regression.
    pub fn forward(&self, pyramid: &FeaturePyramid) -> Result<PredictionSet> {
        let raw = self.forward_raw(pyramid)?;
        let levels = raw
            .into_iter()
            .map(|cells| {
                let mut lp = LevelPredictions {
                    cls_prob: Vec::with_capacity(cells.len()),
                    reg_pred: Vec::with_capacity(cells.len()),
                    leftness_prob: Vec::with_capacity(cells.len()),
                };
                for z in cells {
                    lp.cls_prob.push([sigmoid(z[0]), sigmoid(z[1])]);
                    lp.reg_pred
                        .push([positive_offset(z[2]), positive_offset(z[3])]);
                    lp.leftness_prob.push(sigmoid(z[4]));
                }
                lp
            })
            .collect();
        Ok(PredictionSet { levels })
    }

    /// Save as versioned JSON.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = Checkpoint {
            version: CHECKPOINT_VERSION.to_string(),
            feature_width: FEATURE_WIDTH,
            model: self.clone(),
        };
        let json = serde_json::to_string_pretty(&file)?;
        std::fs::write(path, json).map_err(|e| Error::io(path.to_path_buf(), e))
    }

    /// Load a checkpoint written by [`ToyHeads::save`].
    pub fn load(path: &Path) -> Result<ToyHeads> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.to_path_buf(), e))?;
        let file: Checkpoint = serde_json::from_str(&text)?;
        if file.version != CHECKPOINT_VERSION {
            return Err(Error::InvalidConfig(format!(
                "checkpoint version {:?} is not supported (expected {CHECKPOINT_VERSION:?})",
                file.version
            )));
        }
        if file.feature_width != FEATURE_WIDTH {
            return Err(Error::InvalidConfig(format!(
                "checkpoint was built for {}-wide features, this build uses {FEATURE_WIDTH}",
                file.feature_width
            )));
        }
        Ok(file.model)
    }
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: String,
    feature_width: usize,
    model: ToyHeads,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pyramid::LevelConfig;
    use crate::toy::features::extract_pyramid;
    use crate::toy::synth::{synth_track, SynthSpec};
    use approx::assert_abs_diff_eq;

    fn small_pyramid() -> FeaturePyramid {
        let (audio, _) = synth_track(&SynthSpec::default()).unwrap();
        extract_pyramid(&audio, &LevelConfig::default()).unwrap()
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let a = ToyHeads::new(5, 7, 11);
        let b = ToyHeads::new(5, 7, 11);
        let c = ToyHeads::new(5, 7, 12);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.num_params(), 5 * 5 * (FEATURE_WIDTH + 1));
        assert!(a.params().iter().all(|p| p.is_finite()));
    }

    #[test]
    fn forward_matches_manual_affine_map() {
        let pyr = small_pyramid();
        let heads = ToyHeads::new(pyr.num_levels(), 7, 3);
        let preds = heads.forward(&pyr).unwrap();
        let raw = heads.forward_raw(&pyr).unwrap();
        let (li, i) = (0, 40);
        let f = &pyr.level(li)[i];
        let head = &heads.heads[li];
        for row in 0..HEAD_OUTPUTS {
            let expect: f64 = head.bias[row]
                + head.weight[row]
                    .iter()
                    .zip(f.iter())
                    .map(|(w, x)| w * x)
                    .sum::<f64>();
            assert_abs_diff_eq!(raw[li][i][row], expect, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(
            preds.levels[li].cls_prob[i][0],
            sigmoid(raw[li][i][0]),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            preds.levels[li].reg_pred[i][1],
            raw[li][i][3].exp(),
            epsilon = 1e-15
        );
        assert!(preds.levels[li].reg_pred[i].iter().all(|&r| r > 0.0));
    }

    #[test]
    fn params_round_trip() {
        let mut heads = ToyHeads::new(5, 7, 1);
        let mut params = heads.params();
        params[17] = 0.5;
        params[100] = -0.25;
        heads.set_params(&params);
        assert_eq!(heads.params(), params);
    }

    #[test]
    fn checkpoint_round_trips_and_rejects_other_versions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let heads = ToyHeads::new(5, 7, 21);
        heads.save(&path).unwrap();
        let loaded = ToyHeads::load(&path).unwrap();
        assert_eq!(heads, loaded);

        let mangled = std::fs::read_to_string(&path)
            .unwrap()
            .replace("\"version\": \"1\"", "\"version\": \"0\"");
        std::fs::write(&path, mangled).unwrap();
        assert!(ToyHeads::load(&path).is_err());
    }

    #[test]
    fn mismatched_level_counts_are_rejected() {
        let pyr = small_pyramid();
        let heads = ToyHeads::new(pyr.num_levels() - 1, 7, 0);
        assert!(heads.forward(&pyr).is_err());
    }
}
