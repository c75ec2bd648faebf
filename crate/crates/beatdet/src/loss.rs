//! Detection losses and their gradients.
//!
//! Three per-anchor terms make up the training objective:
//!
//! * **Classification** — focal loss on each class probability, so the many
//!   easy negatives of a sparse time axis don't drown the positives.
//! * **Regression** — `1 − giou` between the predicted and target interval,
//!   applied only at positive anchors.
//! * **Leftness** — binary cross-entropy against the soft leftness label,
//!   applied only at positive anchors; at decode time the predicted leftness
//!   down-weights anchors far from the interval's left edge.
//!
//! The batch loss normalizes twice: each track's terms are averaged over
//! *all* of its anchors, and those per-track means are averaged over the
//! batch, so long tracks don't dominate short ones.
//!
//! Heads emit raw scores: logits for the two probabilities and a raw pair
//! mapped through `exp` for the strictly-positive regression offsets. The
//! `*_from_raw`/`*_from_logit` functions compute each loss directly from raw
//! outputs together with its analytic derivative, which is what the
//! gradient checker validates against central finite differences.

use serde::{Deserialize, Serialize};

use crate::geometry::{span_giou, Interval};
use crate::pyramid::TargetSet;
use crate::util::pairwise_sum;
use crate::{Error, Result};

/// Probabilities are clamped to `[PROB_EPS, 1 − PROB_EPS]` before any
/// logarithm, preventing singularities at 0 and 1.
pub const PROB_EPS: f64 = 1e-7;

/// Raw regression outputs are clamped to this symmetric range before
/// exponentiation so offsets can neither overflow nor vanish entirely.
pub const RAW_REG_LIMIT: f64 = 30.0;

/// Loss hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    /// Focal-loss focusing exponent γ.
    pub gamma: f64,
    /// Focal-loss positive-class weight α.
    pub alpha: f64,
    /// Weight of the classification term.
    pub cls_weight: f64,
    /// Weight of the regression term.
    pub reg_weight: f64,
    /// Weight of the leftness term.
    pub lft_weight: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            gamma: 2.0,
            alpha: 0.25,
            cls_weight: 1.0,
            reg_weight: 1.0,
            lft_weight: 1.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "focal gamma must be ≥ 0, got {}",
                self.gamma
            )));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidConfig(format!(
                "focal alpha must be in [0,1], got {}",
                self.alpha
            )));
        }
        for (name, w) in [
            ("cls_weight", self.cls_weight),
            ("reg_weight", self.reg_weight),
            ("lft_weight", self.lft_weight),
        ] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be ≥ 0, got {w}")));
            }
        }
        Ok(())
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Clamp a probability away from 0 and 1 (see [`PROB_EPS`]).
pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// Focal loss for one class channel.
///
/// `−α (1−p)^γ ln p` when the anchor is positive (`c = true`), and
/// `−(1−α) p^γ ln(1−p)` when negative. `p` is clamped internally.
pub fn focal_loss(p: f64, c: bool, gamma: f64, alpha: f64) -> f64 {
    let p = clamp_prob(p);
    if c {
        -alpha * (1.0 - p).powf(gamma) * p.ln()
    } else {
        -(1.0 - alpha) * p.powf(gamma) * (1.0 - p).ln()
    }
}

/// Focal loss evaluated from a logit, with its derivative.
///
/// Returns `(loss, ∂loss/∂z)` where `p = clamp(σ(z))`. Inside the clamped
/// region the derivative is exactly zero, matching what finite differences
/// of the implementation see.
pub fn focal_from_logit(z: f64, c: bool, gamma: f64, alpha: f64) -> (f64, f64) {
    let p_raw = sigmoid(z);
    let p = clamp_prob(p_raw);
    let loss = focal_loss(p_raw, c, gamma, alpha);
    if p_raw <= PROB_EPS || p_raw >= 1.0 - PROB_EPS {
        return (loss, 0.0);
    }
    // dloss/dp, then chain through σ'(z) = p(1−p).
    let dp = if c {
        // d/dp [−α (1−p)^γ ln p]
        -alpha * (-gamma * (1.0 - p).powf(gamma - 1.0) * p.ln() + (1.0 - p).powf(gamma) / p)
    } else {
        // d/dp [−(1−α) p^γ ln(1−p)]
        -(1.0 - alpha) * (gamma * p.powf(gamma - 1.0) * (1.0 - p).ln() - p.powf(gamma) / (1.0 - p))
    };
    (loss, dp * p * (1.0 - p))
}

/// Regression loss `1 − giou(pred, gt)` between two intervals; 0 exactly
/// when they coincide, approaching 2 as they separate.
pub fn giou_loss(pred: &Interval, gt: &Interval) -> f64 {
    1.0 - crate::geometry::giou(pred, gt)
}

/// `1 − giou` on raw spans (used on stride-normalized offset boxes, which
/// may legitimately have negative coordinates).
pub(crate) fn span_giou_loss(a: (f64, f64), b: (f64, f64)) -> f64 {
    1.0 - span_giou(a, b)
}

/// Analytic gradient of [`span_giou_loss`] with respect to the endpoints of
/// the first span. Kinks (touching spans, aligned endpoints) take the
/// right-side derivative; probe points for gradient checking must avoid
/// them.
pub(crate) fn span_giou_loss_grad(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    let inter = (a.1.min(b.1) - a.0.max(b.0)).max(0.0);
    let union = (a.1 - a.0) + (b.1 - b.0) - inter;
    let hull = a.1.max(b.1) - a.0.min(b.0);

    // Piecewise derivatives of intersection and hull w.r.t. a.0 and a.1.
    let di_da0 = if inter > 0.0 && a.0 >= b.0 { -1.0 } else { 0.0 };
    let di_da1 = if inter > 0.0 && a.1 <= b.1 { 1.0 } else { 0.0 };
    let dh_da0 = if a.0 <= b.0 { -1.0 } else { 0.0 };
    let dh_da1 = if a.1 >= b.1 { 1.0 } else { 0.0 };
    let du_da0 = -1.0 - di_da0;
    let du_da1 = 1.0 - di_da1;

    // loss = 2 − inter/union − union/hull
    let d_loss = |di: f64, du: f64, dh: f64| {
        -(di * union - inter * du) / (union * union) - (du * hull - union * dh) / (hull * hull)
    };
    (
        d_loss(di_da0, du_da0, dh_da0),
        d_loss(di_da1, du_da1, dh_da1),
    )
}

/// Map a raw regression output to a strictly positive offset.
pub fn positive_offset(raw: f64) -> f64 {
    raw.clamp(-RAW_REG_LIMIT, RAW_REG_LIMIT).exp()
}

/// Regression loss evaluated from raw head outputs, with its gradient.
///
/// The raw pair maps to offsets `(l̂, r̂) = (exp(raw.0), exp(raw.1))`, which
/// span the predicted box `(−l̂, r̂)` around the anchor in stride units; the
/// target offsets `(l, r)` span `(−l, r)`. Returns
/// `(loss, ∂loss/∂raw.0, ∂loss/∂raw.1)`.
pub fn giou_loss_from_raw(raw: (f64, f64), target: (f64, f64)) -> (f64, f64, f64) {
    let l_hat = positive_offset(raw.0);
    let r_hat = positive_offset(raw.1);
    let pred = (-l_hat, r_hat);
    let gt = (-target.0, target.1);
    let loss = span_giou_loss(pred, gt);
    let (g0, g1) = span_giou_loss_grad(pred, gt);
    // Chain through the exp mapping: ∂(−l̂)/∂raw.0 = −l̂, ∂r̂/∂raw.1 = r̂;
    // zero inside the clamp.
    let d0 = if raw.0.abs() >= RAW_REG_LIMIT {
        0.0
    } else {
        g0 * -l_hat
    };
    let d1 = if raw.1.abs() >= RAW_REG_LIMIT {
        0.0
    } else {
        g1 * r_hat
    };
    (loss, d0, d1)
}

/// Binary cross-entropy with a soft label `t ∈ [0, 1]`.
pub fn bce(t: f64, p: f64) -> f64 {
    let p = clamp_prob(p);
    -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
}

/// Leftness loss: BCE between the target leftness derived from the
/// regression offsets and the predicted leftness probability.
pub fn leftness_bce(reg_target: (f64, f64), leftness_prob: f64) -> f64 {
    let (l, r) = reg_target;
    let t = (r / (l + r)).sqrt();
    bce(t, leftness_prob)
}

/// Soft-label BCE evaluated from a logit, with its derivative
/// `(loss, ∂loss/∂z)`. Unclamped, the derivative is simply `p − t`.
pub fn bce_from_logit(z: f64, t: f64) -> (f64, f64) {
    let p_raw = sigmoid(z);
    let loss = bce(t, p_raw);
    if p_raw <= PROB_EPS || p_raw >= 1.0 - PROB_EPS {
        return (loss, 0.0);
    }
    (loss, p_raw - t)
}

/// Predicted quantities for every anchor of one pyramid level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelPredictions {
    /// Per-class probabilities, already through sigmoid (and clamping).
    pub cls_prob: Vec<[f64; 2]>,
    /// Positive stride-normalized offsets `(l̂, r̂)`, already through exp.
    pub reg_pred: Vec<[f64; 2]>,
    /// Predicted leftness probability.
    pub leftness_prob: Vec<f64>,
}

/// Predictions for every anchor of one track, level-major, aligned with a
/// [`TargetSet`] of the same grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub levels: Vec<LevelPredictions>,
}

impl PredictionSet {
    pub fn num_anchors(&self) -> usize {
        self.levels.iter().map(|l| l.cls_prob.len()).sum()
    }

    /// Verify internal consistency and alignment with a target set.
    pub fn check_aligned(&self, targets: &TargetSet) -> Result<()> {
        if self.levels.len() != targets.levels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} prediction levels vs {} target levels",
                self.levels.len(),
                targets.levels.len()
            )));
        }
        for (i, (lp, lt)) in self.levels.iter().zip(&targets.levels).enumerate() {
            let n = lt.len();
            if lp.cls_prob.len() != n || lp.reg_pred.len() != n || lp.leftness_prob.len() != n {
                return Err(Error::ShapeMismatch(format!(
                    "level {i}: {} targets vs {}/{}/{} cls/reg/leftness predictions",
                    n,
                    lp.cls_prob.len(),
                    lp.reg_pred.len(),
                    lp.leftness_prob.len()
                )));
            }
        }
        Ok(())
    }
}

/// The batch loss split into its three normalized, weighted components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub cls: f64,
    pub reg: f64,
    pub lft: f64,
    /// Positive anchors across the whole batch.
    pub num_positive: usize,
}

/// Batch loss with the double normalization: every component is averaged
/// over each track's full anchor count, and the per-track means are averaged
/// over the batch. Regression and leftness terms contribute only at positive
/// anchors.
pub fn total_loss(
    batch: &[(&TargetSet, &PredictionSet)],
    cfg: &LossConfig,
) -> Result<LossBreakdown> {
    cfg.validate()?;
    if batch.is_empty() {
        return Err(Error::ShapeMismatch("empty batch".into()));
    }
    let mut cls_items = Vec::with_capacity(batch.len());
    let mut reg_items = Vec::with_capacity(batch.len());
    let mut lft_items = Vec::with_capacity(batch.len());
    let mut num_positive = 0usize;

    for (item_idx, (targets, preds)) in batch.iter().enumerate() {
        preds.check_aligned(targets)?;
        let n = targets.num_anchors();
        if n == 0 {
            return Err(Error::ShapeMismatch(format!(
                "batch item {item_idx} has zero anchors"
            )));
        }
        let mut cls_terms = Vec::with_capacity(n);
        let mut reg_terms = Vec::new();
        let mut lft_terms = Vec::new();

        for (lt, lp) in targets.levels.iter().zip(&preds.levels) {
            for (i, t) in lt.iter().enumerate() {
                let probs = lp.cls_prob[i];
                cls_terms.push(
                    focal_loss(probs[0], t.cls[0], cfg.gamma, cfg.alpha)
                        + focal_loss(probs[1], t.cls[1], cfg.gamma, cfg.alpha),
                );
                if let Some(reg) = &t.reg {
                    num_positive += 1;
                    let [l_hat, r_hat] = lp.reg_pred[i];
                    if !(l_hat > 0.0 && r_hat > 0.0 && l_hat.is_finite() && r_hat.is_finite()) {
                        return Err(Error::Numerical(format!(
                            "non-positive regression prediction ({l_hat}, {r_hat}) at a positive anchor"
                        )));
                    }
                    reg_terms.push(span_giou_loss((-l_hat, r_hat), (-reg.left, reg.right)));
                    lft_terms.push(bce(reg.quality, lp.leftness_prob[i]));
                }
            }
        }
        let n = n as f64;
        cls_items.push(pairwise_sum(&cls_terms) / n);
        reg_items.push(pairwise_sum(&reg_terms) / n);
        lft_items.push(pairwise_sum(&lft_terms) / n);
    }

    let b = batch.len() as f64;
    let cls = cfg.cls_weight * pairwise_sum(&cls_items) / b;
    let reg = cfg.reg_weight * pairwise_sum(&reg_items) / b;
    let lft = cfg.lft_weight * pairwise_sum(&lft_items) / b;
    Ok(LossBreakdown {
        total: cls + reg + lft,
        cls,
        reg,
        lft,
        num_positive,
    })
}

/// Compare an analytic gradient against central finite differences of `f`.
///
/// Returns the maximum relative error over all coordinates, where the
/// relative error uses `max(|analytic|, |numeric|, 1e−4)` as denominator so
/// coordinates with genuinely tiny gradients are compared absolutely.
/// `step` is the finite-difference half-step (1e−6 is a good default for
/// losses of order 1).
pub fn gradient_check<F>(mut f: F, x: &[f64], analytic: &[f64], step: f64) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(
        x.len(),
        analytic.len(),
        "gradient length must match input length"
    );
    let mut probe = x.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        probe[i] = x[i] + step;
        let up = f(&probe);
        probe[i] = x[i] - step;
        let down = f(&probe);
        probe[i] = x[i];
        let numeric = (up - down) / (2.0 * step);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-4);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::EventClass;
    use crate::pyramid::{assign_targets, AnchorGrid, LevelConfig};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn iv(l: f64, r: f64) -> Interval {
        Interval::new(l, r, EventClass::Beat).unwrap()
    }

    #[test]
    fn focal_reduces_to_scaled_bce_at_gamma_zero() {
        for &(p, c) in &[(0.1, true), (0.6, false), (0.97, true), (0.4, false)] {
            let plain_bce = if c {
                -(p as f64).ln()
            } else {
                -(1.0 - p as f64).ln()
            };
            assert_relative_eq!(
                focal_loss(p, c, 0.0, 0.5),
                0.5 * plain_bce,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn focal_known_value_and_limits() {
        // p=0.5, c=1, γ=2, α=0.25: 0.25 · 0.25 · ln 2.
        assert_relative_eq!(
            focal_loss(0.5, true, 2.0, 0.25),
            0.25 * 0.25 * std::f64::consts::LN_2,
            max_relative = 1e-12
        );
        // Perfect positive: loss vanishes (up to the clamp).
        assert!(focal_loss(1.0, true, 2.0, 0.25) < 1e-12);
        assert!(focal_loss(0.0, false, 2.0, 0.25) < 1e-12);
    }

    #[test]
    fn giou_loss_known_values() {
        assert_eq!(giou_loss(&iv(0.0, 1.0), &iv(0.0, 1.0)), 0.0);
        assert_relative_eq!(
            giou_loss(&iv(0.0, 1.0), &iv(2.0, 3.0)),
            4.0 / 3.0,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            giou_loss(&iv(0.0, 2.0), &iv(1.0, 3.0)),
            2.0 / 3.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn leftness_bce_known_values() {
        // Target (l=0, r=1): leftness 1; a confident prediction costs ~0.
        assert!(leftness_bce((0.0, 1.0), 1.0) < 1e-6);
        // Target (l=1, r=0): leftness 0; p=0.5 costs ln 2.
        assert_relative_eq!(
            leftness_bce((1.0, 0.0), 0.5),
            std::f64::consts::LN_2,
            max_relative = 1e-12
        );
    }

    #[test]
    fn soft_label_bce_is_minimized_at_the_label() {
        let t = (0.5f64).sqrt(); // leftness of (l=1, r=1)
        let at_label = leftness_bce((1.0, 1.0), t);
        for dp in [-0.05, -0.01, 0.01, 0.05] {
            assert!(leftness_bce((1.0, 1.0), t + dp) > at_label);
        }
    }

    /// Targets for a tiny track where each interval starts exactly on a cell
    /// center and the radius keeps one positive anchor per interval, so all
    /// leftness labels are hard 1s (soft labels carry irreducible entropy
    /// and would never reach zero loss).
    fn hard_label_case() -> (TargetSet, AnchorGrid, LevelConfig) {
        let cfg = LevelConfig {
            sample_rate: 1,
            base_level: 0,
            num_levels: 1,
            size_limits: vec![0.0, f64::INFINITY],
            beat_radius: 0.9,
            downbeat_radius: 0.9,
            ..LevelConfig::default()
        };
        let grid = AnchorGrid::new(20, &cfg).unwrap();
        let beats = [iv(2.5, 6.5), iv(6.5, 10.5), iv(10.5, 14.5)];
        let ts = assign_targets(&beats, &[], &grid, &cfg).unwrap();
        assert_eq!(ts.num_positive(), 3);
        (ts, grid, cfg)
    }

    fn perfect_predictions(ts: &TargetSet) -> PredictionSet {
        PredictionSet {
            levels: ts
                .levels
                .iter()
                .map(|anchors| LevelPredictions {
                    cls_prob: anchors
                        .iter()
                        .map(|t| [t.cls[0] as u8 as f64, t.cls[1] as u8 as f64])
                        .collect(),
                    reg_pred: anchors
                        .iter()
                        .map(|t| t.reg.map_or([1.0, 1.0], |r| [r.left.max(1e-9), r.right]))
                        .collect(),
                    leftness_prob: anchors
                        .iter()
                        .map(|t| t.reg.map_or(0.5, |r| r.quality))
                        .collect(),
                })
                .collect(),
        }
    }

    #[test]
    fn perfect_predictions_cost_almost_nothing() {
        let (ts, _, _) = hard_label_case();
        let preds = perfect_predictions(&ts);
        let out = total_loss(&[(&ts, &preds)], &LossConfig::default()).unwrap();
        assert!(out.total < 1e-6, "perfect predictions cost {}", out.total);
        assert_eq!(out.num_positive, 3);
    }

    #[test]
    fn all_negative_targets_leave_only_the_cls_term() {
        let (ts, _, _) = hard_label_case();
        let negatives = TargetSet {
            levels: ts
                .levels
                .iter()
                .map(|l| {
                    l.iter()
                        .map(|_| crate::pyramid::AnchorTarget {
                            cls: [false, false],
                            reg: None,
                        })
                        .collect()
                })
                .collect(),
        };
        let preds = perfect_predictions(&ts); // arbitrary in-range values
        let out = total_loss(&[(&negatives, &preds)], &LossConfig::default()).unwrap();
        assert_eq!(out.reg, 0.0);
        assert_eq!(out.lft, 0.0);
        assert_eq!(out.num_positive, 0);
        assert_relative_eq!(out.total, out.cls, max_relative = 1e-15);
    }

    /// Independent naive re-implementation: plain nested loops, naive
    /// summation, no shared helpers beyond the elementary formulas.
    fn naive_total(batch: &[(&TargetSet, &PredictionSet)], cfg: &LossConfig) -> (f64, f64, f64) {
        let (mut cls_acc, mut reg_acc, mut lft_acc) = (0.0, 0.0, 0.0);
        for (ts, ps) in batch {
            let n = ts.num_anchors() as f64;
            let (mut c_sum, mut r_sum, mut q_sum) = (0.0, 0.0, 0.0);
            for (lt, lp) in ts.levels.iter().zip(&ps.levels) {
                for (i, t) in lt.iter().enumerate() {
                    for k in 0..2 {
                        let p = lp.cls_prob[i][k].clamp(1e-7, 1.0 - 1e-7);
                        c_sum += if t.cls[k] {
                            -cfg.alpha * (1.0 - p).powf(cfg.gamma) * p.ln()
                        } else {
                            -(1.0 - cfg.alpha) * p.powf(cfg.gamma) * (1.0 - p).ln()
                        };
                    }
                    if let Some(reg) = &t.reg {
                        let (a0, a1) = (-lp.reg_pred[i][0], lp.reg_pred[i][1]);
                        let (b0, b1) = (-reg.left, reg.right);
                        let inter = (a1.min(b1) - a0.max(b0)).max(0.0);
                        let union = (a1 - a0) + (b1 - b0) - inter;
                        let hull = a1.max(b1) - a0.min(b0);
                        r_sum += 1.0 - (inter / union - (hull - union) / hull);
                        let p = lp.leftness_prob[i].clamp(1e-7, 1.0 - 1e-7);
                        q_sum += -(reg.quality * p.ln() + (1.0 - reg.quality) * (1.0 - p).ln());
                    }
                }
            }
            cls_acc += c_sum / n;
            reg_acc += r_sum / n;
            lft_acc += q_sum / n;
        }
        let b = batch.len() as f64;
        (
            cfg.cls_weight * cls_acc / b,
            cfg.reg_weight * reg_acc / b,
            cfg.lft_weight * lft_acc / b,
        )
    }

    fn random_case(seed: u64, n_items: usize) -> Vec<(TargetSet, PredictionSet)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = LevelConfig::default();
        (0..n_items)
            .map(|_| {
                let n_beats = rng.gen_range(4..12);
                let start = rng.gen_range(0.2..0.6);
                let gap = rng.gen_range(0.3..0.9);
                let times: Vec<f64> = (0..n_beats).map(|k| start + gap * k as f64).collect();
                let beats: Vec<Interval> = times.windows(2).map(|w| iv(w[0], w[1])).collect();
                let track_len = ((times.last().unwrap() + 0.5) * 22050.0) as usize;
                let grid = AnchorGrid::new(track_len, &cfg).unwrap();
                let ts = assign_targets(&beats, &[], &grid, &cfg).unwrap();
                let preds = PredictionSet {
                    levels: ts
                        .levels
                        .iter()
                        .map(|anchors| LevelPredictions {
                            cls_prob: anchors
                                .iter()
                                .map(|_| [rng.gen_range(0.01..0.99), rng.gen_range(0.01..0.99)])
                                .collect(),
                            reg_pred: anchors
                                .iter()
                                .map(|_| [rng.gen_range(0.1..4.0), rng.gen_range(0.1..4.0)])
                                .collect(),
                            leftness_prob: anchors
                                .iter()
                                .map(|_| rng.gen_range(0.01..0.99))
                                .collect(),
                        })
                        .collect(),
                };
                (ts, preds)
            })
            .collect()
    }

    #[test]
    fn batch_loss_matches_naive_reimplementation() {
        let case = random_case(7, 5);
        let batch: Vec<(&TargetSet, &PredictionSet)> = case.iter().map(|(t, p)| (t, p)).collect();
        let cfg = LossConfig::default();
        let got = total_loss(&batch, &cfg).unwrap();
        let (cls, reg, lft) = naive_total(&batch, &cfg);
        assert_relative_eq!(got.cls, cls, max_relative = 1e-12);
        assert_relative_eq!(got.reg, reg, max_relative = 1e-12);
        assert_relative_eq!(got.lft, lft, max_relative = 1e-12);
        assert_relative_eq!(got.total, cls + reg + lft, max_relative = 1e-12);
    }

    #[test]
    fn breakdown_components_always_sum_to_total() {
        let case = random_case(11, 3);
        let batch: Vec<_> = case.iter().map(|(t, p)| (t, p)).collect();
        let cfg = LossConfig {
            cls_weight: 2.0,
            reg_weight: 0.5,
            lft_weight: 1.5,
            ..LossConfig::default()
        };
        let got = total_loss(&batch, &cfg).unwrap();
        assert_eq!(got.total, got.cls + got.reg + got.lft);
    }

    #[test]
    fn batch_order_and_duplication_behave_like_a_mean() {
        let case = random_case(13, 2);
        let cfg = LossConfig::default();
        let ab: Vec<_> = case.iter().map(|(t, p)| (t, p)).collect();
        let ba: Vec<_> = case.iter().rev().map(|(t, p)| (t, p)).collect();
        let l_ab = total_loss(&ab, &cfg).unwrap();
        let l_ba = total_loss(&ba, &cfg).unwrap();
        assert_relative_eq!(l_ab.total, l_ba.total, max_relative = 1e-12);

        // Duplicating every item leaves the mean unchanged.
        let doubled: Vec<_> = ab.iter().chain(ab.iter()).cloned().collect();
        let l2 = total_loss(&doubled, &cfg).unwrap();
        assert_relative_eq!(l_ab.total, l2.total, max_relative = 1e-12);

        // A single item duplicated: exactly the same mean.
        let single = vec![ab[0]];
        let twice = vec![ab[0], ab[0]];
        assert_relative_eq!(
            total_loss(&single, &cfg).unwrap().total,
            total_loss(&twice, &cfg).unwrap().total,
            max_relative = 1e-15
        );
    }

    #[test]
    fn anchor_order_within_a_level_does_not_matter() {
        let case = random_case(17, 1);
        let (ts, ps) = &case[0];
        let cfg = LossConfig::default();
        let base = total_loss(&[(ts, ps)], &cfg).unwrap();

        // Reverse the anchors of every level in both containers.
        let ts_rev = TargetSet {
            levels: ts
                .levels
                .iter()
                .map(|l| l.iter().rev().cloned().collect())
                .collect(),
        };
        let ps_rev = PredictionSet {
            levels: ps
                .levels
                .iter()
                .map(|l| LevelPredictions {
                    cls_prob: l.cls_prob.iter().rev().cloned().collect(),
                    reg_pred: l.reg_pred.iter().rev().cloned().collect(),
                    leftness_prob: l.leftness_prob.iter().rev().cloned().collect(),
                })
                .collect(),
        };
        let rev = total_loss(&[(&ts_rev, &ps_rev)], &cfg).unwrap();
        assert_relative_eq!(base.total, rev.total, max_relative = 1e-12);
    }

    #[test]
    fn misaligned_batches_are_rejected() {
        let case = random_case(19, 2);
        let (ts0, ps0) = &case[0];
        let (_, ps1) = &case[1];
        let cfg = LossConfig::default();
        assert!(total_loss(&[(ts0, ps1)], &cfg).is_err());
        assert!(total_loss(&[], &cfg).is_err());
        let _ = ps0;
    }

    #[test]
    fn gradient_of_focal_matches_finite_differences() {
        for &(z, c) in &[(-0.85, true), (0.3, true), (1.7, false), (-2.2, false)] {
            let (_, dz) = focal_from_logit(z, c, 2.0, 0.25);
            let err = gradient_check(
                |x| focal_from_logit(x[0], c, 2.0, 0.25).0,
                &[z],
                &[dz],
                1e-6,
            );
            assert!(err < 1e-4, "focal gradient error {err} at z={z}, c={c}");
        }
    }

    #[test]
    fn gradient_of_raw_giou_matches_finite_differences() {
        // Overlapping, disjoint-ish, and nested configurations; probes keep
        // clear of kinks (equal endpoints, exactly touching spans).
        for &(raw, tgt) in &[
            ((0.3, 0.9), (1.2, 2.3)),
            ((-0.7, 0.4), (0.3, 1.1)),
            ((1.1, -0.3), (2.0, 0.4)),
        ] {
            let (_, d0, d1) = giou_loss_from_raw(raw, tgt);
            let err = gradient_check(
                |x| giou_loss_from_raw((x[0], x[1]), tgt).0,
                &[raw.0, raw.1],
                &[d0, d1],
                1e-6,
            );
            assert!(err < 1e-4, "giou gradient error {err} at {raw:?}");
        }
    }

    #[test]
    fn gradient_of_leftness_bce_matches_finite_differences() {
        for &(z, t) in &[(0.4, 0.7), (-1.3, 0.2), (2.1, 0.95)] {
            let (_, dz) = bce_from_logit(z, t);
            let err = gradient_check(|x| bce_from_logit(x[0], t).0, &[z], &[dz], 1e-6);
            assert!(err < 1e-4, "bce gradient error {err} at z={z}, t={t}");
        }
    }

    #[test]
    fn clamped_regions_have_zero_gradient() {
        let (_, dz) = focal_from_logit(-20.0, true, 2.0, 0.25);
        assert_eq!(dz, 0.0);
        let (_, dz) = bce_from_logit(20.0, 0.5);
        assert_eq!(dz, 0.0);
        let (_, d0, _) = giou_loss_from_raw((-31.0, 0.0), (1.0, 1.0));
        assert_eq!(d0, 0.0);
    }

    proptest! {
        #[test]
        fn focal_is_monotone_in_p(p1 in 0.01f64..0.98, dp in 0.001f64..0.02) {
            let p2 = p1 + dp;
            // Decreasing in p for positives, increasing for negatives.
            prop_assert!(focal_loss(p2, true, 2.0, 0.25) < focal_loss(p1, true, 2.0, 0.25));
            prop_assert!(focal_loss(p2, false, 2.0, 0.25) > focal_loss(p1, false, 2.0, 0.25));
        }

        #[test]
        fn giou_loss_is_zero_only_at_equality(
            l in 0.0f64..10.0,
            len in 0.1f64..5.0,
            dl in -2.0f64..2.0,
            dlen in -0.05f64..2.0,
        ) {
            let a = iv(l, l + len);
            let loss_self = giou_loss(&a, &a);
            prop_assert_eq!(loss_self, 0.0);
            let l2 = (l + dl).max(0.0);
            let len2 = len + dlen;
            prop_assume!(len2 > 0.05);
            let b_differs = (l2 - a.left()).abs() > 1e-9 || (len2 - len).abs() > 1e-9;
            let b = iv(l2, l2 + len2);
            if b_differs {
                prop_assert!(giou_loss(&a, &b) > 0.0);
            }
        }

        #[test]
        fn giou_loss_is_scale_invariant(
            a0 in -5.0f64..5.0, alen in 0.1f64..4.0,
            b0 in -5.0f64..5.0, blen in 0.1f64..4.0,
            lambda in 0.1f64..20.0,
            origin in -3.0f64..3.0,
        ) {
            let a = (a0, a0 + alen);
            let b = (b0, b0 + blen);
            let scale = |x: f64| origin + lambda * (x - origin);
            let base = span_giou_loss(a, b);
            let scaled = span_giou_loss((scale(a.0), scale(a.1)), (scale(b.0), scale(b.1)));
            prop_assert!((base - scaled).abs() < 1e-10,
                "loss changed under scaling: {base} vs {scaled}");
        }
    }
}
