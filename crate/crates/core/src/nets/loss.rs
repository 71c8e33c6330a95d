//! Multi-part loss: per-group regression terms plus per-group cross-entropy
//! terms, combined as a weighted sum.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::facegen::SlotKind;
use crate::nets::model::SliceMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressionNorm {
    L1,
    L2,
}

/// Fixed per-group weights; any group missing from a map weighs 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub norm: RegressionNorm,
    #[serde(default)]
    pub regression_weights: BTreeMap<String, f64>,
    #[serde(default)]
    pub classification_weights: BTreeMap<String, f64>,
}

impl Default for LossSpec {
    fn default() -> Self {
        LossSpec {
            norm: RegressionNorm::L1,
            regression_weights: BTreeMap::new(),
            classification_weights: BTreeMap::new(),
        }
    }
}

impl LossSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in self
            .regression_weights
            .iter()
            .chain(self.classification_weights.iter())
        {
            if !w.is_finite() || *w < 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "loss weight for {name} must be finite and >= 0, got {w}"
                )));
            }
        }
        Ok(())
    }

    pub fn regression_weight(&self, group: &str) -> f64 {
        self.regression_weights.get(group).copied().unwrap_or(1.0)
    }

    pub fn classification_weight(&self, group: &str) -> f64 {
        self.classification_weights.get(group).copied().unwrap_or(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPart {
    pub group: String,
    pub kind: SlotKind,
    /// Unweighted term: mean L1/L2 for continuous groups, cross-entropy for
    /// one-hot groups.
    pub raw: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub parts: Vec<GroupPart>,
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::MIN, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().cloned().fold(f64::MIN, f64::max);
    max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln()
}

/// Total = sum of weighted regression parts plus weighted cross-entropy
/// parts, accumulated in the same order the parts are reported so the
/// decomposition identity is exact.
pub fn multipart_loss(
    pred: &[f64],
    target: &[f64],
    slices: &SliceMap,
    spec: &LossSpec,
) -> Result<LossParts> {
    if pred.len() != slices.width() || target.len() != slices.width() {
        return Err(Error::LayoutMismatch(format!(
            "loss over {} dims, pred has {}, target has {}",
            slices.width(),
            pred.len(),
            target.len()
        )));
    }
    let mut total = 0.0;
    let mut parts = Vec::with_capacity(slices.groups.len());
    for group in &slices.groups {
        let p = &pred[group.local_range()];
        let t = &target[group.local_range()];
        let (raw, weight) = match group.kind {
            SlotKind::Continuous => {
                let sum: f64 = match spec.norm {
                    RegressionNorm::L1 => p.iter().zip(t).map(|(a, b)| (a - b).abs()).sum(),
                    RegressionNorm::L2 => p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum(),
                };
                (sum / group.len as f64, spec.regression_weight(&group.name))
            }
            SlotKind::OneHot => {
                let ce = log_sum_exp(p) - p.iter().zip(t).map(|(z, t)| z * t).sum::<f64>();
                (ce, spec.classification_weight(&group.name))
            }
        };
        total += weight * raw;
        parts.push(GroupPart {
            group: group.name.clone(),
            kind: group.kind,
            raw,
            weight,
        });
    }
    Ok(LossParts { total, parts })
}

/// Gradient of the multi-part loss with respect to the model output
/// (tanh-activated continuous dims, raw logits for one-hot dims).
pub fn loss_output_gradient(
    pred: &[f64],
    target: &[f64],
    slices: &SliceMap,
    spec: &LossSpec,
) -> Result<Vec<f64>> {
    if pred.len() != slices.width() || target.len() != slices.width() {
        return Err(Error::LayoutMismatch(
            "gradient over mismatched slices".to_string(),
        ));
    }
    let mut grad = vec![0.0; pred.len()];
    for group in &slices.groups {
        let range = group.local_range();
        match group.kind {
            SlotKind::Continuous => {
                let w = spec.regression_weight(&group.name) / group.len as f64;
                for i in range {
                    let d = pred[i] - target[i];
                    grad[i] = match spec.norm {
                        RegressionNorm::L1 => w * d.signum(),
                        RegressionNorm::L2 => w * 2.0 * d,
                    };
                    if d == 0.0 {
                        grad[i] = 0.0;
                    }
                }
            }
            SlotKind::OneHot => {
                let w = spec.classification_weight(&group.name);
                let probs = softmax(&pred[range.clone()]);
                for (offset, i) in range.enumerate() {
                    grad[i] = w * (probs[offset] - target[i]);
                }
            }
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::facegen::{default_schema, TargetLayout};
    use crate::nets::model::{SliceGroup, SliceMap};

    fn single_group(kind: SlotKind, len: usize) -> SliceMap {
        SliceMap {
            groups: vec![SliceGroup {
                name: "g".to_string(),
                kind,
                local_start: 0,
                layout_start: 0,
                len,
            }],
        }
    }

    #[test]
    fn perfect_prediction_has_zero_regression_parts() {
        let schema = default_schema();
        let layout = TargetLayout::from_schema(&schema);
        let slices = SliceMap::aggregate(&layout);
        let mut target = vec![0.25; slices.width()];
        for g in &slices.groups {
            if g.kind == SlotKind::OneHot {
                for i in g.local_range() {
                    target[i] = 0.0;
                }
                target[g.local_start] = 1.0;
            }
        }
        let parts = multipart_loss(&target, &target, &slices, &LossSpec::default()).unwrap();
        for p in &parts.parts {
            if p.kind == SlotKind::Continuous {
                assert_eq!(p.raw, 0.0);
            }
        }
    }

    #[test]
    fn single_l1_term() {
        let slices = single_group(SlotKind::Continuous, 1);
        let parts =
            multipart_loss(&[0.5], &[0.1], &slices, &LossSpec::default()).unwrap();
        assert!((parts.total - 0.4).abs() < 1e-15);
    }

    #[test]
    fn uniform_logits_cross_entropy_is_ln_k() {
        let slices = single_group(SlotKind::OneHot, 3);
        let parts = multipart_loss(
            &[0.7, 0.7, 0.7],
            &[0.0, 1.0, 0.0],
            &slices,
            &LossSpec::default(),
        )
        .unwrap();
        assert!((parts.total - 3.0_f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn total_matches_weighted_parts_exactly() {
        let schema = default_schema();
        let layout = TargetLayout::from_schema(&schema);
        let slices = SliceMap::aggregate(&layout);
        let mut spec = LossSpec::default();
        spec.regression_weights.insert("nose".to_string(), 2.5);
        spec.classification_weights.insert("eyes_variant".to_string(), 0.3);
        let pred: Vec<f64> = (0..slices.width()).map(|i| (i as f64 * 0.37).sin()).collect();
        let target: Vec<f64> = (0..slices.width()).map(|i| (i as f64 * 0.11).cos()).collect();
        let parts = multipart_loss(&pred, &target, &slices, &spec).unwrap();
        let recomputed: f64 = parts.parts.iter().fold(0.0, |acc, p| acc + p.weight * p.raw);
        assert!((parts.total - recomputed).abs() < 1e-12);
    }

    #[test]
    fn layout_mismatch_is_rejected() {
        let slices = single_group(SlotKind::Continuous, 2);
        assert!(matches!(
            multipart_loss(&[0.0], &[0.0, 0.0], &slices, &LossSpec::default()),
            Err(Error::LayoutMismatch(_))
        ));
    }
}
