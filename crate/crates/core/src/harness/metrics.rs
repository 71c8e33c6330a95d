//! Evaluation helpers shared by the report sections.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::Result;
use crate::facegen::{argmax_lowest, Region, SlotKind, TargetLayout};
use crate::nets::PredictorModel;

/// Forward a model over stored 8-bit inputs; outputs stay in the model's
/// packed order (tanh continuous, raw logits for one-hot groups).
pub fn predict_block(
    model: &PredictorModel,
    inputs: &[Arc<Vec<u8>>],
    size: usize,
) -> Result<Vec<Vec<f64>>> {
    inputs
        .par_iter()
        .map(|pixels| {
            let f: Vec<f64> = pixels.iter().map(|b| f64::from(*b) / 255.0).collect();
            model.forward_pixels(&f, size)
        })
        .collect()
}

/// Mean L1 over a region's continuous dims for model-space predictions.
/// `targets` are full-layout vectors; predictions are packed per the model's
/// slice map.
pub fn region_l1_packed(
    model: &PredictorModel,
    predictions: &[Vec<f64>],
    targets: &[Vec<f64>],
    layout: &TargetLayout,
    region: Region,
) -> Option<f64> {
    let group = model
        .slice_map
        .groups
        .iter()
        .find(|g| g.kind == SlotKind::Continuous && g.layout_range() == layout.continuous_range(region))?;
    let mut total = 0.0;
    for (pred, target) in predictions.iter().zip(targets) {
        for (local, global) in group.local_range().zip(group.layout_range()) {
            total += (pred[local] - target[global]).abs();
        }
    }
    Some(total / (predictions.len() * group.len) as f64)
}

/// Classification accuracy for a region's one-hot slice, argmax with ties to
/// the lowest index on both sides.
pub fn region_accuracy_packed(
    model: &PredictorModel,
    predictions: &[Vec<f64>],
    targets: &[Vec<f64>],
    layout: &TargetLayout,
    region: Region,
) -> Option<f64> {
    let group = model
        .slice_map
        .groups
        .iter()
        .find(|g| g.kind == SlotKind::OneHot && g.layout_range() == layout.onehot_range(region))?;
    let mut hits = 0usize;
    for (pred, target) in predictions.iter().zip(targets) {
        let p = argmax_lowest(&pred[group.local_range()]);
        let t = argmax_lowest(&target[group.layout_range()]);
        if p == t {
            hits += 1;
        }
    }
    Some(hits as f64 / predictions.len() as f64)
}

/// Mean L1 over all continuous dims of full-layout prediction vectors.
pub fn continuous_l1_full(
    predictions: &[Vec<f64>],
    targets: &[Vec<f64>],
    layout: &TargetLayout,
) -> f64 {
    let dims = layout.continuous_dims();
    let mut total = 0.0;
    for (pred, target) in predictions.iter().zip(targets) {
        for d in &dims {
            total += (pred[*d] - target[*d]).abs();
        }
    }
    total / (predictions.len() * dims.len()) as f64
}

/// Mean L1 over one region's continuous dims of full-layout vectors.
pub fn region_l1_full(
    predictions: &[Vec<f64>],
    targets: &[Vec<f64>],
    layout: &TargetLayout,
    region: Region,
) -> f64 {
    let range = layout.continuous_range(region);
    let mut total = 0.0;
    for (pred, target) in predictions.iter().zip(targets) {
        for d in range.clone() {
            total += (pred[d] - target[d]).abs();
        }
    }
    total / (predictions.len() * range.len()) as f64
}

/// Mean classification accuracy over all regions of full-layout vectors.
pub fn accuracy_full(
    predictions: &[Vec<f64>],
    targets: &[Vec<f64>],
    layout: &TargetLayout,
) -> f64 {
    let mut hits = 0usize;
    let mut total = 0usize;
    for (pred, target) in predictions.iter().zip(targets) {
        for region in Region::ALL {
            let range = layout.onehot_range(region);
            if argmax_lowest(&pred[range.clone()]) == argmax_lowest(&target[range]) {
                hits += 1;
            }
            total += 1;
        }
    }
    hits as f64 / total as f64
}
