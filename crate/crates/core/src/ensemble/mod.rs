//! Decomposition-based ensemble: per-dimension least-squares blending of
//! local and aggregate predictions, plus full-pipeline inference.
//!
//! For a dimension shared by both models the blend is w*local +
//! (1-w)*aggregate; the complementary pair keeps the weights summing to 1,
//! and w is fitted coordinate-wise by minimizing the cumulative squared
//! error over the fitting split. Weights are unconstrained in sign.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::facegen::{
    decode_target, nominal_crop_boxes, FaceSchema, Image, Recipe, Region, SlotKind, TargetLayout,
    TargetVector, CROP_SIZE,
};
use crate::nets::{softmax, PredictorModel};

/// Anything that maps an image to its slice of the target vector, with
/// one-hot slices already converted to probabilities. Implemented by real
/// models and by test oracles.
pub trait Predict {
    fn predict_probs(&self, image: &Image) -> Result<Vec<f64>>;
}

impl Predict for PredictorModel {
    fn predict_probs(&self, image: &Image) -> Result<Vec<f64>> {
        let mut out = self.forward_image(image)?;
        for group in &self.slice_map.groups {
            if group.kind == SlotKind::OneHot {
                let probs = softmax(&out[group.local_range()]);
                out[group.local_range()].copy_from_slice(&probs);
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub id: String,
    /// Full-width aggregate prediction (probabilities on one-hot slices).
    pub aggregate: Vec<f64>,
    /// Per-region local slices in the local model's packed order.
    pub locals: BTreeMap<Region, Vec<f64>>,
    pub target: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTable {
    pub layout: TargetLayout,
    pub rows: Vec<PredictionRow>,
}

impl PredictionTable {
    /// Local prediction for a layout dimension, if any local model covers it.
    fn local_value(&self, row: &PredictionRow, dim: usize) -> Option<f64> {
        for (region, values) in &row.locals {
            let cont = self.layout.continuous_range(*region);
            let onehot = self.layout.onehot_range(*region);
            if cont.contains(&dim) {
                return Some(values[dim - cont.start]);
            }
            if onehot.contains(&dim) {
                return Some(values[cont.len() + (dim - onehot.start)]);
            }
        }
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightMode {
    SharedFit,
    LocalOnly,
    AggregateOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionWeight {
    pub w: f64,
    pub mode: WeightMode,
}

/// Per-dimension blend weights, aligned with the layout's dim order.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleWeights {
    pub layout: TargetLayout,
    pub dims: Vec<DimensionWeight>,
}

/// Weights are clamped here to bound inference blowup on degenerate dims.
const WEIGHT_CLAMP: f64 = 5.0;
/// Below this the least-squares denominator counts as degenerate.
const DEGENERATE_DENOM: f64 = 1e-12;

impl EnsembleWeights {
    /// Constant weight on every shared dimension; pass-through dims keep
    /// their modes.
    pub fn constant(template: &EnsembleWeights, w: f64) -> EnsembleWeights {
        let dims = template
            .dims
            .iter()
            .map(|d| match d.mode {
                WeightMode::SharedFit => DimensionWeight { w, mode: WeightMode::SharedFit },
                other => DimensionWeight { w: d.w, mode: other },
            })
            .collect();
        EnsembleWeights { layout: template.layout.clone(), dims }
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let map: BTreeMap<&str, &DimensionWeight> = self
            .layout
            .dim_names
            .iter()
            .map(String::as_str)
            .zip(self.dims.iter())
            .collect();
        let json = serde_json::to_string_pretty(&map)?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path, layout: &TargetLayout) -> Result<EnsembleWeights> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let map: BTreeMap<String, DimensionWeight> = serde_json::from_str(&text)?;
        let dims = layout
            .dim_names
            .iter()
            .map(|name| {
                map.get(name).copied().ok_or_else(|| {
                    Error::LayoutMismatch(format!("weights file lacks dimension {name}"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EnsembleWeights { layout: layout.clone(), dims })
    }
}

/// Run the aggregate model on full frames and each local model on its crop
/// for every record of `split`. One-hot slices are stored as softmax
/// probabilities so blending operates on comparable quantities.
pub fn collect_predictions(
    aggregate: &PredictorModel,
    locals: &BTreeMap<Region, PredictorModel>,
    manifest: &DatasetManifest,
    split: Split,
    layout: &TargetLayout,
) -> Result<PredictionTable> {
    let expected = &manifest.header.schema_fingerprint;
    for model in std::iter::once(aggregate).chain(locals.values()) {
        if &model.schema_fingerprint != expected {
            return Err(Error::FingerprintMismatch {
                found: model.schema_fingerprint.clone(),
                expected: expected.clone(),
            });
        }
    }
    let records: Vec<_> = manifest.records_in(split).collect();
    let rows: Result<Vec<PredictionRow>> = records
        .par_iter()
        .map(|record| {
            let frame = manifest.load_image(record)?;
            let agg = aggregate.predict_probs(&frame)?;
            let mut local_preds = BTreeMap::new();
            for (region, model) in locals {
                let crop = manifest.load_crop(record, *region)?;
                local_preds.insert(*region, model.predict_probs(&crop)?);
            }
            Ok(PredictionRow {
                id: record.id.clone(),
                aggregate: agg,
                locals: local_preds,
                target: record.target.clone(),
            })
        })
        .collect();
    if aggregate.output_width() != layout.total_len() {
        return Err(Error::LayoutMismatch(format!(
            "aggregate predicts {} dims, layout has {}",
            aggregate.output_width(),
            layout.total_len()
        )));
    }
    Ok(PredictionTable { layout: layout.clone(), rows: rows? })
}

/// Closed-form per-dimension solution of the blending objective:
/// w* = sum((t - g)(l - g)) / sum((l - g)^2), with the stated tie rule for
/// degenerate denominators.
pub fn fit_weights(table: &PredictionTable) -> Result<EnsembleWeights> {
    if table.rows.len() < 2 {
        return Err(Error::TableTooSmall { rows: table.rows.len(), min: 2 });
    }
    let total = table.layout.total_len();
    let mut dims = Vec::with_capacity(total);
    for dim in 0..total {
        let covered = table.local_value(&table.rows[0], dim).is_some();
        if !covered {
            dims.push(DimensionWeight { w: 0.0, mode: WeightMode::AggregateOnly });
            continue;
        }
        let mut num = 0.0;
        let mut denom = 0.0;
        for row in &table.rows {
            let l = table.local_value(row, dim).expect("covered dim");
            let g = row.aggregate[dim];
            let t = row.target[dim];
            num += (t - g) * (l - g);
            denom += (l - g) * (l - g);
        }
        let w = if denom < DEGENERATE_DENOM {
            0.5
        } else {
            let w = num / denom;
            if w.abs() > WEIGHT_CLAMP {
                log::warn!(
                    "clamping ensemble weight {w:.3} for {} to +/-{WEIGHT_CLAMP}",
                    table.layout.dim_names[dim]
                );
                w.clamp(-WEIGHT_CLAMP, WEIGHT_CLAMP)
            } else {
                w
            }
        };
        dims.push(DimensionWeight { w, mode: WeightMode::SharedFit });
    }
    Ok(EnsembleWeights { layout: table.layout.clone(), dims })
}

/// Per-dimension blend with no one-hot fix-up: exactly the quantity the
/// weight fit minimizes.
pub fn blend_raw(
    aggregate: &[f64],
    locals: &BTreeMap<Region, Vec<f64>>,
    weights: &EnsembleWeights,
) -> Result<Vec<f64>> {
    let layout = &weights.layout;
    if aggregate.len() != layout.total_len() {
        return Err(Error::LayoutMismatch(format!(
            "aggregate prediction has {} dims, layout expects {}",
            aggregate.len(),
            layout.total_len()
        )));
    }
    let mut out = aggregate.to_vec();
    for (region, local) in locals {
        let cont = layout.continuous_range(*region);
        let onehot = layout.onehot_range(*region);
        if local.len() != cont.len() + onehot.len() {
            return Err(Error::LayoutMismatch(format!(
                "local {region} prediction has {} dims, expected {}",
                local.len(),
                cont.len() + onehot.len()
            )));
        }
        for (offset, dim) in cont.clone().chain(onehot).enumerate() {
            let l = local[offset];
            let g = aggregate[dim];
            out[dim] = match weights.dims[dim].mode {
                WeightMode::SharedFit => {
                    let w = weights.dims[dim].w;
                    // Equal predictions pass through bit-exactly.
                    if l == g {
                        g
                    } else {
                        w * l + (1.0 - w) * g
                    }
                }
                WeightMode::LocalOnly => l,
                WeightMode::AggregateOnly => g,
            };
        }
    }
    Ok(out)
}

/// Blend one sample's predictions. One-hot slices are renormalized to sum 1
/// after blending, clipping negatives first; slices that are already valid
/// probability vectors pass through untouched.
pub fn combine(
    aggregate: &[f64],
    locals: &BTreeMap<Region, Vec<f64>>,
    weights: &EnsembleWeights,
) -> Result<Vec<f64>> {
    let layout = &weights.layout;
    let mut out = blend_raw(aggregate, locals, weights)?;
    for group in &layout.groups {
        if group.kind != SlotKind::OneHot {
            continue;
        }
        let slice = &mut out[group.range()];
        let needs_fix =
            slice.iter().any(|v| *v < 0.0) || (slice.iter().sum::<f64>() - 1.0).abs() > 1e-9;
        if needs_fix {
            for v in slice.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            let sum: f64 = slice.iter().sum();
            if sum <= 1e-12 {
                let uniform = 1.0 / slice.len() as f64;
                for v in slice.iter_mut() {
                    *v = uniform;
                }
            } else {
                for v in slice.iter_mut() {
                    *v /= sum;
                }
            }
        }
    }
    Ok(out)
}

/// Full inference pipeline on a novel full-frame image: optional domain
/// adapter, aggregate on the frame, locals on fixed nominal crop boxes from
/// the zero-recipe reference render, blend, then decode.
pub fn infer<A, L, F>(
    image: &Image,
    aggregate: &A,
    locals: &BTreeMap<Region, L>,
    weights: &EnsembleWeights,
    adapter: Option<&F>,
    schema: &FaceSchema,
) -> Result<(Recipe, TargetVector)>
where
    A: Predict,
    L: Predict,
    F: Fn(&Image) -> Image,
{
    let adapted = match adapter {
        Some(f) => f(image),
        None => image.clone(),
    };
    let agg = aggregate.predict_probs(&adapted)?;
    let boxes = nominal_crop_boxes(schema)?;
    let mut local_preds = BTreeMap::new();
    for (region, model) in locals {
        let crop = adapted.resample_rect(boxes[region], CROP_SIZE);
        local_preds.insert(*region, model.predict_probs(&crop)?);
    }
    let values = combine(&agg, &local_preds, weights)?;
    let vector = TargetVector { values, layout: weights.layout.clone() };
    let recipe = decode_target(&vector, schema)?;
    Ok((recipe, vector))
}
