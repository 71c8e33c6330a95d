//! Domain-gap evaluation: ensemble parameter-space error on original
//! renders, styled renders, and adapter-recovered styled renders.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain_adapt::{adapt, apply_style, fit_adapter, AdapterParams, StyleParams};
use crate::ensemble::{combine, EnsembleWeights, Predict};
use crate::error::Result;
use crate::facegen::{Image, Region, CROP_SIZE};
use crate::harness::data::{DatasetTensors, SplitTensors};
use crate::harness::metrics::{accuracy_full, continuous_l1_full, region_l1_full};
use crate::nets::PredictorModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainGapRow {
    pub condition: String,
    pub overall_l1: f64,
    pub per_region_l1: BTreeMap<Region, f64>,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainGapSection {
    pub style_name: String,
    pub style: StyleParams,
    pub rows: Vec<DomainGapRow>,
    /// styled minus adapted, overall and per region; positive means the
    /// adapter recovered accuracy.
    pub adaptation_gain_overall: f64,
    pub adaptation_gain_per_region: BTreeMap<Region, f64>,
}

impl DomainGapSection {
    pub fn row(&self, condition: &str) -> Option<&DomainGapRow> {
        self.rows.iter().find(|r| r.condition == condition)
    }
}

/// Per-record style seed: deterministic in (base seed, record index).
pub fn style_seed_for(base: u64, index: usize) -> u64 {
    (base ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)).wrapping_add(0x1234_5678)
}

/// Unpaired fitting corpora drawn from the training split: the first half
/// stays synthetic, the second half gets styled. No image appears on both
/// sides and no pairing is used.
pub fn fit_adapter_for_style(
    tensors: &DatasetTensors,
    style: &StyleParams,
    style_seed: u64,
) -> Result<AdapterParams> {
    let train = &tensors.train;
    let half = train.len() / 2;
    let synthetic: Vec<Image> = (0..half).map(|i| train.frame_image(i)).collect();
    let styled: Vec<Image> = (half..train.len())
        .into_par_iter()
        .map(|i| apply_style(&train.frame_image(i), style, style_seed_for(style_seed, i)))
        .collect();
    fit_adapter(&styled, &synthetic)
}

fn ensemble_predict(
    frame: &Image,
    boxes: &BTreeMap<Region, crate::facegen::PixelRect>,
    aggregate: &PredictorModel,
    locals: &BTreeMap<Region, PredictorModel>,
    weights: &EnsembleWeights,
) -> Result<Vec<f64>> {
    let agg = aggregate.predict_probs(frame)?;
    let mut local_preds = BTreeMap::new();
    for (region, model) in locals {
        let crop = frame.resample_rect(boxes[region], CROP_SIZE);
        local_preds.insert(*region, model.predict_probs(&crop)?);
    }
    combine(&agg, &local_preds, weights)
}

fn condition_metrics(
    predictions: &[Vec<f64>],
    eval: &SplitTensors,
    tensors: &DatasetTensors,
    condition: &str,
) -> DomainGapRow {
    let layout = &tensors.layout;
    let per_region_l1 = Region::ALL
        .iter()
        .map(|r| (*r, region_l1_full(predictions, &eval.targets, layout, *r)))
        .collect();
    DomainGapRow {
        condition: condition.to_string(),
        overall_l1: continuous_l1_full(predictions, &eval.targets, layout),
        per_region_l1,
        accuracy: accuracy_full(predictions, &eval.targets, layout),
    }
}

/// Evaluate the ensemble on the evaluation split under three conditions:
/// original renders, styled renders, and adapted styled renders. Crops are
/// taken from each condition's frame with the record's stored crop boxes.
pub fn domain_gap_eval(
    aggregate: &PredictorModel,
    locals: &BTreeMap<Region, PredictorModel>,
    weights: &EnsembleWeights,
    adapter: &AdapterParams,
    style_name: &str,
    style: &StyleParams,
    tensors: &DatasetTensors,
    style_seed: u64,
) -> Result<DomainGapSection> {
    let eval = &tensors.eval;
    let per_record: Result<Vec<(Vec<f64>, Vec<f64>, Vec<f64>)>> = (0..eval.len())
        .into_par_iter()
        .map(|i| {
            let frame = eval.frame_image(i);
            let boxes = &eval.crop_boxes[i];
            let styled = apply_style(&frame, style, style_seed_for(style_seed, i));
            let adapted = adapt(&styled, adapter);
            Ok((
                ensemble_predict(&frame, boxes, aggregate, locals, weights)?,
                ensemble_predict(&styled, boxes, aggregate, locals, weights)?,
                ensemble_predict(&adapted, boxes, aggregate, locals, weights)?,
            ))
        })
        .collect();
    let per_record = per_record?;
    let originals: Vec<Vec<f64>> = per_record.iter().map(|r| r.0.clone()).collect();
    let styleds: Vec<Vec<f64>> = per_record.iter().map(|r| r.1.clone()).collect();
    let adapteds: Vec<Vec<f64>> = per_record.iter().map(|r| r.2.clone()).collect();

    let rows = vec![
        condition_metrics(&originals, eval, tensors, "original"),
        condition_metrics(&styleds, eval, tensors, "styled"),
        condition_metrics(&adapteds, eval, tensors, "adapted"),
    ];
    let gain_overall = rows[1].overall_l1 - rows[2].overall_l1;
    let gain_per_region = Region::ALL
        .iter()
        .map(|r| (*r, rows[1].per_region_l1[r] - rows[2].per_region_l1[r]))
        .collect();
    Ok(DomainGapSection {
        style_name: style_name.to_string(),
        style: style.clone(),
        rows,
        adaptation_gain_overall: gain_overall,
        adaptation_gain_per_region: gain_per_region,
    })
}
