//! In-memory tensors for one dataset: stored 8-bit pixels decoded once and
//! shared across every training chain and evaluation pass.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;

use crate::datagen::{DatasetManifest, Split};
use crate::error::Result;
use crate::facegen::{Image, PixelRect, Region, TargetLayout, CROP_SIZE, FRAME_SIZE};
use crate::nets::{SliceMap, TrainSample};

#[derive(Debug, Clone)]
pub struct SplitTensors {
    pub ids: Vec<String>,
    pub frames: Vec<Arc<Vec<u8>>>,
    pub crops: BTreeMap<Region, Vec<Arc<Vec<u8>>>>,
    /// Full-layout target vectors.
    pub targets: Vec<Vec<f64>>,
    pub crop_boxes: Vec<BTreeMap<Region, PixelRect>>,
}

impl SplitTensors {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn frame_image(&self, index: usize) -> Image {
        Image::from_gray8(FRAME_SIZE, FRAME_SIZE, &self.frames[index])
    }
}

#[derive(Debug, Clone)]
pub struct DatasetTensors {
    pub layout: TargetLayout,
    pub fingerprint: String,
    pub train: SplitTensors,
    pub val: SplitTensors,
    pub eval: SplitTensors,
}

impl DatasetTensors {
    pub fn split(&self, split: Split) -> &SplitTensors {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Eval => &self.eval,
        }
    }
}

fn load_split(manifest: &DatasetManifest, split: Split) -> Result<SplitTensors> {
    let records: Vec<_> = manifest.records_in(split).collect();
    let decoded: Result<Vec<(Arc<Vec<u8>>, BTreeMap<Region, Arc<Vec<u8>>>)>> = records
        .par_iter()
        .map(|record| {
            let frame = manifest.load_image(record)?.to_gray8();
            let mut crops = BTreeMap::new();
            for region in Region::ALL {
                crops.insert(
                    region,
                    Arc::new(manifest.load_crop(record, region)?.to_gray8()),
                );
            }
            Ok((Arc::new(frame), crops))
        })
        .collect();
    let decoded = decoded?;
    let mut frames = Vec::with_capacity(records.len());
    let mut crops: BTreeMap<Region, Vec<Arc<Vec<u8>>>> =
        Region::ALL.iter().map(|r| (*r, Vec::new())).collect();
    for (frame, per_region) in decoded {
        frames.push(frame);
        for (region, crop) in per_region {
            crops.get_mut(&region).expect("region").push(crop);
        }
    }
    Ok(SplitTensors {
        ids: records.iter().map(|r| r.id.clone()).collect(),
        frames,
        crops,
        targets: records.iter().map(|r| r.target.clone()).collect(),
        crop_boxes: records.iter().map(|r| r.crop_boxes.clone()).collect(),
    })
}

/// Decode every stored PNG once. Training consumes the same 8-bit data the
/// dataset persists, so the pipeline sees exactly what is on disk.
pub fn load_tensors(manifest: &DatasetManifest, layout: &TargetLayout) -> Result<DatasetTensors> {
    Ok(DatasetTensors {
        layout: layout.clone(),
        fingerprint: manifest.header.schema_fingerprint.clone(),
        train: load_split(manifest, Split::Train)?,
        val: load_split(manifest, Split::Val)?,
        eval: load_split(manifest, Split::Eval)?,
    })
}

/// Which pixels a training chain consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputKind {
    FullFrame,
    Crop(Region),
}

impl InputKind {
    pub fn size(&self) -> usize {
        match self {
            InputKind::FullFrame => FRAME_SIZE,
            InputKind::Crop(_) => CROP_SIZE,
        }
    }
}

/// Materialize one split's samples for a given input kind and target slice.
pub fn split_samples(
    tensors: &SplitTensors,
    input: InputKind,
    slice_map: &SliceMap,
) -> Vec<TrainSample> {
    let pixels: &Vec<Arc<Vec<u8>>> = match input {
        InputKind::FullFrame => &tensors.frames,
        InputKind::Crop(region) => &tensors.crops[&region],
    };
    pixels
        .iter()
        .zip(&tensors.targets)
        .map(|(p, target)| TrainSample {
            pixels: Arc::clone(p),
            target: slice_map.extract(target),
        })
        .collect()
}
