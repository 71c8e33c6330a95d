//! The trivial baseline: the coordinate-wise mean target vector over a
//! reference split, and the relative-inaccuracy metric reports are built on.

use serde::{Deserialize, Serialize};

use crate::datagen::Split;
use crate::error::{Error, Result};
use crate::facegen::{Region, TargetLayout};
use crate::harness::data::DatasetTensors;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselinePredictor {
    pub mean: Vec<f64>,
}

/// Coordinate-wise mean of the split's target vectors. The mean is computed,
/// not assumed zero, even though symmetric sampling centers it near zero.
pub fn baseline(tensors: &DatasetTensors, split: Split) -> Result<BaselinePredictor> {
    let data = tensors.split(split);
    if data.is_empty() {
        return Err(Error::EmptySplit(split.to_string()));
    }
    let width = tensors.layout.total_len();
    let mut mean = vec![0.0; width];
    for target in &data.targets {
        for (m, t) in mean.iter_mut().zip(target) {
            *m += t;
        }
    }
    for m in &mut mean {
        *m /= data.len() as f64;
    }
    Ok(BaselinePredictor { mean })
}

impl BaselinePredictor {
    /// Mean L1 of the baseline over a region's continuous dims on a split.
    pub fn region_l1(
        &self,
        tensors: &DatasetTensors,
        split: Split,
        layout: &TargetLayout,
        region: Region,
    ) -> f64 {
        let data = tensors.split(split);
        let range = layout.continuous_range(region);
        let mut total = 0.0;
        for target in &data.targets {
            for d in range.clone() {
                total += (self.mean[d] - target[d]).abs();
            }
        }
        total / (data.len() * range.len()) as f64
    }
}

/// Model loss minus baseline loss on the same split and dims; negative is
/// better than baseline.
pub fn inaccuracy_vs_baseline(model_loss: f64, baseline_loss: f64) -> f64 {
    model_loss - baseline_loss
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inaccuracy_is_a_plain_difference() {
        assert!((inaccuracy_vs_baseline(0.05, 0.12) + 0.07).abs() < 1e-15);
        assert_eq!(inaccuracy_vs_baseline(0.12, 0.12), 0.0);
        assert_eq!(inaccuracy_vs_baseline(0.0, 0.12), -0.12);
    }
}
