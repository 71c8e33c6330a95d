//! Minibatch SGD with a plateau learning-rate schedule. Frozen-trunk runs
//! cache trunk features once and train only the heads; full-training runs
//! backpropagate through the whole net. Both are deterministic given
//! (corpus, config, seed).

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nets::loss::{loss_output_gradient, multipart_loss, LossSpec};
use crate::nets::model::{Gradients, PredictorModel, TrainMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Learning-rate multiplier applied after a patience window without
    /// validation improvement.
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    /// Stop after this many consecutive decays without improvement.
    pub max_plateau_decays: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 32,
            learning_rate: 0.2,
            plateau_factor: 0.5,
            plateau_patience: 3,
            max_plateau_decays: 3,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig("epochs and batch size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning rate must be positive".into()));
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return Err(Error::InvalidConfig("plateau factor must be in (0, 1)".into()));
        }
        if self.plateau_patience == 0 {
            return Err(Error::InvalidConfig("plateau patience must be >= 1".into()));
        }
        Ok(())
    }
}

/// One training example: stored 8-bit pixels and the model-local target.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub pixels: Arc<Vec<u8>>,
    pub target: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainData {
    pub input_size: usize,
    pub train: Vec<TrainSample>,
    pub val: Vec<TrainSample>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_total: f64,
    pub val_total: f64,
    pub train_parts: Vec<(String, f64)>,
    pub val_parts: Vec<(String, f64)>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

impl TrainHistory {
    pub fn final_val(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.val_total)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if let Some(first) = self.epochs.first() {
            out.push_str("epoch,learning_rate,train_total,val_total");
            for (name, _) in &first.train_parts {
                out.push_str(&format!(",train_{name},val_{name}"));
            }
            out.push('\n');
        }
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{}",
                e.epoch, e.learning_rate, e.train_total, e.val_total
            ));
            for ((_, tv), (_, vv)) in e.train_parts.iter().zip(&e.val_parts) {
                out.push_str(&format!(",{tv},{vv}"));
            }
            out.push('\n');
        }
        out
    }
}

fn to_f64(pixels: &[u8]) -> Vec<f64> {
    pixels.iter().map(|b| f64::from(*b) / 255.0).collect()
}

struct PartAccumulator {
    names: Vec<String>,
    sums: Vec<f64>,
    total: f64,
    count: usize,
}

impl PartAccumulator {
    fn new(model: &PredictorModel) -> Self {
        PartAccumulator {
            names: model.slice_map.groups.iter().map(|g| g.name.clone()).collect(),
            sums: vec![0.0; model.slice_map.groups.len()],
            total: 0.0,
            count: 0,
        }
    }

    fn add(&mut self, total: f64, raws: &[f64]) {
        self.total += total;
        for (s, r) in self.sums.iter_mut().zip(raws) {
            *s += r;
        }
        self.count += 1;
    }

    fn mean_total(&self) -> f64 {
        self.total / self.count.max(1) as f64
    }

    fn mean_parts(&self) -> Vec<(String, f64)> {
        self.names
            .iter()
            .cloned()
            .zip(self.sums.iter().map(|s| *s / self.count.max(1) as f64))
            .collect()
    }
}

enum Inputs {
    /// Raw pixel tensors for full backprop.
    Pixels,
    /// Cached trunk features per sample, train then val.
    Features(Vec<Vec<f64>>, Vec<Vec<f64>>),
}

/// Train in place; returns the per-epoch history. Frozen-trunk mode never
/// touches trunk parameters.
pub fn train(
    model: &mut PredictorModel,
    data: &TrainData,
    loss: &LossSpec,
    cfg: &TrainConfig,
) -> Result<TrainHistory> {
    cfg.validate()?;
    loss.validate()?;
    if data.train.is_empty() {
        return Err(Error::EmptySplit("train".into()));
    }
    if data.val.is_empty() {
        return Err(Error::EmptySplit("val".into()));
    }
    let size = data.input_size;

    let inputs = match model.mode {
        TrainMode::FrozenTrunk => {
            let features = |samples: &[TrainSample]| -> Result<Vec<Vec<f64>>> {
                samples
                    .par_iter()
                    .map(|s| model.trunk_features(&to_f64(&s.pixels), size))
                    .collect()
            };
            Inputs::Features(features(&data.train)?, features(&data.val)?)
        }
        TrainMode::FullTraining => Inputs::Pixels,
    };

    let mut history = TrainHistory::default();
    let mut lr = cfg.learning_rate;
    let mut best_val = f64::INFINITY;
    let mut epochs_since_improvement = 0usize;
    let mut decays_since_improvement = 0usize;

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..data.train.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64 + 1);
        order.shuffle(&mut rng);

        let mut train_acc = PartAccumulator::new(model);
        for batch in order.chunks(cfg.batch_size) {
            // Per-sample gradients in parallel, reduced in batch order so the
            // result is independent of worker scheduling.
            let results: Result<Vec<(Gradients, f64, Vec<f64>)>> = batch
                .par_iter()
                .map(|&i| {
                    let sample = &data.train[i];
                    match &inputs {
                        Inputs::Pixels => {
                            let pixels = to_f64(&sample.pixels);
                            let cache = model.forward_cached(&pixels, size)?;
                            let parts =
                                multipart_loss(&cache.output, &sample.target, &model.slice_map, loss)?;
                            let d_out = loss_output_gradient(
                                &cache.output,
                                &sample.target,
                                &model.slice_map,
                                loss,
                            )?;
                            let grads = model.backward(&cache, &d_out, true);
                            Ok((grads, parts.total, parts.parts.iter().map(|p| p.raw).collect()))
                        }
                        Inputs::Features(train_feats, _) => {
                            let features = &train_feats[i];
                            let output = model.forward_heads(features);
                            let parts =
                                multipart_loss(&output, &sample.target, &model.slice_map, loss)?;
                            let d_out = loss_output_gradient(
                                &output,
                                &sample.target,
                                &model.slice_map,
                                loss,
                            )?;
                            let (heads, _) = model.backward_heads(features, &output, &d_out);
                            Ok((
                                Gradients { trunk: Vec::new(), heads },
                                parts.total,
                                parts.parts.iter().map(|p| p.raw).collect(),
                            ))
                        }
                    }
                })
                .collect();
            let results = results?;
            let include_trunk = matches!(inputs, Inputs::Pixels);
            let mut batch_grads = Gradients::zeros_like(model, include_trunk);
            let scale = 1.0 / batch.len() as f64;
            for (grads, total, raws) in &results {
                if !total.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        epoch,
                        detail: format!("sample loss {total}"),
                    });
                }
                batch_grads.add_scaled(grads, scale);
                train_acc.add(*total, raws);
            }
            model.apply_step(&batch_grads, lr);
        }

        let val_losses: Result<Vec<(f64, Vec<f64>)>> = match &inputs {
            Inputs::Pixels => data
                .val
                .par_iter()
                .map(|s| {
                    let output = model.forward_pixels(&to_f64(&s.pixels), size)?;
                    let parts = multipart_loss(&output, &s.target, &model.slice_map, loss)?;
                    Ok((parts.total, parts.parts.iter().map(|p| p.raw).collect()))
                })
                .collect(),
            Inputs::Features(_, val_feats) => data
                .val
                .par_iter()
                .zip(val_feats.par_iter())
                .map(|(s, features)| {
                    let output = model.forward_heads(features);
                    let parts = multipart_loss(&output, &s.target, &model.slice_map, loss)?;
                    Ok((parts.total, parts.parts.iter().map(|p| p.raw).collect()))
                })
                .collect(),
        };
        let mut val_acc = PartAccumulator::new(model);
        for (total, raws) in val_losses? {
            if !total.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    detail: format!("validation loss {total}"),
                });
            }
            val_acc.add(total, &raws);
        }
        let val_total = val_acc.mean_total();

        history.epochs.push(EpochStats {
            epoch,
            learning_rate: lr,
            train_total: train_acc.mean_total(),
            val_total,
            train_parts: train_acc.mean_parts(),
            val_parts: val_acc.mean_parts(),
        });

        if val_total < best_val - 1e-12 {
            best_val = val_total;
            epochs_since_improvement = 0;
            decays_since_improvement = 0;
        } else {
            epochs_since_improvement += 1;
            if epochs_since_improvement >= cfg.plateau_patience {
                lr *= cfg.plateau_factor;
                epochs_since_improvement = 0;
                decays_since_improvement += 1;
                if decays_since_improvement >= cfg.max_plateau_decays {
                    break;
                }
            }
        }
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use rand::Rng;

    use super::*;
    use crate::facegen::{default_schema, SlotKind, TargetLayout};
    use crate::nets::model::{default_local_spec, PredictorModel, Scope, SliceMap};
    use crate::facegen::Region;

    fn tiny_corpus(seed: u64, n: usize, size: usize, width: usize) -> Vec<TrainSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let pixels: Vec<u8> = (0..size * size).map(|_| rng.random::<u8>()).collect();
                let mut target: Vec<f64> =
                    (0..width).map(|_| rng.random_range(-0.8..0.8)).collect();
                for v in target.iter_mut().skip(width - 3) {
                    *v = 0.0;
                }
                let class = rng.random_range(0..3usize);
                target[width - 3 + class] = 1.0;
                TrainSample { pixels: Arc::new(pixels), target }
            })
            .collect()
    }

    fn local_model(mode: TrainMode, seed: u64) -> PredictorModel {
        let schema = default_schema();
        let layout = TargetLayout::from_schema(&schema);
        let spec = default_local_spec(&layout, Region::Nose, 24);
        PredictorModel::init(
            spec,
            Scope::Local(Region::Nose),
            mode,
            SliceMap::local(&layout, Region::Nose),
            &schema.fingerprint(),
            seed,
        )
        .unwrap()
    }

    fn quick_config(epochs: usize) -> TrainConfig {
        TrainConfig { epochs, batch_size: 4, learning_rate: 0.1, ..TrainConfig::default() }
    }

    #[test]
    fn frozen_trunk_never_moves_trunk_params() {
        let mut model = local_model(TrainMode::FrozenTrunk, 5);
        let before = model.trunk_param_snapshot();
        let data = TrainData {
            input_size: 24,
            train: tiny_corpus(1, 12, 24, model.output_width()),
            val: tiny_corpus(2, 4, 24, model.output_width()),
        };
        train(&mut model, &data, &LossSpec::default(), &quick_config(5)).unwrap();
        assert_eq!(model.trunk_param_snapshot(), before);
    }

    #[test]
    fn training_reduces_loss_on_tiny_corpus() {
        let mut model = local_model(TrainMode::FullTraining, 6);
        let data = TrainData {
            input_size: 24,
            train: tiny_corpus(3, 10, 24, model.output_width()),
            val: tiny_corpus(4, 4, 24, model.output_width()),
        };
        let history = train(
            &mut model,
            &data,
            &LossSpec::default(),
            &TrainConfig {
                epochs: 60,
                batch_size: 10,
                learning_rate: 0.3,
                plateau_patience: 20,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        let first = history.epochs.first().unwrap().train_total;
        let last = history.epochs.last().unwrap().train_total;
        assert!(last < first, "loss did not drop: {first} -> {last}");
    }

    #[test]
    fn training_is_deterministic() {
        let data = TrainData {
            input_size: 24,
            train: tiny_corpus(7, 16, 24, 7),
            val: tiny_corpus(8, 6, 24, 7),
        };
        let mut a = local_model(TrainMode::FullTraining, 9);
        let mut b = local_model(TrainMode::FullTraining, 9);
        let ha = train(&mut a, &data, &LossSpec::default(), &quick_config(4)).unwrap();
        let hb = train(&mut b, &data, &LossSpec::default(), &quick_config(4)).unwrap();
        assert_eq!(a.flat_params(), b.flat_params());
        assert_eq!(
            ha.epochs.last().unwrap().val_total,
            hb.epochs.last().unwrap().val_total
        );
    }

    #[test]
    fn empty_split_is_rejected() {
        let mut model = local_model(TrainMode::FullTraining, 10);
        let data = TrainData { input_size: 24, train: Vec::new(), val: tiny_corpus(1, 2, 24, 7) };
        assert!(matches!(
            train(&mut model, &data, &LossSpec::default(), &quick_config(1)),
            Err(Error::EmptySplit(_))
        ));
    }

    #[test]
    fn history_csv_has_header_and_rows() {
        let mut model = local_model(TrainMode::FrozenTrunk, 11);
        let data = TrainData {
            input_size: 24,
            train: tiny_corpus(12, 8, 24, model.output_width()),
            val: tiny_corpus(13, 4, 24, model.output_width()),
        };
        let history = train(&mut model, &data, &LossSpec::default(), &quick_config(3)).unwrap();
        let csv = history.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert!(lines[0].starts_with("epoch,learning_rate,train_total,val_total"));
        assert_eq!(lines.len(), history.epochs.len() + 1);
        let schema = default_schema();
        let layout = TargetLayout::from_schema(&schema);
        let _ = layout.groups.iter().filter(|g| g.kind == SlotKind::OneHot);
    }
}
