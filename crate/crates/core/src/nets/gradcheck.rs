//! Finite-difference validation of the hand-rolled training core.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nets::loss::{loss_output_gradient, multipart_loss, LossSpec};
use crate::nets::model::{Gradients, PredictorModel};

/// Relative-error denominator floor; below this scale the absolute error of
/// the central difference dominates.
const REL_FLOOR: f64 = 1e-3;

/// Loss of one sample under the current parameters.
pub fn sample_loss(
    model: &PredictorModel,
    pixels: &[f64],
    size: usize,
    target: &[f64],
    spec: &LossSpec,
) -> Result<f64> {
    let output = model.forward_pixels(pixels, size)?;
    Ok(multipart_loss(&output, target, &model.slice_map, spec)?.total)
}

/// Analytic parameter gradients of the multi-part loss for one sample.
pub fn analytic_gradients(
    model: &PredictorModel,
    pixels: &[f64],
    size: usize,
    target: &[f64],
    spec: &LossSpec,
) -> Result<(Gradients, f64)> {
    let cache = model.forward_cached(pixels, size)?;
    let parts = multipart_loss(&cache.output, target, &model.slice_map, spec)?;
    let d_output = loss_output_gradient(&cache.output, target, &model.slice_map, spec)?;
    Ok((model.backward(&cache, &d_output, true), parts.total))
}

/// Central finite difference of the loss over one flat parameter index.
pub fn numeric_gradient(
    model: &mut PredictorModel,
    pixels: &[f64],
    size: usize,
    target: &[f64],
    spec: &LossSpec,
    index: usize,
    epsilon: f64,
) -> Result<f64> {
    let original = model.get_param(index);
    model.set_param(index, original + epsilon);
    let plus = sample_loss(model, pixels, size, target, spec)?;
    model.set_param(index, original - epsilon);
    let minus = sample_loss(model, pixels, size, target, spec)?;
    model.set_param(index, original);
    Ok((plus - minus) / (2.0 * epsilon))
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compare analytic gradients against central finite differences on a random
/// parameter subset; returns the maximum relative error observed.
pub fn backward_check(
    model: &mut PredictorModel,
    pixels: &[f64],
    size: usize,
    target: &[f64],
    spec: &LossSpec,
    epsilon: f64,
) -> Result<f64> {
    if !(1e-6..=1e-3).contains(&epsilon) {
        return Err(Error::InvalidConfig(format!(
            "gradient-check epsilon {epsilon} outside [1e-6, 1e-3]"
        )));
    }
    let (grads, _) = analytic_gradients(model, pixels, size, target, spec)?;
    let count = model.param_count();
    let mut indices: Vec<usize> = (0..count).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0xF2F2);
    indices.shuffle(&mut rng);
    indices.truncate(48.min(count));
    let mut max_err: f64 = 0.0;
    for index in indices {
        let numeric = numeric_gradient(model, pixels, size, target, spec, index, epsilon)?;
        let analytic = grads.get(model, index);
        max_err = max_err.max(relative_error(analytic, numeric));
    }
    Ok(max_err)
}

#[cfg(test)]
mod tests {
    use rand::Rng;

    use super::*;
    use crate::facegen::SlotKind;
    use crate::nets::loss::RegressionNorm;
    use crate::nets::model::{
        HeadSpec, LayerSpec, NetSpec, PredictorModel, Scope, SliceGroup, SliceMap, TrainMode,
    };

    pub(crate) fn tiny_model(seed: u64, norm: RegressionNorm) -> (PredictorModel, LossSpec) {
        let slice_map = SliceMap {
            groups: vec![
                SliceGroup {
                    name: "cont".to_string(),
                    kind: SlotKind::Continuous,
                    local_start: 0,
                    layout_start: 0,
                    len: 3,
                },
                SliceGroup {
                    name: "disc".to_string(),
                    kind: SlotKind::OneHot,
                    local_start: 3,
                    layout_start: 3,
                    len: 3,
                },
            ],
        };
        let spec = NetSpec {
            input_size: 12,
            trunk: vec![
                LayerSpec::Conv { out_ch: 3, stride: 2 },
                LayerSpec::GlobalAvgPool,
                LayerSpec::Dense { units: 8 },
            ],
            heads: vec![
                HeadSpec { group: "cont".to_string(), width: 3, kind: SlotKind::Continuous },
                HeadSpec { group: "disc".to_string(), width: 3, kind: SlotKind::OneHot },
            ],
        };
        let model = PredictorModel::init(
            spec,
            Scope::Aggregate,
            TrainMode::FullTraining,
            slice_map,
            "test",
            seed,
        )
        .unwrap();
        let loss = LossSpec { norm, ..LossSpec::default() };
        (model, loss)
    }

    pub(crate) fn random_sample(seed: u64, size: usize, width: usize) -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pixels: Vec<f64> = (0..size * size).map(|_| rng.random_range(0.0..1.0)).collect();
        let mut target: Vec<f64> = (0..width).map(|_| rng.random_range(-0.9..0.9)).collect();
        // One-hot tail (the tiny model puts its discrete group last).
        for v in target.iter_mut().rev().take(3) {
            *v = 0.0;
        }
        let true_class = rng.random_range(0..3usize);
        let n = target.len();
        target[n - 3 + true_class] = 1.0;
        (pixels, target)
    }

    #[test]
    fn analytic_matches_numeric_on_tiny_nets() {
        for seed in 0..4u64 {
            let norm = if seed % 2 == 0 { RegressionNorm::L2 } else { RegressionNorm::L1 };
            let (mut model, loss) = tiny_model(seed, norm);
            let (pixels, target) = random_sample(seed + 100, 12, model.output_width());
            let err = backward_check(&mut model, &pixels, 12, &target, &loss, 1e-4).unwrap();
            assert!(err < 1e-4, "seed {seed}: max relative error {err}");
        }
    }

    #[test]
    fn zero_loss_point_has_vanishing_gradients() {
        let (mut model, loss) = tiny_model(9, RegressionNorm::L2);
        let (pixels, _) = random_sample(7, 12, model.output_width());
        // Make the target equal the prediction on the continuous part; the
        // discrete part cannot reach exactly zero loss with finite logits, so
        // weigh it out.
        let output = model.forward_pixels(&pixels, 12).unwrap();
        let mut target = output.clone();
        target[3] = 1.0;
        target[4] = 0.0;
        target[5] = 0.0;
        let mut spec = loss;
        spec.classification_weights.insert("disc".to_string(), 0.0);
        let (grads, total) = analytic_gradients(&model, &pixels, 12, &target, &spec).unwrap();
        assert!(total.abs() < 1e-12);
        for index in 0..model.param_count() {
            assert!(grads.get(&model, index).abs() < 1e-12);
            let numeric =
                numeric_gradient(&mut model, &pixels, 12, &target, &spec, index, 1e-4).unwrap();
            assert!(numeric.abs() < 1e-4);
        }
    }

    #[test]
    fn corrupted_gradient_is_detected() {
        let (mut model, loss) = tiny_model(11, RegressionNorm::L2);
        let (pixels, target) = random_sample(13, 12, model.output_width());
        let (grads, _) = analytic_gradients(&model, &pixels, 12, &target, &loss).unwrap();
        // Pick a parameter with a meaningful gradient, corrupt the analytic
        // value by 10%, and confirm the check would flag it.
        let index = (0..model.param_count())
            .max_by(|a, b| {
                grads
                    .get(&model, *a)
                    .abs()
                    .partial_cmp(&grads.get(&model, *b).abs())
                    .unwrap()
            })
            .unwrap();
        let analytic = grads.get(&model, index);
        assert!(analytic.abs() > 1e-4);
        let numeric =
            numeric_gradient(&mut model, &pixels, 12, &target, &loss, index, 1e-4).unwrap();
        let honest = relative_error(analytic, numeric);
        let corrupted = relative_error(analytic * 1.1, numeric);
        assert!(honest < 1e-4);
        assert!(corrupted > 5e-2, "corruption slipped through: {corrupted}");
    }

    #[test]
    fn epsilon_bounds_enforced() {
        let (mut model, loss) = tiny_model(1, RegressionNorm::L2);
        let (pixels, target) = random_sample(2, 12, model.output_width());
        assert!(backward_check(&mut model, &pixels, 12, &target, &loss, 1e-2).is_err());
        assert!(backward_check(&mut model, &pixels, 12, &target, &loss, 1e-7).is_err());
    }
}
