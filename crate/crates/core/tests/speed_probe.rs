use std::sync::Arc;
use std::time::Instant;

use f2p_core::facegen::{default_schema, TargetLayout, FRAME_SIZE};
use f2p_core::nets::{
    default_aggregate_spec, train, LossSpec, PredictorModel, Scope, SliceMap, TrainConfig,
    TrainData, TrainMode, TrainSample,
};

#[test]
#[ignore]
fn probe_epoch_speed() {
    let schema = default_schema();
    let layout = TargetLayout::from_schema(&schema);
    let spec = default_aggregate_spec(&layout, FRAME_SIZE);
    let slice = SliceMap::aggregate(&layout);
    let mut model = PredictorModel::init(
        spec,
        Scope::Aggregate,
        TrainMode::FullTraining,
        slice.clone(),
        &schema.fingerprint(),
        1,
    )
    .unwrap();
    let n = 1000;
    let samples: Vec<TrainSample> = (0..n)
        .map(|i| {
            let pixels: Vec<u8> = (0..FRAME_SIZE * FRAME_SIZE)
                .map(|p| ((p * 31 + i * 7) % 251) as u8)
                .collect();
            let mut target = vec![0.1; slice.width()];
            target[15] = 1.0;
            target[18] = 1.0;
            target[21] = 1.0;
            TrainSample { pixels: Arc::new(pixels), target }
        })
        .collect();
    let data = TrainData {
        input_size: FRAME_SIZE,
        train: samples.clone(),
        val: samples[..100].to_vec(),
    };
    let cfg = TrainConfig { epochs: 2, ..TrainConfig::default() };
    let start = Instant::now();
    train(&mut model, &data, &LossSpec::default(), &cfg).unwrap();
    let secs = start.elapsed().as_secs_f64();
    println!(
        "full-training: {:.2} s per epoch of {n} frames ({:.1} s for 4000)",
        secs / 2.0,
        secs / 2.0 * 4.0
    );

    let mut frozen = PredictorModel::init(
        default_aggregate_spec(&layout, FRAME_SIZE),
        Scope::Aggregate,
        TrainMode::FrozenTrunk,
        slice,
        &schema.fingerprint(),
        1,
    )
    .unwrap();
    let start = Instant::now();
    train(&mut frozen, &data, &LossSpec::default(), &cfg).unwrap();
    println!("frozen-trunk: {:.2} s total (2 epochs, incl. feature cache)", start.elapsed().as_secs_f64());
}
