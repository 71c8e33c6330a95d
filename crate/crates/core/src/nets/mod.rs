//! Small from-scratch predictors: trunk + per-group heads, the multi-part
//! loss, finite-difference gradient validation, and the SGD training loop
//! with frozen-trunk and full-training modes.

mod gradcheck;
mod layers;
mod loss;
mod model;
mod train;

pub use gradcheck::{
    analytic_gradients, backward_check, numeric_gradient, relative_error, sample_loss,
};
pub use layers::{ConvLayer, DenseLayer, Shape};
pub use loss::{
    loss_output_gradient, multipart_loss, softmax, GroupPart, LossParts, LossSpec, RegressionNorm,
};
pub use model::{
    default_aggregate_spec, default_local_spec, load_checkpoint, save_checkpoint, ForwardCache,
    Gradients, HeadSpec, LayerSpec, NetSpec, PredictorModel, Scope, SliceGroup, SliceMap,
    TrainMode,
};
pub use train::{train, EpochStats, TrainConfig, TrainData, TrainHistory, TrainSample};
