//! The U-net voxel predictor: tensors, layers, the single-view and updater
//! architectures, the loss, Adam and the training loops.

mod adam;
mod checkpoint;
mod layers;
mod model;
mod tensor;
mod train;

pub use layers::*;
pub use model::{drawings_to_tensor, frustums_to_tensor, DecoderLayerSpec, Grads, Network, NetworkSpec, Param, Tape};
pub use tensor::{col2im, im2col, matmul, Real, Tensor};
pub use adam::{adam_update, Adam, TrainingConfig};
pub use train::{
    train, train_single_view, train_updater, voxel_accuracy, CheckpointPolicy, Example, ExampleSource, LossCurve,
    SingleViewPool, UpdaterPool,
};

#[cfg(test)]
mod tests;
