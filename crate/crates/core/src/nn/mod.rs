//! A small differentiable-network kit: dense tensors, a fixed layer set
//! composed as a DAG with named inputs, binary cross-entropy training with
//! Adam, gradient checking, checkpoints, truncation and freezing.

mod adam;
mod checkpoint;
mod gradcheck;
mod layer;
mod network;
mod tensor;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{LayerEntry, Manifest, ParamEntry, CHECKPOINT_MAGIC};
pub use gradcheck::{check_gradients, GradCheckConfig, GradCheckReport};
pub use layer::{sigmoid, Activation, Layer};
pub use network::{Gradients, InputPort, Inputs, Mode, Network, Node, Parameter, Source};
pub use tensor::Tensor;
pub use train::{accuracy, predict, train, Dataset, TrainConfig, TrainReport};
