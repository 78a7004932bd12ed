//! Hypergraph neural network: propagation operator, skip-connected layers,
//! focal loss, Adam and the training loop.

pub mod checkpoint;
pub mod gradcheck;
pub mod loss;
pub mod model;
pub mod operator;
pub mod optim;
pub mod train;

pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
pub use loss::{class_weights, focal_loss, softmax, FocalLoss};
pub use model::{layer_forward, Activation, Architecture, Gradients, HgnnModel, LayerParams, Mode};
pub use operator::{degrees, propagation_operator, DegreeData, PropagationOperator};
pub use optim::Adam;
pub use train::{train, EpochRecord, TrainConfig, TrainInput, TrainOutcome};
pub(crate) use train::argmax;
