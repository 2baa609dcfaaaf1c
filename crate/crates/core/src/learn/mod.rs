//! Contrastive representation learning: layers, losses, the joint
//! temporal/multimodal objective, the optimizer, and the training loop.

pub mod checkpoint;
pub mod loss;
pub mod model;
pub mod nn;
pub mod optim;
pub mod scalar;
pub mod train;

pub use model::{Batch, LossParts, ModelConfig, ModelParams};
pub use optim::{AdamW, OptimConfig};
pub use scalar::Scalar;
pub use train::{train, TraceRow, TrainConfig, TrainMode, TrainOutcome, TrainSet};
