//! Trainable noise-prediction network.

pub mod checkpoint;
pub mod mlp;
pub mod train;

pub use checkpoint::{load_model, model_from_bytes, model_to_bytes, save_model};
pub use mlp::{to_epsilon, Activation, Batch, MLPConfig, MLPModel, SigmaEmbedding, Target};
pub use train::{draw_batch, train, TrainConfig, TrainOutcome};
