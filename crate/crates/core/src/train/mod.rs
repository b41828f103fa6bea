//! Losses, best-mode selection, optimizers, and the training loop.

mod loss;
mod optimizer;
mod trainer;

pub use loss::{ade_loss, loss_and_raw_grad, select_best_mode, total_loss, LossConfig, LossKind};
pub use optimizer::{adam_delta, Optimizer, OptimizerKind};
pub use trainer::{
    evaluate_loss, prepare_training_set, train, write_history_csv, EpochStats, TrainConfig,
    TrainHistory, TrainingSet, SMOOTH_WINDOW,
};
