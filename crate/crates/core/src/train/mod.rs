//! Training: configuration, the adversarial loop, checkpoints, logs,
//! evaluation and multi-run studies.

pub mod config;
pub mod eval;
pub mod log;
pub mod model;
pub mod suites;
pub mod trainer;

pub use config::{apply_override, ArchSize, ExperimentConfig, FoldSpec, ModelKind, PhantomSet};
pub use eval::{evaluate_model, predict_image, write_predictions, Prediction, LR_VARIANT};
pub use log::{emit_curves, EpochRow, StepRow, TrainingLog, EPOCH_CSV, STEP_CSV};
pub use model::{Batch, GenModel};
pub use suites::{ablation_suite, loss_sweep, progressive_suite, sweep_configs, SuiteOutcome, SuiteRun, SweepRow};
pub use trainer::{load_generator, prepare_store, train, Trainer, CHECKPOINT, RESOLVED_CONFIG};
