//! Experiment orchestration behind the command-line tool: configuration, checkpoints,
//! training, evaluation, the level/fusion ablation grid and triptych export.

pub mod ablation;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod eval;
pub mod train;
pub mod triptych;

pub use ablation::{cell_config, cell_seed, full_grid, run_ablation};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, load_checkpoint_expecting, save_checkpoint, Checkpoint,
    CheckpointMeta,
};
pub use config::{DataSettings, ModelRunConfig, Profile, RunConfig, TrainingSettings};
pub use data::{load_dataset, Dataset, Pair};
pub use eval::{evaluate_model, INPUT_TAG, PREDICTION_TAG};
pub use train::{mean_psnr, model_seed, run_training, run_training_on, LogRow, TrainingOutcome};
pub use triptych::{export_triptych, render_triptych, GUTTER};
