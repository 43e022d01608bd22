//! Composite objectives, optimization, and the training loop.

mod adam;
mod config;
mod objective;
mod sweep;
mod train;

pub use adam::{adam_step, AdamState};
pub use config::{Mode, TrainConfig};
pub use objective::{
    composite_objective, objective_from_clean, GraphTerm, ObjectiveInputs, ObjectiveTerms, VirtualTerm,
};
pub use sweep::{sweep, write_sweep_csv, GridSpec, SweepRow};
pub use train::{instrumented_epoch, train, EpochRecord, Evaluation, StepLosses, TrainHistory, TrainOutcome, Trainer};
