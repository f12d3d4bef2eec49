//! Surrogate-gradient BPTT, the composite loss, Adam and the epoch loop.

mod adam;
mod backward;
mod gradcheck;
mod loss;
mod trainer;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use backward::{backward, BackwardOutput, Gradients};
pub use gradcheck::{gradcheck, numeric_gradients, GradRegime, GradientReport, GroupCheck};
pub use loss::{
    cross_entropy, firing_stats, hidden_stats, total_loss, variance_loss, FiringStats, LossBreakdown, LossConfig,
};
pub use trainer::{
    evaluate, train_task, EpochRecord, EvalResult, EvalSet, NoObserver, TrainConfig, TrainObserver, TrainRecord,
};
