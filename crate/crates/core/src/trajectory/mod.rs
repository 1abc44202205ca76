//! Trajectory feature extractor: a single-layer LSTM that reads 10 observed
//! points, rolls out 10 predicted points through a linear `hidden → (x, y)`
//! head, and whose last hidden state is the 64-dimensional trajectory
//! feature.

mod io;
mod lstm;
mod train;

pub use io::{
    extract_block, load_trajectories, write_trajectory_block, SceneBounds, TrajectorySample,
    OBSERVED, TOTAL_POINTS,
};
pub use lstm::{LstmTrace, TrajectoryModel, DEFAULT_HIDDEN};
pub use train::{constant_velocity_trajectories, train_trajectory, TrajectoryTrainConfig, TrajectoryTraining};
