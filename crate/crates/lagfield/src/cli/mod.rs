//! Configuration handling and command implementations for the `lagfield`
//! binary.
//!
//! Every command is deterministic: all sampling is quasi-random (Halton) and
//! seedless, so identical configurations produce byte-identical CSV output.

mod commands;
mod config;

pub use commands::{
    cmd_convergence, cmd_filldistance, cmd_observe, cmd_train, cmd_trajectory, cmd_uq_grid,
    convergence_rows, filldistance_rows, load_model, reference_discrete_flow, ConvergenceRow,
    FillDistanceRow, GridObservable, SliceSpec, TrainReport,
};
pub use config::{ConfigKind, ExperimentConfig};
