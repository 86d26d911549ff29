//! Experiment orchestration: configuration, the mapping loop, training,
//! comparisons and output files.

pub mod config;
pub mod episode;
pub mod experiment;
pub mod output;

pub use config::{Repack, SimConfig};
pub use episode::{run_episode, Environment, EpisodeOptions, EpisodeResult, Mapper};
pub use experiment::{compare, evaluate_rl, run_mapper, sweep, train, train_on, ComparisonReport, TrainResult};
pub use output::emit_heatmap;
