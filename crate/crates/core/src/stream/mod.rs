//! Stream sources and the checkpointed experiment harness behind the CLI.

mod experiment;
mod generators;
mod input;

pub use experiment::{
    checkpoints, run_experiment, write_records, CheckpointSchedule, RunConfig, Source, Task, TrajectoryRecord,
};
pub use generators::{generate_stream, Generator, GeneratorSpec, StreamItem};
pub use input::{format_item, parse_input, parse_line, write_stream, ItemShape};
