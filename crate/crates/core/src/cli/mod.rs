//! Run configuration, dataset and result files, and the command-line front end.
//!
//! Exit codes: 0 success, 1 runtime or numerical failure, 2 invalid input,
//! 3 comparison above tolerance.

mod commands;
mod config;
mod files;

pub use commands::{
    cmd_bench, cmd_compare, cmd_oracle, cmd_reconstruct, cmd_simulate, main_with, BenchArgs, BenchRow,
    Cli, Command, CompareArgs, OracleArgs, ReconstructArgs, SimulateArgs,
};
pub use config::{
    load_config, parse_config, resolve_state, BenchSize, BenchSpec, ControlSpec, GridSpec, Layout,
    OutputPaths, RunConfig,
};
pub use files::{
    fmt_f64, read_dataset, read_json, write_atomic, write_dataset, write_json, DatasetManifest, DATA_FILE,
    MANIFEST_FILE,
};
