//! Simulation harness: environments, batched experiment execution, metrics,
//! search-space sweeps, and timing benchmarks.

mod config;
mod env;
mod runner;
mod sweep;
mod timing;

pub use config::{EnvSpec, ExperimentConfig, PolicyList, DEFAULT_P_HI, DEFAULT_P_LO};
pub use env::{
    aggregate_logs, bernoulli_feedback, fabricate_replay_log, Environment, ReplayEnv,
    SyntheticEnv,
};
pub use runner::{
    cumulative_regret, run_experiment, BatchRow, FnPolicyProvider, MetricsRecord, PolicyFactory,
    PolicyProvider, RepTrace, RunSettings, Summary, METRICS_CSV_HEADER,
};
pub use sweep::{sweep_search_space, write_sweep_csv, SweepConfig, SweepRow, SWEEP_CSV_HEADER};
pub use timing::{timing_benchmark, write_timing_csv, TimingRow, TIMING_CSV_HEADER};
