//! Reproducible experiments: configuration, episode runner, metrics and
//! the commands behind the `highway-lab` binary.

pub mod commands;
pub mod config;
pub mod episode;
pub mod metrics;

pub use commands::{
    dp_compare, evaluate, format_flow_table, format_table, load_network, matched_world, plan, run_dp_compare, run_eval,
    run_plot_data, run_traffic_flow, run_train, speed_profile, traffic_flow, FlowResult, FlowRow, PolicyKind,
    SpeedProfileRow, TrainReport,
};
pub use config::{ExperimentConfig, FlowConfig};
pub use episode::{run_scenario, GreedyPolicy, Observation, Policy, RandomPolicy, ReplayPolicy, RunOptions};
pub use metrics::{
    aggregate, compute_metrics, read_metrics_csv, scenario_metrics, write_metrics_csv, Metrics, ScenarioLog,
    ScenarioMetrics, Setting, StepRecord, METRICS_SCHEMA,
};
