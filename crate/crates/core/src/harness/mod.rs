//! Experiment configuration, orchestration and persistence.

pub mod config;
pub mod experiment;

pub use config::{
    load_config, load_config_file, AlgorithmName, AlgorithmSpec, ExperimentConfig, LogisticSpec,
    FullBatch, HelperBatch, ParamsMode, ProblemSpec, SCHEMA_VERSION,
};
pub use experiment::{
    aggregate, build_problem, check, params_report, resolve, run_experiment, run_sweep,
    set_json_path, theory_params, CheckReport, ExperimentOutcome, Problem, Resolved, SweepRow,
    SWEEP_HEADER,
};
