// Copyright 2026 The rsgrape Authors
// SPDX-License-Identifier: Apache-2.0

//! Experiment front end: configs, artifact files and the four commands
//! behind the `rsgrape` binary.

mod commands;
mod config;
mod files;

pub use commands::{
    evaluate, optimize, report, scan, CliError, CommandOptions, EvaluationReport, Manifest, OutputFile,
    ReportSummary, ScanReport, TrainingSummary, EXIT_CONFIG, EXIT_IO, EXIT_NUMERICAL, OUT_DIR_ENV,
};
pub use config::{
    ConfigError, ControlSection, DriftSpec, EvaluationSection, ExperimentConfig, LossSection, OptimizerSection,
    Resolved, SystemSection, TargetSection, PRESET_THREE_QUBIT,
};
pub use files::{
    format_schedule, parse_schedule, parse_target_matrix, read_schedule, read_target_matrix, SCHEDULE_MAGIC,
};
