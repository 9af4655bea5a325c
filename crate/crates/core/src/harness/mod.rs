//! Variant configuration, the simulation runs behind each ablation row,
//! accuracy tables and report files.

mod config;
mod metrics;
mod report;
mod run;

use thiserror::Error;

pub use config::{BackendChoice, ParetoMode, RegressorKind, Settings, Split, SuiteConfig, VariantConfig, DEFAULT_SEED};
pub use metrics::{
    compute_metrics, format_gain_cell, gain_report, summarize, GainRow, LearnerAccuracy, MetricsRow, MetricsTable,
    ReportCategory, Stat,
};
pub use report::{
    table1_csv, table1_txt, table2_csv, table2_txt, write_reports, write_suite, StoredResults, StoredVariant,
    RESULTS_FORMAT,
};
pub use run::{ExecutedPath, Harness, RunResult, SelectionRecord, SuiteResult, TrainingData};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("metrics: {0}")]
    Metrics(String),
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error(transparent)]
    Agent(#[from] crate::agents::AgentError),
    #[error(transparent)]
    Backend(#[from] crate::agents::BackendError),
    #[error(transparent)]
    Feature(#[from] crate::features::FeatureError),
    #[error(transparent)]
    Regressor(#[from] crate::regressor::RegressorError),
    #[error(transparent)]
    Match(#[from] crate::matcher::MatchError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("variant `{name}`: {source}")]
    Variant {
        name: String,
        #[source]
        source: Box<HarnessError>,
    },
}
