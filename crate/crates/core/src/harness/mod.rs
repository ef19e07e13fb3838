//! Study orchestration: scenario generation, training, the daily
//! benchmark and reporting.

mod config;
mod dataset_gen;
mod day;
mod report;
pub mod svg;
mod training;

use std::path::Path;

use thiserror::Error;

use crate::grid::{parse_case, CaseError, PowerCase};
use crate::neural::NeuralError;
use crate::opf::OpfError;
use crate::sim::SimError;

pub use config::{StudyConfig, DEFAULT_PROFILE};
pub use dataset_gen::{contingency_set, feature_names, generate_dataset, rebalance};
pub use day::{
    hourly_figures, read_day_csv, rocof_curve, run_day, trace_figures, write_day_csv,
    write_day_outputs, DayResults, DayRow, HourOutcome,
};
pub use report::{render, summarize, CostOrdering, Report, VariantSummary};
pub use training::{train_model, write_training_outputs, TrainedModel};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error(transparent)]
    Opf(#[from] OpfError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Io(String),
    #[error("no rows to report")]
    EmptyReport,
}

impl HarnessError {
    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        HarnessError::Io(format!("{}: {e}", path.display()))
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    std::fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}

const IEEE9: &str = include_str!("../../../../cases/ieee9.json");
const IEEE39: &str = include_str!("../../../../cases/ieee39.json");

/// Cases shipped with the crate, by name (`ieee9`, `ieee39`).
pub fn builtin_case(name: &str) -> Result<PowerCase, HarnessError> {
    let text = match name {
        "ieee9" => IEEE9,
        "ieee39" => IEEE39,
        _ => {
            return Err(HarnessError::Config(format!(
                "no built-in case named {name}"
            )))
        }
    };
    Ok(parse_case(text)?)
}

/// A built-in case name or a path to a case file.
pub fn resolve_case(spec: &str) -> Result<PowerCase, HarnessError> {
    match builtin_case(spec) {
        Ok(c) => Ok(c),
        Err(_) => Ok(crate::grid::load_case(spec)?),
    }
}
