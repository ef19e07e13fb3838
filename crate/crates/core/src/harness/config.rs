use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::neural::TrainConfig;
use crate::opf::{OpfConfig, SimSettings};

/// Synthetic daily load shape: valley at hour 1, peak at hour 8.
pub const DEFAULT_PROFILE: [f64; 24] = [
    0.82, 0.86, 0.92, 0.99, 1.06, 1.12, 1.17, 1.20, 1.18, 1.15, 1.12, 1.10, 1.08, 1.06, 1.04, 1.02,
    1.00, 0.98, 0.96, 0.94, 0.91, 0.88, 0.85, 0.83,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    /// Case file; the built-in 9-bus case when absent.
    pub case: Option<PathBuf>,
    pub load_scale_min: f64,
    pub load_scale_max: f64,
    pub samples: usize,
    /// Units that may trip in training scenarios; the case's designated
    /// unit when empty.
    pub contingencies: Vec<String>,
    pub seed: u64,
    pub hidden: Vec<usize>,
    /// Half-width of the dispatch perturbation as a fraction of each
    /// unit's operating range.
    pub perturbation: f64,
    pub train: TrainConfig,
    pub opf: OpfConfig,
    pub sim: SimSettings,
    pub profile: Vec<f64>,
    /// Hours (1-based) whose transient traces are plotted.
    pub trace_hours: Vec<usize>,
    /// Record wall-clock solve times; makes the day CSV non-reproducible.
    pub timing: bool,
    /// Use the activation-pattern repair heuristic in branch-and-bound.
    pub pattern_repair: bool,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            case: None,
            load_scale_min: 0.8,
            load_scale_max: 1.2,
            samples: 2000,
            contingencies: Vec::new(),
            seed: 42,
            hidden: vec![20, 20],
            perturbation: 0.5,
            train: TrainConfig::default(),
            opf: OpfConfig::default(),
            sim: SimSettings::default(),
            profile: DEFAULT_PROFILE.to_vec(),
            trace_hours: vec![1, 8],
            timing: false,
            pattern_repair: true,
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        let in_range = |x: f64| x > 0.0 && x <= 2.0;
        if !in_range(self.load_scale_min)
            || !in_range(self.load_scale_max)
            || self.load_scale_min > self.load_scale_max
        {
            return bad("load scale range must satisfy 0 < min <= max <= 2");
        }
        if self.samples == 0 {
            return bad("samples must be at least 1");
        }
        if self.profile.len() != 24 || self.profile.iter().any(|f| !(*f > 0.0) || !f.is_finite()) {
            return bad("profile needs 24 positive factors");
        }
        if !(0.0..=1.0).contains(&self.perturbation) {
            return bad("perturbation must lie in [0, 1]");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden layers must be non-empty with positive widths");
        }
        if self.trace_hours.iter().any(|h| !(1..=24).contains(h)) {
            return bad("trace hours must lie in 1..=24");
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let c: Self =
            serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_json(&text)
    }
}
