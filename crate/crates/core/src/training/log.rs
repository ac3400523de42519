use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub epoch: u64,
    /// Objective the optimizer minimized at this step.
    pub loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labeled: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unlabeled_real: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unlabeled_fake: Option<f64>,
    /// Feature-matching loss of the generator update that followed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: u64,
    pub steps: u64,
    pub mean_loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_generator_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heldout_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogRecord {
    Step(StepRecord),
    Epoch(EpochRecord),
}

/// Training trace. Wall-clock times are kept apart from the records so the
/// JSONL log is reproducible byte for byte.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<LogRecord>,
    /// Milliseconds since the start of training, one entry per step.
    pub wall_clock_ms: Vec<f64>,
}

impl TrainLog {
    pub fn steps(&self) -> impl Iterator<Item = &StepRecord> {
        self.records.iter().filter_map(|r| match r {
            LogRecord::Step(s) => Some(s),
            LogRecord::Epoch(_) => None,
        })
    }

    pub fn epochs(&self) -> impl Iterator<Item = &EpochRecord> {
        self.records.iter().filter_map(|r| match r {
            LogRecord::Epoch(e) => Some(e),
            LogRecord::Step(_) => None,
        })
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn parse_jsonl(text: &str, context: &str) -> Result<Self> {
        let records = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::format(context, format!("line {}: {e}", i + 1))))
            .collect::<Result<_>>()?;
        Ok(Self {
            records,
            wall_clock_ms: Vec::new(),
        })
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }

    /// One `{"step": .., "elapsed_ms": ..}` object per line.
    pub fn write_timing(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
        for (step, ms) in self.steps().map(|s| s.step).zip(&self.wall_clock_ms) {
            writeln!(f, "{}", serde_json::json!({ "step": step, "elapsed_ms": ms })).map_err(|e| Error::io(path, e))?;
        }
        f.flush().map_err(|e| Error::io(path, e))
    }
}
