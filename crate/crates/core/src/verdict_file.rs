//! Pipeline-agnostic verdict files.
//!
//! ```text
//! {"schema_version": 1, "pipeline": "hybrid" | "baseline",
//!  "verdicts": [{"flow": {"file", "record"}, "outcome", "violation",
//!                "leak"?, "matched_policy"?, "rationale"?}, ...]}
//! ```
//!
//! `violation` is the binary label the evaluator scores. `outcome` is
//! `consistent`, `contradicted` or `undeclared` for the hybrid checker and
//! `consistent` or `inconsistent` for the baseline, which does not tell the
//! two violation kinds apart.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checker::{Outcome, Verdict};
use crate::kg::{Provenance, TripleRecord};

pub const VERDICT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum VerdictFileError {
    #[error("malformed verdict file: {0}")]
    Format(String),
    #[error("unsupported verdict schema version {0}")]
    SchemaVersion(u32),
    #[error("verdict for {0} has an outcome that disagrees with its violation flag")]
    Inconsistent(FlowRef),
    #[error("verdict for a non-flow triple")]
    NotAFlow,
    #[error("{0}: {1}")]
    Io(String, std::io::Error),
}

/// A FlowDroid record, by file name and ordinal.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FlowRef {
    pub file: String,
    pub record: usize,
}

impl fmt::Display for FlowRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.file, self.record)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordedOutcome {
    Consistent,
    Contradicted,
    Undeclared,
    Inconsistent,
}

impl RecordedOutcome {
    pub fn is_violation(self) -> bool {
        !matches!(self, RecordedOutcome::Consistent)
    }
}

impl From<Outcome> for RecordedOutcome {
    fn from(o: Outcome) -> Self {
        match o {
            Outcome::Consistent => RecordedOutcome::Consistent,
            Outcome::Contradicted => RecordedOutcome::Contradicted,
            Outcome::Undeclared => RecordedOutcome::Undeclared,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub flow: FlowRef,
    pub outcome: RecordedOutcome,
    pub violation: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leak: Option<TripleRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matched_policy: Option<TripleRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
}

impl VerdictRecord {
    pub fn from_verdict(v: &Verdict) -> Result<Self, VerdictFileError> {
        let Provenance::Flow { file, record } = &v.leak.provenance else {
            return Err(VerdictFileError::NotAFlow);
        };
        Ok(Self {
            flow: FlowRef { file: file.clone(), record: *record },
            outcome: v.outcome.into(),
            violation: v.outcome.is_violation(),
            leak: Some((&v.leak).into()),
            matched_policy: v.matched_policy.as_ref().map(TripleRecord::from),
            rationale: None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictFile {
    pub schema_version: u32,
    pub pipeline: String,
    pub verdicts: Vec<VerdictRecord>,
}

impl VerdictFile {
    pub fn new(pipeline: &str, verdicts: Vec<VerdictRecord>) -> Self {
        Self { schema_version: VERDICT_SCHEMA_VERSION, pipeline: pipeline.to_string(), verdicts }
    }

    pub fn from_verdicts(verdicts: &[Verdict]) -> Result<Self, VerdictFileError> {
        Ok(Self::new("hybrid", verdicts.iter().map(VerdictRecord::from_verdict).collect::<Result<_, _>>()?))
    }

    pub fn violations(&self) -> usize {
        self.verdicts.iter().filter(|v| v.violation).count()
    }

    pub fn to_text(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("verdicts serialize");
        out.push('\n');
        out
    }

    pub fn parse(text: &str) -> Result<Self, VerdictFileError> {
        let file: VerdictFile = serde_json::from_str(text).map_err(|e| VerdictFileError::Format(e.to_string()))?;
        if file.schema_version != VERDICT_SCHEMA_VERSION {
            return Err(VerdictFileError::SchemaVersion(file.schema_version));
        }
        if let Some(bad) = file.verdicts.iter().find(|v| v.outcome.is_violation() != v.violation) {
            return Err(VerdictFileError::Inconsistent(bad.flow.clone()));
        }
        Ok(file)
    }

    pub fn save(&self, path: &Path) -> Result<(), VerdictFileError> {
        std::fs::write(path, self.to_text()).map_err(|e| VerdictFileError::Io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self, VerdictFileError> {
        let text = std::fs::read_to_string(path).map_err(|e| VerdictFileError::Io(path.display().to_string(), e))?;
        Self::parse(&text)
    }
}
