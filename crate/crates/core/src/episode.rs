//! Episode trajectory records.
//!
//! One record captures everything a single task attempt produced: the
//! per-step prompts (hashed), actions, observations, decision-time belief
//! snapshots, arbitration decisions, and the final outcome classification.
//! Records serialize to one JSON object per line in trajectory logs and are
//! the input to episodic-memory accumulation.

use serde::{Deserialize, Serialize};

use crate::belief::BeliefState;
use crate::prompt::ConditionFlags;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Timeout,
    EnvDoneWrong,
    BackendError,
}

impl Outcome {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Success => "success",
            Self::Timeout => "timeout",
            Self::EnvDoneWrong => "env_done_wrong",
            Self::BackendError => "backend_error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArbitrationLogEntry {
    pub entry_id: String,
    pub disposition: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub prompt_sha256: String,
    /// Token estimate for the injected knowledge blocks only.
    pub injected_tokens: u32,
    pub action: String,
    /// Observation returned by the environment for this action.
    pub observation: String,
    /// Belief at decision time, i.e. after folding in the previous
    /// observation and before acting.
    pub belief: BeliefState,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub arbitration: Vec<ArbitrationLogEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub task_id: String,
    pub task_type: String,
    pub goal_text: String,
    pub condition: String,
    pub flags: ConditionFlags,
    pub steps: Vec<StepRecord>,
    pub outcome: Outcome,
    pub steps_used: u32,
}

impl EpisodeRecord {
    pub fn succeeded(&self) -> bool {
        self.outcome == Outcome::Success
    }
}
