//! Rubric definitions, flag containers, and the two judges.
//!
//! Both judges share one contract: given a trajectory, emit a binary flag
//! per rubric where **1 means the rubric was violated**, and never look at
//! the run's outcome. [`judge_rules`] is the deterministic reference judge;
//! [`llm::judge_llm`] delegates the same decision to a chat-completions
//! model and refuses to guess when the reply breaks the contract.

mod rules;

pub mod llm;

pub use rules::judge_rules;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::Outcome;

/// Version tag of the prompt assets compiled into this build.
pub const PROMPT_VERSION: &str = "v1";

#[derive(Debug, Error)]
pub enum JudgeError {
    /// A flag vector referenced a run the outcome map does not know.
    #[error("no outcome recorded for run {0:?}")]
    MissingOutcome(String),

    /// Two flag vectors for the same run were offered to one matrix.
    #[error("duplicate run_id {0:?} in flag set")]
    DuplicateRunId(String),

    /// A flag container broke its shape invariants (missing rubric,
    /// non-binary value, unknown rubric id).
    #[error("invalid flag vector: {0}")]
    InvalidFlags(String),

    /// The endpoint could not be reached, or kept failing after the retry
    /// budget was spent. `status` is the last HTTP status, when one arrived.
    #[error("judge transport failure{}: {detail}", status.map(|s| format!(" (status {s})")).unwrap_or_default())]
    Transport { status: Option<u16>, detail: String },

    /// The model replied, but not with the single binary-flag object the
    /// contract demands. Replies are never repaired or re-asked.
    #[error("judge reply violated contract: {0}")]
    Parse(String),

    #[error("invalid judge config: {0}")]
    InvalidConfig(String),

    #[error("audit log error: {0}")]
    Audit(#[source] std::io::Error),
}

/// The six process rubrics, in canonical report order.
///
/// The declaration order is load-bearing: it fixes `Ord`, map iteration
/// order, report row order, and the feature-column order used when flags
/// become model inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RubricId {
    IntentAlignment,
    PlanAdherence,
    ToolCorrectness,
    ToolChoiceAccuracy,
    StateTrackingConsistency,
    ErrorRecovery,
}

impl RubricId {
    pub const ALL: [RubricId; 6] = [
        RubricId::IntentAlignment,
        RubricId::PlanAdherence,
        RubricId::ToolCorrectness,
        RubricId::ToolChoiceAccuracy,
        RubricId::StateTrackingConsistency,
        RubricId::ErrorRecovery,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RubricId::IntentAlignment => "intent_alignment",
            RubricId::PlanAdherence => "plan_adherence",
            RubricId::ToolCorrectness => "tool_correctness",
            RubricId::ToolChoiceAccuracy => "tool_choice_accuracy",
            RubricId::StateTrackingConsistency => "state_tracking_consistency",
            RubricId::ErrorRecovery => "error_recovery",
        }
    }

    /// Human-facing name used in rendered tables.
    pub fn display_name(self) -> &'static str {
        match self {
            RubricId::IntentAlignment => "Intent Alignment",
            RubricId::PlanAdherence => "Plan Adherence",
            RubricId::ToolCorrectness => "Tool Correctness",
            RubricId::ToolChoiceAccuracy => "Tool Choice Accuracy",
            RubricId::StateTrackingConsistency => "State Tracking Consistency",
            RubricId::ErrorRecovery => "Error Recovery",
        }
    }
}

impl std::str::FromStr for RubricId {
    type Err = JudgeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RubricId::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| JudgeError::InvalidFlags(format!("unknown rubric id {s:?}")))
    }
}

impl std::fmt::Display for RubricId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A rubric plus the prompt text that defines it for the LLM judge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rubric {
    pub id: RubricId,
    pub name: &'static str,
    /// Judge-facing definition; shipped as a versioned asset.
    pub description: &'static str,
}

/// The canonical rubric set with compiled-in prompt text.
pub fn rubric_registry() -> Vec<Rubric> {
    RubricId::ALL
        .into_iter()
        .map(|id| Rubric {
            id,
            name: id.display_name(),
            description: match id {
                RubricId::IntentAlignment => {
                    include_str!("../../assets/prompts/v1/intent_alignment.txt")
                }
                RubricId::PlanAdherence => {
                    include_str!("../../assets/prompts/v1/plan_adherence.txt")
                }
                RubricId::ToolCorrectness => {
                    include_str!("../../assets/prompts/v1/tool_correctness.txt")
                }
                RubricId::ToolChoiceAccuracy => {
                    include_str!("../../assets/prompts/v1/tool_choice_accuracy.txt")
                }
                RubricId::StateTrackingConsistency => {
                    include_str!("../../assets/prompts/v1/state_tracking_consistency.txt")
                }
                RubricId::ErrorRecovery => {
                    include_str!("../../assets/prompts/v1/error_recovery.txt")
                }
            },
        })
        .collect()
}

/// One run's binary verdicts, one per rubric. 1 = violated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "FlagVectorWire")]
pub struct FlagVector {
    pub run_id: String,
    flags: BTreeMap<RubricId, u8>,
}

/// Wire shadow that lets deserialization reuse the constructor checks.
#[derive(Deserialize)]
struct FlagVectorWire {
    run_id: String,
    flags: BTreeMap<String, u8>,
}

impl TryFrom<FlagVectorWire> for FlagVector {
    type Error = JudgeError;

    fn try_from(raw: FlagVectorWire) -> Result<Self, Self::Error> {
        let mut flags = BTreeMap::new();
        for (key, value) in raw.flags {
            flags.insert(key.parse::<RubricId>()?, value);
        }
        FlagVector::new(raw.run_id, flags)
    }
}

impl FlagVector {
    /// Builds a vector, requiring all six rubrics and binary values.
    pub fn new(run_id: String, flags: BTreeMap<RubricId, u8>) -> Result<Self, JudgeError> {
        for rubric in RubricId::ALL {
            match flags.get(&rubric) {
                None => {
                    return Err(JudgeError::InvalidFlags(format!("missing rubric {rubric}")));
                }
                Some(v) if *v > 1 => {
                    return Err(JudgeError::InvalidFlags(format!(
                        "non-binary value {v} for rubric {rubric}"
                    )));
                }
                Some(_) => {}
            }
        }
        Ok(FlagVector { run_id, flags })
    }

    /// All-zero vector, the starting point for judges.
    pub fn clean(run_id: String) -> Self {
        let flags = RubricId::ALL.into_iter().map(|r| (r, 0u8)).collect();
        FlagVector { run_id, flags }
    }

    pub fn is_violated(&self, rubric: RubricId) -> bool {
        self.flags[&rubric] == 1
    }

    pub fn set(&mut self, rubric: RubricId, violated: bool) {
        self.flags.insert(rubric, u8::from(violated));
    }

    /// Flags in canonical rubric order.
    pub fn as_array(&self) -> [u8; 6] {
        let mut out = [0u8; 6];
        for (i, rubric) in RubricId::ALL.into_iter().enumerate() {
            out[i] = self.flags[&rubric];
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = (RubricId, u8)> + '_ {
        self.flags.iter().map(|(r, v)| (*r, *v))
    }
}

/// Flag vectors joined with outcomes, ready for statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct FlagMatrix {
    rows: Vec<FlagRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlagRow {
    pub flags: FlagVector,
    pub outcome: Outcome,
}

impl FlagMatrix {
    pub fn rows(&self) -> &[FlagRow] {
        &self.rows
    }

    pub fn n_runs(&self) -> usize {
        self.rows.len()
    }

    pub fn run_ids(&self) -> impl Iterator<Item = &str> {
        self.rows.iter().map(|r| r.flags.run_id.as_str())
    }
}

/// Joins judge output with recorded outcomes into a [`FlagMatrix`].
///
/// Every vector must resolve to an outcome and run ids must be unique;
/// otherwise the whole join fails rather than produce a silently smaller
/// matrix.
pub fn aggregate(
    vectors: Vec<FlagVector>,
    outcomes: &BTreeMap<String, Outcome>,
) -> Result<FlagMatrix, JudgeError> {
    let mut seen = std::collections::BTreeSet::new();
    let mut rows = Vec::with_capacity(vectors.len());
    for flags in vectors {
        if !seen.insert(flags.run_id.clone()) {
            return Err(JudgeError::DuplicateRunId(flags.run_id));
        }
        let outcome = outcomes
            .get(&flags.run_id)
            .cloned()
            .ok_or_else(|| JudgeError::MissingOutcome(flags.run_id.clone()))?;
        rows.push(FlagRow { flags, outcome });
    }
    Ok(FlagMatrix { rows })
}
