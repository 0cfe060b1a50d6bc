//! Canonical trajectory model and its JSONL wire format.
//!
//! A trajectory is the unit of everything downstream: judges read it, the
//! synthetic environment emits it, packets embed digests of it. The wire
//! format is deliberately rigid so that corpora can be diffed and hashed:
//!
//! * one JSON object per line, schema version key `v` = 1 required;
//! * top-level keys in fixed order: `v`, `run_id`, `task_id`, `benchmark`,
//!   `steps`, `outcome`, `meta`;
//! * map-valued fields (`state`, `arguments`, `meta`, payloads) serialize
//!   with keys sorted, and no insignificant whitespace anywhere.
//!
//! Under those rules serialization is a bijection on valid corpora:
//! `parse(serialize(t)) == t` and, for canonical input lines,
//! `serialize(parse(line)) == line` byte for byte.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Wire-format version accepted by [`parse_trace_corpus`].
pub const TRACE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TraceError {
    /// A line failed schema or invariant checks. Carries the 1-based line
    /// number and a human-readable reason.
    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },

    /// Two records in one corpus share a `run_id`.
    #[error("duplicate run_id {0:?}")]
    DuplicateRunId(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// One recorded episode of an agent working a task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Schema version; always [`TRACE_SCHEMA_VERSION`] for records this
    /// crate writes.
    pub v: u32,
    pub run_id: String,
    pub task_id: String,
    pub benchmark: String,
    pub steps: Vec<Step>,
    pub outcome: Outcome,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, serde_json::Value>,
}

/// A single state/action/observation record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    /// 0-based position; contiguous and strictly increasing within a run.
    pub index: usize,
    /// Opaque snapshot of whatever the harness knows about the world.
    /// Consumers key off reserved entries (see [`crate::convention`]) rather
    /// than interpreting the whole map.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub state: BTreeMap<String, serde_json::Value>,
    pub action: Action,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation: Option<Observation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Message,
    ToolCall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub kind: ActionKind,
    /// Present and non-empty exactly when `kind == ToolCall`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_name: Option<String>,
    /// Only tool calls carry arguments.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arguments: Option<BTreeMap<String, serde_json::Value>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationKind {
    ToolResult,
    EnvFeedback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub kind: ObservationKind,
    /// May be absent only when `is_error` is set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub is_error: bool,
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    /// Task-level success as recorded by the harness.
    pub success: bool,
    /// Optional graded score. When present on a successful run it must be
    /// positive; a zero score on a "success" is a recording bug.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

/// Cheap per-trajectory counts used by reports and packet contexts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceDigest {
    pub step_count: usize,
    pub tool_call_count: usize,
    pub error_observation_count: usize,
    /// Sorted, deduplicated tool names seen in the run.
    pub distinct_tools: Vec<String>,
}

/// Structural problems reported by [`validate_trajectory`].
///
/// These mirror what the parser enforces, but as data: validation is for
/// trajectories built in memory or patched by other tools, where you want a
/// list of findings rather than a hard error.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum IntegrityViolation {
    /// `steps[i].index` broke 0-based contiguity at this position.
    NonContiguousIndex { at: usize },
    EmptySteps,
    /// A tool call at this step carries no observation at all.
    UnansweredToolCall { step: usize },
    /// Field-level invariant broken (tool name presence, argument presence,
    /// payload presence, outcome score sign).
    FieldInvariant { step: Option<usize>, detail: String },
}

impl std::fmt::Display for IntegrityViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::NonContiguousIndex { at } => write!(f, "non_contiguous_index@{at}"),
            Self::EmptySteps => write!(f, "empty_steps"),
            Self::UnansweredToolCall { step } => write!(f, "unanswered_tool_call@{step}"),
            Self::FieldInvariant { step: Some(s), detail } => {
                write!(f, "field_invariant@{s}: {detail}")
            }
            Self::FieldInvariant { step: None, detail } => write!(f, "field_invariant: {detail}"),
        }
    }
}

/// Checks structural invariants and returns every violation found.
///
/// Returns an empty vector exactly when the trajectory would survive a
/// serialize/parse round trip through [`parse_trace_corpus`].
pub fn validate_trajectory(t: &Trajectory) -> Vec<IntegrityViolation> {
    let mut out = Vec::new();
    if t.steps.is_empty() {
        out.push(IntegrityViolation::EmptySteps);
    }
    for (pos, step) in t.steps.iter().enumerate() {
        if step.index != pos {
            out.push(IntegrityViolation::NonContiguousIndex { at: pos });
        }
        match step.action.kind {
            ActionKind::ToolCall => {
                if step.action.tool_name.as_deref().map_or(true, str::is_empty) {
                    out.push(IntegrityViolation::FieldInvariant {
                        step: Some(pos),
                        detail: "tool_call without tool_name".into(),
                    });
                }
                if step.observation.is_none() {
                    out.push(IntegrityViolation::UnansweredToolCall { step: pos });
                }
            }
            ActionKind::Message => {
                if step.action.tool_name.is_some() {
                    out.push(IntegrityViolation::FieldInvariant {
                        step: Some(pos),
                        detail: "message carries tool_name".into(),
                    });
                }
                if step.action.arguments.is_some() {
                    out.push(IntegrityViolation::FieldInvariant {
                        step: Some(pos),
                        detail: "message carries arguments".into(),
                    });
                }
            }
        }
        if let Some(obs) = &step.observation {
            if obs.payload.is_none() && !obs.is_error {
                out.push(IntegrityViolation::FieldInvariant {
                    step: Some(pos),
                    detail: "observation missing payload on non-error".into(),
                });
            }
        }
    }
    if let Some(score) = t.outcome.score {
        if t.outcome.success && score <= 0.0 {
            out.push(IntegrityViolation::FieldInvariant {
                step: None,
                detail: format!("successful outcome with non-positive score {score}"),
            });
        }
        if !score.is_finite() {
            out.push(IntegrityViolation::FieldInvariant {
                step: None,
                detail: "non-finite score".into(),
            });
        }
    }
    out
}

/// Serializes one trajectory to its canonical single-line JSON form.
pub fn to_canonical_json(t: &Trajectory) -> String {
    // Struct fields serialize in declaration order and all maps are
    // BTreeMaps, so this is already canonical.
    serde_json::to_string(t).expect("trajectory serialization cannot fail")
}

/// Writes a corpus as canonical JSONL, one trajectory per line.
pub fn write_trace_corpus<W: std::io::Write>(
    mut w: W,
    corpus: &[Trajectory],
) -> Result<(), TraceError> {
    for t in corpus {
        w.write_all(to_canonical_json(t).as_bytes())?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads a JSONL corpus, enforcing schema version, per-record invariants,
/// and corpus-wide `run_id` uniqueness. Blank lines are not tolerated: a
/// canonical corpus has exactly one record per line.
pub fn parse_trace_corpus<R: BufRead>(reader: R) -> Result<Vec<Trajectory>, TraceError> {
    let mut corpus = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let t: Trajectory = serde_json::from_str(&line).map_err(|e| {
            TraceError::MalformedRecord { line: lineno, reason: e.to_string() }
        })?;
        if t.v != TRACE_SCHEMA_VERSION {
            return Err(TraceError::MalformedRecord {
                line: lineno,
                reason: format!("unsupported schema version {}", t.v),
            });
        }
        let violations = validate_trajectory(&t);
        if let Some(first) = violations.first() {
            return Err(TraceError::MalformedRecord {
                line: lineno,
                reason: first.to_string(),
            });
        }
        if !seen.insert(t.run_id.clone()) {
            return Err(TraceError::DuplicateRunId(t.run_id));
        }
        corpus.push(t);
    }
    Ok(corpus)
}

/// Summarizes a trajectory; deterministic for equal inputs.
pub fn trace_digest(t: &Trajectory) -> TraceDigest {
    let mut tools = BTreeSet::new();
    let mut tool_calls = 0usize;
    let mut errors = 0usize;
    for step in &t.steps {
        if step.action.kind == ActionKind::ToolCall {
            tool_calls += 1;
            if let Some(name) = &step.action.tool_name {
                tools.insert(name.clone());
            }
        }
        if step.observation.as_ref().is_some_and(|o| o.is_error) {
            errors += 1;
        }
    }
    TraceDigest {
        step_count: t.steps.len(),
        tool_call_count: tool_calls,
        error_observation_count: errors,
        distinct_tools: tools.into_iter().collect(),
    }
}

/// SHA-256 over the canonical line, hex-encoded. This is the identity other
/// artifacts (packets, manifests) use to pin a trajectory.
pub fn content_hash(t: &Trajectory) -> String {
    let mut h = Sha256::new();
    h.update(to_canonical_json(t).as_bytes());
    hex(&h.finalize())
}

/// SHA-256 over the sorted run-id set, hex-encoded. Order-insensitive, so
/// two artifacts computed from the same runs agree even if they saw them in
/// different orders.
pub fn run_set_digest<'a>(ids: impl IntoIterator<Item = &'a str>) -> String {
    let mut sorted: Vec<&str> = ids.into_iter().collect();
    sorted.sort_unstable();
    let mut h = Sha256::new();
    for id in sorted {
        h.update(id.as_bytes());
        h.update(b"\n");
    }
    hex(&h.finalize())
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        use std::fmt::Write;
        write!(s, "{b:02x}").unwrap();
    }
    s
}
