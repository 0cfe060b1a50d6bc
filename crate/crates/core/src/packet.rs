//! Minimal explanation packets.
//!
//! A packet carries exactly three things: the explanation artifact, enough
//! context to know what it explains, and the verification signals that let
//! a reader check it without trusting the producer. Packets embed SHA-256
//! digests of their source model or trace, so any packet can later be
//! matched against the artifact it claims to explain.
//!
//! Serialization is JSON with a fixed key order (struct declaration order,
//! sorted maps), which makes `.mep.json` files diffable in audit trails.
//! [`deserialize`] checks the schema version before anything else, then
//! re-runs the construction-time invariants, so a packet obtained from
//! bytes is as trustworthy as one built in process.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::judge::FlagVector;
use crate::trace::{content_hash, ActionKind, IntegrityViolation, ObservationKind, Step, Trajectory};
use crate::xai::{Attribution, Scope};

/// Version tag written into every packet under the `v` key.
pub const MEP_SCHEMA_VERSION: u32 = 1;

/// Conventional file suffix for serialized packets.
pub const MEP_FILE_SUFFIX: &str = ".mep.json";

/// JSON Schema for third-party validation of serialized packets.
pub const MEP_JSON_SCHEMA: &str = include_str!("../assets/mep.schema.json");

#[derive(Debug, Error)]
pub enum MepError {
    #[error("unsupported packet schema version {found}, expected {MEP_SCHEMA_VERSION}")]
    SchemaVersionMismatch { found: u64 },

    #[error("malformed packet: {0}")]
    Malformed(String),

    #[error("packet invariant violated: {0}")]
    InvariantViolation(String),

    #[error("step reference {step} does not resolve in a {n_steps}-step trajectory")]
    DanglingStepReference { step: usize, n_steps: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Paradigm {
    Static,
    Agentic,
}

/// Condensed view of one trajectory step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepAccount {
    pub step: usize,
    /// `message` or `tool_call <name>`.
    pub action: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
    /// `tool_result`, `env_feedback`, with ` (error)` appended when the
    /// observation reported a failure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation: Option<String>,
}

/// The explanation itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Artifact {
    /// Feature attributions, local or global.
    AttributionScores {
        feature_names: Vec<String>,
        scores: Vec<f64>,
        base_value: f64,
        /// Pointer to an accompanying partial-dependence artifact, used by
        /// global-scope packets.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pdp_ref: Option<String>,
    },
    /// Step-indexed account of an agent run.
    TraceAccount { steps: Vec<StepAccount> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolCallDigest {
    pub step: usize,
    pub tool: String,
    /// SHA-256 of the canonical JSON of the call arguments.
    pub args_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateDigest {
    pub step: usize,
    pub state_sha256: String,
}

/// What the artifact is about.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Context {
    /// A single model input, for static-paradigm packets.
    InstanceContext {
        input_text: String,
        predicted_label: u8,
        confidence: f64,
        /// SHA-256 of the serialized model the explanation refers to.
        model_sha256: String,
    },
    /// A recorded run, for agentic-paradigm packets.
    TrajectoryContext {
        run_id: String,
        n_steps: usize,
        /// SHA-256 of the canonical trajectory line.
        trace_sha256: String,
        /// Steps the account anchors on (the tool calls).
        step_refs: Vec<usize>,
        tool_call_digests: Vec<ToolCallDigest>,
        state_digests: Vec<StateDigest>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum VerificationSignal {
    /// Mean rank correlation of the explanation under perturbation.
    StabilityRho(f64),
    RubricFlags(FlagVector),
    ReplayConsistent(bool),
    TraceIntegrity(Vec<IntegrityViolation>),
}

/// One explanation, its context, and its checks; immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ExplanationPacketWire")]
pub struct ExplanationPacket {
    pub v: u32,
    pub scope: Scope,
    pub paradigm: Paradigm,
    pub artifact: Artifact,
    pub context: Context,
    pub verification: Vec<VerificationSignal>,
}

/// Wire twin so that serde re-runs the invariant checks on deserialize.
#[derive(Deserialize)]
struct ExplanationPacketWire {
    v: u32,
    scope: Scope,
    paradigm: Paradigm,
    artifact: Artifact,
    context: Context,
    verification: Vec<VerificationSignal>,
}

impl TryFrom<ExplanationPacketWire> for ExplanationPacket {
    type Error = MepError;

    fn try_from(w: ExplanationPacketWire) -> Result<Self, MepError> {
        if w.v != MEP_SCHEMA_VERSION {
            return Err(MepError::SchemaVersionMismatch { found: w.v as u64 });
        }
        let packet = ExplanationPacket {
            v: w.v,
            scope: w.scope,
            paradigm: w.paradigm,
            artifact: w.artifact,
            context: w.context,
            verification: w.verification,
        };
        packet.validate()?;
        Ok(packet)
    }
}

impl ExplanationPacket {
    /// Re-checks every construction invariant. Builders call this before
    /// returning and [`deserialize`] calls it on anything read back.
    pub fn validate(&self) -> Result<(), MepError> {
        if self.v != MEP_SCHEMA_VERSION {
            return Err(MepError::SchemaVersionMismatch { found: self.v as u64 });
        }
        if self.verification.is_empty() {
            return Err(MepError::InvariantViolation("verification must be non-empty".into()));
        }
        for signal in &self.verification {
            if let VerificationSignal::StabilityRho(rho) = signal {
                if !rho.is_finite() || !(-1.0..=1.0).contains(rho) {
                    return Err(MepError::InvariantViolation(format!(
                        "stability_rho {rho} outside [-1, 1]"
                    )));
                }
            }
        }
        match (self.paradigm, &self.context) {
            (Paradigm::Static, Context::InstanceContext { confidence, predicted_label, .. }) => {
                if !(0.0..=1.0).contains(confidence) {
                    return Err(MepError::InvariantViolation(format!(
                        "confidence {confidence} outside [0, 1]"
                    )));
                }
                if *predicted_label > 1 {
                    return Err(MepError::InvariantViolation(format!(
                        "predicted_label {predicted_label} is not binary"
                    )));
                }
            }
            (Paradigm::Agentic, Context::TrajectoryContext { .. }) => {}
            (Paradigm::Static, Context::TrajectoryContext { .. }) => {
                return Err(MepError::InvariantViolation(
                    "static packets require an instance context".into(),
                ));
            }
            (Paradigm::Agentic, Context::InstanceContext { .. }) => {
                return Err(MepError::InvariantViolation(
                    "agentic packets require a trajectory context".into(),
                ));
            }
        }
        match (&self.artifact, &self.context) {
            (
                Artifact::AttributionScores { feature_names, scores, base_value, .. },
                Context::InstanceContext { .. },
            ) => {
                if feature_names.len() != scores.len() {
                    return Err(MepError::InvariantViolation(format!(
                        "{} feature names vs {} scores",
                        feature_names.len(),
                        scores.len()
                    )));
                }
                if !base_value.is_finite() || scores.iter().any(|s| !s.is_finite()) {
                    return Err(MepError::InvariantViolation(
                        "attribution scores must be finite".into(),
                    ));
                }
            }
            (
                Artifact::TraceAccount { steps },
                Context::TrajectoryContext {
                    run_id,
                    n_steps,
                    step_refs,
                    tool_call_digests,
                    state_digests,
                    ..
                },
            ) => {
                let check = |step: usize| -> Result<(), MepError> {
                    if step >= *n_steps {
                        return Err(MepError::DanglingStepReference { step, n_steps: *n_steps });
                    }
                    Ok(())
                };
                let mut previous: Option<usize> = None;
                for account in steps {
                    check(account.step)?;
                    if previous.is_some_and(|p| p >= account.step) {
                        return Err(MepError::InvariantViolation(
                            "trace account steps must be strictly increasing".into(),
                        ));
                    }
                    previous = Some(account.step);
                }
                for &step in step_refs {
                    check(step)?;
                }
                for digest in tool_call_digests {
                    check(digest.step)?;
                }
                for digest in state_digests {
                    check(digest.step)?;
                }
                for signal in &self.verification {
                    if let VerificationSignal::RubricFlags(flags) = signal {
                        if &flags.run_id != run_id {
                            return Err(MepError::InvariantViolation(format!(
                                "flags belong to run {:?}, context is {run_id:?}",
                                flags.run_id
                            )));
                        }
                    }
                }
            }
            (Artifact::TraceAccount { .. }, Context::InstanceContext { .. })
            | (Artifact::AttributionScores { .. }, Context::TrajectoryContext { .. }) => {
                return Err(MepError::InvariantViolation(
                    "artifact kind does not fit the context kind".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Instance-side inputs to [`build_static_mep`].
#[derive(Debug, Clone, PartialEq)]
pub struct StaticInstance {
    pub text: String,
    pub predicted_label: u8,
    pub confidence: f64,
}

/// Packages a static-paradigm explanation. `feature_names` must parallel
/// `attribution.scores`; pass the reduced top-k pair for a lean packet.
/// The packet's scope follows the attribution's.
pub fn build_static_mep(
    model_sha256: &str,
    instance: &StaticInstance,
    feature_names: Vec<String>,
    attribution: &Attribution,
    stability_rho: f64,
    pdp_ref: Option<String>,
) -> Result<ExplanationPacket, MepError> {
    let packet = ExplanationPacket {
        v: MEP_SCHEMA_VERSION,
        scope: attribution.scope,
        paradigm: Paradigm::Static,
        artifact: Artifact::AttributionScores {
            feature_names,
            scores: attribution.scores.clone(),
            base_value: attribution.base_value,
            pdp_ref,
        },
        context: Context::InstanceContext {
            input_text: instance.text.clone(),
            predicted_label: instance.predicted_label,
            confidence: instance.confidence,
            model_sha256: model_sha256.to_string(),
        },
        verification: vec![VerificationSignal::StabilityRho(stability_rho)],
    };
    packet.validate()?;
    Ok(packet)
}

fn account_for(step: &Step) -> StepAccount {
    let action = match step.action.kind {
        ActionKind::Message => "message".to_string(),
        ActionKind::ToolCall => {
            format!("tool_call {}", step.action.tool_name.as_deref().unwrap_or("?"))
        }
    };
    let observation = step.observation.as_ref().map(|o| {
        let kind = match o.kind {
            ObservationKind::ToolResult => "tool_result",
            ObservationKind::EnvFeedback => "env_feedback",
        };
        if o.is_error {
            format!("{kind} (error)")
        } else {
            kind.to_string()
        }
    });
    StepAccount {
        step: step.index,
        action,
        rationale: step.action.rationale.clone(),
        observation,
    }
}

fn sha256_json<T: Serialize>(value: &T) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_string(value).expect("serialization cannot fail").as_bytes());
    crate::trace::hex(&h.finalize())
}

/// Packages an agentic-paradigm explanation of one run. The flags must
/// have been produced for this very trajectory.
pub fn build_agentic_mep(
    t: &Trajectory,
    flags: &FlagVector,
    replay_consistent: bool,
    integrity: Vec<IntegrityViolation>,
) -> Result<ExplanationPacket, MepError> {
    if flags.run_id != t.run_id {
        return Err(MepError::InvariantViolation(format!(
            "flags belong to run {:?}, trajectory is {:?}",
            flags.run_id, t.run_id
        )));
    }
    let mut step_refs = Vec::new();
    let mut tool_call_digests = Vec::new();
    let mut state_digests = Vec::new();
    for step in &t.steps {
        if step.action.kind == ActionKind::ToolCall {
            step_refs.push(step.index);
            tool_call_digests.push(ToolCallDigest {
                step: step.index,
                tool: step.action.tool_name.clone().unwrap_or_default(),
                args_sha256: sha256_json(&step.action.arguments),
            });
        }
        if !step.state.is_empty() {
            state_digests.push(StateDigest {
                step: step.index,
                state_sha256: sha256_json(&step.state),
            });
        }
    }
    let packet = ExplanationPacket {
        v: MEP_SCHEMA_VERSION,
        scope: Scope::Local,
        paradigm: Paradigm::Agentic,
        artifact: Artifact::TraceAccount { steps: t.steps.iter().map(account_for).collect() },
        context: Context::TrajectoryContext {
            run_id: t.run_id.clone(),
            n_steps: t.steps.len(),
            trace_sha256: content_hash(t),
            step_refs,
            tool_call_digests,
            state_digests,
        },
        verification: vec![
            VerificationSignal::RubricFlags(flags.clone()),
            VerificationSignal::ReplayConsistent(replay_consistent),
            VerificationSignal::TraceIntegrity(integrity),
        ],
    };
    packet.validate()?;
    Ok(packet)
}

/// Stable pretty-printed JSON, newline-terminated.
pub fn serialize(packet: &ExplanationPacket) -> Vec<u8> {
    let mut bytes =
        serde_json::to_vec_pretty(packet).expect("packet serialization cannot fail");
    bytes.push(b'\n');
    bytes
}

/// Parses and fully re-validates a packet. The version check runs first so
/// a future-versioned packet reports [`MepError::SchemaVersionMismatch`]
/// rather than a field-level parse error.
pub fn deserialize(bytes: &[u8]) -> Result<ExplanationPacket, MepError> {
    let value: serde_json::Value = serde_json::from_slice(bytes)
        .map_err(|e| MepError::Malformed(e.to_string()))?;
    match value.get("v").and_then(serde_json::Value::as_u64) {
        None => return Err(MepError::Malformed("missing or non-integer version key v".into())),
        Some(v) if v != MEP_SCHEMA_VERSION as u64 => {
            return Err(MepError::SchemaVersionMismatch { found: v });
        }
        Some(_) => {}
    }
    // The try_from wire conversion re-runs validate(), but its error comes
    // back stringified through serde; map it as malformed content.
    serde_json::from_value(value).map_err(|e| MepError::Malformed(e.to_string()))
}
